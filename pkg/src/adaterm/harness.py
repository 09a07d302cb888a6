"""Experiment harness: config files, seeded trial fan-out, result tables.

One YAML config describes one experiment run.  Trials are independent:
trial i always uses seed ``base_seed + i`` and its own generator, so any
fan-out (threads, chunked vectorization) produces byte-identical results.

For the many-seed experiments the harness advances all trials of a cell
as one batched array computation (trial axis leading) instead of looping
optimizers per trial; the update rules are the same pure functions the
per-group optimizer classes call, so both paths agree exactly.  The
canonical per-trial draw order is documented on the draw helpers; the
sequential single-trial runners below consume draws in the same order
and serve as the equivalence reference.

Result files: ``results.csv`` with one row per (experiment id, optimizer,
seed, metric, step, value), plus ``summary.csv`` with count/mean/std
(population)/median per (experiment, optimizer, metric, step).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .mlp import DEFAULT_LAYER_SIZES, MlpModel, forward as mlp_forward
from .optimizers import (
    OptimizerConfig,
    adabelief_moments,
    adam_eta,
    adam_moments,
    adaterm_eta,
    adaterm_moments,
    make_optimizer,
    make_param_groups,
    tadam_moments,
    update_bias_accumulator,
)
from .problems import (
    TEST_FUNCTIONS,
    NOISE_HALF_RANGE,
    RegressionStreamSpec,
    OnlineConvexSpec,
    apply_coordinate_noise,
    generate_regression_stream,
    true_regression_fn,
)
from .regret import run_regret_experiment, sublinearity_ratio, write_regret_csv
from .rng import make_rng
from .surfaces import GRID_KINDS, GridSpec, write_grid_csv
from .tdist import (
    NonFiniteGradientError,
    grad_m,
    grad_nu_exact,
    grad_v,
    log_density,
)

__all__ = [
    "ConfigError",
    "VerificationError",
    "SCHEMA_VERSION",
    "EXPERIMENT_KINDS",
    "ResultRow",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "run_test_function_trial",
    "run_regression_trial",
    "run_gradient_verification",
    "summarize_rows",
    "write_results_csv",
    "read_results_csv",
    "write_summary_csv",
]

SCHEMA_VERSION = 1
EXPERIMENT_KINDS = (
    "test_function",
    "regression",
    "regret",
    "surfaces",
    "verify_gradients",
)

TEST_X_POINTS = 1001  # fixed evaluation grid for the regression test loss


class ConfigError(Exception):
    """Config file unreadable, schema-invalid, or referencing unknown names."""


class VerificationError(Exception):
    """A verification experiment observed an invariant violation."""


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    optimizer: str
    seed: int
    metric: str
    step: int
    value: float


def write_results_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "optimizer", "seed", "metric", "step", "value"])
        for r in rows:
            writer.writerow(
                [r.experiment, r.optimizer, r.seed, r.metric, r.step, f"{r.value:.17g}"]
            )


def read_results_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "metric" not in reader.fieldnames:
            raise ConfigError(f"Not a results file: {path}")
        for rec in reader:
            rows.append(
                ResultRow(
                    experiment=rec["experiment"],
                    optimizer=rec["optimizer"],
                    seed=int(rec["seed"]),
                    metric=rec["metric"],
                    step=int(rec["step"]),
                    value=float(rec["value"]),
                )
            )
    return rows


def summarize_rows(rows):
    """count/mean/std/median per (experiment, optimizer, metric, step).

    Standard deviation is the population estimator.  Returns dicts sorted
    by group key, ready for the summary CSV.
    """
    if not rows:
        raise ConfigError("No result rows to summarize")
    groups = {}
    for r in rows:
        groups.setdefault((r.experiment, r.optimizer, r.metric, r.step), []).append(
            r.value
        )
    out = []
    for key in sorted(groups):
        vals = np.asarray(groups[key])
        out.append(
            {
                "experiment": key[0],
                "optimizer": key[1],
                "metric": key[2],
                "step": key[3],
                "count": vals.size,
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals)),
                "median": float(np.median(vals)),
            }
        )
    return out


def write_summary_csv(summary, path):
    cols = ["experiment", "optimizer", "metric", "step", "count", "mean", "std", "median"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for rec in summary:
            writer.writerow(
                [
                    rec[c] if c in ("experiment", "optimizer", "metric")
                    else (rec[c] if c in ("step", "count") else f"{rec[c]:.17g}")
                    for c in cols
                ]
            )


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Validated form of one config file."""

    kind: str
    output_dir: Path
    seed: int = 0
    trials: int = 1
    steps: int = 1000
    workers: int = 1
    record_every: int = 0
    problem: dict = field(default_factory=dict)
    optimizers: list = field(default_factory=list)  # (name, OptimizerConfig)
    model_sizes: tuple = ()
    horizon: int = 5000
    dims: tuple = (2,)
    grids: tuple = ()
    points: int = 100
    tolerance: float = 1e-5


_OPTIMIZER_KEYS = {
    "name",
    "algorithm",
    "alpha",
    "beta",
    "beta1",
    "beta2",
    "eps",
    "nu_tilde_min",
    "nu_tilde_init",
    "variant",
    "ablation",
    "lr_schedule",
    "weight_decay",
    "bias_correction",
}


def _parse_optimizer(section, index):
    if not isinstance(section, dict):
        raise ConfigError(f"optimizers[{index}] must be a mapping")
    unknown = set(section) - _OPTIMIZER_KEYS
    if unknown:
        raise ConfigError(
            f"optimizers[{index}]: unknown key(s) {sorted(unknown)}"
        )
    kwargs = {k: v for k, v in section.items() if k != "name"}
    try:
        cfg = OptimizerConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"optimizers[{index}]: {exc}") from exc
    name = section.get("name", cfg.algorithm)
    return str(name), cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Config parse error in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Config root must be a mapping: {path}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"Unsupported schema_version {raw.get('schema_version')!r} "
            f"(expected {SCHEMA_VERSION})"
        )
    kind = raw.get("experiment")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"Unknown experiment kind: {kind!r}")

    cfg = ExperimentConfig(kind=kind, output_dir=Path(raw.get("output_dir", "results")))
    for key in ("seed", "trials", "steps", "workers", "record_every", "horizon", "points"):
        if key in raw:
            val = raw[key]
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"{key} must be an integer, got {val!r}")
            setattr(cfg, key, val)
    if cfg.trials < 1:
        raise ConfigError(f"trials must be >= 1, got {cfg.trials}")
    if cfg.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg.workers}")
    if "tolerance" in raw:
        cfg.tolerance = float(raw["tolerance"])

    problem = raw.get("problem", {})
    if not isinstance(problem, dict):
        raise ConfigError("problem section must be a mapping")
    cfg.problem = problem

    if kind in ("test_function", "regression"):
        sections = raw.get("optimizers")
        if not isinstance(sections, list) or not sections:
            raise ConfigError(f"{kind} experiments need a non-empty optimizers list")
        cfg.optimizers = [_parse_optimizer(s, i) for i, s in enumerate(sections)]
        names = [n for n, _ in cfg.optimizers]
        if len(set(names)) != len(names):
            raise ConfigError(f"Duplicate optimizer names: {names}")
    if kind == "regret":
        section = raw.get("optimizer", {})
        if not isinstance(section, dict):
            raise ConfigError("optimizer section must be a mapping")
        cfg.optimizers = [_parse_optimizer(section, 0)]
        dims = raw.get("dims", problem.get("dims", [2]))
        if not isinstance(dims, list) or not dims:
            raise ConfigError("regret experiments need a non-empty dims list")
        cfg.dims = tuple(int(d) for d in dims)
    if kind == "test_function":
        fn = problem.get("function")
        if fn not in TEST_FUNCTIONS:
            raise ConfigError(
                f"Unknown test function: {fn!r} (choose from {sorted(TEST_FUNCTIONS)})"
            )
        ratios = problem.get("noise_ratios", [0.0])
        if not isinstance(ratios, list) or not ratios:
            raise ConfigError("noise_ratios must be a non-empty list")
        for p in ratios:
            if not 0.0 <= float(p) <= 1.0:
                raise ConfigError(f"noise ratio out of [0, 1]: {p}")
    if kind == "regression":
        sizes = raw.get("model", {}).get("layer_sizes", list(DEFAULT_LAYER_SIZES))
        if not isinstance(sizes, list) or len(sizes) < 2:
            raise ConfigError(f"model.layer_sizes must list >= 2 sizes, got {sizes!r}")
        cfg.model_sizes = tuple(int(s) for s in sizes)
        ratios = problem.get("noise_ratios", [0.0])
        if not isinstance(ratios, list) or not ratios:
            raise ConfigError("noise_ratios must be a non-empty list")
    if kind == "surfaces":
        grids = raw.get("grids", list(GRID_KINDS))
        if not isinstance(grids, list) or not grids:
            raise ConfigError("grids must be a non-empty list")
        for g in grids:
            if g not in GRID_KINDS:
                raise ConfigError(f"Unknown grid kind: {g!r}")
        cfg.grids = tuple(grids)
    if kind == "verify_gradients":
        dims = raw.get("dims", [1, 2, 5, 8])
        if not isinstance(dims, list) or not dims:
            raise ConfigError("verify_gradients needs a non-empty dims list")
        cfg.dims = tuple(int(d) for d in dims)
    return cfg


# ---------------------------------------------------------------------------
# Canonical per-trial draws
# ---------------------------------------------------------------------------


def draw_test_function_noise(rng, steps):
    """Canonical per-trial draw order for test-function noise.

    One trigger uniform per step, then one (steps, 2) block of coordinate
    perturbations.  Both the batched and sequential runners consume draws
    in exactly this order, so trajectories match per trial.
    """
    us = rng.random(steps)
    deltas = rng.uniform(-NOISE_HALF_RANGE, NOISE_HALF_RANGE, size=(steps, 2))
    return us, deltas


def draw_regression_trial(spec: RegressionStreamSpec, sizes, rng):
    """Canonical per-trial draws for regression: model init, then stream."""
    model = MlpModel(sizes, rng)
    xs, ys = [], []
    for x, y, _ in generate_regression_stream(spec, rng):
        xs.append(x)
        ys.append(y)
    return model, xs, ys


# ---------------------------------------------------------------------------
# Batched optimizer state (trial axis leading)
# ---------------------------------------------------------------------------


class _BatchedGroup:
    """State of one parameter group for a batch of independent trials.

    Wraps the same pure update functions the optimizer classes use, with
    arrays shaped (n_trials, d).
    """

    def __init__(self, cfg: OptimizerConfig, n, d):
        self.cfg = cfg
        self.m = np.zeros((n, d))
        algo = cfg.algorithm
        if algo == "AdaTerm":
            self.v = np.full((n, d), cfg.eps * cfg.eps)
            self.nu = np.full(n, cfg.nu_tilde_init)
            self.c = np.zeros(n)
        else:
            self.v = np.zeros((n, d))
            if algo == "TAdam":
                self.W = np.full(n, cfg.beta1 / (1.0 - cfg.beta1))

    def direction(self, g, t):
        cfg = self.cfg
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"Non-finite gradient at step {t}")
        if cfg.algorithm == "AdaTerm":
            self.m, self.v, self.nu, tau = adaterm_moments(
                self.m, self.v, self.nu, g, cfg
            )
            self.c = update_bias_accumulator(self.c, tau)
            return adaterm_eta(self.m, self.v, self.c, t, cfg)
        if cfg.algorithm == "Adam":
            self.m, self.v = adam_moments(self.m, self.v, g, cfg.beta1, cfg.beta2)
        elif cfg.algorithm == "AdaBelief":
            self.m, self.v = adabelief_moments(
                self.m, self.v, g, cfg.beta1, cfg.beta2
            )
        else:
            self.m, self.v, self.W = tadam_moments(
                self.m, self.v, self.W, g,
                cfg.beta1, cfg.beta2, cfg.nu_tilde_min * g.shape[-1], cfg.eps,
            )
        return adam_eta(
            self.m, self.v, t, cfg.beta1, cfg.beta2, cfg.eps, cfg.bias_correction
        )


# ---------------------------------------------------------------------------
# Test-function experiment
# ---------------------------------------------------------------------------


def run_test_function_trial(function, p, opt_cfg, steps, rng, record_every=0):
    """Sequential single-trial reference: optimizer classes, one trial.

    Returns (final point, final nu_tilde or nan, [(step, error_norm)]).
    """
    tf = TEST_FUNCTIONS[function]
    us, deltas = draw_test_function_noise(rng, steps)
    theta = np.array(tf.start, dtype=np.float64)
    opt = make_optimizer(theta, opt_cfg)
    theta = opt.groups[0].values
    opt_pt = np.asarray(tf.optimum)
    trail = []
    for t in range(steps):
        noisy = apply_coordinate_noise(theta, us[t], deltas[t], p)
        opt.step([tf.grad(noisy)])
        if record_every and (t + 1) % record_every == 0:
            trail.append((t + 1, float(np.linalg.norm(theta - opt_pt))))
    nu = (
        float(opt.groups[0].state.tdist.nu_tilde)
        if opt_cfg.algorithm == "AdaTerm"
        else float("nan")
    )
    return theta.copy(), nu, trail


def _run_test_function_cell(function, p, opt_cfg, steps, base_seed, trial_lo, trial_hi,
                            record_every=0):
    """All trials [trial_lo, trial_hi) of one (function, ratio, optimizer)
    cell as a single batched run."""
    tf = TEST_FUNCTIONS[function]
    n = trial_hi - trial_lo
    us = np.empty((n, steps))
    deltas = np.empty((n, steps, 2))
    for i in range(n):
        us[i], deltas[i] = draw_test_function_noise(
            make_rng(base_seed + trial_lo + i), steps
        )
    theta = np.tile(np.asarray(tf.start, dtype=np.float64), (n, 1))
    group = _BatchedGroup(opt_cfg, n, 2)
    opt_pt = np.asarray(tf.optimum)
    trails = []
    for t in range(1, steps + 1):
        noisy = apply_coordinate_noise(theta, us[:, t - 1], deltas[:, t - 1], p)
        g = tf.grad(noisy)
        alpha_t = opt_cfg.learning_rate(t)
        if opt_cfg.weight_decay:
            theta -= alpha_t * opt_cfg.weight_decay * theta
        theta -= alpha_t * group.direction(g, t)
        if record_every and t % record_every == 0:
            trails.append((t, np.linalg.norm(theta - opt_pt, axis=1)))
    final_norm = np.linalg.norm(theta - opt_pt, axis=1)
    final_nu = group.nu if opt_cfg.algorithm == "AdaTerm" else None
    return final_norm, final_nu, trails


def _chunk_ranges(n, workers):
    size = math.ceil(n / workers)
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _run_test_function_experiment(cfg: ExperimentConfig):
    function = cfg.problem["function"]
    ratios = [float(p) for p in cfg.problem.get("noise_ratios", [0.0])]
    rows = []
    for p in ratios:
        exp_id = f"{function}:p={p:g}"
        for name, opt_cfg in cfg.optimizers:
            chunks = _chunk_ranges(cfg.trials, cfg.workers)

            def work(rg, _p=p, _oc=opt_cfg):
                return _run_test_function_cell(
                    function, _p, _oc, cfg.steps, cfg.seed, rg[0], rg[1],
                    cfg.record_every,
                )
            if cfg.workers > 1 and len(chunks) > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                    parts = list(pool.map(work, chunks))
            else:
                parts = [work(rg) for rg in chunks]
            for (lo, hi), (norms, nus, trails) in zip(chunks, parts):
                for i in range(hi - lo):
                    seed = cfg.seed + lo + i
                    rows.append(
                        ResultRow(exp_id, name, seed, "final_error_norm",
                                  cfg.steps, float(norms[i]))
                    )
                    if nus is not None:
                        rows.append(
                            ResultRow(exp_id, name, seed, "final_nu_tilde",
                                      cfg.steps, float(nus[i]))
                        )
                    for step, vec in trails:
                        rows.append(
                            ResultRow(exp_id, name, seed, "error_norm",
                                      step, float(vec[i]))
                        )
    return rows


# ---------------------------------------------------------------------------
# Regression experiment
# ---------------------------------------------------------------------------


def _stacked_parameters(models):
    """Stack per-trial model parameters into (n, ...) arrays, one entry per
    layer: ([(n, in, out) weights], [(n, out) biases])."""
    Ws = [np.stack([m.weights[j] for m in models]) for j in range(len(models[0].weights))]
    Bs = [np.stack([m.biases[j] for m in models]) for j in range(len(models[0].biases))]
    return Ws, Bs


def _batched_forward(Ws, Bs, x):
    """x: (n, batch, in) -> (activations per layer, pre-activation masks)."""
    inputs = [x]
    masks = []
    a = x
    last = len(Ws) - 1
    for j, (W, B) in enumerate(zip(Ws, Bs)):
        z = a @ W + B[:, None, :]
        if j < last:
            masks.append(z > 0.0)
            a = np.where(masks[-1], z, 0.0)
            inputs.append(a)
        else:
            a = z
    return a, inputs, masks


def _batched_backward(Ws, inputs, masks, delta):
    """delta: gradient of the per-trial scalar loss w.r.t. the output."""
    gWs = [None] * len(Ws)
    gBs = [None] * len(Ws)
    for j in range(len(Ws) - 1, -1, -1):
        if j < len(Ws) - 1:
            delta = delta * masks[j]
        gWs[j] = np.swapaxes(inputs[j], 1, 2) @ delta
        gBs[j] = delta.sum(axis=1)
        if j > 0:
            delta = delta @ np.swapaxes(Ws[j], 1, 2)
    return gWs, gBs


def run_regression_trial(spec: RegressionStreamSpec, sizes, opt_cfg, rng,
                         x_test=None):
    """Sequential single-trial reference: MlpModel + optimizer classes.

    Returns the final test MSE against the clean target on ``x_test``
    (default: the fixed evaluation grid).
    """
    from .mlp import backward as mlp_backward, mse_loss

    model = MlpModel(sizes, rng)
    groups = make_param_groups(model)
    opt = make_optimizer(groups, opt_cfg)
    for x, y, _ in generate_regression_stream(spec, rng):
        y_hat, tape = mlp_forward(model, x)
        _, dloss = mse_loss(y_hat, y)
        grads = mlp_backward(model, tape, dloss)
        opt.step(grads)
    if x_test is None:
        x_test = np.linspace(0.0, 1.0, TEST_X_POINTS)[:, None]
    y_hat, _ = mlp_forward(model, x_test)
    f = true_regression_fn(x_test[:, 0])[:, None]
    return float(np.mean((y_hat - f) ** 2))


def _run_regression_cell(spec, sizes, opt_cfg, base_seed, trial_lo, trial_hi,
                         x_test):
    n = trial_hi - trial_lo
    models, xs, ys = [], None, None
    data_x, data_y = [], []
    for i in range(n):
        model, bx, by = draw_regression_trial(
            spec, sizes, make_rng(base_seed + trial_lo + i)
        )
        models.append(model)
        data_x.append(bx)
        data_y.append(by)
    Ws, Bs = _stacked_parameters(models)
    layer_count = len(Ws)
    groups = [_BatchedGroup(opt_cfg, n, Ws[j][0].size) for j in range(layer_count)]
    groups += [_BatchedGroup(opt_cfg, n, Bs[j][0].size) for j in range(layer_count)]

    n_batches = len(data_x[0])
    for t in range(1, n_batches + 1):
        x = np.stack([data_x[i][t - 1] for i in range(n)])  # (n, b, 1)
        y = np.stack([data_y[i][t - 1] for i in range(n)])
        y_hat, inputs, masks = _batched_forward(Ws, Bs, x)
        per_trial_n = y_hat[0].size
        delta = 2.0 * (y_hat - y) / per_trial_n
        if not np.all(np.isfinite(delta)):
            raise NonFiniteGradientError(f"Non-finite loss gradient at batch {t}")
        gWs, gBs = _batched_backward(Ws, inputs, masks, delta)
        alpha_t = opt_cfg.learning_rate(t)
        for j in range(layer_count):
            if opt_cfg.weight_decay:
                Ws[j] -= alpha_t * opt_cfg.weight_decay * Ws[j]
                Bs[j] -= alpha_t * opt_cfg.weight_decay * Bs[j]
            eta_w = groups[j].direction(gWs[j].reshape(n, -1), t)
            Ws[j] -= alpha_t * eta_w.reshape(Ws[j].shape)
            eta_b = groups[layer_count + j].direction(gBs[j].reshape(n, -1), t)
            Bs[j] -= alpha_t * eta_b.reshape(Bs[j].shape)

    xt = np.broadcast_to(x_test, (n,) + x_test.shape)
    y_hat, _, _ = _batched_forward(Ws, Bs, xt)
    f = true_regression_fn(x_test[:, 0])[None, :, None]
    return np.mean((y_hat - f) ** 2, axis=(1, 2))


def _run_regression_experiment(cfg: ExperimentConfig):
    ratios = [float(p) for p in cfg.problem.get("noise_ratios", [0.0])]
    base = {
        k: v for k, v in cfg.problem.items() if k != "noise_ratios"
    }
    x_test = np.linspace(0.0, 1.0, TEST_X_POINTS)[:, None]
    rows = []
    for p in ratios:
        try:
            spec = RegressionStreamSpec(noise_ratio=p, **base)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"problem section: {exc}") from exc
        exp_id = f"regression:p={p:g}"
        for name, opt_cfg in cfg.optimizers:
            chunks = _chunk_ranges(cfg.trials, cfg.workers)

            def work(rg, _spec=spec, _oc=opt_cfg):
                return _run_regression_cell(
                    _spec, cfg.model_sizes, _oc, cfg.seed, rg[0], rg[1], x_test
                )
            if cfg.workers > 1 and len(chunks) > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                    parts = list(pool.map(work, chunks))
            else:
                parts = [work(rg) for rg in chunks]
            n_steps = math.ceil(spec.n_pairs / spec.batch_size)
            for (lo, hi), mses in zip(chunks, parts):
                for i in range(hi - lo):
                    rows.append(
                        ResultRow(exp_id, name, cfg.seed + lo + i, "test_mse",
                                  n_steps, float(mses[i]))
                    )
    return rows


# ---------------------------------------------------------------------------
# Regret, surfaces, gradient verification
# ---------------------------------------------------------------------------


def _run_regret_experiment_kind(cfg: ExperimentConfig):
    name, opt_cfg = cfg.optimizers[0]
    base = {k: v for k, v in cfg.problem.items() if k != "dims"}
    rows = []
    jobs = []
    for d in cfg.dims:
        try:
            spec = OnlineConvexSpec(dim=d, **base)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"problem section: {exc}") from exc
        for i in range(cfg.trials):
            jobs.append((spec, cfg.seed + i))

    def work(job):
        spec, seed = job
        return run_regret_experiment(spec, opt_cfg, cfg.horizon, make_rng(seed))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            reports = list(pool.map(work, jobs))
    else:
        reports = [work(j) for j in jobs]
    for (spec, seed), rep in zip(jobs, reports):
        exp_id = f"regret:d={spec.dim}"
        ok = bool(np.all(rep.regret_prefix <= rep.bound_rhs_prefix))
        rows.extend(
            [
                ResultRow(exp_id, name, seed, "R_T", rep.T, rep.R_T),
                ResultRow(exp_id, name, seed, "bound_rhs", rep.T,
                          float(rep.bound_rhs_prefix[-1])),
                ResultRow(exp_id, name, seed, "bound_holds_all_prefixes", rep.T,
                          float(ok)),
                ResultRow(exp_id, name, seed, "tau_low", rep.T, rep.underline_tau),
                ResultRow(exp_id, name, seed, "sublinearity_ratio", rep.T,
                          sublinearity_ratio(rep, min(1000, rep.T), rep.T)),
            ]
        )
        write_regret_csv(
            rep, cfg.output_dir / f"regret_d{spec.dim}_seed{seed}.csv"
        )
    return rows


def _run_surfaces_experiment(cfg: ExperimentConfig):
    overrides = cfg.problem
    for kind in cfg.grids:
        try:
            spec = GridSpec(kind=kind, **overrides.get(kind, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"grid {kind}: {exc}") from exc
        write_grid_csv(spec, cfg.output_dir / f"{kind}.csv")
    return []


def _fd_log_density(g, m, v, nu, which, index, h):
    def f(x):
        if which == "m":
            m2 = m.copy(); m2[index] = x
            return log_density(g, m2, v, nu)
        if which == "v":
            v2 = v.copy(); v2[index] = x
            return log_density(g, m, v2, nu)
        return log_density(g, m, v, x)

    x0 = {"m": m[index], "v": v[index], "nu": nu}[which]
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)


def run_gradient_verification(points=100, dims=(1, 2, 5, 8), tolerance=1e-5,
                              seed=0):
    """Check the three density gradients against central finite differences.

    Returns (report_rows, ok).  Each report row is (gradient, d,
    max_rel_err).  Relative error uses max(1, |analytic|) in the
    denominator so roots of the gradient do not blow up the ratio.
    """
    rng = make_rng(seed)
    report = []
    ok = True
    for d in dims:
        worst = {"grad_m": 0.0, "grad_v": 0.0, "grad_nu": 0.0}
        for _ in range(points):
            g = rng.normal(size=d)
            m = rng.normal(size=d)
            v = rng.uniform(0.2, 3.0, size=d)
            nu = rng.uniform(0.6, 30.0)
            nu_tilde = nu / d
            gm = grad_m(g, m, v, nu_tilde)
            gv = grad_v(g, m, v, nu_tilde)
            gn = grad_nu_exact(g, m, v, nu)
            for i in range(d):
                h = 1e-6 * max(1.0, abs(m[i]))
                fd = _fd_log_density(g, m, v, nu, "m", i, h)
                worst["grad_m"] = max(
                    worst["grad_m"], abs(fd - gm[i]) / max(1.0, abs(gm[i]))
                )
                h = 1e-6 * max(1.0, abs(v[i]))
                fd = _fd_log_density(g, m, v, nu, "v", i, h)
                worst["grad_v"] = max(
                    worst["grad_v"], abs(fd - gv[i]) / max(1.0, abs(gv[i]))
                )
            h = 1e-6 * max(1.0, abs(nu))
            fd = _fd_log_density(g, m, v, nu, "nu", 0, h)
            worst["grad_nu"] = max(
                worst["grad_nu"], abs(fd - gn) / max(1.0, abs(gn))
            )
        for grad_name, err in worst.items():
            report.append((grad_name, d, err))
            if not err < tolerance:
                ok = False
    return report, ok


def _run_verify_gradients_experiment(cfg: ExperimentConfig):
    report, ok = run_gradient_verification(
        points=cfg.points, dims=cfg.dims, tolerance=cfg.tolerance, seed=cfg.seed
    )
    rows = [
        ResultRow("verify_gradients", grad_name, cfg.seed, "max_rel_fd_err", d, err)
        for grad_name, d, err in report
    ]
    if not ok:
        worst = max(report, key=lambda r: r[2])
        raise VerificationError(
            f"Gradient check failed: {worst[0]} at d={worst[1]} "
            f"has max relative error {worst[2]:.3e} >= {cfg.tolerance:g}"
        )
    return rows


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


_RUNNERS = {
    "test_function": _run_test_function_experiment,
    "regression": _run_regression_experiment,
    "regret": _run_regret_experiment_kind,
    "surfaces": _run_surfaces_experiment,
    "verify_gradients": _run_verify_gradients_experiment,
}


def run_experiment(cfg: ExperimentConfig):
    """Execute one experiment; writes results.csv + summary.csv, returns rows."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    try:
        rows = _RUNNERS[cfg.kind](cfg)
    except VerificationError:
        raise
    if rows:
        write_results_csv(rows, cfg.output_dir / "results.csv")
        write_summary_csv(summarize_rows(rows), cfg.output_dir / "summary.csv")
    return rows
