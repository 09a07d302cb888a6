"""Online maximum-likelihood estimation of a diagonal Student's-t model.

This is the statistical core of the package.  A ``TDistState`` tracks the
location ``m``, squared-scale ``v`` and dimension-normalized degrees of
freedom ``nu_tilde`` of the gradient distribution for one parameter group.
``update_state`` advances all three by gradient ascent on the log-likelihood
with adaptive step sizes that collapse to EMA-style interpolations:

    m_t  = (1 - tau_mv) m_{t-1}  + tau_mv g_t
    v_t  = (1 - tau_mv) v_{t-1}  + tau_mv (s + delta_s)
    nu_t = (1 - tau_nu) nu_{t-1} + tau_nu lambda

where tau_mv = (1 - beta) w_mv / w_mv_bar shrinks automatically for
statistical outliers (small robustness weight w_mv).  The one-shot density
and gradient functions exist so the update rules can be verified against
finite differences and analytic bounds, independently of any optimizer.

All array functions accept leading batch axes: shapes (..., d) for vectors
and (...) for per-group scalars, reducing over the trailing axis only.  The
harness exploits this to run many seeded trials as one batch.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .special import EPS_FLOAT32, W_NU_BAR_CEIL, digamma

__all__ = [
    "NonFiniteGradientError",
    "TDistState",
    "StepDiagnostics",
    "log_density",
    "grad_m",
    "grad_v",
    "grad_nu_exact",
    "grad_nu_from_deviation",
    "grad_nu_surrogate_pre",
    "grad_nu_tilde_surrogate",
    "compute_diagnostics",
    "update_state",
    "save_state",
    "load_state",
]


class NonFiniteGradientError(FloatingPointError):
    """Raised when a gradient contains NaN or infinity.

    EMA state poisoned by a non-finite value is unrecoverable, so the step
    is rejected instead of absorbed.
    """


# ---------------------------------------------------------------------------
# One-shot density and gradients (verification surface)
# ---------------------------------------------------------------------------


def _check_density_args(g, m, v, nu):
    g = np.asarray(g, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if g.shape != m.shape or g.shape != v.shape:
        raise ValueError(
            f"Shape mismatch: g {g.shape}, m {m.shape}, v {v.shape}"
        )
    if np.any(v <= 0.0):
        raise ValueError("Scale v must be strictly positive")
    if not nu > 0.0:
        raise ValueError(f"Invalid degrees of freedom (must be > 0): {nu}")
    return g, m, v


def log_density(g, m, v, nu):
    """Log of the diagonal multivariate Student's-t density T(g | m, v, nu).

    Log-gamma formulation, safe for very large d and nu.
    """
    g, m, v = _check_density_args(g, m, v, nu)
    d = g.size
    dev = np.sum((g - m) ** 2 / v)
    return (
        math.lgamma((nu + d) / 2.0)
        - math.lgamma(nu / 2.0)
        - 0.5 * d * math.log(nu * math.pi)
        - 0.5 * float(np.sum(np.log(v)))
        - 0.5 * (nu + d) * math.log1p(dev / nu)
    )


def grad_m(g, m, v, nu_tilde):
    """Gradient of log_density w.r.t. m, in the factored form w_mv (g - m) / v.

    Note the absence of a 1/2: differentiating the squared deviation
    contributes a factor 2 that cancels it.  The published step size kappa_m
    carries a compensating factor 2 (it was calibrated against the
    half-gradient convention), so the resulting update rule is unchanged;
    see the ascent-form helper below.
    """
    g, m, v = _check_density_args(g, m, v, nu_tilde)
    s = (g - m) ** 2
    D = float(np.mean(s / v))
    w_mv = (nu_tilde + 1.0) / (nu_tilde + D)
    return w_mv * (g - m) / v


def grad_v(g, m, v, nu_tilde):
    """Gradient of log_density w.r.t. v, in the factored form

        w_mv nu_tilde / (2 v^2 (nu_tilde + 1)) { (s - v) + (s - D v) / nu_tilde }.
    """
    g, m, v = _check_density_args(g, m, v, nu_tilde)
    s = (g - m) ** 2
    D = float(np.mean(s / v))
    w_mv = (nu_tilde + 1.0) / (nu_tilde + D)
    lead = w_mv * nu_tilde / (2.0 * v * v * (nu_tilde + 1.0))
    return lead * ((s - v) + (s - D * v) / nu_tilde)


def grad_nu_from_deviation(nu, d, D):
    """Gradient of log_density w.r.t. nu, parameterized by the deviation D.

    The density depends on (g, m, v) only through D = (1/d) sum s_i / v_i,
    which makes this form convenient for grid evaluation.
    """
    half_ratio = 0.5 * (digamma((nu + d) / 2.0) - digamma(nu / 2.0))
    return (
        half_ratio
        - d / (2.0 * nu)
        - 0.5 * np.log1p(d * D / nu)
        - 0.5 * (nu + d) * (1.0 / (nu + d * D) - 1.0 / nu)
    )


def grad_nu_exact(g, m, v, nu):
    """Gradient of log_density w.r.t. nu (exact, uses digamma)."""
    g, m, v = _check_density_args(g, m, v, nu)
    d = g.size
    D = float(np.mean((g - m) ** 2 / v))
    return float(grad_nu_from_deviation(nu, d, D))


def grad_nu_surrogate_pre(nu, d, w_mv):
    """Upper bound on grad_nu_exact before the dimension fix:

        (1/2) { -w_nu + 1 + (nu_tilde + 2) / (nu_tilde + 1) * 1 / nu }

    with nu_tilde = nu / d and w_nu = w_mv - ln w_mv.  Kept for the
    surrogate-vs-exact inequality tests and the dimension-sweep grid.
    """
    nu = np.asarray(nu, dtype=np.float64)
    w = np.asarray(w_mv, dtype=np.float64)
    if np.any(nu <= 0.0) or np.any(w <= 0.0):
        raise ValueError("nu and w_mv must be strictly positive")
    nu_tilde = nu / d
    w_nu = w - np.log(w)
    out = 0.5 * (-w_nu + 1.0 + (nu_tilde + 2.0) / (nu_tilde + 1.0) / nu)
    return out if out.ndim else float(out)


def grad_nu_tilde_surrogate(nu_tilde, d, w_mv):
    """The dimension-fixed surrogate gradient g_nu used by the state update:

        w_nu (d/2) { -1 + ((nu_tilde + 2)/(nu_tilde + 1) + nu_tilde)
                          / (nu_tilde w_nu) }.
    """
    nt = np.asarray(nu_tilde, dtype=np.float64)
    w = np.asarray(w_mv, dtype=np.float64)
    if np.any(nt <= 0.0) or np.any(w <= 0.0):
        raise ValueError("nu_tilde and w_mv must be strictly positive")
    w_nu = w - np.log(w)
    out = w_nu * (0.5 * d) * (
        -1.0 + ((nt + 2.0) / (nt + 1.0) + nt) / (nt * w_nu)
    )
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Stateful estimator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TDistState:
    """Per-parameter-group estimator state.

    ``m`` and ``v`` keep the natural shape of the parameter array; the group
    dimension ``d`` is the element count.  ``nu_tilde`` is the
    dimension-normalized degrees of freedom (nu = nu_tilde * d).
    """

    m: np.ndarray
    v: np.ndarray
    nu_tilde: float
    t: int
    beta: float
    eps: float
    nu_tilde_min: float

    @property
    def d(self) -> int:
        return self.m.size

    @classmethod
    def fresh(cls, shape, beta=0.9, eps=1e-5, nu_tilde_min=1.0, nu_tilde_init=None):
        """Initial state: m = 0, v = eps^2, nu_tilde = nu_tilde_min + eps."""
        if not 0.0 < beta < 1.0:
            raise ValueError(f"Invalid beta (must be in (0, 1)): {beta}")
        if not eps > 0.0:
            raise ValueError(f"Invalid eps (must be > 0): {eps}")
        if not nu_tilde_min > 0.0:
            raise ValueError(
                f"Invalid nu_tilde_min (must be > 0): {nu_tilde_min}"
            )
        if nu_tilde_init is None:
            nu_tilde_init = nu_tilde_min + eps
        if not nu_tilde_init > nu_tilde_min:
            raise ValueError(
                f"Invalid nu_tilde_init (must exceed nu_tilde_min): {nu_tilde_init}"
            )
        return cls(
            m=np.zeros(shape, dtype=np.float64),
            v=np.full(shape, eps * eps, dtype=np.float64),
            nu_tilde=float(nu_tilde_init),
            t=0,
            beta=float(beta),
            eps=float(eps),
            nu_tilde_min=float(nu_tilde_min),
        )


@dataclass(frozen=True)
class StepDiagnostics:
    """All intermediate quantities of one update, evaluated at the
    pre-update state (the update order matters: s, D, the weights and the
    step sizes all use m_{t-1}, v_{t-1}, nu_{t-1})."""

    s: np.ndarray
    D: np.ndarray
    w_mv: np.ndarray
    w_mv_bar: np.ndarray
    w_nu: np.ndarray
    w_nu_bar: np.ndarray
    tau_mv: np.ndarray
    tau_nu: np.ndarray
    delta_s: np.ndarray
    lam: np.ndarray
    kappa_m: np.ndarray
    kappa_v: np.ndarray
    kappa_dnu: np.ndarray


def diagnostics_arrays(m, v, nu_tilde, g, beta, eps, nu_tilde_min):
    """Batched diagnostics: m, v, g shaped (..., d); nu_tilde shaped (...)."""
    nu_tilde = np.asarray(nu_tilde, dtype=np.float64)
    d = g.shape[-1]
    s = (g - m) ** 2
    D = np.mean(s / v, axis=-1)
    w_mv = (nu_tilde + 1.0) / (nu_tilde + D)
    w_mv_bar = (nu_tilde + 1.0) / nu_tilde
    # The float32 floor mirrors the underflow limit that motivates the
    # ceiling W_NU_BAR_CEIL; it keeps tau_nu <= 1 - beta for arbitrarily
    # extreme deviations.
    w_floored = np.maximum(w_mv, EPS_FLOAT32)
    w_nu = w_floored - np.log(w_floored)
    w_nu_bar = np.maximum(w_mv_bar - np.log(w_mv_bar), W_NU_BAR_CEIL)
    tau_mv = (1.0 - beta) * w_mv / w_mv_bar
    tau_nu = (1.0 - beta) * w_nu / w_nu_bar
    delta_s = np.maximum(
        eps * eps, (s - D[..., None] * v) / nu_tilde[..., None]
    )
    dnu = nu_tilde - nu_tilde_min
    lam = (
        ((nu_tilde + 2.0) / (nu_tilde + 1.0) + nu_tilde)
        * dnu
        / (nu_tilde * w_nu)
        + nu_tilde_min
        + eps
    )
    kappa_m = 2.0 * v * (1.0 - beta) / w_mv_bar[..., None]
    kappa_v = 2.0 * v * v * (1.0 - beta)
    kappa_dnu = 2.0 * dnu * (1.0 - beta) / (d * w_nu_bar)
    return StepDiagnostics(
        s=s,
        D=D,
        w_mv=w_mv,
        w_mv_bar=w_mv_bar,
        w_nu=w_nu,
        w_nu_bar=w_nu_bar,
        tau_mv=tau_mv,
        tau_nu=tau_nu,
        delta_s=delta_s,
        lam=lam,
        kappa_m=kappa_m,
        kappa_v=kappa_v,
        kappa_dnu=kappa_dnu,
    )


def advance_arrays(m, v, nu_tilde, g, diag):
    """Apply the interpolation updates given precomputed diagnostics."""
    tau = diag.tau_mv[..., None]
    m_new = (1.0 - tau) * m + tau * g
    v_new = (1.0 - tau) * v + tau * (diag.s + diag.delta_s)
    nu_new = (1.0 - diag.tau_nu) * nu_tilde + diag.tau_nu * diag.lam
    return m_new, v_new, nu_new


def ascent_forms(state: TDistState, g, diag: StepDiagnostics):
    """The gradient-ascent forms of the three updates, for equivalence tests.

    Returns (m, v, nu_tilde) computed as state + kappa * gradient instead of
    by interpolation.  Conventions: kappa_m pairs with the half-gradient
    grad_m/2 (see grad_m); the v gradient is evaluated with the clipped
    delta_s in place of the raw correction; the nu_tilde ascent carries the
    tau_nu * eps floor term that keeps nu_tilde - nu_tilde_min positive.
    """
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    m = state.m.reshape(-1)
    v = state.v.reshape(-1)
    nt = state.nu_tilde
    g_m_half = diag.w_mv * (g - m) / (2.0 * v)
    m_asc = m + diag.kappa_m * g_m_half
    g_v_clipped = (
        diag.w_mv * nt / (2.0 * v * v * (nt + 1.0))
        * ((diag.s + diag.delta_s) - v)
    )
    v_asc = v + diag.kappa_v * g_v_clipped
    w_floored = max(float(diag.w_mv), EPS_FLOAT32)
    g_nu = grad_nu_tilde_surrogate(nt, state.d, w_floored)
    nu_asc = nt + diag.kappa_dnu * g_nu + diag.tau_nu * state.eps
    return m_asc, v_asc, float(nu_asc)


def _flat_finite(state, g):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ValueError(
            f"Gradient shape {g.shape} does not match state shape {state.m.shape}"
        )
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError("Gradient contains non-finite values")
    return g


def compute_diagnostics(state: TDistState, g) -> StepDiagnostics:
    """Diagnostics for one step, without advancing the state."""
    g = _flat_finite(state, g)
    return diagnostics_arrays(
        state.m.reshape(-1),
        state.v.reshape(-1),
        state.nu_tilde,
        g.reshape(-1),
        state.beta,
        state.eps,
        state.nu_tilde_min,
    )


def update_state(state: TDistState, g):
    """One estimation step; returns (new state, diagnostics used)."""
    g = _flat_finite(state, g)
    diag = diagnostics_arrays(
        state.m.reshape(-1),
        state.v.reshape(-1),
        state.nu_tilde,
        g.reshape(-1),
        state.beta,
        state.eps,
        state.nu_tilde_min,
    )
    m_new, v_new, nu_new = advance_arrays(
        state.m.reshape(-1), state.v.reshape(-1), state.nu_tilde, g.reshape(-1), diag
    )
    new = replace(
        state,
        m=m_new.reshape(state.m.shape),
        v=v_new.reshape(state.v.shape),
        nu_tilde=float(nu_new),
        t=state.t + 1,
    )
    return new, diag


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"ADTM"
CHECKPOINT_VERSION = 1


def state_to_bytes(state: TDistState) -> bytes:
    """Serialize: magic, version byte, little-endian u64 float count, then
    float64 payload (d, t, beta, eps, nu_tilde_min, nu_tilde, m[:], v[:])."""
    payload = [
        float(state.d),
        float(state.t),
        state.beta,
        state.eps,
        state.nu_tilde_min,
        state.nu_tilde,
    ]
    payload.extend(state.m.reshape(-1).tolist())
    payload.extend(state.v.reshape(-1).tolist())
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += bytes([CHECKPOINT_VERSION])
    out += struct.pack("<Q", len(payload))
    out += struct.pack(f"<{len(payload)}d", *payload)
    return bytes(out)


def state_from_bytes(blob: bytes) -> TDistState:
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("Bad checkpoint magic")
    if blob[4] != CHECKPOINT_VERSION:
        raise ValueError(f"Unsupported checkpoint version: {blob[4]}")
    (count,) = struct.unpack_from("<Q", blob, 5)
    values = struct.unpack_from(f"<{count}d", blob, 13)
    d = int(values[0])
    if count != 6 + 2 * d:
        raise ValueError(f"Checkpoint length {count} inconsistent with d={d}")
    m = np.array(values[6 : 6 + d], dtype=np.float64)
    v = np.array(values[6 + d : 6 + 2 * d], dtype=np.float64)
    return TDistState(
        m=m,
        v=v,
        nu_tilde=values[5],
        t=int(values[1]),
        beta=values[2],
        eps=values[3],
        nu_tilde_min=values[4],
    )


def save_state(state: TDistState, path) -> None:
    with open(path, "wb") as fh:
        fh.write(state_to_bytes(state))


def load_state(path) -> TDistState:
    with open(path, "rb") as fh:
        return state_from_bytes(fh.read())
