"""Shared pytest setup: prints one PASS/FAIL line per acceptance criterion
after the run, so the gate can be read at a glance without scrolling."""

import re

_CRITERIA = {
    1: "density gradients match finite differences",
    2: "surrogate dominates the exact dof gradient",
    3: "dof surrogate sign structure and near-zero plateau",
    4: "interpolation and gradient-ascent forms agree",
    5: "Gaussian limit recovered at huge nu_tilde_min",
    6: "adaptive bias correction closed form",
    7: "Rosenbrock medians: robust under coordinate noise",
    8: "adapted nu_tilde decreases with the noise ratio",
    9: "regression medians: robust under heavy-tailed labels",
    10: "empirical regret stays under the evaluated bound",
    11: "Uncentered direction bound; alternative scale rule positive",
    12: "t-Adam attenuates a 100x gradient spike",
    13: "NoRobustness ablation separates from the default",
}

_NODE_RE = re.compile(r"test_criterion_(\d\d)")


def _collect(stats):
    """Map criterion number -> set of outcome strings seen for it."""
    seen = {}
    for outcome in ("passed", "failed", "error", "xfailed", "xpassed"):
        for rep in stats.get(outcome, []):
            match = _NODE_RE.search(getattr(rep, "nodeid", ""))
            if match:
                seen.setdefault(int(match.group(1)), set()).add(outcome)
    return seen


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    seen = _collect(terminalreporter.stats)
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        if n not in seen:
            continue
        outcomes = seen[n]
        if outcomes & {"failed", "error", "xpassed"}:
            verdict = "FAIL"
        elif "xfailed" in outcomes:
            # The literal wording is not attainable; the companion tests
            # pin what actually holds.  See the stated-plateau test.
            verdict = "FAIL (as stated; companion checks pass)"
        else:
            verdict = "PASS"
        terminalreporter.write_line(
            f"criterion {n:02d} {verdict}  - {_CRITERIA[n]}"
        )
