"""Seeded random sampling utilities shared by every experiment.

All randomness in this package flows through a numpy ``Generator`` over the
PCG64 bit generator, constructed from an explicit integer seed.  PCG64 plus
``SeedSequence`` gives splittable, cross-platform reproducible streams, so
parallel trials seeded with ``base_seed + i`` never share state.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "sample_student_t", "sample_bernoulli_mask"]


def make_rng(seed: int) -> np.random.Generator:
    """Return a fresh PCG64 generator for the given non-negative seed."""
    if seed < 0:
        raise ValueError(f"Invalid seed (must be non-negative): {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def sample_student_t(rng, nu, loc=0.0, scale=1.0, size=None):
    """Draw from a Student's-t distribution with ``nu`` degrees of freedom.

    Uses the normal / sqrt(chi-square(nu)/nu) construction, then shifts by
    ``loc`` and multiplies by ``scale``.  Exact for every nu > 0 (nu=1 is the
    Cauchy distribution, large nu approaches a normal).  ``size=None`` returns
    a scalar; otherwise an array of that shape.
    """
    if not nu > 0:
        raise ValueError(f"Invalid degrees of freedom (must be > 0): {nu}")
    if not scale > 0:
        raise ValueError(f"Invalid scale (must be > 0): {scale}")
    z = rng.standard_normal(size)
    chi2 = rng.chisquare(nu, size)
    return loc + scale * z / np.sqrt(chi2 / nu)


def sample_bernoulli_mask(rng, n, p):
    """Return ``n`` independent boolean flags, each true with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Invalid probability (must be in [0, 1]): {p}")
    return rng.random(n) < p
