"""Seeded counter-based random streams."""

from __future__ import annotations

import numpy as np


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Philox-backed Generator; every stochastic routine takes one of these."""
    return np.random.Generator(np.random.Philox(seed))


def spawn(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams for parallel runs."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
