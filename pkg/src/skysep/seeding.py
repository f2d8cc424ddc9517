"""Deterministic seed splitting.

One user-facing seed expands into independent per-component streams via
numpy SeedSequence entropy lists: (seed, stream id, episode index). The
stream ids below are part of the artifact's reproducibility contract;
episode streams do not depend on execution order, so episodes could be
evaluated in any order or in parallel without changing results.
"""
from __future__ import annotations

import numpy as np

STREAM_SPAWN = 0          # spawn time draws, one stream per episode
STREAM_INIT = {"A": 1, "B": 2}     # network weight init, once per run
STREAM_ACTION = {"A": 3, "B": 4}   # action sampling / random policy, per episode
STREAM_SHUFFLE = {"A": 5, "B": 6}  # minibatch shuffling, per episode


def rng_for(seed: int, stream: int,
            episode: int | None = None) -> np.random.Generator:
    entropy = [seed, stream] if episode is None else [seed, stream, episode]
    return np.random.default_rng(np.random.SeedSequence(entropy))
