"""Reference policies bracketing the learner: uniform-random beams below,
a full-CSI dominant-singular-pair oracle above.

The oracle maximizes the legitimate beamforming gain only; it upper-bounds
the data-rate term exactly but ignores key-rate leakage, so it is a bound
for the lambda_k = 0 objective rather than the mixed one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import EveMode
from .env import BeamEnv, BeamPair, EnvConfig
from .numerics import (
    STREAM_BASELINE,
    STREAM_CHANNEL,
    RngStream,
    cgauss_vector,
    mix_ids,
    power_iteration_top_pair,
)


class BaselineKind(Enum):
    RANDOM = "random"
    ORACLE_SVD = "oracle-svd"


_ORACLE_START_SEED = 0x0AC1E


def random_action(n: int, rng: RngStream) -> BeamPair:
    """Two independent isotropic unit-norm complex beams."""
    if n < 1:
        raise ValueError(f"antenna count must be >= 1, got {n}")
    w_a = cgauss_vector(n, 1.0, rng)
    w_b = cgauss_vector(n, 1.0, rng)
    return BeamPair(w_a / np.linalg.norm(w_a), w_b / np.linalg.norm(w_b))


def oracle_action(H_ab: np.ndarray, iters: int = 200, tol: float = 1e-10) -> BeamPair:
    """Gain-maximizing beams from the dominant singular pair of H_ab.

    Uses a fixed internal start stream so the result is a deterministic
    function of the matrix alone.
    """
    rng = RngStream(_ORACLE_START_SEED, mix_ids(STREAM_BASELINE, H_ab.shape[0]))
    w_a, w_b, _ = power_iteration_top_pair(H_ab, iters=iters, tol=tol, rng=rng)
    return BeamPair(w_a, w_b)


def beams_to_action(beams: BeamPair) -> np.ndarray:
    """Interleave the beam entries back into the raw 4N action layout."""
    out = np.empty(2 * (beams.w_a.shape[0] + beams.w_b.shape[0]))
    half = 2 * beams.w_a.shape[0]
    out[0:half:2] = beams.w_a.real
    out[1:half:2] = beams.w_a.imag
    out[half::2] = beams.w_b.real
    out[half + 1::2] = beams.w_b.imag
    return out


@dataclass
class EpisodeStats:
    mean_reward: float
    mean_rk: float
    mean_rd: float
    eavesdrop_frac: float


def run_baseline_episode(env: BeamEnv, kind: BaselineKind,
                         channel_stream: RngStream,
                         action_stream: RngStream | None = None) -> EpisodeStats:
    """Roll one episode under a baseline policy on a given channel stream."""
    env.reset(channel_stream)
    n = env.n
    total_r = total_rk = total_rd = 0.0
    eaves = 0
    steps = env.config.episode_len
    for _ in range(steps):
        if kind is BaselineKind.RANDOM:
            if action_stream is None:
                raise ValueError("random baseline needs an action stream")
            beams = random_action(n, action_stream)
        else:
            beams = oracle_action(env.state.H_ab)
        _, r, done, report = env.step(beams_to_action(beams))
        total_r += r
        total_rd += report.rd
        if report.xi is EveMode.EAVESDROPPING:
            eaves += 1
            total_rk += report.rke if report.rke is not None else 0.0
        else:
            total_rk += report.rks
        if done:
            break
    return EpisodeStats(total_r / steps, total_rk / steps, total_rd / steps,
                        eaves / steps)


def evaluate_baseline(config: EnvConfig, kind: BaselineKind, seed: int,
                      episodes: int, episode_offset: int = 0) -> list[EpisodeStats]:
    """Evaluate a baseline over episodes, reusing the run's channel streams.

    Episode k uses the channel stream derived from (seed, episode index),
    the same derivation the trainer uses, so comparisons against a training
    run with the same seed see identical channel realizations.
    """
    env = BeamEnv(config)
    root = RngStream(seed)
    out = []
    for ep in range(episode_offset, episode_offset + episodes):
        ch = root.child(STREAM_CHANNEL, ep)
        act = root.child(STREAM_BASELINE, kind is BaselineKind.RANDOM, ep)
        out.append(run_baseline_episode(env, kind, ch, act))
    return out
