"""Channel simulator: AR(1) legitimate links, correlated eavesdropper and
helper (Fred) links, and the two-mode attacker switching rule.

All channel entries are unit-variance circular complex Gaussians at
stationarity; temporal correlation is first order, H^t = rho H^{t-1} + Z^t.
The eavesdropping and Fred vectors follow the same AR(1) law so that the
attacker threat stays temporally coherent and predictable from history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .numerics import (
    STREAM_CALIBRATION,
    RngStream,
    bilinear_form,
    cgauss_matrix,
    cgauss_vector,
    mix_ids,
)

_CALIBRATION_SEED = 0x7A55C0DE
_CALIBRATION_DRAWS = 200_000


class EveMode(Enum):
    EAVESDROPPING = "eavesdropping"
    SLEEPING = "sleeping"


class BeamNormError(ValueError):
    """A beamforming vector violated the unit-norm contract."""


def eve_mode(h_ae: np.ndarray, h_be: np.ndarray, tau: float) -> EveMode:
    """Attacker listens iff min(||h_ae||, ||h_be||) >= tau, else sleeps."""
    if h_ae.shape != h_be.shape:
        raise ValueError("eavesdropping vectors must have equal length")
    gain = min(np.linalg.norm(h_ae), np.linalg.norm(h_be))
    return EveMode.EAVESDROPPING if gain >= tau else EveMode.SLEEPING


@lru_cache(maxsize=None)
def calibrate_tau(n: int, target_fraction: float = 0.5, draws: int = _CALIBRATION_DRAWS) -> float:
    """Monte-Carlo threshold so the attacker listens in ~target_fraction of slots.

    Uses a fixed internal stream, so the value depends only on (n, target,
    draws) and is identical across runs and seeds.
    """
    if not 0.0 < target_fraction < 1.0:
        raise ValueError("target_fraction must lie strictly inside (0, 1)")
    rng = RngStream(_CALIBRATION_SEED, mix_ids(STREAM_CALIBRATION, n))
    samples = rng.normal((2, draws, 2, n))
    sq = 0.5 * (samples[0] ** 2 + samples[1] ** 2)
    norms = np.sqrt(sq.sum(axis=2))  # (draws, 2)
    min_norms = norms.min(axis=1)
    return float(np.quantile(min_norms, 1.0 - target_fraction))


@dataclass
class ChannelParams:
    """Static parameters of the channel process.

    sigma_zeta2 defaults to 1 - rho^2, which keeps the process stationary
    with unit per-entry power. tau defaults to the Monte-Carlo calibrated
    threshold giving a ~50% eavesdropping duty cycle at this antenna count.
    """

    n: int
    rho: float = 0.9
    sigma_zeta2: float | None = None
    sigma_z2: float = 1.0
    tau: float | None = None
    kappa: float = 0.9
    delta: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"antenna count must be >= 1, got {self.n}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        if self.sigma_zeta2 is None:
            self.sigma_zeta2 = 1.0 - self.rho**2
        if self.sigma_zeta2 < 0:
            raise ValueError(f"sigma_zeta2 must be >= 0, got {self.sigma_zeta2}")
        if self.sigma_z2 <= 0:
            raise ValueError(f"sigma_z2 must be > 0, got {self.sigma_z2}")
        if self.tau is None:
            self.tau = calibrate_tau(self.n)
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must be in [0, 1], got {self.kappa}")
        if self.delta < 0 or int(self.delta) != self.delta:
            raise ValueError(f"delta must be a nonnegative integer, got {self.delta}")
        self.delta = int(self.delta)

    @property
    def sigma2(self) -> float:
        """Combined estimation noise power sigma_z^2 + sigma_zeta^2."""
        return self.sigma_z2 + self.sigma_zeta2


@dataclass
class ChannelState:
    """Instantaneous realization of every link plus the attacker mode."""

    H_ab: np.ndarray
    h_ae: np.ndarray
    h_be: np.ndarray
    h_af: np.ndarray
    h_bf: np.ndarray
    xi: EveMode
    t: int = 0


def fred_channels(h_ae, h_be, kappa: float, rng: RngStream):
    """Helper-node links as a Gauss-Markov mixture with the attacker links.

    h_f = kappa * h_e + sqrt(1 - kappa^2) * g keeps unit per-entry variance
    for any kappa while giving entrywise correlation kappa.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must be in [0, 1], got {kappa}")
    n = h_ae.shape[0]
    resid = math.sqrt(1.0 - kappa * kappa)
    g_a = cgauss_vector(n, 1.0, rng)
    g_b = cgauss_vector(n, 1.0, rng)
    return kappa * h_ae + resid * g_a, kappa * h_be + resid * g_b


def init_channels(params: ChannelParams, rng: RngStream) -> ChannelState:
    """Fresh i.i.d. unit-variance draw of all links at slot 0."""
    n = params.n
    H_ab = cgauss_matrix(n, n, 1.0, rng)
    h_ae = cgauss_vector(n, 1.0, rng)
    h_be = cgauss_vector(n, 1.0, rng)
    h_af, h_bf = fred_channels(h_ae, h_be, params.kappa, rng)
    xi = eve_mode(h_ae, h_be, params.tau)
    return ChannelState(H_ab, h_ae, h_be, h_af, h_bf, xi, t=0)


def evolve_ar1(state: ChannelState, params: ChannelParams, rng: RngStream) -> ChannelState:
    """One slot of AR(1) evolution for every link; Fred links are re-mixed.

    Draw order is fixed (legitimate innovation, then ae, be, Fred) so the
    stream consumption per slot is constant and runs stay reproducible.
    """
    n = params.n
    rho = params.rho
    scale = math.sqrt(params.sigma_zeta2)
    H_ab = rho * state.H_ab + scale * cgauss_matrix(n, n, 1.0, rng)
    h_ae = rho * state.h_ae + scale * cgauss_vector(n, 1.0, rng)
    h_be = rho * state.h_be + scale * cgauss_vector(n, 1.0, rng)
    h_af, h_bf = fred_channels(h_ae, h_be, params.kappa, rng)
    xi = eve_mode(h_ae, h_be, params.tau)
    return ChannelState(H_ab, h_ae, h_be, h_af, h_bf, xi, t=state.t + 1)


def _check_unit_norm(w: np.ndarray, label: str, tol: float = 1e-6):
    nrm = np.linalg.norm(w)
    if abs(nrm - 1.0) > tol:
        raise BeamNormError(f"{label} must be unit norm, got ||w|| = {nrm!r}")


def equivalent_channels(state: ChannelState, beams, Pa: float):
    """Post-beamforming scalar channels (h_ab~, h_ae~, h_af~, h_bf~).

    h_ab~ = sqrt(Pa) w_b^H H_ab w_a and the single-antenna links project
    onto the transmit beam of the node they observe.
    """
    w_a, w_b = beams.w_a, beams.w_b
    _check_unit_norm(w_a, "w_a")
    _check_unit_norm(w_b, "w_b")
    root_p = math.sqrt(Pa)
    h_ab = root_p * bilinear_form(w_b, state.H_ab, w_a)
    h_ae = root_p * complex(np.vdot(state.h_ae, w_a))
    h_af = root_p * complex(np.vdot(state.h_af, w_a))
    h_bf = root_p * complex(np.vdot(state.h_bf, w_b))
    return h_ab, h_ae, h_af, h_bf
