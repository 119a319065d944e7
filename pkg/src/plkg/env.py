"""Slot-stepped decision environment for the two beamforming agents.

Each slot the agents emit raw action vectors, the environment projects them
onto the unit-norm feasible set, scores the current channel realization,
then advances the AR(1) channels. The observation is five reals: the
complex legitimate equivalent channel, the complex eavesdropping equivalent
channel (true, zeroed, or predicted depending on the observation mode), and
the attacker-mode flag (0/1 or a predicted probability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    ChannelParams,
    ChannelState,
    EveMode,
    equivalent_channels,
    evolve_ar1,
    init_channels,
)
from .numerics import RngStream
from .rates import RateDiagnostics, RateDomainError, RateReport, instantaneous_gains, reward

OBSERVATION_MODES = ("full", "partial-naive", "partial-predicted")

_PROJECT_EPS = 1e-9


class ConfigurationError(ValueError):
    pass


@dataclass
class BeamPair:
    """Unit-norm transmit beams for Alice (w_a) and Bob (w_b)."""

    w_a: np.ndarray
    w_b: np.ndarray

    def __post_init__(self):
        for label, w in (("w_a", self.w_a), ("w_b", self.w_b)):
            nrm = np.linalg.norm(w)
            if abs(nrm - 1.0) > 1e-9:
                raise ValueError(f"{label} must be unit norm, got {nrm!r}")


@dataclass
class Observation:
    re_hab: float
    im_hab: float
    re_hae: float
    im_hae: float
    xi_flag: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.re_hab, self.im_hab, self.re_hae, self.im_hae, self.xi_flag]
        )


@dataclass
class Transition:
    """One replay record; action is the raw joint vector of both agents."""

    obs: Observation
    action: np.ndarray
    reward: float
    next_obs: Observation
    done: bool

    def __post_init__(self):
        if self.action.ndim != 1 or self.action.shape[0] % 4 != 0:
            raise ValueError(
                f"joint action must be a flat 4N vector, got shape {self.action.shape}"
            )


@dataclass
class EnvConfig:
    channel: ChannelParams
    Pa: float = 100.0
    Pb: float = 100.0
    Pmax: float = 100.0
    lambda_k: float = 0.5
    B: float = 1.0
    episode_len: int = 200
    observation_mode: str = "full"

    def __post_init__(self):
        if not (0.0 <= self.Pa <= self.Pmax and 0.0 <= self.Pb <= self.Pmax):
            raise ValueError("transmit powers must lie in [0, Pmax]")
        if not 0.0 <= self.lambda_k <= 1.0:
            raise ValueError(f"lambda_k must be in [0, 1], got {self.lambda_k}")
        if self.B <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.B}")
        if self.episode_len < 1:
            raise ValueError("episode_len must be >= 1")
        if self.observation_mode not in OBSERVATION_MODES:
            raise ValueError(
                f"observation_mode must be one of {OBSERVATION_MODES}, "
                f"got {self.observation_mode!r}"
            )


def project_action(raw: np.ndarray) -> np.ndarray:
    """Map 2N interleaved reals onto a unit-norm complex beam.

    Consecutive (re, im) pairs form the entries; the vector is scaled to
    unit norm. A degenerate all-zero input falls back to the uniform beam.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or raw.shape[0] % 2 != 0:
        raise ValueError(f"raw action must be a flat 2N vector, got {raw.shape}")
    v = raw[0::2] + 1j * raw[1::2]
    nrm = np.linalg.norm(v)
    if nrm < _PROJECT_EPS:
        n = v.shape[0]
        return np.full(n, 1.0 / math.sqrt(n), dtype=complex)
    return v / nrm


def uniform_beams(n: int) -> BeamPair:
    w = np.full(n, 1.0 / math.sqrt(n), dtype=complex)
    return BeamPair(w.copy(), w.copy())


def assemble_observation(state: ChannelState, beams: BeamPair, Pa: float,
                         mode: str, predictor=None,
                         fred_window: np.ndarray | None = None) -> Observation:
    """Build the 5-real agent state for one slot.

    full: true equivalent channels plus the realized attacker flag.
    partial-naive: the eavesdropping fields are blanked (0, 0, 0.5).
    partial-predicted: the eavesdropping fields come from the adversary
    predictor run on the Fred measurement window.
    """
    h_ab, h_ae, _, _ = equivalent_channels(state, beams, Pa)
    if mode == "full":
        xi = 1.0 if state.xi is EveMode.EAVESDROPPING else 0.0
        return Observation(h_ab.real, h_ab.imag, h_ae.real, h_ae.imag, xi)
    if mode == "partial-naive":
        return Observation(h_ab.real, h_ab.imag, 0.0, 0.0, 0.5)
    if mode == "partial-predicted":
        if predictor is None:
            raise ConfigurationError(
                "observation_mode 'partial-predicted' requires a predictor"
            )
        if fred_window is None:
            raise ConfigurationError("partial-predicted requires a Fred window")
        hae_hat, xi_hat = predictor.predict(fred_window)
        return Observation(h_ab.real, h_ab.imag, hae_hat.real, hae_hat.imag,
                           float(xi_hat))
    raise ValueError(f"unknown observation mode {mode!r}")


class BeamEnv:
    """Sequential environment owning one channel process.

    reset() takes the slot-evolution stream for the episode; step() consumes
    it. Distinct episodes (and the baseline replays of them) therefore see
    identical channel sequences whenever they are given the same stream.
    """

    def __init__(self, config: EnvConfig, predictor=None):
        if config.observation_mode == "partial-predicted" and predictor is None:
            raise ConfigurationError(
                "observation_mode 'partial-predicted' requires a predictor"
            )
        self.config = config
        self.predictor = predictor
        self.diagnostics = RateDiagnostics()
        self._state: ChannelState | None = None
        self._rng: RngStream | None = None
        self._slot = 0
        self._window_len = predictor.window_len if predictor is not None else 0
        self._fred_rows: list[list[float]] = []

    @property
    def n(self) -> int:
        return self.config.channel.n

    @property
    def action_dim(self) -> int:
        """Joint action length: 2N reals per agent."""
        return 4 * self.config.channel.n

    @property
    def state(self) -> ChannelState:
        if self._state is None:
            raise RuntimeError("environment used before reset()")
        return self._state

    def reset(self, rng: RngStream) -> Observation:
        self._rng = rng
        self._state = init_channels(self.config.channel, rng)
        self._slot = 0
        self._fred_rows = []
        beams = uniform_beams(self.config.channel.n)
        return self._observe(beams)

    def _fred_window(self, beams: BeamPair) -> np.ndarray:
        """Sliding window of Fred equivalent channels, zero-padded at episode start."""
        _, _, h_af, h_bf = equivalent_channels(self._state, beams, self.config.Pa)
        self._fred_rows.append([h_af.real, h_af.imag, h_bf.real, h_bf.imag])
        if len(self._fred_rows) > self._window_len:
            self._fred_rows = self._fred_rows[-self._window_len:]
        window = np.zeros((self._window_len, 4))
        rows = np.array(self._fred_rows)
        window[self._window_len - rows.shape[0]:] = rows
        return window

    def _observe(self, beams: BeamPair) -> Observation:
        mode = self.config.observation_mode
        window = self._fred_window(beams) if mode == "partial-predicted" else None
        return assemble_observation(self._state, beams, self.config.Pa, mode,
                                    self.predictor, window)

    def step(self, action: np.ndarray):
        """Score the new beams on the current channels, then advance one slot.

        Returns (observation, reward, done, RateReport); a rate-domain
        failure is converted to a flagged zero-reward step.
        """
        if self._state is None or self._rng is None:
            raise RuntimeError("step() before reset()")
        action = np.asarray(action, dtype=float)
        if action.shape != (self.action_dim,):
            raise ValueError(
                f"expected joint action of shape ({self.action_dim},), got {action.shape}"
            )
        half = self.action_dim // 2
        beams = BeamPair(project_action(action[:half]), project_action(action[half:]))
        cfg = self.config
        ch = cfg.channel
        inputs = instantaneous_gains(
            self._state, beams, cfg.Pa, rho=ch.rho, delta=ch.delta,
            sigma2=ch.sigma2, sigma_z2=ch.sigma_z2, B=cfg.B,
            lambda_k=cfg.lambda_k,
        )
        try:
            report = reward(inputs, self._state.xi, self.diagnostics)
        except RateDomainError:
            self.diagnostics.domain_errors += 1
            report = RateReport(rks=0.0, rd=0.0, reward=0.0, rke=None,
                                xi=self._state.xi, flagged=True)
        self._state = evolve_ar1(self._state, ch, self._rng)
        self._slot += 1
        obs = self._observe(beams)
        done = self._slot >= cfg.episode_len
        return obs, report.reward, done, report
