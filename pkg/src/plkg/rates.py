"""Closed-form secret-key and data rates plus the scalar slot reward.

The key rate is the Gaussian mutual information between the two reciprocal
channel estimates taken delta slots apart; when the attacker listens it is
conditioned on her observation. All logs are base 2, rates in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelState, EveMode
from .numerics import bilinear_form

_CS_TOL = 1e-12


class RateDomainError(ArithmeticError):
    """A covariance determinant went non-positive inside a log."""


@dataclass
class RateDiagnostics:
    """Counters for clamped or rejected rate evaluations."""

    rke_clamps: int = 0
    domain_errors: int = 0

    @property
    def total(self) -> int:
        return self.rke_clamps + self.domain_errors


@dataclass
class RateInputs:
    """Second-order statistics feeding the rate formulas.

    omega_* are lag-0 powers of the post-beamforming scalars (legitimate,
    eavesdropping, and their cross term); the lag-delta legitimate term is
    rho^delta * omega_a0. sigma2 is the combined estimation noise
    sigma_z^2 + sigma_zeta^2.
    """

    omega_a0: float
    omega_e0: float
    omega_ae0: complex
    rho: float
    delta: int
    sigma2: float
    sigma_z2: float
    B: float = 1.0
    lambda_k: float = 0.5

    def __post_init__(self):
        if self.omega_a0 < 0 or self.omega_e0 < 0:
            raise ValueError("lag-0 powers must be nonnegative")
        if self.sigma2 <= 0 or self.sigma_z2 <= 0:
            raise ValueError("noise powers must be positive")
        if self.sigma2 < self.sigma_z2:
            raise ValueError("sigma2 must include sigma_z2")
        bound = self.omega_a0 * self.omega_e0
        if abs(self.omega_ae0) ** 2 > bound * (1.0 + 1e-9) + _CS_TOL:
            raise ValueError(
                "invalid covariance: |omega_ae0|^2 exceeds omega_a0*omega_e0"
            )


@dataclass
class RateReport:
    """Per-slot rates and the weighted reward."""

    rks: float
    rd: float
    reward: float
    rke: float | None = None
    xi: EveMode = EveMode.SLEEPING
    flagged: bool = False


def instantaneous_gains(state: ChannelState, beams, Pa: float, *, rho: float,
                        delta: int, sigma2: float, sigma_z2: float,
                        B: float = 1.0, lambda_k: float = 0.5) -> RateInputs:
    """Plug-in estimates of the omega statistics on the current realization.

    The expectation in the closed forms is replaced by the realized value so
    the reward tracks the observed CSI slot by slot. The cross term is
    rank-1, so Cauchy-Schwarz holds with equality up to float rounding; any
    excess is clipped.
    """
    w_a, w_b = beams.w_a, beams.w_b
    hab = bilinear_form(w_b, state.H_ab, w_a)
    hae = complex(np.vdot(state.h_ae, w_a))
    omega_a0 = Pa * abs(hab) ** 2
    omega_e0 = Pa * abs(hae) ** 2
    omega_ae0 = Pa * hab * hae.conjugate()
    bound = math.sqrt(omega_a0 * omega_e0)
    mag = abs(omega_ae0)
    if mag > bound and mag > 0.0:
        omega_ae0 *= bound / mag
    return RateInputs(omega_a0, omega_e0, omega_ae0, rho, delta,
                      sigma2, sigma_z2, B, lambda_k)


def rks(inp: RateInputs) -> float:
    """Key rate with the attacker asleep, in bits per slot.

    2 log2(Omega_a + sigma^2) - log2((Omega_a + sigma^2)^2 - |rho^delta Omega_a|^2),
    i.e. the Gaussian MI between the two lag-delta channel estimates.
    """
    a = inp.omega_a0 + inp.sigma2
    lag = (inp.rho**inp.delta) * inp.omega_a0
    det_ab = a * a - lag * lag
    if det_ab <= 0.0:
        raise RateDomainError(
            f"det(Omega_ab) = {det_ab!r} <= 0 for inputs {inp!r}"
        )
    return 2.0 * math.log2(a) - math.log2(det_ab)


def rke(inp: RateInputs, diagnostics: RateDiagnostics | None = None) -> float:
    """Key rate with the attacker listening, in bits per slot.

    Conditions the legitimate MI on the attacker's observation through the
    covariance determinants; the result is clamped at zero from below and
    every clamp is counted in the diagnostics.
    """
    a = inp.omega_a0 + inp.sigma2
    e = inp.omega_e0 + inp.sigma_z2
    lag = (inp.rho**inp.delta) * inp.omega_a0
    leak = abs(inp.omega_ae0) ** 2
    det_e = e
    det_ae = a * e - leak
    det_abe = (a * a - lag * lag) * e - 2.0 * inp.sigma2 * leak
    if det_ae <= 0.0 or det_abe <= 0.0:
        raise RateDomainError(
            f"non-positive determinant (det_ae={det_ae!r}, det_abe={det_abe!r}) "
            f"for inputs {inp!r}"
        )
    value = 2.0 * math.log2(det_ae) - math.log2(det_e) - math.log2(det_abe)
    if value < 0.0:
        if diagnostics is not None:
            diagnostics.rke_clamps += 1
        return 0.0
    return value


def rd(inp: RateInputs) -> float:
    """Shannon data rate B log2(1 + Omega_a / sigma^2) in bits/s/Hz."""
    return inp.B * math.log2(1.0 + inp.omega_a0 / inp.sigma2)


def reward(inp: RateInputs, xi: EveMode,
           diagnostics: RateDiagnostics | None = None) -> RateReport:
    """Weighted slot reward lambda_k * R_k + (1 - lambda_k) * R_d.

    The key-rate term is the conditioned rate when the attacker listens and
    the sleeping-mode rate otherwise.
    """
    sleeping_rate = rks(inp)
    data_rate = rd(inp)
    if xi is EveMode.EAVESDROPPING:
        eaves_rate = rke(inp, diagnostics)
        key_rate = eaves_rate
    else:
        eaves_rate = None
        key_rate = sleeping_rate
    value = inp.lambda_k * key_rate + (1.0 - inp.lambda_k) * data_rate
    return RateReport(rks=sleeping_rate, rd=data_rate, reward=value,
                      rke=eaves_rate, xi=xi)
