"""Complex linear algebra, seeded random streams, and the dominant
singular-pair solver used by the channel simulator and the full-CSI baseline.

Everything here is double precision; complex quantities are numpy
``complex128`` arrays.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1

# well-known purpose tags for deriving independent streams from one run seed
STREAM_CHANNEL = 0x11
STREAM_POLICY = 0x22
STREAM_WARMUP = 0x33
STREAM_REPLAY = 0x44
STREAM_NET_INIT = 0x55
STREAM_PREDICTOR = 0x66
STREAM_BASELINE = 0x77
STREAM_CALIBRATION = 0x88


class DegenerateMatrixError(ValueError):
    """Raised when an all-zero matrix is handed to the singular-pair solver."""


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def mix_ids(*parts: int) -> int:
    """Fold integers into one well-spread 64-bit stream id."""
    acc = 0
    for p in parts:
        acc = _splitmix64(acc ^ _splitmix64(int(p) & MASK64))
    return acc


class RngStream:
    """Counter-based random stream keyed by (seed, stream id).

    The same key always reproduces the same draws, and distinct stream ids
    are statistically independent, so every subsystem (channel evolution,
    policy noise, replay sampling, ...) owns its own stream and runs stay
    bit-reproducible no matter how the subsystems interleave.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, *tags: int) -> "RngStream":
        """Derive an independent stream from this one, tagged by integers."""
        return RngStream(self.seed, mix_ids(self.stream, *tags))

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int):
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def cgauss_vector(n: int, variance: float, rng: RngStream) -> np.ndarray:
    """Length-n circularly-symmetric complex Gaussian vector.

    Each entry has zero mean and total complex variance ``variance``
    (variance/2 per real and imaginary part).
    """
    if n < 1:
        raise ValueError(f"vector length must be >= 1, got {n}")
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    draws = rng.normal((2, n))
    return math.sqrt(variance / 2.0) * (draws[0] + 1j * draws[1])


def cgauss_matrix(rows: int, cols: int, variance: float, rng: RngStream) -> np.ndarray:
    """rows x cols matrix of i.i.d. circular complex Gaussians."""
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dims must be >= 1, got {rows}x{cols}")
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    draws = rng.normal((2, rows, cols))
    return math.sqrt(variance / 2.0) * (draws[0] + 1j * draws[1])


def bilinear_form(wb: np.ndarray, H: np.ndarray, wa: np.ndarray) -> complex:
    """wb^H H wa with the conjugate transpose on the left vector."""
    if H.ndim != 2:
        raise ValueError(f"H must be a matrix, got ndim={H.ndim}")
    if wb.shape != (H.shape[0],) or wa.shape != (H.shape[1],):
        raise ValueError(
            f"dimension mismatch: wb {wb.shape}, H {H.shape}, wa {wa.shape}"
        )
    return complex(np.vdot(wb, H @ wa))


def power_iteration_top_pair(
    H: np.ndarray,
    iters: int = 200,
    tol: float = 1e-10,
    rng: RngStream | None = None,
):
    """Dominant singular triple (wa, wb, sigma_max) of H via power iteration.

    Iterates on H^H H, so wa converges to the top right singular vector and
    wb = H wa / ||H wa|| to the left one; then wb^H H wa = sigma_max (real,
    nonnegative). Stops early once the sigma estimate changes by < tol.
    """
    if H.ndim != 2:
        raise ValueError("H must be a matrix")
    if not np.any(H):
        raise DegenerateMatrixError("all-zero matrix has no dominant singular pair")
    if rng is None:
        rng = RngStream(0x5EED, mix_ids(0x5EED, 0x50))
    n = H.shape[1]
    v = cgauss_vector(n, 1.0, rng)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        hv = H @ v
        s = np.linalg.norm(hv)
        if s == 0.0:
            # start vector fell into the null space; re-randomize
            v = cgauss_vector(n, 1.0, rng)
            v /= np.linalg.norm(v)
            continue
        v_next = H.conj().T @ hv
        v = v_next / np.linalg.norm(v_next)
        if abs(s - sigma) < tol:
            sigma = s
            break
        sigma = s
    hv = H @ v
    sigma = float(np.linalg.norm(hv))
    wb = hv / sigma
    return v, wb, sigma
