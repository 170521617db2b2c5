"""Seeded random streams and the two exogenous processes (dividend, sentiment)."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

_BLOCK = 4096


def stream_key(stream_id: str) -> int:
    """Stable 64-bit integer for a stream name (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(str(stream_id).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A named normal/uniform source derived from (master_seed, stream_id).

    Normals are drawn in blocks so per-day single draws stay cheap. Block
    boundaries do not affect the sequence: PCG64 output is consumed in order.
    """

    def __init__(self, master_seed: int, stream_id: str):
        self.stream_id = str(stream_id)
        self.master_seed = int(master_seed)
        ss = np.random.SeedSequence([self.master_seed & 0xFFFFFFFFFFFFFFFF, stream_key(self.stream_id)])
        self.generator = np.random.Generator(np.random.PCG64(ss))
        self._buf = np.empty(0)
        self._pos = 0

    def normal(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self._buf = self.generator.standard_normal(_BLOCK)
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return float(x)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)])

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        # uniforms bypass the normal buffer; only use on dedicated streams
        return self.generator.uniform(low, high, size)

    def integers(self, low: int, high_inclusive: int, size: int) -> np.ndarray:
        return self.generator.integers(low, high_inclusive, size, endpoint=True)


def derive_stream(master_seed: int, stream_id: str) -> RngStream:
    return RngStream(master_seed, stream_id)


@dataclass(frozen=True)
class DividendProcess:
    """Autocorrelated geometric dividend: AR(1) carrier u drives log increments."""

    delta: float = 0.003465
    growth: float = math.log(1.01) / 252  # per-day log growth g
    sigma: float = 0.01
    rho: float = 0.1
    u: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("dividend must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")

    @property
    def annual_growth(self) -> float:
        """Annualized growth G with (1+G) = exp(252 g)."""
        return math.expm1(252.0 * self.growth)


def dividend_update(delta: float, u: float, growth: float, sigma: float, rho: float, eps: float):
    u_new = rho * u + math.sqrt(1.0 - rho * rho) * eps
    return delta * math.exp(growth + sigma * u_new), u_new


def step_dividend(proc: DividendProcess, eps: float) -> DividendProcess:
    d, u = dividend_update(proc.delta, proc.u, proc.growth, proc.sigma, proc.rho, eps)
    return replace(proc, delta=d, u=u)


@dataclass(frozen=True)
class OuProcess:
    """Mean-reverting sentiment level X, simulated exactly on ln X."""

    x: float = 1.0
    mu: float = 1.0
    theta: float = 0.01
    sigma: float = 0.03

    def __post_init__(self):
        if not (self.x > 0 and self.mu > 0):
            raise ValueError("OU level and mean must be positive")
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def stationary_std(self) -> float:
        return self.sigma / math.sqrt(2.0 * self.theta)


def ou_coefficients(theta: float, sigma: float) -> tuple[float, float]:
    """Decay factor and shock scale of the exact one-day transition."""
    a = math.exp(-theta)
    return a, sigma * math.sqrt(-math.expm1(-2.0 * theta) / (2.0 * theta))


def ou_log_update(y: float, ln_mu: float, a: float, scale: float, eps: float) -> float:
    return ln_mu + (y - ln_mu) * a + scale * eps


def step_ou(proc: OuProcess, eps: float) -> OuProcess:
    a, scale = ou_coefficients(proc.theta, proc.sigma)
    ln_mu = math.log(proc.mu)
    y = ou_log_update(math.log(proc.x), ln_mu, a, scale, eps)
    return replace(proc, x=math.exp(y))
