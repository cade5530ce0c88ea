"""
Closed-form concave utilities for synthetic sites.

    log         F(y) = sum_j c_j ln(1 + y_j)
    quadratic   F(y) = b . y - 0.5 y' M y    (M symmetric positive semidefinite)

Oracles answer primal responses argmax_{0 <= y <= cap} F(y) - price . y
directly; they stand in for fitted surrogates in market tests, the
optimality-gap checks and the synthetic experiment mode.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

import numpy as np

from sdnum.errors import ConfigError, DomainError


def _vector(x, dim: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape == (1,) and dim > 1:
        arr = np.full(dim, arr[0])
    if arr.shape != (dim,):
        raise ConfigError(f"{name} must have {dim} components, got {arr.size}")
    return arr


class ConcaveOracle(ABC):
    """Smooth concave non-decreasing utility with an exact primal response."""

    kind: str = ""

    @property
    @abstractmethod
    def dim(self) -> int:
        """Number of resource types."""

    @abstractmethod
    def value(self, y) -> float:
        """Utility at an allocation."""

    @abstractmethod
    def gradient(self, y) -> np.ndarray:
        """Gradient at an allocation."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """Parameters, tagged with the oracle kind."""

    def lipschitz(self) -> float:
        """Upper bound on the gradient's Lipschitz constant over y >= 0."""
        return 1.0

    def max_slope(self) -> float:
        return float(np.max(self.gradient(np.zeros(self.dim))))

    def response(self, price, cap=None) -> np.ndarray:
        """
        argmax over 0 <= y <= cap of F(y) - price . y.

        Scalar oracles bisect on the derivative; vector oracles run
        projected gradient ascent to 1e-12.

        Raises:
            DomainError: unbounded response (zero price, no cap).
        """
        price = _vector(price, self.dim, "price")
        upper = None if cap is None else _vector(cap, self.dim, "cap")
        if self.dim == 1:
            return np.array([self._bisect(float(price[0]), None if upper is None else upper[0])])
        if upper is None:
            raise DomainError("vector responses need a cap")
        step = 1.0 / max(self.lipschitz(), 1e-12)
        y = np.zeros(self.dim)
        for _ in range(200000):
            nxt = np.clip(y + step * (self.gradient(y) - price), 0.0, upper)
            if np.max(np.abs(nxt - y)) <= 1e-12:
                return nxt
            y = nxt
        return y

    def _bisect(self, price: float, cap: Optional[float]) -> float:
        def slope(v: float) -> float:
            return float(self.gradient(np.array([v]))[0])

        if slope(0.0) <= price:
            return 0.0
        if cap is None:
            hi = 1.0
            while slope(hi) > price:
                hi *= 2.0
                if hi > 1e15:
                    raise DomainError(
                        "unbounded response: marginal utility never falls below price"
                    )
        else:
            if slope(cap) >= price:
                return float(cap)
            hi = float(cap)
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if slope(mid) > price:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * (1.0 + hi):
                break
        return hi


class LogOracle(ConcaveOracle):
    kind = "log"

    def __init__(self, c):
        self.c = np.atleast_1d(np.asarray(c, dtype=float))
        if np.any(self.c < 0):
            raise ConfigError("log oracle weights must be non-negative")

    @property
    def dim(self) -> int:
        return len(self.c)

    def value(self, y) -> float:
        y = _vector(y, self.dim, "y")
        return float(np.sum(self.c * np.log1p(y)))

    def gradient(self, y) -> np.ndarray:
        y = _vector(y, self.dim, "y")
        return self.c / (1.0 + y)

    def lipschitz(self) -> float:
        return float(self.c.max(initial=0.0))

    def response(self, price, cap=None) -> np.ndarray:
        price = _vector(price, self.dim, "price")
        upper = np.full(self.dim, np.inf) if cap is None else _vector(cap, self.dim, "cap")
        out = np.zeros(self.dim)
        for j in range(self.dim):
            if self.c[j] <= price[j]:
                continue
            if price[j] == 0.0:
                if not np.isfinite(upper[j]):
                    raise DomainError("unbounded response: zero price and no cap")
                out[j] = upper[j]
            else:
                out[j] = min(self.c[j] / price[j] - 1.0, upper[j])
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "c": self.c.tolist()}

    def __repr__(self) -> str:
        return f"LogOracle(c={self.c.tolist()})"


class QuadraticOracle(ConcaveOracle):
    kind = "quadratic"

    def __init__(self, b, m):
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.m = np.atleast_2d(np.asarray(m, dtype=float))
        if self.m.shape != (len(self.b), len(self.b)):
            raise ConfigError("quadratic oracle needs a square M matching b")
        if not np.allclose(self.m, self.m.T):
            raise ConfigError("quadratic oracle M must be symmetric")
        if np.linalg.eigvalsh(self.m).min() < -1e-12:
            raise ConfigError("quadratic oracle M must be positive semidefinite")

    @property
    def dim(self) -> int:
        return len(self.b)

    def value(self, y) -> float:
        y = _vector(y, self.dim, "y")
        return float(self.b @ y - 0.5 * y @ self.m @ y)

    def gradient(self, y) -> np.ndarray:
        y = _vector(y, self.dim, "y")
        return self.b - self.m @ y

    def lipschitz(self) -> float:
        return float(np.linalg.eigvalsh(self.m).max())

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "b": self.b.tolist(), "m": self.m.tolist()}

    def __repr__(self) -> str:
        return f"QuadraticOracle(b={self.b.tolist()}, m={self.m.tolist()})"


def oracle_from_dict(data: Dict[str, Any]) -> ConcaveOracle:
    kind = data.get("kind")
    if kind == LogOracle.kind:
        return LogOracle(data["c"])
    if kind == QuadraticOracle.kind:
        return QuadraticOracle(data["b"], data["m"])
    raise ConfigError(f"unknown oracle kind '{kind}'")
