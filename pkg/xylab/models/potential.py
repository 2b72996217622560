"""Potentials of finite arity on (S^1)^N and the built-in catalog."""
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveInt

from xylab.core.errors import ConfigError, DomainError
from xylab.models.geometry import TWO_PI, BasePoint, FiberGrid, ShiftMetric, Word


class FourierTerm(BaseModel):
    model_config = ConfigDict(frozen=True)

    freqs: Tuple[int, ...] = Field(min_length=1)
    cos: float = 0.0
    sin: float = 0.0


class Potential(BaseModel):
    """f(x_0, …, x_{k-1}); `func` maps an array (..., k) of angles to reals."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    arity: PositiveInt
    func: Callable[[np.ndarray], np.ndarray]
    holder_seminorm: Optional[NonNegativeFloat] = None
    params: Dict[str, float] = Field(default_factory=dict)
    max_frequency: int = 1
    offset: float = 0.0

    def __call__(self, angles) -> np.ndarray:
        return self.eval(angles)

    def eval(self, angles) -> np.ndarray:
        """Evaluate on the first `arity` coordinates of the last axis."""
        angles = np.asarray(angles, dtype=float)
        if angles.ndim == 0:
            angles = angles[None]
        if angles.shape[-1] < self.arity:
            raise DomainError(f"{self.name} reads {self.arity} coordinates, got {angles.shape[-1]}")
        values = np.asarray(self.func(angles[..., :self.arity]), dtype=float)
        values = np.broadcast_to(values, angles.shape[:-1])
        return values + self.offset

    @property
    def key(self) -> str:
        params = ",".join(f"{k}={v!r}" for k, v in sorted(self.params.items()))
        return f"{self.name}[{params}]+{self.offset!r}"

    def shifted(self, kappa: float) -> "Potential":
        return self.model_copy(update={"offset": self.offset + kappa})

    def check_periodic(self, n_samples: int = 64, tol: float = 1e-10, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.0, TWO_PI, size=(n_samples, self.arity))
        base = self.eval(pts)
        for j in range(self.arity):
            moved = pts.copy()
            moved[:, j] += TWO_PI
            if np.max(np.abs(self.eval(moved) - base)) > tol:
                raise DomainError(f"potential {self.name} is not 2π-periodic in coordinate {j}")

    def estimate_holder(self, grid: FiberGrid, metric: ShiftMetric) -> float:
        """Finite-difference Lipschitz estimate in the shift metric (an estimate, not a certificate)."""
        if self.holder_seminorm is not None:
            return self.holder_seminorm
        n = min(grid.n_nodes, 256 if self.arity == 1 else 48)
        sub = FiberGrid(n_nodes=n)
        values = self.eval(sub.state_angles(self.arity)).reshape((n,) * self.arity)
        step = sub.spacing / TWO_PI
        constant = 0.0
        for j in range(self.arity):
            slope = np.max(np.abs(np.roll(values, -1, axis=j) - values)) / step
            constant = max(constant, slope / metric.theta ** j)
        return float(constant)


def _zero(x):
    return np.zeros(x.shape[:-1])


def _cosine(x):
    return np.cos(x[..., 0])


def _xy_pair(x):
    return np.cos(x[..., 0] - x[..., 1])


def zero() -> Potential:
    return Potential(name="zero", arity=1, func=_zero, holder_seminorm=0.0, max_frequency=0)


def cosine() -> Potential:
    return Potential(name="cosine", arity=1, func=_cosine, holder_seminorm=TWO_PI)


def xy_pair() -> Potential:
    return Potential(name="xy_pair", arity=2, func=_xy_pair)


def xy_pinned(eps: float = 0.5) -> Potential:
    def func(x):
        return np.cos(x[..., 0] - x[..., 1]) + eps * np.cos(x[..., 0])

    return Potential(name="xy_pinned", arity=2, func=func, params={"eps": float(eps)})


def fourier(terms: Sequence[FourierTerm], name: str = "fourier") -> Potential:
    """Σ cos·cos(j·x) + sin·sin(j·x) over the table rows."""
    if not terms:
        raise ConfigError("a Fourier table needs at least one row", field="potential.fourier")
    arity = len(terms[0].freqs)
    if any(len(t.freqs) != arity for t in terms):
        raise ConfigError("all Fourier rows need the same number of frequencies", field="potential.fourier")
    freqs = np.array([t.freqs for t in terms], dtype=float)
    a = np.array([t.cos for t in terms])
    b = np.array([t.sin for t in terms])

    def func(x):
        phase = x @ freqs.T
        return np.cos(phase) @ a + np.sin(phase) @ b

    params = {}
    for t in terms:
        params[f"cos{list(t.freqs)}"] = t.cos
        params[f"sin{list(t.freqs)}"] = t.sin
    return Potential(
        name=name,
        arity=arity,
        func=func,
        params=params,
        max_frequency=int(np.max(np.abs(freqs))),
    )


CATALOG: Dict[str, Callable[..., Potential]] = {
    "zero": zero,
    "cosine": cosine,
    "xy_pair": xy_pair,
    "xy_pinned": xy_pinned,
}


def from_catalog(name: str, **params) -> Potential:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown potential '{name}', expected one of {sorted(CATALOG)}", field="potential.name")
    try:
        pot = factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}", field="potential.params")
    pot.check_periodic()
    return pot



def birkhoff_sum(pot: Potential, point: Union[Word, BasePoint], n: int) -> float:
    """f^n(x) = Σ_{j<n} f(σ^j x); a bare word must supply n + arity − 1 letters."""
    if n <= 0:
        return 0.0
    coords = point.coordinates(n + pot.arity - 1)
    windows = sliding_window_view(coords, pot.arity)[:n]
    return float(np.sum(pot.eval(windows)))
