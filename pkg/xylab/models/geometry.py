"""Fibre grid, shift-space metric and point/set descriptions on X = (S^1)^N."""
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
import ot
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_validator

from xylab.core.config import settings
from xylab.core.errors import UnderdeterminedWordError

TWO_PI = 2.0 * math.pi


def wrap_angle(angle):
    """Reduce angles to [0, 2π)."""
    return np.mod(angle, TWO_PI)


def arc_distance(a, b):
    """Arc distance on S^1 normalized by 2π, so the fibre diameter is 1/2."""
    diff = np.abs(np.mod(np.asarray(a) - np.asarray(b) + math.pi, TWO_PI) - math.pi)
    return diff / TWO_PI


class FiberGrid(BaseModel):
    """Uniform quadrature on S^1 discretizing the a-priori Lebesgue probability."""
    model_config = ConfigDict(frozen=True)

    n_nodes: PositiveInt

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n_nodes

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.spacing

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_nodes, 1.0 / self.n_nodes)

    @property
    def log_weights(self) -> np.ndarray:
        return np.full(self.n_nodes, -math.log(self.n_nodes))

    def snap(self, angles) -> Tuple[np.ndarray, np.ndarray]:
        """Nearest node indices and the normalized snap distances."""
        angles = wrap_angle(np.asarray(angles, dtype=float))
        idx = np.rint(angles / self.spacing).astype(np.int64) % self.n_nodes
        return idx, arc_distance(angles, self.nodes[idx])

    def n_states(self, window: int) -> int:
        return self.n_nodes ** window

    def state_indices(self, window: int) -> np.ndarray:
        """Node indices of every window state, most significant coordinate first."""
        if window == 0:
            return np.zeros((1, 0), dtype=np.int64)
        digits = np.unravel_index(np.arange(self.n_states(window)), (self.n_nodes,) * window)
        return np.stack(digits, axis=-1).astype(np.int64)

    def state_angles(self, window: int) -> np.ndarray:
        return self.nodes[self.state_indices(window)]

    def state_of(self, indices) -> int:
        state = 0
        for i in indices:
            state = state * self.n_nodes + int(i)
        return state


class ShiftMetric(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float = Field(default_factory=lambda: settings.THETA, gt=0.0, lt=1.0)
    fiber_diameter: float = Field(default=0.5, gt=0.0, lt=1.0)

    def tail_bound(self, n_terms: int) -> float:
        return self.fiber_diameter * self.theta ** n_terms / (1.0 - self.theta)

    def distance(self, x: "BasePoint", y: "BasePoint", n_terms: int) -> Tuple[float, float]:
        if n_terms < 1:
            raise ValueError("n_terms must be at least 1")
        dist = arc_distance(x.coordinates(n_terms), y.coordinates(n_terms))
        lower = float(np.sum(dist * self.theta ** np.arange(n_terms)))
        return lower, lower + self.tail_bound(n_terms)


class BasePoint(BaseModel):
    """An eventually periodic point head·tail^∞ of X."""
    model_config = ConfigDict(frozen=True)

    head: Tuple[float, ...] = ()
    periodic_tail: Tuple[float, ...] = Field(min_length=1)

    @field_validator("head", "periodic_tail")
    @classmethod
    def _wrap(cls, v):
        return tuple(float(a) % TWO_PI for a in v)

    @classmethod
    def constant(cls, angle: float) -> "BasePoint":
        return cls(periodic_tail=(angle,))

    def coordinate(self, j: int) -> float:
        if j < len(self.head):
            return self.head[j]
        return self.periodic_tail[(j - len(self.head)) % len(self.periodic_tail)]

    def coordinates(self, n: int) -> np.ndarray:
        return np.array([self.coordinate(j) for j in range(n)], dtype=float)

    def shift(self, m: int = 1) -> "BasePoint":
        point = self
        for _ in range(m):
            if point.head:
                point = BasePoint(head=point.head[1:], periodic_tail=point.periodic_tail)
            else:
                tail = point.periodic_tail
                point = BasePoint(periodic_tail=tail[1:] + tail[:1])
        return point

    def prepend(self, letters) -> "BasePoint":
        return BasePoint(head=tuple(letters) + self.head, periodic_tail=self.periodic_tail)

    @property
    def period(self) -> int:
        return len(self.periodic_tail)


class Word(BaseModel):
    """Letters a_n…a_1 (in sequence order) optionally followed by a base point."""
    model_config = ConfigDict(frozen=True)

    letters: Tuple[float, ...] = ()
    base: Optional[BasePoint] = None

    @model_validator(mode="after")
    def _not_empty(self):
        if not self.letters and self.base is None:
            raise ValueError("a word needs letters or a base point")
        return self

    def coordinates(self, n: int) -> np.ndarray:
        if self.base is None:
            if n > len(self.letters):
                raise UnderdeterminedWordError(n, len(self.letters))
            return wrap_angle(np.array(self.letters[:n], dtype=float))
        return self.to_point().coordinates(n)

    def to_point(self) -> BasePoint:
        if self.base is None:
            raise UnderdeterminedWordError(len(self.letters) + 1, len(self.letters))
        return self.base.prepend(self.letters)


class Arc(BaseModel):
    """Arc from start counter-clockwise to end (radians)."""
    model_config = ConfigDict(frozen=True)

    start: float
    end: float

    @model_validator(mode="after")
    def _positive(self):
        if self.length <= 0.0:
            raise ValueError("arcs must have positive length")
        return self

    @property
    def length(self) -> float:
        if self.end - self.start >= TWO_PI:
            return TWO_PI
        return float(np.mod(self.end - self.start, TWO_PI))

    @property
    def is_full(self) -> bool:
        return self.length >= TWO_PI

    def endpoints(self) -> np.ndarray:
        if self.is_full:
            return np.empty(0)
        return wrap_angle(np.array([self.start, self.end]))

    def contains(self, angles, open_arc: bool = False, tol: float = 1e-12) -> np.ndarray:
        angles = np.asarray(angles, dtype=float)
        if self.is_full:
            return np.ones(angles.shape, dtype=bool)
        offset = np.mod(angles - self.start, TWO_PI)
        if open_arc:
            return (offset > tol) & (offset < self.length - tol)
        return (offset <= self.length + tol) | (offset >= TWO_PI - tol)


class ArcConstraint(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    arcs: Tuple[Arc, ...] = ()


class ArcSet(BaseModel):
    """Cylinder-type subset of X: closed arcs per constrained coordinate, or open when open_arcs."""
    model_config = ConfigDict(frozen=True)

    constraints: Tuple[ArcConstraint, ...] = ()
    open_arcs: bool = False

    @classmethod
    def full(cls) -> "ArcSet":
        return cls()

    @classmethod
    def from_arcs(cls, arcs_by_index: Dict[int, List[Tuple[float, float]]], open_arcs: bool = False) -> "ArcSet":
        """ArcSet.from_arcs({0: [(start, end)], 1: [...]})"""
        constraints = tuple(
            ArcConstraint(index=j, arcs=tuple(Arc(start=s, end=e) for s, e in arcs))
            for j, arcs in sorted(arcs_by_index.items())
        )
        return cls(constraints=constraints, open_arcs=open_arcs)

    @property
    def depth(self) -> int:
        if not self.constraints:
            return 0
        return max(c.index for c in self.constraints) + 1

    def mask(self, j: int, angles) -> np.ndarray:
        """Membership of angles in the arcs constraining coordinate j."""
        angles = np.asarray(angles, dtype=float)
        mask = np.ones(angles.shape, dtype=bool)
        for constraint in self.constraints:
            if constraint.index != j:
                continue
            inside = np.zeros(angles.shape, dtype=bool)
            for arc in constraint.arcs:
                inside |= arc.contains(angles, open_arc=self.open_arcs)
            mask &= inside
        return mask

    def is_constrained(self, j: int) -> bool:
        return any(c.index == j for c in self.constraints)

    def candidate_letters(self, j: int, grid: FiberGrid) -> np.ndarray:
        """Grid nodes admissible at coordinate j, plus arc endpoints of closed arcs."""
        nodes = grid.nodes
        admissible = nodes[self.mask(j, nodes)]
        if self.open_arcs or not self.is_constrained(j):
            return admissible
        ends: List[float] = []
        for constraint in self.constraints:
            if constraint.index == j:
                for arc in constraint.arcs:
                    ends.extend(arc.endpoints())
        ends = np.array(ends, dtype=float)
        if ends.size:
            ends = ends[self.mask(j, ends)]
        return np.unique(np.concatenate([admissible, ends]))

    def contains(self, point: BasePoint) -> bool:
        return all(bool(self.mask(j, point.coordinate(j))) for j in range(self.depth))

    def closure(self) -> "ArcSet":
        return self.model_copy(update={"open_arcs": False})

    def interior(self) -> "ArcSet":
        return self.model_copy(update={"open_arcs": True})


def shift_metric_distance(x: BasePoint, y: BasePoint, metric: ShiftMetric, n_terms: int) -> Tuple[float, float]:
    """Interval [lower, upper] enclosing the weighted-sum distance of x and y."""
    return metric.distance(x, y, n_terms)


def circle_w1(angles_u, weights_u, angles_v, weights_v) -> float:
    """Wasserstein-1 distance (radians) between two weighted point sets on S^1."""
    u = wrap_angle(np.asarray(angles_u, dtype=float)) / TWO_PI
    v = wrap_angle(np.asarray(angles_v, dtype=float)) / TWO_PI
    wu = np.asarray(weights_u, dtype=float)
    wv = np.asarray(weights_v, dtype=float)
    loss = ot.wasserstein_circle(u, v, u_weights=wu / wu.sum(), v_weights=wv / wv.sum(), p=1)
    return float(np.squeeze(loss)) * TWO_PI
