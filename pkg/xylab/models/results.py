"""Operator, eigendata and report types produced by the services."""
import itertools
from functools import cached_property
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from xylab.models.geometry import ArcSet, BasePoint, FiberGrid, wrap_angle
from xylab.models.potential import Potential

ARRAYS = ConfigDict(frozen=True, arbitrary_types_allowed=True)


def _floats(values) -> List[float]:
    return [float(v) for v in np.asarray(values).ravel()]


class WindowStructure(BaseModel):
    """Index bookkeeping for states = (k-1)-windows of grid nodes.

    Prepending letter a to state (s_0, …, s_{w-1}) gives (a, s_0, …, s_{w-2}).
    """
    model_config = ARRAYS

    grid: FiberGrid
    window: int = Field(ge=1)

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes

    @property
    def n_states(self) -> int:
        return self.grid.n_states(self.window)

    @property
    def stride(self) -> int:
        return self.n_nodes ** (self.window - 1)

    @cached_property
    def successor(self) -> np.ndarray:
        """successor[s, j]: state reached by prepending node j to state s."""
        states = np.arange(self.n_states)
        return np.add.outer(states // self.n_nodes, np.arange(self.n_nodes) * self.stride)

    @cached_property
    def predecessor(self) -> np.ndarray:
        """predecessor[t, m]: the states s with successor[s, letter(t)] == t."""
        states = np.arange(self.n_states)
        return np.add.outer((states % self.stride) * self.n_nodes, np.arange(self.n_nodes))

    @cached_property
    def letter(self) -> np.ndarray:
        """First coordinate (node index) of every state."""
        return np.arange(self.n_states) // self.stride

    @cached_property
    def state_angles(self) -> np.ndarray:
        return self.grid.state_angles(self.window)

    @cached_property
    def transition_angles(self) -> np.ndarray:
        """Angles of the window a·s for every (state s, letter a); shape (n_states, n_nodes, window+1)."""
        letters = np.broadcast_to(self.grid.nodes[None, :, None], (self.n_states, self.n_nodes, 1))
        states = np.broadcast_to(self.state_angles[:, None, :], (self.n_states, self.n_nodes, self.window))
        return np.concatenate([letters, states], axis=-1)

    def marginal(self, state_masses: np.ndarray) -> np.ndarray:
        """x_0 marginal of a measure given by masses on states."""
        return np.asarray(state_masses).reshape(self.n_nodes, self.stride).sum(axis=1)

    def snap(self, point: BasePoint) -> Tuple[int, float]:
        """State nearest to the first `window` coordinates of point, and the max snap distance."""
        idx, dist = self.grid.snap(point.coordinates(self.window))
        return self.grid.state_of(idx), float(np.max(dist))

    def interpolate(self, values: np.ndarray, angles) -> np.ndarray:
        """Periodic multilinear interpolation of state values at window angles (..., >= window)."""
        angles = wrap_angle(np.asarray(angles, dtype=float)[..., :self.window])
        n = self.n_nodes
        t = angles / self.grid.spacing
        lo = np.floor(t).astype(np.int64)
        frac = t - lo
        lo %= n
        hi = (lo + 1) % n
        out = np.zeros(angles.shape[:-1])
        for corner in itertools.product((0, 1), repeat=self.window):
            weight = np.ones(angles.shape[:-1])
            index = np.zeros(angles.shape[:-1], dtype=np.int64)
            for d, bit in enumerate(corner):
                weight = weight * (frac[..., d] if bit else 1.0 - frac[..., d])
                index = index * n + (hi[..., d] if bit else lo[..., d])
            out += weight * values[index]
        return out


class LogKernel(BaseModel):
    """Log-domain Nyström matrix of L_{cf}: entries[s, j] = log w_j + c·f(a_j s)."""
    model_config = ARRAYS

    structure: WindowStructure
    c: float
    potential_key: str
    f_values: np.ndarray
    entries: np.ndarray

    @property
    def grid(self) -> FiberGrid:
        return self.structure.grid

    @property
    def n_states(self) -> int:
        return self.structure.n_states

    def to_dense(self) -> np.ndarray:
        """Linear-domain (n_states × n_states) matrix; disallowed prepends are zero."""
        dense = np.zeros((self.n_states, self.n_states))
        rows = np.repeat(np.arange(self.n_states), self.structure.n_nodes)
        dense[rows, self.structure.successor.ravel()] = np.exp(self.entries.ravel())
        return dense


class EigenSystem(BaseModel):
    model_config = ARRAYS

    kernel: LogKernel
    log_beta_c: float
    log_h: np.ndarray
    log_nu: np.ndarray
    mu: np.ndarray
    g_log: np.ndarray
    residual: float
    adjoint_residual: float
    iterations: int

    @property
    def c(self) -> float:
        return self.kernel.c

    @property
    def structure(self) -> WindowStructure:
        return self.kernel.structure

    @property
    def grid(self) -> FiberGrid:
        return self.kernel.grid

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.log_h)

    @property
    def nu(self) -> np.ndarray:
        return np.exp(self.log_nu)

    @property
    def mu_marginal(self) -> np.ndarray:
        return self.structure.marginal(self.mu)

    @cached_property
    def log_transition(self) -> np.ndarray:
        """log P(s → a s) = log w_a + g_c(a s)."""
        return self.grid.log_weights[None, :] + self.g_log

    def to_export(self) -> dict:
        return {
            "c": self.c,
            "log_beta_c": self.log_beta_c,
            "residual": self.residual,
            "nodes": _floats(self.grid.nodes),
            "h": _floats(self.h),
            "nu": _floats(self.nu),
            "mu_marginal": _floats(self.mu_marginal),
        }


class Subaction(BaseModel):
    """Zero-temperature eigendata: β(f) and a calibrated subaction V on grid windows."""
    model_config = ARRAYS

    potential: Potential
    structure: WindowStructure
    beta_f: float
    V: np.ndarray
    f_values: np.ndarray
    calibration_residual: float
    argmax_policy: Tuple[Tuple[int, ...], ...]
    reference_state: int = 0
    sweeps: int = 0
    method: Literal["value", "policy"] = "value"

    @property
    def grid(self) -> FiberGrid:
        return self.structure.grid

    @cached_property
    def r_plus(self) -> np.ndarray:
        """R+ at the window a·s for every (state s, letter a)."""
        succ = self.structure.successor
        return self.beta_f + self.V[:, None] - self.V[succ] - self.f_values

    def to_export(self, degenerate: Optional[bool] = None, recurrent_class: Optional[List[float]] = None) -> dict:
        return {
            "beta_f": self.beta_f,
            "nodes": _floats(self.grid.nodes),
            "V": _floats(self.V),
            "residual": self.calibration_residual,
            "degenerate": degenerate,
            "recurrent_class": recurrent_class or [],
        }


class UniquenessReport(BaseModel):
    recurrent_classes: List[List[int]]
    support_states: List[int]
    support_angles: List[List[float]]
    unique: bool
    verdict: Literal["uniqueness plausible", "degenerate"]

    @property
    def degenerate(self) -> bool:
        return not self.unique


class ScanRecord(BaseModel):
    model_config = ARRAYS

    c: float
    log_beta_c: float
    beta_estimate: float
    eps_c: float
    V_c: np.ndarray
    delta_sup: float
    lemma_delta_sup: float
    f_mean: float
    W1_to_limit: float
    marginal: np.ndarray
    residual: float

    @property
    def eps_c_over_c(self) -> float:
        return self.eps_c / self.c

    @property
    def delta_sup_over_c(self) -> float:
        return self.delta_sup / self.c

    def csv_row(self) -> List[float]:
        return [
            self.c, self.log_beta_c, self.beta_estimate, self.eps_c,
            self.eps_c_over_c, self.delta_sup_over_c, self.f_mean, self.W1_to_limit,
        ]


SCAN_COLUMNS = ["c", "log_beta_c", "beta_estimate", "eps_c", "eps_c_over_c", "delta_sup_over_c", "f_mean", "W1"]


class SelectionReport(BaseModel):
    c_values: List[float]
    f_means: List[float]
    beta_f: float
    gap: float
    monotone: bool
    gap_ok: bool
    w1_trend: List[float]
    degenerate: bool
    focus_mass: Optional[float] = None
    findings: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone and self.gap_ok and not self.degenerate


class FiberMassRow(BaseModel):
    eps: float
    min_mass: float
    max_mass: float
    psi: Optional[float]
    c0: Optional[float]
    worst_probe: int
    ok: bool


class FiberMassReport(BaseModel):
    rows: List[FiberMassRow]
    violations: List[str] = Field(default_factory=list)
    findings: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


class Finite(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["finite"] = "finite"
    value: float
    exact: bool


class DivergentAbove(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["divergent"] = "divergent"
    bound: float


class RateEvaluation(BaseModel):
    point: BasePoint
    partial_sums: List[float]
    value: Union[Finite, DivergentAbove] = Field(discriminator="kind")
    cap: float
    snap_distance: float = 0.0

    @property
    def lower_bound(self) -> float:
        return self.value.value if isinstance(self.value, Finite) else self.value.bound


class Slope(BaseModel):
    c: float
    n: Optional[int] = None
    value: float


class LdpReport(BaseModel):
    set: ArcSet
    rate_lower_bound: float
    exact: bool
    slopes: List[Slope]
    grid_values: List[Slope] = Field(default_factory=list)
    fit: float
    residual: float
    agreement: float
    snap_distance: Optional[float] = None
    notes: List[str] = Field(default_factory=list)

    def to_export(self) -> dict:
        return self.model_dump(mode="json")


class PointSpreadReport(BaseModel):
    """Operator-rate reports for several base points; the spreads should vanish."""
    points: List[BasePoint]
    reports: List[LdpReport]
    fit_spread: float
    diagonal_spread: float

    def to_export(self) -> dict:
        return self.model_dump(mode="json")


class LscRow(BaseModel):
    distance: float
    value: float
    tolerance: float
    margin: float


class LscReport(BaseModel):
    base_value: float
    base_divergent: bool
    rows: List[LscRow]
    liminf: float
    passed: bool
    findings: List[str] = Field(default_factory=list)


class CancellationReport(BaseModel):
    values: List[Tuple[float, int, int, float]]
    diagonal: List[Tuple[float, int, float]]
    offsets: List[Tuple[float, int, float]]
    final_value: float
    threshold: float
    passed: bool


class Stationary(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["stationary"] = "stationary"


class FixedState(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["fixed"] = "fixed"
    angle: float


class ChainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    length: int = Field(default=100_000, gt=0)
    burn_in: int = Field(default=1_000, ge=0)
    seed: int = Field(default=20240601, ge=0, lt=2 ** 64)
    start: Union[Stationary, FixedState] = Field(default_factory=Stationary, discriminator="kind")

    @model_validator(mode="after")
    def _burn_in_shorter(self):
        if self.length <= self.burn_in:
            raise ValueError("length must exceed burn_in")
        return self


class ChainSample(BaseModel):
    """Sampled coordinates x_0, x_1, … in sequence order."""
    model_config = ARRAYS

    angles: np.ndarray
    node_indices: np.ndarray
    config: ChainConfig
    degenerate_cdf: bool = False

    @property
    def length(self) -> int:
        return int(self.node_indices.size)


class BirkhoffReport(BaseModel):
    c: float
    average: float
    expected: float
    standard_error: float
    z_score: float
    within_3_sigma: bool


class LadderReport(BaseModel):
    c_values: List[float]
    averages: List[float]
    beta_f: float
    increasing: bool


class MarginalReport(BaseModel):
    w1_full: float
    w1_quarter: float
    ratio: float
    scaling_ok: bool


class OrbitMeasureReport(BaseModel):
    n_values: List[int]
    w1: List[float]
    decreasing: bool
