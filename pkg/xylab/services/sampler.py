"""Monte Carlo realization of μ_c as the stationary prepend chain with density e^{g_c}."""
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from xylab.core.errors import DomainError
from xylab.core.logging import logger
from xylab.models.geometry import ArcSet, BasePoint, FiberGrid, circle_w1, wrap_angle
from xylab.models.potential import Potential
from xylab.models.results import (
    BirkhoffReport,
    ChainConfig,
    ChainSample,
    EigenSystem,
    FixedState,
    LadderReport,
    MarginalReport,
    OrbitMeasureReport,
    Subaction,
)
from xylab.services import transfer
from xylab.services.cache import EigenCache
from xylab.services.maxplus import limit_marginal, solve_maxplus, uniqueness_probe
from xylab.services.zero_temp import eigensystems

N_BATCHES = 50
SCALING_RANGE = (1.4, 2.8)


def _cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    cdf /= cdf[..., -1:]
    return cdf


def sample_chain(es: EigenSystem, cfg: ChainConfig) -> ChainSample:
    """Sample x_0, x_1, … of μ_c; deterministic in cfg.seed.

    Letters are drawn by prepending, so the generated sequence is reversed
    into coordinate order and burn-in is cut from its far end.
    """
    st = es.structure
    if st.window != 1:
        raise DomainError(f"the sampler handles arity ≤ 2, got window {st.window}")
    grid = es.grid
    rng = np.random.default_rng(cfg.seed)

    probs = np.exp(es.log_transition)
    cdf = _cdf(probs)
    uniforms = rng.random(cfg.length)

    if isinstance(cfg.start, FixedState):
        first, _ = grid.snap(cfg.start.angle)
        first = int(first)
    else:
        first = int(np.searchsorted(_cdf(es.mu_marginal), uniforms[0], side="right"))

    last = grid.n_nodes - 1
    generated = np.empty(cfg.length, dtype=np.int64)
    generated[0] = min(first, last)
    for t in range(1, cfg.length):
        generated[t] = min(int(np.searchsorted(cdf[generated[t - 1]], uniforms[t], side="right")), last)

    visited = np.unique(generated)
    degenerate = bool(np.any(np.max(probs[visited], axis=1) >= 1.0 - 1e-12))
    if degenerate:
        logger.warning(f"chain at c={es.c:g} hits a transition with all mass on one cell")

    indices = generated[cfg.burn_in:][::-1].copy()
    jitter = rng.uniform(-0.5 * grid.spacing, 0.5 * grid.spacing, size=indices.size)
    angles = wrap_angle(grid.nodes[indices] + jitter)
    return ChainSample(angles=angles, node_indices=indices, config=cfg, degenerate_cdf=degenerate)


def _batch_se(values: np.ndarray, n_batches: int = N_BATCHES) -> float:
    usable = (values.size // n_batches) * n_batches
    if usable < 2 * n_batches:
        return float(np.std(values, ddof=1) / np.sqrt(values.size))
    means = values[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


def box_frequency(chain: ChainSample, boxes: ArcSet, grid: FiberGrid) -> Tuple[float, float]:
    """Empirical frequency of {σ^i x ∈ box} and its batch-means standard error."""
    depth = max(boxes.depth, 1)
    angles = grid.nodes[chain.node_indices]
    inside = np.ones(chain.length - depth + 1, dtype=bool)
    for j in range(depth):
        inside &= boxes.mask(j, angles[j:chain.length - depth + 1 + j])
    hits = inside.astype(float)
    return float(hits.mean()), _batch_se(hits)


def stationarity_defect(es: EigenSystem) -> float:
    """sup |marginal after one prepend step − marginal|."""
    probs = np.exp(es.log_transition)
    pushed = np.sum(es.mu[:, None] * probs, axis=0)
    return float(np.max(np.abs(pushed - es.mu_marginal)))


def birkhoff_check(chain: ChainSample, pot: Potential, es: EigenSystem) -> BirkhoffReport:
    """(1/n) Σ f(σ^j x) along the chain against ∫ f dμ_c."""
    cfg = chain.config
    if cfg.length < 10 * cfg.burn_in:
        raise DomainError(f"chain length {cfg.length} is shorter than 10 x burn-in {cfg.burn_in}")
    angles = es.grid.nodes[chain.node_indices]
    windows = sliding_window_view(angles, pot.arity)
    values = pot.eval(windows)
    average = float(values.mean())
    expected = transfer.f_mean(es)
    se = _batch_se(values)
    z = (average - expected) / se if se > 0 else 0.0
    return BirkhoffReport(
        c=es.c,
        average=average,
        expected=expected,
        standard_error=se,
        z_score=float(z),
        within_3_sigma=abs(z) <= 3.0,
    )


def birkhoff_ladder(
    pot: Potential,
    grid: FiberGrid,
    c_ladder: Sequence[float],
    cfg: ChainConfig,
    sub: Optional[Subaction] = None,
    cache: Optional[EigenCache] = None,
) -> LadderReport:
    """Birkhoff averages along increasing c, expected to climb toward β(f)."""
    sub = sub or solve_maxplus(pot, grid)
    averages = [
        birkhoff_check(sample_chain(es, cfg), pot, es).average
        for es in eigensystems(pot, grid, c_ladder, cache=cache)
    ]
    return LadderReport(
        c_values=[float(c) for c in c_ladder],
        averages=averages,
        beta_f=sub.beta_f,
        increasing=all(b > a for a, b in zip(averages, averages[1:])),
    )


def empirical_w1(node_indices: np.ndarray, es: EigenSystem) -> float:
    nodes = es.grid.nodes
    counts = np.bincount(node_indices, minlength=nodes.size).astype(float)
    return circle_w1(nodes, counts, nodes, es.mu_marginal)


def empirical_vs_marginal(chain: ChainSample, es: EigenSystem) -> MarginalReport:
    """W1 of the x_0 histogram to mu_marginal, for the full chain and its first quarter."""
    full = empirical_w1(chain.node_indices, es)
    quarter = empirical_w1(chain.node_indices[: chain.length // 4], es)
    ratio = quarter / full if full > 0 else float("inf")
    low, high = SCALING_RANGE
    return MarginalReport(
        w1_full=full,
        w1_quarter=quarter,
        ratio=ratio,
        scaling_ok=low <= ratio <= high,
    )


def orbit_measure_check(point: BasePoint, sub: Subaction, n_list: Sequence[int]) -> OrbitMeasureReport:
    """W1 of the x_0 marginal of (1/n) Σ_{j<n} δ_{σ^j z} to the maximizing marginal."""
    nodes = sub.grid.nodes
    limit = limit_marginal(sub, uniqueness_probe(sub))
    w1 = []
    for n in n_list:
        coords = point.coordinates(int(n))
        w1.append(circle_w1(coords, np.ones(coords.size), nodes, limit))
    return OrbitMeasureReport(
        n_values=[int(n) for n in n_list],
        w1=w1,
        decreasing=all(b <= a + 1e-12 for a, b in zip(w1, w1[1:])),
    )
