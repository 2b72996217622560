"""Large deviations at zero temperature: R₊ sums, rate infima and empirical slopes.

Rates are reported as lower bounds with an exactness flag. Partial sums of
R₊ ≥ 0 are monotone, so a finite sum is a certified lower bound for R₊^∞ at
grid resolution; divergence is only ever reported as "above the cap".
"""
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from xylab.core.config import settings
from xylab.core.errors import DomainError, HypothesisViolation, SearchTooLargeError
from xylab.core.logging import logger
from xylab.models.geometry import TWO_PI, ArcSet, BasePoint, FiberGrid, ShiftMetric, arc_distance
from xylab.models.potential import Potential
from xylab.models.results import (
    CancellationReport,
    DivergentAbove,
    Finite,
    LdpReport,
    LogKernel,
    LscReport,
    LscRow,
    PointSpreadReport,
    RateEvaluation,
    Slope,
    Subaction,
)
from xylab.services import transfer
from xylab.services.cache import EigenCache
from xylab.services.maxplus import solve_maxplus, uniqueness_probe
from xylab.services.zero_temp import eigensystems

DISTANCE_TERMS = 40
CANCELLATION_THRESHOLD = 0.05


def rate_transitions(sub: Subaction) -> np.ndarray:
    """R₊ on every grid transition (state s, letter a)."""
    return sub.r_plus


def _term_slack(sub: Subaction) -> float:
    return max(settings.TIE_TOL, 10.0 * sub.calibration_residual)


def rate_terms(point: BasePoint, sub: Subaction, n_terms: int) -> np.ndarray:
    """R₊(σ^j x) for j < n_terms, V interpolated linearly between nodes."""
    st = sub.structure
    w = st.window
    coords = point.coordinates(n_terms + w + 1)
    windows = sliding_window_view(coords, w + 1)[:n_terms]
    f = sub.potential.eval(windows)
    V_here = st.interpolate(sub.V, windows[:, :w])
    V_next = st.interpolate(sub.V, windows[:, 1:])
    return sub.beta_f + V_next - V_here - f


def rate_partial(
    point: BasePoint,
    sub: Subaction,
    N: Optional[int] = None,
    cap: Optional[float] = None,
) -> RateEvaluation:
    N = N or settings.RATE_TERMS
    cap = settings.RATE_CAP if cap is None else cap
    head = len(point.head)
    n_terms = max(N, head + point.period)

    terms = rate_terms(point, sub, n_terms)
    slack = _term_slack(sub)
    if np.min(terms) < -slack:
        logger.warning(f"R+ interpolated below zero ({np.min(terms):.3e}) at {point}")
    terms = np.maximum(terms, 0.0)
    sums = np.cumsum(terms)

    _, dist = sub.grid.snap(point.coordinates(n_terms))
    tail = terms[head:head + point.period]
    if np.sum(tail) <= slack * point.period:
        exact_value = float(sums[head - 1]) if head else 0.0
        value = Finite(value=exact_value, exact=True)
    elif sums[-1] > cap:
        value = DivergentAbove(bound=cap)
    else:
        value = Finite(value=float(sums[-1]), exact=False)

    return RateEvaluation(
        point=point,
        partial_sums=[float(s) for s in sums[:N]],
        value=value,
        cap=cap,
        snap_distance=float(np.max(dist)),
    )


def cost_to_go(sub: Subaction, support: Optional[Sequence[int]] = None) -> np.ndarray:
    """Minimal R₊^∞ over grid sequences starting with each window.

    Min-plus shortest path into the maximizing support, where every cycle
    costs nothing.
    """
    st = sub.structure
    if support is None:
        support = uniqueness_probe(sub).support_states
    r_plus = np.maximum(sub.r_plus, 0.0)
    pred = st.predecessor
    step = r_plus[pred, st.letter[:, None]]

    J = np.full(st.n_states, np.inf)
    J[list(support)] = 0.0
    for _ in range(st.n_states + 1):
        relaxed = np.minimum(J, np.min(step + J[pred], axis=1))
        if np.array_equal(relaxed, J):
            break
        J = relaxed
    return J


def _search_size(candidates: List[np.ndarray], start: int, width: int) -> int:
    return int(np.prod([candidates[start + i].size for i in range(width)], dtype=float))


def set_rate_search(set: ArcSet, sub: Subaction, depth: Optional[int] = None) -> Tuple[float, bool]:
    """(inf of R₊^∞ over the set, exact) by dynamic programming over the constrained letters.

    Constrained coordinates range over admissible nodes plus arc endpoints;
    the remaining coordinates are grid nodes completed by the cost-to-go.
    """
    depth = set.depth if depth is None else depth
    if depth < set.depth:
        raise DomainError(f"depth {depth} is smaller than the set depth {set.depth}")
    st = sub.structure
    grid = sub.grid
    w = st.window
    length = depth + w
    candidates = [set.candidate_letters(j, grid) if j < depth else grid.nodes for j in range(length)]
    for j, letters in enumerate(candidates):
        if letters.size == 0:
            logger.warning(f"coordinate {j} of the set has no admissible grid letters")
            return math.inf, False
    limit = settings.ORBIT_SEARCH_LIMIT
    for j in range(depth):
        size = _search_size(candidates, j, w + 1)
        if size > limit:
            raise SearchTooLargeError(size, limit)

    # G over windows at positions depth..depth+w-1, all grid nodes
    G = cost_to_go(sub).reshape((grid.n_nodes,) * w)
    for j in range(depth - 1, -1, -1):
        axes = [candidates[j + i] for i in range(w + 1)]
        windows = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        f = sub.potential.eval(windows)
        V_here = st.interpolate(sub.V, windows[..., :w])
        V_next = st.interpolate(sub.V, windows[..., 1:])
        r_plus = np.maximum(sub.beta_f + V_next - V_here - f, 0.0)
        G = np.min(r_plus + G[None, ...], axis=-1)
    value = float(np.min(G))
    return value, math.isfinite(value)


def set_rate_inf(set: ArcSet, sub: Subaction, depth: Optional[int] = None) -> float:
    return set_rate_search(set, sub, depth)[0]


def _require_unique(pot: Potential, sub: Subaction) -> None:
    report = uniqueness_probe(sub)
    if report.degenerate:
        raise HypothesisViolation(f"maximizing set of {pot.name} is degenerate ({len(report.recurrent_classes)} recurrent classes)")


def _tail_fit(cs: Sequence[float], logs: Sequence[float]) -> Tuple[float, float]:
    cs = np.asarray(cs, dtype=float)
    logs = np.asarray(logs, dtype=float)
    if cs.size < 2:
        return math.nan, math.nan
    slope, intercept = np.polyfit(cs, logs, 1)
    residual = float(np.sqrt(np.mean((logs - (slope * cs + intercept)) ** 2)))
    return float(slope), residual


def _agreement(fit: float, rate: float) -> float:
    if rate > 0:
        return abs(fit + rate) / rate
    return abs(fit)


def empirical_mu_rate(
    pot: Potential,
    grid: FiberGrid,
    set: ArcSet,
    c_schedule: Sequence[float],
    sub: Optional[Subaction] = None,
    threads: int = 1,
    cache: Optional[EigenCache] = None,
) -> LdpReport:
    """Slope of log μ_c(set) against c, compared with −inf R₊^∞ over the set."""
    sub = sub or solve_maxplus(pot, grid)
    _require_unique(pot, sub)
    rate, exact = set_rate_search(set, sub)

    schedule = [float(c) for c in c_schedule]
    tail = schedule[len(schedule) // 2:]
    notes: List[str] = []
    slopes: List[Slope] = []
    fit_c: List[float] = []
    fit_log: List[float] = []
    for es in eigensystems(pot, grid, schedule, threads=threads, cache=cache):
        log_mass = transfer.gibbs_cylinder_log(es, set)
        if not math.isfinite(log_mass):
            notes.append(f"mu_c(set) underflows at c={es.c:g}; point dropped")
            logger.warning(notes[-1])
            continue
        slopes.append(Slope(c=es.c, value=log_mass / es.c))
        if es.c in tail:
            fit_c.append(es.c)
            fit_log.append(log_mass)
    fit, residual = _tail_fit(fit_c, fit_log)
    if math.isnan(fit):
        notes.append(f"fewer than two usable points on the schedule tail {tail}")

    report = LdpReport(
        set=set,
        rate_lower_bound=rate,
        exact=exact,
        slopes=slopes,
        fit=fit,
        residual=residual,
        agreement=_agreement(fit, rate),
        notes=notes,
    )
    logger.info(f"mu rate {pot.key}: rate={rate:.6g} fit={fit:.6g} agreement={report.agreement:.3e}")
    return report


def diagonal_n(c: float, depth: int, divisor: Optional[float] = None) -> int:
    divisor = divisor or settings.DIAGONAL_DIVISOR
    return max(int(math.ceil(c / divisor)), depth, 1)


def empirical_operator_rate(
    pot: Potential,
    grid: FiberGrid,
    set: ArcSet,
    x: BasePoint,
    c_schedule: Sequence[float],
    n_schedule: Sequence[int],
    sub: Optional[Subaction] = None,
    threads: int = 1,
    cache: Optional[EigenCache] = None,
    divisor: Optional[float] = None,
) -> LdpReport:
    """(1/c) log (L^n_{g_c} χ_set)(x) on the (c, n) grid and along the diagonal n = ⌈c/divisor⌉."""
    sub = sub or solve_maxplus(pot, grid)
    _require_unique(pot, sub)
    rate, exact = set_rate_search(set, sub)
    depth = set.depth

    schedule = [float(c) for c in c_schedule]
    tail = schedule[len(schedule) // 2:]
    notes: List[str] = []
    skipped = [n for n in n_schedule if n < depth]
    if skipped:
        notes.append(f"n values {skipped} below the set depth {depth} skipped")

    grid_values: List[Slope] = []
    diagonal: List[Slope] = []
    fit_c: List[float] = []
    fit_log: List[float] = []
    snap_distance = None
    for es in eigensystems(pot, grid, schedule, threads=threads, cache=cache):
        _, snap_distance = transfer.snap_point(es, x)
        for n in n_schedule:
            if n < depth:
                continue
            value = transfer.apply_Ln_indicator(es, x, set, n)
            grid_values.append(Slope(c=es.c, n=n, value=value / es.c))
        n = diagonal_n(es.c, depth, divisor)
        value = transfer.apply_Ln_indicator(es, x, set, n)
        if not math.isfinite(value):
            notes.append(f"(L^n chi)(x) underflows at c={es.c:g}, n={n}; point dropped")
            logger.warning(notes[-1])
            continue
        diagonal.append(Slope(c=es.c, n=n, value=value / es.c))
        if es.c in tail:
            fit_c.append(es.c)
            fit_log.append(value)
    fit, residual = _tail_fit(fit_c, fit_log)

    return LdpReport(
        set=set,
        rate_lower_bound=rate,
        exact=exact,
        slopes=diagonal,
        grid_values=grid_values,
        fit=fit,
        residual=residual,
        agreement=_agreement(fit, rate),
        snap_distance=snap_distance,
        notes=notes,
    )


def operator_rate_by_point(
    pot: Potential,
    grid: FiberGrid,
    set: ArcSet,
    points: Sequence[BasePoint],
    c_schedule: Sequence[float],
    n_schedule: Sequence[int],
    sub: Optional[Subaction] = None,
    threads: int = 1,
    cache: Optional[EigenCache] = None,
) -> PointSpreadReport:
    """Operator rate from every base point; the slope is not supposed to depend on x."""
    if not points:
        raise DomainError("operator rate needs at least one base point")
    sub = sub or solve_maxplus(pot, grid)
    reports = [
        empirical_operator_rate(pot, grid, set, x, c_schedule, n_schedule, sub=sub, threads=threads, cache=cache)
        for x in points
    ]
    fits = [r.fit for r in reports if math.isfinite(r.fit)]
    fit_spread = max(fits) - min(fits) if fits else math.nan

    by_c: Dict[float, List[float]] = {}
    for report in reports:
        for s in report.slopes:
            by_c.setdefault(s.c, []).append(s.value)
    spreads = [max(v) - min(v) for v in by_c.values() if len(v) == len(reports)]
    diagonal_spread = max(spreads) if spreads else math.nan
    logger.info(f"operator-rate fit spread {fit_spread:.3e} across {len(points)} base points")
    return PointSpreadReport(
        points=list(points), reports=reports, fit_spread=fit_spread, diagonal_spread=diagonal_spread
    )


def state_holder(sub: Subaction, metric: ShiftMetric) -> float:
    """Finite-difference Hölder estimate of V in the shift metric."""
    st = sub.structure
    n = st.n_nodes
    values = sub.V.reshape((n,) * st.window)
    step = sub.grid.spacing / TWO_PI
    constant = 0.0
    for j in range(st.window):
        slope = np.max(np.abs(np.roll(values, -1, axis=j) - values)) / step
        constant = max(constant, slope / metric.theta ** j)
    return float(constant)


def rate_holder(sub: Subaction, metric: ShiftMetric) -> float:
    """|R|_θ ≤ |f|_θ + |V|_θ (1 + 1/θ)."""
    f_holder = sub.potential.estimate_holder(sub.grid, metric)
    return f_holder + state_holder(sub, metric) * (1.0 + 1.0 / metric.theta)


def _summed_shift_distance(x: BasePoint, y: BasePoint, N: int, metric: ShiftMetric) -> float:
    """Σ_{i<N} upper bound of d(σ^i x, σ^i y)."""
    dist = arc_distance(x.coordinates(N + DISTANCE_TERMS), y.coordinates(N + DISTANCE_TERMS))
    weights = metric.theta ** np.arange(DISTANCE_TERMS)
    shifted = sliding_window_view(dist, DISTANCE_TERMS)[:N]
    return float(np.sum(shifted @ weights) + N * metric.tail_bound(DISTANCE_TERMS))


def lsc_probe(
    sub: Subaction,
    z: BasePoint,
    approach_seq: Sequence[BasePoint],
    N: Optional[int] = None,
    metric: Optional[ShiftMetric] = None,
) -> LscReport:
    """Lower semicontinuity of R₊^N along z_j → z, up to the Hölder tolerance."""
    N = N or settings.RATE_TERMS
    metric = metric or ShiftMetric()
    base = rate_partial(z, sub, N)
    base_value = base.partial_sums[-1]
    holder = rate_holder(sub, metric)

    rows: List[LscRow] = []
    for zj in approach_seq:
        value = rate_partial(zj, sub, N).partial_sums[-1]
        tolerance = holder * _summed_shift_distance(zj, z, N, metric)
        rows.append(LscRow(
            distance=metric.distance(zj, z, DISTANCE_TERMS)[1],
            value=value,
            tolerance=tolerance,
            margin=value - (base_value - tolerance),
        ))

    tail = rows[len(rows) // 2:] if rows else []
    liminf = min((r.value for r in tail), default=math.nan)
    passed = all(r.margin >= -_term_slack(sub) * N for r in tail)
    findings: List[str] = []
    base_divergent = isinstance(base.value, DivergentAbove)
    if base_divergent:
        findings.append(f"R+ sum at z exceeds the cap {base.cap:g}; approach values reach {liminf:.6g}")
    if not passed:
        worst = min(tail, key=lambda r: r.margin)
        findings.append(f"partial sum {worst.value:.6g} below {base_value:.6g} - {worst.tolerance:.3g}")
    return LscReport(
        base_value=base_value,
        base_divergent=base_divergent,
        rows=rows,
        liminf=liminf,
        passed=passed,
        findings=findings,
    )


def _log_iterates(kernel: LogKernel, n_max: int) -> List[np.ndarray]:
    """log (L^n 1) for n = 0..n_max."""
    out = [np.zeros(kernel.n_states)]
    for _ in range(n_max):
        out.append(transfer.apply_log(kernel, out[-1]))
    return out


def beta_cancellation_check(
    pot: Potential,
    grid: FiberGrid,
    c_schedule: Sequence[float],
    n_schedule: Sequence[int],
    x_probes: Sequence[BasePoint],
    sub: Optional[Subaction] = None,
    k_offset: int = 1,
    threshold: float = CANCELLATION_THRESHOLD,
    threads: int = 1,
    cache: Optional[EigenCache] = None,
    divisor: Optional[float] = None,
) -> CancellationReport:
    """(1/c) log (L^n_{cR₋} 1)(x) − n ε_c / c on the (c, n) grid and the diagonal."""
    sub = sub or solve_maxplus(pot, grid)
    st = sub.structure
    r_minus = -sub.r_plus
    states = [st.snap(x)[0] for x in x_probes]

    values: List[Tuple[float, int, int, float]] = []
    diagonal: List[Tuple[float, int, float]] = []
    offsets: List[Tuple[float, int, float]] = []
    for es in eigensystems(pot, grid, c_schedule, threads=threads, cache=cache):
        c = es.c
        eps_c = es.log_beta_c - c * sub.beta_f
        kernel = LogKernel(
            structure=st,
            c=c,
            potential_key=f"{pot.key}:R-",
            f_values=r_minus,
            entries=grid.log_weights[None, :] + c * r_minus,
        )
        n_diag = diagonal_n(c, 1, divisor)
        n_max = max(max(n_schedule, default=0), n_diag) + k_offset
        iterates = _log_iterates(kernel, n_max)

        def corrected(n: int) -> np.ndarray:
            return iterates[n][states] / c - n * eps_c / c

        for n in n_schedule:
            for p, v in enumerate(corrected(n)):
                values.append((c, int(n), p, float(v)))
        diagonal.append((c, n_diag, float(np.max(np.abs(corrected(n_diag))))))
        gap = np.abs(iterates[n_diag][states] - iterates[n_diag + k_offset][states]) / c
        offsets.append((c, n_diag, float(np.max(gap))))

    final_value = diagonal[-1][2]
    passed = final_value < threshold
    logger.info(f"beta cancellation {pot.key}: final={final_value:.3e} passed={passed}")
    return CancellationReport(
        values=values,
        diagonal=diagonal,
        offsets=offsets,
        final_value=final_value,
        threshold=threshold,
        passed=passed,
    )
