"""Temperature scans c → ∞ and the zero-temperature selection checks."""
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from xylab.core.config import settings
from xylab.core.errors import ConvergenceError, DomainError
from xylab.core.logging import logger
from xylab.models.geometry import Arc, BasePoint, FiberGrid, circle_w1
from xylab.models.potential import Potential
from xylab.models.results import (
    EigenSystem,
    FiberMassReport,
    FiberMassRow,
    ScanRecord,
    SelectionReport,
    Subaction,
    UniquenessReport,
)
from xylab.services import transfer
from xylab.services.cache import EigenCache, eigen_cache
from xylab.services.maxplus import limit_marginal, solve_maxplus, uniqueness_probe

MONOTONE_SLACK = 1e-8


def delta_sup(es: EigenSystem, sub: Subaction) -> float:
    """sup |δ_c| with δ_c = log h_c − c·V, constants matched at the reference state."""
    delta = es.log_h - es.c * sub.V
    return float(np.max(np.abs(delta - delta[sub.reference_state])))


def lemma_delta_sup(es: EigenSystem, sub: Subaction) -> float:
    """sup over grid transitions of |g_c − c·R₋|."""
    return float(np.max(np.abs(es.g_log + es.c * sub.r_plus)))


def eigensystems(
    pot: Potential,
    grid: FiberGrid,
    c_schedule: Sequence[float],
    threads: int = 1,
    tol: Optional[float] = None,
    cache: Optional[EigenCache] = None,
) -> List[EigenSystem]:
    """Converged eigensystems for every c, in schedule order."""
    cache = cache or eigen_cache

    def solve(c: float) -> EigenSystem:
        try:
            return cache.get_or_compute(pot, c, grid, tol)
        except ConvergenceError as exc:
            raise exc.tagged(c) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return list(executor.map(solve, c_schedule))
    return [solve(c) for c in c_schedule]


def scan_record(es: EigenSystem, sub: Subaction, limit: np.ndarray) -> ScanRecord:
    c = es.c
    nodes = es.grid.nodes
    marginal = es.mu_marginal
    return ScanRecord(
        c=c,
        log_beta_c=es.log_beta_c,
        beta_estimate=es.log_beta_c / c,
        eps_c=es.log_beta_c - c * sub.beta_f,
        V_c=es.log_h / c,
        delta_sup=delta_sup(es, sub),
        lemma_delta_sup=lemma_delta_sup(es, sub),
        f_mean=transfer.f_mean(es),
        W1_to_limit=circle_w1(nodes, marginal, nodes, limit),
        marginal=marginal,
        residual=es.residual,
    )


def run_scan(
    pot: Potential,
    grid: FiberGrid,
    c_schedule: Sequence[float],
    sub: Optional[Subaction] = None,
    threads: int = 1,
    tol: Optional[float] = None,
    cache: Optional[EigenCache] = None,
) -> List[ScanRecord]:
    schedule = [float(c) for c in c_schedule]
    if not schedule or schedule[0] <= 0 or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise DomainError(f"c schedule must be positive and increasing, got {schedule}")
    sub = sub or solve_maxplus(pot, grid)
    limit = limit_marginal(sub, uniqueness_probe(sub))
    systems = eigensystems(pot, grid, schedule, threads=threads, tol=tol, cache=cache)
    records = [scan_record(es, sub, limit) for es in systems]

    last = records[-1]
    logger.info(
        f"scan {pot.key} n={grid.n_nodes}: {len(records)} points, c_max={last.c:g} "
        f"eps/c={last.eps_c_over_c:.3e} W1={last.W1_to_limit:.3e}"
    )
    return records


def selection_report(
    records: Sequence[ScanRecord],
    sub: Subaction,
    uniqueness: Optional[UniquenessReport] = None,
    gap: Optional[float] = None,
    focus: Optional[Arc] = None,
) -> SelectionReport:
    if len(records) < 3:
        raise DomainError(f"selection needs at least 3 scan records, got {len(records)}")
    gap = settings.SELECTION_GAP if gap is None else gap
    uniqueness = uniqueness or uniqueness_probe(sub)
    f_means = [r.f_mean for r in records]
    findings: List[str] = []

    monotone = True
    for prev, cur in zip(records, records[1:]):
        slack = MONOTONE_SLACK + prev.residual + cur.residual
        if cur.f_mean < prev.f_mean - slack:
            monotone = False
            findings.append(f"f_mean decreases from c={prev.c:g} to c={cur.c:g}: {prev.f_mean:.10g} > {cur.f_mean:.10g}")

    last = records[-1]
    final_gap = sub.beta_f - last.f_mean
    gap_ok = final_gap <= gap
    if not gap_ok:
        findings.append(f"beta(f) - f_mean at c={last.c:g} is {final_gap:.3e}, above {gap:g}")

    if uniqueness.degenerate:
        findings.append("degenerate maximizing set; no selection claim")

    focus_mass = None
    if focus is not None:
        nodes = sub.grid.nodes
        focus_mass = float(np.sum(last.marginal[focus.contains(nodes)]))

    return SelectionReport(
        c_values=[r.c for r in records],
        f_means=f_means,
        beta_f=sub.beta_f,
        gap=final_gap,
        monotone=monotone,
        gap_ok=gap_ok,
        w1_trend=[r.W1_to_limit for r in records],
        degenerate=uniqueness.degenerate,
        focus_mass=focus_mass,
        findings=findings,
    )


def arc_fraction_above(values: np.ndarray, threshold: float) -> float:
    """Normalized length of {v > threshold} for the periodic piecewise-linear interpolant of node values."""
    v0 = np.asarray(values, dtype=float)
    v1 = np.roll(v0, -1)
    above0 = v0 > threshold
    above1 = v1 > threshold
    pieces = np.where(above0 & above1, 1.0, 0.0)
    crossing = above0 != above1
    with np.errstate(divide="ignore", invalid="ignore"):
        part = np.where(above0, (v0 - threshold) / (v0 - v1), (v1 - threshold) / (v1 - v0))
    pieces = np.where(crossing, part, pieces)
    return float(np.mean(pieces))


def fiber_values(sub: Subaction, x: BasePoint) -> np.ndarray:
    """R₋(a x) at every grid letter a, V interpolated off-grid."""
    st = sub.structure
    nodes = sub.grid.nodes
    coords = x.coordinates(st.window + 1)
    windows = np.concatenate([nodes[:, None], np.broadcast_to(coords, (nodes.size, coords.size))], axis=1)
    f = sub.potential.eval(windows)
    V_ax = st.interpolate(sub.V, windows)
    V_x = float(st.interpolate(sub.V, coords[None, :])[0])
    return f + V_ax - V_x - sub.beta_f


def _threshold_c(records: Sequence[ScanRecord], eps: float) -> Optional[ScanRecord]:
    # smallest scheduled c with e^{-c ε + δ_c} ≤ 1/2
    for record in sorted(records, key=lambda r: r.c):
        if -record.c * eps + record.lemma_delta_sup <= -math.log(2.0):
            return record
    return None


def fiber_mass_check(
    es: EigenSystem,
    sub: Subaction,
    eps_list: Sequence[float],
    x_probes: Sequence[BasePoint],
    records: Optional[Sequence[ScanRecord]] = None,
) -> FiberMassReport:
    """Fibre mass of {a : R₋(a x) > −ε} against the lower bound 1/(3e^{|δ_{c0}|})."""
    if records is None:
        records = [scan_record(es, sub, es.mu_marginal)]
    profiles = [fiber_values(sub, x) for x in x_probes]

    rows: List[FiberMassRow] = []
    violations: List[str] = []
    findings: List[str] = []
    for eps in eps_list:
        masses = [arc_fraction_above(values, -eps) for values in profiles]
        worst = int(np.argmin(masses))
        threshold = _threshold_c(records, eps)
        if threshold is None:
            psi = c0 = None
            ok = True
            findings.append(f"eps={eps:g}: no scheduled c satisfies e^(-c eps + delta) <= 1/2")
        else:
            c0 = threshold.c
            psi = 1.0 / (3.0 * math.exp(threshold.lemma_delta_sup))
            ok = masses[worst] >= psi
            if not ok:
                violations.append(
                    f"eps={eps:g}: mass {masses[worst]:.4g} at probe {worst} "
                    f"({list(x_probes[worst].coordinates(2))}) below psi={psi:.4g}"
                )
        rows.append(FiberMassRow(
            eps=float(eps),
            min_mass=float(min(masses)),
            max_mass=float(max(masses)),
            psi=psi,
            c0=c0,
            worst_probe=worst,
            ok=ok,
        ))
    for message in violations:
        logger.warning(f"fiber mass: {message}")
    return FiberMassReport(rows=rows, violations=violations, findings=findings)
