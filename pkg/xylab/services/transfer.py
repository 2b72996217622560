"""Discretized Ruelle operator L_{cf}: kernel, leading eigendata, Gibbs cylinders.

Every reduction runs in the log domain (logsumexp); β_c overflows doubles
long before the largest c of a scan.
"""
import math
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from xylab.core.config import settings
from xylab.core.errors import ConvergenceError, DomainError
from xylab.core.logging import logger
from xylab.models.geometry import ArcSet, BasePoint, FiberGrid
from xylab.models.potential import Potential
from xylab.models.results import EigenSystem, LogKernel, WindowStructure


def window_for(pot: Potential) -> int:
    """States are (k-1)-windows; arity-1 potentials embed as k=2."""
    return max(pot.arity, 2) - 1


def build_kernel(pot: Potential, c: float, grid: FiberGrid, max_arity: Optional[int] = None) -> LogKernel:
    max_arity = max_arity or settings.MAX_ARITY
    if not math.isfinite(c):
        raise DomainError(f"inverse temperature must be finite, got {c}")
    if pot.arity > max_arity:
        raise DomainError(f"arity {pot.arity} exceeds the cap {max_arity}")
    if pot.max_frequency >= grid.n_nodes / 2:
        logger.warning(
            f"grid of {grid.n_nodes} nodes cannot resolve frequency {pot.max_frequency} of {pot.name}"
        )

    structure = WindowStructure(grid=grid, window=window_for(pot))
    f_values = pot.eval(structure.transition_angles)
    entries = grid.log_weights[None, :] + c * f_values
    return LogKernel(
        structure=structure,
        c=float(c),
        potential_key=pot.key,
        f_values=f_values,
        entries=entries,
    )


def apply_log(kernel: LogKernel, log_w: np.ndarray) -> np.ndarray:
    """log (L w) for w given by its logarithm."""
    return logsumexp(kernel.entries + log_w[kernel.structure.successor], axis=1)


def apply_adjoint_log(kernel: LogKernel, log_nu: np.ndarray) -> np.ndarray:
    """log (L* ν) for ν given by the logarithm of its state masses."""
    st = kernel.structure
    pred = st.predecessor
    return logsumexp(log_nu[pred] + kernel.entries[pred, st.letter[:, None]], axis=1)


def _power_iterate(step, start: np.ndarray, log_norm, tol: float, max_iter: int, what: str):
    vector_tol = max(10.0 * tol, 1e-13)
    current = start
    log_beta = None
    delta = math.inf
    for iteration in range(1, max_iter + 1):
        image = step(current)
        new_beta = log_norm(image)
        new = image - new_beta
        delta = float(np.max(np.abs(new - current)))
        if log_beta is not None and abs(new_beta - log_beta) < tol and delta < vector_tol:
            return new, new_beta, iteration
        current, log_beta = new, new_beta
    raise ConvergenceError(f"{what} power iteration did not converge in {max_iter} sweeps", delta)


def assemble_eigensystem(
    kernel: LogKernel,
    log_beta: float,
    log_h: np.ndarray,
    log_nu: np.ndarray,
    iterations: int = 0,
) -> EigenSystem:
    st = kernel.structure
    image = apply_log(kernel, log_h)
    residual = float(np.max(np.abs(image - log_beta - log_h)))
    adjoint_residual = float(np.max(np.abs(apply_adjoint_log(kernel, log_nu) - log_beta - log_nu)))

    # g_c = cf + log h(a s) - log h(s) - log β; log h(s) + log β is taken as
    # log (L h)(s) so every row is a probability to rounding.
    g_log = kernel.c * kernel.f_values + log_h[st.successor] - image[:, None]

    log_mu = log_h + log_nu
    mu = np.exp(log_mu - logsumexp(log_mu))
    return EigenSystem(
        kernel=kernel,
        log_beta_c=float(log_beta),
        log_h=log_h,
        log_nu=log_nu,
        mu=mu,
        g_log=g_log,
        residual=residual,
        adjoint_residual=adjoint_residual,
        iterations=iterations,
    )


def leading_eigensystem(kernel: LogKernel, tol: Optional[float] = None, max_iter: Optional[int] = None) -> EigenSystem:
    tol = tol or settings.EIGEN_TOL
    max_iter = max_iter or settings.EIGEN_MAX_ITER
    n_states = kernel.n_states
    log_state_weight = -math.log(n_states)

    # h normalized by ∫ h dm = 1, ν by total mass 1
    log_h, log_beta, it_h = _power_iterate(
        lambda v: apply_log(kernel, v),
        np.zeros(n_states),
        lambda img: float(logsumexp(img) + log_state_weight),
        tol, max_iter, "eigenfunction",
    )
    log_nu, log_beta_adj, it_nu = _power_iterate(
        lambda v: apply_adjoint_log(kernel, v),
        np.full(n_states, log_state_weight),
        lambda img: float(logsumexp(img)),
        tol, max_iter, "eigenmeasure",
    )
    if abs(log_beta - log_beta_adj) > 1e-8 * max(1.0, abs(log_beta)):
        logger.warning(f"adjoint eigenvalue mismatch at c={kernel.c:g}: {log_beta} vs {log_beta_adj}")

    es = assemble_eigensystem(kernel, log_beta, log_h, log_nu, iterations=it_h + it_nu)
    logger.info(
        f"eigensystem {kernel.potential_key} c={kernel.c:g}: log beta={es.log_beta_c:.12g} "
        f"residual={es.residual:.2e} sweeps={it_h}+{it_nu}"
    )
    return es


def _log_indicator(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 0.0, -np.inf)


def masked_chain(es: EigenSystem, boxes: ArcSet, n: int) -> np.ndarray:
    """log F_n on states, F_m(y) = Σ_a P(y, a)·χ_{A_{m-1}}(a)·F_{m-1}(a y), F_0 = 1."""
    st = es.structure
    nodes = es.grid.nodes
    log_f = np.zeros(st.n_states)
    for m in range(1, n + 1):
        letter_mask = _log_indicator(boxes.mask(m - 1, nodes))
        log_f = logsumexp(es.log_transition + letter_mask[None, :] + log_f[st.successor], axis=1)
    return log_f


def gibbs_cylinder_log(es: EigenSystem, boxes: ArcSet, max_depth: Optional[int] = None) -> float:
    max_depth = max_depth or settings.MAX_CYLINDER_DEPTH
    if boxes.depth > max_depth:
        raise DomainError(f"cylinder depth {boxes.depth} exceeds the configured maximum {max_depth}")
    st = es.structure
    n = max(boxes.depth - st.window, 0)
    log_f = masked_chain(es, boxes, n)
    state_angles = st.state_angles
    state_mask = np.ones(st.n_states, dtype=bool)
    for r in range(st.window):
        if n + r < boxes.depth:
            state_mask &= boxes.mask(n + r, state_angles[:, r])
    with np.errstate(divide="ignore"):
        log_mu = np.log(es.mu)
    return float(logsumexp(log_mu + _log_indicator(state_mask) + log_f))


def gibbs_cylinder(es: EigenSystem, boxes: ArcSet, max_depth: Optional[int] = None) -> float:
    """μ_c of the cylinder described by boxes, exact at grid resolution."""
    return float(math.exp(gibbs_cylinder_log(es, boxes, max_depth)))


def snap_point(es: EigenSystem, x: BasePoint) -> Tuple[int, float]:
    state, dist = es.structure.snap(x)
    if dist > 1e-12:
        logger.warning(f"base point snapped to grid, distance {dist:.3e}")
    return state, dist


def apply_Ln_indicator(es: EigenSystem, x: BasePoint, boxes: ArcSet, n: int) -> float:
    """log (L_{g_c}^n χ_set)(x); ≤ 0 since L_{g_c} is stochastic."""
    if n < boxes.depth:
        raise DomainError(f"n={n} is smaller than the set depth {boxes.depth}")
    state, _ = snap_point(es, x)
    return float(masked_chain(es, boxes, n)[state])


def f_mean(es: EigenSystem) -> float:
    """∫ f dμ_c, using the invariance of μ_c under prepending with P."""
    probs = np.exp(es.log_transition)
    return float(np.sum(es.mu[:, None] * probs * es.kernel.f_values))
