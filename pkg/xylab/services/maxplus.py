"""Zero-temperature eigendata: β(f) and calibrated subactions on the grid.

Solves max_a [f(a y) + V(a y)] = V(y) + β(f) over grid windows by damped
relative value iteration (default) or Howard policy iteration.
"""
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from xylab.core.config import settings
from xylab.core.errors import ConvergenceError, SearchTooLargeError
from xylab.core.logging import logger
from xylab.models.geometry import BasePoint, FiberGrid
from xylab.models.potential import Potential
from xylab.models.results import Subaction, UniquenessReport, WindowStructure
from xylab.services.transfer import window_for


def span(x: np.ndarray) -> float:
    return float(np.max(x) - np.min(x))


def bellman(f_values: np.ndarray, successor: np.ndarray, W: np.ndarray) -> np.ndarray:
    """T W(s) = max_a [f(a s) + W(a s)]."""
    return np.max(f_values + W[successor], axis=1)


def argmax_sets(f_values: np.ndarray, successor: np.ndarray, V: np.ndarray, tie_tol: float) -> Tuple[Tuple[int, ...], ...]:
    q = f_values + V[successor]
    best = np.max(q, axis=1, keepdims=True)
    ties = q >= best - tie_tol
    return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in ties)


def _relative_value_iteration(f_values, successor, tol, max_sweeps, damping):
    W = np.zeros(f_values.shape[0])
    gap = math.inf
    for sweep in range(1, max_sweeps + 1):
        TW = bellman(f_values, successor, W)
        diff = TW - W
        gap = span(diff)
        if gap < tol:
            beta = 0.5 * (np.max(diff) + np.min(diff))
            return W, float(beta), sweep
        W = (1.0 - damping) * W + damping * TW
        W = W - np.max(W)
    raise ConvergenceError(
        f"max-plus value iteration did not settle in {max_sweeps} sweeps (span {gap:.3e}); "
        "the maximizing set may be near-degenerate, refine the grid",
        gap,
    )


def _evaluate_policy(f_values, successor, policy, old_bias):
    """Gain and bias of a single-valued policy on its functional graph."""
    n_states = f_values.shape[0]
    nxt = successor[np.arange(n_states), policy]
    reward = f_values[np.arange(n_states), policy]
    gain = np.full(n_states, np.nan)
    bias = np.full(n_states, np.nan)
    for start in range(n_states):
        if not np.isnan(gain[start]):
            continue
        path = []
        seen = {}
        s = start
        while np.isnan(gain[s]) and s not in seen:
            seen[s] = len(path)
            path.append(s)
            s = nxt[s]
        if np.isnan(gain[s]):
            # new cycle from path[seen[s]:]
            cycle = path[seen[s]:]
            eta = float(np.mean(reward[cycle]))
            ref = min(cycle)
            k = cycle.index(ref)
            order = cycle[k:] + cycle[:k]
            bias[ref] = old_bias[ref]
            gain[ref] = eta
            # bias(next) = bias(s) - reward(s) + eta along the cycle
            for a, b in zip(order[:-1], order[1:]):
                bias[b] = bias[a] - reward[a] + eta
                gain[b] = eta
            path = path[:seen[s]]
        for s in reversed(path):
            gain[s] = gain[nxt[s]]
            bias[s] = reward[s] - gain[s] + bias[nxt[s]]
    return gain, bias


def _policy_iteration(f_values, successor, tol, max_sweeps):
    n_states = f_values.shape[0]
    policy = np.argmax(f_values, axis=1)
    bias = np.zeros(n_states)
    rows = np.arange(n_states)
    for sweep in range(1, max_sweeps + 1):
        gain, bias = _evaluate_policy(f_values, successor, policy, bias)
        next_gain = gain[successor]
        best_gain = np.max(next_gain, axis=1)
        improve = best_gain > gain + tol
        if np.any(improve):
            current = next_gain[rows, policy]
            choice = np.argmax(next_gain, axis=1)
            policy = np.where(improve & (current < best_gain - tol), choice, policy)
            continue
        q = np.where(np.abs(next_gain - gain[:, None]) <= tol, f_values + bias[successor], -np.inf)
        best = np.max(q, axis=1)
        current = q[rows, policy]
        improve = best > current + tol
        if not np.any(improve):
            beta = float(np.max(gain))
            return bias - np.max(bias), beta, sweep
        policy = np.where(improve, np.argmax(q, axis=1), policy)
    raise ConvergenceError(f"policy iteration did not stabilize in {max_sweeps} sweeps", float("nan"))


def solve_maxplus(
    pot: Potential,
    grid: FiberGrid,
    tol: Optional[float] = None,
    max_sweeps: Optional[int] = None,
    method: str = "value",
    damping: Optional[float] = None,
) -> Subaction:
    tol = tol or settings.MAXPLUS_TOL
    max_sweeps = max_sweeps or settings.MAXPLUS_MAX_SWEEPS
    damping = damping or settings.MAXPLUS_DAMPING

    structure = WindowStructure(grid=grid, window=window_for(pot))
    f_values = pot.eval(structure.transition_angles)
    successor = structure.successor

    if method == "value":
        W, beta, sweeps = _relative_value_iteration(f_values, successor, tol, max_sweeps, damping)
    elif method == "policy":
        W, beta, sweeps = _policy_iteration(f_values, successor, tol, max_sweeps)
    else:
        raise ValueError(f"unknown max-plus method {method!r}")

    # node 0 sits at angle 0, so state 0 is the all-zero window
    reference = 0
    V = W - W[reference]
    residual = float(np.max(np.abs(bellman(f_values, successor, V) - V - beta)))
    sub = Subaction(
        potential=pot,
        structure=structure,
        beta_f=beta,
        V=V,
        f_values=f_values,
        calibration_residual=residual,
        argmax_policy=argmax_sets(f_values, successor, V, settings.TIE_TOL),
        reference_state=reference,
        sweeps=sweeps,
        method=method,
    )
    logger.info(
        f"subaction {pot.key} n={grid.n_nodes} ({method}): beta={beta:.12g} "
        f"residual={residual:.2e} sweeps={sweeps}"
    )
    return sub


def periodic_orbit_oracle(
    pot: Potential,
    grid: FiberGrid,
    max_period: int,
    limit: Optional[int] = None,
    chunk: int = 1 << 16,
) -> Tuple[float, BasePoint]:
    """Best mean Birkhoff sum over periodic grid words; a lower bound for β(f)."""
    limit = limit or settings.ORBIT_SEARCH_LIMIT
    n = grid.n_nodes
    if float(n) ** max_period > limit:
        raise SearchTooLargeError(float(n) ** max_period, limit)

    nodes = grid.nodes
    k = pot.arity
    best = -math.inf
    best_word: List[int] = [0]
    for period in range(1, max_period + 1):
        total = n ** period
        offsets = (np.arange(period)[:, None] + np.arange(k)[None, :]) % period
        for start in range(0, total, chunk):
            words = np.stack(
                np.unravel_index(np.arange(start, min(start + chunk, total)), (n,) * period), axis=-1
            )
            means = pot.eval(nodes[words[:, offsets]]).mean(axis=1)
            i = int(np.argmax(means))
            if means[i] > best + 1e-15:
                best = float(means[i])
                best_word = [int(v) for v in words[i]]
    return best, BasePoint(periodic_tail=tuple(nodes[best_word]))


def uniqueness_probe(sub: Subaction, tol: Optional[float] = None) -> UniquenessReport:
    """Recurrent classes of the argmax prepend graph, the grid shadow of the maximizing support.

    Uniqueness is plausible when exactly one class carries cycles and that
    class is a single cycle (one invariant measure).
    """
    tol = settings.TIE_TOL if tol is None else tol
    st = sub.structure
    policy = argmax_sets(sub.f_values, st.successor, sub.V, tol)
    rows = [s for s, letters in enumerate(policy) for _ in letters]
    cols = [int(st.successor[s, j]) for s, letters in enumerate(policy) for j in letters]
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(st.n_states, st.n_states))
    _, labels = connected_components(graph, directed=True, connection="strong")

    self_loop = np.zeros(st.n_states, dtype=bool)
    for r, c in zip(rows, cols):
        if r == c:
            self_loop[r] = True
    classes = []
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        if members.size > 1 or self_loop[members[0]]:
            classes.append([int(m) for m in members])

    unique = False
    if len(classes) == 1:
        members = set(classes[0])
        inner_degree = [sum(1 for j in policy[s] if int(st.successor[s, j]) in members) for s in members]
        unique = all(d == 1 for d in inner_degree)

    support = sorted(s for cls in classes for s in cls)
    angles = st.state_angles[support].tolist() if support else []
    return UniquenessReport(
        recurrent_classes=classes,
        support_states=support,
        support_angles=angles,
        unique=unique,
        verdict="uniqueness plausible" if unique else "degenerate",
    )


def limit_marginal(sub: Subaction, report: UniquenessReport) -> np.ndarray:
    """x_0 marginal of the candidate limit measure: uniform over the recurrent states."""
    st = sub.structure
    masses = np.zeros(st.n_states)
    if report.support_states:
        masses[report.support_states] = 1.0 / len(report.support_states)
    else:
        masses[sub.reference_state] = 1.0
    return st.marginal(masses)
