import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ive, logsumexp

from xylab.core.errors import ConvergenceError, DomainError
from xylab.models import potential
from xylab.models.geometry import ArcSet, BasePoint, FiberGrid
from xylab.services import transfer


def log_i0(c):
    return math.log(ive(0, c)) + c


def test_zero_potential_is_trivial(zero, grid32):
    es = transfer.leading_eigensystem(transfer.build_kernel(zero, 3.0, grid32))
    assert es.log_beta_c == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(es.h, 1.0)
    assert np.allclose(es.mu_marginal, 1.0 / 32)


@pytest.mark.parametrize("c", [1.0, 10.0, 100.0])
def test_cosine_eigenvalue_matches_bessel(cosine, grid128, c):
    es = transfer.leading_eigensystem(transfer.build_kernel(cosine, c, grid128))
    assert es.log_beta_c == pytest.approx(log_i0(c), abs=1e-9)
    assert es.residual < 1e-10


def test_dense_eigen_oracle(xy_pinned):
    grid = FiberGrid(n_nodes=16)
    kernel = transfer.build_kernel(xy_pinned, 2.0, grid)
    es = transfer.leading_eigensystem(kernel)
    eigenvalues = np.linalg.eigvals(kernel.to_dense())
    assert math.exp(es.log_beta_c) == pytest.approx(np.max(eigenvalues.real), rel=1e-10)
    # h and ν are eigenvectors of the dense matrix and its transpose
    dense = kernel.to_dense()
    beta = math.exp(es.log_beta_c)
    assert np.allclose(dense @ es.h, beta * es.h, rtol=1e-9)
    assert np.allclose(dense.T @ es.nu, beta * es.nu, rtol=1e-9)


def test_normalized_kernel_is_stochastic(xy_pinned, grid32):
    es = transfer.leading_eigensystem(transfer.build_kernel(xy_pinned, 5.0, grid32))
    assert np.allclose(logsumexp(es.log_transition, axis=1), 0.0, atol=1e-12)
    assert es.mu.sum() == pytest.approx(1.0)
    assert np.mean(es.h) == pytest.approx(1.0)
    assert es.nu.sum() == pytest.approx(1.0)


def test_kernel_rejects_bad_inputs(cosine, grid32):
    with pytest.raises(DomainError):
        transfer.build_kernel(cosine, math.inf, grid32)
    four = potential.fourier([potential.FourierTerm(freqs=(1, 1, 1, 1), cos=1.0)])
    with pytest.raises(DomainError):
        transfer.build_kernel(four, 1.0, grid32)


def test_fourier_resolution_warning(grid32, caplog):
    sharp = potential.fourier([potential.FourierTerm(freqs=(20,), cos=1.0)])
    transfer.build_kernel(sharp, 1.0, grid32)
    assert "cannot resolve frequency" in caplog.text


def test_non_convergence_raises(xy_pinned, grid32):
    kernel = transfer.build_kernel(xy_pinned, 5.0, grid32)
    with pytest.raises(ConvergenceError) as err:
        transfer.leading_eigensystem(kernel, tol=1e-12, max_iter=2)
    assert err.value.exit_code == 3


def test_cylinder_of_full_space_is_one(xy_pinned, grid32):
    es = transfer.leading_eigensystem(transfer.build_kernel(xy_pinned, 5.0, grid32))
    assert transfer.gibbs_cylinder(es, ArcSet.full()) == pytest.approx(1.0)


def test_cosine_cylinders_are_products(cosine, grid128):
    es = transfer.leading_eigensystem(transfer.build_kernel(cosine, 5.0, grid128))
    nodes = grid128.nodes
    weights = np.exp(5.0 * np.cos(nodes))
    weights /= weights.sum()
    a, b = (2.0, 4.0), (-1.0, 0.5)
    in_a = ArcSet.from_arcs({0: [a]}).mask(0, nodes)
    in_b = ArcSet.from_arcs({0: [b]}).mask(0, nodes)
    single = transfer.gibbs_cylinder(es, ArcSet.from_arcs({0: [a]}))
    assert single == pytest.approx(weights[in_a].sum(), rel=1e-10)
    pair = transfer.gibbs_cylinder(es, ArcSet.from_arcs({0: [a], 1: [b]}))
    assert pair == pytest.approx(weights[in_a].sum() * weights[in_b].sum(), rel=1e-10)


def test_cylinder_marginals_are_consistent(xy_pinned, grid32):
    es = transfer.leading_eigensystem(transfer.build_kernel(xy_pinned, 3.0, grid32))
    arc = (1.0, 2.5)
    first = transfer.gibbs_cylinder(es, ArcSet.from_arcs({0: [arc]}))
    # shift invariance: the same arc on coordinate 2 has the same mass
    third = transfer.gibbs_cylinder(es, ArcSet.from_arcs({2: [arc]}))
    assert third == pytest.approx(first, rel=1e-9)


def test_cylinder_depth_cap(cosine, grid32):
    es = transfer.leading_eigensystem(transfer.build_kernel(cosine, 1.0, grid32))
    deep = ArcSet.from_arcs({9: [(0.0, 1.0)]})
    with pytest.raises(DomainError):
        transfer.gibbs_cylinder(es, deep)


def test_operator_on_indicator(cosine, grid128):
    es = transfer.leading_eigensystem(transfer.build_kernel(cosine, 5.0, grid128))
    x = BasePoint.constant(1.0)
    assert transfer.apply_Ln_indicator(es, x, ArcSet.full(), 3) == pytest.approx(0.0, abs=1e-12)
    arc = ArcSet.from_arcs({0: [(2.0, 4.0)]})
    with pytest.raises(DomainError):
        transfer.apply_Ln_indicator(es, x, ArcSet.from_arcs({1: [(2.0, 4.0)]}), 1)
    value = transfer.apply_Ln_indicator(es, x, arc, 4)
    assert value == pytest.approx(transfer.gibbs_cylinder_log(es, arc), abs=1e-10)


def test_log_beta_derivative_is_f_mean(cosine, grid128):
    c, dc = 3.0, 0.1
    lo = transfer.leading_eigensystem(transfer.build_kernel(cosine, c - dc / 2, grid128))
    hi = transfer.leading_eigensystem(transfer.build_kernel(cosine, c + dc / 2, grid128))
    mid = transfer.leading_eigensystem(transfer.build_kernel(cosine, c, grid128))
    assert (hi.log_beta_c - lo.log_beta_c) / dc == pytest.approx(transfer.f_mean(mid), abs=0.01)
    assert transfer.f_mean(mid) == pytest.approx(ive(1, c) / ive(0, c), abs=1e-10)


def test_cylinder_approaches_continuum_mass(cosine):
    grid = FiberGrid(n_nodes=512)
    es = transfer.leading_eigensystem(transfer.build_kernel(cosine, 2.0, grid))
    density, _ = quad(lambda a: math.exp(2.0 * math.cos(a)), 1.0, 2.5)
    exact = density / (2 * math.pi * math.exp(log_i0(2.0)))
    assert transfer.gibbs_cylinder(es, ArcSet.from_arcs({0: [(1.0, 2.5)]})) == pytest.approx(exact, abs=5e-3)


def test_shifting_the_potential_only_moves_beta(xy_pinned, grid32):
    c, kappa = 5.0, 0.7
    base = transfer.leading_eigensystem(transfer.build_kernel(xy_pinned, c, grid32))
    moved = transfer.leading_eigensystem(transfer.build_kernel(xy_pinned.shifted(kappa), c, grid32))
    assert moved.log_beta_c - base.log_beta_c == pytest.approx(c * kappa, abs=1e-9)
    assert np.max(np.abs(moved.log_h - base.log_h)) < 1e-9
    assert np.max(np.abs(moved.g_log - base.g_log)) < 1e-9
    assert np.allclose(moved.mu, base.mu, rtol=1e-9)


def test_rescaled_eigenfunction_gives_the_same_measure(xy_pinned, grid32):
    kernel = transfer.build_kernel(xy_pinned, 4.0, grid32)
    es = transfer.leading_eigensystem(kernel)
    scaled = transfer.assemble_eigensystem(kernel, es.log_beta_c, es.log_h + 3.0, es.log_nu - 1.5)
    assert np.allclose(scaled.mu, es.mu, rtol=1e-12)
    assert np.allclose(scaled.g_log, es.g_log, atol=1e-12)
    assert scaled.residual == pytest.approx(es.residual, abs=1e-12)


@pytest.mark.parametrize("arcs", [
    {0: [(0.3, 2.0)], 1: [(1.0, 4.0)], 2: [(5.0, 7.5)]},
    {0: [(0.3, 2.0), (3.0, 3.5)], 2: [(-1.0, 1.0)]},
    {1: [(2.0, 5.0)]},
])
def test_cylinder_matches_dense_sum(xy_pair, arcs):
    grid = FiberGrid(n_nodes=16)
    es = transfer.leading_eigensystem(transfer.build_kernel(xy_pair, 2.0, grid))
    boxes = ArcSet.from_arcs(arcs)
    inside = [boxes.mask(j, grid.nodes).astype(float) for j in range(3)]
    P = np.exp(es.log_transition)
    # x2 from the stationary marginal, then x1 and x0 prepended
    dense = np.einsum("k,k,kj,j,ji,i->", es.mu_marginal, inside[2], P, inside[1], P, inside[0])
    assert transfer.gibbs_cylinder(es, boxes) == pytest.approx(dense, rel=1e-8)


@pytest.mark.parametrize("name", ["cosine", "xy_pinned"])
@pytest.mark.parametrize("c", [1.0, 10.0, 50.0, 100.0, 200.0])
def test_iterated_normalized_operator_fixes_one(request, grid64, name, c):
    es = transfer.leading_eigensystem(transfer.build_kernel(request.getfixturevalue(name), c, grid64))
    assert np.max(np.abs(logsumexp(es.log_transition, axis=1))) < 1e-10
    successor = es.structure.successor
    log_v = np.zeros(es.structure.n_states)
    for _ in range(20):
        log_v = logsumexp(es.log_transition + log_v[successor], axis=1)
        assert np.max(np.abs(log_v)) < 1e-9
