import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import ive

from xylab.core.errors import DomainError
from xylab.models import potential
from xylab.models.geometry import TWO_PI, ArcSet, BasePoint, FiberGrid
from xylab.models.potential import FourierTerm
from xylab.models.results import ChainConfig, FixedState
from xylab.services import transfer
from xylab.services.sampler import (
    birkhoff_check,
    birkhoff_ladder,
    box_frequency,
    empirical_vs_marginal,
    orbit_measure_check,
    sample_chain,
    stationarity_defect,
)


def eigensystem(pot, c, grid):
    return transfer.leading_eigensystem(transfer.build_kernel(pot, c, grid))


@pytest.fixture(scope="module")
def cosine_c10(cosine, grid128):
    return eigensystem(cosine, 10.0, grid128)


def test_zero_potential_samples_uniform_angles(zero, grid32):
    chain = sample_chain(eigensystem(zero, 1.0, grid32), ChainConfig(length=20_000, burn_in=100, seed=3))
    result = stats.kstest(chain.angles / TWO_PI, "uniform")
    assert result.statistic < 1.95 / math.sqrt(chain.length)
    assert not chain.degenerate_cdf


def test_cosine_birkhoff_average(cosine):
    grid = FiberGrid(n_nodes=256)
    es = eigensystem(cosine, 5.0, grid)
    chain = sample_chain(es, ChainConfig(length=100_000, burn_in=1_000))
    report = birkhoff_check(chain, cosine, es)
    assert report.expected == pytest.approx(ive(1, 5.0) / ive(0, 5.0), abs=1e-10)
    assert abs(report.average - report.expected) < 4 * report.standard_error
    assert report.standard_error < 0.01


def test_zero_birkhoff_is_exact(zero, grid32):
    es = eigensystem(zero, 2.0, grid32)
    report = birkhoff_check(sample_chain(es, ChainConfig(length=20_000, burn_in=100)), zero, es)
    assert report.average == 0.0
    assert report.within_3_sigma


def test_sampling_is_deterministic_in_seed(cosine_c10):
    cfg = ChainConfig(length=5_000, burn_in=100, seed=11)
    first = sample_chain(cosine_c10, cfg)
    second = sample_chain(cosine_c10, cfg)
    assert np.array_equal(first.node_indices, second.node_indices)
    assert np.array_equal(first.angles, second.angles)
    other = sample_chain(cosine_c10, cfg.model_copy(update={"seed": 12}))
    assert not np.array_equal(first.node_indices, other.node_indices)


def test_chain_drops_burn_in(cosine_c10):
    chain = sample_chain(cosine_c10, ChainConfig(length=3_000, burn_in=500))
    assert chain.length == 2_500
    assert chain.angles.shape == (2_500,)
    assert np.all((chain.angles >= 0.0) & (chain.angles < TWO_PI))


def test_start_state_is_forgotten(cosine_c10):
    stationary = sample_chain(cosine_c10, ChainConfig(length=50_000, burn_in=1_000))
    fixed = sample_chain(cosine_c10, ChainConfig(length=50_000, burn_in=1_000, start=FixedState(angle=math.pi)))
    assert empirical_vs_marginal(stationary, cosine_c10).w1_full < 0.02
    assert empirical_vs_marginal(fixed, cosine_c10).w1_full < 0.02


def test_marginal_w1_is_small(cosine_c10):
    chain = sample_chain(cosine_c10, ChainConfig())
    assert empirical_vs_marginal(chain, cosine_c10).w1_full < 0.01


def test_w1_shrinks_like_root_n(zero, grid32):
    es = eigensystem(zero, 1.0, grid32)
    reports = [
        empirical_vs_marginal(sample_chain(es, ChainConfig(length=10_000, burn_in=0, seed=seed)), es)
        for seed in range(40)
    ]
    quarter = np.mean([r.w1_quarter for r in reports])
    full = np.mean([r.w1_full for r in reports])
    assert 1.4 <= quarter / full <= 2.8


def test_stationarity_defect(xy_pinned, grid64):
    assert stationarity_defect(eigensystem(xy_pinned, 5.0, grid64)) < 1e-10


def test_box_frequencies_match_cylinders():
    chiral = potential.fourier([
        FourierTerm(freqs=(1, -1), cos=1.0, sin=0.7),
        FourierTerm(freqs=(1, 0), cos=0.5),
    ])
    grid = FiberGrid(n_nodes=32)
    es = eigensystem(chiral, 2.0, grid)
    chain = sample_chain(es, ChainConfig(length=200_000, burn_in=1_000, seed=5))
    rng = np.random.default_rng(17)
    for _ in range(20):
        starts = rng.uniform(0.0, TWO_PI, size=2)
        lengths = rng.uniform(1.0, 3.0, size=2)
        boxes = ArcSet.from_arcs({j: [(starts[j], starts[j] + lengths[j])] for j in range(2)})
        freq, se = box_frequency(chain, boxes, grid)
        assert abs(freq - transfer.gibbs_cylinder(es, boxes)) < 4 * se + 1e-3


def test_birkhoff_ladder_climbs(cosine, grid128, cosine_sub, memory_cache):
    report = birkhoff_ladder(
        cosine, grid128, [5.0, 20.0, 80.0], ChainConfig(length=20_000, burn_in=1_000), sub=cosine_sub, cache=memory_cache
    )
    assert report.increasing
    assert report.beta_f == pytest.approx(1.0)
    assert report.averages[-1] < 1.0


def test_orbit_measures_approach_the_maximizing_marginal(cosine_sub):
    point = BasePoint(head=(math.pi, 2.0, 1.0), periodic_tail=(0.0,))
    report = orbit_measure_check(point, cosine_sub, [5, 10, 50, 100])
    assert report.decreasing
    assert report.w1[-1] == pytest.approx((math.pi + 3.0) / 100, abs=1e-3)


def test_sampler_needs_single_node_states():
    three_site = potential.fourier([FourierTerm(freqs=(1, 0, -1), cos=1.0)])
    es = eigensystem(three_site, 1.0, FiberGrid(n_nodes=8))
    with pytest.raises(DomainError):
        sample_chain(es, ChainConfig(length=100, burn_in=10))


def test_birkhoff_needs_long_chain(cosine_c10, cosine):
    chain = sample_chain(cosine_c10, ChainConfig(length=5_000, burn_in=1_000))
    with pytest.raises(DomainError):
        birkhoff_check(chain, cosine, cosine_c10)
