import numpy as np
import pytest

from hardwall.bounds import RegimeSpec
from hardwall.lattice import ShapeSpec, build_domain
from hardwall.observables import (Interval, aggregate, batch_se, block_mean,
                                  empirical_measure, eps_count, extrema,
                                  harmonic_average)
from hardwall.sampler import Field
from hardwall.walk import Geometry


def _field(N=6):
    dom = build_domain(ShapeSpec(kind="ball", radius=1.0), N, 3)
    vals = dom.sites.sum(axis=1).astype(float)
    return Field(domain=dom, values=vals)


def test_interval_half_open():
    i = Interval(a=0.0, b=1.0)
    v = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    assert i.indicator(v).tolist() == [False, False, True, True, False]
    assert Interval().indicator(v).all()
    assert Interval(a=0.0).indicator(v).tolist() == [False, False, True, True, True]


def test_empirical_measure_counts():
    f = _field()
    A = np.arange(f.domain.n_sites)
    target = np.mean((f.values > 0) & (f.values <= 2))
    assert empirical_measure(f, A, Interval(a=0.0, b=2.0)) == pytest.approx(target)


def test_block_mean_matches_direct_average():
    f = _field(N=6)
    block = ShapeSpec(kind="ball", radius=0.5)
    sub = build_domain(block, 6, 3, padding=1)
    direct = float(np.mean(f.values[f.domain.site_indices(sub.sites)]))
    assert block_mean(f, block) == pytest.approx(direct)


def test_block_mean_requires_containment():
    f = _field(N=4)
    with pytest.raises(ValueError):
        block_mean(f, ShapeSpec(kind="ball", radius=3.0))


def test_eps_count_bounds():
    f = _field()
    regime = RegimeSpec(regime="sub_gaussian", G=1.5)
    frac = eps_count(f, N=8, eps=0.3, regime=regime)
    assert 0.0 <= frac <= 1.0
    # shrinking eps can only increase the count
    assert eps_count(f, N=8, eps=0.1, regime=regime) >= frac
    with pytest.raises(ValueError):
        eps_count(f, N=8, eps=0.0, regime=regime)


def test_extrema():
    f = _field()
    lo, hi = extrema(f)
    assert lo == f.values.min() and hi == f.values.max()


def test_harmonic_average_of_harmonic_function_is_exact():
    # the coordinate function x0 is discrete harmonic: its hitting-measure
    # average over any shell around y equals its value at y
    dom = build_domain(ShapeSpec(kind="ball", radius=1.0), 10, 3)
    f = Field(domain=dom, values=dom.sites[:, 0].astype(float))
    geom = Geometry(kind="sphere", size=3, d=3)
    for y in ([0, 0, 0], [2, -1, 3]):
        got = harmonic_average(f, np.array(y, dtype=np.int64), geom)
        assert got == pytest.approx(float(y[0]), abs=1e-10)


def test_batch_se_iid_vs_exact():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20_000)
    se = batch_se(x)
    assert se == pytest.approx(1.0 / np.sqrt(x.size), rel=0.5)
    assert np.isnan(batch_se(np.array([1.0])))


def test_batch_se_detects_correlation():
    rng = np.random.default_rng(1)
    z = rng.standard_normal(20_000)
    ar = np.empty_like(z)  # AR(1) with rho = 0.9: tau-inflated error
    ar[0] = z[0]
    for i in range(1, z.size):
        ar[i] = 0.9 * ar[i - 1] + z[i]
    naive = ar.std() / np.sqrt(ar.size)
    assert batch_se(ar) > 2.0 * naive


def test_aggregate_report():
    rep = aggregate({"a": np.arange(10.0), "b": np.ones(10)})
    assert rep.n_samples == 10
    assert rep.values["a"] == pytest.approx(4.5)
    assert rep.std_errors["b"] == pytest.approx(0.0, abs=1e-15)
    assert set(rep.to_json()) == {"n_samples", "values", "std_errors"}
