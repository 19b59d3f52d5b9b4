import math

import numpy as np
import pytest
from scipy.special import ndtr

from conftest import box_domain
from hardwall.green import green_finite
from hardwall.rare_event import (ProbEstimate, direct_mc_prob, importance_log_prob,
                                 taper_profile)
from hardwall.sampler import BoundaryCondition
from hardwall.wall import WallSpec, sample_wall

BC = BoundaryCondition()


@pytest.fixture(scope="module")
def one_site():
    dom = box_domain(1)
    return dom, green_finite(dom)


def test_direct_one_site_matches_normal_tail(one_site):
    dom, gt = one_site
    for i, a in enumerate((0.0, 1.0, 2.0)):
        wall = sample_wall(WallSpec(family="flat", c=a), dom)
        est = direct_mc_prob(dom, wall, BC, samples=200_000, seed=i, green_table=gt)
        exact = math.log(1.0 - ndtr(a))
        assert abs(est.log_prob - exact) < 4 * est.log_se


def test_importance_one_site_matches_normal_tail(one_site):
    dom, gt = one_site
    for i, a in enumerate((0.0, 1.0, 2.0, 4.0)):
        wall = sample_wall(WallSpec(family="flat", c=a), dom)
        psi = np.array([max(a, 0.0)])
        est = importance_log_prob(dom, wall, BC, psi, samples=50_000, seed=10 + i,
                                  green_table=gt)
        exact = math.log(1.0 - ndtr(a))
        assert abs(est.log_prob - exact) < 4 * est.log_se
        assert est.ess > 0.05 * est.n_samples


def test_importance_reaches_deep_tails(one_site):
    # a = 6: P ~ 1e-9, far beyond direct MC reach at this sample size
    dom, gt = one_site
    wall = sample_wall(WallSpec(family="flat", c=6.0), dom)
    est = importance_log_prob(dom, wall, BC, np.array([6.0]), samples=50_000,
                              seed=3, green_table=gt)
    exact = math.log(1.0 - ndtr(6.0))
    assert abs(est.log_prob - exact) < 4 * est.log_se
    direct = direct_mc_prob(dom, wall, BC, samples=50_000, seed=3, green_table=gt)
    assert direct.hits == 0 and "zero_hits_one_sided_bound" in direct.flags
    assert direct.log_prob == pytest.approx(math.log(3.0 / 50_000))


def test_weight_normalization(one_site):
    # with the wall far below the field, every draw hits: the estimate is
    # the mean importance weight, whose expectation is exactly 1
    dom, gt = one_site
    wall = sample_wall(WallSpec(family="flat", c=-30.0), dom)
    est = importance_log_prob(dom, wall, BC, np.array([1.0]), samples=50_000,
                              seed=7, green_table=gt)
    assert est.hits == est.n_samples
    assert abs(est.log_prob) < 4 * est.log_se


def test_direct_and_importance_agree_on_box(box3, green3):
    wall = sample_wall(WallSpec(family="flat", c=0.5), box3)
    direct = direct_mc_prob(box3, wall, BC, samples=200_000, seed=1, green_table=green3)
    psi = taper_profile(box3, box3, 1.5)
    imp = importance_log_prob(box3, wall, BC, psi, samples=50_000, seed=2,
                              green_table=green3)
    joint = math.hypot(direct.log_se, imp.log_se)
    assert abs(direct.log_prob - imp.log_prob) < 4 * joint


def test_estimates_deterministic(box3, green3):
    wall = sample_wall(WallSpec(family="flat", c=0.0), box3)
    psi = taper_profile(box3, box3, 1.0)
    a = importance_log_prob(box3, wall, BC, psi, samples=5000, seed=9, green_table=green3)
    b = importance_log_prob(box3, wall, BC, psi, samples=5000, seed=9, green_table=green3)
    assert a.log_prob == b.log_prob and a.psi_hash == b.psi_hash


def test_taper_profile_geometry(box5):
    psi = taper_profile(box5, box5, height=2.0)
    assert psi.shape == (box5.n_sites,)
    assert np.all(psi == 2.0)  # core covers the whole domain
    # taper around a strict core: height at the center, decreasing outward
    core = box_domain(1, padding=box5.padding)
    # embed the single core site into box5's coordinates
    psi2 = taper_profile(box5, box_domain(1, padding=2), height=2.0, ramp=2)
    center = box5.site_index(np.zeros(3, dtype=np.int64))
    assert psi2[center] == pytest.approx(2.0)
    corner = box5.site_index(np.array([2, 2, 2]))
    assert psi2[corner] < psi2[center]
    assert np.all(psi2 >= 0.0)
    with pytest.raises(ValueError):
        taper_profile(box5, box5, 1.0, ramp=0)


def test_input_validation(box3, green3):
    wall = sample_wall(WallSpec(family="flat", c=0.0), box3)
    with pytest.raises(ValueError):
        importance_log_prob(box3, wall, BC, np.zeros(5), samples=100, green_table=green3, seed=0)
    with pytest.raises(ValueError):
        importance_log_prob(box3, wall, BC, np.zeros(box3.n_sites), samples=1,
                            green_table=green3, seed=0)
    with pytest.raises(ValueError):
        direct_mc_prob(box3, wall, BC, samples=0, seed=0, green_table=green3)


def test_prob_estimate_json(one_site):
    dom, gt = one_site
    wall = sample_wall(WallSpec(family="flat", c=0.0), dom)
    est = direct_mc_prob(dom, wall, BC, samples=1000, seed=0, green_table=gt)
    j = est.to_json()
    assert set(j) == {"log_prob", "log_se", "method", "n_samples", "ess",
                      "hits", "flags", "psi_hash"}
    assert isinstance(est, ProbEstimate)
