import math

import numpy as np
import pytest

from conftest import CAP_UNIT_BALL, CAP_UNIT_CUBE, CUBE_SELF_ENERGY, G_DIAG_D3
from hardwall.capacity import (DISCRETE_CALIBRATION, CapacityEstimate,
                               capacity_discrete, capacity_dual, capacity_primal,
                               _cell_kernel_integral, _dual_once, _inner_cells)
from hardwall.green import asymptotic_prefactor
from hardwall.lattice import ShapeSpec

R3 = asymptotic_prefactor(3)
BALL = ShapeSpec(kind="ball", radius=1.0)
CUBE = ShapeSpec(kind="box", sides=(1.0, 1.0, 1.0))


def test_cell_kernel_total_is_cube_self_energy():
    # summing the cell-pair kernel over a full decomposition of the unit
    # cube reproduces the Coulomb self-energy int int |u-v|^{-1} du dv
    kappa = 0.25
    cells = _inner_cells(CUBE, kappa, 3)
    assert cells.shape[0] == 4**3  # the decomposition covers the whole cube
    diffs = (cells[:, None, :] - cells[None, :, :]).reshape(-1, 3)
    total = sum(_cell_kernel_integral(tuple(np.sort(np.abs(m)).astype(int)), 3)
                for m in diffs) * kappa**5
    assert total == pytest.approx(CUBE_SELF_ENERGY, rel=2e-4)


def test_cell_kernel_far_field_is_point_value():
    val = _cell_kernel_integral((0, 0, 9), 3)
    assert val == pytest.approx(1.0 / 9.0, rel=1e-12)


def test_dual_ball_against_closed_form():
    est = capacity_dual(BALL, mesh=0.25, R_d=R3, d=3, refinements=1)
    assert est.method == "dual"
    assert est.value == pytest.approx(CAP_UNIT_BALL, rel=0.03)
    # per-mesh values increase toward the optimum as the mesh refines
    vals = [v for _, v in est.refinement_history]
    assert vals == sorted(vals)


def test_dual_cube_against_literature_value():
    est = capacity_dual(CUBE, mesh=0.25, R_d=R3, d=3, refinements=1)
    assert est.value == pytest.approx(CAP_UNIT_CUBE, rel=0.03)


def test_dual_scaling_exact():
    # cap(2D) = 2^{d-2} cap(D) holds exactly when the mesh scales with the
    # shape (identical cell decomposition up to dilation)
    small = capacity_dual(BALL, mesh=0.25, R_d=R3, d=3, refinements=0)
    big = capacity_dual(ShapeSpec(kind="ball", radius=2.0), mesh=0.5, R_d=R3,
                        d=3, refinements=0)
    assert big.value == pytest.approx(2.0 * small.value, rel=1e-9)


def test_dual_translation_invariance():
    shifted = ShapeSpec(kind="ball", center=(0.3, -0.1, 0.2), radius=1.0)
    a = capacity_dual(BALL, mesh=0.25, R_d=R3, d=3, refinements=1)
    b = capacity_dual(shifted, mesh=0.25, R_d=R3, d=3, refinements=1)
    assert b.value == pytest.approx(a.value, rel=0.03)


def test_primal_ball_against_closed_form():
    # one refinement keeps this quick; the acceptance run uses two and
    # lands within 1%
    est = capacity_primal(BALL, box_radius=8.0, h=0.5, d=3, refinements=1)
    assert est.value == pytest.approx(CAP_UNIT_BALL, rel=0.05)


def test_primal_margin_guard():
    with pytest.raises(ValueError):
        capacity_primal(BALL, box_radius=2.0, h=0.5, d=3, refinements=0)


def test_primal_mesh_divisibility_guard():
    with pytest.raises(ValueError):
        capacity_primal(BALL, box_radius=5.0, h=0.3, d=3, refinements=0)


def test_discrete_single_site_is_no_return_probability():
    # one lattice site: capacity estimate = P(walk never returns to 0)
    # = 1/G(0,0), via the last-exit decomposition
    point = ShapeSpec(kind="ball", radius=0.5)
    est = capacity_discrete(point, N=1, d=3, walkers=300_000, seed=3)
    target = 1.0 / G_DIAG_D3
    slack = 4 * est.extras["std_error"] + abs(est.extras["truncation_correction_bound"])
    assert abs(est.value - target) < max(slack, 0.004)


def test_discrete_truncation_correction_sign():
    point = ShapeSpec(kind="ball", radius=0.5)
    est = capacity_discrete(point, N=1, d=3, walkers=50_000, seed=3)
    # raw escape counts include walkers that would still have returned
    assert est.extras["uncorrected_value"] > est.value


def test_discrete_deterministic():
    est1 = capacity_discrete(BALL, N=4, d=3, walkers=20_000, seed=12)
    est2 = capacity_discrete(BALL, N=4, d=3, walkers=20_000, seed=12)
    assert est1.value == est2.value


def test_discrete_calibration_regeneration():
    """DISCRETE_CALIBRATION regeneration recipe.

    The lattice sum of never-return probabilities already carries the right
    normalization: by the last-exit decomposition, sum_y G(x, y) e(y) = 1
    with G ~ R_d |x-y|^{2-d}, so N^{2-d} * sum e matches the continuum
    capacity in the R_d-kernel convention with constant exactly 1.  This
    test re-measures the constant on the unit ball against the dual route;
    a material drift means the walker kernel changed and the constant must
    be re-fixed here.
    """
    assert DISCRETE_CALIBRATION == 1.0
    dual = capacity_dual(BALL, mesh=0.25, R_d=R3, d=3, refinements=1)
    disc = capacity_discrete(BALL, N=8, d=3, walkers=400_000, seed=0,
                             calibration=1.0)
    measured = dual.value / disc.value * DISCRETE_CALIBRATION
    assert measured == pytest.approx(1.0, abs=0.12)


def test_estimate_json():
    est = capacity_dual(BALL, mesh=0.5, R_d=R3, d=3, refinements=0)
    j = est.to_json()
    assert set(j) == {"shape", "method", "value", "mesh", "refinement_history", "extras"}
    assert isinstance(est, CapacityEstimate)


def test_dual_once_positive():
    value, n = _dual_once(BALL, 0.5, R3, 3)
    assert value > 0 and n > 0
