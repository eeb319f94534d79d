import math

import numpy as np
import pytest

import hetdr

CSV = "unit,time,y,z_x\n" + "".join(
    f"a,{t},{(t * 37) % 11}.5,1.0\nb,{t},{(t * 53) % 13}.25,2.0\n" for t in range(1, 13)
)


def test_parse_and_fit():
    panel = hetdr.parse_panel(CSV)
    assert panel.n_units == 2
    model = hetdr.fit(panel, grid_levels=[0.3, 0.5, 0.7], debias="none")
    assert model.n_units == 2
    assert len(model.grid) == 3
    assert model.beta(0, 1).shape == (2,)


def test_errors_are_translated():
    with pytest.raises(hetdr.HetdrError):
        hetdr.parse_panel(CSV + "a,3,1.0,1.0\n")


def test_simulated_projection_and_band():
    panel = hetdr.simulate_panel(60, 30, 7)
    model = hetdr.fit(panel, grid_points=[1.9, 2.0, 2.1], link="probit", lags=1, constant=False,
                      covariates=False)
    thetas = hetdr.project(model)
    assert len(thetas) == 3
    band = hetdr.theta_band(model, np.array([1.0]), draws=40, seed=3)
    assert np.all(np.asarray(band["lower"]) <= np.asarray(band["upper"]))


def test_quantile_operators():
    assert hetdr.rearranged_inverse([1, 2, 3], [0.3, 0.2, 0.8], 0.25) == 2
    qe = hetdr.quantile_effect([1, 2, 3, 4], [0.1, 0.4, 0.7, 1.0], [0.1, 0.4, 0.7, 1.0], [0.5])
    assert qe[0] == 0.0


def test_ergodic_and_truth():
    pi = hetdr.ergodic(np.array([[0.8, 0.4], [0.2, 0.6]]))
    assert np.allclose(pi, [2 / 3, 1 / 3])
    assert hetdr.theta_curve(3.0) == pytest.approx(3.0)
    qe = hetdr.true_quantile_effect([0.5])
    assert abs(qe[0]) < 1e-6


def test_toy_rows():
    rows = hetdr.toy_experiment(100, 10, 5, 10, 1)
    assert len(rows) == 11
    assert math.isclose(rows[0]["true_sd"], math.sqrt(0.001), rel_tol=1e-9)
