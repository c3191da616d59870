import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from mmcsim import AverageState, FullState, InvalidInputError, SwitchCommand
from mmcsim.model import (TRANSFORM, arm_voltages, average_model_derivative,
                          current_derivative, decoupled_dynamics, full_model_derivative,
                          inverse_transform, level_voltages, mean_voltage_dynamics,
                          power_terms, squared_voltage_dynamics, stored_energy,
                          sum_diff_transform, transformed_matrices)
from mmcsim.params import ConverterParams, table1_params, table2_params

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_arm_voltages_no_insertion(p1):
    cmd = SwitchCommand.bypass_all(3)
    assert arm_voltages(p1, cmd, np.full(6, 110.0)) == (250.0, -250.0)


def test_arm_voltages_partial(p1):
    cmd = SwitchCommand([1, 1, 0, 1, 0, 0])
    assert arm_voltages(p1, cmd, np.full(6, 110.0)) == (30.0, -140.0)


def test_full_insertion_cancels_rail(p2):
    cmd = SwitchCommand.from_arms([1] * 8, [0] * 8)
    V1, _ = arm_voltages(p2, cmd, np.full(16, 31.25))
    assert V1 == 0.0


def test_arm_voltages_dimension_mismatch(p1):
    with pytest.raises(InvalidInputError):
        arm_voltages(p1, SwitchCommand.bypass_all(3), np.ones(5))
    with pytest.raises(InvalidInputError):
        arm_voltages(p1, SwitchCommand.bypass_all(2), np.ones(6))


def test_equilibrium_derivatives_vanish():
    p = table1_params(Vdc=0.0)
    dvc, dI1, dI2 = full_model_derivative(p, FullState.uniform(3, 110.0),
                                          SwitchCommand.bypass_all(3), 0.0)
    assert not dvc.any() and dI1 == 0 and dI2 == 0


def test_capacitor_rows(p1):
    cmd = SwitchCommand([1, 0, 0, 0, 0, 0])
    dvc, _, _ = full_model_derivative(p1, FullState.uniform(3, 110.0, I1=1.0), cmd, 0.0)
    np.testing.assert_allclose(dvc, [1000, 0, 0, 0, 0, 0])


def test_current_rows_against_linear_solve(p1):
    # independent route: solve L_L x = rhs instead of using the cached inverse
    _, dI1, dI2 = full_model_derivative(p1, FullState.uniform(3, 110.0),
                                        SwitchCommand.bypass_all(3), 0.0)
    expected = np.linalg.solve(np.array([[0.06, 0.05], [0.05, 0.06]]), [250.0, -250.0])
    np.testing.assert_allclose([dI1, dI2], expected, rtol=1e-12)
    assert (dI1, dI2) == pytest.approx((25000.0, -25000.0), rel=1e-12)


def test_average_model_examples():
    p = ConverterParams(n=3)
    d = average_model_derivative(p, AverageState(110, 110, 1.0, 0.0), 2, 0, 0.0)
    assert d[0] == pytest.approx(666.6667, rel=1e-6)
    d = average_model_derivative(p, AverageState(110, 110, 1.0, 2.0), 0, 0, 0.0)
    assert d[0] == 0 and d[1] == 0


def test_average_model_table2_levels(p2):
    assert level_voltages(p2, 4, 4, 31.25, 31.25) == (125.0, -125.0)
    d = average_model_derivative(p2, AverageState(31.25, 31.25), 4, 4, 0.0)
    expected = np.linalg.solve(p2.inductance_matrix, [125.0, -125.0])
    np.testing.assert_allclose(d, [0, 0, *expected], rtol=1e-12)
    with pytest.raises(InvalidInputError):
        level_voltages(p2, 9, 0, 1, 1)


def test_transform_examples():
    assert sum_diff_transform(3, 1) == (4, 2)
    assert sum_diff_transform(0, 0) == (0, 0)
    assert inverse_transform(4, 2) == (3, 1)


@given(finite, finite)
def test_transform_round_trip(a, b):
    Is, Id = sum_diff_transform(a, b)
    x, y = inverse_transform(Is, Id)
    assert x == pytest.approx(a, abs=1e-9) and y == pytest.approx(b, abs=1e-9)


def test_decoupled_examples(p2):
    assert decoupled_dynamics(p2, 0.0, 0.0, 20.0, 0.0, 10.0)[0] == 0.0
    assert decoupled_dynamics(p2, 0.0, 10.0, 0.0, 1.0, 0.0)[1] == pytest.approx(0.0, abs=1e-12)
    dIs, _ = decoupled_dynamics(p2, 1.5, 0.0, 0.0, 0.0, 10.0)
    assert dIs == pytest.approx((-38.1 * 1.5 - 20) / 0.11)
    assert dIs == pytest.approx(-701.36, abs=0.01)


def test_decoupled_matches_finite_difference_of_step(p2):
    # Is=1.5 split evenly, Vs=0 means V1=-V2; Va=10 held over a tiny step
    I1 = I2 = 0.75
    V1, V2, Va, h = 50.0, -50.0, 10.0, 1e-9
    d1, d2 = current_derivative(p2, I1, I2, V1, V2, Va)
    fd = ((I1 + h * d1) + (I2 + h * d2) - 1.5) / h
    dIs, _ = decoupled_dynamics(p2, 1.5, 0.0, V1 + V2, V1 - V2, Va)
    assert fd == pytest.approx(dIs, rel=1e-6)


def test_congruent_matrices_are_diagonal(p2):
    Lw, Aw = transformed_matrices(p2)
    assert Lw[0, 1] == 0 and Lw[1, 0] == 0
    assert Aw[0, 1] == 0 and Aw[1, 0] == 0
    np.testing.assert_allclose(np.diag(Lw), [p2.L_T / 2, p2.L / 2], rtol=1e-15)
    np.testing.assert_allclose(np.diag(Aw), [-p2.R_T / 2, -p2.R / 2], rtol=1e-12)


def test_transform_matrix_is_half_hadamard():
    np.testing.assert_array_equal(TRANSFORM, 0.5 * np.array([[1, 1], [1, -1]]))


def test_power_term_examples(p2):
    assert power_terms(p2, 0.0, 0.0, 0.0, 5.0) == (0.0, 0.0)
    (d1, d2), (P1, P2) = squared_voltage_dynamics(p2, 30, 30, 0.0, 1.0, 0.0, 0.0)
    assert (P1, P2) == (500.0, 0.0)
    assert d1 == pytest.approx(500 / (2 * p2.C_T)) and d2 == pytest.approx(d1)


@settings(max_examples=200)
@given(st.floats(5, 200), st.floats(5, 200), st.floats(-300, 300), st.floats(-300, 300),
       st.floats(-20, 20), st.floats(-20, 20))
def test_squared_coordinate_identity(Vc1, Vc2, Vs, Vd, Is, Id):
    p = table2_params()
    d1, d2 = mean_voltage_dynamics(p, Vc1, Vc2, Vs, Vd, Is, Id)
    # with Ia~ = Is and f = Vs the squared form is the chain rule of the mean form
    (s1, s2), _ = squared_voltage_dynamics(p, Vc1, Vc2, Vd, Id, Is, Vs)
    scale = max(abs(s1), abs(s2), 1.0)
    assert abs(2 * Vc1 * d1 - s1) <= 1e-9 * scale
    assert abs(2 * Vc2 * d2 - s2) <= 1e-9 * scale


def test_mean_voltage_form_matches_averaged_model(p2):
    # mapping back to arm quantities recovers n1 I1 / C_T for the upper arm
    n1, n2, Vc1, Vc2, I1, I2 = 5, 3, 33.0, 35.0, 1.2, -0.4
    V1, V2 = level_voltages(p2, n1, n2, Vc1, Vc2)
    d1, d2 = mean_voltage_dynamics(p2, Vc1, Vc2, V1 + V2, V1 - V2, I1 + I2, I1 - I2)
    ref = average_model_derivative(p2, AverageState(Vc1, Vc2, I1, I2), n1, n2, 0.0)
    assert d1 == pytest.approx(ref[0], rel=1e-12)
    assert d2 == pytest.approx(ref[1], rel=1e-12)


def test_stored_energy(p1):
    x = np.concatenate([np.full(6, 100.0), [1.0, -1.0]])
    expected = 0.5 * 1e-3 * 6 * 1e4 + 0.5 * (0.06 - 0.05 - 0.05 + 0.06)
    assert stored_energy(p1, x) == pytest.approx(expected)


def test_transformed_trajectory_matches_full(p2):
    """Arm currents from the coupled equations map onto the decoupled pair."""
    def V(t):
        return 40 * np.sin(p2.omega * t) + 3.0, -35 * np.cos(p2.omega * t + 0.3)

    def arms(t, I):
        V1, V2 = V(t)
        return current_derivative(p2, I[0], I[1], V1, V2, p2.Va(t))

    def transformed(t, y):
        V1, V2 = V(t)
        return decoupled_dynamics(p2, y[0], y[1], V1 + V2, V1 - V2, p2.Va(t))

    t_eval = np.linspace(0, 0.1, 501)
    I0 = (0.3, -0.2)
    a = solve_ivp(arms, (0, 0.1), I0, t_eval=t_eval, rtol=1e-11, atol=1e-12, method="DOP853")
    b = solve_ivp(transformed, (0, 0.1), sum_diff_transform(*I0), t_eval=t_eval,
                  rtol=1e-11, atol=1e-12, method="DOP853")
    I1, I2 = inverse_transform(b.y[0], b.y[1])
    assert np.max(np.abs(a.y[0] - I1)) < 1e-6
    assert np.max(np.abs(a.y[1] - I2)) < 1e-6
