import math

import numpy as np
import pytest
from scipy.linalg import expm

from mmcsim import (ConfigurationError, DivergedSimulationError, FullState, InvalidInputError,
                    ReferenceSchedule, Scenario, Trace, run_closed_loop, run_open_loop,
                    run_oracle, seeded_gate_sequence)
from mmcsim.model import stored_energy
from mmcsim.params import table1_params
from mmcsim.simulation import (affine_hold_system, column_names, rk4_affine, rk4_full,
                               rk4_hold, run_average_model)


def exact_hold(params, x, T, t0, h):
    """Exact solution of the held-gate system via the augmented matrix exponential.

    The source ``Va`` is generated by the states ``sin(wt+a)``, ``cos(wt+a)``,
    so ``[x, 1, s, c]`` evolves linearly and ``expm`` solves the interval.
    """
    A, c, d = affine_hold_system(params, T)
    m = len(c)
    M = np.zeros((m + 3, m + 3))
    M[:m, :m] = A
    M[:m, m] = c
    M[:m, m + 1] = d * params.VaM
    M[m + 1, m + 2] = params.omega
    M[m + 2, m + 1] = -params.omega
    ph = params.omega * t0 + params.alphaVa
    z = np.concatenate([x, [1.0, math.sin(ph), math.cos(ph)]])
    return (expm(M * h) @ z)[:m]


@pytest.fixture(scope="module")
def short_gates(p1):
    return seeded_gate_sequence(p1, 0.05, seed=3)


def test_duration_zero_gives_single_row(p2):
    tr = run_closed_loop(Scenario(duration=0.0))
    assert len(tr) == 1 and tr.t[0] == 0.0
    assert np.all(tr.vc[0] == 31.25)


def test_trace_times_are_uniform(p2):
    tr = run_closed_loop(Scenario(duration=0.01))
    assert len(tr) == 101
    np.testing.assert_allclose(np.diff(tr.t), p2.Ts, rtol=1e-9)


def test_closed_loop_is_deterministic():
    sc = Scenario(duration=0.03)
    a, b = run_closed_loop(sc), run_closed_loop(sc)
    assert np.array_equal(a.data, b.data)


def test_euler_and_average_plants_run():
    for kw in ({"plant_integrator": "euler"}, {"plant": "average"}):
        tr = run_closed_loop(Scenario(duration=0.02, **kw))
        assert np.all(np.isfinite(tr.data))


def test_scenario_validation(p1):
    with pytest.raises(ConfigurationError):
        Scenario(plant_integrator="rk45")
    with pytest.raises(ConfigurationError):
        Scenario(plant="hybrid")
    with pytest.raises(ConfigurationError):
        Scenario(inner_steps=0)
    with pytest.raises(InvalidInputError):
        Scenario(initial=FullState.uniform(3, 1.0))
    with pytest.raises(ConfigurationError):
        run_closed_loop(Scenario(duration=-1.0))


def test_idle_plant_keeps_capacitor_voltages():
    p = table1_params(VaM=0.0)
    gates = np.zeros((500, 6), dtype=int)
    tr = run_open_loop(p, gates, 0.05)
    assert np.all(tr.vc == 110.0)


def test_arm_voltage_levels_are_quantised(p1, short_gates):
    tr = run_open_loop(p1, short_gates, 0.05)
    n = p1.n
    T = tr.gates
    V1 = p1.Vdc - np.sum(T[:, :n] * tr.vc[:, :n], axis=1)
    V2 = -p1.Vdc + np.sum(T[:, n:] * tr.vc[:, n:], axis=1)
    np.testing.assert_allclose(tr.V1, V1, rtol=0, atol=1e-12)
    np.testing.assert_allclose(tr.V2, V2, rtol=0, atol=1e-12)
    # with equal capacitor voltages the levels are 250 - k*110
    tr0 = run_open_loop(p1, short_gates[:1], 0.0)
    assert tr0.V1[0] in {250.0 - k * 110.0 for k in range(4)}


def test_charge_reduced_step_equals_full_state_rk4(p1, rng):
    for _ in range(20):
        vc = rng.uniform(90, 130, 6)
        I1, I2 = rng.normal(size=2)
        T = rng.integers(0, 2, 6).astype(float)
        x = np.concatenate([vc, [I1, I2]])
        ref = rk4_full(p1, x, T, 0.013, 1e-5, 10)
        aff = rk4_affine(p1, x, T, 0.013, 1e-5, 10)
        v = vc.copy()
        J1, J2 = rk4_hold(p1, v, I1, I2, T, 0.013, 1e-5, 10)
        got = np.concatenate([v, [J1, J2]])
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-10)
        np.testing.assert_allclose(aff, ref, rtol=1e-12, atol=1e-10)


def test_hold_matches_matrix_exponential(p1, rng):
    for _ in range(10):
        x = np.concatenate([rng.uniform(90, 130, 6), rng.normal(size=2)])
        T = rng.integers(0, 2, 6)
        exact = exact_hold(p1, x, T, 0.0071, p1.Ts)
        approx = rk4_affine(p1, x, T, 0.0071, p1.Ts / 100, 100)
        assert np.max(np.abs(approx - exact)) <= 1e-8 * np.max(np.abs(exact))


def test_gate_schedule_shared_with_oracle(p1, short_gates):
    main = run_open_loop(p1, short_gates, 0.05)
    ref = run_oracle(p1, short_gates, 0.05, refinement=10)
    assert np.array_equal(main.gates, ref.gates)
    assert np.array_equal(main.t, ref.t)


def test_refinement_convergence(p1, short_gates):
    # at Ts = 1e-4 both refinements sit at rounding level; a 2 ms hold exposes the h^4 term
    p = p1.with_(Ts=2e-3)
    steps = 20
    x = np.concatenate([np.full(6, 110.0), [0.0, 0.0]])
    exact = [x]
    for k in range(steps):
        x = exact_hold(p, x, short_gates[k], k * p.Ts, p.Ts)
        exact.append(x)
    exact = np.array(exact)
    errs = {}
    for r in (10, 100):
        tr = run_oracle(p, short_gates, steps * p.Ts, refinement=r)
        got = np.column_stack([tr.vc, tr.I1, tr.I2])
        errs[r] = np.max(np.abs(got - exact))
    assert errs[100] <= errs[10] / 100
    with pytest.raises(ConfigurationError):
        run_oracle(p1, short_gates, 0.01, refinement=5)


def test_passive_energy_never_increases(rng):
    p = table1_params(Vdc=0.0, VaM=0.0)
    init = FullState(rng.uniform(80, 120, 6), I1=2.0, I2=-1.0)
    gates = np.tile(rng.integers(0, 2, 6), (300, 1))
    tr = run_open_loop(p, gates, 0.03, init)
    E = np.array([stored_energy(p, np.concatenate([v, [i1, i2]]))
                  for v, i1, i2 in zip(tr.vc, tr.I1, tr.I2)])
    assert np.all(np.diff(E) <= 1e-12 * E[0])
    assert E[-1] < E[0]


def test_charge_consistency(p1):
    gates = seeded_gate_sequence(p1, 0.04, seed=1)
    # finer logging makes the trapezoid rule an accurate reference
    p = p1.with_(Ts=1e-5)
    fine = np.repeat(gates, 10, axis=0)
    tr = run_open_loop(p, fine, 0.04, inner_steps=2)
    n = p.n
    dt = p.Ts
    for i in range(2 * n):
        Iarm = tr.I1 if i < n else -tr.I2
        flow = fine[:len(tr) - 1, i] * 0.5 * (Iarm[:-1] + Iarm[1:]) * dt
        predicted = tr.vc[0, i] + np.cumsum(flow) / p.capacitances[i]
        err = np.max(np.abs(predicted - tr.vc[1:, i]))
        swing = np.ptp(tr.vc[:, i])
        assert err <= 1e-3 * max(swing, 1.0)


def test_average_model_tracks_full_model(closed_loop_runs):
    tr = closed_loop_runs["optimal"]
    p = Scenario().params
    n = p.n
    for t0 in (0.5, 1.2, 3.0):
        k0 = int(round(t0 / p.Ts))
        spread = np.ptp(tr.vc[k0:k0 + 200, :n], axis=1) / tr.Vc1bar[k0:k0 + 200]
        assert spread.max() < 0.01
        levels = np.column_stack([tr.n1, tr.n2])[k0:k0 + 200].astype(int)
        start = [tr.Vc1bar[k0], tr.Vc2bar[k0], tr.I1[k0], tr.I2[k0]]
        # replay from t0: shift the source phase to that instant
        q = p.with_(alphaVa=p.alphaVa + p.omega * k0 * p.Ts)
        avg = run_average_model(q, levels, 0.02, start)
        rel1 = np.abs(avg[:, 0] - tr.Vc1bar[k0:k0 + 201]) / tr.Vc1bar[k0:k0 + 201]
        rel2 = np.abs(avg[:, 1] - tr.Vc2bar[k0:k0 + 201]) / tr.Vc2bar[k0:k0 + 201]
        assert max(rel1.max(), rel2.max()) < 0.02


def test_divergence_guard_names_the_step():
    p = table1_params(Vdc=1e13)
    with pytest.raises(DivergedSimulationError) as exc:
        run_open_loop(p, np.zeros((100, 6), dtype=int), 0.01)
    assert exc.value.step == 0
    assert "step 0" in str(exc.value)


def test_gate_sequence_validation(p1):
    with pytest.raises(InvalidInputError):
        run_open_loop(p1, np.zeros((10, 5)), 0.001)
    with pytest.raises(InvalidInputError):
        run_open_loop(p1, np.zeros((3, 6)), 0.001)
    with pytest.raises(InvalidInputError):
        run_open_loop(p1, np.full((10, 6), 2), 0.001)


def test_seeded_gates_are_reproducible(p1):
    a = seeded_gate_sequence(p1, 0.02, seed=7)
    b = seeded_gate_sequence(p1, 0.02, seed=7)
    assert a.shape == (200, 6) and np.array_equal(a, b)
    assert set(np.unique(a)) <= {0, 1}


def test_csv_round_trip(tmp_path):
    tr = run_closed_loop(Scenario(duration=0.01))
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    back = Trace.from_csv(path)
    assert back.names == tr.names == column_names(8)
    assert np.array_equal(back.data, tr.data)
    assert back.Ts == pytest.approx(tr.Ts)


def test_trace_access_and_windows():
    tr = run_closed_loop(Scenario(duration=0.01))
    assert np.array_equal(tr["Is"], tr.Is)
    np.testing.assert_allclose(tr.Is, tr.I1 + tr.I2, rtol=0, atol=0)
    assert tr.window(0.0, 0.005) == slice(0, 50)
    with pytest.raises(InvalidInputError):
        tr.window(0.0, 0.5)
    with pytest.raises(InvalidInputError):
        tr.window(0.004, 0.004)
    with pytest.raises(AttributeError):
        tr.nonexistent
    with pytest.raises(InvalidInputError):
        Trace(8, np.zeros((3, 4)), 1e-4)


def test_schedule_step_applies_at_control_boundary():
    sched = ReferenceSchedule(((0, 1.5), (0.01, 3.0)))
    tr = run_closed_loop(Scenario(schedule=sched, duration=0.02))
    k = int(round(0.01 / 1e-4))
    assert tr.Vc12des[k - 1] != tr.Vc12des[k]
    # the reference phase is continuous across the step
    w = 2 * math.pi * 50
    np.testing.assert_allclose(tr.Ia_des[k:k + 5], 3.0 * np.sin(w * tr.t[k:k + 5]), atol=1e-12)
