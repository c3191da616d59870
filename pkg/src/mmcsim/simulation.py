"""Closed-loop and open-loop simulation of the MMC leg.

The plant is advanced with classical fixed-step RK4 at ``Ts / inner_steps``
between control updates; gates are held constant over each control period.
Within a hold interval the capacitor voltages only enter the current
equations through the inserted sums ``T1.vc1`` and ``T2.vc2``, and each
capacitor integrates its arm current, so the fast path integrates the arm
currents and their charges and updates every capacitor from the charge.
That is algebraically the same RK4 update as integrating all ``2n + 2``
states; :func:`rk4_full` does the latter and backs the reference runs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .controller import AdaptiveController, ControllerGains, ReferenceMode, ReferenceSchedule
from .exceptions import ConfigurationError, DivergedSimulationError, InvalidInputError
from .model import full_rhs
from .params import (TABLE1_INITIAL_VOLTAGE, ConverterParams, FullState, table2_params)

DIVERGENCE_LIMIT = 1e9
INTEGRATORS = ("rk4", "euler")
PLANTS = ("full", "average")


def column_names(n: int) -> list[str]:
    """Fixed trace column order: time, currents, voltages, gates, references, objective."""
    return (["t", "I1", "I2", "Is", "Id", "V1", "V2"]
            + [f"vc_{i + 1}" for i in range(2 * n)]
            + ["Vc1bar", "Vc2bar", "Vc12mis", "n1", "n2"]
            + [f"T_{i + 1}" for i in range(2 * n)]
            + ["Vc12des", "Ia_des", "Id_des", "VdM", "Vd0", "J"])


class Trace:
    """Uniformly sampled simulation record, one row per control step."""

    def __init__(self, n: int, data: np.ndarray, Ts: float):
        names = column_names(n)
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(names):
            raise InvalidInputError(
                f"trace data must have {len(names)} columns for n = {n}, got shape {data.shape}")
        self.n = n
        self.Ts = Ts
        self.data = data
        self.names = names
        self._index = {name: i for i, name in enumerate(names)}

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self._index[name]]

    def __getattr__(self, name):
        index = self.__dict__.get("_index")
        if index is not None and name in index:
            return self.data[:, index[name]]
        raise AttributeError(name)

    @property
    def vc(self) -> np.ndarray:
        i = self._index["vc_1"]
        return self.data[:, i:i + 2 * self.n]

    @property
    def gates(self) -> np.ndarray:
        i = self._index["T_1"]
        return self.data[:, i:i + 2 * self.n].astype(np.int8)

    @property
    def currents(self) -> np.ndarray:
        return self.data[:, 1:3]

    def window(self, t_start: float, t_end: float) -> slice:
        """Row slice covering ``t_start <= t < t_end``."""
        t0 = self.data[0, 0]
        i0 = int(round((t_start - t0) / self.Ts))
        i1 = int(round((t_end - t0) / self.Ts))
        if i0 < 0 or i1 > len(self) or i1 <= i0:
            raise InvalidInputError(
                f"window [{t_start}, {t_end}) lies outside the trace "
                f"[{t0}, {self.data[-1, 0]}] or is empty")
        return slice(i0, i1)

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(",".join(self.names) + "\n")
            np.savetxt(fh, self.data, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, Ts: float | None = None) -> "Trace":
        path = Path(path)
        with path.open(newline="") as fh:
            header = next(csv.reader(fh))
        n = sum(1 for h in header if h.startswith("vc_")) // 2
        if header != column_names(n):
            raise InvalidInputError(f"{path}: unexpected trace columns")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if Ts is None:
            Ts = float(data[1, 0] - data[0, 0]) if len(data) > 1 else float("nan")
        return cls(n, data, Ts)


class _Recorder:
    def __init__(self, n: int, rows: int):
        self.n = n
        self.data = np.full((rows, len(column_names(n))), np.nan)

    def record(self, k, t, vc, I1, I2, Vdc, T, n1=None, n2=None, ctrl=None):
        n = self.n
        row = self.data[k]
        V1 = Vdc - float(T[:n] @ vc[:n])
        V2 = -Vdc + float(T[n:] @ vc[n:])
        row[0:7] = (t, I1, I2, I1 + I2, I1 - I2, V1, V2)
        c = 7 + 2 * n
        row[7:c] = vc
        row[c] = vc[:n].mean()
        row[c + 1] = vc[n:].mean()
        row[c + 3] = T[:n].sum() if n1 is None else n1
        row[c + 4] = T[n:].sum() if n2 is None else n2
        row[c + 5:c + 5 + 2 * n] = T
        if ctrl is not None:
            row[c + 2] = ctrl.Vc12mis
            row[c + 5 + 2 * n:] = (ctrl.Vc12des, ctrl.Ia_des, ctrl.Id_des,
                                   ctrl.VdM, ctrl.Vd0, ctrl.J)


# -- integrators ---------------------------------------------------------------

def rk4_hold(params: ConverterParams, vc: np.ndarray, I1: float, I2: float,
             T: np.ndarray, t0: float, h: float, m: int) -> tuple[float, float]:
    """Advance the full model ``m`` RK4 steps of size ``h`` with gates ``T`` held.

    ``vc`` is updated in place; the new arm currents are returned.
    """
    n = params.n
    inv_c = 1.0 / params.capacitances
    w1 = T[:n] * inv_c[:n]
    w2 = T[n:] * inv_c[n:]
    g1 = float(w1.sum())
    g2 = float(w2.sum())
    base1 = params.Vdc - float(T[:n] @ vc[:n])
    base2 = -params.Vdc + float(T[n:] @ vc[n:])
    M = params.current_state_matrix
    Li = params.inductance_inverse
    m00, m01, m10, m11 = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    l00, l01, l10, l11 = Li[0, 0], Li[0, 1], Li[1, 0], Li[1, 1]
    VaM, omega, phase = params.VaM, params.omega, params.alphaVa
    sin = math.sin

    def rhs(i1, i2, q1, q2, va):
        e1 = base1 - g1 * q1 - va
        e2 = base2 - g2 * q2 - va
        return (m00 * i1 + m01 * i2 + l00 * e1 + l01 * e2,
                m10 * i1 + m11 * i2 + l10 * e1 + l11 * e2)

    Q1 = Q2 = 0.0
    half = 0.5 * h
    for j in range(m):
        t = t0 + j * h
        va0 = VaM * sin(omega * t + phase)
        vah = VaM * sin(omega * (t + half) + phase)
        va1 = VaM * sin(omega * (t + h) + phase)
        a1, a2 = rhs(I1, I2, Q1, Q2, va0)
        b1, b2 = rhs(I1 + half * a1, I2 + half * a2, Q1 + half * I1, Q2 + half * I2, vah)
        s1, s2 = I1 + half * a1, I2 + half * a2
        c1, c2 = rhs(I1 + half * b1, I2 + half * b2, Q1 + half * s1, Q2 + half * s2, vah)
        u1, u2 = I1 + half * b1, I2 + half * b2
        d1, d2 = rhs(I1 + h * c1, I2 + h * c2, Q1 + h * u1, Q2 + h * u2, va1)
        v1, v2 = I1 + h * c1, I2 + h * c2
        Q1 += h / 6 * (I1 + 2 * s1 + 2 * u1 + v1)
        Q2 += h / 6 * (I2 + 2 * s2 + 2 * u2 + v2)
        I1 += h / 6 * (a1 + 2 * b1 + 2 * c1 + d1)
        I2 += h / 6 * (a2 + 2 * b2 + 2 * c2 + d2)
    vc[:n] += w1 * Q1
    vc[n:] -= w2 * Q2
    return I1, I2


def euler_hold(params: ConverterParams, vc: np.ndarray, I1: float, I2: float,
               T: np.ndarray, t0: float, h: float) -> tuple[float, float]:
    """One forward-Euler step of the full model; ``vc`` is updated in place."""
    x = np.concatenate([vc, [I1, I2]])
    dx = full_rhs(params, x, T, params.Va(t0))
    x += h * dx
    vc[:] = x[:-2]
    return float(x[-2]), float(x[-1])


def rk4_full(params: ConverterParams, x: np.ndarray, T: np.ndarray, t0: float,
             h: float, m: int) -> np.ndarray:
    """Classical RK4 on the flat ``2n + 2`` state vector with gates held."""
    x = np.array(x, dtype=float)
    T = np.asarray(T, dtype=float)
    for j in range(m):
        t = t0 + j * h
        k1 = full_rhs(params, x, T, params.Va(t))
        k2 = full_rhs(params, x + 0.5 * h * k1, T, params.Va(t + 0.5 * h))
        k3 = full_rhs(params, x + 0.5 * h * k2, T, params.Va(t + 0.5 * h))
        k4 = full_rhs(params, x + h * k3, T, params.Va(t + h))
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def affine_hold_system(params: ConverterParams, T: np.ndarray):
    """``(A, c, d)`` with ``full_rhs(x, Va) = A x + c + d Va`` for held gates.

    The full model is affine in the state and in ``Va`` once the gates are
    fixed; the coefficients are read off :func:`full_rhs` itself.
    """
    T = np.asarray(T, dtype=float)
    m = 2 * params.n + 2
    zero = np.zeros(m)
    c = full_rhs(params, zero, T, 0.0)
    d = full_rhs(params, zero, T, 1.0) - c
    A = np.empty((m, m))
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        A[:, i] = full_rhs(params, e, T, 0.0) - c
    return A, c, d


def rk4_affine(params: ConverterParams, x: np.ndarray, T: np.ndarray, t0: float,
               h: float, m: int) -> np.ndarray:
    """Classical RK4 on the held-gate system, written as its step propagator.

    For ``x' = A x + c + d Va(t)`` one RK4 step is
    ``x+ = P x + G0 u(t) + Gh u(t + h/2) + G1 u(t + h)`` with ``u = c + d Va``,
    ``P = sum_k (hA)^k / k!`` up to fourth order, and the ``G`` matrices
    collecting the stage weights. The result is the same as
    :func:`rk4_full` up to rounding.
    """
    A, c, d = affine_hold_system(params, T)
    I = np.eye(len(c))
    hA = h * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    P = I + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    G0 = h / 6 * (I + hA + hA2 / 2 + hA3 / 4)
    Gh = h / 6 * (4 * I + 2 * hA + hA2 / 2)
    G1 = h / 6 * I
    r = (G0 + Gh + G1) @ c
    g0, gh, g1 = G0 @ d, Gh @ d, G1 @ d
    x = np.array(x, dtype=float)
    VaM, omega, phase = params.VaM, params.omega, params.alphaVa
    for j in range(m):
        t = t0 + j * h
        x = (P @ x + r + g0 * (VaM * math.sin(omega * t + phase))
             + gh * (VaM * math.sin(omega * (t + 0.5 * h) + phase))
             + g1 * (VaM * math.sin(omega * (t + h) + phase)))
    return x


def average_rhs(params: ConverterParams, y: np.ndarray, n1: int, n2: int, Va: float) -> np.ndarray:
    C_T = params.C_T
    V1 = params.Vdc - n1 * y[0]
    V2 = -params.Vdc + n2 * y[1]
    I = y[2:]
    dI = params.current_state_matrix @ I + params.inductance_inverse @ np.array([V1 - Va, V2 - Va])
    return np.array([n1 * y[2] / C_T, -n2 * y[3] / C_T, dI[0], dI[1]])


def rk4_average(params: ConverterParams, y: np.ndarray, n1: int, n2: int, t0: float,
                h: float, m: int) -> np.ndarray:
    """RK4 on the averaged model ``[Vc1bar, Vc2bar, I1, I2]`` with counts held."""
    y = np.array(y, dtype=float)
    for j in range(m):
        t = t0 + j * h
        k1 = average_rhs(params, y, n1, n2, params.Va(t))
        k2 = average_rhs(params, y + 0.5 * h * k1, n1, n2, params.Va(t + 0.5 * h))
        k3 = average_rhs(params, y + 0.5 * h * k2, n1, n2, params.Va(t + 0.5 * h))
        k4 = average_rhs(params, y + h * k3, n1, n2, params.Va(t + h))
        y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def _guard(k: int, t: float, *values):
    for v in values:
        a = np.abs(v)
        if not np.all(np.isfinite(a)) or np.any(a > DIVERGENCE_LIMIT):
            raise DivergedSimulationError(
                f"simulation diverged at step {k} (t = {t:.6g} s): "
                f"state magnitude exceeded {DIVERGENCE_LIMIT:g}", step=k, time=t)


def _step_count(duration: float, Ts: float) -> int:
    if not (math.isfinite(duration) and duration >= 0):
        raise ConfigurationError(f"duration must be a nonnegative number, got {duration!r}")
    return int(round(duration / Ts))


# -- scenarios -----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one closed-loop run."""

    params: ConverterParams = field(default_factory=table2_params)
    gains: ControllerGains = field(default_factory=ControllerGains)
    schedule: ReferenceSchedule = field(default_factory=ReferenceSchedule)
    duration: float = 3.5
    initial: FullState | None = None
    reference: ReferenceMode = field(default_factory=ReferenceMode)
    plant_integrator: str = "rk4"
    inner_steps: int = 10
    plant: str = "full"
    seed: int = 0

    def __post_init__(self):
        if self.plant_integrator not in INTEGRATORS:
            raise ConfigurationError(
                f"plant_integrator must be one of {INTEGRATORS}, got {self.plant_integrator!r}")
        if self.plant not in PLANTS:
            raise ConfigurationError(f"plant must be one of {PLANTS}, got {self.plant!r}")
        if self.inner_steps < 1:
            raise ConfigurationError("inner_steps must be >= 1")
        if self.initial is not None:
            self.initial.check(self.params)

    def initial_state(self) -> FullState:
        if self.initial is not None:
            return self.initial
        # all submodules inserted cancel the rail voltage
        return FullState.uniform(self.params.n, self.params.Vdc / self.params.n)


def run_closed_loop(scenario: Scenario) -> Trace:
    """Simulate the plant under the adaptive controller.

    Each control step samples the state, runs the controller, records one
    trace row and holds the resulting gates until the next step.
    """
    p = scenario.params
    n = p.n
    N = _step_count(scenario.duration, p.Ts)
    ctrl = AdaptiveController(p, scenario.gains, scenario.schedule, scenario.reference)
    x0 = scenario.initial_state()
    x0.check(p)
    vc = np.array(x0.vc, dtype=float)
    I1, I2 = x0.I1, x0.I2
    rec = _Recorder(n, N + 1)
    h = p.Ts / scenario.inner_steps
    average = scenario.plant == "average"
    if average:
        y = np.array([vc[:n].mean(), vc[n:].mean(), I1, I2])

    for k in range(N + 1):
        t = k * p.Ts
        if average:
            vc = np.repeat(y[:2], n)
            I1, I2 = float(y[2]), float(y[3])
        out = ctrl.step(t, vc, I1, I2)
        rec.record(k, t, vc, I1, I2, p.Vdc, out.T, out.n1, out.n2, out)
        if k == N:
            break
        if average:
            y = rk4_average(p, y, out.n1, out.n2, t, h, scenario.inner_steps)
            _guard(k, t, y)
        elif scenario.plant_integrator == "rk4":
            I1, I2 = rk4_hold(p, vc, I1, I2, out.T, t, h, scenario.inner_steps)
            _guard(k, t, vc, I1, I2)
        else:
            I1, I2 = euler_hold(p, vc, I1, I2, out.T, t, p.Ts)
            _guard(k, t, vc, I1, I2)
    return Trace(n, rec.data, p.Ts)


def _gate_rows(params: ConverterParams, gates, N: int) -> np.ndarray:
    gates = np.asarray(gates)
    if gates.ndim != 2 or gates.shape[1] != 2 * params.n:
        raise InvalidInputError(f"gate sequence must have shape (steps, {2 * params.n})")
    if len(gates) < N:
        raise InvalidInputError(f"gate sequence has {len(gates)} rows, need at least {N}")
    if not np.all((gates == 0) | (gates == 1)):
        raise InvalidInputError("gate entries must be 0 or 1")
    return gates.astype(np.int8)


def _open_loop(params, gates, duration, initial, advance) -> Trace:
    n = params.n
    N = _step_count(duration, params.Ts)
    gates = _gate_rows(params, gates, N)
    x0 = initial if initial is not None else FullState.uniform(n, TABLE1_INITIAL_VOLTAGE)
    x0.check(params)
    vc = np.array(x0.vc, dtype=float)
    I1, I2 = x0.I1, x0.I2
    rec = _Recorder(n, N + 1)
    for k in range(N + 1):
        t = k * params.Ts
        if len(gates):
            T = gates[min(k, len(gates) - 1)]
        else:
            T = np.zeros(2 * n, dtype=np.int8)
        rec.record(k, t, vc, I1, I2, params.Vdc, T)
        if k == N:
            break
        I1, I2 = advance(vc, I1, I2, T, t)
        _guard(k, t, vc, I1, I2)
    return Trace(n, rec.data, params.Ts)


def run_open_loop(params: ConverterParams, gates, duration: float,
                  initial: FullState | None = None, inner_steps: int = 10,
                  integrator: str = "rk4") -> Trace:
    """Replay a gate sequence (one row per control period) on the full model."""
    if integrator not in INTEGRATORS:
        raise ConfigurationError(f"integrator must be one of {INTEGRATORS}")
    h = params.Ts / inner_steps

    def advance(vc, I1, I2, T, t):
        if integrator == "rk4":
            return rk4_hold(params, vc, I1, I2, T, t, h, inner_steps)
        return euler_hold(params, vc, I1, I2, T, t, params.Ts)

    return _open_loop(params, gates, duration, initial, advance)


def run_oracle(params: ConverterParams, gates, duration: float,
               refinement: int = 100, initial: FullState | None = None) -> Trace:
    """Reference trajectory: full-state RK4 at ``Ts / refinement``.

    All ``2n + 2`` states are integrated together from :func:`full_rhs`,
    independently of the charge-based reduction of the main path.
    """
    if refinement < 10:
        raise ConfigurationError(f"refinement must be >= 10, got {refinement}")
    h = params.Ts / refinement

    def advance(vc, I1, I2, T, t):
        x = rk4_affine(params, np.concatenate([vc, [I1, I2]]), T, t, h, refinement)
        vc[:] = x[:-2]
        return float(x[-2]), float(x[-1])

    return _open_loop(params, gates, duration, initial, advance)


def run_average_model(params: ConverterParams, levels, duration: float,
                      initial, inner_steps: int = 10) -> np.ndarray:
    """Replay insertion counts ``levels[k] = (n1, n2)`` on the averaged model.

    Returns the ``(steps + 1, 4)`` array of ``[Vc1bar, Vc2bar, I1, I2]``.
    """
    N = _step_count(duration, params.Ts)
    levels = np.asarray(levels, dtype=int)
    if len(levels) < N:
        raise InvalidInputError(f"level sequence has {len(levels)} rows, need {N}")
    y = np.asarray(initial.as_vector() if hasattr(initial, "as_vector") else initial, dtype=float)
    out = np.empty((N + 1, 4))
    out[0] = y
    h = params.Ts / inner_steps
    for k in range(N):
        y = rk4_average(params, y, int(levels[k, 0]), int(levels[k, 1]),
                        k * params.Ts, h, inner_steps)
        _guard(k, k * params.Ts, y)
        out[k + 1] = y
    return out


def seeded_gate_sequence(params: ConverterParams, duration: float, seed: int = 0,
                         initial: FullState | None = None,
                         amplitude_range: Sequence[float] = (0.5, 3.0),
                         segment: float = 0.1) -> np.ndarray:
    """Reproducible, physically sensible gate sequence for open-loop checks.

    The load-current amplitude is drawn per ``segment`` from
    ``amplitude_range`` with ``seed``; the controller is run on the full
    model and the gates it applies are returned, one row per control period.
    """
    rng = np.random.default_rng(seed)
    count = max(1, int(math.ceil(duration / segment)))
    amps = rng.uniform(*amplitude_range, size=count)
    schedule = ReferenceSchedule(tuple((i * segment, float(a)) for i, a in enumerate(amps)),
                                 omega=params.omega)
    gains = ControllerGains(wn=min(1, params.n))
    init = initial if initial is not None else FullState.uniform(params.n, TABLE1_INITIAL_VOLTAGE)
    trace = run_closed_loop(Scenario(params=params, gains=gains, schedule=schedule,
                                     duration=duration, initial=init))
    N = _step_count(duration, params.Ts)
    return trace.gates[:max(N, 1)]
