"""Three-layer MMC control.

1. Capacitor balancing inside each arm: choose *which* submodules to insert
   once the insertion count is known, by sorting on voltage and arm-current
   sign.
2. Adaptive generation of the circulating-current reference ``Id~``: loop 1
   drives the arm-voltage difference to zero through the amplitude
   ``IdM``; loop 2 drives the mean arm voltage to its optimal reference
   through the offset ``Id0``.
3. Finite-control-set predictive selection of the insertion counts
   ``(n1, n2)`` within a window around the previous counts, using a
   forward-Euler prediction of the arm currents.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import harmonic
from .exceptions import (ConfigurationError, InfeasibleOperatingPointError,
                         InvalidInputError, ZeroResistanceError)
from .harmonic import HarmonicSpec, Sinusoid
from .params import ConverterParams

log = logging.getLogger(__name__)

REFERENCE_SAMPLES = 2048


@dataclass(frozen=True)
class ControllerGains:
    """Loop gains, filter constant, cost weights and search window."""

    KdM: float = 1.5e-3
    Kd0: float = 0.10e-3
    tau: float = 0.0318
    alpha1: float = 0.99
    alpha2: float = 0.01
    wn: int = 1

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau!r}")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ConfigurationError("cost weights must be nonnegative")
        if not math.isclose(self.alpha1 + self.alpha2, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ConfigurationError(
                f"alpha1 + alpha2 must equal 1, got {self.alpha1 + self.alpha2!r}")
        if not isinstance(self.wn, (int, np.integer)) or self.wn < 0:
            raise ConfigurationError(f"wn must be a nonnegative integer, got {self.wn!r}")

    def check(self, params: ConverterParams):
        if self.wn > params.n:
            raise ConfigurationError(f"wn = {self.wn} exceeds n = {params.n}")


@dataclass(frozen=True)
class ReferenceSchedule:
    """Piecewise-constant amplitude of the load-current reference ``IaM(t) sin(wt)``."""

    # steps land where the 9 A arm-voltage ripple crosses its mean, so the
    # amplitude change does not freeze a ripple peak into an arm imbalance
    steps: tuple = ((0.0, 1.5), (1.405, 9.0), (2.605, 0.75))
    omega: float = 2 * math.pi * 50

    def __post_init__(self):
        steps = tuple((float(t), float(a)) for t, a in self.steps)
        if not steps:
            raise ConfigurationError("schedule needs at least one step")
        if steps[0][0] != 0.0:
            raise ConfigurationError("the first schedule step must start at t = 0")
        starts = [t for t, _ in steps]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("schedule start times must be strictly increasing")
        if any(a < 0 for _, a in steps):
            raise ConfigurationError("schedule amplitudes must be nonnegative")
        if not self.omega > 0:
            raise ConfigurationError("schedule omega must be positive")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "_starts", np.array(starts))

    def amplitude_at(self, t: float) -> float:
        # a step scheduled at t_s is active from the first sample with t >= t_s
        i = int(np.searchsorted(self._starts, t + 1e-9, side="right")) - 1
        return self.steps[max(i, 0)][1]

    def current_at(self, t: float) -> float:
        return self.amplitude_at(t) * math.sin(self.omega * t)

    @property
    def max_amplitude(self) -> float:
        return max(a for _, a in self.steps)


@dataclass(frozen=True)
class ReferenceMode:
    """``optimal`` adapts the mean-voltage reference; ``constant`` holds ``value``.

    A constant mode without a value uses the optimal reference of the most
    demanding amplitude in the schedule.
    """

    kind: str = "optimal"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("optimal", "constant"):
            raise ConfigurationError(f"unknown reference mode {self.kind!r}")
        if self.kind == "optimal" and self.value is not None:
            raise ConfigurationError("the optimal reference mode takes no value")
        if self.value is not None and not self.value > 0:
            raise ConfigurationError("a constant reference must be positive")

    @classmethod
    def parse(cls, text: str) -> "ReferenceMode":
        text = text.strip()
        if text == "optimal":
            return cls("optimal")
        if text == "constant":
            return cls("constant")
        if text.startswith("constant:"):
            try:
                return cls("constant", float(text.split(":", 1)[1]))
            except ValueError:
                raise ConfigurationError(f"bad constant reference {text!r}") from None
        raise ConfigurationError(
            f"reference must be 'optimal', 'constant' or 'constant:VALUE', got {text!r}")

    def __str__(self):
        if self.kind == "constant" and self.value is not None:
            return f"constant:{self.value:g}"
        return self.kind


@dataclass(frozen=True)
class DesiredId:
    """Circulating-current reference ``Id0 + IdM sin(wt + alphaVd - alphaLR)``."""

    Id0: float = 0.0
    IdM: float = 0.0
    alphaVd: float = 0.0
    alphaLR: float = 0.0
    omega: float = 2 * math.pi * 50

    def current(self, t: float) -> float:
        return self.Id0 + self.IdM * math.sin(self.omega * t + self.alphaVd - self.alphaLR)

    def as_sinusoid(self) -> Sinusoid:
        return Sinusoid(self.Id0, self.IdM, self.alphaVd - self.alphaLR, self.omega)


@dataclass
class ControllerState:
    """Everything the controller carries from one control period to the next."""

    Vc1f: float = 0.0
    Vc2f: float = 0.0
    n1prev: int = 0
    n2prev: int = 0
    Vc12des: float = 0.0
    IdSpec: DesiredId = field(default_factory=DesiredId)
    Vd0: float = 0.0
    VdM: float = 0.0
    IaM: float | None = None
    lastUpdate: float = float("nan")

    @property
    def Vc12mis(self) -> float:
        return 0.5 * (self.Vc1f + self.Vc2f)


class ControlOutput(NamedTuple):
    n1: int
    n2: int
    T: np.ndarray
    J: float
    Ia_des: float
    Id_des: float
    Vc12des: float
    Vc12mis: float
    VdM: float
    Vd0: float


# -- balancing ---------------------------------------------------------------

def balance_arm(j: int, Ij: float, vcj: Sequence[float], nj: int) -> np.ndarray:
    """Gate vector of one arm inserting ``nj`` submodules.

    Upper arm (``j=1``): a positive current charges inserted capacitors, so
    the lowest voltages are inserted, otherwise the highest. The lower arm
    (``j=2``) is discharged by a positive current and uses the opposite
    rule: highest voltages if ``I2 > 0``, lowest otherwise. Equal voltages
    are resolved by capacitor index.
    """
    vcj = np.asarray(vcj, dtype=float)
    n = len(vcj)
    if j not in (1, 2):
        raise InvalidInputError(f"arm index must be 1 or 2, got {j!r}")
    if not 0 <= nj <= n:
        raise InvalidInputError(f"nj = {nj} outside [0, {n}]")
    lowest = Ij > 0 if j == 1 else not Ij > 0
    order = np.argsort(vcj if lowest else -vcj, kind="stable")
    T = np.zeros(n, dtype=np.int8)
    T[order[:nj]] = 1
    return T


# -- adaptive reference loops -----------------------------------------------

def filter_step(y: float, u: float, Ts: float, tau: float) -> float:
    """Exact zero-order-hold step of a unit-gain first-order low-pass."""
    return y + (1.0 - math.exp(-Ts / tau)) * (u - y)


def update_filters(state: ControllerState, Vc1bar_meas: float, Vc2bar_meas: float,
                   Ts: float, tau: float) -> ControllerState:
    return replace(state,
                   Vc1f=filter_step(state.Vc1f, Vc1bar_meas, Ts, tau),
                   Vc2f=filter_step(state.Vc2f, Vc2bar_meas, Ts, tau))


def loop1_IdM(gains: ControllerGains, Vc1f: float, Vc2f: float,
              params: ConverterParams) -> tuple[float, float]:
    """Arm-balancing loop: ``VdM = KdM (Vc1f^2 - Vc2f^2)``, ``IdM = VdM / |Z|``."""
    VdM = gains.KdM * (Vc1f * Vc1f - Vc2f * Vc2f)
    return VdM, VdM / params.impedance_Id


def loop2_Id0(gains: ControllerGains, Vc12des: float, Vc1f: float, Vc2f: float,
              Vd0minus: float, params: ConverterParams) -> tuple[float, float]:
    """Mean-voltage loop around the boundary offset ``Vd0minus``."""
    if params.R == 0:
        raise ZeroResistanceError("R = 0: the offset current Vd0/R is undefined")
    Vc12mis = 0.5 * (Vc1f + Vc2f)
    Vd0 = Vd0minus + gains.Kd0 * (Vc12des * Vc12des - Vc12mis * Vc12mis)
    return Vd0, Vd0 / params.R


def desired_Id(spec: DesiredId, t: float, params: ConverterParams) -> tuple[float, float]:
    """Reference ``Id~(t)`` and the branch voltage ``L dId~/dt + R Id~`` that sustains it."""
    theta = spec.omega * t + spec.alphaVd - spec.alphaLR
    Id = spec.Id0 + spec.IdM * math.sin(theta)
    dId = spec.IdM * spec.omega * math.cos(theta)
    return Id, params.L * dId + params.R * Id


def desired_Vd(spec: DesiredId, params: ConverterParams) -> Sinusoid:
    """``L dId~/dt + R Id~`` as a single sinusoid with offset."""
    Id = spec.as_sinusoid()
    dId = Id.derivative()
    # R*Id + L*dId: both at the same frequency, combine as phasors
    re = params.R * Id.amplitude * math.cos(Id.phase) + params.L * dId.amplitude * math.cos(dId.phase)
    im = params.R * Id.amplitude * math.sin(Id.phase) + params.L * dId.amplitude * math.sin(dId.phase)
    return Sinusoid(params.R * Id.offset, math.hypot(re, im), math.atan2(im, re), spec.omega)


def optimal_reference(params: ConverterParams, f: Sinusoid, Vd_desired: Sinusoid,
                      samples: int = REFERENCE_SAMPLES) -> float:
    """Smallest mean capacitor voltage that still reaches the required arm-voltage peaks.

    ``V1~ = (f + Vd~)/2`` and ``V2~ = (f - Vd~)/2`` are sampled over one
    period; the mean of their maxima must be reachable with every submodule
    of an arm inserted.
    """
    theta = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    Vs = f.at_angle(theta)
    Vd = Vd_desired.at_angle(theta)
    V1M = float(np.max(0.5 * (Vs + Vd)))
    V2M = float(np.max(0.5 * (Vs - Vd)))
    return (0.5 * (V1M + V2M) + params.Vdc) / params.n


# -- predictive level selection ---------------------------------------------

def predict_errors(params: ConverterParams, I1: float, I2: float, Vc1bar: float,
                   Vc2bar: float, Va: float, Ia_next: float, Id_next: float,
                   n1: int, n2: int, Ts: float | None = None) -> tuple[float, float]:
    """One forward-Euler prediction of the load and circulating current errors."""
    if not (0 <= n1 <= params.n and 0 <= n2 <= params.n):
        raise InvalidInputError(f"(n1, n2) = ({n1}, {n2}) outside [0, {params.n}]")
    Ts = params.Ts if Ts is None else Ts
    M = params.current_state_matrix
    Li = params.inductance_inverse
    e1 = params.Vdc - n1 * Vc1bar - Va
    e2 = -params.Vdc + n2 * Vc2bar - Va
    I1n = I1 + Ts * (M[0, 0] * I1 + M[0, 1] * I2 + Li[0, 0] * e1 + Li[0, 1] * e2)
    I2n = I2 + Ts * (M[1, 0] * I1 + M[1, 1] * I2 + Li[1, 0] * e1 + Li[1, 1] * e2)
    return Ia_next - (I1n + I2n), Id_next - (I1n - I2n)


def candidate_window(prev: int, wn: int, n: int) -> range:
    """Insertion counts within ``wn`` of ``prev``, clamped to ``[0, n]``."""
    return range(max(prev - wn, 0), min(prev + wn, n) + 1)


def select_levels(candidates: Iterable[tuple[int, int, float, float]], n1prev: int,
                  n2prev: int, alpha1: float, alpha2: float) -> tuple[int, int, float]:
    """Pick the pair minimising ``alpha1 |eIa| + alpha2 |eId|``.

    ``candidates`` yields ``(n1, n2, eIa, eId)``. Exact ties go to the
    smallest switching effort ``|n1-n1prev| + |n2-n2prev|``, then to the
    smallest ``n1``, then the smallest ``n2``.
    """
    best = None
    for n1, n2, eIa, eId in candidates:
        key = (alpha1 * abs(eIa) + alpha2 * abs(eId),
               abs(n1 - n1prev) + abs(n2 - n2prev), n1, n2)
        if best is None or key < best:
            best = key
    if best is None:
        raise InvalidInputError("no candidate levels")
    return best[2], best[3], best[0]


def zero_voltage_levels(params: ConverterParams, Vc1bar: float, Vc2bar: float) -> tuple[int, int]:
    """Insertion counts putting both arm voltages closest to zero."""
    n1 = min(range(params.n + 1), key=lambda k: abs(params.Vdc - k * Vc1bar))
    n2 = min(range(params.n + 1), key=lambda k: abs(-params.Vdc + k * Vc2bar))
    return n1, n2


# -- the controller ----------------------------------------------------------

class AdaptiveController:
    """Stateful wrapper running the three layers once per control period.

    Order within a period: filters, reference update (on amplitude change),
    loop 1, boundary offset, loop 2, circulating reference, predictive
    selection, balancing.
    """

    def __init__(self, params: ConverterParams, gains: ControllerGains | None = None,
                 schedule: ReferenceSchedule | None = None,
                 reference: ReferenceMode | None = None):
        gains = gains or ControllerGains()
        schedule = schedule or ReferenceSchedule(omega=params.omega)
        reference = reference or ReferenceMode()
        params.require_uniform()
        if params.R == 0:
            raise ZeroResistanceError(
                "the controller needs R > 0 (the offset loop divides by R)")
        gains.check(params)
        if not math.isclose(schedule.omega, params.omega, rel_tol=1e-12):
            raise ConfigurationError("schedule omega must equal the converter omega")
        self.params = params
        self.gains = gains
        self.schedule = schedule
        self.reference = reference
        self.state = ControllerState()
        self._started = False
        self._cache: dict[float, tuple[Sinusoid, float]] = {}
        self._infeasible_warned = False
        if reference.kind == "constant":
            self._constant = reference.value if reference.value is not None \
                else self.reference_for_amplitude(schedule.max_amplitude)

    def reference_for_amplitude(self, IaM: float, Vd: Sinusoid | None = None) -> float:
        f, _ = self._harmonics(IaM)
        Vd = Vd or Sinusoid(omega=self.params.omega)
        return optimal_reference(self.params, f, Vd)

    def _harmonics(self, IaM: float) -> tuple[Sinusoid, float]:
        # feedforward and gamma depend on IaM only
        if IaM not in self._cache:
            p = self.params
            f = harmonic.feedforward_f(p, IaM)
            spec = HarmonicSpec.from_params(p, IaM, VdM=1.0)
            gamma = harmonic.P20_closed_form(p, spec, f).gamma
            self._cache[IaM] = (f, gamma)
        return self._cache[IaM]

    def _vd0_boundary(self, IaM: float, VdM: float, f: Sinusoid) -> float:
        spec = HarmonicSpec.from_params(self.params, IaM, VdM=VdM)
        try:
            return harmonic.C0_and_Vd0minus(self.params, spec, f).Vd0minus
        except InfeasibleOperatingPointError as exc:
            if not self._infeasible_warned:
                log.warning("%s; holding the offset boundary at Vdc", exc)
                self._infeasible_warned = True
            return self.params.Vdc

    def step(self, t: float, vc: np.ndarray, I1: float, I2: float) -> ControlOutput:
        p, g, st = self.params, self.gains, self.state
        n = p.n
        Vc1bar = float(np.mean(vc[:n]))
        Vc2bar = float(np.mean(vc[n:]))

        if not self._started:
            st.Vc1f, st.Vc2f = Vc1bar, Vc2bar
            st.n1prev, st.n2prev = zero_voltage_levels(p, Vc1bar, Vc2bar)
            self._started = True
        else:
            st.Vc1f = filter_step(st.Vc1f, Vc1bar, p.Ts, g.tau)
            st.Vc2f = filter_step(st.Vc2f, Vc2bar, p.Ts, g.tau)

        IaM = self.schedule.amplitude_at(t)
        f, gamma = self._harmonics(IaM)
        alphaVd = -gamma
        if IaM != st.IaM:
            if self.reference.kind == "optimal":
                Vd_prev = Sinusoid(st.Vd0, st.VdM, alphaVd, p.omega)
                st.Vc12des = optimal_reference(p, f, Vd_prev)
            else:
                st.Vc12des = self._constant
            st.IaM = IaM
            st.lastUpdate = t

        VdM, IdM = loop1_IdM(g, st.Vc1f, st.Vc2f, p)
        Vd0minus = self._vd0_boundary(IaM, VdM, f)
        Vd0, Id0 = loop2_Id0(g, st.Vc12des, st.Vc1f, st.Vc2f, Vd0minus, p)
        st.VdM, st.Vd0 = VdM, Vd0
        st.IdSpec = DesiredId(Id0, IdM, alphaVd, p.alpha_LR, p.omega)

        t_next = t + p.Ts
        Ia_next = self.schedule.current_at(t_next)
        Id_next = st.IdSpec.current(t_next)
        Va = p.Va(t)
        candidates = (
            (k1, k2) + predict_errors(p, I1, I2, Vc1bar, Vc2bar, Va, Ia_next, Id_next, k1, k2)
            for k1 in candidate_window(st.n1prev, g.wn, n)
            for k2 in candidate_window(st.n2prev, g.wn, n)
        )
        n1, n2, J = select_levels(candidates, st.n1prev, st.n2prev, g.alpha1, g.alpha2)
        st.n1prev, st.n2prev = n1, n2

        T = np.concatenate([balance_arm(1, I1, vc[:n], n1), balance_arm(2, I2, vc[n:], n2)])
        return ControlOutput(n1, n2, T, J, self.schedule.current_at(t), st.IdSpec.current(t),
                             st.Vc12des, st.Vc12mis, VdM, Vd0)
