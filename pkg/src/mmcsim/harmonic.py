"""Closed-form steady-state harmonic analysis of the capacitive dynamics.

With the load current on its reference ``Ia~ = IaM sin(wt)``, the load
source ``Va = VaM sin(wt + alphaVa)`` and a circulating-branch voltage
``Vd = Vd0 + VdM sin(wt + alphaVd)``, the two power terms that drive the
squared mean arm voltages split into a constant part (``P10``, ``P20``) and
a zero-mean part made of first and second harmonics. Only the constants
move the average of the squared voltages, which is what the adaptive
controller exploits.

All angles returned by this module are normalised to ``(-pi, pi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import InfeasibleOperatingPointError, InvalidInputError, ZeroResistanceError
from .params import ConverterParams

TWO_PI = 2 * math.pi


def wrap_angle(angle: float) -> float:
    """Normalise an angle to ``(-pi, pi]``."""
    r = math.remainder(angle, TWO_PI)
    return math.pi if r <= -math.pi else r


@dataclass(frozen=True)
class Sinusoid:
    """``offset + amplitude * sin(omega t + phase)``.

    A negative amplitude is folded into the phase on construction.
    """

    offset: float = 0.0
    amplitude: float = 0.0
    phase: float = 0.0
    omega: float = 1.0

    def __post_init__(self):
        amp = float(self.amplitude)
        phase = float(self.phase)
        if amp < 0:
            amp = -amp
            phase += math.pi
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", wrap_angle(phase))

    def __call__(self, t):
        return self.at_angle(self.omega * np.asarray(t) if np.ndim(t) else self.omega * t)

    def at_angle(self, theta):
        """Evaluate at electrical angle ``theta = omega t``."""
        if np.ndim(theta):
            return self.offset + self.amplitude * np.sin(np.asarray(theta) + self.phase)
        return self.offset + self.amplitude * math.sin(theta + self.phase)

    def derivative(self) -> "Sinusoid":
        """Time derivative (the offset vanishes, the phase advances by pi/2)."""
        return Sinusoid(0.0, self.amplitude * self.omega, self.phase + math.pi / 2, self.omega)


@dataclass(frozen=True)
class HarmonicSpec:
    """Waveform parameters driving the analysis.

    ``Vd0, VdM, alphaVd`` describe the circulating-branch voltage, ``IaM``
    the load-current reference amplitude (zero phase), ``VaM, alphaVa`` the
    load source.
    """

    Vd0: float = 0.0
    VdM: float = 0.0
    alphaVd: float = 0.0
    IaM: float = 0.0
    alphaVa: float = math.pi / 6
    VaM: float = 10.0
    omega: float = 2 * math.pi * 50

    def __post_init__(self):
        if not self.omega > 0:
            raise InvalidInputError(f"omega must be positive, got {self.omega!r}")

    @classmethod
    def from_params(cls, params: ConverterParams, IaM: float, Vd0: float = 0.0,
                    VdM: float = 0.0, alphaVd: float = 0.0) -> "HarmonicSpec":
        return cls(Vd0=Vd0, VdM=VdM, alphaVd=alphaVd, IaM=IaM,
                   alphaVa=params.alphaVa, VaM=params.VaM, omega=params.omega)


class PowerSplit(NamedTuple):
    constant: float
    oscillatory: Callable


class P2Split(NamedTuple):
    constant: float
    F2: Callable
    F3: Callable
    oscillatory: Callable


class P20Form(NamedTuple):
    a: float
    b: float
    gamma: float
    P20: float
    beta: float


class OffsetBoundary(NamedTuple):
    C0: float
    Vd0minus: float
    Vd0plus: float


@dataclass(frozen=True)
class HarmonicAnalysis:
    """Every derived quantity of the analysis for one operating point."""

    fM: float
    alphaF: float
    alphaLR: float
    Id0: float
    IdM: float
    C0: float
    Vd0minus: float
    P10: float
    P20: float
    a: float
    b: float
    gamma: float
    beta: float

    def rows(self):
        return [
            ("fM", self.fM, "V"), ("alphaF", self.alphaF, "rad"),
            ("alphaLR", self.alphaLR, "rad"), ("IdM", self.IdM, "A"),
            ("Id0", self.Id0, "A"), ("C0", self.C0, "V^2"),
            ("Vd0minus", self.Vd0minus, "V"), ("gamma", self.gamma, "rad"),
            ("P10", self.P10, "W"), ("P20", self.P20, "W"),
        ]


def _check_omega(params: ConverterParams, omega: float):
    # the analysis assumes a single frequency shared by Ia~, Va and Vd
    if not math.isclose(omega, params.omega, rel_tol=1e-12):
        raise InvalidInputError(
            f"omega = {omega} differs from the converter frequency {params.omega}")


def feedforward_f(params: ConverterParams, IaM: float, omega: float | None = None,
                  alphaVa: float | None = None, VaM: float | None = None) -> Sinusoid:
    """Sum-voltage feedforward ``f(t) = L_T dIa~/dt + R_T Ia~ + 2 Va`` as one sinusoid."""
    omega = params.omega if omega is None else omega
    alphaVa = params.alphaVa if alphaVa is None else alphaVa
    VaM = params.VaM if VaM is None else VaM
    S_f = params.L_T * IaM * omega + 2 * VaM * math.sin(alphaVa)
    C_f = params.R_T * IaM + 2 * VaM * math.cos(alphaVa)
    return Sinusoid(0.0, math.hypot(S_f, C_f), math.atan2(S_f, C_f), omega)


def circulating_response(params: ConverterParams) -> tuple[float, float]:
    """``(sqrt(R^2 + L^2 w^2), arctan(L w / R))`` of the circulating branch."""
    return params.impedance_Id, params.alpha_LR


def steady_state_Id(params: ConverterParams, spec: HarmonicSpec) -> Sinusoid:
    """Periodic solution of ``L dId/dt = -R Id + Vd`` for sinusoidal ``Vd``."""
    _check_omega(params, spec.omega)
    if params.R == 0:
        raise ZeroResistanceError(
            "R = 0: the circulating current has no steady-state offset Vd0/R; "
            "set a positive arm resistance")
    Z, alpha_LR = circulating_response(params)
    return Sinusoid(spec.Vd0 / params.R, spec.VdM / Z,
                    spec.alphaVd - alpha_LR, spec.omega)


def product_of_sinusoids(a1: float, alpha1: float, a2: float, alpha2: float,
                         omega: float = 1.0) -> tuple[float, Sinusoid]:
    """Split ``a1 sin(wt+alpha1) * a2 sin(wt+alpha2)`` into constant and 2w parts.

    The product equals ``a1 a2/2 cos(alpha1-alpha2) - a1 a2/2 cos(2wt+alpha1+alpha2)``.
    The second harmonic is returned as a :class:`Sinusoid` at ``2 omega``
    (``-cos x = sin(x - pi/2)``).
    """
    half = 0.5 * a1 * a2
    return (half * math.cos(alpha1 - alpha2),
            Sinusoid(0.0, half, alpha1 + alpha2 - math.pi / 2, 2 * omega))


def decompose_P1(params: ConverterParams, spec: HarmonicSpec, f: Sinusoid,
                 IdSS: Sinusoid) -> PowerSplit:
    """Constant ``P10`` and zero-mean part of ``P1 = 2 Vdc Id - Vd Id - f Ia~``.

    The oscillatory evaluator takes the electrical angle ``wt``.
    """
    _check_omega(params, spec.omega)
    Vdc = params.Vdc
    Vd0, VdM, aVd = spec.Vd0, spec.VdM, spec.alphaVd
    IaM = spec.IaM
    Id0, IdA, phi = IdSS.offset, IdSS.amplitude, IdSS.phase
    fM, af = f.amplitude, f.phase

    P10 = (2 * Vdc * Id0 - Vd0 * Id0
           - 0.5 * VdM * IdA * math.cos(aVd - phi)
           - 0.5 * fM * IaM * math.cos(af))

    def F_VdId(theta):
        return (Id0 * VdM * np.sin(theta + aVd)
                + Vd0 * IdA * np.sin(theta + phi)
                - 0.5 * VdM * IdA * np.cos(2 * theta + aVd + phi))

    def oscillatory(theta):
        return (2 * Vdc * IdA * np.sin(theta + phi)
                - F_VdId(theta)
                + 0.5 * fM * IaM * np.cos(2 * theta + af))

    return PowerSplit(P10, oscillatory)


def decompose_P2(params: ConverterParams, spec: HarmonicSpec, f: Sinusoid,
                 IdSS: Sinusoid) -> P2Split:
    """Constant ``P20`` and zero-mean part of ``P2 = 2 Vdc Ia~ - Vd Ia~ - f Id``."""
    _check_omega(params, spec.omega)
    Vdc = params.Vdc
    Vd0, VdM, aVd = spec.Vd0, spec.VdM, spec.alphaVd
    IaM = spec.IaM
    Id0, IdA, phi = IdSS.offset, IdSS.amplitude, IdSS.phase
    fM, af = f.amplitude, f.phase

    P20 = -0.5 * VdM * IaM * math.cos(aVd) - 0.5 * fM * IdA * math.cos(af - phi)

    def F2(theta):
        return Vd0 * IaM * np.sin(theta) - 0.5 * VdM * IaM * np.cos(2 * theta + aVd)

    def F3(theta):
        return Id0 * fM * np.sin(theta + af) - 0.5 * fM * IdA * np.cos(2 * theta + af + phi)

    def oscillatory(theta):
        return 2 * Vdc * IaM * np.sin(theta) - F2(theta) - F3(theta)

    return P2Split(P20, F2, F3, oscillatory)


def C0_and_Vd0minus(params: ConverterParams, spec: HarmonicSpec, f: Sinusoid) -> OffsetBoundary:
    """Offset window ``Vd0- < Vd0 < Vd0+`` inside which ``P10 > 0``.

    Raises
    ------
    InfeasibleOperatingPointError
        If ``Vdc^2 < C0``: no offset makes ``P10`` positive.
    """
    _check_omega(params, spec.omega)
    Z, alpha_LR = circulating_response(params)
    R, Vdc = params.R, params.Vdc
    C0 = (R * spec.VdM ** 2 * math.cos(alpha_LR) / (2 * Z)
          + 0.5 * R * f.amplitude * spec.IaM * math.cos(f.phase))
    disc = Vdc * Vdc - C0
    if disc < 0:
        raise InfeasibleOperatingPointError(
            f"Vdc^2 = {Vdc * Vdc:.6g} < C0 = {C0:.6g}: no circulating offset can keep "
            "P10 positive; lower IaM or VdM, or raise Vdc", C0=C0, Vdc=Vdc)
    root = math.sqrt(disc)
    # Vdc - root loses digits when C0 << Vdc^2; the product of roots is C0
    minus = C0 / (Vdc + root) if Vdc + root > 0 else 0.0
    return OffsetBoundary(C0, minus, Vdc + root)


def P10_of_offset(params: ConverterParams, Vd0: float, C0: float) -> float:
    """``P10 = (2 Vdc Vd0 - Vd0^2 - C0) / R``, a downward parabola in ``Vd0``."""
    if params.R == 0:
        raise ZeroResistanceError("R = 0: P10 is undefined")
    return (2 * params.Vdc * Vd0 - Vd0 * Vd0 - C0) / params.R


def P20_closed_form(params: ConverterParams, spec: HarmonicSpec, f: Sinusoid) -> P20Form:
    """``P20 = -VdM sqrt(a^2+b^2)/2 cos(alphaVd + gamma)``."""
    _check_omega(params, spec.omega)
    Z, alpha_LR = circulating_response(params)
    beta = wrap_angle(-f.phase - alpha_LR)
    a = spec.IaM + f.amplitude * math.cos(beta) / Z
    b = f.amplitude * math.sin(beta) / Z
    gamma = math.atan2(b, a)
    P20 = -0.5 * spec.VdM * math.hypot(a, b) * math.cos(spec.alphaVd + gamma)
    return P20Form(a, b, gamma, P20, beta)


def analyze(params: ConverterParams, spec: HarmonicSpec) -> HarmonicAnalysis:
    """Run the whole analysis for one operating point."""
    f = feedforward_f(params, spec.IaM, spec.omega, spec.alphaVa, spec.VaM)
    Id = steady_state_Id(params, spec)
    boundary = C0_and_Vd0minus(params, spec, f)
    p1 = decompose_P1(params, spec, f, Id)
    p20 = P20_closed_form(params, spec, f)
    return HarmonicAnalysis(
        fM=f.amplitude, alphaF=f.phase, alphaLR=params.alpha_LR,
        Id0=Id.offset, IdM=spec.VdM / params.impedance_Id,
        C0=boundary.C0, Vd0minus=boundary.Vd0minus,
        P10=p1.constant, P20=p20.P20,
        a=p20.a, b=p20.b, gamma=p20.gamma, beta=p20.beta,
    )
