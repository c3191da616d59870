"""Converter parameters and plant state containers.

Capacitors are indexed upper arm first (top to bottom, ``0..n-1``) and
lower arm second (``n..2n-1``). Every vector in the package, in files and
in APIs, uses that ordering.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .exceptions import ConfigurationError, InvalidInputError

Capacitance = Union[float, Sequence[float]]


@dataclass(frozen=True)
class ConverterParams:
    """Physical constants of a single-phase half-bridge MMC leg and its load.

    Parameters
    ----------
    L, R : float
        Arm inductance [H] and arm resistance [Ohm].
    C : float or sequence of float
        Submodule capacitance [F]. A sequence of length ``2n`` gives a
        per-capacitor value (full model only).
    n : int
        Submodules per arm.
    La, Ra : float
        Load inductance [H] and load resistance [Ohm].
    Vdc : float
        Voltage of each of the two DC rail sources [V].
    VaM, alphaVa : float
        Amplitude [V] and phase [rad] of the load voltage source
        ``Va(t) = VaM sin(omega t + alphaVa)``.
    omega : float
        Electrical angular frequency [rad/s].
    Ts : float
        Control sample time [s].
    """

    L: float = 10e-3
    R: float = 0.1
    C: Capacitance = 1000e-6
    n: int = 8
    La: float = 50e-3
    Ra: float = 19.0
    Vdc: float = 250.0
    VaM: float = 10.0
    alphaVa: float = math.pi / 6
    omega: float = 2 * math.pi * 50
    Ts: float = 1e-4

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool) or self.n < 1:
            raise ConfigurationError(f"n must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("L", "La", "Ts", "omega"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be strictly positive, got {value!r}")
        for name in ("R", "Ra", "Vdc", "VaM"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigurationError(f"{name} must be nonnegative, got {value!r}")
        if not math.isfinite(self.alphaVa):
            raise ConfigurationError("alphaVa must be finite")
        if np.ndim(self.C) == 0:
            if not (math.isfinite(self.C) and self.C > 0):
                raise ConfigurationError(f"C must be strictly positive, got {self.C!r}")
            object.__setattr__(self, "C", float(self.C))
        else:
            caps = tuple(float(c) for c in self.C)
            if len(caps) != 2 * self.n:
                raise ConfigurationError(
                    f"C has {len(caps)} entries, expected 2n = {2 * self.n}")
            if not all(math.isfinite(c) and c > 0 for c in caps):
                raise ConfigurationError("every capacitance must be strictly positive")
            object.__setattr__(self, "C", caps)
        if self.R == 0:
            warnings.warn("R = 0: the circulating-current offset Vd0/R is undefined; "
                          "the controller will refuse this configuration", stacklevel=3)

    # -- derived constants -------------------------------------------------

    @cached_property
    def capacitances(self) -> np.ndarray:
        """Per-capacitor capacitance vector of length ``2n``."""
        if isinstance(self.C, tuple):
            return np.array(self.C)
        return np.full(2 * self.n, self.C)

    @property
    def uniform_capacitance(self) -> bool:
        caps = self.capacitances
        return bool(np.all(caps == caps[0]))

    @property
    def C_unit(self) -> float:
        """Common submodule capacitance; raises if capacitances differ."""
        self.require_uniform()
        return float(self.capacitances[0])

    def require_uniform(self):
        if not self.uniform_capacitance:
            raise ConfigurationError(
                "the averaged model and the controller need uniform capacitances")

    @property
    def C_T(self) -> float:
        return self.n * self.C_unit

    @property
    def L_T(self) -> float:
        return self.L + 2 * self.La

    @property
    def R_T(self) -> float:
        return self.R + 2 * self.Ra

    @cached_property
    def impedance_Id(self) -> float:
        """Magnitude ``sqrt(R^2 + L^2 omega^2)`` of the circulating branch."""
        return math.hypot(self.R, self.L * self.omega)

    @cached_property
    def alpha_LR(self) -> float:
        """Phase lag ``arctan(L omega / R)`` of the circulating branch."""
        return math.atan2(self.L * self.omega, self.R)

    @cached_property
    def inductance_matrix(self) -> np.ndarray:
        """Arm-current inductance matrix ``[[L+La, La], [La, L+La]]``."""
        return np.array([[self.L + self.La, self.La],
                         [self.La, self.L + self.La]])

    @cached_property
    def resistance_matrix(self) -> np.ndarray:
        """State matrix of the inductive part, ``-[[R+Ra, Ra], [Ra, R+Ra]]``."""
        return -np.array([[self.R + self.Ra, self.Ra],
                          [self.Ra, self.R + self.Ra]])

    @cached_property
    def inductance_inverse(self) -> np.ndarray:
        # closed-form 2x2 inverse; det = L (L + 2 La) > 0 by validation
        a = self.L + self.La
        b = self.La
        det = a * a - b * b
        if det <= 0:
            raise ConfigurationError("arm inductance matrix is singular")
        return np.array([[a, -b], [-b, a]]) / det

    @cached_property
    def current_state_matrix(self) -> np.ndarray:
        """``L_L^-1 A_L``, the free-response matrix of the arm currents."""
        return self.inductance_inverse @ self.resistance_matrix

    def Va(self, t):
        """Load source voltage at time ``t`` (scalar or array)."""
        if np.ndim(t):
            return self.VaM * np.sin(self.omega * np.asarray(t) + self.alphaVa)
        return self.VaM * math.sin(self.omega * t + self.alphaVa)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    @property
    def samples_per_period(self) -> int:
        return int(round(self.period / self.Ts))

    def with_(self, **changes) -> "ConverterParams":
        return replace(self, **changes)


def table1_params(**overrides) -> ConverterParams:
    """Open-loop verification setup: n = 3, otherwise the standard leg."""
    values = dict(n=3)
    values.update(overrides)
    return ConverterParams(**values)


def table2_params(**overrides) -> ConverterParams:
    """Closed-loop scenario setup: n = 8."""
    values = dict(n=8)
    values.update(overrides)
    return ConverterParams(**values)


TABLE1_INITIAL_VOLTAGE = 110.0
TABLE2_INITIAL_VOLTAGE = 31.25


@dataclass(frozen=True)
class FullState:
    """State of the switched model: ``2n`` capacitor voltages and two arm currents."""

    vc: np.ndarray
    I1: float = 0.0
    I2: float = 0.0

    def __post_init__(self):
        vc = np.array(self.vc, dtype=float)
        if vc.ndim != 1:
            raise InvalidInputError("vc must be a 1-D vector")
        if not (np.all(np.isfinite(vc)) and math.isfinite(self.I1) and math.isfinite(self.I2)):
            raise InvalidInputError("state entries must be finite")
        vc.setflags(write=False)
        object.__setattr__(self, "vc", vc)
        object.__setattr__(self, "I1", float(self.I1))
        object.__setattr__(self, "I2", float(self.I2))

    @classmethod
    def uniform(cls, n: int, voltage: float, I1: float = 0.0, I2: float = 0.0) -> "FullState":
        return cls(np.full(2 * n, float(voltage)), I1, I2)

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "FullState":
        return cls(x[:-2], x[-2], x[-1])

    @property
    def n(self) -> int:
        return len(self.vc) // 2

    def check(self, params: ConverterParams):
        if len(self.vc) != 2 * params.n:
            raise InvalidInputError(
                f"state has {len(self.vc)} capacitor voltages, expected {2 * params.n}")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.vc, [self.I1, self.I2]])

    @property
    def arm_means(self) -> tuple[float, float]:
        n = self.n
        return float(np.mean(self.vc[:n])), float(np.mean(self.vc[n:]))


@dataclass(frozen=True)
class AverageState:
    """State of the averaged capacitive model."""

    Vc1bar: float
    Vc2bar: float
    I1: float = 0.0
    I2: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array([self.Vc1bar, self.Vc2bar, self.I1, self.I2])


@dataclass(frozen=True)
class SwitchCommand:
    """Gate vector ``T`` (1 = inserted) with its per-arm insertion counts."""

    T: np.ndarray
    n1: int = field(init=False)
    n2: int = field(init=False)

    def __post_init__(self):
        T = np.array(self.T)
        if T.ndim != 1 or len(T) % 2 or len(T) == 0:
            raise InvalidInputError("T must be a 1-D vector of even length 2n")
        if not np.all((T == 0) | (T == 1)):
            raise InvalidInputError("gate entries must be 0 or 1")
        T = T.astype(np.int8)
        T.setflags(write=False)
        n = len(T) // 2
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "n1", int(T[:n].sum()))
        object.__setattr__(self, "n2", int(T[n:].sum()))

    @classmethod
    def from_arms(cls, T1: Sequence[int], T2: Sequence[int]) -> "SwitchCommand":
        if len(T1) != len(T2):
            raise InvalidInputError("both arms need the same number of gates")
        return cls(np.concatenate([np.asarray(T1), np.asarray(T2)]))

    @classmethod
    def bypass_all(cls, n: int) -> "SwitchCommand":
        return cls(np.zeros(2 * n, dtype=np.int8))

    @property
    def n(self) -> int:
        return len(self.T) // 2

    def check(self, params: ConverterParams):
        if len(self.T) != 2 * params.n:
            raise InvalidInputError(
                f"gate vector has {len(self.T)} entries, expected {2 * params.n}")
