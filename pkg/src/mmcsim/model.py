"""Plant equations of the half-bridge MMC leg.

Three levels of description live here:

* the full switched model, with one state per submodule capacitor and the
  two arm currents;
* the averaged model, where each arm is represented by its mean capacitor
  voltage and the insertion count;
* the sum/difference coordinates ``Is = I1 + I2`` (load current) and
  ``Id = I1 - I2`` (circulating current), in which the inductive part
  decouples, together with the squared-voltage form of the capacitive part.
"""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidInputError
from .params import AverageState, ConverterParams, FullState, SwitchCommand

# I_L = TRANSFORM @ I_w, V_C = TRANSFORM @ V_w
TRANSFORM = 0.5 * np.array([[1.0, 1.0], [1.0, -1.0]])


def arm_voltages(params: ConverterParams, cmd: SwitchCommand, vc) -> tuple[float, float]:
    """Commutating voltages ``V1 = Vdc - T1.vc1`` and ``V2 = -Vdc + T2.vc2``."""
    vc = np.asarray(vc, dtype=float)
    n = params.n
    if vc.shape != (2 * n,):
        raise InvalidInputError(f"vc must have length 2n = {2 * n}, got shape {vc.shape}")
    cmd.check(params)
    T = cmd.T
    V1 = params.Vdc - float(T[:n] @ vc[:n])
    V2 = -params.Vdc + float(T[n:] @ vc[n:])
    return V1, V2


def level_voltages(params: ConverterParams, n1: int, n2: int,
                   Vc1bar: float, Vc2bar: float) -> tuple[float, float]:
    """Admissible arm voltages of the averaged model for insertion counts ``n1, n2``."""
    _check_count(params, n1, "n1")
    _check_count(params, n2, "n2")
    return params.Vdc - n1 * Vc1bar, -params.Vdc + n2 * Vc2bar


def current_derivative(params: ConverterParams, I1: float, I2: float,
                       V1: float, V2: float, Va: float) -> tuple[float, float]:
    """Arm-current derivatives ``L_L^-1 (A_L I + V - Va)``."""
    M = params.current_state_matrix
    Li = params.inductance_inverse
    e1 = V1 - Va
    e2 = V2 - Va
    d1 = M[0, 0] * I1 + M[0, 1] * I2 + Li[0, 0] * e1 + Li[0, 1] * e2
    d2 = M[1, 0] * I1 + M[1, 1] * I2 + Li[1, 0] * e1 + Li[1, 1] * e2
    return d1, d2


def full_model_derivative(params: ConverterParams, state: FullState,
                          cmd: SwitchCommand, Va: float):
    """Time derivative of the full switched model.

    Returns
    -------
    dvc : ndarray, shape (2n,)
        Capacitor-voltage derivatives ``T_i I1 / C_i`` (upper) and
        ``-T_i I2 / C_i`` (lower).
    dI1, dI2 : float
        Arm-current derivatives.
    """
    state.check(params)
    cmd.check(params)
    x = full_rhs(params, state.as_vector(), cmd.T, Va)
    return x[:-2], float(x[-2]), float(x[-1])


def full_rhs(params: ConverterParams, x: np.ndarray, T: np.ndarray, Va: float) -> np.ndarray:
    """Flat right-hand side of the full model, ``x = [vc..., I1, I2]``."""
    n = params.n
    vc = x[:2 * n]
    I1 = x[2 * n]
    I2 = x[2 * n + 1]
    caps = params.capacitances
    dx = np.empty_like(x)
    dx[:n] = T[:n] * I1 / caps[:n]
    dx[n:2 * n] = -T[n:] * I2 / caps[n:]
    V1 = params.Vdc - float(T[:n] @ vc[:n])
    V2 = -params.Vdc + float(T[n:] @ vc[n:])
    dx[2 * n], dx[2 * n + 1] = current_derivative(params, I1, I2, V1, V2, Va)
    return dx


def average_model_derivative(params: ConverterParams, state: AverageState,
                             n1: int, n2: int, Va: float) -> np.ndarray:
    """Derivative ``[dVc1bar, dVc2bar, dI1, dI2]`` of the averaged model."""
    C_T = params.C_T
    V1, V2 = level_voltages(params, n1, n2, state.Vc1bar, state.Vc2bar)
    dI1, dI2 = current_derivative(params, state.I1, state.I2, V1, V2, Va)
    return np.array([n1 * state.I1 / C_T, -n2 * state.I2 / C_T, dI1, dI2])


def sum_diff_transform(I1: float, I2: float) -> tuple[float, float]:
    """Map arm quantities to (sum, difference)."""
    return I1 + I2, I1 - I2


def inverse_transform(Is: float, Id: float) -> tuple[float, float]:
    """Map (sum, difference) back to arm quantities."""
    return (Is + Id) / 2, (Is - Id) / 2


def transformed_matrices(params: ConverterParams) -> tuple[np.ndarray, np.ndarray]:
    """Congruent transforms ``T_w' L_L T_w`` and ``T_w' A_L T_w``."""
    Tw = TRANSFORM
    return Tw.T @ params.inductance_matrix @ Tw, Tw.T @ params.resistance_matrix @ Tw


def decoupled_dynamics(params: ConverterParams, Is: float, Id: float,
                       Vs: float, Vd: float, Va: float) -> tuple[float, float]:
    """Derivatives of the load current and the circulating current.

    ``L_T dIs/dt = -R_T Is - 2 Va + Vs`` and ``L dId/dt = -R Id + Vd``.
    """
    dIs = (-params.R_T * Is - 2 * Va + Vs) / params.L_T
    dId = (-params.R * Id + Vd) / params.L
    return dIs, dId


def power_terms(params: ConverterParams, Vd: float, Id: float, Ia_des: float,
                f_t: float) -> tuple[float, float]:
    """Sum and difference power terms of the squared-voltage dynamics."""
    P1 = 2 * params.Vdc * Id - Vd * Id - f_t * Ia_des
    P2 = 2 * params.Vdc * Ia_des - Vd * Ia_des - f_t * Id
    return P1, P2


def squared_voltage_dynamics(params: ConverterParams, Vc1bar: float, Vc2bar: float,
                             Vd: float, Id: float, Ia_des: float, f_t: float):
    """Capacitive dynamics in squared-voltage coordinates.

    With the load current on its reference and ``Vs`` on its feedforward
    value ``f_t``, the squared arm voltages obey
    ``2 C_T d(Vc1^2)/dt = P1 + P2`` and ``2 C_T d(Vc2^2)/dt = P1 - P2``.
    The mean voltages only enter through the state they are the square of,
    so ``Vc1bar`` and ``Vc2bar`` are accepted for interface symmetry with
    :func:`mean_voltage_dynamics`.

    Returns
    -------
    (dV1sq, dV2sq), (P1, P2)
    """
    P1, P2 = power_terms(params, Vd, Id, Ia_des, f_t)
    two_ct = 2 * params.C_T
    return ((P1 + P2) / two_ct, (P1 - P2) / two_ct), (P1, P2)


def mean_voltage_dynamics(params: ConverterParams, Vc1bar: float, Vc2bar: float,
                          Vs: float, Vd: float, Is: float, Id: float) -> tuple[float, float]:
    """Mean capacitor-voltage derivatives in transformed coordinates.

    ``4 C_T Vc1 dVc1/dt = (2 Vdc - Vs - Vd)(Is + Id)`` and
    ``4 C_T Vc2 dVc2/dt = -(2 Vdc + Vs - Vd)(Is - Id)``.
    """
    C_T = params.C_T
    Vdc = params.Vdc
    d1 = (2 * Vdc - Vs - Vd) * (Is + Id) / (4 * C_T * Vc1bar)
    d2 = -(2 * Vdc + Vs - Vd) * (Is - Id) / (4 * C_T * Vc2bar)
    return d1, d2


def stored_energy(params: ConverterParams, x: np.ndarray) -> float:
    """Capacitor plus inductor energy of a full-model state vector."""
    n = params.n
    vc = x[:2 * n]
    I = x[2 * n:]
    return float(0.5 * params.capacitances @ (vc * vc) + 0.5 * I @ params.inductance_matrix @ I)


def _check_count(params: ConverterParams, k: int, name: str):
    if not 0 <= k <= params.n:
        raise InvalidInputError(f"{name} = {k} outside [0, {params.n}]")
