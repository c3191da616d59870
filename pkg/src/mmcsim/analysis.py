"""Load-current quality metrics over trace windows.

Windows are half-open, ``[t_start, t_end)``, so one fundamental period at
50 Hz and ``Ts = 1e-4`` holds exactly 200 samples.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .exceptions import InvalidInputError
from .simulation import Trace

METRIC_FIELDS = ("t_start", "t_end", "rmsEIa", "maxAbsEIa",
                 "fundamentalAmplitude", "thd", "avgSpectrum")


@dataclass(frozen=True)
class MetricReport:
    window: tuple[float, float]
    rmsEIa: float
    maxAbsEIa: float
    fundamentalAmplitude: float
    thd: float
    avgSpectrum: float

    def row(self) -> dict:
        d = asdict(self)
        t0, t1 = d.pop("window")
        return {"t_start": t0, "t_end": t1, **d}


def error_metrics(e) -> tuple[float, float]:
    """RMS and maximum absolute value of an error sequence."""
    e = np.asarray(e, dtype=float)
    if e.size == 0:
        raise InvalidInputError("empty error window")
    return float(np.sqrt(np.mean(e * e))), float(np.max(np.abs(e)))


def load_error(trace: Trace, window: tuple[float, float]) -> np.ndarray:
    """``eIa = Ia_des - Is`` over the window."""
    s = trace.window(*window)
    return trace.Ia_des[s] - trace.Is[s]


def tracking_metrics(trace: Trace, window: tuple[float, float]) -> tuple[float, float]:
    """``(RMS(eIa), max|eIa|)`` over ``[t_start, t_end)``."""
    return error_metrics(load_error(trace, window))


def amplitude_spectrum(x) -> np.ndarray:
    """Single-sided amplitudes: ``|X_0|/N`` at DC, ``2|X_k|/N`` above."""
    x = np.asarray(x, dtype=float)
    N = x.size
    if N == 0:
        raise InvalidInputError("empty signal")
    A = 2.0 * np.abs(np.fft.rfft(x)) / N
    A[0] /= 2.0
    return A


def spectrum_summary(x) -> tuple[float, float, float]:
    """``(fundamental, thd, mean amplitude over k = 1..N/2)`` for one period of ``x``.

    ``thd`` is NaN when the fundamental vanishes.
    """
    A = amplitude_spectrum(x)
    if A.size < 2:
        raise InvalidInputError("need at least two samples per period")
    A1 = float(A[1])
    harmonics = float(np.sqrt(np.sum(A[2:] ** 2)))
    thd = harmonics / A1 if A1 > 0 else float("nan")
    return A1, thd, float(np.mean(A[1:]))


def samples_per_period(omega: float, Ts: float) -> int:
    return int(round(2 * math.pi / (omega * Ts)))


def spectrum_metrics(trace: Trace, window: tuple[float, float],
                     omega: float = 2 * math.pi * 50) -> tuple[float, float, float]:
    """Fundamental amplitude, THD and mean spectral amplitude of ``Is``.

    The window must hold exactly one fundamental period, which keeps the
    fundamental free of leakage under the rectangular window.
    """
    s = trace.window(*window)
    x = trace.Is[s]
    N = samples_per_period(omega, trace.Ts)
    if x.size != N:
        raise InvalidInputError(
            f"spectrum window must hold one period ({N} samples), got {x.size}")
    return spectrum_summary(x)


def metric_report(trace: Trace, window: tuple[float, float],
                  omega: float = 2 * math.pi * 50) -> MetricReport:
    rms, peak = tracking_metrics(trace, window)
    A1, thd, avg = spectrum_metrics(trace, window, omega)
    return MetricReport((float(window[0]), float(window[1])), rms, peak, A1, thd, avg)


def parseval_residual(x) -> float:
    """Relative gap between time-domain and DFT-domain energy."""
    x = np.asarray(x, dtype=float)
    N = x.size
    X = np.fft.fft(x)
    time_side = float(np.sum(x * x) / N)
    freq_side = float(np.sum(np.abs(X) ** 2) / N**2)
    scale = max(abs(time_side), np.finfo(float).tiny)
    return abs(time_side - freq_side) / scale


def relative_change(new: float, old: float) -> float:
    return (new - old) / old if old else float("nan")


def format_report(reports: Sequence[MetricReport], title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'window [s]':>18} {'RMS(eIa) mA':>12} {'max|eIa| mA':>12} "
                 f"{'A1 A':>8} {'THD':>8} {'avgSpec A':>10}")
    for r in reports:
        lines.append(f"{f'[{r.window[0]:g}, {r.window[1]:g})':>18} {1e3 * r.rmsEIa:12.2f} "
                     f"{1e3 * r.maxAbsEIa:12.2f} {r.fundamentalAmplitude:8.4f} "
                     f"{r.thd:8.4f} {r.avgSpectrum:10.5f}")
    return "\n".join(lines)


def comparison_table(by_mode: Mapping[str, Sequence[MetricReport]]) -> str:
    """Side-by-side metrics per window; the optimal row carries changes against constant."""
    modes = list(by_mode)
    windows = [r.window for r in by_mode[modes[0]]]
    head = "metric".ljust(22) + "".join(f"[{a:g}, {b:g})".rjust(24) for a, b in windows)
    lines = [head]
    base = by_mode.get("constant")
    for mode in modes:
        lines.append(f"-- {mode} reference")
        for label, attr, scale in (("RMS(eIa) [mA]", "rmsEIa", 1e3),
                                   ("max|eIa| [mA]", "maxAbsEIa", 1e3),
                                   ("fundamental [A]", "fundamentalAmplitude", 1.0),
                                   ("THD [-]", "thd", 1.0)):
            cells = []
            for i, r in enumerate(by_mode[mode]):
                v = getattr(r, attr)
                cell = f"{v * scale:.4g}"
                if base is not None and mode != "constant":
                    cell += f" ({100 * relative_change(v, getattr(base[i], attr)):+.2f} %)"
                cells.append(cell.rjust(24))
            lines.append(label.ljust(22) + "".join(cells))
    return "\n".join(lines)
