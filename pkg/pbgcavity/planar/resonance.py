from dataclasses import dataclass
from typing import List

import numpy as np
from loguru import logger
from scipy.optimize import curve_fit
from scipy.signal import find_peaks, peak_widths

from pbgcavity.errors import AmbiguousResonanceError, NoResonanceError
from pbgcavity.planar.solver import ReflectionSpectrum

FIT_HALF_WINDOW = 8.0
MIN_FIT_SAMPLES = 5


def lorentzian(x, A, x0, FWHM):
    """A / (1 + (2(x - x0)/FWHM)²)"""
    return A / (1 + (2 * (x - x0) / FWHM) ** 2)


def offset_lorentzian(x, A, x0, FWHM, y0):
    return lorentzian(x, A, x0, FWHM) + y0


@dataclass(frozen=True)
class ResonanceFit:
    omega0: float
    fwhm: float
    q: float
    amplitude: float
    baseline: float

    @property
    def depth(self) -> float:
        return abs(self.amplitude)


def fit_lorentzian(frequencies: np.ndarray, values: np.ndarray, peak: int, width_guess: float) -> ResonanceFit:
    """Offset-Lorentzian fit around sample `peak` on axes rescaled by `width_guess`."""
    center = frequencies[peak]
    for half_window in (FIT_HALF_WINDOW, 4 * FIT_HALF_WINDOW):
        mask = np.abs(frequencies - center) <= half_window * width_guess
        if mask.sum() >= MIN_FIT_SAMPLES:
            break
    else:
        raise NoResonanceError(
            f"feature at ω={center:.6g} is resolved by {int(mask.sum())} samples",
            module="planar_solver",
        )

    dx = (frequencies[mask] - center) / width_guess
    y = values[mask]
    edge = np.concatenate([y[:2], y[-2:]])
    baseline = float(np.median(edge))
    p0 = (values[peak] - baseline, 0.0, 1.0, baseline)
    popt, _ = curve_fit(offset_lorentzian, dx, y, p0=p0, maxfev=20000)

    A_fit, x0_fit, FWHM_fit, y0_fit = popt
    omega0 = float(center + x0_fit * width_guess)
    fwhm = float(abs(FWHM_fit) * width_guess)
    if fwhm <= 0 or not np.isfinite(fwhm):
        raise NoResonanceError(f"degenerate linewidth at ω={center:.6g}", module="planar_solver")
    return ResonanceFit(omega0=omega0, fwhm=fwhm, q=omega0 / fwhm, amplitude=float(A_fit), baseline=float(y0_fit))


def find_resonances(spectrum: ReflectionSpectrum, min_depth: float = 0.01) -> List[ResonanceFit]:
    """Every peak or dip of R(ω) deeper than `min_depth` and 30% of the strongest feature, fitted."""
    frequencies = np.asarray(spectrum.frequencies, dtype=float)
    deviation = np.asarray(spectrum.reflectance, dtype=float)
    deviation = deviation - np.median(deviation)
    scale = float(np.abs(deviation).max()) if deviation.size else 0.0
    if scale < 1e-9 or scale < min_depth:
        raise NoResonanceError(
            f"no feature deeper than {min_depth:g} in R(ω) (largest deviation {scale:.3g})",
            module="planar_solver",
        )

    prominence = max(min_depth, 0.3 * scale)
    fits = []
    for sign in (1.0, -1.0):
        signal = sign * deviation
        peaks, _ = find_peaks(signal, prominence=prominence)
        if peaks.size == 0:
            continue
        widths, _, left, right = peak_widths(signal, peaks, rel_height=0.5)
        samples = np.arange(len(frequencies))
        for peak, lo, hi in zip(peaks, left, right):
            width_guess = float(np.interp(hi, samples, frequencies) - np.interp(lo, samples, frequencies))
            if width_guess <= 0:
                width_guess = float(np.diff(frequencies).min())
            try:
                fits.append(fit_lorentzian(frequencies, spectrum.reflectance, int(peak), width_guess))
            except (RuntimeError, NoResonanceError) as e:
                logger.warning(f"Skipping feature at ω={frequencies[peak]:.6g}: {e}")

    if not fits:
        raise NoResonanceError("no feature could be fitted with a Lorentzian", module="planar_solver")
    fits.sort(key=lambda fit: fit.depth, reverse=True)
    return fits


def extract_q(
    spectrum: ReflectionSpectrum, min_depth: float = 0.01, exactly_one: bool = False
) -> ResonanceFit:
    """Strongest resonance with Q = ω0 / FWHM."""
    fits = find_resonances(spectrum, min_depth)
    if exactly_one and len(fits) > 1:
        listed = ", ".join(f"{fit.omega0:.6g}" for fit in fits)
        raise AmbiguousResonanceError(
            f"{len(fits)} resonances found at ω = {listed}",
            candidates=fits,
            module="planar_solver",
        )
    best = fits[0]
    logger.info(f"Resonance at ω0={best.omega0:.8f}, FWHM={best.fwhm:.3e}, Q={best.q:.4g}")
    return best
