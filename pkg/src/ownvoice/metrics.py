"""Log-spectral distance and mel-cepstral distance between two signals.

Both metrics are computed frame-wise on the STFT of the two signals and
averaged over all frames, pauses included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .stft import FrameParams, analyze

LSD_FLOOR = 1e-8


@dataclass(frozen=True)
class MelConfig:
    """Mel filterbank and cepstrum settings.

    ``fmax=None`` means the Nyquist frequency. ``log_floor`` is relative to
    the largest band energy of each signal.
    """

    num_bands: int = 20
    num_cepstra: int = 13
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-10

    def __post_init__(self):
        if not self.num_bands >= self.num_cepstra >= 1:
            raise ValueError("need num_bands >= num_cepstra >= 1")
        if not self.log_floor > 0:
            raise ValueError("log floor must be positive")
        if self.fmin < 0 or (self.fmax is not None and self.fmax <= self.fmin):
            raise ValueError(f"invalid band edges fmin={self.fmin}, fmax={self.fmax}")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(params: FrameParams, mel: MelConfig) -> np.ndarray:
    """Triangular filters on the one-sided bin grid, shape ``(bands, bins)``."""
    nyquist = params.sample_rate / 2
    fmax = nyquist if mel.fmax is None else mel.fmax
    if fmax > nyquist:
        raise ValueError(f"fmax {fmax} exceeds Nyquist frequency {nyquist}")
    edges = mel_to_hz(np.linspace(hz_to_mel(mel.fmin), hz_to_mel(fmax), mel.num_bands + 2))
    freqs = params.bin_frequencies()
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.clip(np.minimum(rising, falling), 0.0, None)
    if np.any(fb.sum(axis=1) == 0):
        raise ValueError(
            f"{mel.num_bands} mel bands are too narrow for a {params.frame_length}-point FFT"
        )
    return fb


def _check_pair(ref, est):
    ref = np.asarray(ref, dtype=float)
    est = np.asarray(est, dtype=float)
    if ref.shape != est.shape:
        raise ValueError(f"signal lengths differ: {ref.shape} vs {est.shape}")
    if ref.size == 0:
        raise ValueError("signals are empty")
    return ref, est


def _floor(values: np.ndarray, rel: float) -> float:
    return max(rel * float(values.max()), np.finfo(float).tiny)


def lsd_frames(ref, est, params: FrameParams = FrameParams(), floor: float = LSD_FLOOR) -> np.ndarray:
    """Per-frame log-spectral distance in dB."""
    ref, est = _check_pair(ref, est)
    if not floor > 0:
        raise ValueError("floor must be positive")
    A = np.abs(analyze(ref, params).bins)
    B = np.abs(analyze(est, params).bins)
    # difference of logs rather than log of ratio: swapping arguments negates exactly
    diff = 20.0 * (np.log10(A + _floor(A, floor)) - np.log10(B + _floor(B, floor)))
    return np.sqrt(np.mean(diff**2, axis=0))


def lsd(ref, est, params: FrameParams = FrameParams(), floor: float = LSD_FLOOR) -> float:
    """Mean over frames of the RMS (over bins) dB difference of STFT magnitudes.

    Magnitudes are floored at ``floor`` times each signal's peak magnitude.
    """
    return float(np.mean(lsd_frames(ref, est, params, floor)))


def mel_cepstra(signal, params: FrameParams, mel: MelConfig, fb: np.ndarray | None = None) -> np.ndarray:
    """DCT-II (orthonormal) of log mel-band energies, shape ``(frames, bands)``."""
    fb = mel_filterbank(params, mel) if fb is None else fb
    power = np.abs(analyze(signal, params).bins) ** 2
    energies = fb @ power
    logs = np.log(np.maximum(energies, _floor(energies, mel.log_floor)))
    return dct(logs.T, type=2, norm="ortho", axis=1)


def mcd_frames(ref, est, params: FrameParams = FrameParams(), mel: MelConfig = MelConfig()) -> np.ndarray:
    ref, est = _check_pair(ref, est)
    fb = mel_filterbank(params, mel)
    D = mel.num_cepstra
    c_ref = mel_cepstra(ref, params, mel, fb)[:, 1: D + 1]
    c_est = mel_cepstra(est, params, mel, fb)[:, 1: D + 1]
    return (10.0 / np.log(10.0)) * np.sqrt(2.0 * np.sum((c_ref - c_est) ** 2, axis=1))


def mcd(ref, est, params: FrameParams = FrameParams(), mel: MelConfig = MelConfig()) -> float:
    """Mean mel-cepstral distance over frames, ``c_0`` excluded, coefficients ``1..D``."""
    return float(np.mean(mcd_frames(ref, est, params, mel)))
