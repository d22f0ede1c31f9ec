"""STFT analysis and weighted overlap-add (WOLA) synthesis.

Conventions
-----------
* Frames advance by ``hop = K // 2`` samples; frame ``f`` covers samples
  ``[f * hop, f * hop + K)``. The signal is zero-padded so that every sample
  lies in at least one frame, giving ``L = ceil(n / hop)`` frames.
* The same square-root periodic Hann window is used for analysis and
  synthesis; its square overlap-adds to exactly one at 50 % overlap.
* Forward FFT unnormalized, inverse scaled by ``1 / K`` (``numpy.fft``
  defaults). Only the one-sided spectrum (``K // 2 + 1`` bins) is stored.
* Samples in the first hop are covered by a single frame and are therefore
  attenuated by the window taper after a round trip. Every sample from
  ``hop`` onwards is reconstructed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WINDOW_KINDS = ("sqrt-hann",)


@dataclass(frozen=True)
class FrameParams:
    """Frame layout of the STFT.

    Parameters
    ----------
    frame_length : int
        FFT size ``K`` in samples. Must be even and at least 2.
    sample_rate : float
        Sampling frequency in Hz.
    window_kind : str
        Only ``"sqrt-hann"`` is supported.
    """

    frame_length: int = 128
    sample_rate: float = 5000.0
    window_kind: str = "sqrt-hann"

    def __post_init__(self):
        K = self.frame_length
        if int(K) != K or K < 2 or K % 2:
            raise ValueError(f"frame length must be an even integer >= 2, got {K}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if self.window_kind not in WINDOW_KINDS:
            raise ValueError(f"unsupported window kind {self.window_kind!r}")

    @property
    def hop(self) -> int:
        return self.frame_length // 2

    @property
    def num_bins(self) -> int:
        return self.frame_length // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        """Number of frames needed to cover ``num_samples`` samples."""
        return -(-int(num_samples) // self.hop)

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.sample_rate / self.frame_length


@dataclass
class Spectrogram:
    """One-sided complex STFT of shape ``(bins, frames)``."""

    bins: np.ndarray
    params: FrameParams
    num_samples: int

    def __post_init__(self):
        if self.bins.ndim != 2 or self.bins.shape[0] != self.params.num_bins:
            raise ValueError(
                f"expected {self.params.num_bins} bins, got array of shape {self.bins.shape}"
            )

    @property
    def num_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bins.shape

    def with_bins(self, bins: np.ndarray) -> "Spectrogram":
        return Spectrogram(bins, self.params, self.num_samples)


def make_window(params: FrameParams) -> np.ndarray:
    """Square root of the periodic Hann window of length ``K``."""
    K = params.frame_length
    n = np.arange(K)
    hann = 0.5 * (1.0 - np.cos(2.0 * np.pi * n / K))
    return np.sqrt(hann)


def _as_signal(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"signal must be one-dimensional, got shape {x.shape}")
    if x.size == 0:
        raise ValueError("signal is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    return x


def analyze(signal, params: FrameParams) -> Spectrogram:
    """Windowed STFT of a real signal.

    Returns a :class:`Spectrogram` with ``ceil(len(signal) / hop)`` frames;
    the trailing partial frame is zero-padded.
    """
    x = _as_signal(signal)
    K, hop = params.frame_length, params.hop
    L = params.num_frames(x.size)
    padded = np.zeros((L + 1) * hop)
    padded[: x.size] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, K)[::hop][:L]
    spec = np.fft.rfft(frames * make_window(params), axis=1)
    return Spectrogram(np.ascontiguousarray(spec.T), params, x.size)


def synthesize(spec: Spectrogram) -> np.ndarray:
    """Inverse STFT by weighted overlap-add, truncated to ``spec.num_samples``."""
    params = spec.params
    K, hop = params.frame_length, params.hop
    if spec.bins.shape[0] != params.num_bins:
        raise ValueError(f"expected {params.num_bins} bins, got {spec.bins.shape[0]}")
    L = spec.num_frames
    frames = np.fft.irfft(spec.bins.T, n=K, axis=1) * make_window(params)
    # hop = K/2: each frame contributes to exactly two consecutive hop blocks
    out = np.zeros((L + 1, hop))
    out[:L] += frames[:, :hop]
    out[1:] += frames[:, hop:]
    return out.reshape(-1)[: spec.num_samples]


def apply_gains(spec: Spectrogram, gains: np.ndarray) -> Spectrogram:
    """Multiply every frame bin-wise by ``gains``.

    ``gains`` is either a vector of length ``bins`` (time-invariant) or a
    ``(bins, frames)`` matrix.
    """
    gains = np.asarray(gains)
    if gains.ndim == 1:
        gains = gains[:, None]
    if gains.shape[0] != spec.bins.shape[0]:
        raise ValueError(
            f"gain has {gains.shape[0]} bins, spectrogram has {spec.bins.shape[0]}"
        )
    return spec.with_bins(spec.bins * gains)
