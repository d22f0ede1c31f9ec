"""Relative transfer function (RTF) models between outer and in-ear microphones.

Estimation works on running sums so that individual, pooled and
leave-one-out (talker-averaged) models all come from the same code path::

    acc = RtfAccumulator.empty(num_phonemes, params.num_bins)
    for outer, inear, labels in utterances:
        acc = accumulate(acc, analyze(outer, params), analyze(inear, params), labels)
    si = finalize_speech_independent(acc, params)
    sd = finalize_speech_dependent(acc, params)

Row ``P`` of the accumulator holds the pooled (label-agnostic) sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .stft import FrameParams, Spectrogram, analyze, apply_gains, synthesize

POWER_FLOOR = 1e-12
DEFAULT_MIN_FRAMES = 10
DEFAULT_ALPHA = 0.8


@dataclass
class RtfAccumulator:
    """Cross-power ``sum Y_i Y_o^*`` and auto-power ``sum |Y_o|^2`` per phoneme and bin."""

    cross: np.ndarray  # (P + 1, bins) complex
    power: np.ndarray  # (P + 1, bins) real
    frame_counts: np.ndarray  # (P + 1,) int

    @classmethod
    def empty(cls, num_phonemes: int, num_bins: int) -> "RtfAccumulator":
        if num_phonemes < 1 or num_bins < 1:
            raise ValueError("accumulator needs at least one phoneme and one bin")
        return cls(
            np.zeros((num_phonemes + 1, num_bins), complex),
            np.zeros((num_phonemes + 1, num_bins)),
            np.zeros(num_phonemes + 1, dtype=np.int64),
        )

    @property
    def num_phonemes(self) -> int:
        return self.cross.shape[0] - 1

    @property
    def num_bins(self) -> int:
        return self.cross.shape[1]

    @property
    def pooled(self) -> int:
        return self.num_phonemes

    def copy(self) -> "RtfAccumulator":
        return RtfAccumulator(self.cross.copy(), self.power.copy(), self.frame_counts.copy())


def accumulate(
    acc: RtfAccumulator,
    spec_o: Spectrogram,
    spec_i: Spectrogram,
    labels=None,
) -> RtfAccumulator:
    """Add the frames of one utterance to a copy of ``acc``.

    With ``labels=None`` only the pooled row is updated.
    """
    if spec_o.shape != spec_i.shape:
        raise ValueError(f"spectrogram shapes differ: {spec_o.shape} vs {spec_i.shape}")
    if spec_o.shape[0] != acc.num_bins:
        raise ValueError(f"accumulator has {acc.num_bins} bins, spectrogram {spec_o.shape[0]}")
    Yo, Yi = spec_o.bins.T, spec_i.bins.T  # (frames, bins)
    cross = Yi * Yo.conj()
    power = Yo.real**2 + Yo.imag**2
    out = acc.copy()
    P = acc.pooled
    # same sequential summation for pooled and phoneme rows, so a
    # single-phoneme corpus yields bit-identical rows
    np.add.at(out.cross, np.full(Yo.shape[0], P), cross)
    np.add.at(out.power, np.full(Yo.shape[0], P), power)
    out.frame_counts[P] += Yo.shape[0]
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (Yo.shape[0],):
            raise ValueError(f"{labels.size} labels for {Yo.shape[0]} frames")
        if labels.size and (labels.min() < 0 or labels.max() >= P):
            raise ValueError(f"phoneme labels must lie in [0, {P})")
        np.add.at(out.cross, labels, cross)
        np.add.at(out.power, labels, power)
        np.add.at(out.frame_counts, labels, 1)
    return out


def merge(a: RtfAccumulator, b: RtfAccumulator) -> RtfAccumulator:
    if a.cross.shape != b.cross.shape:
        raise ValueError(f"accumulator shapes differ: {a.cross.shape} vs {b.cross.shape}")
    return RtfAccumulator(a.cross + b.cross, a.power + b.power, a.frame_counts + b.frame_counts)


def merge_all(accs) -> RtfAccumulator:
    accs = list(accs)
    if not accs:
        raise ValueError("nothing to merge")
    out = accs[0].copy()
    for acc in accs[1:]:
        out = merge(out, acc)
    return out


def leave_one_out(per_talker: dict, held_out) -> RtfAccumulator:
    """Merge every talker's accumulator except ``held_out``, in dict order."""
    others = [acc for talker, acc in per_talker.items() if talker != held_out]
    if not others:
        raise ValueError(f"no talkers left after holding out {held_out!r}")
    return merge_all(others)


@dataclass
class SpeechIndependentModel:
    rtf: np.ndarray  # (bins,) complex
    params: FrameParams
    meta: dict = field(default_factory=dict)

    kind = "speech-independent"

    def __post_init__(self):
        self.rtf = np.asarray(self.rtf, dtype=complex)
        if self.rtf.shape != (self.params.num_bins,):
            raise ValueError(f"RTF has shape {self.rtf.shape}, expected ({self.params.num_bins},)")
        if not np.all(np.isfinite(self.rtf)):
            raise ValueError("RTF contains non-finite values")


@dataclass
class SpeechDependentModel:
    """Phoneme-indexed RTF table; rows flagged invalid are served by ``fallback``."""

    rtf_table: np.ndarray  # (P, bins) complex
    valid: np.ndarray  # (P,) bool
    fallback: SpeechIndependentModel
    smoothing_alpha: float = DEFAULT_ALPHA
    meta: dict = field(default_factory=dict)

    kind = "speech-dependent"

    def __post_init__(self):
        self.rtf_table = np.asarray(self.rtf_table, dtype=complex)
        self.valid = np.asarray(self.valid, dtype=bool)
        P = self.rtf_table.shape[0]
        if self.rtf_table.shape != (P, self.params.num_bins) or self.valid.shape != (P,):
            raise ValueError("RTF table, validity flags and fallback disagree in shape")
        if not 0.0 <= self.smoothing_alpha < 1.0:
            raise ValueError(f"smoothing constant must lie in [0, 1), got {self.smoothing_alpha}")

    @property
    def params(self) -> FrameParams:
        return self.fallback.params

    @property
    def num_phonemes(self) -> int:
        return self.rtf_table.shape[0]

    def effective_table(self) -> np.ndarray:
        """RTF table with invalid rows replaced by the fallback RTF."""
        return np.where(self.valid[:, None], self.rtf_table, self.fallback.rtf[None, :])


def _ratio(cross: np.ndarray, power: np.ndarray, floor: float) -> np.ndarray:
    out = np.zeros(cross.shape, complex)
    ok = power >= floor
    ok &= power > 0
    out[ok] = cross[ok] / power[ok]
    return out


def _power_floor(acc: RtfAccumulator, power_floor: float) -> float:
    return power_floor * acc.power[acc.pooled].max()


def finalize_speech_independent(
    acc: RtfAccumulator, params: FrameParams, power_floor: float = POWER_FLOOR, meta=None
) -> SpeechIndependentModel:
    """Least-squares RTF from the pooled sums.

    Bins whose auto-power is below ``power_floor`` times the largest pooled
    bin power get an RTF of zero.
    """
    P = acc.pooled
    if acc.frame_counts[P] == 0 or not np.any(acc.power[P] > 0):
        raise ValueError("accumulator is empty")
    floor = _power_floor(acc, power_floor)
    return SpeechIndependentModel(_ratio(acc.cross[P], acc.power[P], floor), params, dict(meta or {}))


def finalize_speech_dependent(
    acc: RtfAccumulator,
    params: FrameParams,
    fallback_min_frames: int = DEFAULT_MIN_FRAMES,
    smoothing_alpha: float = DEFAULT_ALPHA,
    power_floor: float = POWER_FLOOR,
    meta=None,
) -> SpeechDependentModel:
    """Per-phoneme least-squares RTFs.

    Phonemes seen in fewer than ``fallback_min_frames`` frames are flagged
    invalid; their rows are left at zero and simulation uses the
    speech-independent fallback instead.
    """
    fallback = finalize_speech_independent(acc, params, power_floor, meta)
    floor = _power_floor(acc, power_floor)
    P = acc.num_phonemes
    valid = acc.frame_counts[:P] >= max(fallback_min_frames, 1)
    table = np.zeros((P, acc.num_bins), complex)
    table[valid] = _ratio(acc.cross[:P][valid], acc.power[:P][valid], floor)
    return SpeechDependentModel(table, valid, fallback, smoothing_alpha, dict(meta or {}))


def smoothed_rtfs(model: SpeechDependentModel, labels, alpha: float | None = None) -> np.ndarray:
    """Frame-wise recursively smoothed RTFs, shape ``(frames, bins)``.

    ``H[l] = alpha * H[l-1] + (1 - alpha) * raw[l]`` with ``H[0] = raw[0]``,
    where ``raw[l]`` is the RTF of the phoneme active in frame ``l``.
    """
    alpha = model.smoothing_alpha if alpha is None else float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"smoothing constant must lie in [0, 1), got {alpha}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= model.num_phonemes):
        raise ValueError(f"phoneme labels must lie in [0, {model.num_phonemes})")
    raw = model.effective_table()[labels]
    out = np.empty_like(raw)
    if labels.size == 0:
        return out
    out[0] = raw[0]
    # raw + alpha * (prev - raw): algebraically the convex combination, and
    # exact when prev == raw or alpha == 0
    for l in range(1, labels.size):
        out[l] = raw[l] + alpha * (out[l - 1] - raw[l])
    return out


def _check_params(model_params: FrameParams, params: FrameParams | None) -> FrameParams:
    if params is None:
        return model_params
    if params.num_bins != model_params.num_bins:
        raise ValueError(
            f"model has {model_params.num_bins} bins, frame parameters give {params.num_bins}"
        )
    return params


def simulate_speech_independent(model: SpeechIndependentModel, y_o, params: FrameParams | None = None):
    """Filter ``y_o`` in the STFT domain with the model RTF and resynthesize."""
    params = _check_params(model.params, params)
    return synthesize(apply_gains(analyze(y_o, params), model.rtf))


def simulate_speech_dependent(
    model: SpeechDependentModel,
    y_o,
    labels,
    params: FrameParams | None = None,
    alpha: float | None = None,
):
    """Frame-wise phoneme-selected, smoothed RTF filtering of ``y_o``.

    ``labels`` are the frame labels of ``y_o`` itself.
    """
    params = _check_params(model.params, params)
    spec = analyze(y_o, params)
    labels = np.asarray(labels)
    if labels.shape != (spec.num_frames,):
        raise ValueError(f"{labels.size} labels for {spec.num_frames} frames")
    gains = smoothed_rtfs(model, labels, alpha)
    return synthesize(apply_gains(spec, gains.T))
