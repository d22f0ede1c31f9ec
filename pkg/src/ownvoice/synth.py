"""Synthetic paired corpora with planted per-phoneme FIR transfer paths.

Every talker gets one FIR filter per phoneme class: a shared base filter
plus a talker-specific perturbation. Each utterance is a random phoneme
segmentation; the outer-microphone signal is an excitation whose level
drops in the silence class, and the in-ear signal is the outer signal
filtered with the active phoneme's FIR, cross-faded over one frame at
every phoneme boundary.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dataset import Manifest, Utterance, save_manifest, save_model, write_wav
from .labels import PhonemeInventory, build_track, save_inventory, save_label_track
from .rtf import SpeechDependentModel, SpeechIndependentModel
from .stft import FrameParams

EXCITATIONS = ("white-noise", "filtered-noise", "pulse-train")
# tap j of a planted filter is at most TAP_DECAY**j of tap 0, keeping |H| away from zero
TAP_DECAY = 0.4


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    num_talkers: int = 3
    utterances_per_talker: int = 8
    identify_utterances: int | None = None  # None: first half of each talker's utterances
    utterance_length: int = 15000
    phoneme_count: int = 5
    inventory_size: int | None = None  # None: phoneme_count; extra classes never occur
    fir_length: int = 4
    excitation: str = "white-noise"
    perturbation_scale: float = 0.2
    gain_range: tuple[float, float] = (0.5, 2.0)  # per-phoneme gains, log-uniform
    min_span_frames: int = 8
    max_span_frames: int = 24
    silence_level: float = 0.1
    sample_rate: int = 5000
    frame_length: int = 128

    def __post_init__(self):
        for name in ("num_talkers", "utterances_per_talker", "utterance_length", "phoneme_count", "fir_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        lo, hi = self.gain_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid gain range {self.gain_range}")
        object.__setattr__(self, "gain_range", (float(lo), float(hi)))
        if self.perturbation_scale < 0:
            raise ValueError("perturbation scale must be >= 0")
        if self.excitation not in EXCITATIONS:
            raise ValueError(f"excitation must be one of {EXCITATIONS}")
        if not 1 <= self.min_span_frames <= self.max_span_frames:
            raise ValueError("need 1 <= min_span_frames <= max_span_frames")
        if self.fir_length > self.frame_length:
            raise ValueError("FIR length must not exceed the frame length")
        if self.identify_count < 1:
            raise ValueError("every talker needs at least one identification utterance")
        if self.num_classes < self.phoneme_count:
            raise ValueError("inventory smaller than the number of planted phonemes")
        FrameParams(self.frame_length, self.sample_rate)

    @property
    def identify_count(self) -> int:
        if self.identify_utterances is None:
            return max(1, self.utterances_per_talker // 2)
        return self.identify_utterances

    @property
    def num_classes(self) -> int:
        return self.phoneme_count if self.inventory_size is None else self.inventory_size

    @property
    def params(self) -> FrameParams:
        return FrameParams(self.frame_length, self.sample_rate)


@dataclass
class GroundTruth:
    """Planted FIR taps: ``base`` is ``(P, taps)``; ``talkers`` maps id to ``(P, taps)``."""

    base: np.ndarray
    talkers: dict[str, np.ndarray]
    params: FrameParams

    def response(self, talker: str | None = None) -> np.ndarray:
        """Frequency responses on the STFT bin grid, shape ``(P, bins)``."""
        taps = self.base if talker is None else self.talkers[talker]
        return np.fft.rfft(taps, self.params.frame_length, axis=1)

    def model(self, talker: str | None = None, num_classes: int | None = None) -> SpeechDependentModel:
        H = self.response(talker)
        P = H.shape[0] if num_classes is None else num_classes
        table = np.zeros((P, H.shape[1]), complex)
        table[: H.shape[0]] = H
        valid = np.arange(P) < H.shape[0]
        fallback = SpeechIndependentModel(H.mean(axis=0), self.params)
        meta = {"ground_truth": True, "talker": talker or "base"}
        return SpeechDependentModel(table, valid, fallback, meta=meta)


def _base_filters(rng, spec: SynthSpec) -> np.ndarray:
    P, n = spec.phoneme_count, spec.fir_length
    decay = TAP_DECAY ** np.arange(n)
    gains = np.exp(rng.uniform(*np.log(spec.gain_range), P))
    shape = rng.uniform(-1.0, 1.0, (P, n)) * decay
    shape[:, 0] = 1.0
    return gains[:, None] * shape


def _talker_filters(rng, base: np.ndarray, scale: float) -> np.ndarray:
    decay = TAP_DECAY ** np.arange(base.shape[1])
    return base + scale * np.abs(base[:, :1]) * decay * rng.standard_normal(base.shape)


def _segmentation(rng, spec: SynthSpec) -> list[tuple[int, int, int]]:
    """Random spans; phonemes are drawn in shuffled cycles so all classes recur evenly."""
    hop, n = spec.params.hop, spec.utterance_length
    spans, pos, bag = [], 0, []
    while pos < n:
        if not bag:
            bag = list(rng.permutation(spec.phoneme_count))
            if spans and len(bag) > 1 and bag[-1] == spans[-1][2]:
                bag[0], bag[-1] = bag[-1], bag[0]
        p = int(bag.pop())
        length = hop * int(rng.integers(spec.min_span_frames, spec.max_span_frames + 1))
        end = min(pos + length, n)
        if end - pos < hop * spec.min_span_frames and spans:
            s, _, q = spans.pop()  # short tail joins the previous span
            spans.append((s, end, q))
        else:
            spans.append((pos, end, p))
        pos = end
    return spans


def _excitation(rng, spec: SynthSpec, f0: float) -> np.ndarray:
    n = spec.utterance_length
    if spec.excitation == "white-noise":
        return rng.standard_normal(n)
    if spec.excitation == "filtered-noise":
        e = lfilter([1.0], [1.0, -0.9], rng.standard_normal(n))
        return e / np.std(e)
    period = spec.sample_rate / f0
    pulses = np.zeros(n)
    pulses[np.round(np.arange(0, n, period)).astype(int).clip(max=n - 1)] = np.sqrt(period)
    return pulses + 0.01 * rng.standard_normal(n)


def _fade_weights(spans, n: int, P: int, fade: int) -> np.ndarray:
    """Per-phoneme sample weights; linear cross-fades of ``fade`` samples centred on boundaries."""
    w = np.zeros((P, n))
    for s, e, p in spans:
        w[p, s:e] += 1.0
    half = fade // 2
    ramp = (np.arange(fade) + 0.5) / fade
    for (s0, e0, p), (s1, e1, q) in zip(spans, spans[1:]):
        if p == q:
            continue
        lo, hi = max(e0 - half, s0), min(e0 + half, e1)
        r = ramp[lo - (e0 - half): hi - (e0 - half)]
        w[p, lo:hi] = 1.0 - r
        w[q, lo:hi] = r
    return w


def render_utterance(rng, spec: SynthSpec, filters: np.ndarray, f0: float = 120.0):
    """Return ``(outer, inear, spans)`` for one utterance.

    ``outer`` is float32-representable, and ``inear`` is computed from it in
    float64 before rounding to float32, so files reproduce the planted
    relation up to float32 precision.
    """
    spans = _segmentation(rng, spec)
    n = spec.utterance_length
    level = np.ones(n)
    for s, e, p in spans:
        if p == 0:
            level[s:e] = spec.silence_level
    outer = (_excitation(rng, spec, f0) * level * 0.1).astype(np.float32).astype(np.float64)
    weights = _fade_weights(spans, n, spec.phoneme_count, spec.frame_length)
    inear = np.zeros(n)
    for p in range(spec.phoneme_count):
        if np.any(weights[p]):
            inear += weights[p] * lfilter(filters[p], [1.0], outer)
    return outer, inear.astype(np.float32).astype(np.float64), spans


def generate(spec: SynthSpec, out_dir, base_filters=None) -> tuple[Path, GroundTruth]:
    """Write a synthetic corpus under ``out_dir``; returns the manifest path and ground truth.

    ``base_filters`` of shape ``(phoneme_count, taps)`` replaces the random
    base draw; talker perturbations are still applied on top.
    """
    if base_filters is not None:
        base_filters = np.array(base_filters, dtype=float)
        if base_filters.ndim != 2 or base_filters.shape[0] != spec.phoneme_count:
            raise ValueError(f"base filters must have shape ({spec.phoneme_count}, taps)")
        if not 1 <= base_filters.shape[1] <= spec.frame_length:
            raise ValueError("base filter length must lie in [1, frame_length]")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "audio").mkdir(exist_ok=True)
        (out / "labels").mkdir(exist_ok=True)
        (out / "ground_truth").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write corpus to {out}: {exc}") from exc

    inventory = PhonemeInventory.default(spec.num_classes)
    save_inventory(out / "inventory.txt", inventory)

    root = np.random.SeedSequence(spec.seed)
    filter_seq, talkers_seq = root.spawn(2)
    base = _base_filters(np.random.default_rng(filter_seq), spec) if base_filters is None else base_filters
    truth = GroundTruth(base, {}, spec.params)
    entries = []
    for t, talker_seq in enumerate(talkers_seq.spawn(spec.num_talkers)):
        talker = f"t{t + 1:02d}"
        perturb_seq, f0_seq, *utt_seqs = talker_seq.spawn(2 + spec.utterances_per_talker)
        filters = _talker_filters(np.random.default_rng(perturb_seq), base, spec.perturbation_scale)
        f0 = float(np.random.default_rng(f0_seq).uniform(100.0, 200.0))
        truth.talkers[talker] = filters
        for u, seq in enumerate(utt_seqs):
            outer, inear, spans = render_utterance(np.random.default_rng(seq), spec, filters, f0)
            stem = f"{talker}_u{u:03d}"
            paths = (out / "audio" / f"{stem}_outer.wav", out / "audio" / f"{stem}_inear.wav",
                     out / "labels" / f"{stem}.lab")
            write_wav(paths[0], outer, spec.sample_rate)
            write_wav(paths[1], inear, spec.sample_rate)
            track = build_track(spans, spec.utterance_length, inventory.silence_id)
            save_label_track(paths[2], track, inventory)
            split = "identify" if u < spec.identify_count else "evaluate"
            entries.append(Utterance(talker, f"u{u:03d}", *paths, split))
        save_model(out / "ground_truth" / f"{talker}.ovm", truth.model(talker, spec.num_classes))
    save_model(out / "ground_truth" / "base.ovm", truth.model(None, spec.num_classes))

    manifest_path = out / "manifest.json"
    save_manifest(manifest_path, Manifest(spec.sample_rate, entries, out / "inventory.txt", out))
    record = {
        "spec": asdict(spec),
        "base_taps": base.tolist(),
        "talker_taps": {k: v.tolist() for k, v in truth.talkers.items()},
    }
    (out / "ground_truth.json").write_text(json.dumps(record, indent=1) + "\n", encoding="utf-8")
    return manifest_path, truth


def load_ground_truth(out_dir) -> GroundTruth:
    record = json.loads((Path(out_dir) / "ground_truth.json").read_text(encoding="utf-8"))
    spec = record["spec"]
    return GroundTruth(
        np.array(record["base_taps"]),
        {k: np.array(v) for k, v in record["talker_taps"].items()},
        FrameParams(spec["frame_length"], spec["sample_rate"]),
    )
