"""Phoneme inventories, sample-span label tracks and their STFT frame projection.

Label files are plain UTF-8 text with one span per line::

    # start<TAB>end<TAB>phoneme
    0	1000	a
    1000	1480	n

Sample indices are at the corpus sample rate; ``end`` is exclusive. Lines
starting with ``#`` and blank lines are ignored. Samples not covered by any
span are assigned to the silence class.

An inventory file lists one phoneme identifier per line; the line index is
the phoneme index and the identifier ``sil`` marks the silence class.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .stft import FrameParams

SILENCE = "sil"
DEFAULT_NUM_PHONEMES = 62


class LabelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PhonemeInventory:
    classes: tuple[str, ...]
    silence_id: int = 0

    def __post_init__(self):
        if len(self.classes) < 1:
            raise ValueError("inventory must contain at least one class")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("inventory identifiers must be unique")
        if not 0 <= self.silence_id < len(self.classes):
            raise ValueError(f"silence id {self.silence_id} out of range")

    @property
    def size(self) -> int:
        return len(self.classes)

    def index(self, phoneme: str) -> int:
        try:
            return self._lookup[phoneme]
        except KeyError:
            raise LabelFormatError(f"unknown phoneme identifier {phoneme!r}") from None

    @property
    def _lookup(self) -> dict[str, int]:
        lookup = self.__dict__.get("_lookup_cache")
        if lookup is None:
            lookup = {c: i for i, c in enumerate(self.classes)}
            object.__setattr__(self, "_lookup_cache", lookup)
        return lookup

    @classmethod
    def from_classes(cls, classes: Sequence[str]) -> "PhonemeInventory":
        classes = tuple(classes)
        if SILENCE not in classes:
            raise ValueError(f"inventory lacks the silence class {SILENCE!r}")
        return cls(classes, classes.index(SILENCE))

    @classmethod
    def default(cls, size: int = DEFAULT_NUM_PHONEMES) -> "PhonemeInventory":
        """``sil`` followed by generic identifiers ``ph01``, ``ph02``, ..."""
        return cls((SILENCE,) + tuple(f"ph{i:02d}" for i in range(1, size)), 0)


def load_inventory(path) -> PhonemeInventory:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    classes = [ln.strip() for ln in lines if ln.strip()]
    return PhonemeInventory.from_classes(classes)


def save_inventory(path, inventory: PhonemeInventory) -> None:
    Path(path).write_text("".join(c + "\n" for c in inventory.classes), encoding="utf-8")


@dataclass(frozen=True)
class LabelTrack:
    """Contiguous, sorted ``(start, end, phoneme_index)`` spans over ``[0, total_samples)``."""

    spans: tuple[tuple[int, int, int], ...]
    total_samples: int

    def __post_init__(self):
        pos = 0
        for start, end, _ in self.spans:
            if start != pos or end <= start:
                raise ValueError(f"spans must tile [0, {self.total_samples}) contiguously")
            pos = end
        if pos != self.total_samples:
            raise ValueError(f"spans end at {pos}, expected {self.total_samples}")

    def sample_labels(self) -> np.ndarray:
        out = np.empty(self.total_samples, dtype=np.int64)
        for start, end, p in self.spans:
            out[start:end] = p
        return out


def build_track(spans, total_samples: int, silence_id: int) -> LabelTrack:
    """Validate raw spans and fill uncovered samples with ``silence_id``."""
    spans = sorted((int(s), int(e), int(p)) for s, e, p in spans)
    filled = []
    pos = 0
    for start, end, p in spans:
        if start < 0 or end <= start:
            raise LabelFormatError(f"invalid span ({start}, {end})")
        if start < pos:
            raise LabelFormatError(f"span ({start}, {end}) overlaps previous span ending at {pos}")
        if end > total_samples:
            raise LabelFormatError(f"span ({start}, {end}) exceeds signal length {total_samples}")
        if start > pos:
            filled.append((pos, start, silence_id))
        filled.append((start, end, p))
        pos = end
    if pos < total_samples:
        filled.append((pos, total_samples, silence_id))
    return LabelTrack(tuple(filled), total_samples)


def parse_label_lines(lines, inventory: PhonemeInventory):
    spans = []
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split("\t")
        if len(fields) != 3:
            raise LabelFormatError(f"line {lineno}: expected 3 tab-separated fields, got {text!r}")
        try:
            start, end = int(fields[0]), int(fields[1])
        except ValueError:
            raise LabelFormatError(f"line {lineno}: non-integer sample index in {text!r}") from None
        spans.append((start, end, inventory.index(fields[2].strip())))
    return spans


def load_label_track(path, inventory: PhonemeInventory, total_samples: int) -> LabelTrack:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        spans = parse_label_lines(lines, inventory)
        return build_track(spans, total_samples, inventory.silence_id)
    except LabelFormatError as exc:
        raise LabelFormatError(f"{path}: {exc}") from None


def save_label_track(path, track: LabelTrack, inventory: PhonemeInventory) -> None:
    rows = ["# start\tend\tphoneme"]
    rows += [f"{s}\t{e}\t{inventory.classes[p]}" for s, e, p in track.spans]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def to_frame_labels(track: LabelTrack, params: FrameParams, num_frames: int | None = None) -> np.ndarray:
    """Majority-vote phoneme per STFT frame.

    Frame ``f`` covers samples ``[f * hop, f * hop + K)``; samples past the
    end of the signal (zero padding) do not vote. On a tie the phoneme whose
    first sample in the frame comes earliest wins.
    """
    expected = params.num_frames(track.total_samples)
    if num_frames is not None and num_frames != expected:
        raise ValueError(
            f"track of {track.total_samples} samples yields {expected} frames, not {num_frames}"
        )
    K, hop = params.frame_length, params.hop
    starts = np.array([s for s, _, _ in track.spans])
    ends = np.array([e for _, e, _ in track.spans])
    phones = np.array([p for _, _, p in track.spans])
    out = np.empty(expected, dtype=np.int64)
    for f in range(expected):
        lo, hi = f * hop, min(f * hop + K, track.total_samples)
        first = np.searchsorted(ends, lo, side="right")
        last = np.searchsorted(starts, hi, side="left")
        if last - first == 1:
            out[f] = phones[first]
            continue
        counts: dict[int, int] = {}
        for s, e, p in zip(starts[first:last], ends[first:last], phones[first:last]):
            # dict preserves insertion order, i.e. first appearance in the frame
            counts[int(p)] = counts.get(int(p), 0) + min(e, hi) - max(s, lo)
        out[f] = max(counts, key=counts.__getitem__)
    return out


def frame_labels_to_track(labels, params: FrameParams, total_samples: int) -> LabelTrack:
    """Inverse-style expansion: frame ``f``'s label covers samples ``[f*hop, (f+1)*hop)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != params.num_frames(total_samples):
        raise ValueError("label count does not match the signal length")
    hop = params.hop
    spans = []
    for f, p in enumerate(labels):
        start, end = f * hop, min((f + 1) * hop, total_samples)
        if spans and spans[-1][2] == p:
            spans[-1] = (spans[-1][0], end, int(p))
        else:
            spans.append((start, end, int(p)))
    return LabelTrack(tuple(spans), total_samples)
