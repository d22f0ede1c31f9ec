"""Audio, manifest and model-file input/output.

Manifest (JSON, paths relative to the manifest's directory)::

    {
      "format": "ownvoice-manifest",
      "version": 1,
      "sample_rate": 5000,
      "inventory": "inventory.txt",
      "utterances": [
        {"talker": "t01", "utterance": "u000", "split": "identify",
         "outer": "audio/t01_u000_outer.wav", "inear": "audio/t01_u000_inear.wav",
         "labels": "labels/t01_u000.lab"},
        ...
      ]
    }

``split`` is ``identify`` (used for model estimation) or ``evaluate``
(held out). Entry order is significant: it fixes every ordering rule
downstream (pool order for length matching, accumulation order).

Model file layout::

    line 1   b"OWNVOICE-MODEL\\n"
    line 2   JSON header, UTF-8, sorted keys, terminated by b"\\n"
    rest     payload: complex bins as interleaved (re, im) little-endian float64

Header keys: ``version``, ``kind`` (``speech-independent``,
``speech-dependent``, ``adaptive``), ``sample_rate``, ``frame_length``,
``hop``, ``window``, ``num_bins``, ``num_phonemes``, ``smoothing_alpha``,
``valid`` (0/1 per phoneme), NLMS settings for adaptive models, ``meta``
(creation metadata), ``payload_bytes`` and ``payload_sha256``.
Speech-independent payload: ``num_bins`` values. Speech-dependent payload:
the ``num_phonemes x num_bins`` table row by row, then the fallback RTF.
Adaptive models carry no payload.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .labels import LabelTrack, PhonemeInventory, load_inventory, load_label_track
from .nlms import NlmsConfig
from .rtf import SpeechDependentModel, SpeechIndependentModel
from .stft import FrameParams

MODEL_MAGIC = b"OWNVOICE-MODEL\n"
MODEL_VERSION = 1
MANIFEST_FORMAT = "ownvoice-manifest"
MANIFEST_VERSION = 1
SPLITS = ("identify", "evaluate")


class WavFormatError(ValueError):
    pass


class ManifestError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class ChecksumError(ModelFormatError):
    pass


# -- audio -----------------------------------------------------------------


def _read_raw(path, mmap=False):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path, mmap=mmap)
    except wavfile.WavFileWarning as exc:
        if "EOF" in str(exc):
            raise WavFormatError(f"{path}: truncated file") from None
        raise WavFormatError(f"{path}: {exc}") from None
    except (ValueError, EOFError, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise WavFormatError(f"{path}: {exc}") from None
    except Exception as exc:  # struct.error on cut headers
        raise WavFormatError(f"{path}: unreadable WAV ({exc})") from None
    if data.ndim != 1:
        raise WavFormatError(f"{path}: multichannel unsupported ({data.shape[1]} channels)")
    if data.dtype not in (np.int16, np.float32):
        raise WavFormatError(f"{path}: unsupported encoding {data.dtype}; need PCM16 or float32")
    return rate, data


def read_wav(path) -> tuple[np.ndarray, int]:
    """Mono PCM16 or float32 WAV as float64 samples.

    PCM16 is scaled by ``1 / 32768``; float32 samples pass through unchanged.
    """
    rate, data = _read_raw(path)
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0, rate
    return data.astype(np.float64), rate


def wav_info(path) -> tuple[int, int]:
    """``(num_samples, sample_rate)`` without loading the samples."""
    rate, data = _read_raw(path, mmap=True)
    n = data.shape[0]
    del data
    return n, rate


def write_wav(path, signal, sample_rate: int, encoding: str = "float32") -> None:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise WavFormatError("only mono signals can be written")
    if encoding == "float32":
        data = x.astype(np.float32)
    elif encoding == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise WavFormatError(f"unknown encoding {encoding!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, int(sample_rate), data)


# -- manifest ----------------------------------------------------------------


@dataclass(frozen=True)
class Utterance:
    talker_id: str
    utterance_id: str
    outer_path: Path
    inear_path: Path
    label_path: Path
    split: str

    @property
    def key(self) -> tuple[str, str]:
        return (self.talker_id, self.utterance_id)


@dataclass
class Manifest:
    sample_rate: int
    entries: list[Utterance]
    inventory_path: Path
    root: Path = field(default_factory=Path)

    def talkers(self) -> list[str]:
        """Talker ids in order of first appearance."""
        return list(dict.fromkeys(u.talker_id for u in self.entries))

    def utterances(self, talker: str | None = None, split: str | None = None) -> list[Utterance]:
        return [
            u for u in self.entries
            if (talker is None or u.talker_id == talker) and (split is None or u.split == split)
        ]

    def inventory(self) -> PhonemeInventory:
        inv = self.__dict__.get("_inventory")
        if inv is None:
            inv = load_inventory(self.inventory_path)
            self.__dict__["_inventory"] = inv
        return inv

    def load_audio(self, utt: Utterance) -> tuple[np.ndarray, np.ndarray]:
        outer, _ = read_wav(utt.outer_path)
        inear, _ = read_wav(utt.inear_path)
        return outer, inear

    def load_labels(self, utt: Utterance, total_samples: int) -> LabelTrack:
        return load_label_track(utt.label_path, self.inventory(), total_samples)

    def relative(self, path) -> str:
        return Path(path).resolve().relative_to(self.root.resolve()).as_posix()


def load_manifest(path, check_files: bool = True) -> Manifest:
    """Parse and validate a manifest.

    With ``check_files`` every referenced file must exist, both WAVs of an
    utterance must share length and the manifest sample rate, and the label
    file must parse against the inventory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}: not an {MANIFEST_FORMAT} file")
    if doc.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{path}: unsupported manifest version {doc.get('version')!r}")
    root = path.parent
    try:
        rate = int(doc["sample_rate"])
        inventory_path = root / doc["inventory"]
        raw_entries = doc["utterances"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{path}: missing or invalid field {exc}") from None
    if not raw_entries:
        raise ManifestError(f"{path}: empty manifest")
    entries, seen = [], set()
    for i, e in enumerate(raw_entries):
        try:
            utt = Utterance(
                str(e["talker"]), str(e["utterance"]),
                root / e["outer"], root / e["inear"], root / e["labels"], e["split"],
            )
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: entry {i} lacks field {exc}") from None
        if utt.split not in SPLITS:
            raise ManifestError(f"{path}: entry {i} has unknown split {utt.split!r}")
        if utt.key in seen:
            raise ManifestError(f"{path}: duplicate entry {utt.key}")
        seen.add(utt.key)
        entries.append(utt)
    manifest = Manifest(rate, entries, inventory_path, root)
    if check_files:
        _check_files(manifest)
    return manifest


def _check_files(manifest: Manifest) -> None:
    if not manifest.inventory_path.is_file():
        raise ManifestError(f"missing inventory file {manifest.inventory_path}")
    manifest.inventory()
    for utt in manifest.entries:
        lengths = []
        for p in (utt.outer_path, utt.inear_path):
            if not p.is_file():
                raise ManifestError(f"missing audio file {p}")
            n, rate = wav_info(p)
            if rate != manifest.sample_rate:
                raise ManifestError(
                    f"{p}: sample rate {rate} Hz differs from manifest rate {manifest.sample_rate} Hz"
                )
            lengths.append(n)
        if lengths[0] != lengths[1]:
            raise ManifestError(f"{utt.key}: outer and in-ear lengths differ ({lengths[0]} vs {lengths[1]})")
        if not utt.label_path.is_file():
            raise ManifestError(f"missing label file {utt.label_path}")
        manifest.load_labels(utt, lengths[0])


def save_manifest(path, manifest: Manifest) -> None:
    root = Path(path).parent
    rel = lambda p: Path(p).relative_to(root).as_posix()
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "sample_rate": manifest.sample_rate,
        "inventory": rel(manifest.inventory_path),
        "utterances": [
            {
                "talker": u.talker_id, "utterance": u.utterance_id, "split": u.split,
                "outer": rel(u.outer_path), "inear": rel(u.inear_path), "labels": rel(u.label_path),
            }
            for u in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# -- model files -------------------------------------------------------------


def _complex_bytes(values: np.ndarray) -> bytes:
    values = np.ascontiguousarray(values, dtype=np.complex128)
    return values.view(np.float64).astype("<f8").tobytes()


def _bytes_complex(payload: bytes, count: int) -> np.ndarray:
    floats = np.frombuffer(payload, dtype="<f8", count=2 * count).astype(np.float64)
    return floats.view(np.complex128).copy()


def _frame_header(params: FrameParams) -> dict:
    return {
        "sample_rate": params.sample_rate,
        "frame_length": params.frame_length,
        "hop": params.hop,
        "window": params.window_kind,
        "num_bins": params.num_bins,
    }


def save_model(path, model, meta: dict | None = None) -> None:
    """Write a speech-independent, speech-dependent or adaptive (NLMS) model."""
    if isinstance(model, SpeechIndependentModel):
        header = {"kind": model.kind, **_frame_header(model.params)}
        payload = _complex_bytes(model.rtf)
        meta = model.meta if meta is None else meta
    elif isinstance(model, SpeechDependentModel):
        header = {
            "kind": model.kind,
            **_frame_header(model.params),
            "num_phonemes": model.num_phonemes,
            "smoothing_alpha": model.smoothing_alpha,
            "valid": [int(v) for v in model.valid],
        }
        payload = _complex_bytes(model.rtf_table) + _complex_bytes(model.fallback.rtf)
        meta = model.meta if meta is None else meta
    elif isinstance(model, NlmsConfig):
        header = {
            "kind": model.kind,
            "filter_length": model.filter_length,
            "step_size": model.step_size,
            "regularization": model.regularization,
        }
        payload = b""
    else:
        raise TypeError(f"cannot save object of type {type(model).__name__}")
    header.update(
        version=MODEL_VERSION,
        meta=meta or {},
        payload_bytes=len(payload),
        payload_sha256=hashlib.sha256(payload).hexdigest(),
    )
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(MODEL_MAGIC + text + b"\n" + payload)


def read_model_header(path) -> tuple[dict, bytes]:
    data = Path(path).read_bytes()
    if not data.startswith(MODEL_MAGIC):
        raise ModelFormatError(f"{path}: not a model file")
    end = data.find(b"\n", len(MODEL_MAGIC))
    if end < 0:
        raise ChecksumError(f"{path}: checksum error (header incomplete)")
    try:
        header = json.loads(data[len(MODEL_MAGIC): end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ModelFormatError(f"{path}: corrupt header") from None
    if header.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {header.get('version')!r}")
    payload = data[end + 1:]
    if len(payload) != header.get("payload_bytes") or hashlib.sha256(payload).hexdigest() != header.get(
        "payload_sha256"
    ):
        raise ChecksumError(f"{path}: checksum error (payload corrupt or truncated)")
    return header, payload


def load_model(path):
    """Inverse of :func:`save_model`. Returns the model; metadata lives in ``model.meta``."""
    header, payload = read_model_header(path)
    kind = header.get("kind")
    try:
        if kind == NlmsConfig.kind:
            return NlmsConfig(header["filter_length"], header["step_size"], header["regularization"])
        params = FrameParams(header["frame_length"], header["sample_rate"], header["window"])
        bins = header["num_bins"]
        if params.num_bins != bins or params.hop != header["hop"]:
            raise ModelFormatError(f"{path}: inconsistent frame parameters")
        if kind == SpeechIndependentModel.kind:
            if len(payload) != 16 * bins:
                raise ModelFormatError(f"{path}: payload size does not match header")
            return SpeechIndependentModel(_bytes_complex(payload, bins), params, header["meta"])
        if kind == SpeechDependentModel.kind:
            P = header["num_phonemes"]
            if len(payload) != 16 * bins * (P + 1):
                raise ModelFormatError(f"{path}: payload size does not match header")
            values = _bytes_complex(payload, bins * (P + 1))
            fallback = SpeechIndependentModel(values[P * bins:], params, header["meta"])
            return SpeechDependentModel(
                values[: P * bins].reshape(P, bins),
                np.array(header["valid"], dtype=bool),
                fallback,
                header["smoothing_alpha"],
                header["meta"],
            )
    except KeyError as exc:
        raise ModelFormatError(f"{path}: header lacks {exc}") from None
    raise ModelFormatError(f"{path}: unknown model kind {kind!r}")
