"""Identification, simulation and evaluation runs over a manifest.

Directory layout produced by the three stages::

    models/<kind>/<talker>.ovm               averaged kinds: <talker> is the held-out talker
    sim/<condition>/assignment.json          talker a used for every simulated utterance
    sim/<condition>/<kind>/<talker>/<utterance>.wav
    report.json

Averaged models are only evaluated under talker mismatch, and the adaptive
model has no averaged variant because it is identified on a single
utterance pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Manifest, load_model, read_wav, save_model, write_wav
from .labels import to_frame_labels
from .metrics import MelConfig, mcd, lsd
from .nlms import NlmsConfig, match_length, nlms_identify_and_simulate
from .rtf import (
    DEFAULT_ALPHA,
    DEFAULT_MIN_FRAMES,
    RtfAccumulator,
    SpeechDependentModel,
    SpeechIndependentModel,
    accumulate,
    finalize_speech_dependent,
    finalize_speech_independent,
    leave_one_out,
    simulate_speech_dependent,
    simulate_speech_independent,
)
from .stft import FrameParams, analyze

MODEL_KINDS = ("si-individual", "sd-individual", "si-averaged", "sd-averaged", "adaptive")
CONDITIONS = ("matched", "utterance_mismatch", "talker_mismatch")
REPORT_FORMAT = "ownvoice-report"
REPORT_VERSION = 1


class HarnessError(RuntimeError):
    """Inconsistent request or missing inputs for a harness stage."""


def _check_kinds(kinds) -> tuple[str, ...]:
    kinds = tuple(kinds)
    for kind in kinds:
        if kind not in MODEL_KINDS:
            hint = " (adaptive models have no averaged variant)" if kind.startswith("adaptive") else ""
            raise HarnessError(f"unknown model kind {kind!r}{hint}; expected one of {MODEL_KINDS}")
    if len(set(kinds)) != len(kinds):
        raise HarnessError("model kinds listed twice")
    return kinds


@dataclass(frozen=True)
class EvalCondition:
    """One simulation condition and the model kinds evaluated under it."""

    kind: str
    model_kinds: tuple[str, ...] = ("si-individual", "sd-individual", "adaptive")
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CONDITIONS:
            raise HarnessError(f"unknown condition {self.kind!r}; expected one of {CONDITIONS}")
        object.__setattr__(self, "model_kinds", _check_kinds(self.model_kinds))
        averaged = [k for k in self.model_kinds if k.endswith("-averaged")]
        if averaged and self.kind != "talker_mismatch":
            raise HarnessError(f"averaged models {averaged} are only evaluated under talker_mismatch")

    @classmethod
    def default(cls, kind: str, seed: int = 0) -> "EvalCondition":
        kinds = MODEL_KINDS if kind == "talker_mismatch" else ("si-individual", "sd-individual", "adaptive")
        return cls(kind, kinds, seed)

    @property
    def split(self) -> str:
        return "identify" if self.kind == "matched" else "evaluate"


@dataclass(frozen=True)
class HarnessConfig:
    frame_length: int = 128
    alpha: float = DEFAULT_ALPHA
    fallback_min_frames: int = DEFAULT_MIN_FRAMES
    nlms: NlmsConfig = field(default_factory=NlmsConfig)
    mel: MelConfig = field(default_factory=MelConfig)

    def params(self, manifest: Manifest) -> FrameParams:
        return FrameParams(self.frame_length, manifest.sample_rate)


# -- identification ---------------------------------------------------------

def talker_accumulators(manifest: Manifest, params: FrameParams) -> dict[str, RtfAccumulator]:
    """Per-talker sums over the identify split, with phoneme rows and the pooled row."""
    P = manifest.inventory().size
    out = {}
    for talker in manifest.talkers():
        utts = manifest.utterances(talker, "identify")
        if not utts:
            raise HarnessError(f"talker {talker} has no identify utterances")
        acc = RtfAccumulator.empty(P, params.num_bins)
        for utt in utts:
            outer, inear = manifest.load_audio(utt)
            labels = to_frame_labels(manifest.load_labels(utt, outer.size), params)
            acc = accumulate(acc, analyze(outer, params), analyze(inear, params), labels)
        out[talker] = acc
    return out


def _finalize(kind: str, acc: RtfAccumulator, params: FrameParams, config: HarnessConfig, meta: dict):
    si = finalize_speech_independent(acc, params, meta=meta)
    if kind.startswith("si-"):
        return si
    return finalize_speech_dependent(
        acc, params, config.fallback_min_frames, config.alpha, meta=meta
    )


def cmd_identify(manifest: Manifest, model_kinds, out_dir, config: HarnessConfig = HarnessConfig()) -> list[Path]:
    """Write one model file per talker and requested kind.

    Individual models use the talker's own identify utterances; the averaged
    model stored under talker ``b`` pools every other talker.
    """
    kinds = _check_kinds(model_kinds)
    talkers = manifest.talkers()
    if any(k.endswith("-averaged") for k in kinds) and len(talkers) < 2:
        raise HarnessError("averaged models need at least two talkers (leave-one-out)")
    params = config.params(manifest)
    out_dir = Path(out_dir)
    accs = None
    if any(k != "adaptive" for k in kinds):
        accs = talker_accumulators(manifest, params)
    written = []
    for kind in kinds:
        (out_dir / kind).mkdir(parents=True, exist_ok=True)
        for talker in talkers:
            path = out_dir / kind / f"{talker}.ovm"
            if kind == "adaptive":
                if not manifest.utterances(talker, "identify"):
                    raise HarnessError(f"talker {talker} has no identify utterances")
                save_model(path, config.nlms, meta={"kind": kind, "talker": talker})
            elif kind.endswith("-individual"):
                meta = {"kind": kind, "talker": talker}
                save_model(path, _finalize(kind, accs[talker], params, config, meta))
            else:
                meta = {"kind": kind, "held_out": talker}
                save_model(path, _finalize(kind, leave_one_out(accs, talker), params, config, meta))
            written.append(path)
    return written


# -- simulation ---------------------------------------------------------------

def talker_assignment(manifest: Manifest, seed: int) -> dict[tuple[str, str], str]:
    """Draw a source talker ``a != b`` for every evaluate utterance of talker ``b``."""
    talkers = manifest.talkers()
    if len(talkers) < 2:
        raise HarnessError("talker mismatch needs at least two talkers")
    rng = np.random.default_rng(seed)
    out = {}
    for utt in manifest.utterances(split="evaluate"):
        others = [t for t in talkers if t != utt.talker_id]
        out[utt.key] = others[int(rng.integers(len(others)))]
    return out


def _load(model_dir: Path, kind: str, talker: str, cache: dict):
    path = model_dir / kind / f"{talker}.ovm"
    if path not in cache:
        if not path.is_file():
            raise HarnessError(f"missing model {path}")
        cache[path] = load_model(path)
    return cache[path]


def _adaptive_source(manifest: Manifest, utt, talker_a: str, target_len: int):
    """Identify-split pair of talker ``a`` paired with evaluate utterance ``utt``, length-matched.

    Evaluate utterance ``j`` of its talker uses identify utterance ``j mod n``;
    the remaining identify utterances (manifest order) fill up short signals.
    """
    sources = manifest.utterances(talker_a, "identify")
    if not sources:
        raise HarnessError(f"talker {talker_a} has no identify utterances")
    j = manifest.utterances(utt.talker_id, "evaluate").index(utt)
    first = sources[j % len(sources)]
    order = [first] + [s for s in sources if s is not first]
    pairs = [manifest.load_audio(s) for s in order]
    outer = match_length(pairs[0][0], target_len, [p[0] for p in pairs[1:]])
    inear = match_length(pairs[0][1], target_len, [p[1] for p in pairs[1:]])
    return outer, inear


def simulate_utterance(manifest: Manifest, utt, kind: str, model, condition: str, talker_a: str) -> np.ndarray:
    outer, inear = manifest.load_audio(utt)
    if kind == "adaptive":
        if condition == "matched":
            return nlms_identify_and_simulate(outer, inear, None, model).simulated
        src_outer, src_inear = _adaptive_source(manifest, utt, talker_a, outer.size)
        return nlms_identify_and_simulate(src_outer, src_inear, outer, model).simulated
    if model.params.sample_rate != manifest.sample_rate:
        raise HarnessError(
            f"model sample rate {model.params.sample_rate} differs from manifest rate {manifest.sample_rate}"
        )
    if isinstance(model, SpeechIndependentModel):
        return simulate_speech_independent(model, outer)
    if isinstance(model, SpeechDependentModel):
        labels = to_frame_labels(manifest.load_labels(utt, outer.size), model.params)
        return simulate_speech_dependent(model, outer, labels)
    raise HarnessError(f"model for {kind} has unexpected type {type(model).__name__}")


def cmd_simulate(manifest: Manifest, model_dir, condition: EvalCondition, out_dir) -> list[Path]:
    """Simulate in-ear signals for every utterance of the condition's split."""
    model_dir, out_dir = Path(model_dir), Path(out_dir) / condition.kind
    utts = manifest.utterances(split=condition.split)
    if not utts:
        raise HarnessError(f"no {condition.split} utterances for condition {condition.kind}")
    if condition.kind == "talker_mismatch":
        assignment = talker_assignment(manifest, condition.seed)
    else:
        assignment = {u.key: u.talker_id for u in utts}
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "condition": condition.kind,
        "seed": condition.seed,
        "assignment": {f"{b}/{u}": a for (b, u), a in assignment.items()},
    }
    (out_dir / "assignment.json").write_text(json.dumps(record, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    cache: dict = {}
    written = []
    for kind in condition.model_kinds:
        for utt in utts:
            b, a = utt.talker_id, assignment[utt.key]
            model = _load(model_dir, kind, b if kind.endswith("-averaged") else a, cache)
            sim = simulate_utterance(manifest, utt, kind, model, condition.kind, a)
            path = out_dir / kind / b / f"{utt.utterance_id}.wav"
            path.parent.mkdir(parents=True, exist_ok=True)
            write_wav(path, sim, manifest.sample_rate)
            written.append(path)
    return written


# -- evaluation ---------------------------------------------------------------

def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    q1, median, q3 = np.percentile(v, [25, 50, 75])
    return {"mean": float(v.mean()), "median": float(median), "q1": float(q1), "q3": float(q3)}


@dataclass
class EvalReport:
    """Per-utterance metric rows plus per (condition, model kind) aggregates."""

    rows: list[dict]
    meta: dict = field(default_factory=dict)

    def groups(self) -> list[tuple[str, str]]:
        return list(dict.fromkeys((r["condition"], r["model_kind"]) for r in self.rows))

    def aggregates(self) -> list[dict]:
        out = []
        for cond, kind in self.groups():
            rows = [r for r in self.rows if r["condition"] == cond and r["model_kind"] == kind]
            out.append({
                "condition": cond,
                "model_kind": kind,
                "count": len(rows),
                "lsd": _summary([r["lsd"] for r in rows]),
                "mcd": _summary([r["mcd"] for r in rows]),
            })
        return out

    def mean(self, condition: str, kind: str, metric: str = "lsd") -> float:
        for agg in self.aggregates():
            if agg["condition"] == condition and agg["model_kind"] == kind:
                return agg[metric]["mean"]
        raise KeyError((condition, kind))

    def to_json(self) -> str:
        doc = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "meta": self.meta,
            "rows": self.rows,
            "aggregates": self.aggregates(),
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def format_table(self) -> str:
        head = f"{'condition':<20}{'model':<15}{'n':>4}  {'LSD mean':>9}{'median':>8}{'IQR':>15}  {'MCD mean':>9}{'median':>8}{'IQR':>15}"
        lines = [head, "-" * len(head)]
        for agg in self.aggregates():
            cells = []
            for m in ("lsd", "mcd"):
                s = agg[m]
                iqr = f"[{s['q1']:.2f}, {s['q3']:.2f}]"
                cells.append(f"{s['mean']:9.3f}{s['median']:8.3f}{iqr:>15}")
            lines.append(f"{agg['condition']:<20}{agg['model_kind']:<15}{agg['count']:>4}  " + "  ".join(cells))
        return "\n".join(lines)


def load_report(path) -> EvalReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise HarnessError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("format") != REPORT_FORMAT:
        raise HarnessError(f"{path}: not an evaluation report")
    if doc.get("version") != REPORT_VERSION:
        raise HarnessError(f"{path}: unsupported report version {doc.get('version')}")
    return EvalReport(doc["rows"], doc.get("meta", {}))


def cmd_evaluate(manifest: Manifest, sim_dir, config: HarnessConfig = HarnessConfig()) -> EvalReport:
    """LSD and MCD of every simulated file against the recorded in-ear signal.

    Conditions and model kinds are discovered from the directory tree; each
    discovered kind must cover every utterance of its condition's split.
    """
    sim_dir = Path(sim_dir)
    params = config.params(manifest)
    rows = []
    for cond in CONDITIONS:
        cdir = sim_dir / cond
        if not cdir.is_dir():
            continue
        try:
            assignment = json.loads((cdir / "assignment.json").read_text(encoding="utf-8"))["assignment"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise HarnessError(f"{cdir}: missing or unreadable assignment.json ({exc})") from None
        split = EvalCondition(cond).split
        for kind in MODEL_KINDS:
            if not (cdir / kind).is_dir():
                continue
            for utt in manifest.utterances(split=split):
                path = cdir / kind / utt.talker_id / f"{utt.utterance_id}.wav"
                if not path.is_file():
                    raise HarnessError(f"missing simulated file {path}")
                sim, _ = read_wav(path)
                _, inear = manifest.load_audio(utt)
                if sim.size != inear.size:
                    raise HarnessError(f"{path}: {sim.size} samples, recorded in-ear has {inear.size}")
                rows.append({
                    "condition": cond,
                    "model_kind": kind,
                    "talker_b": utt.talker_id,
                    "talker_a": assignment.get(f"{utt.talker_id}/{utt.utterance_id}", utt.talker_id),
                    "utterance": utt.utterance_id,
                    "lsd": lsd(inear, sim, params),
                    "mcd": mcd(inear, sim, params, config.mel),
                })
    if not rows:
        raise HarnessError(f"no simulated outputs found under {sim_dir}")
    meta = {"frame_length": params.frame_length, "sample_rate": manifest.sample_rate}
    return EvalReport(rows, meta)


def run_all(manifest: Manifest, work_dir, seed: int = 0, config: HarnessConfig = HarnessConfig(),
            conditions=CONDITIONS) -> EvalReport:
    """Identify every model kind, simulate each condition with its default kinds and evaluate."""
    work_dir = Path(work_dir)
    conds = [EvalCondition.default(c, seed) for c in conditions]
    kinds = [k for k in MODEL_KINDS if any(k in c.model_kinds for c in conds)]
    cmd_identify(manifest, kinds, work_dir / "models", config)
    for cond in conds:
        cmd_simulate(manifest, work_dir / "models", cond, work_dir / "sim")
    report = cmd_evaluate(manifest, work_dir / "sim", config)
    report.save(work_dir / "report.json")
    return report
