"""Command line entry point: ``ownvoice {synth,identify,simulate,evaluate,report}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .dataset import ManifestError, ModelFormatError, WavFormatError, load_manifest
from .harness import CONDITIONS, MODEL_KINDS, EvalCondition, HarnessConfig, HarnessError
from .harness import cmd_evaluate, cmd_identify, cmd_simulate, load_report
from .labels import LabelFormatError
from .metrics import MelConfig
from .nlms import NlmsConfig
from .synth import EXCITATIONS, SynthSpec, generate

# exit codes by error category
EXIT_USAGE, EXIT_INPUT, EXIT_MODEL, EXIT_HARNESS, EXIT_IO = 2, 3, 4, 5, 6


def _frame_args(p):
    p.add_argument("-K", "--frame-length", type=int, default=128, help="STFT frame length; hop is K/2 (default: 128)")
    p.add_argument("--fs", type=int, default=None,
                   help="expected sample rate; fails if the manifest differs (manifest rate is used otherwise)")


def _config(args) -> HarnessConfig:
    return HarnessConfig(
        frame_length=args.frame_length,
        alpha=getattr(args, "alpha", 0.8),
        fallback_min_frames=getattr(args, "min_frames", 10),
        nlms=NlmsConfig(getattr(args, "filter_length", 128), getattr(args, "mu", 0.5), getattr(args, "eps", 1e-6)),
        mel=MelConfig(num_bands=getattr(args, "mel_bands", 20), num_cepstra=getattr(args, "cepstra", 13)),
    )


def _manifest(args):
    m = load_manifest(args.manifest)
    if args.fs is not None and args.fs != m.sample_rate:
        raise ManifestError(f"manifest sample rate is {m.sample_rate} Hz, --fs asks for {args.fs} Hz")
    return m


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ownvoice", description="Own-voice transfer model identification and evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted per-phoneme filters")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--talkers", type=int, default=3)
    p.add_argument("--utterances", type=int, default=8, help="utterances per talker")
    p.add_argument("--identify", type=int, default=None, help="identify-split utterances per talker (default: half)")
    p.add_argument("--length", type=int, default=15000, help="utterance length in samples")
    p.add_argument("--phonemes", type=int, default=5, help="number of planted phoneme classes")
    p.add_argument("--inventory-size", type=int, default=None)
    p.add_argument("--fir-length", type=int, default=4)
    p.add_argument("--excitation", choices=EXCITATIONS, default="white-noise")
    p.add_argument("--perturbation", type=float, default=0.2, help="per-talker filter perturbation scale")
    p.add_argument("--min-span", type=int, default=8, help="shortest phoneme span in frames")
    p.add_argument("--max-span", type=int, default=24, help="longest phoneme span in frames")
    p.add_argument("--fs", type=int, default=5000)
    p.add_argument("-K", "--frame-length", type=int, default=128)

    p = sub.add_parser("identify", help="estimate model files from the identify split")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--kind", action="append", choices=MODEL_KINDS + ("all",),
                   help="model kind, repeatable (default: all)")
    p.add_argument("--out", type=Path, default=Path("models"))
    _frame_args(p)
    p.add_argument("--alpha", type=float, default=0.8, help="RTF smoothing factor (default: 0.8)")
    p.add_argument("--min-frames", type=int, default=10, help="frames below which a phoneme falls back (default: 10)")
    p.add_argument("-N", "--filter-length", type=int, default=128, help="adaptive filter length (default: 128)")
    p.add_argument("--mu", type=float, default=0.5, help="NLMS step size (default: 0.5)")
    p.add_argument("--eps", type=float, default=1e-6, help="NLMS regularization (default: 1e-6)")

    p = sub.add_parser("simulate", help="simulate in-ear signals for one condition")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--models", type=Path, default=Path("models"))
    p.add_argument("--condition", choices=CONDITIONS, required=True)
    p.add_argument("--kind", action="append", choices=MODEL_KINDS,
                   help="model kind, repeatable (default: every kind allowed under the condition)")
    p.add_argument("--seed", type=int, default=0, help="seed for the talker-mismatch assignment")
    p.add_argument("--out", type=Path, default=Path("sim"))
    p.add_argument("--fs", type=int, default=None)

    p = sub.add_parser("evaluate", help="score simulated signals against the recorded in-ear signals")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--sim", type=Path, default=Path("sim"))
    p.add_argument("--out", type=Path, default=Path("report.json"))
    _frame_args(p)
    p.add_argument("--mel-bands", type=int, default=20)
    p.add_argument("--cepstra", type=int, default=13)

    p = sub.add_parser("report", help="print the summary table of an existing report")
    p.add_argument("report", type=Path)
    return parser


def run(args) -> None:
    if args.command == "synth":
        spec = SynthSpec(
            seed=args.seed, num_talkers=args.talkers, utterances_per_talker=args.utterances,
            identify_utterances=args.identify, utterance_length=args.length, phoneme_count=args.phonemes,
            inventory_size=args.inventory_size, fir_length=args.fir_length, excitation=args.excitation,
            perturbation_scale=args.perturbation, min_span_frames=args.min_span,
            max_span_frames=args.max_span, sample_rate=args.fs, frame_length=args.frame_length,
        )
        path, _ = generate(spec, args.out)
        print(f"wrote {path}")
    elif args.command == "identify":
        kinds = MODEL_KINDS if not args.kind or "all" in args.kind else tuple(dict.fromkeys(args.kind))
        paths = cmd_identify(_manifest(args), kinds, args.out, _config(args))
        print(f"wrote {len(paths)} model files to {args.out}")
    elif args.command == "simulate":
        cond = EvalCondition(args.condition, tuple(args.kind), args.seed) if args.kind else \
            EvalCondition.default(args.condition, args.seed)
        paths = cmd_simulate(_manifest(args), args.models, cond, args.out)
        print(f"wrote {len(paths)} simulated files to {args.out / args.condition}")
    elif args.command == "evaluate":
        report = cmd_evaluate(_manifest(args), args.sim, _config(args))
        report.save(args.out)
        print(report.format_table())
        print(f"wrote {args.out}")
    elif args.command == "report":
        print(load_report(args.report).format_table())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except (ManifestError, WavFormatError, LabelFormatError) as exc:
        return _fail("input data", exc, EXIT_INPUT)
    except ModelFormatError as exc:
        return _fail("model file", exc, EXIT_MODEL)
    except HarnessError as exc:
        return _fail("harness", exc, EXIT_HARNESS)
    except ValueError as exc:
        return _fail("invalid argument", exc, EXIT_USAGE)
    except OSError as exc:
        return _fail("I/O", exc, EXIT_IO)
    return 0


def _fail(category: str, exc: Exception, code: int) -> int:
    print(f"ownvoice: {category} error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
