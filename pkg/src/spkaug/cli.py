"""Command-line front end: ``spkaug {augment,expand,mix,generate,eval}``.

Exit codes: 0 success, 1 usage error, 2 data error. Errors are printed to
stderr as one JSON object per line.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from spkaug.audio import ENCODINGS, read_wav, write_wav
from spkaug.augment import AugmentSpec, expand_speaker_set, make_pseudo
from spkaug.corpus import CompositionPolicy, HardSampleKind, generate_corpus, scan_corpus
from spkaug.errors import SpkAugError
from spkaug.metrics import evaluate_dir
from spkaug.mixer import SnrDistribution, mix
from spkaug.resample import AlphaSet
from spkaug.wsola import WsolaConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _alphas(text):
    try:
        return AlphaSet.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _snr(text):
    try:
        return SnrDistribution.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _kinds(text):
    try:
        return frozenset(HardSampleKind.parse(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_wsola_flags(p):
    p.add_argument("--frame-ms", type=float, default=25.0, help="WSOLA frame length (default 25)")
    p.add_argument("--overlap", type=float, default=0.5, help="WSOLA overlap ratio (default 0.5)")
    p.add_argument("--search-ms", type=float, default=7.5, help="WSOLA search half-width (default 7.5)")


def _wsola(args):
    return WsolaConfig(args.frame_ms, args.overlap, args.search_ms)


def build_parser():
    parser = _Parser(prog="spkaug", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("augment", help="render one pseudo-speaker utterance")
    p.add_argument("--in", dest="input", required=True, type=Path)
    p.add_argument("--alpha", required=True, type=float)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--no-tempo-restore", action="store_true", help="resample only (no WSOLA)")
    p.add_argument("--encoding", choices=ENCODINGS, default="float32")
    _add_wsola_flags(p)

    p = sub.add_parser("expand", help="list pseudo-speaker ids")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--speakers", help="comma-separated speaker labels")
    src.add_argument("--corpus", type=Path, help="corpus root laid out as {speaker}/{utterance}.wav")
    p.add_argument("--alphas", type=_alphas, default=AlphaSet())

    p = sub.add_parser("mix", help="mix two utterances at a given SNR")
    p.add_argument("--target", required=True, type=Path)
    p.add_argument("--interferer", required=True, type=Path)
    p.add_argument("--snr", required=True, type=float, help="target-to-interferer ratio in dB")
    p.add_argument("--noise", type=Path)
    p.add_argument("--noise-snr", type=float)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--ref-out", type=Path, help="also write the scaled clean target")
    p.add_argument("--encoding", choices=ENCODINGS, default="float32")

    p = sub.add_parser("generate", help="render a mixture corpus")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--out", type=Path, default=Path("mixtures"))
    p.add_argument("--total", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alphas", type=_alphas, default=AlphaSet())
    p.add_argument("--snr", type=_snr, default=SnrDistribution.uniform(-5, 5),
                   help='"uniform:LO:HI", "gauss:MEAN:VARIANCE" or "point:DB" (default uniform:-5:5)')
    p.add_argument("--rate-same-content", type=float, default=0.01)
    p.add_argument("--rate-same-speaker", type=float, default=0.0008)
    p.add_argument("--exclude", type=_kinds, default=frozenset(),
                   help="comma-separated hard-sample kinds to remove: ST, SC, SS")
    p.add_argument("--no-tempo-restore", action="store_true",
                   help="resample without WSOLA; requires --exclude ST")
    p.add_argument("--noise-dir", type=Path)
    p.add_argument("--noise-snr", type=_snr)
    p.add_argument("--cache-dir", type=Path)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--encoding", choices=ENCODINGS, default="float32")
    p.add_argument("--skip-unreadable", action="store_true")
    _add_wsola_flags(p)

    p = sub.add_parser("eval", help="score extracted speech against references")
    p.add_argument("--ref", required=True, type=Path)
    p.add_argument("--est", required=True, type=Path)
    p.add_argument("--mix", required=True, type=Path)
    p.add_argument("--json", type=Path, help="write the report here instead of stdout")
    p.add_argument("--csv", type=Path)
    p.add_argument("--nsr-inclusive", action="store_true", help="count SI-SDRi == 0 as negative")
    p.add_argument("--truncate", action="store_true", help="cut items to their shortest file")
    p.add_argument("--intersection", action="store_true", help="score only filenames present in all dirs")
    p.add_argument("--stabilizer", action="store_true", help="add 1e-8 to SI-SDR energies")
    p.add_argument("--workers", type=int, default=1)
    return parser


def cmd_augment(args):
    clip = read_wav(args.input)
    spec = AugmentSpec(args.alpha, restore_tempo=not args.no_tempo_restore)
    out = make_pseudo(clip, spec, _wsola(args))
    write_wav(args.out, out, args.encoding)
    print(json.dumps({"out": str(args.out), "in_samples": len(clip), "out_samples": len(out)}))


def cmd_expand(args):
    speakers = args.speakers.split(",") if args.speakers else list(scan_corpus(args.corpus).speakers)
    for pid in expand_speaker_set([s.strip() for s in speakers], args.alphas):
        print(pid)


def cmd_mix(args):
    noise = read_wav(args.noise) if args.noise else None
    if (noise is None) != (args.noise_snr is None):
        raise UsageError("--noise and --noise-snr must be given together")
    target = read_wav(args.target)
    result = mix(target, read_wav(args.interferer), args.snr, noise, args.noise_snr)
    write_wav(args.out, result.mixture, args.encoding)
    if args.ref_out:
        write_wav(args.ref_out, result.scaled_target(target), args.encoding)
    print(json.dumps({
        "out": str(args.out),
        "target_gain": result.target_gain,
        "interferer_gain": result.interferer_gain,
        "noise_gain": result.noise_gain,
        "realized_snr_db": result.realized_snr,
        "normalization_scale": result.normalization_scale,
    }))


def cmd_generate(args):
    exclude = set(args.exclude)
    if args.no_tempo_restore and HardSampleKind.SAME_TEMPO not in exclude:
        raise UsageError("--no-tempo-restore conflicts with SameTempo samples being allowed; add --exclude ST")
    if (args.noise_dir is None) != (args.noise_snr is None):
        raise UsageError("--noise-dir and --noise-snr must be given together")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    noise = ()
    if args.noise_dir:
        noise = tuple(p.name for p in sorted(args.noise_dir.glob("*.wav")))
        if not noise:
            raise SpkAugError(f"{args.noise_dir}: no noise WAV files")
    manifest = scan_corpus(args.corpus, skip_unreadable=args.skip_unreadable)
    policy = CompositionPolicy.excluding(
        exclude,
        total=args.total,
        seed=args.seed,
        rate_same_content=args.rate_same_content,
        rate_same_speaker=args.rate_same_speaker,
        alphas=args.alphas,
        snr=args.snr,
        noise=noise,
        noise_snr=args.noise_snr,
    )
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    flags["exclude"] = sorted(k.value for k in exclude)
    flags["alphas"] = list(args.alphas)
    flags["snr"] = str(args.snr)
    flags["noise_snr"] = str(args.noise_snr) if args.noise_snr else None
    records = generate_corpus(manifest, policy, args.out, cache_root=args.cache_dir, workers=args.workers,
                              encoding=args.encoding, wsola=_wsola(args), noise_root=args.noise_dir,
                              config_echo=flags)
    counts = {k.value: sum(k.value in r["hard_tags"] for r in records) for k in HardSampleKind}
    print(json.dumps({"out": str(args.out), "total": len(records), "hard_counts": counts}))


def cmd_eval(args):
    report = evaluate_dir(args.ref, args.est, args.mix, truncate=args.truncate, strict=not args.intersection,
                          inclusive=args.nsr_inclusive, eps=1e-8 if args.stabilizer else 0.0,
                          workers=args.workers)
    if args.csv:
        args.csv.write_text(report.to_csv())
    if args.json:
        args.json.write_text(report.to_json() + "\n")
        print(json.dumps({"n": report.n, "nsr": report.nsr, "mean_si_sdri": report.mean_si_sdri,
                          "inf_count": report.inf_count}))
    else:
        print(report.to_json())


COMMANDS = {
    "augment": cmd_augment,
    "expand": cmd_expand,
    "mix": cmd_mix,
    "generate": cmd_generate,
    "eval": cmd_eval,
}


def _report(kind, exc):
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except SystemExit as exc:
        # --help
        return exc.code or EXIT_OK
    except UsageError as exc:
        _report("usage", exc)
        return EXIT_USAGE
    except (SpkAugError, ValueError, IndexError, OSError) as exc:
        _report("data", exc)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
