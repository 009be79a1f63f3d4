"""Command-line entry point: ``specfid {synth,quantize,spectrum,verify,compare}``.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage or config error.
"""

import argparse
import hashlib
import json
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, quant, spectral, synth, verify
from .errors import ConfigError, DataError, DomainError, FormatError, ShapeError, SpecfidError
from .tensorio import load_matrix, save_matrix

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _sha256_json(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def write_manifest(path, argv, config, seed, outputs):
    manifest = {
        "cmd": shlex.join(["specfid", *argv]),
        "config_sha256": _sha256_json(config),
        "version": __version__,
        "seed": int(seed),
        "outputs": [str(p) for p in outputs],
    }
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def _arg_config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _print_json(obj):
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args, argv):
    if not args.alpha > 1:
        raise UsageError(f"--alpha must exceed 1 (Zipf exponent needs a normalizable tail), got {args.alpha}")
    try:
        ens = synth.ZipfEnsemble(V=args.v, alpha=args.alpha, d=args.d, N=args.n, seed=args.seed)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    X = synth.build_embedding_matrix(ens)
    save_matrix(X, args.out)
    write_manifest(f"{args.out}.manifest.json", argv, _arg_config(args), args.seed, [args.out])
    _print_json({"out": args.out, "rows": X.shape[0], "cols": X.shape[1]})
    return EXIT_OK


def cmd_quantize(args, argv):
    try:
        scheme = quant.preset(args.scheme, block=args.block, level=args.l)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    A = load_matrix(args.inp)
    res = quant.quantize_blockwise(A, scheme)
    E = quant.error_matrix(A, res.values)
    stats = quant.error_stats(E, res.mean_step)
    outputs = []
    if args.out:
        save_matrix(res.values, args.out)
        outputs.append(args.out)
    if args.err_out:
        save_matrix(E, args.err_out)
        outputs.append(args.err_out)
    if outputs:
        cfg = _arg_config(args)
        cfg["scheme_resolved"] = scheme.to_dict()
        write_manifest(f"{outputs[0]}.manifest.json", argv, cfg, 0, outputs)
    _print_json({"scheme": scheme.to_dict(), **stats.summary()})
    return EXIT_OK


def cmd_spectrum(args, argv):
    A = load_matrix(args.inp)
    summary = spectral.SpectralSummary.from_matrix(A, args.fit_lo, args.fit_hi)
    scalars = summary.scalars()
    if args.csv:
        Path(args.csv).write_text(summary.to_csv(frac_column="cum_energy_frac"))
        side = f"{args.csv}.summary.json"
        Path(side).write_text(json.dumps(scalars, sort_keys=True, indent=2) + "\n")
        write_manifest(f"{args.csv}.manifest.json", argv, _arg_config(args), 0, [args.csv, side])
    _print_json(scalars)
    return EXIT_OK


def cmd_verify(args, argv):
    try:
        if args.config:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            cfg = verify.ExperimentConfig.from_json(text)
        else:
            cfg = verify.ExperimentConfig()
        selected = None if args.protocol == "all" else [args.protocol]
        reports = verify.run_full_suite(cfg, selected)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.report_dir)
    paths = verify.write_reports(reports, out)
    write_manifest(out / "manifest.json", argv, cfg.resolved(), cfg.seed, paths)
    for r in reports:
        print(f"{r.protocol}: {'PASS' if r.passed else 'FAIL'}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_compare(args, argv):
    A = load_matrix(args.a)
    B = load_matrix(args.b)
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {B.shape}")
    sa = spectral.singular_values(A)
    sb = spectral.singular_values(B)
    gap = spectral.weyl_gap(sa, sb)
    pert = float(spectral.singular_values(B - A)[0])
    floor = spectral.DEFAULT_REL_FLOOR * (sa[0] if sa.size else 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sa > floor, sb / np.where(sa > 0, sa, 1.0), np.nan)
        rel = np.where(sa > floor, np.abs(sb - sa) / np.where(sa > 0, sa, 1.0), np.nan)
    summary = {
        "stable_rank_a": spectral.stable_rank(sa) if sa[0] > 0 else None,
        "stable_rank_b": spectral.stable_rank(sb) if sb[0] > 0 else None,
        "weyl_gap": gap,
        "perturbation_norm": pert,
        "weyl_ok": bool(gap <= pert * (1 + 1e-12) + 1e-300),
    }
    if args.csv:
        lines = ["k,sigma_a,sigma_b,ratio_b_over_a,rel_err"]
        for k in range(sa.size):
            lines.append(f"{k + 1},{float(sa[k])!r},{float(sb[k])!r},{float(ratio[k])!r},{float(rel[k])!r}")
        Path(args.csv).write_text("\n".join(lines) + "\n")
        side = f"{args.csv}.summary.json"
        Path(side).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
        write_manifest(f"{args.csv}.manifest.json", argv, _arg_config(args), 0, [args.csv, side])
    _print_json(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="specfid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"specfid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a Zipfian embedding matrix X (d x N)")
    p.add_argument("--v", type=int, default=256, help="vocabulary size")
    p.add_argument("--alpha", type=float, default=1.5, help="Zipf exponent (> 1)")
    p.add_argument("--d", type=int, default=64, help="embedding dimension")
    p.add_argument("--n", type=int, default=1024, help="number of sampled tokens")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output path (.spqt or .csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("quantize", help="quantize a matrix with a preset scheme")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--scheme", required=True, choices=["int4", "nvfp4", "mxfp4", "step"])
    p.add_argument("--block", type=int, default=None, help="block size override (0 = global)")
    p.add_argument("--l", type=float, default=None, help="level count L, or the step size for --scheme step")
    p.add_argument("--out", default=None)
    p.add_argument("--err-out", dest="err_out", default=None)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("spectrum", help="singular values, energy fractions, stable rank, power fit")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--fit-lo", dest="fit_lo", type=int, default=1)
    p.add_argument("--fit-hi", dest="fit_hi", type=int, default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("verify", help="run verification protocols")
    p.add_argument("--config", default=None, help="experiment config JSON (defaults if omitted)")
    p.add_argument("--protocol", default="all", choices=["all", *verify.PROTOCOLS])
    p.add_argument("--report-dir", dest="report_dir", default="reports")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="compare the spectra of two equal-shape matrices")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    if args.command == "quantize" and args.l is not None and args.scheme != "step":
        if args.l != int(args.l):
            print("specfid: error: --l must be an integer level count for this scheme", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"specfid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DataError, ShapeError, DomainError, SpecfidError, OSError) as exc:
        print(f"specfid: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
