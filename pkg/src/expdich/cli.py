"""Command line: ``expdich run|verify|sweep``.

Exit codes: 0 when every check passes, 1 when a hypothesis or certification
check fails, 2 on usage errors (missing files, invalid configs, mismatched
dimensions).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from .config import AvalancheConfig, MatrixSystemConfig, load_config, parse_config, with_value
from .dichotomy import DichotomyCertificate, certify
from .errors import ContractError, DichotomyError
from .experiments import Result, avalanche_sequence, build_sequence, run_experiment

OUT_ENV = "EXPDICH_OUT_DIR"
DEFAULT_OUT = "expdich-out"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- output ---------------------------------------------------------------------------------------


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def write_csv(path: Path, columns, rows, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", *columns])
        for row in rows:
            w.writerow([str(seed), *(fmt(v) for v in row)])


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=1, sort_keys=True) + "\n")


def summary_lines(name: str, res: Result) -> list[str]:
    lines = [f"experiment {name} ({res.kind}), seed {res.seed}"]
    lines += [c.line() for c in res.checks]
    lines += [f"note: {n}" for n in res.notes]
    lines.append(f"{'PASS' if res.passed else 'FAIL'} overall: {sum(c.passed for c in res.checks)}/"
                 f"{len(res.checks)} checks passed")
    return lines


def write_result(out: Path, name: str, res: Result) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    for tname, (cols, rows) in sorted(res.tables.items()):
        write_csv(out / f"{tname}.csv", cols, rows, res.seed)
    for dname, doc in sorted(res.documents.items()):
        write_json(out / f"{dname}.json", {"seed": res.seed, **doc})
    write_json(out / "result.json", {
        "kind": res.kind, "seed": res.seed, "passed": res.passed,
        "checks": [{"passed": c.passed, "text": c.text} for c in res.checks],
        "metrics": res.metrics, "notes": res.notes,
    })
    lines = summary_lines(name, res)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return lines


# --- commands ----------------------------------------------------------------------------------------


def _load(path: str, seed: int | None):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg, sweep, data = load_config(p)
    except (yaml.YAMLError, ValidationError, ValueError) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc
    if seed is not None:
        data["seed"] = seed
        cfg = parse_config(data)
    return cfg, sweep, data, p


def _out_root(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _emit(lines, quiet: bool) -> None:
    if not quiet:
        print("\n".join(lines))


def cmd_run(args) -> int:
    cfg, _, _, path = _load(args.config, args.seed)
    name = cfg.output.name or path.stem
    out = Path(args.out_dir or cfg.output.dir or os.environ.get(OUT_ENV) or DEFAULT_OUT) / name
    res = run_experiment(cfg, path.parent)
    lines = write_result(out, name, res)
    _emit(lines + [f"outputs in {out}"], args.quiet)
    return EXIT_OK if res.passed else EXIT_FAIL


def _sequence_for(cfg):
    if isinstance(cfg, MatrixSystemConfig):
        return build_sequence(cfg.system)
    if isinstance(cfg, AvalancheConfig):
        return avalanche_sequence(cfg)
    raise UsageError(f"verify needs a matrix-system or avalanche config, got {cfg.kind}")


def cmd_verify(args) -> int:
    cfg, _, _, _ = _load(args.config, None)
    seq = _sequence_for(cfg)
    cpath = Path(args.certificate)
    if not cpath.is_file():
        raise UsageError(f"certificate file not found: {args.certificate}")
    try:
        cert = DichotomyCertificate.from_json(cpath.read_text())
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed certificate {cpath}: {exc}") from exc
    if cert.dim != seq.dim:
        raise UsageError(f"certificate dimension {cert.dim} does not match system dimension {seq.dim}")
    if cert.direction != seq.direction:
        raise UsageError(f"certificate direction {cert.direction} does not match system direction {seq.direction}")
    report = certify(seq, cert)
    lines = report.lines() + [f"{'PASS' if report.passed else 'FAIL'} overall: re-verification of certificate {cpath.name}"]
    _emit(lines, args.quiet)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    cfg, sweep, data, path = _load(args.config, args.seed)
    if args.param:
        if not args.values:
            raise UsageError("--param needs --values")
        param, values = args.param, [yaml.safe_load(v) for v in args.values.split(",")]
    elif sweep is not None:
        param, values = sweep.param, sweep.values
    else:
        raise UsageError("no sweep given: use --param/--values or a 'sweep' block in the config")
    name = (cfg.output.name or path.stem) + "-sweep"
    out = _out_root(args) / name
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for value in values:
        try:
            sub = parse_config(with_value(data, param, value))
        except (ValidationError, ValueError, KeyError, IndexError) as exc:
            raise UsageError(f"cannot set {param}={value!r}: {exc}") from exc
        try:
            res = run_experiment(sub, path.parent)
        except (DichotomyError,) as exc:
            if isinstance(exc, ContractError):
                raise
            res = Result(sub.kind, sub.seed)
            res.add(False, f"{type(exc).__name__}: {exc}")
        results.append((value, res))
    keys = sorted({k for _, r in results for k in r.metrics} - {param})
    rows = [[v, r.passed, *[r.metrics.get(k, np.nan) for k in keys]] for v, r in results]
    write_csv(out / "sweep.csv", [param, "passed", *keys], rows, cfg.seed)
    lines = [f"sweep {name} over {param}"]
    for v, r in results:
        failed = [c.text for c in r.checks if not c.passed]
        lines.append(f"{'PASS' if r.passed else 'FAIL'} {param}={v}: {len(r.checks) - len(failed)}/{len(r.checks)} "
                     f"checks passed" + (f"; first failure: {failed[0]}" if failed else ""))
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    _emit(lines + [f"outputs in {out}"], args.quiet)
    return EXIT_OK if all(r.passed for _, r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expdich", description="Construct and certify exponential dichotomies.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (YAML or JSON)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success or failure")

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    run.add_argument("--out-dir", help=f"output root (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="re-check a stored certificate against its system")
    common(ver)
    ver.add_argument("--certificate", required=True)
    ver.set_defaults(func=cmd_verify)

    sw = sub.add_parser("sweep", help="run a config over a list of parameter values")
    common(sw)
    sw.add_argument("--out-dir", help=f"output root (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--param", help="dotted config key, e.g. eta or grid.dx")
    sw.add_argument("--values", help="comma-separated values")
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DichotomyError as exc:
        # hypothesis, gap, collapse and similar failures are results, not usage errors
        if not getattr(args, "quiet", False):
            print(f"FAIL {type(exc).__name__}: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
