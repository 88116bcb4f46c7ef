"""Command line: ``fednmap {run,sweep,compare,verify}``.

Exit codes: 0 ok, 2 config error, 3 verification failure, 4 divergence flag.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .plotting import line_chart, small_multiples
from .simulator import (CSV_HEADER, RunResult, metrics_csv, monotone_in_nq, run,
                        summarize_sweep, sweep)
from .verify import format_table, run_checks

__all__ = ["main"]

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_DIVERGED = 0, 2, 3, 4

SWEEP_RUN_HEADER = "n,Q,seed,mean_fnat_sq,final_fnat_sq,final_psi_gap,gamma,eta_a,eta_s,diverged"
SWEEP_CELL_HEADER = "n,Q,seeds,mean_fnat_sq,stderr,grid_monotone"


def _parse_seeds(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigError("--seeds needs at least one nonnegative integer")
    return seeds


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _series(results: list[RunResult], key: str, label) -> dict:
    return {label(r): ([rec.round for rec in r.records], [getattr(rec, key) for rec in r.records])
            for r in results}


def _curves_svg(results: list[RunResult], label) -> str:
    return line_chart([
        ("fnat_sq", "||F_nat(x_t)||^2", _series(results, "fnat_sq", label)),
        ("psi_gap", "psi(x_t) - psi*", _series(results, "psi_gap", label)),
    ])


def _run_all(cfg: ExperimentConfig, seeds, algorithms) -> list[RunResult]:
    return [run(replace(cfg.run, algorithm=a, seed=s)) for a in algorithms for s in seeds]


def _joined_csv(results: list[RunResult]) -> str:
    body = [metrics_csv(r.records).split("\n", 1)[1] for r in results]
    return CSV_HEADER + "\n" + "".join(body)


def _diverged(args, results) -> int:
    bad = [f"{r.spec.algorithm} seed {r.spec.seed}" for r in results if r.diverged]
    if bad:
        print(f"divergence flagged: {', '.join(bad)}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig, args) -> int:
    seeds = args.seeds or (cfg.run.seed,)
    results = _run_all(cfg, seeds, [cfg.run.algorithm])
    out = Path(args.out)
    (out / "metrics.csv").write_text(_joined_csv(results), encoding="utf-8")
    (out / "curves.svg").write_text(_curves_svg(results, lambda r: f"seed {r.spec.seed}"), encoding="utf-8")
    for r in results:
        last = r.records[-1]
        _say(args, f"{r.spec.algorithm} seed={r.spec.seed} rounds={last.round} "
                   f"fnat_sq={last.fnat_sq:.4e} psi={last.psi:.6g}")
    _say(args, f"wrote {out / 'metrics.csv'} and {out / 'curves.svg'}")
    return _diverged(args, results)


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    seeds = args.seeds or cfg.seeds
    if "scaffold" in cfg.algorithms and not cfg.run.regularizer.is_zero:
        raise ConfigError("compare.algorithms includes scaffold, which needs regularizer.kind = 'zero'")
    results = _run_all(cfg, seeds, cfg.algorithms)
    out = Path(args.out)
    (out / "compare.csv").write_text(_joined_csv(results), encoding="utf-8")
    label = (lambda r: r.spec.algorithm) if len(seeds) == 1 else \
        (lambda r: f"{r.spec.algorithm} s{r.spec.seed}")
    (out / "compare.svg").write_text(_curves_svg(results, label), encoding="utf-8")
    for a in cfg.algorithms:
        finals = [r.records[-1].fnat_sq for r in results if r.spec.algorithm == a]
        _say(args, f"{a:>9}: median final fnat_sq {np.median(finals):.4e} over {len(finals)} seed(s)")
    _say(args, f"wrote {out / 'compare.csv'} and {out / 'compare.svg'}")
    return _diverged(args, results)


def _csv_text(header: str, rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    seeds = args.seeds or cfg.seeds
    rows = sweep(cfg.run, cfg.ns, cfg.Qs, seeds)
    cells = summarize_sweep(rows)
    mono = monotone_in_nq(cells)
    out = Path(args.out)
    (out / "speedup_runs.csv").write_text(_csv_text(SWEEP_RUN_HEADER, [
        [r.n, r.Q, r.seed, r.mean_fnat_sq, r.final_fnat_sq, r.final_psi_gap, r.gamma, r.eta_a,
         r.eta_s, str(r.diverged).lower()] for r in rows]), encoding="utf-8")
    (out / "speedup.csv").write_text(_csv_text(SWEEP_CELL_HEADER, [
        [c.n, c.Q, c.seeds, c.mean, c.stderr, str(mono).lower()] for c in cells]), encoding="utf-8")
    panels = []
    for c in cells:
        curves = [r.curve for r in rows if (r.n, r.Q) == (c.n, c.Q)]
        rounds = [t for t, _ in curves[0]]
        mean = np.mean([[v for _, v in cur] for cur in curves if len(cur) == len(rounds)], axis=0)
        panels.append((f"n={c.n} Q={c.Q} ({c.seeds} seeds)", {"mean": (rounds, mean.tolist())}))
    (out / "speedup.svg").write_text(small_multiples(panels, cols=len(cfg.Qs), ylabel="fnat_sq"),
                                     encoding="utf-8")
    for c in cells:
        _say(args, f"n={c.n:<4} Q={c.Q:<4} seeds={c.seeds:<3} mean fnat_sq={c.mean:.4e} +- {c.stderr:.2e}")
    _say(args, f"non-increasing in n and Q: {mono}")
    _say(args, f"wrote {out / 'speedup.csv'}, {out / 'speedup_runs.csv'} and {out / 'speedup.svg'}")
    return EXIT_DIVERGED if any(r.diverged for r in rows) else EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    seeds = args.seeds or (cfg.run.seed,)
    ok = True
    for s in seeds:
        checks = run_checks(replace(cfg.run, seed=s))
        ok &= all(c.passed for c in checks)
        if len(seeds) > 1:
            _say(args, f"seed {s}")
        print(format_table(checks))
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare, "verify": cmd_verify}
HELP = {
    "run": "run one algorithm; writes metrics.csv and curves.svg",
    "sweep": "n x Q grid over seeds; writes speedup.csv and speedup.svg",
    "compare": "fednmap vs baselines on shared seeds; writes compare.csv and compare.svg",
    "verify": "invariant suite; exit 3 on any failure",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fednmap", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML config (defaults apply when omitted)")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                        help="override a config key, e.g. fed.Q=10 (repeatable)")
    common.add_argument("--seeds", metavar="A,B,C", help="comma-separated seeds")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.seeds = _parse_seeds(args.seeds)
        cfg = load_config(args.config, args.overrides)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        # bad data paths or parameter combinations surface at resolve time
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
