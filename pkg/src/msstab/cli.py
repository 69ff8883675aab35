"""Command-line front end.

``msstab analyze --config C [--json OUT]``
``msstab simulate --config C [--csv OUT] [--svg OUT]``
``msstab reproduce TARGET [--out DIR]``

Exit codes: 0 success, 1 I/O error, 2 invalid configuration or input,
3 reproduction mismatch.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import BudgetExceeded, ConfigError, ContractViolation, UnsupportedConfiguration
from .montecarlo import compare_to_reference, run_ensemble, write_csv
from .reports import plot_ms, write_json
from .reproduce import TARGETS, reproduce
from .stability import StabilityReport, analyze

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_MISMATCH = 0, 1, 2, 3


def cmd_analyze(cfg: ExperimentConfig) -> StabilityReport:
    report = analyze(cfg.build_space(), cfg.build_diffusion(), cfg.build_noise(),
                     cfg.build_scheme(), band=cfg.analysis.band)
    report.notes.extend(cfg.warnings)
    return report


def cmd_simulate(cfg: ExperimentConfig, csv_path=None, svg_path=None, budget=None):
    ens = cfg.build_ensemble()
    if budget is not None:
        ens = type(ens)(M=ens.M, master_seed=ens.master_seed, T=ens.T,
                        record_stride=ens.record_stride, budget=budget)
    result = run_ensemble(cfg.build_scheme(), cfg.build_space(), cfg.build_diffusion(),
                          cfg.build_noise(), cfg.initial_condition(), ens,
                          workers=cfg.mc.workers)
    if csv_path is not None:
        write_csv(result, csv_path)
    if svg_path is not None:
        label = f"{cfg.scheme.rational}/{cfg.scheme.integrator} dt={cfg.time.dt:g}"
        plot_ms([(label, result)], svg_path, title=f"M = {ens.M}")
    return result


def _resolve(path, cfg: ExperimentConfig):
    p = Path(path)
    if p.is_absolute() or cfg.output.dir in ("", "."):
        return p
    base = Path(cfg.output.dir)
    if cfg.base_dir and not base.is_absolute():
        base = Path(cfg.base_dir) / base
    base.mkdir(parents=True, exist_ok=True)
    return base / p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msstab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="assemble S, compute rho(S) and the closed-form conditions")
    a.add_argument("--config", required=True)
    a.add_argument("--json", help="write the report here instead of stdout")

    s = sub.add_parser("simulate", help="Monte Carlo estimate of the mean-square norm")
    s.add_argument("--config", required=True)
    s.add_argument("--csv", help="CSV output (default: stdout)")
    s.add_argument("--svg", help="optional SVG plot")
    s.add_argument("--budget", type=float, help="override the sample-step budget")

    r = sub.add_parser("reproduce", help="regenerate a reference table or figure")
    r.add_argument("target", choices=TARGETS)
    r.add_argument("--out", help="directory for CSV/SVG/JSON artifacts")
    r.add_argument("--samples", type=int, help="Monte Carlo sample count for figure targets")
    r.add_argument("--no-simulate", action="store_true", help="skip Monte Carlo for figures")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            cfg = load_config(args.config)
            report = cmd_analyze(cfg)
            text = write_json(report.to_dict())
            if args.json:
                _resolve(args.json, cfg).write_text(text + "\n")
            else:
                print(text)
            return EXIT_OK
        if args.command == "simulate":
            cfg = load_config(args.config)
            csv_path = _resolve(args.csv, cfg) if args.csv else None
            svg_path = _resolve(args.svg, cfg) if args.svg else None
            result = cmd_simulate(cfg, csv_path, svg_path, args.budget)
            if csv_path is None:
                _print_csv(result)
            div = compare_to_reference(result)
            print(f"samples={result.samples} backend={result.backend} trend={div.trend} "
                  f"max|z|={div.max_abs_z:.3g}", file=sys.stderr)
            return EXIT_OK
        rep = reproduce(args.target, args.out, samples=args.samples,
                        simulate=not args.no_simulate, seed=args.seed, workers=args.workers)
        for line in rep.summary_lines():
            print(line)
        for note in rep.notes:
            print(f"note: {note}")
        return EXIT_OK if rep.ok else EXIT_MISMATCH
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExceeded as exc:
        print(f"refused: {exc} (estimated cost {exc.estimated_cost})", file=sys.stderr)
        return EXIT_INVALID
    except (ContractViolation, UnsupportedConfiguration) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def _print_csv(result):
    print("t,ms_estimate,ms_stderr,reference")
    ref = result.reference
    for i, t in enumerate(result.times):
        vals = [t, result.ms_estimate[i], result.ms_stderr[i]]
        row = [format(float(v), ".17g") for v in vals]
        row.append(format(float(ref[i]), ".17g") if ref is not None else "")
        print(",".join(row))


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "cmd_analyze", "cmd_simulate"]
