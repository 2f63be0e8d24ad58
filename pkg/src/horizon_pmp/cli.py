"""Command-line front end.

Exit codes: 0 pass, 1 verified failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import io as hio
from .errors import HorizonPMPError, ScenarioNotFoundError, SchemaError
from .horizon import pathology_demo
from .pmp_verify import run_pmp
from .report import round_sig
from .scenarios import build_instance, run_scenario, scenario_config, scenario_names, sufficiency_run

log = logging.getLogger("horizon_pmp")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
FORMATS = ("json", "csv", "text")
PATHOLOGY_VERDICT = "finite-horizon limit is NOT infinite-horizon optimal"


@dataclass
class RunConfig:
    target: Optional[str] = None
    N: Optional[int] = None
    tol_abs: Optional[float] = None
    tol_rel: Optional[float] = None
    out: Path = Path("out")
    fmt: str = "json"
    seed: int = 0
    sufficiency: bool = False

    def __post_init__(self):
        if self.N is not None and self.N < 8:
            raise ValueError("--N must be at least 8")
        for name in ("tol_abs", "tol_rel"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"--{name.replace('_', '-')} must be positive")
        if self.fmt not in FORMATS:
            raise ValueError(f"--format must be one of {', '.join(FORMATS)}")

    def overrides(self) -> dict:
        return {"N": self.N, "tol_abs": self.tol_abs, "tol_rel": self.tol_rel, "seed": self.seed}


def _verdict_text(report, fmt: str, extra: Optional[dict] = None) -> tuple[str, str]:
    if fmt == "json":
        d = report.to_dict()
        if extra:
            d.update(round_sig(extra))
        return "verdict.json", json.dumps(d, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "residual", "tolerance", "pass"])
        for e in report.conditions:
            w.writerow([e.name, round_sig(e.residual), round_sig(e.tolerance), e.passed])
        return "verdict.csv", buf.getvalue()
    return "verdict.txt", report.summary() + "\n"


def _emit(cfg: RunConfig, report, process, adj, extra=None) -> list:
    out = cfg.out
    name, text = _verdict_text(report, cfg.fmt, extra)
    files = [hio.atomic_write(out / name, text), hio.write_process_csv(process, out / "trajectory.csv")]
    gaps = None
    try:
        gaps = report.get("max_condition").gaps
    except (KeyError, AttributeError):
        pass
    if adj is not None:
        files.append(hio.atomic_write(out / "adjoint.csv", hio.adjoint_csv(adj, process.grid.nodes)))
    files.append(hio.atomic_write(out / "plot_data.csv", hio.plot_csv(process, adj, gaps)))
    return files


def cmd_scenario(name: str, cfg: RunConfig) -> int:
    result = run_scenario(name, **cfg.overrides(), sufficiency=True if cfg.sufficiency else None)
    extra = {"verdicts": result.verdicts(), "expected": result.config.get("expected", {})}
    files = _emit(cfg, result.report, result.process, result.adjoint, extra)
    print(result.report.summary())
    bad = result.mismatches()
    if bad:
        print(f"verdict mismatch: {', '.join(bad)}")
    print(f"wrote {len(files)} files to {cfg.out}")
    return EXIT_FAIL if bad else EXIT_PASS


def cmd_verify(path: str, problem_name: str, cfg: RunConfig) -> int:
    inst = build_instance(problem_name, **cfg.overrides())
    pb = inst.problem
    process = hio.read_process_csv(path, pb.n, pb.m)
    adj = inst.adjoint(process)
    if adj is None:
        raise HorizonPMPError(f"scenario {problem_name!r} has no multiplier recipe to verify against")
    sc = scenario_config(problem_name, **cfg.overrides())
    report = run_pmp(pb, process, adj, f"{problem_name}:{Path(path).name}", float(sc["tol_abs"]),
                     float(sc["tol_rel"]), seed=cfg.seed)
    ok = report.passed
    extra = None
    if cfg.sufficiency:
        inst.process = process
        arrow = sufficiency_run(inst, adj, report, sc)
        extra = {"arrow": arrow}
        ok = ok and arrow["verdict"] == "pass"
        print(f"Arrow verdict: {arrow['verdict']}")
    _emit(cfg, report, process, adj, extra)
    print(report.summary())
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_pathology(rho: float, T_list, cfg: RunConfig) -> int:
    table = pathology_demo(rho, 1.0, T_list)
    hio.atomic_write(cfg.out / "pathology.csv", hio.pathology_csv(table))
    for r in table["rows"]:
        print(f"T={r['T']:g} tau={r['tau']:.12g} J_T={r['J_T']:.12g} J_inf={r['J_infinite_of_T_process']:.12g}")
    if table["limit_not_optimal"]:
        print(PATHOLOGY_VERDICT)
    return EXIT_PASS


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _T_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad T list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--N", type=int, default=None, help="grid size (>= 8)")
    common.add_argument("--tol-abs", type=float, default=None)
    common.add_argument("--tol-rel", type=float, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out", help="output directory (HORIZON_PMP_OUT overrides)")
    common.add_argument("--format", dest="fmt", choices=FORMATS, default="json")
    common.add_argument("--sufficiency", action="store_true", help="also run the Arrow-type checks")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="horizon-pmp", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("scenario", parents=[common], help="run a registered scenario")
    s.add_argument("name", nargs="?")
    s.add_argument("--scenario", dest="scenario_opt")
    s.add_argument("--list", action="store_true", help="list scenario names")

    v = sub.add_parser("verify", parents=[common], help="verify a trajectory CSV")
    v.add_argument("--input", required=True)
    v.add_argument("--scenario", required=True, help="scenario whose problem and multipliers to use")

    q = sub.add_parser("pathology", parents=[common], help="finite-horizon approximation table")
    q.add_argument("--rho", type=float, default=0.5)
    q.add_argument("--T", type=_T_list, default=[5.0, 10.0, 20.0, 40.0])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    out = Path(os.environ.get("HORIZON_PMP_OUT") or args.out)
    try:
        cfg = RunConfig(None, args.N, args.tol_abs, args.tol_rel, out, args.fmt, args.seed, args.sufficiency)
        if args.command == "scenario":
            if args.list:
                print("\n".join(scenario_names()))
                return EXIT_PASS
            name = args.name or args.scenario_opt
            if not name:
                print("scenario: a name is required", file=sys.stderr)
                return EXIT_USAGE
            return cmd_scenario(name, cfg)
        if args.command == "verify":
            return cmd_verify(args.input, args.scenario, cfg)
        return cmd_pathology(args.rho, args.T, cfg)
    except ScenarioNotFoundError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"error: schema mismatch in column {exc.column!r}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HorizonPMPError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # keep the exit-code contract
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
