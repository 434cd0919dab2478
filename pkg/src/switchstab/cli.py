"""Command-line front end: ``switchstab screen | trajectory``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass

from . import BUNDLED_CASES, BUNDLED_CONTINGENCIES, bundled_text, __version__
from .direct_method import ScreeningOptions, screen_contingency
from .dynamics import (DEFAULT_DAMPING_RATIO, faulted_network, initial_state, post_switching,
                       simulate_switching, sustained_fault_trajectory)
from .equilibria import SEPNotFound, closest_uep_method, compute_post_switching_sep
from .network import CaseError, SwitchingEvent, parse_case, parse_contingencies
from .powerflow import PowerFlowError, operating_point
from .report import ScreeningReport, closest_dict, render, trajectory_csv, uep_inventory, verdict_dict

log = logging.getLogger("switchstab")

METHODS = ("proposed", "closest-uep", "tds", "all")


@dataclass
class RunConfig:
    case: str
    contingencies: str
    method: str = "all"
    tds_fallback: bool = False
    out: str = "table"
    output: str | None = None
    load_p_mw: float | None = None
    seed: int = 42
    jobs: int = 1
    pf_tol: float = 1e-8
    pf_max_iter: int = 30
    dt_fault: float = 1e-3
    dt: float = 5e-3
    t_max_fault: float = 3.0
    t_horizon: float = 10.0
    damping_ratio: float = DEFAULT_DAMPING_RATIO
    uep_budget: int = 200
    boundary_eps: float = 1e-4
    boundary_horizon: float = 15.0
    boundary_damping: float = 2.0
    mgp_tol: float = 0.5
    uep_json: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.out not in ("table", "csv", "json"):
            raise ValueError("out must be table, csv or json")
        for name in ("pf_tol", "dt_fault", "dt", "boundary_eps", "mgp_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("t_max_fault", "t_horizon", "boundary_horizon"):
            if getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be at least 1 s")

    @property
    def options(self) -> ScreeningOptions:
        return ScreeningOptions(
            dt_fault=self.dt_fault, t_max_fault=self.t_max_fault, dt=self.dt, t_horizon=self.t_horizon,
            damping_ratio=self.damping_ratio, mgp_tol=self.mgp_tol,
            tds_fallback=self.tds_fallback or self.method == "all",
        )


def _read(source: str, bundled: dict) -> tuple[str, str]:
    if source in bundled:
        return bundled_text(bundled[source]), f"bundled:{source}"
    with open(source, encoding="utf-8") as fh:
        return fh.read(), source


def load_inputs(cfg: RunConfig):
    text, where = _read(cfg.case, BUNDLED_CASES)
    try:
        case = parse_case(text, name=where)
    except CaseError as exc:
        raise CaseError(f"{where}: {exc}") from None
    if cfg.load_p_mw is not None:
        case = case.with_load_p(cfg.load_p_mw)
    text, cwhere = _read(cfg.contingencies, BUNDLED_CONTINGENCIES)
    try:
        events = parse_contingencies(text)
    except CaseError as exc:
        raise CaseError(f"{cwhere}: {exc}") from None
    return case, events


def evaluate_contingency(op, event: SwitchingEvent, cfg: RunConfig, index: int) -> tuple[dict, list]:
    """One report row: the requested method columns plus the final verdict."""
    row = {"index": index, "from": event.from_bus, "to": event.to_bus, "action": event.action,
           "circuit": event.circuit, "tds": None, "closest": None, "proposed": None}
    inventory = []
    verdict = None
    if cfg.method in ("proposed", "all"):
        verdict = screen_contingency(op, event, cfg.options, index)
        row["proposed"] = verdict_dict(verdict)
    if cfg.method in ("closest-uep", "all"):
        res = closest_uep_method(op, event, cfg.uep_budget, cfg.seed, cfg.damping_ratio, cfg.boundary_eps,
                                 cfg.boundary_horizon, cfg.boundary_damping)
        row["closest"] = closest_dict(res)
        inventory = uep_inventory(res)
    tds = verdict.tds if verdict is not None else None
    if tds is None and cfg.method in ("tds", "all"):
        try:
            _, tds = simulate_switching(op, event, cfg.t_horizon, cfg.dt, cfg.damping_ratio)
        except CaseError as exc:
            row["tds"] = {"verdict": None, "t_loss": None, "detail": str(exc)}
    if tds is not None:
        row["tds"] = {"verdict": str(tds), "t_loss": tds.t_loss, "max_separation": tds.max_separation}

    if cfg.method == "tds":
        row["final"] = (row["tds"] or {}).get("verdict") or "NeedsTDS"
    elif cfg.method == "closest-uep":
        row["final"] = row["closest"]["verdict"] if row["closest"]["verdict"] != "-" else "NeedsTDS"
    elif verdict.verdict == "Stable":
        row["final"] = "Stable"
    else:
        row["final"] = (row["tds"] or {}).get("verdict") or "NeedsTDS"
    return row, inventory


def run(cfg: RunConfig) -> tuple[int, str]:
    """Execute a screening run; returns ``(exit_status, rendered_report)``."""
    case, events = load_inputs(cfg)
    op = operating_point(case, cfg.pf_tol, cfg.pf_max_iter)
    header = {
        "case": case.name, "contingencies": cfg.contingencies, "method": cfg.method, "seed": cfg.seed,
        "load_p_mw": cfg.load_p_mw, "tds_fallback": cfg.options.tds_fallback, "version": __version__,
        "generators": len(case.generators), "buses": len(case.buses),
    }
    if cfg.jobs > 1 and len(events) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futs = [pool.submit(evaluate_contingency, op, e, cfg, i) for i, e in enumerate(events)]
            results = [f.result() for f in futs]
    else:
        results = [evaluate_contingency(op, e, cfg, i) for i, e in enumerate(events)]
    report = ScreeningReport(header, [r for r, _ in results])
    if cfg.uep_json:
        with open(cfg.uep_json, "w", encoding="utf-8") as fh:
            json.dump({str(i + 1): inv for i, (_, inv) in enumerate(results)}, fh, indent=1)
    text = render(report, cfg.out)
    return (1 if report.any_unstable else 0), text


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--case", required=True, help="case JSON path or bundled name (wscc9)")
    p.add_argument("--load-p-mw", type=float, default=None, help="set P at every load bus (MW)")
    p.add_argument("--pf-tol", type=float, default=1e-8)
    p.add_argument("--pf-max-iter", type=int, default=30)
    p.add_argument("--damping-ratio", type=float, default=DEFAULT_DAMPING_RATIO, help="D_i/M_i for TDS (1/s)")
    p.add_argument("--dt-fault", type=float, default=1e-3)
    p.add_argument("--dt", type=float, default=5e-3)
    p.add_argument("--t-max-fault", type=float, default=3.0)
    p.add_argument("--t-horizon", type=float, default=10.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchstab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("screen", help="screen a list of switching contingencies")
    _add_common(s)
    s.add_argument("--contingencies", required=True, help="contingency JSON path or bundled name (wscc9, ieee145)")
    s.add_argument("--method", choices=METHODS, default="all")
    s.add_argument("--tds-fallback", action="store_true")
    s.add_argument("--out", choices=("table", "csv", "json"), default="table")
    s.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--uep-budget", type=int, default=200)
    s.add_argument("--boundary-eps", type=float, default=1e-4)
    s.add_argument("--boundary-horizon", type=float, default=15.0)
    s.add_argument("--boundary-damping", type=float, default=2.0)
    s.add_argument("--mgp-tol", type=float, default=0.5)
    s.add_argument("--uep-json", default=None, help="export the UEP inventory per contingency")

    t = sub.add_parser("trajectory", help="export a post-switching or fault-on trajectory as CSV")
    _add_common(t)
    t.add_argument("--from", dest="from_bus", type=int, required=True)
    t.add_argument("--to", dest="to_bus", type=int, required=True)
    t.add_argument("--circuit", type=int, default=1)
    t.add_argument("--action", choices=("open", "close"), default="open")
    t.add_argument("--fault-bus", type=int, default=None, help="sustained fault at this bus (post-switching)")
    t.add_argument("--start", choices=("sep", "init"), default="sep",
                   help="fault trajectory start: post-switching SEP or initial point")
    t.add_argument("--output", "-o", default=None)
    return parser


def _trajectory(args) -> int:
    cfg = RunConfig(args.case, "[]", load_p_mw=args.load_p_mw)
    text, where = _read(args.case, BUNDLED_CASES)
    case = parse_case(text, name=where)
    if cfg.load_p_mw is not None:
        case = case.with_load_p(cfg.load_p_mw)
    op = operating_point(case, args.pf_tol, args.pf_max_iter)
    event = SwitchingEvent(args.from_bus, args.to_bus, args.action, args.circuit)
    case_post, net = post_switching(op, event)
    M = case.inertia
    init = initial_state(op)
    try:
        sep = compute_post_switching_sep(op, event, args.damping_ratio, net=net).delta
    except SEPNotFound:
        log.warning("post-switching SEP not found; energies are relative to the initial point")
        sep = init.delta
    if args.fault_bus is None:
        traj, _ = simulate_switching(op, event, args.t_horizon, args.dt, args.damping_ratio)
    else:
        fnet = faulted_network(op, case_post, args.fault_bus)
        start = init if args.start == "init" else type(init).at_rest(sep)
        traj = sustained_fault_trajectory(start, fnet, M, args.t_max_fault, args.dt_fault)
    out = trajectory_csv(traj, sep, net, M)
    _emit(out, args.output)
    return 0


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    level = os.environ.get("SWITCHSTAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "trajectory":
            return _trajectory(args)
        cfg = RunConfig(
            case=args.case, contingencies=args.contingencies, method=args.method, tds_fallback=args.tds_fallback,
            out=args.out, output=args.output, load_p_mw=args.load_p_mw, seed=args.seed, jobs=args.jobs,
            pf_tol=args.pf_tol, pf_max_iter=args.pf_max_iter, dt_fault=args.dt_fault, dt=args.dt,
            t_max_fault=args.t_max_fault, t_horizon=args.t_horizon, damping_ratio=args.damping_ratio,
            uep_budget=args.uep_budget, boundary_eps=args.boundary_eps, boundary_horizon=args.boundary_horizon,
            boundary_damping=args.boundary_damping, mgp_tol=args.mgp_tol, uep_json=args.uep_json,
        )
        t0 = time.perf_counter()
        status, text = run(cfg)
        log.info("screening finished in %.1f s", time.perf_counter() - t0)
    except BrokenPipeError:
        return 0
    except (OSError, CaseError, PowerFlowError, ValueError) as exc:
        print(f"switchstab: error: {exc}", file=sys.stderr)
        return 2
    _emit(text, cfg.output)
    return status


if __name__ == "__main__":
    sys.exit(main())
