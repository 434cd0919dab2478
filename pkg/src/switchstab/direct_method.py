"""Pseudo-fault direct method for transmission switching events.

A sustained bolted fault is applied at each end bus of the switched branch,
starting from the post-switching SEP. The exit point is the first potential
energy maximum along the fault-on trajectory. The BCU steps (reduced
gradient system, minimum gradient point, Newton) give the controlling UEP,
whose energy relative to the post-switching initial point is the margin.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import (DEFAULT_DAMPING_RATIO, DynamicState, TdsVerdict, Trajectory, faulted_network,
                       initial_state, post_switching, simulate_switching, sustained_fault_trajectory)
from .energy import energy_along_trajectory, kinetic_energy, potential_energy, total_energy
from .equilibria import (EquilibriumNotFound, EquilibriumPoint, SEPNotFound, compute_post_switching_sep,
                         solve_equilibrium, to_relative)
from .network import CaseError, IslandingError, ReducedNetwork, ReductionSingularError, SwitchingEvent
from .powerflow import OperatingPoint

log = logging.getLogger(__name__)

REASONS = ("SEPNotFound", "ExitEnergyBelowInit", "BCUFailed", "NoExitPoint", "NonHyperbolic",
           "Islanding", "NegativeMargin")


class NoExitPoint(RuntimeError):
    pass


class BCUFailed(RuntimeError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class ExitPoint:
    time: float
    delta: np.ndarray
    omega: np.ndarray
    potential: float
    kinetic: float
    bus: int | None = None

    @property
    def energy(self) -> float:
        return self.potential + self.kinetic


def first_local_max(values) -> int | None:
    for k in range(1, len(values) - 1):
        if values[k] >= values[k - 1] and values[k] > values[k + 1]:
            return k
    return None


def parabolic_peak(p0: float, p1: float, p2: float) -> tuple[float, float]:
    """Vertex ``(offset, value)`` of the parabola through three equally spaced samples.

    ``offset`` is in units of the sample spacing, relative to the middle sample.
    """
    denom = p0 - 2.0 * p1 + p2
    if denom >= 0.0:
        return 0.0, p1
    h = 0.5 * (p0 - p2) / denom
    return h, p1 - 0.25 * (p0 - p2) * h


def find_exit_point(fault_traj: Trajectory, sep, net_post: ReducedNetwork, M, bus: int | None = None) -> ExitPoint:
    """PEBS crossing: first local maximum of the post-switching PE along the fault-on trajectory."""
    sep_delta = sep.delta if hasattr(sep, "delta") else np.asarray(sep)
    energy = energy_along_trajectory(fault_traj, sep_delta, net_post, M)
    pe = energy.potential
    k = first_local_max(pe)
    if k is None:
        why = "trajectory blew up" if fault_traj.blowup_time is not None else "no potential-energy maximum"
        raise NoExitPoint(f"{why} within {fault_traj.t[-1]:.3g} s")
    h, peak = parabolic_peak(pe[k - 1], pe[k], pe[k + 1])
    j = k + 1 if h >= 0 else k - 1
    a = abs(h)
    delta = (1 - a) * fault_traj.delta[k] + a * fault_traj.delta[j]
    omega = (1 - a) * fault_traj.omega[k] + a * fault_traj.omega[j]
    t = fault_traj.t[k] + h * fault_traj.dt
    return ExitPoint(float(t), delta, omega, float(peak), kinetic_energy(DynamicState(delta, omega), M), bus)


def bcu_reduced_rhs(delta, net: ReducedNetwork, M) -> np.ndarray:
    """Gradient-like reduced system d(delta)/dt = f(delta); shares equilibria with the swing system."""
    return kernels.mismatch(delta, net.P, net.C, net.D, M)


@dataclass(frozen=True)
class MinimumGradientPoint:
    delta: np.ndarray
    norm: float
    time: float


def find_mgp(exit_delta, net_post: ReducedNetwork, M, dt: float = 1e-3, t_cap: float = 10.0,
             mgp_tol: float = 0.5, damping_ratio: float = DEFAULT_DAMPING_RATIO) -> MinimumGradientPoint:
    """First local minimum of ||f||_2 along the reduced trajectory from the exit point.

    The start itself counts when ||f|| rises immediately. A minimum whose norm
    exceeds ``mgp_tol`` is not near any equilibrium and is rejected.
    """
    M = np.asarray(M, dtype=float)
    exit_delta = exit_delta.delta if hasattr(exit_delta, "delta") else exit_delta
    status, k, delta, norms = kernels.gradient_flow(exit_delta, net_post.P, net_post.C, net_post.D, M,
                                                    dt, int(round(t_cap / dt)), 1e-7)
    if status == kernels.FLOW_CONVERGED:
        try:
            ep = solve_equilibrium(delta, net_post, M, damping_ratio=damping_ratio)
        except EquilibriumNotFound:
            ep = None
        if ep is not None and ep.type == 0:
            raise BCUFailed("no-mgp", "reduced trajectory converged to a stable equilibrium")
        return MinimumGradientPoint(delta, float(norms[k]), k * dt)
    if status != kernels.FLOW_MINIMUM:
        raise BCUFailed("no-mgp", "no local minimum of |f| before the time cap"
                        if status == kernels.FLOW_CAP else "reduced trajectory blew up")
    if norms[k] > mgp_tol:
        raise BCUFailed("no-mgp", f"minimum |f|={norms[k]:.3g} exceeds {mgp_tol:g}")
    return MinimumGradientPoint(delta, float(norms[k]), k * dt)


def refine_cuep(mgp, net_post: ReducedNetwork, M, sep: EquilibriumPoint,
                damping_ratio: float = DEFAULT_DAMPING_RATIO) -> EquilibriumPoint:
    """Newton from the MGP; the result must be a hyperbolic UEP distinct from the SEP."""
    start = mgp.delta if hasattr(mgp, "delta") else np.asarray(mgp)
    try:
        ep = solve_equilibrium(start, net_post, M, damping_ratio=damping_ratio)
    except EquilibriumNotFound as exc:
        raise BCUFailed("newton-diverged", str(exc)) from None
    if not ep.hyperbolic:
        raise BCUFailed("non-hyperbolic")
    if ep.type == 0 or np.abs(ep.delta - sep.delta).max() <= 1e-4:
        raise BCUFailed("converged-to-sep")
    return ep


def energy_margin(cuep: EquilibriumPoint, init: DynamicState, sep: EquilibriumPoint, net: ReducedNetwork, M) -> float:
    """V(CUEP) - V(initial point); positive supports a stable verdict."""
    v_cuep = total_energy(cuep.state, sep.delta, net, M).total
    v_init = total_energy(init, sep.delta, net, M).total
    return v_cuep - v_init


@dataclass(frozen=True)
class ScreeningOptions:
    dt_fault: float = 1e-3
    t_max_fault: float = 3.0
    dt: float = 5e-3
    t_horizon: float = 10.0
    damping_ratio: float = DEFAULT_DAMPING_RATIO
    mgp_dt: float = 1e-3
    mgp_cap: float = 10.0
    mgp_tol: float = 0.5
    tds_fallback: bool = False


@dataclass
class CUEPResult:
    status: str  # "ok" | "BCUFailed" | "NoExitPoint"
    chosen_bus: int | None = None
    exits: dict = field(default_factory=dict)  # bus -> ExitPoint
    exit_failures: dict = field(default_factory=dict)  # bus -> reason
    mgp: MinimumGradientPoint | None = None
    cuep: EquilibriumPoint | None = None
    detail: str = ""


def exit_points(op: OperatingPoint, event: SwitchingEvent, sep: EquilibriumPoint, net_post: ReducedNetwork,
                options: ScreeningOptions = ScreeningOptions()):
    """Exit points of sustained faults at both ends of the switched branch."""
    case_post, _ = post_switching(op, event)
    M = op.case.inertia
    start = sep.state
    exits, failures = {}, {}
    for bus in dict.fromkeys((event.from_bus, event.to_bus)):
        try:
            fnet = faulted_network(op, case_post, bus)
            traj = sustained_fault_trajectory(start, fnet, M, options.t_max_fault, options.dt_fault)
            exits[bus] = find_exit_point(traj, sep, net_post, M, bus)
        except (NoExitPoint, ReductionSingularError, CaseError) as exc:
            failures[bus] = str(exc)
    return exits, failures


def pseudo_fault_cuep(op: OperatingPoint, event: SwitchingEvent, sep: EquilibriumPoint | None = None,
                      options: ScreeningOptions = ScreeningOptions(), exits=None) -> CUEPResult:
    """CUEP via the end-bus fault whose exit point has the lower energy."""
    _, net_post = post_switching(op, event)
    if sep is None:
        sep = compute_post_switching_sep(op, event, options.damping_ratio, net=net_post)
    if exits is None:
        exits = exit_points(op, event, sep, net_post, options)
    found, failures = exits
    if not found:
        return CUEPResult("NoExitPoint", None, found, failures, detail="; ".join(failures.values()))
    bus = min(found, key=lambda b: found[b].energy)
    M = op.case.inertia
    try:
        mgp = find_mgp(found[bus].delta, net_post, M, options.mgp_dt, options.mgp_cap, options.mgp_tol,
                       options.damping_ratio)
    except BCUFailed as exc:
        return CUEPResult("BCUFailed", bus, found, failures, detail=str(exc))
    try:
        cuep = refine_cuep(mgp, net_post, M, sep, options.damping_ratio)
    except BCUFailed as exc:
        return CUEPResult("BCUFailed", bus, found, failures, mgp, detail=str(exc))
    cuep = EquilibriumPoint(cuep.delta, cuep.residual, cuep.type, cuep.hyperbolic, cuep.iterations,
                            potential_energy(cuep.delta, sep.delta, net_post))
    return CUEPResult("ok", bus, found, failures, mgp, cuep)


@dataclass
class ScreeningVerdict:
    index: int
    event: SwitchingEvent
    path: list = field(default_factory=list)
    init_energy: float | None = None
    exit_energies: dict = field(default_factory=dict)
    exit_failures: dict = field(default_factory=dict)
    chosen_bus: int | None = None
    cuep_energy: float | None = None
    cuep: EquilibriumPoint | None = None
    sep: EquilibriumPoint | None = None
    margin: float | None = None
    verdict: str = "NeedsTDS"  # "Stable" | "NeedsTDS"
    reason: str | None = None
    detail: str = ""
    step: int = 0  # pipeline step that terminated the direct analysis
    tds: TdsVerdict | None = None

    @property
    def final(self) -> str:
        if self.verdict == "Stable":
            return "Stable"
        if self.tds is not None:
            return str(self.tds)
        return "NeedsTDS"


def screen_contingency(op: OperatingPoint, event: SwitchingEvent, options: ScreeningOptions = ScreeningOptions(),
                       index: int = 0) -> ScreeningVerdict:
    """Screening pipeline for one switching event (steps 1-8)."""
    out = ScreeningVerdict(index, event)
    M = op.case.inertia

    def needs_tds(reason, step, detail=""):
        out.verdict, out.reason, out.step, out.detail = "NeedsTDS", reason, step, detail
        out.path.append(f"{step}:{reason}")
        if options.tds_fallback and reason != "Islanding":
            out.path.append("8:tds")
            _, out.tds = simulate_switching(op, event, options.t_horizon, options.dt, options.damping_ratio)
        return out

    # 1. post-switching SEP from the post-switching initial point
    try:
        _, net = post_switching(op, event)
    except IslandingError as exc:
        return needs_tds("Islanding", 1, str(exc))
    except ReductionSingularError as exc:
        return needs_tds("SEPNotFound", 1, str(exc))
    try:
        sep = compute_post_switching_sep(op, event, options.damping_ratio, net=net)
    except SEPNotFound as exc:
        return needs_tds("SEPNotFound", 1, str(exc))
    out.sep = sep
    out.path.append("1:sep")

    # 2. energy at the initial point
    init = initial_state(op)
    out.init_energy = total_energy(init, sep.delta, net, M).total
    out.path.append("2:v_init")

    # 3. exit points of both pseudo-fault trajectories, started at the SEP
    exits = exit_points(op, event, sep, net, options)
    found, failures = exits
    out.exit_energies = {b: e.energy for b, e in found.items()}
    out.exit_failures = dict(failures)
    out.path.append("3:exits")
    if not found:
        return needs_tds("NoExitPoint", 3, "; ".join(failures.values()))

    # 4. any exit below the initial energy means the initial point may lie outside
    if min(out.exit_energies.values()) < out.init_energy:
        return needs_tds("ExitEnergyBelowInit", 4)
    out.path.append("4:exits>init")

    # 5. BCU on the lowest-energy exit
    res = pseudo_fault_cuep(op, event, sep, options, exits=exits)
    out.chosen_bus = res.chosen_bus
    if res.status != "ok":
        reason = "NonHyperbolic" if "non-hyperbolic" in res.detail else res.status
        return needs_tds(reason, 5, res.detail)
    out.cuep = res.cuep
    out.path.append("5:cuep")

    # 6. critical energy
    out.cuep_energy = res.cuep.energy
    out.path.append("6:v_cuep")

    # 7. margin
    out.margin = energy_margin(res.cuep, init, sep, net, M)
    if out.margin > 0:
        out.verdict, out.step = "Stable", 7
        out.path.append("7:stable")
        return out
    return needs_tds("NegativeMargin", 7)


def screen_batch(op: OperatingPoint, events, options: ScreeningOptions = ScreeningOptions(), jobs: int = 1):
    """Independent screening of each event, in input order."""
    events = list(events)
    if jobs <= 1 or len(events) <= 1:
        return [screen_contingency(op, e, options, i) for i, e in enumerate(events)]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(screen_contingency, op, e, options, i) for i, e in enumerate(events)]
        return [f.result() for f in futures]
