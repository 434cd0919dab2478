"""Equilibrium points of the reduced system: Newton solves, saddle type,
brute-force UEP enumeration, stability-boundary membership and the
closest-UEP method.

Angles are handled in two coordinate systems. ``delta`` is the COI frame
(n components, sum M_i delta_i = 0). ``theta`` holds the n-1 angles relative
to the last machine; the vector field is exactly 2*pi-periodic in each
theta component, so dedup and basin copies are done there.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .dynamics import (DEFAULT_DAMPING_RATIO, DynamicState, coi_project, initial_state, post_switching)
from .energy import potential_energy
from .network import ReducedNetwork, ReductionSingularError
from .powerflow import OperatingPoint

log = logging.getLogger(__name__)

HYPERBOLIC_TOL = 1e-9
MAX_ENUMERATION_MACHINES = 10


class EquilibriumNotFound(RuntimeError):
    pass


class SEPNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class EquilibriumPoint:
    delta: np.ndarray  # COI frame; omega is identically zero
    residual: float
    type: int = -1  # number of eigenvalues with Re > 0; -1 if unclassified
    hyperbolic: bool = True
    iterations: int = 0
    energy: float | None = None
    boundary: str | None = None  # "yes" | "no" | "inconclusive"

    @property
    def state(self) -> DynamicState:
        return DynamicState.at_rest(self.delta)

    @property
    def is_sep(self) -> bool:
        return self.type == 0


def to_relative(delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    return delta[:-1] - delta[-1]


def from_relative(theta, M) -> np.ndarray:
    return coi_project(np.r_[theta, 0.0], M)


def wrap_offset(x) -> np.ndarray:
    """Map angle offsets into [-pi, pi)."""
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


def mismatch_jacobian(delta, net: ReducedNetwork, M) -> np.ndarray:
    """d f / d delta for the COI-projected mismatch (n x n)."""
    delta = np.asarray(delta, dtype=float)
    a = delta[:, None] - delta[None, :]
    Jg = net.C * np.cos(a) - net.D * np.sin(a)
    np.fill_diagonal(Jg, 0.0)
    np.fill_diagonal(Jg, -Jg.sum(axis=1))
    m = np.asarray(M, dtype=float) / np.sum(M)
    return Jg - np.outer(m, Jg.sum(axis=0))


def state_matrix(delta, net: ReducedNetwork, M, damping_ratio: float) -> np.ndarray:
    """Jacobian of the second-order system in (theta, theta_dot), size 2(n-1)."""
    M = np.asarray(M, dtype=float)
    J = mismatch_jacobian(delta, net, M)
    n = len(M)
    acc = J[:, : n - 1] / M[:, None]
    K = acc[: n - 1] - acc[n - 1]
    I = np.eye(n - 1)
    return np.block([[np.zeros((n - 1, n - 1)), I], [K, -damping_ratio * I]])


def classify_ep(delta, net: ReducedNetwork, M, damping_ratio: float = DEFAULT_DAMPING_RATIO):
    """Return ``(type, hyperbolic, eigenvalues)`` of the reduced-coordinate Jacobian."""
    ev = np.linalg.eigvals(state_matrix(delta, net, M, damping_ratio))
    k = int(np.sum(ev.real > HYPERBOLIC_TOL))
    hyperbolic = bool(np.all(np.abs(ev.real) > HYPERBOLIC_TOL))
    return k, hyperbolic, ev


def solve_equilibrium(guess, net: ReducedNetwork, M, tol: float = 1e-10, max_iter: int = 50,
                      max_halvings: int = 10, damping_ratio: float = DEFAULT_DAMPING_RATIO,
                      classify: bool = True) -> EquilibriumPoint:
    """Damped Newton on f(delta) = 0 over the n-1 independent angles.

    ``guess`` is a COI angle vector (any uniform shift is ignored).
    """
    M = np.asarray(M, dtype=float)
    guess = np.asarray(guess, dtype=float)
    if not np.all(np.isfinite(guess)):
        raise EquilibriumNotFound("non-finite initial guess")
    n = len(M)
    theta = to_relative(guess)
    P, C, D = net.P, net.C, net.D

    def resid(th):
        return kernels.mismatch(from_relative(th, M), P, C, D, M)

    r = resid(theta)
    err = np.abs(r).max()
    it = 0
    while err >= tol:
        if it >= max_iter:
            raise EquilibriumNotFound(f"Newton did not converge in {max_iter} iterations (|f|={err:.2e})")
        J = mismatch_jacobian(from_relative(theta, M), net, M)[: n - 1, : n - 1]
        try:
            step = np.linalg.solve(J, -r[: n - 1])
        except np.linalg.LinAlgError:
            raise EquilibriumNotFound("singular Jacobian in Newton iteration") from None
        lam = 1.0
        for _ in range(max_halvings):
            trial = resid(theta + lam * step)
            if np.all(np.isfinite(trial)) and np.abs(trial).max() < err:
                break
            lam *= 0.5
        theta = theta + lam * step
        r = resid(theta)
        err = np.abs(r).max()
        if not np.isfinite(err):
            raise EquilibriumNotFound("Newton iterate became non-finite")
        it += 1
    delta = from_relative(theta, M)
    if abs(M @ delta) > 1e-9 * max(1.0, np.abs(delta).max()) * M.sum():
        raise EquilibriumNotFound("converged point violates the COI identity")
    if classify:
        k, hyp, _ = classify_ep(delta, net, M, damping_ratio)
    else:
        k, hyp = -1, True
    return EquilibriumPoint(delta, float(err), k, hyp, it)


def compute_post_switching_sep(op: OperatingPoint, event, damping_ratio: float = DEFAULT_DAMPING_RATIO,
                               net: ReducedNetwork | None = None) -> EquilibriumPoint:
    """Newton from the post-switching initial point; must land on a type-0 point."""
    if net is None:
        try:
            _, net = post_switching(op, event)
        except ReductionSingularError as exc:
            raise SEPNotFound(f"reduction singular: {exc}") from None
    x0 = initial_state(op)
    try:
        ep = solve_equilibrium(x0.delta, net, op.case.inertia, damping_ratio=damping_ratio)
    except EquilibriumNotFound as exc:
        raise SEPNotFound(str(exc)) from None
    if ep.type != 0 or not ep.hyperbolic:
        raise SEPNotFound(f"Newton converged to a type-{ep.type} point, not a stable equilibrium")
    return ep


# --------------------------------------------------------------------------
# enumeration
# --------------------------------------------------------------------------

def _same_mod_2pi(a, b, tol=1e-6) -> bool:
    return bool(np.abs(wrap_offset(a - b)).max() < tol)


def enumerate_ueps(net: ReducedNetwork, sep: EquilibriumPoint, M, budget: int = 200,
                   rng: np.random.Generator | None = None,
                   damping_ratio: float = DEFAULT_DAMPING_RATIO) -> list[EquilibriumPoint]:
    """Multi-start Newton from a lattice around the SEP plus ``budget`` random offsets.

    Points are distinct modulo 2*pi (relative angles) and returned in the copy
    nearest the SEP. SEPs are dropped.
    """
    M = np.asarray(M, dtype=float)
    n = len(M)
    if n > MAX_ENUMERATION_MACHINES:
        raise ValueError(f"brute-force enumeration is limited to {MAX_ENUMERATION_MACHINES} machines (got {n})")
    rng = np.random.default_rng(42) if rng is None else rng
    theta_s = to_relative(sep.delta)
    lattice = [np.array(d) for d in itertools.product((0.0, np.pi / 2, -np.pi / 2, np.pi, -np.pi), repeat=n - 1)]
    randoms = list(rng.uniform(-np.pi, np.pi, size=(budget, n - 1)))
    found: list[np.ndarray] = []
    out: list[EquilibriumPoint] = []
    for offset in lattice + randoms:
        try:
            ep = solve_equilibrium(from_relative(theta_s + offset, M), net, M, damping_ratio=damping_ratio)
        except EquilibriumNotFound:
            continue
        theta = to_relative(ep.delta)
        theta = theta_s + wrap_offset(theta - theta_s)
        if any(_same_mod_2pi(theta, f) for f in found):
            continue
        found.append(theta)
        if ep.type == 0:
            continue
        out.append(replace(ep, delta=from_relative(theta, M)))
    return out


# --------------------------------------------------------------------------
# stability-boundary membership
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ShotOutcome:
    kind: str  # "sep" | "other" | "diverged" | "timeout"
    offset: tuple[int, ...] = ()  # 2*pi multiples (relative angles) of the SEP copy reached


def _unstable_directions(delta, net, M, damping_ratio):
    A = state_matrix(delta, net, M, damping_ratio)
    ev, V = np.linalg.eig(A)
    m = len(M) - 1
    dirs = []
    for k in np.flatnonzero(ev.real > HYPERBOLIC_TOL):
        parts = [V[:, k].real] if abs(ev[k].imag) < 1e-12 else [V[:, k].real, V[:, k].imag]
        for v in parts:
            scale = np.abs(v[:m]).max()
            if scale > 0:
                dirs.append(v / scale)
    return dirs


def shoot_unstable_manifold(uep: EquilibriumPoint, sep: EquilibriumPoint, net: ReducedNetwork, M,
                            eps: float = 1e-4, damping_ratio: float = 2.0, horizon: float = 15.0,
                            dt: float = 5e-3, settle_tol: float = 1e-3) -> list[ShotOutcome]:
    """Follow each unstable eigendirection of ``uep`` (both signs) in the damped system."""
    M = np.asarray(M, dtype=float)
    m = len(M) - 1
    theta_u = to_relative(uep.delta)
    theta_s = to_relative(sep.delta)
    chunk = max(1, int(round(1.0 / dt)))
    outcomes = []
    for v in _unstable_directions(uep.delta, net, M, damping_ratio):
        for sign in (1.0, -1.0):
            d = from_relative(theta_u + sign * eps * v[:m], M)
            w = coi_project(np.r_[sign * eps * v[m:], 0.0], M)
            t = 0.0
            result = None
            while t < horizon - 1e-12:
                steps = min(chunk, int(round((horizon - t) / dt)))
                ds, ws, done = kernels.rk4_swing(d, w, net.P, net.C, net.D, M, damping_ratio, dt, steps)
                if done < steps:
                    result = ShotOutcome("diverged")
                    break
                d, w = ds[-1], ws[-1]
                t += steps * dt
                if np.abs(w).max() < settle_tol:
                    off = to_relative(d) - theta_s
                    k = np.round(off / (2 * np.pi))
                    if np.abs(off - 2 * np.pi * k).max() < settle_tol:
                        result = ShotOutcome("sep", tuple(int(x) for x in k))
                        break
                    if np.abs(kernels.mismatch(d, net.P, net.C, net.D, M)).max() < settle_tol:
                        result = ShotOutcome("other")
                        break
            if result is None:
                spread = np.abs(to_relative(d) - theta_s).max()
                result = ShotOutcome("diverged" if spread > 4 * np.pi else "timeout")
            outcomes.append(result)
    return outcomes


def _verdict(outcomes) -> str:
    if any(o.kind == "sep" and not any(o.offset) for o in outcomes):
        return "yes"
    if any(o.kind == "timeout" for o in outcomes):
        return "inconclusive"
    return "no"


def is_on_boundary(uep: EquilibriumPoint, sep: EquilibriumPoint, net: ReducedNetwork, M, **kw) -> str:
    """"yes" when some unstable-manifold branch of ``uep`` settles exactly at ``sep``."""
    return _verdict(shoot_unstable_manifold(uep, sep, net, M, **kw))


def boundary_copies(uep: EquilibriumPoint, sep: EquilibriumPoint, net: ReducedNetwork, M,
                    **kw) -> list[EquilibriumPoint]:
    """2*pi-translates of ``uep`` lying on the stability boundary of ``sep``.

    A branch from ``uep`` that settles at ``sep`` shifted by ``2*pi*k`` shows
    that ``uep - 2*pi*k`` is a boundary point of ``sep`` itself.
    """
    M = np.asarray(M, dtype=float)
    return _copies(uep, shoot_unstable_manifold(uep, sep, net, M, **kw), M)


def _copies(uep, outcomes, M):
    offsets = sorted({o.offset for o in outcomes if o.kind == "sep"})
    theta = to_relative(uep.delta)
    return [replace(uep, delta=from_relative(theta - 2 * np.pi * np.array(k), M), boundary="yes")
            for k in offsets]


def closest_uep(candidates, sep: EquilibriumPoint) -> EquilibriumPoint:
    """Lowest-energy boundary UEP; near-ties go to the one nearer the SEP."""
    pool = [c for c in candidates if c.boundary == "yes" and c.energy is not None]
    if not pool:
        raise ValueError("no boundary-confirmed UEP among candidates")
    best = min(c.energy for c in pool)
    tied = [c for c in pool if c.energy - best < 1e-9]
    return min(tied, key=lambda c: np.abs(c.delta - sep.delta).max())


@dataclass
class ClosestUEPResult:
    status: str  # "ok" | "SEPNotFound" | "NoBoundaryUEP" | "TooLarge"
    sep: EquilibriumPoint | None = None
    closest: EquilibriumPoint | None = None
    init_energy: float | None = None
    margin: float | None = None
    inventory: list = None
    detail: str = ""

    @property
    def stable(self) -> bool | None:
        if self.status == "SEPNotFound":
            return False
        if self.margin is None:
            return None
        return self.margin > 0


def closest_uep_method(op: OperatingPoint, event, budget: int = 200, seed: int = 42,
                       damping_ratio: float = DEFAULT_DAMPING_RATIO, boundary_eps: float = 1e-4,
                       boundary_horizon: float = 15.0, boundary_damping: float = 2.0) -> ClosestUEPResult:
    """Brute-force closest-UEP assessment of one switching event."""
    M = op.case.inertia
    if len(M) > MAX_ENUMERATION_MACHINES:
        return ClosestUEPResult("TooLarge", detail=f"{len(M)} machines")
    try:
        _, net = post_switching(op, event)
        sep = compute_post_switching_sep(op, event, damping_ratio, net=net)
    except (SEPNotFound, ReductionSingularError) as exc:
        return ClosestUEPResult("SEPNotFound", detail=str(exc))
    x0 = initial_state(op)
    v_init = potential_energy(x0, sep.delta, net)
    rng = np.random.default_rng(seed)
    inventory = []
    for uep in enumerate_ueps(net, sep, M, budget, rng, damping_ratio):
        if not uep.hyperbolic:
            continue
        outcomes = shoot_unstable_manifold(uep, sep, net, M, eps=boundary_eps, damping_ratio=boundary_damping,
                                           horizon=boundary_horizon)
        copies = _copies(uep, outcomes, M)
        if not copies:
            inventory.append(replace(uep, energy=potential_energy(uep.delta, sep.delta, net),
                                     boundary=_verdict(outcomes)))
        for c in copies:
            inventory.append(replace(c, energy=potential_energy(c.delta, sep.delta, net)))
    try:
        cu = closest_uep(inventory, sep)
    except ValueError as exc:
        return ClosestUEPResult("NoBoundaryUEP", sep, None, v_init, None, inventory, str(exc))
    return ClosestUEPResult("ok", sep, cu, v_init, cu.energy - v_init, inventory)
