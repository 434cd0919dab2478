"""Newton-Raphson power flow and classical generator initialization."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .network import CaseData, build_ybus, kron_reduce, ReducedNetwork

log = logging.getLogger(__name__)


class PowerFlowError(RuntimeError):
    def __init__(self, msg, mismatch=np.nan, iterations=0):
        super().__init__(msg)
        self.mismatch = mismatch
        self.iterations = iterations


@dataclass(frozen=True)
class PowerFlowSolution:
    vm: np.ndarray
    va: np.ndarray  # rad, slack = 0
    p_gen: np.ndarray  # pu, per generator
    q_gen: np.ndarray
    iterations: int
    mismatch: float

    @property
    def voltage(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)


@dataclass(frozen=True)
class GeneratorInternalState:
    emf: np.ndarray  # complex E' (absolute angle)
    i_d: np.ndarray
    i_q: np.ndarray
    p_mech: np.ndarray

    @property
    def emf_mag(self) -> np.ndarray:
        return np.abs(self.emf)

    @property
    def delta(self) -> np.ndarray:
        return np.angle(self.emf)


def scheduled_injection(case: CaseData) -> np.ndarray:
    idx = case.bus_index()
    s = np.array([complex(-b.p_load, -b.q_load) for b in case.buses]) / case.base_mva
    for g in case.generators:
        s[idx[g.bus]] += g.p_mw / case.base_mva
    return s


def power_mismatch(Y: np.ndarray, V: np.ndarray, s_sched: np.ndarray) -> np.ndarray:
    return V * np.conj(Y @ V) - s_sched


def _ds_dv(Y, V):
    I = Y @ V
    vnorm = V / np.abs(V)
    ds_dvm = np.diag(V) @ np.conj(Y @ np.diag(vnorm)) + np.diag(np.conj(I) * vnorm)
    ds_dva = 1j * np.diag(V) @ np.conj(np.diag(I) - Y @ np.diag(V))
    return ds_dvm, ds_dva


def solve_power_flow(case: CaseData, tol: float = 1e-8, max_iter: int = 30) -> PowerFlowSolution:
    """Polar Newton-Raphson; loads are constant power, PV reactive limits ignored."""
    Y = build_ybus(case, load_model="excluded").matrix
    types = [b.type for b in case.buses]
    pv = [k for k, t in enumerate(types) if t == "pv"]
    pq = [k for k, t in enumerate(types) if t == "pq"]
    slack = types.index("slack")
    pvpq = pv + pq
    s_sched = scheduled_injection(case)

    vm = np.array([b.vm if b.type != "pq" else 1.0 for b in case.buses])
    va = np.zeros(len(case.buses))
    for k in pvpq:
        va[k] = case.buses[k].va - case.buses[slack].va
    V = vm * np.exp(1j * va)

    def norm_of(mis):
        parts = np.r_[mis.real[pvpq], mis.imag[pq]]
        return float(np.abs(parts).max()) if parts.size else 0.0, parts

    mis = power_mismatch(Y, V, s_sched)
    err, F = norm_of(mis)
    it = 0
    while err >= tol:
        if it >= max_iter or not np.isfinite(err):
            raise PowerFlowError(f"power flow did not converge in {it} iterations "
                                 f"(mismatch {err:.3e})", err, it)
        ds_dvm, ds_dva = _ds_dv(Y, V)
        J = np.block([
            [ds_dva[np.ix_(pvpq, pvpq)].real, ds_dvm[np.ix_(pvpq, pq)].real],
            [ds_dva[np.ix_(pq, pvpq)].imag, ds_dvm[np.ix_(pq, pq)].imag],
        ])
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise PowerFlowError("singular power-flow Jacobian", err, it) from None
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq):]
        V = vm * np.exp(1j * va)
        mis = power_mismatch(Y, V, s_sched)
        err, F = norm_of(mis)
        it += 1
    log.debug("power flow converged in %d iterations, mismatch %.2e", it, err)

    s_bus = V * np.conj(Y @ V)
    idx = case.bus_index()
    ngen = len(case.generators)
    p_gen = np.empty(ngen)
    q_gen = np.empty(ngen)
    for bus_id, k in idx.items():
        gens = [i for i, g in enumerate(case.generators) if g.bus == bus_id]
        if not gens:
            continue
        b = case.buses[k]
        s_gen = s_bus[k] + complex(b.p_load, b.q_load) / case.base_mva
        sched = np.array([case.generators[i].p_mw for i in gens]) / case.base_mva
        extra = (s_gen.real - sched.sum()) / len(gens)
        for i, p in zip(gens, sched):
            p_gen[i] = p + extra
            q_gen[i] = s_gen.imag / len(gens)
    return PowerFlowSolution(vm.copy(), va.copy(), p_gen, q_gen, it, err)


def init_classical_generators(case: CaseData, pf: PowerFlowSolution) -> GeneratorInternalState:
    """E' = V + jX'd I per machine; mechanical power equals the initial electrical power."""
    idx = case.bus_index()
    ngen = len(case.generators)
    emf = np.empty(ngen, dtype=complex)
    i_d = np.empty(ngen)
    i_q = np.empty(ngen)
    V = pf.voltage
    for k, g in enumerate(case.generators):
        v = V[idx[g.bus]]
        if abs(v) == 0.0:
            raise ValueError(f"generator {k} at bus {g.bus}: zero terminal voltage")
        cur = np.conj(complex(pf.p_gen[k], pf.q_gen[k]) / v)
        emf[k] = v + 1j * g.xd_prime * cur
        dq = cur * np.exp(-1j * (np.angle(emf[k]) - np.pi / 2))
        i_d[k], i_q[k] = dq.real, dq.imag
    return GeneratorInternalState(emf, i_d, i_q, pf.p_gen.copy())


@dataclass(frozen=True)
class OperatingPoint:
    """Pre-switching steady state: the case, its power flow and machine internal states."""

    case: CaseData
    pf: PowerFlowSolution
    gens: GeneratorInternalState

    def network(self, case: CaseData | None = None, label: str = "pre-switching") -> ReducedNetwork:
        """Reduced network of ``case`` (default: pre-switching) with loads frozen at pre-switching voltages."""
        case = self.case if case is None else case
        y = build_ybus(case, "as-shunts", voltages=self.pf.vm, label=label)
        return kron_reduce(y, case, self.gens.emf_mag, self.gens.p_mech, label)


def operating_point(case: CaseData, tol: float = 1e-8, max_iter: int = 30) -> OperatingPoint:
    pf = solve_power_flow(case, tol, max_iter)
    return OperatingPoint(case, pf, init_classical_generators(case, pf))
