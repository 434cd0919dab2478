"""Case data, topology edits, admittance matrices and reduction to generator internal nodes."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

BUS_TYPES = ("slack", "pv", "pq")


class CaseError(ValueError):
    """Malformed or inconsistent case data."""


class IslandingError(CaseError):
    """A topology change disconnected the network."""


class ReductionSingularError(RuntimeError):
    """The load-bus block of the augmented admittance matrix is singular."""


@dataclass(frozen=True)
class Bus:
    id: int
    type: str
    vm: float = 1.0
    va: float = 0.0  # rad
    p_load: float = 0.0  # MW
    q_load: float = 0.0  # MVAr
    g_shunt: float = 0.0  # pu
    b_shunt: float = 0.0  # pu


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    circuit: int = 1
    tap: float = 1.0
    closed: bool = True

    @property
    def key(self):
        return branch_key(self.from_bus, self.to_bus, self.circuit)


@dataclass(frozen=True)
class Generator:
    bus: int
    p_mw: float
    m: float  # s^2/rad on system base
    xd_prime: float
    d: float = 0.0


@dataclass(frozen=True)
class CaseData:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0
    frequency_hz: float = 60.0
    name: str = ""

    def __post_init__(self):
        validate_case(self)

    @property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def inertia(self) -> np.ndarray:
        return np.array([g.m for g in self.generators])

    @property
    def damping(self) -> np.ndarray:
        return np.array([g.d for g in self.generators])

    def find_branch(self, from_bus: int, to_bus: int, circuit: int = 1) -> int:
        key = branch_key(from_bus, to_bus, circuit)
        for k, br in enumerate(self.branches):
            if br.key == key:
                return k
        raise CaseError(f"branch {from_bus}-{to_bus} (circuit {circuit}) not found")

    def with_load_p(self, p_mw: float) -> "CaseData":
        """Set real power at every bus that carries load; reactive demand is kept."""
        buses = tuple(
            replace(b, p_load=float(p_mw)) if (b.p_load != 0.0 or b.q_load != 0.0) else b
            for b in self.buses
        )
        return replace(self, buses=buses)


def branch_key(a: int, b: int, circuit: int = 1):
    return (min(a, b), max(a, b), circuit)


@dataclass(frozen=True)
class SwitchingEvent:
    from_bus: int
    to_bus: int
    action: str = "open"
    circuit: int = 1
    t_switch: float = 0.0

    def __post_init__(self):
        if self.action not in ("open", "close"):
            raise CaseError(f"switching action must be 'open' or 'close', got {self.action!r}")

    @property
    def label(self) -> str:
        return f"{self.action} {self.from_bus}-{self.to_bus}"


# --------------------------------------------------------------------------
# validation and parsing
# --------------------------------------------------------------------------

def _connected(case: CaseData) -> set[int]:
    adj: dict[int, set[int]] = {b.id: set() for b in case.buses}
    for br in case.branches:
        if br.closed:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
    start = case.buses[0].id
    seen = {start}
    queue = deque([start])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return seen


def validate_case(case: CaseData) -> None:
    ids = [b.id for b in case.buses]
    if not ids:
        raise CaseError("case has no buses")
    seen = set()
    for i in ids:
        if i in seen:
            raise CaseError(f"duplicate bus id {i}")
        seen.add(i)
    for b in case.buses:
        if b.type not in BUS_TYPES:
            raise CaseError(f"bus {b.id}: unknown type {b.type!r}")
        if b.vm <= 0:
            raise CaseError(f"bus {b.id}: voltage setpoint must be positive")
    slacks = [b.id for b in case.buses if b.type == "slack"]
    if len(slacks) != 1:
        raise CaseError(f"exactly one slack bus required, found {len(slacks)}")
    keys = set()
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                raise CaseError(f"branch {br.from_bus}-{br.to_bus}: unknown bus {end}")
        if br.from_bus == br.to_bus:
            raise CaseError(f"branch {br.from_bus}-{br.to_bus}: both ends on the same bus")
        if br.key in keys:
            raise CaseError(f"duplicate branch {br.from_bus}-{br.to_bus} circuit {br.circuit}")
        keys.add(br.key)
        if br.r == 0.0 and br.x == 0.0:
            raise CaseError(f"branch {br.from_bus}-{br.to_bus}: zero series impedance")
        if br.tap <= 0:
            raise CaseError(f"branch {br.from_bus}-{br.to_bus}: tap ratio must be positive")
    if not case.generators:
        raise CaseError("case has no generators")
    for k, g in enumerate(case.generators):
        if g.bus not in seen:
            raise CaseError(f"generator {k}: unknown bus {g.bus}")
        if g.m <= 0:
            raise CaseError(f"generator {k} at bus {g.bus}: inertia M must be positive")
        if g.xd_prime <= 0:
            raise CaseError(f"generator {k} at bus {g.bus}: X'd must be positive")
    reached = _connected(case)
    if len(reached) != len(ids):
        missing = sorted(set(ids) - reached)
        raise IslandingError(f"network is disconnected; unreachable buses {missing}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise CaseError(f"{where}: missing field {key!r}")
    return obj[key]


def parse_case(text: str, name: str = "") -> CaseData:
    """Parse the JSON case format into a validated :class:`CaseData`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise CaseError("case file must be a JSON object")
    for key in ("buses", "branches", "generators"):
        if not isinstance(doc.get(key), list):
            raise CaseError(f"top-level field {key!r} must be a list")
    base = float(doc.get("base_mva", 100.0))
    freq = float(doc.get("frequency_hz", 60.0))

    buses = []
    for k, b in enumerate(doc["buses"]):
        where = f"buses[{k}]"
        buses.append(Bus(
            id=int(_require(b, "id", where)),
            type=str(_require(b, "type", where)).lower(),
            vm=float(b.get("vm", 1.0)),
            va=np.deg2rad(float(b.get("va_deg", 0.0))),
            p_load=float(b.get("p_load_mw", 0.0)),
            q_load=float(b.get("q_load_mvar", 0.0)),
            g_shunt=float(b.get("g_shunt", 0.0)),
            b_shunt=float(b.get("b_shunt", 0.0)),
        ))
    branches = []
    for k, br in enumerate(doc["branches"]):
        where = f"branches[{k}]"
        status = str(br.get("status", "closed")).lower()
        if status not in ("open", "closed"):
            raise CaseError(f"{where}: status must be 'open' or 'closed'")
        branches.append(Branch(
            from_bus=int(_require(br, "from", where)),
            to_bus=int(_require(br, "to", where)),
            r=float(br.get("r", 0.0)),
            x=float(_require(br, "x", where)),
            b=float(br.get("b", 0.0)),
            circuit=int(br.get("circuit", 1)),
            tap=float(br.get("tap", 1.0)),
            closed=status == "closed",
        ))
    gens = []
    for k, g in enumerate(doc["generators"]):
        where = f"generators[{k}]"
        if "m" in g:
            m = float(g["m"])
        elif "h" in g:
            m = float(g["h"]) / (np.pi * freq)
        else:
            raise CaseError(f"{where}: needs inertia 'm' (s^2/rad) or 'h' (s)")
        gens.append(Generator(
            bus=int(_require(g, "bus", where)),
            p_mw=float(g.get("p_mw", 0.0)),
            m=m,
            xd_prime=float(_require(g, "xd_prime", where)),
            d=float(g.get("d", 0.0)),
        ))
    return CaseData(tuple(buses), tuple(branches), tuple(gens), base, freq, name or str(doc.get("name", "")))


def load_case(path) -> CaseData:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_case(text, name=str(path))
    except CaseError as exc:
        raise CaseError(f"{path}: {exc}") from None


def case_to_dict(case: CaseData) -> dict:
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "frequency_hz": case.frequency_hz,
        "buses": [
            {"id": b.id, "type": b.type, "vm": b.vm, "va_deg": float(np.rad2deg(b.va)),
             "p_load_mw": b.p_load, "q_load_mvar": b.q_load, "g_shunt": b.g_shunt, "b_shunt": b.b_shunt}
            for b in case.buses
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "circuit": br.circuit, "r": br.r, "x": br.x,
             "b": br.b, "tap": br.tap, "status": "closed" if br.closed else "open"}
            for br in case.branches
        ],
        "generators": [
            {"bus": g.bus, "p_mw": g.p_mw, "m": g.m, "xd_prime": g.xd_prime, "d": g.d}
            for g in case.generators
        ],
    }


def parse_contingencies(text: str) -> list[SwitchingEvent]:
    """Contingency list: JSON array of ``{from, to, circuit, action}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, list):
        raise CaseError("contingency file must be a JSON array")
    events = []
    for k, item in enumerate(doc):
        where = f"contingency[{k}]"
        events.append(SwitchingEvent(
            from_bus=int(_require(item, "from", where)),
            to_bus=int(_require(item, "to", where)),
            action=str(item.get("action", "open")).lower(),
            circuit=int(item.get("circuit", 1)),
            t_switch=float(item.get("t_switch", 0.0)),
        ))
    return events


# --------------------------------------------------------------------------
# topology
# --------------------------------------------------------------------------

def apply_switching(case: CaseData, event: SwitchingEvent) -> CaseData:
    """Flip the status of the referenced branch; the result is re-validated."""
    k = case.find_branch(event.from_bus, event.to_bus, event.circuit)
    br = case.branches[k]
    want_closed = event.action == "close"
    if br.closed == want_closed:
        raise CaseError(f"no-op event: branch {event.from_bus}-{event.to_bus} is already "
                        f"{'closed' if br.closed else 'open'}")
    branches = case.branches[:k] + (replace(br, closed=want_closed),) + case.branches[k + 1:]
    try:
        return replace(case, branches=branches)
    except IslandingError as exc:
        raise IslandingError(f"{event.label} islands the network ({exc})") from None


@dataclass(frozen=True)
class AdmittanceMatrix:
    matrix: np.ndarray
    bus_ids: tuple[int, ...]
    label: str = "base"

    def index(self, bus: int) -> int:
        try:
            return self.bus_ids.index(bus)
        except ValueError:
            raise CaseError(f"bus {bus} not in admittance matrix ({self.label})") from None


def build_ybus(case: CaseData, load_model: str = "as-shunts", voltages: Sequence[float] | None = None,
               label: str = "base") -> AdmittanceMatrix:
    """Bus admittance matrix in pu.

    With ``load_model="as-shunts"`` each load becomes ``(P - jQ)/|V|^2`` using
    ``voltages`` (per bus, in case order) or the bus setpoints.
    """
    if load_model not in ("as-shunts", "excluded"):
        raise ValueError(f"unknown load model {load_model!r}")
    idx = case.bus_index()
    n = len(case.buses)
    Y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if not br.closed:
            continue
        y = 1.0 / complex(br.r, br.x)
        i, j = idx[br.from_bus], idx[br.to_bus]
        t = br.tap
        Y[i, i] += (y + 0.5j * br.b) / t**2
        Y[j, j] += y + 0.5j * br.b
        Y[i, j] -= y / t
        Y[j, i] -= y / t
    for k, b in enumerate(case.buses):
        Y[k, k] += complex(b.g_shunt, b.b_shunt)
    if load_model == "as-shunts":
        vm = np.array([b.vm for b in case.buses]) if voltages is None else np.asarray(voltages, dtype=float)
        for k, b in enumerate(case.buses):
            if b.p_load or b.q_load:
                Y[k, k] += complex(b.p_load, -b.q_load) / case.base_mva / vm[k] ** 2
    return AdmittanceMatrix(Y, case.bus_ids, label)


def apply_bus_fault(y: AdmittanceMatrix, bus: int, generator_buses: Sequence[int] = ()) -> AdmittanceMatrix:
    """Bolted three-phase fault: the faulted bus is grounded and dropped from the matrix."""
    k = y.index(bus)
    if generator_buses and all(g == bus for g in generator_buses):
        raise CaseError(f"fault at bus {bus} shorts every generator")
    keep = [i for i in range(len(y.bus_ids)) if i != k]
    mat = y.matrix[np.ix_(keep, keep)].copy()
    ids = tuple(y.bus_ids[i] for i in keep)
    return AdmittanceMatrix(mat, ids, f"{y.label}+fault@{bus}")


@dataclass(frozen=True)
class ReducedNetwork:
    """Admittance seen between generator internal EMFs, plus derived swing coefficients."""

    emf: np.ndarray  # |E'_i|
    y_red: np.ndarray  # n x n complex
    p_mech: np.ndarray  # pu
    label: str = ""
    P: np.ndarray = field(init=False, repr=False)
    C: np.ndarray = field(init=False, repr=False)
    D: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        E = np.asarray(self.emf, dtype=float)
        G, B = self.y_red.real, self.y_red.imag
        EE = np.outer(E, E)
        C = EE * B
        D = EE * G
        np.fill_diagonal(C, 0.0)
        np.fill_diagonal(D, 0.0)
        object.__setattr__(self, "P", np.asarray(self.p_mech, dtype=float) - E**2 * np.diag(G))
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return len(self.emf)

    def electrical_power(self, delta: np.ndarray) -> np.ndarray:
        e = self.emf * np.exp(1j * np.asarray(delta))
        return (e * np.conj(self.y_red @ e)).real

    def with_p_mech(self, p_mech) -> "ReducedNetwork":
        return ReducedNetwork(self.emf, self.y_red, np.asarray(p_mech, dtype=float), self.label)


def augmented_blocks(y: AdmittanceMatrix, gen_buses: Sequence[int], xd_prime: Sequence[float]):
    """Blocks of the bus matrix extended with generator internal nodes behind jX'd."""
    ng = len(gen_buses)
    ybus = y.matrix.copy()
    y_gg = np.zeros((ng, ng), dtype=complex)
    y_gb = np.zeros((ng, len(y.bus_ids)), dtype=complex)
    for k, (bus, xd) in enumerate(zip(gen_buses, xd_prime)):
        yg = 1.0 / (1j * xd)
        y_gg[k, k] = yg
        if bus in y.bus_ids:
            i = y.index(bus)
            y_gb[k, i] = -yg
            ybus[i, i] += yg
    return y_gg, y_gb, ybus


def kron_reduce(y: AdmittanceMatrix, case: CaseData, emf, p_mech, label: str = "") -> ReducedNetwork:
    """Eliminate every bus, keeping only generator internal nodes.

    ``y`` must already carry loads as shunts; generators whose terminal bus was
    removed by a fault keep only their path to ground through X'd.
    """
    gen_buses = [g.bus for g in case.generators]
    xd = [g.xd_prime for g in case.generators]
    y_gg, y_gb, y_bb = augmented_blocks(y, gen_buses, xd)
    if y_bb.shape[0] == 0:
        y_red = y_gg
    else:
        cond = np.linalg.cond(y_bb)
        if not np.isfinite(cond) or cond > 1e12:
            raise ReductionSingularError(f"singular load-bus block ({label or y.label}), cond={cond:.3g}")
        y_red = y_gg - y_gb @ np.linalg.solve(y_bb, y_gb.T)
    return ReducedNetwork(np.abs(np.asarray(emf)), y_red, np.asarray(p_mech, dtype=float), label or y.label)
