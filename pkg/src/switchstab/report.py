"""Screening reports and their table/csv/json renderings."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .energy import energy_along_trajectory

TABLE_COLUMNS = ("#", "branch", "TDS", "closest UEP", "margin", "proposed", "margin", "final", "path / reason")


@dataclass
class ScreeningReport:
    header: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"header": self.header, "rows": self.rows}

    @classmethod
    def from_dict(cls, doc: dict) -> "ScreeningReport":
        return cls(dict(doc.get("header", {})), list(doc.get("rows", [])))

    @property
    def any_unstable(self) -> bool:
        return any(r.get("final") == "Unstable" for r in self.rows)


def _num(x):
    if x is None:
        return None
    return float(x)


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.4f}"


def render(report: ScreeningReport, fmt: str = "table") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "table":
        return _render_table(report)
    raise ValueError(f"unknown output format {fmt!r}")


def _cells(row: dict) -> list[str]:
    closest = row.get("closest") or {}
    proposed = row.get("proposed") or {}
    tds = row.get("tds") or {}
    why = proposed.get("reason") or ""
    path = " ".join(proposed.get("path", []))
    return [
        str(row["index"] + 1),
        f"{row['from']}-{row['to']}",
        tds.get("verdict") or "-",
        closest.get("verdict") or "-",
        _fmt(closest.get("margin")),
        proposed.get("verdict") or "-",
        _fmt(proposed.get("margin")),
        row.get("final") or "-",
        f"{path} {why}".strip() or "-",
    ]


def _render_table(report: ScreeningReport) -> str:
    lines = []
    for key in sorted(report.header):
        lines.append(f"# {key}: {report.header[key]}")
    body = [list(TABLE_COLUMNS)] + [_cells(r) for r in report.rows]
    widths = [max(len(r[i]) for r in body) for i in range(len(TABLE_COLUMNS))]
    for k, r in enumerate(body):
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _render_csv(report: ScreeningReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "from", "to", "action", "tds", "tds_t_loss", "closest_verdict", "closest_margin",
                "proposed_verdict", "proposed_margin", "proposed_reason", "proposed_step", "final", "path"])
    for r in report.rows:
        c = r.get("closest") or {}
        p = r.get("proposed") or {}
        t = r.get("tds") or {}
        w.writerow([r["index"] + 1, r["from"], r["to"], r["action"], t.get("verdict", ""), t.get("t_loss", ""),
                    c.get("verdict", ""), c.get("margin", ""), p.get("verdict", ""), p.get("margin", ""),
                    p.get("reason", "") or "", p.get("step", ""), r.get("final", ""), " ".join(p.get("path", []))])
    return buf.getvalue()


# reasons under which the direct method itself flags possible instability
_UNSTABLE_REASONS = {"NegativeMargin", "SEPNotFound", "ExitEnergyBelowInit"}


def _proposed_column(v) -> str:
    if v.verdict == "Stable":
        return "Stable"
    return "Unstable" if v.reason in _UNSTABLE_REASONS else "-"


def verdict_dict(v) -> dict:
    """Plain-data view of a :class:`~switchstab.direct_method.ScreeningVerdict`."""
    return {
        "verdict": _proposed_column(v),
        "status": v.verdict,
        "reason": v.reason,
        "detail": v.detail,
        "step": v.step,
        "path": list(v.path),
        "init_energy": _num(v.init_energy),
        "exit_energies": {str(b): float(e) for b, e in v.exit_energies.items()},
        "exit_failures": {str(b): s for b, s in v.exit_failures.items()},
        "chosen_bus": v.chosen_bus,
        "cuep_energy": _num(v.cuep_energy),
        "cuep": None if v.cuep is None else [float(x) for x in v.cuep.delta],
        "margin": _num(v.margin),
    }


def closest_dict(res) -> dict:
    verdict = {True: "Stable", False: "Unstable", None: "-"}[res.stable]
    return {
        "status": res.status,
        "verdict": verdict,
        "margin": _num(res.margin),
        "init_energy": _num(res.init_energy),
        "uep": None if res.closest is None else [float(x) for x in res.closest.delta],
        "detail": res.detail,
    }


def uep_inventory(res) -> list[dict]:
    return [
        {"delta": [float(x) for x in ep.delta], "type": ep.type, "hyperbolic": ep.hyperbolic,
         "energy": _num(ep.energy), "boundary": ep.boundary, "residual": ep.residual}
        for ep in (res.inventory or [])
    ]


def trajectory_csv(traj, sep, net, M) -> str:
    """Columns: t, delta_1..n, omega_1..n, KE, PE, V."""
    e = energy_along_trajectory(traj, sep, net, M)
    n = traj.delta.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"delta_{i + 1}" for i in range(n)] + [f"omega_{i + 1}" for i in range(n)] + ["KE", "PE", "V"])
    data = np.column_stack([traj.t, traj.delta, traj.omega, e.kinetic, e.potential, e.total])
    for row in data:
        w.writerow([f"{x:.10g}" for x in row])
    return buf.getvalue()
