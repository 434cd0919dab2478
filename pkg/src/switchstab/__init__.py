"""Direct-method transient stability screening of transmission switching events."""
from importlib import resources

from .network import (CaseData, SwitchingEvent, apply_switching, build_ybus, apply_bus_fault, kron_reduce,
                      load_case, parse_case, parse_contingencies)
from .powerflow import operating_point, solve_power_flow, init_classical_generators
from .direct_method import ScreeningOptions, screen_contingency, screen_batch

__version__ = "0.1.0"

BUNDLED_CASES = {"wscc9": "wscc9.json"}
BUNDLED_CONTINGENCIES = {"wscc9": "wscc9_contingencies.json", "ieee145": "ieee145_contingencies.json"}


def bundled_text(filename: str) -> str:
    return resources.files("switchstab.cases").joinpath(filename).read_text(encoding="utf-8")


def wscc9(load_p_mw: float | None = None) -> CaseData:
    """Bundled WSCC 9-bus case, optionally with every load bus set to ``load_p_mw``."""
    case = parse_case(bundled_text("wscc9.json"), name="wscc9")
    return case if load_p_mw is None else case.with_load_p(load_p_mw)


def wscc9_contingencies() -> list[SwitchingEvent]:
    return parse_contingencies(bundled_text("wscc9_contingencies.json"))
