import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import switchstab
from switchstab.network import (AdmittanceMatrix, Branch, Bus, CaseData, CaseError, Generator, IslandingError,
                                SwitchingEvent, apply_bus_fault, apply_switching, build_ybus, case_to_dict,
                                kron_reduce, parse_case, parse_contingencies)
from oracles import kron_current_error, random_case


def two_bus(**branch):
    doc = {
        "base_mva": 100, "frequency_hz": 60,
        "buses": [{"id": 1, "type": "slack", "vm": 1.0}, {"id": 2, "type": "pq", "p_load_mw": 50, "q_load_mvar": 10}],
        "branches": [dict({"from": 1, "to": 2, "r": 0.01, "x": 0.1}, **branch)],
        "generators": [{"bus": 1, "p_mw": 50, "h": 5.0, "xd_prime": 0.2}],
    }
    return doc


def test_bundled_wscc_shape():
    case = switchstab.wscc9()
    assert len(case.buses) == 9
    assert len(case.generators) == 3
    assert len(case.branches) == 9


def test_minimal_two_bus_case():
    case = parse_case(json.dumps(two_bus()))
    assert len(case.buses) == 2 and len(case.branches) == 1
    # h converts to M = H / (pi f)
    assert case.generators[0].m == pytest.approx(5.0 / (np.pi * 60))


def test_duplicate_bus_id_rejected():
    doc = two_bus()
    doc["buses"].append({"id": 2, "type": "pq"})
    with pytest.raises(CaseError, match="duplicate"):
        parse_case(json.dumps(doc))


@pytest.mark.parametrize("mutate, pattern", [
    (lambda d: d["buses"].__setitem__(0, {"id": 1, "type": "pv"}), "slack"),
    (lambda d: d["branches"].__setitem__(0, dict(d["branches"][0], to=7)), "7"),
    (lambda d: d["generators"][0].__setitem__("xd_prime", 0.0), "xd_prime|X'd|reactance"),
    (lambda d: d["branches"][0].__setitem__("status", "open"), "connect|island"),
    (lambda d: d.pop("buses"), "buses"),
])
def test_schema_errors_name_the_element(mutate, pattern):
    doc = two_bus()
    mutate(doc)
    with pytest.raises(CaseError, match=pattern):
        parse_case(json.dumps(doc))


def test_invalid_json_reports_line():
    with pytest.raises(CaseError, match="line 2"):
        parse_case('{\n "buses": [,]}')


def test_case_round_trip():
    case = switchstab.wscc9()
    again = parse_case(json.dumps(case_to_dict(case)), name=case.name)
    assert again == case


def test_open_7_5_keeps_network_connected():
    case = switchstab.wscc9()
    post = apply_switching(case, SwitchingEvent(7, 5))
    assert sum(br.closed for br in post.branches) == 8


def test_switching_is_an_involution():
    case = switchstab.wscc9()
    back = apply_switching(apply_switching(case, SwitchingEvent(6, 9)), SwitchingEvent(9, 6, "close"))
    assert back == case


def test_no_op_event_rejected():
    with pytest.raises(CaseError, match="no-op"):
        apply_switching(switchstab.wscc9(), SwitchingEvent(7, 5, "close"))


def test_islanding_detected():
    case = parse_case(json.dumps(two_bus()))
    with pytest.raises(IslandingError):
        apply_switching(case, SwitchingEvent(1, 2))


def test_contingency_parsing():
    events = parse_contingencies('[{"from": 7, "to": 5}, {"from": 4, "to": 6, "action": "close", "circuit": 2}]')
    assert events[0] == SwitchingEvent(7, 5, "open", 1)
    assert events[1].action == "close" and events[1].circuit == 2
    assert switchstab.wscc9_contingencies()[0] == SwitchingEvent(7, 5)
    with pytest.raises(CaseError):
        parse_contingencies('{"from": 1}')


def test_ybus_two_bus_definition():
    doc = two_bus(r=0.0, x=0.1)
    doc["branches"][0].update(r=1 / 101, x=10 / 101)  # y = 1 - j10
    doc["buses"][1].update(p_load_mw=0, q_load_mvar=0)
    y = build_ybus(parse_case(json.dumps(doc)), "excluded").matrix
    ys = 1 - 10j
    np.testing.assert_allclose(y, [[ys, -ys], [-ys, ys]], atol=1e-12)


def test_ybus_load_as_shunt():
    doc = two_bus()
    doc["buses"][1].update(p_load_mw=100, q_load_mvar=50)
    case = parse_case(json.dumps(doc))
    diff = build_ybus(case, "as-shunts", voltages=[1.0, 1.0]).matrix - build_ybus(case, "excluded").matrix
    assert diff[1, 1] == pytest.approx(1 - 0.5j)
    assert diff[0, 0] == 0


def _independent_ybus(case):
    n = len(case.buses)
    idx = {b.id: k for k, b in enumerate(case.buses)}
    Y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if not br.closed:
            continue
        i, j = idx[br.from_bus], idx[br.to_bus]
        z = br.r + 1j * br.x
        # pi model written out element by element
        Y[i, j] += -1 / z
        Y[j, i] += -1 / z
        Y[i, i] += 1 / z + 1j * br.b / 2
        Y[j, j] += 1 / z + 1j * br.b / 2
    for b in case.buses:
        Y[idx[b.id], idx[b.id]] += b.g_shunt + 1j * b.b_shunt
    return Y


def test_wscc_ybus_matches_independent_assembly():
    case = switchstab.wscc9()
    Y = build_ybus(case, "excluded").matrix
    assert np.abs(Y - Y.T).max() < 1e-12
    np.testing.assert_allclose(Y, _independent_ybus(case), atol=1e-12)


def test_fault_drops_row_and_column():
    case = apply_switching(switchstab.wscc9(), SwitchingEvent(7, 5))
    y = build_ybus(case)
    yf = apply_bus_fault(y, 5, [1, 2, 3])
    assert yf.matrix.shape == (8, 8) and 5 not in yf.bus_ids
    np.testing.assert_array_equal(build_ybus(case).matrix, y.matrix)


def test_fault_on_every_generator_bus_rejected():
    y = AdmittanceMatrix(np.eye(2, dtype=complex), (1, 2))
    with pytest.raises(CaseError):
        apply_bus_fault(y, 1, [1, 1])


def test_fault_commutes_with_switching():
    case = switchstab.wscc9()
    ev = SwitchingEvent(6, 9)
    a = apply_bus_fault(build_ybus(apply_switching(case, ev)), 5)
    yb = build_ybus(case)
    post = build_ybus(apply_switching(case, ev)).matrix - yb.matrix
    b = apply_bus_fault(AdmittanceMatrix(yb.matrix + post, yb.bus_ids), 5)
    np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)


def _chain_case(y1, y2):
    z1, z2 = 1 / y1, 1 / y2
    buses = (Bus(1, "slack"), Bus(2, "pq"), Bus(3, "pv"))
    branches = (Branch(1, 2, z1.real, z1.imag), Branch(2, 3, z2.real, z2.imag))
    return CaseData(buses, branches, (Generator(1, 0, 1.0, 1e-9), Generator(3, 0, 1.0, 1e-9)))


def test_kron_series_combination():
    y1, y2 = 2 - 8j, 1 - 5j
    case = _chain_case(y1, y2)
    # generator internal nodes tied to the terminals through a vanishing reactance
    net = kron_reduce(build_ybus(case, "excluded"), case, [1.0, 1.0], [0.0, 0.0])
    assert net.y_red[0, 1] == pytest.approx(-y1 * y2 / (y1 + y2), rel=1e-6)


def test_kron_nothing_to_eliminate():
    case = parse_case(json.dumps(two_bus()))
    y = AdmittanceMatrix(np.zeros((0, 0), dtype=complex), ())
    net = kron_reduce(y, case, [1.0], [0.5])
    assert net.y_red[0, 0] == pytest.approx(1 / (1j * 0.2))


def test_kron_equivalence_random_cases(rng):
    errs = [kron_current_error(random_case(rng, int(rng.integers(3, 8)), int(rng.integers(1, 3))), rng)
            for _ in range(20)]
    assert max(errs) < 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), nbus=st.integers(2, 8))
def test_kron_equivalence_property(seed, nbus):
    rng = np.random.default_rng(seed)
    case = random_case(rng, nbus, min(2, nbus))
    assert kron_current_error(case, rng) < 1e-10


def test_reduced_network_lossless_invariants(rng):
    case = random_case(rng, 5, 2, lossy=False)
    case = CaseData(tuple(Bus(b.id, b.type, b.vm) for b in case.buses), case.branches, case.generators)
    net = kron_reduce(build_ybus(case), case, [1.0, 1.0], [0.0, 0.0])
    assert np.abs(net.D).max() < 1e-12
    assert np.abs(net.y_red.real).max() < 1e-12
    assert np.allclose(net.y_red, net.y_red.T)
