import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopcr import sfg
from coopcr.model import Protocol
from coopcr.protocols import BranchGains, build_flow_graph, pu_throughput_closed_form
from coopcr.sfg import FlowGraph


def stage(s):
    return FlowGraph(("P", "D"), (("P", "D", s, 1), ("P", "P", 1 - s, 1)), "P", "D")


@st.composite
def gains(draw, fresh=False):
    L = draw(st.integers(1, 6))
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=L + 2, max_size=L + 2))
    total = sum(raw)
    direct = [r / total for r in raw]
    s_a = draw(st.lists(st.floats(0.05, 1.0), min_size=L, max_size=L))
    s_f = draw(st.floats(0.05, 1.0)) if fresh else None
    return BranchGains.from_success(direct[0], direct[2:], s_a, s_f)


@given(st.floats(0.01, 1.0))
def test_single_stage(s):
    tv = sfg.transfer_linear_solve(stage(s), 1.0)
    assert tv.h == pytest.approx(1.0, abs=1e-12)
    assert tv.dh == pytest.approx(1 / s, rel=1e-12)
    assert sfg.throughput(stage(s)) == pytest.approx(s, rel=1e-12)


@given(st.floats(0.01, 1.0))
def test_two_stage_chain_doubles_delay(s):
    g = FlowGraph(
        ("P", "Q", "D"),
        (("P", "Q", s, 1), ("P", "P", 1 - s, 1), ("Q", "D", s, 1), ("Q", "Q", 1 - s, 1)),
        "P",
        "D",
    )
    assert sfg.transfer_linear_solve(g, 1.0).dh == pytest.approx(2 / s, rel=1e-12)


def test_single_assist_state_delay():
    g = BranchGains.from_success(0.3, [0.25], [0.6])
    tv = sfg.transfer_linear_solve(build_flow_graph(g, Protocol.ARC), 1.0)
    assert tv.h == pytest.approx(1.0, abs=1e-12)
    assert tv.dh == pytest.approx((1 + 0.25 / 0.6) / (1 - g.s_bar_na), rel=1e-12)


def test_fresh_attempt_graph_determinant():
    g = BranchGains.from_success(0.2, [0.3, 0.1], [0.5, 0.7], s_f=0.4)
    delta = sfg.mason_determinant(build_flow_graph(g, Protocol.NRBRC))
    a, f = g.s_bar_na, g.s_bar_f
    np.testing.assert_allclose(delta.coef, [1.0, -a - f, a * f], atol=1e-15)


def test_dag_determinant_is_one():
    g = FlowGraph(
        ("S", "X", "Y", "T"),
        (("S", "X", 0.3, 1), ("S", "Y", 0.7, 2), ("X", "T", 1.0, 1), ("Y", "T", 1.0, 3)),
        "S",
        "T",
    )
    num, delta = sfg.mason_rational(g)
    np.testing.assert_allclose(delta.coef, [1.0])
    z = 0.8
    assert num(z) == pytest.approx(0.3 * z**2 + 0.7 * z**5)
    assert sfg.transfer_mason(g, z).h == pytest.approx(0.3 * z**2 + 0.7 * z**5)


@pytest.mark.parametrize("protocol", [Protocol.ARC, Protocol.RBRC, Protocol.NRBRC])
@given(data=st.data(), z0=st.floats(0.2, 1.0))
def test_mason_equals_linear_solve(protocol, data, z0):
    g = data.draw(gains(fresh=protocol is Protocol.NRBRC))
    graph = build_flow_graph(g, protocol)
    a = sfg.transfer_linear_solve(graph, z0)
    b = sfg.transfer_mason(graph, z0)
    assert b.h == pytest.approx(a.h, abs=1e-10)
    assert b.dh == pytest.approx(a.dh, abs=1e-10, rel=1e-10)


@pytest.mark.parametrize("protocol", [Protocol.ARC, Protocol.NRBRC])
@given(data=st.data())
def test_unit_mass_and_closed_form(protocol, data):
    g = data.draw(gains(fresh=protocol is Protocol.NRBRC))
    graph = build_flow_graph(g, protocol)
    assert sfg.transfer_linear_solve(graph, 1.0).h == pytest.approx(1.0, abs=1e-10)
    assert sfg.throughput(graph) == pytest.approx(pu_throughput_closed_form(g, protocol), abs=1e-10)


@given(data=st.data(), seed=st.integers(0, 10**6))
def test_throughput_invariant_under_relabel_and_reorder(data, seed):
    g = data.draw(gains(fresh=True))
    graph = build_flow_graph(g, Protocol.NRBRC)
    rng = random.Random(seed)
    names = {v: f"n{i}" for i, v in enumerate(rng.sample(graph.nodes, len(graph.nodes)))}
    edges = [(names[e.src], names[e.dst], e.coeff, e.zpow) for e in graph.edges]
    rng.shuffle(edges)
    nodes = [names[v] for v in graph.nodes]
    rng.shuffle(nodes)
    other = FlowGraph(tuple(nodes), tuple(edges), names["P"], names["D"])
    assert sfg.throughput(other) == pytest.approx(sfg.throughput(graph), rel=1e-12)


def _arc_transfer(g, z):
    assisted = sum(p * z * a * z / (1 - b * z) for p, a, b in zip(g.s_ps, g.s_a, g.s_bar_a))
    return (g.s_na * z + assisted) / (1 - g.s_bar_na * z)


@given(data=st.data())
def test_derivative_matches_finite_difference(data):
    g = data.draw(gains())
    h = 1e-6
    fd = (_arc_transfer(g, 1 + h) - _arc_transfer(g, 1 - h)) / (2 * h)
    dh = sfg.transfer_linear_solve(build_flow_graph(g, Protocol.ARC), 1.0).dh
    assert fd == pytest.approx(dh, rel=1e-6)


@given(st.floats(0.05, 1.0))
def test_geometric_delivery_moments(s):
    mean, fact2 = sfg.delivery_time_moments(stage(s))
    assert mean == pytest.approx(1 / s, rel=1e-12)
    assert fact2 == pytest.approx(2 * (1 - s) / s**2, rel=1e-10, abs=1e-12)


def test_dump_round_trip():
    g = BranchGains.from_success(0.2, [0.3, 0.1], [0.5, 0.7], s_f=0.4)
    graph = build_flow_graph(g, Protocol.NRBRC)
    text = sfg.dump(graph)
    assert text.startswith("# source=P sink=D\n")
    assert "P A1 0.3 1" in text
    back = sfg.parse_dump(text)
    assert set(back.edges) == set(graph.edges)
    assert sfg.throughput(back) == pytest.approx(sfg.throughput(graph), rel=1e-15)


@pytest.mark.parametrize(
    "nodes, edges, msg",
    [
        (("P", "D"), (("P", "D", 0.5, 1),), "sum to"),
        (("P", "D"), (("P", "D", 1.0, 1), ("D", "P", 1.0, 1)), "outgoing"),
        (("P", "P", "D"), (("P", "D", 1.0, 1),), "duplicate"),
        (("P", "D"), (("P", "D", 1.0, -1),), "non-negative"),
        (("P", "D"), (("P", "D", 1.5, 1),), "outside"),
        (("P", "X", "D"), (("P", "X", 0.5, 1), ("P", "D", 0.5, 1), ("X", "X", 1.0, 1)), "cannot reach"),
        (("P", "D"), (("P", "Q", 1.0, 1),), "unknown"),
    ],
)
def test_invalid_graphs(nodes, edges, msg):
    with pytest.raises(ValueError, match=msg):
        FlowGraph(nodes, edges, "P", "D")


def test_source_must_differ_from_sink():
    with pytest.raises(ValueError):
        FlowGraph(("P",), (), "P", "P")


def test_z0_range():
    with pytest.raises(ValueError):
        sfg.transfer_linear_solve(stage(0.5), 1.5)


def test_mason_budget():
    n = sfg.MASON_MAX_NODES + 1
    nodes = [f"v{i}" for i in range(n)]
    edges = [(nodes[i], nodes[i + 1], 1.0, 1) for i in range(n - 1)]
    g = FlowGraph(tuple(nodes), tuple(edges), nodes[0], nodes[-1])
    with pytest.raises(sfg.EnumerationBudgetExceeded):
        sfg.transfer_mason(g, 1.0)
    assert sfg.transfer_linear_solve(g, 1.0).dh == pytest.approx(n - 1)
