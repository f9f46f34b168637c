"""Signal flow graphs with branch gains of the form ``coeff * z**zpow``.

``z`` is the one-slot delay operator, so for a graph describing how one
packet moves from ``source`` to ``sink`` the transfer function H(z) is the
generating function of the delivery time.  H(1) = 1 when every node's
outgoing coefficients sum to one, and H'(1) is the mean number of slots per
packet.

Two independent evaluators are provided: a linear solve of the node
equations and Mason's gain formula over enumerated paths and loops.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, NamedTuple

import networkx as nx
import numpy as np
from numpy.polynomial import Polynomial

CONSERVATION_TOL = 1e-12
MASON_MAX_NODES = 20
MASON_MAX_ITEMS = 20000


class SingularGraphError(ValueError):
    """The node equations have no unique bounded solution."""


class EnumerationBudgetExceeded(RuntimeError):
    pass


class Edge(NamedTuple):
    src: Hashable
    dst: Hashable
    coeff: float
    zpow: int


class TransferValue(NamedTuple):
    h: float
    dh: float


@dataclass(frozen=True)
class FlowGraph:
    nodes: tuple
    edges: tuple
    source: Hashable
    sink: Hashable

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(Edge(*e) for e in self.edges))
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise ValueError("duplicate node identifiers")
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        if self.source not in node_set or self.sink not in node_set:
            raise ValueError("source and sink must be graph nodes")
        out_sum = defaultdict(float)
        for e in self.edges:
            if e.src not in node_set or e.dst not in node_set:
                raise ValueError(f"edge {e} references an unknown node")
            if not 0.0 <= e.coeff <= 1.0:
                raise ValueError(f"edge coefficient outside [0, 1]: {e}")
            if int(e.zpow) != e.zpow or e.zpow < 0:
                raise ValueError(f"edge power must be a non-negative integer: {e}")
            if e.src == self.sink:
                raise ValueError("sink must not have outgoing edges")
            out_sum[e.src] += e.coeff
        for v in self.nodes:
            if v != self.sink and abs(out_sum[v] - 1.0) > CONSERVATION_TOL:
                raise ValueError(
                    f"outgoing coefficients of node {v!r} sum to {out_sum[v]!r}, not 1"
                )
        live = self._positive_digraph()
        reach = nx.descendants(live, self.source) | {self.source}
        back = nx.ancestors(live, self.sink) | {self.sink}
        stuck = reach - back
        if stuck:
            raise ValueError(f"nodes {sorted(map(str, stuck))} cannot reach the sink")

    def _positive_digraph(self):
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((e.src, e.dst) for e in self.edges if e.coeff > 0)
        return g


def _branch_polys(g: FlowGraph):
    """Combined gain polynomial per ordered node pair (parallel edges summed)."""
    polys = {}
    for e in g.edges:
        coef = np.zeros(int(e.zpow) + 1)
        coef[-1] = e.coeff
        p = Polynomial(coef)
        key = (e.src, e.dst)
        polys[key] = polys[key] + p if key in polys else p
    return polys


def transfer_linear_solve(g: FlowGraph, z0: float) -> TransferValue:
    """H(z0) and H'(z0) from the node equations x = T(z) x + e_source."""
    if not 0.0 < z0 <= 1.0:
        raise ValueError("z0 must lie in (0, 1]")
    inner = [v for v in g.nodes if v != g.sink]
    idx = {v: i for i, v in enumerate(inner)}
    k = len(inner)
    t = np.zeros((k, k))
    dt = np.zeros((k, k))
    c = np.zeros(k)
    dc = np.zeros(k)
    for e in g.edges:
        val = e.coeff * z0**e.zpow
        dval = e.coeff * e.zpow * z0 ** (e.zpow - 1) if e.zpow else 0.0
        u = idx[e.src]
        if e.dst == g.sink:
            c[u] += val
            dc[u] += dval
        else:
            t[idx[e.dst], u] += val
            dt[idx[e.dst], u] += dval
    if k and np.max(np.abs(np.linalg.eigvals(t))) >= 1.0 - 1e-14:
        raise SingularGraphError("spectral radius of the branch matrix is >= 1")
    a = np.eye(k) - t
    b = np.zeros(k)
    b[idx[g.source]] = 1.0
    try:
        x = np.linalg.solve(a, b)
        dx = np.linalg.solve(a, dt @ x)
    except np.linalg.LinAlgError as exc:
        raise SingularGraphError(str(exc)) from exc
    return TransferValue(float(c @ x), float(dc @ x + c @ dx))


class Jet:
    """Truncated Taylor series about a point: coefficients of 1, dz, dz^2.

    Mason's formula evaluated in this algebra keeps each (1 - loop gain)
    factor unexpanded, which avoids the cancellation that the monomial
    basis suffers when loop gains are close to one.
    """

    __slots__ = ("c",)
    ORDER = 3

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)

    @classmethod
    def one(cls):
        return cls([1.0, 0.0, 0.0])

    @classmethod
    def monomial(cls, coeff, power, z0):
        k = int(power)
        terms = [coeff * z0**k]
        terms.append(coeff * k * z0 ** (k - 1) if k >= 1 else 0.0)
        terms.append(coeff * k * (k - 1) / 2 * z0 ** (k - 2) if k >= 2 else 0.0)
        return cls(terms)

    def __add__(self, other):
        return Jet(self.c + other.c)

    def __sub__(self, other):
        return Jet(self.c - other.c)

    def __mul__(self, other):
        return Jet(np.convolve(self.c, other.c)[: self.ORDER])

    def __truediv__(self, other):
        a, b = self.c, other.c
        q0 = a[0] / b[0]
        q1 = (a[1] - q0 * b[1]) / b[0]
        q2 = (a[2] - q1 * b[1] - q0 * b[2]) / b[0]
        return Jet([q0, q1, q2])


def _enumerate(g: FlowGraph):
    """Forward paths and loops as (node set, list of node pairs)."""
    if len(g.nodes) > MASON_MAX_NODES:
        raise EnumerationBudgetExceeded(
            f"{len(g.nodes)} nodes exceeds the Mason budget of {MASON_MAX_NODES}"
        )
    dg = nx.DiGraph()
    dg.add_nodes_from(g.nodes)
    dg.add_edges_from((e.src, e.dst) for e in g.edges)

    paths, loops = [], []
    for path in nx.all_simple_paths(dg, g.source, g.sink):
        paths.append((frozenset(path), list(zip(path, path[1:]))))
        if len(paths) > MASON_MAX_ITEMS:
            raise EnumerationBudgetExceeded("too many forward paths")
    for cycle in nx.simple_cycles(dg):
        loops.append((frozenset(cycle), list(zip(cycle, cycle[1:] + cycle[:1]))))
        if len(loops) > MASON_MAX_ITEMS:
            raise EnumerationBudgetExceeded("too many loops")
    return paths, loops


def _determinant(loops, allowed, one):
    """Graph determinant over the loop indices in ``allowed``.

    Sum over sets of pairwise non-touching loops of (-1)^k * product of
    gains, by splitting on whether the first loop is in the set.
    """
    memo = {}

    def rec(s):
        if not s:
            return one
        if s in memo:
            return memo[s]
        first, rest = s[0], s[1:]
        nodes = loops[first][0]
        disjoint = tuple(i for i in rest if not (loops[i][0] & nodes))
        val = rec(rest) - loops[first][1] * rec(disjoint)
        memo[s] = val
        return val

    return rec(tuple(allowed))


def _mason(g: FlowGraph, branch, one):
    """Numerator and determinant in whatever algebra ``branch`` maps pairs into."""
    paths, loops = _enumerate(g)

    def product(pairs):
        out = one
        for pair in pairs:
            out = out * branch[pair]
        return out

    loops = [(nodes, product(pairs)) for nodes, pairs in loops]
    delta = _determinant(loops, range(len(loops)), one)
    num = None
    for nodes, pairs in paths:
        untouched = [i for i, (ln, _) in enumerate(loops) if not (ln & nodes)]
        term = product(pairs) * _determinant(loops, untouched, one)
        num = term if num is None else num + term
    if num is None:
        num = one - one
    return num, delta


def mason_determinant(g: FlowGraph) -> Polynomial:
    return mason_rational(g)[1]


def mason_rational(g: FlowGraph):
    """(numerator, determinant) polynomials with H(z) = numerator / determinant."""
    return _mason(g, _branch_polys(g), Polynomial([1.0]))


def _mason_jet(g: FlowGraph, z0: float) -> Jet:
    branch = {}
    for e in g.edges:
        jet = Jet.monomial(e.coeff, e.zpow, z0)
        key = (e.src, e.dst)
        branch[key] = branch[key] + jet if key in branch else jet
    num, delta = _mason(g, branch, Jet.one())
    if delta.c[0] == 0:
        raise SingularGraphError("graph determinant vanishes at z0")
    return num / delta


def transfer_mason(g: FlowGraph, z0: float) -> TransferValue:
    h = _mason_jet(g, z0)
    return TransferValue(float(h.c[0]), float(h.c[1]))


def throughput(g: FlowGraph) -> float:
    """Packets per slot, 1 / H'(1), for a conserving single-packet graph."""
    h, dh = transfer_linear_solve(g, 1.0)
    if abs(h - 1.0) > 1e-10:
        raise SingularGraphError(f"H(1) = {h!r}; probability is not conserved")
    if not dh > 0:
        raise SingularGraphError(f"non-positive mean delivery time {dh!r}")
    return 1.0 / dh


def delivery_time_moments(g: FlowGraph):
    """(E[S], E[S(S-1)]) of the source-to-sink time, i.e. H'(1) and H''(1)."""
    h = _mason_jet(g, 1.0)
    return float(h.c[1]), float(2.0 * h.c[2])


def dump(g: FlowGraph) -> str:
    """Line-oriented text: a header comment, then ``from to coeff zpow``."""
    lines = [f"# source={g.source} sink={g.sink}"]
    lines += [f"{e.src} {e.dst} {e.coeff!r} {e.zpow}" for e in g.edges]
    return "\n".join(lines) + "\n"


def parse_dump(text: str) -> FlowGraph:
    source = sink = None
    edges, nodes = [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                if key == "source":
                    source = val
                elif key == "sink":
                    sink = val
            continue
        src, dst, coeff, zpow = line.split()
        edges.append(Edge(src, dst, float(coeff), int(zpow)))
        for v in (src, dst):
            if v not in nodes:
                nodes.append(v)
    for v in (source, sink):
        if v is not None and v not in nodes:
            nodes.append(v)
    return FlowGraph(tuple(nodes), tuple(edges), source, sink)
