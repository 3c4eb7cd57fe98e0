"""Deterministic minimum-hop routing over a design's link graph.

Routes are the fixed-point the objective models sum over: for each tile
pair the minimum-hop path whose router-index sequence is lexicographically
smallest, computed once per link set. The reverse direction mirrors the
forward path, so both directions traverse the same links.

The lexicographic tie-break falls out of a plain BFS that (a) expands the
frontier in discovery order and (b) scans neighbors in ascending index
order: the first predecessor to discover a node is then always the one
with the lexicographically smallest path, and the frontier stays sorted by
path order. Per-pair aggregates (hop count, path length in units, summed
router degrees) are accumulated in the same pass.

Routing depends only on the link set, not the placement, so structures are
memoized per link set (tile swaps are half of all moves and reuse them).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .problem import Design, ProblemInstance


class Disconnected(Exception):
    """Some tile pair has no network path."""


@dataclass(eq=False)
class _RouteStructure:
    """Link-set-level routing data shared by every placement of those links."""
    link_index: dict[tuple[int, int], int]
    link_lengths: np.ndarray        # L, physical length units
    degrees: np.ndarray             # A, router port counts
    hops: np.ndarray                # A x A
    path_units: np.ndarray          # A x A, summed link lengths on the route
    router_degree_sums: np.ndarray  # A x A, summed port counts over route routers
    preds: list[list[int]]
    orders: list[list[int]]
    parent_links: list[list[int]]
    deg_list: list[int]
    len_list: list[int]


_STRUCT_CACHE: dict[tuple, _RouteStructure] = {}
_STRUCT_CACHE_CAP = 256


def _route_structure(design: "Design") -> _RouteStructure:
    key = (design.grid_n, design.layers_y, design.links)
    hit = _STRUCT_CACHE.get(key)
    if hit is not None:
        return hit

    a = design.tile_count
    off, nbr, eid = design.flat_adjacency
    links = design.links
    link_index = {pair: k for k, pair in enumerate(links)}
    lengths = list(design.link_lengths)
    degrees = list(design.degrees)

    rows_h: list[list[int]] = []
    rows_u: list[list[int]] = []
    rows_g: list[list[int]] = []
    preds_all: list[list[int]] = []
    orders_all: list[list[int]] = []
    plink_all: list[list[int]] = []

    for s in range(a - 1):
        pred = [-1] * a
        plink = [-1] * a
        h = [0] * a
        un = [0] * a
        gd = [0] * a
        order = [s]
        pred[s] = s
        gd[s] = degrees[s]
        head = 0
        count = 1
        while head < count:
            v = order[head]
            head += 1
            hv = h[v] + 1
            uv = un[v]
            gv = gd[v]
            for i in range(off[v], off[v + 1]):
                u = nbr[i]
                if pred[u] < 0:
                    pred[u] = v
                    lk = eid[i]
                    plink[u] = lk
                    h[u] = hv
                    un[u] = uv + lengths[lk]
                    gd[u] = gv + degrees[u]
                    order.append(u)
                    count += 1
        if count != a:
            raise Disconnected(f"{a - count} tiles unreachable from tile {s}")
        preds_all.append(pred)
        orders_all.append(order)
        plink_all.append(plink)
        rows_h.append(h)
        rows_u.append(un)
        rows_g.append(gd)
    preds_all.append([])
    orders_all.append([])
    plink_all.append([])

    def _sym(rows: list[list[int]]) -> np.ndarray:
        m = np.zeros((a, a), dtype=np.int32)
        m[: a - 1, :] = rows
        upper = np.triu(m, 1)  # only v > s entries are route-official
        return upper + upper.T

    struct = _RouteStructure(
        link_index=link_index,
        link_lengths=np.array(lengths, dtype=np.int32),
        degrees=np.array(degrees, dtype=np.int32),
        hops=_sym(rows_h),
        path_units=_sym(rows_u),
        router_degree_sums=_sym(rows_g),
        preds=preds_all,
        orders=orders_all,
        parent_links=plink_all,
        deg_list=degrees,
        len_list=lengths,
    )
    if len(_STRUCT_CACHE) >= _STRUCT_CACHE_CAP:
        _STRUCT_CACHE.pop(next(iter(_STRUCT_CACHE)))
    _STRUCT_CACHE[key] = struct
    return struct


@dataclass(eq=False)
class RoutingTable:
    """All-pairs routes for one design plus the aggregates the objectives use.

    paths are stored implicitly (per-source predecessor trees); use
    ``path(i, j)`` to materialize the router and link index sequences of
    one ordered pair. For i < j the route comes from source i's tree and
    route(j, i) is its mirror.
    """

    design: "Design"
    path_delay: np.ndarray  # A x A, cycles
    _struct: _RouteStructure

    @property
    def link_index(self) -> dict[tuple[int, int], int]:
        return self._struct.link_index

    @property
    def link_lengths(self) -> np.ndarray:
        return self._struct.link_lengths

    @property
    def degrees(self) -> np.ndarray:
        return self._struct.degrees

    @property
    def hops(self) -> np.ndarray:
        return self._struct.hops

    @property
    def path_units(self) -> np.ndarray:
        return self._struct.path_units

    @property
    def router_degree_sums(self) -> np.ndarray:
        return self._struct.router_degree_sums

    @property
    def tile_count(self) -> int:
        return len(self._struct.degrees)

    def path(self, i: int, j: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """(router sequence, link index sequence) for the ordered pair (i, j)."""
        if i == j:
            return (i,), ()
        s, t = (i, j) if i < j else (j, i)
        preds = self._struct.preds[s]
        plink = self._struct.parent_links[s]
        routers = [t]
        links = []
        v = t
        while v != s:
            links.append(plink[v])
            v = preds[v]
            routers.append(v)
        routers.reverse()
        links.reverse()
        if i > j:
            routers.reverse()
            links.reverse()
        return tuple(routers), tuple(links)


def build_routing(instance: "ProblemInstance", design: "Design") -> RoutingTable:
    """All-pairs deterministic routes; raises Disconnected on unreachable pairs."""
    struct = _route_structure(design)
    delay = struct.path_units * float(instance.latency_params.link_delay_per_unit)
    return RoutingTable(design=design, path_delay=delay, _struct=struct)


def tile_traffic(instance: "ProblemInstance", design: "Design") -> np.ndarray:
    """Traffic between tiles under this placement (PE-indexed matrix re-indexed)."""
    placement = np.asarray(design.placement)
    return instance.traffic[placement][:, placement]


def link_utilizations(routing: RoutingTable, instance: "ProblemInstance") -> np.ndarray:
    """u_k = total traffic routed over link k, summed across ordered pairs.

    Per source, every flow to a farther tile follows the predecessor tree,
    so one reverse-order sweep accumulates all subtree flow onto each tree
    edge in O(A) instead of walking every path.
    """
    a = routing.tile_count
    st = routing._struct
    f = tile_traffic(instance, routing.design)
    fsym = (f + f.T).tolist()
    u = [0.0] * len(st.link_index)
    orders = st.orders
    preds = st.preds
    plinks = st.parent_links
    for s in range(a - 1):
        order = orders[s]
        pred = preds[s]
        plink = plinks[s]
        w = fsym[s]
        acc = [0.0] * a
        for idx in range(a - 1, 0, -1):
            v = order[idx]
            x = acc[v]
            if v > s:
                x += w[v]
            if x != 0.0:
                u[plink[v]] += x
                acc[pred[v]] += x
    return np.array(u)
