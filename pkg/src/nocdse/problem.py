"""3D NoC design encoding: platform spec, candidate designs, constraints, operators.

A platform is a grid_n x grid_n x layers_y tile array. Every tile holds one
processing element (CPU, GPU or LLC) and one router. Routers are joined by
planar links (same layer, rectilinear wiring, length = Manhattan distance)
or vertical links (adjacent layers, same planar position, length 1).

A Design is the chromosome shared by the local search and the EA: a
placement permutation (tile index -> PE id) plus a fixed-size link set.
All operators are pure functions of (inputs, seed) and return designs that
satisfy the five feasibility constraints whenever their inputs do.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

PE_KINDS = ("CPU", "GPU", "LLC")

MOVE_RETRY_BOUND = 64


class InstanceInfeasible(Exception):
    """No feasible design exists for this instance."""


class ShapeMismatch(Exception):
    """Design dimensions disagree with the instance."""


class NoFeasibleMove(Exception):
    """Retry bound exhausted; the design is frozen under single moves."""


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def child_seed(seed: int, *tags: int) -> np.random.SeedSequence:
    """Stable derived seed; avoids shared-stream coupling between operators."""
    return np.random.SeedSequence([int(seed), *[int(t) for t in tags]])


# ---------------------------------------------------------------------------
# Platform / instance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlatformSpec:
    grid_n: int
    layers_y: int
    pe_inventory: tuple[tuple[str, int], ...]  # ((kind, count), ...), order fixes PE ids
    link_budget_planar: int
    link_budget_vertical: int
    max_planar_length_units: int = 5
    max_router_degree: int = 7

    def __post_init__(self):
        if self.grid_n < 2 or self.layers_y < 1:
            raise ValueError("grid_n >= 2 and layers_y >= 1 required")
        for kind, count in self.pe_inventory:
            if kind not in PE_KINDS:
                raise ValueError(f"unknown PE kind {kind!r}")
            if count < 0:
                raise ValueError("negative PE count")
        if sum(c for _, c in self.pe_inventory) != self.tile_count:
            raise ValueError("pe_inventory must sum to grid_n^2 * layers_y")
        if self.link_budget_planar < 0 or self.link_budget_vertical < 0:
            raise ValueError("negative link budget")

    @property
    def tile_count(self) -> int:
        return self.grid_n * self.grid_n * self.layers_y

    @property
    def link_budget_total(self) -> int:
        return self.link_budget_planar + self.link_budget_vertical

    @cached_property
    def coords(self) -> tuple[tuple[int, int, int], ...]:
        n = self.grid_n
        out = []
        for t in range(self.tile_count):
            z, r = divmod(t, n * n)
            y, x = divmod(r, n)
            out.append((x, y, z))
        return tuple(out)

    def tile_coords(self, t: int) -> tuple[int, int, int]:
        return self.coords[t]

    def tile_index(self, x: int, y: int, z: int) -> int:
        n = self.grid_n
        return z * n * n + y * n + x

    @cached_property
    def pe_kinds(self) -> tuple[str, ...]:
        """Kind of each PE id, inventory order."""
        out: list[str] = []
        for kind, count in self.pe_inventory:
            out.extend([kind] * count)
        return tuple(out)

    @cached_property
    def llc_pe_ids(self) -> tuple[int, ...]:
        return tuple(p for p, k in enumerate(self.pe_kinds) if k == "LLC")

    @cached_property
    def perimeter_tiles(self) -> tuple[int, ...]:
        """Tiles on a layer perimeter (x or y on the boundary), all layers."""
        n = self.grid_n
        out = []
        for t in range(self.tile_count):
            x, y, _ = self.tile_coords(t)
            if x in (0, n - 1) or y in (0, n - 1):
                out.append(t)
        return tuple(out)

    @cached_property
    def is_perimeter(self) -> np.ndarray:
        mask = np.zeros(self.tile_count, dtype=bool)
        mask[list(self.perimeter_tiles)] = True
        return mask

    def planar_length(self, a: int, b: int) -> int:
        xa, ya, za = self.tile_coords(a)
        xb, yb, zb = self.tile_coords(b)
        if za != zb:
            raise ValueError("not a planar pair")
        return abs(xa - xb) + abs(ya - yb)

    def link_kind(self, a: int, b: int) -> str:
        """'planar' or 'vertical'; raises ValueError for anything else."""
        if a == b:
            raise ValueError("self link")
        xa, ya, za = self.tile_coords(a)
        xb, yb, zb = self.tile_coords(b)
        if za == zb:
            return "planar"
        if abs(za - zb) == 1 and xa == xb and ya == yb:
            return "vertical"
        raise ValueError(f"link ({a},{b}) is neither planar nor a TSV between adjacent layers")

    def link_length(self, a: int, b: int) -> int:
        return 1 if self.link_kind(a, b) == "vertical" else self.planar_length(a, b)

    @cached_property
    def candidate_planar_links(self) -> tuple[tuple[int, int], ...]:
        """All same-layer pairs within the planar length cap, sorted."""
        n, cap = self.grid_n, self.max_planar_length_units
        out = []
        per_layer = n * n
        for z in range(self.layers_y):
            base = z * per_layer
            for i, j in itertools.combinations(range(per_layer), 2):
                xi, yi = i % n, i // n
                xj, yj = j % n, j // n
                if abs(xi - xj) + abs(yi - yj) <= cap:
                    out.append((base + i, base + j))
        return tuple(sorted(out))

    @cached_property
    def candidate_vertical_links(self) -> tuple[tuple[int, int], ...]:
        per_layer = self.grid_n * self.grid_n
        out = []
        for z in range(self.layers_y - 1):
            for p in range(per_layer):
                out.append((z * per_layer + p, (z + 1) * per_layer + p))
        return tuple(sorted(out))


@dataclass(frozen=True)
class LatencyParams:
    router_stages: int = 2          # pipeline cycles paid per hop
    link_delay_per_unit: float = 1.0  # cycles per length unit


@dataclass(frozen=True)
class EnergyParams:
    e_link: float = 2.0e-12   # joules per flit per unit length
    e_router: float = 1.5e-12  # joules per flit per router port


@dataclass(frozen=True)
class ThermalParams:
    r_layers: tuple[float, ...]  # vertical resistance per layer, sink side first
    r_base: float = 0.05


@dataclass(eq=False)
class ProblemInstance:
    spec: PlatformSpec
    traffic: np.ndarray            # A x A, flits/epoch, indexed by PE id
    pe_power: np.ndarray           # per-PE average power (W)
    latency_params: LatencyParams = field(default_factory=LatencyParams)
    energy_params: EnergyParams = field(default_factory=EnergyParams)
    thermal_params: ThermalParams | None = None
    objective_count: int = 5

    def __post_init__(self):
        a = self.spec.tile_count
        self.traffic = np.asarray(self.traffic, dtype=float)
        self.pe_power = np.asarray(self.pe_power, dtype=float)
        if self.thermal_params is None:
            self.thermal_params = ThermalParams(r_layers=(0.1,) * self.spec.layers_y)
        if self.traffic.shape != (a, a):
            raise ValueError(f"traffic must be {a}x{a}")
        if np.any(self.traffic < 0) or np.any(np.diag(self.traffic) != 0):
            raise ValueError("traffic entries must be >= 0 with a zero diagonal")
        if self.pe_power.shape != (a,):
            raise ValueError("pe_power must have one entry per PE")
        if len(self.thermal_params.r_layers) != self.spec.layers_y:
            raise ValueError("thermal r_layers must have layers_y entries")
        if any(r <= 0 for r in self.thermal_params.r_layers) or self.thermal_params.r_base < 0:
            raise ValueError("r_layers must be > 0 and r_base >= 0")
        if self.objective_count not in (3, 4, 5):
            raise ValueError("objective_count must be 3, 4 or 5")

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    @cached_property
    def cpu_pe_ids(self) -> tuple[int, ...]:
        return tuple(p for p, k in enumerate(self.spec.pe_kinds) if k == "CPU")

    @cached_property
    def digest(self) -> str:
        import json
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format": "noc-instance/1",
            "grid_n": self.spec.grid_n,
            "layers_y": self.spec.layers_y,
            "pe_inventory": [[k, c] for k, c in self.spec.pe_inventory],
            "link_budget_planar": self.spec.link_budget_planar,
            "link_budget_vertical": self.spec.link_budget_vertical,
            "max_planar_length_units": self.spec.max_planar_length_units,
            "max_router_degree": self.spec.max_router_degree,
            "traffic": self.traffic.tolist(),
            "pe_power": self.pe_power.tolist(),
            "latency_params": {
                "router_stages": self.latency_params.router_stages,
                "link_delay_per_unit": self.latency_params.link_delay_per_unit,
            },
            "energy_params": {
                "e_link": self.energy_params.e_link,
                "e_router": self.energy_params.e_router,
            },
            "thermal_params": {
                "r_layers": list(self.thermal_params.r_layers),
                "r_base": self.thermal_params.r_base,
            },
            "objective_count": self.objective_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemInstance":
        if d.get("format") != "noc-instance/1":
            raise ValueError("not a noc-instance/1 document")
        spec = PlatformSpec(
            grid_n=d["grid_n"],
            layers_y=d["layers_y"],
            pe_inventory=tuple((k, c) for k, c in d["pe_inventory"]),
            link_budget_planar=d["link_budget_planar"],
            link_budget_vertical=d["link_budget_vertical"],
            max_planar_length_units=d["max_planar_length_units"],
            max_router_degree=d["max_router_degree"],
        )
        return cls(
            spec=spec,
            traffic=np.array(d["traffic"], dtype=float),
            pe_power=np.array(d["pe_power"], dtype=float),
            latency_params=LatencyParams(**d["latency_params"]),
            energy_params=EnergyParams(**d["energy_params"]),
            thermal_params=ThermalParams(
                r_layers=tuple(d["thermal_params"]["r_layers"]),
                r_base=d["thermal_params"]["r_base"],
            ),
            objective_count=d["objective_count"],
        )


# ---------------------------------------------------------------------------
# Design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Design:
    """Immutable candidate solution: placement permutation + link set.

    links are canonically stored as a sorted tuple of (a, b) pairs with
    a < b, so every derived structure (link indices, adjacency) is
    deterministic. Each link must classify as planar or vertical.
    """

    grid_n: int
    layers_y: int
    placement: tuple[int, ...]      # tile index -> PE id
    links: tuple[tuple[int, int], ...]

    def __post_init__(self):
        a = self.grid_n * self.grid_n * self.layers_y
        if len(self.placement) != a:
            raise ValueError("placement length mismatch")
        if sorted(self.placement) != list(range(a)):
            raise ValueError("placement must be a permutation of PE ids 0..A-1")
        canon = tuple(sorted((min(p), max(p)) for p in self.links))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate links")
        object.__setattr__(self, "links", canon)
        geom = _geom(self.grid_n, self.layers_y)
        for a_, b_ in canon:
            if not (0 <= a_ < a and 0 <= b_ < a):
                raise ValueError("link endpoint out of range")
            geom.link_kind(a_, b_)  # raises on unclassifiable links

    @property
    def tile_count(self) -> int:
        return self.grid_n * self.grid_n * self.layers_y

    @cached_property
    def digest(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(np.asarray(self.placement, dtype=np.int32).tobytes())
        h.update(np.asarray(self.links, dtype=np.int32).tobytes())
        return h.hexdigest()

    @cached_property
    def planar_links(self) -> tuple[tuple[int, int], ...]:
        geom = _geom(self.grid_n, self.layers_y)
        return tuple(l for l in self.links if geom.link_kind(*l) == "planar")

    @cached_property
    def vertical_links(self) -> tuple[tuple[int, int], ...]:
        geom = _geom(self.grid_n, self.layers_y)
        return tuple(l for l in self.links if geom.link_kind(*l) == "vertical")

    @cached_property
    def link_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.links)

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """Sorted neighbor lists; sorting fixes the routing tie-break order."""
        adj: list[list[int]] = [[] for _ in range(self.tile_count)]
        for a, b in self.links:
            adj[a].append(b)
            adj[b].append(a)
        return tuple(tuple(sorted(x)) for x in adj)

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(x) for x in self.adjacency)

    @cached_property
    def flat_adjacency(self) -> tuple[list[int], list[int], list[int]]:
        """CSR layout (offsets, neighbors, edge ids) for tight BFS loops."""
        link_index = {pair: k for k, pair in enumerate(self.links)}
        off = [0]
        nbr: list[int] = []
        eid: list[int] = []
        for v, row in enumerate(self.adjacency):
            for u in row:
                nbr.append(u)
                eid.append(link_index[(v, u) if v < u else (u, v)])
            off.append(len(nbr))
        return off, nbr, eid

    @cached_property
    def link_lengths(self) -> tuple[int, ...]:
        geom = _geom(self.grid_n, self.layers_y)
        return tuple(geom.link_length(a, b) for a, b in self.links)

    @cached_property
    def tile_of_pe(self) -> tuple[int, ...]:
        inv = [0] * self.tile_count
        for tile, pe in enumerate(self.placement):
            inv[pe] = tile
        return tuple(inv)

    def to_dict(self) -> dict:
        return {
            "format": "noc-design/1",
            "grid_n": self.grid_n,
            "layers_y": self.layers_y,
            "placement": list(self.placement),
            "links": [list(l) for l in self.links],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Design":
        if d.get("format") != "noc-design/1":
            raise ValueError("not a noc-design/1 document")
        return cls(
            grid_n=d["grid_n"],
            layers_y=d["layers_y"],
            placement=tuple(d["placement"]),
            links=tuple((a, b) for a, b in d["links"]),
        )


# geometry helpers shared by Design (which has no PlatformSpec reference)
_GEOM_CACHE: dict[tuple[int, int], PlatformSpec] = {}


def _geom(grid_n: int, layers_y: int) -> PlatformSpec:
    key = (grid_n, layers_y)
    if key not in _GEOM_CACHE:
        a = grid_n * grid_n * layers_y
        _GEOM_CACHE[key] = PlatformSpec(
            grid_n=grid_n, layers_y=layers_y,
            pe_inventory=(("GPU", a),),
            link_budget_planar=0, link_budget_vertical=0,
        )
    return _GEOM_CACHE[key]


# ---------------------------------------------------------------------------
# Constraint checking
# ---------------------------------------------------------------------------

@dataclass
class ConstraintReport:
    connected: bool
    planar_length_ok: bool
    degree_ok: bool
    vertical_multiplicity_ok: bool
    llc_on_edge: bool
    violations: list[str]

    @property
    def feasible(self) -> bool:
        return not self.violations


def _connected(adjacency: Sequence[Sequence[int]]) -> bool:
    n = len(adjacency)
    if n == 0:
        return True
    seen = bytearray(n)
    seen[0] = 1
    stack = [0]
    count = 1
    while stack:
        v = stack.pop()
        for u in adjacency[v]:
            if not seen[u]:
                seen[u] = 1
                count += 1
                stack.append(u)
    return count == n


def _connected_without(design: Design, dropped: tuple[int, int]) -> bool:
    n = design.tile_count
    seen = bytearray(n)
    seen[0] = 1
    stack = [0]
    count = 1
    adj = design.adjacency
    da, db = dropped
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if (v == da and u == db) or (v == db and u == da):
                continue
            if not seen[u]:
                seen[u] = 1
                count += 1
                stack.append(u)
    return count == n


def check_constraints(instance: ProblemInstance, design: Design) -> ConstraintReport:
    """Evaluate the five feasibility constraints; raises ShapeMismatch first."""
    spec = instance.spec
    if (design.grid_n, design.layers_y) != (spec.grid_n, spec.layers_y):
        raise ShapeMismatch("grid dimensions differ from instance")
    if len(design.placement) != spec.tile_count:
        raise ShapeMismatch("placement length differs from instance tile count")
    if len(design.links) != spec.link_budget_total:
        raise ShapeMismatch(
            f"design has {len(design.links)} links, budget is {spec.link_budget_total}")
    if len(design.planar_links) != spec.link_budget_planar:
        raise ShapeMismatch("planar link count differs from planar budget")
    if len(design.vertical_links) != spec.link_budget_vertical:
        raise ShapeMismatch("vertical link count differs from vertical budget")

    violations: list[str] = []

    connected = _connected(design.adjacency)
    if not connected:
        violations.append("tile graph is disconnected")

    planar_length_ok = True
    for a, b in design.planar_links:
        length = spec.planar_length(a, b)
        if length > spec.max_planar_length_units:
            planar_length_ok = False
            violations.append(f"planar link ({a},{b}) length {length} exceeds cap")

    degree_ok = True
    for t, deg in enumerate(design.degrees):
        if deg > spec.max_router_degree:
            degree_ok = False
            violations.append(f"router {t} degree {deg} exceeds cap")

    # sorted-tuple storage already dedupes; re-check for report completeness
    vertical_multiplicity_ok = len(set(design.vertical_links)) == len(design.vertical_links)
    if not vertical_multiplicity_ok:
        violations.append("duplicate vertical link")

    llc_on_edge = True
    perim = spec.is_perimeter
    kinds = spec.pe_kinds
    for tile, pe in enumerate(design.placement):
        if kinds[pe] == "LLC" and not perim[tile]:
            llc_on_edge = False
            violations.append(f"LLC pe {pe} placed on interior tile {tile}")

    return ConstraintReport(
        connected=connected,
        planar_length_ok=planar_length_ok,
        degree_ok=degree_ok,
        vertical_multiplicity_ok=vertical_multiplicity_ok,
        llc_on_edge=llc_on_edge,
        violations=violations,
    )


# ---------------------------------------------------------------------------
# Random design construction
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def _feasibility_prechecks(spec: PlatformSpec) -> None:
    a = spec.tile_count
    l_total = spec.link_budget_total
    if l_total < a - 1:
        raise InstanceInfeasible(
            f"{l_total} links cannot span {a} tiles (need at least {a - 1})")
    n_llc = sum(c for k, c in spec.pe_inventory if k == "LLC")
    if n_llc > len(spec.perimeter_tiles):
        raise InstanceInfeasible(
            f"{n_llc} LLCs exceed {len(spec.perimeter_tiles)} perimeter tiles")
    if spec.layers_y >= 2 and spec.link_budget_vertical < spec.layers_y - 1:
        raise InstanceInfeasible("too few vertical links to connect all layers")
    if spec.link_budget_planar > len(spec.candidate_planar_links):
        raise InstanceInfeasible("planar budget exceeds available planar positions")
    if spec.link_budget_vertical > len(spec.candidate_vertical_links):
        raise InstanceInfeasible("vertical budget exceeds available TSV positions")


def _random_placement(spec: PlatformSpec, rng: np.random.Generator) -> tuple[int, ...]:
    a = spec.tile_count
    llc = list(spec.llc_pe_ids)
    others = [p for p in range(a) if p not in set(llc)]
    perim = list(spec.perimeter_tiles)
    placement = [-1] * a
    llc_tiles = rng.choice(len(perim), size=len(llc), replace=False)
    rng.shuffle(llc)
    for pe, ti in zip(llc, llc_tiles):
        placement[perim[ti]] = pe
    free_tiles = [t for t in range(a) if placement[t] == -1]
    rng.shuffle(others)
    for pe, t in zip(others, free_tiles):
        placement[t] = pe
    return tuple(placement)


def _random_links(spec: PlatformSpec, rng: np.random.Generator,
                  attempts: int = 64) -> tuple[tuple[int, int], ...]:
    """Random connected link set meeting both budgets and the degree cap."""
    a = spec.tile_count
    cand_p = list(spec.candidate_planar_links)
    cand_v = list(spec.candidate_vertical_links)
    b_p, b_v = spec.link_budget_planar, spec.link_budget_vertical
    cap = spec.max_router_degree

    for _ in range(attempts):
        order = cand_p + cand_v
        kinds = [0] * len(cand_p) + [1] * len(cand_v)
        perm = rng.permutation(len(order))
        uf = _UnionFind(a)
        deg = [0] * a
        chosen: list[tuple[int, int]] = []
        used = [0, 0]
        budgets = (b_p, b_v)
        # spanning pass
        for i in perm:
            u, v = order[i]
            k = kinds[i]
            if used[k] >= budgets[k] or deg[u] >= cap or deg[v] >= cap:
                continue
            if uf.union(u, v):
                chosen.append((u, v))
                deg[u] += 1
                deg[v] += 1
                used[k] += 1
                if len(chosen) == a - 1:
                    break
        if len(chosen) < a - 1:
            continue
        # fill pass keeps the same shuffled order for determinism
        taken = set(chosen)
        for i in perm:
            k = kinds[i]
            if used[k] >= budgets[k]:
                continue
            u, v = order[i]
            if (u, v) in taken or deg[u] >= cap or deg[v] >= cap:
                continue
            taken.add((u, v))
            chosen.append((u, v))
            deg[u] += 1
            deg[v] += 1
            used[k] += 1
        if used[0] == b_p and used[1] == b_v:
            return tuple(sorted(chosen))
    raise InstanceInfeasible("could not build a feasible link set (retries exhausted)")


def random_design(instance: ProblemInstance, seed) -> Design:
    """Feasible random design; identical seed yields an identical design."""
    spec = instance.spec
    _feasibility_prechecks(spec)
    rng = _rng(seed)
    placement = _random_placement(spec, rng)
    links = _random_links(spec, rng)
    return Design(grid_n=spec.grid_n, layers_y=spec.layers_y,
                  placement=placement, links=links)


# ---------------------------------------------------------------------------
# Moves
# ---------------------------------------------------------------------------

def _swap_candidate(instance: ProblemInstance, design: Design,
                    rng: np.random.Generator) -> Design | None:
    """Swap the PEs of two tiles; None when the draw breaks the LLC edge rule."""
    spec = instance.spec
    a = design.tile_count
    t1 = int(rng.integers(a))
    t2 = int(rng.integers(a - 1))
    if t2 >= t1:
        t2 += 1
    kinds = spec.pe_kinds
    perim = spec.is_perimeter
    p1, p2 = design.placement[t1], design.placement[t2]
    if kinds[p1] == "LLC" and not perim[t2]:
        return None
    if kinds[p2] == "LLC" and not perim[t1]:
        return None
    placement = list(design.placement)
    placement[t1], placement[t2] = p2, p1
    return Design(design.grid_n, design.layers_y, tuple(placement), design.links)


def _rewire_candidate(instance: ProblemInstance, design: Design,
                      rng: np.random.Generator) -> Design | None:
    """Replace one link with a fresh same-kind link; None when infeasible."""
    spec = instance.spec
    idx = int(rng.integers(len(design.links)))
    old = design.links[idx]
    kind = spec.link_kind(*old)
    cands = spec.candidate_planar_links if kind == "planar" else spec.candidate_vertical_links
    new = cands[int(rng.integers(len(cands)))]
    if new == old or new in design.link_set:
        return None
    deg = design.degrees
    du = deg[new[0]] - (1 if new[0] in old else 0)
    dv = deg[new[1]] - (1 if new[1] in old else 0)
    if du >= spec.max_router_degree or dv >= spec.max_router_degree:
        return None
    links = [l for l in design.links if l != old]
    links.append(new)
    cand = Design(design.grid_n, design.layers_y, design.placement, tuple(links))
    if not _connected(cand.adjacency):
        return None
    return cand


def neighbor_move(instance: ProblemInstance, design: Design, seed) -> Design:
    """One feasible single-step move: a tile swap or a link rewire."""
    rng = _rng(seed)
    for _ in range(MOVE_RETRY_BOUND):
        if rng.random() < 0.5:
            cand = _swap_candidate(instance, design, rng)
        else:
            cand = _rewire_candidate(instance, design, rng)
        if cand is not None:
            return cand
    raise NoFeasibleMove("no feasible move found within the retry bound")


def mutate(instance: ProblemInstance, design: Design, seed) -> Design:
    """Independently applies a tile swap (p=0.4) and a link rewire (p=0.4)."""
    rng = _rng(seed)
    do_swap = rng.random() < 0.4
    do_rewire = rng.random() < 0.4
    out = design
    if do_swap:
        for _ in range(MOVE_RETRY_BOUND):
            cand = _swap_candidate(instance, out, rng)
            if cand is not None:
                out = cand
                break
    if do_rewire:
        for _ in range(MOVE_RETRY_BOUND):
            cand = _rewire_candidate(instance, out, rng)
            if cand is not None:
                out = cand
                break
    return out


# ---------------------------------------------------------------------------
# Crossover
# ---------------------------------------------------------------------------

def _pmx(pa: Sequence[int], pb: Sequence[int], rng: np.random.Generator) -> list[int]:
    """Partially-mapped crossover on permutations (segment from pa, rest from pb)."""
    n = len(pa)
    c1 = int(rng.integers(n))
    c2 = int(rng.integers(n))
    if c1 > c2:
        c1, c2 = c2, c1
    child = [-1] * n
    child[c1:c2 + 1] = pa[c1:c2 + 1]
    pos_in_child = {v: i for i, v in enumerate(child[c1:c2 + 1], start=c1)}
    for i in range(n):
        if c1 <= i <= c2:
            continue
        v = pb[i]
        while v in pos_in_child:
            v = pb[pos_in_child[v]]
        child[i] = v
        pos_in_child[v] = i
    return child


def _repair_llc_edges(spec: PlatformSpec, placement: list[int],
                      rng: np.random.Generator) -> None:
    kinds = spec.pe_kinds
    perim = spec.is_perimeter
    misplaced = [t for t, pe in enumerate(placement)
                 if kinds[pe] == "LLC" and not perim[t]]
    if not misplaced:
        return
    swap_pool = [t for t, pe in enumerate(placement)
                 if kinds[pe] != "LLC" and perim[t]]
    picks = rng.choice(len(swap_pool), size=len(misplaced), replace=False)
    for bad, pi in zip(misplaced, picks):
        good = swap_pool[pi]
        placement[bad], placement[good] = placement[good], placement[bad]


def crossover(instance: ProblemInstance, a: Design, b: Design, seed) -> Design:
    """Offspring: PMX placement with LLC repair; links = shared core + fill,
    connectivity repair by shortest feasible joins, non-bridge trim to budget."""
    spec = instance.spec
    rng = _rng(seed)

    placement = _pmx(a.placement, b.placement, rng)
    _repair_llc_edges(spec, placement, rng)

    inter = a.link_set & b.link_set
    sym = sorted((a.link_set ^ b.link_set))
    rng.shuffle(sym)

    links = set(inter)
    deg = [0] * spec.tile_count
    for u, v in links:
        deg[u] += 1
        deg[v] += 1
    counts = {"planar": sum(1 for l in links if spec.link_kind(*l) == "planar")}
    counts["vertical"] = len(links) - counts["planar"]
    budgets = {"planar": spec.link_budget_planar, "vertical": spec.link_budget_vertical}
    cap = spec.max_router_degree

    def try_add(link: tuple[int, int]) -> bool:
        u, v = link
        k = spec.link_kind(u, v)
        if counts[k] >= budgets[k] or link in links:
            return False
        if deg[u] >= cap or deg[v] >= cap:
            return False
        links.add(link)
        deg[u] += 1
        deg[v] += 1
        counts[k] += 1
        return True

    for link in sym:
        try_add(link)
    if counts["planar"] < budgets["planar"] or counts["vertical"] < budgets["vertical"]:
        # parents' pooled links could not meet the budgets (degree caps); top up
        pool = list(spec.candidate_planar_links) + list(spec.candidate_vertical_links)
        order = rng.permutation(len(pool))
        for i in order:
            if counts["planar"] >= budgets["planar"] and counts["vertical"] >= budgets["vertical"]:
                break
            try_add(pool[i])

    # connectivity repair: join components with the shortest feasible links
    def components() -> list[int]:
        comp = [-1] * spec.tile_count
        cur = 0
        adj: list[list[int]] = [[] for _ in range(spec.tile_count)]
        for u, v in links:
            adj[u].append(v)
            adj[v].append(u)
        for s in range(spec.tile_count):
            if comp[s] != -1:
                continue
            stack = [s]
            comp[s] = cur
            while stack:
                x = stack.pop()
                for y in adj[x]:
                    if comp[y] == -1:
                        comp[y] = cur
                        stack.append(y)
            cur += 1
        return comp

    repair_candidates = sorted(
        list(spec.candidate_vertical_links) + list(spec.candidate_planar_links),
        key=lambda l: (spec.link_length(*l), l),
    )
    added_over = []
    comp = components()
    while len(set(comp)) > 1:
        joined = False
        for link in repair_candidates:
            u, v = link
            if comp[u] == comp[v] or link in links:
                continue
            if deg[u] >= cap or deg[v] >= cap:
                continue
            links.add(link)
            deg[u] += 1
            deg[v] += 1
            counts[spec.link_kind(u, v)] += 1
            added_over.append(link)
            joined = True
            break
        if not joined:
            break  # cannot join under the caps; rebuild below
        comp = components()

    def over_budget() -> str | None:
        for k in ("planar", "vertical"):
            if counts[k] > budgets[k]:
                return k
        return None

    # trim random non-bridge links of the over-budget kind back to the budget
    def make_design() -> Design:
        return Design(spec.grid_n, spec.layers_y, tuple(placement), tuple(sorted(links)))

    stuck = False
    while (k := over_budget()) is not None and not stuck:
        d = make_design()
        fresh = [l for l in d.links if spec.link_kind(*l) == k and l not in inter]
        shared = [l for l in d.links if spec.link_kind(*l) == k and l in inter]
        rng.shuffle(fresh)
        rng.shuffle(shared)
        stuck = True
        for link in fresh + shared:  # shared links only when nothing else is removable
            if _connected_without(d, link):
                links.discard(link)
                deg[link[0]] -= 1
                deg[link[1]] -= 1
                counts[k] -= 1
                stuck = False
                break

    cand = make_design()
    if (len(set(components())) > 1 or over_budget() is not None
            or counts["planar"] != budgets["planar"]
            or counts["vertical"] != budgets["vertical"]):
        # pathological parents; rebuild the link set from scratch
        cand = Design(spec.grid_n, spec.layers_y, tuple(placement), _random_links(spec, rng))
    return cand
