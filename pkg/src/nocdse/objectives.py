"""Objective models for placed designs.

Objective vectors are 1-D float arrays in the fixed order
[mean traffic, traffic variance, CPU-LLC latency, energy, thermal],
truncated to the instance's objective_count. All objectives are minimized
and nonnegative for feasible designs.

The thermal model treats each planar position as an independent vertical
stack: a core k layers from the heat sink is heated by every core between
it and the sink, each contributing power times the accumulated vertical
resistance, plus a shared base-layer term. The thermal objective is the
peak stack temperature times the worst in-layer temperature spread, so a
uniformly heated chip scores zero regardless of absolute power.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .problem import Design, ProblemInstance
from .routing import RoutingTable, build_routing, link_utilizations, tile_traffic

OBJECTIVE_NAMES = ("mean", "variance", "latency", "energy", "thermal")


class EmptyLinks(Exception):
    pass


class NoCpuOrLlc(Exception):
    pass


class MissingComponent(Exception):
    pass


class IndexOutOfRange(Exception):
    pass


def mean_traffic(u: np.ndarray) -> float:
    if len(u) == 0:
        raise EmptyLinks("no links")
    return float(np.mean(u))


def variance_traffic(u: np.ndarray) -> float:
    """Population variance (1/L normalization)."""
    if len(u) == 0:
        raise EmptyLinks("no links")
    u = np.asarray(u, dtype=float)
    m = u.mean()
    return float(np.mean((u - m) ** 2))


def cpu_latency(instance: ProblemInstance, routing: RoutingTable) -> float:
    """Average CPU->LLC latency: (r*hops + link delay) weighted by traffic."""
    cpus = instance.cpu_pe_ids
    llcs = instance.spec.llc_pe_ids
    if not cpus or not llcs:
        raise NoCpuOrLlc("instance has no CPU or no LLC")
    tile_of = routing.design.tile_of_pe
    ct = [tile_of[p] for p in cpus]
    lt = [tile_of[p] for p in llcs]
    h = routing.hops[np.ix_(ct, lt)]
    d = routing.path_delay[np.ix_(ct, lt)]
    f = instance.traffic[np.ix_(cpus, llcs)]
    r = instance.latency_params.router_stages
    return float(np.sum((r * h + d) * f) / (len(cpus) * len(llcs)))


def energy(instance: ProblemInstance, routing: RoutingTable) -> float:
    """Link plus router energy over all routed traffic.

    Router ports are counted at every router a flit enters, source and
    destination included.
    """
    f = tile_traffic(instance, routing.design)
    e_link = instance.energy_params.e_link
    e_router = instance.energy_params.e_router
    link_part = e_link * float(np.sum(f * routing.path_units))
    router_part = e_router * float(np.sum(f * routing.router_degree_sums))
    return link_part + router_part


def _stack_temperatures(instance: ProblemInstance, design: Design) -> np.ndarray:
    """T[k-1, n]: temperature of stack n at layer k (k=1 next to the sink)."""
    spec = instance.spec
    nn = spec.grid_n * spec.grid_n
    power = instance.pe_power[np.asarray(design.placement)].reshape(spec.layers_y, nn)
    r = np.asarray(instance.thermal_params.r_layers, dtype=float)
    coef = np.cumsum(r) + instance.thermal_params.r_base
    return np.cumsum(power * coef[:, None], axis=0)


def stack_temperature(instance: ProblemInstance, design: Design,
                      stack: int, layer: int) -> float:
    """Kelvin above ambient for one stack; layer is 1-based from the sink."""
    spec = instance.spec
    nn = spec.grid_n * spec.grid_n
    if not (0 <= stack < nn) or not (1 <= layer <= spec.layers_y):
        raise IndexOutOfRange(f"stack {stack} / layer {layer} out of range")
    return float(_stack_temperatures(instance, design)[layer - 1, stack])


def thermal(instance: ProblemInstance, design: Design) -> float:
    """Peak stack temperature times the worst same-layer temperature spread."""
    t = _stack_temperatures(instance, design)
    spread = (t.max(axis=1) - t.min(axis=1)).max()
    return float(t.max() * spread)


def proxy_edp(v: np.ndarray) -> float:
    """Model-based energy-delay proxy (energy objective times latency objective)."""
    if len(v) < 4:
        raise MissingComponent("energy objective requires objective_count >= 4")
    return float(v[3] * v[2])


@dataclass
class EvalCache:
    """Digest-keyed memo of objective vectors; eval_count counts distinct designs.

    Lookups/inserts are guarded by a lock so concurrent workers with
    deterministic values get last-writer-wins semantics and an atomic
    counter.
    """

    _store: dict[str, np.ndarray] = field(default_factory=dict)
    eval_count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def get(self, digest: str) -> np.ndarray | None:
        return self._store.get(digest)

    def put(self, digest: str, vec: np.ndarray) -> None:
        with self._lock:
            if digest not in self._store:
                self.eval_count += 1
            self._store[digest] = vec

    def __len__(self) -> int:
        return len(self._store)


def evaluate(instance: ProblemInstance, design: Design, cache: EvalCache) -> np.ndarray:
    """Objective vector for a feasible design, memoized by design digest."""
    digest = design.digest
    hit = cache.get(digest)
    if hit is not None:
        return hit
    rt = build_routing(instance, design)
    u = link_utilizations(rt, instance)
    m = instance.objective_count
    vals = [mean_traffic(u), variance_traffic(u), cpu_latency(instance, rt)]
    if m >= 4:
        vals.append(energy(instance, rt))
    if m >= 5:
        vals.append(thermal(instance, design))
    vec = np.array(vals, dtype=float)
    vec.flags.writeable = False
    cache.put(digest, vec)
    return vec
