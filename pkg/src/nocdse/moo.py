"""Multi-objective machinery: weights, scalarizations, dominance, hypervolume,
and the cross-algorithm comparison metrics.

Hypervolume here is the exact dominated volume (recursive slicing, exact
for up to five objectives) over fronts normalized to [0, 1] with the
reference fixed at 1.1 per coordinate, so boundary points keep a positive
contribution. A seeded Monte-Carlo estimator provides an independent
check.

Comparison metrics recompute hypervolume traces from the logged population
objective vectors under bounds combined across the runs being compared;
per-run logged PHV values use each run's own normalization and are not
directly comparable. Both trace kinds are best-so-far curves, and the
budget axis is evaluation count, with wall clock reported alongside when
timing data is present.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from math import comb
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .runlog import RunLog

HV_REF = 1.1
CONVERGENCE_WINDOW = 5
CONVERGENCE_RTOL = 0.005


class BadDims(Exception):
    pass


class DimMismatch(Exception):
    pass


class PointBeyondRef(Exception):
    pass


class EmptyPopulation(Exception):
    pass


# ---------------------------------------------------------------------------
# Weight vectors
# ---------------------------------------------------------------------------

def _lattice(h: int, m: int) -> np.ndarray:
    """Simplex-lattice compositions of h into m parts, lexicographic order."""
    rows: list[list[int]] = []

    def rec(prefix: list[int], remaining: int, slots: int):
        if slots == 1:
            rows.append(prefix + [remaining])
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v, slots - 1)

    rec([], h, m)
    return np.array(rows, dtype=float) / h


def _lexsorted(pts: np.ndarray) -> np.ndarray:
    order = np.lexsort(tuple(pts[:, i] for i in reversed(range(pts.shape[1]))))
    return pts[order]


def weight_vectors(count: int, dims: int) -> np.ndarray:
    """count evenly spread weight vectors (rows sum to 1), sorted lexicographically.

    Uses the smallest simplex lattice that reaches count, then a
    deterministic farthest-point subsample seeded with the unit vectors.
    """
    if dims < 2 or count < dims:
        raise BadDims(f"need count >= dims >= 2, got count={count} dims={dims}")
    h = 1
    while comb(h + dims - 1, dims - 1) < count:
        h += 1
    pts = _lattice(h, dims)
    if len(pts) == count:
        return _lexsorted(pts)

    selected: list[int] = []
    for i in range(dims):  # unit vectors anchor the extremes
        unit = np.zeros(dims)
        unit[i] = 1.0
        selected.append(int(np.nonzero((pts == unit).all(axis=1))[0][0]))
    dist = np.min(np.linalg.norm(pts[:, None, :] - pts[selected][None, :, :], axis=2), axis=1)
    dist[selected] = -1.0
    while len(selected) < count:
        nxt = int(np.argmax(dist))  # argmax ties resolve to the lex-first lattice row
        selected.append(nxt)
        d_new = np.linalg.norm(pts - pts[nxt], axis=1)
        dist = np.minimum(dist, d_new)
        dist[nxt] = -1.0
    return _lexsorted(pts[sorted(selected)])


# ---------------------------------------------------------------------------
# Scalarizations and dominance
# ---------------------------------------------------------------------------

def _check_dims(*arrays) -> None:
    sizes = {len(a) for a in arrays}
    if len(sizes) != 1:
        raise DimMismatch(f"mismatched dimensions {sorted(sizes)}")


def tchebycheff(obj: np.ndarray, w: np.ndarray, z: np.ndarray) -> float:
    _check_dims(obj, w, z)
    return float(np.max(w * np.abs(np.asarray(obj) - z)))


def weighted_sum(obj: np.ndarray, w: np.ndarray, z: np.ndarray) -> float:
    _check_dims(obj, w, z)
    return float(np.sum(w * np.abs(np.asarray(obj) - z)))


def update_ideal(z: np.ndarray, obj: np.ndarray) -> np.ndarray:
    _check_dims(z, obj)
    return np.minimum(z, obj)


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """a dominates b: no worse everywhere, strictly better somewhere (minimization)."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_dims(a, b)
    return bool(np.all(a <= b) and np.any(a < b))


def pareto_mask(points: np.ndarray) -> np.ndarray:
    """Boolean mask of non-dominated rows; duplicate rows keep the first."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        p = pts[i]
        le = (pts <= p).all(axis=1)
        lt = (pts < p).any(axis=1)
        if np.any(le & lt & keep):
            keep[i] = False
            continue
        dup = (pts == p).all(axis=1)
        dup[: i + 1] = False
        keep &= ~dup
    return keep


def pareto_front(points: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Non-dominated subset in first-occurrence order, duplicates kept once."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise EmptyPopulation("empty objective set")
    return pts[pareto_mask(pts)]


# ---------------------------------------------------------------------------
# Bounds / normalization
# ---------------------------------------------------------------------------

@dataclass
class ObjectiveBounds:
    """Running per-objective (min, max) over every evaluation; widens only."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def empty(cls, m: int) -> "ObjectiveBounds":
        return cls(lo=np.full(m, np.inf), hi=np.full(m, -np.inf))

    def update(self, obj: np.ndarray) -> None:
        _check_dims(self.lo, obj)
        np.minimum(self.lo, obj, out=self.lo)
        np.maximum(self.hi, obj, out=self.hi)

    def copy(self) -> "ObjectiveBounds":
        return ObjectiveBounds(lo=self.lo.copy(), hi=self.hi.copy())

    def span(self) -> np.ndarray:
        s = self.hi - self.lo
        return np.where(s > 0, s, 1.0)

    def normalize(self, objs: np.ndarray) -> np.ndarray:
        return (np.asarray(objs, dtype=float) - self.lo) / self.span()


# ---------------------------------------------------------------------------
# Hypervolume
# ---------------------------------------------------------------------------

def _hv2d(pts: np.ndarray, ref: np.ndarray) -> float:
    """Sweep for two objectives; pts non-dominated, sorted by first coordinate."""
    hv = 0.0
    prev_y = ref[1]
    for x, y in pts:
        hv += (ref[0] - x) * (prev_y - y)
        prev_y = y
    return hv


def _wfg(pts: np.ndarray, ref: np.ndarray) -> float:
    n = len(pts)
    if n == 0:
        return 0.0
    if n == 1:
        return float(np.prod(ref - pts[0]))
    if pts.shape[1] == 2:
        return _hv2d(pts, ref)
    total = 0.0
    for i in range(n):
        p = pts[i]
        box = float(np.prod(ref - p))
        rest = pts[i + 1:]
        if len(rest):
            limited = np.maximum(rest, p)
            limited = limited[pareto_mask(limited)]
            total += box - _wfg(limited, ref)
        else:
            total += box
    return total


def hypervolume(front: Sequence[np.ndarray] | np.ndarray, ref: Sequence[float]) -> float:
    """Exact dominated hypervolume by recursive slicing; exact for m <= 5."""
    pts = np.asarray(front, dtype=float)
    if pts.size == 0:
        return 0.0
    if pts.ndim == 1:
        pts = pts[None, :]
    ref = np.asarray(ref, dtype=float)
    m = pts.shape[1]
    if m > 5:
        raise BadDims("exact hypervolume supported for m <= 5 only")
    if len(ref) != m:
        raise DimMismatch("reference point dimension mismatch")
    if np.any(pts >= ref):
        raise PointBeyondRef("front point does not dominate the reference point")
    pts = pts[pareto_mask(pts)]
    pts = pts[np.argsort(pts[:, 0], kind="stable")]
    return _wfg(pts, ref)


def hypervolume_mc(front, ref, samples: int, seed) -> float:
    """Monte-Carlo hypervolume: dominated fraction of the sampling box."""
    pts = np.asarray(front, dtype=float)
    if pts.size == 0:
        return 0.0
    if pts.ndim == 1:
        pts = pts[None, :]
    ref = np.asarray(ref, dtype=float)
    if pts.shape[1] != len(ref):
        raise DimMismatch("reference point dimension mismatch")
    if np.any(pts >= ref):
        raise PointBeyondRef("front point does not dominate the reference point")
    lo = pts.min(axis=0)
    vol = float(np.prod(ref - lo))
    rng = np.random.default_rng(seed)
    hit = 0
    done = 0
    chunk = 65536
    while done < samples:
        k = min(chunk, samples - done)
        u = rng.uniform(lo, ref, size=(k, len(ref)))
        dominated = (pts[None, :, :] <= u[:, None, :]).all(axis=2).any(axis=1)
        hit += int(dominated.sum())
        done += k
    return vol * hit / samples


def normalized_population_phv(pop_objs: np.ndarray, bounds: ObjectiveBounds) -> float:
    """PHV of a population front under fixed bounds, reference 1.1 per axis.

    Points at or beyond the reference box contribute nothing and are dropped.
    """
    if len(pop_objs) == 0:
        return 0.0
    norm = bounds.normalize(pop_objs)
    keep = (norm < HV_REF).all(axis=1)
    if not np.any(keep):
        return 0.0
    front = pareto_front(norm[keep])
    ref = [HV_REF] * pop_objs.shape[1]
    return hypervolume(front, ref)


# ---------------------------------------------------------------------------
# Comparison metrics
# ---------------------------------------------------------------------------

@dataclass
class SpeedupResult:
    ratio_evals: float
    ratio_wall: float | None
    reached: bool                 # MOELA attained the baseline's converged PHV
    baseline_converged: bool      # the 0.5%-in-5-iterations rule fired
    target_phv: float
    convergence_evals: int
    match_evals: int | None


def combined_bounds(logs: Sequence["RunLog"]) -> ObjectiveBounds:
    m = logs[0].m_obj
    b = ObjectiveBounds.empty(m)
    for log in logs:
        for rec in log.records:
            if rec.population.size:
                b.update(rec.population.min(axis=0))
                b.update(rec.population.max(axis=0))
    return b


def phv_trace(log: "RunLog", bounds: ObjectiveBounds) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(evaluations, best-so-far population PHV, elapsed_ms) over iterations."""
    if not log.records:
        raise EmptyPopulation(f"log for {log.algo} has no records")
    evals, phv, wall = [], [], []
    best = 0.0
    memo: dict[bytes, float] = {}
    for rec in log.records:
        key = hashlib.blake2b(np.ascontiguousarray(rec.population).tobytes(),
                              digest_size=16).digest()
        cur = memo.get(key)
        if cur is None:
            cur = normalized_population_phv(rec.population, bounds)
            memo[key] = cur
        best = max(best, cur)
        evals.append(rec.evaluations)
        phv.append(best)
        wall.append(rec.elapsed_ms)
    return np.array(evals), np.array(phv), np.array(wall)


def _convergence_index(phv: np.ndarray) -> tuple[int, bool]:
    """First index where PHV improved < 0.5% over the last 5 iterations."""
    w = CONVERGENCE_WINDOW
    for t in range(w, len(phv)):
        base = phv[t - w]
        if base <= 0.0:
            if phv[t] <= 0.0:
                return t, True
            continue
        if (phv[t] - base) / base < CONVERGENCE_RTOL:
            return t, True
    return len(phv) - 1, False


def speedup_factor(log_other: "RunLog", log_moela: "RunLog",
                   traces: tuple | None = None) -> SpeedupResult:
    """Baseline evaluations-to-convergence over MOELA evaluations-to-match."""
    if traces is None:
        bounds = combined_bounds([log_other, log_moela])
        traces = (phv_trace(log_other, bounds), phv_trace(log_moela, bounds))
    (ev_o, phv_o, wall_o), (ev_m, phv_m, wall_m) = traces
    t_conv, converged = _convergence_index(phv_o)
    target = phv_o[t_conv]
    match = None
    for t in range(len(phv_m)):
        if phv_m[t] >= target - 1e-12:
            match = t
            break
    if match is None:
        return SpeedupResult(0.0, None, False, converged, float(target),
                             int(ev_o[t_conv]), None)
    ratio = float(ev_o[t_conv]) / max(float(ev_m[match]), 1.0)
    ratio_wall = None
    if wall_o[t_conv] > 0 and wall_m[match] > 0:
        ratio_wall = float(wall_o[t_conv]) / float(wall_m[match])
    return SpeedupResult(ratio, ratio_wall, True, converged, float(target),
                         int(ev_o[t_conv]), int(ev_m[match]))


def phv_improvement(log_other: "RunLog", log_moela: "RunLog",
                    traces: tuple | None = None) -> float:
    """Relative PHV gain of MOELA over the baseline at the stop budget."""
    if traces is None:
        bounds = combined_bounds([log_other, log_moela])
        traces = (phv_trace(log_other, bounds), phv_trace(log_moela, bounds))
    (_, phv_o, _), (_, phv_m, _) = traces
    final_o, final_m = float(phv_o[-1]), float(phv_m[-1])
    if final_o == 0.0:
        return 0.0 if final_m == 0.0 else float("inf")
    return (final_m - final_o) / final_o


def select_low_edp_design(pop_objs: np.ndarray, temp_threshold: float) -> int:
    """Index of the lowest proxy-EDP design within the temperature threshold,
    or the coolest design when nothing qualifies."""
    pop = np.asarray(pop_objs, dtype=float)
    if pop.size == 0:
        raise EmptyPopulation("empty population")
    if pop.shape[1] < 5:
        raise DimMismatch("temperature-gated selection needs 5 objectives")
    temps = pop[:, 4]
    edp = pop[:, 3] * pop[:, 2]
    ok = np.nonzero(temps <= temp_threshold + 1e-12)[0]
    if len(ok) == 0:
        return int(np.argmin(temps))
    return int(ok[np.argmin(edp[ok])])


def edp_improvement(pop_other: np.ndarray, pop_moela: np.ndarray,
                    temp_slack: float = 1.05) -> float:
    """Relative proxy-EDP gain between temperature-gated picks of two populations.

    The threshold is temp_slack times the lowest thermal objective across
    both populations (the model-based stand-in for peak temperature).
    """
    a = np.asarray(pop_other, dtype=float)
    b = np.asarray(pop_moela, dtype=float)
    if a.size == 0 or b.size == 0:
        raise EmptyPopulation("empty population")
    if a.shape[1] < 5 or b.shape[1] < 5:
        raise DimMismatch("EDP comparison needs 5 objectives")
    threshold = temp_slack * min(a[:, 4].min(), b[:, 4].min())
    ia = select_low_edp_design(a, threshold)
    ib = select_low_edp_design(b, threshold)
    edp_a = a[ia, 3] * a[ia, 2]
    edp_b = b[ib, 3] * b[ib, 2]
    if edp_a == 0.0:
        return 0.0 if edp_b == 0.0 else float("-inf")
    return float((edp_a - edp_b) / edp_a)
