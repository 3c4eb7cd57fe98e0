"""ML-guided local search: greedy descent on the weighted-sum scalarization,
trajectory labeling, a regression-forest evaluation function, and
surrogate-ranked start-point selection.

Every design visited by a descent is labeled with the terminal scalarized
value that search eventually reached, so the forest learns to predict how
far a start point can be pushed toward the reference point. The training
pool is a bounded FIFO of the most recent 10000 samples.

The forest is grown level-wise on quantile-binned features (histogram
split search), which keeps retraining cheap enough to run every iteration;
split thresholds are stored as raw feature values so prediction never
touches the binning.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .moo import DimMismatch, ObjectiveBounds, weighted_sum
from .problem import Design, NoFeasibleMove, ProblemInstance, neighbor_move

TRAINING_CAPACITY = 10_000
FEATURE_HOP_PAIRS = 64


class InsufficientData(Exception):
    pass


class BadNLocal(Exception):
    pass


def _seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

_HOP_PAIR_CACHE: dict[int, tuple[tuple[int, int], ...]] = {}


def _hop_sample_pairs(tile_count: int) -> tuple[tuple[int, int], ...]:
    """Fixed ordered-pair sample used for the hop-statistic features."""
    if tile_count not in _HOP_PAIR_CACHE:
        all_pairs = tile_count * (tile_count - 1)
        if all_pairs <= FEATURE_HOP_PAIRS:
            pairs = [(i, j) for i in range(tile_count) for j in range(tile_count) if i != j]
        else:
            rng = np.random.default_rng(np.random.SeedSequence([902113, tile_count]))
            flat = rng.choice(all_pairs, size=FEATURE_HOP_PAIRS, replace=False)
            pairs = []
            for f in sorted(int(x) for x in flat):
                i, r = divmod(f, tile_count - 1)
                j = r if r < i else r + 1
                pairs.append((i, j))
        _HOP_PAIR_CACHE[tile_count] = tuple(pairs)
    return _HOP_PAIR_CACHE[tile_count]


def _hops_from(design: Design, src: int) -> list[int]:
    adj = design.adjacency
    n = design.tile_count
    h = [-1] * n
    h[src] = 0
    order = [src]
    head = 0
    while head < len(order):
        v = order[head]
        head += 1
        hv = h[v] + 1
        for u in adj[v]:
            if h[u] < 0:
                h[u] = hv
                order.append(u)
    return h


def feature_length(m_obj: int) -> int:
    return 2 * m_obj + 8 + 5 + 1 + 2


def make_features(design: Design, obj: np.ndarray, w: np.ndarray,
                  bounds: ObjectiveBounds) -> np.ndarray:
    """Fixed-length descriptor: normalized objectives, weight, structure summaries."""
    if len(obj) != len(w):
        raise DimMismatch("objective/weight dimension mismatch")
    deg = np.clip(np.asarray(design.degrees), 0, 7)
    deg_hist = np.bincount(deg, minlength=8)[:8]
    planar = set(design.planar_links)
    geom_lengths = [l for l, link in zip(design.link_lengths, design.links)
                    if link in planar]
    len_hist = np.bincount(np.clip(geom_lengths, 1, 5), minlength=6)[1:6] \
        if geom_lengths else np.zeros(5)
    hops = []
    by_src: dict[int, list[int]] = {}
    for i, j in _hop_sample_pairs(design.tile_count):
        by_src.setdefault(i, []).append(j)
    for src, targets in by_src.items():
        row = _hops_from(design, src)
        hops.extend(row[j] for j in targets)
    hops_arr = np.asarray(hops, dtype=float)
    return np.concatenate([
        bounds.normalize(np.asarray(obj, dtype=float)),
        np.asarray(w, dtype=float),
        deg_hist.astype(float),
        np.asarray(len_hist, dtype=float),
        [float(len(design.vertical_links))],
        [float(hops_arr.mean()), float(hops_arr.max())],
    ])


# ---------------------------------------------------------------------------
# Trajectories and training data
# ---------------------------------------------------------------------------

@dataclass
class TrainingSample:
    features: np.ndarray
    label: float


@dataclass
class TrajectoryEntry:
    digest: str
    features: np.ndarray
    objectives: np.ndarray


@dataclass
class Trajectory:
    entries: list[TrajectoryEntry]
    terminal_g: float

    def samples(self) -> list[TrainingSample]:
        return [TrainingSample(e.features, self.terminal_g) for e in self.entries]


class TrainingSet:
    """Bounded FIFO of training samples, oldest evicted first."""

    def __init__(self, capacity: int = TRAINING_CAPACITY):
        self.capacity = capacity
        self._buf: deque[TrainingSample] = deque(maxlen=capacity)

    def extend(self, samples: Iterable[TrainingSample]) -> None:
        self._buf.extend(samples)

    def __len__(self) -> int:
        return len(self._buf)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([s.features for s in self._buf])
        y = np.array([s.label for s in self._buf])
        return x, y

    @classmethod
    def from_arrays(cls, x: np.ndarray, y: np.ndarray,
                    capacity: int = TRAINING_CAPACITY) -> "TrainingSet":
        ts = cls(capacity)
        ts.extend(TrainingSample(np.asarray(f, dtype=float), float(l))
                  for f, l in zip(x, y))
        return ts


# ---------------------------------------------------------------------------
# Greedy local search
# ---------------------------------------------------------------------------

def greedy_local_search(instance: ProblemInstance, start: Design, w: np.ndarray,
                        z: np.ndarray, budget: int, seed, ctx,
                        samples: int = 64) -> tuple[Design, Trajectory]:
    """Sampled steepest descent on weighted_sum(obj, w, z).

    Each step draws up to `samples` single-move neighbors, evaluates them
    through the shared cache, and moves only on strict improvement. ctx
    must provide evaluate(design) -> objective vector and bounds.
    """
    base = _entropy_list(_seedseq(seed))

    cur = start
    cur_obj = ctx.evaluate(cur)
    cur_g = weighted_sum(cur_obj, w, z)
    entries = [TrajectoryEntry(cur.digest, make_features(cur, cur_obj, w, ctx.bounds),
                               cur_obj)]
    for step in range(budget):
        step_rng = np.random.default_rng(np.random.SeedSequence([*base, step]))
        cands: dict[str, Design] = {}
        frozen = False
        for k in range(samples):
            try:
                cand = neighbor_move(instance, cur, step_rng)
            except NoFeasibleMove:
                frozen = True
                break
            if cand.digest != cur.digest:
                cands.setdefault(cand.digest, cand)
        best_g = cur_g
        best: Design | None = None
        best_obj = None
        for cand in cands.values():
            obj = ctx.evaluate(cand)
            g = weighted_sum(obj, w, z)
            if g < best_g:
                best_g, best, best_obj = g, cand, obj
        if best is None:
            break
        cur, cur_obj, cur_g = best, best_obj, best_g
        entries.append(TrajectoryEntry(cur.digest,
                                       make_features(cur, cur_obj, w, ctx.bounds),
                                       cur_obj))
        if frozen:
            break
    return cur, Trajectory(entries, terminal_g=cur_g)


def _entropy_list(ss: np.random.SeedSequence) -> list[int]:
    e = ss.entropy
    if isinstance(e, (list, tuple)):
        return [int(x) for x in e]
    return [int(e)]


# ---------------------------------------------------------------------------
# Regression forest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RFHyper:
    tree_count: int = 100
    max_depth: int = 12
    min_leaf: int = 4
    feature_subsample: int | None = None   # None -> ceil(d / 3)
    bins: int = 32


@dataclass
class Tree:
    feature: np.ndarray    # int32, -1 at leaves
    threshold: np.ndarray  # float64
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # leaf means

    def predict(self, x: np.ndarray) -> np.ndarray:
        cur = np.zeros(len(x), dtype=np.int64)
        while True:
            f = self.feature[cur]
            active = np.nonzero(f >= 0)[0]
            if len(active) == 0:
                break
            nodes = cur[active]
            go_left = x[active, f[active]] <= self.threshold[nodes]
            cur[active] = np.where(go_left, self.left[nodes], self.right[nodes])
        return self.value[cur]


@dataclass
class Forest:
    trees: list[Tree]
    hyper: RFHyper
    feature_dim: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.feature_dim:
            raise DimMismatch(f"expected {self.feature_dim} features, got {x.shape[1]}")
        out = np.zeros(len(x))
        for t in self.trees:
            out += t.predict(x)
        return out / len(self.trees)

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True,
                                         separators=(",", ":")).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format": "noc-forest/1",
            "feature_dim": self.feature_dim,
            "hyper": {
                "tree_count": self.hyper.tree_count,
                "max_depth": self.hyper.max_depth,
                "min_leaf": self.hyper.min_leaf,
                "feature_subsample": self.hyper.feature_subsample,
                "bins": self.hyper.bins,
            },
            "trees": [{
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            } for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("format") != "noc-forest/1":
            raise ValueError("not a noc-forest/1 document")
        trees = [Tree(
            feature=np.array(t["feature"], dtype=np.int32),
            threshold=np.array(t["threshold"], dtype=float),
            left=np.array(t["left"], dtype=np.int32),
            right=np.array(t["right"], dtype=np.int32),
            value=np.array(t["value"], dtype=float),
        ) for t in d["trees"]]
        return cls(trees=trees, hyper=RFHyper(**d["hyper"]), feature_dim=d["feature_dim"])


def _bin_features(x: np.ndarray, bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Quantile-bin each column; returns bin matrix and per-feature cut values."""
    n, d = x.shape
    cuts: list[np.ndarray] = []
    xb = np.zeros((n, d), dtype=np.int16)
    qs = np.linspace(0, 1, bins + 1)[1:-1]
    for f in range(d):
        col = x[:, f]
        uniq = np.unique(col)
        if len(uniq) <= 1:
            cuts.append(np.empty(0))
            continue
        if len(uniq) <= bins:
            c = (uniq[:-1] + uniq[1:]) / 2.0
        else:
            c = np.unique(np.quantile(col, qs))
        cuts.append(c)
        xb[:, f] = np.searchsorted(c, col, side="right")
    return xb, cuts


def _grow_tree(xb: np.ndarray, x: np.ndarray, y: np.ndarray,
               cuts: list[np.ndarray], hyper: RFHyper,
               rng: np.random.Generator) -> Tree:
    """Level-wise growth with histogram split search over binned features."""
    n, d = xb.shape
    sub = hyper.feature_subsample or -(-d // 3)
    sub = min(sub, d)
    nbins = hyper.bins + 1

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [float(y.mean())]

    node_of_row = np.zeros(n, dtype=np.int64)
    active = [0]
    for depth in range(hyper.max_depth):
        sizes = np.bincount(node_of_row, minlength=len(feature))
        splittable = [nid for nid in active if sizes[nid] >= 2 * hyper.min_leaf]
        if not splittable:
            break
        slot_of = {nid: s for s, nid in enumerate(splittable)}
        s_count = len(splittable)
        feats = np.stack([rng.choice(d, size=sub, replace=False) for _ in splittable])

        mask = np.isin(node_of_row, splittable)
        rows = np.nonzero(mask)[0]
        slots = np.array([slot_of[nid] for nid in node_of_row[rows]], dtype=np.int64)
        fb = xb[rows[:, None], feats[slots]]            # n_rows x sub
        base = (slots[:, None] * sub + np.arange(sub)[None, :]) * nbins
        key = (base + fb).ravel()
        mlen = s_count * sub * nbins
        yr = np.repeat(y[rows], sub)
        cnt = np.bincount(key, minlength=mlen).reshape(s_count, sub, nbins)
        sy = np.bincount(key, weights=yr, minlength=mlen).reshape(s_count, sub, nbins)

        c_cnt = np.cumsum(cnt, axis=2)
        c_sy = np.cumsum(sy, axis=2)
        tot_cnt = c_cnt[:, :, -1:]
        tot_sy = c_sy[:, :, -1:]
        n_l = c_cnt[:, :, :-1]
        n_r = tot_cnt - n_l
        sy_l = c_sy[:, :, :-1]
        sy_r = tot_sy - sy_l
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = (np.where(n_l > 0, sy_l ** 2 / np.maximum(n_l, 1), 0.0)
                    + np.where(n_r > 0, sy_r ** 2 / np.maximum(n_r, 1), 0.0)
                    - tot_sy ** 2 / np.maximum(tot_cnt, 1))
        valid = (n_l >= hyper.min_leaf) & (n_r >= hyper.min_leaf)
        gain = np.where(valid, gain, -np.inf)
        flat = gain.reshape(s_count, -1)
        best_idx = np.argmax(flat, axis=1)
        best_gain = flat[np.arange(s_count), best_idx]

        new_active: list[int] = []
        split_plan: dict[int, tuple[int, int, float]] = {}  # node -> (feat, bin, thr)
        for s, nid in enumerate(splittable):
            if best_gain[s] <= 1e-12:
                continue
            fslot, b = divmod(int(best_idx[s]), nbins - 1)
            f = int(feats[s, fslot])
            if len(cuts[f]) <= b:
                continue
            thr = float(cuts[f][b])
            lid = len(feature)
            rid = lid + 1
            feature[nid] = f
            threshold[nid] = thr
            left[nid] = lid
            right[nid] = rid
            feature.extend([-1, -1])
            threshold.extend([0.0, 0.0])
            left.extend([-1, -1])
            right.extend([-1, -1])
            value.extend([0.0, 0.0])
            split_plan[nid] = (f, b, thr)
            new_active.extend([lid, rid])
        if not split_plan:
            break
        # route rows of split nodes to their children
        for nid, (f, b, _) in split_plan.items():
            rws = np.nonzero(node_of_row == nid)[0]
            go_left = xb[rws, f] <= b
            node_of_row[rws] = np.where(go_left, left[nid], right[nid])
        active = new_active

    # leaf values = mean label of their rows
    feat_arr = np.array(feature, dtype=np.int32)
    sums = np.bincount(node_of_row, weights=y, minlength=len(feature))
    counts = np.bincount(node_of_row, minlength=len(feature))
    val_arr = np.array(value, dtype=float)
    leaf_rows = counts > 0
    val_arr[leaf_rows] = sums[leaf_rows] / counts[leaf_rows]
    return Tree(
        feature=feat_arr,
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=val_arr,
    )


def rf_train(data: TrainingSet, hyper: RFHyper = RFHyper(), seed=0) -> Forest:
    """Bootstrap forest of variance-reducing regression trees, seeded."""
    if len(data) < 2:
        raise InsufficientData(f"need >= 2 samples, have {len(data)}")
    x, y = data.as_arrays()
    n, d = x.shape
    xb, cuts = _bin_features(x, hyper.bins)
    base = _seedseq(seed)
    children = base.spawn(hyper.tree_count)
    trees = []
    for t in range(hyper.tree_count):
        rng = np.random.default_rng(children[t])
        idx = rng.integers(0, n, size=n)
        trees.append(_grow_tree(xb[idx], x[idx], y[idx], cuts, hyper, rng))
    return Forest(trees=trees, hyper=hyper, feature_dim=d)


def rf_predict(forest: Forest, features: np.ndarray) -> float:
    return float(forest.predict(np.atleast_2d(features))[0])


# ---------------------------------------------------------------------------
# Start-point selection (Algorithm "MLguide")
# ---------------------------------------------------------------------------

def ml_guide(forest: Forest, members: Sequence[tuple[Design, np.ndarray, np.ndarray]],
             n_local: int, bounds: ObjectiveBounds) -> list[int]:
    """Indices of the n_local members with the lowest predicted terminal value.

    members are (design, weight, objectives) triples in sub-problem order;
    ties resolve to the lowest sub-problem index.
    """
    if not (1 <= n_local <= len(members)):
        raise BadNLocal(f"n_local={n_local} with population {len(members)}")
    feats = np.stack([make_features(d, obj, w, bounds) for d, w, obj in members])
    preds = forest.predict(feats)
    order = np.argsort(preds, kind="stable")
    return [int(i) for i in order[:n_local]]
