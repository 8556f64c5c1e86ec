"""Association graph and minimum-cost multicut.

Vertices ``0 .. T-1`` are tracked targets, ``T .. T+M-1`` are candidates in
pool order. Edge costs follow three cases:

* target - candidate: the target's filter score at the candidate;
* candidate - candidate: IoU of the two boxes (only when positive);
* target - target: ``-big_c``, which makes separating targets mandatory.

A labeling is stored by its components; an edge is cut iff its endpoints
lie in different components, so every labeling produced here is feasible by
construction.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, NamedTuple, Optional, Sequence, TextIO

import numpy as np

from . import _accel
from .geometry import Candidate, iou

EXACT_MAX_VERTICES = 12
_EPS = 1e-12


class MulticutError(RuntimeError):
    pass


class EdgeKind(str, Enum):
    TARGET_CANDIDATE = "tc"
    CANDIDATE_CANDIDATE = "cc"
    TARGET_TARGET = "tt"


class Edge(NamedTuple):
    u: int
    v: int
    cost: float
    kind: EdgeKind


@dataclass
class AssociationGraph:
    target_ids: list[int]
    candidates: list[Candidate]
    edges: list[Edge] = field(default_factory=list)

    @property
    def n_targets(self) -> int:
        return len(self.target_ids)

    @property
    def n_vertices(self) -> int:
        return len(self.target_ids) + len(self.candidates)

    def is_target(self, v: int) -> bool:
        return v < self.n_targets

    def vertex_name(self, v: int) -> str:
        if self.is_target(v):
            return f"T{self.target_ids[v]}"
        return f"C{v - self.n_targets}"

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        eu = np.array([e.u for e in self.edges], dtype=np.int64)
        ev = np.array([e.v for e in self.edges], dtype=np.int64)
        w = np.array([e.cost for e in self.edges], dtype=float)
        return eu, ev, w

    def check(self) -> None:
        seen = set()
        for e in self.edges:
            if e.u == e.v:
                raise MulticutError(f"self edge at vertex {e.u}")
            key = (min(e.u, e.v), max(e.u, e.v))
            if key in seen:
                raise MulticutError(f"duplicate edge {key}")
            seen.add(key)
            tu, tv = self.is_target(e.u), self.is_target(e.v)
            expected = (
                EdgeKind.TARGET_TARGET if tu and tv
                else EdgeKind.CANDIDATE_CANDIDATE if not (tu or tv)
                else EdgeKind.TARGET_CANDIDATE
            )
            if e.kind is not expected:
                raise MulticutError(f"edge {key} labelled {e.kind.value}, expected {expected.value}")


@dataclass
class CutLabeling:
    components: np.ndarray  # vertex -> component id, canonical (first-appearance) numbering
    cut: np.ndarray  # edge index -> 0/1

    def cost(self, g: AssociationGraph) -> float:
        return float(sum(e.cost for e, c in zip(g.edges, self.cut) if c))

    def is_consistent(self, g: AssociationGraph) -> bool:
        comp = self.components
        return all(bool(c) == (comp[e.u] != comp[e.v]) for e, c in zip(g.edges, self.cut))


def canonical(components: Sequence[int]) -> np.ndarray:
    relabel: dict[int, int] = {}
    out = np.empty(len(components), dtype=np.int64)
    for i, c in enumerate(components):
        out[i] = relabel.setdefault(int(c), len(relabel))
    return out


def labeling_from_components(g: AssociationGraph, components: Sequence[int]) -> CutLabeling:
    comp = canonical(components)
    cut = np.array([int(comp[e.u] != comp[e.v]) for e in g.edges], dtype=np.uint8)
    return CutLabeling(comp, cut)


def build_graph(
    target_ids: Sequence[int],
    candidates: Sequence[Candidate],
    scores: Mapping[tuple[int, int], float],
    big_c: float = 1e6,
    s_min: float = 0.0,
) -> AssociationGraph:
    """Weighted association graph for one frame.

    ``scores`` maps ``(target_id, candidate_index)`` to the target's filter
    score there. Missing, infinite, or below-``s_min`` scores produce no edge.
    """
    g = AssociationGraph(list(target_ids), list(candidates))
    t = g.n_targets
    for a in range(t):
        for b in range(a + 1, t):
            g.edges.append(Edge(a, b, -float(big_c), EdgeKind.TARGET_TARGET))
    for a, tid in enumerate(g.target_ids):
        for j in range(len(g.candidates)):
            s = scores.get((tid, j))
            if s is None or not math.isfinite(s) or s < s_min:
                continue
            g.edges.append(Edge(a, t + j, float(s), EdgeKind.TARGET_CANDIDATE))
    for j in range(len(g.candidates)):
        for k in range(j + 1, len(g.candidates)):
            ov = iou(g.candidates[j].box, g.candidates[k].box)
            if ov > 0:
                g.edges.append(Edge(t + j, t + k, ov, EdgeKind.CANDIDATE_CANDIDATE))
    return g


# ---------------------------------------------------------------------------
# exact solver
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def restricted_growth_strings(n: int) -> np.ndarray:
    """All set partitions of ``n`` items as restricted growth strings, in lexicographic order."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    rows = np.zeros((1, 1), dtype=np.int8)
    maxes = np.zeros(1, dtype=np.int64)
    for _ in range(1, n):
        reps = maxes + 2
        parent = np.repeat(np.arange(len(rows)), reps)
        starts = np.repeat(np.cumsum(reps) - reps, reps)
        value = (np.arange(parent.size) - starts).astype(np.int8)
        rows = np.concatenate([rows[parent], value[:, None]], axis=1)
        maxes = np.maximum(maxes[parent], value)
    rows.setflags(write=False)
    return rows


def solve_exact(g: AssociationGraph) -> CutLabeling:
    """Optimal labeling by enumerating every set partition of the vertices.

    Ties: lowest cost, then fewest cut edges, then the lexicographically first
    component assignment.
    """
    n = g.n_vertices
    if n > EXACT_MAX_VERTICES:
        raise MulticutError(f"exact multicut refuses {n} > {EXACT_MAX_VERTICES} vertices")
    rgs = restricted_growth_strings(n)
    if not g.edges:
        return labeling_from_components(g, rgs[0])
    eu, ev, w = g.arrays()
    costs, ncut = _accel.partition_costs(rgs, eu, ev, w)
    best = costs.min()
    tied = np.flatnonzero(costs <= best + 1e-9 + 1e-12 * abs(best))
    pick = tied[np.argmin(ncut[tied])]  # argmin keeps the first (lexicographic) tie
    return labeling_from_components(g, rgs[pick])


# ---------------------------------------------------------------------------
# heuristic solver
# ---------------------------------------------------------------------------

def _adjacency(g: AssociationGraph) -> list[dict[int, float]]:
    adj: list[dict[int, float]] = [dict() for _ in range(g.n_vertices)]
    for e in g.edges:
        adj[e.u][e.v] = adj[e.u].get(e.v, 0.0) + e.cost
        adj[e.v][e.u] = adj[e.v].get(e.u, 0.0) + e.cost
    return adj


def _contract(adj: list[dict[int, float]], comp: list[int]) -> bool:
    """Greedy additive edge contraction on the current components.

    Repeatedly joins the pair of components whose connecting edges have the
    largest positive total weight. Returns True if anything was merged.
    """
    members: dict[int, list[int]] = {}
    for v, c in enumerate(comp):
        members.setdefault(c, []).append(v)
    inter: dict[int, dict[int, float]] = {c: {} for c in members}
    for v, nbrs in enumerate(adj):
        for u, w in nbrs.items():
            a, b = comp[v], comp[u]
            if a != b:
                inter[a][b] = inter[a].get(b, 0.0) + w
    # each unordered pair was counted from both endpoints
    for a in inter:
        for b in inter[a]:
            inter[a][b] *= 0.5
    merged = False
    while True:
        best_w, best = _EPS, None
        for a in sorted(inter):
            for b, w in inter[a].items():
                if a < b and (w > best_w + _EPS or (best is not None and abs(w - best_w) <= _EPS and (a, b) < best)):
                    best_w, best = w, (a, b)
        if best is None:
            break
        a, b = best
        merged = True
        members[a].extend(members.pop(b))
        for c, w in inter.pop(b).items():
            if c == a:
                continue
            inter[a][c] = inter[a].get(c, 0.0) + w
            inter[c][a] = inter[c].get(a, 0.0) + w
            del inter[c][b]
        inter[a].pop(b, None)
    for c, vs in members.items():
        for v in vs:
            comp[v] = c
    return merged


def _move_vertices(adj: list[dict[int, float]], comp: list[int]) -> bool:
    """Single-vertex moves to a neighbouring component or a new singleton while cost drops."""
    improved_any = False
    sizes: dict[int, int] = {}
    for c in comp:
        sizes[c] = sizes.get(c, 0) + 1
    next_label = max(comp) + 1 if comp else 0
    improved = True
    while improved:
        improved = False
        for v in range(len(comp)):
            here = comp[v]
            weight_to: dict[int, float] = {}
            for u, w in adj[v].items():
                weight_to[comp[u]] = weight_to.get(comp[u], 0.0) + w
            stay = weight_to.get(here, 0.0)
            best_delta, dest = -1e-9, None
            for c in sorted(weight_to):
                if c == here:
                    continue
                delta = stay - weight_to[c]
                if delta < best_delta:
                    best_delta, dest = delta, c
            if sizes[here] > 1 and stay < best_delta:
                best_delta, dest = stay, next_label
            if dest is None:
                continue
            if dest == next_label:
                next_label += 1
            sizes[here] -= 1
            sizes[dest] = sizes.get(dest, 0) + 1
            comp[v] = dest
            improved = improved_any = True
    return improved_any


def _kl_pair(adj: list[dict[int, float]], comp: list[int], a: int, b: int) -> bool:
    """One Kernighan-Lin pass re-partitioning the vertices of components ``a`` and ``b``.

    Every vertex is moved once to the opposite side in best-gain order (gains
    may be negative); the best prefix of that move sequence is kept if it
    lowers the cost. ``b`` may be a fresh, empty label.
    """
    verts = [v for v in range(len(comp)) if comp[v] in (a, b)]
    side = {v: comp[v] for v in verts}
    other = {a: b, b: a}
    gain = {}
    for v in verts:
        g = 0.0
        for u, w in adj[v].items():
            if u in side:
                g += w if side[u] != side[v] else -w
        gain[v] = g
    locked: set[int] = set()
    seq: list[int] = []
    total, best_total, best_len = 0.0, 1e-9, 0
    for _ in range(len(verts)):
        v = max((u for u in verts if u not in locked), key=lambda u: (gain[u], -u))
        total += gain[v]
        old = side[v]
        side[v] = other[old]
        locked.add(v)
        seq.append(v)
        for u, w in adj[v].items():
            if u in side and u not in locked:
                gain[u] += 2 * w if side[u] == old else -2 * w
        if total > best_total:
            best_total, best_len = total, len(seq)
    if best_len == 0:
        return False
    for v in seq[:best_len]:
        comp[v] = other[comp[v]]
    return True


def _kl_refine(adj: list[dict[int, float]], comp: list[int]) -> bool:
    improved_any = False
    improved = bool(comp)
    while improved:
        improved = False
        labels = sorted(set(comp))
        fresh = max(labels) + 1
        pairs = []
        for a in labels:
            touching = {comp[u] for v in range(len(comp)) if comp[v] == a for u in adj[v]}
            pairs.extend((a, b) for b in sorted(touching) if b > a)
            pairs.append((a, fresh))
        for a, b in pairs:
            if _kl_pair(adj, comp, a, b):
                improved = improved_any = True
                break
    return improved_any


def solve_heuristic(g: AssociationGraph, max_rounds: int = 50) -> CutLabeling:
    """Greedy additive contraction refined by vertex moves and pairwise Kernighan-Lin passes.

    Contraction, single-vertex moves and two-component re-partitioning
    alternate until none of them changes the labeling. Deterministic: all ties
    go to the lowest vertex / component index.
    """
    adj = _adjacency(g)
    comp = list(range(g.n_vertices))
    for _ in range(max_rounds):
        merged = _contract(adj, comp)
        moved = _move_vertices(adj, comp)
        swapped = _kl_refine(adj, comp)
        if not (merged or moved or swapped):
            break
    return labeling_from_components(g, comp)


def trivial_labelings(g: AssociationGraph) -> tuple[CutLabeling, CutLabeling]:
    """(everything joined, everything separate)."""
    n = g.n_vertices
    return labeling_from_components(g, [0] * n), labeling_from_components(g, list(range(n)))


# ---------------------------------------------------------------------------
# assignment extraction and verification
# ---------------------------------------------------------------------------

@dataclass
class Assignment:
    pairs: set[tuple[int, int]]  # (target id, candidate index)
    detection_of: dict[int, int]  # target id -> detection-sourced candidate index
    unassigned_targets: set[int]  # targets without a detection this frame
    unassigned_candidates: set[int]

    def candidate_owner(self) -> dict[int, int]:
        return {j: t for t, j in self.pairs}


def extract_assignment(g: AssociationGraph, labels: CutLabeling) -> Assignment:
    """Targets take their uncut edges; at most one detection each (the best-scoring)."""
    comp = labels.components
    per_comp: dict[int, list[int]] = {}
    for v in range(g.n_targets):
        per_comp.setdefault(int(comp[v]), []).append(v)
    for c, ts in per_comp.items():
        if len(ts) > 1:
            names = ", ".join(g.vertex_name(v) for v in ts)
            raise MulticutError(f"targets {names} share a component; increase big_c")

    pairs: set[tuple[int, int]] = set()
    best_det: dict[int, tuple[float, int]] = {}
    t = g.n_targets
    for e, c in zip(g.edges, labels.cut):
        if c or e.kind is not EdgeKind.TARGET_CANDIDATE:
            continue
        tv, cv = (e.u, e.v) if e.u < t else (e.v, e.u)
        tid, j = g.target_ids[tv], cv - t
        if g.candidates[j].is_detection:
            cur = best_det.get(tid)
            if cur is None or e.cost > cur[0] or (e.cost == cur[0] and j < cur[1]):
                best_det[tid] = (e.cost, j)
        else:
            pairs.add((tid, j))
    detection_of = {tid: j for tid, (_, j) in best_det.items()}
    pairs.update(detection_of.items())
    used = {j for _, j in pairs}
    return Assignment(
        pairs=pairs,
        detection_of=detection_of,
        unassigned_targets={tid for tid in g.target_ids if tid not in detection_of},
        unassigned_candidates={j for j in range(len(g.candidates)) if j not in used},
    )


def verify_targets(
    assignment: Assignment,
    counters: Mapping[int, int],
    t_v: float,
) -> tuple[set[int], dict[int, int], set[int]]:
    """Reset counters of targets holding a detection, age the rest, report expiries.

    A target expires once its frames-without-detection counter reaches ``t_v``.
    """
    verified, updated, expired = set(), {}, set()
    for tid, count in counters.items():
        if tid in assignment.detection_of:
            verified.add(tid)
            updated[tid] = 0
        else:
            updated[tid] = count + 1
            if updated[tid] >= t_v:
                expired.add(tid)
    return verified, updated, expired


def write_graph_dump(stream: TextIO, g: AssociationGraph, labels: Optional[CutLabeling], frame: int) -> None:
    """One edge per line: ``u v kind cost cut`` (cut is ``-`` without a labeling)."""
    stream.write(f"# frame {frame} vertices {g.n_vertices} edges {len(g.edges)}\n")
    for j, cand in enumerate(g.candidates):
        b = cand.box
        origin = "" if cand.origin_target is None else f" origin=T{cand.origin_target}"
        stream.write(f"# C{j} {cand.source.value} {b.x:.2f} {b.y:.2f} {b.w:.2f} {b.h:.2f}{origin}\n")
    for i, e in enumerate(g.edges):
        cut = "-" if labels is None else str(int(labels.cut[i]))
        stream.write(f"{g.vertex_name(e.u)} {g.vertex_name(e.v)} {e.kind.value} {e.cost:.6g} {cut}\n")
