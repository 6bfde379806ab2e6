"""Factor graphs, lattice geometry, box tilings and connected-cluster enumeration.

A factor graph pairs a vertex set (lattice sites) with a list of factors
(supports of Hamiltonian terms).  Distances between sites are measured in
factors: d(x, y) is the smallest number of factors in a connected path from
x to y.  Square-lattice constructors additionally carry integer coordinates,
which the box-tiling machinery needs.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field

from .errors import CapExceededError

# Default guard: refuse lattices with more than 2**MAX_VERTEX_BITS sites.
MAX_VERTEX_BITS = 20

# Default guard for connected-subset enumeration.
ENUMERATION_CAP = 10_000_000


@dataclass(frozen=True)
class FactorGraph:
    """Vertices plus factors (vertex subsets), with adjacency indexes.

    ``coords`` maps vertices to integer coordinates when the graph came from
    a square-lattice constructor; generic graphs may leave it empty.
    """

    vertices: tuple[int, ...]
    factors: tuple[frozenset[int], ...]
    dimension: int = 1
    side: int | None = None
    interaction_range: int = 1
    periodic: bool = False
    coords: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        vset = set(self.vertices)
        for X in self.factors:
            if not X or not X <= vset:
                raise ValueError(f"factor {set(X)} is not a nonempty vertex subset")
        object.__setattr__(self, "_vertex_factors", self._build_vertex_index())
        if len(self.vertices) > 1 and not self._is_connected():
            raise ValueError("factor graph must be connected")

    def _build_vertex_index(self) -> dict[int, tuple[int, ...]]:
        idx: dict[int, list[int]] = {v: [] for v in self.vertices}
        for i, X in enumerate(self.factors):
            for v in X:
                idx[v].append(i)
        return {v: tuple(f) for v, f in idx.items()}

    def _is_connected(self) -> bool:
        if not self.vertices:
            return True
        seen = {self.vertices[0]}
        queue = deque(seen)
        while queue:
            v = queue.popleft()
            for fi in self._vertex_factors[v]:
                for u in self.factors[fi]:
                    if u not in seen:
                        seen.add(u)
                        queue.append(u)
        return len(seen) == len(self.vertices)

    def factors_at(self, v: int) -> tuple[int, ...]:
        """Indices of the factors containing vertex v."""
        return self._vertex_factors[v]

    @property
    def few_body_bound(self) -> int:
        """Largest factor size."""
        return max((len(X) for X in self.factors), default=0)

    @property
    def degree_bound(self) -> int:
        """Degree constant used by the path-counting bounds.

        Takes the larger of (a) the most factors incident to one vertex and
        (b) the most factors intersecting one factor, so that the number of
        non-self-crossing factor paths of length l from any vertex is at
        most degree_bound**l.
        """
        per_vertex = max((len(f) for f in self._vertex_factors.values()), default=0)
        per_factor = 0
        for i, X in enumerate(self.factors):
            touching = set()
            for v in X:
                touching.update(self._vertex_factors[v])
            touching.discard(i)
            per_factor = max(per_factor, len(touching))
        return max(per_vertex, per_factor)

    def vertex_adjacency(self) -> dict[int, tuple[int, ...]]:
        """Vertex graph: u ~ v when some factor contains both."""
        adj: dict[int, set[int]] = {v: set() for v in self.vertices}
        for X in self.factors:
            for u, v in itertools.combinations(sorted(X), 2):
                adj[u].add(v)
                adj[v].add(u)
        return {v: tuple(sorted(s)) for v, s in adj.items()}

    def geodesic_distances(self, sources: set[int]) -> dict[int, int]:
        """BFS distances on the vertex graph from a source set."""
        adj = self.vertex_adjacency()
        dist = {v: 0 for v in sources}
        queue = deque(sources)
        while queue:
            v = queue.popleft()
            for u in adj[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        return dist

    def to_json(self) -> str:
        payload = {
            "dimension": self.dimension,
            "side": self.side,
            "vertices": list(self.vertices),
            "factors": [sorted(X) for X in self.factors],
            "coordinates": {str(v): list(c) for v, c in self.coords.items()},
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def build_square_lattice(
    d: int,
    L: int,
    interaction_range: int = 1,
    periodic: bool = False,
    max_vertex_bits: int = MAX_VERTEX_BITS,
) -> FactorGraph:
    """Hypercubic lattice of side L in d dimensions with pair factors.

    One factor per vertex pair within ``interaction_range`` in l1 distance
    (nearest neighbors when the range is 1).  Open boundary by default.
    """
    if d < 1 or L < 2 or interaction_range < 1:
        raise ValueError("require d >= 1, L >= 2, interaction_range >= 1")
    if d * math.log2(L) > max_vertex_bits:
        raise CapExceededError(
            f"lattice with L**d = {L}**{d} sites exceeds the 2**{max_vertex_bits} guard"
        )
    return build_rectangular_lattice((L,) * d, interaction_range, periodic)


def build_rectangular_lattice(
    shape: tuple[int, ...],
    interaction_range: int = 1,
    periodic: bool = False,
) -> FactorGraph:
    """Rectangular lattice with the given side lengths."""
    d = len(shape)
    if d < 1 or any(s < 2 for s in shape) or interaction_range < 1:
        raise ValueError("require every side >= 2 and interaction_range >= 1")
    coords = {i: c for i, c in enumerate(itertools.product(*(range(s) for s in shape)))}
    index = {c: i for i, c in coords.items()}

    def wrap_delta(a: int, b: int, s: int) -> int:
        delta = abs(a - b)
        return min(delta, s - delta) if periodic else delta

    factors = []
    seen = set()
    for v, c in coords.items():
        for offset in _l1_offsets(d, interaction_range):
            nc = tuple(x + o for x, o in zip(c, offset))
            if periodic:
                nc = tuple(x % s for x, s in zip(nc, shape))
            elif any(x < 0 or x >= s for x, s in zip(nc, shape)):
                continue
            u = index[nc]
            if u == v:
                continue
            if sum(wrap_delta(a, b, s) for a, b, s in zip(c, coords[u], shape)) > interaction_range:
                continue
            pair = frozenset((v, u))
            if pair not in seen:
                seen.add(pair)
                factors.append(pair)
    factors.sort(key=lambda X: tuple(sorted(X)))
    side = shape[0] if len(set(shape)) == 1 else None
    total = 1
    for s in shape:
        total *= s
    return FactorGraph(
        vertices=tuple(range(total)),
        factors=tuple(factors),
        dimension=d,
        side=side,
        interaction_range=interaction_range,
        periodic=periodic,
        coords=coords,
    )


def _l1_offsets(d: int, r: int):
    for offset in itertools.product(range(-r, r + 1), repeat=d):
        if 0 < sum(abs(o) for o in offset) <= r:
            yield offset


def factor_distance(g: FactorGraph, X: set[int], Y: set[int]) -> int:
    """Smallest number of factors in a connected path joining X to Y."""
    X, Y = set(X), set(Y)
    if not X or not Y:
        raise ValueError("vertex sets must be nonempty")
    unknown = (X | Y) - set(g.vertices)
    if unknown:
        raise ValueError(f"unknown vertices: {sorted(unknown)}")
    if X & Y:
        return 0
    dist = {v: 0 for v in X}
    queue = deque(X)
    while queue:
        v = queue.popleft()
        for fi in g.factors_at(v):
            for u in g.factors[fi]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    if u in Y:
                        return dist[u]
                    queue.append(u)
    raise ValueError("no path between sets on a connected graph (unreachable)")


def ball_and_boundary(g: FactorGraph, v: int, R: int) -> tuple[frozenset[int], int]:
    """Ball B_R(v) in the factor metric, plus its boundary size.

    The boundary counts vertices of the ball at factor-distance one from
    some vertex outside the ball.
    """
    if R < 0:
        raise ValueError("R must be nonnegative")
    if v not in set(g.vertices):
        raise ValueError(f"unknown vertex {v}")
    dist = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        if dist[u] == R:
            continue
        for fi in g.factors_at(u):
            for w in g.factors[fi]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
    ball = frozenset(dist)
    return ball, boundary_size(g, ball)


def boundary_size(g: FactorGraph, region: frozenset[int] | set[int]) -> int:
    """Number of region vertices sharing a factor with an outside vertex."""
    region = frozenset(region)
    count = 0
    for u in region:
        for fi in g.factors_at(u):
            if any(w not in region for w in g.factors[fi]):
                count += 1
                break
    return count


def enumerate_connected_subsets(
    adjacency: dict,
    root,
    m: int,
    cap: int = ENUMERATION_CAP,
) -> list[tuple]:
    """All connected subsets of size m containing ``root``, each exactly once.

    Works on any adjacency map (vertex graph or coarse box graph).  Subsets
    grow depth-first; a branch may only add nodes that earlier branches were
    forbidden from adding, so no subset is generated twice and no dedup pass
    is needed.  Output is canonically sorted.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if root not in adjacency:
        raise ValueError(f"root {root!r} not in adjacency")
    degree = max((len(n) for n in adjacency.values()), default=0)
    projected = (degree * math.e) ** m
    if projected > cap and math.comb(len(adjacency) - 1, m - 1) > cap:
        raise CapExceededError(
            f"projected connected-subset count {projected:.3g} exceeds cap {cap}"
        )
    results: list[tuple] = []

    def grow(subset: list, frontier: list, banned: set):
        if len(subset) == m:
            results.append(tuple(sorted(subset)))
            if len(results) > cap:
                raise CapExceededError(f"connected-subset count exceeds cap {cap}")
            return
        for i, cand in enumerate(frontier):
            new_banned = banned | set(frontier[: i + 1])
            extension = [
                u
                for u in sorted(adjacency[cand])
                if u not in new_banned and u not in subset and u not in frontier[i + 1:]
            ]
            grow(subset + [cand], frontier[i + 1:] + extension, new_banned)

    initial = sorted(adjacency[root])
    grow([root], initial, {root})
    return sorted(results)


@dataclass(frozen=True)
class BoxTiling:
    """Partition of a coordinate lattice into axis-aligned boxes of side r.

    Boxes at the lattice edge may be smaller than r**d.  Two boxes are
    coarse-adjacent when their box coordinates differ by at most one in
    every axis, so each box has at most 3**d - 1 neighbors.
    """

    r: int
    dimension: int
    box_of_vertex: dict[int, tuple[int, ...]]
    box_vertices: dict[tuple[int, ...], tuple[int, ...]]
    adjacency: dict[tuple[int, ...], tuple[tuple[int, ...], ...]]
    anchor_box: tuple[int, ...]
    interaction_range: int = 1

    @property
    def boxes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(sorted(self.box_vertices))


def tile_boxes(g: FactorGraph, r: int, anchor_vertex: int) -> BoxTiling:
    """Cut a square lattice into boxes of side r anchored at a given vertex."""
    if not g.coords:
        raise ValueError("graph lacks coordinates; build it with a lattice constructor")
    if r < 1:
        raise ValueError("box side must be >= 1")
    box_of_vertex = {v: tuple(x // r for x in c) for v, c in g.coords.items()}
    box_vertices: dict[tuple[int, ...], list[int]] = {}
    for v, b in box_of_vertex.items():
        box_vertices.setdefault(b, []).append(v)
    boxes = sorted(box_vertices)
    adjacency = {
        b: tuple(
            nb
            for nb in boxes
            if nb != b and all(abs(x - y) <= 1 for x, y in zip(b, nb))
        )
        for b in boxes
    }
    return BoxTiling(
        r=r,
        dimension=g.dimension,
        box_of_vertex=box_of_vertex,
        box_vertices={b: tuple(sorted(vs)) for b, vs in box_vertices.items()},
        adjacency=adjacency,
        anchor_box=box_of_vertex[anchor_vertex],
        interaction_range=g.interaction_range,
    )


def minimal_cluster_order(tiling: BoxTiling, boxes: set) -> int:
    """Size of the smallest connected box set containing all of ``boxes``.

    Unweighted Steiner tree on the coarse graph via the Dreyfus-Wagner
    subset dynamic program; node count is tree edge count plus one.
    """
    terminals = sorted(set(boxes))
    if not terminals:
        raise ValueError("box set must be nonempty")
    for b in terminals:
        if b not in tiling.box_vertices:
            raise ValueError(f"unknown box {b}")
    if len(terminals) == 1:
        return 1
    nodes = sorted(tiling.box_vertices)
    dist = {b: _coarse_bfs(tiling, b) for b in terminals}
    k = len(terminals)
    full = (1 << k) - 1
    INF = float("inf")
    dp = {1 << i: dict(dist[t]) for i, t in enumerate(terminals)}
    for S in range(1, full + 1):
        if S & (S - 1) == 0:
            continue
        table = {v: INF for v in nodes}
        sub = (S - 1) & S
        while sub:
            other = S ^ sub
            if other and sub < other:
                for v in nodes:
                    merged = dp[sub][v] + dp[other][v]
                    if merged < table[v]:
                        table[v] = merged
            sub = (sub - 1) & S
        # Dijkstra-style relaxation with unit edges (plain BFS rounds).
        order = sorted(nodes, key=lambda v: table[v])
        queue = deque(order)
        while queue:
            v = queue.popleft()
            for u in tiling.adjacency[v]:
                if table[v] + 1 < table[u]:
                    table[u] = table[v] + 1
                    queue.append(u)
        dp[S] = table
    best = min(dp[full][v] for v in nodes)
    return int(best) + 1


def _coarse_bfs(tiling: BoxTiling, source) -> dict:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for u in tiling.adjacency[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist
