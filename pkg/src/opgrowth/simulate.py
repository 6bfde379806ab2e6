"""Cluster-expansion simulation of Tr[rho A(t)] over a box tiling.

The time-evolved observable is organized by the connected clusters of boxes
its support has touched.  Evolving inside a cluster's region and
inclusion-exclusion over sub-clusters isolates each cluster's own
contribution; summing contributions over all clusters up to a size cutoff
approximates the exact expectation with an error that shrinks
exponentially in the cutoff volume.

Only clusters that are connected on the coarse box graph and contain the
anchor box can contribute: support spreads through shared Hamiltonian
terms, so a cluster with a gap is never touched as a whole.  That
restriction is what keeps the cluster count manageable.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import expm_multiply

from .bounds import BoundParams, truncation_error_bound
from .errors import CapExceededError, ValidityWindowError
from .lattice import BoxTiling, FactorGraph, enumerate_connected_subsets, tile_boxes
from .operators import (
    DEFAULT_QUBIT_CAP,
    HamiltonianSpec,
    LocalOperator,
    apply_local,
    embed,
    evolution_unitary,
    hamiltonian_matrix,
)

Cluster = tuple  # canonical (sorted) tuple of box ids


@dataclass(frozen=True)
class SimPlan:
    """Box side, cluster-size cutoff and target error for one simulation."""

    r: int
    m_star: int
    epsilon: float
    mode: str = "desk"
    tiling: BoxTiling | None = None

    def __post_init__(self):
        if self.r < 1 or self.m_star < 1:
            raise ValueError("require r >= 1 and m_star >= 1")

    @property
    def anchor_box(self):
        return self.tiling.anchor_box if self.tiling else None


@dataclass
class ClusterTable:
    """Per-cluster raw and corrected values, grouped by cluster size."""

    raw: dict[Cluster, float] = field(default_factory=dict)
    corrected: dict[Cluster, float] = field(default_factory=dict)
    status: dict[Cluster, str] = field(default_factory=dict)

    def level(self, m: int) -> list[Cluster]:
        return sorted(c for c in self.corrected if len(c) == m)


def plan(
    params: BoundParams | None,
    t: float,
    epsilon: float,
    mode: str = "desk",
    graph: FactorGraph | None = None,
    anchor_vertex: int = 0,
    r: int | None = None,
    m_star: int | None = None,
) -> SimPlan:
    """Choose box side and cluster cutoff.

    In "paper-formula" mode, r = 4(v_LR t + box_offset) and the cutoff is
    m* = floor(3^{d+2}/(mu r) * log(2 c_d / eps)) + 3^{d+2} + 1, using the
    constants in ``params``.  In "desk" mode both come from the caller.
    """
    if epsilon <= 0:
        raise ValidityWindowError("target error must be positive")
    if mode == "paper-formula":
        if params is None:
            raise ValueError("paper-formula mode needs BoundParams")
        d = params.dimension
        r_val = max(1, math.ceil(4 * (params.lr_velocity * t + params.box_offset)))
        log_term = max(0.0, math.log(2 * params.sim_prefactor / epsilon))
        m_val = int(3 ** (d + 2) / (params.decay_rate * r_val) * log_term) + 3 ** (d + 2) + 1
    elif mode == "desk":
        if r is None or m_star is None:
            raise ValueError("desk mode needs explicit r and m_star")
        r_val, m_val = int(r), int(m_star)
    else:
        raise ValueError(f"unknown plan mode {mode!r}")
    tiling = None
    if graph is not None:
        extent = graph.side if graph.side is not None else max(
            max(c) for c in graph.coords.values()) + 1
        if r_val > extent:
            warnings.warn(f"box side {r_val} exceeds lattice extent {extent}; clamping")
            r_val = extent
        tiling = tile_boxes(graph, r_val, anchor_vertex)
        if r_val < graph.interaction_range:
            raise ValueError("box side must be at least the interaction range")
    return SimPlan(r=r_val, m_star=m_val, epsilon=epsilon, mode=mode, tiling=tiling)


def cluster_region(tiling: BoxTiling, cluster: Cluster) -> tuple[int, ...]:
    out: list[int] = []
    for b in cluster:
        out.extend(tiling.box_vertices[b])
    return tuple(sorted(out))


def anchored_clusters(tiling: BoxTiling, m_star: int, cap: int | None = None) -> list[Cluster]:
    """All connected box clusters containing the anchor, up to size m_star."""
    kwargs = {"cap": cap} if cap is not None else {}
    out: list[Cluster] = []
    for m in range(1, m_star + 1):
        out.extend(enumerate_connected_subsets(
            tiling.adjacency, tiling.anchor_box, m, **kwargs))
    return out


def raw_cluster_expectation(
    H: HamiltonianSpec,
    A: LocalOperator,
    marginals,
    cluster: Cluster,
    tiling: BoxTiling,
    t: float,
    cap: int = DEFAULT_QUBIT_CAP + 6,
    _sparse_cache: dict | None = None,
) -> float:
    """Tr[rho_region e^{iHt} A e^{-iHt}] with H cut down to terms inside the cluster."""
    region = cluster_region(tiling, cluster)
    if not set(A.support) <= set(region):
        raise ValueError("cluster region must contain the observable support")
    n = len(region)
    if n > cap:
        raise CapExceededError(
            f"cluster {cluster} needs {n} qubits, above cap {cap}; shrink the plan")
    positions = [region.index(s) for s in A.support]
    if hasattr(marginals, "state_vector"):
        psi = marginals.state_vector(region)
        if t != 0.0:
            if _sparse_cache is not None and region in _sparse_cache:
                H_sp = _sparse_cache[region]
            else:
                H_sp = hamiltonian_matrix(H, region, sparse=True)
                if _sparse_cache is not None:
                    _sparse_cache[region] = H_sp
            psi = expm_multiply(-1j * t * H_sp, psi)
        val = np.vdot(psi, apply_local(A.matrix, positions, psi, n))
    else:
        dm = marginals.marginal(region)
        U = evolution_unitary(H, region, t)
        val = np.trace(U.conj().T @ dm @ U @ embed(A.matrix, A.support, region))
    return float(val.real)


def anchored_proper_subclusters(cluster: Cluster, adjacency: dict, anchor) -> list[Cluster]:
    """Nonempty proper subsets of a cluster that stay connected and keep the anchor.

    All other subsets carry no weight: support grows connectedly from the
    anchor box, so their contribution is identically zero.
    """
    members = [b for b in cluster if b != anchor]
    out: list[Cluster] = []
    for size in range(0, len(members)):
        for combo in itertools.combinations(members, size):
            sub = tuple(sorted(combo + (anchor,)))
            if len(sub) < len(cluster) and _connected(sub, adjacency):
                out.append(sub)
    return sorted(out)


def _connected(nodes: Cluster, adjacency: dict) -> bool:
    node_set = set(nodes)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        v = stack.pop()
        for u in adjacency[v]:
            if u in node_set and u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == len(node_set)


def cluster_correction(table: ClusterTable, cluster: Cluster, adjacency: dict, anchor) -> float:
    """Corrected value: raw minus the corrected values of all anchored sub-clusters."""
    total = table.raw[cluster]
    for sub in anchored_proper_subclusters(cluster, adjacency, anchor):
        if sub not in table.corrected:
            raise RuntimeError(f"dependency {sub} missing; levels were built out of order")
        total -= table.corrected[sub]
    return total


def simulate_expectation(
    H: HamiltonianSpec,
    A: LocalOperator,
    marginals,
    t: float,
    sim_plan: SimPlan,
    params: BoundParams | None = None,
    threads: int = 1,
    qubit_cap: int = DEFAULT_QUBIT_CAP + 6,
) -> tuple[float, dict]:
    """Run the level-by-level cluster expansion and return (estimate, diagnostics).

    Clusters of each size are evaluated independently (optionally on a
    thread pool) and merged in canonical order, so the result is
    deterministic for any thread count.  Diagnostics include per-level sums
    and running estimates; the running estimate at level m is exactly what
    a plan with m_star = m would return.
    """
    tiling = sim_plan.tiling
    if tiling is None:
        raise ValueError("plan carries no tiling; pass graph= when building it")
    anchor = tiling.anchor_box
    if not set(A.support) <= set(tiling.box_vertices[anchor]):
        raise ValueError("observable support must sit inside the anchor box")
    table = ClusterTable()
    sparse_cache: dict = {}
    level_sums: list[float] = []
    running: list[float] = []
    clusters_evaluated = 0
    total = 0.0
    for m in range(1, sim_plan.m_star + 1):
        clusters = enumerate_connected_subsets(tiling.adjacency, anchor, m)

        def raw_value(cluster: Cluster) -> float:
            return raw_cluster_expectation(
                H, A, marginals, cluster, tiling, t,
                cap=qubit_cap, _sparse_cache=sparse_cache)

        if threads > 1 and len(clusters) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                raw_vals = list(pool.map(raw_value, clusters))
        else:
            raw_vals = [raw_value(c) for c in clusters]
        for cluster, val in zip(clusters, raw_vals):
            table.raw[cluster] = val
            table.status[cluster] = "raw"
        level_total = 0.0
        for cluster in clusters:
            corrected = cluster_correction(table, cluster, tiling.adjacency, anchor)
            table.corrected[cluster] = corrected
            table.status[cluster] = "done"
            level_total += corrected
        clusters_evaluated += len(clusters)
        total += level_total
        level_sums.append(level_total)
        running.append(total)
    diagnostics = {
        "clusters_evaluated": clusters_evaluated,
        "level_sums": level_sums,
        "running_estimates": running,
        "table": table,
    }
    if params is not None:
        try:
            diagnostics["truncation_bound"] = truncation_error_bound(
                params, t, sim_plan.m_star * sim_plan.r**tiling.dimension)
        except (ValidityWindowError, ValueError):
            diagnostics["truncation_bound"] = None
    return total, diagnostics


def operator_piece(
    H: HamiltonianSpec,
    A: LocalOperator,
    cluster: Cluster,
    tiling: BoxTiling,
    t: float,
    cap: int = DEFAULT_QUBIT_CAP,
    _memo: dict | None = None,
) -> LocalOperator:
    """The operator-valued cluster contribution A(cluster; t).

    Defined by evolving inside the cluster region and subtracting every
    anchored connected sub-cluster's piece; the size-1 base case is plain
    evolution inside the anchor box.  Summing over all anchored connected
    clusters reconstructs the full evolved operator.
    """
    cluster = tuple(sorted(cluster))
    anchor = tiling.anchor_box
    if anchor not in cluster:
        raise ValueError("cluster must contain the anchor box")
    if not _connected(cluster, tiling.adjacency):
        raise ValueError("cluster must be connected on the coarse graph")
    memo = _memo if _memo is not None else {}
    if cluster in memo:
        return memo[cluster]
    region = cluster_region(tiling, cluster)
    if len(region) > cap:
        raise CapExceededError(f"cluster region needs {len(region)} qubits, above cap {cap}")
    if not set(A.support) <= set(tiling.box_vertices[anchor]):
        raise ValueError("observable support must sit inside the anchor box")
    U = evolution_unitary(H, region, t)
    evolved = U @ embed(A.matrix, A.support, region) @ U.conj().T
    for sub in anchored_proper_subclusters(cluster, tiling.adjacency, anchor):
        piece = operator_piece(H, A, sub, tiling, t, cap=cap, _memo=memo)
        evolved -= embed(piece.matrix, piece.support, region)
    out = LocalOperator(region, evolved)
    memo[cluster] = out
    return out
