"""Causal forests and irreducible factor paths.

A sequence of Hamiltonian factors applied to an operator supported on R can
only generate support on a target region S if the sequence contains a
chain of pairwise-intersecting factors leading from R to S.  The forest
builder records that chain structure; sequences whose forest misses some
target contribute exactly zero, which is what the path-sum bounds exploit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CapExceededError
from .lattice import FactorGraph
from .operators import HamiltonianSpec, LocalOperator, embed, operator_norm

ROOT = ("R",)
PATH_CAP = 2_000_000


@dataclass(frozen=True)
class FactorSequence:
    """Ordered factor ids into a FactorGraph; repeats allowed."""

    graph: FactorGraph
    ids: tuple[int, ...]

    def __post_init__(self):
        for i in self.ids:
            if not 0 <= i < len(self.graph.factors):
                raise ValueError(f"factor id {i} out of range")

    @property
    def sets(self) -> tuple[frozenset[int], ...]:
        return tuple(self.graph.factors[i] for i in self.ids)


@dataclass(frozen=True)
class CausalForest:
    """Output of the forest builder.

    Nodes are ("R",), ("M", n) for the factor at sequence position n (only
    positions that were attached, not absorbed), and ("S", i) for targets.
    ``parent`` holds the attachment edges.  ``causal`` is set when every
    target was attached.
    """

    sequence: tuple[frozenset[int], ...]
    R: frozenset[int]
    S_list: tuple[frozenset[int], ...]
    parent: dict[tuple, tuple]
    causal: bool

    def factor_nodes(self) -> tuple[int, ...]:
        return tuple(sorted(n[1] for n in self.parent if n[0] == "M"))

    def attached_targets(self) -> tuple[int, ...]:
        return tuple(sorted(n[1] for n in self.parent if n[0] == "S"))

    def to_json(self) -> str:
        """Id-list form of the forest, for fixtures and debugging."""
        payload = {
            "root": sorted(self.R),
            "targets": [sorted(s) for s in self.S_list],
            "sequence": [sorted(x) for x in self.sequence],
            "edges": sorted(["/".join(map(str, child)), "/".join(map(str, parent))]
                            for child, parent in sorted(self.parent.items())),
            "causal": self.causal,
        }
        return json.dumps(payload)


@dataclass(frozen=True)
class IrreduciblePath:
    """Non-self-crossing factor chain from R to one target, excluding endpoints."""

    factors: tuple[frozenset[int], ...]
    factor_ids: tuple[int, ...] = ()
    weight: float = 1.0

    def __len__(self) -> int:
        return len(self.factors)

    def to_json(self) -> str:
        return json.dumps({
            "factor_ids": list(self.factor_ids),
            "factors": [sorted(x) for x in self.factors],
            "weight": self.weight,
        })


def build_causal_forest(
    M,
    R: set[int] | frozenset[int],
    S_list,
    graph: FactorGraph | None = None,
) -> CausalForest | None:
    """Run the forest construction on a factor sequence.

    ``M`` is a FactorSequence or an iterable of vertex sets.  Walking the
    sequence in order: a factor intersecting nothing earlier kills the whole
    term (returns None); a factor contained in an earlier one is absorbed
    (no new node); otherwise it attaches to its earliest intersecting
    predecessor.  Targets attach as leaves the first time a factor hits them.
    """
    if isinstance(M, FactorSequence):
        seq = M.sets
    else:
        seq = tuple(frozenset(x) for x in M)
    R = frozenset(R)
    S_list = tuple(frozenset(s) for s in S_list)
    for i, S in enumerate(S_list):
        if S & R:
            raise ValueError(f"target {i} intersects R")
        for j in range(i + 1, len(S_list)):
            if S & S_list[j]:
                raise ValueError(f"targets {i} and {j} intersect")

    elements: list[frozenset[int]] = [R]          # element k is M_k, with M_0 = R
    parent: dict[tuple, tuple] = {}
    attached: dict[int, tuple] = {0: ROOT}        # sequence position -> node name
    targets_in: set[int] = set()

    for n, Mn in enumerate(seq, start=1):
        hits = [k for k in range(n) if Mn & elements[k]]
        if not hits:
            return None
        absorbed = any(Mn <= elements[k] for k in hits)
        if not absorbed:
            k = hits[0]
            # the earliest intersecting element is never an absorbed factor,
            # so it always owns a node
            parent[("M", n)] = attached[k]
            attached[n] = ("M", n)
        else:
            attached[n] = attached[hits[0]]
        elements.append(Mn)
        for i, S in enumerate(S_list):
            if i not in targets_in and S & Mn:
                parent[("S", i)] = ("M", n) if not absorbed else attached[n]
                targets_in.add(i)

    return CausalForest(
        sequence=seq,
        R=R,
        S_list=S_list,
        parent=parent,
        causal=len(targets_in) == len(S_list),
    )


def irreducible_paths(forest: CausalForest) -> list[IrreduciblePath]:
    """The unique forest path from each target back to R, ordered R-side first."""
    if not forest.causal:
        raise ValueError("forest is not causal; some target never attached")
    out = []
    for i in range(len(forest.S_list)):
        node = forest.parent[("S", i)]
        chain: list[int] = []
        while node != ROOT:
            chain.append(node[1])
            node = forest.parent[node]
        chain.reverse()
        factors = tuple(forest.sequence[n - 1] for n in chain)
        out.append(IrreduciblePath(factors=factors, factor_ids=tuple(chain)))
    return out


def enumerate_irreducible_paths(
    g: FactorGraph,
    R: set[int] | frozenset[int],
    S: set[int] | frozenset[int],
    B: set[int] | frozenset[int],
    max_len: int,
    norms: dict[int, float] | None = None,
    cap: int = PATH_CAP,
) -> list[IrreduciblePath]:
    """All non-self-crossing factor paths from R to S staying near B.

    Every factor on the path must intersect B; the first must additionally
    intersect R and the last must intersect S.  Consecutive factors
    intersect and no factor repeats.
    """
    R, S, B = frozenset(R), frozenset(S), frozenset(B)
    if not S <= B:
        raise ValueError("S must be contained in B")
    if B & R:
        raise ValueError("B must be disjoint from R")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    allowed = [i for i, X in enumerate(g.factors) if X & B]
    allowed_set = set(allowed)
    touches = {i: g.factors[i] for i in allowed}
    neighbors: dict[int, list[int]] = {}
    for i in allowed:
        nbrs = set()
        for v in touches[i]:
            nbrs.update(f for f in g.factors_at(v) if f in allowed_set and f != i)
        neighbors[i] = sorted(nbrs)

    results: list[IrreduciblePath] = []

    def extend(path: list[int], used: set[int]):
        last = path[-1]
        if touches[last] & S:
            ids = tuple(path)
            weight = 1.0
            if norms is not None:
                for i in ids:
                    weight *= norms[i]
            results.append(IrreduciblePath(
                factors=tuple(g.factors[i] for i in ids), factor_ids=ids, weight=weight))
            if len(results) > cap:
                raise CapExceededError(f"path count exceeds cap {cap}")
        if len(path) == max_len:
            return
        for nxt in neighbors[last]:
            if nxt not in used:
                extend(path + [nxt], used | {nxt})

    for start in sorted(i for i in allowed if touches[i] & R):
        extend([start], {start})
    return results


def term_vanishing_check(
    g: FactorGraph,
    H: HamiltonianSpec,
    M,
    R: set[int],
    S_list,
    A: LocalOperator,
    O_list: list[LocalOperator],
    region: tuple[int, ...] | None = None,
    cap: int = 12,
) -> tuple[CausalForest | None, float]:
    """Evaluate one expansion term densely and pair it with the forest verdict.

    The term is ad_{O_m} ... ad_{O_1} L_{M_n} ... L_{M_1} |A) with
    L_X = i ad_{H_X}.  A missing forest must force the norm to zero.
    """
    if isinstance(M, FactorSequence):
        ids = M.ids
    else:
        ids = tuple(M)
    region = tuple(sorted(region if region is not None else H.vertices()))
    if len(region) > cap:
        raise CapExceededError(f"region of {len(region)} qubits exceeds cap {cap}")
    term_by_support = {t.support: t for t in H.terms}
    cur = embed(A.matrix, A.support, region)
    for i in ids:
        X = g.factors[i]
        term = term_by_support.get(X)
        if term is None:
            raise ValueError(f"Hamiltonian has no term on factor {sorted(X)}")
        h_emb = embed(term.matrix, tuple(sorted(X)), region)
        cur = 1j * (h_emb @ cur - cur @ h_emb)
    for O in O_list:
        o_emb = embed(O.matrix, O.support, region)
        cur = o_emb @ cur - cur @ o_emb
    forest = build_causal_forest([g.factors[i] for i in ids], R, S_list)
    return forest, operator_norm(np.asarray(cur))
