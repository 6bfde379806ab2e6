"""Dense operator algebra on small qubit registers.

Everything here is exact up to floating point: Heisenberg evolution by
diagonalizing the region Hamiltonian, expectation values by full state
evolution, nested commutators by direct matrix algebra.  These routines are
the oracle the closed-form bounds and the cluster simulator are checked
against, so clarity beats cleverness.

Qubit ordering convention: a region is a sorted tuple of vertex ids and the
first (smallest) vertex is the most significant kron factor.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import CapExceededError
from .lattice import FactorGraph, enumerate_connected_subsets

DENSE_NORM_DIM = 1 << 10      # dense SVD below, power iteration above
DEFAULT_QUBIT_CAP = 14
HERMITICITY_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class LocalOperator:
    """Dense operator on a small set of sites with onsite dimension q.

    The type admits any q; the evolution and embedding routines here only
    ship q = 2 paths.
    """

    support: tuple[int, ...]
    matrix: np.ndarray
    q: int = 2

    def __post_init__(self):
        support = tuple(sorted(self.support))
        object.__setattr__(self, "support", support)
        mat = np.asarray(self.matrix, dtype=complex)
        dim = self.q ** len(support)
        if mat.shape != (dim, dim):
            raise ValueError(
                f"matrix shape {mat.shape} does not match {self.q}**{len(support)}")
        object.__setattr__(self, "matrix", mat)

    def to_json(self) -> str:
        """Serialize as support plus a row-major [re, im] matrix."""
        payload = {
            "support": list(self.support),
            "matrix": [[[z.real, z.imag] for z in row] for row in self.matrix],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "LocalOperator":
        payload = json.loads(text)
        matrix = np.array([[complex(re, im) for re, im in row]
                           for row in payload["matrix"]])
        return cls(tuple(payload["support"]), matrix)

    def shrink(self, tol: float = 1e-12) -> "LocalOperator":
        """Drop sites the operator acts on as the identity."""
        if self.q != 2:
            raise ValueError("support minimization only ships for q = 2")
        support = list(self.support)
        mat = self.matrix
        changed = True
        while changed and support:
            changed = False
            for i in range(len(support)):
                reduced = _strip_site(mat, i, len(support), tol)
                if reduced is not None:
                    mat = reduced
                    support.pop(i)
                    changed = True
                    break
        return LocalOperator(tuple(support), mat)


def _strip_site(mat: np.ndarray, axis: int, n: int, tol: float) -> np.ndarray | None:
    """Return the matrix with qubit ``axis`` removed if it acts as identity there."""
    t = mat.reshape((2,) * (2 * n))
    rest = 0.5 * (np.take(np.take(t, 0, axis=n + axis), 0, axis=axis)
                  + np.take(np.take(t, 1, axis=n + axis), 1, axis=axis))
    rest_mat = rest.reshape(2 ** (n - 1), 2 ** (n - 1))
    rebuilt = embed(rest_mat, tuple(j for j in range(n) if j != axis), tuple(range(n)))
    if np.max(np.abs(rebuilt - mat)) <= tol:
        return rest_mat
    return None


def pauli_operator(label: str, sites: tuple[int, ...] | list[int]) -> LocalOperator:
    """Tensor product of Pauli matrices, e.g. pauli_operator("XZ", (0, 3))."""
    sites = tuple(sites)
    if len(label) != len(sites):
        raise ValueError("one Pauli letter per site")
    order = np.argsort(sites)
    mats = [PAULI[label[i]] for i in order]
    return LocalOperator(tuple(sites[i] for i in order), kron_all(mats))


def kron_all(mats) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def embed(matrix: np.ndarray, support: tuple[int, ...], region: tuple[int, ...]) -> np.ndarray:
    """Embed an operator on ``support`` into the larger ``region`` register.

    ``support`` and ``region`` are position tuples in the same label space;
    every support element must appear in region.
    """
    region = tuple(region)
    support = tuple(support)
    n = len(region)
    k = len(support)
    pos = []
    for s in support:
        try:
            pos.append(region.index(s))
        except ValueError:
            raise ValueError(f"support site {s} not contained in region") from None
    if k == n and pos == list(range(n)):
        return np.asarray(matrix, dtype=complex)
    rest = [i for i in range(n) if i not in pos]
    full = np.kron(np.asarray(matrix, dtype=complex), np.eye(2 ** (n - k), dtype=complex))
    cur = pos + rest
    perm = [cur.index(i) for i in range(n)]
    t = full.reshape((2,) * (2 * n))
    t = t.transpose(perm + [n + p for p in perm])
    return t.reshape(2**n, 2**n)


def apply_local(matrix: np.ndarray, positions: list[int], psi: np.ndarray, n: int) -> np.ndarray:
    """Apply a k-qubit matrix at the given qubit positions of an n-qubit vector."""
    k = len(positions)
    t = np.moveaxis(psi.reshape((2,) * n), positions, range(k))
    t = (matrix @ t.reshape(2**k, -1)).reshape((2,) * n)
    return np.moveaxis(t, range(k), positions).reshape(-1)


def operator_norm(op: LocalOperator | np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Spectral norm: dense singular values for small matrices, power iteration above."""
    mat = op.matrix if isinstance(op, LocalOperator) else np.asarray(op)
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    if mat.shape[0] <= DENSE_NORM_DIM:
        return float(np.linalg.norm(mat, 2))
    rng = np.random.default_rng(7)
    v = rng.normal(size=mat.shape[1]) + 1j * rng.normal(size=mat.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = mat.conj().T @ (mat @ v)
        lam = np.linalg.norm(w)
        if lam == 0.0:
            return 0.0
        v = w / lam
        new_sigma = math.sqrt(lam)
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            return new_sigma
        sigma = new_sigma
    return sigma


@dataclass(frozen=True)
class HamTerm:
    support: frozenset[int]
    matrix: np.ndarray
    norm: float


@dataclass(frozen=True)
class HamiltonianSpec:
    """Sum of few-body Hermitian terms, optionally with a quasilocal envelope.

    The envelope (h, kappa) asserts that every term obeys
    norm <= h * exp(-kappa * support_size).
    """

    terms: tuple[HamTerm, ...]
    envelope: tuple[float, float] | None = None
    graph: FactorGraph | None = field(default=None, repr=False)

    def __post_init__(self):
        for term in self.terms:
            gap = np.max(np.abs(term.matrix - term.matrix.conj().T)) if term.matrix.size else 0.0
            if gap > HERMITICITY_TOL:
                raise ValueError(f"non-Hermitian term on {sorted(term.support)} (gap {gap:.2e})")

    @property
    def max_norm(self) -> float:
        return max((t.norm for t in self.terms), default=0.0)

    def vertices(self) -> tuple[int, ...]:
        if self.graph is not None:
            return tuple(self.graph.vertices)
        out: set[int] = set()
        for t in self.terms:
            out |= t.support
        return tuple(sorted(out))

    def terms_within(self, region: set[int] | frozenset[int]) -> tuple[HamTerm, ...]:
        region = frozenset(region)
        return tuple(t for t in self.terms if t.support <= region)

    def factor_graph(self) -> FactorGraph:
        """Factor graph whose factors are the term supports."""
        return FactorGraph(
            vertices=self.vertices(),
            factors=tuple(t.support for t in self.terms),
            dimension=self.graph.dimension if self.graph else 1,
            side=self.graph.side if self.graph else None,
            coords=dict(self.graph.coords) if self.graph else {},
        )

    def coupling_degree(self) -> int:
        """Max vertex degree of the graph where u ~ v if a term contains both."""
        adj: dict[int, set[int]] = {v: set() for v in self.vertices()}
        for t in self.terms:
            for u, v in itertools.combinations(sorted(t.support), 2):
                adj[u].add(v)
                adj[v].add(u)
        return max((len(s) for s in adj.values()), default=0)

    def to_json(self) -> str:
        """Serialize the term list (and envelope) in the LocalOperator format."""
        payload = {
            "terms": [
                {
                    "support": sorted(t.support),
                    "matrix": [[[z.real, z.imag] for z in row] for row in t.matrix],
                }
                for t in self.terms
            ],
            "envelope": list(self.envelope) if self.envelope else None,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str, graph: FactorGraph | None = None) -> "HamiltonianSpec":
        payload = json.loads(text)
        terms = tuple(
            _term(frozenset(entry["support"]),
                  np.array([[complex(re, im) for re, im in row]
                            for row in entry["matrix"]]))
            for entry in payload["terms"]
        )
        envelope = tuple(payload["envelope"]) if payload.get("envelope") else None
        return cls(terms, envelope=envelope, graph=graph)


def hamiltonian_matrix(
    H: HamiltonianSpec,
    region: tuple[int, ...],
    sparse: bool = False,
):
    """Assemble the Hamiltonian restricted to terms fully inside ``region``."""
    region = tuple(sorted(region))
    n = len(region)
    terms = H.terms_within(set(region))
    if not sparse:
        out = np.zeros((2**n, 2**n), dtype=complex)
        for t in terms:
            out += embed(t.matrix, tuple(sorted(t.support)), region)
        return out
    out = sp.csr_matrix((2**n, 2**n), dtype=complex)
    for t in terms:
        out = out + _sparse_embed(t.matrix, tuple(sorted(t.support)), region)
    return out


def _sparse_embed(matrix: np.ndarray, support: tuple[int, ...], region: tuple[int, ...]):
    n = len(region)
    k = len(support)
    pos = [region.index(s) for s in support]
    rest = [i for i in range(n) if i not in pos]
    big = sp.kron(sp.csr_matrix(matrix), sp.identity(2 ** (n - k), format="csr"), format="csr")
    # permute basis from support-first qubit order to region order
    cur = pos + rest
    shifts = [n - 1 - i for i in cur]
    src = np.arange(2**n)
    dest = np.zeros(2**n, dtype=np.int64)
    for j in range(n):
        bit = (src >> (n - 1 - j)) & 1
        dest |= bit << shifts[j]
    P = sp.csr_matrix((np.ones(2**n), (dest, src)), shape=(2**n, 2**n))
    return P @ big @ P.T


def evolution_unitary(H: HamiltonianSpec, region: tuple[int, ...], t: float) -> np.ndarray:
    """exp(i t H_region) via diagonalization."""
    mat = hamiltonian_matrix(H, region)
    w, V = np.linalg.eigh(mat)
    return (V * np.exp(1j * w * t)) @ V.conj().T


def heisenberg_evolve(
    H: HamiltonianSpec,
    A: LocalOperator,
    t: float,
    region: tuple[int, ...] | list[int],
    cap: int = DEFAULT_QUBIT_CAP,
    shrink: bool = True,
) -> LocalOperator:
    """A(t) = exp(iHt) A exp(-iHt) with H restricted to terms inside region."""
    region = tuple(sorted(region))
    if not set(A.support) <= set(region):
        raise ValueError("region must contain the operator support")
    if len(region) > cap:
        raise CapExceededError(f"region of {len(region)} qubits exceeds cap {cap}")
    U = evolution_unitary(H, region, t)
    A_emb = embed(A.matrix, A.support, region)
    out = LocalOperator(region, U @ A_emb @ U.conj().T)
    return out.shrink() if shrink else out


def nested_commutator_norm(
    H: HamiltonianSpec,
    A: LocalOperator,
    O_list: list[LocalOperator],
    t: float,
    region: tuple[int, ...] | list[int],
    cap: int = DEFAULT_QUBIT_CAP,
) -> float:
    """(1/2^m) * norm of [O_m, [..., [O_1, A(t)]]] computed densely in region."""
    region = tuple(sorted(region))
    taken: set[int] = set(A.support)
    for O in O_list:
        overlap = taken & set(O.support)
        if overlap:
            raise ValueError(f"overlapping supports at {sorted(overlap)}")
        taken |= set(O.support)
        norm = operator_norm(O)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"probe operator norm {norm} is not 1")
    if not taken <= set(region):
        raise ValueError("region must contain all supports")
    At = heisenberg_evolve(H, A, t, region, cap=cap, shrink=False)
    C = At.matrix
    for O in O_list:
        O_emb = embed(O.matrix, O.support, region)
        C = O_emb @ C - C @ O_emb
    return operator_norm(C) / 2 ** len(O_list)


def build_named_hamiltonian(name: str, g: FactorGraph, params: dict | None = None) -> HamiltonianSpec:
    """Construct one of the bundled model Hamiltonians on a factor graph.

    Models: "tfim" (J, g), "heisenberg" (Jx, Jy, Jz), "random2local"
    (seed, scale), "quasilocal" (h, kappa, s_max, seed).  Terms with zero
    norm are pruned.
    """
    params = dict(params or {})
    pair_factors = [X for X in g.factors if len(X) == 2]
    terms: list[HamTerm] = []
    if name == "tfim":
        J = float(params.pop("J", 1.0))
        gx = float(params.pop("g", 0.0))
        for X in pair_factors:
            terms.append(_term(X, -J * kron_all([PAULI["Z"], PAULI["Z"]])))
        for v in g.vertices:
            terms.append(_term(frozenset((v,)), -gx * PAULI["X"]))
    elif name == "heisenberg":
        Jx = float(params.pop("Jx", 1.0))
        Jy = float(params.pop("Jy", 1.0))
        Jz = float(params.pop("Jz", 1.0))
        for X in pair_factors:
            mat = (
                Jx * kron_all([PAULI["X"], PAULI["X"]])
                + Jy * kron_all([PAULI["Y"], PAULI["Y"]])
                + Jz * kron_all([PAULI["Z"], PAULI["Z"]])
            )
            terms.append(_term(X, mat))
    elif name == "random2local":
        seed = int(params.pop("seed", 0))
        scale = float(params.pop("scale", 1.0))
        rng = np.random.default_rng(seed)
        for X in pair_factors:
            G = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            M = G + G.conj().T
            M *= scale * rng.uniform(0.5, 1.0) / np.linalg.norm(M, 2)
            terms.append(_term(X, M))
    elif name == "quasilocal":
        h = float(params.pop("h", 1.0))
        kappa = float(params.pop("kappa", 2.0))
        s_max = int(params.pop("s_max", 3))
        seed = int(params.pop("seed", 0))
        rng = np.random.default_rng(seed)
        adj = g.vertex_adjacency()
        for size in range(1, s_max + 1):
            subsets: set[tuple[int, ...]] = set()
            for root in g.vertices:
                for sub in enumerate_connected_subsets(adj, root, size):
                    if min(sub) == root:
                        subsets.add(sub)
            for sub in sorted(subsets):
                letters = "".join(rng.choice(["X", "Y", "Z"]) for _ in sub)
                base = pauli_operator(letters, sub)
                terms.append(_term(frozenset(sub), h * math.exp(-kappa * size) * base.matrix))
        if params:
            raise ValueError(f"unknown parameters {sorted(params)}")
        terms = [t for t in terms if t.norm > 1e-15]
        return HamiltonianSpec(tuple(terms), envelope=(h, kappa), graph=g)
    else:
        raise ValueError(f"unknown model {name!r}")
    if params:
        raise ValueError(f"unknown parameters {sorted(params)}")
    terms = [t for t in terms if t.norm > 1e-15]
    return HamiltonianSpec(tuple(terms), graph=g)


def _term(support: frozenset[int], matrix: np.ndarray) -> HamTerm:
    return HamTerm(frozenset(support), np.asarray(matrix, dtype=complex),
                   float(np.linalg.norm(matrix, 2)))


def exact_expectation(
    H: HamiltonianSpec,
    A: LocalOperator,
    rho,
    t: float,
    region: tuple[int, ...] | None = None,
    cap: int = DEFAULT_QUBIT_CAP + 6,
) -> float:
    """Tr[rho A(t)] by evolving the full region exactly.

    ``rho`` may be anything with a ``state_vector(region)`` method (pure
    product states evolve as vectors, cheap), anything with a
    ``marginal(region)`` method, or an explicit density matrix on region.
    """
    region = tuple(sorted(region if region is not None else H.vertices()))
    if not set(A.support) <= set(region):
        raise ValueError("region must contain the observable support")
    n = len(region)
    if n > cap:
        raise CapExceededError(f"region of {n} qubits exceeds cap {cap}")
    positions = [region.index(s) for s in A.support]
    if hasattr(rho, "state_vector"):
        psi = rho.state_vector(region)
        if t != 0.0:
            H_sp = hamiltonian_matrix(H, region, sparse=True)
            psi = expm_multiply(-1j * t * H_sp, psi)
        val = np.vdot(psi, apply_local(A.matrix, positions, psi, n))
    else:
        dm = rho.marginal(region) if hasattr(rho, "marginal") else np.asarray(rho, dtype=complex)
        U = evolution_unitary(H, region, t)
        A_emb = embed(A.matrix, A.support, region)
        val = np.trace(U.conj().T @ dm @ U @ A_emb)
    if abs(val.imag) > 1e-8 * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has stray imaginary part {val.imag:.2e}")
    return float(val.real)


@dataclass(frozen=True)
class QuasilocalReport:
    slack: tuple[float, ...]
    envelope_ok: bool
    kappa_ok: bool
    degree: int
    failures: tuple[int, ...]


def check_quasilocal(H: HamiltonianSpec, degree: int | None = None, tol: float = 1e-12) -> QuasilocalReport:
    """Per-term envelope slack h*exp(-kappa*|S|) - norm, plus the kappa condition.

    The decay rate must exceed 1 + log(degree) for the tail resummations to
    converge; degree defaults to the base graph's vertex degree.
    """
    if H.envelope is None:
        raise ValueError("Hamiltonian declares no quasilocal envelope")
    h, kappa = H.envelope
    if degree is None:
        if H.graph is not None:
            degree = max(len(n) for n in H.graph.vertex_adjacency().values())
        else:
            degree = H.coupling_degree()
    slack = tuple(h * math.exp(-kappa * len(t.support)) - t.norm for t in H.terms)
    failures = tuple(i for i, s in enumerate(slack) if s < -tol)
    kappa_ok = kappa > 1 + math.log(degree)
    return QuasilocalReport(slack, not failures, kappa_ok, degree, failures)
