"""Cluster-expansion simulator: planning, corrections, completeness, decay."""

import math
import warnings

import numpy as np
import pytest

from opgrowth.bounds import BoundParams
from opgrowth.errors import CapExceededError, ValidityWindowError
from opgrowth.lattice import build_square_lattice, tile_boxes
from opgrowth.operators import (
    HamTerm,
    HamiltonianSpec,
    PAULI,
    build_named_hamiltonian,
    embed,
    exact_expectation,
    heisenberg_evolve,
    pauli_operator,
)
from opgrowth.simulate import (
    ClusterTable,
    anchored_clusters,
    anchored_proper_subclusters,
    cluster_correction,
    operator_piece,
    plan,
    raw_cluster_expectation,
    simulate_expectation,
)
from opgrowth.states import ProductState

CHAIN6 = build_square_lattice(1, 6)
TFIM6 = build_named_hamiltonian("tfim", CHAIN6, {"J": 1.0, "g": 0.9})
ZERO = ProductState.all_zero()


def test_plan_formula_value():
    params = BoundParams(decay_rate=1.0, lr_velocity=1.0, sim_prefactor=1.0,
                         box_offset=0.0, dimension=1)
    # choose eps with log(2 c_d / eps) = 4, and t giving r = 4
    eps = 2 * math.exp(-4.0)
    p = plan(params, 1.0, eps, mode="paper-formula")
    assert p.r == 4
    assert p.m_star == int(27 * 4 / 4) + 27 + 1 == 55


def test_plan_large_epsilon_floor():
    params = BoundParams(decay_rate=1.0, lr_velocity=1.0, sim_prefactor=1.0,
                         box_offset=0.0, dimension=1)
    p = plan(params, 1.0, 10.0, mode="paper-formula")
    assert p.m_star == 27 + 1


def test_plan_desk_passthrough_and_errors():
    p = plan(None, 0.5, 1e-6, mode="desk", r=2, m_star=3)
    assert (p.r, p.m_star) == (2, 3)
    with pytest.raises(ValidityWindowError):
        plan(None, 0.5, -1.0, mode="desk", r=2, m_star=3)
    with pytest.raises(ValueError):
        plan(None, 0.5, 1e-6, mode="desk")


def test_plan_clamps_oversized_boxes():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p = plan(None, 0.5, 1e-6, mode="desk", graph=CHAIN6, r=50, m_star=2)
    assert p.r == 6
    assert any("clamp" in str(w.message) for w in caught)


def test_raw_cluster_rabi():
    g2 = build_square_lattice(1, 2)
    Hx = HamiltonianSpec((HamTerm(frozenset((0,)), PAULI["X"], 1.0),), graph=g2)
    tiling = tile_boxes(g2, 1, 0)
    val = raw_cluster_expectation(Hx, pauli_operator("Z", (0,)), ZERO, ((0,),), tiling, 0.7)
    assert val == pytest.approx(math.cos(1.4), abs=1e-10)
    assert val == pytest.approx(
        exact_expectation(Hx, pauli_operator("Z", (0,)), ZERO, 0.7, region=(0,)), abs=1e-12)


def test_raw_cluster_t0_is_marginal_expectation():
    tiling = tile_boxes(CHAIN6, 3, 0)
    val = raw_cluster_expectation(TFIM6, pauli_operator("Z", (0,)), ZERO, ((0,),), tiling, 0.0)
    assert val == pytest.approx(1.0)


def test_raw_cluster_constant_when_no_terms_inside():
    g4 = build_square_lattice(1, 4)
    # single term outside the anchor box keeps the observable frozen
    far = HamiltonianSpec((HamTerm(frozenset({2, 3}), np.kron(PAULI["Z"], PAULI["Z"]), 1.0),),
                          graph=g4)
    tiling = tile_boxes(g4, 2, 0)
    vals = {t: raw_cluster_expectation(far, pauli_operator("X", (0,)), ProductState.all_plus(range(4)),
                                       ((0,),), tiling, t) for t in (0.0, 0.5, 2.0)}
    assert all(v == pytest.approx(vals[0.0], abs=1e-12) for v in vals.values())


def test_raw_cluster_cap():
    tiling = tile_boxes(CHAIN6, 3, 0)
    with pytest.raises(CapExceededError):
        raw_cluster_expectation(TFIM6, pauli_operator("Z", (0,)), ZERO,
                                ((0,), (1,)), tiling, 0.1, cap=3)


def test_anchored_subclusters_restrict_to_connected():
    chain_boxes = tile_boxes(build_square_lattice(1, 6), 2, 0)
    adjacency = chain_boxes.adjacency
    anchor = (0,)
    # linear three-box cluster: the disconnected {b0, b2} subset is excluded
    subs = anchored_proper_subclusters(((0,), (1,), (2,)), adjacency, anchor)
    assert subs == [((0,),), ((0,), (1,))]


def test_cluster_correction_examples():
    adjacency = tile_boxes(build_square_lattice(1, 6), 2, 0).adjacency
    table = ClusterTable()
    table.raw[((0,),)] = 0.6
    table.corrected[((0,),)] = cluster_correction(table, ((0,),), adjacency, (0,))
    assert table.corrected[((0,),)] == 0.6  # singleton: corrected equals raw
    table.raw[((0,), (1,))] = 0.5
    table.corrected[((0,), (1,))] = cluster_correction(table, ((0,), (1,)), adjacency, (0,))
    assert table.corrected[((0,), (1,))] == pytest.approx(-0.1)
    table.raw[((0,), (1,), (2,))] = 0.45
    val = cluster_correction(table, ((0,), (1,), (2,)), adjacency, (0,))
    assert val == pytest.approx(0.45 - 0.6 - (-0.1))


def test_cluster_correction_missing_dependency():
    adjacency = tile_boxes(build_square_lattice(1, 6), 2, 0).adjacency
    table = ClusterTable()
    table.raw[((0,), (1,))] = 0.5
    with pytest.raises(RuntimeError):
        cluster_correction(table, ((0,), (1,)), adjacency, (0,))


def test_simulate_t0_exact():
    p = plan(None, 0.0, 1e-6, mode="desk", graph=CHAIN6, r=2, m_star=3)
    est, diag = simulate_expectation(TFIM6, pauli_operator("Z", (0,)), ZERO, 0.0, p)
    assert est == pytest.approx(1.0, abs=1e-10)
    assert all(abs(s) < 1e-10 for s in diag["level_sums"][1:])


def test_simulate_anchor_support_check():
    p = plan(None, 0.4, 1e-6, mode="desk", graph=CHAIN6, r=2, m_star=2)
    with pytest.raises(ValueError):
        simulate_expectation(TFIM6, pauli_operator("Z", (3,)), ZERO, 0.4, p)


def test_simulate_converges_to_exact():
    p = plan(None, 0.6, 1e-6, mode="desk", graph=CHAIN6, r=2, m_star=3)
    est, diag = simulate_expectation(TFIM6, pauli_operator("Z", (0,)), ZERO, 0.6, p)
    exact = exact_expectation(TFIM6, pauli_operator("Z", (0,)), ZERO, 0.6)
    errors = [abs(r - exact) for r in diag["running_estimates"]]
    assert errors[-1] < 1e-12  # m_star covers the whole chain
    assert errors[0] > errors[-1]


def test_simulate_anchor_only_hamiltonian():
    # all terms inside the anchor box: every larger cluster contributes zero
    g4 = build_square_lattice(1, 4)
    inner = HamiltonianSpec(
        (HamTerm(frozenset({0, 1}), np.kron(PAULI["Z"], PAULI["X"]), 1.0),), graph=g4)
    p = plan(None, 0.8, 1e-6, mode="desk", graph=g4, r=2, m_star=2)
    est, diag = simulate_expectation(inner, pauli_operator("Z", (0,)), ZERO, 0.8, p)
    tiling = p.tiling
    single = raw_cluster_expectation(inner, pauli_operator("Z", (0,)), ZERO,
                                     (tiling.anchor_box,), tiling, 0.8)
    assert est == pytest.approx(single, abs=1e-12)
    assert abs(diag["level_sums"][1]) < 1e-12


def test_simulate_2d_converges_to_oracle():
    # exercises diagonal coarse adjacency and 2d correction sums
    g = build_square_lattice(2, 3)
    H = build_named_hamiltonian("tfim", g, {"J": 1.0, "g": 0.8})
    A = pauli_operator("Z", (0,))
    p = plan(None, 0.5, 1e-6, mode="desk", graph=g, anchor_vertex=0, r=2, m_star=4)
    assert len(p.tiling.boxes) == 4
    est, diag = simulate_expectation(H, A, ZERO, 0.5, p)
    exact = exact_expectation(H, A, ZERO, 0.5)
    errors = [abs(r - exact) for r in diag["running_estimates"]]
    assert errors[-1] < 1e-10
    assert errors[0] > 1e-4  # level 1 alone is genuinely off


def test_simulate_2d_diagonal_cluster_contributes_zero():
    # boxes sharing only a corner are not coupled by nearest-neighbor terms
    g = build_square_lattice(2, 4)
    H = build_named_hamiltonian("tfim", g, {"J": 1.0, "g": 0.8})
    tiling = tile_boxes(g, 2, 0)
    A = pauli_operator("Z", (0,))
    diagonal = ((0, 0), (1, 1))
    piece = operator_piece(H, A, diagonal, tiling, 0.6)
    assert np.max(np.abs(piece.matrix)) <= 1e-12


def test_coarse_graph_enumeration_matches_brute_force():
    import itertools

    tiling = tile_boxes(build_square_lattice(2, 6), 2, 0)  # 3x3 boxes, degree 8
    adjacency = tiling.adjacency
    from opgrowth.lattice import enumerate_connected_subsets

    for m in range(1, 5):
        found = enumerate_connected_subsets(adjacency, (0, 0), m)
        brute = []
        for sub in itertools.combinations(sorted(adjacency), m):
            if (0, 0) not in sub:
                continue
            seen = {sub[0]}
            stack = [sub[0]]
            while stack:
                v = stack.pop()
                for u in adjacency[v]:
                    if u in sub and u not in seen:
                        seen.add(u)
                        stack.append(u)
            if len(seen) == m:
                brute.append(tuple(sorted(sub)))
        assert found == sorted(brute)


def test_simulate_thread_determinism():
    p = plan(None, 0.7, 1e-6, mode="desk", graph=CHAIN6, r=1, m_star=4)
    A = pauli_operator("Z", (0,))
    est1, diag1 = simulate_expectation(TFIM6, A, ZERO, 0.7, p, threads=1)
    est4, diag4 = simulate_expectation(TFIM6, A, ZERO, 0.7, p, threads=4)
    assert est1 == est4  # bit identical
    assert diag1["table"].raw == diag4["table"].raw
    assert diag1["table"].corrected == diag4["table"].corrected


def test_operator_piece_base_case_and_t0():
    tiling = tile_boxes(CHAIN6, 3, 0)
    A = pauli_operator("Z", (0,))
    base = operator_piece(TFIM6, A, ((0,),), tiling, 0.5)
    direct = heisenberg_evolve(TFIM6, A, 0.5, tiling.box_vertices[(0,)], shrink=False)
    assert np.allclose(base.matrix, embed(direct.matrix, direct.support, base.support),
                       atol=1e-12)
    two_box = operator_piece(TFIM6, A, ((0,), (1,)), tiling, 0.0)
    assert np.max(np.abs(two_box.matrix)) <= 1e-12


def test_operator_piece_completeness_three_boxes():
    # r=2 on six sites: sizes 1, 2, 3 evolve in genuinely different regions
    tiling = tile_boxes(CHAIN6, 2, 0)
    A = pauli_operator("Z", (0,))
    region = tuple(range(6))
    for t in (0.4, 1.0):
        full = heisenberg_evolve(TFIM6, A, t, region, shrink=False).matrix
        total = np.zeros_like(full)
        memo = {}
        for cluster in anchored_clusters(tiling, 3):
            piece = operator_piece(TFIM6, A, cluster, tiling, t, _memo=memo)
            total += embed(piece.matrix, piece.support, region)
        assert np.linalg.norm(total - full, 2) <= 1e-10


def test_operator_piece_norm_decays_with_cluster_size():
    tiling = tile_boxes(CHAIN6, 1, 0)
    A = pauli_operator("Z", (0,))
    t = 0.35
    memo = {}
    norms = []
    for m in range(1, 6):
        cluster = tuple((k,) for k in range(m))
        piece = operator_piece(TFIM6, A, cluster, tiling, t, _memo=memo)
        norms.append(float(np.linalg.norm(piece.matrix, 2)))
    assert all(a > b for a, b in zip(norms[1:], norms[2:]))  # decreasing beyond level 2
    logs = np.log(norms[1:])
    slope = np.polyfit(range(len(logs)), logs, 1)[0]
    assert slope < 0


def test_operator_piece_validation():
    tiling = tile_boxes(CHAIN6, 2, 0)
    A = pauli_operator("Z", (0,))
    with pytest.raises(ValueError):
        operator_piece(TFIM6, A, ((1,),), tiling, 0.1)  # anchor missing
    with pytest.raises(ValueError):
        operator_piece(TFIM6, A, ((0,), (2,)), tiling, 0.1)  # disconnected


def test_truncation_error_monotone_above_float_floor():
    g10 = build_square_lattice(1, 10)
    H10 = build_named_hamiltonian("tfim", g10, {"J": 1.0, "g": 1.1})
    A = pauli_operator("Z", (0,))
    p = plan(None, 0.8, 1e-6, mode="desk", graph=g10, r=2, m_star=5)
    _, diag = simulate_expectation(H10, A, ZERO, 0.8, p)
    exact = exact_expectation(H10, A, ZERO, 0.8)
    floor = 1e-13
    errors = [max(abs(est - exact), floor) for est in diag["running_estimates"]]
    assert all(a >= b for a, b in zip(errors[1:], errors[2:]))


def test_local_operator_q_in_type():
    # q = 3 operators are representable even though no constructor ships them
    from opgrowth.operators import LocalOperator

    qutrit = LocalOperator((0,), np.eye(3), q=3)
    assert qutrit.matrix.shape == (3, 3)
    with pytest.raises(ValueError):
        LocalOperator((0,), np.eye(3))  # defaults to q=2


def test_truncation_bound_reported_when_params_given():
    params = BoundParams(decay_rate=1.0, lr_velocity=1.0, sim_prefactor=1.0,
                         sim_decay=1.0, box_offset=1e-9, dimension=1)
    p = plan(None, 0.5, 1e-6, mode="desk", graph=CHAIN6, r=2, m_star=2)
    _, diag = simulate_expectation(TFIM6, pauli_operator("Z", (0,)), ZERO, 0.5, p,
                                   params=params)
    assert diag["truncation_bound"] is not None and diag["truncation_bound"] > 0
