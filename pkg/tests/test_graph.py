import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvse import numeric as nm
from cvse.errors import ParameterError, ShapeError
from cvse.graph import (binarize, build_graph, conditional_probability, confidence_scale,
                        count_cooccurrence, gcn_forward, init_gcn_params, normalize_adjacency)
from oracles import cs_mp, finite_difference, relative_error


def test_counts_example():
    E, N = count_cooccurrence([[1, 1, 0], [1, 0, 0]])
    assert N.tolist() == [2, 1, 0]
    assert E[0, 1] == 1 and E[1, 0] == 1
    assert np.array_equal(np.diag(E), N)


def test_counts_all_zero_label():
    E, N = count_cooccurrence([[0, 0, 0]])
    assert not E.any() and not N.any()


def test_counts_symmetric():
    L = np.random.default_rng(0).integers(0, 2, (30, 7))
    E, _ = count_cooccurrence(L)
    assert np.array_equal(E, E.T)


def test_conditional_probability_examples():
    assert conditional_probability([[8, 4], [4, 5]], [8, 5])[0, 1] == 0.5
    P = conditional_probability([[0, 0], [0, 3]], [0, 3])
    assert P[0].tolist() == [0.0, 0.0]


def test_conditional_probability_asymmetry_three_concepts():
    # concept 0 in 4 records, concept 1 in 2, both together in 2
    L = [[1, 1, 0], [1, 1, 0], [1, 0, 1], [1, 0, 0]]
    E, N = count_cooccurrence(L)
    P = conditional_probability(E, N)
    assert P[0, 1] == 2 / 4 and P[1, 0] == 2 / 2
    Pc = conditional_probability(E, N, "column")
    assert np.array_equal(Pc, P.T)
    with pytest.raises(ParameterError):
        conditional_probability(E, N, "diagonal")


def test_confidence_scale_values():
    for s, u in ((5, 0.02), (1.5, 0.3), (30, 0.0)):
        assert confidence_scale(np.zeros(3), s, u).tolist() == [0.0, 0.0, 0.0]
    b = confidence_scale(np.array([0.3, 0.6]), 5, 0.02)
    assert abs(b[0] - float(cs_mp("0.3"))) < 1e-12
    assert abs(b[0] - 0.60101) < 1e-4
    assert b[1] > b[0]
    with pytest.raises(ParameterError):
        confidence_scale(np.zeros(2), 1.0, 0.02)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1.01, 50), st.floats(0, 0.5))
def test_confidence_scale_monotone(p1, p2, s, u):
    lo, hi = sorted((p1, p2))
    b = confidence_scale(np.array([0.0, lo, hi]), s, u)
    assert b[0] == 0.0
    assert b[1] <= b[2]


def test_binarize_threshold_inclusive():
    assert binarize(np.array([0.2999, 0.3]), 0.3).tolist() == [0.0, 1.0]
    assert not binarize(np.zeros((3, 3))).any()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 16 - 1), st.floats(0.01, 1.0))
def test_binarize_idempotent(bits, eps):
    B = np.array([(bits >> k) & 1 for k in range(16)], float).reshape(4, 4)
    G = binarize(B, eps)
    assert np.array_equal(binarize(G, eps), G)


def test_normalize_examples():
    assert np.allclose(normalize_adjacency([[0, 1], [1, 0]]), 0.5, rtol=0, atol=1e-15)
    assert np.array_equal(normalize_adjacency(np.zeros((3, 3))), np.eye(3))


def test_normalize_matches_formula_oracle():
    rng = np.random.default_rng(1)
    G = rng.integers(0, 2, (5, 5)).astype(float)
    A = normalize_adjacency(G)
    Gp = [[max(G[i][j], G[j][i]) if i != j else 1.0 for j in range(5)] for i in range(5)]
    deg = [sum(row) for row in Gp]
    ref = [[Gp[i][j] / math.sqrt(deg[i] * deg[j]) for j in range(5)] for i in range(5)]
    assert np.max(np.abs(A - np.array(ref))) < 1e-12
    assert np.array_equal(A, A.T)


def test_spectral_radius_at_most_one():
    rng = np.random.default_rng(2)
    for _ in range(20):
        A = normalize_adjacency(rng.integers(0, 2, (8, 8)))
        x = rng.normal(size=8)
        for _ in range(200):
            x = A @ x
            x /= np.linalg.norm(x)
        assert np.linalg.norm(A @ x) <= 1 + 1e-9


def test_build_graph_stages_and_denominator_flag():
    L = np.random.default_rng(3).integers(0, 2, (12, 5))
    g = build_graph(L)
    assert set(g.stages) == {"E", "N", "P", "B", "G", "A_norm"}
    assert g.stages["N"].shape == (1, 5)
    g2 = build_graph(L, denominator="column")
    assert np.allclose(g2.P, g.P.T)


# --------------------------------------------------------------------- GCN

def test_gcn_identity_propagation():
    Y = np.abs(np.random.default_rng(4).normal(size=(4, 3)))
    W0 = np.hstack([np.eye(3), np.zeros((3, 2))])     # 3 -> 5 embedding
    W1 = np.eye(5)
    Z = gcn_forward(Y, np.eye(4), [W0, W1])
    assert np.array_equal(Z[:, :3], Y) and not Z[:, 3:].any()


def test_gcn_single_node_is_mlp():
    rng = np.random.default_rng(5)
    Y, W0, W1 = rng.normal(size=(1, 6)), rng.normal(size=(6, 4)), rng.normal(size=(4, 3))
    relu = lambda x: np.maximum(x, 0)
    assert np.allclose(gcn_forward(Y, np.ones((1, 1)), [W0, W1]), relu(relu(Y @ W0) @ W1),
                       rtol=0, atol=1e-14)
    assert np.allclose(gcn_forward(Y, np.ones((1, 1)), [W0, W1], final_activation=False),
                       relu(Y @ W0) @ W1, rtol=0, atol=1e-14)


def test_gcn_locality_under_component_permutation():
    rng = np.random.default_rng(6)
    G = np.zeros((6, 6))
    G[0, 1] = G[1, 2] = 1          # component {0, 1, 2}
    G[3, 4] = G[4, 5] = 1          # component {3, 4, 5}
    Y = rng.normal(size=(6, 4))
    Ws = list(init_gcn_params([4, 5, 3], rng).values())
    Z = gcn_forward(Y, normalize_adjacency(G), Ws)
    perm = np.array([2, 1, 0, 3, 4, 5])
    Gp = G[np.ix_(perm, perm)]
    Zp = gcn_forward(Y[perm], normalize_adjacency(Gp), Ws)
    assert np.allclose(Zp, Z[perm], atol=1e-12)
    assert np.array_equal(Zp[3:], Z[3:])


def test_gcn_dimension_chain_error():
    with pytest.raises(ShapeError):
        gcn_forward(np.ones((2, 3)), np.eye(2), [np.ones((4, 2))])


def test_gcn_gradcheck():
    rng = np.random.default_rng(7)
    Y = rng.normal(size=(5, 4))
    A = normalize_adjacency(rng.integers(0, 2, (5, 5)))
    params = init_gcn_params([4, 6, 3], rng)
    target = rng.normal(size=(5, 3))

    def loss(p):
        Z = gcn_forward(Y, A, [p["gcn.W0"], p["gcn.W1"]])
        return ((Z - target) ** 2).sum()

    tape = nm.Tape()
    tracked = nm.watch_all(tape, params)
    grads = tape.gradient(loss(tracked), tracked)
    num = finite_difference(lambda: float(loss(params)), params)
    for k in params:
        assert relative_error(grads[k], num[k]) < 1e-4
