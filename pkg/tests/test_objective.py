import csv
import math

import numpy as np
import pytest

from cvse import numeric as nm
from cvse.errors import InsufficientBatchError, ParameterError
from cvse.model import ForwardOutput
from cvse.objective import (LossLog, LossWeights, combine, kl_concept_alignment, loss_terms,
                            total_loss, triplet_ranking)
from oracles import finite_difference, kl_loop, relative_error, triplet_hardest_loop, triplet_sum_loop


def unit(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def pair_with_sims(s11, s12, s21, s22):
    """v = I, t columns chosen so that v_i . t_j = s_ij."""
    return np.eye(2), np.array([[s11, s21], [s12, s22]])


def test_margin_satisfied_term_is_zero():
    v, t = pair_with_sims(0.9, 0.5, 0.0, 1.0)
    S = v @ t.T
    assert S[0, 1] == 0.5
    # every violation is zero here, including the text-anchor side
    assert triplet_ranking(v, t, 0.2, "sum") == 0.0


def test_margin_violated_term():
    v, t = pair_with_sims(0.5, 0.6, 0.0, 1.0)
    # image 1 vs text 2: 0.2 - 0.5 + 0.6 = 0.3; text 2 vs image 1 (S21=0 vs S22=1): 0
    # text 1 vs image 2 (S21=0): 0.2 - 0.5 + 0 = 0; image 2 vs text 1 (S21 - S22): 0
    assert triplet_ranking(v, t, 0.2, "sum") == pytest.approx(0.3, abs=1e-15)
    assert triplet_ranking(v, t, 0.2, "hardest") == pytest.approx(0.3, abs=1e-15)


def test_sum_matches_brute_force_on_random_batches():
    rng = np.random.default_rng(0)
    for _ in range(10):
        v, t = unit(rng.normal(size=(4, 6))), unit(rng.normal(size=(4, 6)))
        assert abs(triplet_ranking(v, t, 0.2, "sum") - triplet_sum_loop(v, t, 0.2)) <= 1e-10
        assert abs(triplet_ranking(v, t, 0.2, "hardest") - triplet_hardest_loop(v, t, 0.2)) <= 1e-10


def test_triplet_zero_when_separated_and_errors():
    v = np.eye(3)
    assert triplet_ranking(v, v, 0.2) == 0.0
    with pytest.raises(InsufficientBatchError):
        triplet_ranking(v[:1], v[:1])
    with pytest.raises(ParameterError):
        triplet_ranking(v, v, mode="mean")


def test_kl_examples():
    p = np.array([[0.2, 0.3, 0.5]])
    assert kl_concept_alignment(p, p) == 0.0
    assert kl_concept_alignment(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]])) == \
        pytest.approx(math.log(2), abs=1e-15)


def test_kl_nonnegative_and_asymmetric():
    rng = np.random.default_rng(1)
    asym = 0
    for _ in range(100):
        p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
        kl = kl_concept_alignment(p[None], q[None])
        assert kl >= 0
        assert abs(kl - kl_loop(p, q)) < 1e-12
        asym += abs(kl - kl_concept_alignment(q[None], p[None])) > 1e-9
    assert asym == 100


def test_kl_clamps_zero_target_mass():
    kl = kl_concept_alignment(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]))
    assert math.isfinite(kl) and kl == pytest.approx(0.5 * math.log(0.5) + 0.5 * math.log(0.5 / 1e-12))


def test_weighted_sum_arithmetic():
    terms = {"L_F": 0.1, "L_I": 0.2, "L_C": 0.3, "D_KL": 0.05}
    assert combine(terms, LossWeights(3, 5, 1, 2)) == pytest.approx(1.7, abs=1e-15)


def _fake_output(rng, B=4, d=5, q=6):
    vs = [unit(rng.normal(size=(B, d))) for _ in range(6)]
    a_v, a_t = rng.dirichlet(np.ones(q), B), rng.dirichlet(np.ones(q), B)
    return ForwardOutput(*vs, a_v, a_t)


def test_kl_only_matched_scores_is_zero():
    out = _fake_output(np.random.default_rng(2))
    out.a_t = out.a_v
    total, _ = total_loss(out, LossWeights(0, 0, 0, 2))
    assert total == 0.0


def test_total_equals_independent_terms():
    out = _fake_output(np.random.default_rng(3))
    total, parts = total_loss(out, LossWeights(), "sum")
    ref = (3 * triplet_sum_loop(out.v_fused, out.t_fused, 0.2)
           + 5 * triplet_sum_loop(out.v_inst, out.t_inst, 0.2)
           + 1 * triplet_sum_loop(out.v_cons, out.t_cons, 0.2)
           + 2 * sum(kl_loop(p, q) for p, q in zip(out.a_t, out.a_v)))
    assert abs(total - ref) < 1e-12 and parts["total"] == float(total)
    assert set(loss_terms(out)) == {"L_F", "L_I", "L_C", "D_KL"}


def test_weights_validation():
    with pytest.raises(ParameterError):
        LossWeights(-1, 5, 1, 2)
    with pytest.raises(ParameterError):
        LossWeights(margin=0)


def test_loss_log(tmp_path):
    log = LossLog(tmp_path / "log.csv")
    log.append(1, {"L_F": 1, "L_I": 2, "L_C": 3, "D_KL": 4, "total": 10})
    log.append(2, {"L_F": 0.5, "L_I": 2, "L_C": 3, "D_KL": 4, "total": 9.5})
    rows = list(csv.reader(open(tmp_path / "log.csv")))
    assert rows[0] == ["step", "L_F", "L_I", "L_C", "D_KL", "total"]
    assert len(rows) == 3 and rows[2][0] == "2"


def test_triplet_gradient():
    rng = np.random.default_rng(4)
    v, t = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    for mode in ("sum", "hardest"):
        tape = nm.Tape()
        vv, tv = tape.watch(v), tape.watch(t)
        gv, gt = tape.gradient(triplet_ranking(vv, tv, 0.5, mode), [vv, tv])
        num = finite_difference(lambda: float(triplet_ranking(v, t, 0.5, mode)), {"v": v, "t": t})
        assert relative_error(gv, num["v"]) < 1e-6 and relative_error(gt, num["t"]) < 1e-6
