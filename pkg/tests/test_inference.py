import math

import numpy as np
import pytest

from geoquant import inference
from geoquant.core import QuantileIndex, gradient
from geoquant.errors import ConditioningError, DomainError, HypothesisError
from geoquant.measure import UniformDisk, from_points, sample, transform
from geoquant.regularizer import Regularizer
from geoquant.solver import quantile

CROSS = from_points([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
MEDIAN = QuantileIndex(0.0, [1.0, 0.0])


def _naive_sandwich(m, reg, idx, q):
    d = m.dim
    A, B = np.zeros((d, d)), np.zeros((d, d))
    for z, w in zip(m.atoms, m.weights):
        x = z - q
        rho = np.linalg.norm(x)
        if rho == 0:
            continue
        P = np.outer(x, x) / rho**2
        A += w * (float(reg.rprime(rho)) * P + float(reg.r(rho)) / rho * (np.eye(d) - P))
        s = float(reg.r(rho)) * -x / rho - idx.vector
        B += w * np.outer(s, s)
    return A, B


def test_cross_sandwich_closed_forms():
    # r'(1) = 1/4 and r(1) = 3/4 for beta = 2
    est = inference.sandwich(CROSS, Regularizer.power(2), MEDIAN, [0.0, 0.0])
    np.testing.assert_allclose(est.A, 0.5 * np.eye(2), atol=1e-15)
    # r(1) = 1/2 for beta = 1
    est = inference.sandwich(CROSS, Regularizer.power(1), MEDIAN, [0.0, 0.0])
    np.testing.assert_allclose(est.B, np.eye(2) / 8, atol=1e-15)
    np.testing.assert_allclose(est.Sigma, np.linalg.inv(est.A) @ est.B @ np.linalg.inv(est.A),
                               rtol=1e-12)


@pytest.mark.parametrize("reg", [Regularizer.power(2), Regularizer.smoothstep(1.5), Regularizer.geometric()],
                         ids=str)
def test_sandwich_matches_hand_sums(reg, rng):
    m = from_points(rng.normal(size=(40, 2)), rng.uniform(1, 2, 40))
    idx = QuantileIndex.at_angle(0.3, 2.0)
    q = quantile(m, reg, idx).point
    est = inference.sandwich(m, reg, idx, q)
    A, B = _naive_sandwich(m, reg, idx, q)
    np.testing.assert_allclose(est.A, A, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(est.B, B, rtol=1e-12, atol=1e-14)


def test_sandwich_is_equivariant(rng):
    m = from_points(rng.normal(size=(50, 2)))
    reg = Regularizer.power(2)
    idx = QuantileIndex.at_angle(0.4, 0.7)
    c, s = math.cos(0.9), math.sin(0.9)
    O = np.array([[c, -s], [s, c]])
    b = np.array([2.0, -1.0])
    q = quantile(m, reg, idx).point
    Sigma = inference.sandwich(m, reg, idx, q).Sigma
    mt = transform(m, O, b)
    idx_t = QuantileIndex(idx.alpha, O @ idx.u)
    qt = quantile(mt, reg, idx_t).point
    np.testing.assert_allclose(qt, O @ q + b, atol=1e-9)
    Sigma_t = inference.sandwich(mt, reg, idx_t, qt).Sigma
    np.testing.assert_allclose(Sigma_t, O @ Sigma @ O.T, atol=1e-10)


def test_hypothesis_gates():
    line = from_points([[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(HypothesisError, match=r"\(i\) and \(ii\)"):
        inference.sandwich(line, Regularizer.geometric(), MEDIAN, [0.0, 0.0])
    # strictly increasing r rescues the line-supported case
    inference.sandwich(line, Regularizer.power(2), MEDIAN, [0.0, 0.0])
    with pytest.raises(HypothesisError, match=r"\(i\) and \(ii\)"):
        inference.sandwich(from_points([[1.0, 2.0]]), Regularizer.power(2), MEDIAN, [1.0, 2.0],
                           check_quantile=False)
    heavy = from_points([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], [5, 1, 1, 1])
    with pytest.raises(HypothesisError, match=r"\(iii\) and \(iv\)"):
        inference.sandwich(heavy, Regularizer.geometric(), MEDIAN, [0.0, 0.0])
    # r(0) = r'(0) = 0 allows a quantile on an atom
    inference.sandwich(heavy, Regularizer.smoothstep(1.0), MEDIAN, [0.0, 0.0], check_quantile=False)


def test_sandwich_rejects_non_quantile_and_ill_conditioned(monkeypatch):
    with pytest.raises(DomainError):
        inference.sandwich(CROSS, Regularizer.power(2), MEDIAN, [0.3, 0.0])
    m = from_points([[0.0, 0.0], [10.0, 0.0], [0.0, 1.0]])
    inference.sandwich(m, Regularizer.power(2), MEDIAN, [3.0, 3.0], check_quantile=False)
    monkeypatch.setattr(inference, "MAX_CONDITION", 1.0)
    with pytest.raises(ConditioningError):
        inference.sandwich(m, Regularizer.power(2), MEDIAN, [3.0, 3.0], check_quantile=False)


def test_stability_gap(triangle):
    idx = QuantileIndex.at_angle(0.5, 1.0)
    p2 = Regularizer.power(2)
    gap = inference.stability_gap(triangle, p2, p2, idx)
    assert gap.flag == "undefined" and gap.sq_dist == 0.0 and math.isnan(gap.ratio)
    sq, l1, ratio = inference.stability_gap(triangle, p2, Regularizer.power(2.1), idx)
    # (1+s)^-2 dominates (1+s)^-2.1, so the L1 gap is 1 - 1/1.1
    assert l1 == pytest.approx(1 - 1 / 1.1, rel=1e-8)
    assert 0 < sq and ratio == pytest.approx(sq / l1)
    # 1 - r = (1+s)^-1 is not integrable
    gap = inference.stability_gap(triangle, Regularizer.power(1), Regularizer.geometric(), idx)
    assert gap.flag == "infinite-l1" and gap.ratio == 0.0
    with pytest.raises(HypothesisError):
        inference.stability_gap(triangle, Regularizer.geometric(), p2, idx)
    with pytest.raises(HypothesisError):
        inference.stability_gap(triangle, Regularizer.smoothstep(1), p2, idx)


def test_small_clt_run():
    g = UniformDisk(1.0)
    idx = QuantileIndex.at_angle(0.3, 0.5)
    rep = inference.clt_experiment(g, Regularizer.power(2), idx, n=200, reps=200, seed=3,
                                   oracle_n=50_000)
    assert rep.valid and rep.failures == 0
    assert 0.88 <= rep.coverage95 <= 0.99
    assert rep.cov_rel_error < 0.35
    assert set(rep.to_json()) >= {"coverage95", "Sigma0", "failures"}
    again = inference.clt_experiment(g, Regularizer.power(2), idx, n=200, reps=200, seed=3,
                                     oracle_n=50_000, threads=4)
    assert again.coverage95 == rep.coverage95
    with pytest.raises(DomainError):
        inference.clt_experiment(g, Regularizer.power(2), idx, n=200, reps=50, seed=3)


def test_consistency_slope():
    curve = inference.consistency_curve(UniformDisk(1.0), Regularizer.power(2), MEDIAN,
                                        [100, 400, 1600], reps=60, seed=1, oracle_n=100_000)
    assert curve.valid
    assert -0.7 <= curve.slope <= -0.3
    with pytest.raises(DomainError):
        inference.consistency_curve(UniformDisk(1.0), Regularizer.power(2), MEDIAN, [100], 10, 1)


@pytest.mark.slow
def test_bahadur_remainder_is_small():
    # the linearisation -A^-1 grad(q0) should explain most of q_hat - q0
    g = UniformDisk(1.0)
    reg = Regularizer.power(2)
    idx = QuantileIndex.at_angle(0.4, 1.2)
    orc = inference.population_oracle(g, reg, idx, oracle_n=200_000)
    big = sample(g, 200_000, inference.ORACLE_SEED)
    A = inference.sandwich(big, reg, idx, orc.q0).A
    n = 2000
    ratios = []
    for seed in range(20):
        m = sample(g, n, 1000 + seed)
        qn = quantile(m, reg, idx).point
        lin = -np.linalg.solve(A, gradient(m, reg, idx, orc.q0))
        rem = math.sqrt(n) * np.linalg.norm(qn - orc.q0 - lin)
        ratios.append(rem / (math.sqrt(n) * np.linalg.norm(qn - orc.q0)))
    assert np.median(ratios) < 0.2
