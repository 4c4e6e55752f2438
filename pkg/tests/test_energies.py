import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from permqp.core import EnergySpec, eval_energy, stack
from permqp.energies import (
    MetricData,
    UserConstraints,
    coarse_to_fine_terms,
    descriptor_linear_term,
    fried_energy,
    fried_scale,
    gaussian_energy,
    graph_matching_energy,
    gw_energy,
    log_gw_energy,
)


def random_metric(rng, m):
    pts = rng.standard_normal((m, 3))
    return squareform(pdist(pts))


def dense_of(e: EnergySpec) -> np.ndarray:
    d = e.dim
    W = np.empty((d, d))
    for i in range(d):
        u = np.zeros(d)
        u[i] = 1.0
        W[:, i] = e.quadratic.matvec(u)
    return W


def pair_penalty_matrix(S, T, penalty):
    k, n = S.shape[0], T.shape[0]
    W = np.empty((k * n, k * n))
    for j in range(n):
        for i in range(k):
            for l in range(n):
                for m_ in range(k):
                    W[j * k + i, l * k + m_] = penalty(S[i, m_], T[j, l])
    return W


def test_gw_operator_matches_entrywise_construction():
    rng = np.random.default_rng(0)
    m = MetricData(random_metric(rng, 3), random_metric(rng, 4))
    e = gw_energy(m)
    W = dense_of(e)
    ref = pair_penalty_matrix(m.d_source, m.d_target, lambda u, v: (u - v) ** 2)
    assert np.abs(W - ref).max() < 1e-10


def test_gw_energy_zero_on_exact_isometry():
    rng = np.random.default_rng(1)
    D = random_metric(rng, 5)
    perm = rng.permutation(5)
    m = MetricData(D[np.ix_(perm, perm)], D)
    e = gw_energy(m)
    P = np.zeros((5, 5))
    P[np.arange(5), perm] = 1.0
    assert eval_energy(e, stack(P)) == pytest.approx(0.0, abs=1e-12)


def test_log_gw_operator_matches_entrywise_construction():
    rng = np.random.default_rng(2)
    m = MetricData(random_metric(rng, 4), random_metric(rng, 4))
    e = log_gw_energy(m)
    top = max(m.d_source.max(), m.d_target.max())
    floor = 1e-6 * top

    def pen(u, v):
        return (np.log(max(u, floor)) - np.log(max(v, floor))) ** 2

    ref = pair_penalty_matrix(m.d_source, m.d_target, pen)
    assert np.abs(dense_of(e) - ref).max() < 1e-10


def test_log_gw_scale_invariant_on_matchings():
    # log(au/av)^2 = log(u/v)^2: scaling either metric leaves energies of
    # genuine matchings unchanged
    rng = np.random.default_rng(3)
    D = random_metric(rng, 5)
    E = random_metric(rng, 5)
    e1 = log_gw_energy(MetricData(D, E))
    e2 = log_gw_energy(MetricData(3.0 * D, E))
    for _ in range(5):
        P = np.zeros((5, 5))
        P[np.arange(5), rng.permutation(5)] = 1.0
        x = stack(P)
        ref_pen = 0.0
        perm = P.argmax(axis=1)
        for i in range(5):
            for j in range(5):
                if i != j:
                    ref_pen += np.log(D[i, j] / E[perm[i], perm[j]]) ** 2
        assert eval_energy(e1, x) == pytest.approx(ref_pen, rel=1e-9)
        scaled = eval_energy(e2, x)
        expect = sum(
            np.log(3.0 * D[i, j] / E[perm[i], perm[j]]) ** 2
            for i in range(5)
            for j in range(5)
            if i != j
        )
        assert scaled == pytest.approx(expect, rel=1e-9)


def test_log_gw_all_zero_metric_rejected():
    m = MetricData(np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        log_gw_energy(m)


def test_gaussian_energy_dense_entries_and_sign():
    rng = np.random.default_rng(4)
    m = MetricData(random_metric(rng, 3), random_metric(rng, 3))
    sigma = 0.37
    e = gaussian_energy(m, sigma=sigma)
    W = e.quadratic.dense()
    ref = pair_penalty_matrix(
        m.d_source, m.d_target, lambda u, v: -np.exp(-((u - v) ** 2) / sigma**2)
    )
    assert np.abs(W - ref).max() < 1e-12
    assert W.max() < 0  # pure reward: every coefficient negative


def test_gaussian_energy_guards():
    rng = np.random.default_rng(5)
    m = MetricData(random_metric(rng, 3), random_metric(rng, 3))
    with pytest.raises(ValueError):
        gaussian_energy(m, sigma=0.0)
    big = MetricData(random_metric(rng, 70), random_metric(rng, 70))
    with pytest.raises(ValueError):
        gaussian_energy(big)


def test_graph_matching_energy_is_squared_residual():
    rng = np.random.default_rng(6)
    k, n = 4, 5
    A = rng.standard_normal((k, k))
    B = rng.standard_normal((n, n))
    e = graph_matching_energy(A, B)
    for _ in range(10):
        X = rng.standard_normal((k, n))
        val = eval_energy(e, stack(X))
        ref = np.linalg.norm(A @ X - X @ B) ** 2
        assert val == pytest.approx(ref, rel=1e-12)
    W = dense_of(e)
    assert np.abs(W - W.T).max() < 1e-12
    assert np.linalg.eigvalsh(W).min() > -1e-10  # PSD by construction


def test_graph_matching_zero_for_conjugate_graphs():
    rng = np.random.default_rng(7)
    n = 5
    B = rng.standard_normal((n, n))
    perm = rng.permutation(n)
    P = np.zeros((n, n))
    P[np.arange(n), perm] = 1.0
    A = P @ B @ P.T
    e = graph_matching_energy(A, B)
    assert eval_energy(e, stack(P)) == pytest.approx(0.0, abs=1e-16)


def test_fried_scale_equalizes_offdiagonal_means():
    rng = np.random.default_rng(8)
    S = random_metric(rng, 6)
    T = random_metric(rng, 6)
    c = fried_scale(S, T)
    off = ~np.eye(6, dtype=bool)
    assert (c * S)[off].mean() == pytest.approx(T[off].mean(), rel=1e-12)


def test_fried_energy_entries_and_scale_invariance():
    rng = np.random.default_rng(9)
    S = random_metric(rng, 3)
    T = random_metric(rng, 4)
    e = fried_energy(S, T)
    c = fried_scale(S, T)
    ref = pair_penalty_matrix(S, T, lambda u, v: abs(c * u - v))
    assert np.abs(e.quadratic.dense() - ref).max() < 1e-12
    # rescaling the item metric leaves the energy unchanged (c* absorbs it)
    e2 = fried_energy(5.0 * S, T)
    assert np.abs(e.quadratic.dense() - e2.quadratic.dense()).max() < 1e-12


def test_fried_energy_rejects_zero_metric():
    with pytest.raises(ValueError):
        fried_energy(np.zeros((3, 3)), np.ones((3, 3)) - np.eye(3))


def test_metric_validation():
    ok = np.array([[0.0, 1.0], [1.0, 0.0]])
    MetricData(ok, ok)
    with pytest.raises(ValueError):
        MetricData(np.array([[0.0, 1.0], [2.0, 0.0]]), ok)  # asymmetric
    with pytest.raises(ValueError):
        MetricData(np.array([[1.0, 1.0], [1.0, 0.0]]), ok)  # nonzero diagonal
    with pytest.raises(ValueError):
        MetricData(-ok, ok)  # negative
    with pytest.raises(ValueError):
        MetricData(np.zeros((2, 3)), ok)  # not square
    bad = ok.copy()
    bad[0, 1] = bad[1, 0] = np.nan
    with pytest.raises(ValueError):
        MetricData(bad, ok)


def test_user_constraints_reject_repeats():
    UserConstraints(((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        UserConstraints(((0, 1), (0, 2)))
    with pytest.raises(ValueError):
        UserConstraints(((0, 1), (1, 1)))


def test_coarse_to_fine_no_pins_returns_base():
    rng = np.random.default_rng(10)
    m = MetricData(random_metric(rng, 4), random_metric(rng, 4))
    base = gw_energy(m)
    out = coarse_to_fine_terms(m, UserConstraints(()), base)
    assert out is base


def test_coarse_to_fine_rewards_the_pin():
    rng = np.random.default_rng(11)
    m = MetricData(random_metric(rng, 4), random_metric(rng, 4))
    base = gw_energy(m)
    pinned = coarse_to_fine_terms(
        m, UserConstraints(((1, 2),), weight=2.0), base, rng=rng
    )
    c = pinned.c.reshape((4, 4), order="F")
    # reward lands on the pinned cell; the distance-consistency charge is
    # nonnegative everywhere
    top = max(m.d_source.max(), m.d_target.max())
    LS = np.log(np.maximum(m.d_source, 1e-6 * top))
    LT = np.log(np.maximum(m.d_target, 1e-6 * top))
    expect = (LS[1][:, None] - LT[2][None, :]) ** 2
    expect[1, 2] -= 1.0
    assert np.abs(c - 2.0 * expect).max() < 1e-12
    # quadratic part untouched
    x = rng.standard_normal(16)
    assert pinned.quadratic.quad(x) == pytest.approx(base.quadratic.quad(x))


def test_coarse_to_fine_default_weight_uses_restricted_spectrum():
    rng = np.random.default_rng(12)
    m = MetricData(random_metric(rng, 4), random_metric(rng, 4))
    base = gw_energy(m)
    pinned = coarse_to_fine_terms(m, UserConstraints(((0, 0),)), base, rng=0)
    manual = coarse_to_fine_terms(m, UserConstraints(((0, 0),), weight=1.0), base)
    ratio = pinned.c[np.abs(manual.c) > 1e-12] / manual.c[np.abs(manual.c) > 1e-12]
    assert ratio.std() < 1e-9  # single uniform scale
    assert ratio.mean() > 0


def test_coarse_to_fine_validates_ranges():
    rng = np.random.default_rng(13)
    m = MetricData(random_metric(rng, 3), random_metric(rng, 4))
    base = gw_energy(m)
    with pytest.raises(ValueError):
        coarse_to_fine_terms(m, UserConstraints(((3, 0),), weight=1.0), base)
    with pytest.raises(ValueError):
        coarse_to_fine_terms(m, UserConstraints(((0, 4),), weight=1.0), base)
    other = MetricData(random_metric(rng, 4), random_metric(rng, 4))
    with pytest.raises(ValueError):
        coarse_to_fine_terms(other, UserConstraints(((0, 0),), weight=1.0), base)


def test_descriptor_linear_term_stacking():
    C = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    c = descriptor_linear_term(C)
    # column-major: entry (i, j) lands at j*k + i
    assert c.tolist() == [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]
    with pytest.raises(ValueError):
        descriptor_linear_term(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        descriptor_linear_term(np.array([[np.inf, 0.0]]))
