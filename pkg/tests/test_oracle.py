import numpy as np
import pytest
from scipy.linalg import null_space

from permqp.core import DenseQuadratic, EnergySpec, eval_energy
from permqp.oracle import (
    brute_force_injective,
    brute_force_min,
    dense_subspace_eigs,
    enumerate_permutations,
    marginal_constraint_matrix,
)


def random_energy(rng, k, n=None):
    n = k if n is None else n
    d = k * n
    W = rng.standard_normal((d, d))
    return EnergySpec(k, n, DenseQuadratic(0.5 * (W + W.T)), rng.standard_normal(d), -0.7)


def one_hot(assign, n):
    k = len(assign)
    x = np.zeros(k * n)
    for i, j in enumerate(assign):
        x[j * k + i] = 1.0
    return x


def test_enumeration_counts_and_order():
    P = enumerate_permutations(3)
    assert P.shape == (6, 3)
    assert P[0].tolist() == [0, 1, 2]
    assert P[-1].tolist() == [2, 1, 0]
    # lexicographic row order
    as_tuples = [tuple(row) for row in P]
    assert as_tuples == sorted(as_tuples)
    I = enumerate_permutations(5, 2)
    assert I.shape == (20, 2)
    assert I[0].tolist() == [0, 1]


def test_enumeration_cache_is_frozen():
    P = enumerate_permutations(4)
    with pytest.raises(ValueError):
        P[0, 0] = 3
    assert enumerate_permutations(4) is P


def test_batch_energies_match_naive_loop():
    rng = np.random.default_rng(0)
    e = random_energy(rng, 5)
    perms = enumerate_permutations(5)
    from permqp.oracle import _batch_energies

    vals = _batch_energies(e, perms)
    for idx in rng.choice(len(perms), size=30, replace=False):
        ref = eval_energy(e, one_hot(perms[idx], 5))
        assert vals[idx] == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_brute_force_certificate():
    rng = np.random.default_rng(1)
    e = random_energy(rng, 5)
    p, v = brute_force_min(e)
    assert v == pytest.approx(eval_energy(e, one_hot(p.assignment, 5)), rel=1e-12)
    for q in enumerate_permutations(5):
        assert v <= eval_energy(e, one_hot(q, 5)) + 1e-10


def test_brute_force_constant_energy_breaks_ties_to_identity():
    e = EnergySpec(4, 4, DenseQuadratic(np.zeros((16, 16))), np.zeros(16), 3.0)
    p, v = brute_force_min(e)
    assert v == pytest.approx(3.0)
    assert p.assignment.tolist() == [0, 1, 2, 3]


def test_brute_force_size_guard():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        brute_force_min(random_energy(rng, 9))
    with pytest.raises(ValueError):
        brute_force_min(random_energy(rng, 3, 4))


def test_injective_oracle_certificate_and_guard():
    rng = np.random.default_rng(3)
    e = random_energy(rng, 3, 6)
    p, v = brute_force_injective(e)
    assert len(set(p.assignment.tolist())) == 3
    assert v == pytest.approx(eval_energy(e, one_hot(p.assignment, 6)), rel=1e-12)
    for q in enumerate_permutations(6, 3):
        assert v <= eval_energy(e, one_hot(q, 6)) + 1e-10
    with pytest.raises(ValueError):
        brute_force_injective(e, max_count=10)


def test_injective_oracle_k_equals_one_is_argmin():
    rng = np.random.default_rng(4)
    e = random_energy(rng, 1, 7)
    p, v = brute_force_injective(e)
    W = e.quadratic.dense()
    costs = np.diagonal(W) + e.c + e.d
    assert p.assignment[0] == int(np.argmin(costs))
    assert v == pytest.approx(costs.min())


def test_square_case_agreement_between_oracles():
    rng = np.random.default_rng(5)
    e = random_energy(rng, 4)
    p1, v1 = brute_force_min(e)
    p2, v2 = brute_force_injective(e)
    assert v1 == pytest.approx(v2, rel=1e-12)
    assert np.array_equal(p1.assignment, p2.assignment)


def test_dense_subspace_eigs_identity_and_shift():
    e = EnergySpec(4, 4, DenseQuadratic(np.eye(16)))
    lo, hi = dense_subspace_eigs(e)
    assert lo == pytest.approx(1.0, abs=1e-12)
    assert hi == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(6)
    e2 = random_energy(rng, 4)
    lo2, hi2 = dense_subspace_eigs(e2)
    W = e2.quadratic.dense()
    shifted = EnergySpec(4, 4, DenseQuadratic(W + 2.5 * np.eye(16)))
    lo3, hi3 = dense_subspace_eigs(shifted)
    assert lo3 == pytest.approx(lo2 + 2.5, abs=1e-10)
    assert hi3 == pytest.approx(hi2 + 2.5, abs=1e-10)


def test_dense_subspace_eigs_interlace_full_spectrum():
    rng = np.random.default_rng(7)
    for _ in range(5):
        e = random_energy(rng, 5)
        lo, hi = dense_subspace_eigs(e)
        full = np.linalg.eigvalsh(e.quadratic.dense())
        assert full[0] - 1e-10 <= lo <= hi <= full[-1] + 1e-10


def test_dense_subspace_eigs_smallest_square():
    # k=n=2 leaves a single interior direction
    rng = np.random.default_rng(8)
    e = random_energy(rng, 2)
    lo, hi = dense_subspace_eigs(e)
    A = marginal_constraint_matrix(2, 2)
    F = null_space(A)
    assert F.shape == (4, 1)
    W = e.quadratic.dense()
    lam = float(F[:, 0] @ W @ F[:, 0])
    assert lo == pytest.approx(lam, abs=1e-12)
    assert hi == pytest.approx(lam, abs=1e-12)


def test_constraint_matrix_shape_and_rank():
    A = marginal_constraint_matrix(3, 4)
    assert A.shape == (7, 12)
    assert A.sum(axis=0).tolist() == [2.0] * 12
    assert np.linalg.matrix_rank(A) == 3 + 4 - 1
