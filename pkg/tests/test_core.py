import math

import numpy as np
import pytest
from conftest import random_hr
from hypothesis import given, settings
from hypothesis import strategies as st

from hrpareto import (
    center_project,
    embed,
    extract,
    gen_reduce,
    gen_transforms,
    inner_product,
    power_transform,
    scale_transform,
    standardize,
    sufficient_stat,
    validate_gen,
    validate_hr,
)
from hrpareto.core import mean_sufficient_stat
from hrpareto.errors import (
    DimensionMismatch,
    ExponentNonPositive,
    KernelViolation,
    NonPositiveBeta,
    NonPositiveComponent,
    NonPositiveOnComplement,
    NotSymmetric,
)
from hrpareto.pareto import log_density, log_density_gen

J = np.array([[1.0, -1.0], [-1.0, 1.0]])


class TestValidation:
    def test_reference_params(self):
        p = validate_hr(J, [-0.5, -0.5])
        assert p.alpha == pytest.approx(1.0)
        assert p.d == 2

    def test_identity_violates_kernel(self):
        with pytest.raises(KernelViolation):
            validate_hr(np.eye(2), [-1, -1])

    def test_nonnegative_exponent(self):
        with pytest.raises(ExponentNonPositive):
            validate_hr(J, [1.0, -0.5])

    def test_asymmetric(self):
        with pytest.raises(NotSymmetric):
            validate_hr([[1.0, -1.0], [-0.9, 1.0]], [-1, -1])

    def test_not_positive_on_complement(self):
        with pytest.raises(NonPositiveOnComplement):
            validate_hr(-J, [-1, -1])

    def test_dimension(self):
        with pytest.raises(DimensionMismatch):
            validate_hr(J, [-1, -1, -1])

    def test_params_are_read_only(self):
        p = validate_hr(J, [-0.5, -0.5])
        with pytest.raises(ValueError):
            p.l[0] = 3.0

    def test_gen_constraint(self):
        validate_gen([1, 2], J, [-0.3, -0.7])
        with pytest.raises(ExponentNonPositive):
            validate_gen([1, 2], J, [-0.3, -0.3])
        with pytest.raises(NonPositiveComponent):
            validate_gen([0, 2], J, [-0.3, -0.7])

    def test_gen_round_trip(self):
        p = validate_hr(J, [-1.0, -2.0])
        g = p.to_gen()
        assert np.allclose(g.alpha, 3.0)
        back = g.to_hr()
        assert np.allclose(back.Q, p.Q) and np.allclose(back.l, p.l)


class TestSufficientStat:
    def test_equal_components(self):
        t = sufficient_stat([math.e, math.e])
        assert np.allclose(t.mat, 0) and np.allclose(t.vec, [1, 1])

    def test_opposite_components(self):
        t = sufficient_stat([math.e, 1 / math.e])
        assert np.allclose(t.mat, -0.5 * J)
        assert np.allclose(t.vec, [1, -1])

    def test_loop_oracle(self, rng):
        z = rng.uniform(0.5, 5, size=4)
        lz = np.log(z)
        c = lz - lz.mean()
        M = np.zeros((4, 4))
        for i in range(4):
            for j in range(4):
                M[i, j] = -0.5 * c[i] * c[j]
        t = sufficient_stat(z)
        assert np.allclose(t.mat, M, atol=1e-14)

    def test_rejects_nonpositive(self):
        with pytest.raises(NonPositiveComponent):
            sufficient_stat([1.0, 0.0])

    def test_mean_is_average(self, rng):
        z = rng.uniform(1, 4, size=(2, 3))
        t = mean_sufficient_stat(np.log(z))
        a, b = sufficient_stat(z[0]), sufficient_stat(z[1])
        assert np.allclose(t.mat, (a.mat + b.mat) / 2)
        assert np.allclose(t.vec, (a.vec + b.vec) / 2)


class TestTransforms:
    def test_unit_scale_is_identity(self, example_hr):
        q, a = scale_transform(example_hr, [1, 1], [1, 1])
        assert np.allclose(q.l, example_hr.l) and np.allclose(a, 1)

    def test_scale_example(self, example_hr):
        q, a = scale_transform(example_hr, [1.0, 1.0], [math.e, 1.0])
        assert np.allclose(q.l, [0.5, -1.5])
        assert np.allclose(a, [math.e, 1.0])
        assert q.alpha == pytest.approx(example_hr.alpha)

    def test_scale_inverse(self, rng):
        p = random_hr(rng, 3)
        u = rng.uniform(0.3, 3, size=3)
        q, a = scale_transform(p, np.ones(3), u)
        r, a2 = scale_transform(q, a, 1 / u)
        assert np.allclose(r.l, p.l, atol=1e-12) and np.allclose(a2, 1)

    def test_power(self, example_hr):
        q, _ = power_transform(example_hr, [1, 1], 1.0)
        assert np.allclose(q.Q, example_hr.Q)
        p2 = validate_hr(J, [-1.0, -1.0])
        q, _ = power_transform(p2, [1, 1], 2.0)
        assert q.alpha == pytest.approx(1.0)
        q, a = power_transform(p2, [2, 3], 0.5)
        r, a2 = power_transform(q, a, 2.0)
        assert np.allclose(r.Q, p2.Q) and np.allclose(r.l, p2.l) and np.allclose(a2, [2, 3])
        with pytest.raises(NonPositiveBeta):
            power_transform(p2, [1, 1], 0.0)

    def test_standardize_identity_and_shift(self, example_hr):
        s = standardize(example_hr, [1, 1])
        assert np.allclose(s.Q, example_hr.Q) and np.allclose(s.l, example_hr.l)
        s = standardize(example_hr, [2, 2])
        assert np.allclose(s.l, example_hr.l)

    def test_standardize_change_of_variables(self, rng):
        d = 3
        p = random_hr(rng, d)
        a = rng.uniform(0.5, 2, size=d)
        s = standardize(p, a)
        alpha = p.alpha
        zt = 1 + rng.exponential(size=(10, d))
        z = a * zt ** (1 / alpha)
        # Z = a Zt^(1/alpha): f_Z(z) = f_Zt(zt) * prod(alpha zt_i / z_i)
        lhs = log_density(z, a, p)
        rhs = log_density(zt, np.ones(d), s) + np.sum(np.log(alpha * zt / z), axis=1)
        assert np.allclose(lhs, rhs, atol=1e-6)

    def test_gen_identity(self):
        g = validate_gen([1.0, 2.0], J, [-0.4, -0.6])
        h, a = gen_transforms(g, [1, 1], [1, 1], [1, 1])
        assert np.allclose(h.l, g.l) and np.allclose(h.alpha, g.alpha) and np.allclose(a, 1)

    def test_gen_constant_alpha_reduction(self):
        abar = 1.7
        g = validate_gen([abar, abar], J, [-0.3, -0.7])
        z = np.array([[1.5, 2.0], [0.5, 3.0], [4.0, 1.1]])
        hr = validate_hr(abar ** 2 * J, abar * g.l)
        assert np.allclose(log_density_gen(z, [1, 1], g), log_density(z, [1, 1], hr), atol=1e-7)

    def test_gen_transform_density_invariance(self, rng):
        g = validate_gen([0.8, 1.5, 2.5], random_hr(rng, 3).Q, [-0.2, -0.5, -0.3])
        a = np.array([1.0, 2.0, 0.5])
        u = np.array([1.3, 0.7, 2.0])
        beta = np.array([0.5, 2.0, 1.2])
        h, b = gen_transforms(g, a, u, beta)
        z = a * (1 + rng.exponential(size=(8, 3)))
        y = (u * z) ** beta
        jac = np.sum(np.log(beta * y / z), axis=1)
        assert np.allclose(log_density_gen(y, b, h) + jac, log_density_gen(z, a, g), atol=1e-6)

    def test_gen_reduce(self):
        g = validate_gen([1.0, 2.0], J, [-0.4, -0.6])
        s, inv = gen_reduce(g, [1, 1])
        assert s.alpha == pytest.approx(1.0)
        assert np.allclose(inv, [1.0, 0.5])


class TestProjection:
    def test_examples(self):
        assert np.allclose(center_project(np.ones((3, 3))), 0)
        assert np.allclose(center_project(np.eye(3)), np.eye(3) - 1 / 3)

    def test_rejects_asymmetric(self):
        with pytest.raises(NotSymmetric):
            center_project([[1.0, 2.0], [0.0, 1.0]])


sym_matrices = st.integers(2, 6).flatmap(
    lambda d: st.lists(st.floats(-10, 10), min_size=d * d, max_size=d * d).map(
        lambda v: (lambda A: A + A.T)(np.array(v).reshape(d, d))))


@settings(max_examples=60, deadline=None)
@given(sym_matrices)
def test_projection_idempotent(M):
    P = center_project(M)
    assert np.allclose(center_project(P), P, atol=1e-12)
    assert np.allclose(P @ np.ones(M.shape[0]), 0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_embedding_is_isometric(d, seed):
    r = np.random.default_rng(seed)
    A = center_project((lambda B: B + B.T)(r.normal(size=(d, d))))
    B = center_project((lambda B: B + B.T)(r.normal(size=(d, d))))
    a, b = r.normal(size=d), r.normal(size=d)
    x, y = embed(A, a), embed(B, b)
    assert x.shape == (d * (d + 1) // 2,)
    assert np.dot(x, y) == pytest.approx(inner_product((A, a), (B, b)), abs=1e-10)
    A2, a2 = extract(x, d)
    assert np.allclose(A2, A, atol=1e-12) and np.allclose(a2, a)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1), st.floats(0.2, 5.0))
def test_power_and_scale_preserve_validity(d, seed, beta):
    r = np.random.default_rng(seed)
    p = random_hr(r, d)
    u = r.uniform(0.2, 5, size=d)
    q, a = scale_transform(p, np.ones(d), u)
    assert q.alpha == pytest.approx(p.alpha)
    q2, a2 = power_transform(q, a, beta)
    assert q2.alpha == pytest.approx(p.alpha / beta)
    validate_hr(q2.Q, q2.l)
    s = standardize(q2, a2)
    assert s.alpha == pytest.approx(1.0)
