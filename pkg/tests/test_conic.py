import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from estbeam import conic
from estbeam.conic import Affine, ProblemBuilder
from reference_solver import admm_solve, random_problem


def _worst(sol):
    return max(sol.primal_residual, sol.dual_residual, sol.duality_gap)


def test_trace_lower_bound():
    pb = ProblemBuilder()
    pb.hermitian("X", 3)
    tr = Affine.inner("X", np.eye(3))
    pb.add(tr, ">=", 1.0)
    pb.minimize(tr)
    sol = conic.solve(pb.build())
    assert sol.status == conic.OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-8)
    assert _worst(sol) <= 1e-8


def test_two_by_two_lmi():
    pb = ProblemBuilder()
    t = pb.scalar("t")
    pb.add_lmi([[t, 1.0], [1.0, t]], name="lmi")
    pb.minimize(t)
    sol = conic.solve(pb.build())
    assert sol.status == conic.OPTIMAL
    assert sol.scalars["t"] == pytest.approx(1.0, abs=1e-7)


def test_largest_eigenvalue_of_hermitian_matrix(rng):
    # max <A, X> over tr X = 1 equals lambda_max(A); the optimum is rank one
    n = 5
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = (G + G.conj().T) / 2
    pb = ProblemBuilder()
    pb.hermitian("X", n)
    pb.add(Affine.inner("X", np.eye(n)), "==", 1.0)
    pb.minimize(-Affine.inner("X", A))
    sol = conic.solve(pb.build())
    assert sol.status == conic.OPTIMAL
    assert -sol.objective == pytest.approx(np.linalg.eigvalsh(A)[-1], rel=1e-8)
    prof = conic.extract_rank_profile(sol.matrices["X"])
    assert prof[1] <= 1e-6 * prof[0]


@pytest.mark.parametrize("seed", range(8))
def test_matches_reference_solver(seed):
    p = random_problem(np.random.default_rng(1000 + seed))
    sol = conic.solve(p)
    assert sol.status == conic.OPTIMAL
    assert _worst(sol) <= 1e-8
    ref, _, _ = admm_solve(p)
    assert abs(sol.objective - ref) <= 1e-4 * max(1.0, abs(ref))


def test_solution_is_feasible():
    p = random_problem(np.random.default_rng(77))
    sol = conic.solve(p)
    for X in sol.matrices.values():
        assert np.linalg.eigvalsh(X).min() >= -1e-8 * max(1.0, np.abs(X).max())
    for c in p.constraints:
        v = c.expr.value(sol.scalars, sol.matrices)
        scale = 1.0 + c.expr.magnitude(sol.scalars, sol.matrices)
        if c.sense == "==":
            assert abs(v) <= 1e-7 * scale
        elif c.sense == "<=":
            assert v <= 1e-7 * scale
        else:
            assert v >= -1e-7 * scale


def test_deterministic():
    p = random_problem(np.random.default_rng(5))
    a, b = conic.solve(p), conic.solve(p)
    assert a.objective == b.objective
    for k in a.matrices:
        np.testing.assert_array_equal(a.matrices[k], b.matrices[k])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.sampled_from([1e-6, 1e-3, 1e3, 1e6]))
def test_objective_scale_invariance(seed, scale):
    p = random_problem(np.random.default_rng(seed))
    scaled = conic.ConicProblem(p.matrix_vars, p.scalar_vars, p.objective * scale,
                                p.constraints, p.lmis)
    a, b = conic.solve(p), conic.solve(scaled)
    assert a.status == b.status == conic.OPTIMAL
    assert b.objective / scale == pytest.approx(a.objective, rel=1e-6, abs=1e-7)


def test_infeasible_certificate():
    pb = ProblemBuilder()
    pb.hermitian("X", 2)
    tr = Affine.inner("X", np.eye(2))
    pb.add(tr, "<=", 1.0, name="cap")
    pb.add(Affine.inner("X", np.diag([1.0, 0.0])), ">=", 2.0, name="need")
    pb.minimize(tr)
    p = pb.build()
    sol = conic.solve(p)
    assert sol.status == conic.INFEASIBLE
    rel, const = sol.certificate.check(p)
    assert const < 0 and rel <= 1e-6
    assert sol.certificate.is_valid(p)


def test_infeasible_lmi():
    pb = ProblemBuilder()
    t = pb.scalar("t")
    pb.add(t, "<=", 0.5)
    pb.add_lmi([[t, 1.0], [1.0, t]])
    pb.minimize(t)
    sol = conic.solve(pb.build())
    assert sol.status == conic.INFEASIBLE


def test_unbounded():
    pb = ProblemBuilder()
    t = pb.scalar("t")
    pb.add(t, "<=", 3.0)
    pb.minimize(t)
    sol = conic.solve(pb.build())
    assert sol.status == conic.UNBOUNDED
    assert sol.objective == -math.inf


def test_rank_profile():
    v = np.array([1.0, 1j, 0.5])
    prof = conic.extract_rank_profile(np.outer(v, v.conj()))
    assert prof[0] == pytest.approx(2.25)
    assert np.all(prof[1:] == 0.0)
    assert np.all(np.diff(prof) <= 0)


def test_dump_problem_lists_everything():
    pb = ProblemBuilder()
    pb.hermitian("X", 2)
    t = pb.scalar("t")
    pb.add(Affine.inner("X", np.array([[1, 1j], [-1j, 2]])) + t, "==", 1.0, name="link")
    pb.add_lmi([[t, 1.0], [1.0, t]], name="box")
    pb.minimize(t)
    text = conic.dump_problem(pb.build())
    assert text.startswith("conic-problem v1")
    for token in ("X 2 hermitian", "constraint link == 0", "box", "scalar t"):
        assert token in text


def test_builder_validation():
    pb = ProblemBuilder()
    pb.hermitian("X", 2)
    with pytest.raises(ValueError):
        pb.hermitian("X", 3)
    with pytest.raises(ValueError):
        Affine.inner("X", np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        pb.add(Affine.var("X"), "<>", 0.0)
    with pytest.raises(ValueError):
        conic.solve(pb.build(), tolerance=0.5)
