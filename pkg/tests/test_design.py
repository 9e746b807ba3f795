import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from estbeam import conic, pipeline
from estbeam.array import ChannelSet, steering_derivative, steering_vector
from estbeam.design import (DIRECT, RANDOMIZED, SENSING_ONLY, DesignConstraints, SdrSolution,
                            build_benchmark_problem, build_sdr_problem, check_rank_one,
                            coverage_margin, extract_rank_one, sinr, sinr_covariance,
                            sinr_power_solve, solve_benchmark, solve_sdr)
from estbeam.errors import ExtractionFailed
from estbeam.scenario import Scenario
from conftest import random_psd


def _small(**changes):
    base = {"array": {"n_t": 8, "n_r": 8}, "users": {"angles_deg": [-40.0, 30.0]}}
    for k, v in changes.items():
        base.setdefault(k, {}).update(v)
    return Scenario.from_dict(base)


def _pk_upper_bound(R, phi, N_r):
    """Largest ``t`` with the 2x2 per-subsection block PSD (Schur complement)."""
    N = R.shape[0]
    a, ad = steering_vector(N, phi), steering_derivative(N, phi)
    aRa = np.vdot(a, R @ a).real
    adRad = np.vdot(ad, R @ ad).real
    x = np.vdot(ad, R @ a).real
    c = np.vdot(ad, ad).real / N_r
    return c * aRa + adRad - x * x / aRa


def test_problem_dimensions_single_user_no_coverage():
    scn = _small(users={"angles_deg": [10.0]}, sensing={"k": 1}, design={"coverage": False})
    p = build_sdr_problem(pipeline.partition_for(scn), scn.geometry(), scn.constraints())
    assert [(v.name, v.dim) for v in p.matrix_vars] == [("R_0", 8)]
    assert p.scalar_vars == ("t_0", "t_min")
    assert {c.name for c in p.constraints} == {"sinr_0", "power", "t_min_unused"}
    assert len(p.lmis) == 1 and p.lmis[0].dim == 2


def test_problem_dimensions_default(sdr_default):
    p, _ = sdr_default
    assert [v.dim for v in p.matrix_vars] == [16] * 4
    assert len(p.scalar_vars) == 9
    assert len(p.lmis) == 8
    names = {c.name for c in p.constraints}
    assert {f"cover_lo_{k}" for k in range(8)} <= names
    assert {f"sinr_{c}" for c in range(4)} <= names


def test_sdr_objective_is_weighted_sum(sdr_default, partition):
    _, sol = sdr_default
    assert sol.objective == pytest.approx(float(partition.l @ sol.t), rel=1e-9)


def test_sdr_t_is_schur_bound(sdr_default, partition, scenario):
    # each t_k is pushed up to the largest value keeping its block PSD
    _, sol = sdr_default
    for k, phi in enumerate(partition.phi):
        bound = _pk_upper_bound(sol.R_x, phi, scenario.geometry().N_r)
        assert sol.t[k] == pytest.approx(bound, rel=1e-6)


def test_sdr_constraints_hold(sdr_default, partition, scenario):
    _, sol = sdr_default
    cons = scenario.constraints()
    assert np.trace(sol.R_x).real <= cons.P_t * (1 + 1e-7)
    assert np.all(sinr_covariance(sol.R_c, cons.channels) >= cons.Gamma * (1 - 1e-6))
    pattern = np.array([np.vdot(steering_vector(16, f), sol.R_x @ steering_vector(16, f)).real
                        for f in partition.phi])
    assert 2 * pattern.min() >= pattern.max() * (1 - 1e-6)
    assert pattern.max() / 2 * (1 - 1e-6) <= sol.t_min <= pattern.min() * (1 + 1e-6)


@settings(max_examples=100, deadline=None)
@given(p=st.lists(st.floats(0.01, 10.0), min_size=1, max_size=8))
def test_coverage_margin_matches_brute_force(p):
    # a threshold with t <= p_k <= 2 t for all k exists iff the margin is nonnegative
    p = np.array(p)
    grid = np.linspace(0, p.max(), 20001)
    exists = np.any([(p >= t).all() and (p <= 2 * t).all() for t in grid])
    margin = 2 * p.min() - p.max()
    if abs(margin) > 1e-3 * p.max():
        assert exists == (margin >= 0)


def test_coverage_margin_function(partition):
    R = np.eye(16) / 16
    assert coverage_margin(R, partition) == pytest.approx(1.0, rel=1e-12)


def test_check_rank_one():
    v = np.arange(1, 5) + 1j
    R = np.outer(v, v.conj())
    assert check_rank_one(R)
    assert not check_rank_one(R + 1e-3 * np.eye(4))
    assert check_rank_one(R + 1e-12 * np.eye(4))
    assert check_rank_one([R, np.eye(4)]) == [True, False]
    assert not check_rank_one(np.zeros((3, 3)))


def test_default_direct_extraction_reproduces_sdr(sdr_default, scenario, partition):
    _, sol = sdr_default
    assert all(sol.rank_one)
    bf = extract_rank_one(sol, scenario.constraints(), partition, scenario.geometry(),
                          scenario.sensing_params())
    assert bf.provenance == DIRECT
    for c, R in enumerate(sol.R_c):
        w = bf.W[:, c]
        np.testing.assert_allclose(np.outer(w, w.conj()), R, atol=1e-6 * np.abs(R).max())
        assert np.vdot(scenario.channels().h[c], w).imag == pytest.approx(0.0, abs=1e-12)


def test_single_user_sinr_exact():
    scn = _small(users={"angles_deg": [20.0], "gamma_db": 10.0},
                 design={"power_fill": False})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bf, rep = pipeline.run_algorithm_1(scn)
    s = sinr(bf.W, scn.constraints().channels)
    assert s[0] >= scn.gamma * (1 - 1e-8)
    assert rep["power_w"] <= scn.P_t * (1 + 1e-6)


def _random_sdr(rng, N, C):
    R_c = tuple(random_psd(rng, N, scale=1.0 / C) for _ in range(C))
    return SdrSolution(R_c, np.zeros(0), 0.0, sum(R_c), 0.0, (False,) * C, None)


def test_randomized_extraction_meets_sinr_with_equality(rng, scenario, partition):
    N, C = 16, 2
    h = np.stack([steering_vector(N, math.radians(a)) for a in (-40.0, 25.0)])
    cons = DesignConstraints(1.0, 0.5, ChannelSet(h, [1e-3, 1e-3]), coverage_enabled=False)
    bf = extract_rank_one(_random_sdr(rng, N, C), cons, partition, scenario.geometry(),
                          scenario.sensing_params(), N_e=20, seed=3)
    assert bf.provenance == RANDOMIZED
    np.testing.assert_allclose(sinr(bf.W, cons.channels), 0.5, rtol=1e-8)
    assert np.trace(bf.R_x).real <= 1.0 * (1 + 1e-6)


def test_power_fill_uses_budget_and_raises_sinr(rng, scenario, partition):
    N = 16
    h = np.stack([steering_vector(N, math.radians(a)) for a in (-40.0, 25.0)])
    cons = DesignConstraints(1.0, 0.5, ChannelSet(h, [1e-3, 1e-3]), coverage_enabled=False)
    bf = extract_rank_one(_random_sdr(rng, N, 2), cons, partition, scenario.geometry(),
                          scenario.sensing_params(), N_e=20, seed=3, power_fill=True)
    assert np.trace(bf.R_x).real == pytest.approx(1.0, rel=1e-9)
    assert np.all(sinr(bf.W, cons.channels) >= 0.5 * (1 - 1e-9))


def test_extraction_is_deterministic(rng, scenario, partition):
    N = 16
    h = np.stack([steering_vector(N, math.radians(a)) for a in (-40.0, 25.0)])
    cons = DesignConstraints(1.0, 0.5, ChannelSet(h, [1e-3, 1e-3]), coverage_enabled=False)
    sol = _random_sdr(rng, N, 2)
    args = (sol, cons, partition, scenario.geometry(), scenario.sensing_params())
    a = extract_rank_one(*args, N_e=10, seed=9)
    b = extract_rank_one(*args, N_e=10, seed=9)
    np.testing.assert_array_equal(a.W, b.W)
    assert a.epoch == b.epoch


def test_extraction_failure_when_power_too_small(rng, scenario, partition):
    N = 16
    h = np.stack([steering_vector(N, math.radians(a)) for a in (-40.0, 25.0)])
    cons = DesignConstraints(1e-9, 10.0, ChannelSet(h, [1e-3, 1e-3]), coverage_enabled=False)
    with pytest.raises(ExtractionFailed):
        extract_rank_one(_random_sdr(rng, N, 2), cons, partition, scenario.geometry(),
                         scenario.sensing_params(), N_e=5)


def test_sinr_power_solve_orthogonal_users():
    N = 4
    U = np.eye(N)[:, :2].astype(complex)
    h = np.array([[2.0, 0, 0, 0], [0, 3.0, 0, 0]], dtype=complex)
    q = sinr_power_solve(U, ChannelSet(h, [0.5, 0.2]), 4.0)
    np.testing.assert_allclose(q, [4.0 * 0.5 / 4.0, 4.0 * 0.2 / 9.0])


def test_sinr_power_solve_rejects_impossible():
    # identical channels with Gamma > 1 cannot both be served
    h = np.ones((2, 3), dtype=complex)
    U = np.ones((3, 2), dtype=complex) / math.sqrt(3)
    U[:, 1] *= 1j
    assert sinr_power_solve(U, ChannelSet(h, [1.0, 1.0]), 2.0) is None


def test_sensing_only_dominates_communication_design():
    with_users = _small()
    no_users = _small(users={"angles_deg": []})
    sols = []
    for scn in (with_users, no_users):
        p = build_sdr_problem(pipeline.partition_for(scn), scn.geometry(), scn.constraints())
        sols.append(solve_sdr(p))
    assert sols[1].sensing_only
    assert sols[1].objective >= sols[0].objective * (1 - 1e-7)
    bf = extract_rank_one(sols[1], no_users.constraints(), pipeline.partition_for(no_users),
                          no_users.geometry(), no_users.sensing_params())
    assert bf.provenance == SENSING_ONLY
    np.testing.assert_allclose(bf.R_x, sols[1].R_x, atol=1e-6 * np.abs(sols[1].R_x).max())


@pytest.mark.parametrize("variant", ["bp1", "bp2"])
def test_benchmark_symmetric_users_give_symmetric_pattern(variant):
    scn = _small(users={"angles_deg": [-30.0, 30.0]})
    p = build_benchmark_problem(variant, 0.0, scn.geometry(), scn.constraints())
    sol = solve_benchmark(p)
    grid = np.deg2rad(np.linspace(0, 89, 90))
    A = steering_vector(8, grid)
    Am = steering_vector(8, -grid)
    left = np.real(np.einsum("ki,ij,kj->k", A.conj(), sol.R_x, A))
    right = np.real(np.einsum("ki,ij,kj->k", Am.conj(), sol.R_x, Am))
    np.testing.assert_allclose(left, right, atol=1e-5 * left.max())


def test_benchmark_power_constraints():
    scn = _small()
    cons = scn.constraints()
    bp1 = solve_benchmark(build_benchmark_problem("bp1", 0.0, scn.geometry(), cons))
    np.testing.assert_allclose(np.diag(bp1.R_x).real, cons.P_t / 8, rtol=1e-7)
    bp2 = solve_benchmark(build_benchmark_problem("bp2", 0.0, scn.geometry(), cons))
    assert np.trace(bp2.R_x).real == pytest.approx(cons.P_t, rel=1e-7)
    for sol in (bp1, bp2):
        assert np.all(sinr_covariance(sol.R_c, cons.channels) >= cons.Gamma * (1 - 1e-6))


def test_benchmark_unknown_variant(scenario):
    with pytest.raises(ValueError):
        build_benchmark_problem("bp3", 0.0, scenario.geometry(), scenario.constraints())


def test_design_constraints_validation():
    with pytest.raises(ValueError):
        DesignConstraints(0.0, 1.0, ChannelSet.empty(4))
    with pytest.raises(ValueError):
        DesignConstraints(1.0, -1.0, ChannelSet.empty(4))


def test_more_users_than_antennas_rejected(partition, scenario):
    h = np.ones((3, 2), dtype=complex)
    cons = DesignConstraints(1.0, 1.0, ChannelSet(h, [1.0, 1.0, 1.0]))
    from estbeam.array import ArrayGeometry
    with pytest.raises(ValueError):
        build_sdr_problem(partition, ArrayGeometry(2, 2), cons)


def test_default_design_report(design_default):
    bf, rep = design_default
    assert rep["status"] == conic.OPTIMAL
    assert rep["crb_rad2"] == pytest.approx(1.06428232912e-11, rel=1e-6)
    assert rep["min_sinr_margin_db"] >= -1e-6
    assert rep["power_w"] <= 1.0 * (1 + 1e-6)
    assert rep["coverage_margin"] >= -1e-9
    assert bf.W.shape == (16, 4)
