import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_psd
from estbeam.array import ArrayGeometry, steering_vector, z1
from estbeam.crb import (Z1_ORIENTATION, Z1_SUBSECTION, FimBlocks, SensingParams,
                         _invert_efim, assemble_fim_blocks, bracket_terms, compute_Xk, compute_Z1,
                         compute_Z2, crb_k1, crb_phi_closed_form, crb_phi_oracle, efim_schur,
                         evaluate_crb)
from estbeam.errors import DegenerateBeampattern, SingularEfim, SingularPathLossInfo
from estbeam.geometry import (APPROXIMATE, EXACT, ContourModel, LosPartition, TargetPose,
                              compute_los_partition, partition_range)
from estbeam.scenario import DEFAULT_M, DEFAULT_N

MODEL = ContourModel(DEFAULT_M, DEFAULT_N)
POSE = TargetPose(27.0, 0.0, 0.0)
GEOM = ArrayGeometry(16, 16)
PARAMS = SensingParams.for_range(27.0, 1e-11)


@pytest.fixture(scope="module")
def part():
    return compute_los_partition(MODEL, POSE, 8)


def test_z_helpers():
    assert compute_Z1(16, 0.0) == pytest.approx(math.pi ** 2 * 255 / 12)
    assert compute_Z1(1, 0.3) == 0.0
    assert compute_Z2(299792458.0 / (4 * math.pi)) == pytest.approx(1.0)


def test_sensing_params_validation():
    with pytest.raises(ValueError):
        SensingParams(0.0, 1.0)
    with pytest.raises(ValueError):
        SensingParams(1.0, 1.0, t_s=-1.0)
    assert SensingParams.for_range(10.0, 1.0).g == pytest.approx(0.01)


# ---------------------------------------------------------------------------
# X_k diagnostics
# ---------------------------------------------------------------------------

def test_xk_vanishes_when_aligned_without_sine_terms(part):
    model = ContourModel(DEFAULT_M, [0.0] * 8)
    pose = TargetPose(27.0, 0.2, 0.2)
    p = partition_range(model, pose, 3.5, 5.5, 4)
    assert all(compute_Xk(p, pose, model, k) == pytest.approx(0.0, abs=1e-30) for k in range(4))


def test_xk_zero_coefficients():
    model = ContourModel([0.0, 0.0], [0.0, 0.0])
    p = LosPartition.point_target(POSE)
    assert compute_Xk(p, POSE, model, 0) == 0.0


def test_xk_matches_scalar_evaluation(part):
    pose = TargetPose(27.0, 0.1, -0.2)
    u = part.subsections[0].u_k
    sm = sum(a * math.cos(q * u) for q, a in enumerate(DEFAULT_M, start=1))
    sn = sum(b * math.sin(q * u) for q, b in enumerate(DEFAULT_N, start=1))
    expected = (sm * math.sin(0.3) - sn * math.cos(0.3)) ** 2
    assert compute_Xk(part, pose, MODEL, 0) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# Closed form
# ---------------------------------------------------------------------------

def test_point_target_matched_beam_closed_form():
    P_t, N_t, l1 = 2.0, 8, 0.7
    geom = ArrayGeometry(N_t, 12)
    pose = TargetPose(30.0, 0.3)
    p = LosPartition.point_target(pose, l1)
    a = steering_vector(N_t, pose.phi_o)
    R = (P_t / N_t) * np.outer(a, a.conj())
    params = SensingParams.for_range(30.0, 3e-9, t_s=0.5)
    Z1 = z1(12, pose.phi_o)
    expected = params.sigma_s2 / (2 * params.g ** 2 * 12 * 0.5 * l1 * Z1 * P_t * N_t)
    assert crb_phi_closed_form(p, R, params, geom) == pytest.approx(expected, rel=1e-12)


def test_closed_form_default_isotropic_fixture(part):
    R = np.eye(16) / 16
    # frozen from this implementation at the default scenario
    assert crb_phi_closed_form(part, R, PARAMS, GEOM) == pytest.approx(6.917529323450271e-11, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31), c=st.sampled_from([0.5, 2.0, 10.0]))
def test_homogeneity(part, seed, c):
    R = random_psd(np.random.default_rng(seed), 16)
    base = crb_phi_closed_form(part, R, PARAMS, GEOM)
    assert crb_phi_closed_form(part, c * R, PARAMS, GEOM) * c == pytest.approx(base, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31), s=st.floats(1e-3, 1e3))
def test_noise_scaling_closed_and_oracle(part, seed, s):
    R = random_psd(np.random.default_rng(seed), 16)
    scaled = PARAMS.replace(sigma_s2=PARAMS.sigma_s2 * s)
    for f in (lambda p: crb_phi_closed_form(part, R, p, GEOM),
              lambda p: crb_phi_oracle(part, POSE, R, p, GEOM)):
        assert f(scaled) == pytest.approx(s * f(PARAMS), rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_psd_increment_never_increases_bound(part, seed):
    r = np.random.default_rng(seed)
    R = random_psd(r, 16)
    base = crb_phi_closed_form(part, R, PARAMS, GEOM)
    k = int(np.argmax(part.l * bracket_terms(part, R, GEOM)))
    a = steering_vector(16, part.phi[k])
    prev = base
    for c in (0.01, 0.1, 1.0):
        val = crb_phi_closed_form(part, R + c * np.outer(a, a.conj()), PARAMS, GEOM)
        assert val <= prev * (1 + 1e-12)
        prev = val
    assert crb_phi_closed_form(part, R + random_psd(r, 16, rank=2), PARAMS, GEOM) <= base * (1 + 1e-12)


def test_positive_for_random_inputs(part, rng):
    for _ in range(20):
        assert crb_phi_closed_form(part, random_psd(rng, 16), PARAMS, GEOM) > 0


def test_degenerate_beampattern(part):
    with pytest.raises(DegenerateBeampattern):
        crb_phi_closed_form(part, np.zeros((16, 16)), PARAMS, GEOM)
    # a beam steered far from the target leaves only sidelobe levels, still positive;
    # a null exactly at one subsection is degenerate
    a = steering_vector(16, part.phi[0])
    P = np.eye(16) - np.outer(a, a.conj()) / 16
    with pytest.raises(DegenerateBeampattern):
        crb_phi_closed_form(part, P @ np.diag(np.r_[1.0, np.zeros(15)]) @ P, PARAMS, GEOM)


def test_z1_modes_agree_at_broadside_point():
    p = LosPartition.point_target(POSE)
    R = np.eye(16)
    a = crb_phi_closed_form(p, R, PARAMS, GEOM, Z1_SUBSECTION)
    b = crb_phi_closed_form(p, R, PARAMS, GEOM, Z1_ORIENTATION, 0.0)
    assert a == pytest.approx(b, rel=1e-15)
    with pytest.raises(ValueError):
        crb_phi_closed_form(p, R, PARAMS, GEOM, "bogus")


# ---------------------------------------------------------------------------
# Fisher information oracle
# ---------------------------------------------------------------------------

def test_point_target_fim_is_diagonal():
    p = LosPartition.point_target(POSE, 1.3)
    R = random_psd(np.random.default_rng(1), 16)
    blocks = assemble_fim_blocks(p, POSE, R, PARAMS, GEOM, EXACT)
    I = blocks.I_k1
    assert I[0, 1] == 0 and I[0, 2] == 0 and I[1, 2] == 0
    assert np.all(I[2] == 0)
    a = steering_vector(16, 0.0)
    aRa = np.vdot(a, R @ a).real
    assert blocks.i_g == pytest.approx(2 * 16 * 1.0 / PARAMS.sigma_s2 * 1.3 * aRa, rel=1e-12)


def test_cross_term_third_component_zero_in_approximate_mode(part, rng):
    blocks = assemble_fim_blocks(part, POSE, random_psd(rng, 16), PARAMS, GEOM, APPROXIMATE)
    assert blocks.i_k1g[0] == 0.0 and blocks.i_k1g[2] == 0.0


def test_fim_symmetric_psd(part, rng):
    for mode in (APPROXIMATE, EXACT):
        I = assemble_fim_blocks(part, POSE, random_psd(rng, 16), PARAMS, GEOM, mode).I_k1
        np.testing.assert_array_equal(I, I.T)
        assert np.linalg.eigvalsh(I)[0] >= -1e-8 * np.abs(I).max()


def test_efim_without_cross_term_is_fim():
    I = np.diag([1.0, 2.0, 3.0])
    assert np.array_equal(efim_schur(FimBlocks(I, 4.0, np.zeros(3))), I)


def test_efim_needs_path_loss_information():
    with pytest.raises(SingularPathLossInfo):
        efim_schur(FimBlocks(np.eye(3), 0.0, np.zeros(3)))


def test_singular_efim_detected():
    with pytest.raises(SingularEfim):
        _invert_efim(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(SingularEfim):
        _invert_efim(np.zeros((3, 3)))


def _full_fim(blocks):
    F = np.zeros((4, 4))
    F[0, 0] = blocks.i_g
    F[0, 1:] = F[1:, 0] = blocks.i_k1g
    F[1:, 1:] = blocks.I_k1
    return F


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31), lo=st.floats(3.3, 4.0), span=st.floats(1.0, 2.0),
       phi_o=st.floats(-0.5, 0.5), varphi=st.floats(-1.0, 1.0))
def test_schur_matches_block_inverse(seed, lo, span, phi_o, varphi):
    pose = TargetPose(27.0, phi_o, varphi)
    p = partition_range(MODEL, pose, lo, lo + span, 6)
    R = random_psd(np.random.default_rng(seed), 16)
    blocks = assemble_fim_blocks(p, pose, R, PARAMS, GEOM, EXACT)
    F = _full_fim(blocks)
    assert np.linalg.eigvalsh(F)[0] >= -1e-9 * np.abs(F).max()
    J = efim_schur(blocks)
    assert np.linalg.eigvalsh(J)[0] >= -1e-9 * np.abs(J).max()
    if np.linalg.cond(J) > 1e10:
        return
    via_schur = np.linalg.inv(J)
    via_block = np.linalg.inv(F)[1:, 1:]
    np.testing.assert_allclose(via_schur, via_block, rtol=1e-8 * max(1.0, np.linalg.cond(J) / 1e4),
                               atol=0)


def test_oracle_equals_closed_form_for_point_target(rng):
    p = LosPartition.point_target(POSE, 0.9)
    for mode in (APPROXIMATE, EXACT):
        R = random_psd(rng, 16)
        closed = crb_phi_closed_form(p, R, PARAMS, GEOM)
        assert crb_phi_oracle(p, POSE, R, PARAMS, GEOM, mode) == pytest.approx(closed, rel=1e-8)


def test_oracle_halves_with_double_observation_point_target(rng):
    p = LosPartition.point_target(POSE)
    R = random_psd(rng, 16)
    one = crb_phi_oracle(p, POSE, R, PARAMS, GEOM, EXACT)
    two = crb_phi_oracle(p, POSE, R, PARAMS.replace(t_s=2.0), GEOM, EXACT)
    assert two == pytest.approx(one / 2, rel=1e-9)


def test_point_target_orientation_is_unidentifiable(rng):
    p = LosPartition.point_target(POSE)
    M = crb_k1(p, POSE, random_psd(rng, 16), PARAMS, GEOM, EXACT)
    assert math.isinf(M[2, 2])


def test_evaluate_crb_record(part, rng):
    R = random_psd(rng, 16)
    res = evaluate_crb(part, POSE, R, PARAMS, GEOM)
    assert res.crb_phi_closed == pytest.approx(crb_phi_closed_form(part, R, PARAMS, GEOM))
    assert res.crb_k1_matrix[1, 1] == pytest.approx(crb_phi_oracle(part, POSE, R, PARAMS, GEOM))
    np.testing.assert_allclose(res.bracket, bracket_terms(part, R, GEOM))
    assert res.Z2 == pytest.approx(compute_Z2(PARAMS.B))
    M = res.crb_k1_matrix
    np.testing.assert_allclose(M, M.T)
    assert np.linalg.eigvalsh(M)[0] > 0
