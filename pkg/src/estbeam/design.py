"""CRB-minimizing transmit beamforming by semidefinite relaxation.

The relaxed program works on per-user covariances ``R_c`` with
``R_x = sum_c R_c`` and maximizes ``sum_k l_k t_k`` where each ``t_k`` is
bounded through a 2x2 Schur-complement LMI by the per-subsection direction
information.  Beamformers are then recovered either directly (rank-one
``R_c``) or by Gaussian randomization followed by an exact SINR power solve.

Two beampattern-matching designs are provided as reconstructed benchmarks.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import conic
from .array import ArrayGeometry, ChannelSet, steering_derivative, steering_vector, z1
from .conic import Affine, ConicProblem, ConicSolution, ProblemBuilder
from .crb import SensingParams, crb_phi_closed_form
from .errors import (DegenerateBeampattern, ExtractionFailed, InfeasibleDesign, SingularEfim,
                     SolverFailure)
from .geometry import LosPartition

RANK_ONE_RATIO = 1e-6
DEFAULT_EPOCHS = 100
F_CONDITION_LIMIT = 1e12

#: ``P_k`` coefficient ``|adot_k|^2 / |b_k|^2`` evaluated numerically.
COEF_NUMERIC = "numeric"
#: ``P_k`` coefficient replaced by ``Z1(N_r, phi_k)``, matching the reported CRB.
COEF_Z1 = "z1"

GAUSSIAN = "gaussian"
EIGENVECTOR = "eigenvector"

DIRECT = "direct-eigenvector"
RANDOMIZED = "randomized"
FALLBACK = "coverage-fallback"
SENSING_ONLY = "sensing-covariance"


@dataclasses.dataclass(frozen=True)
class DesignConstraints:
    """Total power ``P_t`` (W), linear SINR threshold ``Gamma`` and the user channels."""

    P_t: float
    Gamma: float
    channels: ChannelSet
    coverage_enabled: bool = True

    def __post_init__(self):
        if not self.P_t > 0:
            raise ValueError("P_t must be positive")
        if not self.Gamma > 0:
            raise ValueError("Gamma must be positive")

    @property
    def C(self) -> int:
        return self.channels.C


@dataclasses.dataclass(frozen=True)
class SdrSolution:
    R_c: Tuple[np.ndarray, ...]
    t: np.ndarray
    t_min: float
    R_x: np.ndarray
    objective: float
    rank_one: Tuple[bool, ...]
    conic: ConicSolution
    sensing_only: bool = False


@dataclasses.dataclass(frozen=True)
class BeamformerSet:
    """Beamformer columns ``W`` and how they were obtained.

    ``epoch`` is the selected randomization epoch (``None`` for direct
    extraction); the counters summarize the randomization loop.
    """

    W: np.ndarray
    provenance: str
    epoch: Optional[int] = None
    epochs: int = 0
    accepted: int = 0
    coverage_feasible: int = 0

    @property
    def R_x(self) -> np.ndarray:
        return self.W @ self.W.conj().T


# ---------------------------------------------------------------------------
# Direct evaluation helpers
# ---------------------------------------------------------------------------

def sinr(W: np.ndarray, channels: ChannelSet) -> np.ndarray:
    """Per-user SINR ``|h_c^H w_c|^2 / (sum_{i != c} |h_c^H w_i|^2 + sigma_c^2)``."""
    G = np.abs(channels.h.conj() @ W) ** 2       # G[c, i] = |h_c^H w_i|^2
    C = channels.C
    if C == 0:
        return np.zeros(0)
    sig = np.diag(G)[:C]
    interf = G[:, :C].sum(axis=1) - sig
    return sig / (interf + channels.sigma2)


def sinr_covariance(R_c: Sequence[np.ndarray], channels: ChannelSet) -> np.ndarray:
    """SINR of covariances ``h^H R_c h / (h^H (R_x - R_c) h + sigma^2)``."""
    R_x = sum(R_c)
    out = []
    for c, h in enumerate(channels.h):
        s = float(np.real(h.conj() @ R_c[c] @ h))
        tot = float(np.real(h.conj() @ R_x @ h))
        out.append(s / (tot - s + channels.sigma2[c]))
    return np.array(out)


def beampattern_at(R_x: np.ndarray, phi) -> np.ndarray:
    A = steering_vector(R_x.shape[0], np.asarray(phi, dtype=float))
    return np.real(np.einsum("...i,ij,...j->...", A.conj(), R_x, A))


def coverage_margin(R_x: np.ndarray, partition: LosPartition) -> float:
    """``2 min_k a_k^H R a_k - max_k a_k^H R a_k``."""
    p = beampattern_at(R_x, partition.phi)
    return float(2.0 * p.min() - p.max())


def check_rank_one(R_c, epsilon_rank: float = RANK_ONE_RATIO):
    """``lambda_2 <= epsilon_rank * lambda_1`` for one matrix or each matrix of a list."""
    if isinstance(R_c, np.ndarray) and R_c.ndim == 2:
        ev = conic.extract_rank_profile(R_c)
        if ev[0] <= 0:
            return False
        return bool(len(ev) < 2 or ev[1] <= epsilon_rank * ev[0])
    return [check_rank_one(R, epsilon_rank) for R in R_c]


# ---------------------------------------------------------------------------
# Relaxed program
# ---------------------------------------------------------------------------

def _sum_inner(names: Sequence[str], A: np.ndarray) -> Affine:
    expr = Affine()
    for name in names:
        expr = expr + Affine.inner(name, A)
    return expr


def _pk_data(partition: LosPartition, geometry: ArrayGeometry, coefficient: str):
    """Coefficient matrices ``a a^H``, ``ad ad^H``, ``sym(ad a^H)`` and the scalar ``c_k``."""
    N = geometry.N_t
    a = steering_vector(N, partition.phi).reshape(partition.K, N)
    ad = steering_derivative(N, partition.phi).reshape(partition.K, N)
    out = []
    for k in range(partition.K):
        if coefficient == COEF_NUMERIC:
            b = steering_vector(geometry.N_r, partition.phi[k])
            ck = float(np.vdot(ad[k], ad[k]).real / np.vdot(b, b).real)
        elif coefficient == COEF_Z1:
            ck = float(z1(geometry.N_r, partition.phi[k]))
        else:
            raise ValueError(f"unknown coefficient mode {coefficient!r}")
        A = np.outer(a[k], a[k].conj())
        D = np.outer(ad[k], ad[k].conj())
        X = 0.5 * (np.outer(ad[k], a[k].conj()) + np.outer(a[k], ad[k].conj()))
        out.append((A, D, X, ck))
    return out


def build_sdr_problem(partition: LosPartition, geometry: ArrayGeometry,
                      constraints: DesignConstraints, coefficient: str = COEF_NUMERIC
                      ) -> ConicProblem:
    """The relaxed CRB-minimization program.

    Variables are ``R_0 .. R_{C-1}`` (one per user, or a single sensing
    covariance ``R_s`` when there are no users), ``t_0 .. t_{K-1}`` and
    ``t_min``.  When coverage is disabled ``t_min`` is pinned to zero.
    """
    N = geometry.N_t
    C = constraints.C
    if C > N:
        raise ValueError(f"C={C} users exceed N_t={N} antennas")
    if constraints.channels.h.shape[1] != N:
        raise ValueError("channel length does not match N_t")
    b = ProblemBuilder()
    names = [b.hermitian(f"R_{c}", N) for c in range(C)] if C else [b.hermitian("R_s", N)]
    t = [b.scalar(f"t_{k}") for k in range(partition.K)]
    t_min = b.scalar("t_min")
    l = partition.l
    b.minimize(sum((t[k] * (-float(l[k])) for k in range(partition.K)), Affine()))
    for k, (A, D, X, ck) in enumerate(_pk_data(partition, geometry, coefficient)):
        aRa = _sum_inner(names, A)
        b.add_lmi([[aRa * ck + _sum_inner(names, D) - t[k], _sum_inner(names, X)],
                   [_sum_inner(names, X), aRa]], name=f"P_{k}")
    for c in range(C):
        h = constraints.channels.h[c]
        H = np.outer(h, h.conj())
        Gam = constraints.Gamma
        b.add(Affine.inner(names[c], H) * (1.0 + 1.0 / Gam), ">=",
              _sum_inner(names, H) + float(constraints.channels.sigma2[c]), name=f"sinr_{c}")
    b.add(_sum_inner(names, np.eye(N)), "<=", constraints.P_t, name="power")
    if constraints.coverage_enabled:
        for k in range(partition.K):
            A = np.outer(steering_vector(N, partition.phi[k]), steering_vector(N, partition.phi[k]).conj())
            aRa = _sum_inner(names, A)
            b.add(aRa, ">=", t_min, name=f"cover_lo_{k}")
            b.add(aRa, "<=", t_min * 2.0, name=f"cover_hi_{k}")
    else:
        b.add(t_min, "==", 0.0, name="t_min_unused")
    return b.build()


def _as_sdr_solution(sol: ConicSolution, problem: ConicProblem, K: int) -> SdrSolution:
    names = [v.name for v in problem.matrix_vars]
    R_c = tuple(conic.hermitian_part(sol.matrices[n]) for n in names)
    R_x = sum(R_c)
    t = np.array([sol.scalars[f"t_{k}"] for k in range(K)])
    sensing_only = names == ["R_s"]
    flags = tuple(check_rank_one(R) for R in R_c)
    return SdrSolution(R_c, t, float(sol.scalars["t_min"]), R_x, -float(sol.objective), flags,
                       sol, sensing_only)


def solve_sdr(problem: ConicProblem, tolerance: float = 1e-8,
              max_iterations: int = 200) -> SdrSolution:
    """Solve the relaxed program; infeasibility and solver trouble raise."""
    sol = conic.solve(problem, tolerance, max_iterations)
    if sol.status == conic.INFEASIBLE:
        raise InfeasibleDesign("the relaxed beamforming program is infeasible", sol)
    if sol.status != conic.OPTIMAL:
        raise SolverFailure(f"conic solver returned {sol.status}: {sol.message}", sol)
    K = sum(1 for n in problem.scalar_vars if n.startswith("t_") and n != "t_min")
    return _as_sdr_solution(sol, problem, K)


# ---------------------------------------------------------------------------
# Rank-one extraction
# ---------------------------------------------------------------------------

def _psd_sqrt(R: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(conic.hermitian_part(R))
    lam = np.clip(lam, 0.0, None)
    return (V * np.sqrt(lam)) @ V.conj().T


def _principal(R: np.ndarray) -> Tuple[float, np.ndarray]:
    lam, V = np.linalg.eigh(conic.hermitian_part(R))
    return float(max(lam[-1], 0.0)), V[:, -1]


def _align_phase(w: np.ndarray, h: Optional[np.ndarray]) -> np.ndarray:
    """Fix the global phase: ``h^H w`` real positive, else the largest entry real positive."""
    ref = np.vdot(h, w) if h is not None else w[np.argmax(np.abs(w))]
    if abs(ref) == 0:
        return w
    return w * (abs(ref) / ref)


def sinr_power_solve(U: np.ndarray, channels: ChannelSet, Gamma: float):
    """Powers ``q`` that put every user's SINR exactly at ``Gamma`` for unit directions ``U``.

    Returns ``None`` when the system is singular or some power is not
    positive.
    """
    G = np.abs(channels.h.conj() @ U) ** 2
    F = -Gamma * G
    F[np.diag_indices_from(F)] = np.diag(G)
    eta = Gamma * np.asarray(channels.sigma2)
    if np.linalg.cond(F) > F_CONDITION_LIMIT:
        return None
    q = np.linalg.solve(F, eta)
    if not np.all(np.isfinite(q)) or np.any(q <= 0):
        return None
    return q


def _selection_crb(W, partition, geometry, params) -> float:
    try:
        return crb_phi_closed_form(partition, W @ W.conj().T, params, geometry)
    except (DegenerateBeampattern, SingularEfim):
        return math.inf


def extract_rank_one(solution: SdrSolution, constraints: DesignConstraints,
                     partition: LosPartition, geometry: ArrayGeometry, params: SensingParams,
                     N_e: int = DEFAULT_EPOCHS, seed: int = 0, method: str = GAUSSIAN,
                     power_fill: bool = False, epsilon_rank: float = RANK_ONE_RATIO
                     ) -> BeamformerSet:
    """Recover beamformer columns from the relaxed covariances.

    Rank-one covariances give ``w_c = sqrt(lambda_1) v_1`` directly.
    Otherwise each epoch draws directions ``R_c^{1/2} g_c`` (normalized),
    solves for the powers that meet every SINR with equality, and rejects
    the epoch if that fails or exceeds ``P_t``.  With ``power_fill`` the
    accepted powers are scaled up to use the whole budget, which only raises
    every SINR.  The accepted epoch with the smallest CRB among those
    meeting the coverage constraint wins; if none meets it, the epoch with
    the largest coverage margin is returned.
    """
    channels = constraints.channels
    C = channels.C
    N = geometry.N_t
    if solution.sensing_only or C == 0:
        lam, V = np.linalg.eigh(conic.hermitian_part(solution.R_x))
        keep = lam > epsilon_rank * max(lam[-1], 0.0)
        W = V[:, keep][:, ::-1] * np.sqrt(lam[keep][::-1])
        return BeamformerSet(W, SENSING_ONLY)
    if N_e < 1:
        raise ValueError("N_e must be at least 1")

    if all(check_rank_one(R, epsilon_rank) for R in solution.R_c):
        cols = []
        for c, R in enumerate(solution.R_c):
            lam, v = _principal(R)
            cols.append(_align_phase(math.sqrt(lam) * v, channels.h[c]))
        return BeamformerSet(np.column_stack(cols), DIRECT)

    roots = [_psd_sqrt(R) for R in solution.R_c]
    principals = [_principal(R)[1] for R in solution.R_c]
    P_t = constraints.P_t
    epochs = 1 if method == EIGENVECTOR else N_e
    best = None            # (crb, epoch, W) among coverage-feasible epochs
    fallback = None        # (margin, epoch, W)
    accepted = feasible = 0
    for e in range(epochs):
        if method == EIGENVECTOR:
            U = np.column_stack(principals)
        elif method == GAUSSIAN:
            rng = np.random.default_rng([seed, e])
            g = (rng.standard_normal((N, C)) + 1j * rng.standard_normal((N, C))) / math.sqrt(2.0)
            U = np.column_stack([roots[c] @ g[:, c] for c in range(C)])
            norms = np.linalg.norm(U, axis=0)
            if np.any(norms == 0):
                continue
            U = U / norms
        else:
            raise ValueError(f"unknown randomization method {method!r}")
        q = sinr_power_solve(U, channels, constraints.Gamma)
        if q is None:
            continue
        power = float(q.sum())
        if power > P_t * (1.0 + 1e-9):
            continue
        if power_fill:
            q = q * (P_t / power)
        W = U * np.sqrt(q)
        W = np.column_stack([_align_phase(W[:, c], channels.h[c]) for c in range(C)])
        accepted += 1
        R = W @ W.conj().T
        margin = coverage_margin(R, partition)
        covered = (not constraints.coverage_enabled) or margin >= -1e-9 * max(
            float(beampattern_at(R, partition.phi).max()), 1e-300)
        if covered:
            feasible += 1
            crb = _selection_crb(W, partition, geometry, params)
            if best is None or crb < best[0]:
                best = (crb, e, W)
        elif fallback is None or margin > fallback[0]:
            fallback = (margin, e, W)
    if best is not None:
        return BeamformerSet(best[2], RANDOMIZED, best[1], epochs, accepted, feasible)
    if fallback is not None:
        return BeamformerSet(fallback[2], FALLBACK, fallback[1], epochs, accepted, feasible)
    raise ExtractionFailed(f"all {epochs} randomization epochs were rejected")


# ---------------------------------------------------------------------------
# Reconstructed beampattern benchmarks
# ---------------------------------------------------------------------------

BP1 = "bp1"
BP2 = "bp2"


def _coef_to_herm(w: np.ndarray, n: int) -> np.ndarray:
    """Hermitian ``A`` with ``herm_coef(A) == w``."""
    w = np.asarray(w, dtype=float)
    return conic.params_to_herm(np.concatenate([w[:n], 0.5 * w[n:]]), n)


def desired_pattern(grid: np.ndarray, centre: float, beamwidth: float) -> np.ndarray:
    """Flat main beam of total width ``beamwidth`` centered at ``centre`` (radians)."""
    return (np.abs(grid - centre) <= 0.5 * beamwidth + 1e-12).astype(float)


def build_benchmark_problem(variant: str, centre: float, geometry: ArrayGeometry,
                            constraints: DesignConstraints, beamwidth_deg: float = 10.0,
                            grid_step_deg: float = 1.0, grid: Optional[np.ndarray] = None
                            ) -> ConicProblem:
    """Least-squares beampattern matching as a conic program.

    Minimizes ``sum_i (alpha P_des(theta_i) - a_i^H R_x a_i)^2`` over the
    covariances and a scale ``alpha >= 0`` under the SINR constraints.
    ``bp1`` spreads the power equally over the antennas
    (``diag(R_x) = P_t / N_t``) and ``bp2`` spends exactly ``P_t``.  The sum
    of squares is written as an epigraph LMI on a QR-compressed residual,
    which is exact because the beampattern is a trigonometric polynomial
    with ``2 N_t - 1`` real coefficients.
    """
    if variant not in (BP1, BP2):
        raise ValueError(f"unknown benchmark {variant!r}")
    N = geometry.N_t
    C = constraints.C
    if grid is None:
        grid = np.deg2rad(np.arange(-90.0, 90.0 + 0.5 * grid_step_deg, grid_step_deg))
    grid = np.asarray(grid, dtype=float)
    P_des = desired_pattern(grid, centre, math.radians(beamwidth_deg))
    A = steering_vector(N, grid).reshape(len(grid), N)
    Phi = np.array([conic.herm_coef(np.outer(a, a.conj())) for a in A])
    M = np.column_stack([P_des, -Phi])             # residual = M @ [alpha, params(R_x)]
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12))
    U = s[:rank, None] * Vt[:rank]                  # |M z| == |U z|

    b = ProblemBuilder()
    names = [b.hermitian(f"R_{c}", N) for c in range(C)] if C else [b.hermitian("R_s", N)]
    alpha = b.scalar("alpha")
    t = b.scalar("t")
    b.minimize(t)
    rows = []
    for r in range(rank):
        A_r = _coef_to_herm(U[r, 1:], N)
        rows.append(alpha * float(U[r, 0]) + _sum_inner(names, A_r))
    m = rank + 1
    entries = [[Affine() for _ in range(m)] for _ in range(m)]
    entries[0][0] = t
    for r in range(rank):
        entries[0][r + 1] = rows[r]
        entries[r + 1][r + 1] = Affine(1.0)
    b.add_lmi(entries, name="epigraph")
    b.add(alpha, ">=", 0.0, name="alpha_nonneg")
    for c in range(C):
        h = constraints.channels.h[c]
        H = np.outer(h, h.conj())
        b.add(Affine.inner(names[c], H) * (1.0 + 1.0 / constraints.Gamma), ">=",
              _sum_inner(names, H) + float(constraints.channels.sigma2[c]), name=f"sinr_{c}")
    if variant == BP1:
        for i in range(N):
            E = np.zeros((N, N))
            E[i, i] = 1.0
            b.add(_sum_inner(names, E), "==", constraints.P_t / N, name=f"power_{i}")
    else:
        b.add(_sum_inner(names, np.eye(N)), "==", constraints.P_t, name="power")
    return b.build()


def solve_benchmark(problem: ConicProblem, tolerance: float = 1e-8,
                    max_iterations: int = 200) -> SdrSolution:
    sol = conic.solve(problem, tolerance, max_iterations)
    if sol.status == conic.INFEASIBLE:
        raise InfeasibleDesign("the benchmark program is infeasible", sol)
    if sol.status != conic.OPTIMAL:
        raise SolverFailure(f"conic solver returned {sol.status}: {sol.message}", sol)
    names = [v.name for v in problem.matrix_vars]
    R_c = tuple(conic.hermitian_part(sol.matrices[n]) for n in names)
    flags = tuple(check_rank_one(R) for R in R_c)
    return SdrSolution(R_c, np.zeros(0), 0.0, sum(R_c), float(sol.objective), flags, sol,
                       names == ["R_s"])


def benchmark_beampattern_design(variant: str, partition: LosPartition, geometry: ArrayGeometry,
                                 constraints: DesignConstraints, params: SensingParams,
                                 centre: float, beamwidth_deg: float = 10.0,
                                 grid_step_deg: float = 1.0, N_e: int = DEFAULT_EPOCHS,
                                 seed: int = 0, power_fill: bool = True,
                                 tolerance: float = 1e-8) -> BeamformerSet:
    """Solve a benchmark and pass it through the same extraction as the CRB design."""
    problem = build_benchmark_problem(variant, centre, geometry, constraints, beamwidth_deg,
                                      grid_step_deg)
    sol = solve_benchmark(problem, tolerance)
    return extract_rank_one(sol, constraints, partition, geometry, params, N_e, seed,
                            power_fill=power_fill)
