"""Cramer-Rao bound on the target direction.

Two independent evaluations are provided:

* :func:`crb_phi_closed_form` evaluates the per-subsection closed form
  ``[(2 g^2 N_r t_s / sigma^2) sum_k l_k (Z1 aRa + adRad - (2 Re adRa)^2 / (4 aRa))]^-1``.
* :func:`crb_phi_oracle` assembles the Fisher information of
  ``kappa_1 = [d_o, phi_o, varphi]`` and the path-loss coefficient ``g``,
  eliminates ``g`` by a Schur complement and inverts the result.

For a single point-like subsection the two coincide; with several
subsections the closed form applies the Schur correction per subsection
while the oracle applies it to the aggregate, so they differ slightly.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional

import numpy as np

from .array import ArrayGeometry, DEFAULT_BANDWIDTH_HZ, quadratic_forms, z1, z2
from .errors import DegenerateBeampattern, SingularEfim, SingularPathLossInfo
from .geometry import APPROXIMATE, LosPartition, TargetPose, ContourModel, pose_jacobians

#: Evaluate ``Z1`` at each subsection bearing ``phi_k`` (what the receive
#: derivative norm ``|db(phi_k)/dphi|^2 / N_r`` actually equals).
Z1_SUBSECTION = "subsection"
#: Evaluate ``Z1`` once at the target orientation ``varphi``.
Z1_ORIENTATION = "orientation"

DEGENERACY_RATIO = 1e-12
EFIM_CONDITION_LIMIT = 1e12


@dataclasses.dataclass(frozen=True)
class SensingParams:
    """Path loss ``g`` (1/m^2), noise ``sigma_s2`` (W), observation ``t_s`` (s), bandwidth ``B`` (Hz)."""

    g: float
    sigma_s2: float
    t_s: float = 1.0
    B: float = DEFAULT_BANDWIDTH_HZ

    def __post_init__(self):
        for name in ("g", "sigma_s2", "t_s", "B"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @classmethod
    def for_range(cls, d_o: float, sigma_s2: float, t_s: float = 1.0,
                  B: float = DEFAULT_BANDWIDTH_HZ) -> "SensingParams":
        return cls(1.0 / d_o ** 2, sigma_s2, t_s, B)

    def replace(self, **changes) -> "SensingParams":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class FimBlocks:
    """FIM of ``kappa_1`` (3x3), of ``g`` (scalar) and their cross term (3-vector)."""

    I_k1: np.ndarray
    i_g: float
    i_k1g: np.ndarray


@dataclasses.dataclass(frozen=True)
class CrbResult:
    crb_phi_closed: float
    crb_k1_matrix: np.ndarray
    Z1: np.ndarray
    Z2: float
    bracket: np.ndarray
    aRa: np.ndarray
    adRad: np.ndarray
    adRa: np.ndarray


def compute_Z1(N_r: int, angle) -> np.ndarray:
    """``pi^2 (N_r^2 - 1) cos^2(angle) / 12``."""
    return z1(N_r, angle)


def compute_Z2(B: float) -> float:
    """``(4 pi B / c)^2``."""
    return z2(B)


def compute_Xk(partition: LosPartition, pose: TargetPose, model: ContourModel, k: int) -> float:
    """Squared harmonic cross term of subsection ``k`` (0-based) for diagnostics."""
    u = partition.subsections[k].u_k
    q = np.arange(1, model.Q + 1)
    sig = np.cos(q * u)
    vs = np.sin(q * u)
    delta = pose.phi_o - pose.varphi
    val = sig @ np.asarray(model.m) * math.sin(delta) - vs @ np.asarray(model.n) * math.cos(delta)
    return float(val ** 2)


def _z1_values(partition: LosPartition, geometry: ArrayGeometry, z1_mode: str,
               varphi: Optional[float]) -> np.ndarray:
    if z1_mode == Z1_SUBSECTION:
        return z1(geometry.N_r, partition.phi)
    if z1_mode == Z1_ORIENTATION:
        if varphi is None:
            raise ValueError("the orientation Z1 mode needs varphi")
        return np.full(partition.K, float(z1(geometry.N_r, varphi)))
    raise ValueError(f"unknown Z1 mode {z1_mode!r}")


def _forms(partition: LosPartition, R_x: np.ndarray):
    R_x = np.asarray(R_x, dtype=complex)
    aRa, adRad, adRa = quadratic_forms(R_x, partition.phi)
    trace = float(np.real(np.trace(R_x)))
    if np.any(aRa <= DEGENERACY_RATIO * max(trace, 0.0)) or trace <= 0:
        k = int(np.argmin(aRa))
        raise DegenerateBeampattern(
            f"subsection {k} receives a^H R a = {aRa[k]:.3e} (trace {trace:.3e})")
    return aRa, adRad, adRa


def bracket_terms(partition: LosPartition, R_x: np.ndarray, geometry: ArrayGeometry,
                  z1_mode: str = Z1_SUBSECTION, varphi: Optional[float] = None) -> np.ndarray:
    """Per-subsection bracket ``Z1 aRa + adRad - (Re adRa)^2 / aRa`` (unweighted)."""
    aRa, adRad, adRa = _forms(partition, R_x)
    Z1 = _z1_values(partition, geometry, z1_mode, varphi)
    return Z1 * aRa + adRad - (2.0 * adRa) ** 2 / (4.0 * aRa)


def crb_phi_closed_form(partition: LosPartition, R_x: np.ndarray, params: SensingParams,
                        geometry: ArrayGeometry, z1_mode: str = Z1_SUBSECTION,
                        varphi: Optional[float] = None) -> float:
    """Closed-form CRB on ``phi_o`` (rad^2)."""
    br = bracket_terms(partition, R_x, geometry, z1_mode, varphi)
    info = 2.0 * params.g ** 2 * geometry.N_r * params.t_s / params.sigma_s2 * float(partition.l @ br)
    if not info > 0:
        raise SingularEfim(f"direction information {info:.3e} is not positive")
    return 1.0 / info


def assemble_fim_blocks(partition: LosPartition, pose: TargetPose, R_x: np.ndarray,
                        params: SensingParams, geometry: ArrayGeometry, mode: str = APPROXIMATE,
                        z1_mode: str = Z1_SUBSECTION) -> FimBlocks:
    """Fisher information blocks of ``[g, kappa_1]``.

    The cross term ``i_{kappa_1, g}`` follows the chain rule through the
    bearing Jacobian ``eta``; with the approximate Jacobian it reduces to
    ``[0, (g N_r t_s / sigma^2) sum_k l_k (adRa + aRad), 0]``.
    """
    aRa, adRad, adRa = _forms(partition, R_x)
    Z1 = _z1_values(partition, geometry, z1_mode, pose.varphi)
    Z2 = z2(params.B)
    mu, eta = pose_jacobians(partition, pose, mode)
    l = partition.l
    g, s2, ts, Nr = params.g, params.sigma_s2, params.t_s, geometry.N_r
    w_range = l * aRa * Z2
    w_bear = l * (Z1 * aRa + adRad) * ts
    I = (2.0 * g ** 2 * Nr / s2) * (mu.T @ (w_range[:, None] * mu) + eta.T @ (w_bear[:, None] * eta))
    I = 0.5 * (I + I.T)
    i_g = 2.0 * Nr * ts / s2 * float(l @ aRa)
    i_k1g = (2.0 * g * Nr * ts / s2) * (eta.T @ (l * adRa))
    return FimBlocks(I, i_g, i_k1g)


def efim_schur(blocks: FimBlocks) -> np.ndarray:
    """Equivalent FIM of ``kappa_1`` after eliminating ``g``."""
    if not blocks.i_g > 0:
        raise SingularPathLossInfo(f"path-loss information {blocks.i_g:.3e} is not positive")
    J = blocks.I_k1 - np.outer(blocks.i_k1g, blocks.i_k1g) / blocks.i_g
    return 0.5 * (J + J.T)


def _invert_efim(J: np.ndarray) -> np.ndarray:
    """Inverse of ``J`` on its structurally nonzero rows; dropped parameters get ``inf``."""
    keep = np.flatnonzero(np.any(J != 0.0, axis=1))
    out = np.zeros_like(J)
    out[np.diag_indices_from(out)] = np.inf
    if keep.size == 0:
        raise SingularEfim("the equivalent FIM is identically zero")
    sub = J[np.ix_(keep, keep)]
    cond = np.linalg.cond(sub)
    if not np.isfinite(cond) or cond > EFIM_CONDITION_LIMIT:
        raise SingularEfim(f"equivalent FIM condition number {cond:.3e}")
    inv = np.linalg.inv(sub)
    out[np.ix_(keep, keep)] = 0.5 * (inv + inv.T)
    return out


def crb_k1(partition: LosPartition, pose: TargetPose, R_x: np.ndarray, params: SensingParams,
           geometry: ArrayGeometry, mode: str = APPROXIMATE,
           z1_mode: str = Z1_SUBSECTION) -> np.ndarray:
    """``J(kappa_1)^-1`` as a 3x3 matrix ordered ``[d_o, phi_o, varphi]``."""
    return _invert_efim(efim_schur(assemble_fim_blocks(partition, pose, R_x, params, geometry,
                                                       mode, z1_mode)))


def crb_phi_oracle(partition: LosPartition, pose: TargetPose, R_x: np.ndarray,
                   params: SensingParams, geometry: ArrayGeometry, mode: str = APPROXIMATE,
                   z1_mode: str = Z1_SUBSECTION) -> float:
    """CRB on ``phi_o`` from the inverted equivalent FIM (rad^2)."""
    val = crb_k1(partition, pose, R_x, params, geometry, mode, z1_mode)[1, 1]
    if not np.isfinite(val):
        raise SingularEfim("the equivalent FIM carries no information on phi_o")
    return float(val)


def evaluate_crb(partition: LosPartition, pose: TargetPose, R_x: np.ndarray,
                 params: SensingParams, geometry: ArrayGeometry, mode: str = APPROXIMATE,
                 z1_mode: str = Z1_SUBSECTION) -> CrbResult:
    """Closed form, oracle matrix and per-subsection diagnostics in one record."""
    aRa, adRad, adRa = _forms(partition, R_x)
    Z1 = _z1_values(partition, geometry, z1_mode, pose.varphi)
    br = Z1 * aRa + adRad - adRa ** 2 / aRa
    return CrbResult(
        crb_phi_closed=crb_phi_closed_form(partition, R_x, params, geometry, z1_mode, pose.varphi),
        crb_k1_matrix=crb_k1(partition, pose, R_x, params, geometry, mode, z1_mode),
        Z1=Z1, Z2=z2(params.B), bracket=br, aRa=aRa, adRad=adRad, adRa=adRa)
