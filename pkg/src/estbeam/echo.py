"""Echo synthesis and a concentrated least-squares direction estimator.

The received echo is

    y[n] = g sum_k sqrt(l_k) alpha_k b(phi_k) a(phi_k)^H x[n - D_k] + z[n]

with integer round-trip delays ``D_k = round(2 d_k / c * fs)``.  The
transmitted block is treated as periodic, so every observed sample carries
the full superposition of delayed copies.  The sensing noise level is a
power spectral density: each sample has variance ``sigma_s2 * fs``, which
makes a block of ``N`` samples carry the same information as an
observation of length ``t_s = N / fs`` in the continuous-time bound.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Optional, Sequence, Tuple

import numpy as np

from .array import ArrayGeometry, SPEED_OF_LIGHT, steering_vector
from .crb import SensingParams
from .errors import DelayOverflow
from .geometry import ContourModel, LosPartition, TargetPose, compute_los_partition

DEFAULT_SAMPLE_RATE_HZ = 200e6
DEFAULT_NUM_SAMPLES = 512


@dataclasses.dataclass(frozen=True)
class SimConfig:
    sample_rate: float = DEFAULT_SAMPLE_RATE_HZ
    num_samples: int = DEFAULT_NUM_SAMPLES
    seed: int = 0
    rcs_redraw: bool = True

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if int(self.num_samples) != self.num_samples or self.num_samples < 1:
            raise ValueError("num_samples must be a positive integer")

    @property
    def duration(self) -> float:
        """Observation length ``num_samples / sample_rate`` in seconds."""
        return self.num_samples / self.sample_rate


@dataclasses.dataclass(frozen=True)
class EchoObservation:
    y: np.ndarray
    alpha: np.ndarray
    pose: TargetPose
    delays: np.ndarray


def observation_params(params: SensingParams, config: SimConfig, warn: bool = True) -> SensingParams:
    """``params`` with ``t_s`` set to the simulated block length."""
    t_s = config.duration
    if warn and not math.isclose(params.t_s, t_s, rel_tol=1e-9):
        warnings.warn(f"scenario t_s={params.t_s:g} s differs from the simulated block "
                      f"{t_s:g} s; the bound is reported for the simulated block",
                      UserWarning, stacklevel=2)
    return params.replace(t_s=t_s)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def synthesize_tx(W: np.ndarray, config: SimConfig,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``x = W c`` with unit-power, mutually uncorrelated Gaussian symbols ``c``."""
    W = np.asarray(W, dtype=complex)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    c = _cn(rng, (W.shape[1], config.num_samples))
    return W @ c


def round_trip_delays(d: np.ndarray, config: SimConfig) -> np.ndarray:
    D = np.rint(2.0 * np.asarray(d) / SPEED_OF_LIGHT * config.sample_rate).astype(int)
    if np.any(D >= config.num_samples):
        raise DelayOverflow(f"delay of {int(D.max())} samples does not fit in "
                            f"{config.num_samples} samples")
    return D


def _delayed(x: np.ndarray, D: int) -> np.ndarray:
    return np.roll(x, int(D), axis=-1)


def echo_components(x: np.ndarray, partition: LosPartition, params: SensingParams,
                    geometry: ArrayGeometry, config: SimConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Unit-gain echo of every subsection (``K x N_r x N``) and the delays."""
    D = round_trip_delays(partition.d, config)
    a = steering_vector(geometry.N_t, partition.phi).reshape(partition.K, geometry.N_t)
    b = steering_vector(geometry.N_r, partition.phi).reshape(partition.K, geometry.N_r)
    out = np.empty((partition.K, geometry.N_r, x.shape[1]), dtype=complex)
    for k in range(partition.K):
        s = a[k].conj() @ _delayed(x, D[k])
        out[k] = params.g * math.sqrt(partition.l[k]) * np.outer(b[k], s)
    return out, D


def synthesize_echo(x: np.ndarray, partition: LosPartition, pose: TargetPose,
                    params: SensingParams, geometry: ArrayGeometry, config: SimConfig,
                    rng: Optional[np.random.Generator] = None,
                    alpha: Optional[np.ndarray] = None) -> EchoObservation:
    """Noisy echo with ``alpha_k ~ CN(0, 1)`` unless ``alpha`` is given."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    comps, D = echo_components(x, partition, params, geometry, config)
    if alpha is None:
        alpha = _cn(rng, partition.K)
    alpha = np.asarray(alpha, dtype=complex)
    e = np.tensordot(alpha, comps, axes=1)
    noise_var = params.sigma_s2 * config.sample_rate
    y = e + math.sqrt(noise_var) * _cn(rng, e.shape) if noise_var > 0 else e
    return EchoObservation(y, alpha, pose, D)


class DirectionEstimator:
    """Grid search on the concentrated least-squares residual over ``phi_o``.

    Geometry for every grid candidate is computed once, so the estimator
    can be reused across Monte-Carlo runs.  The grid minimum is refined by a
    parabola through it and its two neighbours, clipped to one grid step.
    """

    def __init__(self, model: ContourModel, pose: TargetPose, K: int, geometry: ArrayGeometry,
                 params: SensingParams, config: SimConfig, grid: Tuple[float, float, float],
                 samples: int = 4096):
        lo, hi, step = grid
        if not (hi > lo and step > 0):
            raise ValueError("grid must satisfy lo < hi and step > 0")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        self.grid = lo + step * np.arange(n)
        self.step = step
        self.geometry = geometry
        self.params = params
        self.config = config
        self._cand = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for phi in self.grid:
                part = compute_los_partition(model, pose.replace(phi_o=float(phi)), K, samples)
                D = round_trip_delays(part.d, config)
                a = steering_vector(geometry.N_t, part.phi).reshape(K, geometry.N_t)
                b = steering_vector(geometry.N_r, part.phi).reshape(K, geometry.N_r)
                scale = params.g * np.sqrt(part.l)
                self._cand.append((a, b, D, scale))

    def residuals(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Residual energy after the least-squares gain fit, per grid candidate."""
        yy = float(np.vdot(y, y).real)
        out = np.empty(len(self.grid))
        shifts = {}
        for i, (a, b, D, scale) in enumerate(self._cand):
            K = len(D)
            S = np.empty((K, x.shape[1]), dtype=complex)
            for k in range(K):
                key = int(D[k])
                if key not in shifts:
                    shifts[key] = _delayed(x, key)
                S[k] = scale[k] * (a[k].conj() @ shifts[key])
            # templates T_k = b_k S_k^T; Gram and correlations without forming them
            Gram = (b.conj() @ b.T) * (S.conj() @ S.T)
            z = np.einsum("kr,rn,kn->k", b.conj(), y, S.conj())
            coef, *_ = np.linalg.lstsq(Gram, z, rcond=1e-12)
            out[i] = yy - float(np.real(np.vdot(z, coef)))
        return out

    def estimate(self, y: np.ndarray, x: np.ndarray) -> float:
        r = self.residuals(y, x)
        i = int(np.argmin(r))
        phi = float(self.grid[i])
        if 0 < i < len(r) - 1:
            denom = r[i - 1] - 2.0 * r[i] + r[i + 1]
            if denom > 0:
                shift = 0.5 * (r[i - 1] - r[i + 1]) / denom
                phi += float(np.clip(shift, -1.0, 1.0)) * self.step
        return phi


def estimate_direction(obs: EchoObservation, x: np.ndarray, model: ContourModel, K: int,
                       geometry: ArrayGeometry, params: SensingParams, config: SimConfig,
                       grid: Tuple[float, float, float]) -> float:
    """Estimate ``phi_o`` with every other pose parameter taken from ``obs.pose``."""
    est = DirectionEstimator(model, obs.pose, K, geometry, params, config, grid)
    return est.estimate(obs.y, x)
