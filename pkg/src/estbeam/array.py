"""Half-wavelength uniform linear array responses.

Element phases are referenced to the array center, which makes
``a(phi)^H da/dphi`` vanish because the phase weights sum to zero::

    a(phi)_n = exp(j pi sin(phi) ((N - 1) / 2 - n)),  n = 0, ..., N - 1
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence, Tuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_BANDWIDTH_HZ = 100e6


def _centred_index(N: int) -> np.ndarray:
    if N < 1:
        raise ValueError("array size must be positive")
    return (N - 1) / 2.0 - np.arange(N)


def steering_vector(N: int, phi) -> np.ndarray:
    """Steering vector(s); a scalar ``phi`` gives shape ``(N,)``, an array gives ``(..., N)``."""
    phi = np.asarray(phi, dtype=float)
    return np.exp(1j * math.pi * np.multiply.outer(np.sin(phi), _centred_index(N)))


def steering_derivative(N: int, phi) -> np.ndarray:
    """``d a / d phi = j pi cos(phi) diag(centred index) a(phi)``."""
    phi = np.asarray(phi, dtype=float)
    n = _centred_index(N)
    scale = 1j * math.pi * np.multiply.outer(np.cos(phi), n)
    return scale * steering_vector(N, phi)


def z1(N_r: int, phi) -> np.ndarray:
    """``|db/dphi|^2 / N_r = pi^2 cos^2(phi) (N_r^2 - 1) / 12``."""
    phi = np.asarray(phi, dtype=float)
    return math.pi ** 2 * np.cos(phi) ** 2 * (N_r ** 2 - 1) / 12.0


def z2(bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ, c: float = SPEED_OF_LIGHT) -> float:
    """Range-derivative factor ``(4 pi B / c)^2``."""
    return (4.0 * math.pi * bandwidth_hz / c) ** 2


def beampattern(R: np.ndarray, phi) -> np.ndarray:
    """Transmit beampattern ``a(phi)^H R a(phi)`` (real part)."""
    N = R.shape[0]
    A = steering_vector(N, phi)
    return np.real(np.einsum("...i,ij,...j->...", A.conj(), R, A))


def quadratic_forms(R: np.ndarray, phi) -> tuple:
    """``(a^H R a, adot^H R adot, Re adot^H R a)`` for each bearing in ``phi``."""
    N = R.shape[0]
    a = steering_vector(N, phi)
    ad = steering_derivative(N, phi)
    Ra = a @ R.T            # rows are R a_k
    Rad = ad @ R.T
    aRa = np.real(np.einsum("...i,...i->...", a.conj(), Ra))
    adRad = np.real(np.einsum("...i,...i->...", ad.conj(), Rad))
    adRa = np.real(np.einsum("...i,...i->...", ad.conj(), Ra))
    return aRa, adRad, adRa


@dataclasses.dataclass(frozen=True)
class ArrayGeometry:
    """Transmit and receive element counts of the co-located ULAs."""

    N_t: int
    N_r: int

    def __post_init__(self):
        if int(self.N_t) != self.N_t or int(self.N_r) != self.N_r or self.N_t < 1 or self.N_r < 1:
            raise ValueError("N_t and N_r must be positive integers")


def steer_tx(geometry: ArrayGeometry, phi) -> np.ndarray:
    return steering_vector(geometry.N_t, phi)


def steer_rx(geometry: ArrayGeometry, phi) -> np.ndarray:
    return steering_vector(geometry.N_r, phi)


def steer_tx_deriv(geometry: ArrayGeometry, phi) -> np.ndarray:
    return steering_derivative(geometry.N_t, phi)


def steer_rx_deriv(geometry: ArrayGeometry, phi) -> np.ndarray:
    return steering_derivative(geometry.N_r, phi)


@dataclasses.dataclass(frozen=True)
class ChannelSet:
    """Downlink channels stored as rows ``h[c]`` plus per-user noise powers (W)."""

    h: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=complex, copy=True)
        if h.ndim == 1:
            h = h.reshape(1, -1) if h.size else h.reshape(0, 0)
        sigma2 = np.array(self.sigma2, dtype=float, copy=True).reshape(-1)
        if h.shape[0] != sigma2.shape[0]:
            raise ValueError("one noise power per user is required")
        if not np.all(np.isfinite(h)) or not np.all(np.isfinite(sigma2)):
            raise ValueError("channel entries must be finite")
        if h.shape[0] and not np.all(np.abs(h).max(axis=1) > 0):
            raise ValueError("every user needs a nonzero channel")
        if np.any(sigma2 <= 0):
            raise ValueError("noise powers must be positive")
        h.setflags(write=False)
        sigma2.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def C(self) -> int:
        return self.h.shape[0]

    @classmethod
    def empty(cls, N_t: int) -> "ChannelSet":
        return cls(np.zeros((0, N_t), dtype=complex), np.zeros(0))


@dataclasses.dataclass(frozen=True)
class Multipath:
    """``L`` extra single-ray paths with gain power ``decay**l`` and uniform angles."""

    L: int
    decay: float = 0.5


def generate_channels(geometry: ArrayGeometry, user_angles: Sequence[float],
                      sigma2, model: Optional[Multipath] = None, seed: int = 0,
                      beta: float = 1.0) -> ChannelSet:
    """Per-user channels ``h_c = beta a(phi_c)`` plus optional scattered paths.

    ``sigma2`` is a scalar or one noise power per user.  The multipath
    draws come from a generator seeded by ``seed`` only, so the result is
    reproducible.
    """
    angles = np.asarray(list(user_angles), dtype=float)
    if np.any(np.abs(angles) >= math.pi / 2):
        raise ValueError("user angles must lie in (-pi/2, pi/2)")
    C = angles.size
    sig = np.broadcast_to(np.asarray(sigma2, dtype=float), (C,)).copy()
    if C == 0:
        return ChannelSet.empty(geometry.N_t)
    h = beta * steering_vector(geometry.N_t, angles).reshape(C, geometry.N_t)
    if model is not None and model.L > 0:
        rng = np.random.default_rng(seed)
        for c in range(C):
            for ell in range(1, model.L + 1):
                gain = math.sqrt(model.decay ** ell / 2.0) * (rng.standard_normal() + 1j * rng.standard_normal())
                theta = rng.uniform(-math.pi / 2, math.pi / 2)
                h[c] += gain * steering_vector(geometry.N_t, theta)
    return ChannelSet(h, sig)
