"""Polarization states of the photon pair.

Two-photon amplitudes are stored in the order ``(V_L V_R, V_L H_R, H_L V_R,
H_L H_R)``; reshaped to 2x2 the row index is the left photon and the column
index the right photon, with 0 = V and 1 = H.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qstate

ATOL = 1e-12


def canonical_angle(theta: float) -> float:
    """Reduce a polarizer angle to [0, pi).

    Rotating a polarization basis by pi only flips the sign of both basis
    vectors, so outcome statistics are pi-periodic.
    """
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta}")
    t = math.fmod(theta, math.pi)
    if t < 0:
        t += math.pi
    # fmod can round up to exactly pi for tiny negative inputs
    return 0.0 if t >= math.pi else t


@dataclass(frozen=True)
class MeasurementSetting:
    theta: float
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "theta", canonical_angle(self.theta))


@dataclass(frozen=True, eq=False)
class PhotonPairState:
    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        if amps.shape != (4,):
            raise ValueError("a photon pair has exactly four amplitudes")
        if abs(float(np.vdot(amps, amps).real) - 1.0) > ATOL:
            raise ValueError("photon pair state must be normalized")
        amps.flags.writeable = False
        object.__setattr__(self, "amps", amps)

    def as_matrix(self) -> np.ndarray:
        return self.amps.reshape(2, 2)

    def as_ket(self) -> qstate.Ket:
        return qstate.Ket((2, 2), self.amps)


def make_singlet() -> PhotonPairState:
    """``(|V>_L |H>_R - |H>_L |V>_R) / sqrt(2)``."""
    s = 1.0 / math.sqrt(2.0)
    return PhotonPairState(np.array([0.0, s, -s, 0.0]))


def basis_rotation(theta: float) -> np.ndarray:
    """Rows are the rotated basis vectors ``V'``, ``H'`` in (V, H) coordinates."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta}")
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def expand_in_settings(state: PhotonPairState, theta_rel: float) -> np.ndarray:
    """Amplitudes with the right photon expressed in the basis rotated by ``theta_rel``.

    Returns the four amplitudes over ``(V_L V'_R, V_L H'_R, H_L V'_R, H_L H'_R)``.
    For the singlet these are ``(sin, cos, -cos, sin) / sqrt(2)``.
    """
    return expand_in_two_settings(state, 0.0, theta_rel)


def expand_in_two_settings(state: PhotonPairState, theta_a: float, theta_b: float) -> np.ndarray:
    """Amplitudes with the left basis rotated by ``theta_a`` and the right by ``theta_b``."""
    ra, rb = basis_rotation(theta_a), basis_rotation(theta_b)
    # <l'| <r'| psi> = sum_{l,r} Ra[l', l] psi[l, r] Rb[r', r]
    return (ra @ state.as_matrix() @ rb.T).reshape(-1)
