"""Finite model of a photodetector.

A detector has a pointer (0 = idle, 1 = absorbed a photon) and ``M`` internal
states drawn from a distribution ``p``. Absorption maps internal state
``|mu>`` to ``|mu'> = U |mu>`` with ``U`` a Haar-random unitary, so the
overlap ``<mu|mu'>`` is the diagonal element ``U[mu, mu]`` and the
detector's decoherence factor is ``sum_mu p(mu) U[mu, mu]``.
"""
from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from .rng import DOMAIN_DETECTOR, derive_key


class DetectorId(enum.IntEnum):
    """The four detectors, in array order."""

    LV = 0
    LH = 1
    RV = 2
    RH = 3

    @property
    def station(self) -> str:
        return self.name[0]

    @property
    def port(self) -> str:
        return self.name[1]


DETECTOR_ORDER = (DetectorId.LV, DetectorId.LH, DetectorId.RV, DetectorId.RH)


@dataclass(frozen=True, eq=False)
class InternalDistribution:
    weights: np.ndarray
    kind: str = "custom"
    beta: float | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size < 1:
            raise ValueError("an internal distribution needs at least one state")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return self.weights.size

    @property
    def purity(self) -> float:
        """``sum_mu p(mu)^2``."""
        return float(np.dot(self.weights, self.weights))

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.weights)
        return c / c[-1]

    @classmethod
    def uniform(cls, M: int) -> InternalDistribution:
        _check_dim(M)
        return cls(np.full(M, 1.0 / M), "uniform")

    @classmethod
    def gibbs(cls, M: int, beta: float) -> InternalDistribution:
        """Canonical weights on the energy ladder ``E_mu = mu / M``."""
        _check_dim(M)
        beta = float(beta)
        if math.isnan(beta) or beta < 0:
            raise ValueError(f"beta must be nonnegative, got {beta}")
        energies = np.arange(M) / M
        if math.isinf(beta):
            w = (energies == 0).astype(float)
        else:
            w = np.exp(-beta * energies)
        return cls(w / w.sum(), "gibbs", beta)

    def label(self) -> str:
        if self.kind == "gibbs":
            return f"gibbs:{self.beta:g}"
        return self.kind


def _check_dim(M: int) -> None:
    if int(M) != M or M < 1:
        raise ValueError(f"internal dimension M must be a positive integer, got {M}")


def parse_dist(text: str, M: int) -> InternalDistribution:
    """Build a distribution from ``"uniform"`` or ``"gibbs:<beta>"``."""
    kind, _, arg = text.strip().partition(":")
    kind = kind.lower()
    if kind == "uniform" and not arg:
        return InternalDistribution.uniform(M)
    if kind == "gibbs":
        if not arg:
            raise ValueError("gibbs distribution needs a beta, e.g. gibbs:2.0")
        return InternalDistribution.gibbs(M, float(arg))
    raise ValueError(f"unknown distribution {text!r}; expected uniform or gibbs:<beta>")


def haar_unitary(M: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``M x M`` unitary.

    QR of a complex Ginibre matrix, with the columns of Q rephased so that R
    has a positive real diagonal; without the rephasing the result is not
    Haar distributed.
    """
    z = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


@dataclass(frozen=True, eq=False)
class DetectorModel:
    id: DetectorId
    dist: InternalDistribution
    absorption: np.ndarray
    seed: int

    def __post_init__(self):
        u = np.array(self.absorption, dtype=complex)
        M = self.dist.M
        if u.shape != (M, M):
            raise ValueError(f"absorption must be {M}x{M}, got {u.shape}")
        if np.max(np.abs(u.conj().T @ u - np.eye(M))) > 1e-10:
            raise ValueError("absorption matrix is not unitary")
        u.flags.writeable = False
        object.__setattr__(self, "id", DetectorId(self.id))
        object.__setattr__(self, "absorption", u)

    @property
    def M(self) -> int:
        return self.dist.M

    def with_absorption(self, absorption) -> DetectorModel:
        return replace(self, absorption=absorption)


def make_detector(
    id: DetectorId | str,
    M: int,
    dist: str | InternalDistribution = "uniform",
    seed: int = 0,
    absorption: str | np.ndarray = "haar",
) -> DetectorModel:
    """Build one detector.

    ``dist`` is ``"uniform"``, ``"gibbs:<beta>"`` or a ready distribution.
    ``absorption`` is ``"haar"`` (drawn from ``seed``), ``"identity"``, or an
    explicit unitary.
    """
    _check_dim(M)
    did = DetectorId[id] if isinstance(id, str) else DetectorId(id)
    if isinstance(dist, str):
        dist = parse_dist(dist, M)
    elif dist.M != M:
        raise ValueError(f"distribution has {dist.M} states, expected {M}")
    if isinstance(absorption, str):
        if absorption == "haar":
            u = haar_unitary(M, np.random.default_rng(seed))
        elif absorption == "identity":
            u = np.eye(M, dtype=complex)
        else:
            raise ValueError(f"unknown absorption model {absorption!r}")
    else:
        u = absorption
    return DetectorModel(did, dist, u, int(seed))


def make_array(
    seed: int,
    M: int | Sequence[int],
    dist: str = "uniform",
    absorption: str = "haar",
) -> tuple[DetectorModel, ...]:
    """The four detectors of one experiment.

    Each detector's seed is derived from ``(seed, detector index)`` so the
    four absorption unitaries are independent.
    """
    dims = (M,) * 4 if isinstance(M, (int, np.integer)) else tuple(M)
    if len(dims) != 4:
        raise ValueError(f"need one internal dimension or four, got {len(dims)}")
    return tuple(
        make_detector(d, dims[d], dist, derive_key(seed, DOMAIN_DETECTOR, d), absorption)
        for d in DETECTOR_ORDER
    )


def decoherence_factor(d: DetectorModel) -> complex:
    """``sum_mu p(mu) <mu|mu'>``."""
    return complex(np.dot(d.dist.weights, np.diagonal(d.absorption)))


def overlap(d: DetectorModel, mu: int) -> complex:
    """``<mu|mu'> = U[mu, mu]``."""
    if not 0 <= mu < d.M:
        raise IndexError(f"internal index {mu} out of range for M={d.M}")
    return complex(d.absorption[mu, mu])


def sample_internal(d: DetectorModel, rng) -> int:
    """Draw an internal state index from ``d``'s distribution.

    ``rng`` needs only a ``random()`` method returning a float in [0, 1).
    """
    cdf = d.dist.cdf
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), d.M - 1)
