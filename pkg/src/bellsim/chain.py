"""The measurement chain: detector-array branches and reduced density matrices.

Two independent routes to the reduced density matrix over pointer
configurations are provided. :func:`reduced_density_structured` uses the
factorization of the internal-state trace into one sum per detector.
:func:`reduced_density_dense_oracle` builds every ensemble element as a dense
ket over pointers and internal states, mixes them and traces the internals
out with :func:`bellsim.qstate.partial_trace`. The oracle is only feasible
for small ``M``.
"""
from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import qstate
from .detector import DETECTOR_ORDER, DetectorModel, decoherence_factor, make_array
from .photon import expand_in_settings, make_singlet
from .rng import DOMAIN_SCAN, derive_key

PRUNE = 1e-14
ATOL = 1e-12


@dataclass(frozen=True, order=True)
class PointerConfiguration:
    """Pointer bits of the array, ordered (LV, LH, RV, RH)."""

    bits: tuple[int, int, int, int]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != 4 or any(b not in (0, 1) for b in bits):
            raise ValueError(f"a pointer configuration is four bits, got {self.bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def parse(cls, text: str) -> PointerConfiguration:
        return cls(tuple(int(c) for c in text))

    @property
    def is_ready(self) -> bool:
        return self.bits == (0, 0, 0, 0)

    @property
    def is_post_absorption(self) -> bool:
        """One photon absorbed at each station."""
        lv, lh, rv, rh = self.bits
        return lv + lh == 1 and rv + rh == 1

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


def ready_state() -> PointerConfiguration:
    return PointerConfiguration((0, 0, 0, 0))


# Photon amplitude (V_L V'_R, V_L H'_R, H_L V'_R, H_L H'_R) -> absorbing detectors.
_ABSORBS = {
    0: PointerConfiguration((1, 0, 1, 0)),
    1: PointerConfiguration((1, 0, 0, 1)),
    2: PointerConfiguration((0, 1, 1, 0)),
    3: PointerConfiguration((0, 1, 0, 1)),
}
# Serialization order: opposite-outcome branches first, then similar-outcome ones.
_BRANCH_ORDER = (1, 2, 0, 3)


@dataclass(frozen=True, eq=False)
class BranchSet:
    configs: tuple[PointerConfiguration, ...]
    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        if len(self.configs) != amps.size or amps.size == 0:
            raise ValueError("need one amplitude per configuration")
        if len(set(self.configs)) != len(self.configs):
            raise ValueError("branch configurations must be distinct")
        if abs(float(np.vdot(amps, amps).real) - 1.0) > ATOL:
            raise ValueError("branch amplitudes must be normalized")
        amps.flags.writeable = False
        object.__setattr__(self, "configs", tuple(self.configs))
        object.__setattr__(self, "amps", amps)

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def as_dict(self) -> dict[str, complex]:
        return {str(c): complex(a) for c, a in zip(self.configs, self.amps)}

    def bits_array(self) -> np.ndarray:
        return np.array([c.bits for c in self.configs], dtype=np.int8)


def build_branches(theta_rel: float) -> BranchSet:
    """Post-absorption array state when the right basis is rotated by ``theta_rel``.

    Each photon amplitude goes to the configuration whose detectors absorb
    it; amplitudes below ``PRUNE`` in magnitude are dropped.
    """
    amps = expand_in_settings(make_singlet(), theta_rel)
    kept = [i for i in _BRANCH_ORDER if abs(amps[i]) >= PRUNE]
    return BranchSet(tuple(_ABSORBS[i] for i in kept), amps[kept])


@dataclass(frozen=True, eq=False)
class ReducedDensityMatrix:
    configs: tuple[PointerConfiguration, ...]
    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=complex)
        k = len(self.configs)
        if e.shape != (k, k):
            raise ValueError(f"entries of shape {e.shape} do not match {k} configurations")
        e.flags.writeable = False
        object.__setattr__(self, "configs", tuple(self.configs))
        object.__setattr__(self, "entries", e)

    @property
    def K(self) -> int:
        return len(self.configs)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.entries).real.copy()

    def element(self, ket: str | PointerConfiguration, bra: str | PointerConfiguration) -> complex:
        idx = {str(c): i for i, c in enumerate(self.configs)}
        return complex(self.entries[idx[str(ket)], idx[str(bra)]])

    def as_density_matrix(self) -> qstate.DensityMatrix:
        return qstate.DensityMatrix((self.K,), self.entries)

    def validate(self, branches: BranchSet | None = None) -> ReducedDensityMatrix:
        """Check Hermiticity, unit trace and PSD; optionally the Born diagonal."""
        self.as_density_matrix().validate()
        if branches is not None:
            err = np.max(np.abs(self.diagonal - branches.probabilities))
            if err > ATOL:
                raise qstate.InvalidStateError(f"diagonal deviates from |amp|^2 by {err:.3e}")
        return self


def _check_detectors(detectors: Sequence[DetectorModel]) -> None:
    ids = tuple(d.id for d in detectors)
    if ids != DETECTOR_ORDER:
        raise ValueError(f"detectors must be ordered LV, LH, RV, RH; got {[i.name for i in ids]}")


def coherence_factor(bit_ket: int, bit_bra: int, f: complex) -> complex:
    """One detector's contribution to ``rho[ket, bra]``.

    Tracing out the internal state leaves ``sum_mu p(mu) <chi_bra|chi_ket>``
    where ``chi`` is ``|mu'>`` on the side whose pointer reads 1:

    ======= ======= ============
    ket bit bra bit factor
    ======= ======= ============
    0       0       1
    1       1       1
    1       0       f
    0       1       conj(f)
    ======= ======= ============
    """
    if bit_ket == bit_bra:
        return 1.0
    return f if bit_ket == 1 else f.conjugate()


def reduced_density_structured(
    branches: BranchSet, detectors: Sequence[DetectorModel]
) -> ReducedDensityMatrix:
    _check_detectors(detectors)
    factors = [decoherence_factor(d) for d in detectors]
    amps = branches.amps
    k = len(branches)
    out = np.empty((k, k), dtype=complex)
    for i, ci in enumerate(branches.configs):
        for j, cj in enumerate(branches.configs):
            g = 1.0 + 0j
            for d in range(4):
                g *= coherence_factor(ci.bits[d], cj.bits[d], factors[d])
            out[i, j] = amps[i] * amps[j].conjugate() * g
    return ReducedDensityMatrix(branches.configs, out)


def dense_dims(detectors: Sequence[DetectorModel]) -> tuple[int, ...]:
    """Subsystem dims of the full array: pointer then internal, per detector."""
    return tuple(x for d in detectors for x in (2, d.M))


def reduced_density_dense_oracle(
    branches: BranchSet, detectors: Sequence[DetectorModel], *, cap: int | None = None
) -> ReducedDensityMatrix:
    """Brute-force reduced density matrix from the full ensemble.

    For every joint internal state ``(mu, nu, sigma, tau)`` the array ket is
    ``sum_b amp_b prod_d |bit_d(b)> |chi_d>``, where ``chi_d`` is ``U|mu>`` for
    absorbing detectors and ``|mu>`` for idle ones. Kets are mixed with the
    product weights and the internal subsystems traced out.
    """
    _check_detectors(detectors)
    dim = math.prod(dense_dims(detectors))
    qstate._check_cap(dim * dim, cap)
    kets, weights = [], []
    for mus in itertools.product(*(range(d.M) for d in detectors)):
        w = math.prod(float(d.dist.weights[m]) for d, m in zip(detectors, mus))
        psi = None
        for amp, cfg in zip(branches.amps, branches.configs):
            parts = []
            for d, m, bit in zip(detectors, mus, cfg.bits):
                internal = qstate.basis(d.M, m)
                if bit:
                    internal = qstate.ket(d.absorption[:, m])
                parts += [qstate.basis(2, bit), internal]
            term = amp * qstate.tensor_all(parts, cap=cap)
            psi = term if psi is None else psi + term
        kets.append(psi)
        weights.append(w)
    rho = qstate.mixture(kets, weights, cap=cap)
    pointers = qstate.partial_trace(rho, keep=[0, 2, 4, 6])
    idx = [int(np.ravel_multi_index(c.bits, (2, 2, 2, 2))) for c in branches.configs]
    return ReducedDensityMatrix(branches.configs, pointers.entries[np.ix_(idx, idx)])


def offdiagonal_norm(rho: ReducedDensityMatrix) -> float:
    """Largest off-diagonal magnitude."""
    if rho.K < 2:
        return 0.0
    mask = ~np.eye(rho.K, dtype=bool)
    return float(np.max(np.abs(rho.entries[mask])))


@dataclass(frozen=True)
class ScanPoint:
    M: int
    n_seeds: int
    median_offdiag: float
    mean_abs_f2: float
    expected_abs_f2: float


def decoherence_scan_point(
    M: int, n_seeds: int, seed: int, dist: str = "uniform", theta_rel: float = 0.0
) -> tuple[ScanPoint, np.ndarray, np.ndarray]:
    """Off-diagonal magnitudes and factors ``|f|^2`` over ``n_seeds`` arrays of size ``M``.

    Returns the summary plus the raw per-seed off-diagonal norms and the
    ``4 * n_seeds`` squared factor magnitudes.
    """
    branches = build_branches(theta_rel)
    offdiag = np.empty(n_seeds)
    f2 = np.empty((n_seeds, 4))
    purity = 0.0
    for s in range(n_seeds):
        detectors = make_array(derive_key(seed, DOMAIN_SCAN, M, s), M, dist)
        offdiag[s] = offdiagonal_norm(reduced_density_structured(branches, detectors))
        f2[s] = [abs(decoherence_factor(d)) ** 2 for d in detectors]
        purity = detectors[0].dist.purity
    point = ScanPoint(
        M=M,
        n_seeds=n_seeds,
        median_offdiag=float(np.median(offdiag)),
        mean_abs_f2=float(f2.mean()),
        expected_abs_f2=purity / M,
    )
    return point, offdiag, f2.reshape(-1)


def loglog_slope(Ms: Sequence[int], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(Ms)``."""
    slope, _ = np.polyfit(np.log(np.asarray(Ms, float)), np.log(np.asarray(values, float)), 1)
    return float(slope)
