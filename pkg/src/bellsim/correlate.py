"""Observer statistics on sampled branches.

A robot at each station reads its V-detector and encodes pointer 0 as
``Z = +1`` and pointer 1 as ``Z = -1``; a third party records the product
``Z_L * Z_R``. Each trial selects a single decohered branch with Born weight
``|amp|^2`` (the diagonal of the reduced density matrix) and reads both
stations from that one branch. This classical selection is the only
interpretive step in the package and lives only in this module.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import kernels
from .chain import BranchSet, PointerConfiguration, build_branches
from .detector import DetectorModel, sample_internal
from .photon import canonical_angle
from .rng import DOMAIN_TRIALS, CounterRNG, derive_key

MIN_CHSH_TRIALS = 100
NOSIGNAL_SIGMAS = 4.0


def z_encode(config: PointerConfiguration, station: str) -> int:
    """``+1`` if the station's V-detector reads 0, ``-1`` if it reads 1."""
    if config.is_ready:
        raise ValueError("the ready state (0000) has no outcome yet")
    if not config.is_post_absorption:
        raise ValueError(f"{config} is not a post-absorption configuration")
    station = station.upper()
    if station not in ("L", "R"):
        raise ValueError(f"station must be 'L' or 'R', got {station!r}")
    v = config.bits[0] if station == "L" else config.bits[2]
    return 1 - 2 * v


def check_eigen_identity(branches: BranchSet) -> bool:
    """True iff every branch is an eigenstate of ``Z_L Z_R`` with eigenvalue -1."""
    return all(z_encode(c, "L") * z_encode(c, "R") == -1 for c in branches.configs)


def relative_angle(theta_a: float, theta_b: float) -> float:
    """Right basis angle relative to the left one.

    The singlet is invariant under a common rotation of both bases, so only
    this difference enters the outcome statistics.
    """
    return canonical_angle(theta_b) - canonical_angle(theta_a)


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    theta_a: float
    theta_b: float
    branch: PointerConfiguration
    internal: tuple[int, int, int, int]
    z_left: int
    z_right: int
    clara_product: int


def sample_trial(
    theta_a: float,
    theta_b: float,
    detectors: Sequence[DetectorModel],
    rng,
    trial_index: int = 0,
) -> TrialRecord:
    """One measurement: pick a branch, then each detector's internal state.

    Consumes one uniform for the branch and one per detector, in array order.
    """
    branches = build_branches(relative_angle(theta_a, theta_b))
    k = min(int(np.searchsorted(_branch_cdf(branches), rng.random(), side="right")), len(branches) - 1)
    config = branches.configs[k]
    internal = tuple(sample_internal(d, rng) for d in detectors)
    zl, zr = z_encode(config, "L"), z_encode(config, "R")
    return TrialRecord(
        trial_index, canonical_angle(theta_a), canonical_angle(theta_b), config, internal, zl, zr, zl * zr
    )


def _branch_cdf(branches: BranchSet) -> np.ndarray:
    c = np.cumsum(branches.probabilities)
    return c / c[-1]


@dataclass(frozen=True, eq=False)
class TrialBatch:
    """Columnar trials sharing one pair of settings."""

    theta_a: float
    theta_b: float
    trial_index: np.ndarray
    bits: np.ndarray  # (n, 4) pointer bits of the selected branch
    internal: np.ndarray  # (n, 4) internal-state indices

    def __len__(self) -> int:
        return len(self.trial_index)

    @property
    def z_left(self) -> np.ndarray:
        return 1 - 2 * self.bits[:, 0].astype(np.int64)

    @property
    def z_right(self) -> np.ndarray:
        return 1 - 2 * self.bits[:, 2].astype(np.int64)

    @property
    def product(self) -> np.ndarray:
        return self.z_left * self.z_right

    def records(self) -> Iterable[TrialRecord]:
        zl, zr = self.z_left, self.z_right
        for i in range(len(self)):
            yield TrialRecord(
                int(self.trial_index[i]),
                self.theta_a,
                self.theta_b,
                PointerConfiguration(tuple(self.bits[i])),
                tuple(int(x) for x in self.internal[i]),
                int(zl[i]),
                int(zr[i]),
                int(zl[i] * zr[i]),
            )

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord]) -> TrialBatch:
        if not records:
            raise ValueError("no trials")
        settings = {(r.theta_a, r.theta_b) for r in records}
        if len(settings) != 1:
            raise ValueError(f"trials mix {len(settings)} different settings")
        (theta_a, theta_b), = settings
        for r in records:
            if r.clara_product != r.z_left * r.z_right:
                raise ValueError(f"trial {r.trial_index}: product inconsistent with Z values")
        return cls(
            theta_a,
            theta_b,
            np.array([r.trial_index for r in records], dtype=np.int64),
            np.array([r.branch.bits for r in records], dtype=np.int8),
            np.array([r.internal for r in records], dtype=np.int64),
        )


def sample_trials(
    theta_a: float,
    theta_b: float,
    detectors: Sequence[DetectorModel],
    n: int,
    key: int,
    start: int = 0,
    backend: str | None = None,
) -> TrialBatch:
    """Trials ``start .. start + n - 1`` of stream ``key``.

    Trial ``t`` uses counters ``5t .. 5t + 4`` of the stream, so the result
    equals calling :func:`sample_trial` with ``CounterRNG.for_trial(key, t)``
    for each ``t``, whatever the chunking.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    branches = build_branches(relative_angle(theta_a, theta_b))
    cdfs = [d.dist.cdf for d in detectors]
    offsets = np.cumsum([0] + [len(c) for c in cdfs]).astype(np.int64)
    idx, internal = kernels.sample_trials(
        key, start, n, _branch_cdf(branches), np.concatenate(cdfs), offsets, backend=backend
    )
    bits = branches.bits_array()[idx]
    return TrialBatch(
        canonical_angle(theta_a),
        canonical_angle(theta_b),
        np.arange(start, start + n, dtype=np.int64),
        bits,
        internal,
    )


def trial_key(seed: int, setting_index: int) -> int:
    """Stream key for the trials of one setting pair in an experiment."""
    return derive_key(seed, DOMAIN_TRIALS, setting_index)


def theory_correlation(theta_rel: float) -> float:
    """``C = P(similar) - P(opposite) = sin^2 - cos^2 = -cos(2 theta)``."""
    return -math.cos(2.0 * theta_rel)


@dataclass(frozen=True)
class CorrelationEstimate:
    theta_a: float
    theta_b: float
    theta_rel: float
    n_trials: int
    mean_product: float
    std_error: float
    p_similar: float
    theory: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "theory", theory_correlation(self.theta_rel))

    def sigmas(self) -> float:
        """Deviation from theory in standard errors (inf if se=0 and off)."""
        dev = abs(self.mean_product - self.theory)
        if self.std_error == 0:
            return 0.0 if dev <= 1e-12 else math.inf
        return dev / self.std_error


def _as_batch(trials) -> TrialBatch:
    if isinstance(trials, TrialBatch):
        if len(trials) == 0:
            raise ValueError("no trials")
        return trials
    return TrialBatch.from_records(list(trials))


def correlation(trials: TrialBatch | Sequence[TrialRecord]) -> CorrelationEstimate:
    """Mean Clara product with its standard error ``std / sqrt(n)``."""
    batch = _as_batch(trials)
    prod = batch.product
    n = len(prod)
    mean = float(prod.mean())
    std = float(prod.std(ddof=1)) if n > 1 else 0.0
    return CorrelationEstimate(
        theta_a=batch.theta_a,
        theta_b=batch.theta_b,
        theta_rel=relative_angle(batch.theta_a, batch.theta_b),
        n_trials=n,
        mean_product=mean,
        std_error=std / math.sqrt(n),
        p_similar=float(np.mean(prod == 1)),
    )


@dataclass(frozen=True)
class ChshResult:
    settings: tuple[float, float, float, float]
    estimates: tuple[CorrelationEstimate, ...]  # (a,b), (a,b'), (a',b), (a',b')
    S: float
    std_error: float
    theory: float

    @property
    def violates_classical(self) -> bool:
        return abs(self.S) > 2.0


_CHSH_SIGNS = (1.0, -1.0, 1.0, 1.0)


def chsh_pairs(settings: Sequence[float]) -> list[tuple[float, float]]:
    a, a2, b, b2 = settings
    return [(a, b), (a, b2), (a2, b), (a2, b2)]


def chsh_combine(settings, estimates: Sequence[CorrelationEstimate]) -> ChshResult:
    S = sum(s * e.mean_product for s, e in zip(_CHSH_SIGNS, estimates))
    se = math.sqrt(sum(e.std_error**2 for e in estimates))
    theory = sum(s * e.theory for s, e in zip(_CHSH_SIGNS, estimates))
    return ChshResult(tuple(float(x) for x in settings), tuple(estimates), float(S), se, theory)


def chsh(
    settings: Sequence[float],
    n_trials_each: int,
    detectors: Sequence[DetectorModel],
    seed: int,
    backend: str | None = None,
) -> ChshResult:
    """``S = C(a,b) - C(a,b') + C(a',b) + C(a',b')`` from independent trial streams."""
    if len(settings) != 4:
        raise ValueError("CHSH needs settings (a, a', b, b')")
    if n_trials_each < MIN_CHSH_TRIALS:
        raise ValueError(f"need at least {MIN_CHSH_TRIALS} trials per setting pair")
    estimates = [
        correlation(sample_trials(ta, tb, detectors, n_trials_each, trial_key(seed, i), backend=backend))
        for i, (ta, tb) in enumerate(chsh_pairs(settings))
    ]
    return chsh_combine(settings, estimates)


@dataclass(frozen=True)
class MarginalGroup:
    theta_fixed: float
    theta_varied: float
    n: int
    frequency_plus: float
    std_error: float

    @property
    def sigmas_from_half(self) -> float:
        return abs(self.frequency_plus - 0.5) / math.sqrt(0.25 / self.n)


@dataclass(frozen=True)
class NoSignalReport:
    station: str
    groups: tuple[MarginalGroup, ...]
    max_pair_sigmas: float
    max_sigmas_from_half: float
    sigmas: float = NOSIGNAL_SIGMAS

    @property
    def passed(self) -> bool:
        return self.max_pair_sigmas < self.sigmas and self.max_sigmas_from_half < self.sigmas


def nosignal_audit(trials, station: str = "L", sigmas: float = NOSIGNAL_SIGMAS) -> NoSignalReport:
    """Check that one station's marginal ignores the other station's setting.

    ``trials`` is an iterable of :class:`TrialBatch` and/or
    :class:`TrialRecord`. For ``station="L"`` the trials must share
    ``theta_a`` and are grouped by ``theta_b``; for ``"R"`` the roles swap.
    The audit passes iff every pairwise difference of the marginal
    frequencies of ``Z = +1`` and every deviation from 1/2 is below
    ``sigmas`` binomial standard errors.
    """
    station = station.upper()
    if station not in ("L", "R"):
        raise ValueError(f"station must be 'L' or 'R', got {station!r}")
    counts: dict[tuple[float, float], list[int]] = {}

    def add(theta_a, theta_b, z):
        key = (theta_a, theta_b) if station == "L" else (theta_b, theta_a)
        c = counts.setdefault(key, [0, 0])
        c[0] += int(np.count_nonzero(z == 1))
        c[1] += len(z)

    records = []
    for item in trials:
        if isinstance(item, TrialBatch):
            add(item.theta_a, item.theta_b, item.z_left if station == "L" else item.z_right)
        else:
            records.append(item)
    for r in records:
        add(r.theta_a, r.theta_b, np.array([r.z_left if station == "L" else r.z_right]))

    fixed = {k[0] for k in counts}
    if len(fixed) != 1:
        raise ValueError(f"the {station} station's own setting must be fixed; got {sorted(fixed)}")
    if len(counts) < 2:
        raise ValueError("need at least two settings of the remote station")
    groups = []
    for (tf, tv), (plus, n) in sorted(counts.items()):
        p = plus / n
        groups.append(MarginalGroup(tf, tv, n, p, math.sqrt(p * (1 - p) / n)))
    pair = 0.0
    for g1, g2 in combinations(groups, 2):
        se = math.sqrt(g1.std_error**2 + g2.std_error**2)
        diff = abs(g1.frequency_plus - g2.frequency_plus)
        pair = max(pair, diff / se if se > 0 else (0.0 if diff == 0 else math.inf))
    half = max(g.sigmas_from_half for g in groups)
    return NoSignalReport(station, tuple(groups), pair, half, sigmas)
