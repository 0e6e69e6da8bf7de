"""Dense kets, operators and partial traces over labeled subsystems.

Subsystems are ordered big-endian: for dims ``(d0, d1, ...)`` the flat index
of ``(i0, i1, ...)`` is ``i0 * d1 * d2 ... + i1 * d2 ... + ...``, which is what
``np.kron`` and ``reshape`` produce.

Everything here is dense. Arrays larger than ``DENSE_CAP`` complex entries are
refused; large problems belong on the structured path in :mod:`bellsim.chain`.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

#: Maximum number of complex entries in any dense array built here.
DENSE_CAP = 2**24

ATOL = 1e-12
PSD_FLOOR = -1e-10


class DenseCapError(ValueError):
    """A dense array would exceed the configured entry cap."""


class InvalidStateError(ValueError):
    """An operator fails a density-matrix invariant."""


def _check_cap(n_entries: int, cap: int | None) -> None:
    cap = DENSE_CAP if cap is None else cap
    if n_entries > cap:
        raise DenseCapError(
            f"dense array of {n_entries} entries exceeds the dense cap of {cap}"
            " (use the structured path instead)"
        )


def _dims(dims: Iterable[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"dims must be a nonempty list of positive ints, got {dims}")
    return dims


@dataclass(frozen=True, eq=False)
class Ket:
    dims: tuple[int, ...]
    amps: np.ndarray

    def __post_init__(self):
        dims = _dims(self.dims)
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        if amps.size != math.prod(dims):
            raise ValueError(f"{amps.size} amplitudes do not match dims {dims}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("ket amplitudes must be finite")
        amps.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amps", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def is_normalized(self, atol: float = ATOL) -> bool:
        return abs(self.norm**2 - 1.0) <= atol

    def __add__(self, other: Ket) -> Ket:
        if self.dims != other.dims:
            raise ValueError(f"dims mismatch: {self.dims} vs {other.dims}")
        return Ket(self.dims, self.amps + other.amps)

    def __mul__(self, c: complex) -> Ket:
        return Ket(self.dims, c * self.amps)

    __rmul__ = __mul__


def ket(amps, dims: Sequence[int] | None = None) -> Ket:
    amps = np.asarray(amps, dtype=complex).reshape(-1)
    return Ket(tuple(dims) if dims is not None else (amps.size,), amps)


def basis(dims: int | Sequence[int], index: int | Sequence[int]) -> Ket:
    """Computational basis ket; ``index`` is flat or one index per subsystem."""
    dims = (dims,) if isinstance(dims, int) else tuple(dims)
    flat = index if isinstance(index, int) else int(np.ravel_multi_index(tuple(index), dims))
    amps = np.zeros(math.prod(dims), dtype=complex)
    amps[flat] = 1.0
    return Ket(dims, amps)


@dataclass(frozen=True, eq=False)
class Operator:
    """Square operator on a composite space. No physicality is implied."""

    dims: tuple[int, ...]
    entries: np.ndarray

    def __post_init__(self):
        dims = _dims(self.dims)
        n = math.prod(dims)
        entries = np.array(self.entries, dtype=complex)
        if entries.shape != (n, n):
            raise ValueError(f"entries of shape {entries.shape} do not match dims {dims}")
        entries.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def dagger(self) -> Operator:
        return type(self)(self.dims, self.entries.conj().T)

    def hermitian_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))


class DensityMatrix(Operator):
    """Operator expected to be Hermitian, unit-trace and PSD.

    Construction does not check physicality (eigenvalues are costly for the
    oracle-sized matrices); call :meth:`validate`.
    """

    def eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.entries + self.entries.conj().T)
        return np.linalg.eigvalsh(herm)

    def validate(self, atol: float = ATOL, psd_floor: float = PSD_FLOOR) -> DensityMatrix:
        herr = self.hermitian_error()
        if herr > atol:
            raise InvalidStateError(f"not Hermitian: max |rho - rho^H| = {herr:.3e}")
        terr = abs(self.trace() - 1.0)
        if terr > atol:
            raise InvalidStateError(f"trace deviates from 1 by {terr:.3e}")
        lo = float(self.eigenvalues()[0])
        if lo < psd_floor:
            raise InvalidStateError(f"not PSD: min eigenvalue {lo:.3e}")
        return self


def tensor(a: Ket, b: Ket, *, cap: int | None = None) -> Ket:
    _check_cap(a.amps.size * b.amps.size, cap)
    return Ket(a.dims + b.dims, np.kron(a.amps, b.amps))


def tensor_all(kets: Iterable[Ket], *, cap: int | None = None) -> Ket:
    kets = list(kets)
    out = kets[0]
    for k in kets[1:]:
        out = tensor(out, k, cap=cap)
    return out


def outer(a: Ket, b: Ket, *, cap: int | None = None) -> Operator:
    """``|a><b|``."""
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims} vs {b.dims}")
    _check_cap(a.amps.size**2, cap)
    return Operator(a.dims, np.outer(a.amps, b.amps.conj()))


def density(k: Ket, *, cap: int | None = None) -> DensityMatrix:
    op = outer(k, k, cap=cap)
    return DensityMatrix(op.dims, op.entries)


def mixture(kets: Sequence[Ket], weights: Sequence[float], *, cap: int | None = None) -> DensityMatrix:
    """``sum_i w_i |k_i><k_i|`` over kets of equal dims."""
    if len(kets) != len(weights) or not kets:
        raise ValueError("need one weight per ket and at least one ket")
    dims = kets[0].dims
    if any(k.dims != dims for k in kets):
        raise ValueError("all kets must share dims")
    _check_cap(kets[0].amps.size**2, cap)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("mixture weights must be nonnegative")
    cols = np.stack([k.amps for k in kets], axis=1)
    return DensityMatrix(dims, (cols * w) @ cols.conj().T)


def partial_trace(rho: Operator, keep: Iterable[int]):
    """Trace out every subsystem not listed in ``keep``.

    The result keeps the surviving subsystems in their original order and has
    the same type as ``rho``.
    """
    keep = sorted(set(int(k) for k in keep))
    n = len(rho.dims)
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"subsystem index out of range for {n} subsystems: {keep}")
    if len(keep) == n:
        return rho
    t = rho.entries.reshape(rho.dims + rho.dims)
    # contract each dropped row axis with its column axis
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out_axes = keep + [n + i for i in keep]
    reduced = np.einsum(t, row + col, out_axes)
    kdims = tuple(rho.dims[i] for i in keep)
    m = math.prod(kdims)
    return type(rho)(kdims, reduced.reshape(m, m))
