"""Real zero-mean scalar fields on the 2-torus in truncated Fourier space.

Coefficients are stored as a full ``(N, N)`` complex array in FFT ordering
(index ``i`` holds wavenumber ``i`` for ``i < N/2`` and ``i - N`` otherwise),
relative to the orthonormal basis ``e_k(x) = exp(i k.x) / (2 pi)``.  The
Nyquist row/column (index ``N/2``) and the zero mode are always zero, so the
represented field is real with an exactly Hermitian coefficient array.

Most functions accept arrays with extra leading (ensemble) axes; the
:class:`SpectralField` wrapper is the single-field public surface.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

__all__ = [
    "ResolutionError",
    "SpectralField",
    "PhysicalField",
    "Wavenumbers",
    "wavenumbers",
    "dealias_size",
    "hermitian_project",
    "to_physical",
    "to_spectral",
    "sobolev_norm",
    "lp_norm",
    "inner",
    "from_function",
    "Snapshot",
    "write_snapshot",
    "read_snapshot",
]

TWO_PI = 2.0 * np.pi


class ResolutionError(ValueError):
    """Raised when grid and spectral resolutions are incompatible."""


@dataclass(frozen=True)
class Wavenumbers:
    """Cached integer wavenumber tables for resolution ``N`` (FFT ordering)."""

    N: int
    k1: np.ndarray
    k2: np.ndarray
    kabs: np.ndarray
    # True on retained, nonzero modes (excludes k=0 and the Nyquist row/column)
    active: np.ndarray
    # conjugate-partner permutation: c[neg1, neg2] is c(-k)
    neg: np.ndarray
    # k2 > 0, or k2 == 0 and k1 > 0, restricted to active modes
    upper: np.ndarray

    def inv_kabs(self) -> np.ndarray:
        out = np.zeros_like(self.kabs)
        out[self.active] = 1.0 / self.kabs[self.active]
        return out


@lru_cache(maxsize=None)
def wavenumbers(N: int) -> Wavenumbers:
    if N < 2 or N % 2:
        raise ResolutionError(f"resolution N must be an even integer >= 2, got {N}")
    k = np.fft.fftfreq(N, 1.0 / N).astype(np.int64)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    nyq = N // 2
    active = (np.abs(k1) != nyq) & (np.abs(k2) != nyq) & ((k1 != 0) | (k2 != 0))
    upper = active & ((k2 > 0) | ((k2 == 0) & (k1 > 0)))
    kabs = np.sqrt(k1.astype(float) ** 2 + k2.astype(float) ** 2)
    neg_idx = (-np.arange(N)) % N
    neg = np.ix_(neg_idx, neg_idx)
    tables = Wavenumbers(N, k1, k2, kabs, active, neg, upper)
    for arr in (k1, k2, kabs, active, upper):
        arr.setflags(write=False)
    return tables


def dealias_size(N: int) -> int:
    """Padded grid size for exact quadratic products (3/2 rule)."""
    return (3 * N) // 2 + (3 * N) % 2


def hermitian_project(c: np.ndarray) -> np.ndarray:
    """Project onto real zero-mean fields; the result is Hermitian bit-exactly."""
    wn = wavenumbers(c.shape[-1])
    out = 0.5 * (c + np.conj(c[(..., *wn.neg)]))
    out[..., ~wn.active] = 0.0
    return out


@lru_cache(maxsize=None)
def _pad_maps(N: int, M: int):
    k = np.arange(-(N // 2) + 1, N // 2)
    return k % N, k % M, np.arange(N // 2)


def to_physical_array(c: np.ndarray, M: int | None = None) -> np.ndarray:
    """Evaluate coefficients ``c[..., N, N]`` on the uniform ``M x M`` grid."""
    N = c.shape[-1]
    M = dealias_size(N) if M is None else M
    if M < N:
        raise ResolutionError(f"grid size M={M} is smaller than resolution N={N}")
    src, dst, cols = _pad_maps(N, M)
    half = np.zeros(c.shape[:-2] + (M, M // 2 + 1), dtype=complex)
    half[..., dst[:, None], cols] = c[..., src[:, None], cols]
    return sfft.irfft2(half, s=(M, M), workers=-1) * (M * M / TWO_PI)


def to_spectral_array(v: np.ndarray, N: int) -> np.ndarray:
    """Forward transform of real grid values, truncated to resolution ``N``."""
    M = v.shape[-1]
    if M < N:
        raise ResolutionError(f"grid size M={M} is smaller than resolution N={N}")
    wn = wavenumbers(N)
    src, dst, cols = _pad_maps(N, M)
    F = sfft.rfft2(v, workers=-1)
    c = np.zeros(v.shape[:-2] + (N, N), dtype=complex)
    c[..., src[:, None], cols] = F[..., dst[:, None], cols] * (TWO_PI / (M * M))
    mirrored = np.conj(c[(..., *wn.neg)])
    out = np.where(wn.k2 > 0, c, np.where(wn.k2 < 0, mirrored, 0.5 * (c + mirrored)))
    out[..., ~wn.active] = 0.0
    return out


def sobolev_norm_array(c: np.ndarray, s: float) -> np.ndarray:
    wn = wavenumbers(c.shape[-1])
    w = np.zeros_like(wn.kabs)
    w[wn.active] = wn.kabs[wn.active] ** (2.0 * s)
    return np.sqrt(np.sum(w * np.abs(c) ** 2, axis=(-2, -1)))


def lp_norm_array(c: np.ndarray, p: float) -> np.ndarray:
    v = to_physical_array(c)
    if np.isinf(p):
        return np.max(np.abs(v), axis=(-2, -1))
    M = v.shape[-1]
    return (np.sum(np.abs(v) ** p, axis=(-2, -1)) * (TWO_PI / M) ** 2) ** (1.0 / p)


def inner_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """L2 inner product of real fields from their coefficients."""
    return np.sum(a * np.conj(b), axis=(-2, -1)).real


@dataclass(frozen=True)
class SpectralField:
    """Truncated Fourier representation of a real zero-mean field.

    Construction projects ``coeffs`` onto the invariant set (Hermitian,
    zero mean, zero Nyquist) unless ``project=False`` is passed by a caller
    that already guarantees it.
    """

    coeffs: np.ndarray

    def __init__(self, coeffs: np.ndarray, *, project: bool = True):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ResolutionError(f"coefficients must be square (N, N), got {c.shape}")
        wavenumbers(c.shape[0])
        c = hermitian_project(c) if project else c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, N: int) -> "SpectralField":
        return cls(np.zeros((N, N), dtype=complex), project=False)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + other.coeffs, project=False)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - other.coeffs, project=False)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.coeffs * float(a), project=False)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs, project=False)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SpectralField) and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None  # type: ignore[assignment]

    def restrict(self, N: int) -> "SpectralField":
        """Spectral projection onto the modes retained at resolution ``N``."""
        return SpectralField(restrict_array(self.coeffs, N), project=False)

    def coefficient(self, k1: int, k2: int) -> complex:
        return complex(self.coeffs[k1 % self.N, k2 % self.N])

    def is_hermitian(self) -> bool:
        wn = wavenumbers(self.N)
        return bool(np.array_equal(self.coeffs, np.conj(self.coeffs[wn.neg])))


@dataclass(frozen=True)
class PhysicalField:
    """Real values on the uniform grid ``x = 2 pi (j1, j2) / M``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ResolutionError(f"grid values must be square (M, M), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def grid(M: int) -> tuple[np.ndarray, np.ndarray]:
        x = TWO_PI * np.arange(M) / M
        return np.meshgrid(x, x, indexing="ij")


def restrict_array(c: np.ndarray, N: int) -> np.ndarray:
    Nf = c.shape[-1]
    if N > Nf:
        raise ResolutionError(f"cannot restrict resolution {Nf} to larger {N}")
    k = np.arange(-(N // 2) + 1, N // 2)
    out = np.zeros(c.shape[:-2] + (N, N), dtype=c.dtype)
    out[..., (k % N)[:, None], k % N] = c[..., (k % Nf)[:, None], k % Nf]
    return out


def prolong_array(c: np.ndarray, N: int) -> np.ndarray:
    """Zero-pad coefficients to the larger resolution ``N``."""
    Nc = c.shape[-1]
    if N < Nc:
        raise ResolutionError(f"cannot prolong resolution {Nc} to smaller {N}")
    k = np.arange(-(Nc // 2) + 1, Nc // 2)
    out = np.zeros(c.shape[:-2] + (N, N), dtype=c.dtype)
    out[..., (k % N)[:, None], k % N] = c[..., (k % Nc)[:, None], k % Nc]
    return out


def to_physical(f: SpectralField, M: int) -> PhysicalField:
    """Evaluate ``f`` on an ``M x M`` grid (``M >= N``)."""
    return PhysicalField(to_physical_array(f.coeffs, M))


def to_spectral(g: PhysicalField, N: int) -> SpectralField:
    """Forward transform with truncation to ``N``; the mean is removed."""
    return SpectralField(to_spectral_array(g.values, N), project=False)


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Homogeneous ``H^s`` norm; ``s = 0`` is the L2 norm."""
    return float(sobolev_norm_array(f.coeffs, s))


def lp_norm(f: SpectralField, p: float) -> float:
    """``L^p`` norm by quadrature on the padded 3N/2 grid (grid max for ``p = inf``)."""
    if not (p >= 1):
        raise ValueError(f"p must be >= 1, got {p}")
    return float(lp_norm_array(f.coeffs, p))


def inner(f: SpectralField, g: SpectralField) -> float:
    return float(inner_array(f.coeffs, g.coeffs))


def from_function(func, N: int) -> SpectralField:
    """Project a callable ``func(x1, x2)`` onto resolution ``N`` via grid sampling."""
    M = dealias_size(N)
    x1, x2 = PhysicalField.grid(M)
    return SpectralField(to_spectral_array(np.asarray(func(x1, x2), dtype=float), N), project=False)


# --------------------------------------------------------------------------- snapshots

SNAPSHOT_MAGIC = b"SQG1"
_HEADER = struct.Struct("<I3d")


@dataclass(frozen=True)
class Snapshot:
    field: SpectralField
    alpha: float
    kappa: float
    t: float


def _k_order(N: int) -> np.ndarray:
    # row-major over k1, k2 = -N/2+1, ..., N/2 (the Nyquist entries are stored as zeros)
    return np.arange(-(N // 2) + 1, N // 2 + 1) % N


def write_snapshot(path, f: SpectralField, alpha: float, kappa: float, t: float) -> None:
    """Binary snapshot: ``SQG1``, uint32 N, float64 alpha, kappa, t, then complex128 payload."""
    idx = _k_order(f.N)
    payload = np.ascontiguousarray(f.coeffs[np.ix_(idx, idx)]).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(_HEADER.pack(f.N, alpha, kappa, t))
        fh.write(payload.tobytes())


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not an SQG1 snapshot")
    N, alpha, kappa, t = _HEADER.unpack_from(data, 4)
    offset = 4 + _HEADER.size
    expected = offset + 16 * N * N
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for N={N}, found {len(data)}")
    payload = np.frombuffer(data, dtype="<c16", offset=offset).reshape(N, N)
    idx = _k_order(N)
    c = np.zeros((N, N), dtype=complex)
    c[np.ix_(idx, idx)] = payload
    wn = wavenumbers(N)
    if np.any(c[~wn.active] != 0) or not np.array_equal(c, np.conj(c[wn.neg])):
        raise ValueError(f"{path}: coefficients violate the real zero-mean invariants")
    return Snapshot(SpectralField(c, project=False), alpha, kappa, t)
