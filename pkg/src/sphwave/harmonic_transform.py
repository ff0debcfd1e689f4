"""Spherical harmonic analysis and synthesis on a Gauss-Legendre x uniform grid.

Harmonics are the orthonormal ``Y_n^m(theta, phi) = Pbar_n^{|m|}(cos theta)
exp(i m phi)`` (Condon-Shortley phase inside ``Pbar``), so that
``Y_n^{-m} = conj(Y_n^m)`` and a real field has ``c_{n,-m} = conj(c_{n,m})``.

The transform is the direct quadrature sum. The longitude sum is done with an
FFT, which gives the same numbers as summing ``exp(-i m phi_k)`` explicitly.

Coefficients come in two layouts:

* full: array ``(..., N+1, 2N+1)`` indexed ``[n, m + N]`` (entries with
  ``|m| > n`` are zero);
* packed: array ``(..., K)`` with ``K = (N+1)(N+2)/2`` holding ``m >= 0``
  only, ordered by m then n (see :func:`packed_index`). Used for real fields.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .special_functions import legendre_nodes, normalized_legendre

__all__ = [
    "SphericalGrid",
    "ModeCoefficients",
    "GridTooSmallError",
    "packed_index",
    "analyze",
    "synthesize",
    "analyze_real",
    "synthesize_real",
    "l2_norm",
]


class GridTooSmallError(ValueError):
    """Grid cannot integrate products of band-limit-N fields exactly."""


@dataclass(frozen=True)
class SphericalGrid:
    """Gauss-Legendre points in cos(theta) times uniform longitudes.

    ``theta`` is ascending (north pole side first); ``weights`` are the
    Gauss weights in cos(theta) and sum to 2.
    """

    N_theta: int
    N_phi: int
    theta: np.ndarray
    x: np.ndarray
    weights: np.ndarray
    phi: np.ndarray

    @classmethod
    def create(cls, N_theta, N_phi):
        if N_theta < 1 or N_phi < 1:
            raise ValueError("grid sizes must be positive")
        x, w = legendre_nodes(N_theta)
        x, w = x[::-1].copy(), w[::-1].copy()
        phi = 2.0 * np.pi * np.arange(N_phi) / N_phi
        return cls(int(N_theta), int(N_phi), np.arccos(x), x, w, phi)

    @classmethod
    def for_order(cls, N, factor=4):
        """Default grid ``N_theta = N_phi = factor * N`` (at least N+1, 2N+1)."""
        nt = max(factor * N, N + 1)
        nphi = max(factor * N, 2 * N + 1)
        return cls.create(nt, nphi)

    def max_order(self):
        """Largest N this grid transforms exactly."""
        return min(self.N_theta - 1, (self.N_phi - 1) // 2)

    def check(self, N):
        if N > self.max_order():
            raise GridTooSmallError(
                f"grid {self.N_theta}x{self.N_phi} supports N <= {self.max_order()}, got {N}")

    @property
    def area_weights(self):
        """2-D quadrature weights ``w_i 2 pi / N_phi``, shape (N_theta, N_phi)."""
        return np.repeat((self.weights * 2.0 * np.pi / self.N_phi)[:, None], self.N_phi, 1)

    def unit_vectors(self):
        """Cartesian grid points on the unit sphere, shape (N_theta, N_phi, 3)."""
        st = np.sin(self.theta)[:, None]
        return np.stack([st * np.cos(self.phi)[None, :],
                         st * np.sin(self.phi)[None, :],
                         np.repeat(self.x[:, None], self.N_phi, 1)], axis=-1)


@dataclass
class ModeCoefficients:
    """Full-layout coefficients ``data[..., n, m + N]``."""

    N: int
    data: np.ndarray

    def __getitem__(self, nm):
        n, m = nm
        if abs(m) > n or n > self.N:
            raise IndexError(f"no coefficient ({n}, {m}) at N={self.N}")
        return self.data[..., n, m + self.N]

    @classmethod
    def zeros(cls, N, batch=()):
        return cls(N, np.zeros(tuple(batch) + (N + 1, 2 * N + 1), complex))

    def packed(self):
        """m >= 0 entries in packed order."""
        n_idx, m_idx = packed_index(self.N)
        return self.data[..., n_idx, m_idx + self.N]

    @classmethod
    def from_packed(cls, N, packed):
        """Rebuild a real field's full coefficients using c_{n,-m} = conj(c_{n,m})."""
        n_idx, m_idx = packed_index(N)
        packed = np.asarray(packed)
        out = cls.zeros(N, packed.shape[:-1])
        out.data[..., n_idx, N + m_idx] = packed
        neg = m_idx > 0
        out.data[..., n_idx[neg], N - m_idx[neg]] = np.conj(packed[..., neg])
        return out


@lru_cache(maxsize=32)
def packed_index(N):
    """(n, m) arrays for the packed layout: m ascending, then n from m to N."""
    n_idx = np.concatenate([np.arange(m, N + 1) for m in range(N + 1)])
    m_idx = np.concatenate([np.full(N + 1 - m, m) for m in range(N + 1)])
    n_idx.setflags(write=False)
    m_idx.setflags(write=False)
    return n_idx, m_idx


@lru_cache(maxsize=16)
def _grid_legendre(N, x_bytes, count):
    # Pbar[n, m, i] at the grid's cos(theta) nodes
    x = np.frombuffer(x_bytes, dtype=float, count=count)
    P = normalized_legendre(N, x)
    P.setflags(write=False)
    return P


def _legendre_on(grid, N):
    return _grid_legendre(N, grid.x.tobytes(), grid.N_theta)


def _fourier(grid, samples, N, real):
    # F_m(theta_i) = (2 pi / N_phi) sum_k f exp(-i m phi_k)
    scale = 2.0 * np.pi / grid.N_phi
    if real:
        F = np.fft.rfft(samples, axis=-1)[..., : N + 1]
        return F * scale, None
    F = np.fft.fft(samples, axis=-1)
    pos = F[..., : N + 1] * scale
    neg = F[..., (grid.N_phi - np.arange(N + 1)) % grid.N_phi] * scale  # m = 0, -1, ..
    return pos, neg


def _check_samples(grid, samples):
    samples = np.asarray(samples)
    if samples.shape[-2:] != (grid.N_theta, grid.N_phi):
        raise ValueError(f"samples have shape {samples.shape[-2:]}, grid is "
                         f"{(grid.N_theta, grid.N_phi)}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples must be finite")
    return samples


def analyze_real(grid, samples, N):
    """Packed m >= 0 coefficients of a real field sampled on the grid.

    ``samples`` has shape (..., N_theta, N_phi); the result (..., K).
    """
    grid.check(N)
    samples = _check_samples(grid, samples)
    F, _ = _fourier(grid, samples, N, real=True)  # (..., Nt, N+1)
    P = _legendre_on(grid, N)
    wF = F * grid.weights[:, None]
    parts = []
    for m in range(N + 1):
        # (n, i) @ (..., i) -> (..., n)
        parts.append(np.einsum("ni,...i->...n", P[m:, m, :], wF[..., :, m]))
    return np.concatenate(parts, axis=-1)


def analyze(grid, samples, N):
    """Full coefficients ``c_nm = sum w_i (2 pi/N_phi) conj(Y_n^m) f``.

    Examples
    --------
    >>> g = SphericalGrid.for_order(2)
    >>> c = analyze(g, np.ones((g.N_theta, g.N_phi)), 2)
    >>> round(c[0, 0].real, 12) == round(np.sqrt(4 * np.pi), 12)
    True
    """
    grid.check(N)
    samples = _check_samples(grid, samples)
    pos, neg = _fourier(grid, samples.astype(complex), N, real=False)
    P = _legendre_on(grid, N)
    out = ModeCoefficients.zeros(N, samples.shape[:-2])
    w = grid.weights[:, None]
    pos, neg = pos * w, neg * w
    for m in range(N + 1):
        out.data[..., m:, N + m] = np.einsum("ni,...i->...n", P[m:, m, :], pos[..., :, m])
        if m:
            out.data[..., m:, N - m] = np.einsum("ni,...i->...n", P[m:, m, :], neg[..., :, m])
    return out


def _points(target):
    if isinstance(target, SphericalGrid):
        th, ph = np.meshgrid(target.theta, target.phi, indexing="ij")
        return th, ph
    theta, phi = target
    return np.asarray(theta, float), np.asarray(phi, float)


def synthesize(coeffs, target, chunk=2048):
    """Evaluate ``sum c_nm Y_n^m`` at a grid or at ``(theta, phi)`` arrays.

    Returns complex values with the target's shape (grid: (N_theta, N_phi)),
    preceded by any batch dimensions of the coefficients.
    """
    N = coeffs.N
    data = coeffs.data
    if isinstance(target, SphericalGrid) and target.N_phi >= 2 * N + 1:
        return _synthesize_grid(N, data, target)
    th, ph = _points(target)
    shape = th.shape
    th, ph = th.ravel(), ph.ravel()
    batch = data.shape[:-2]
    out = np.zeros(batch + (th.size,), complex)
    m = np.arange(-N, N + 1)
    for s in range(0, th.size, chunk):
        sl = slice(s, s + chunk)
        P = normalized_legendre(N, np.cos(th[sl]))  # (n, |m|, pts)
        Pm = P[:, np.abs(m), :]  # (n, 2N+1, pts)
        # sum over n first: (..., m, pts)
        S = np.einsum("...nm,nmp->...mp", data, Pm)
        out[..., sl] = np.einsum("...mp,mp->...p", S, np.exp(1j * m[:, None] * ph[None, sl]))
    return out.reshape(batch + shape)


def _synthesize_grid(N, data, grid):
    # Legendre sums per m, then an inverse FFT over longitude
    P = _legendre_on(grid, N)
    batch = data.shape[:-2]
    spec = np.zeros(batch + (grid.N_theta, grid.N_phi), complex)
    for m in range(-N, N + 1):
        am = abs(m)
        spec[..., m % grid.N_phi] = np.einsum("...n,ni->...i", data[..., am:, m + N],
                                              P[am:, am, :])
    return np.fft.ifft(spec, axis=-1) * grid.N_phi


def synthesize_real(N, packed, target, chunk=2048):
    """Real field from packed m >= 0 coefficients at a grid or points."""
    packed = np.asarray(packed)
    n_idx, m_idx = packed_index(N)
    if isinstance(target, SphericalGrid) and target.N_phi >= 2 * N + 1:
        P = _legendre_on(target, N)
        spec = np.zeros(packed.shape[:-1] + (target.N_theta, target.N_phi // 2 + 1), complex)
        start = 0
        for m in range(N + 1):
            stop = start + N + 1 - m
            spec[..., m] = np.einsum("...n,ni->...i", packed[..., start:stop], P[m:, m, :])
            start = stop
        spec[..., 0] = spec[..., 0].real
        return np.fft.irfft(spec, n=target.N_phi, axis=-1) * target.N_phi
    th, ph = _points(target)
    shape = th.shape
    th, ph = th.ravel(), ph.ravel()
    batch = packed.shape[:-1]
    out = np.zeros(batch + (th.size,))
    fac = np.where(m_idx == 0, 1.0, 2.0)
    for s in range(0, th.size, chunk):
        sl = slice(s, s + chunk)
        P = normalized_legendre(N, np.cos(th[sl]))[n_idx, m_idx, :]  # (K, pts)
        E = np.exp(1j * m_idx[:, None] * ph[None, sl])
        out[..., sl] = np.real((packed * fac) @ (P * E))
    return out.reshape(batch + shape)


def l2_norm(grid, values):
    """Discrete L2 norm on the unit sphere with the grid's quadrature."""
    v = np.abs(np.asarray(values)) ** 2
    return float(np.sqrt(np.sum(v * grid.area_weights)))
