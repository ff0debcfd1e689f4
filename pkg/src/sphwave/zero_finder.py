"""Complex zeros of k_n and of D_n(z) = z k_n'(z) + k_n(z).

Zeros are seeded from the uniform (Airy-type) asymptotics, in which the scaled
zeros ``z / (n + 1/2)`` lie near a fixed curve joining -i and i through the
left half-plane, and then polished with Newton's method on the overflow-free
step ``f/f'``. Only the upper half-plane (plus the real zero for odd counts) is
iterated; the rest follows from conjugate symmetry.

Tables are cached in memory and, optionally, on disk in a small binary format
(see :func:`save_table`).
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np

from .special_functions import (
    airy_prime_zero_estimate,
    airy_zero_estimate,
    eval_Dn_log_ratio,
    eval_kn_log_ratio,
    invert_zeta,
)

__all__ = [
    "ZeroKind",
    "ZeroTable",
    "ZeroFinderError",
    "ZeroValidation",
    "dirichlet_zeros",
    "robin_zeros",
    "zero_table",
    "newton_refine",
    "asymptotic_seeds",
    "validate_zero_table",
    "save_table",
    "load_table",
    "cache_dir",
]

MAGIC = b"SWZT"
VERSION = 1
_HEADER = struct.Struct("<4sIBII")

NEWTON_TOL = 1e-13
MAX_NEWTON = 40


class ZeroKind(Enum):
    DIRICHLET = 0  # zeros of k_n
    ROBIN = 1  # zeros of D_n

    @classmethod
    def parse(cls, kind):
        if isinstance(kind, cls):
            return kind
        key = str(kind).lower()
        if key in ("dirichlet", "d", "kn", "dirichletkn"):
            return cls.DIRICHLET
        if key in ("robin", "r", "dn", "robindn"):
            return cls.ROBIN
        raise ValueError(f"unknown zero kind {kind!r}")


class ZeroFinderError(ArithmeticError):
    """Newton refinement failed or produced coincident zeros."""


@dataclass(frozen=True)
class ZeroTable:
    """Zeros of k_n (Dirichlet) or D_n (Robin), sorted by ascending real part.

    Conjugate pairs are adjacent, the member with positive imaginary part
    first. ``residuals`` holds ``|f/(z f')|`` at each zero and ``iterations``
    the Newton count used for it (0 for exact or conjugate-filled entries).
    """

    n: int
    kind: ZeroKind
    zeros: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("zeros", "residuals"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        its = self.iterations
        its = np.zeros(len(self.zeros), dtype=int) if its is None else np.array(its)
        its.setflags(write=False)
        object.__setattr__(self, "iterations", its)

    def __len__(self):
        return len(self.zeros)

    @property
    def expected_count(self):
        return self.n if self.kind is ZeroKind.DIRICHLET else self.n + 1


def _newton_step(kind, n, z):
    if kind is ZeroKind.DIRICHLET:
        return np.asarray(eval_kn_log_ratio(n, z))
    return np.asarray(eval_Dn_log_ratio(n, z))


def asymptotic_seeds(n, kind):
    """Seeds for the upper half-plane zeros, j = 1 .. ceil(count/2).

    j = 1 is nearest the imaginary axis. For an odd count the last seed is the
    real zero.
    """
    kind = ZeroKind.parse(kind)
    count = n if kind is ZeroKind.DIRICHLET else n + 1
    est = airy_zero_estimate if kind is ZeroKind.DIRICHLET else airy_prime_zero_estimate
    nu = n + 0.5
    rot = np.exp(2j * np.pi / 3.0)
    seeds = []
    for j in range(1, (count + 1) // 2 + 1):
        # conj of exp(-2 pi i/3) nu**(-2/3) a_j lands on the upper branch
        zeta = rot * nu ** (-2.0 / 3.0) * est(j)
        seeds.append(nu * invert_zeta(zeta))
    seeds = np.array(seeds, dtype=complex)
    if count % 2 == 1 and seeds.size:
        seeds[-1] = seeds[-1].real
    return seeds


def newton_refine(n, kind, seeds, pin_real=None, tol=NEWTON_TOL, maxiter=MAX_NEWTON):
    """Vectorised Newton on all seeds with a damping guard.

    A step is halved (repeatedly) while it would leave the open left
    half-plane or move by more than n/4. Iteration for an entry stops once its
    step is below ``tol * |z|``.

    Returns
    -------
    z, iterations : ndarray
    """
    kind = ZeroKind.parse(kind)
    z = np.array(seeds, dtype=complex)
    pin = np.zeros(z.shape, bool) if pin_real is None else np.asarray(pin_real, bool)
    its = np.zeros(z.shape, dtype=int)
    active = np.ones(z.shape, bool)
    limit = 0.25 * max(n, 1)
    for _ in range(maxiter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        za = z[idx]
        dz = _newton_step(kind, n, za)
        dz = np.where(pin[idx], dz.real, dz)
        for _ in range(60):
            new = za - dz
            bad = (new.real >= 0) | (np.abs(dz) > limit)
            if not bad.any():
                break
            dz = np.where(bad, 0.5 * dz, dz)
        z[idx] = za - dz
        its[idx] += 1
        done = np.abs(dz) <= tol * np.abs(z[idx])
        active[idx[done]] = False
    if active.any():
        j = int(np.flatnonzero(active)[0]) + 1
        raise ZeroFinderError(
            f"Newton did not converge for {kind.name.lower()} n={n}, j={j}")
    return z, its


def _sort_key(z):
    return np.lexsort((-z.imag, z.real))


def _relative_residual(n, kind, z):
    if z.size == 0:
        return np.zeros(0)
    nz = z != 0
    out = np.zeros(z.shape)
    out[nz] = np.abs(_newton_step(kind, n, z[nz])) / np.abs(z[nz])
    return out


def _check_distinct(n, kind, z):
    if z.size < 2:
        return
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    if d.min() <= 1e-8 * max(n, 1):
        i, k = np.unravel_index(np.argmin(d), d.shape)
        raise ZeroFinderError(
            f"coincident {kind.name.lower()} zeros for n={n}: {z[i]!r} and {z[k]!r}")


def _compute(n, kind):
    if n < 0:
        raise ValueError("n must be non-negative")
    if kind is ZeroKind.ROBIN and n == 0:
        # D_0 = -exp(-z) has no zeros; the pole of the n = 0 Robin kernel is 0
        return ZeroTable(0, kind, np.zeros(1, complex), np.zeros(1))
    count = n if kind is ZeroKind.DIRICHLET else n + 1
    if count == 0:
        return ZeroTable(n, kind, np.zeros(0, complex), np.zeros(0))
    seeds = asymptotic_seeds(n, kind)
    pin = np.zeros(seeds.shape, bool)
    if count % 2 == 1:
        pin[-1] = True
    upper, its = newton_refine(n, kind, seeds, pin)
    upper = np.where(pin, upper.real + 0j, upper)
    paired = ~pin
    zeros = np.concatenate([upper, np.conj(upper[paired])])
    iters = np.concatenate([its, np.zeros(paired.sum(), int)])
    order = _sort_key(zeros)
    zeros, iters = zeros[order], iters[order]
    _check_distinct(n, kind, zeros)
    return ZeroTable(n, kind, zeros, _relative_residual(n, kind, zeros), iters)


# -- persistence ---------------------------------------------------------------

def cache_dir():
    """Directory for on-disk tables, or None when disabled.

    Set ``SPHWAVE_CACHE_DIR`` to choose it; an empty value disables the disk
    cache. Default: ``~/.cache/sphwave``.
    """
    env = os.environ.get("SPHWAVE_CACHE_DIR")
    if env is None:
        return Path.home() / ".cache" / "sphwave"
    return Path(env) if env else None


def _cache_path(n, kind, directory):
    return Path(directory) / f"{kind.name.lower()}_{n:05d}.swzt"


def save_table(table, path):
    """Write a table atomically (temporary file, then rename).

    Layout: ``<4sIBII`` header (magic ``SWZT``, version, kind, n, count), then
    ``count`` little-endian (re, im) float64 pairs, then ``count`` float64
    residuals.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = len(table.zeros)
    payload = _HEADER.pack(MAGIC, VERSION, table.kind.value, table.n, count)
    pairs = np.empty((count, 2), dtype="<f8")
    pairs[:, 0] = table.zeros.real
    pairs[:, 1] = table.zeros.imag
    payload += pairs.tobytes() + np.asarray(table.residuals, dtype="<f8").tobytes()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_table(path):
    """Read a table written by :func:`save_table`."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated zero table")
    magic, version, kind, n, count = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a version-{VERSION} SWZT file")
    need = _HEADER.size + 24 * count
    if len(data) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(data)}")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    pairs = body[: 2 * count].reshape(count, 2)
    zeros = pairs[:, 0] + 1j * pairs[:, 1]
    return ZeroTable(n, ZeroKind(kind), zeros, body[2 * count:].copy())


@lru_cache(maxsize=None)
def _cached(n, kind, directory):
    if directory is not None:
        path = _cache_path(n, kind, directory)
        if path.exists():
            try:
                return load_table(path)
            except (OSError, ValueError):
                pass
    table = _compute(n, kind)
    if directory is not None:
        try:
            save_table(table, _cache_path(n, kind, directory))
        except OSError:
            pass
    return table


def zero_table(n, kind, *, use_cache=True):
    """Zeros of k_n (``kind='dirichlet'``) or D_n (``kind='robin'``)."""
    kind = ZeroKind.parse(kind)
    n = int(n)
    if not use_cache:
        return _compute(n, kind)
    d = cache_dir()
    return _cached(n, kind, None if d is None else str(d))


def dirichlet_zeros(n, *, use_cache=True):
    """The n zeros of k_n, sorted by ascending real part.

    Examples
    --------
    >>> dirichlet_zeros(1).zeros
    array([-1.+0.j])
    """
    return zero_table(n, ZeroKind.DIRICHLET, use_cache=use_cache)


def robin_zeros(n, *, use_cache=True):
    """The n+1 zeros of D_n (the conventional single zero 0 for n = 0)."""
    return zero_table(n, ZeroKind.ROBIN, use_cache=use_cache)


# -- validation ----------------------------------------------------------------

@dataclass
class ZeroValidation:
    n: int
    kind: ZeroKind
    count: int
    expected_count: int
    symmetric: bool
    distinct: bool
    left_half_plane: bool
    sorted_ok: bool
    max_residual: float
    max_abs_over_n: float
    min_spacing: float
    spacing_ratio: float
    implied_A: float
    violations: list

    @property
    def ok(self):
        return not self.violations


def validate_zero_table(table, residual_tol=1e-12):
    """Check a table's invariants and report empirical scalings.

    ``max_abs_over_n`` is ``max |z| / n``, ``spacing_ratio`` the largest over
    smallest nearest-neighbour distance, and ``implied_A`` the largest A with
    ``Re z < -A n**(1/3)`` for every zero (nan for n = 0).
    """
    z = np.asarray(table.zeros)
    n = table.n
    exp_count = table.expected_count
    violations = []
    if len(z) != exp_count:
        violations.append(f"count {len(z)} != {exp_count}")

    conj = np.sort_complex(np.conj(z))
    symmetric = bool(np.allclose(np.sort_complex(z), conj, rtol=0,
                                 atol=1e-12 * max(n, 1)))
    if not symmetric:
        violations.append("set not closed under conjugation")

    if len(z) > 1:
        d = np.abs(z[:, None] - z[None, :])
        np.fill_diagonal(d, np.inf)
        nearest = d.min(axis=1)
        min_spacing = float(nearest.min())
        spacing_ratio = float(nearest.max() / nearest.min()) if min_spacing > 0 else np.inf
    else:
        min_spacing, spacing_ratio = np.inf, 1.0
    distinct = min_spacing > 1e-8 * max(n, 1)
    if not distinct:
        violations.append("coincident zeros")

    if table.kind is ZeroKind.ROBIN and n == 0:
        lhp = bool(np.all(z == 0))
    else:
        lhp = bool(np.all(z.real < 0))
    if not lhp:
        violations.append("zero outside the open left half-plane")

    srt = len(z) < 2 or bool(np.all(np.diff(z.real) >= 0))
    if not srt:
        violations.append("not sorted by ascending real part")

    res = _relative_residual(n, table.kind, z) if len(z) else np.zeros(0)
    max_res = float(res.max()) if res.size else 0.0
    if max_res >= residual_tol:
        violations.append(f"max residual {max_res:.2e} >= {residual_tol:.0e}")

    max_abs = float(np.abs(z).max() / n) if (len(z) and n) else 0.0
    implied_A = float(-z.real.max() / n ** (1 / 3)) if (len(z) and n) else float("nan")
    return ZeroValidation(n, table.kind, len(z), exp_count, symmetric, distinct, lhp,
                          srt, max_res, max_abs, min_spacing, spacing_ratio,
                          implied_A, violations)
