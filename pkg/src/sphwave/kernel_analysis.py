"""Diagnostics for the exterior kernels: residues, kernel samples, growth rates.

The Dirichlet mode solution is ``u_n(r, t) = (phi_n)(t - r + 1) / r`` where,
in the Laplace domain,

    C_n(r, s) + 1 = prod_j (s - alpha_j / r) / (s - alpha_j)
                  = r exp(s (r - 1)) k_n(s r) / k_n(s).

Expanding the product in partial fractions gives exponentially large residues
whose sum is only O(n**2), which is why the partial-fraction form is unusable
as a solver. This module measures that behaviour and provides an independent
ODE integrator used to check the marcher.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .special_functions import T0, _log_kn, curve_point, eval_kn_log_ratio
from .zero_finder import dirichlet_zeros, robin_zeros

__all__ = [
    "ResidueSet",
    "PrecisionLossError",
    "PoleError",
    "dirichlet_residues",
    "robin_residues",
    "dirichlet_residues_bessel_form",
    "residue_sum",
    "kernel_time",
    "kernel_laplace",
    "partial_fraction_laplace",
    "growth_exponent_curve",
    "growth_slope",
    "ode_oracle_dirichlet",
    "ode_oracle_robin",
    "eigenvector_condition",
    "write_rows_csv",
]

_LOG_MAX = 709.0
_DOUBLE_DIGITS = -math.log10(np.finfo(float).eps)


class PrecisionLossError(ArithmeticError):
    """Too few significant digits would survive a cancelling sum."""


class PoleError(ZeroDivisionError):
    """Evaluation point too close to a pole of the kernel."""


@dataclass(frozen=True)
class ResidueSet:
    """Residues aligned with the pole ordering of the zero table.

    ``log_values`` always holds ``log|a| + i arg a``. ``values`` is the
    exponentiated residue, set to nan where ``overflow`` is True. When the
    set was computed in extended precision, ``mp_values`` holds the mpmath
    numbers and ``dps`` the working precision.
    """

    n: int
    r: float
    kind: str
    poles: np.ndarray
    values: np.ndarray
    log_values: np.ndarray
    overflow: np.ndarray
    mp_values: tuple = None
    dps: int = None

    def __len__(self):
        return len(self.values)

    @property
    def max_log10_abs(self):
        if not len(self.log_values):
            return -np.inf
        return float(self.log_values.real.max() / math.log(10.0))

    @property
    def digits(self):
        return float(self.dps) if self.dps else _DOUBLE_DIGITS


def _conj_fill(values, poles):
    # make conjugate closure exact: entries with negative imaginary part are
    # replaced by the conjugate of their (adjacent, preceding) partner
    out = values.copy()
    for i in range(1, len(poles)):
        if poles[i].imag < 0 and poles[i - 1] == np.conj(poles[i]):
            out[i] = np.conj(out[i - 1])
    return out


def _log_products(targets, numer, denom, exclude_self):
    # sum_k log(t_j - numer_k) - sum_{k != j} log(t_j - denom_k)
    t = targets[:, None]
    lognum = np.log(t - numer[None, :]).sum(axis=1) if numer.size else np.zeros(len(targets))
    diff = t - denom[None, :]
    if exclude_self:
        np.fill_diagonal(diff, 1.0)
    logden = np.log(diff).sum(axis=1) if denom.size else 0.0
    return lognum - logden


def _mp_products(targets, numer, denom, dps, scale):
    import mpmath

    out = []
    with mpmath.workdps(dps):
        tj = [mpmath.mpc(complex(z)) for z in targets]
        nk = [mpmath.mpc(complex(z)) for z in numer]
        dk = [mpmath.mpc(complex(z)) for z in denom]
        sc = mpmath.mpf(scale) if not isinstance(scale, complex) else mpmath.mpc(scale)
        for j, t in enumerate(tj):
            num = mpmath.mpf(1)
            for x in nk:
                num *= t - x
            den = mpmath.mpf(1)
            for k, x in enumerate(dk):
                if k != j:
                    den *= t - x
            out.append(sc * num / den)
    return tuple(out)


def _assemble(n, r, kind, poles, logv, mp_values=None, dps=None):
    logv = _conj_fill(logv, poles)
    overflow = logv.real > _LOG_MAX
    with np.errstate(under="ignore"):
        values = np.where(overflow, np.nan, np.exp(np.where(overflow, 0.0, logv)))
    if mp_values is not None:
        values = np.array([complex(v) for v in mp_values], dtype=complex)
        values = _conj_fill(values, poles)
    # residues at real poles are real
    values = np.where(np.asarray(poles).imag == 0, values.real + 0j, values)
    return ResidueSet(n, float(r), kind, np.asarray(poles), values, logv, overflow,
                      mp_values, dps)


def _zeros_of(table):
    return np.asarray(getattr(table, "zeros", table), dtype=complex)


def dirichlet_residues(n, r, zeros=None, *, dps=None):
    """Residues a_j of C_n(r, s) at the zeros alpha_j of k_n.

    ``a_j = prod_k (alpha_j - alpha_k/r) / prod_{k != j} (alpha_j - alpha_k)``
    accumulated as a sum of logarithms. With ``dps`` set, the products are
    also formed in mpmath at that many decimal digits (the zeros themselves
    stay the double-precision table).

    Examples
    --------
    >>> dirichlet_residues(1, 2.0).values
    array([-0.5+0.j])
    """
    if r <= 1:
        raise ValueError("r must exceed 1")
    alpha = _zeros_of(zeros if zeros is not None else dirichlet_zeros(n))
    if len(alpha) != n:
        raise ValueError(f"expected {n} zeros, got {len(alpha)}")
    logv = _log_products(alpha, alpha / r, alpha, True)
    mp_values = _mp_products(alpha, alpha / r, alpha, dps, 1.0) if dps else None
    return _assemble(n, r, "dirichlet", alpha, logv, mp_values, dps)


def robin_residues(n, r, dirichlet=None, robin=None, *, dps=None):
    """Residues of ``exp(s(r-1)) K_n(r, s)`` at the zeros beta_j of D_n.

    These are ``b_j / r`` with
    ``b_j = -prod_{k>=1} (beta_j - alpha_k/r) / prod_{k != j} (beta_j - beta_k)``,
    so that the mode solution is ``sum_j (b_j/r) int exp(beta_j (t - tau)) g``.
    For n = 0 the single residue is ``-1/r`` at beta = 0.
    """
    if r <= 1:
        raise ValueError("r must exceed 1")
    alpha = np.asarray(dirichlet.zeros if dirichlet is not None else dirichlet_zeros(n).zeros)
    beta = np.asarray(robin.zeros if robin is not None else robin_zeros(n).zeros)
    if len(alpha) != n or len(beta) != n + 1:
        raise ValueError("zero tables do not match n")
    logv = np.log(-1.0 + 0j) + _log_products(beta, alpha / r, beta, True) - math.log(r)
    mp_values = _mp_products(beta, alpha / r, beta, dps, -1.0 / r) if dps else None
    return _assemble(n, r, "robin", beta, logv, mp_values, dps)


def dirichlet_residues_bessel_form(n, r, zeros=None):
    """Residues via ``a_j = r exp(alpha_j (r-1)) k_n(alpha_j r) / k_n'(alpha_j)``.

    Uses ``k_n'(alpha) = -k_{n-1}(alpha)`` at a zero of k_n. Independent of
    the product formula; returned as complex logs.
    """
    alpha = np.asarray((zeros or dirichlet_zeros(n)).zeros)
    logk_r = _log_kn(n, alpha * r)
    logk_m1 = _log_kn(n - 1, alpha)
    return math.log(r) + alpha * (r - 1) + logk_r - (np.log(-1.0 + 0j) + logk_m1)


def residue_sum(residues):
    """Sum of residues, in the set's working precision (returned as complex)."""
    if residues.mp_values is not None:
        import mpmath

        with mpmath.workdps(residues.dps):
            return complex(mpmath.fsum(residues.mp_values))
    return complex(np.sum(residues.values))


def kernel_time(n, r, t, residues=None, zeros=None, *, min_digits=2.0):
    """Time-domain kernel ``C_n(r, t) = sum_j a_j exp(alpha_j t)``.

    Refuses with :class:`PrecisionLossError` when the cancellation between
    the largest residue and ``C_n(r, 0) = n(n+1)/2 (1/r - 1)`` would leave
    fewer than ``min_digits`` significant digits. The imaginary part is
    checked against roundoff and discarded.
    """
    if residues is None:
        residues = dirichlet_residues(n, r, zeros)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    if n == 0:
        return np.zeros(t.shape) if t.size > 1 else 0.0
    c0 = n * (n + 1) / 2.0 * (1.0 / r - 1.0)
    lost = residues.max_log10_abs - math.log10(abs(c0))
    left = residues.digits - max(lost, 0.0)
    if left < min_digits:
        raise PrecisionLossError(
            f"C_{n}(r={r}) would keep {left:.1f} digits (loses {lost:.1f})")
    if residues.mp_values is not None:
        import mpmath

        with mpmath.workdps(residues.dps):
            poles = [mpmath.mpc(complex(p)) for p in residues.poles]
            out = np.array([complex(mpmath.fsum(a * mpmath.exp(p * ti) for a, p in
                                                zip(residues.mp_values, poles)))
                            for ti in t])
        scale = np.abs(out) + abs(c0) * 10.0 ** (-residues.dps / 2)
    else:
        terms = residues.values[None, :] * np.exp(residues.poles[None, :] * t[:, None])
        out = terms.sum(axis=1)
        scale = 10.0 ** residues.max_log10_abs
    tol = 64 * len(residues) * 10.0 ** (-residues.digits) * scale
    if np.any(np.abs(out.imag) > tol + 1e-6 * np.abs(out.real)):
        raise PrecisionLossError("kernel has a non-negligible imaginary part")
    real = out.real
    return real if real.size > 1 else float(real[0])


def _expm1c(x):
    # complex expm1 without cancellation in the real part
    a, b = x.real, x.imag
    em = np.expm1(a)
    re = em * np.cos(b) - 2.0 * np.sin(0.5 * b) ** 2
    im = np.exp(a) * np.sin(b)
    return re + 1j * im


def _log_pn(n, z):
    # log p_n(z) = log k_n(z) + (n+1) log z + z, valid in the whole plane
    return _log_kn(n, z) + (n + 1) * np.log(z) + z


def kernel_laplace(n, r, s):
    """``C_n(r, s) = p_n(s r) / (r**n p_n(s)) - 1`` in ratio form.

    Raises :class:`PoleError` if s is within ``1e-10 n`` of a zero of k_n.
    """
    s = np.asarray(s, dtype=complex)
    if np.any(s == 0):
        raise ValueError("s = 0 is excluded")
    if n == 0:
        return np.zeros(s.shape, complex)[()] if s.ndim == 0 else np.zeros(s.shape, complex)
    step = np.abs(np.asarray(eval_kn_log_ratio(n, s)))
    if np.any(step < 1e-10 * n):
        raise PoleError("s is at a zero of k_n")
    logratio = _log_pn(n, s * r) - n * math.log(r) - _log_pn(n, s)
    out = _expm1c(logratio)
    return out[()] if out.ndim == 0 else out


def partial_fraction_laplace(residues, s):
    """``sum_j a_j / (s - pole_j)``: the cancellation-prone comparison form."""
    s = np.asarray(s, dtype=complex)
    out = (residues.values[None, :] / (s.reshape(-1, 1) - residues.poles[None, :])).sum(axis=1)
    return out.reshape(s.shape)[()] if s.ndim == 0 else out.reshape(s.shape)


def _eta(alpha, r):
    sr = np.sqrt(1.0 + alpha * alpha * r * r)
    return (r - 1.0) * alpha - np.log((1.0 + sr) / (1j * alpha * r)) + sr


def growth_exponent_curve(r, return_curve=False, samples=4001):
    """Predicted slope of ``log10 max_j |a_j(r)|`` against n.

    Maximises ``Re eta(z(t)) log10(e)`` over the limiting zero curve, where
    ``eta(a) = (r-1) a - log((1 + sqrt(1 + a**2 r**2)) / (i a r))
    + sqrt(1 + a**2 r**2)`` with principal branches. The upper and lower
    branches of the curve give identical real parts.
    """
    if r <= 1:
        raise ValueError("r must exceed 1")
    log10e = math.log10(math.e)
    t = np.linspace(0.0, T0, samples)
    vals = _eta(curve_point(t), r).real * log10e
    k = int(np.argmax(vals))
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, samples - 1)]
    best = vals[k]
    if hi > lo:
        res = minimize_scalar(lambda s: -float(_eta(curve_point(s), r).real) * log10e,
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -res.fun)
    if return_curve:
        return float(best), t, vals
    return float(best)


def growth_slope(r, ns):
    """Least-squares slope of ``log10 max_j |a_j(r)|`` over the given n."""
    ns = np.asarray(list(ns), dtype=float)
    ys = np.array([dirichlet_residues(int(n), r).max_log10_abs for n in ns])
    slope, _ = np.polyfit(ns, ys, 1)
    return float(slope), ys


def _cheb_derivative(f, T, deg=128):
    cheb = np.polynomial.Chebyshev.interpolate(f, deg, domain=[0.0, T])
    return cheb.deriv()


def _ode_solve(rhs, size, T, times, rtol, atol):
    times = np.atleast_1d(np.asarray(times if times is not None else [T], float))
    if T <= 0:
        return np.zeros((size, len(times)), complex), None
    sol = solve_ivp(rhs, (0.0, T), np.zeros(size, complex), method="DOP853",
                    t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"integrator failed: {sol.message} (nfev={sol.nfev}, "
                           f"steps={len(sol.t)})")
    return sol.y, sol


def ode_oracle_dirichlet(n, r, f, T, df=None, *, zeros=None, times=None,
                         rtol=1e-12, atol=1e-14, full=False):
    """phi_n(T) from the lower-bidiagonal ODE system for the nested convolutions.

    Solves ``A phi' = B phi + F`` where A has ones on the diagonal and -1 on
    the subdiagonal, B has alpha_j on the diagonal and -alpha_j/r on the
    subdiagonal of row j, and ``F_1 = f' - alpha_1 f / r``. f must vanish at
    t = 0. ``df`` defaults to the derivative of a Chebyshev interpolant.

    Returns phi_n at ``times`` (default ``[T]``); with ``full=True`` the whole
    state ``phi_1..phi_n`` is returned.
    """
    if n == 0:
        vals = np.array([f(t) for t in np.atleast_1d(times if times is not None else [T])])
        return vals[None, :] if full else (vals if times is not None else complex(vals[0]))
    alpha = np.asarray((zeros or dirichlet_zeros(n)).zeros)
    if df is None:
        df = _cheb_derivative(f, T)
    sub = alpha[1:] / r

    def rhs(t, phi):
        d = alpha * phi
        d[1:] -= sub * phi[:-1]
        d[0] += df(t) - alpha[0] * f(t) / r
        return np.cumsum(d)

    y, _ = _ode_solve(rhs, n, T, times, rtol, atol)
    if full:
        return y
    return y[-1] if times is not None else complex(y[-1, 0])


def ode_oracle_robin(n, r, g, T, *, dirichlet=None, robin=None, times=None,
                     rtol=1e-12, atol=1e-14, full=False):
    """psi_n from the ODE form of the Robin recurrence.

    ``psi_0' = beta_0 psi_0 + g`` and, for j >= 1,
    ``psi_j' = psi_{j-1}' + beta_j psi_j - (alpha_j / r) psi_{j-1}``.
    """
    alpha = np.asarray((dirichlet or dirichlet_zeros(n)).zeros)
    beta = np.asarray((robin or robin_zeros(n)).zeros)
    sub = alpha / r

    def rhs(t, psi):
        d = beta * psi
        d[1:] -= sub * psi[:-1]
        d[0] += g(t)
        return np.cumsum(d)

    y, _ = _ode_solve(rhs, n + 1, T, times, rtol, atol)
    if full:
        return y
    return y[-1] if times is not None else complex(y[-1, 0])


def eigenvector_condition(n, r, zeros=None):
    """Condition numbers of ``M = A^{-1} B`` and of its eigenvector matrix.

    Demonstrates why diagonalising the ODE system fails: M itself is mildly
    conditioned while the eigenvectors are nearly dependent.
    """
    alpha = np.asarray((zeros or dirichlet_zeros(n)).zeros)
    B = np.diag(alpha).astype(complex)
    B[np.arange(1, n), np.arange(n - 1)] = -alpha[1:] / r
    M = np.cumsum(B, axis=0)
    _, S = np.linalg.eig(M)
    return {"n": n, "r": r, "cond_M": float(np.linalg.cond(M)),
            "cond_S": float(np.linalg.cond(S))}


def write_rows_csv(path, rows, header=("n", "r", "quantity", "value")):
    """Write diagnostic rows to CSV (``-`` writes to stdout)."""
    import sys

    if str(path) == "-":
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
