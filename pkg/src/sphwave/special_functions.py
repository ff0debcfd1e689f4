"""Modified spherical Hankel functions, Legendre machinery and zero geometry.

The modified spherical Hankel function is written as

    k_n(z) = p_n(z) exp(-z) / z**(n+1)

where ``p_n`` is a degree-n polynomial with positive coefficients generated by
``p_{n+1} = (2n+1) p_n + z**2 p_{n-1}``, ``p_0 = 1``, ``p_1 = z + 1``.  The
polynomial grows factorially with n, so the recurrence is run on a mantissa
with a separately carried power-of-two exponent.  Everything that only needs a
ratio (Newton steps, residue ratios) never forms ``k_n`` at full scale.

All functions accept scalars or numpy arrays and are pure.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "bessel_poly",
    "eval_kn",
    "eval_kn_prime",
    "eval_kn_log_ratio",
    "kn_ratio",
    "eval_Dn",
    "eval_Dn_log_ratio",
    "airy_zero_estimate",
    "airy_prime_zero_estimate",
    "T0",
    "curve_point",
    "zeta_forward",
    "zeta_rhs",
    "invert_zeta",
    "ZetaInversionError",
    "legendre_nodes",
    "legendre_eval",
    "legendre_table",
    "value_to_coeff_matrix",
    "normalized_legendre",
    "spherical_harmonic",
]

_LN2 = math.log(2.0)
# log of the largest finite double, slightly reduced for the mantissa
_LOG_MAX = 709.0


class ZetaInversionError(ArithmeticError):
    """Newton iteration for z(zeta) did not converge."""


def _scalar_or_array(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


def _ldexp_complex(x, e):
    return np.ldexp(x.real, e) + 1j * np.ldexp(x.imag, e)


def bessel_poly(n, z, derivatives=1):
    """Evaluate p_n(z) (and p_n'(z)) with a carried binary exponent.

    Stable for Re z >= 0 only; in the left half-plane the competing solution
    p_m(-z) of the recurrence outgrows p_m(z) by roughly exp(2|Re z|).

    Parameters
    ----------
    n : int
        Polynomial degree, ``n >= 0``.
    z : complex or array_like
        Evaluation points.
    derivatives : {0, 1}
        Whether to also return the derivative.

    Returns
    -------
    p, dp, e2 : ndarray
        ``p_n(z) = p * 2**e2`` and ``p_n'(z) = dp * 2**e2``. ``dp`` is None
        when ``derivatives == 0``.
    """
    p, dp, _, e2 = _bessel_poly_full(n, z, derivatives)
    return p, dp, e2


def _bessel_poly_full(n, z, derivatives=1):
    # also returns p_{n-1} on the same scale (p_{-1} := p_0 / z, so that
    # k_{-1} = k_0)
    if n < 0:
        raise ValueError("n must be non-negative")
    z = np.asarray(z, dtype=complex)
    z2 = z * z
    e2 = np.zeros(z.shape, dtype=np.int64)
    p_prev = np.ones_like(z)
    dp_prev = np.zeros_like(z)
    if n == 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            return p_prev, (dp_prev if derivatives else None), 1.0 / z, e2
    p = z + 1.0
    dp = np.ones_like(z)
    for k in range(1, n):
        c = 2 * k + 1
        p_next = c * p + z2 * p_prev
        if derivatives:
            dp_next = c * dp + 2.0 * z * p_prev + z2 * dp_prev
            dp_prev, dp = dp, dp_next
        p_prev, p = p, p_next
        # power-of-two rescaling is exact, so it never perturbs the recurrence
        mag = np.abs(p)
        if derivatives:
            mag = np.maximum(mag, np.abs(dp))
        _, ex = np.frexp(mag)
        big = np.abs(ex) > 256
        if np.any(big):
            shift = np.where(big, -ex, 0)
            p = _ldexp_complex(p, shift)
            p_prev = _ldexp_complex(p_prev, shift)
            if derivatives:
                dp = _ldexp_complex(dp, shift)
                dp_prev = _ldexp_complex(dp_prev, shift)
            e2 = e2 - shift
    return p, (dp if derivatives else None), p_prev, e2


def _check_nonzero(z):
    if np.any(z == 0):
        raise ZeroDivisionError("argument z = 0 is outside the domain")


def _ratio_recurrence(n, z):
    # k_{n-1}(z) / k_n(z) = z p_{n-1}(z) / p_n(z)
    p, _, pm1, _ = _bessel_poly_full(n, z, derivatives=0)
    return z * pm1 / p


def _iratio(n, w):
    """i_{n+1}(w) / i_n(w) by backward recurrence from well above max(n, |w|).

    i_n is the minimal solution of the recurrence in n, so the downward ratio
    recurrence ``R_{m-1} = 1 / ((2m+1)/w + R_m)`` is stable; above
    ``max(n, |w|)`` each step damps the starting error by at least 4.
    """
    top = int(max(n, np.max(np.abs(w)) if w.size else 0)) + 40
    R = np.zeros_like(w)
    for m in range(top, n, -1):
        R = 1.0 / ((2 * m + 1) / w + R)
    return R


def _reflected(n, z):
    """log k_n(z) and k_{n-1}(z)/k_n(z) for Re z < 0.

    With w = -z, ``k_n(-w) = (-1)**(n+1) k_n(w) - 2 i_n(w)`` exactly. k_n(w)
    comes from the (stable, right half-plane) polynomial recurrence and i_n(w)
    from the Wronskian ``i_n k_{n+1} + i_{n+1} k_n = 1/w**2``. The two terms
    cancel at the zeros of k_n; both are formed relative to k_n(w) so the
    cancellation only costs absolute, not relative, accuracy in the ratio.
    """
    w = -z
    p, _, pm1, e2 = _bessel_poly_full(n, w, derivatives=0)
    logk_w = np.log(p) + e2 * _LN2 - w - (n + 1) * np.log(w)
    rho_w = w * pm1 / p
    s1 = (2 * n + 1) / w
    R = _iratio(n, w)
    # iota = i_n(w) / k_n(w)
    log_iota = -2.0 * logk_w - np.log(w * w * (s1 + rho_w + R))
    sign = -1.0 if n % 2 == 0 else 1.0  # (-1)**(n+1)
    small = log_iota.real <= 0
    with np.errstate(under="ignore", over="ignore"):
        iota = np.exp(np.where(small, log_iota, 0.0))
        inv = np.exp(np.where(small, 0.0, -log_iota))
    # k_n(z)/k_n(w) and k_{n-1}(z)/k_n(w), rescaled by 1/iota when iota is big
    den = np.where(small, sign - 2.0 * iota, sign * inv - 2.0)
    num = np.where(small, -sign * rho_w - 2.0 * iota * (s1 + R),
                   -sign * rho_w * inv - 2.0 * (s1 + R))
    with np.errstate(divide="ignore", invalid="ignore"):
        logk_z = logk_w + np.where(small, 0.0, log_iota) + np.log(den)
        ratio = num / den
    return logk_z, ratio


def kn_ratio(n, z):
    """k_{n-1}(z) / k_n(z), with k_{-1} = k_0.

    Right half-plane: scaled polynomial recurrence. Left half-plane: the
    reflection identity through w = -z, which avoids the recurrence's
    exp(2|Re z|) error growth there.
    """
    z = np.asarray(z, dtype=complex)
    _check_nonzero(z)
    out = np.empty(z.shape, dtype=complex)
    left = z.real < 0
    if np.any(~left):
        out[~left] = _ratio_recurrence(n, z[~left])
    if np.any(left):
        out[left] = _reflected(n, z[left])[1]
    return out


def _log_kn(n, z):
    """Complex log k_n(z); -inf real part where k_n(z) = 0."""
    out = np.empty(z.shape, dtype=complex)
    left = z.real < 0
    if np.any(~left):
        zr = z[~left]
        p, _, e2 = bessel_poly(n, zr, derivatives=0)
        with np.errstate(divide="ignore"):
            out[~left] = np.log(p) + e2 * _LN2 - zr - (n + 1) * np.log(zr)
    if np.any(left):
        out[left] = _reflected(n, z[left])[0]
    return out


def _exp_checked(n, logv):
    if np.any(logv.real > _LOG_MAX):
        raise OverflowError(f"k_{n}(z) is not representable in double precision")
    with np.errstate(under="ignore"):
        return np.where(np.isneginf(logv.real), 0.0, np.exp(logv))


def eval_kn(n, z):
    """Modified spherical Hankel function k_n(z) = sqrt(2/(pi z)) K_{n+1/2}(z).

    Raises ZeroDivisionError at z = 0 and OverflowError when the value exceeds
    the double range.
    """
    z = np.asarray(z, dtype=complex)
    _check_nonzero(z)
    with np.errstate(divide="ignore"):
        return _scalar_or_array(_exp_checked(n, _log_kn(n, z)))


def eval_kn_prime(n, z):
    """Derivative k_n'(z) = -k_{n-1}(z) - (n+1) k_n(z) / z."""
    z = np.asarray(z, dtype=complex)
    _check_nonzero(z)
    with np.errstate(divide="ignore"):
        logk = _log_kn(n, z)
    rho = kn_ratio(n, z)
    factor = -(rho + (n + 1) / z)
    with np.errstate(divide="ignore"):
        return _scalar_or_array(_exp_checked(n, logk + np.log(factor)))


def eval_kn_log_ratio(n, z):
    """Newton step k_n(z) / k_n'(z) = -z / (z rho + n + 1), rho = k_{n-1}/k_n.

    At a zero of k_n, rho is infinite and the step is exactly 0.
    """
    z = np.asarray(z, dtype=complex)
    _check_nonzero(z)
    rho = kn_ratio(n, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.isinf(rho), 0.0, -z / (z * rho + (n + 1)))
    return _scalar_or_array(out)


def eval_Dn(n, z):
    """D_n(z) = z k_n'(z) + k_n(z) = -(z rho + n) k_n(z)."""
    z = np.asarray(z, dtype=complex)
    _check_nonzero(z)
    with np.errstate(divide="ignore"):
        logk = _log_kn(n, z)
    rho = kn_ratio(n, z)
    factor = -(z * rho + n)
    with np.errstate(divide="ignore"):
        return _scalar_or_array(_exp_checked(n, logk + np.log(factor)))


def eval_Dn_log_ratio(n, z):
    """Newton step D_n(z) / D_n'(z).

    From the modified spherical Bessel equation,
    ``D_n'(z) = (z**2 + n(n+1)) k_n(z) / z``, hence
    ``D_n/D_n' = -z (z rho + n) / (z**2 + n(n+1))``.
    """
    z = np.asarray(z, dtype=complex)
    _check_nonzero(z)
    rho = kn_ratio(n, z)
    return _scalar_or_array(-z * (z * rho + n) / (z * z + n * (n + 1)))


def airy_zero_estimate(j):
    """Leading asymptotic estimate of the j-th negative zero of Ai."""
    j = np.asarray(j, dtype=float)
    if np.any(j < 1):
        raise ValueError("j must be >= 1")
    return _scalar_or_array(-((1.5 * np.pi) ** (2.0 / 3.0)) * (j - 0.25) ** (2.0 / 3.0))


def airy_prime_zero_estimate(j):
    """Leading asymptotic estimate of the j-th negative zero of Ai'."""
    j = np.asarray(j, dtype=float)
    if np.any(j < 1):
        raise ValueError("j must be >= 1")
    return _scalar_or_array(-((1.5 * np.pi) ** (2.0 / 3.0)) * (j - 0.75) ** (2.0 / 3.0))


# positive root of t = coth(t); the zero curve runs over t in [0, T0]
T0 = brentq(lambda t: t * math.tanh(t) - 1.0, 0.5, 2.0, xtol=1e-16, rtol=1e-15)


def curve_point(t):
    """Upper branch of the limiting zero curve, ``z(t)`` for t in [0, T0].

    ``z(t) = -(t**2 - t tanh t)**0.5 + i (t coth t - t**2)**0.5``; the lower
    branch is the complex conjugate.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        tcoth = np.where(t == 0, 1.0, t / np.tanh(np.where(t == 0, 1.0, t)))
    re = -np.sqrt(np.maximum(t * t - t * np.tanh(t), 0.0))
    im = np.sqrt(np.maximum(tcoth - t * t, 0.0))
    return _scalar_or_array(re + 1j * im)


def _rhs_upper(z):
    s = np.sqrt(1.0 + z * z)
    return np.log(1j * (1.0 + s) / z) - s


def _zeta_upper(z):
    return (1.5 * _rhs_upper(z)) ** (2.0 / 3.0)


def zeta_rhs(z):
    """Right-hand side ``ln(i(1+s)/z) - s`` with ``s = sqrt(1+z**2)``.

    Principal branches are used in the closed upper half-plane, where they
    make zeta real and positive on the segment (0, i); the lower half-plane is
    defined by conjugate symmetry so the map is continuous along both branches
    of the zero curve.
    """
    z = np.asarray(z, dtype=complex)
    lower = z.imag < 0
    f = _rhs_upper(np.where(lower, np.conj(z), z))
    return _scalar_or_array(np.where(lower, np.conj(f), f))


def zeta_forward(z):
    """zeta(z) from ``(2/3) zeta**1.5 = zeta_rhs(z)`` (principal 2/3 power)."""
    z = np.asarray(z, dtype=complex)
    lower = z.imag < 0
    zeta = _zeta_upper(np.where(lower, np.conj(z), z))
    return _scalar_or_array(np.where(lower, np.conj(zeta), zeta))


def _dzeta_dz(z, zeta):
    # zeta**0.5 dzeta = F'(z) dz with F'(z) = -sqrt(1+z**2)/z
    s = np.sqrt(1.0 + z * z)
    return -s / (z * np.sqrt(zeta))


def invert_zeta(zeta, *, tol=1e-13, maxiter=50):
    """Solve ``zeta_forward(z) = zeta`` for z near the limiting zero curve.

    The seed comes from a 1-D root find on the curve parameter t matching
    ``|(2/3) zeta**1.5|``; a complex Newton iteration on zeta(z) then removes
    the off-curve component. zeta with positive imaginary part (the ray
    ``exp(-2 pi i/3) * (negative real)``) maps to the lower branch, its
    conjugate to the upper branch.
    """
    zeta = complex(zeta)
    if zeta == 0:
        return 1j
    flip = zeta.imag > 0
    target = zeta.conjugate() if flip else zeta
    level = abs((2.0 / 3.0) * target ** 1.5)
    if level >= abs(_rhs_upper(complex(curve_point(T0)))):
        t = T0
    else:
        t = brentq(lambda s: abs(_rhs_upper(complex(curve_point(s)))) - level,
                   0.0, T0, xtol=1e-15)
    z = complex(curve_point(t))
    # the upper-branch formula is analytic across the negative real axis, so
    # iterates that dip slightly below it stay on the same sheet
    for _ in range(maxiter):
        zc = complex(_zeta_upper(z))
        dz = (zc - target) / complex(_dzeta_dz(z, zc))
        z -= dz
        if abs(dz) <= tol * abs(z):
            break
    else:
        raise ZetaInversionError(f"z(zeta) did not converge for zeta={zeta!r}")
    return z.conjugate() if flip else z


def legendre_nodes(p):
    """Gauss-Legendre nodes (ascending) and weights on [-1, 1] (read-only)."""
    if not 1 <= p <= 2048:
        raise ValueError("p out of range")
    return _gauss(int(p))


@lru_cache(maxsize=128)
def _gauss(p):
    x, w = np.polynomial.legendre.leggauss(p)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def legendre_table(pmax, x):
    """Rows P_0(x) .. P_{pmax-1}(x) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty((pmax,) + x.shape)
    out[0] = 1.0
    if pmax > 1:
        out[1] = x
    for i in range(1, pmax - 1):
        out[i + 1] = ((2 * i + 1) * x * out[i] - i * out[i - 1]) / (i + 1)
    return out


def legendre_eval(i, x):
    """Legendre polynomial P_i(x)."""
    return _scalar_or_array(legendre_table(i + 1, x)[i])


@lru_cache(maxsize=64)
def _value_to_coeff(p):
    x, w = legendre_nodes(p)
    P = legendre_table(p, x)
    u = (2 * np.arange(p)[:, None] + 1) / 2.0 * P * w[None, :]
    u.setflags(write=False)
    return u


def value_to_coeff_matrix(p):
    """p x p matrix u with ``c_i = sum_l u[i, l] f(x_l)`` (exact below degree p)."""
    return _value_to_coeff(p).copy()


def normalized_legendre(nmax, x, m=None):
    """Orthonormal associated Legendre functions.

    Returns ``P[n, m]`` (or ``P[n]`` for a single order ``m``) holding

        sqrt((2n+1)/(4 pi) (n-m)!/(n+m)!) P_n^m(x)

    with the Condon-Shortley phase included in P_n^m. Upward recurrence in n
    at fixed m; no factorials are formed, so nmax in the hundreds is fine.
    Entries with m > n are zero.
    """
    x = np.asarray(x, dtype=float)
    # (1-x)(1+x) keeps full relative accuracy near the poles
    sint = np.sqrt(np.maximum(0.0, (1.0 - x) * (1.0 + x)))
    orders = range(nmax + 1) if m is None else [m]
    out = np.zeros((nmax + 1, len(orders)) + x.shape)
    pmm = np.full(x.shape, 1.0 / math.sqrt(4.0 * math.pi))
    mm = 0
    for col, order in enumerate(orders):
        while mm < order:
            mm += 1
            with np.errstate(under="ignore"):
                pmm = -math.sqrt((2 * mm + 1) / (2.0 * mm)) * sint * pmm
        if order > nmax:
            continue
        out[order, col] = pmm
        if order + 1 <= nmax:
            out[order + 1, col] = math.sqrt(2 * order + 3) * x * pmm
        for n in range(order + 2, nmax + 1):
            a = math.sqrt((4.0 * n * n - 1.0) / (n * n - order * order))
            b = math.sqrt(((n - 1.0) ** 2 - order * order) / (4.0 * (n - 1.0) ** 2 - 1.0))
            out[n, col] = a * (x * out[n - 1, col] - b * out[n - 2, col])
    return out[:, 0] if m is not None else out


def spherical_harmonic(n, m, theta, phi):
    """Orthonormal Y_n^m built on |m|, so that Y_n^{-m} = conj(Y_n^m)."""
    if abs(m) > n or n < 0:
        raise ValueError(f"require |m| <= n, got n={n}, m={m}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    plm = normalized_legendre(n, np.cos(theta), m=abs(m))[n]
    return _scalar_or_array(plm * np.exp(1j * m * phi))
