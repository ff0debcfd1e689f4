import dataclasses
import math
import struct
import threading

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphwave.zero_finder import (
    ZeroFinderError,
    ZeroKind,
    ZeroTable,
    asymptotic_seeds,
    dirichlet_zeros,
    load_table,
    newton_refine,
    robin_zeros,
    save_table,
    validate_zero_table,
    zero_table,
)


def test_low_order_dirichlet_zeros_exact():
    assert len(dirichlet_zeros(0)) == 0
    np.testing.assert_allclose(dirichlet_zeros(1).zeros, [-1.0], atol=1e-15)
    z2 = dirichlet_zeros(2).zeros
    expect = [(-3 + 1j * math.sqrt(3)) / 2, (-3 - 1j * math.sqrt(3)) / 2]
    np.testing.assert_allclose(z2, expect, atol=1e-14)


def test_low_order_robin_zeros():
    assert list(robin_zeros(0).zeros) == [0j]
    # D_1(z) = -(z^2 + z + 1) exp(-z) / z^2
    z1 = robin_zeros(1).zeros
    np.testing.assert_allclose(z1, [complex(-0.5, math.sqrt(3) / 2),
                                    complex(-0.5, -math.sqrt(3) / 2)], atol=1e-14)


@pytest.mark.parametrize("n", [3, 7, 12])
def test_dirichlet_zeros_are_roots_of_bessel_polynomial(n):
    # p_n(z) = sum (n+k)! / ((n-k)! k! 2^k) z^(n-k)
    coeffs = [math.factorial(n + k) / (math.factorial(n - k) * math.factorial(k) * 2**k)
              for k in range(n + 1)]
    ref = np.sort_complex(np.roots(coeffs))
    np.testing.assert_allclose(np.sort_complex(dirichlet_zeros(n).zeros), ref, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 60), st.sampled_from(["dirichlet", "robin"]))
def test_zeros_are_roots_at_high_precision(n, kind):
    mp.mp.dps = 40
    tab = zero_table(n, kind)
    z = complex(tab.zeros[len(tab) // 3])
    k = lambda w: mp.sqrt(2 / (mp.pi * w)) * mp.besselk(n + mp.mpf(1) / 2, w)
    if kind == "dirichlet":
        f, scale = k, lambda w: abs(w * mp.diff(k, w))
    else:
        f = lambda w: w * mp.diff(k, w) + k(w)
        scale = lambda w: abs(w * mp.diff(f, w))
    w = mp.mpc(z)
    assert abs(f(w)) / scale(w) < 1e-12


@pytest.mark.parametrize("kind", ["dirichlet", "robin"])
@pytest.mark.parametrize("n", [1, 2, 5, 10, 33, 100, 256])
def test_table_invariants(kind, n):
    tab = zero_table(n, kind)
    rep = validate_zero_table(tab)
    assert rep.ok, rep.violations
    assert rep.count == tab.expected_count
    # conjugate pairs adjacent, positive imaginary part first
    z = tab.zeros
    pos = np.flatnonzero(z.imag > 0)
    assert np.allclose(z[pos + 1], np.conj(z[pos]))
    assert np.all(tab.iterations <= 6)


def test_validation_reports_scalings():
    rep = validate_zero_table(robin_zeros(100))
    assert rep.implied_A > 0
    assert 0.5 < rep.max_abs_over_n < 1.5
    assert rep.spacing_ratio < 10


def test_validation_flags_broken_symmetry():
    tab = dirichlet_zeros(6)
    z = np.array(tab.zeros)
    z[0] += 1e-3j
    bad = dataclasses.replace(tab, zeros=z)
    rep = validate_zero_table(bad)
    assert not rep.symmetric and not rep.ok


def test_validation_flags_other_violations():
    tab = dirichlet_zeros(4)
    z = np.array(tab.zeros)[::-1]
    rep = validate_zero_table(dataclasses.replace(tab, zeros=z))
    assert not rep.sorted_ok
    rep = validate_zero_table(dataclasses.replace(tab, zeros=tab.zeros[:3]))
    assert any("count" in v for v in rep.violations)
    rep = validate_zero_table(dataclasses.replace(tab, zeros=tab.zeros + 1e-6))
    assert any("residual" in v for v in rep.violations)


def test_tables_are_immutable_and_deterministic():
    a = zero_table(41, "robin", use_cache=False)
    b = zero_table(41, "robin", use_cache=False)
    assert a.zeros.tobytes() == b.zeros.tobytes()
    with pytest.raises(ValueError):
        a.zeros[0] = 0


def test_seeds_are_close():
    n = 200
    seeds = asymptotic_seeds(n, "dirichlet")
    tab = dirichlet_zeros(n)
    upper = tab.zeros[tab.zeros.imag >= 0]
    d = np.abs(seeds[:, None] - upper[None, :]).min(axis=1)
    assert d.max() < 0.05 * n ** (1 / 3)


def test_newton_non_convergence_names_index():
    with pytest.raises(ZeroFinderError, match="j=1"):
        newton_refine(30, "dirichlet", np.array([-5.0 + 3.0j]), maxiter=1)


def test_bad_kind_and_negative_order():
    with pytest.raises(ValueError):
        zero_table(3, "neumann")
    with pytest.raises(ValueError):
        dirichlet_zeros(-1, use_cache=False)


def test_cache_round_trip(tmp_path):
    tab = robin_zeros(17, use_cache=False)
    path = tmp_path / "t.swzt"
    save_table(tab, path)
    raw = path.read_bytes()
    magic, version, kind, n, count = struct.unpack_from("<4sIBII", raw)
    assert (magic, version, kind, n, count) == (b"SWZT", 1, 1, 17, 18)
    assert len(raw) == struct.calcsize("<4sIBII") + 24 * 18
    back = load_table(path)
    assert back.kind is ZeroKind.ROBIN and back.n == 17
    assert back.zeros.tobytes() == tab.zeros.tobytes()
    assert np.array_equal(back.residuals, tab.residuals)


def test_cache_rejects_corrupt_files(tmp_path):
    path = tmp_path / "bad.swzt"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(ValueError):
        load_table(path)
    save_table(dirichlet_zeros(5, use_cache=False), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ValueError):
        load_table(path)


def test_disk_cache_used(cache_dir):
    tab = zero_table(23, "dirichlet")
    files = list(cache_dir.glob("*.swzt"))
    assert [f.name for f in files] == ["dirichlet_00023.swzt"]
    assert load_table(files[0]).zeros.tobytes() == tab.zeros.tobytes()


def test_concurrent_construction_is_consistent(monkeypatch):
    monkeypatch.setenv("SPHWAVE_CACHE_DIR", "")
    out = {}

    def work(n):
        out[n] = zero_table(n, "robin")

    threads = [threading.Thread(target=work, args=(n,)) for n in range(60, 68)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for n, tab in out.items():
        assert tab.zeros.tobytes() == zero_table(n, "robin", use_cache=False).zeros.tobytes()


def test_table_constructor_freezes_arrays():
    tab = ZeroTable(1, ZeroKind.DIRICHLET, [-1.0 + 0j], [0.0])
    assert not tab.zeros.flags.writeable and tab.expected_count == 1
