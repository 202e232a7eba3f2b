import cmath
import math

import pytest

ptdelta = pytest.importorskip("ptdelta")


def fixed_point_kappa(b, sign):
    lo, hi = 1e-12, 1.0
    f = lambda k: k - 0.5 * (1.0 + sign * math.exp(-2.0 * k * b))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (f(mid) < 0) == (f(lo) < 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_hermitian_linear_states():
    states = ptdelta.solve_all_states(ptdelta.TrapParams(gamma=0.0, g=0.0))
    kappas = {s.branch: s.kappa for s in states}
    assert abs(kappas[ptdelta.Branch.Ground] - fixed_point_kappa(1.1, 1.0)) < 1e-10
    assert abs(kappas[ptdelta.Branch.Excited] - fixed_point_kappa(1.1, -1.0)) < 1e-10


def test_linear_spectrum_roots():
    for k in ptdelta.linear_spectrum(0.2):
        assert abs(ptdelta.linear_determinant(k, 0.2)) < 1e-12
    ep = ptdelta.linear_exceptional_point()
    assert 0.39 < ep.gamma < 0.41


def test_broken_pair_is_conjugate():
    states = ptdelta.solve_all_states(ptdelta.TrapParams(gamma=0.32, g=-1.0))
    by_branch = {s.branch: s for s in states}
    plus = by_branch[ptdelta.Branch.BrokenPlus]
    minus = by_branch[ptdelta.Branch.BrokenMinus]
    assert abs(plus.kappa - minus.kappa.conjugate()) < 1e-8
    assert abs(plus.norm - 1.0) < 1e-9
    assert len(plus.x) == len(plus.psi)
    assert abs(plus(0.0) - plus.psi[min(range(len(plus.x)), key=lambda i: abs(plus.x[i]))]) < 1e-6


def test_bdg_mode_and_classification():
    mode = ptdelta.tracked_mode(ptdelta.TrapParams(gamma=0.2, g=-1.0))
    assert mode.stability == ptdelta.Stability.Oscillatory
    assert abs(mode.normalization - 1.0) < 1e-8
    q = mode.quadruplet()
    assert q[2] == mode.omega.conjugate()
    assert ptdelta.classify(0.05j) == ptdelta.Stability.Unstable


def test_growth_fit():
    t = [0.1 * i for i in range(1500)]
    a = [1e-4 * math.exp(0.05 * x) for x in t]
    fit = ptdelta.fit_growth_rate(t, a, 1e-4)
    assert not fit.stable
    assert fit.rate == pytest.approx(0.05, rel=1e-9)


def test_errors_are_mapped():
    with pytest.raises(ValueError):
        ptdelta.TrapParams(gamma=-1.0)
    with pytest.raises(LookupError):
        ptdelta.locate_pitchfork(ptdelta.TrapParams(g=0.0))


def test_cli_entry_point(tmp_path):
    assert ptdelta.main(["spectrum", "--gamma-min", "0.3", "--gamma-max", "0.1"]) == 64
    assert ptdelta.main(["verify", "--g", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "verify_manifest.json").exists()
    assert ptdelta.sha256_hex("abc").startswith("ba7816bf")
