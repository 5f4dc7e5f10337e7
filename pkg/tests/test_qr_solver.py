"""Solver battery against the brute-force oracle, plus backend parity."""

import importlib

import numpy as np
import pytest

from crk import _qrpath_py
from crk.quantile import pinball_loss, qr_oracle_bruteforce

try:
    from crk import _qrpath as _compiled
except ImportError:
    _compiled = None


def _path_with(kernel, y, X, taus):
    out = np.empty((len(taus), X.shape[1]))
    kernel.qr_path_into(
        np.ascontiguousarray(y, float),
        np.ascontiguousarray(X, float),
        np.ascontiguousarray(taus, float),
        out,
    )
    return out


def _random_instance(rng, max_n=14, max_p=3):
    n = int(rng.integers(2, max_n + 1))
    p = int(rng.integers(1, max_p + 1))
    p = min(p, n)
    X = rng.normal(size=(n, p))
    if p > 1 and rng.random() < 0.6:
        X[:, 0] = 1.0
    y = rng.normal(size=n)
    if rng.random() < 0.3:  # lattice data provokes ties and degeneracy
        y = np.round(y)
        X = np.round(X * 2) / 2
    return y, X


@pytest.mark.parametrize("kernel_name", ["python", "compiled"])
def test_oracle_battery(kernel_name):
    if kernel_name == "compiled":
        if _compiled is None:
            pytest.skip("compiled kernel not built")
        kernel = _compiled
    else:
        kernel = _qrpath_py
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 150:
        y, X = _random_instance(rng)
        u = float(rng.choice(np.arange(1, 10) / 10))
        try:
            oracle = qr_oracle_bruteforce(y, X, u)
        except np.linalg.LinAlgError:
            continue
        beta = _path_with(kernel, y, X, [u])[0]
        got = pinball_loss(y - X @ beta, u)
        want = pinball_loss(y - X @ oracle, u)
        assert got <= want + 1e-9, f"loss {got} > oracle {want} (n={len(y)})"
        checked += 1


def test_degenerate_designs():
    # duplicated observations, perfect fit, constant outcome
    cases = [
        (np.array([1.0, 1.0, 1.0, 5.0]), np.ones((4, 1)), 0.5),
        (np.array([2.0, 2.0, 2.0]), np.ones((3, 1)), 0.25),
        (np.array([0.0, 0.0, 1.0, 1.0]), np.column_stack([np.ones(4), [0, 0, 1, 1]]), 0.7),
    ]
    for y, X, u in cases:
        beta = _path_with(_qrpath_py, y, X, [u])[0]
        oracle = qr_oracle_bruteforce(y, X, u)
        assert pinball_loss(y - X @ beta, u) == pytest.approx(
            pinball_loss(y - X @ oracle, u), abs=1e-9
        )


def test_n_equals_p_interpolates():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(3, 3))
    y = rng.normal(size=3)
    beta = _path_with(_qrpath_py, y, X, [0.4])[0]
    np.testing.assert_allclose(X @ beta, y, atol=1e-10)


def test_warm_start_matches_cold_start():
    rng = np.random.default_rng(6)
    X = np.column_stack([np.ones(60), rng.normal(size=60)])
    y = rng.normal(size=60)
    taus = np.arange(1, 10) / 10
    path = _path_with(_qrpath_py, y, X, taus)
    for l, u in enumerate(taus):
        cold = _path_with(_qrpath_py, y, X, [u])[0]
        assert pinball_loss(y - X @ path[l], u) == pytest.approx(
            pinball_loss(y - X @ cold, u), abs=1e-9
        )


def test_rank_deficiency_detected_by_both():
    y = np.arange(5.0)
    X = np.column_stack([np.ones(5), 2 * np.ones(5)])
    with pytest.raises(np.linalg.LinAlgError):
        _path_with(_qrpath_py, y, X, [0.5])
    if _compiled is not None:
        with pytest.raises(np.linalg.LinAlgError):
            _path_with(_compiled, y, X, [0.5])


@pytest.mark.skipif(_compiled is None, reason="compiled kernel not built")
def test_backend_parity_on_random_battery():
    rng = np.random.default_rng(123)
    for _ in range(120):
        y, X = _random_instance(rng, max_n=40)
        taus = np.sort(rng.choice(np.arange(1, 20) / 20, size=4, replace=False))
        try:
            py = _path_with(_qrpath_py, y, X, taus)
        except np.linalg.LinAlgError:
            continue
        cy = _path_with(_compiled, y, X, taus)
        for l, u in enumerate(taus):
            lp = pinball_loss(y - X @ py[l], u)
            lc = pinball_loss(y - X @ cy[l], u)
            assert lc == pytest.approx(lp, abs=1e-9)


@pytest.mark.skipif(_compiled is None, reason="compiled kernel not built")
def test_backend_env_override(monkeypatch):
    monkeypatch.setenv("CRK_PURE_PYTHON", "1")
    import crk._backend

    mod = importlib.reload(crk._backend)
    assert mod.backend() == "python"
    monkeypatch.delenv("CRK_PURE_PYTHON")
    mod = importlib.reload(crk._backend)
    assert mod.backend() == "compiled"
