"""Spherical-harmonics basis against an independently typed polynomial table."""

import numpy as np

from hsplat import sh


def _reference_basis(d):
    """Real SH through degree 3, written out from the standard closed forms
    (independent of the package's constant tables)."""
    x, y, z = d
    pi = np.pi
    out = [0.5 * np.sqrt(1 / pi)]
    # degree 1, m = -1, 0, 1
    out += [
        -np.sqrt(3 / (4 * pi)) * y,
        np.sqrt(3 / (4 * pi)) * z,
        -np.sqrt(3 / (4 * pi)) * x,
    ]
    # degree 2
    out += [
        0.5 * np.sqrt(15 / pi) * x * y,
        -0.5 * np.sqrt(15 / pi) * y * z,
        0.25 * np.sqrt(5 / pi) * (2 * z * z - x * x - y * y),
        -0.5 * np.sqrt(15 / pi) * x * z,
        0.25 * np.sqrt(15 / pi) * (x * x - y * y),
    ]
    # degree 3
    out += [
        -0.25 * np.sqrt(35 / (2 * pi)) * y * (3 * x * x - y * y),
        0.5 * np.sqrt(105 / pi) * x * y * z,
        -0.25 * np.sqrt(21 / (2 * pi)) * y * (4 * z * z - x * x - y * y),
        0.25 * np.sqrt(7 / pi) * z * (2 * z * z - 3 * x * x - 3 * y * y),
        -0.25 * np.sqrt(21 / (2 * pi)) * x * (4 * z * z - x * x - y * y),
        0.25 * np.sqrt(105 / pi) * z * (x * x - y * y),
        -0.25 * np.sqrt(35 / (2 * pi)) * x * (x * x - 3 * y * y),
    ]
    return np.array(out)


def random_dirs(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def test_dc_constant():
    assert abs(sh.SH_C0 - 0.28209479177) < 1e-9
    dirs = random_dirs(np.random.default_rng(0), 10)
    basis = sh.sh_basis(dirs, 0)
    np.testing.assert_allclose(basis, sh.SH_C0)


def test_basis_matches_reference_table():
    rng = np.random.default_rng(1)
    dirs = random_dirs(rng, 40)
    basis = sh.sh_basis(dirs, 3)
    for i, d in enumerate(dirs):
        np.testing.assert_allclose(basis[i], _reference_basis(d), atol=1e-12)


def test_zero_coeffs_give_mid_gray():
    dirs = random_dirs(np.random.default_rng(2), 5)
    coeffs = np.zeros((5, 16, 3))
    np.testing.assert_allclose(sh.eval_sh_color(coeffs, dirs, 3), 0.5)


def test_color_clamped():
    dirs = random_dirs(np.random.default_rng(3), 8)
    coeffs = np.zeros((8, 16, 3))
    coeffs[:, 0, 0] = 10.0
    coeffs[:, 0, 1] = -10.0
    c = sh.eval_sh_color(coeffs, dirs, 3)
    np.testing.assert_allclose(c[:, 0], 1.0)
    np.testing.assert_allclose(c[:, 1], 0.0)


def test_degree_truncation_consistent():
    rng = np.random.default_rng(4)
    dirs = random_dirs(rng, 6)
    coeffs = rng.normal(size=(6, 16, 3)) * 0.1
    full = sh.eval_sh_color(coeffs, dirs, 3)
    trunc = coeffs.copy()
    trunc[:, sh.num_coeffs(1):, :] = 0.0
    np.testing.assert_allclose(
        sh.eval_sh_color(coeffs, dirs, 1), sh.eval_sh_color(trunc, dirs, 3),
        atol=1e-14,
    )
    assert not np.allclose(full, sh.eval_sh_color(coeffs, dirs, 1))


def test_basis_grad_vs_fd():
    rng = np.random.default_rng(5)
    dirs = random_dirs(rng, 12)
    g = sh.sh_basis_grad(dirs, 3)
    h = 1e-6
    for ax in range(3):
        dp = dirs.copy()
        dp[:, ax] += h
        dm = dirs.copy()
        dm[:, ax] -= h
        fd = (sh.sh_basis(dp, 3) - sh.sh_basis(dm, 3)) / (2 * h)
        np.testing.assert_allclose(g[:, :, ax], fd, atol=1e-8)


def test_eval_with_grads_consistent():
    rng = np.random.default_rng(6)
    dirs = random_dirs(rng, 7)
    coeffs = rng.normal(size=(7, 16, 3)) * 0.2
    color, basis, dcol, mask = sh.eval_sh_color_with_grads(coeffs, dirs, 2)
    np.testing.assert_allclose(color, sh.eval_sh_color(coeffs, dirs, 2))
    np.testing.assert_allclose(basis, sh.sh_basis(dirs, 2))
    assert mask.dtype == bool and dcol.shape == (7, 3, 3)
