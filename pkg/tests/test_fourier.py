import numpy as np
import pytest
from scipy.integrate import quad

from rdmdecay.fourier import (check_kernel_envelope, cube_decomposition_norm, cube_fourier_coeffs,
                              cube_grid, cube_window, cusp_profile, exponent_law_experiment,
                              fourier_decay_fit, fourier_transform_1d, frequency_set,
                              kernel_matrix, radial_fourier_transform, synth_kernel,
                              truncation_rank_bound, wobble_trajectory)
from rdmdecay.spectra import singular_values


def _static(d, alpha, **kw):
    return synth_kernel(d, alpha, trajectories=lambda t: np.zeros((len(t), 1, d)),
                        amplitude=lambda t: np.ones(len(t)), **kw)


class _Constant:
    d = 1

    def __call__(self, t, x):
        return np.full((len(np.atleast_1d(t)), len(x)), 2.5)


# ---------------------------------------------------------------- kernels

def test_static_cusp_kernel():
    k = _static(1, 1.0)
    x = np.linspace(-0.5, 0.5, 11)
    assert np.allclose(k(np.zeros(1), x)[0], np.abs(x))
    assert np.allclose(k(np.zeros(1), np.array([np.pi]))[0], 0.0)
    # one-sided slopes at the cusp are -1 and +1
    h = 1e-6
    v = k(np.zeros(1), np.array([-h, 0.0, h]))[0]
    assert (v[2] - v[1]) / h == pytest.approx(1.0) and (v[1] - v[0]) / h == pytest.approx(-1.0)


def test_exp_profile_bounded_with_derivative_jump():
    u = np.array([[-1e-6], [0.0], [1e-6], [3.0]])
    v = cusp_profile(u, 0.0, "exp")
    assert np.all(v <= 1) and v[1] == 1.0
    assert (v[2] - v[1]) / 1e-6 == pytest.approx(-1.0, rel=1e-5)
    assert (v[1] - v[0]) / 1e-6 == pytest.approx(1.0, rel=1e-5)


def test_even_alpha_profile_is_not_smooth():
    # |u| u_1 has a jump in its second derivative at 0, unlike |u|^2
    u = np.array([[-1e-3], [0.0], [1e-3]])
    v = cusp_profile(u, 2.0)
    assert np.allclose(v[:, 0] if v.ndim > 1 else v, [-1e-6, 0.0, 1e-6])
    assert np.array_equal(cusp_profile(np.array([[-0.5], [0.5]]), 0.0), [-1.0, 1.0])


def test_alpha_lower_limit():
    with pytest.raises(ValueError):
        synth_kernel(1, -0.5)
    with pytest.raises(ValueError):
        synth_kernel(3, -1.6)
    synth_kernel(3, -1.4)


def test_window():
    assert cube_window(np.array([0.3])) == 1.0
    assert cube_window(np.array([3.2])) == 0.0
    assert np.all(cube_window(np.linspace(-4, 4, 50)) >= 0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_envelope_bounded_on_random_samples(alpha):
    rng = np.random.default_rng(42)
    k = synth_kernel(1, alpha, trajectories=wobble_trajectory(0.3))
    far = [(rng.uniform(-2, 2, 1), rng.uniform(-3, 3, 1)) for _ in range(450)]
    near = []
    for _ in range(50):
        t = rng.uniform(-2, 2, 1)
        z = k.trajectories(t[None])[0, 0]
        near.append((t, z + rng.choice([-1, 1]) * 10 ** rng.uniform(-2.5, -1, 1)))
    ratios = check_kernel_envelope(k, far + near)
    assert all(np.isfinite(v) and v < 100 for v in ratios.values())


def test_envelope_three_dimensional():
    rng = np.random.default_rng(7)
    samples = [(rng.uniform(-1, 1, 3), rng.uniform(-2, 2, 3)) for _ in range(60)]
    ratios = check_kernel_envelope(synth_kernel(3, 1.0), samples)
    assert all(np.isfinite(v) and v < 20 for v in ratios.values())


# ---------------------------------------------------------------- coefficients

def test_frequency_set():
    assert len(frequency_set(3, 1)) == 7
    nu = frequency_set(2, 2)
    assert len(nu) == 13 and np.all(np.sum(nu**2, axis=1) <= 4)


def test_constant_kernel_has_only_zero_mode():
    nu, c = cube_fourier_coeffs(_Constant(), np.zeros(2), 8, 64)
    zero = np.all(nu == 0, axis=1)
    assert np.allclose(c[:, zero], 2.5 * np.sqrt(2 * np.pi), rtol=1e-14)
    assert np.max(np.abs(c[:, ~zero])) < 1e-13


def test_parseval():
    k = _static(1, 1.0)
    f = lambda x: (abs(x) * cube_window(np.array([x]))[0]) ** 2  # noqa: E731
    exact = quad(f, -np.pi, 0, limit=200)[0] + quad(f, 0, np.pi, limit=200)[0]
    nu, c = cube_fourier_coeffs(k, np.zeros(1), 128, 1024)
    assert np.sum(np.abs(c) ** 2) == pytest.approx(exact, rel=1e-4)


def test_parseval_three_dimensional():
    k = _static(3, 1.0)
    x, h = cube_grid(64, 3)
    direct = h * np.sum(k(np.zeros(3), x) ** 2)
    nu, c = cube_fourier_coeffs(k, np.zeros(3), 16, 64)
    # modes with |nu| <= 16 carry almost all the energy
    assert np.sum(np.abs(c) ** 2) == pytest.approx(direct, rel=1e-4)


def test_abs_coefficients_decay_like_nu_squared():
    nu, c = cube_fourier_coeffs(_static(1, 1.0), np.zeros(1), 256, 2048)
    a = np.abs(c[0])
    sel = (nu[:, 0] >= 8) & (nu[:, 0] <= 128)
    slope = np.polyfit(np.log(nu[sel, 0]), np.log(a[sel]), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.05)


def test_aliasing_guard():
    with pytest.raises(ValueError):
        cube_fourier_coeffs(_static(1, 1.0), np.zeros(1), 64, 128)


# ---------------------------------------------------------------- transforms

def test_radial_transform_of_gaussian():
    k = np.array([0.5, 2.0, 5.0])
    got = radial_fourier_transform(lambda r: np.exp(-r**2 / 2), k, 12.0, panels=200)
    assert np.allclose(got, np.exp(-k**2 / 2), rtol=1e-10, atol=1e-14)


def test_three_dimensional_cusp_exponent():
    u = lambda r: np.exp(-r) * cube_window(r)  # noqa: E731
    s, _, _ = fourier_decay_fit(lambda k: radial_fourier_transform(u, k, np.pi), 2.0, 200.0)
    assert s == pytest.approx(4.0, abs=0.2)
    # the window only adds a smooth piece, so the exact windowless law holds at large xi
    xi = np.geomspace(50, 200, 7)
    exact = (2 * np.pi) ** -1.5 * 8 * np.pi / (1 + xi**2) ** 2
    assert np.allclose(radial_fourier_transform(u, xi, np.pi), exact, rtol=1e-2)


def test_one_dimensional_cusp_exponent():
    u = lambda x: np.exp(-np.abs(x)) * cube_window(x)  # noqa: E731
    s, _, _ = fourier_decay_fit(lambda k: fourier_transform_1d(u, k, np.pi), 2.0, 200.0)
    assert s == pytest.approx(2.0, abs=0.1)
    xi = np.geomspace(50, 200, 7)
    exact = np.sqrt(2 / np.pi) / (1 + xi**2)
    assert np.allclose(fourier_transform_1d(u, xi, np.pi).real, exact, rtol=1e-2)


def test_smooth_function_decays_faster():
    # alpha + d + 2 = 6 for a smooth 3-d bump; the range stops before roundoff
    def fit(lo, hi):
        return fourier_decay_fit(lambda k: radial_fourier_transform(cube_window, k, np.pi),
                                 lo, hi)[0]

    assert fit(10.0, 100.0) > 6.0
    # the apparent exponent keeps growing, as for super-polynomial decay
    assert fit(5.0, 60.0) < fit(10.0, 100.0) < fit(20.0, 100.0)


def test_dynamic_range_guard():
    with pytest.raises(ValueError):
        fourier_decay_fit(lambda k: 1.0 / k, 2.0, 20.0)


# ---------------------------------------------------------------- truncation

def _t_grid(n=128):
    t, h = cube_grid(n, 1)
    return t, np.full(n, h)


def test_truncation_rank_one_smooth_kernel():
    t, tw = _t_grid()

    class RankOne:
        d = 1

        def __call__(self, tt, x):
            return np.outer(np.exp(-np.ravel(tt) ** 2), np.exp(np.cos(np.ravel(x))))

    res = truncation_rank_bound(RankOne(), t, tw, 16, 256)
    assert res.holds and res.bound < 1e-12 and res.actual < 1e-12


@pytest.mark.parametrize("M", [4, 8, 16, 32])
def test_truncation_bound_dominates(M):
    k = synth_kernel(1, 1.0)
    t, tw = _t_grid(256)
    res = truncation_rank_bound(k, t, tw, M)
    assert res.m == 2 * M + 1
    assert res.holds
    assert res.ratio < 1e3


# ---------------------------------------------------------------- exponent law

def test_predicted_exponents():
    for d, alpha, expected in ((1, 1.0, 2.0), (3, 1.0, 4 / 3), (1, 2.0, 3.0)):
        assert 1 + alpha / d == pytest.approx(expected)
    with pytest.raises(ValueError):
        exponent_law_experiment(2, 1.0)
    with pytest.raises(ValueError):
        exponent_law_experiment(1, 1.0, resolution=256)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_exponent_law_one_dimension(alpha):
    res = exponent_law_experiment(1, alpha)
    assert res.predicted == pytest.approx(1 + alpha)
    assert res.relative_error < 0.10
    if alpha == 2.0:
        assert res.measured == pytest.approx(3.0, abs=0.15)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_exponent_law_three_dimensions(alpha):
    res = exponent_law_experiment(3, alpha)
    assert res.predicted == pytest.approx(1 + alpha / 3)
    assert res.relative_error < 0.10


# ---------------------------------------------------------------- cube split

def test_single_cube_degenerates():
    k = synth_kernel(1, 1.0)
    t, tw = _t_grid(64)
    x = np.linspace(-0.45, 0.45, 64)
    res = cube_decomposition_norm(k, lambda p: np.ones(len(p)), 0.5, t, tw, x, 0.9 / 64)
    assert len(res.pieces) == 1
    assert res.rhs == pytest.approx((2 / 1.5) ** 2 * res.lhs, rel=1e-12)


def test_vanishing_weight_on_one_cube():
    k = synth_kernel(1, 1.0)
    t, tw = _t_grid(64)
    x = np.concatenate([np.linspace(-0.45, 0.45, 40), np.linspace(0.55, 1.45, 40)])
    res = cube_decomposition_norm(k, lambda p: (p[:, 0] < 0.5).astype(float), 0.75, t, tw, x, 0.02)
    values = dict(res.pieces)
    assert values[(1,)] == 0.0 and values[(0,)] > 0
    assert res.holds


def test_three_cube_random_draws():
    rng = np.random.default_rng(42)
    t, tw = _t_grid(64)
    x = np.linspace(-1.5, 1.5, 90, endpoint=False) + 1 / 60
    for _ in range(50):
        k = synth_kernel(1, rng.uniform(0, 2), trajectories=wobble_trajectory(rng.uniform(0, 6)))
        c = rng.uniform(0, 2, 3)
        a = lambda p, c=c: c[np.clip(np.floor(p[:, 0] + 0.5).astype(int) + 1, 0, 2)]  # noqa: E731
        res = cube_decomposition_norm(k, a, rng.uniform(0.3, 1.5), t, tw, x, 3 / 90)
        assert len(res.pieces) == 3 and res.holds


def test_cube_pieces_have_zero_cross_products():
    k = synth_kernel(1, 1.0)
    t, tw = _t_grid(64)
    x = np.linspace(-1.5, 1.5, 60, endpoint=False) + 0.025
    A = kernel_matrix(k, t, tw, x[:, None], 0.05)
    labels = np.floor(x + 0.5).astype(int)
    pieces = [np.where((labels == n)[None, :], A, 0.0) for n in (-1, 0, 1)]
    for i in range(3):
        for j in range(3):
            if i != j:
                # disjoint column supports: W_i W_j^* vanishes exactly
                assert np.max(np.abs(pieces[i] @ pieces[j].T)) == 0.0
    assert np.allclose(sum(pieces), A)
    assert singular_values(pieces[0])[0] <= singular_values(A)[0]
