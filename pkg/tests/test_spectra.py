import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdmdecay.density import rho, tau_kernel
from rdmdecay.quadrature import default_half_width, scheme_for, tensor_gauss
from rdmdecay.radial import radial_spectra
from rdmdecay.spectra import (DecompositionError, DiscretizedOperator, GridConfig, SpectrumResult,
                              auto_window, block_vector_check, discretize_gamma,
                              discretize_psi_map, discretize_tau, discretize_v_map,
                              factorization_gap, finite_rank_check, fit_decay,
                              leading_singular_values, local_slopes, operator_grid,
                              orthogonal_sum_check, quasinorm_triangle_check, schatten,
                              singular_values, weak_quasinorm)
from rdmdecay.wavefunctions import ModelWavefunction

FULL = ModelWavefunction(2, 2.0, (1.0, 1.0))
SEP = ModelWavefunction(2, 2.0, (0.8, 1.3), nuclear_jastrow=False, pair_jastrow=False)


def _rand(rng, m=None, n=None):
    m = m or int(rng.integers(20, 61))
    n = n or int(rng.integers(20, 61))
    return rng.standard_normal((m, n))


# ---------------------------------------------------------------- values

def test_singular_values_diag():
    assert np.array_equal(singular_values(np.diag([3.0, 4.0])), [4.0, 3.0])
    with pytest.raises(DecompositionError):
        singular_values(np.array([[np.nan, 1.0], [0.0, 1.0]]))


def test_unitary_invariance():
    rng = np.random.default_rng(42)
    A = _rand(rng, 30, 30)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 30)))
    assert np.allclose(singular_values(Q @ A), singular_values(A), rtol=0, atol=1e-10)


def test_singular_values_match_gram_eigenvalues():
    A = _rand(np.random.default_rng(42), 30, 30)
    ev = np.sort(np.linalg.eigvalsh(A.T @ A))[::-1]
    assert np.allclose(singular_values(A), np.sqrt(np.clip(ev, 0, None)), rtol=1e-10)


def test_leading_singular_values():
    A = _rand(np.random.default_rng(0), 60, 40)
    assert np.allclose(leading_singular_values(A, 3), singular_values(A)[:3], rtol=1e-10)
    assert np.allclose(leading_singular_values(A, 40), singular_values(A))


def test_schatten_and_weak_examples():
    assert schatten([4.0, 3.0], 2) == pytest.approx(5.0)
    assert schatten([], 1) == 0.0 and weak_quasinorm([], 1) == 0.0
    for p in (0.375, 0.5, 1.0, 2.0):
        s = np.arange(1, 200) ** (-1.0 / p)
        assert weak_quasinorm(s, p) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        schatten([1.0], 0)


def test_weak_below_schatten():
    rng = np.random.default_rng(42)
    for _ in range(100):
        s = np.abs(rng.standard_normal(int(rng.integers(1, 50)))) * 10 ** rng.uniform(-3, 3)
        p = rng.uniform(0.2, 3)
        assert weak_quasinorm(s, p) <= schatten(s, p) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=30),
       st.integers(0, 20), st.floats(0.2, 3))
def test_weak_invariant_under_appended_zeros(values, zeros, p):
    assert weak_quasinorm(values + [0.0] * zeros, p) == weak_quasinorm(values, p)


# ---------------------------------------------------------------- fitting

def test_fit_exact_power_laws():
    k = np.arange(1, 101, dtype=float)
    f = fit_decay(k**-2.0, (1, 100))
    assert f.exponent == pytest.approx(2.0, abs=1e-12) and f.residual < 1e-12
    f = fit_decay(5 * k ** (-8 / 3), (10, 80))
    assert f.exponent == pytest.approx(8 / 3, abs=1e-12)
    assert f.amplitude == pytest.approx(5.0, rel=1e-10)
    assert f.log_amplitude == pytest.approx(np.log(5.0))


def test_fit_noisy_power_law():
    rng = np.random.default_rng(42)
    k = np.arange(1, 1001, dtype=float)
    s = k**-2.0 * (1 + 0.01 * rng.standard_normal(k.size))
    assert 1.95 <= fit_decay(s, (10, 1000)).exponent <= 2.05


def test_fit_rejects_bad_windows():
    s = np.arange(1, 20, dtype=float) ** -1.0
    for window in ((0, 10), (5, 30), (3, 6)):
        with pytest.raises(ValueError):
            fit_decay(s, window)
    with pytest.raises(ValueError):
        fit_decay(np.r_[s, 0.0], (10, 20))


def test_auto_window_cuts_at_knee():
    k = np.arange(1, 2001, dtype=float)
    clean = k**-2.0
    assert auto_window(clean) == (10, 500)
    # a discretisation floor after k = 200 bends the tail
    bent = np.where(k <= 200, k**-2.0, 200.0**-2.0 * (k / 200) ** -8.0)
    lo, hi = auto_window(bent)
    assert lo == 10 and hi <= 260
    assert fit_decay(bent, (lo, hi)).exponent < 2.5
    assert all(abs(e - 2) < 1e-9 for _, e in local_slopes(clean, 10, 500))


def test_spectrum_result_roundtrip(tmp_path):
    k = np.arange(1, 301, dtype=float)
    res = SpectrumResult.from_values(3 * k**-1.5, (10, 200), ps=(0.5, 1.0))
    assert res.exponent == pytest.approx(1.5)
    assert res.quasinorms[1.0] == pytest.approx(3.0)
    res.to_csv(tmp_path / "s.csv")
    res.to_json(tmp_path / "s.json")
    back = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1], res.values)
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["window"] == [10, 200] and "0.5" in summary["quasinorms"]
    with pytest.raises(ValueError):
        SpectrumResult(np.array([1.0, 2.0]), (1, 2), 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        SpectrumResult(np.array([1.0, 0.0]), (1, 2), 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        SpectrumResult(np.array([1.0]), (1, 1), 0.0, np.nan, 0.0)


# ---------------------------------------------------------------- calculus

def test_finite_rank_equality_at_best_truncation():
    rng = np.random.default_rng(42)
    A = _rand(rng, 40, 30)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    for n in (1, 5, 12):
        K = (U[:, :n] * s[:n]) @ Vt[:n]
        for p in (0.5, 1.0, 2.0):
            rep = finite_rank_check(A, K, p, n)
            assert rep["holds"]
            assert rep["tail"].lhs == pytest.approx(rep["tail"].rhs, rel=1e-10)


def test_finite_rank_zero_approximation():
    A = _rand(np.random.default_rng(1), 20, 20)
    rep = finite_rank_check(A, np.zeros_like(A), 0.75, 0)
    assert rep["holds"] and "s2n" not in rep
    assert rep["tail"].lhs == pytest.approx(rep["tail"].rhs, rel=1e-12)


def test_finite_rank_random():
    rng = np.random.default_rng(42)
    for _ in range(200):
        A = _rand(rng)
        n = int(rng.integers(1, min(A.shape) // 2))
        K = rng.standard_normal((A.shape[0], n)) @ rng.standard_normal((n, A.shape[1]))
        assert finite_rank_check(A, K, rng.uniform(0.25, 2), n)["holds"]


def test_triangle_zero_summand_and_random():
    rng = np.random.default_rng(42)
    A = _rand(rng, 25, 25)
    assert quasinorm_triangle_check([A, np.zeros_like(A)], 0.75).holds
    for _ in range(200):
        m, n = int(rng.integers(20, 61)), int(rng.integers(20, 61))
        assert quasinorm_triangle_check([_rand(rng, m, n), _rand(rng, m, n)], 0.75).holds


def test_weighted_triangle_five_terms():
    rng = np.random.default_rng(42)
    for _ in range(200):
        m, n = int(rng.integers(20, 61)), int(rng.integers(20, 61))
        ops = [_rand(rng, m, n) * 10 ** rng.uniform(-2, 2) for _ in range(5)]
        assert quasinorm_triangle_check(ops, 0.5, weighted=True).holds
    with pytest.raises(ValueError):
        quasinorm_triangle_check(ops, 1.5, weighted=True)


def test_orthogonal_single_block():
    A = _rand(np.random.default_rng(0), 20, 20)
    rep = orthogonal_sum_check([A], 0.75)
    assert rep.holds and rep.rhs >= rep.lhs


def test_orthogonal_disjoint_rows_random():
    rng = np.random.default_rng(42)
    for _ in range(200):
        m, n = int(rng.integers(20, 61)), int(rng.integers(20, 61))
        cut = int(rng.integers(1, m))
        A, B = np.zeros((m, n)), np.zeros((m, n))
        A[:cut] = rng.standard_normal((cut, n))
        B[cut:] = rng.standard_normal((m - cut, n))
        assert orthogonal_sum_check([A, B], 0.75).holds


def test_orthogonal_disjoint_columns_accepted():
    rng = np.random.default_rng(3)
    A, B = np.zeros((20, 20)), np.zeros((20, 20))
    A[:, :8] = rng.standard_normal((20, 8))
    B[:, 8:] = rng.standard_normal((20, 12))
    assert np.allclose(A @ B.T, 0) and not np.allclose(A.T @ B, 0)
    assert orthogonal_sum_check([A, B], 1.0).holds
    with pytest.raises(ValueError):
        orthogonal_sum_check([A, A], 1.0)


def test_orthogonal_equal_diagonal_blocks_merged_multiset():
    s = np.array([5.0, 2.0, 1.0, 0.5])
    A, B = np.zeros((8, 8)), np.zeros((8, 8))
    A[:4, :4] = np.diag(s)
    B[4:, 4:] = np.diag(s)
    p = 0.75
    merged = np.repeat(s, 2)
    rep = orthogonal_sum_check([A, B], p)
    assert rep.lhs == pytest.approx(weak_quasinorm(merged, p) ** p, rel=1e-14)
    assert rep.rhs == pytest.approx(2 / (2 - p) * 2 * weak_quasinorm(s, p) ** p, rel=1e-14)


def test_block_vector_single_and_random():
    rng = np.random.default_rng(42)
    A = _rand(rng, 20, 20)
    rep = block_vector_check([A], 1.0)
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-14)
    for _ in range(200):
        comps = [_rand(rng, 20, 20) for _ in range(3)]
        assert block_vector_check(comps, 1.0).holds
    with pytest.raises(ValueError):
        block_vector_check([A, _rand(rng, 20, 21)], 1.0)


def test_block_vector_identical_components_scale_by_sqrt_J():
    A = _rand(np.random.default_rng(5), 20, 20)
    p, J = 0.5, 4
    rep = block_vector_check([A] * J, p)
    single = weak_quasinorm(singular_values(A), p)
    e = 2 * p / (p + 2)
    assert rep.lhs == pytest.approx((np.sqrt(J) * single) ** e, rel=1e-12)
    assert rep.rhs == pytest.approx(J * single**e, rel=1e-12)
    assert rep.slack == pytest.approx(single**e * (J - J ** (e / 2)), rel=1e-10)


# ---------------------------------------------------------------- discretisation

@pytest.fixture(scope="module")
def small_ops():
    scheme = scheme_for(FULL, n=10, half_width=4.0)
    grid = GridConfig(7, 4.0)
    return scheme, grid, discretize_gamma(FULL, scheme, grid), discretize_psi_map(FULL, scheme, grid)


def test_grid_compression_and_grading():
    assert GridConfig(22, 6.0).effective_n() == 12
    assert GridConfig(10, 6.0, max_nodes=1000).effective_n() == 10
    g, w = operator_grid(GridConfig(12, 6.0))
    assert g.shape == (12**3, 3) and np.all(w > 0)
    # the sinh map is not polynomial, so the box volume is only approximate
    assert np.sum(w) == pytest.approx(12.0**3, rel=5e-3)
    _, w0 = operator_grid(GridConfig(12, 6.0, grading=0.0))
    assert np.sum(w0) == pytest.approx(12.0**3, rel=1e-12)
    plain, _ = operator_grid(GridConfig(12, 6.0, grading=0.0))
    assert np.min(np.abs(g)) < np.min(np.abs(plain))


def test_separable_gamma_has_rank_one():
    scheme = tensor_gauss(3, 16, default_half_width(0.8))
    ev = discretize_gamma(SEP, scheme, GridConfig(6, 3.0)).eigenvalues()
    assert abs(ev[1]) < 1e-10 * ev[0]


def test_nystrom_trace_and_hermitian(small_ops):
    scheme, grid, G, _ = small_ops
    nodes, w = operator_grid(grid)
    assert np.trace(G.matrix) == pytest.approx(np.dot(w, rho(FULL, scheme, nodes)), rel=1e-12)
    assert np.array_equal(G.matrix, G.matrix.T)
    assert G.is_psd()


def test_psi_map_gram_and_factorization(small_ops):
    _, _, G, P = small_ops
    assert np.allclose(P.matrix.T @ P.matrix, G.matrix, rtol=0, atol=1e-13 * np.abs(G.matrix).max())
    ev = G.eigenvalues()
    s2 = singular_values(P.matrix) ** 2
    assert np.max(np.abs(ev[:20] - s2[:20]) / ev[:20]) < 1e-10
    assert factorization_gap(G.matrix, P.matrix) < 1e-12


def test_separable_psi_map_top_value():
    scheme = tensor_gauss(3, 16, default_half_width(0.8))
    grid = GridConfig(6, 3.0)
    P = discretize_psi_map(SEP, scheme, grid)
    nodes, w = operator_grid(grid)
    g2 = np.dot(scheme.weights, np.exp(-1.6 * np.sum(scheme.nodes**2, axis=1)))
    h2 = np.dot(w, np.exp(-2.6 * np.sum(nodes**2, axis=1)))
    assert singular_values(P.matrix)[0] ** 2 == pytest.approx(g2 * h2, rel=1e-12)


def test_v_map_gram_is_tau():
    scheme = scheme_for(FULL, n=8, half_width=4.0)
    grid = GridConfig(5, 4.0)
    T = discretize_tau(FULL, scheme, grid)
    V = discretize_v_map(FULL, scheme, grid)
    assert np.allclose(V.matrix.T @ V.matrix, T.matrix, rtol=0, atol=1e-13 * np.abs(T.matrix).max())
    nodes, w = operator_grid(grid)
    diag = tau_kernel(FULL, scheme, nodes, nodes) * w
    assert np.allclose(np.diag(T.matrix), diag, rtol=1e-12)
    assert T.is_psd()
    assert factorization_gap(T.matrix, V.matrix) < 1e-12


def test_hermitian_guard():
    with pytest.raises(DecompositionError):
        DiscretizedOperator(np.array([[1.0, 2.0], [0.0, 1.0]]), None, None, None, None, "gamma")
    op = DiscretizedOperator(np.array([[1.0, 2.0], [0.0, 1.0]]), None, None, None, None, "synthetic")
    assert op.shape == (2, 2)
    with pytest.raises(ValueError):
        discretize_gamma(FULL, scheme_for(FULL, n=4), (np.zeros((2, 3)) + 0.3, np.array([1.0, -1.0])))


def test_leading_occupation_self_convergence():
    # graded grids resolve the nuclear cusp; the top occupation number settles between 20^3 and 24^3
    L = default_half_width(FULL.min_beta)
    scheme = scheme_for(FULL, n=16, half_width=L, grading=3.0)
    top = []
    for n in (20, 24):
        P = discretize_psi_map(FULL, scheme, GridConfig(n, L, n**3))
        top.append(leading_singular_values(P.matrix, 1)[0] ** 2)
        del P
    assert abs(top[0] - top[1]) < 1e-3 * top[1]
    ref = radial_spectra(FULL, nr=120, lmax=4, want_tau=False).gamma[0]
    assert top[1] == pytest.approx(ref, rel=1e-3)
