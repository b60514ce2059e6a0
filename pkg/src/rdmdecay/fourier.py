"""
Synthetic cusp kernels, their Fourier coefficients on the 2 pi cube, and the
singular-value exponent law s = 1 + alpha/d.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .spectra import fit_decay, singular_values, weak_quasinorm
from .wavefunctions import theta_radial


def cube_window(x):
    """Smooth window equal to 1 for |x| <= pi/2 and 0 for |x| >= pi."""
    x = np.asarray(x, dtype=float)
    r = np.abs(x) if x.ndim <= 1 else np.linalg.norm(x, axis=-1)
    return theta_radial(2.0 * r / np.pi)


def cusp_profile(u, alpha, kind="power"):
    """Profile with a singularity of order exactly alpha at u = 0.

    ``u`` has shape (..., d).  For even integer alpha, |u|^alpha is smooth, so
    |u|^(alpha-1) u_1 is used instead.  ``kind='exp'`` gives exp(-|u|).
    """
    u = np.asarray(u, dtype=float)
    r = np.linalg.norm(u, axis=-1)
    if kind == "exp":
        return np.exp(-r)
    with np.errstate(divide="ignore", invalid="ignore"):
        if float(alpha).is_integer() and int(alpha) % 2 == 0:
            out = np.where(r > 0, r ** (alpha - 1) * u[..., 0], 0.0)
        else:
            out = np.where(r > 0, r**alpha, 0.0 if alpha > 0 else np.inf)
    return out


@dataclass
class SyntheticCuspKernel:
    """T(t, x) = A(t) window(x) sum_k profile(x - z_k(t)).

    ``trajectories`` maps t of shape (T, l) to (T, K, d) and ``amplitude``
    maps t to (T,).
    """

    d: int
    alpha: float
    trajectories: Callable
    amplitude: Callable
    l: int = 1
    profile: str = "power"
    window: Callable = cube_window

    def __call__(self, t, x):
        t = np.asarray(t, dtype=float).reshape(-1, self.l)
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        z = self.trajectories(t)
        total = np.zeros((t.shape[0], x.shape[0]))
        for k in range(z.shape[1]):
            total += cusp_profile(x[None, :, :] - z[:, k, None, :], self.alpha, self.profile)
        return self.amplitude(t)[:, None] * self.window(x)[None, :] * total

    def distance_terms(self, t, x, order):
        """1 + sum_k (1 ^ |x - z_k|)^(alpha - order), the envelope shape."""
        t = np.asarray(t, dtype=float).reshape(-1, self.l)
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        z = self.trajectories(t)
        dist = np.linalg.norm(x[None, :, None, :] - z[:, None, :, :], axis=-1)
        a = self.alpha if self.profile == "power" else 1.0
        return 1.0 + np.sum(np.minimum(1.0, dist) ** (a - order), axis=-1)


def synth_kernel(d, alpha, trajectories=None, amplitude=None, l=None, profile="power",
                 window=cube_window):
    """Build a synthetic cusp kernel with defaults z(t) = t and Gaussian A(t)."""
    if alpha <= -d / 2:
        raise ValueError(f"alpha must exceed -d/2 = {-d / 2}")
    l = d if l is None else l
    if trajectories is None:
        if l != d:
            raise ValueError("default trajectory z(t) = t needs l = d")
        trajectories = lambda t: t[:, None, :]
    if amplitude is None:
        amplitude = lambda t: np.exp(-np.sum(t**2, axis=-1))
    return SyntheticCuspKernel(d, float(alpha), trajectories, amplitude, l, profile, window)


def wobble_trajectory(phase=0.0, amp=0.3):
    """Monotone 1-d trajectory z(t) = t + amp sin(t + phase)."""
    return lambda t: (t + amp * np.sin(t + phase))[:, None, :]


def check_kernel_envelope(kernel, samples, h=1e-4):
    """Max over samples of |d^j T| / (A window (1 + sum (1 ^ |x-z|)^(alpha-|j|))), |j| <= 2.

    ``samples`` is a list of (t, x) pairs off the trajectories.  Returns a
    dict order -> max ratio.
    """
    ratios = {0: 0.0, 1: 0.0, 2: 0.0}
    stencil = {0: ([0], [1.0]), 1: ([-1, 1], [-0.5, 0.5]), 2: ([-1, 0, 1], [1.0, -2.0, 1.0])}
    for t, x in samples:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        amp = float(kernel.amplitude(t.reshape(1, -1))[0])
        for order in (0, 1, 2):
            env = float(kernel.distance_terms(t, x, order)[0, 0]) * amp
            best = 0.0
            for m in itertools.product(range(order + 1), repeat=kernel.d):
                if sum(m) != order:
                    continue
                offs, coefs = [], []
                for parts in itertools.product(*[zip(*stencil[mi]) for mi in m]):
                    offs.append([p[0] for p in parts])
                    coefs.append(np.prod([p[1] for p in parts]))
                pts = x[None, :] + h * np.array(offs, dtype=float)
                vals = kernel(t, pts)[0]
                best = max(best, abs(np.dot(coefs, vals)) / h**order)
            ratios[order] = max(ratios[order], best / env)
    return ratios


# ---------------------------------------------------------------- cube coefficients

def cube_grid(n, d):
    """Midpoint grid with n points per axis on [-pi, pi)^d, and the cell volume."""
    h = 2 * np.pi / n
    x = -np.pi + h * (np.arange(n) + 0.5)
    g = np.stack(np.meshgrid(*([x] * d), indexing="ij"), -1).reshape(-1, d)
    return g, h**d


def frequency_set(M, d):
    """Integer vectors nu with |nu| <= M (Euclidean)."""
    rng = np.arange(-M, M + 1)
    nu = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), -1).reshape(-1, d)
    return nu[np.sum(nu**2, axis=1) <= M**2]


def _dft_coeffs(values, n, d):
    """All discrete coefficients (2 pi)^(-d/2) h^d sum_x e^{-i nu x} T(x), nu in [-n/2, n/2)^d.

    ``values`` has shape (T, n**d).  Returns (coeffs of shape (T, n, ..., n), frequency axis).
    """
    h = 2 * np.pi / n
    x0 = -np.pi + 0.5 * h
    T = values.reshape((values.shape[0],) + (n,) * d)
    F = np.fft.fftshift(np.fft.fftn(T, axes=tuple(range(1, d + 1))), axes=tuple(range(1, d + 1)))
    freqs = np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / n))
    phase = np.exp(-1j * freqs * x0)
    for ax in range(1, d + 1):
        shape = [1] * (d + 1)
        shape[ax] = n
        F = F * phase.reshape(shape)
    return F * h**d / (2 * np.pi) ** (d / 2), freqs


def cube_fourier_coeffs(kernel, t, M, n=None):
    """Coefficients T_nu(t) for |nu| <= M on the 2 pi cube.

    Returns (nu, coeffs) with coeffs of shape (len(t), len(nu)).  ``n`` is the
    quadrature resolution per axis and must give at least 4 points per
    shortest wavelength.
    """
    d = kernel.d
    n = n or max(8 * M, 64)
    if n < 4 * M:
        raise ValueError(f"resolution {n} below 4 points per wavelength for M = {M}")
    x, _ = cube_grid(n, d)
    vals = kernel(t, x)
    F, freqs = _dft_coeffs(vals, n, d)
    nu = frequency_set(M, d)
    idx = tuple((nu + n // 2).T)
    return nu, F[(slice(None),) + idx]


# ---------------------------------------------------------------- transforms

def _panel_rule(a, b, panels, order=20):
    xg, wg = leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    return (mid + half * xg).ravel(), (half * wg).ravel()


def radial_fourier_transform(f, k, r_max, panels=2000):
    """(2 pi)^(-3/2) int_{R^3} e^{-i k.x} f(|x|) dx for a radial f."""
    r, w = _panel_rule(0.0, r_max, panels)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    fr = f(r) * r * w
    return (2 * np.pi) ** (-1.5) * 4 * np.pi / k * (np.sin(np.outer(k, r)) @ fr)


def fourier_transform_1d(f, xi, x_max, panels=2000):
    """(2 pi)^(-1/2) int e^{-i xi x} f(x) dx, split at 0 where cusps sit."""
    xl, wl = _panel_rule(-x_max, 0.0, panels // 2)
    xr, wr = _panel_rule(0.0, x_max, panels // 2)
    x = np.concatenate([xl, xr])
    w = np.concatenate([wl, wr])
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return (2 * np.pi) ** (-0.5) * (np.exp(-1j * np.outer(xi, x)) @ (f(x) * w))


def shell_envelope(transform, xi_min=2.0, xi_max=200.0, shells=40, per_shell=8):
    """Max of |transform| within each of ``shells`` log-spaced |xi| shells."""
    edges = np.logspace(np.log10(xi_min), np.log10(xi_max), shells + 1)
    centres = np.sqrt(edges[1:] * edges[:-1])
    env = np.empty(shells)
    for i in range(shells):
        pts = np.linspace(edges[i], edges[i + 1], per_shell)
        env[i] = np.max(np.abs(transform(pts)))
    return centres, env


def fourier_decay_fit(transform, xi_min=2.0, xi_max=200.0, shells=40, min_decades=2.0):
    """Exponent s in |u^(xi)| ~ <xi>^(-s) from the shell envelope.

    ``transform`` maps |xi| samples to transform values.
    """
    centres, env = shell_envelope(transform, xi_min, xi_max, shells)
    good = env > 0
    if np.log10(env[good].max() / env[good].min()) < min_decades:
        raise ValueError("envelope spans less than the required dynamic range")
    jap = np.sqrt(1 + centres[good] ** 2)
    slope = np.polyfit(np.log(jap), np.log(env[good]), 1)[0]
    return float(-slope), centres, env


# ---------------------------------------------------------------- operators

def kernel_matrix(kernel, t, t_weights, x, x_weight):
    """sqrt(w_t) T(t, x) sqrt(h) so singular values approximate those of iop(T)."""
    T = kernel(t, x)
    return np.sqrt(t_weights)[:, None] * T * np.sqrt(x_weight)


@dataclass
class TruncationResult:
    M: int
    m: int
    tail: float
    bound: float
    actual: float

    @property
    def holds(self):
        return self.bound >= self.actual * (1 - 1e-12)

    @property
    def ratio(self):
        return self.bound / self.actual if self.actual > 0 else np.inf


def truncation_rank_bound(kernel, t, t_weights, M, n=None):
    """Compare s_{2m} with m^(-1/2) ||T - T_M||_2 for the Fourier truncation T_M.

    T_M keeps the modes |nu| <= M on the 2 pi cube, so it has rank at most m.
    """
    d = kernel.d
    n = n or max(8 * M, 256)
    if n < 4 * M:
        raise ValueError(f"resolution {n} below 4 points per wavelength for M = {M}")
    x, hx = cube_grid(n, d)
    A = kernel_matrix(kernel, t, t_weights, x, hx)
    F, freqs = _dft_coeffs(kernel(t, x), n, d)
    grids = np.meshgrid(*([freqs] * d), indexing="ij")
    keep = sum(g**2 for g in grids) <= M**2
    m = int(keep.sum())
    tail = float(np.sqrt(np.sum(np.asarray(t_weights)[:, None] *
                                np.abs(F.reshape(F.shape[0], -1)[:, ~keep.ravel()]) ** 2)))
    s = singular_values(A)
    actual = float(s[2 * m - 1]) if 2 * m <= s.size else 0.0
    return TruncationResult(M, m, tail, m ** -0.5 * tail, actual)


@dataclass
class ExponentLawResult:
    d: int
    alpha: float
    predicted: float
    measured: float
    window: tuple
    values: np.ndarray

    @property
    def relative_error(self):
        return abs(self.measured - self.predicted) / self.predicted


def exponent_law_experiment(d, alpha, resolution=None, window=None, seed=42):
    """Fit the singular-value decay of a dense synthetic kernel.

    d = 1: t and x share a midpoint grid of ``resolution`` points on the 2 pi
    cube, one randomised wobbling trajectory.  d = 3: ``resolution`` points
    per axis on [-4, 4]^3, z(t) = t and Gaussian weights in t and x.
    """
    if d not in (1, 3):
        raise ValueError("d must be 1 or 3")
    if not -d / 2 < alpha <= 3:
        raise ValueError("alpha must lie in (-d/2, 3]")
    rng = np.random.default_rng(seed)
    if d == 1:
        n = resolution or 2048
        window = window or (10, 200)
        x, h = cube_grid(n, 1)
        kern = synth_kernel(1, alpha, trajectories=wobble_trajectory(rng.uniform(0, 2 * np.pi)))
        A = kernel_matrix(kern, x, np.full(n, h), x, h)
    else:
        n = resolution or 14
        window = window or (10, 100)
        L = 4.0
        h = 2 * L / n
        c = -L + h * (np.arange(n) + 0.5)
        x = np.stack(np.meshgrid(c, c, c, indexing="ij"), -1).reshape(-1, 3)
        gauss = lambda p: np.exp(-0.5 * np.sum(p**2, axis=-1))
        kern = synth_kernel(3, alpha, amplitude=gauss, window=gauss)
        A = kernel_matrix(kern, x, np.full(len(x), h**3), x, h**3)
    if window[1] > min(A.shape) // 2:
        raise ValueError(f"resolution {n} too low for fit window {window}")
    s = singular_values(A)
    fit = fit_decay(s, window)
    return ExponentLawResult(d, alpha, 1 + alpha / d, fit.exponent, tuple(window), s)


@dataclass
class CubeDecomposition:
    lhs: float
    rhs: float
    pivg_rhs: float
    pieces: list
    q: float

    @property
    def holds(self):
        return self.lhs <= self.rhs * (1 + 1e-12)


def cube_decomposition_norm(kernel, a, q, t, t_weights, x, x_weight):
    """Split iop(T) a by unit cubes C_n in x and aggregate the pieces.

    Pieces W_n = T a 1_{C_n} have disjoint column supports.  Returns the
    directly computed ||iop(T) a||_{q,inf}, the aggregated bound
    [2/(2-q) sum ||W_n||^q]^(1/q) and the sum [sum ||A_n||_{L2}^q ||a||_{L inf(C_n)}^q]^(1/q).
    """
    if not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    x = np.asarray(x, dtype=float).reshape(-1, kernel.d)
    A = kernel_matrix(kernel, t, t_weights, x, x_weight)
    av = np.asarray(a(x), dtype=float) * np.ones(len(x))
    full = A * av[None, :]
    labels = np.floor(x + 0.5).astype(int)
    keys = sorted({tuple(k) for k in labels})
    pieces, pivg = [], 0.0
    for key in keys:
        mask = np.all(labels == np.array(key), axis=1)
        W = np.where(mask[None, :], full, 0.0)
        pieces.append((key, weak_quasinorm(singular_values(W), q)))
        amp = np.sqrt(np.sum(np.asarray(t_weights) * np.max(np.abs(kernel(t, x[mask])), axis=1) ** 2))
        pivg += amp**q * np.max(np.abs(av[mask])) ** q
    lhs = weak_quasinorm(singular_values(full), q)
    rhs = (2.0 / (2.0 - q) * sum(v**q for _, v in pieces)) ** (1.0 / q)
    return CubeDecomposition(lhs, rhs, pivg ** (1.0 / q), pieces, q)
