"""
Density matrices gamma, tau, the density rho and the lattice quantities built
on them, computed by quadrature over the other-particle coordinates.
"""
from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as gamma_fn
from scipy.stats import qmc

from .wavefunctions import eval_grad_psi, eval_psi


class QuadratureError(RuntimeError):
    pass


def _points(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 3), x.shape[:-1]


def _check(values, what):
    if not np.all(np.isfinite(values)):
        raise QuadratureError(f"non-finite integrand while computing {what}")
    return values


def psi_columns(wf, scheme, points):
    """Matrix psi(xhat_m, x_p) of shape (M, P)."""
    pts, _ = _points(points)
    xhat = scheme.particle_nodes()
    cols = [eval_psi(wf, xhat, p) for p in pts]
    return _check(np.stack(cols, axis=1), "psi")


def grad_columns(wf, scheme, points):
    """Gradients in x, shape (M, P, 3)."""
    pts, _ = _points(points)
    xhat = scheme.particle_nodes()
    cols = [eval_grad_psi(wf, xhat, p) for p in pts]
    return _check(np.stack(cols, axis=1), "grad psi")


def gamma_kernel(wf, scheme, x, y):
    """gamma(x, y) = int conj(psi(xhat, x)) psi(xhat, y) dxhat."""
    px, shape = _points(x)
    py, _ = _points(y)
    a = psi_columns(wf, scheme, px)
    b = psi_columns(wf, scheme, py)
    # form the product first so swapping x and y gives bitwise-equal results
    val = scheme.weights @ (np.conj(a) * b)
    return _check(val, "gamma").reshape(shape)


def tau_kernel(wf, scheme, x, y):
    """tau(x, y) = int conj(grad_x psi(xhat, x)) . grad_y psi(xhat, y) dxhat."""
    px, shape = _points(x)
    py, _ = _points(y)
    a = grad_columns(wf, scheme, px)
    b = grad_columns(wf, scheme, py)
    val = scheme.weights @ np.sum(np.conj(a) * b, axis=-1)
    return _check(val, "tau").reshape(shape)


def rho(wf, scheme, x):
    """One-particle density rho(x) = gamma(x, x)."""
    return gamma_kernel(wf, scheme, x, x)


def weighted_rho(wf, f, scheme, x):
    """rho[f](x) = int |f(xhat)|^2 |psi(xhat, x)|^2 dxhat.

    ``f`` maps node arrays of shape (M, N-1, 3) to (M,) values.
    """
    px, shape = _points(x)
    a = psi_columns(wf, scheme, px)
    fv = np.abs(np.asarray(f(scheme.particle_nodes()), dtype=float)) ** 2
    fv = np.broadcast_to(fv, (scheme.size,))
    val = np.einsum("m,m,mp->p", scheme.weights, fv, np.abs(a) ** 2)
    return _check(val, "rho[f]").reshape(shape)


def norm_squared(wf, scheme, x_scheme):
    """||psi||^2 with x integrated by ``x_scheme`` (a 3-d rule)."""
    return float(x_scheme.integrate(rho(wf, scheme, x_scheme.nodes)))


# ---------------------------------------------------------------- mean value

def ball_volume(dim, R):
    return np.pi ** (dim / 2) / gamma_fn(dim / 2 + 1) * R**dim


def _ball_rule_3d(n_r=16, n_mu=16, n_phi=32):
    r, wr = leggauss(n_r)
    r, wr = 0.5 * (r + 1), 0.5 * wr
    mu, wmu = leggauss(n_mu)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    R, M, P = np.meshgrid(r, mu, phi, indexing="ij")
    s = np.sqrt(1 - M**2)
    pts = np.stack([R * s * np.cos(P), R * s * np.sin(P), R * M], axis=-1).reshape(-1, 3)
    w = np.multiply.outer(np.multiply.outer(wr * r**2, wmu), np.full(n_phi, 2 * np.pi / n_phi))
    return pts, w.ravel()


def _ball_rule_sobol(dim, n=2**14, seed=0):
    u = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(int(np.log2(n)))
    pts = 2 * u - 1
    pts = pts[np.sum(pts**2, axis=1) <= 1]
    w = np.full(len(pts), ball_volume(dim, 1.0) / len(pts))
    return pts, w


def mean_value(f, R, xhat, seed=0):
    """Root mean square of f over the ball B(xhat, R).

    ``f`` takes points of shape (K, D) and returns (K,) values.  A product
    Gauss rule is used for D = 3 and a scrambled Sobol rule otherwise.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    center = np.asarray(xhat, dtype=float).ravel()
    dim = center.size
    if dim == 3:
        pts, w = _ball_rule_3d()
    else:
        pts, w = _ball_rule_sobol(dim, seed=seed)
    vals = np.abs(np.asarray(f(center + R * pts), dtype=float)) ** 2
    avg = np.dot(w, vals) / np.sum(w)
    return float(np.sqrt(avg))


# ---------------------------------------------------------------- lattice

def cube_index_range(r, lo, hi, family="integer"):
    """Integer cube indices along one axis whose cube meets [lo, hi)."""
    step = 1.0 if family == "integer" else r
    first = int(np.floor((lo - r / 2) / step)) + 1
    last = int(np.ceil((hi + r / 2) / step)) - 1
    return np.arange(first, last + 1)


def _overlap_matrix(edges, centers, r):
    """Fraction of each grid cell lying inside each interval [c - r/2, c + r/2)."""
    a = np.maximum(edges[None, :-1], centers[:, None] - r / 2)
    b = np.minimum(edges[None, 1:], centers[:, None] + r / 2)
    return np.clip(b - a, 0, None) / np.diff(edges)[None, :]


def cube_masses(values, spacing, origin, r=1.0, family="integer", index_radius=None):
    """L1 norms of cell-centred samples over the cubes C_n^(r).

    ``values`` is a d-dimensional array of samples at cell centres
    origin + (i + 1/2) * spacing.  The cell masses are split across cube
    boundaries in proportion to overlap, which is exact for piecewise
    constant data.  ``family='integer'`` uses cubes C^(r) + n with n integer,
    ``family='tiling'`` uses C^(r) + r n.

    Returns (masses, indices) where indices holds the per-axis integer labels.
    """
    values = np.asarray(values, dtype=float)
    d = values.ndim
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (d,))
    origin = np.broadcast_to(np.asarray(origin, dtype=float), (d,))
    if family not in ("integer", "tiling"):
        raise ValueError(f"unknown cube family {family!r}")
    step = 1.0 if family == "integer" else r
    masses = values * np.prod(spacing)
    indices = []
    for ax in range(d):
        edges = origin[ax] + spacing[ax] * np.arange(values.shape[ax] + 1)
        idx = cube_index_range(r, edges[0], edges[-1], family)
        if index_radius is not None:
            idx = idx[np.abs(idx) <= index_radius]
        D = _overlap_matrix(edges, idx * step, r)
        masses = np.moveaxis(np.tensordot(D, masses, axes=(1, ax)), 0, ax)
        indices.append(idx)
    return masses, indices


def lattice_norm(values, q, r=1.0, spacing=1.0, origin=0.0, family="integer",
                 index_radius=12, return_tail=False):
    """Lattice quasi-norm [sum_n ||f||_{L1(C_n^(r))}^q]^(1/q) from grid samples.

    Mass on cubes outside ``index_radius`` is dropped; if any is present a
    warning carries the dropped mass as a tail estimate.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    values = np.abs(np.asarray(values, dtype=float))
    m, _ = cube_masses(values, spacing, origin, r, family, index_radius)
    full, _ = cube_masses(values, spacing, origin, r, family, None)
    tail = max(float(np.sum(full) - np.sum(m)), 0.0)
    if tail > 0 and tail > 1e-14 * float(np.sum(full)):
        warnings.warn(f"cube sum truncated at |n| <= {index_radius}; dropped mass {tail:.3e}",
                      RuntimeWarning, stacklevel=2)
    val = float(np.sum(m**q) ** (1.0 / q))
    return (val, tail) if return_tail else val


def cube_sup(values, spacing, origin, index_radius=12):
    """sup |a| over unit cubes C_n = [-1/2, 1/2)^d + n from cell-centred samples."""
    values = np.abs(np.asarray(values, dtype=float))
    d = values.ndim
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (d,))
    origin = np.broadcast_to(np.asarray(origin, dtype=float), (d,))
    labels = []
    for ax in range(d):
        c = origin[ax] + spacing[ax] * (np.arange(values.shape[ax]) + 0.5)
        labels.append(np.floor(c + 0.5).astype(int))
    grids = np.meshgrid(*labels, indexing="ij")
    out = {}
    for key, v in zip(zip(*[g.ravel() for g in grids]), values.ravel()):
        if index_radius is not None and max(abs(k) for k in key) > index_radius:
            continue
        out[key] = max(out.get(key, 0.0), v)
    return out


def grid_centres(half_width, spacing):
    n = int(round(2 * half_width / spacing))
    c = -half_width + spacing * (np.arange(n) + 0.5)
    return c, np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1)


def coefficient_Mq(a, f, q, wf, scheme, half_width=6.0, spacing=0.5, index_radius=12):
    """M_q(a, f) with 4 pi cubes for rho[f] and unit cubes for a.

    ``a`` maps points (..., 3) to values; ``f`` is as in weighted_rho.  Both
    are sampled on the same cell-centred grid over [-half_width, half_width]^3.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    c, pts = grid_centres(half_width, spacing)
    origin = -half_width
    rf = weighted_rho(wf, f, scheme, pts.reshape(-1, 3)).reshape(pts.shape[:-1])
    big, idx = cube_masses(rf, spacing, origin, 4 * np.pi, "integer", index_radius)
    sup = cube_sup(np.asarray(a(pts), dtype=float) * np.ones(pts.shape[:-1]), spacing, origin,
                   index_radius)
    total = 0.0
    for key, s in sup.items():
        if s == 0:
            continue
        pos = tuple(int(np.searchsorted(idx[ax], key[ax])) for ax in range(3))
        total += big[pos] ** (q / 2) * s**q
    return float(total ** (1.0 / q))


# ---------------------------------------------------------------- export

def kernel_slice(wf, scheme, points, kind="rho", reference=None):
    """Values of rho (or gamma/tau diagonal) at points with error estimates.

    The error estimate is the difference to the same quantity computed with
    ``reference`` (a second scheme); NaN when no reference is given.
    """
    func = {"rho": rho,
            "gamma": lambda w, s, x: gamma_kernel(w, s, x, x),
            "tau": lambda w, s, x: tau_kernel(w, s, x, x)}[kind]
    vals = func(wf, scheme, points)
    if reference is None:
        err = np.full_like(vals, np.nan)
    else:
        err = np.abs(vals - func(wf, reference, points))
    return vals, err


def export_csv(path, points, values, errors):
    """Write coordinates, value and error estimate as CSV with 17 significant digits."""
    path = Path(path)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "value", "error_estimate"])
        for p, v, e in zip(pts, np.ravel(values), np.ravel(errors)):
            w.writerow([f"{c:.17g}" for c in (*p, v, e)])
    return path
