"""Quadrature rules over the "other particle" coordinates xhat in R^(3N-3)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtri
from scipy.stats import qmc

# irrational fraction of a node spacing used to move nodes off common probe points
OFFSET_FRACTION = 0.5 * (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class QuadratureScheme:
    """Nodes and positive weights for integrals over R^dim.

    ``nodes`` has shape (M, dim).  ``n`` is the per-axis count (tensor mode)
    or the sample count (low-discrepancy mode).
    """

    mode: str
    n: int
    half_width: float
    nodes: np.ndarray
    weights: np.ndarray
    offset: bool = True

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def size(self):
        return self.nodes.shape[0]

    def particle_nodes(self):
        """Nodes reshaped to (M, dim/3, 3)."""
        return self.nodes.reshape(self.size, -1, 3)

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


def gauss_legendre(n, a, b):
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def default_half_width(min_beta, envelope="gaussian"):
    """Half-width where |psi|^2 (exp(-2 beta r^2) or exp(-2 beta r)) drops below e^-36."""
    if envelope == "slater":
        return 18.0 / min_beta
    return np.sqrt(18.0 / min_beta)


def graded_nodes(n, half_width, grading=0.0, shift=0.0):
    """Gauss-Legendre nodes on [-L, L], optionally pulled towards 0 by x = L sinh(a u)/sinh(a).

    ``shift`` moves the reference nodes u by that fraction of their smallest
    spacing before mapping.
    """
    u, w = leggauss(n)
    u = u + shift * np.min(np.diff(u))
    if grading == 0:
        return half_width * u, half_width * w
    a = float(grading)
    return (half_width * np.sinh(a * u) / np.sinh(a),
            half_width * a * np.cosh(a * u) / np.sinh(a) * w)


def tensor_gauss(dim, n=32, half_width=6.0, offset=True, grading=0.0):
    """Tensor Gauss-Legendre rule on [-L, L]^dim.

    ``grading > 0`` clusters nodes near the origin, which resolves the
    nuclear cusp far better than uniform Gauss nodes.
    """
    if grading == 0:
        x, w = gauss_legendre(n, -half_width, half_width)
        if offset:
            # small shift keeps nodes away from 0 and other round probe points
            x = x + OFFSET_FRACTION * np.min(np.diff(x))
    else:
        x, w = graded_nodes(n, half_width, grading, OFFSET_FRACTION if offset else 0.0)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(1)
    for _ in range(dim):
        weights = np.multiply.outer(weights, w).ravel()
    return QuadratureScheme("tensor-gauss", n, half_width, nodes, weights, offset)


def low_discrepancy(dim, n=2**16, scale=1.0, seed=0):
    """Scrambled Sobol points pushed through a Gaussian map.

    Samples x = scale * Phi^{-1}(u) with weights 1/(n * pdf(x)), so integrals
    of functions with Gaussian tails are computed without a truncation box.
    """
    m = int(np.ceil(np.log2(n)))
    u = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)
    u = np.clip(u, 1e-15, 1 - 1e-15)
    z = ndtri(u)
    nodes = scale * z
    log_pdf = -0.5 * np.sum(z**2, axis=1) - dim * np.log(scale * np.sqrt(2 * np.pi))
    weights = np.exp(-log_pdf) / u.shape[0]
    return QuadratureScheme("low-discrepancy", u.shape[0], np.inf, nodes, weights, True)


def scheme_for(wf, n=None, half_width=None, samples=2**16, seed=0, grading=0.0):
    """Default scheme for a wavefunction: tensor rule for N=2, Sobol for N=3."""
    if wf.n_particles == 2:
        L = half_width if half_width is not None else default_half_width(wf.min_beta, wf.envelope)
        return tensor_gauss(3, n or 32, L, grading=grading)
    if wf.n_particles == 3:
        if wf.envelope == "gaussian":
            scale = 1.0 / np.sqrt(2.0 * wf.min_beta)
        else:
            scale = 1.0 / wf.min_beta
        return low_discrepancy(6, samples, scale=scale, seed=seed)
    raise ValueError("only N = 2 or N = 3 are supported")


def radial_panels(n, r_max, order=10):
    """Composite Gauss-Legendre rule on [0, r_max] with n nodes."""
    if n % order:
        raise ValueError(f"node count must be a multiple of {order}")
    edges = np.linspace(0.0, r_max, n // order + 1)
    xg, wg = leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    return (mid + half * xg).ravel(), (half * wg).ravel()


# ---------------------------------------------------------------- cusp-aware

def _becke_step(mu, iterations=3):
    for _ in range(iterations):
        mu = 1.5 * mu - 0.5 * mu**3
    return 0.5 * (1.0 - mu)


def becke_weights(points, centers):
    """Smooth partition of unity chi_c(points); chi_c is flat near the other centres."""
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    dist = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=-1)
    P = np.ones_like(dist)
    for a in range(len(centers)):
        for b in range(len(centers)):
            if a == b:
                continue
            sep = np.linalg.norm(centers[a] - centers[b])
            P[:, a] *= _becke_step((dist[:, a] - dist[:, b]) / sep)
    return P / np.sum(P, axis=1, keepdims=True)


def spherical_rule(n_r, n_mu, n_phi, r_max):
    """Product rule on the ball of radius r_max: Gauss in r and cos(theta), uniform in phi."""
    r, wr = gauss_legendre(n_r, 0.0, r_max)
    mu, wmu = leggauss(n_mu)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    R, M, P = np.meshgrid(r, mu, phi, indexing="ij")
    s = np.sqrt(1 - M**2)
    pts = np.stack([R * s * np.cos(P), R * s * np.sin(P), R * M], axis=-1).reshape(-1, 3)
    w = np.multiply.outer(np.multiply.outer(wr * r**2, wmu), np.full(n_phi, 2 * np.pi / n_phi))
    return pts, w.ravel()


def multicenter(centers, n_r=48, n_mu=24, n_phi=48, r_max=6.0, min_separation=1e-8):
    """Cusp-aware rule on R^3: a spherical grid around each centre, blended by Becke weights.

    A point cusp |x - c| is smooth in polar coordinates about c, so each
    piece chi_c f is integrated to spectral accuracy.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    uniq = []
    for c in centers:
        if all(np.linalg.norm(c - u) > min_separation for u in uniq):
            uniq.append(c)
    centers = np.array(uniq)
    base, bw = spherical_rule(n_r, n_mu, n_phi, r_max)
    nodes, weights = [], []
    for i, c in enumerate(centers):
        pts = c + base
        chi = becke_weights(pts, centers)[:, i] if len(centers) > 1 else np.ones(len(pts))
        keep = chi > 0
        nodes.append(pts[keep])
        weights.append(bw[keep] * chi[keep])
    return QuadratureScheme("multicenter", n_r, r_max, np.concatenate(nodes),
                            np.concatenate(weights), False)


def cusp_scheme(wf, points, n_r=48, n_mu=24, n_phi=48):
    """Multicenter rule for an N = 2 model with centres at the nucleus and the probe points."""
    if wf.n_particles != 2:
        raise ValueError("cusp-aware rule is only available for N = 2")
    centers = np.vstack([np.zeros(3), np.asarray(points, dtype=float).reshape(-1, 3)])
    # every centre's ball must hold the envelope; pad by the largest probe radius
    pad = float(np.max(np.linalg.norm(centers, axis=1)))
    return multicenter(centers, n_r, n_mu, n_phi, default_half_width(wf.min_beta, wf.envelope) + pad)
