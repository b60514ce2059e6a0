"""
Partial-wave discretisation of gamma and tau for rotation invariant N = 2 models.

For psi(x1, x) = A(|x1|, |x|) phi(|x - x1|) the kernel of Psi splits into
angular-momentum channels.  Channel l contributes the radial kernel

    K_l(r1, r) = A(r1, r) J_l(r1, r),   J_l = 2 pi int_{-1}^{1} phi(s) P_l(t) dt,

and its singular values, each with multiplicity 2l + 1.  The gradient map
couples channel l to l -+ 1 through the standard radial operators.  This
keeps the full 3-d cusp structure while the matrices stay small, so the
spectrum can be followed far enough to see its asymptotic slope.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .quadrature import radial_panels
from .wavefunctions import theta_radial, theta_radial_prime


def _f0(r, wf):
    if not wf.nuclear_jastrow:
        return np.zeros_like(r), np.zeros_like(r)
    val = -0.5 * wf.Z * r * theta_radial(r)
    der = -0.5 * wf.Z * (theta_radial(r) + r * theta_radial_prime(r))
    return val, der


def _env(r, beta, kind):
    """Radial envelope and its log-derivative."""
    if kind == "gaussian":
        return np.exp(-beta * r**2), -2.0 * beta * r
    return np.exp(-beta * r), -beta * np.ones_like(r)


def _pair_factor(wf):
    if not wf.pair_jastrow:
        return (lambda s: np.ones_like(s)), (lambda s: np.zeros_like(s))

    def phi(s):
        return np.exp(0.25 * s * theta_radial(s))

    def dphi(s):
        return phi(s) * 0.25 * (theta_radial(s) + s * theta_radial_prime(s))

    return phi, dphi


def amplitude(wf, r1, r):
    """A(r1, r) and its derivative in r (the distinguished radius)."""
    if wf.n_particles != 2:
        raise ValueError("the partial-wave route needs N = 2")
    f1, _ = _f0(r1, wf)
    f, df = _f0(r, wf)
    jas = np.exp(f1 + f)
    if wf.symmetry == "generic":
        e1, _ = _env(r1, wf.betas[0], wf.envelope)
        e, de = _env(r, wf.betas[1], wf.envelope)
        A = jas * e1 * e
        return A, A * (df + de)
    g1, _ = _env(r1, wf.beta_g, wf.envelope)
    h1, _ = _env(r1, wf.beta_h, wf.envelope)
    g, dg = _env(r, wf.beta_g, wf.envelope)
    h, dh = _env(r, wf.beta_h, wf.envelope)
    det = g1 * h - h1 * g
    ddet = g1 * h * dh - h1 * g * dg
    return jas * det, jas * (df * det + ddet)


def default_rmax(wf):
    beta = wf.min_beta
    if wf.envelope == "gaussian":
        return float(np.sqrt(25.0 / beta) + 1.0)
    return float(25.0 / beta + 1.0)


def angular_integrals(r, lmax, phi, dphi, extra=40, chunk=4_000_000):
    """J_l(r_i, r_j) and d/dr_j J_l for l = 0..lmax on the product grid.

    Integrates in s = |x - x1| on [|r - r1|, r + r1], split at the cutoff
    radii 1 and 2 so each piece is smooth.
    """
    nr = r.size
    xs, ws = leggauss(lmax + extra)
    J = np.zeros((lmax + 1, nr, nr))
    dJ = np.zeros_like(J)
    R1, R = np.meshgrid(r, r, indexing="ij")
    rows = max(1, int(chunk // (nr * xs.size)))
    for i0 in range(0, nr, rows):
        sl = slice(i0, min(nr, i0 + rows))
        r1 = R1[sl][..., None]
        rr = R[sl][..., None]
        lo = np.abs(r1 - rr)
        hi = r1 + rr
        a = lo
        for cut in (1.0, 2.0, None):
            b = hi if cut is None else np.clip(np.full_like(hi, cut), lo, hi)
            b = np.maximum(b, a)
            S = 0.5 * (a + b) + 0.5 * (b - a) * xs
            W = 0.5 * (b - a) * ws
            den = r1 * rr
            t = (r1**2 + rr**2 - S**2) / (2 * den)
            base = phi(S) * S / den * W
            dbase = dphi(S) * (rr - r1 * t) / den * W
            p0, p1 = np.ones_like(t), t
            J[0, sl] += base.sum(-1)
            dJ[0, sl] += dbase.sum(-1)
            if lmax >= 1:
                J[1, sl] += (base * p1).sum(-1)
                dJ[1, sl] += (dbase * p1).sum(-1)
            for l in range(1, lmax):
                p2 = ((2 * l + 1) * t * p1 - l * p0) / (l + 1)
                J[l + 1, sl] += (base * p2).sum(-1)
                dJ[l + 1, sl] += (dbase * p2).sum(-1)
                p0, p1 = p1, p2
            a = b
    return 2 * np.pi * J, 2 * np.pi * dJ


@dataclass
class RadialSpectra:
    gamma: np.ndarray  # eigenvalues of gamma, descending, with multiplicity
    tau: np.ndarray
    r: np.ndarray
    w: np.ndarray
    lmax: int

    def trace(self, which="gamma"):
        return float(np.sum(getattr(self, which)))


def radial_spectra(wf, nr=200, lmax=60, r_max=None, want_tau=True):
    """Occupation numbers of gamma and eigenvalues of tau for an N = 2 model."""
    r_max = r_max or default_rmax(wf)
    r, w = radial_panels(nr, r_max)
    phi, dphi = _pair_factor(wf)
    lj = lmax + 1 if want_tau else lmax
    J, dJ = angular_integrals(r, lj, phi, dphi)
    R1, R = np.meshgrid(r, r, indexing="ij")
    A, dA = amplitude(wf, R1, R)
    sq = np.sqrt(w) * r
    gam, tau = [], []
    for l in range(lmax + 1):
        K = A * J[l]
        s = np.linalg.svd(sq[:, None] * K * sq[None, :], compute_uv=False)
        gam.append(np.repeat(s**2, 2 * l + 1))
        if not want_tau:
            continue
        # gradient map: channel l receives l+1 and l-1 pieces
        up = A * J[l + 1]
        d_up = dA * J[l + 1] + A * dJ[l + 1]
        blocks = [np.sqrt((l + 1) / (2 * l + 1)) * (d_up + (l + 2) * up / R)]
        if l > 0:
            dn = A * J[l - 1]
            d_dn = dA * J[l - 1] + A * dJ[l - 1]
            blocks.append(np.sqrt(l / (2 * l + 1)) * (d_dn - (l - 1) * dn / R))
        V = np.vstack([sq[:, None] * E * sq[None, :] for E in blocks])
        s = np.linalg.svd(V, compute_uv=False)
        tau.append(np.repeat(s**2, 2 * l + 1))
    g = np.sort(np.concatenate(gam))[::-1]
    t = np.sort(np.concatenate(tau))[::-1] if want_tau else np.array([])
    return RadialSpectra(g, t, r, w, lmax)


def radial_density(wf, r, nr=200, r_max=None):
    """rho(|x|) for an N = 2 model, by integrating |psi|^2 over x1."""
    r_max = r_max or default_rmax(wf)
    r1, w1 = radial_panels(nr, r_max)
    phi, _ = _pair_factor(wf)
    # the s-substitution is singular at r = 0; rho is continuous there
    r = np.maximum(np.atleast_1d(np.asarray(r, dtype=float)), 1e-9)
    J, _ = angular_integrals(np.concatenate([r1, r]), 0, lambda s: phi(s) ** 2,
                             lambda s: np.zeros_like(s))
    J0 = J[0][:nr, nr:]  # rows r1, cols r
    R1, R = np.meshgrid(r1, r, indexing="ij")
    A, _ = amplitude(wf, R1, R)
    return np.einsum("i,ij->j", w1 * r1**2, A**2 * J0)
