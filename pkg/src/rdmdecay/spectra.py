"""
Discretised operators, singular values, power-law fits and the Schatten
quasi-norm inequalities used to bound them.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import svds

from .density import grad_columns, psi_columns
from .quadrature import graded_nodes

PSD_EPS = 1e-10
# singular values below this many ulps of s_1 (times the size) count as exact zeros
ROUNDOFF_FLOOR = 100


class DecompositionError(RuntimeError):
    pass


@dataclass
class DiscretizedOperator:
    """Nystrom matrix sqrt(w_i) K(x_i, y_j) sqrt(w_j) with its nodes."""

    matrix: np.ndarray
    row_nodes: np.ndarray
    row_weights: np.ndarray
    col_nodes: np.ndarray
    col_weights: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind in ("gamma", "tau"):
            A = self.matrix
            scale = max(np.max(np.abs(A)), 1e-300)
            if not np.allclose(A, A.conj().T, rtol=0, atol=1e-12 * scale):
                raise DecompositionError(f"{self.kind} matrix is not Hermitian")

    @property
    def shape(self):
        return self.matrix.shape

    def eigenvalues(self):
        """Descending eigenvalues (Hermitian kinds only)."""
        ev = np.linalg.eigvalsh(self.matrix)[::-1]
        return ev

    def is_psd(self, eps=PSD_EPS):
        ev = self.eigenvalues()
        return bool(ev[-1] >= -eps * max(abs(ev[0]), 1e-300))


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class GridConfig:
    """Tensor Gauss-Legendre grid for the distinguished coordinate.

    ``grading`` is the sinh-map strength pulling nodes towards the nucleus
    (0 gives plain Gauss-Legendre nodes).
    """

    n: int = 22
    half_width: float = 6.0
    max_nodes: int = 2000
    grading: float = 3.0

    def effective_n(self):
        """Per-axis count after compressing to at most ``max_nodes`` points."""
        n = self.n
        while n**3 > self.max_nodes:
            n -= 1
        return n


def operator_grid(config):
    n = config.effective_n()
    # shift differs from the xhat rule so grid nodes never coincide with xhat nodes
    x, w = graded_nodes(n, config.half_width, config.grading, 0.25 * (np.sqrt(2.0) - 1.0))
    g = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    ww = np.multiply.outer(np.multiply.outer(w, w), w).ravel()
    return g, ww


def _check_weights(row_w, col_w):
    for w in (row_w, col_w):
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("quadrature weights must be positive and finite")


# ---------------------------------------------------------------- assembly

def discretize_psi_map(wf, scheme, grid):
    """Rectangular matrix sqrt(W_m) psi(xhat_m, x_i) sqrt(w_i)."""
    if isinstance(grid, GridConfig):
        grid = operator_grid(grid)
    nodes, w = grid
    _check_weights(scheme.weights, w)
    P = psi_columns(wf, scheme, nodes)
    M = np.sqrt(scheme.weights)[:, None] * P * np.sqrt(w)[None, :]
    return DiscretizedOperator(M, scheme.nodes, scheme.weights, nodes, w, "psi-map")


def discretize_v_map(wf, scheme, grid):
    """Three stacked blocks, one per gradient component."""
    if isinstance(grid, GridConfig):
        grid = operator_grid(grid)
    nodes, w = grid
    _check_weights(scheme.weights, w)
    G = grad_columns(wf, scheme, nodes)
    sw = np.sqrt(scheme.weights)[:, None]
    blocks = [sw * G[:, :, c] * np.sqrt(w)[None, :] for c in range(3)]
    rows = np.concatenate([scheme.nodes] * 3)
    return DiscretizedOperator(np.vstack(blocks), rows, np.tile(scheme.weights, 3), nodes, w, "v-map")


def _tiled_gram(cols, quad_w, w, tile):
    """sum_m W_m conj(c_mi) c_mj, assembled tile by tile in i and j."""
    n = cols.shape[1]
    out = np.empty((n, n), dtype=np.result_type(cols, float))
    sw = np.sqrt(w)
    for i0 in range(0, n, tile):
        a = cols[:, i0:i0 + tile]
        for j0 in range(0, n, tile):
            b = cols[:, j0:j0 + tile]
            if cols.ndim == 3:
                blk = np.einsum("m,mic,mjc->ij", quad_w, np.conj(a), b)
            else:
                blk = np.einsum("m,mi,mj->ij", quad_w, np.conj(a), b)
            out[i0:i0 + tile, j0:j0 + tile] = sw[i0:i0 + tile, None] * blk * sw[None, j0:j0 + tile]
    return out


def discretize_gamma(wf, scheme, grid, tile=256):
    """Nystrom matrix of gamma on the operator grid, assembled in tiles."""
    if isinstance(grid, GridConfig):
        grid = operator_grid(grid)
    nodes, w = grid
    _check_weights(scheme.weights, w)
    P = psi_columns(wf, scheme, nodes)
    A = _tiled_gram(P, scheme.weights, w, tile)
    A = 0.5 * (A + A.conj().T)
    return DiscretizedOperator(A, nodes, w, nodes, w, "gamma")


def discretize_tau(wf, scheme, grid, tile=256):
    if isinstance(grid, GridConfig):
        grid = operator_grid(grid)
    nodes, w = grid
    _check_weights(scheme.weights, w)
    G = grad_columns(wf, scheme, nodes)
    A = _tiled_gram(G, scheme.weights, w, tile)
    A = 0.5 * (A + A.conj().T)
    return DiscretizedOperator(A, nodes, w, nodes, w, "tau")


# ---------------------------------------------------------------- values

def singular_values(matrix):
    """Descending singular values."""
    A = np.asarray(matrix)
    if not np.all(np.isfinite(A)):
        raise DecompositionError("matrix has non-finite entries")
    try:
        return np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"SVD did not converge: {exc}") from exc


def leading_singular_values(matrix, k=1):
    """Largest k singular values by a sparse Lanczos solver (descending)."""
    A = np.asarray(matrix)
    if not np.all(np.isfinite(A)):
        raise DecompositionError("matrix has non-finite entries")
    if k >= min(A.shape):
        return singular_values(A)[:k]
    s = svds(A, k=k, return_singular_vectors=False, random_state=0)
    return np.sort(s)[::-1]


def schatten(values, p):
    if p <= 0:
        raise ValueError("p must be positive")
    s = np.abs(np.asarray(values, dtype=float))
    if s.size == 0:
        return 0.0
    m = s.max()
    if m == 0:
        return 0.0
    return float(m * np.sum((s / m) ** p) ** (1.0 / p))


def weak_quasinorm(values, p):
    """sup_k s_k k^(1/p) over the values sorted in descending order."""
    if p <= 0:
        raise ValueError("p must be positive")
    s = np.sort(np.abs(np.asarray(values, dtype=float)))[::-1]
    if s.size == 0:
        return 0.0
    k = np.arange(1, s.size + 1)
    return float(np.max(s * k ** (1.0 / p)))


# ---------------------------------------------------------------- fitting

@dataclass
class DecayFit:
    amplitude: float
    exponent: float
    residual: float
    window: tuple

    @property
    def log_amplitude(self):
        return float(np.log(self.amplitude))


def fit_decay(values, window):
    """Least squares fit of log s_k = log C - s log k over k in [k_min, k_max]."""
    s = np.asarray(values, dtype=float)
    k_min, k_max = int(window[0]), int(window[1])
    if k_min < 1 or k_max > s.size:
        raise ValueError(f"window {window} outside 1..{s.size}")
    if k_max - k_min + 1 < 5:
        raise ValueError("fit window needs at least 5 points")
    seg = s[k_min - 1:k_max]
    if np.any(seg <= 0):
        raise ValueError("values in the fit window must be positive")
    k = np.arange(k_min, k_max + 1)
    X = np.log(k)
    Y = np.log(seg)
    coef, res, *_ = np.polyfit(X, Y, 1, full=True)
    resid = float(np.sqrt(res[0] / len(k))) if res.size else 0.0
    return DecayFit(float(np.exp(coef[1])), float(-coef[0]), resid, (k_min, k_max))


def local_slopes(values, k_min, k_max, per_decade=8):
    """Exponents fitted on overlapping log-spaced sub-windows."""
    edges = np.unique(np.round(np.logspace(np.log10(k_min), np.log10(k_max),
                                           max(3, int(per_decade * np.log10(k_max / k_min)) + 1))).astype(int))
    out = []
    for a, b in zip(edges[:-2], edges[2:]):
        if b - a + 1 >= 5:
            out.append(((a, b), fit_decay(values, (a, b)).exponent))
    return out


def auto_window(values, k_min=10, fraction=0.25, knee=0.2):
    """Default window [k_min, fraction*rank], cut before the first slope knee.

    A knee is a sub-window whose local exponent deviates from the median by
    more than ``knee`` (relative), which flags discretisation truncation.
    """
    s = np.asarray(values, dtype=float)
    rank = int(np.sum(s > s[0] * 1e-14)) if s.size else 0
    k_max = int(fraction * rank)
    if k_max - k_min + 1 < 5:
        raise ValueError("too few values for the default fit window")
    slopes = local_slopes(s, k_min, k_max)
    if len(slopes) < 3:
        return (k_min, k_max)
    med = np.median([e for _, e in slopes])
    for (a, b), e in slopes:
        if abs(e - med) > knee * abs(med) and a > k_min:
            k_max = a
            break
    return (k_min, max(k_max, k_min + 4))


@dataclass
class SpectrumResult:
    values: np.ndarray
    window: tuple
    log_amplitude: float
    exponent: float
    residual: float
    quasinorms: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(np.diff(v) > 0):
            raise ValueError("values must be non-increasing")
        if np.any(v <= 0):
            raise ValueError("values must be positive")
        if not np.isfinite(self.exponent):
            raise ValueError("exponent must be finite")
        self.values = v

    @classmethod
    def from_values(cls, values, window=None, ps=()):
        v = np.sort(np.asarray(values, dtype=float))[::-1]
        v = v[v > 0]
        window = tuple(window) if window is not None else auto_window(v)
        fit = fit_decay(v, window)
        qn = {float(p): weak_quasinorm(v, p) for p in ps}
        return cls(v, window, fit.log_amplitude, fit.exponent, fit.residual, qn)

    def summary(self):
        return {"exponent": self.exponent, "amplitude": float(np.exp(self.log_amplitude)),
                "residual": self.residual, "window": list(self.window),
                "quasinorms": {f"{p:g}": v for p, v in self.quasinorms.items()}}

    def to_csv(self, path):
        write_series_csv(path, ("k", "s_k"), np.arange(1, self.values.size + 1), self.values)

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def write_series_csv(path, header, *columns):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else str(v) for v in row])


# ---------------------------------------------------------------- calculus

@dataclass
class CheckReport:
    holds: bool
    lhs: float
    rhs: float

    @property
    def slack(self):
        return self.rhs - self.lhs


def _rel_le(lhs, rhs, rtol=1e-10):
    return lhs <= rhs * (1 + rtol) + 1e-300


def finite_rank_check(A, K, p, n=None):
    """Both tail bounds of a rank-n approximation K to A.

    Returns a dict with the reports for sum_{k>n} s_k^p <= ||A-K||_p^p and
    s_{2n} <= n^(-1/p) ||A-K||_p (skipped when n = 0).
    """
    if n is None:
        n = int(np.linalg.matrix_rank(K)) if np.any(K) else 0
    s = singular_values(A)
    r = singular_values(A - K)
    # roundoff-level values of A - K would otherwise dominate s^p for small p
    r = r[r > ROUNDOFF_FLOOR * max(np.shape(A)) * np.finfo(float).eps * max(s[0], 1e-300)]
    err = schatten(r, p)
    tail = float(np.sum(s[n:] ** p))
    first = CheckReport(_rel_le(tail, err**p), tail, err**p)
    out = {"tail": first, "holds": first.holds}
    if n >= 1 and 2 * n <= s.size:
        lhs = float(s[2 * n - 1])
        second = CheckReport(_rel_le(lhs, n ** (-1.0 / p) * err), lhs, n ** (-1.0 / p) * err)
        out["s2n"] = second
        out["holds"] = first.holds and second.holds
    return out


def quasinorm_triangle_check(operators, p, weighted=False):
    """Triangle inequalities for weak quasi-norms.

    Default: ||sum A_j||^(p/(p+1)) <= sum ||A_j||^(p/(p+1)).
    ``weighted=True`` (p < 1): ||sum A_j||^p <= (1-p)^(-1) sum ||A_j||^p.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    total = sum(operators)
    if weighted:
        if not 0 < p < 1:
            raise ValueError("weighted form needs 0 < p < 1")
        lhs = weak_quasinorm(singular_values(total), p) ** p
        rhs = sum(weak_quasinorm(singular_values(A), p) ** p for A in operators) / (1 - p)
    else:
        e = p / (p + 1)
        lhs = weak_quasinorm(singular_values(total), p) ** e
        rhs = sum(weak_quasinorm(singular_values(A), p) ** e for A in operators)
    return CheckReport(_rel_le(lhs, rhs), float(lhs), float(rhs))


def orthogonal_sum_check(blocks, p, atol=1e-12):
    """||sum A_j||_{p,inf}^p <= 2/(2-p) sum ||A_j||_{p,inf}^p.

    Each pair must satisfy A_k A_j^* = 0 (disjoint column supports) or
    A_k^* A_j = 0 (disjoint row supports).
    """
    if not 0 < p < 2:
        raise ValueError("p must lie in (0, 2)")
    for i, A in enumerate(blocks):
        for B in blocks[i + 1:]:
            tol = atol * max(np.abs(A).max(), np.abs(B).max(), 1.0) ** 2
            left = np.max(np.abs(A @ B.conj().T), initial=0.0)
            right = np.max(np.abs(A.conj().T @ B), initial=0.0)
            if min(left, right) > tol:
                raise ValueError("blocks are not orthogonal: neither A_k A_j^* nor A_k^* A_j vanishes")
    lhs = weak_quasinorm(singular_values(sum(blocks)), p) ** p
    rhs = 2.0 / (2.0 - p) * sum(weak_quasinorm(singular_values(A), p) ** p for A in blocks)
    return CheckReport(_rel_le(lhs, rhs), float(lhs), float(rhs))


def block_vector_check(components, p):
    """Stacked operator: ||A||^(2p/(p+2)) <= sum ||A_j||^(2p/(p+2)) in weak quasi-norms."""
    if p <= 0:
        raise ValueError("p must be positive")
    cols = {np.shape(A)[1] for A in components}
    if len(cols) != 1:
        raise ValueError("components must share the column space")
    e = 2 * p / (p + 2)
    lhs = weak_quasinorm(singular_values(np.vstack(components)), p) ** e
    rhs = sum(weak_quasinorm(singular_values(A), p) ** e for A in components)
    return CheckReport(_rel_le(lhs, rhs), float(lhs), float(rhs))


def factorization_gap(gram, factor):
    """max_k |lambda_k(G) - s_k(F)^2| / lambda_1(G)."""
    ev = np.linalg.eigvalsh(gram)[::-1]
    s2 = singular_values(factor) ** 2
    n = min(ev.size, s2.size)
    full = np.zeros(ev.size)
    full[:n] = s2[:n]
    return float(np.max(np.abs(ev - full)) / abs(ev[0]))
