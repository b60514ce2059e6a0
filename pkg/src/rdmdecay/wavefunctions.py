"""
Model few-particle wavefunctions psi = exp(F) * phi with Coulomb-type cusps.

Coordinates follow the convention x_all = (xhat, x): ``xhat`` has shape
(..., N-1, 3) and holds the "other" particles, ``x`` has shape (..., 3) and is
the distinguished particle.  Everything is vectorised over leading axes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

SQRT2 = np.sqrt(2.0)

# finite-difference steps per derivative order
FD_STEPS = {1: 1e-5, 2: 1e-4, 3: 5e-3}


class SingularPointError(ValueError):
    """Gradient requested on the coalescence set, where it does not exist."""


# ---------------------------------------------------------------- cutoff

def _smooth_exp(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _smooth_exp_prime(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def theta_radial(r):
    """C-infinity step in the radius: 1 for r <= 1, 0 for r >= 2."""
    a = _smooth_exp(2.0 - np.asarray(r, dtype=float))
    b = _smooth_exp(np.asarray(r, dtype=float) - 1.0)
    return a / (a + b)


def theta_radial_prime(r):
    r = np.asarray(r, dtype=float)
    a = _smooth_exp(2.0 - r)
    b = _smooth_exp(r - 1.0)
    da = -_smooth_exp_prime(2.0 - r)
    db = _smooth_exp_prime(r - 1.0)
    return (da * b - a * db) / (a + b) ** 2


def theta(x):
    """Radial cutoff theta(x) for points x of shape (..., 3)."""
    return theta_radial(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))


@dataclass(frozen=True)
class CutoffFunction:
    """The fixed cutoff profile used by all Jastrow terms."""

    inner_radius: float = 1.0
    outer_radius: float = 2.0
    profile: str = "exp-ratio smooth step"

    def __call__(self, x):
        return theta(x)


def _cut_norm(u):
    """|u| theta(u) and its gradient for u of shape (..., 3)."""
    r = np.linalg.norm(u, axis=-1)
    th = theta_radial(r)
    dth = theta_radial_prime(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[..., None] > 0, u / r[..., None], 0.0)
    grad = (th + r * dth)[..., None] * unit
    return r * th, grad


# ---------------------------------------------------------------- geometry

def coalescence_distance(xhat, x):
    """Distance to the coalescence set and its capped variants.

    Returns ``(d, lam, d1, lam1)`` where ``d = min(|x|, d1)``,
    ``d1 = min_k |x - x_k| / sqrt(2)`` and the ``lam`` values are capped at 1.
    """
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)
    d1 = np.min(np.linalg.norm(x[..., None, :] - xhat, axis=-1), axis=-1) / SQRT2
    d = np.minimum(np.linalg.norm(x, axis=-1), d1)
    return d, np.minimum(1.0, d), d1, np.minimum(1.0, d1)


def capped_distance_full(points, n_particles):
    """lam(x_all) for flattened configurations of shape (..., 3N)."""
    pts = np.asarray(points, dtype=float).reshape(*np.shape(points)[:-1], n_particles, 3)
    return coalescence_distance(pts[..., :-1, :], pts[..., -1, :])[1]


# ---------------------------------------------------------------- Jastrow

def jastrow_F0(x, Z):
    """Nuclear term of the distinguished particle, -(Z/2)|x| theta(x)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return -0.5 * Z * r * theta_radial(r)


def _nuclear_sum(xhat, Z):
    r = np.linalg.norm(xhat, axis=-1)
    return -0.5 * Z * np.sum(r * theta_radial(r), axis=-1)


def _pair_sum(xhat):
    n = xhat.shape[-2]
    total = np.zeros(xhat.shape[:-2])
    for j, k in itertools.combinations(range(n), 2):
        total = total + _cut_norm(xhat[..., j, :] - xhat[..., k, :])[0]
    return 0.25 * total


def _pair_with_x(xhat, x):
    return 0.25 * np.sum(_cut_norm(x[..., None, :] - xhat)[0], axis=-1)


def jastrow_F1(xhat, x, Z):
    """Everything in F except the nuclear term of x."""
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)
    return _pair_with_x(xhat, x) + _nuclear_sum(xhat, Z) + _pair_sum(xhat)


def jastrow_F(points, Z):
    """Regularised Jastrow exponent for configurations of shape (..., N, 3).

    Evaluated from the full particle list (no xhat/x split), so that the
    identity F = F0 + F1 is a genuine check.
    """
    pts = np.asarray(points, dtype=float)
    return _nuclear_sum(pts, Z) + _pair_sum(pts)


# ---------------------------------------------------------------- model

@dataclass(frozen=True)
class ModelWavefunction:
    """Parameterised psi = exp(F) * envelope.

    ``betas`` lists one exponent per particle for the generic symmetry.  For
    ``symmetry='pair-antisymmetric'`` particle 1 and the distinguished
    particle share the determinant g(x1)h(x) - h(x1)g(x) built from
    ``beta_g``/``beta_h``, and ``betas`` covers particles 2..N-1 only.
    """

    n_particles: int = 2
    Z: float = 2.0
    betas: tuple = (1.0, 1.0)
    envelope: str = "gaussian"
    nuclear_jastrow: bool = True
    pair_jastrow: bool = True
    symmetry: str = "generic"
    beta_g: float = 1.0
    beta_h: float = 0.5
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.n_particles < 2:
            raise ValueError("need at least two particles")
        if self.Z <= 0:
            raise ValueError("nuclear charge must be positive")
        if self.envelope not in ("gaussian", "slater"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.symmetry == "generic":
            expected = self.n_particles
        elif self.symmetry == "pair-antisymmetric":
            expected = self.n_particles - 2
            if self.beta_g <= 0 or self.beta_h <= 0:
                raise ValueError("determinant exponents must be positive")
            if self.beta_g == self.beta_h:
                raise ValueError("beta_g and beta_h must differ")
        else:
            raise ValueError(f"unknown symmetry {self.symmetry!r}")
        if len(self.betas) != expected:
            raise ValueError(f"expected {expected} envelope exponents, got {len(self.betas)}")
        if any(b <= 0 for b in self.betas):
            raise ValueError("envelope exponents must be positive")

    @property
    def dim_hat(self):
        return 3 * (self.n_particles - 1)

    @property
    def min_beta(self):
        vals = list(self.betas)
        if self.symmetry == "pair-antisymmetric":
            vals += [self.beta_g, self.beta_h]
        return min(vals)

    def is_radial(self):
        """True when psi is invariant under simultaneous rotations (always, here)."""
        return True

    @classmethod
    def from_mapping(cls, data):
        data = dict(data)
        if "N" in data:
            data["n_particles"] = data.pop("N")
        if "betas" in data:
            data["betas"] = tuple(data["betas"])
        return cls(**data)

    @classmethod
    def from_toml(cls, path):
        path = Path(path)
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
        return cls.from_mapping(doc.get("wavefunction", doc))


def _radial_env(r, beta, kind):
    if kind == "gaussian":
        return np.exp(-beta * r**2)
    return np.exp(-beta * r)


def _radial_env_logder(u, beta, kind):
    """Gradient of log envelope for u of shape (..., 3)."""
    if kind == "gaussian":
        return -2.0 * beta * u
    r = np.linalg.norm(u, axis=-1)[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(r > 0, -beta * u / r, 0.0)


def _log_jastrow(wf, xhat, x):
    val = np.zeros(np.broadcast_shapes(xhat.shape[:-2], x.shape[:-1]))
    if wf.nuclear_jastrow:
        val = val + jastrow_F0(x, wf.Z) + _nuclear_sum(xhat, wf.Z)
    if wf.pair_jastrow:
        val = val + _pair_with_x(xhat, x) + _pair_sum(xhat)
    return val


def _grad_log_jastrow(wf, xhat, x):
    shape = np.broadcast_shapes(xhat.shape[:-2], x.shape[:-1]) + (3,)
    grad = np.zeros(shape)
    if wf.nuclear_jastrow:
        grad = grad - 0.5 * wf.Z * _cut_norm(x)[1]
    if wf.pair_jastrow:
        grad = grad + 0.25 * np.sum(_cut_norm(x[..., None, :] - xhat)[1], axis=-2)
    return grad


def _envelope(wf, xhat, x):
    """Envelope value and its gradient in x."""
    kind = wf.envelope
    if wf.symmetry == "generic":
        rest = np.ones(xhat.shape[:-2])
        for j in range(wf.n_particles - 1):
            rest = rest * _radial_env(np.linalg.norm(xhat[..., j, :], axis=-1), wf.betas[j], kind)
        ex = _radial_env(np.linalg.norm(x, axis=-1), wf.betas[-1], kind)
        val = rest * ex
        grad = val[..., None] * _radial_env_logder(x, wf.betas[-1], kind)
        return val, grad
    r1 = np.linalg.norm(xhat[..., 0, :], axis=-1)
    r = np.linalg.norm(x, axis=-1)
    g1, h1 = _radial_env(r1, wf.beta_g, kind), _radial_env(r1, wf.beta_h, kind)
    gx, hx = _radial_env(r, wf.beta_g, kind), _radial_env(r, wf.beta_h, kind)
    rest = np.ones(xhat.shape[:-2])
    for j in range(1, wf.n_particles - 1):
        rest = rest * _radial_env(np.linalg.norm(xhat[..., j, :], axis=-1), wf.betas[j - 1], kind)
    det = g1 * hx - h1 * gx
    dgx = gx[..., None] * _radial_env_logder(x, wf.beta_g, kind)
    dhx = hx[..., None] * _radial_env_logder(x, wf.beta_h, kind)
    grad = rest[..., None] * (g1[..., None] * dhx - h1[..., None] * dgx)
    return rest * det, grad


def _prep(xhat, x):
    return np.asarray(xhat, dtype=float), np.asarray(x, dtype=float)


def eval_psi(wf, xhat, x):
    xhat, x = _prep(xhat, x)
    env, _ = _envelope(wf, xhat, x)
    return np.exp(_log_jastrow(wf, xhat, x)) * env


def _singular_mask(wf, xhat, x):
    mask = np.zeros(np.broadcast_shapes(xhat.shape[:-2], x.shape[:-1]), dtype=bool)
    if wf.nuclear_jastrow or wf.envelope == "slater":
        mask |= np.linalg.norm(x, axis=-1) == 0
    if wf.pair_jastrow:
        mask |= np.any(np.linalg.norm(x[..., None, :] - xhat, axis=-1) == 0, axis=-1)
    return mask


def eval_grad_psi(wf, xhat, x):
    """Analytic gradient of psi in the distinguished coordinate x."""
    xhat, x = _prep(xhat, x)
    if np.any(_singular_mask(wf, xhat, x)):
        raise SingularPointError("gradient of psi is undefined on the coalescence set")
    env, denv = _envelope(wf, xhat, x)
    ej = np.exp(_log_jastrow(wf, xhat, x))
    return ej[..., None] * (env[..., None] * _grad_log_jastrow(wf, xhat, x) + denv)


def eval_reduced(wf, xhat, x):
    """exp(-F0(x)) psi, the function that is smoother at the coalescence points."""
    xhat, x = _prep(xhat, x)
    return np.exp(-jastrow_F0(x, wf.Z)) * eval_psi(wf, xhat, x)


# ---------------------------------------------------------------- envelopes

_STENCILS = {
    0: (np.array([0]), np.array([1.0])),
    1: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
    3: (np.array([-2, -1, 1, 2]), np.array([-0.5, 1.0, -1.0, 0.5])),
}


def multi_indices(order):
    return [m for m in itertools.product(range(order + 1), repeat=3) if sum(m) == order]


def fd_partial(func, x, m, h):
    """Nested central difference approximation of d^m func at x (shape (3,))."""
    offsets = []
    coeffs = []
    for axis_stencil in itertools.product(*[zip(*_STENCILS[mi]) for mi in m]):
        shift = np.array([s for s, _ in axis_stencil], dtype=float)
        offsets.append(shift)
        coeffs.append(np.prod([c for _, c in axis_stencil]))
    pts = x[None, :] + h * np.array(offsets)
    return float(np.dot(coeffs, func(pts))) / h ** sum(m)


@dataclass
class EnvelopeReport:
    target: str
    max_order: int
    lambdas: np.ndarray
    ratios: dict = field(default_factory=dict)  # order -> per-sample max ratio
    skipped: int = 0

    @property
    def max_ratio(self):
        return {k: float(np.nanmax(v)) if np.any(np.isfinite(v)) else np.nan
                for k, v in self.ratios.items()}

    def log_slope(self, order):
        """Slope of log(ratio) against log(lambda) over the kept samples."""
        y = self.ratios[order]
        ok = np.isfinite(y) & (y > 0)
        if ok.sum() < 2:
            return np.nan
        return float(np.polyfit(np.log(self.lambdas[ok]), np.log(y[ok]), 1)[0])


def check_derivative_envelope(wf, target, max_order, samples, min_step=1e-7):
    """Compare finite-difference derivatives in x against 1 + lam^(a-|m|).

    ``samples`` is a sequence of (xhat, x) pairs off the coalescence set.
    ``a`` is 1 for ``target='psi'`` and 2 for ``target='reduced'``.
    """
    if max_order > 3:
        raise ValueError("max_order above 3 is not supported")
    if target == "psi":
        base, a = eval_psi, 1
    elif target == "reduced":
        base, a = eval_reduced, 2
    else:
        raise ValueError(f"unknown target {target!r}")

    lams = []
    ratios = {k: [] for k in range(max_order + 1)}
    skipped = 0
    for xhat, x in samples:
        xhat = np.asarray(xhat, dtype=float)
        x = np.asarray(x, dtype=float)
        lam = float(coalescence_distance(xhat, x)[1])
        lams.append(lam)
        f = lambda pts, xh=xhat: base(wf, xh, pts)
        for order in range(max_order + 1):
            h = min(FD_STEPS.get(order, 1.0), lam / 4.0) if order else 0.0
            if order and h < min_step:
                ratios[order].append(np.nan)
                skipped += 1
                continue
            vals = [abs(fd_partial(f, x, m, h)) for m in multi_indices(order)]
            ratios[order].append(max(vals) / (1.0 + lam ** (a - order)))
    return EnvelopeReport(target, max_order, np.array(lams),
                          {k: np.array(v) for k, v in ratios.items()}, skipped)


def ray_samples(xhat, center, direction, distances):
    """Points center + t*direction for each t, paired with a fixed xhat."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    center = np.asarray(center, dtype=float)
    return [(np.asarray(xhat, dtype=float), center + t * direction) for t in distances]
