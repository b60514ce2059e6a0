"""
End-to-end experiments.  Each one returns an ExperimentReport holding the
checks, tabular data and optional plot series; ``write_report`` turns it
into CSV, JSON and SVG files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import spectra as sp
from .density import lattice_norm
from .fourier import (cube_grid, exponent_law_experiment, fourier_decay_fit,
                      fourier_transform_1d, radial_fourier_transform, synth_kernel,
                      truncation_rank_bound, wobble_trajectory)
from .plotting import PlotSeries, write_plot
from .quadrature import scheme_for
from .radial import default_rmax, radial_density, radial_spectra
from .wavefunctions import (ModelWavefunction, capped_distance_full, eval_psi, theta_radial,
                            tomllib)

EXPERIMENTS = ("gamma-decay", "tau-decay", "antisymmetric-decay", "fourier-lemma",
               "truncation-bound", "exponent-law", "lattice-norms", "prop-suite")

PRESET_FILES = {name: name.replace("-", "_") + ".toml" for name in EXPERIMENTS}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    name: str
    params: dict = field(default_factory=dict)
    wavefunction: dict | None = None
    seed: int = 42
    tolerance: float | None = None
    out_dir: Path = Path("out")
    plot: bool = True
    source: str = ""

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}; choose from {', '.join(EXPERIMENTS)}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        for key, val in self.params.items():
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                continue
            if key.startswith(("n", "lmax", "draws", "resolution", "spacing", "kmax", "kmin")) and val <= 0:
                raise ConfigError(f"{key} must be positive, got {val}")
        self.out_dir = Path(self.out_dir)

    def model(self):
        if self.wavefunction is None:
            raise ConfigError(f"experiment {self.name} needs a [wavefunction] table")
        try:
            return ModelWavefunction.from_mapping(self.wavefunction)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid wavefunction: {exc}") from exc

    def get(self, key, default=None):
        return self.params.get(key, default)


def load_config(path, **overrides):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_mapping(doc, source=str(path), **overrides)


def config_from_mapping(doc, source="", **overrides):
    doc = dict(doc)
    name = doc.pop("experiment", None)
    if name is None:
        raise ConfigError("config must set 'experiment'")
    kwargs = dict(name=name, params=dict(doc.pop("params", {})),
                  wavefunction=doc.pop("wavefunction", None),
                  seed=doc.pop("seed", 42), tolerance=doc.pop("tolerance", None), source=source)
    if doc:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(doc))}")
    for key, val in overrides.items():
        if val is not None:
            kwargs[key] = val
    return ExperimentConfig(**kwargs)


def preset_path(name):
    if name not in PRESET_FILES:
        raise ConfigError(f"no preset for {name!r}")
    return Path(str(resources.files("rdmdecay") / "presets" / PRESET_FILES[name]))


# ---------------------------------------------------------------- report

@dataclass
class Check:
    name: str
    measured: float
    predicted: float | None
    tolerance: float | None
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self):
        out = {"name": self.name, "measured": _num(self.measured),
               "predicted": _num(self.predicted), "tolerance": _num(self.tolerance),
               "pass": bool(self.passed)}
        out.update({k: _num(v) for k, v in self.detail.items()})
        return out


def _num(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, str):
        return v
    v = float(v)
    return v if np.isfinite(v) else str(v)


@dataclass
class ExperimentReport:
    name: str
    checks: list
    tables: dict = field(default_factory=dict)  # stem -> (header, columns)
    plots: dict = field(default_factory=dict)  # stem -> list of PlotSeries
    info: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary(self):
        out = {"experiment": self.name, "pass": self.passed,
               "checks": [c.as_dict() for c in self.checks]}
        main = self.checks[0]
        out.update({"exponent": _num(main.measured), "predicted": _num(main.predicted),
                    "tolerance": _num(main.tolerance)})
        out.update({k: _num(v) for k, v in self.info.items()})
        return out


def write_report(report, out_dir, plot=True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, (header, cols) in report.tables.items():
        p = out / f"{stem}.csv"
        sp.write_series_csv(p, header, *cols)
        written.append(p)
    p = out / f"{report.name.replace('-', '_')}.json"
    p.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    written.append(p)
    if plot:
        for stem, series in report.plots.items():
            written.append(Path(write_plot(out / f"{stem}.svg", series)))
    return written


def _k(values):
    return np.arange(1, len(values) + 1)


def _within(measured, predicted, tol):
    return bool(np.isfinite(measured) and abs(measured - predicted) <= tol)


# ---------------------------------------------------------------- decay

def _spectra_for(cfg):
    wf = cfg.model()
    method = cfg.get("method", "partial-wave")
    if method == "partial-wave":
        res = radial_spectra(wf, nr=int(cfg.get("nr", 200)), lmax=int(cfg.get("lmax", 60)))
        return res.gamma, res.tau
    if method == "grid":
        grading = float(cfg.get("grading", 3.0))
        grid = sp.GridConfig(int(cfg.get("grid_n", 12)), float(cfg.get("grid_half_width", 4.0)),
                             int(cfg.get("max_nodes", 2000)), grading)
        scheme = scheme_for(wf, n=int(cfg.get("quad_n", 16)), grading=grading)
        g = sp.discretize_gamma(wf, scheme, grid).eigenvalues()
        t = sp.discretize_tau(wf, scheme, grid).eigenvalues()
        return np.clip(g, 0, None), np.clip(t, 0, None)
    raise ConfigError(f"unknown method {method!r}")


def _decay_check(name, values, window, predicted, tol, ps):
    values = values[values > 0]
    res = sp.SpectrumResult.from_values(values, window, ps=ps)
    check = Check(name, res.exponent, predicted, tol, _within(res.exponent, predicted, tol),
                  {"window": list(res.window), "residual": res.residual,
                   "amplitude": float(np.exp(res.log_amplitude))})
    series = PlotSeries(_k(res.values)[: 4 * window[1]], res.values[: 4 * window[1]], label=name,
                        fit=(np.exp(res.log_amplitude), res.exponent, tuple(window)),
                        predicted=predicted, ylabel="eigenvalue", title=name)
    return res, check, series


def run_decay(cfg, which):
    gam, tau = _spectra_for(cfg)
    window = tuple(cfg.get("window", (100, 10000)))
    checks, tables, plots = [], {}, {}
    targets = {"gamma-decay": [("gamma", gam, 8 / 3, 0.30, (3 / 8,))],
               "tau-decay": [("tau", tau, 2.0, 0.25, (1.0,))],
               "antisymmetric-decay": [("gamma", gam, 10 / 3, 0.40, (3 / 10,)),
                                       ("tau", tau, 8 / 3, 0.35, (3 / 8,))]}[which]
    for label, vals, pred, tol, ps in targets:
        pred = float(cfg.get(f"{label}_predicted", pred))
        tol = cfg.tolerance or float(cfg.get(f"{label}_tolerance", tol))
        res, check, series = _decay_check(label, vals, window, pred, tol, ps)
        check.detail["quasinorms"] = [[p, v] for p, v in res.quasinorms.items()]
        checks.append(check)
        kmax = min(len(res.values), int(cfg.get("kmax_output", 20000)))
        tables[f"{label}_spectrum"] = (("k", "s_k"), (_k(res.values)[:kmax], res.values[:kmax]))
        plots[f"{label}_spectrum"] = [series]
    info = {"method": cfg.get("method", "partial-wave"), "trace_gamma": float(np.sum(gam)),
            "trace_tau": float(np.sum(tau))}
    return ExperimentReport(which, checks, tables, plots, info)


# ---------------------------------------------------------------- lattice

def radial_lattice_norms(wf, qs, spacing=0.1, nr=200):
    """Lattice norms of the radial density of an N = 2 model on a cell-centred grid."""
    B = default_rmax(wf)
    n = int(np.ceil(2 * B / spacing))
    B = n * spacing / 2
    c = -B + spacing * (np.arange(n) + 0.5)
    rr = np.linspace(0.0, B * np.sqrt(3) + spacing, 800)
    rv = radial_density(wf, rr, nr=nr)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    rho = np.interp(np.sqrt(X**2 + Y**2 + Z**2), rr, rv)
    out = {q: lattice_norm(rho, q, spacing=spacing, origin=-B, index_radius=None) for q in qs}
    return out, float(rho.sum() * spacing**3)


def run_lattice_norms(cfg):
    base = dict(cfg.wavefunction or {"n_particles": 2, "Z": 2.0})
    betas = [float(b) for b in cfg.get("betas", (0.5, 0.75, 1.0, 1.5, 2.0))]
    kmin, kmax = (int(v) for v in cfg.get("k_range", (10, 1000)))
    limit = cfg.tolerance or float(cfg.get("spread_limit", 10.0))
    rows = {k: [] for k in ("beta", "rho_mass", "lattice_3_8", "lattice_1_2", "gamma_ratio",
                            "tau_ratio", "gamma_ratio_all_k", "tau_ratio_all_k")}
    series = []
    for b in betas:
        wf = ModelWavefunction.from_mapping({**base, "betas": (b, b)})
        spec = radial_spectra(wf, nr=int(cfg.get("nr", 200)), lmax=int(cfg.get("lmax", 40)))
        norms, mass = radial_lattice_norms(wf, (3 / 8, 1 / 2), float(cfg.get("spacing", 0.1)))
        k = np.arange(1, kmax + 1)
        g = spec.gamma[:kmax] * k ** (8 / 3) / norms[3 / 8]
        t = spec.tau[:kmax] * k**2 / norms[1 / 2]
        for key, val in (("beta", b), ("rho_mass", mass), ("lattice_3_8", norms[3 / 8]),
                         ("lattice_1_2", norms[1 / 2]), ("gamma_ratio", g[kmin - 1:].max()),
                         ("tau_ratio", t[kmin - 1:].max()), ("gamma_ratio_all_k", g.max()),
                         ("tau_ratio_all_k", t.max())):
            rows[key].append(val)
        series.append(PlotSeries(k, g, label=f"beta={b:g}", ylabel="lambda_k k^(8/3) / |||rho|||_(3/8)",
                                 title="gamma bound ratio"))
    checks = []
    for label in ("gamma_ratio", "tau_ratio"):
        vals = np.array(rows[label])
        spread = float(vals.max() / vals.min()) if np.all(vals > 0) else np.inf
        ok = bool(np.all(np.isfinite(vals)) and spread < limit)
        checks.append(Check(f"{label}_spread", spread, None, limit, ok,
                            {"max_ratio": vals.max(), "k_range": [kmin, kmax],
                             "all_k_spread": float(np.max(rows[label + "_all_k"]) /
                                                   np.min(rows[label + "_all_k"]))}))
    table = {"bound_ratios": (tuple(rows), tuple(np.array(v) for v in rows.values()))}
    return ExperimentReport("lattice-norms", checks, table, {"gamma_bound_ratio": series})


# ---------------------------------------------------------------- fourier

def run_fourier_lemma(cfg):
    scale = float(cfg.get("window_scale", 4.0))
    xi = tuple(cfg.get("xi_range", (2.0, 200.0)))
    shells = int(cfg.get("shells", 40))
    tol = cfg.tolerance or float(cfg.get("tolerance", 0.2))
    u = lambda r: np.exp(-r) * theta_radial(np.abs(r) / scale)
    tr = lambda k: radial_fourier_transform(u, k, 2 * scale)
    s3, centres, env = fourier_decay_fit(tr, *xi, shells=shells)
    oracle = (2 * np.pi) ** -1.5 * 8 * np.pi / (1 + centres**2) ** 2
    s_oracle, *_ = fourier_decay_fit(lambda k: (2 * np.pi) ** -1.5 * 8 * np.pi / (1 + k**2) ** 2,
                                     *xi, shells=shells)
    tr1 = lambda k: fourier_transform_1d(lambda x: u(np.abs(x)), k, 2 * scale)
    s1, c1, env1 = fourier_decay_fit(tr1, *xi, shells=shells)
    checks = [Check("fourier_3d", s3, 4.0, tol, _within(s3, 4.0, tol),
                    {"oracle_exponent": s_oracle,
                     "max_relative_deviation_from_oracle": float(np.max(np.abs(env / oracle - 1)))}),
              Check("fourier_1d", s1, 2.0, tol, _within(s1, 2.0, tol))]
    tables = {"fourier_envelope": (("xi", "envelope", "oracle"), (centres, env, oracle)),
              "fourier_envelope_1d": (("xi", "envelope"), (c1, env1))}
    plots = {"fourier_envelope": [PlotSeries(np.sqrt(1 + centres**2), env, label="|u^| shell max",
                                             predicted=4.0, xlabel="<xi>", ylabel="|u^(xi)|",
                                             fit=(env[0] * np.sqrt(1 + centres[0] ** 2) ** s3, s3,
                                                  (np.sqrt(1 + centres[0] ** 2), np.sqrt(1 + centres[-1] ** 2))),
                                             title="Fourier decay, d = 3")]}
    return ExperimentReport("fourier-lemma", checks, tables, plots)


def run_truncation_bound(cfg):
    rng = np.random.default_rng(cfg.seed)
    n = int(cfg.get("resolution", 512))
    alpha = float(cfg.get("alpha", 1.0))
    Ms = [int(m) for m in cfg.get("M", (4, 8, 16, 32))]
    limit = cfg.tolerance or float(cfg.get("ratio_limit", 1e3))
    kern = synth_kernel(1, alpha, trajectories=wobble_trajectory(rng.uniform(0, 2 * np.pi)))
    t, h = cube_grid(n, 1)
    rows = [truncation_rank_bound(kern, t, np.full(n, h), M, n=n) for M in Ms]
    checks = []
    for r in rows:
        checks.append(Check(f"M={r.M}", r.ratio, None, limit, bool(r.holds and r.ratio < limit),
                            {"m": r.m, "bound": r.bound, "actual": r.actual, "bound_holds": r.holds}))
    table = {"truncation_bound": (("M", "m", "bound", "actual"),
                                  ([r.M for r in rows], [r.m for r in rows],
                                   np.array([r.bound for r in rows]), np.array([r.actual for r in rows])))}
    plots = {"truncation_bound": [PlotSeries([2 * r.m for r in rows], [r.bound for r in rows], "bound",
                                             xlabel="2m", ylabel="s_2m"),
                                  PlotSeries([2 * r.m for r in rows], [r.actual for r in rows], "actual")]}
    return ExperimentReport("truncation-bound", checks, table, plots)


def run_exponent_law(cfg):
    d = int(cfg.get("d", 1))
    alphas = cfg.get("alpha", (0.5, 1.0, 1.5, 2.0))
    alphas = [float(a) for a in (alphas if isinstance(alphas, (list, tuple)) else [alphas])]
    rel = cfg.tolerance or float(cfg.get("relative_tolerance", 0.10))
    window = cfg.get("window")
    res = cfg.get("resolution")
    checks, tables, plots = [], {}, {}
    for a in alphas:
        r = exponent_law_experiment(d, a, resolution=res, window=tuple(window) if window else None,
                                    seed=cfg.seed)
        checks.append(Check(f"alpha={a:g}", r.measured, r.predicted, rel * r.predicted,
                            r.relative_error <= rel, {"d": d, "alpha": a, "window": list(r.window)}))
        stem = f"exponent_law_d{d}_alpha{a:g}"
        tables[stem] = (("k", "s_k"), (_k(r.values), r.values))
        fit = sp.fit_decay(r.values, r.window)
        plots[stem] = [PlotSeries(_k(r.values), r.values, label=f"alpha={a:g}",
                                  fit=(fit.amplitude, fit.exponent, r.window), predicted=r.predicted,
                                  ylabel="s_k", title=f"exponent law d={d}")]
    return ExperimentReport("exponent-law", checks, tables, plots)


# ---------------------------------------------------------------- suites

def _random_shape(rng, lo=20, hi=60):
    return int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))


def calculus_suite(draws=200, seed=42):
    """Randomised checks of the Schatten-class inequalities; returns violation counts."""
    rng = np.random.default_rng(seed)
    counts = {"finite_rank": 0, "triangle": 0, "ptriangle": 0, "orthogonal_sum": 0, "block_vector": 0}
    for _ in range(draws):
        m, n = _random_shape(rng)
        A = rng.standard_normal((m, n))
        r = int(rng.integers(1, min(m, n) // 2))
        K = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        p = float(rng.uniform(0.3, 3.0))
        counts["finite_rank"] += not sp.finite_rank_check(A, K, p, n=r)["holds"]

        B = rng.standard_normal((m, n))
        counts["triangle"] += not sp.quasinorm_triangle_check([A, B], 0.75).holds

        parts = [rng.standard_normal((m, n)) for _ in range(5)]
        counts["ptriangle"] += not sp.quasinorm_triangle_check(parts, 0.5, weighted=True).holds

        cut = np.sort(rng.choice(np.arange(1, n), size=2, replace=False))
        blocks = []
        for lo, hi in zip((0, *cut), (*cut, n)):
            blk = np.zeros((m, n))
            blk[:, lo:hi] = rng.standard_normal((m, hi - lo))
            blocks.append(blk)
        counts["orthogonal_sum"] += not sp.orthogonal_sum_check(blocks, 0.75).holds

        comps = [rng.standard_normal((20, 20)) for _ in range(3)]
        counts["block_vector"] += not sp.block_vector_check(comps, 1.0).holds
    return counts


def factorization_check(wf, quad_n=10, grid_n=8, half_width=None):
    """Eigenvalues of the assembled gamma (and tau) against squared s-values of Psi (and V)."""
    scheme = scheme_for(wf, n=quad_n, half_width=half_width)
    grid = sp.GridConfig(grid_n, 4.0)
    G = sp.discretize_gamma(wf, scheme, grid)
    P = sp.discretize_psi_map(wf, scheme, grid)
    T = sp.discretize_tau(wf, scheme, grid)
    V = sp.discretize_v_map(wf, scheme, grid)
    return sp.factorization_gap(G.matrix, P.matrix), sp.factorization_gap(T.matrix, V.matrix)


def lipschitz_violations(pairs=10_000, n_particles=3, seed=42, tol=1e-12):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.5, 1.5, size=(pairs, 3 * n_particles))
    scale = 10.0 ** rng.uniform(-4, 0.5, size=(pairs, 1))
    Y = X + scale * rng.standard_normal(X.shape)
    lx = capped_distance_full(X, n_particles)
    ly = capped_distance_full(Y, n_particles)
    gap = np.abs(lx - ly) - np.linalg.norm(X - Y, axis=1)
    return int(np.sum(gap > tol)), float(gap.max())


def vanishing_probes(seed=42, probes=200):
    """Max |psi| at x = x_k for antisymmetric models (should be exactly 0)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for wf in (ModelWavefunction(2, 2.0, (), symmetry="pair-antisymmetric"),
               ModelWavefunction(3, 2.0, (0.7,), symmetry="pair-antisymmetric"),
               ModelWavefunction(2, 1.0, (), symmetry="pair-antisymmetric", envelope="slater",
                                 beta_g=1.3, beta_h=0.4)):
        xhat = rng.uniform(-2, 2, size=(probes, wf.n_particles - 1, 3))
        x = xhat[:, 0, :].copy()
        worst = max(worst, float(np.max(np.abs(eval_psi(wf, xhat, x)))))
    return worst


def run_prop_suite(cfg):
    draws = int(cfg.get("draws", 200))
    counts = calculus_suite(draws, cfg.seed)
    checks = [Check(name, v, 0, 0, v == 0, {"draws": draws}) for name, v in counts.items()]
    wf = cfg.model() if cfg.wavefunction else ModelWavefunction(2, 2.0, (1.0, 1.0))
    gg, gt = factorization_check(wf, int(cfg.get("quad_n", 10)), int(cfg.get("grid_n", 8)))
    ftol = float(cfg.get("factorization_tolerance", 1e-8))
    checks.append(Check("factorization_gamma", gg, 0, ftol, gg < ftol))
    checks.append(Check("factorization_tau", gt, 0, ftol, gt < ftol))
    nviol, worst = lipschitz_violations(int(cfg.get("lipschitz_pairs", 10_000)), seed=cfg.seed)
    checks.append(Check("lipschitz", nviol, 0, 1e-12, nviol == 0, {"max_excess": worst}))
    van = vanishing_probes(cfg.seed)
    checks.append(Check("vanishing", van, 0, 0, van == 0.0))
    table = {"prop_suite": (("check", "measured", "pass"),
                            ([c.name for c in checks], [float(c.measured) for c in checks],
                             [str(c.passed).lower() for c in checks]))}
    return ExperimentReport("prop-suite", checks, table, {})


RUNNERS = {
    "gamma-decay": lambda c: run_decay(c, "gamma-decay"),
    "tau-decay": lambda c: run_decay(c, "tau-decay"),
    "antisymmetric-decay": lambda c: run_decay(c, "antisymmetric-decay"),
    "fourier-lemma": run_fourier_lemma,
    "truncation-bound": run_truncation_bound,
    "exponent-law": run_exponent_law,
    "lattice-norms": run_lattice_norms,
    "prop-suite": run_prop_suite,
}


def run(cfg, write=True):
    """Run an experiment; write its files when ``write`` is set."""
    report = RUNNERS[cfg.name](cfg)
    files = write_report(report, cfg.out_dir, cfg.plot) if write else []
    return report, files
