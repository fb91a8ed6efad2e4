"""Experiment orchestration: configuration files, deterministic seeding,
ensemble pipelines and CSV/JSON output.

Configuration files are INI (``configparser``) with the sections
``[experiment]``, ``[torus]``, ``[kernel]`` and ``[potential]``; see
``contiflow/configs/*.ini`` for complete examples. Tabular results are CSV
with the columns ``estimator, params_hash, value, se, n``.
"""
from __future__ import annotations

import configparser
import datetime as _dt
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import estimation as est
from . import glauber, harmonic, kawasaki
from .config_space import Configuration, StepFunction, Torus, Window, sample_poisson
from .estimation import EstimateWithError
from .gibbs import GibbsParams, sample_gibbs
from .potentials import (JumpKernel, KawasakiRateParams, PairPotential,
                         ScaledPotential, ZeroPotential, check_condition_12, check_low_activity,
                         check_stability, energy, make_kernel, make_potential)

SCHEMA_VERSION = 1
KINDS = ("free-two-time", "theorem1-poisson", "theorem3-generator", "gibbs-validate",
         "glauber-stationarity", "two-construction")
EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE, EXIT_ACCEPTANCE = 0, 2, 3, 4
CSV_COLUMNS = ("estimator", "params_hash", "value", "se", "n")

# stream ids keep the random streams of different pipelines apart
STREAM_GIBBS = 1
STREAM_FREE_KAWASAKI = 100
STREAM_FREE_LIMIT = 200
STREAM_DUAL_RATIO = 300
STREAM_GLAUBER = 400
STREAM_EXACT = 500
STREAM_MISC = 900


class ConfigError(ValueError):
    """Invalid experiment configuration; ``invariant`` names the violated check."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"[{invariant}] {message}")
        self.invariant = invariant


# ---------------------------------------------------------------------------
# seeding and parallel maps
# ---------------------------------------------------------------------------
def seed_streams(master_seed: int, trajectory_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one trajectory: Philox keyed by (seed, stream, index)."""
    ss = np.random.SeedSequence([int(master_seed), int(stream), int(trajectory_index)])
    return np.random.Generator(np.random.Philox(ss))


def resolve_jobs(jobs: int | None = None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("CONTIFLOW_JOBS", "1") or 1)
    return max(1, int(jobs))


def pmap(fn, items, jobs: int | None = None) -> list:
    """Ordered map, optionally over a process pool. Results come back in input order."""
    items = list(items)
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _chunks(n: int, size: int = 500):
    return [(a, min(a + size, n)) for a in range(0, n, size)]


# ---------------------------------------------------------------------------
# rows and CSV
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Row:
    estimator: str
    params_hash: str
    value: float
    se: float
    n: int

    @classmethod
    def of(cls, name: str, phash: str, e: EstimateWithError) -> "Row":
        return cls(name, phash, float(e.value), float(e.se), int(e.n))

    @classmethod
    def exact(cls, name: str, phash: str, value: float, n: int = 0) -> "Row":
        return cls(name, phash, float(value), 0.0, int(n))


def format_number(x: float) -> str:
    """Positional decimal with 17 significant digits (``inf``/``nan`` spelled out)."""
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if x == 0:
        return "0.0000000000000000"
    return np.format_float_positional(x, precision=17, unique=False, fractional=False, trim="k")


def write_csv(rows, path) -> str:
    """Write rows as UTF-8 CSV with ``\\n`` line endings; returns the sha256 digest."""
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        if any(c in r.estimator + r.params_hash for c in ',"\n'):
            raise ValueError(f"estimator name {r.estimator!r} must not contain commas, quotes or newlines")
        buf.write(f"{r.estimator},{r.params_hash},{format_number(r.value)},"
                  f"{format_number(r.se)},{int(r.n)}\n")
    data = buf.getvalue().encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def read_csv(path) -> list:
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [Row(r["estimator"], r["params_hash"], float(r["value"]), float(r["se"]), int(r["n"]))
                for r in reader]


def params_hash(params: dict) -> str:
    text = json.dumps(params, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def parse_step(text: str, dim: int) -> StepFunction:
    """``"lo, hi, value"`` with space-separated coordinates when ``dim > 1``."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) not in (2, 3):
        raise ConfigError("test-function", f"expected 'lo, hi[, value]', got {text!r}")
    lo = [float(v) for v in parts[0].split()]
    hi = [float(v) for v in parts[1].split()]
    if len(lo) != dim or len(hi) != dim:
        raise ConfigError("test-function", f"bounds must have {dim} coordinates")
    value = float(parts[2]) if len(parts) == 3 else 1.0
    return StepFunction(Window(lo, hi), value)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _params_of(section) -> dict:
    return {k: v for k, v in section.items() if k != "family"}


@dataclass
class ExperimentConfig:
    kind: str
    torus: Torus
    kernel: JumpKernel
    potential: PairPotential
    z: float
    u: float = 0.0
    v: float = 0.0
    eps: tuple = (1.0, 0.5, 0.25, 0.125)
    T: float = 1.0
    snapshots: tuple = (0.0, 1.0)
    ensemble: int = 1000
    seed: int = 0
    output: str | None = None
    f: StepFunction | None = None
    g: StepFunction | None = None
    mc_n: int = 10_000
    tolerance: float | None = None
    threshold: float = 0.01
    gibbs_chains: int = 4
    constants: dict | None = None
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return params_hash(self.raw)


def _get(sec, key, conv, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError("schema", f"missing key {key!r} in [{sec.name}]")
        return default
    try:
        return conv(sec[key])
    except (ValueError, TypeError) as exc:
        raise ConfigError("schema", f"bad value for {key!r}: {sec[key]!r} ({exc})") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an INI experiment description."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep R, T, L case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("syntax", str(exc)) from None
    for sec in ("experiment", "torus"):
        if sec not in cp:
            raise ConfigError("schema", f"missing section [{sec}]")
    ex, to = cp["experiment"], cp["torus"]
    version = _get(ex, "schema_version", int, required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported schema_version {version}")
    kind = ex.get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    dim = _get(to, "dim", int, 1)
    L = _get(to, "L", float, required=True)
    try:
        torus = Torus(dim, L)
    except ValueError as exc:
        raise ConfigError("torus", str(exc)) from None
    try:
        kernel = (make_kernel(cp["kernel"]["family"], **_params_of(cp["kernel"]))
                  if "kernel" in cp else make_kernel("gaussian"))
        potential = (make_potential(cp["potential"]["family"], **_params_of(cp["potential"]))
                     if "potential" in cp else ZeroPotential())
    except (KeyError, ValueError) as exc:
        raise ConfigError("family", str(exc)) from None
    raw = {s: dict(cp[s]) for s in cp.sections()}
    cfg = ExperimentConfig(
        kind=kind, torus=torus, kernel=kernel, potential=potential,
        z=_get(ex, "z", float, required=True),
        u=_get(ex, "u", float, 0.0), v=_get(ex, "v", float, 0.0),
        eps=_get(ex, "eps", _floats, (1.0, 0.5, 0.25, 0.125)),
        T=_get(ex, "T", float, 1.0),
        snapshots=_get(ex, "snapshots", _floats, None),
        ensemble=_get(ex, "ensemble", int, 1000),
        seed=_get(ex, "seed", int, 0),
        output=ex.get("output"),
        f=parse_step(ex["f"], dim) if "f" in ex else None,
        g=parse_step(ex["g"], dim) if "g" in ex else None,
        mc_n=_get(ex, "mc_n", int, 10_000),
        tolerance=_get(ex, "tolerance", float, None),
        threshold=_get(ex, "threshold", float, 0.01),
        gibbs_chains=_get(ex, "gibbs_chains", int, 4),
        raw=raw,
    )
    if cfg.snapshots is None:
        cfg.snapshots = (0.0, cfg.T)
    if cfg.f is None:
        cfg.f = StepFunction(Window((0.0,) * dim, (min(2.0, L / 2),) * dim), 1.0)
    if cfg.g is None:
        cfg.g = cfg.f
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("file", str(exc)) from None
    return parse_config(text)


_GIBBS_KINDS = ("theorem3-generator", "gibbs-validate", "glauber-stationarity")


def validate(cfg: ExperimentConfig) -> None:
    """Load-time checks; raises :class:`ConfigError` naming the failed invariant."""
    phi, t = cfg.potential, cfg.torus
    if not cfg.z > 0:
        raise ConfigError("activity", "z must be positive")
    if not (0 <= cfg.u <= 1 and 0 <= cfg.v <= 1):
        raise ConfigError("uv-range", "u and v must lie in [0, 1]")
    if not phi.is_zero and phi.range >= t.side / 2:
        raise ConfigError("range<L/2", f"interaction range R={phi.range} must be < L/2={t.side / 2}")
    eps = np.asarray(cfg.eps, float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ConfigError("eps-decreasing", f"eps list must be positive and strictly decreasing: {cfg.eps}")
    if not cfg.T >= 0 or any(s < 0 or s > cfg.T for s in cfg.snapshots):
        raise ConfigError("snapshots", "snapshot times must lie in [0, T]")
    if cfg.ensemble < 1 or cfg.mc_n < 1:
        raise ConfigError("ensemble", "ensemble and mc_n must be positive")
    if cfg.kind in ("free-two-time", "two-construction") and cfg.ensemble < 30:
        raise ConfigError("ensemble", "two-time covariance needs at least 30 trajectories")
    for name, fn in (("f", cfg.f), ("g", cfg.g)):
        if fn is not None and cfg.kind == "theorem3-generator" and fn.value > 0:
            raise ConfigError("test-function", f"{name} must be non-positive for this kind")
    if not phi.is_zero:
        B = phi.stability_B_dim(t.dim) if hasattr(phi, "stability_B_dim") else phi.stability_B
        if math.isinf(B):
            raise ConfigError("stability", "potential is not stable (negative part without hard core)")
        rep = check_stability(phi, B, 200, np.random.default_rng(0), dim=t.dim)
        if not rep.passed:
            raise ConfigError("stability", f"stability check failed, margin {rep.worst_margin:.3g}")
        if cfg.kind in _GIBBS_KINDS:
            la = check_low_activity(phi, cfg.z, B, dim=t.dim)
            if not la.holds:
                raise ConfigError("low-activity", f"z int|e^-phi - 1| = {la.lhs:.4g} "
                                                  f">= {la.threshold:.4g}")
        if cfg.kind in ("theorem3-generator", "glauber-stationarity"):
            c12 = check_condition_12(phi, cfg.u, cfg.v, dim=t.dim)
            if not c12.holds:
                raise ConfigError("condition-12", f"integrability fails for u={cfg.u}, v={cfg.v}")
    if cfg.kind == "free-two-time" and not phi.is_zero:
        raise ConfigError("free-potential", "free-two-time needs the zero potential")


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------
@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    seeds: dict
    started: str
    finished: str = ""
    outputs: dict = field(default_factory=dict)
    flagged: list = field(default_factory=list)
    status: str = "ok"

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# pipelines (shared by run_experiment and the acceptance suite)
# ---------------------------------------------------------------------------
def _gibbs_chain(args):
    phi, z, torus, n, seed, stream, c = args
    p = GibbsParams(phi, z, torus, check=False)
    samples = sample_gibbs(p, n, seed_streams(seed, c, stream))
    return [s.positions for s in samples]


def gibbs_bank(phi: PairPotential, z: float, torus: Torus, n_samples: int, seed: int,
               chains: int = 4, jobs: int | None = None, stream: int = STREAM_GIBBS) -> list:
    """Gibbs samples from ``chains`` independent chains (chain count fixes the output)."""
    per = [n_samples // chains + (c < n_samples % chains) for c in range(chains)]
    parts = pmap(_gibbs_chain, [(phi, z, torus, per[c], seed, stream, c) for c in range(chains)], jobs)
    ir = phi.range if phi.range > 0 else None
    return [Configuration(torus, p, interaction_range=ir) for part in parts for p in part]


def _free_kawasaki_chunk(args):
    torus, kernel, rho, eps, t, f, g, seed, stream, a, b = args
    params = KawasakiRateParams(ZeroPotential(), ZeroPotential(), kernel, eps)
    out = np.empty((b - a, 4))
    for j, i in enumerate(range(a, b)):
        rng = seed_streams(seed, i, stream)
        g0 = sample_poisson(rho, torus, rng)
        s0, st = kawasaki.run(g0, params, t, [0.0, t], rng)
        out[j] = (est.linear_statistic(s0, f), est.linear_statistic(st, g),
                  s0.count_in(f.window), st.count_in(f.window))
    return out


def _free_limit_chunk(args):
    torus, rho, t, f, g, seed, stream, a, b = args
    out = np.empty((b - a, 4))
    for j, i in enumerate(range(a, b)):
        rng = seed_streams(seed, i, stream)
        s0, st = glauber.free_exact_sampler(lambda r: sample_poisson(rho, torus, r), rho, t,
                                            [0.0, t], rng, torus=torus)
        out[j] = (est.linear_statistic(s0, f), est.linear_statistic(st, g),
                  s0.count_in(f.window), st.count_in(f.window))
    return out


@dataclass
class FreeTwoTimeResult:
    rows: list
    cov: dict
    exact: dict
    pvalues: dict
    limit: EstimateWithError
    limit_closed_form: float
    torus_limit: float


def pipeline_free_two_time(torus: Torus, kernel: JumpKernel, rho: float, eps_list, t: float,
                           f: StepFunction, g: StepFunction, n_traj: int, seed: int,
                           jobs: int | None = None, tag: str = "") -> FreeTwoTimeResult:
    """Two-time covariance of free hopping at each eps and of the immigration-death limit."""
    ph = params_hash({"kind": "free-two-time", "L": torus.side, "d": torus.dim, "rho": rho,
                      "kernel": repr(kernel), "t": t, "f": repr(f), "g": repr(g), "n": n_traj})
    rows, cov, exact, pvals = [], {}, {}, {}
    mean_count = rho * f.window.volume
    for j, eps in enumerate(eps_list):
        parts = pmap(_free_kawasaki_chunk,
                     [(torus, kernel, rho, eps, t, f, g, seed, STREAM_FREE_KAWASAKI + j, a, b)
                      for a, b in _chunks(n_traj)], jobs)
        data = np.vstack(parts)
        c = est.covariance_estimate(data[:, 0], data[:, 1])
        cov[eps] = c
        p0 = est.poisson_gof_pvalue(data[:, 2].astype(int), mean_count)
        p1 = est.poisson_gof_pvalue(data[:, 3].astype(int), mean_count)
        pvals[eps] = (p0, p1)
        rows.append(Row.of(f"{tag}two_time_covariance@eps={eps:g}", ph, c))
        if isinstance(kernel, type(make_kernel("gaussian"))) and torus.dim == 1:
            exact[eps] = kawasaki.free_covariance_torus(rho, f, g, t, kernel.sigma, eps, torus.side)
            rows.append(Row.exact(f"{tag}torus_exact_covariance@eps={eps:g}", ph, exact[eps]))
        rows.append(Row.exact(f"{tag}poisson_gof_p_t0@eps={eps:g}", ph, p0, n_traj))
        rows.append(Row.exact(f"{tag}poisson_gof_p_t@eps={eps:g}", ph, p1, n_traj))
    parts = pmap(_free_limit_chunk, [(torus, rho, t, f, g, seed, STREAM_FREE_LIMIT, a, b)
                                     for a, b in _chunks(n_traj)], jobs)
    data = np.vstack(parts)
    limit = est.covariance_estimate(data[:, 0], data[:, 1])
    rows.append(Row.of(f"{tag}two_time_covariance@limit", ph, limit))
    overlap = _step_overlap(f, g)
    closed = rho * math.exp(-t) * overlap
    torus_lim = rho * (math.exp(-t) * overlap
                       + (1 - math.exp(-t)) * f.integral * g.integral / torus.volume)
    rows.append(Row.exact(f"{tag}limit_closed_form", ph, closed))
    rows.append(Row.exact(f"{tag}torus_conserved_limit", ph, torus_lim))
    return FreeTwoTimeResult(rows, cov, exact, pvals, limit, closed, torus_lim)


def _step_overlap(f: StepFunction, g: StepFunction) -> float:
    lo = np.maximum(f.window.lo, g.window.lo)
    hi = np.minimum(f.window.hi, g.window.hi)
    return float(f.value * g.value * np.prod(np.clip(hi - lo, 0.0, None)))


@dataclass
class DualRatioResult:
    rows: list
    ratios: dict
    exact_ratios: dict
    c_minus: float
    c_plus: float


def pipeline_dual_ratio(phi_minus: PairPotential, phi_plus: PairPotential, kernel: JumpKernel,
                      z: float, eps_list, mc_n: int, seed: int, dim: int = 1) -> DualRatioResult:
    """Ratios of the dual generators at eps to their eps = 0 forms, single point at the origin.

    The same kernel draws are used at every eps (common random numbers).
    """
    k = harmonic.PoissonCorrelation(z)
    eta = np.zeros((1, dim))
    cm = harmonic.c_minus(k, phi_plus, dim)
    cp = harmonic.c_plus(k, phi_minus, dim)
    ph = params_hash({"kind": "dual-ratio", "phi-": repr(phi_minus), "phi+": repr(phi_plus),
                      "kernel": repr(kernel), "z": z, "mc_n": mc_n})
    rows = [Row.exact("c_minus", ph, cm), Row.exact("c_plus", ph, cp)]
    deltas = kernel.sample(seed_streams(seed, 0, STREAM_DUAL_RATIO), dim, size=mc_n)
    base = KawasakiRateParams(phi_minus, phi_plus, kernel, 1.0)
    ratios, exact = {"minus": {}, "plus": {}}, {"minus": {}, "plus": {}}
    l0m = harmonic.hat_L0_star_minus(k, eta, base)
    l0p = harmonic.hat_L0_star_plus(k, eta, base)
    for eps in eps_list:
        p = base.with_eps(eps)
        m = harmonic.hat_L_star_minus_eps(k, eta, p, deltas=deltas)
        pl = harmonic.hat_L_star_plus_eps(k, eta, p, deltas=deltas)
        rm = EstimateWithError(m.value / l0m, m.se / abs(l0m), m.n)
        rp = EstimateWithError(pl.value / l0p, pl.se / abs(l0p), pl.n)
        ratios["minus"][eps], ratios["plus"][eps] = rm, rp
        rows.append(Row.of(f"ratio_minus@eps={eps:g}", ph, rm))
        rows.append(Row.of(f"ratio_plus@eps={eps:g}", ph, rp))
        if dim == 1 and hasattr(kernel, "sigma"):
            exact["minus"][eps] = harmonic.single_point_ratio_quad(k, p, "minus")
            exact["plus"][eps] = harmonic.single_point_ratio_quad(k, p, "plus")
            rows.append(Row.exact(f"ratio_minus_quad@eps={eps:g}", ph, exact["minus"][eps]))
            rows.append(Row.exact(f"ratio_plus_quad@eps={eps:g}", ph, exact["plus"][eps]))
    return DualRatioResult(rows, ratios, exact, cm, cp)


# --- Gibbs validation ------------------------------------------------------
def _h_count(x, g, ex):
    return 1.0


def _h_neighbours(x, g, ex):
    return float(len(g.neighbors_within(x, 1.0, exclude=ex)))


def _make_h_boltzmann(phi):
    def h(x, g, ex):
        return math.exp(energy(phi, x, g, exclude=ex))
    return h


@dataclass
class GibbsValidateResult:
    rows: list
    gnz: dict
    identity: dict
    C_u: dict
    density: EstimateWithError


def pipeline_gibbs_validate(samples, phi: PairPotential, z: float, seed: int,
                            window: Window | None = None, us=(0.0, 0.5, 1.0)) -> GibbsValidateResult:
    t = samples[0].torus
    window = window or Window((0.0,) * t.dim, (min(5.0, t.side / 2),) * t.dim)
    ph = params_hash({"kind": "gibbs", "phi": repr(phi), "z": z, "L": t.side, "n": len(samples),
                      "window": repr(window)})
    rows = []
    dens = est.density(samples)
    rows.append(Row.of("gibbs_density", ph, dens))
    hs = {"h_indicator": _h_count, "h_neighbours": _h_neighbours,
          "h_boltzmann": _make_h_boltzmann(phi)}
    gnz = {}
    for j, (name, h) in enumerate(hs.items()):
        r = gibbs_gnz(samples, phi, z, h, window, seed_streams(seed, j, STREAM_MISC))
        gnz[name] = r
        rows.append(Row.of(f"gnz_lhs@{name}", ph, r.lhs))
        rows.append(Row.of(f"gnz_rhs@{name}", ph, r.rhs))
        rows.append(Row.exact(f"gnz_z@{name}", ph, r.z_score, len(samples)))
    f = StepFunction(window, 1.0)
    lem, cus = {}, {}
    for j, u in enumerate(us):
        rng = seed_streams(seed, 10 + j, STREAM_MISC)
        c = harmonic.cu_identity_check(samples, phi, z, u, f, f.integral, n_origins=8, rng=rng)
        lem[u] = c
        cus[u] = harmonic.estimate_C_u(samples, phi, u, n_origins=8,
                                       rng=seed_streams(seed, 20 + j, STREAM_MISC))
        rows.append(Row.of(f"cu_identity_lhs@u={u:g}", ph, c.lhs))
        rows.append(Row.of(f"cu_identity_rhs@u={u:g}", ph, c.rhs))
        rows.append(Row.exact(f"cu_identity_z@u={u:g}", ph, c.z_score, len(samples)))
        rows.append(Row.of(f"C_u@u={u:g}", ph, cus[u]))
    return GibbsValidateResult(rows, gnz, lem, cus, dens)


def gibbs_gnz(samples, phi, z, h, window, rng):
    from .gibbs import gnz_residual
    return gnz_residual(samples, phi, z, h, window, n_mc=16, rng=rng)


# --- constants -----------------------------------------------------------------
def constants_from_samples(samples, phi: PairPotential, z: float, u: float, v: float,
                           seed: int) -> dict:
    """``C_u, C_v`` and the constants ``c^- = C_v``, ``c^+ = z C_u`` of the Gibbs correlation functional."""
    cu = harmonic.estimate_C_u(samples, phi, u, n_origins=8, rng=seed_streams(seed, 0, STREAM_MISC + 1))
    cv = harmonic.estimate_C_u(samples, phi, v, n_origins=8, rng=seed_streams(seed, 1, STREAM_MISC + 1))
    rho = est.density(samples)
    return {"C_u": cu, "C_v": cv, "c_minus": cv,
            "c_plus": EstimateWithError(z * cu.value, z * cu.se, cu.n), "k1": rho}


def constants_poisson(phi: PairPotential, z: float, u: float, v: float, dim: int) -> dict:
    """Closed forms when the reference measure is Poisson(``z``)."""
    k = harmonic.PoissonCorrelation(z)

    def scaled(c):
        return ScaledPotential(phi, c) if not phi.is_zero else ZeroPotential()

    # E_Poisson exp(-(1-u) E(0, gamma)) = exp(z int (e^{-(1-u) phi} - 1))
    cu = harmonic.c_minus(k, scaled(1 - u), dim)
    cv = harmonic.c_minus(k, scaled(1 - v), dim)
    cm = harmonic.c_minus(k, scaled(1 - v), dim)
    cpl = harmonic.c_plus(k, scaled(u), dim)
    ex = lambda x: EstimateWithError(float(x), 0.0, 0)  # noqa: E731
    return {"C_u": ex(cu), "C_v": ex(cv), "c_minus": ex(cm), "c_plus": ex(cpl), "k1": ex(z)}


def constants_to_json(consts: dict, meta: dict) -> str:
    out = dict(meta)
    for k, e in consts.items():
        out[k] = {"value": e.value, "se": e.se, "n": e.n}
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def load_constants(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {k: (EstimateWithError(v["value"], v["se"], v["n"]) if isinstance(v, dict) else v)
            for k, v in data.items()}


def estimate_constants(cfg: ExperimentConfig, samples=None, jobs=None, source: str | None = None):
    """Constants file contents for ``cfg`` as ``(consts, meta)``.

    ``source`` is ``"gibbs"`` (Monte Carlo over a Gibbs bank of ``cfg.ensemble``
    samples) or ``"poisson"`` (closed forms for the Poisson reference measure);
    the default is Poisson for the zero potential and Gibbs otherwise.
    """
    phi = cfg.potential
    if source is None:
        source = cfg.raw.get("experiment", {}).get("constants_source",
                                                   "poisson" if phi.is_zero else "gibbs")
    meta = {"source": source, "u": cfg.u, "v": cfg.v, "z": cfg.z, "config_hash": cfg.config_hash}
    if source == "poisson":
        return constants_poisson(phi, cfg.z, cfg.u, cfg.v, cfg.torus.dim), meta
    if source != "gibbs":
        raise ConfigError("constants_source", f"unknown source {source!r}")
    if samples is None:
        samples = gibbs_bank(phi, cfg.z, cfg.torus, cfg.ensemble, cfg.seed, cfg.gibbs_chains, jobs)
    return constants_from_samples(samples, phi, cfg.z, cfg.u, cfg.v, cfg.seed), meta


# --- generator comparison --------------------------------------------------------
@dataclass
class GeneratorGapResult:
    rows: list
    gap_sq: dict
    ratio: dict
    L0_sq: EstimateWithError
    constants: dict


def pipeline_generator_gap(samples, phi: PairPotential, z: float, u: float, v: float,
                      kernel: JumpKernel, eps_list, f: StepFunction, C_u: float,
                      C_v: float) -> GeneratorGapResult:
    """``E_mu |L_eps F - L_0 F|^2`` for ``F = exp <f, .>`` over a Gibbs bank."""
    t = samples[0].torus
    lp = glauber.GlauberParams.interacting(t, phi, z, u, v, C_u, C_v)
    l0 = np.array([glauber.apply_L0_to_exp(f, s, lp) for s in samples])
    ph = params_hash({"kind": "generator-gap", "phi": repr(phi), "z": z, "u": u, "v": v,
                      "kernel": repr(kernel), "f": repr(f), "n": len(samples), "C": [C_u, C_v]})
    L0sq = est.mean_estimate(l0 ** 2)
    rows = [Row.exact("C_u", ph, C_u), Row.exact("C_v", ph, C_v), Row.of("L0F_sq", ph, L0sq)]
    gaps, ratios = {}, {}
    for eps in eps_list:
        kp = KawasakiRateParams.symmetric(phi, u, v, kernel, eps, z)
        le = np.array([kawasaki.apply_Leps_to_exp(f, s, kp).value for s in samples])
        d2 = (le - l0) ** 2
        gaps[eps] = est.mean_estimate(d2)
        val, se = est._jackknife(lambda m: np.array([m[0] / m[1]]), np.column_stack([d2, l0 ** 2]))
        ratios[eps] = EstimateWithError(float(val[0]), float(se[0]), len(samples))
        rows.append(Row.of(f"gen_gap_sq@eps={eps:g}", ph, gaps[eps]))
        rows.append(Row.of(f"gen_gap_ratio@eps={eps:g}", ph, ratios[eps]))
    return GeneratorGapResult(rows, gaps, ratios, L0sq, {"C_u": C_u, "C_v": C_v})


# --- limit-dynamics stationarity ---------------------------------------------
def _glauber_stationarity_chunk(args):
    lp, starts, T, times, edges, seed, stream, a = args
    half = T / 2
    out = []
    for j, pts in enumerate(starts):
        rng = seed_streams(seed, a + j, stream)
        g0 = Configuration(lp.torus, pts, interaction_range=lp.phi.range or None)
        snaps = glauber.run(g0, lp, T, times, rng)
        V = lp.torus.volume
        first = [s for s, t in zip(snaps, times) if t <= half]
        second = [s for s, t in zip(snaps, times) if t > half]
        row = []
        for group in (first, second):
            row.append(np.mean([len(s) / V for s in group]))
            row.extend(np.mean([est.shell_u2(s, edges) for s in group], axis=0))
        out.append(row)
    return np.array(out)


@dataclass
class StationarityResult:
    rows: list
    density_diff: EstimateWithError
    u2_diff: list
    z_scores: np.ndarray


def pipeline_glauber_stationarity(samples, lp, T: float, n_snap: int, edges, seed: int,
                                  jobs: int | None = None, tag: str = "") -> StationarityResult:
    """Paired first-half/second-half comparison of density and ``u^(2)`` shells.

    Each trajectory starts from one Gibbs sample; snapshots at ``n_snap + 1``
    equally spaced times in ``[0, T]`` are split at ``T / 2`` and averaged per
    trajectory, so the z-scores use independent per-trajectory differences.
    """
    times = np.linspace(0.0, T, n_snap + 1)
    edges = np.asarray(edges, float)
    starts = [s.positions for s in samples]
    chunks = [(lp, starts[a:b], T, times, edges, seed, STREAM_GLAUBER, a)
              for a, b in _chunks(len(starts), 250)]
    data = np.vstack(pmap(_glauber_stationarity_chunk, chunks, jobs))
    k = 1 + len(edges) - 1
    first, second = data[:, :k], data[:, k:]
    ph = params_hash({"kind": "glauber-stationarity", "u": lp.u, "v": lp.v, "C": [lp.C_u, lp.C_v],
                      "pairing": lp.death_pairing, "T": T, "n": len(samples),
                      "edges": edges.tolist()})
    diffs = [est.paired_difference(first[:, i], second[:, i]) for i in range(k)]
    zs = np.array([d.z_against(0.0) for d in diffs])
    rows = [Row.of(f"{tag}density_first_half", ph, est.mean_estimate(first[:, 0])),
            Row.of(f"{tag}density_second_half", ph, est.mean_estimate(second[:, 0])),
            Row.of(f"{tag}density_half_diff", ph, diffs[0])]
    for i in range(1, k):
        rows.append(Row.of(f"{tag}u2_half_diff@r={edges[i - 1]:g}-{edges[i]:g}", ph, diffs[i]))
    return StationarityResult(rows, diffs[0], diffs[1:], zs)


# --- two constructions of the free limit ------------------------------------------
def _two_construction_chunk(args):
    torus, k1, rho0, T, times, edges, f, seed, stream, which, a, b = args
    lp = glauber.GlauberParams.free(torus, k1)
    out = []
    for i in range(a, b):
        rng = seed_streams(seed, i, stream)
        g0 = sample_poisson(rho0, torus, rng)
        if which == "loop":
            snaps = glauber.run(g0, lp, T, times, rng)
        else:
            snaps = glauber.free_exact_sampler(g0, k1, T, times, rng, torus=torus)
        row = [len(s) / torus.volume for s in snaps]
        row += [est.linear_statistic(s, f) for s in snaps]
        row += est.shell_k2(snaps[-1], edges).tolist()
        out.append(row)
    return np.array(out)


@dataclass
class TwoConstructionResult:
    rows: list
    z_scores: dict


def pipeline_two_construction(torus: Torus, k1: float, rho0: float, T: float, times, edges,
                              f: StepFunction, n_traj: int, seed: int,
                              jobs: int | None = None) -> TwoConstructionResult:
    """Event-loop immigration-death vs the lifetime construction, same initial law."""
    times = list(times)
    edges = np.asarray(edges, float)
    ph = params_hash({"kind": "two-construction", "k1": k1, "rho0": rho0, "T": T, "times": times,
                      "L": torus.side, "n": n_traj, "edges": edges.tolist(), "f": repr(f)})
    res = {}
    for which, stream in (("loop", STREAM_GLAUBER + 50), ("exact", STREAM_EXACT)):
        chunks = [(torus, k1, rho0, T, times, edges, f, seed, stream, which, a, b)
                  for a, b in _chunks(n_traj)]
        res[which] = np.vstack(pmap(_two_construction_chunk, chunks, jobs))
    m = len(times)
    rows, zs = [], {}
    for which in ("loop", "exact"):
        d = res[which]
        for j, t in enumerate(times):
            e = est.mean_estimate(d[:, j])
            rows.append(Row.of(f"{which}_density@t={t:g}", ph, e))
        c = est.covariance_estimate(d[:, m], d[:, 2 * m - 1])
        rows.append(Row.of(f"{which}_two_time_covariance", ph, c))
        for i in range(len(edges) - 1):
            rows.append(Row.of(f"{which}_k2@r={edges[i]:g}-{edges[i + 1]:g}", ph,
                               est.mean_estimate(d[:, 2 * m + i])))
    a, b = res["loop"], res["exact"]
    for j, t in enumerate(times):
        zs[f"density@t={t:g}"] = est.joint_z(est.mean_estimate(a[:, j]), est.mean_estimate(b[:, j]))
    zs["two_time_covariance"] = est.joint_z(est.covariance_estimate(a[:, m], a[:, 2 * m - 1]),
                                            est.covariance_estimate(b[:, m], b[:, 2 * m - 1]))
    for i in range(len(edges) - 1):
        zs[f"k2@r={edges[i]:g}-{edges[i + 1]:g}"] = est.joint_z(
            est.mean_estimate(a[:, 2 * m + i]), est.mean_estimate(b[:, 2 * m + i]))
    for k, zval in zs.items():
        rows.append(Row.exact(f"joint_z@{k}", ph, zval, n_traj))
    return TwoConstructionResult(rows, zs)


# ---------------------------------------------------------------------------
# run_experiment
# ---------------------------------------------------------------------------
def _flag_rows(rows, tol):
    if tol is None:
        return []
    return [r.estimator for r in rows
            if r.n > 0 and r.se > 0 and r.se > tol * max(abs(r.value), 1e-12)]


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: int | None = None,
                   tolerance: float | None = None):
    """Execute the pipeline for ``cfg.kind``; writes ``results.csv`` and ``manifest.json``.

    Returns ``(manifest, rows, exit_code)``; the exit code is 3 if any row has
    a relative standard error above ``tolerance``.
    """
    tol = tolerance if tolerance is not None else cfg.tolerance
    out = Path(out_dir or cfg.output or "contiflow-out")
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(cfg.config_hash, __version__,
                      {"master": cfg.seed, "trajectories": cfg.ensemble,
                       "construction": "Philox(SeedSequence([seed, stream, index]))"}, _now())
    t, phi = cfg.torus, cfg.potential
    if cfg.kind == "free-two-time":
        tt = cfg.snapshots[-1]
        rows = pipeline_free_two_time(t, cfg.kernel, cfg.z, cfg.eps, tt, cfg.f, cfg.g,
                                      cfg.ensemble, cfg.seed, jobs).rows
    elif cfg.kind == "theorem1-poisson":
        pm = ScaledPotential(phi, cfg.u) if not phi.is_zero else ZeroPotential()
        pp = ScaledPotential(phi, 1 - cfg.v) if not phi.is_zero else ZeroPotential()
        r = pipeline_dual_ratio(pm, pp, cfg.kernel, cfg.z, cfg.eps, cfg.mc_n, cfg.seed, t.dim)
        rows = r.rows
    elif cfg.kind == "gibbs-validate":
        bank = gibbs_bank(phi, cfg.z, t, cfg.ensemble, cfg.seed, cfg.gibbs_chains, jobs)
        rows = pipeline_gibbs_validate(bank, phi, cfg.z, cfg.seed).rows
    elif cfg.kind == "theorem3-generator":
        bank = gibbs_bank(phi, cfg.z, t, cfg.ensemble, cfg.seed, cfg.gibbs_chains, jobs)
        consts, _ = estimate_constants(cfg, samples=bank)
        rows = pipeline_generator_gap(bank, phi, cfg.z, cfg.u, cfg.v, cfg.kernel, cfg.eps, cfg.f,
                                 consts["C_u"].value, consts["C_v"].value).rows
    elif cfg.kind == "glauber-stationarity":
        bank = gibbs_bank(phi, cfg.z, t, cfg.ensemble, cfg.seed, cfg.gibbs_chains, jobs)
        consts, _ = estimate_constants(cfg, samples=bank)
        lp = glauber.GlauberParams.interacting(t, phi, cfg.z, cfg.u, cfg.v,
                                               consts["C_u"].value, consts["C_v"].value)
        edges = np.linspace(0.0, min(2.0, t.side / 2), 9)
        rows = pipeline_glauber_stationarity(bank, lp, cfg.T, 12, edges, cfg.seed, jobs).rows
    else:  # two-construction
        edges = np.linspace(0.0, min(2.0, t.side / 2), 9)
        times = [s for s in cfg.snapshots if s > 0] or [cfg.T]
        rows = pipeline_two_construction(t, cfg.z, 0.5 * cfg.z, cfg.T, times, edges, cfg.f,
                                         cfg.ensemble, cfg.seed, jobs).rows
    digest = write_csv(rows, out / "results.csv")
    man.outputs["results.csv"] = digest
    man.flagged = _flag_rows(rows, tol)
    code = EXIT_TOLERANCE if man.flagged else EXIT_OK
    man.status = "tolerance-unmet" if man.flagged else "ok"
    man.finished = _now()
    man.write(out / "manifest.json")
    return man, rows, code
