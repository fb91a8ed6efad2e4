"""Acceptance suite: exact identities, sampler certification and the
numerical scaling-limit probes, each reduced to pass/fail gates.

Parameters come from the bundled configuration files in
``contiflow/configs``. ``run_acceptance`` returns one :class:`CriterionResult`
per criterion and writes ``acceptance.csv`` (deterministic for a fixed seed)
and ``acceptance_summary.json``.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import estimation as est
from . import glauber, harmonic
from . import harness as H
from .potentials import check_low_activity

Z_GATE = 3.0
TIE_SE = 2.0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number} [{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def bundled_config(name: str, seed: int | None = None) -> H.ExperimentConfig:
    text = resources.files("contiflow").joinpath("configs", name).read_text(encoding="utf-8")
    cfg = H.parse_config(text)
    if seed is not None:
        cfg.seed = int(seed)
    return cfg


def decreasing_with_ties(values, ses, k: float = TIE_SE) -> bool:
    """``values[i+1] <= values[i] + k * sqrt(se_i^2 + se_{i+1}^2)`` for every step."""
    v, s = np.asarray(values, float), np.asarray(ses, float)
    return bool(np.all(v[1:] <= v[:-1] + k * np.hypot(s[1:], s[:-1])))


# ---------------------------------------------------------------------------
# 1. exact identities
# ---------------------------------------------------------------------------
def _brute_k_from_u(u_table, n):
    """``k(S) = sum over set partitions of S of prod u(B)``, by explicit enumeration."""
    k = np.zeros(1 << n)
    for S in range(1 << n):
        items = [i for i in range(n) if S >> i & 1]
        if not items:
            k[S] = 1.0
            continue
        tot = 0.0
        for part in harmonic.set_partitions(items):
            prod = 1.0
            for block in part:
                prod *= u_table[sum(1 << i for i in block)]
            tot += prod
        k[S] = tot
    return k


def criterion_1(seed: int) -> CriterionResult:
    rng = H.seed_streams(seed, 0, 1000)
    tol = 1e-10
    worst = {"k_identity": 0.0, "round_trip": 0.0, "partition_oracle": 0.0, "poisson_ursell": 0.0}
    for n in range(0, 7):
        for _ in range(5):
            gamma = rng.random((n, 1)) * 10
            a, b = rng.normal(size=2)

            def phi(x, a=a, b=b):
                return np.sin(a * x[:, 0]) + 0.3 * b * x[:, 0] / 10

            lhs = harmonic.k_transform(lambda eta: harmonic.e_lambda(lambda x: np.expm1(phi(x)), eta),
                                       gamma)
            rhs = math.exp(float(np.sum(phi(gamma)))) if n else 1.0
            worst["k_identity"] = max(worst["k_identity"], abs(lhs - rhs) / abs(rhs))
        if n == 0:
            continue
        # a correlation table: k from random Ursell entries (k(empty) = 1)
        u = rng.normal(scale=0.7, size=1 << n)
        u[0] = 0.0
        k = harmonic.ursell_to_correlation(u)
        u2 = harmonic.correlation_to_ursell(k)
        k2 = harmonic.ursell_to_correlation(u2)
        scale = max(1.0, float(np.max(np.abs(k))))
        worst["round_trip"] = max(worst["round_trip"], float(np.max(np.abs(u2 - u))),
                                  float(np.max(np.abs(k2 - k))) / scale)
        worst["partition_oracle"] = max(worst["partition_oracle"],
                                        float(np.max(np.abs(_brute_k_from_u(u, n) - k))) / scale)
        for z in (0.3, 1.0, 2.5):
            pts = rng.random((n, 1)) * 5
            up = harmonic.correlation_to_ursell(
                harmonic.correlation_table(harmonic.PoissonCorrelation(z), pts))
            sizes = np.array([bin(S).count("1") for S in range(1 << n)])
            hi = up[sizes >= 2]
            if hi.size:
                worst["poisson_ursell"] = max(worst["poisson_ursell"], float(np.max(np.abs(hi))))
            # u^(1) = z
            worst["poisson_ursell"] = max(worst["poisson_ursell"],
                                          float(np.max(np.abs(up[sizes == 1] - z))))
    passed = all(v < tol for v in worst.values())
    rows = [H.Row.exact(f"c1_max_error@{k}", "", v) for k, v in worst.items()]
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f" (tol {tol:g})"
    return CriterionResult(1, "exact identities", passed, detail, worst, rows)


# ---------------------------------------------------------------------------
# 2, 3. Gibbs certification
# ---------------------------------------------------------------------------
def criteria_2_3(cfg: H.ExperimentConfig, bank) -> tuple:
    phi, z = cfg.potential, cfg.z
    la = check_low_activity(phi, z, dim=cfg.torus.dim)
    res = H.pipeline_gibbs_validate(bank, phi, z, cfg.seed)
    zs = {k: r.z_score for k, r in res.gnz.items()}
    ok2 = la.holds and all(abs(v) < Z_GATE for v in zs.values()) and len(bank) >= 10_000
    d2 = (f"low-activity {la.lhs:.4f} < {la.threshold:.4f}; GNZ z = "
          + ", ".join(f"{k}:{v:+.2f}" for k, v in zs.items()) + f"; n={len(bank)}")
    c2 = CriterionResult(2, "GNZ certification", ok2, d2,
                         {"low_activity_lhs": la.lhs, "threshold": la.threshold, "z": zs},
                         [r for r in res.rows if not r.estimator.startswith(("cu_identity", "C_u"))])
    lz = {u: c.z_score for u, c in res.identity.items()}
    c1 = res.C_u[1.0]
    ok3 = all(abs(v) < Z_GATE for v in lz.values()) and c1.value == 1.0 and c1.se == 0.0
    d3 = ("identity z = " + ", ".join(f"u={u:g}:{v:+.2f}" for u, v in lz.items())
          + f"; C_1 = {c1.value!r} (se {c1.se:g})")
    c3 = CriterionResult(3, "C_u identity", ok3, d3,
                         {"z": {str(k): v for k, v in lz.items()}, "C_1": c1.value},
                         [r for r in res.rows if r.estimator.startswith(("cu_identity", "C_u"))])
    return c2, c3


# ---------------------------------------------------------------------------
# 4. dual-generator ratios
# ---------------------------------------------------------------------------
def criterion_4(cfg: H.ExperimentConfig) -> CriterionResult:
    phi = cfg.potential
    r = H.pipeline_dual_ratio(phi, phi, cfg.kernel, cfg.z, cfg.eps, cfg.mc_n, cfg.seed, cfg.torus.dim)
    ok = True
    parts, metrics = [], {}
    for sign, c in (("minus", r.c_minus), ("plus", r.c_plus)):
        ests = [r.ratios[sign][e] for e in cfg.eps]
        gaps = [abs(e.value - c) for e in ests]
        ses = [e.se for e in ests]
        mono = decreasing_with_ties(gaps, ses)
        final = gaps[-1] < Z_GATE * ses[-1]
        ok = ok and mono and final
        quad_gap = abs(r.exact_ratios[sign][cfg.eps[-1]] - c) if r.exact_ratios[sign] else math.nan
        metrics[sign] = {"c": c, "gaps": gaps, "se": ses, "monotone": mono, "final_ok": final,
                         "quadrature_final_gap": quad_gap}
        parts.append(f"{sign}: gaps {', '.join(f'{g:.4f}' for g in gaps)} "
                     f"(final {gaps[-1] / ses[-1]:.1f} SE, quadrature gap {quad_gap:.4f})")
    rows = list(r.rows)
    return CriterionResult(4, "dual-generator ratio limits", ok, "; ".join(parts), metrics, rows)


# ---------------------------------------------------------------------------
# 5. free dynamics scaling limit
# ---------------------------------------------------------------------------
def _free_gates(r: H.FreeTwoTimeResult, eps_list, n):
    final = r.cov[eps_list[-1]]
    z_sim = est.joint_z(final, r.limit)
    z_closed = final.z_against(r.limit_closed_form)
    gaps = [abs(r.cov[e].value - r.limit_closed_form) for e in eps_list]
    ses = [r.cov[e].se for e in eps_list]
    mono = decreasing_with_ties(gaps, ses)
    pmin = min(min(p) for p in r.pvalues.values())
    exact_z = {e: r.cov[e].z_against(r.exact[e]) for e in eps_list if e in r.exact}
    ok = abs(z_sim) < Z_GATE and abs(z_closed) < Z_GATE and mono and pmin > 0.01 and n >= 10_000
    return ok, {"z_vs_limit_sampler": z_sim, "z_vs_closed_form": z_closed, "gaps": gaps,
                "monotone": mono, "min_chi2_p": pmin, "z_vs_torus_exact": exact_z,
                "final": final.value, "final_se": final.se, "limit_sim": r.limit.value}


def criterion_5(cfgs, jobs=None) -> CriterionResult:
    rows, metrics, ok, parts, finals, limits = [], {}, True, [], [], []
    for cfg in cfgs:
        L = cfg.torus.side
        r = H.pipeline_free_two_time(cfg.torus, cfg.kernel, cfg.z, cfg.eps, cfg.snapshots[-1],
                                     cfg.f, cfg.g, cfg.ensemble, cfg.seed, jobs, tag=f"L={L:g}/")
        good, m = _free_gates(r, cfg.eps, cfg.ensemble)
        metrics[f"L={L:g}"] = m
        rows += r.rows
        ok = ok and good
        finals.append(r.cov[cfg.eps[-1]])
        limits.append(r.limit)
        ez = m["z_vs_torus_exact"].get(cfg.eps[-1], math.nan)
        parts.append(f"L={L:g}: Cov(eps={cfg.eps[-1]:g}) = {m['final']:.4f} +/- {m['final_se']:.4f} "
                     f"vs limit {r.limit_closed_form:.4f} (z {m['z_vs_closed_form']:+.1f}, "
                     f"joint z {m['z_vs_limit_sampler']:+.1f}; torus-exact z {ez:+.1f}), "
                     f"monotone={m['monotone']}, min chi2 p={m['min_chi2_p']:.3f}")
    if len(finals) == 2:
        zf = est.joint_z(finals[0], finals[1])
        zl = est.joint_z(limits[0], limits[1])
        consistent = abs(zf) < Z_GATE and abs(zl) < Z_GATE
        metrics["L_consistency"] = {"z_final": zf, "z_limit": zl}
        ok = ok and consistent
        parts.append(f"L-consistency z {zf:+.1f} (eps), {zl:+.1f} (limit)")
    return CriterionResult(5, "free scaling limit", ok, "; ".join(parts), metrics, rows)


# ---------------------------------------------------------------------------
# 6. two constructions
# ---------------------------------------------------------------------------
def criterion_6(cfg: H.ExperimentConfig, jobs=None) -> CriterionResult:
    times = [s for s in cfg.snapshots if s > 0]
    edges = np.linspace(0.0, 2.0, 9)
    r = H.pipeline_two_construction(cfg.torus, cfg.z, 0.5 * cfg.z, cfg.T, times, edges, cfg.f,
                                    cfg.ensemble, cfg.seed, jobs)
    worst = max(abs(v) for v in r.z_scores.values())
    ok = worst < Z_GATE
    return CriterionResult(6, "two-construction agreement", ok,
                           f"{len(r.z_scores)} joint z-scores, max |z| = {worst:.2f}",
                           {"z": r.z_scores}, r.rows)


# ---------------------------------------------------------------------------
# 7. generator convergence
# ---------------------------------------------------------------------------
def criterion_7(cfg: H.ExperimentConfig, bank) -> CriterionResult:
    consts, _ = H.estimate_constants(cfg, samples=bank, source="gibbs")
    r = H.pipeline_generator_gap(bank, cfg.potential, cfg.z, cfg.u, cfg.v, cfg.kernel, cfg.eps, cfg.f,
                            consts["C_u"].value, consts["C_v"].value)
    vals = [r.gap_sq[e].value for e in cfg.eps]
    ses = [r.gap_sq[e].se for e in cfg.eps]
    mono = decreasing_with_ties(vals, ses)
    ratio = r.ratio[cfg.eps[-1]]
    below = ratio.value < cfg.threshold
    ok = mono and below
    detail = (f"E|L_eps F - L_0 F|^2 = {', '.join(f'{v:.5f}' for v in vals)}; "
              f"final ratio to E|L_0 F|^2 = {ratio.value:.4f} +/- {ratio.se:.4f} "
              f"(threshold {cfg.threshold:g}); decreasing={mono}; C_0 = {consts['C_u'].value:.4f}")
    rows = list(r.rows) + [H.Row.of("c7_C_0", "", consts["C_u"])]
    return CriterionResult(7, "generator convergence", ok, detail,
                           {"gap_sq": vals, "se": ses, "ratio": ratio.value, "ratio_se": ratio.se,
                            "monotone": mono, "threshold": cfg.threshold}, rows)


# ---------------------------------------------------------------------------
# 8. limit-dynamics stationarity
# ---------------------------------------------------------------------------
def criterion_8(cfg: H.ExperimentConfig, bank, jobs=None) -> CriterionResult:
    consts, _ = H.estimate_constants(cfg, samples=bank, source="gibbs")
    cu, cv = consts["C_u"].value, consts["C_v"].value
    starts = bank[::2][:cfg.ensemble]
    edges = np.linspace(0.0, 2.0, 9)
    lp = glauber.GlauberParams.interacting(cfg.torus, cfg.potential, cfg.z, cfg.u, cfg.v, cu, cv)
    r = H.pipeline_glauber_stationarity(starts, lp, cfg.T, 12, edges, cfg.seed, jobs)
    worst = float(np.max(np.abs(r.z_scores)))
    ok = worst < Z_GATE
    # diagnostic only: the other death pairing
    lp2 = glauber.GlauberParams.interacting(cfg.torus, cfg.potential, cfg.z, cfg.u, cfg.v, cu, cv,
                                            death_pairing="same")
    r2 = H.pipeline_glauber_stationarity(starts, lp2, cfg.T, 12, edges, cfg.seed, jobs,
                                         tag="swapped_pairing/")
    worst2 = float(np.max(np.abs(r2.z_scores)))
    detail = (f"density half-diff {r.density_diff.value:+.5f} +/- {r.density_diff.se:.5f}; "
              f"max |z| over density and {len(edges) - 1} u2 shells = {worst:.2f} "
              f"(n={len(starts)}); swapped pairing (diagnostic) max |z| = {worst2:.2f}, "
              f"density drift z {r2.z_scores[0]:+.2f}")
    rows = list(r.rows) + list(r2.rows) + [H.Row.of("c8_C_u", "", consts["C_u"]),
                                           H.Row.of("c8_C_v", "", consts["C_v"])]
    return CriterionResult(8, "limit-dynamics stationarity", ok, detail,
                           {"z": r.z_scores.tolist(), "swapped_z": r2.z_scores.tolist()}, rows)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
def run_acceptance(seed: int = 42, out_dir=None, jobs: int | None = None, only=None,
                   echo=print) -> list:
    """Run criteria 1-8 (or the subset ``only``); returns their results in order."""
    only = set(only) if only else set(range(1, 9))
    results = []

    def timed(fn, *a):
        t0 = time.perf_counter()
        out = fn(*a)
        dt = time.perf_counter() - t0
        for r in (out if isinstance(out, tuple) else (out,)):
            r.seconds = dt
            if r.number in only:
                results.append(r)
                if echo:
                    echo(r.line())
        return out

    if 1 in only:
        timed(criterion_1, seed)
    bank = None
    gcfg = bundled_config("gibbs_validate.ini", seed)
    if only & {2, 3, 7, 8}:
        t0 = time.perf_counter()
        bank = H.gibbs_bank(gcfg.potential, gcfg.z, gcfg.torus, gcfg.ensemble, gcfg.seed,
                            gcfg.gibbs_chains, jobs)
        if echo:
            echo(f"# Gibbs bank: {len(bank)} samples in {time.perf_counter() - t0:.1f} s")
    if only & {2, 3}:
        timed(criteria_2_3, gcfg, bank)
    if 4 in only:
        timed(criterion_4, bundled_config("theorem1_poisson.ini", seed))
    if 5 in only:
        timed(criterion_5, [bundled_config("free_two_time.ini", seed),
                            bundled_config("free_two_time_L40.ini", seed)], jobs)
    if 6 in only:
        timed(criterion_6, bundled_config("two_construction.ini", seed), jobs)
    if 7 in only:
        timed(criterion_7, bundled_config("theorem3_generator.ini", seed), bank)
    if 8 in only:
        timed(criterion_8, bundled_config("glauber_stationarity.ini", seed), bank, jobs)
    results.sort(key=lambda r: r.number)
    if out_dir is not None:
        write_outputs(results, out_dir, seed)
    return results


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def write_outputs(results, out_dir, seed: int) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in results:
        rows.append(H.Row.exact(f"criterion_{r.number}_pass", "", float(r.passed)))
        rows += [H.Row(f"c{r.number}/{x.estimator}", x.params_hash, x.value, x.se, x.n) for x in r.rows]
    digest = H.write_csv(rows, out / "acceptance.csv")
    summary = {"seed": seed, "acceptance_csv_sha256": digest,
               "criteria": [{"number": r.number, "name": r.name, "passed": r.passed,
                             "detail": r.detail, "seconds": round(r.seconds, 2),
                             "metrics": _jsonable(r.metrics)} for r in results]}
    (out / "acceptance_summary.json").write_text(json.dumps(summary, indent=2) + "\n",
                                                 encoding="utf-8")
    return summary

