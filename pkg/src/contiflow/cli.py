"""Command-line interface (``contiflow`` / ``python -m contiflow``).

Exit codes: 0 success, 2 invalid configuration, 3 Monte Carlo tolerance
unmet, 4 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import estimation as est
from . import glauber, kawasaki
from . import harness as H
from .config_space import Configuration, sample_poisson
from .potentials import (KawasakiRateParams, check_condition_12, check_low_activity,
                         check_stability)


def _common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="INI experiment file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default CONTIFLOW_JOBS or 1)")
    p.add_argument("--tolerance", type=float, default=None, help="max relative SE before exit 3")


def _load(args) -> H.ExperimentConfig:
    cfg = H.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _out(args, cfg, default):
    return Path(args.out or cfg.output or default)


def _finish(rows, out: Path, cfg, tol, extra_outputs=None) -> int:
    man = H.RunManifest(cfg.config_hash, __version__,
                        {"master": cfg.seed, "trajectories": cfg.ensemble,
                         "construction": "Philox(SeedSequence([seed, stream, index]))"}, H._now())
    man.outputs["results.csv"] = H.write_csv(rows, out / "results.csv")
    for name in extra_outputs or ():
        man.outputs[name] = H.file_digest(out / name)
    man.flagged = H._flag_rows(rows, tol if tol is not None else cfg.tolerance)
    man.status = "tolerance-unmet" if man.flagged else "ok"
    man.finished = H._now()
    man.write(out / "manifest.json")
    _report(rows, man)
    return H.EXIT_TOLERANCE if man.flagged else H.EXIT_OK


def _report(rows, man):
    for r in rows:
        print(f"{r.estimator:48s} {r.value: .6g} +/- {r.se:.3g} (n={r.n})")
    if man.flagged:
        print(f"tolerance unmet for {len(man.flagged)} rows: {', '.join(man.flagged)}",
              file=sys.stderr)


# --- simulate-kawasaki -------------------------------------------------------------
def _kawasaki_chunk(args):
    cfg, eps, stream, a, b = args
    phi = cfg.potential
    params = (KawasakiRateParams.symmetric(phi, cfg.u, cfg.v, cfg.kernel, eps, cfg.z)
              if not phi.is_zero else KawasakiRateParams(phi, phi, cfg.kernel, eps))
    ir = phi.range or None
    out = []
    for i in range(a, b):
        rng = H.seed_streams(cfg.seed, i, stream)
        g0 = sample_poisson(cfg.z, cfg.torus, rng, interaction_range=ir)
        snaps = kawasaki.run(g0, params, cfg.T, cfg.snapshots, rng)
        out.append([len(s) / cfg.torus.volume for s in snaps]
                   + [est.linear_statistic(s, cfg.f) for s in snaps])
    return np.array(out)


def cmd_simulate_kawasaki(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg, "out/kawasaki")
    ph = H.params_hash(cfg.raw)
    rows, m = [], len(cfg.snapshots)
    for j, eps in enumerate(cfg.eps):
        chunks = [(cfg, eps, 600 + j, a, b) for a, b in H._chunks(cfg.ensemble)]
        d = np.vstack(H.pmap(_kawasaki_chunk, chunks, args.jobs))
        for k, t in enumerate(cfg.snapshots):
            rows.append(H.Row.of(f"density@eps={eps:g};t={t:g}", ph, est.mean_estimate(d[:, k])))
            rows.append(H.Row.of(f"linear_f@eps={eps:g};t={t:g}", ph, est.mean_estimate(d[:, m + k])))
        if m >= 2 and cfg.ensemble >= 30:
            rows.append(H.Row.of(f"two_time_covariance@eps={eps:g}", ph,
                                 est.covariance_estimate(d[:, m], d[:, 2 * m - 1])))
    return _finish(rows, out, cfg, args.tolerance)


# --- simulate-glauber ----------------------------------------------------------------
def _glauber_chunk(args):
    cfg, lp, edges, stream, a, b = args
    out = []
    for i in range(a, b):
        rng = H.seed_streams(cfg.seed, i, stream)
        g0 = sample_poisson(cfg.z, cfg.torus, rng, interaction_range=(lp.phi.range or None) if lp.phi else None)
        snaps = glauber.run(g0, lp, cfg.T, cfg.snapshots, rng)
        row = [len(s) / cfg.torus.volume for s in snaps]
        row += est.shell_u2(snaps[-1], edges).tolist()
        out.append(row)
    return np.array(out)


def cmd_simulate_glauber(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg, "out/glauber")
    if args.mode == "free":
        lp = glauber.GlauberParams.free(cfg.torus, cfg.z)
    else:
        if not args.constants:
            raise H.ConfigError("constants", "interacting mode needs --constants PATH")
        c = H.load_constants(args.constants)
        lp = glauber.GlauberParams.interacting(cfg.torus, cfg.potential, cfg.z, cfg.u, cfg.v,
                                               c["C_u"].value, c["C_v"].value)
    edges = np.linspace(0.0, min(2.0, cfg.torus.side / 2), 9)
    ph = H.params_hash({"cfg": cfg.raw, "mode": args.mode, "C": [lp.C_u, lp.C_v]})
    chunks = [(cfg, lp, edges, 700, a, b) for a, b in H._chunks(cfg.ensemble)]
    d = np.vstack(H.pmap(_glauber_chunk, chunks, args.jobs))
    m = len(cfg.snapshots)
    rows = [H.Row.of(f"density@t={t:g}", ph, est.mean_estimate(d[:, k]))
            for k, t in enumerate(cfg.snapshots)]
    for i in range(len(edges) - 1):
        rows.append(H.Row.of(f"u2@t={cfg.snapshots[-1]:g};r={edges[i]:g}-{edges[i + 1]:g}", ph,
                             est.mean_estimate(d[:, m + i])))
    return _finish(rows, out, cfg, args.tolerance)


# --- sample-gibbs / estimate-constants ------------------------------------------------
def write_bank(samples, path, cfg) -> None:
    """Newline-delimited JSON: a header object, then one ``positions`` list per sample."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"format": "contiflow-gibbs-bank", "version": 1,
                             "config_hash": cfg.config_hash, "dim": cfg.torus.dim,
                             "L": cfg.torus.side, "z": cfg.z, "n": len(samples)}) + "\n")
        for i, s in enumerate(samples):
            fh.write(json.dumps({"index": i, "positions": s.positions.tolist()}) + "\n")


def read_bank(path, cfg) -> list:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "contiflow-gibbs-bank":
            raise H.ConfigError("bank", f"{path} is not a Gibbs bank file")
        if header["L"] != cfg.torus.side or header["dim"] != cfg.torus.dim:
            raise H.ConfigError("bank", "bank torus does not match the configuration")
        ir = cfg.potential.range or None
        return [Configuration(cfg.torus, np.asarray(json.loads(line)["positions"], float)
                              .reshape(-1, cfg.torus.dim), interaction_range=ir)
                for line in fh if line.strip()]


def cmd_sample_gibbs(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg, "out/gibbs")
    out.mkdir(parents=True, exist_ok=True)
    bank = H.gibbs_bank(cfg.potential, cfg.z, cfg.torus, cfg.ensemble, cfg.seed,
                        cfg.gibbs_chains, args.jobs)
    write_bank(bank, out / "bank.ndjson", cfg)
    ph = H.params_hash(cfg.raw)
    rows = [H.Row.of("gibbs_density", ph, est.density(bank))]
    return _finish(rows, out, cfg, args.tolerance, ["bank.ndjson"])


def cmd_estimate_constants(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg, "out/constants")
    out.mkdir(parents=True, exist_ok=True)
    bank = read_bank(args.bank, cfg) if args.bank else None
    consts, meta = H.estimate_constants(cfg, samples=bank, jobs=args.jobs, source=args.source)
    (out / "constants.json").write_text(H.constants_to_json(consts, meta), encoding="utf-8")
    tol = args.tolerance if args.tolerance is not None else cfg.tolerance
    bad = [k for k, e in consts.items()
           if tol is not None and e.se > tol * max(abs(e.value), 1e-12)]
    for k, e in consts.items():
        print(f"{k:8s} {e.value:.8g} +/- {e.se:.3g} (n={e.n})")
    print(f"wrote {out / 'constants.json'}")
    if bad:
        print(f"relative SE above tolerance {tol:g} for: {', '.join(bad)}", file=sys.stderr)
        return H.EXIT_TOLERANCE
    return H.EXIT_OK


# --- scaling-sweep / check-conditions / harmonic-selftest / accept ---------------------
def cmd_scaling_sweep(args) -> int:
    cfg = _load(args)
    man, rows, code = H.run_experiment(cfg, args.out, args.jobs, args.tolerance)
    _report(rows, man)
    return code


def cmd_check_conditions(args) -> int:
    cfg = _load(args)  # raises ConfigError (exit 2) on the first failed invariant
    phi, t = cfg.potential, cfg.torus
    print(f"kind {cfg.kind}; torus d={t.dim} L={t.side:g}; potential {phi!r}")
    print(f"range<L/2        ok (R={phi.range:g})")
    if phi.is_zero:
        print("potential is zero: stability, low-activity and integrability hold trivially")
        return H.EXIT_OK
    B = phi.stability_B_dim(t.dim) if hasattr(phi, "stability_B_dim") else phi.stability_B
    s = check_stability(phi, B, 200, np.random.default_rng(0), dim=t.dim)
    la = check_low_activity(phi, cfg.z, B, dim=t.dim)
    c12 = check_condition_12(phi, cfg.u, cfg.v, dim=t.dim)
    print(f"stability        {'ok' if s.passed else 'FAIL'} (B={B:g}, worst margin {s.worst_margin:.3g})")
    print(f"low-activity     {'ok' if la.holds else 'FAIL'} ({la.lhs:.4g} < {la.threshold:.4g})")
    print(f"integrability    {'ok' if c12.holds else 'FAIL'} (u={cfg.u:g}, v={cfg.v:g}, "
          f"integral {c12.value:.4g})")
    return H.EXIT_OK


def cmd_harmonic_selftest(args) -> int:
    from .acceptance import criterion_1
    r = criterion_1(args.seed if args.seed is not None else 42)
    print(r.line())
    return H.EXIT_OK if r.passed else H.EXIT_ACCEPTANCE


def cmd_accept(args) -> int:
    from .acceptance import run_acceptance
    seed = args.seed if args.seed is not None else 42
    only = [int(x) for x in args.only.split(",")] if args.only else None
    out = args.out or "out/accept"
    results = run_acceptance(seed, out, args.jobs, only)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed; outputs in {out}")
    return H.EXIT_OK if passed == len(results) else H.EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contiflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"contiflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate-kawasaki", help="hopping dynamics at each eps of the config")
    _common(s)
    s.set_defaults(func=cmd_simulate_kawasaki)
    s = sub.add_parser("simulate-glauber", help="birth-death limit dynamics")
    _common(s)
    s.add_argument("--mode", choices=("free", "interacting"), default="free")
    s.add_argument("--constants", default=None, help="constants JSON from estimate-constants")
    s.set_defaults(func=cmd_simulate_glauber)
    s = sub.add_parser("sample-gibbs", help="write a Gibbs sample bank (ndjson)")
    _common(s)
    s.set_defaults(func=cmd_sample_gibbs)
    s = sub.add_parser("estimate-constants", help="C_u, C_v, c_minus, c_plus, k1 as JSON")
    _common(s)
    s.add_argument("--source", choices=("gibbs", "poisson"), default=None)
    s.add_argument("--bank", default=None, help="reuse a bank written by sample-gibbs")
    s.set_defaults(func=cmd_estimate_constants)
    s = sub.add_parser("scaling-sweep", help="run the experiment kind named in the config")
    _common(s)
    s.set_defaults(func=cmd_scaling_sweep)
    s = sub.add_parser("check-conditions", help="validate a config and print the checks")
    _common(s)
    s.set_defaults(func=cmd_check_conditions)
    s = sub.add_parser("harmonic-selftest", help="exact combinatorial identities")
    _common(s, config_required=False)
    s.set_defaults(func=cmd_harmonic_selftest)
    s = sub.add_parser("accept", help="run the acceptance suite")
    _common(s, config_required=False)
    s.add_argument("--only", default=None, help="comma-separated criterion numbers")
    s.set_defaults(func=cmd_accept)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except H.ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return H.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
