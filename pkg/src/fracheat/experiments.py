"""Named experiments: each writes CSV curves plus one JSON summary into the output directory."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import acceptance
from .config import ExperimentConfig, validate
from .core import build_grid
from .functional import (beta0_power_exponents, beta_emp_slope, ckn_parameters, ckn_ratio,
                         classify_compactness, default_s_list, falsifier_scalings, hardy_ratio,
                         lyapunov_check, nash_ratio, scaling_family, standard_family,
                         super_poincare_empirical)
from .heatkernel import (ground_state_envelope, iu_min_ratio, kernel_eval, resolution_floor, sup_ratio,
                         sup_ratio_fit)
from .io import write_csv, write_json
from .operator import assemble_form
from .riesz import (bootstrap_steps, fit_decay, ground_state_inverse_iteration, ground_state_sandwich,
                    riesz_kernel, riesz_residual)
from .spectral import fit_eigen_growth, heat_trace, solve_spectrum, trace_to_growth
from .stablemc import empirical_compare, simulate_coupled, step_halving_check


def _setup(cfg: ExperimentConfig):
    grid = build_grid(cfg.grid_spec())
    frac = cfg.frac_params()
    w = cfg.weight_spec()
    return grid, frac, w, assemble_form(grid, frac, w)


def _spectrum(cfg, op, k=None):
    k = cfg.solver.k_eigs if k is None else k
    return solve_spectrum(op, k=k, backend=cfg.solver.backend, tol=cfg.solver.tol)


def _t_grid(cfg):
    return np.geomspace(cfg.fit.t_lo, cfg.fit.t_hi, cfg.fit.n_t)


def run_spectrum(cfg: ExperimentConfig, out: Path) -> dict:
    grid, frac, w, op = _setup(cfg)
    spec = _spectrum(cfg, op)
    write_csv(out / "spectrum.csv", ["n", "lambda_n"], [(i + 1, float(l)) for i, l in enumerate(spec.lambdas)])
    summary = {"alpha": frac.alpha, "beta": cfg.weight.beta, "d": grid.d, "R": grid.R, "h": grid.h,
               "n_modes": spec.k}
    n_hi = cfg.fit.n_hi if cfg.fit.n_hi is not None else int(min(100, grid.n // 4))
    if n_hi >= 2 * cfg.fit.n_lo and n_hi <= spec.k:
        fit = fit_eigen_growth(spec, cfg.fit.n_lo, n_hi)
        summary.update(slope=fit.slope, slope_stderr=fit.stderr, ratio_min=fit.ratio_min,
                       ratio_max=fit.ratio_max, window=[fit.n_lo, fit.n_hi])
    else:
        summary.update(slope=None, ratio_min=None, ratio_max=None, window=None,
                       note="grid too small for a growth window")
    if spec.k >= 3:
        ts = _t_grid(cfg)
        tr = heat_trace(spec, ts)
        write_csv(out / "trace.csv", ["t", "trace"], zip(ts, tr))
        v = trace_to_growth(spec, ts, tr)
        summary.update(trace_theta=v.theta, trace_growth_verdict=v.verdict, trace_growth_gap=v.relative_gap)
    return summary


def run_groundstate(cfg: ExperimentConfig, out: Path) -> dict:
    grid, frac, w, op = _setup(cfg)
    lam, phi = ground_state_inverse_iteration(op)
    dense = solve_spectrum(op, k=min(2, op.n), tol=cfg.solver.tol)
    res = riesz_residual(phi, lam, riesz_kernel(op))
    env = (1.0 + grid.radii) ** (frac.alpha - grid.d)
    cols = [f"x{k + 1}" for k in range(grid.d)]
    write_csv(out / "groundstate.csv", cols + ["phi", "envelope", "riesz_residual"],
              [(*grid.x[i], phi[i], env[i], res.profile[i]) for i in range(grid.n)])
    k, flag = bootstrap_steps(frac.alpha, cfg.weight.beta, grid.d)
    try:
        decay = fit_decay(phi, grid, (cfg.fit.r_lo, cfg.fit.r_hi)).slope
    except ValueError as exc:
        decay = None
        note = str(exc)
    else:
        note = None
    up, lo, prod = ground_state_sandwich(phi, grid, frac.alpha)
    return {"lambda1": lam, "lambda1_dense": float(dense.lambdas[0]),
            "lambda1_gap": abs(lam - dense.lambdas[0]) / dense.lambdas[0],
            "decay_slope": decay, "decay_note": note, "k": k, "log_flag": flag,
            "riesz_interior_residual": res.interior_max, "sandwich_product": prod,
            "phi_positive": bool(np.all(phi > 0))}


def run_heatkernel(cfg: ExperimentConfig, out: Path) -> dict:
    grid, frac, w, op = _setup(cfg)
    spec = _spectrum(cfg, op)
    phi = spec.phis[:, 0]
    beta = cfg.weight.beta
    if beta >= 2 * frac.alpha:
        V, regime, target = ground_state_envelope(phi, frac.alpha, beta), "phi-envelope", -grid.d / frac.alpha
    else:
        V = (1.0 + grid.radii) ** (frac.alpha - grid.d)
        regime = "power-envelope"
        target = -(grid.d + beta - 2 * frac.alpha) / (beta - frac.alpha)
    ts = _t_grid(cfg)
    slices = [kernel_eval(spec, t) for t in ts]
    rows = [(s.t, sup_ratio(s, V), iu_min_ratio(s, phi), heat_trace(spec, s.t)) for s in slices]
    write_csv(out / "heatkernel.csv", ["t", "m_t", "min_iu_ratio", "trace"], rows)
    floor = resolution_floor(grid.h, frac.alpha, cfg.fit.floor_factor)
    summary = {"regime": regime, "expected_slope": target, "resolution_floor": floor,
               "floor_factor": cfg.fit.floor_factor}
    # raises ResolutionError (exit 3) when the window sits below the floor
    fit = sup_ratio_fit(slices, V, (cfg.fit.t_lo, cfg.fit.t_hi), h=grid.h, alpha=frac.alpha,
                        floor_factor=cfg.fit.floor_factor)
    summary.update(slope=fit.slope, slope_stderr=fit.stderr)
    return summary


def run_inequalities(cfg: ExperimentConfig, out: Path) -> dict:
    grid, frac, w, op = _setup(cfg)
    spec = _spectrum(cfg, op)
    beta = cfg.weight.beta
    fam, sc = standard_family(grid, seed=cfg.mc.seed), scaling_family(grid)
    if beta >= 2 * frac.alpha:
        tau, gamma = 2.0 * grid.d / (grid.d - frac.alpha), 0.0  # unweighted fractional Sobolev
    else:
        tau, gamma = ckn_parameters(frac.alpha, beta, grid.d)
    report = []
    for name, full, scale in (("hardy", hardy_ratio(op, fam), hardy_ratio(op, sc)),
                              ("nash", nash_ratio(op, fam), nash_ratio(op, sc)),
                              ("ckn", ckn_ratio(op, fam, tau, gamma), ckn_ratio(op, sc, tau, gamma))):
        report.append({"name": name, "params": {"tau": tau, "gamma": gamma} if name == "ckn" else {},
                       "max_ratio": full.max_ratio, "evidence": {"scaling_spread": scale.spread()}})
    theta = min(beta / (2 * frac.alpha), 1.0)
    ts = [0.1, 0.5, 1.0, 2.0]
    viol = lyapunov_check(op, spec, spec.phis[:, 0] ** theta, ts)
    report.append({"name": "lyapunov", "params": {"theta": theta, "t": ts}, "max_ratio": viol,
                   "evidence": {}})
    s = default_s_list(op, fam)
    curve = super_poincare_empirical(op, fam, s)
    write_csv(out / "beta_emp.csv", ["s", "beta_emp"], zip(curve.s, curve.beta))
    pred = beta0_power_exponents(frac.alpha, beta, grid.d)
    report.append({"name": "super_poincare", "params": {"n_s": len(s)},
                   "max_ratio": float(curve.beta.max()),
                   "evidence": {"slope": beta_emp_slope(curve), "bound_slope": pred["bound"] + 0.3,
                                "beta0_exponent": pred["sum"],
                                "nonincreasing": bool(np.all(np.diff(curve.beta) <= 0))}})
    return {"checkers": report}


def run_classify(cfg: ExperimentConfig, out: Path) -> dict:
    v = classify_compactness(cfg.weight_spec(), cfg.frac_params())
    return {"verdict": v.verdict, "evidence": v.evidence}


def run_falsify(cfg: ExperimentConfig, out: Path) -> dict:
    grid, frac, w, op = _setup(cfg)
    fs = falsifier_scalings(op, cfg.fit.l_list)
    write_csv(out / "falsify.csv", ["l", "mu_f2", "energy", "mu_f_psi_sq"],
              zip(fs.ls, fs.mass, fs.energy, fs.psi_mass))
    verdict = classify_compactness(w, frac).verdict
    return {"mass_slope": fs.mass_slope, "energy_slope": fs.energy_slope, "psi_slope": fs.psi_slope,
            "expected_slope": grid.d - frac.alpha, "classifier_verdict": verdict}


def run_mc_compare(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    grid, frac, w, op = _setup(cfg)
    spec = _spectrum(cfg, op)
    i0 = grid.locate(np.full(grid.d, cfg.mc.x0))
    t = float(cfg.mc.t_points[-1])
    fine, coarse = simulate_coupled(grid.x[i0], frac, w, grid.box_half_width, cfg.mc.t_points,
                                    cfg.mc.n_paths, cfg.mc.ds, cfg.mc.seed, workers=workers)
    cmp = empirical_compare(coarse, spec, grid, op.mu, i0, t)
    hc = step_halving_check(fine, coarse, t, cmp.edges)
    e = cmp.edges
    if grid.d == 1:
        centers = 0.5 * (e[:-1] + e[1:])
    else:
        c1 = 0.5 * (e[:-1] + e[1:])
        centers = [f"{a:.4g}:{b:.4g}" for a in c1 for b in c1]
    write_csv(out / "mc_compare.csv", ["cell_center", "empirical_mass", "spectral_mass", "stderr"],
              zip(centers, cmp.empirical, cmp.spectral, cmp.stderr))
    return {"tv_distance": cmp.tv, "tv_stderr": cmp.tv_stderr, "n_paths": cmp.n_paths,
            "survived": cmp.n_survived, "ds": cfg.mc.ds, "seed": cfg.mc.seed, "t": t,
            "survival_empirical": cmp.survival_emp, "survival_spectral": cmp.survival_spec,
            "survival_stderr": cmp.survival_stderr, "halving_max_z": hc.max_z}


def run_report_all(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    cache = acceptance.ReferenceCache(alpha=cfg.frac.alpha, d=cfg.grid.d, R=cfg.grid.R, n=cfg.grid.n,
                                      mc_paths=cfg.mc.n_paths, mc_ds=cfg.mc.ds, mc_seed=cfg.mc.seed,
                                      workers=workers)
    results = acceptance.run_all(cache)
    write_csv(out / "verdicts.csv", ["criterion", "name", "verdict", "measured"],
              [(r.number, r.name, "PASS" if r.passed else "FAIL", r.measured) for r in results])
    return {"verdicts": [{"criterion": r.number, "name": r.name, "passed": r.passed,
                          "measured": r.measured, "details": r.details} for r in results],
            "n_passed": sum(r.passed for r in results), "n_total": len(results)}


RUNNERS = {"spectrum": run_spectrum, "groundstate": run_groundstate, "heatkernel": run_heatkernel,
           "inequalities": run_inequalities, "classify": run_classify, "falsify": run_falsify,
           "mc-compare": run_mc_compare, "report-all": run_report_all}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Validate, run and write ``<name>.json``; returns the summary payload."""
    validate(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fn = RUNNERS[cfg.name]
    summary = fn(cfg, out, workers=workers) if cfg.name in ("mc-compare", "report-all") else fn(cfg, out)
    payload = {"experiment": cfg.name, "config": cfg.to_dict(), "summary": summary}
    write_json(out / f"{cfg.name}.json", payload)
    return payload
