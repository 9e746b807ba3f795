"""End-to-end runs: design, sweeps, Monte-Carlo simulation, audits.

Functions here return plain rows and report dictionaries; writing them to
disk is the job of :mod:`estbeam.cli`.
"""

from __future__ import annotations

import dataclasses
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import conic
from .array import ArrayGeometry, steering_derivative, steering_vector, z1
from .crb import crb_phi_closed_form, crb_phi_oracle
from .design import (BeamformerSet, DesignConstraints, SdrSolution, beampattern_at,
                     build_benchmark_problem, build_sdr_problem, coverage_margin,
                     extract_rank_one, sinr, solve_benchmark, solve_sdr)
from .echo import (DirectionEstimator, SimConfig, observation_params, synthesize_echo,
                   synthesize_tx)
from .errors import (DegenerateBeampattern, EstbeamError, ExtractionFailed, InfeasibleDesign,
                     SingularEfim, SolverFailure)
from .geometry import LosPartition, compute_los_partition, visibility
from .scenario import CRB_MIN, Scenario

#: Users added one at a time by the ``c`` sweep.
USER_ANGLE_POOL_DEG = (-60.0, -35.0, 35.0, 60.0, 80.0, -80.0, 20.0, -20.0)
SWEEP_AXES = ("n_t", "c", "gamma_db", "pt_dbw")

SWEEP_COLUMNS = ["axis", "value", "variant", "status", "crb_rad2", "crb_db", "crb_sdr_rad2",
                 "min_sinr_db", "sinr_margin_db", "power_w", "coverage_margin", "iterations",
                 "provenance", "w_file"]
SIM_COLUMNS = ["run", "phi_hat_rad", "error_rad"]
CONTOUR_COLUMNS = ["u_rad", "x_local_m", "y_local_m", "x_global_m", "y_global_m", "visible"]
W_COLUMNS_PREFIX = "w"


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def partition_for(scenario: Scenario) -> LosPartition:
    return compute_los_partition(scenario.contour(), scenario.pose(), scenario.K,
                                 scenario.raw["sensing"]["los_samples"])


def audit_sdr(sdr: SdrSolution, partition: LosPartition, geometry: ArrayGeometry,
              constraints: DesignConstraints, coefficient: str) -> Dict[str, float]:
    """Re-evaluate every relaxed-program constraint from the returned matrices.

    Values are violations (positive means violated): power relative to
    ``P_t``, SINR constraints scaled by ``1 + |terms|``, the most negative
    eigenvalue of each ``P_k`` block scaled by its norm, and the coverage
    shortfall ``max - 2 min`` relative to ``max``.
    """
    R_x = sdr.R_x
    out: Dict[str, float] = {}
    out["power"] = (float(np.trace(R_x).real) - constraints.P_t) / constraints.P_t
    worst_sinr = -math.inf
    for c in range(constraints.C):
        h = constraints.channels.h[c]
        own = float(np.real(h.conj() @ sdr.R_c[c] @ h))
        tot = float(np.real(h.conj() @ R_x @ h))
        sig2 = float(constraints.channels.sigma2[c])
        viol = (tot + sig2 - (1.0 + 1.0 / constraints.Gamma) * own) / (1.0 + abs(tot) + abs(own) + sig2)
        worst_sinr = max(worst_sinr, viol)
    out["sinr"] = worst_sinr if constraints.C else 0.0
    a = steering_vector(geometry.N_t, partition.phi).reshape(partition.K, -1)
    ad = steering_derivative(geometry.N_t, partition.phi).reshape(partition.K, -1)
    worst_pk = -math.inf
    for k in range(partition.K):
        aRa = float(np.real(a[k].conj() @ R_x @ a[k]))
        adRad = float(np.real(ad[k].conj() @ R_x @ ad[k]))
        adRa = float(np.real(ad[k].conj() @ R_x @ a[k]))
        if coefficient == "z1":
            ck = float(z1(geometry.N_r, partition.phi[k]))
        else:
            ck = float(np.vdot(ad[k], ad[k]).real / geometry.N_r)
        P = np.array([[ck * aRa + adRad - sdr.t[k], adRa], [adRa, aRa]])
        lam = np.linalg.eigvalsh(P)
        worst_pk = max(worst_pk, -lam[0] / (1.0 + np.abs(lam).max()))
    out["pk"] = worst_pk
    p = beampattern_at(R_x, partition.phi)
    out["coverage"] = (p.max() - 2.0 * p.min()) / p.max() if constraints.coverage_enabled else 0.0
    return out


def _solver_summary(sol: conic.ConicSolution) -> Dict[str, Any]:
    return {"status": sol.status, "iterations": sol.iterations,
            "primal_residual": sol.primal_residual, "dual_residual": sol.dual_residual,
            "duality_gap": sol.duality_gap}


def _certificate_summary(sol: Optional[conic.ConicSolution], problem) -> Dict[str, Any]:
    if sol is None or sol.certificate is None:
        return {}
    rel, const = sol.certificate.check(problem)
    active = sorted(((abs(v), k) for k, v in sol.certificate.multipliers.items() if v), reverse=True)
    return {"certificate_residual": rel, "certificate_constant": const,
            "certificate_valid": sol.certificate.is_valid(problem, 1e-5),
            "certificate_main_constraints": [k for _, k in active[:5]]}


def run_algorithm_1(scenario: Scenario, variant: Optional[str] = None,
                    dump_problem: Optional[str] = None) -> Tuple[BeamformerSet, Dict[str, Any]]:
    """Design beamformers for ``scenario`` and report the resulting metrics.

    ``crb-min`` solves the relaxed CRB program; ``bp1``/``bp2`` solve the
    reconstructed beampattern benchmarks.  Both then go through the same
    extraction.  Infeasibility raises :class:`InfeasibleDesign` whose
    ``report`` attribute carries the certificate summary.
    """
    start = time.perf_counter()
    variant = variant or scenario.variant
    d = scenario.raw["design"]
    partition = partition_for(scenario)
    geometry = scenario.geometry()
    constraints = scenario.constraints()
    params = scenario.sensing_params()
    if variant == CRB_MIN:
        problem = build_sdr_problem(partition, geometry, constraints, d["pk_coefficient"])
    else:
        problem = build_benchmark_problem(variant, scenario.pose().phi_o, geometry, constraints,
                                          d["beamwidth_deg"], d["grid_step_deg"])
    if dump_problem:
        with open(dump_problem, "w") as fh:
            fh.write(conic.dump_problem(problem))
    try:
        if variant == CRB_MIN:
            sdr = solve_sdr(problem, d["tolerance"], d["max_iterations"])
        else:
            sdr = solve_benchmark(problem, d["tolerance"], d["max_iterations"])
    except InfeasibleDesign as exc:
        exc.report = {"variant": variant, "status": conic.INFEASIBLE,
                      **_certificate_summary(exc.solution, problem)}
        raise
    bf = extract_rank_one(sdr, constraints, partition, geometry, params, d["n_e"], d["seed"],
                          d["randomization"], d["power_fill"])
    R_x = bf.R_x
    s = sinr(bf.W, constraints.channels) if constraints.C else np.zeros(0)
    sinr_db = [_db(v) for v in s]
    crb = crb_phi_closed_form(partition, R_x, params, geometry,
                              scenario.raw["sensing"]["z1_mode"], scenario.pose().varphi)
    try:
        oracle = crb_phi_oracle(partition, scenario.pose(), R_x, params, geometry,
                                scenario.raw["sensing"]["jacobian_mode"],
                                scenario.raw["sensing"]["z1_mode"])
    except EstbeamError:
        oracle = math.nan
    try:
        crb_sdr = crb_phi_closed_form(partition, sdr.R_x, params, geometry,
                                      scenario.raw["sensing"]["z1_mode"], scenario.pose().varphi)
    except EstbeamError:
        crb_sdr = math.nan
    pk_numeric = [float(np.sum(np.abs(steering_derivative(geometry.N_t, f)) ** 2) / geometry.N_r)
                  for f in partition.phi]
    report: Dict[str, Any] = {
        "variant": variant,
        "reconstructed_benchmark": variant != CRB_MIN,
        "status": conic.OPTIMAL,
        "objective": sdr.objective,
        "crb_rad2": crb,
        "crb_db": _db(crb),
        "crb_oracle_rad2": oracle,
        "crb_sdr_rad2": crb_sdr,
        "sinr_db": sinr_db,
        "gamma_db": scenario.raw["users"]["gamma_db"],
        "min_sinr_margin_db": (min(sinr_db) - scenario.raw["users"]["gamma_db"]) if sinr_db else None,
        "power_w": float(np.trace(R_x).real),
        "pt_w": scenario.P_t,
        "coverage_margin": coverage_margin(R_x, partition),
        "provenance": bf.provenance,
        "epoch": bf.epoch,
        "epochs": bf.epochs,
        "epochs_accepted": bf.accepted,
        "epochs_coverage_feasible": bf.coverage_feasible,
        "rank_one": list(sdr.rank_one),
        "rank_profiles": [list(conic.extract_rank_profile(R)[:3]) for R in sdr.R_c],
        "solver": _solver_summary(sdr.conic),
        "pk_coefficient_numeric": pk_numeric,
        "z1_per_subsection": [float(v) for v in z1(geometry.N_r, partition.phi)],
        "partition": {"u_lower_rad": partition.u_lower, "u_upper_rad": partition.u_upper,
                      "l_m": partition.l.tolist(), "phi_rad": partition.phi.tolist(),
                      "d_m": partition.d.tolist()},
    }
    if variant == CRB_MIN:
        report["audit"] = audit_sdr(sdr, partition, geometry, constraints, d["pk_coefficient"])
    report["wall_time_s"] = time.perf_counter() - start
    return bf, report


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def scenario_at(base: Scenario, axis: str, value: float) -> Scenario:
    """``base`` with the swept quantity set to ``value``."""
    if axis == "n_t":
        return base.with_changes(array={"n_t": int(value)})
    if axis == "c":
        C = int(value)
        if C > len(USER_ANGLE_POOL_DEG):
            raise ValueError(f"at most {len(USER_ANGLE_POOL_DEG)} users are available")
        return base.with_changes(users={"angles_deg": list(USER_ANGLE_POOL_DEG[:C])})
    if axis == "gamma_db":
        return base.with_changes(users={"gamma_db": float(value)})
    if axis == "pt_dbw":
        return base.with_changes(power={"pt_dbw": float(value)})
    raise ValueError(f"unknown sweep axis {axis!r}")


def format_value(axis: str, value: float) -> str:
    return str(int(value)) if axis in ("n_t", "c") else repr(float(value))


def _sweep_point(args):
    base_raw, axis, value, variant = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scn = scenario_at(Scenario.from_dict(base_raw), axis, value)
        row: Dict[str, Any] = {"axis": axis, "value": format_value(axis, value),
                               "variant": variant}
        try:
            bf, rep = run_algorithm_1(scn, variant)
        except InfeasibleDesign:
            return {**row, "status": conic.INFEASIBLE}, None
        except (SolverFailure, SingularEfim, DegenerateBeampattern):
            return {**row, "status": conic.NUMERICAL_FAILURE}, None
        except ExtractionFailed:
            return {**row, "status": "extraction-failed"}, None
    s = rep["sinr_db"]
    row.update({"status": rep["status"], "crb_rad2": rep["crb_rad2"], "crb_db": rep["crb_db"],
                "crb_sdr_rad2": rep["crb_sdr_rad2"],
                "min_sinr_db": min(s) if s else math.nan,
                "sinr_margin_db": rep["min_sinr_margin_db"] if s else math.nan,
                "power_w": rep["power_w"], "coverage_margin": rep["coverage_margin"],
                "iterations": rep["solver"]["iterations"], "provenance": rep["provenance"]})
    return row, bf.W


def run_sweep(scenario: Scenario, axis: str, values: Sequence[float],
              variants: Sequence[str] = ("crb-min", "bp1", "bp2"), jobs: int = 1
              ) -> List[Tuple[Dict[str, Any], Optional[np.ndarray]]]:
    """One ``(row, W)`` pair per (value, variant) in axis order.

    Failed points produce a row with their status and no ``W``.  With
    ``jobs > 1`` points run in worker processes; the output order does not
    depend on completion order.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {', '.join(SWEEP_AXES)}")
    if not values:
        raise ValueError("a sweep needs at least one value")
    tasks = [(scenario.to_dict(), axis, v, var) for v in values for var in variants]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


# ---------------------------------------------------------------------------
# Monte-Carlo simulation
# ---------------------------------------------------------------------------

def run_simulation(scenario: Scenario, W: np.ndarray, runs: Optional[int] = None,
                   noise_free: bool = False) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    """Monte-Carlo direction estimation with beamformers ``W``.

    Every run draws its own symbols, gains and noise from a generator seeded
    by ``(sim seed, run)``.
    """
    start = time.perf_counter()
    runs = scenario.raw["sim"]["runs"] if runs is None else runs
    config = scenario.sim_config()
    partition = partition_for(scenario)
    geometry = scenario.geometry()
    pose = scenario.pose()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = observation_params(scenario.sensing_params(), config, warn=False)
    if noise_free:
        params_sim = params.replace(sigma_s2=1e-300)
    else:
        params_sim = params
    grid = scenario.estimator_grid()
    est = DirectionEstimator(scenario.contour(), pose, scenario.K, geometry, params, config, grid,
                             scenario.raw["sensing"]["los_samples"])
    rows = []
    for r in range(runs):
        rng = np.random.default_rng([config.seed, r])
        x = synthesize_tx(W, config, rng)
        obs = synthesize_echo(x, partition, pose, params_sim, geometry, config, rng)
        phi_hat = est.estimate(obs.y, x)
        rows.append({"run": r, "phi_hat_rad": phi_hat, "error_rad": phi_hat - pose.phi_o})
    err = np.array([row["error_rad"] for row in rows])
    crb = crb_phi_closed_form(partition, W @ W.conj().T, params, geometry,
                              scenario.raw["sensing"]["z1_mode"], pose.varphi)
    mse = float(np.mean(err ** 2))
    summary = {"runs": runs, "noise_free": noise_free, "mse_rad2": mse, "crb_rad2": crb,
               "mse_over_crb": mse / crb, "max_abs_error_rad": float(np.abs(err).max()),
               "grid_step_rad": grid[2], "grid_lo_rad": grid[0], "grid_hi_rad": grid[1],
               "grid_edge_hits": int(np.sum(np.abs(err) >= grid[1] - pose.phi_o - 1e-12)),
               "t_s_simulated_s": config.duration, "t_s_scenario_s": scenario.raw["sensing"]["t_s_s"],
               "wall_time_s": time.perf_counter() - start}
    return rows, summary


# ---------------------------------------------------------------------------
# Contour sampling and audits
# ---------------------------------------------------------------------------

def contour_rows(scenario: Scenario, samples: Optional[int] = None) -> List[Dict[str, Any]]:
    from .geometry import contour_point
    samples = samples or scenario.raw["sensing"]["los_samples"]
    model, pose = scenario.contour(), scenario.pose()
    u, pts, vis = visibility(model, pose, samples)
    loc = contour_point(model, u)
    return [{"u_rad": float(u[i]), "x_local_m": float(loc[i, 0]), "y_local_m": float(loc[i, 1]),
             "x_global_m": float(pts[i, 0]), "y_global_m": float(pts[i, 1]),
             "visible": int(vis[i])} for i in range(samples)]


def audit_crb(scenario: Scenario, W: np.ndarray, expected: float) -> Tuple[float, float]:
    """Recompute the closed-form CRB for ``W``; returns ``(value, relative error)``."""
    partition = partition_for(scenario)
    val = crb_phi_closed_form(partition, W @ W.conj().T, scenario.sensing_params(),
                              scenario.geometry(), scenario.raw["sensing"]["z1_mode"],
                              scenario.pose().varphi)
    return val, abs(val - expected) / abs(expected)
