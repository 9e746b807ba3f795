"""Command-line interface.

Exit codes: 0 success, 2 infeasible design, 3 numerical failure (including
failed audits), 4 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import pipeline
from .crb import crb_phi_oracle, compute_Xk, evaluate_crb
from .design import beampattern_at
from .errors import (DelayOverflow, EstbeamError, ExtractionFailed, InfeasibleDesign,
                     NoVisibleContour, ScenarioError)
from .geometry import APPROXIMATE, EXACT
from .output import (emit_plot_data, read_csv, read_w_csv, write_csv, write_json, write_w_csv)
from .scenario import CRB_MIN, VARIANTS, Scenario

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3
EXIT_BAD_INPUT = 4

AUDIT_TOLERANCE = 1e-9

log = logging.getLogger("estbeam")


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--scenario", metavar="PATH", default=default,
                        help="scenario JSON file (defaults apply to missing fields)")
    parser.add_argument("--seed", type=int, default=default,
                        help="override the design and simulation seeds")
    parser.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS if suppress else ".",
                        help="output directory (created if missing)")
    parser.add_argument("--tolerance", type=float, default=default,
                        help="conic solver tolerance")
    parser.add_argument("--dump-problem", metavar="PATH", default=default,
                        help="write the conic program to PATH as plain text")
    parser.add_argument("--no-plots", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="estbeam",
        description="CRB-driven transmit beamforming for sensing an extended target")
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("crb", parents=[common], help="direction bound for a beamformer")
    p.add_argument("--w", metavar="PATH", help="beamformer CSV (default: isotropic P_t/N_t I)")

    p = sub.add_parser("design", parents=[common], help="design beamformers")
    p.add_argument("--variant", choices=VARIANTS, help="design variant")
    p.add_argument("--n-e", type=int, help="randomization epochs")

    p = sub.add_parser("sweep", parents=[common], help="sweep one scenario quantity")
    p.add_argument("--axis", choices=pipeline.SWEEP_AXES, required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo direction estimation")
    p.add_argument("--runs", type=int)
    p.add_argument("--w", metavar="PATH", help="beamformer CSV (default: run the CRB design)")
    p.add_argument("--noise-free", action="store_true")
    p.add_argument("--grid-halfwidth-deg", type=float)
    p.add_argument("--grid-step-deg", type=float)

    p = sub.add_parser("contour", parents=[common], help="sample the contour and its visibility")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("audit", parents=[common], help="re-derive CRBs from stored beamformers")
    p.add_argument("--sweep-csv", metavar="PATH", help="sweep CSV written by the sweep command")
    p.add_argument("--design-json", metavar="PATH", help="report written by the design command")
    return parser


def _scenario(args) -> Scenario:
    scn = Scenario.load(args.scenario) if args.scenario else Scenario.default()
    changes = {}
    if args.seed is not None:
        changes["design"] = {"seed": args.seed}
        changes["sim"] = {"seed": args.seed}
    if args.tolerance is not None:
        changes.setdefault("design", {})["tolerance"] = args.tolerance
    return scn.with_changes(**changes) if changes else scn


def _plots(args) -> bool:
    return not args.no_plots


def cmd_crb(args, out: Path) -> int:
    scn = _scenario(args)
    partition = pipeline.partition_for(scn)
    geometry = scn.geometry()
    if args.w:
        W = read_w_csv(args.w)
        R = W @ W.conj().T
    else:
        R = np.eye(geometry.N_t, dtype=complex) * (scn.P_t / geometry.N_t)
    pose = scn.pose()
    params = scn.sensing_params()
    z1_mode = scn.raw["sensing"]["z1_mode"]
    res = evaluate_crb(partition, pose, R, params, geometry, scn.raw["sensing"]["jacobian_mode"],
                       z1_mode)
    report = {
        "crb_closed_rad2": res.crb_phi_closed,
        "crb_oracle_approximate_rad2": crb_phi_oracle(partition, pose, R, params, geometry,
                                                      APPROXIMATE, z1_mode),
        "crb_oracle_exact_rad2": crb_phi_oracle(partition, pose, R, params, geometry, EXACT,
                                                z1_mode),
        "crb_k1_matrix": res.crb_k1_matrix,
        "Z1": res.Z1, "Z2": res.Z2,
        "X_k": [compute_Xk(partition, pose, scn.contour(), k) for k in range(partition.K)],
        "bracket_k": res.bracket, "aRa_k": res.aRa, "adRad_k": res.adRad, "re_adRa_k": res.adRa,
        "l_k_m": partition.l, "phi_k_rad": partition.phi, "d_k_m": partition.d,
        "source": args.w or "isotropic",
    }
    write_json(out / "crb.json", report)
    print(f"CRB(phi_o) closed form {res.crb_phi_closed!r} rad^2")
    return EXIT_OK


def _write_beampattern(out: Path, tag: str, W: np.ndarray, partition, plots: bool) -> None:
    grid = np.deg2rad(np.arange(-90.0, 90.25, 0.25))
    p = beampattern_at(W @ W.conj().T, grid)
    emit_plot_data(out / f"beampattern_{tag}.dat", ["angle_deg", "power"],
                   zip(np.rad2deg(grid).tolist(), p.tolist()), comment=f"transmit beampattern, {tag}")
    if plots:
        from .plotting import plot_beampattern
        plot_beampattern([(tag, p)], grid, partition, out / f"beampattern_{tag}.png")


def cmd_design(args, out: Path) -> int:
    scn = _scenario(args)
    if args.n_e is not None:
        scn = scn.with_changes(design={"n_e": args.n_e})
    variant = args.variant or scn.variant
    bf, report = pipeline.run_algorithm_1(scn, variant, args.dump_problem)
    write_w_csv(out / f"W_{variant}.csv", bf.W)
    report["w_file"] = f"W_{variant}.csv"
    report["scenario"] = scn.to_dict()
    write_json(out / f"design_{variant}.json", report)
    _write_beampattern(out, variant, bf.W, pipeline.partition_for(scn), _plots(args))
    print(f"{variant}: CRB {report['crb_rad2']!r} rad^2, provenance {report['provenance']}")
    return EXIT_OK


def cmd_sweep(args, out: Path) -> int:
    scn = _scenario(args)
    start = time.perf_counter()
    results = pipeline.run_sweep(scn, args.axis, args.values, args.variants, args.jobs)
    wdir = out / f"W_sweep_{args.axis}"
    wdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for row, W in results:
        if W is not None:
            name = f"{row['variant']}_{row['value']}.csv"
            write_w_csv(wdir / name, W)
            row["w_file"] = f"{wdir.name}/{name}"
        rows.append(row)
    write_csv(out / f"sweep_{args.axis}.csv", pipeline.SWEEP_COLUMNS, rows)
    emit_plot_data(out / f"sweep_{args.axis}.dat", ["value", "variant", "crb_db"],
                   ([r["value"], r["variant"], r.get("crb_db")] for r in rows),
                   comment=f"CRB sweep over {args.axis}")
    write_json(out / f"sweep_{args.axis}.json",
               {"axis": args.axis, "values": args.values, "variants": args.variants,
                "scenario": scn.to_dict(), "wall_time_s": time.perf_counter() - start})
    if _plots(args):
        from .plotting import plot_sweep
        plot_sweep(rows, args.axis, out / f"sweep_{args.axis}.png")
    failed = [r for r in rows if r["status"] != "optimal"]
    print(f"{len(rows)} sweep rows, {len(failed)} failed")
    return EXIT_OK


def cmd_simulate(args, out: Path) -> int:
    scn = _scenario(args)
    sim = {}
    if args.grid_halfwidth_deg is not None:
        sim["grid_halfwidth_deg"] = args.grid_halfwidth_deg
    if args.grid_step_deg is not None:
        sim["grid_step_deg"] = args.grid_step_deg
    if sim:
        scn = scn.with_changes(sim=sim)
    if args.w:
        W = read_w_csv(args.w)
    else:
        W = pipeline.run_algorithm_1(scn, CRB_MIN, args.dump_problem)[0].W
    rows, summary = pipeline.run_simulation(scn, W, args.runs, args.noise_free)
    write_csv(out / "simulate.csv", pipeline.SIM_COLUMNS, rows)
    write_json(out / "simulate.json", summary)
    if _plots(args):
        from .plotting import plot_errors
        plot_errors(rows, summary, out / "simulate.png")
    print(f"MSE {summary['mse_rad2']!r} rad^2, CRB {summary['crb_rad2']!r} rad^2")
    return EXIT_OK


def cmd_contour(args, out: Path) -> int:
    scn = _scenario(args)
    rows = pipeline.contour_rows(scn, args.samples)
    write_csv(out / "contour.csv", pipeline.CONTOUR_COLUMNS, rows)
    emit_plot_data(out / "contour.dat", pipeline.CONTOUR_COLUMNS,
                   ([r[c] for c in pipeline.CONTOUR_COLUMNS] for r in rows),
                   comment="sampled contour with line-of-sight flags")
    if _plots(args):
        from .plotting import plot_contour
        plot_contour(rows, pipeline.partition_for(scn), out / "contour.png")
    print(f"{len(rows)} contour samples, {sum(r['visible'] for r in rows)} visible")
    return EXIT_OK


def cmd_audit(args, out: Path) -> int:
    if not (args.sweep_csv or args.design_json):
        raise ScenarioError("audit needs --sweep-csv or --design-json")
    checks = []
    if args.sweep_csv:
        path = Path(args.sweep_csv)
        rows = read_csv(path)
        if not rows:
            raise ScenarioError(f"{path} has no rows")
        axis = rows[0]["axis"]
        meta = path.with_suffix(".json")
        base = (Scenario.from_dict(json.loads(meta.read_text())["scenario"]) if meta.exists()
                else _scenario(args))
        for r in rows:
            if r["status"] != "optimal":
                continue
            scn = pipeline.scenario_at(base, axis, float(r["value"]))
            W = read_w_csv(path.parent / r["w_file"])
            val, rel = pipeline.audit_crb(scn, W, float(r["crb_rad2"]))
            checks.append({"source": r["w_file"], "stored": float(r["crb_rad2"]),
                           "recomputed": val, "relative_error": rel})
    if args.design_json:
        path = Path(args.design_json)
        rep = json.loads(path.read_text())
        scn = Scenario.from_dict(rep["scenario"])
        W = read_w_csv(path.parent / rep["w_file"])
        val, rel = pipeline.audit_crb(scn, W, rep["crb_rad2"])
        checks.append({"source": rep["w_file"], "stored": rep["crb_rad2"], "recomputed": val,
                       "relative_error": rel})
    worst = max((c["relative_error"] for c in checks), default=0.0)
    ok = worst <= AUDIT_TOLERANCE
    write_json(out / "audit.json", {"checks": checks, "max_relative_error": worst,
                                    "tolerance": AUDIT_TOLERANCE, "passed": ok})
    print(f"audited {len(checks)} beamformers, max relative error {worst:.3e}")
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {"crb": cmd_crb, "design": cmd_design, "sweep": cmd_sweep,
            "simulate": cmd_simulate, "contour": cmd_contour, "audit": cmd_audit}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except InfeasibleDesign as exc:
        rep = getattr(exc, "report", {"status": "infeasible"})
        write_json(out / "infeasible.json", rep)
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ExtractionFailed as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, NoVisibleContour, DelayOverflow, ValueError, OSError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except EstbeamError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
