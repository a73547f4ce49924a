"""Command-line interface: check, design, simulate, sweep, demo.

Exit codes: 0 success, 2 malformed input (diagnostic on stderr), 3 failed
assumption check, 4 design or certification failure. All outputs are
deterministic — running the same invocation twice produces byte-identical
CSV/JSON/SVG files.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .assumptions import check_assumptions
from .design_emulation import build_emulation_regulator
from .design_hold import build_hold_regulator
from .design_multirate import build_multirate_regulator
from .hybridsim import compute_metrics, simulate, write_csv
from .model import METHODS, ScenarioError, build_pendulum, load_scenario, serialize_scenario
from .numkit import NoSolutionError, SynthesisError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ASSUMPTIONS = 3
EXIT_DESIGN = 4


def _json_ready(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    return obj


def _dump(payload, out_path):
    text = json.dumps(_json_ready(payload), indent=2, sort_keys=True) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(path):
    scenario = load_scenario(path)
    scenario.plant.validate_exosystem()
    return scenario


def _resolve_method(scenario, args):
    method = getattr(args, "method", None) or scenario.method
    N = getattr(args, "N", None)
    return scenario.with_method(method, N=N)


def _design(scenario):
    """Run the synthesis selected by the scenario; returns (regulator, gains dict)."""
    if scenario.method == "emulation":
        reg = build_emulation_regulator(scenario)
        gains = {
            "method": "emulation",
            "n_c": reg.n_c,
            "M": reg.M, "Gamma": reg.Gamma, "C_c": reg.C_c,
            "A_c": reg.A_c, "B_c": reg.B_c,
            "kappa": reg.kappa, "gamma": reg.gamma_star,
            "tau_max": reg.tau_max, "k_em": reg.k_em,
            "sampling_T": scenario.sampling.T,
        }
    elif scenario.method == "hold":
        reg = build_hold_regulator(scenario)
        gains = _hold_gains(reg, scenario)
    elif scenario.method == "multirate":
        reg, estimate = build_multirate_regulator(scenario)
        gains = _hold_gains(reg.base, scenario)
        gains.update({
            "method": "multirate",
            "N": reg.N,
            "rate_estimate": {
                "N_star": estimate.N_star,
                "lambda_cl": estimate.lambda_cl,
                "k1": estimate.k1,
                "phi1": estimate.phi1,
                "phi2": estimate.phi2,
                "alpha_star": estimate.alpha_star,
            },
        })
        reg = (reg, estimate)
    else:  # pragma: no cover - Scenario already validates
        raise ScenarioError(f"unknown method: {scenario.method}")
    return reg, gains


def _hold_gains(reg, scenario):
    cert = reg.certificate
    return {
        "method": "hold",
        "Phi": reg.Phi, "L": reg.L,
        "F_f": reg.F_f, "G_f": reg.G_f, "Gamma_f": reg.Gamma_f,
        "A_z": reg.A_z, "B_z": reg.B_z, "K_z": reg.K_z, "L_z": reg.L_z,
        "certificate": {
            "spectral_radius": cert.rho,
            "residuals": cert.residuals,
            "manifold_residual": cert.manifold_residual,
        },
        "sampling_T": scenario.sampling.T,
    }


def _plot(traj, path):
    """Render ||e|| (log scale) and the extra measurements to an SVG file."""
    import matplotlib

    matplotlib.use("svg", force=True)
    matplotlib.rcParams["svg.hashsalt"] = "regulata"
    import matplotlib.pyplot as plt

    fig, (ax_e, ax_m) = plt.subplots(2, 1, figsize=(8.0, 5.0), sharex=True)
    norm_e = np.maximum(traj.norm_e, 1e-300)
    ax_e.semilogy(traj.t, norm_e, lw=1.2)
    ax_e.set_ylabel("||e||")
    ax_e.grid(True, alpha=0.3)
    if traj.y_m.shape[1]:
        for i in range(traj.y_m.shape[1]):
            ax_m.plot(traj.t, traj.y_m[:, i], lw=1.2, label=f"ym_{i + 1}")
        ax_m.legend(loc="upper right")
    ax_m.set_xlabel("t")
    ax_m.set_ylabel("y_m")
    ax_m.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_check(args):
    scenario = _load(args.scenario)
    report = check_assumptions(scenario.plant, scenario.sampling.T)
    _dump(report.as_dict(), args.out)
    return EXIT_OK if report.satisfied else EXIT_ASSUMPTIONS


def cmd_design(args):
    scenario = _resolve_method(_load(args.scenario), args)
    _, gains = _design(scenario)
    _dump(gains, args.out)
    return EXIT_OK


def cmd_simulate(args):
    scenario = _resolve_method(_load(args.scenario), args)
    regulator, _ = _design(scenario)
    traj = simulate(scenario, regulator, dense_per_period=args.dense)
    if args.out:
        write_csv(traj, args.out)
    else:
        write_csv(traj, sys.stdout)
    if args.plot:
        _plot(traj, args.plot)
    report = compute_metrics(traj)
    print(f"bounded={report.bounded} tail_sup_e={report.tail_sup_e:.6g} "
          f"decay_rate={'n/a' if report.decay_rate is None else format(report.decay_rate, '.6g')} "
          f"peak_state_norm={report.peak_state_norm:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args):
    scenario = _load(args.scenario)
    if args.method:
        scenario = scenario.with_method(args.method)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ScenarioError(f"parse error in --values: {exc}") from None
    if not values:
        raise ScenarioError("--values is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ScenarioError("invariant violated: sweep axis must be strictly increasing")

    points = []
    for value in values:
        if args.axis == "T":
            import dataclasses

            point = dataclasses.replace(
                scenario, sampling=dataclasses.replace(scenario.sampling, T=value))
        else:
            iv = int(value)
            if iv != value or iv < 1:
                raise ScenarioError(f"invariant violated: N values must be positive integers, got {value}")
            point = scenario.with_method(scenario.method, N=iv)
        regulator, gains = _design(point)
        traj = simulate(point, regulator, dense_per_period=args.dense)
        report = compute_metrics(traj)
        summary = {"method": point.method}
        if "certificate" in gains:
            summary["spectral_radius"] = gains["certificate"]["spectral_radius"]
        if "tau_max" in gains:
            summary.update(tau_max=gains["tau_max"], kappa=gains["kappa"], gamma=gains["gamma"])
        if "rate_estimate" in gains:
            summary["N_star"] = gains["rate_estimate"]["N_star"]
        points.append({
            "value": value if args.axis == "T" else int(value),
            "report": {
                "bounded": report.bounded,
                "tail_sup_e": report.tail_sup_e,
                "decay_rate": report.decay_rate,
                "peak_state_norm": report.peak_state_norm,
            },
            "design": summary,
        })

    result = {"axis": args.axis, "values": [p["value"] for p in points], "points": points}
    _dump(result, args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("axis,value,bounded,tail_sup_e,decay_rate,peak_state_norm\n")
            for p in points:
                r = p["report"]
                decay = "" if r["decay_rate"] is None else f"{r['decay_rate']:.17g}"
                fh.write(f"{args.axis},{p['value']},{int(r['bounded'])},"
                         f"{r['tail_sup_e']:.17g},{decay},{r['peak_state_norm']:.17g}\n")
    return EXIT_OK


def cmd_demo(args):
    """End-to-end run of the bundled cart–pendulum scenario."""
    import pathlib

    out_dir = pathlib.Path(args.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = build_pendulum()
    scen_path = out_dir / "pendulum.json"
    with open(scen_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_scenario(scenario))
    report = check_assumptions(scenario.plant, scenario.sampling.T)
    print("assumption check:")
    for key, value in report.as_dict().items():
        if key != "witnesses":
            print(f"  {key}: {value}")
    if not report.satisfied:
        return EXIT_ASSUMPTIONS
    regulator, gains = _design(scenario)
    with open(out_dir / "gains.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_json_ready(gains), indent=2, sort_keys=True) + "\n")
    traj = simulate(scenario, regulator)
    write_csv(traj, out_dir / "trajectory.csv")
    _plot(traj, out_dir / "trajectory.svg")
    metrics = compute_metrics(traj)
    print(f"simulated {scenario.horizon:g} s: bounded={metrics.bounded}, "
          f"tail sup ||e|| = {metrics.tail_sup_e:.3e}, "
          f"peak state norm = {metrics.peak_state_norm:.3e}")
    print(f"wrote {scen_path}, gains.json, trajectory.csv, trajectory.svg in {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regulata",
        description="Design and simulate sampled-data output regulators.")
    parser.add_argument("--seed", type=int, default=42,
                        help="seed for any randomized operation (default 42)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="verify plant/exosystem assumptions")
    p_check.add_argument("scenario")
    p_check.add_argument("--out", default=None, help="write the JSON report to a file")
    p_check.set_defaults(func=cmd_check)

    p_design = sub.add_parser("design", help="synthesize a regulator, print gains JSON")
    p_design.add_argument("scenario")
    p_design.add_argument("--method", choices=METHODS, default=None)
    p_design.add_argument("--N", type=int, default=None, help="control ticks per sample")
    p_design.add_argument("--out", default=None)
    p_design.set_defaults(func=cmd_design)

    p_sim = sub.add_parser("simulate", help="design then simulate; CSV trajectory output")
    p_sim.add_argument("scenario")
    p_sim.add_argument("--method", choices=METHODS, default=None)
    p_sim.add_argument("--N", type=int, default=None)
    p_sim.add_argument("--out", default=None, help="CSV file (default stdout)")
    p_sim.add_argument("--plot", default=None, help="also render an SVG figure here")
    p_sim.add_argument("--dense", type=int, default=20, help="dense samples per period")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="repeat design+simulate along T or N")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--axis", choices=("T", "N"), required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated, strictly increasing")
    p_sweep.add_argument("--method", choices=METHODS, default=None)
    p_sweep.add_argument("--out", default=None, help="JSON result file (default stdout)")
    p_sweep.add_argument("--csv", default=None, help="also write a CSV summary table")
    p_sweep.add_argument("--dense", type=int, default=20)
    p_sweep.set_defaults(func=cmd_sweep)

    p_demo = sub.add_parser("demo", help="run the bundled cart-pendulum scenario end to end")
    p_demo.add_argument("name", nargs="?", default="pendulum", choices=("pendulum",))
    p_demo.add_argument("--dir", default="demo_out")
    p_demo.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    np.random.seed(args.seed % (2 ** 32))
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SynthesisError, NoSolutionError, ValueError) as exc:
        print(f"design failure: {exc}", file=sys.stderr)
        return EXIT_DESIGN


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
