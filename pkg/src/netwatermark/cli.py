"""Command-line front end.

Subcommands:

* ``platoon-preset``: write the three-vehicle platoon benchmark scenario.
* ``design``: synthesise feedback and observer gains for a scenario's
  plant and write them back into the scenario file.
* ``calibrate``: simulate the no-attack loop, store per-subcontroller
  detection thresholds in the scenario file, and report the held-out
  null rejection rate.
* ``simulate``: run the closed loop and export the trace as CSV.
* ``detect``: run the closed loop with the scenario's attack, write the
  per-window detection report as CSV, and exit 3 when the run-level
  rejection count is statistically inconsistent with no attack.

Exit codes: 0 success (detect: no attack flagged), 2 any error,
3 attack detected.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np
from scipy.stats import binom

from . import design, stats
from .errors import NetwatermarkError
from .model import GainSet
from .scenario import (
    Scenario,
    load_scenario,
    platoon_preset,
    save_scenario,
)
from .sim import simulate, write_trace_csv

__all__ = ["main", "run", "rejection_cutoff"]


def rejection_cutoff(n_tests: int, alpha: float) -> int:
    """Smallest rejection count that is implausible under no attack.

    Under no attack each of the n_tests window decisions rejects with
    probability close to alpha, so the total rejection count R stays at
    or below the (1-alpha) binomial quantile with high probability.  The
    run flags an attack only when R exceeds that quantile, which keeps
    the run-level false-alarm rate near alpha instead of letting it grow
    with the number of windows.
    """
    return int(binom.ppf(1.0 - alpha, n_tests, alpha)) + 1


def _print_err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def _build_detector_for(scenario: Scenario) -> stats.DetectorModel:
    gains = scenario.require_gains()
    lags = design.compute_watermark_lags(
        scenario.model.a,
        scenario.model.b_blocks,
        scenario.model.c_blocks,
        gains.k,
    )
    detector = stats.build_detector(
        scenario.model,
        gains,
        lags,
        window_len=scenario.detector.window_len,
        alpha=scenario.detector.alpha,
        coefficient_variant=scenario.detector.coefficient_variant,
    )
    if scenario.detector.tau is not None:
        detector.tau = np.asarray(scenario.detector.tau, dtype=float)
    return detector


def _cmd_platoon_preset(args) -> int:
    scenario = platoon_preset(attack=args.attack, seed=args.seed or 0)
    save_scenario(scenario, args.out)
    kind = "with the benchmark attack" if args.attack else "without attack"
    print(f"wrote platoon scenario ({kind}) to {args.out}")
    return 0


def _cmd_design(args) -> int:
    scenario = load_scenario(args.scenario)
    model = scenario.model
    if args.method == "square":
        k = design.design_feedback_square(model.a, model.b, lam=args.lam)
    else:
        k = design.design_feedback_shared_range(model.a, model.b_blocks)
    k_blocks = [
        k[model.q_offsets[i] : model.q_offsets[i + 1]] for i in range(model.kappa)
    ]
    seed = 0 if args.seed is None else args.seed
    l_stack = design.search_observer_gain(model, k, seed=seed)
    l_blocks = [
        l_stack[:, model.m_offsets[j] : model.m_offsets[j + 1]]
        for j in range(model.kappa)
    ]
    if scenario.gains is not None:
        sigma_e_blocks = list(scenario.gains.sigma_e_blocks)
    else:
        sigma_e_blocks = [np.eye(q) for q in model.q_sizes]
    gains = GainSet(
        k_blocks=k_blocks, l_blocks=l_blocks, sigma_e_blocks=sigma_e_blocks
    )
    report = design.verify_gain_triple(model, gains)
    lags = design.compute_watermark_lags(
        model.a, model.b_blocks, model.c_blocks, gains.k
    )
    scenario.gains = gains
    save_scenario(scenario, args.scenario)
    print(report)
    print(f"watermark lags (row: receiver, column: source):\n{lags}")
    print(f"gains written back to {args.scenario}")
    return 0


def _cmd_calibrate(args) -> int:
    scenario = load_scenario(args.scenario)
    gains = scenario.require_gains()
    report = design.verify_gain_triple(scenario.model, gains)
    if not report.ok:
        _print_err(f"gains do not stabilise the loop: {report}")
        return 2
    detector = _build_detector_for(scenario)
    windows = args.windows or scenario.detector.calibration_windows
    seed = scenario.run.seed if args.seed is None else args.seed
    tau = stats.calibrate_threshold(
        scenario.model,
        gains,
        detector,
        windows=windows,
        seed=seed,
        burn_in=scenario.run.burn_in,
    )
    detector.tau = tau
    scenario.detector.tau = tau
    scenario.detector.calibration_windows = windows
    save_scenario(scenario, args.scenario)
    held_out = stats.null_rejection_rates(
        scenario.model,
        gains,
        detector,
        windows=windows,
        seed=seed + 1,
        burn_in=scenario.run.burn_in,
    )
    print(f"tau = {np.array2string(tau, precision=6)}")
    print(
        "held-out null rejection rate per subcontroller = "
        f"{np.array2string(held_out, precision=4)}"
    )
    print(f"thresholds written back to {args.scenario}")
    return 0


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    gains = scenario.require_gains()
    seed = scenario.run.seed if args.seed is None else args.seed
    trace = simulate(
        scenario.model,
        gains,
        scenario.attack_or_none(),
        steps=scenario.run.steps,
        seed=seed,
        x0=scenario.run.x0,
        xhat0=scenario.run.xhat0,
    )
    write_trace_csv(trace, args.out)
    print(f"wrote {trace.steps} steps to {args.out}")
    return 0


def _cmd_detect(args) -> int:
    scenario = load_scenario(args.scenario)
    gains = scenario.require_gains()
    if scenario.detector.tau is None:
        _print_err("scenario has no calibrated thresholds; run calibrate first")
        return 2
    detector = _build_detector_for(scenario)
    run = scenario.run
    count = (run.steps - run.burn_in) // detector.window_len
    if count < 1:
        _print_err(
            f"run.steps {run.steps} leaves no full window of length "
            f"{detector.window_len} after burn_in {run.burn_in}"
        )
        return 2
    seed = run.seed if args.seed is None else args.seed
    trace = simulate(
        scenario.model,
        gains,
        scenario.attack_or_none(),
        steps=run.burn_in + count * detector.window_len,
        seed=seed,
        x0=run.x0,
        xhat0=run.xhat0,
    )
    starts, values = stats.window_nll_series(trace, detector, run.burn_in, count)

    kappa = detector.kappa
    rejections = 0
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["subcontroller", "window_start", "nll", "tau", "decision"])
        for i in range(kappa):
            tau_i = float(detector.tau[i])
            for w, start in enumerate(starts):
                decision = stats.decide(values[i, w], detector, i)
                rejections += decision == "reject"
                writer.writerow(
                    [i, int(start), f"{values[i, w]:.17g}", f"{tau_i:.17g}", decision]
                )

    rates = (values > detector.tau[:, None]).mean(axis=1)
    cutoff = rejection_cutoff(kappa * count, detector.alpha)
    print(f"per-subcontroller rejection rates = {np.array2string(rates, precision=4)}")
    print(
        f"{rejections} of {kappa * count} window tests rejected "
        f"(attack flagged at >= {cutoff})"
    )
    print(f"report written to {args.out}")
    if rejections >= cutoff:
        print("attack detected")
        return 3
    print("no attack detected")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netwatermark",
        description=(
            "Watermark-based attack detection for networked control loops: "
            "gain synthesis, seeded simulation, threshold calibration and "
            "windowed detection."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed", type=int, default=None, help="override the scenario's run seed"
    )

    preset = sub.add_parser(
        "platoon-preset",
        parents=[common],
        help="write the three-vehicle platoon benchmark scenario",
    )
    preset.add_argument("--out", required=True, help="scenario file to write")
    preset.add_argument(
        "--attack",
        action="store_true",
        help="include the benchmark sensor and channel attack",
    )
    preset.set_defaults(func=_cmd_platoon_preset)

    designer = sub.add_parser(
        "design",
        parents=[common],
        help="synthesise feedback and observer gains, write them back",
    )
    designer.add_argument("--scenario", required=True, help="scenario file to update")
    designer.add_argument(
        "--method",
        choices=("square", "shared-range"),
        default="square",
        help="feedback synthesis method",
    )
    designer.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=0.5,
        help="closed-loop eigenvalue magnitude for the square method",
    )
    designer.set_defaults(func=_cmd_design)

    calibrator = sub.add_parser(
        "calibrate",
        parents=[common],
        help="calibrate detection thresholds on the no-attack loop",
    )
    calibrator.add_argument("--scenario", required=True, help="scenario file to update")
    calibrator.add_argument(
        "--windows",
        type=int,
        default=None,
        help="number of calibration windows (default: scenario setting)",
    )
    calibrator.set_defaults(func=_cmd_calibrate)

    simulator = sub.add_parser(
        "simulate",
        parents=[common],
        help="simulate the closed loop and export the trace CSV",
    )
    simulator.add_argument("--scenario", required=True, help="scenario file to run")
    simulator.add_argument("--out", required=True, help="trace CSV to write")
    simulator.set_defaults(func=_cmd_simulate)

    detector = sub.add_parser(
        "detect",
        parents=[common],
        help="run windowed detection and write the report CSV",
    )
    detector.add_argument("--scenario", required=True, help="scenario file to run")
    detector.add_argument("--out", required=True, help="report CSV to write")
    detector.set_defaults(func=_cmd_detect)

    return parser


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NetwatermarkError as exc:
        _print_err(str(exc))
        return 2
    except OSError as exc:
        _print_err(str(exc))
        return 2


def run() -> None:
    """Console-script wrapper around main."""
    raise SystemExit(main())


if __name__ == "__main__":
    run()
