#!/usr/bin/env python3
"""
symknot command line.

    make-torus       write a sampled torus knot
    eval             energies and geometry of a curve file
    minimize         symmetric minimization of S_α for T(a, b) under period m
    detect-symmetry  rotational periods of a curve and the axis constraints
    compare          isometric / mirror / distinct verdict for two curves
    oracle           E_α of the round circle

Exit codes: 0 ok, 1 bad input or usage, 2 numerical failure.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from curve_geometry import CurveValidationError, arclength_resample, curve_stats
from curve_io import CurveFileError, RunManifest, load_curve, save_curve, write_json, write_manifest, write_trace
from curve_symmetry import SymmetryError, detect_periods, validate_symmetry_constraints
from knot_energy import (
    EnergyParams,
    OracleConvergenceError,
    SingularityError,
    circle_energy_oracle,
    ohara_energy,
    scaled_energy,
    seminorm_energy_check,
    worker_threads,
)
from symmetric_optimizer import (
    OptimizationStallError,
    OptimizerConfig,
    compare_minimizers,
    minimize_symmetric,
)
from torus_knots import TorusSpecError, admissible_symmetries, torus_knot_curve, validate_torus_spec

logger = logging.getLogger("symknot")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2

INPUT_ERRORS = (CurveValidationError, CurveFileError, SymmetryError, TorusSpecError, ValueError, OSError)
NUMERICAL_ERRORS = (SingularityError, OracleConvergenceError, OptimizationStallError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numerical failures here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _print_json(doc) -> None:
    print(json.dumps(doc, indent=2, allow_nan=False))


def cmd_make_torus(args) -> int:
    spec = validate_torus_spec(args.a, args.b, args.rho)
    curve = torus_knot_curve(spec, args.n)
    if args.resample:
        curve = arclength_resample(curve, args.n)
    metadata = {"knot": spec.label(), "a": spec.a, "b": spec.b, "rho": spec.rho, "resampled": bool(args.resample)}
    save_curve(curve, args.out, metadata)
    print(f"[done] {spec.label()} with {args.n} samples -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    curve = load_curve(args.curve)
    params = EnergyParams(
        alpha=args.alpha,
        neighbor_exclusion=args.neighbor_exclusion,
        diagonal_correction=args.diagonal_correction,
    )
    doc = curve_stats(curve).to_dict()
    doc.update({"n": curve.n, "alpha": args.alpha, "E_alpha": ohara_energy(curve, params),
                "S_alpha": scaled_energy(curve, params)})
    if args.seminorm_check:
        doc["seminorm_check"] = seminorm_energy_check(curve, params).to_dict()
    _print_json(doc)
    return EXIT_OK


def cmd_minimize(args) -> int:
    spec = validate_torus_spec(args.a, args.b, args.rho)
    config = OptimizerConfig(
        alpha=args.alpha,
        max_iters=args.max_iters,
        grad_tol=args.grad_tol,
        step_init=args.step_init,
        bilip_floor=args.bilip_floor,
        resymmetrize_every=args.resymmetrize_every,
        resample_every=args.resample_every,
        n_samples=args.n,
        rho=args.rho,
        log_every=args.log_every,
        preconditioner=args.preconditioner,
    )
    symmetry = next((sym for sym in admissible_symmetries(spec) if sym.m == args.m), None)
    if symmetry is None:
        raise SymmetryError(f"m={args.m} is not a period of {spec.label()}; allowed: "
                            f"{[sym.m for sym in admissible_symmetries(spec)]}")
    started = time.perf_counter()
    try:
        result = minimize_symmetric(spec, args.m, config)
    except OptimizationStallError as exc:
        if args.trace:
            write_trace(exc.trace, args.trace)
        raise

    metadata = {"knot": spec.label(), "m": args.m, "k": symmetry.k, "alpha": args.alpha, "reason": result.reason}
    save_curve(result.curve, args.out, metadata)
    outputs = {"curve": str(args.out)}
    if args.trace:
        write_trace(result.trace, args.trace)
        outputs["trace"] = str(args.trace)
    report = result.report.to_dict()
    report.update({"reason": result.reason, "iterations": result.iterations})
    if args.report:
        write_json(report, args.report)
        outputs["report"] = str(args.report)
    manifest_path = Path(args.manifest) if args.manifest else Path(f"{args.out}.manifest.json")
    outputs["manifest"] = str(manifest_path)
    write_manifest(
        RunManifest(
            command="minimize",
            parameters=config.to_dict(),
            knot={"a": spec.a, "b": spec.b, "rho": spec.rho},
            symmetry=symmetry.to_dict(),
            threads=worker_threads(),
            outputs=outputs,
            result=report,
            versions=RunManifest.collect_versions(),
            wall_clock_s=time.perf_counter() - started,
        ),
        manifest_path,
    )
    if not result.converged:
        print(f"[error] not converged after {result.iterations} steps: grad_sym={result.report.sym_grad_rms:.3e} "
              f"> grad_tol={config.grad_tol:g}; outputs written for inspection", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"[done] converged: S_alpha={result.report.scaled_energy:.12g} after {result.iterations} steps")
    return EXIT_OK


def cmd_detect_symmetry(args) -> int:
    curve = load_curve(args.curve)
    detections = detect_periods(curve, m_max=args.m_max, tol=args.tol)
    violations = validate_symmetry_constraints(detections, curve)
    _print_json({
        "n": curve.n,
        "periods": [det.to_dict() for det in detections],
        "violations": [v.to_dict() for v in violations],
    })
    return EXIT_OK


def cmd_compare(args) -> int:
    first = load_curve(args.curve1)
    second = load_curve(args.curve2)
    params = EnergyParams(alpha=args.alpha)
    verdict = compare_minimizers(first, second, params, energy_tol=args.energy_tol, align_tol=args.align_tol)
    _print_json(verdict.to_dict())
    return EXIT_OK


def cmd_oracle(args) -> int:
    params = EnergyParams(alpha=args.alpha, oracle_quad_points=args.quad_points, mobius_allowed=True)
    _print_json({"alpha": args.alpha, "circle_energy": circle_energy_oracle(params)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="symknot", description="Knot energies and symmetric minimizers")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-torus", help="write a sampled torus knot curve")
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--rho", type=float, default=0.4)
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--resample", action="store_true", help="resample by arclength")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_make_torus)

    p = sub.add_parser("eval", help="energies of a curve file")
    p.add_argument("--curve", required=True)
    p.add_argument("--alpha", type=float, default=2.5)
    p.add_argument("--neighbor-exclusion", type=int, default=1)
    p.add_argument("--diagonal-correction", action="store_true")
    p.add_argument("--seminorm-check", action="store_true")
    p.set_defaults(handler=cmd_eval)

    defaults = OptimizerConfig()
    p = sub.add_parser("minimize", help="symmetric minimization for a torus knot")
    p.add_argument("--a", type=int, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--m", type=int, required=True, help="symmetry period")
    p.add_argument("--alpha", type=float, default=defaults.alpha)
    p.add_argument("--n", type=int, default=defaults.n_samples)
    p.add_argument("--rho", type=float, default=defaults.rho)
    p.add_argument("--max-iters", type=int, default=defaults.max_iters)
    p.add_argument("--grad-tol", type=float, default=defaults.grad_tol)
    p.add_argument("--step-init", type=float, default=defaults.step_init)
    p.add_argument("--bilip-floor", type=float, default=defaults.bilip_floor)
    p.add_argument("--resymmetrize-every", type=int, default=defaults.resymmetrize_every)
    p.add_argument("--resample-every", type=int, default=defaults.resample_every)
    p.add_argument("--log-every", type=int, default=defaults.log_every)
    p.add_argument("--preconditioner", choices=["sobolev", "none"], default=defaults.preconditioner)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.add_argument("--report")
    p.add_argument("--manifest", help="defaults to <out>.manifest.json")
    p.set_defaults(handler=cmd_minimize)

    p = sub.add_parser("detect-symmetry", help="rotational periods of a curve")
    p.add_argument("--curve", required=True)
    p.add_argument("--m-max", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(handler=cmd_detect_symmetry)

    p = sub.add_parser("compare", help="compare two minimizers")
    p.add_argument("--curve1", required=True)
    p.add_argument("--curve2", required=True)
    p.add_argument("--alpha", type=float, default=2.5)
    p.add_argument("--energy-tol", type=float, default=1e-3)
    p.add_argument("--align-tol", type=float, default=1e-4)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("oracle", help="energy of the round circle")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--quad-points", type=int, default=4096)
    p.set_defaults(handler=cmd_oracle)
    return parser


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    try:
        worker_threads()
        return args.handler(args)
    except NUMERICAL_ERRORS as exc:
        logger.error(f"[CLI] numerical failure: {exc}")
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except INPUT_ERRORS as exc:
        logger.error(f"[CLI] invalid input: {exc}")
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyboardInterrupt:
        print("[warn] Interrupted by user", file=sys.stderr)
        return 130


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
