"""Command-line front end.

Subcommands: ``check`` (physical realizability of a model file),
``synthesize`` (controller design), ``analyze`` (closed-loop norms over an
uncertainty range), ``realize`` (completion of a bare controller triple) and
``demo-cavity`` (the built-in detuned-cavity example).

Exit codes: 0 success, 1 infeasible or check failed, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, analysis, qmodel, synthesis
from .qmodel import (
    DimensionError,
    ModelDocument,
    ModelFormatError,
    OpenPlant,
    UncertaintyModel,
    canonical_theta,
    dump_json,
    load_model,
    save_model,
)
from .realization import complete_realization, load_controller, realization_defect, save_controller
from .synthesis import NoFeasibleEpsilon, SynthesisConfig, synthesize

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


@dataclass
class RunManifest:
    """Provenance record embedded in every output file.

    The wall-clock duration is reported on the console only, so that repeated
    runs with identical inputs produce byte-identical files.
    """

    command: str
    inputs: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    tool_version: str = __version__
    seed: int | None = None
    duration_s: float | None = None

    def to_dict(self) -> dict:
        out = {
            "command": self.command,
            "inputs": list(self.inputs),
            "config": dict(self.config),
            "tool_version": self.tool_version,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out


def _resolve_seed(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get("QHINF_SEED")
    return int(env) if env else 0


def cavity_plant(
    gamma: float = 12.0,
    kappas: tuple[float, float, float] = (6.5, 5.0, 0.5),
    uncertain: bool = True,
) -> OpenPlant:
    """Detuned optical cavity coupled to three channels (v, w, u).

    The detuning enters as a scalar Hamiltonian perturbation with shape
    matrix E = I; ``uncertain=False`` zeroes E for the nominal reference
    design.
    """
    if abs(sum(kappas) - gamma) > 1e-12 * (1.0 + gamma):
        raise DimensionError("cavity decay rate must equal the sum of the couplings")
    k1, k2, k3 = kappas
    I2 = np.eye(2)
    E = I2 if uncertain else np.zeros((2, 2))
    return OpenPlant(
        A=-0.5 * gamma * I2,
        B0=-np.sqrt(k1) * I2,
        B1=-np.sqrt(k2) * I2,
        B2=-np.sqrt(k3) * I2,
        C1=np.sqrt(k3) * I2,
        D12=I2,
        C2=np.sqrt(k2) * I2,
        D20=np.zeros((2, 2)),
        D21=I2,
        theta=canonical_theta(2),
        uncertainty=UncertaintyModel(E),
    )


def _strip_uncertainty(plant: OpenPlant) -> OpenPlant:
    return OpenPlant(
        A=plant.A, B0=plant.B0, B1=plant.B1, B2=plant.B2, C1=plant.C1,
        D12=plant.D12, C2=plant.C2, D20=plant.D20, D21=plant.D21,
        theta=plant.theta,
        uncertainty=UncertaintyModel(np.zeros_like(plant.uncertainty.E)),
    )


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _csv_with_manifest(result: analysis.SweepResult, manifest: RunManifest) -> str:
    # The contract header stays the first non-comment line.
    return (
        "# manifest: " + dump_json(manifest.to_dict(), compact=True) + "\n"
        + result.to_csv()
    )


def _print_manifest(manifest: RunManifest) -> None:
    print(
        f"[{manifest.command}] tool {manifest.tool_version}, "
        f"duration {manifest.duration_s:.3f} s"
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_check(args) -> int:
    doc = load_model(args.model)
    system, theta = doc.realizable_system()
    result = qmodel.is_physically_realizable(system, theta)
    print(f"commutation residual: {result.residual_commutation:.6e}")
    print(f"output residual:      {result.residual_output:.6e}")
    print(f"physically realizable: {'yes' if result.verdict else 'no'}")
    return EXIT_OK if result.verdict else EXIT_FAIL


def _load_plant(path) -> OpenPlant:
    doc = load_model(path)
    if doc.plant is None:
        raise ModelFormatError(
            f"{path}: synthesis needs a 'plant' block (an 'slh' block has no "
            "channel split or performance output)"
        )
    return doc.plant


def _parse_range(text: str, name: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ModelFormatError(f"{name}: expected lo:hi, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ModelFormatError(f"{name}: {exc}") from exc
    return lo, hi


def _cmd_synthesize(args) -> int:
    started = time.monotonic()
    plant = _load_plant(args.model)
    if args.no_uncertainty:
        plant = _strip_uncertainty(plant)
    seed = _resolve_seed(args.seed)
    eps_range = (
        _parse_range(args.eps_range, "--eps-range")
        if args.eps_range
        else synthesis.DEFAULT_EPS_RANGE
    )
    config = SynthesisConfig(
        g=args.g,
        eps=args.eps,
        eps_range=eps_range,
        delta_grid=synthesis.scalar_delta_grid(plant.m, args.delta_grid),
    )
    manifest = RunManifest(
        command="synthesize",
        inputs=[str(args.model)],
        config={
            "g": args.g,
            "eps": args.eps,
            "eps_range": list(eps_range),
            "delta_grid_points": args.delta_grid,
            "no_uncertainty": bool(args.no_uncertainty),
        },
        seed=seed,
    )
    try:
        report = synthesize(plant, config)
    except NoFeasibleEpsilon as exc:
        manifest.duration_s = time.monotonic() - started
        print(f"infeasible: {exc}", file=sys.stderr)
        if args.report:
            doc = {
                "feasible": False,
                "reason": str(exc),
                "per_eps_trace": [
                    {"eps": e, "feasible": ok, "worst_norm": norm}
                    for e, ok, norm in exc.trace
                ],
                "manifest": manifest.to_dict(),
            }
            _write_text(args.report, dump_json(doc))
        _print_manifest(manifest)
        return EXIT_FAIL

    manifest.duration_s = time.monotonic() - started
    if args.out:
        save_controller(report.controller, args.out, manifest=manifest.to_dict())
    if args.report:
        doc = report.to_dict()
        doc["manifest"] = manifest.to_dict()
        _write_text(args.report, dump_json(doc))
    print(
        f"feasible at eps = {report.eps_used:.6g}; worst-case closed-loop "
        f"norm {report.worst_case_norm:.6f} (target {args.g:g})"
    )
    _print_manifest(manifest)
    return EXIT_OK


def _cmd_analyze(args) -> int:
    started = time.monotonic()
    plant = _load_plant(args.model)
    controller = load_controller(args.controller)
    manifest = RunManifest(
        command="analyze",
        inputs=[str(args.model), str(args.controller)],
        config={"g": args.g, "delta": args.delta, "sweep": args.sweep},
    )

    if args.delta is not None and args.sweep:
        raise ModelFormatError("--delta and --sweep are mutually exclusive")
    if args.delta is not None:
        closed = analysis.close_loop(plant, controller)
        sample = qmodel.scalar_uncertainty(args.delta, plant.m)
        A = closed.state_matrix(sample)
        if np.linalg.eigvals(A).real.max() >= 0.0:
            print(f"closed loop unstable at delta = {args.delta:g}", file=sys.stderr)
            return EXIT_FAIL
        norm = analysis.hinf_norm(A, closed.B_tilde, closed.C_tilde)
        manifest.duration_s = time.monotonic() - started
        print(f"{norm:.9g}")
        _print_manifest(manifest)
        return EXIT_OK

    spec = args.sweep or "-1:1:21"
    parts = spec.split(":")
    if len(parts) != 3:
        raise ModelFormatError(f"--sweep: expected lo:hi:n, got {spec!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ModelFormatError(f"--sweep: {exc}") from exc
    if count < 1:
        raise ModelFormatError("--sweep: n must be at least 1")
    deltas = [0.5 * (lo + hi)] if count == 1 else list(np.linspace(lo, hi, count))
    result = analysis.sweep(plant, [controller], deltas, g=args.g)
    manifest.duration_s = time.monotonic() - started
    if args.out:
        _write_text(args.out, _csv_with_manifest(result, manifest))
    finite = [r.norm_robust for r in result.rows if np.isfinite(r.norm_robust)]
    if finite:
        print(f"swept {len(result.rows)} points; max finite norm {max(finite):.6f}")
    else:
        print(f"swept {len(result.rows)} points; closed loop unstable everywhere")
    _print_manifest(manifest)
    return EXIT_OK


def _cmd_realize(args) -> int:
    started = time.monotonic()
    with open(args.triple, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(
                f"{args.triple}: invalid JSON at line {exc.lineno}: {exc.msg}"
            ) from exc
    if not isinstance(raw, dict):
        raise ModelFormatError("controller triple: expected a JSON object")
    theta_req = raw.get("theta_K", "canonical")
    if theta_req != "canonical":
        raise ModelFormatError("completion requires a canonical theta_K")
    mats = {}
    for key in ("A_K", "B_K", "C_K"):
        if key not in raw:
            raise ModelFormatError(f"controller triple: {key} missing")
        mats[key] = qmodel.matrix_from_json(raw[key], key)
        if np.iscomplexobj(mats[key]):
            raise ModelFormatError(f"controller triple: {key} must be real")

    defect = realization_defect(mats["A_K"], mats["B_K"], mats["C_K"])
    controller = complete_realization(mats["A_K"], mats["B_K"], mats["C_K"])
    result = qmodel.is_physically_realizable(controller.as_state_space(), controller.theta_K)
    manifest = RunManifest(
        command="realize", inputs=[str(args.triple)], config={},
        duration_s=time.monotonic() - started,
    )
    if args.out:
        save_controller(controller, args.out, manifest=manifest.to_dict())
    print(f"noise channels added: {controller.n_vK}")
    print(f"commutation defect (should be absorbed): {defect.tolist()}")
    print(f"realizability residuals: {result.residual_commutation:.3e}, "
          f"{result.residual_output:.3e}")
    _print_manifest(manifest)
    return EXIT_OK if result.verdict else EXIT_FAIL


def _cmd_demo_cavity(args) -> int:
    started = time.monotonic()
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    seed = _resolve_seed(args.seed)
    plant = cavity_plant()
    nominal_plant = cavity_plant(uncertain=False)
    manifest = RunManifest(
        command="demo-cavity",
        inputs=[],
        config={"g": args.g, "delta_grid_points": 21},
        seed=seed,
    )

    model_path = os.path.join(out_dir, "cavity.json")
    save_model(ModelDocument(plant=plant), model_path)

    config = SynthesisConfig(g=args.g, delta_grid=synthesis.scalar_delta_grid(plant.m, 21))
    try:
        robust = synthesize(plant, config)
    except NoFeasibleEpsilon as exc:
        manifest.duration_s = time.monotonic() - started
        print(f"robust synthesis infeasible at g = {args.g:g}: {exc}", file=sys.stderr)
        trace_doc = {
            "feasible": False,
            "reason": str(exc),
            "per_eps_trace": [
                {"eps": e, "feasible": ok, "worst_norm": norm} for e, ok, norm in exc.trace
            ],
            "manifest": manifest.to_dict(),
        }
        _write_text(os.path.join(out_dir, "report_robust.json"), dump_json(trace_doc))
        _print_manifest(manifest)
        return EXIT_FAIL
    nominal = synthesize(nominal_plant, config)

    save_controller(
        robust.controller, os.path.join(out_dir, "controller_robust.json"),
        manifest=manifest.to_dict(),
    )
    save_controller(
        nominal.controller, os.path.join(out_dir, "controller_nominal.json"),
        manifest=manifest.to_dict(),
    )
    robust_doc = robust.to_dict()
    robust_doc["manifest"] = manifest.to_dict()
    _write_text(os.path.join(out_dir, "report_robust.json"), dump_json(robust_doc))
    nominal_doc = nominal.to_dict()
    nominal_doc["manifest"] = manifest.to_dict()
    _write_text(os.path.join(out_dir, "report_nominal.json"), dump_json(nominal_doc))

    deltas = list(np.linspace(-1.0, 1.0, 21))
    result = analysis.sweep(plant, [robust.controller, nominal.controller], deltas, g=args.g)
    _write_text(os.path.join(out_dir, "sweep.csv"), _csv_with_manifest(result, manifest))

    # Reference values: the nominal design has a known closed form; the
    # robust design is compared by behaviour, not entry by entry.
    k = nominal.controller
    reference = {
        "A_K": -0.5 * np.eye(2),
        "B_K": -np.sqrt(5.0) * np.eye(2),
        "C_K": -np.sqrt(0.5) * np.eye(2),
    }
    nominal_dev = max(
        np.abs(k.A_K - reference["A_K"]).max(),
        np.abs(k.B_K - reference["B_K"]).max(),
        np.abs(k.C_K - reference["C_K"]).max(),
    )
    robust_norms = result.norms()
    nominal_norms = result.norms(reference=True)
    mid = len(deltas) // 2
    summary = {
        "g": args.g,
        "nominal": {
            "A_K_11": float(k.A_K[0, 0]),
            "B_K_11": float(k.B_K[0, 0]),
            "C_K_11": float(k.C_K[0, 0]),
            "max_deviation_from_reference": float(nominal_dev),
        },
        "robust": {
            "eps": robust.eps_used,
            "X_11": float(robust.X.X[0, 0]),
            "Y_11": float(robust.Y.X[0, 0]),
            "rho_XY": robust.assumptions.rho_XY,
            "reference_X_11": 0.0038,
            "reference_Y_11": 14.0783,
            "note": (
                "scaling parameter for the reference X/Y values is unreported; "
                "they are shown side by side, not checked"
            ),
            "worst_case_norm": robust.worst_case_norm,
        },
        "sweep": {
            "robust_max": float(np.max(robust_norms)),
            "robust_at_zero": float(robust_norms[mid]),
            "nominal_at_zero": float(nominal_norms[mid]),
            "nominal_at_edges": [float(nominal_norms[0]), float(nominal_norms[-1])],
            "crossover_present": bool(
                nominal_norms[mid] < robust_norms[mid]
                and nominal_norms[0] > robust_norms[0]
                and nominal_norms[-1] > robust_norms[-1]
            ),
        },
        "manifest": manifest.to_dict(),
    }
    _write_text(os.path.join(out_dir, "summary.json"), dump_json(summary))

    manifest.duration_s = time.monotonic() - started
    print(f"nominal controller max deviation from reference: {nominal_dev:.2e}")
    print(
        f"robust: eps = {robust.eps_used:.4g}, worst-case norm "
        f"{robust.worst_case_norm:.4f} <= g = {args.g:g}"
    )
    print(f"sweep crossover present: {summary['sweep']['crossover_present']}")
    print(f"artifacts written to {out_dir}")
    _print_manifest(manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qhinf",
        description="Coherent robust H-infinity control of linear quantum systems",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="physical realizability of a model file")
    p.add_argument("model")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("synthesize", help="design a coherent controller")
    p.add_argument("model")
    p.add_argument("--g", type=float, required=True, help="disturbance attenuation")
    p.add_argument("--eps", type=float, default=None, help="fixed scaling parameter")
    p.add_argument("--eps-range", default=None, help="search range lo:hi")
    p.add_argument("--delta-grid", type=int, default=21,
                   help="points of the scalar verification grid")
    p.add_argument("--no-uncertainty", action="store_true",
                   help="zero the uncertainty shape matrix")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="controller JSON path")
    p.add_argument("--report", default=None, help="report JSON path")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("analyze", help="closed-loop norms over the uncertainty range")
    p.add_argument("model")
    p.add_argument("controller")
    p.add_argument("--delta", type=float, default=None, help="single uncertainty value")
    p.add_argument("--sweep", default=None, help="range lo:hi:n")
    p.add_argument("--g", type=float, default=0.35,
                   help="attenuation level for the meets_g column")
    p.add_argument("--out", default=None, help="CSV path (sweep mode)")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("realize", help="complete an (A_K, B_K, C_K) triple")
    p.add_argument("triple")
    p.add_argument("--out", default=None, help="controller JSON path")
    p.set_defaults(func=_cmd_realize)

    p = sub.add_parser("demo-cavity", help="built-in detuned-cavity example")
    p.add_argument("--g", type=float, default=0.35)
    p.add_argument("--out-dir", default="cavity-demo")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_demo_cavity)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ModelFormatError, DimensionError, FileNotFoundError, analysis.InvalidConfig) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
