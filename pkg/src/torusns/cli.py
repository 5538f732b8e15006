"""Command-line front end: ``torusns {constants,kernel,simulate,verify}``.

Every command prints one JSON document (and optionally writes it to ``--out``).
Exit status: 0 success, 2 invalid input, 3 certification or verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import PRIOR_LITERATURE_THRESHOLD, __version__
from .aposteriori import (
    ControlInequalityError,
    error_estimator,
    growth_estimator,
    solve_control_inequality,
    verify_against_reference,
)
from .kernel_bounds import k_constant, kernel_bracket
from .nonlinearity import set_fft_workers
from .semigroup import QuadratureError, compute_N
from .solver import (
    PicardError,
    SolveConfig,
    envelope_report,
    global_certificate,
    load_trajectory,
    picard_solve,
    save_trajectory,
)
from .spectral import FieldFormatError, SpaceParams, field_from_dict, random_field

log = logging.getLogger("torusns")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3

# rounded constants for d = 3, omega = 0.7; `constants` certifies both as upper bounds
DEFAULT_K = 0.361
DEFAULT_N = 1.70


class UsageError(ValueError):
    """Invalid user input; reported with exit status 2."""


def _header(command: str, params: Mapping[str, Any]) -> dict:
    return {
        "generator": {"package": "torusns", "version": __version__, "numpy": np.__version__},
        "command": command,
        "parameters": dict(params),
    }


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def _read_json(path: str, what: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"{what}: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: {path} is not valid JSON ({exc})") from None


# ---------------------------------------------------------------------- commands


def cmd_constants(args: argparse.Namespace) -> int:
    try:
        SpaceParams(args.dim, args.omega).require_solver()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.a < 1:
        raise UsageError("--a must be a positive integer")
    if args.lam <= args.a + 1:
        raise UsageError(f"--lambda must exceed a + 1 = {args.a + 1}")
    t0 = time.perf_counter()
    nb = compute_N(args.omega, grid_step=args.grid_step)
    kb = k_constant(args.dim, args.omega, args.a, args.lam, workers=args.threads)
    threshold = 1.0 / (4.0 * nb.n_upper * kb.upper)
    threshold = math.nextafter(threshold, 0.0)
    doc = _header(
        "constants",
        {"omega": args.omega, "d": args.dim, "a": args.a, "lambda": args.lam, "grid_step": args.grid_step},
    )
    doc.update(
        {
            "omega": args.omega,
            "d": args.dim,
            "K_bracket": [kb.lower, kb.upper],
            "N_upper": nb.n_upper,
            "threshold_lower": threshold,
            "N_bound": nb.to_dict(),
            "sup_certificate": kb.sup.to_dict(),
            "prior_literature_threshold": {
                "value": PRIOR_LITERATURE_THRESHOLD,
                "note": "earlier published small-data threshold, quoted for comparison only",
            },
            "elapsed_seconds": time.perf_counter() - t0,
        }
    )
    _emit(doc, args.out)
    return EXIT_OK


def cmd_kernel(args: argparse.Namespace) -> int:
    k = tuple(args.k)
    if args.dim is not None and args.dim != len(k):
        raise UsageError(f"--k has {len(k)} components but --dim is {args.dim}")
    if not any(k):
        raise UsageError("--k must be a nonzero lattice point")
    norm_k = math.sqrt(sum(x * x for x in k))
    if args.lam <= norm_k:
        raise UsageError(f"--lambda must exceed |k| = {norm_k:.6g}")
    try:
        SpaceParams(len(k), args.omega).require_kernel()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    b = kernel_bracket(k, args.omega, args.lam, workers=args.threads)
    doc = _header("kernel", {"k": list(k), "omega": args.omega, "lambda": args.lam})
    doc["bracket"] = b.to_dict()
    doc["bracket_2dp"] = [math.floor(b.lower * 100) / 100, math.ceil(b.upper * 100) / 100]
    _emit(doc, args.out)
    return EXIT_OK


def _initial_field(initial: Mapping, cfg: SolveConfig, base: Path):
    if not isinstance(initial, Mapping):
        raise UsageError("initial: expected an object")
    if "field" in initial:
        try:
            return field_from_dict(initial["field"])
        except (FieldFormatError, KeyError, TypeError) as exc:
            raise UsageError(f"initial.field: {exc}") from None
    if "field_path" in initial:
        doc = _read_json(str(base / initial["field_path"]), "initial.field_path")
        try:
            return field_from_dict(doc)
        except (FieldFormatError, KeyError, TypeError) as exc:
            raise UsageError(f"initial.field_path: {exc}") from None
    if "seed" in initial:
        unknown = set(initial) - {"seed", "h1_norm", "decay"}
        if unknown:
            raise UsageError(f"initial: unknown keys {sorted(unknown)}")
        try:
            seed = int(initial["seed"])
            norm = float(initial.get("h1_norm", 0.3))
            decay = float(initial.get("decay", 2.0))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"initial: {exc}") from None
        if norm < 0:
            raise UsageError("initial.h1_norm: must be nonnegative")
        return random_field(seed, cfg.M, cfg.d, norm, decay=decay)
    raise UsageError("initial: give one of 'seed', 'field' or 'field_path'")


def _load_constants(path: str | None, K: float | None, N: float | None) -> tuple[float, float, str]:
    if path:
        doc = _read_json(path, "--constants")
        try:
            return float(doc["K_bracket"][1]), float(doc["N_upper"]), path
        except (KeyError, TypeError, IndexError, ValueError):
            raise UsageError(f"--constants: {path} lacks K_bracket / N_upper") from None
    return (K if K is not None else DEFAULT_K), (N if N is not None else DEFAULT_N), "defaults"


def cmd_simulate(args: argparse.Namespace) -> int:
    doc = _read_json(args.config, "config")
    if not isinstance(doc, Mapping):
        raise UsageError("config: expected a JSON object")
    unknown = set(doc) - {"solve", "initial", "output", "constants"}
    if unknown:
        raise UsageError(f"config: unknown keys {sorted(unknown)}")
    try:
        cfg = SolveConfig.from_dict(doc.get("solve", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"solve: {exc}") from None
    base = Path(args.config).resolve().parent
    u0 = _initial_field(doc.get("initial", {}), cfg, base)
    if u0.d != cfg.d:
        raise UsageError(f"initial: field has d={u0.d} but solve.d={cfg.d}")
    consts = doc.get("constants", {})
    K, N, source = _load_constants(args.constants, consts.get("K"), consts.get("N"))
    # --out is relative to the working directory, the config's "output" to the config file
    out = Path(args.out) if args.out else (base / doc["output"] if doc.get("output") else None)

    traj = picard_solve(u0, cfg)
    if out:
        save_trajectory(traj, out)
    cert = global_certificate(traj.u0, K, N)
    summary = _header("simulate", {"config": cfg.to_dict(), "K": K, "N": N, "constants_source": source})
    summary["certificate"] = {
        **cert.to_dict(),
        "status": "covered" if cert.passes else "not covered by the small-data global existence criterion",
    }
    if cert.passes:
        rep = envelope_report(traj, cert.envelope(traj.times))
        summary["envelope"] = {
            "min_margin": rep.min_margin,
            "first_violation": rep.first_violation,
        }
    summary["trajectory"] = {
        "path": str(out) if out else None,
        "n_states": len(traj),
        "final_h1_norm": float(traj.h1_norms[-1]),
        "max_picard_iterations": int(traj.picard_iterations.max()) if traj.picard_iterations.size else 0,
        "max_contraction_ratio": float(traj.contraction_ratios.max()) if traj.contraction_ratios.size else 0.0,
    }
    _emit(summary, args.summary)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    if not 0 < args.omega < 1:
        raise UsageError(f"--omega must lie in (0, 1), got {args.omega}")
    K, _, source = _load_constants(args.constants, args.K, None)
    params = {"omega": args.omega, "K": K, "safety": args.safety, "constants_source": source}
    if args.series:
        series = _read_json(args.series, "--series")
        try:
            times, D, E = (np.asarray(series[k], float) for k in ("times", "D", "E"))
        except (KeyError, TypeError, ValueError):
            raise UsageError("--series: needs arrays 'times', 'D', 'E'") from None
        traj = None
        params["series"] = args.series
    elif args.trajectory:
        try:
            traj = load_trajectory(args.trajectory)
        except FieldFormatError as exc:
            raise UsageError(f"trajectory: {exc}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"trajectory: {exc}") from None
        params["trajectory"] = args.trajectory
        est = error_estimator(traj, args.omega)
        times, D, E = traj.times, growth_estimator(traj), est.E
    else:
        raise UsageError("give a trajectory file or --series")
    if args.reference and traj is None:
        raise UsageError("--reference needs a trajectory input")
    report = _header("verify", params)
    try:
        sol = solve_control_inequality(times, D, E, K, args.omega, args.safety)
    except ControlInequalityError as exc:
        report.update({"pass": False, "t_star": exc.t_star, "defect": exc.defect, "reason": str(exc)})
        _emit(report, args.out)
        return EXIT_FAILED
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report.update({"pass": True, "control": sol.to_dict()})
    if args.reference:
        try:
            ref = load_trajectory(args.reference)
        except (FieldFormatError, OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--reference: {exc}") from None
        rr = verify_against_reference(traj, ref, sol.R)
        report["reference"] = rr.to_dict()
        report["pass"] = rr.passed
    _emit(report, args.out)
    return EXIT_OK if report["pass"] else EXIT_FAILED


# ------------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torusns", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"torusns {__version__}")
    p.add_argument("--threads", type=int, default=None, help="cap worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("constants", help="certify K_omega, N_omega and the existence threshold")
    c.add_argument("--omega", type=float, default=0.7)
    c.add_argument("--dim", type=int, default=3)
    c.add_argument("--a", type=int, default=1, help="fundamental-domain radius")
    c.add_argument("--lambda", dest="lam", type=float, default=150.0, help="lattice cutoff")
    c.add_argument("--grid-step", type=float, default=5e-5)
    c.add_argument("--out")
    c.set_defaults(func=cmd_constants)

    k = sub.add_parser("kernel", help="bracket the lattice kernel at one point")
    k.add_argument("--k", type=int, nargs="+", required=True)
    k.add_argument("--omega", type=float, default=0.7)
    k.add_argument("--dim", type=int, default=None)
    k.add_argument("--lambda", dest="lam", type=float, default=150.0)
    k.add_argument("--out")
    k.set_defaults(func=cmd_kernel)

    s = sub.add_parser("simulate", help="run the Galerkin integrator from a JSON config")
    s.add_argument("config")
    s.add_argument("--out", help="trajectory file (overrides the config's 'output')")
    s.add_argument("--summary", help="also write the summary JSON here")
    s.add_argument("--constants", help="constants certificate to take K and N from")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="solve and check the control inequality")
    v.add_argument("trajectory", nargs="?")
    v.add_argument("--series", help="JSON with times, D, E instead of a trajectory")
    v.add_argument("--omega", type=float, default=0.7)
    v.add_argument("--constants", help="constants certificate to take K from")
    v.add_argument("--K", type=float, default=None)
    v.add_argument("--safety", type=float, default=1.1)
    v.add_argument("--reference", help="higher-resolution trajectory to compare against")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be >= 1")
        set_fft_workers(args.threads)
    try:
        return args.func(args)
    except (UsageError, FieldFormatError) as exc:
        print(f"torusns {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (PicardError, QuadratureError) as exc:
        print(f"torusns {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
