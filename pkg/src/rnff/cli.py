"""Command line front end: ``rnff simulate|analyze|verify|kaczmarz``.

Exit codes: 0 success, 2 invalid configuration or input, 3 a verified bound
was violated, 4 a capability or budget limit was hit.
"""

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    derive_coercivity,
    enumerate_expectation,
    frame_energy_report,
    rate_constants,
    verify_mean_square_bound,
)
from .config import ESTIMATOR_STREAM, load_config
from .exceptions import BudgetExceededError, CapabilityError, InadmissibleConstantsError, ValidationError
from .iteration import certify_truncation, run_ensemble, run_iteration, telescoping_errors
from .kaczmarz import SAMPLING_MODES, load_system, predicted_rates, solve_rkaczmarz
from .linalg import as_vector, substream

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_VIOLATION = 3
EXIT_CAPABILITY = 4

SIG_DIGITS = 12


def fmt(x):
    """A float at 12 significant digits, as text."""
    return format(float(x), f".{SIG_DIGITS}g")


def _num(x):
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(fmt(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n")


def _output(cfg, out_dir, key, default):
    name = cfg.outputs.get(key, default) if cfg is not None else default
    p = Path(name)
    return p if p.is_absolute() else Path(out_dir) / p


def _provenance(cfg):
    return {"config_sha256": cfg.digest(), "master_seed": cfg.master_seed, "tool_version": __version__}


def constants_for(cfg):
    """Coercivity route plus rate constants, honoring config overrides."""
    rng = substream(cfg.master_seed, ESTIMATOR_STREAM)
    route = derive_coercivity(cfg.family, n_samples=cfg.estimator_samples, rng=rng)
    C = cfg.overrides.get("C", route.C)
    constants = rate_constants(cfg.alpha, C)
    if "rho" in cfg.overrides:
        rho = float(cfg.overrides["rho"])
        ok = 0.0 < constants.C < 1.0 and rho < 1.0
        gamma = -0.5 * math.log(rho) if ok else None
        if not ok:
            upper = None
        elif cfg.alpha <= 0.5:
            upper = 1.0
        else:
            upper = 1.0 + (2 * cfg.alpha - 1) / cfg.alpha * rho / (1 - rho)
        constants = dataclasses.replace(constants, rho=rho, gamma=gamma, U_alpha=upper, admissible=ok)
    return route, constants


def _route_block(route):
    est = route.estimate
    block = {"route": route.route, "rigorous": route.rigorous, "C": route.C}
    if route.route == "probe":
        block.update(
            note="statistical upper estimate of the infimum over probed directions; not a certificate",
            empirical_C=est.empirical_C,
            std_error=est.std_error,
            n_probes=est.n_probes,
            n_samples=est.n_samples,
        )
    else:
        block.update(
            kind=est.kind,
            matrix=est.matrix,
            lambda_min=est.lambda_min,
            lambda_max=est.lambda_max,
            derived_C=est.derived_C,
            n_samples=est.n_samples,
            std_error=est.std_error,
        )
    return block


def _constants_block(c):
    return {"alpha": c.alpha, "C": c.C, "rho": c.rho, "gamma": c.gamma, "U_alpha": c.U_alpha, "admissible": c.admissible}


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, out_dir, n_jobs=1):
    ens = run_ensemble(cfg.family, cfg.x0(), cfg.n_steps, cfg.n_trials, cfg.master_seed, n_jobs=n_jobs)
    path = _output(cfg, out_dir, "trace_csv", "trace.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    cum = np.cumsum(ens.atom_norms_sq, axis=1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "n", "residual_norm_sq", "atom_norm_sq", "cum_energy"])
        for t in range(ens.n_trials):
            w.writerow([t, 0, fmt(ens.residual_norms_sq[t, 0]), "", fmt(0.0)])
            for n in range(1, cfg.n_steps + 1):
                w.writerow(
                    [t, n, fmt(ens.residual_norms_sq[t, n]), fmt(ens.atom_norms_sq[t, n - 1]), fmt(cum[t, n - 1])]
                )
    return EXIT_OK


def cmd_analyze(cfg, out_dir, n_jobs=1):
    route, constants = constants_for(cfg)
    doc = _constants_block(constants)
    doc["coercivity"] = _route_block(route)
    doc["verdicts"] = [
        {
            "name": "admissible",
            "passes": constants.admissible,
            "method": "closed-form" if route.rigorous else route.route,
            "tolerance": 0.0,
            "margin": 1.0 - constants.rho,
        }
    ]
    doc["provenance"] = _provenance(cfg)
    write_json(_output(cfg, out_dir, "report_json", "report.json"), doc)
    return EXIT_OK


def _verdict(name, passes, method, tolerance, margin, informational=False, **details):
    v = {"name": name, "passes": bool(passes), "method": method, "tolerance": tolerance, "margin": margin}
    if informational:
        v["informational"] = True
    v.update(details)
    return v


def cmd_verify(cfg, out_dir, n_jobs=1):
    path = _output(cfg, out_dir, "report_json", "verify.json")
    doc = {"provenance": _provenance(cfg)}
    route, constants = constants_for(cfg)
    doc.update(_constants_block(constants))
    doc["coercivity"] = _route_block(route)
    doc["method"] = cfg.method
    verdicts = doc["verdicts"] = []
    x0 = cfg.x0()
    nsq = float(x0 @ x0)
    try:
        if not constants.admissible:
            raise InadmissibleConstantsError(
                f"constants inadmissible (C={constants.C}, rho={constants.rho}); verification refused"
            )
        if cfg.method == "exact":
            enum = enumerate_expectation(cfg.family, x0, cfg.n_steps)
            ms = verify_mean_square_bound(enum.residual_sq, constants, nsq)
            expectations, ses = enum.residual_sq, None
        else:
            ens_ms = run_ensemble(cfg.family, x0, cfg.n_steps, cfg.n_trials, cfg.master_seed, n_jobs=n_jobs)
            expectations, ses = ens_ms.mean_residual_sq()
            ms = verify_mean_square_bound(expectations, constants, nsq, std_errors=ses)
        verdicts.append(
            _verdict(
                "mean_square_bound",
                ms.passes,
                ms.method,
                float(np.max(ms.tolerances)),
                ms.worst_margin,
                expectations=expectations,
                std_errors=ses,
                margins=ms.margins,
                tight=ms.tight,
            )
        )
        if cfg.n_steps >= 1:
            fr = frame_energy_report(
                cfg.family,
                x0,
                cfg.n_steps,
                constants,
                method=cfg.method,
                n_trials=cfg.n_trials,
                master_seed=cfg.master_seed,
                n_jobs=n_jobs,
            )
            final = float(fr.cumulative_energy[-1])
            verdicts.append(
                _verdict(
                    "frame_energy_bounds",
                    fr.passes,
                    fr.method,
                    fr.tolerance,
                    min(final - fr.lower_bound, fr.upper_bound - final),
                    cumulative_energy=fr.cumulative_energy,
                    lower_bound=fr.lower_bound,
                    upper_bound=fr.upper_bound,
                    lower_met_at_first_step=fr.lower_met_at_first_step,
                    stopped_at=fr.stopped_at,
                )
            )
        trace = run_iteration(cfg.family, x0, cfg.n_steps, substream(cfg.master_seed, 0), store_atoms=True)
        tol = 1e-10 * (1.0 + math.sqrt(nsq))
        worst = float(np.max(telescoping_errors(trace)))
        verdicts.append(_verdict("telescoping_identity", worst <= tol, "pathwise", tol, tol - worst))
        if cfg.n_steps >= 1 and nsq > 0:
            eps = cfg.epsilon if cfg.epsilon is not None else 0.1 * constants.gamma
            if not 0 < eps < constants.gamma:
                raise ValidationError(f"{cfg.source}: epsilon must lie in (0, gamma={constants.gamma}), got {eps}")
            ens = run_ensemble(cfg.family, x0, cfg.n_steps, cfg.n_trials, cfg.master_seed, n_jobs=n_jobs)
            certs = [certify_truncation(t, constants.gamma, eps) for t in ens.traces()]
            reached = [c.first_index for c in certs if c.reached]
            frac = len(reached) / len(certs)
            verdicts.append(
                _verdict(
                    "truncation_certificate",
                    frac >= 0.99,
                    "pathwise",
                    0.01,
                    frac - 0.99,
                    informational=True,
                    epsilon=eps,
                    theta=certs[0].theta,
                    fraction_reached=frac,
                    max_first_index=max(reached) if reached else None,
                    horizon=cfg.n_steps,
                )
            )
    except (CapabilityError, ValidationError) as exc:
        doc["error"] = str(exc)
        write_json(path, doc)
        raise
    write_json(path, doc)
    failed = [v["name"] for v in verdicts if not v["passes"] and not v.get("informational")]
    if failed:
        print(f"bound violated: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_kaczmarz(args):
    system = load_system(args.matrix_file)
    if args.x_start_true:
        if system.x_true is None:
            raise ValidationError("--x-start-true needs an x_true line in the system file")
        x_start = system.x_true
    elif args.x_start is not None:
        x_start = as_vector([float(t) for t in args.x_start.split(",")], dim=system.dim, name="--x-start")
    else:
        x_start = None
    seed = 0 if args.seed is None else args.seed
    x, trace = solve_rkaczmarz(system, args.sampling, x_start, args.steps, substream(seed, 0))
    rates = predicted_rates(system, args.sampling)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "kaczmarz_errors.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "error_norm"])
        for k, e in enumerate(trace.error_norms):
            w.writerow([k, fmt(e)])
    doc = {
        "C": rates.C,
        "gamma": rates.gamma,
        "solver_rate": rates.solver_rate,
        "lambda_min_sigma": rates.lambda_min,
        "lambda_max_sigma": rates.lambda_max,
        "notes": {
            "gamma": "almost-sure exponent of the frame residuals R_n, from C = 1 - lambda_max(Sigma)",
            "solver_rate": "mean-square per-step contraction bound of the solver error, 1 - lambda_min(Sigma)",
        },
        "sampling": args.sampling,
        "n_steps": args.steps,
        "error_kind": trace.kind,
        "final_error": float(trace.error_norms[-1]) if trace.error_norms.size else None,
        "x_final": x,
        "provenance": {"system_file": str(args.matrix_file), "master_seed": seed, "tool_version": __version__},
    }
    write_json(out / "kaczmarz_summary.json", doc)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "verify": cmd_verify}


def build_parser():
    parser = argparse.ArgumentParser(prog="rnff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rnff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--trials", type=int, help="override n_trials")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for trial batches")
    k = sub.add_parser("kaczmarz")
    k.add_argument("matrix_file")
    k.add_argument("--steps", type=int, default=1000)
    k.add_argument("--sampling", choices=SAMPLING_MODES, default="uniform")
    k.add_argument("--seed", type=int)
    k.add_argument("--out", default=".")
    k.add_argument("--x-start", help="comma-separated starting vector")
    k.add_argument("--x-start-true", action="store_true", help="start from the system's x_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "kaczmarz":
            return cmd_kaczmarz(args)
        cfg = load_config(args.config, seed=args.seed, trials=args.trials)
        return COMMANDS[args.command](cfg, args.out, n_jobs=args.jobs)
    except (BudgetExceededError, InadmissibleConstantsError, CapabilityError) as exc:
        print(f"rnff: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except ValidationError as exc:
        print(f"rnff: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
