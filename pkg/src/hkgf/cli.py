"""Command-line front end.

Every command reads one JSON config (``--config``), writes plot-ready CSV and
JSON into ``--out`` and exits with 0 on success, 1 on configuration errors
and 2 on numerical failures. A config may hold a list of runs under
``"runs"``; ``--jobs`` fans those out over processes.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from hkgf.core import CotangentHK, GaussianTarget, ScaledGaussianParams, gaussian_kl
from hkgf.errors import ConfigError, HKGFError, IntegrationError, MonotonicityError, NumericalError
from hkgf.potentials import PotentialTarget

log = logging.getLogger("hkgf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

# -- schemas -------------------------------------------------------------------------------------

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_positive = {"type": "number", "exclusiveMinimum": 0}
_weight = {"type": "number", "minimum": 0}

_gaussian_target = {
    "type": "object",
    "properties": {"gamma": _matrix, "n": _vector, "varkappa": _positive},
    "required": ["gamma", "n"],
    "additionalProperties": False,
}
_logistic_target = {
    "type": "object",
    "properties": {
        "kind": {"const": "logistic"},
        "data": {"type": "string"},
        "reg_lambda": _positive,
        "include_intercept": {"type": "boolean"},
        "prior_precision": _weight,
    },
    "required": ["kind", "data"],
    "additionalProperties": False,
}
_point = {
    "type": "object",
    "properties": {"sigma": _matrix, "m": _vector, "kappa": _positive},
    "required": ["sigma", "m"],
    "additionalProperties": False,
}
_estimator = {
    "type": "object",
    "properties": {
        "mode": {"enum": ["exact_gaussian", "monte_carlo", "gauss_hermite"]},
        "n_mc": {"type": "integer", "minimum": 1},
        "nodes_per_dim": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}
_common = {"alpha": _weight, "beta": _weight, "seed": {"type": "integer", "minimum": 0}}


def _schema(props, required, target=_gaussian_target):
    properties = dict(_common, **props)
    if target is not None:
        properties["target"] = target
    return {"type": "object", "properties": properties, "required": required, "additionalProperties": False}


SCHEMAS = {
    "flow": _schema(
        {
            "initial": _point,
            "dt": _positive,
            "t_end": _positive,
            "integrator": {"enum": ["rk4", "euler"]},
            "track_mass": {"type": "boolean"},
            "save_every": {"type": "integer", "minimum": 1},
            "track_eigen": {"type": "boolean"},
            "estimator": _estimator,
        },
        ["target", "initial", "alpha", "beta"],
        {"oneOf": [_gaussian_target, _logistic_target]},
    ),
    "descent": _schema(
        {
            "initial": _point,
            "tau": _positive,
            "n_steps": {"type": "integer", "minimum": 1},
            "n_mc": {"type": "integer", "minimum": 1},
            "resample_midstep": {"type": "boolean"},
            "track_mass": {"type": "boolean"},
            "estimator": _estimator,
            "compare": {"type": "boolean"},
        },
        ["target", "initial", "alpha", "beta", "tau", "n_steps"],
        {"oneOf": [_gaussian_target, _logistic_target]},
    ),
    "decay-report": _schema(
        {
            "initial": _point,
            "dt": _positive,
            "t_end": _positive,
            "modes": {"type": "array", "items": {"enum": ["refined", "pl_global", "pl_sublevel"]}},
        },
        ["target", "initial", "alpha", "beta"],
    ),
    "convexity-scan": _schema(
        {
            "n_samples": {"type": "integer", "minimum": 1},
            "sublevel": _positive,
            "centered": {"type": "boolean"},
            "witness_distances": _vector,
        },
        ["target", "alpha", "beta"],
    ),
    "geodesic": _schema(
        {
            "initial": _point,
            "costate": {
                "type": "object",
                "properties": {"S": _matrix, "mu": _vector, "k": {"type": "number"}},
                "required": ["S", "mu"],
                "additionalProperties": False,
            },
            "s_end": {"type": "number"},
            "ds": _positive,
            "normalized": {"type": "boolean"},
            "target": _gaussian_target,
        },
        ["initial", "costate", "alpha", "beta", "s_end"],
        None,
    ),
}


def validate(command, cfg):
    """Check ``cfg`` against the schema of ``command``; errors name the JSON pointer."""
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"{pointer}: {exc.message}") from None
    return cfg


# -- builders --------------------------------------------------------------------------------------


def _target(obj, base_dir):
    from hkgf.potentials import load_logistic_csv, logistic_potential

    if obj.get("kind") == "logistic":
        path = Path(obj["data"])
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"/target/data: dataset {path} not found")
        data = load_logistic_csv(path, obj.get("reg_lambda", 1.0), obj.get("include_intercept", False))
        return logistic_potential(data, obj.get("prior_precision", 0.0))
    return GaussianTarget.from_json(obj)


def _point(obj):
    return ScaledGaussianParams.from_json(obj)


def _estimator_for(cfg, target, default_mode, n_mc=None):
    from hkgf.potentials import MomentEstimator

    opts = dict(cfg.get("estimator", {}))
    mode = opts.pop("mode", default_mode)
    if n_mc is not None:
        opts.setdefault("n_mc", n_mc)
    if mode == "exact_gaussian" and isinstance(target, PotentialTarget) and target.exact is None:
        raise ConfigError("/estimator/mode: exact moments need a Gaussian target")
    return MomentEstimator(mode, seed=cfg.get("seed", 0), **opts)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _check_dim(target, p0):
    dim = target.dim
    if p0.dim != dim:
        raise ConfigError(f"/initial: dimension {p0.dim} does not match the target dimension {dim}")


# -- commands ----------------------------------------------------------------------------------------


def cmd_flow(cfg, out, base_dir):
    from hkgf.decay import fit_rate
    from hkgf.flow import FlowConfig, integrate, rhs_general_target

    target = _target(cfg["target"], base_dir)
    p0 = _point(cfg["initial"])
    _check_dim(target, p0)
    fc = FlowConfig(cfg["alpha"], cfg["beta"], cfg.get("dt", 1e-3), cfg.get("t_end", 1.0),
                    cfg.get("integrator", "rk4"), cfg.get("track_mass", True), cfg.get("save_every", 1))
    if isinstance(target, PotentialTarget):
        est = _estimator_for(cfg, target, "monte_carlo")
        traj = integrate(rhs_general_target, p0, fc, target, est=est, seed=cfg.get("seed", 0))
    else:
        traj = integrate(None, p0, fc, target, track_eigen=cfg.get("track_eigen", False))
    traj.to_csv(out / "trajectory.csv")
    summary = {
        "final": traj.point(len(traj) - 1).to_json(),
        "final_energy": float(traj.energy_total[-1]),
        "fitted_rate_energy": fit_rate(traj.times, traj.energy_total),
        "fitted_rate_cov": 0.5 * fit_rate(traj.times, traj.h_cov),
        "fitted_rate_mean": fit_rate(traj.times, traj.h_mean),
        "n_points": len(traj),
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_descent(cfg, out, base_dir):
    from hkgf.descent import DescentConfig, gaussian_potential, run_descent, write_descent_outputs

    target = _target(cfg["target"], base_dir)
    p0 = _point(cfg["initial"])
    _check_dim(target, p0)
    pot = target if isinstance(target, PotentialTarget) else gaussian_potential(target)
    default_mode = "exact_gaussian" if pot.gaussian is not None else "monte_carlo"
    est = _estimator_for(cfg, pot, default_mode, n_mc=cfg.get("n_mc", 1))
    # the mass step needs the normalizer, which a logistic target does not provide
    track_mass = cfg.get("track_mass", pot.gaussian is not None)

    def run(alpha, beta):
        dc = DescentConfig(alpha, beta, cfg["tau"], cfg["n_steps"], cfg.get("n_mc", 1),
                           cfg.get("resample_midstep", False), cfg.get("seed", 0), track_mass)
        return run_descent(dc, p0, pot, est)

    traj = run(cfg["alpha"], cfg["beta"])
    summary = write_descent_outputs(traj, out / "descent.csv", out / "summary.json")
    if cfg.get("compare", False):
        w = max(cfg["alpha"], cfg["beta"])
        kl = {"hk": traj.free_energy, "fr": run(0.0, w).free_energy, "bw": run(w, 0.0).free_energy}
        k = np.arange(traj.free_energy.shape[0])
        np.savetxt(out / "comparison.csv", np.column_stack([k, k * cfg["tau"], kl["hk"], kl["fr"], kl["bw"]]),
                   delimiter=",", header="k,t,kl_hk,kl_fr,kl_bw", comments="", fmt="%.17g")
        summary["comparison"] = {name: float(v[-1]) for name, v in kl.items()}
        _write_json(out / "summary.json", summary)
    return summary


def cmd_decay_report(cfg, out, base_dir):
    from hkgf.decay import b_min, refined_rates, verify_decay
    from hkgf.flow import FlowConfig, integrate

    target = _target(cfg["target"], base_dir)
    if isinstance(target, PotentialTarget):
        raise ConfigError("/target: decay reports need a Gaussian target")
    p0 = _point(cfg["initial"])
    _check_dim(target, p0)
    alpha, beta = cfg["alpha"], cfg["beta"]
    rates = refined_rates(alpha, beta, target, b_min(p0.Sigma, target))
    t_end = cfg.get("t_end", 10.0 / rates.nu_cov)
    fc = FlowConfig(alpha, beta, cfg.get("dt", t_end / 2000), t_end, track_mass=False)
    traj = integrate(None, p0, fc, target)
    traj.to_csv(out / "trajectory.csv")
    reports = {mode: verify_decay(traj, rates, mode, target=target).to_json()
               for mode in cfg.get("modes", ["refined", "pl_global", "pl_sublevel"])}
    summary = {"rates": rates.to_json(), "reports": reports,
               "passed": all(r["status"] in ("pass", "vacuous") for r in reports.values())}
    _write_json(out / "decay_report.json", summary)
    return summary


def cmd_convexity_scan(cfg, out, base_dir):
    from hkgf.geometry import convexity_scan, witness_sequence

    target = _target(cfg["target"], base_dir)
    alpha, beta = cfg["alpha"], cfg["beta"]
    rep = convexity_scan(alpha, beta, target, cfg.get("n_samples", 10_000), cfg.get("seed", 0),
                         sublevel=cfg.get("sublevel"), centered=cfg.get("centered", False))
    summary = rep.to_json()
    summary["nu_min_gamma_inv"] = float(np.linalg.eigvalsh(target.Gamma_inv)[0])
    if "witness_distances" in cfg:
        seq = witness_sequence(alpha, beta, target, tuple(cfg["witness_distances"]))
        summary["witness_sequence"] = [{"distance": L, "quotient": q} for L, q, _ in seq]
    _write_json(out / "scan.json", summary)
    return summary


def cmd_geodesic(cfg, out, base_dir):
    from hkgf.core import relative_entropy
    from hkgf.geometry import GeodesicState, hamiltonian, integrate_geodesic

    p0 = _point(cfg["initial"])
    c = cfg["costate"]
    eta = CotangentHK(np.asarray(c["S"], dtype=float), c["mu"], c.get("k", 0.0))
    normalized = cfg.get("normalized", True)
    if normalized and p0.kappa != 1.0:
        raise ConfigError("/initial/kappa: normalized geodesics need kappa = 1")
    st = GeodesicState(p0, eta, normalized)
    path = integrate_geodesic(cfg["alpha"], cfg["beta"], st, cfg["s_end"], cfg.get("ds", 1e-3))
    target = GaussianTarget.from_json(cfg["target"]) if "target" in cfg else None
    d = p0.dim
    names = ["s"] + [f"sigma_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
    names += [f"m_{i + 1}" for i in range(d)] + ["kappa", "hamiltonian"] + (["energy"] if target else [])
    rows = []
    N = len(path) - 1
    for i, s in enumerate(path):
        q = s.point
        row = [cfg["s_end"] * i / N, *q.Sigma.ravel(), *q.m, q.kappa, hamiltonian(cfg["alpha"], cfg["beta"], s)]
        if target is not None:
            row.append(gaussian_kl(q.Sigma, q.m, target) if normalized else relative_entropy(q, target))
        rows.append(row)
    np.savetxt(out / "geodesic.csv", np.array(rows), delimiter=",", header=",".join(names), comments="",
               fmt="%.17g")
    H = np.array(rows)[:, len(names) - (2 if target else 1)]
    summary = {"final": path[-1].point.to_json(), "hamiltonian_drift": float(np.max(np.abs(H - H[0])))}
    _write_json(out / "geodesic.json", summary)
    return summary


COMMANDS = {
    "flow": cmd_flow,
    "descent": cmd_descent,
    "decay-report": cmd_decay_report,
    "convexity-scan": cmd_convexity_scan,
    "geodesic": cmd_geodesic,
}


def cmd_verify(args):
    from hkgf.acceptance import run_acceptance

    results = run_acceptance(args.filter)
    for r in results:
        print(r.line())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "verify.json", [r.to_json() for r in results])
    if not results:
        log.error("no criterion matches %r", args.filter)
        return EXIT_CONFIG
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


# -- driver ----------------------------------------------------------------------------------------


def _run_one(command, cfg, out, base_dir):
    """Validate and run one config; returns an exit code (used in worker processes too)."""
    try:
        validate(command, cfg)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[command](cfg, out, base_dir)
        return EXIT_OK
    except (ConfigError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (IntegrationError, MonotonicityError, NumericalError, ArithmeticError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except HKGFError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL


def _load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="hkgf", description="Reduced HK gradient flows on Gaussians.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["verify"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "verify", help="JSON config file")
        p.add_argument("--out", default=None if name == "verify" else "out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="processes for multi-run configs")
        p.add_argument("--filter", default=None, help="criterion names or numbers, comma separated")
    return parser


def main(argv=None):
    logging.basicConfig(level=os.environ.get("HKGF_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return cmd_verify(args)
    try:
        doc = _load_config(args.config)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    base_dir = Path(args.config).resolve().parent
    runs = doc["runs"] if isinstance(doc, dict) and isinstance(doc.get("runs"), list) else [doc]
    if not runs or not all(isinstance(r, dict) for r in runs):
        log.error("config error: /: expected an object or {\"runs\": [objects]}")
        return EXIT_CONFIG
    if args.seed is not None:
        runs = [dict(r, seed=args.seed) for r in runs]
    out = Path(args.out)
    outs = [out] if len(runs) == 1 else [out / f"run_{i:03d}" for i in range(len(runs))]
    if args.jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_one, [args.command] * len(runs), runs, outs, [base_dir] * len(runs)))
    else:
        codes = [_run_one(args.command, r, o, base_dir) for r, o in zip(runs, outs)]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
