"""Command-line front end: ``nappal solve|validate|report``.

Experiment configs are TOML::

    [problem]
    builder = "sharing"          # or "erm"; alternatively instance = "file.json"
    seed = 1
    [problem.params]             # builder parameters (SharingParams / ErmParams)
    N = 4
    [problem.overrides]          # optional scale factors on the recorded moduli
    L_G_scale = 1.0

    [solver]
    gamma = "auto"               # or a number
    gamma_safety = 1.05
    max_iters = 20000

    [output]
    trace = "trace.csv"
    summary = "summary.json"
    trace_stride = 1

Unknown keys anywhere are errors.
"""

import argparse
from dataclasses import fields
import json
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics as dg
from .bregman import BregmanKernel
from .exceptions import ConfigurationError
from .model import validate_problem
from .problems import BUILDERS, load_instance
from .solver import BREAKDOWN, CONVERGED, MAX_ITERS, SolverConfig, solve
from .trace import Trace, TraceFormatError

EXIT_OK, EXIT_CONFIG, EXIT_MAX_ITERS, EXIT_BREAKDOWN = 0, 1, 2, 3
_EXIT = {CONVERGED: EXIT_OK, MAX_ITERS: EXIT_MAX_ITERS, BREAKDOWN: EXIT_BREAKDOWN}

_SOLVER_KEYS = {f.name for f in fields(SolverConfig)} - {"kernel", "trace_stride"}
_SOLVER_KEYS |= {"kernel_weights"}
_OUTPUT_KEYS = {"trace", "summary", "trace_stride"}
_PROBLEM_KEYS = {"builder", "instance", "seed", "params", "overrides"}
_OVERRIDE_KEYS = {"L_G_scale", "L_H_scale", "L_theta_scale", "L_omega_scale"}


def _unknown(section, got, allowed):
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ConfigurationError(f"[{section}]: unknown key(s) {', '.join(extra)}")


def load_config(path):
    """Parse and check a TOML experiment config; returns a plain dict."""
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc
    _unknown("top level", cfg, {"problem", "solver", "output"})
    prob = cfg.get("problem")
    if not isinstance(prob, dict):
        raise ConfigurationError("missing [problem] section")
    _unknown("problem", prob, _PROBLEM_KEYS)
    if ("builder" in prob) == ("instance" in prob):
        raise ConfigurationError("[problem] needs exactly one of builder or instance")
    if "builder" in prob and prob["builder"] not in BUILDERS:
        raise ConfigurationError(
            f"unknown builder {prob['builder']!r} (choose from {sorted(BUILDERS)})")
    if "builder" in prob:
        allowed = {f.name for f in fields(BUILDERS[prob["builder"]][0])} - {"seed"}
        _unknown("problem.params", prob.get("params", {}), allowed)
    _unknown("problem.overrides", prob.get("overrides", {}), _OVERRIDE_KEYS)
    _unknown("solver", cfg.get("solver", {}), _SOLVER_KEYS)
    _unknown("output", cfg.get("output", {}), _OUTPUT_KEYS)
    cfg.setdefault("solver", {})
    cfg.setdefault("output", {})
    cfg["_dir"] = os.path.dirname(os.path.abspath(path))
    return cfg


def build_problem(cfg, seed_override=None):
    prob = cfg["problem"]
    if "instance" in prob:
        path = prob["instance"]
        if not os.path.isabs(path):
            path = os.path.join(cfg.get("_dir", "."), path)
        try:
            spec = load_instance(path)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigurationError(f"cannot load instance: {exc}") from exc
    else:
        params_cls, builder = BUILDERS[prob["builder"]]
        kw = dict(prob.get("params", {}))
        seed = prob.get("seed", 0) if seed_override is None else seed_override
        try:
            spec = builder(params_cls(seed=int(seed), **kw))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid problem parameters: {exc}") from exc
    for key, scale in prob.get("overrides", {}).items():
        if not (isinstance(scale, (int, float)) and scale >= 0):
            raise ConfigurationError(f"{key} must be a number >= 0")
        if key == "L_omega_scale":
            spec.L_omega_components = spec.L_omega_components * scale
        else:
            attr = key[:-len("_scale")]
            setattr(spec, attr, getattr(spec, attr) * scale)
    return spec


def solver_config(cfg, workers=None, trace_stride=None):
    sec = dict(cfg.get("solver", {}))
    gamma = sec.pop("gamma", "auto")
    if isinstance(gamma, str):
        if gamma != "auto":
            raise ConfigurationError('solver.gamma must be a number or "auto"')
        gamma = None
    weights = sec.pop("kernel_weights", None)
    kernel = BregmanKernel.euclidean() if weights is None else BregmanKernel.diagonal(weights)
    stride = cfg.get("output", {}).get("trace_stride", 1)
    if trace_stride is not None:
        stride = trace_stride
    if workers is not None:
        sec["workers"] = workers
    try:
        conf = SolverConfig(gamma=gamma, kernel=kernel, trace_stride=int(stride), **sec)
        conf.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid solver settings: {exc}") from exc
    return conf


def _vec(x):
    return [float(t) for t in np.asarray(x).ravel()]


def _iterate_dict(w):
    return {"u": _vec(w.u), "v": _vec(w.v), "p": _vec(w.p)}


def summary_dict(result, spec):
    best = result.best
    c = result.constants
    out = {
        "termination": result.termination,
        "message": result.message,
        "iterations": result.iterations,
        "trace_rows": len(result.trace),
        "final": _iterate_dict(result.final),
        "best": None if best is None else {
            "index": best.index, "step_norm": best.step_norm,
            "iterate": _iterate_dict(best.iterate),
            "certified_successor": _iterate_dict(best.certified),
            "xi_norm": best.xi_norm,
        },
        "gamma": result.gamma,
        "gamma_bound": result.gamma_bound,
        "constants": {"c1": c.c1, "c2": c.c2, "c3": c.c3, "c4": c.c4,
                      "L_G": spec.L_G, "L_H": spec.L_H, "L_omega": spec.L_omega,
                      "L_theta": spec.L_theta, "B_norm": spec.gram.norm,
                      "lambda_min": spec.gram.lam_min},
        "sup_h": result.sup_h,
        "violations": result.violations,
        "rate": None if result.rate is None else result.rate.to_dict(),
    }
    return out


def _err(msg):
    print(f"nappal: error: {msg}", file=sys.stderr)


def cmd_solve(config_path, out_dir=None, trace_stride=None, workers=None, seed_override=None):
    try:
        cfg = load_config(config_path)
        spec = build_problem(cfg, seed_override)
        conf = solver_config(cfg, workers, trace_stride)
        if out_dir is None:
            out_dir = "."
        os.makedirs(out_dir, exist_ok=True)
        result = solve(spec, conf)
    except ConfigurationError as exc:
        _err(exc)
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"output directory: {exc}")
        return EXIT_CONFIG
    out = cfg["output"]
    trace_path = os.path.join(out_dir, out.get("trace", "trace.csv"))
    summary_path = os.path.join(out_dir, out.get("summary", "summary.json"))
    result.trace.to_csv(trace_path)
    with open(summary_path, "w") as fh:
        json.dump(summary_dict(result, spec), fh, indent=1)
    last = result.trace[-1]
    print(f"{result.termination} after {result.iterations} iterations: "
          f"feas={last.feas_residual:.3e} cert={last.cert_bound:.3e} "
          f"gamma={result.gamma:.6g}")
    if result.termination == BREAKDOWN:
        _err(result.message)
    return _EXIT[result.termination]


def cmd_validate(config_path, seed_override=None, samples=1000):
    try:
        cfg = load_config(config_path)
        spec = build_problem(cfg, seed_override)
        solver_config(cfg)
    except ConfigurationError as exc:
        _err(exc)
        return EXIT_CONFIG
    reports = [validate_problem(spec)]
    if reports[0].ok:
        reports.append(dg.check_descent_inequalities(spec, sample_count=samples))
        reports.append(dg.finite_difference_check(spec))
    for rep in reports:
        print(rep)
    ok = all(r.ok for r in reports)
    print("validation passed" if ok else "validation FAILED")
    return EXIT_OK if ok else EXIT_CONFIG


def report_trace(trace):
    """Post-hoc summary of a trace as a dict (what ``report`` prints)."""
    k = trace["k"]
    feas = trace["feas_residual"]
    dw = np.sqrt(trace["du_norm"] ** 2 + trace["dv_norm"] ** 2 + trace["dp_norm"] ** 2)
    out = {"rows": len(trace), "final_k": int(k[-1]),
           "min_feas_residual": float(feas.min()), "final_feas_residual": float(feas[-1]),
           "final_cert_bound": float(trace["cert_bound"][-1]),
           "final_xi_norm": float(trace["xi_norm"][-1])}
    if len(trace) > 1:
        j = int(np.argmin(dw[1:])) + 1
        # row j carries ||w^{k_j - 1} - w^{k_j}||
        out["best_index"] = int(k[j]) - 1
        out["best_step_norm"] = float(dw[j])
        out["min_cert_bound"] = float(trace["cert_bound"][1:].min())
    out["violations"] = dg.trace_invariant_violations(trace)
    out["rate"] = dg.estimate_rate(trace).to_dict() if len(trace) >= 50 else None
    return out


def cmd_report(trace_path):
    try:
        trace = Trace.read_csv(trace_path)
        if len(trace) == 0:
            raise TraceFormatError("trace has no rows")
    except TraceFormatError as exc:
        _err(exc)
        return EXIT_CONFIG
    rep = report_trace(trace)
    for key, val in rep.items():
        if isinstance(val, dict):
            print(f"{key}:")
            for k2, v2 in val.items():
                print(f"  {k2}: {v2}")
        else:
            print(f"{key}: {val}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="nappal", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="build an instance, run the solver, write trace and summary")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=".", help="output directory")
    s.add_argument("--trace-stride", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--seed-override", type=int)
    v = sub.add_parser("validate", help="structural checks and constant falsification")
    v.add_argument("--config", required=True)
    v.add_argument("--seed-override", type=int)
    r = sub.add_parser("report", help="post-hoc analysis of a trace file")
    r.add_argument("trace")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config, args.out, args.trace_stride, args.workers,
                         args.seed_override)
    if args.command == "validate":
        return cmd_validate(args.config, args.seed_override)
    return cmd_report(args.trace)


if __name__ == "__main__":
    sys.exit(main())
