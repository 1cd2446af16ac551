"""Batch command-line front end: JSON configs in, JSON reports and CSV tables out."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path
from typing import Any

from .errors import ConfigError, SurfhelError

COMMANDS = ("geom", "basis", "helicity", "eigen", "iota", "trace", "link", "solve", "sweep", "verify")

# Keys accepted in a --config file. Solve/sweep use the coil block.
COMMON_KEYS = {"surface", "res", "seed", "threads", "out"}
COMMAND_KEYS = {
    "geom": set(),
    "basis": set(),
    "helicity": set(),
    "eigen": set(),
    "iota": {"field", "transits", "start"},
    "trace": {"field", "T", "start", "samples"},
    "link": {"field", "pairs", "T", "tau", "mode"},
    "solve": {"cws", "plasma", "target", "lambda", "lambdas", "modes", "simple", "plasma_nodes"},
    "sweep": {"cws", "plasma", "target", "lambdas", "modes", "simple", "plasma_nodes"},
    "verify": set(),
}
DEFAULTS = {"res": 64, "seed": 0, "modes": 8, "pairs": 1000, "transits": 1000, "simple": True,
            "field": {"toroidal": 1.0, "poloidal": 1.0}, "start": [0.3, 0.1], "T": 50.0,
            "samples": 1024, "mode": "periodic", "lambdas": [10.0 ** -k for k in range(8)]}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surfhel", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with command parameters")
    p.add_argument("--surface", help="surface JSON file")
    p.add_argument("--res", type=int, help="grid points per angle")
    p.add_argument("--modes", type=int, help="current-potential mode cutoff (m, |n| <= modes)")
    p.add_argument("--lambda", dest="lambda_", type=float, help="regularisation weight for solve")
    p.add_argument("--pairs", type=int, help="Monte-Carlo pairs for link")
    p.add_argument("--transits", type=int, help="toroidal transits for iota")
    p.add_argument("--tau", type=float, help="offset distance for link --mode offset")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="BLAS threads; results do not depend on it")
    p.add_argument("--out", help="report path; CSV tables go next to it")
    return p


def load_config(path: str | None, command: str) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    allowed = COMMON_KEYS | COMMAND_KEYS[command]
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    base = Path(path).parent
    for key in ("surface", "cws", "plasma"):
        if isinstance(cfg.get(key), str) and not Path(cfg[key]).is_absolute():
            cfg[key] = str(base / cfg[key])
    return cfg


def merge(args: argparse.Namespace, cfg: dict[str, Any]) -> dict[str, Any]:
    out = {**DEFAULTS, **cfg}
    flags = {"surface": args.surface, "res": args.res, "modes": args.modes, "lambda": args.lambda_,
             "pairs": args.pairs, "transits": args.transits, "tau": args.tau, "seed": args.seed,
             "threads": args.threads, "out": args.out}
    out.update({k: v for k, v in flags.items() if v is not None})
    if out["res"] < 8:
        raise ConfigError("res must be at least 8")
    if out.get("threads") is not None and int(out["threads"]) < 1:
        raise ConfigError("threads must be positive")
    return out


def _surface(path):
    from .geometry import FourierTorus

    if path is None:
        raise ConfigError("a surface file is required (--surface)")
    return FourierTorus.load(path)


def _ladder(res: int) -> dict[str, float]:
    from .helicity import quadrature_tolerance

    return {"quadrature": quadrature_tolerance(res), "laplace_cg_rtol": 1e-14, "ode_rtol": 1e-10,
            "constraint": 1e-12}


def _field(basis, desc):
    from .windings import winding_field

    if not isinstance(desc, dict) or set(desc) - {"toroidal", "poloidal"}:
        raise ConfigError("field must be an object with keys toroidal, poloidal")
    return winding_field(basis, float(desc.get("toroidal", 1.0)), float(desc.get("poloidal", 1.0)))


def _floats(x):
    """Make numpy values JSON-friendly."""
    import numpy as np

    if isinstance(x, dict):
        return {str(k): _floats(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_floats(v) for v in x]
    if isinstance(x, np.ndarray):
        return _floats(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


# --- commands --------------------------------------------------------------------------------

def cmd_geom(o):
    import numpy as np

    from .geometry import build_grid, estimate_constants

    g = build_grid(_surface(o.get("surface")), o["res"])
    c = estimate_constants(g)
    vol = float(np.sum(g.weights * np.einsum("...i,...i", g.x, g.normal)) / 3.0)
    return {"area": g.area, "volume": vol, "chart_orientation": g.orientation,
            "jacobian_min": float(g.jac.min()), "min_spacing": g.min_spacing, "max_spacing": g.max_spacing,
            "c": c.c, "delta": c.delta, "tau_max": c.tau_max, "focal": c.focal}, {}


def cmd_basis(o):
    from .calculus import harmonic_basis, weak_residuals
    from .geometry import build_grid

    g = build_grid(_surface(o.get("surface")), o["res"])
    b = harmonic_basis(g)
    fields = {"gamma": b.gamma, "gamma_tilde": b.gamma_tilde, "gamma_t": b.gamma_t, "gamma_p": b.gamma_p}
    res = {k: dict(zip(("divergence", "curl"), weak_residuals(f))) for k, f in fields.items()}
    tables = {k: (("i", "j", "v_theta", "v_phi"), f.to_rows()) for k, f in fields.items()}
    return {"periods": b.periods, "norm_gamma_t": b.norm_gamma_t, "weak_residuals": res}, tables


def _matrix_report(o):
    from .calculus import harmonic_basis
    from .geometry import build_grid
    from .helicity import helicity_gamma_line, helicity_matrix

    g = build_grid(_surface(o.get("surface")), o["res"])
    b = harmonic_basis(g)
    M = helicity_matrix(b)
    return b, M, helicity_gamma_line(b)


def cmd_helicity(o):
    _, M, h_line = _matrix_report(o)
    return {"M": M.M, "H_gamma": M.h_gamma, "H_gamma_line": h_line, "det": M.det, "trace": M.trace,
            "cross_helicity_doubled": 2 * M.M[0, 1], "symmetry_defect": abs(M.M[0, 1] - M.M[1, 0])}, {}


def cmd_eigen(o):
    from .helicity import eigen_values

    _, M, h_line = _matrix_report(o)
    lp, lm = eigen_values(M.h_gamma)
    lp_line, lm_line = eigen_values(h_line)
    return {"H_gamma": M.h_gamma, "M": M.M, "lambda_plus": lp, "lambda_minus": lm, "Lambda": max(lp, lm),
            "residuals": {"det_plus_quarter": M.det + 0.25, "H_gamma_routes": M.h_gamma - h_line,
                          "lambda_plus_routes": lp - lp_line, "lambda_minus_routes": lm - lm_line}}, {}


def _basis_and_field(o):
    from .calculus import harmonic_basis
    from .geometry import build_grid

    g = build_grid(_surface(o.get("surface")), o["res"])
    b = harmonic_basis(g)
    return b, _field(b, o["field"])


def cmd_iota(o):
    from .windings import iota_formula, iota_traced

    b, w = _basis_and_field(o)
    formula = iota_formula(w, b)
    traced = iota_traced(w, o["start"], int(o["transits"]))
    return {"iota_formula": formula, "iota_traced": traced, "difference": traced - formula,
            "transits": o["transits"], "start": o["start"]}, {}


def cmd_trace(o):
    from .windings import average_windings, trace_field_line

    b, w = _basis_and_field(o)
    line = trace_field_line(w, o["start"], float(o["T"]), int(o["samples"]))
    Q, P = average_windings(w, b)
    rows = list(zip(line.t.tolist(), line.theta.tolist(), line.phi.tolist()))
    return {"T": o["T"], "start": o["start"], "nfev": line.nfev, "Q_bar": Q, "P_bar": P,
            "end": [line.theta[-1], line.phi[-1]]}, {"trajectory": (("t", "theta", "phi"), rows)}


def cmd_link(o):
    from .linking import helicity_via_linking

    _, w = _basis_and_field(o)
    T = float(o["T"]) if o["mode"] == "offset" else None
    est = helicity_via_linking(w, int(o["pairs"]), T=T, mode=o["mode"], tau=o.get("tau"), seed=int(o["seed"]))
    d = est.as_dict()
    samples = d.pop("samples", None)
    tables = {}
    if samples is not None:
        tables["pairs"] = (("value",), [(float(s),) for s in samples])
    return d, tables


def _problem(o):
    from .coil import build_problem
    from .geometry import FourierTorus

    for key in ("cws", "plasma"):
        if key not in o:
            raise ConfigError(f"solve config needs '{key}'")
    target = o.get("target", {"type": "wire", "I": 1.0})
    if not isinstance(target, dict) or target.get("type") != "wire" or set(target) - {"type", "I"}:
        raise ConfigError("target must be {\"type\": \"wire\", \"I\": float}")
    return build_problem(FourierTorus.load(o["cws"]), FourierTorus.load(o["plasma"]), float(target.get("I", 1.0)),
                         res=o["res"], mpol=int(o["modes"]), ntor=int(o["modes"]),
                         plasma_nodes=o.get("plasma_nodes"))


def cmd_solve(o):
    from .coil import solve_current

    lam = o.get("lambda")
    if lam is None:
        raise ConfigError("solve needs --lambda or a 'lambda' config key")
    if not float(lam) > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    P = _problem(o)
    r = solve_current(P, float(lam), bool(o["simple"]))
    rows = [(kind, m, n, c) for (kind, m, n), c in zip(r.current.modes, r.current.phi_mn)]
    return {"lambda": r.lam, "misfit": r.misfit, "relative_misfit": r.relative_misfit, "penalty": r.penalty,
            "Q_bar": r.Q_bar, "objective": r.objective, "normal_residual": r.normal_residual,
            "a_pol": r.current.a_pol, "b_tor": r.current.b_tor, "simple": bool(o["simple"])}, \
        {"potential": (("kind", "m", "n", "coefficient"), rows)}


def cmd_sweep(o):
    from .coil import kernel_current, lambda_sweep

    P = _problem(o)
    rows, monotone = lambda_sweep(P, [float(x) for x in o["lambdas"]], bool(o["simple"]))
    K = kernel_current(P)
    table = [(r.lam, r.misfit, r.penalty, r.Q_bar) for r in rows]
    return {"monotone_misfit": monotone, "relative_misfit": [r.relative_misfit for r in rows],
            "kernel": {"sigma_min_ratio": K.ratio_min, "sigma_next_ratio": K.ratio_next, "gap": K.gap},
            "simple": bool(o["simple"])}, {"sweep": (("lambda", "misfit", "penalty", "Q_bar"), table)}


def cmd_verify(o):
    from .verify import run_checks

    rows = run_checks(_surface(o.get("surface")), o["res"], seed=int(o["seed"]))
    width = max(len(r["check"]) for r in rows)
    for r in rows:
        flag = "PASS" if r["passed"] else "FAIL"
        print(f"{flag}  {r['check']:<{width}}  value={r['value']:.6g}  tol={r['tol']:.3g}", file=sys.stderr)
    return {"checks": rows, "all_passed": all(r["passed"] for r in rows)}, {}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def write_outputs(report: dict, tables: dict, out: str | None) -> None:
    text = json.dumps(_floats(report), indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    for name, (header, rows) in tables.items():
        with open(path.with_name(f"{path.stem}_{name}.csv"), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            wr.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in _floats(rows)])


def _origin(exc: BaseException) -> str:
    """Name of the package module where the exception was raised."""
    tb, name = exc.__traceback__, __name__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("surfhel"):
            name = mod
        tb = tb.tb_next
    return name


def run(command: str, options: dict[str, Any]) -> dict:
    result, tables = HANDLERS[command](options)
    res = options["res"]
    report = {"command": command, "result": result,
              "resolution": {"n_theta": res, "n_phi": int(1.5 * res) if command in ("solve", "sweep") else res},
              "tolerances": _ladder(res), "seed": options["seed"]}
    write_outputs(report, tables, options.get("out"))
    return report


def _available_cpus() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        opts = merge(args, cfg)
        if opts.get("threads"):
            from threadpoolctl import threadpool_limits

            # OpenBLAS can crash when asked for more threads than it sized its buffers for
            with threadpool_limits(limits=min(int(opts["threads"]), _available_cpus())):
                run(args.command, opts)
        else:
            run(args.command, opts)
    except SurfhelError as exc:
        err = {"error": type(exc).__name__, "module": _origin(exc), "message": str(exc)}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
