"""Batch command-line front end.

Every command reads its parameters from flags and, optionally, from a JSON
config file (``--config``) whose keys are the flag names with underscores
(``alpha_f``, ``cost_exponent``, ...) plus ``command``.  Flags win over the
config.  Artifacts are written atomically to ``--out`` (or to standard
output when no path is given), followed by a one-line JSON summary.

Exit codes: 0 success, 1 invalid input, 2 numerical non-convergence,
3 certificate violation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from typing import Callable, Optional, Sequence

from . import __version__
from .analytic import asymmetry_thresholds, cannibalization_gap_bound, phi_closed_form, phi_optimal_allocation, phi_star
from .errors import CertificateViolation, FlexMatchError, InvalidParamsError, NonConvergenceError
from .estimator import EstimateRequest, estimate, heatmap_grid, heatmap_ratio, sweep_allocations
from .experiment import LANDSCAPE_COLUMNS, ProfitSpec, landscape_grid, run_trajectory
from .graphs import FlexAllocation, ModelParams, Variant
from .ks_solver import mu_ks, solve_ks_fixed_point
from .output import CERTIFICATE_COLUMNS, ESTIMATE_COLUMNS, csv_text, json_text, resolve_threads, write_atomic
from .verifier import (
    SodCertificate,
    Verdict,
    certify_comparison_region,
    certify_sod_region,
    coupling_difference,
    coupling_inequality_check,
    exhaustive_coupling_sets,
    verify_f1_monotonicity_region,
)
from .matching import max_matching_size

COMMANDS = (
    "simulate", "sweep", "heatmap", "phi", "thresholds", "ks", "ks-sweep",
    "verify", "coupling", "experiment", "landscape",
)
EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_VIOLATION = 0, 1, 2, 3

SOD_COLUMNS = tuple(SodCertificate.__dataclass_fields__)
KS_SWEEP_COLUMNS = ("alpha", "alpha_f", "B", "mu_one_sided", "mu_balanced", "ratio")
TRAJECTORY_COLUMNS = ("step", "b_l", "b_r", "profit")

DEFAULTS = dict(
    alpha=0.5, alpha_f=1.0, B=1.0, bl=None, br=None, n=100, replicates=1000, seed=0,
    delta=0.01, eps=1e-8, gamma=0.02, c=0.4, cost_exponent=1.0, lam=None, k=None,
    variant="base", metric="mu", threads=None, out=None, format="csv",
    grid_points=11, alphas="0.05,0.1,0.2,0.3,0.4,0.5", gaps="0.5,1,2,3,4,5",
    alpha_min=1e-4, alpha_max=math.e, alpha_f_min=0.0, alpha_f_max=math.e,
    check="comparison", require_verified=False, mode="coordinate", max_steps=10_000,
    resolution=51, landscape_out=None, exhaustive_edges=None, tol=1e-12,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are validation errors
        raise InvalidParamsError(message)


def _common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON config; flags override its values")
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--alpha-f", dest="alpha_f", type=float, default=S)
    p.add_argument("--B", dest="B", default=S, help="budget; ks-sweep accepts a comma list")
    p.add_argument("--bl", type=float, default=S)
    p.add_argument("--br", type=float, default=S)
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--replicates", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--delta", type=float, default=S)
    p.add_argument("--eps", type=float, default=S)
    p.add_argument("--gamma", type=float, default=S)
    p.add_argument("--c", type=float, default=S)
    p.add_argument("--cost-exponent", dest="cost_exponent", type=float, default=S)
    p.add_argument("--lambda", dest="lam", type=float, default=S)
    p.add_argument("--k", type=int, default=S)
    p.add_argument("--variant", choices=[v.value for v in Variant], default=S)
    p.add_argument("--metric", default=S, help="metric name; simulate and sweep accept a comma list")
    p.add_argument("--threads", default=S, help="integer or 'auto' (default: $FLEXMATCH_THREADS or 1)")
    p.add_argument("--out", default=S)
    p.add_argument("--format", choices=["csv", "json"], default=S)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=S)
    p.add_argument("--alphas", default=S, help="comma list of alpha values (heatmap, ks-sweep)")
    p.add_argument("--gaps", default=S, help="comma list of alpha_f - alpha values (heatmap, ks-sweep)")
    p.add_argument("--alpha-min", dest="alpha_min", type=float, default=S)
    p.add_argument("--alpha-max", dest="alpha_max", type=float, default=S)
    p.add_argument("--alpha-f-min", dest="alpha_f_min", type=float, default=S)
    p.add_argument("--alpha-f-max", dest="alpha_f_max", type=float, default=S)
    p.add_argument("--check", choices=["comparison", "sod", "f1"], default=S)
    p.add_argument("--require-verified", dest="require_verified", action="store_true", default=S)
    p.add_argument("--mode", choices=["coordinate", "simultaneous", "joint"], default=S)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=S)
    p.add_argument("--resolution", type=int, default=S)
    p.add_argument("--landscape-out", dest="landscape_out", default=S)
    p.add_argument("--exhaustive-edges", dest="exhaustive_edges", type=int, default=S)
    p.add_argument("--tol", type=float, default=S)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flexmatch", description="Flexibility allocation in random bipartite matching markets.")
    p.add_argument("--version", action="version", version=f"flexmatch {__version__}")
    _common(p)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        _common(sub.add_parser(name))
    return p


def resolve_config(argv: Sequence[str]) -> dict:
    """Merge defaults < config file < flags."""
    ns = vars(build_parser().parse_args(list(argv)))
    cfg = dict(DEFAULTS)
    cfg["command"] = None
    if "config" in ns:
        try:
            with open(ns["config"]) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidParamsError(f"cannot read config {ns['config']}: {e}") from e
        if not isinstance(data, dict):
            raise InvalidParamsError("config must be a JSON object")
        unknown = set(data) - set(cfg)
        if unknown:
            raise InvalidParamsError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for k, v in ns.items():
        if k == "config" or (k == "command" and v is None):
            continue
        cfg[k] = v
    if cfg["command"] not in COMMANDS:
        raise InvalidParamsError(f"command must be one of {', '.join(COMMANDS)}")
    return cfg


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _floats(v) -> list[float]:
    if isinstance(v, (int, float)):
        return [float(v)]
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    try:
        return [float(x) for x in str(v).split(",") if x.strip()]
    except ValueError as e:
        raise InvalidParamsError(f"bad number list: {v!r}") from e


def _names(v) -> list[str]:
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    return [x.strip() for x in str(v).split(",") if x.strip()]


def _budget(cfg) -> float:
    b = _floats(cfg["B"])
    if len(b) != 1:
        raise InvalidParamsError("this command takes a single --B")
    return b[0]


def _alloc(cfg) -> FlexAllocation:
    B = _budget(cfg)
    bl = cfg["bl"] if cfg["bl"] is not None else (B if cfg["br"] is None else B - cfg["br"])
    br = cfg["br"] if cfg["br"] is not None else B - bl
    return FlexAllocation(float(bl), float(br))


def _params(cfg) -> ModelParams:
    return ModelParams(float(cfg["alpha"]), float(cfg["alpha_f"]), int(cfg["n"]), k=cfg["k"], lam=cfg["lam"])


def _table(cfg, columns, rows) -> str:
    if cfg["format"] == "json":
        return json_text([{c: r.get(c) for c in columns} for r in rows])
    return csv_text(columns, rows)


def _emit(cfg, text: str, stdout) -> Optional[str]:
    if cfg["out"]:
        write_atomic(cfg["out"], text)
        return cfg["out"]
    stdout.write(text)
    return None


# ---------------------------------------------------------------------------
# commands; each returns (artifact text, summary dict, exit code)
# ---------------------------------------------------------------------------


def _simulate(cfg, threads, hooks):
    req = EstimateRequest(cfg["variant"], _params(cfg), _alloc(cfg), int(cfg["replicates"]), tuple(_names(cfg["metric"])), int(cfg["seed"]))
    rows = estimate(req, threads).rows()
    return _table(cfg, ESTIMATE_COLUMNS, rows), dict(rows=len(rows), means={r["metric"]: r["mean"] for r in rows}), EXIT_OK


def _sweep(cfg, threads, hooks):
    rows = sweep_allocations(
        cfg["variant"], _params(cfg), _budget(cfg), int(cfg["grid_points"]), tuple(_names(cfg["metric"])),
        int(cfg["replicates"]), int(cfg["seed"]), threads,
    )
    return _table(cfg, ESTIMATE_COLUMNS, rows), dict(rows=len(rows)), EXIT_OK


def _heatmap(cfg, threads, hooks):
    grid = heatmap_grid(_floats(cfg["alphas"]), _floats(cfg["gaps"]))
    rows = heatmap_ratio(
        cfg["variant"], grid, _budget(cfg), str(cfg["metric"]), int(cfg["replicates"]), int(cfg["seed"]),
        int(cfg["n"]), threads, k=cfg["k"], lam=cfg["lam"],
    )
    return _table(cfg, ESTIMATE_COLUMNS, rows), dict(rows=len(rows), cells=len(grid)), EXIT_OK


def _phi(cfg, threads, hooks):
    a, af, alloc = float(cfg["alpha"]), float(cfg["alpha_f"]), _alloc(cfg)
    v = phi_closed_form(a, af, alloc)
    B = _budget(cfg)
    res = dict(alpha=a, alpha_f=af, b_l=alloc.b_l, b_r=alloc.b_r, phi1=v.phi1, phi2=v.phi2, phi=v.phi)
    if 0 <= B <= 1:
        res.update(B=B, phi_star=phi_star(a, af, B), optimal=phi_optimal_allocation(a, af, B).value)
    return json_text(res), res, EXIT_OK


def _thresholds(cfg, threads, hooks):
    B, a = _budget(cfg), float(cfg["alpha"])
    a_star, af_star = asymmetry_thresholds(B, a)
    res = dict(B=B, alpha=a, alpha_star=a_star, alpha_f_star=af_star)
    if cfg["alpha_f"] and cfg["alpha_f"] > 0:
        res.update(alpha_f=float(cfg["alpha_f"]), gap_bound=cannibalization_gap_bound(float(cfg["alpha_f"])))
    return json_text(res), res, EXIT_OK


def _ks(cfg, threads, hooks):
    s = solve_ks_fixed_point(float(cfg["alpha"]), float(cfg["alpha_f"]), _alloc(cfg), float(cfg["tol"]))
    d = s.to_dict()
    summary = dict(mu_ks=s.mu_ks, xi=s.xi, xi_hat=s.xi_hat, iterations=s.iterations, subcritical=s.subcritical)
    return json_text(d), summary, EXIT_OK


def _ks_sweep(cfg, threads, hooks):
    rows = []
    for B in _floats(cfg["B"]):
        for a, af in heatmap_grid(_floats(cfg["alphas"]), _floats(cfg["gaps"])):
            one = mu_ks(a, af, FlexAllocation(B, 0.0), float(cfg["tol"]))
            bal = mu_ks(a, af, FlexAllocation(B / 2, B / 2), float(cfg["tol"]))
            rows.append(dict(alpha=a, alpha_f=af, B=B, mu_one_sided=one, mu_balanced=bal, ratio=bal / one if one > 0 else math.nan))
    return _table(cfg, KS_SWEEP_COLUMNS, rows), dict(rows=len(rows)), EXIT_OK


def _verify(cfg, threads, hooks):
    delta, eps = float(cfg["delta"]), float(cfg["eps"])
    ar = (float(cfg["alpha_min"]), float(cfg["alpha_max"]))
    afr = (float(cfg["alpha_f_min"]), float(cfg["alpha_f_max"]))
    check = cfg["check"]
    if not 0 < delta < 0.5:
        raise InvalidParamsError("delta must lie in (0, 1/2)")
    if check == "f1":
        total, passed, failures = verify_f1_monotonicity_region(delta, delta)
        rows = [dict(alpha=a, alpha_f=af, x1=x) for a, af, x in failures]
        text = _table(cfg, ("alpha", "alpha_f", "x1"), rows)
        return text, dict(cells=total, passed=passed, failures=len(failures)), EXIT_VIOLATION if failures else EXIT_OK
    if check == "sod":
        certs = certify_sod_region(delta, eps, ar, afr, threads)
        rows = [asdict(c) for c in certs]
        inreg = [c for c in certs if c.in_regime]
        bad = sum(not (c.convex_verified and c.concave_verified) for c in inreg)
        summary = dict(cells=len(certs), in_regime=len(inreg), unverified=bad)
        code = EXIT_VIOLATION if (bad and cfg["require_verified"]) else EXIT_OK
        return _table(cfg, SOD_COLUMNS, rows), summary, code
    summ = certify_comparison_region(delta, eps, ar, afr, threads)
    rows = [c.to_row() for c in summ.cells]
    bad = sum(c.verdict == Verdict.UNVERIFIED for c in summ.cells)
    summary = dict(cells=len(rows), unverified=bad, verified_fraction=summ.verified_fraction)
    code = EXIT_VIOLATION if (bad and cfg["require_verified"]) else EXIT_OK
    return _table(cfg, CERTIFICATE_COLUMNS, rows), summary, code


def _coupling(cfg, threads, hooks):
    matcher = hooks.get("matcher") or max_matching_size
    n = int(cfg["n"])
    if cfg["exhaustive_edges"] is not None:
        total = viol = 0
        for sets in exhaustive_coupling_sets(n, int(cfg["exhaustive_edges"])):
            total += 1
            viol += coupling_difference(sets, n, matcher) < 0
        res = dict(n=n, max_edges=int(cfg["exhaustive_edges"]), configurations=total, violations=int(viol))
    else:
        rep = coupling_inequality_check(n, float(cfg["alpha_f"]), int(cfg["seed"]), int(cfg["replicates"]), matcher, threads)
        res = rep.to_dict()
    return json_text(res), res, EXIT_VIOLATION if res["violations"] else EXIT_OK


def _spec(cfg) -> ProfitSpec:
    return ProfitSpec(float(cfg["alpha"]), float(cfg["alpha_f"]), float(cfg["c"]), float(cfg["cost_exponent"]))


def _experiment(cfg, threads, hooks):
    spec = _spec(cfg)
    start = FlexAllocation(float(cfg["bl"] or 0.0), float(cfg["br"] or 0.0))
    tr = run_trajectory(spec, start, float(cfg["gamma"]), cfg["mode"], int(cfg["max_steps"]))
    if cfg["format"] == "csv":
        rows = [dict(step=i, b_l=p[0], b_r=p[1], profit=p[2]) for i, p in enumerate(tr.points)]
        text = csv_text(TRAJECTORY_COLUMNS, rows)
    else:
        text = json_text(tr.to_dict())
    if cfg["landscape_out"]:
        write_atomic(cfg["landscape_out"], csv_text(LANDSCAPE_COLUMNS, landscape_grid(spec, int(cfg["resolution"]), threads)))
    summary = dict(
        terminal=list(tr.terminal), terminal_class=tr.terminal_class.value, steps=tr.steps,
        converged=tr.converged, cycled=tr.cycled, profit=tr.points[-1][2],
    )
    if spec.note:
        summary["note"] = spec.note
    return text, summary, EXIT_OK


def _landscape(cfg, threads, hooks):
    spec = _spec(cfg)
    rows = landscape_grid(spec, int(cfg["resolution"]), threads)
    best = max(rows, key=lambda r: r["profit"])
    summary = dict(rows=len(rows), argmax=[best["b_l"], best["b_r"]], max_profit=best["profit"])
    return _table(cfg, LANDSCAPE_COLUMNS, rows), summary, EXIT_OK


HANDLERS: dict[str, Callable] = {
    "simulate": _simulate, "sweep": _sweep, "heatmap": _heatmap, "phi": _phi, "thresholds": _thresholds,
    "ks": _ks, "ks-sweep": _ks_sweep, "verify": _verify, "coupling": _coupling,
    "experiment": _experiment, "landscape": _landscape,
}


def run(cfg: dict, stdout=None, hooks: Optional[dict] = None) -> int:
    stdout = stdout or sys.stdout
    threads = resolve_threads(cfg["threads"])
    text, summary, code = HANDLERS[cfg["command"]](cfg, threads, hooks or {})
    path = _emit(cfg, text, stdout)
    status = "ok" if code == EXIT_OK else "certificate_violation"
    line = dict(command=cfg["command"], status=status, exit_code=code, out=path, **summary)
    stdout.write(json_text(line, indent=None))
    return code


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None, hooks: Optional[dict] = None) -> int:
    """Entry point; ``hooks`` lets tests inject a matcher for ``coupling``."""
    stdout, stderr = stdout or sys.stdout, stderr or sys.stderr
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = resolve_config(argv)
        return run(cfg, stdout, hooks)
    except NonConvergenceError as e:
        stderr.write(f"flexmatch: non-convergence: {e}\n")
        return EXIT_NONCONVERGENCE
    except CertificateViolation as e:
        stderr.write(f"flexmatch: certificate violation: {e}\n")
        return EXIT_VIOLATION
    except (FlexMatchError, ValueError, TypeError, OSError) as e:
        stderr.write(f"flexmatch: error: {e}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
