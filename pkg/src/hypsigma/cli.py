"""Command-line front end.

Every subcommand evaluates a sweep of parameter points, writes a JSON object
(``spec``, ``version``, ``seed``, ``rows``, ``certificates``, ``passed``) or a
CSV table, and exits with 0 when all checks pass, 1 on a usage error and 2
when a verification check fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dual_action as da
from . import gap_solver as gs
from . import matrix_tree as mt
from . import mc_sampler as mc
from .lattice import build_lattice

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class UsageError(ValueError):
    """Raised for invalid run specifications."""


def version_string() -> str:
    """``git describe`` of the source tree, or the installed package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
        if out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # pragma: no cover - not installed
        return "unknown"


# ---------------------------------------------------------------------------
# parsing

def int_sweep(text: str) -> list[int]:
    """Parse ``"3"``, ``"3..16"`` (inclusive) or comma lists of either."""
    out = []
    for part in text.split(","):
        part = part.strip()
        try:
            if ".." in part:
                a, b = part.split("..")
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise argparse.ArgumentTypeError(f"empty range {part!r}")
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer sweep: {text!r}") from None
    return out


def float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a float list: {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("values must be finite")
    return vals


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hypsigma", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--d", type=int_sweep, default=[2], help="dimension(s), e.g. 2 or 2..3")
    common.add_argument("--L", type=int_sweep, default=[3], help="linear size(s), e.g. 3..16")
    common.add_argument("--lambda", dest="lam", type=float_list, default=None,
                        help="coupling(s) lambda = (N+1)/beta")
    common.add_argument("--N", type=int, default=None, help="target dimension")
    common.add_argument("--beta", type=float_list, default=None, help="inverse temperature(s)")
    common.add_argument("--x0", type=int, default=0, help="frozen site (lexicographic index)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", default="-", help="output path ('-' for stdout)")
    common.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("gap", parents=[common], help="solve and certify the gap equation")
    p.add_argument("--tol", type=float, default=1e-13)

    p = sub.add_parser("saddle", parents=[common], help="uniqueness and Hessian of the saddle")
    p.add_argument("--starts", type=int, default=50)
    p.add_argument("--theta-scale", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("tree", parents=[common], help="spanning trees and cycle bound")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--budget", type=int, default=100_000)

    p = sub.add_parser("convexity", parents=[common], help="convexity of F")
    p.add_argument("--segments", type=int, default=1000)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--theta-scale", type=float, default=1.0)

    p = sub.add_parser("asym", parents=[common], help="large-volume gap asymptotics")
    p.add_argument("--L-ref", type=int, default=64)
    p.add_argument("--max-rel", type=float, default=None,
                   help="band around the prediction (default 0.25 for d=2, 0.05 otherwise)")

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo vs large-N two-point function")
    p.add_argument("--sweeps", type=int, default=20_000, help="measurement sweeps per chain")
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--max-pull", type=float, default=3.0)
    p.add_argument("--max-rel", type=float, default=0.05)
    return parser


def resolve_couplings(args) -> list[float]:
    """Exactly one of ``--lambda`` or ``--beta`` fixes the coupling; ``--beta`` needs ``--N``."""
    if (args.lam is None) == (args.beta is None):
        raise UsageError("give exactly one of --lambda or (--N, --beta)")
    if args.beta is not None:
        if args.N is None:
            raise UsageError("--beta requires --N")
        return [da.ModelParams.from_beta(args.N, b).lam for b in args.beta]
    if any(not v > 0 for v in args.lam):
        raise UsageError("lambda must be positive")
    return list(args.lam)


# ---------------------------------------------------------------------------
# per-point work (module level so a process pool can pickle it)

def _cert(row: dict, name: str, value, bound, passed: bool) -> None:
    row.setdefault("_certs", {})[name] = {"value": value, "bound": bound, "passed": bool(passed)}


def _gap_point(pt: dict) -> list[dict]:
    lat = build_lattice(pt["d"], pt["L"])
    sol = gs.solve_gap(pt["lam"], lat, tol=pt["tol"], x0=pt["x0"])
    row = {"d": lat.d, "L": lat.L, "V": lat.V, "lambda": pt["lam"],
           "omega_minus": sol.omega_minus, "minus_V_omega": sol.scaled_gap,
           "omega_x0": sol.omega_x0, "residual": sol.residual}
    for name, c in sol.certificates.items():
        row[f"cert_{name}"] = c.value
        _cert(row, name, c.value, c.bound, c.passed)
    return [row]


def _saddle_point(pt: dict) -> list[dict]:
    lat = build_lattice(pt["d"], pt["L"])
    rep = gs.verify_unique_minimum(lat, pt["lam"], pt["starts"], seed=pt["seed"], x0=pt["x0"],
                                   theta_scale=pt["theta_scale"], tolerance=pt["tol"])
    params = da.ModelParams(N=2, lam=pt["lam"], x0=pt["x0"])
    Q, _ = da.hessian_S2(lat, rep.omega_minus, params)
    min_eig = float(np.linalg.eigvalsh(Q)[0])
    D = gs.propagator_D(rep.omega_minus, lat)
    br = da.saddle_brackets(D, pt["lam"], pt["x0"])
    row = {"d": lat.d, "L": lat.L, "V": lat.V, "lambda": pt["lam"],
           "omega_minus": rep.omega_minus, "starts": rep.n_starts, "converged": rep.n_converged,
           "max_deviation": rep.max_deviation, "hessian_min_eig": min_eig,
           "max_bracket": float(br.max()), "negative_brackets": int(np.sum(br < 0)),
           "brackets": int(br.size)}
    _cert(row, "uniqueness", rep.max_deviation, pt["tol"], rep.passed)
    _cert(row, "hessian_psd", min_eig, -1e-10, min_eig >= -1e-10)
    _cert(row, "brackets_negative", float(br.max()), 0.0, bool(np.all(br < 0)))
    return [row]


def _tree_point(pt: dict) -> list[dict]:
    lat = build_lattice(pt["d"], pt["L"])
    rng = np.random.default_rng(pt["seed"])
    count = mt.count_spanning_trees(lat, pt["x0"])
    row = {"d": lat.d, "L": lat.L, "V": lat.V, "spanning_trees": count}
    try:
        enumerated = len(mt.enumerate_spanning_trees(lat, pt["budget"]))
        resid = max(mt.tree_identity_residual(lat, da.pinned(rng.uniform(-1, 1, lat.V), pt["x0"]),
                                              pt["x0"], pt["budget"])
                    for _ in range(pt["samples"]))
        row.update(enumerated_trees=enumerated, max_identity_residual=resid)
        _cert(row, "tree_count", enumerated, count, enumerated == count)
        _cert(row, "tree_identity", resid, 1e-9, resid <= 1e-9)
    except mt.EnumerationBudgetError:
        row.update(enumerated_trees=None, max_identity_residual=None)
    if lat.L >= 3 and lat.V <= 16:
        params = da.ModelParams(N=2, lam=pt["lam"], x0=pt["x0"])
        worst = math.inf
        cycles = None
        for _ in range(pt["samples"]):
            a = da.chi(lat, da.pinned(rng.uniform(-1, 1, lat.V), pt["x0"]), None, params)
            rep = mt.cycle_bound_check(lat, a, None, params)
            cycles = rep.oriented_cycles
            worst = min(worst, rep.R / max(cycles, 1))
        row.update({"lambda": pt["lam"]}, oriented_cycles=cycles, min_R_over_cycles=worst)
        _cert(row, "cycle_bound", worst, 1.0, worst >= 1.0)
    return [row]


def _convexity_point(pt: dict) -> list[dict]:
    lat = build_lattice(pt["d"], pt["L"])
    params = da.ModelParams(N=2, lam=pt["lam"], x0=pt["x0"])
    rng = np.random.default_rng(pt["seed"])
    s = pt["theta_scale"]

    def draw():
        return da.pinned(rng.uniform(-s, s, lat.V), pt["x0"])

    margins = np.array([da.midpoint_margin(lat, draw(), draw(), params) for _ in range(pt["segments"])])
    eigs = np.array([np.linalg.eigvalsh(da.convex_F_hessian(lat, draw(), params))[0]
                     for _ in range(pt["points"])])
    row = {"d": lat.d, "L": lat.L, "V": lat.V, "lambda": pt["lam"],
           "segments": int(margins.size), "segments_passed": int(np.sum(margins >= -1e-9)),
           "min_margin": float(margins.min()) if margins.size else None,
           "points": int(eigs.size), "min_hessian_eig": float(eigs.min()) if eigs.size else None}
    if margins.size:
        _cert(row, "midpoint_convexity", float(margins.min()), -1e-9, margins.min() >= -1e-9)
    if eigs.size:
        _cert(row, "hessian_positive", float(eigs.min()), 0.0, eigs.min() > 0)
    return [row]


def _asym_point(pt: dict) -> list[dict]:
    lat = build_lattice(pt["d"], pt["L"])
    sol = gs.solve_gap(pt["lam"], lat, x0=pt["x0"], det_check_max_V=0)
    pred = gs.asymptotic_gap(pt["lam"], lat.V, lat.d, pt["L_ref"])
    row = {"d": lat.d, "L": lat.L, "V": lat.V, "lambda": pt["lam"],
           "omega_minus": sol.omega_minus, "minus_V_omega": sol.scaled_gap,
           "prediction": pred, "ratio": sol.scaled_gap / pred}
    if lat.d >= 3:
        c_ref = gs.lattice_sum_constant(lat.d, pt["L_ref"])
        row["C_d"] = c_ref
    return [row]


def _asym_checks(rows: list[dict], max_rel) -> dict:
    certs = {}
    for (d, lam), grp in itertools.groupby(sorted(rows, key=lambda r: (r["d"], r["lambda"], r["L"])),
                                           key=lambda r: (r["d"], r["lambda"])):
        grp = list(grp)
        band = max_rel if max_rel is not None else (0.25 if d == 2 else 0.05)
        tag = f"d={d},lambda={lam:g}"
        if d == 2:
            first, last = grp[0], grp[-1]
            dev_last = abs(last["ratio"] - 1)
            certs[f"{tag}:band"] = {"value": dev_last, "bound": band, "passed": dev_last <= band}
            if len(grp) > 1:
                improving = dev_last < abs(first["ratio"] - 1)
                certs[f"{tag}:trend"] = {"value": abs(first["ratio"] - 1) - dev_last, "bound": 0.0,
                                         "passed": improving}
        else:
            for r in grp:
                dev = abs(r["ratio"] - 1)
                certs[f"{tag},L={r['L']}:band"] = {"value": dev, "bound": band, "passed": dev <= band}
    return certs


def _c_d_consistency(ds, L_ref: int) -> dict:
    certs = {}
    for d in sorted(set(ds)):
        if d < 3:
            continue
        c1 = gs.lattice_sum_constant(d, L_ref)
        c2 = gs.lattice_sum_constant(d, L_ref * 3 // 2)
        rel = abs(c1 - c2) / abs(c2)
        certs[f"d={d}:C_d_consistency"] = {"value": rel, "bound": 1e-3, "passed": rel <= 1e-3}
    return certs


_POINT_FUNS = {"gap": _gap_point, "saddle": _saddle_point, "tree": _tree_point,
               "convexity": _convexity_point, "asym": _asym_point}


def _run_points(fun, points, workers):
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fun, points))  # map preserves sweep order
    else:
        results = [fun(p) for p in points]
    return [row for rows in results for row in rows]


def run_sweep(args, lams) -> tuple[list[dict], dict]:
    cmd = args.command
    extras = {k: v for k, v in vars(args).items()
              if k not in ("d", "L", "lam", "beta", "N", "command", "format", "output", "workers")}
    if cmd == "tree":
        combos = itertools.product(args.d, args.L, lams[:1])
    else:
        combos = itertools.product(args.d, args.L, lams)
    points = [dict(extras, d=d, L=L, lam=lam) for d, L, lam in combos]
    rows = _run_points(_POINT_FUNS[cmd], points, args.workers)
    certs = {}
    for row in rows:
        row_certs = row.pop("_certs", {})
        row["passed"] = all(c["passed"] for c in row_certs.values())
        for name, c in row_certs.items():
            entry = certs.setdefault(name, {"checked": 0, "failed": 0, "passed": True})
            entry["checked"] += 1
            if not c["passed"]:
                entry["failed"] += 1
                entry["passed"] = False
    if cmd == "asym":
        for name, c in {**_asym_checks(rows, args.max_rel), **_c_d_consistency(args.d, args.L_ref)}.items():
            certs[name] = {"checked": 1, "failed": int(not c["passed"]), "passed": bool(c["passed"]),
                           "value": c["value"], "bound": c["bound"]}
    return rows, certs


def run_mc(args, lams) -> tuple[list[dict], dict]:
    if len(args.d) != 1 or len(args.L) != 1 or len(lams) != 1:
        raise UsageError("mc takes a single --d, --L and coupling")
    if args.N is None:
        raise UsageError("mc requires --N")
    if args.chains < 1 or args.sweeps < 1:
        raise UsageError("--chains and --sweeps must be positive")
    lat = build_lattice(args.d[0], args.L[0])
    params = da.ModelParams(N=args.N, lam=lams[0], x0=args.x0)
    seeds = [args.seed + i for i in range(args.chains)]
    res = mc.run_chains(lat, params, args.sweeps + args.burn_in, seeds, workers=args.workers,
                        burn_in=args.burn_in, thin=args.thin, n_bins=args.bins)
    sol = gs.solve_gap(params.lam, lat, x0=args.x0)
    cmp = mc.compare_large_n(res, sol.D_row, params.lam, args.max_pull, args.max_rel)
    rows = []
    for s in range(lat.V):
        rows.append({"separation": ",".join(str(int(c)) for c in lat.coords[s]),
                     "measured": cmp.measured[s], "sigma": cmp.error[s],
                     "predicted": cmp.predicted[s], "pull": cmp.pull[s],
                     "rel_dev": cmp.rel_dev[s], "tau_int": res.tau_int[s],
                     "passed": bool(abs(cmp.pull[s]) <= args.max_pull and cmp.rel_dev[s] <= args.max_rel)})
    certs = {
        "pulls": {"checked": lat.V, "failed": int(np.sum(np.abs(cmp.pull) > args.max_pull)),
                  "value": float(np.max(np.abs(cmp.pull))), "bound": args.max_pull},
        "relative_deviation": {"checked": lat.V, "failed": int(np.sum(cmp.rel_dev > args.max_rel)),
                               "value": float(np.max(cmp.rel_dev)), "bound": args.max_rel},
        "logdet_drift": {"checked": 1, "failed": int(res.max_drift > mc.RESYNC_TOL),
                         "value": res.max_drift, "bound": mc.RESYNC_TOL},
        "acceptance": {"checked": 1, "failed": int(not 0 < res.acceptance < 1),
                       "value": res.acceptance, "bound": None},
    }
    for c in certs.values():
        c["passed"] = c["failed"] == 0
    return rows, certs


# ---------------------------------------------------------------------------
# output

def _clean(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def render(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# version={doc['version']} seed={doc['seed']}\n")
    buf.write("# spec=" + json.dumps(_clean(doc["spec"]), sort_keys=True) + "\n")
    rows = [_clean(r) for r in doc["rows"]]
    fields = list(dict.fromkeys(k for r in rows for k in r))
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                         for k in fields})
    return buf.getvalue()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        lams = resolve_couplings(args)
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        for d, L in itertools.product(args.d, args.L):
            if d < 1 or L < 2:
                raise UsageError(f"need d >= 1 and L >= 2, got d={d}, L={L}")
            if d < 2 and args.command in ("gap", "saddle", "asym", "mc"):
                raise UsageError(f"{args.command} needs d >= 2 (no finite-volume gap for d=1)")
            if not 0 <= args.x0 < L**d:
                raise UsageError(f"--x0 outside the lattice for d={d}, L={L}")
        if args.command == "mc":
            rows, certs = run_mc(args, lams)
        else:
            rows, certs = run_sweep(args, lams)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hypsigma: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    spec = {k: v for k, v in vars(args).items()}
    spec["lambda"] = spec.pop("lam")
    passed = all(c["passed"] for c in certs.values())
    doc = {"spec": spec, "version": version_string(), "seed": args.seed,
           "rows": rows, "certificates": certs, "passed": passed}
    text = render(doc, args.format)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    return EXIT_OK if passed else EXIT_CHECK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
