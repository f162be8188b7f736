"""Command line: ``scan``, ``verify-construction``, ``planar`` and ``closedness-probe``.

Exit codes: 0 success, 1 invalid input, 2 a check or classification failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from .analysis import alpha_sequence, closedness_probe
from .construction import FSigmaSpec, SpecError, build_scene, verify_construction
from .dynamics import EXISTS, IterationConfig, classify_alpha
from .geometry import ContractViolation
from .planar import phi, planar_fixed_point_closed_form

EXIT_OK, EXIT_INPUT, EXIT_FAILED = 0, 1, 2
SCAN_COLUMNS = ["alpha", "beta", "class", "residual", "iterations", "x", "y", "z", "expected_member", "agree"]
PLANAR_COLUMNS = ["alpha", "beta", "phi", "u_x", "u_y", "residual", "note"]


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share the invalid-input exit code; 2 means a failed check
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def alpha_grid(lo: float, hi: float, step: float) -> list[float]:
    if not (0.0 <= lo <= hi <= 1.0):
        raise InputError(f"alpha grid [{lo}, {hi}] must lie in [0, 1]")
    if not step > 0.0:
        raise InputError(f"alpha step must be positive, got {step}")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 12) for i in range(n + 1)]


def load_spec(path: str) -> FSigmaSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read spec {path}: {exc.strerror}") from None
    return FSigmaSpec.from_json(text)


def write_text(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def write_json(path: str | None, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def collar_mask(alphas, boundary, step: float) -> list[bool]:
    """Rows within one grid step of a boundary point of F."""
    tol = step * (1.0 + 1e-9)
    return [any(abs(a - b) <= tol for b in boundary) for a in alphas]


# -- scan ----------------------------------------------------------------------

_SCENE = None


def _init_worker(spec_dict: dict) -> None:
    global _SCENE
    _SCENE = build_scene(FSigmaSpec.from_dict(spec_dict))


def _classify(job: tuple) -> dict:
    alpha, k, cfg = job
    out = classify_alpha(_SCENE, alpha, k, IterationConfig(**cfg))
    pt = out.point if out.status == EXISTS else None
    return {"alpha": alpha, "beta": out.beta, "class": out.status, "reason": out.reason,
            "residual": out.residual, "iterations": out.iterations,
            "point": None if pt is None else [float(c) for c in pt]}


def run_scan(spec: FSigmaSpec, alphas, k: int, cfg: IterationConfig, workers: int = 1) -> list[dict]:
    """Classify every alpha; rows come back in the order of ``alphas``."""
    jobs = [(a, k, asdict(cfg)) for a in alphas]
    if workers <= 1:
        _init_worker(spec.to_dict())
        results = [_classify(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(spec.to_dict(),)) as pool:
            results = list(pool.map(_classify, jobs))
    for row in results:
        row["expected_member"] = spec.contains(row["alpha"])
        row["agree"] = (row["class"] == EXISTS) == row["expected_member"]
    return sorted(results, key=lambda r: r["alpha"])


def scan_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for r in rows:
        p = r["point"] or [None] * 3
        w.writerow([fmt(r["alpha"]), fmt(r["beta"]), r["class"], fmt(r["residual"]), fmt(r["iterations"]),
                    fmt(p[0]), fmt(p[1]), fmt(p[2]), fmt(r["expected_member"]), fmt(r["agree"])])
    return buf.getvalue()


def cmd_scan(args) -> int:
    spec = load_spec(args.spec)
    if args.k < 3:
        raise InputError(f"--k must be at least 3, got {args.k}")
    if args.workers < 1:
        raise InputError(f"--workers must be positive, got {args.workers}")
    alphas = alpha_grid(args.alpha_min, args.alpha_max, args.alpha_step)
    cfg = IterationConfig(max_iters=args.max_iters, eps_fix=args.eps_fix, z_max=args.z_max)
    rows = run_scan(spec, alphas, args.k, cfg, args.workers)
    collar = collar_mask(alphas, spec.boundary_points(), args.alpha_step)
    bad = [r["alpha"] for r, c in zip(rows, collar) if not c and not r["agree"]]
    meta = {
        "tool": "fixscan", "version": __version__, "spec_sha256": spec.digest(), "spec": spec.to_dict(),
        "k": args.k, "grid": {"min": args.alpha_min, "max": args.alpha_max, "step": args.alpha_step,
                              "count": len(alphas)},
        "config": asdict(cfg), "collar": [a for a, c in zip(alphas, collar) if c],
        "disagreements_outside_collar": bad,
    }
    if args.format == "json":
        out_rows = [dict(r, in_collar=c) for r, c in zip(rows, collar)]
        write_json(args.out, {"meta": meta, "columns": SCAN_COLUMNS, "rows": out_rows})
    else:
        write_text(args.out, scan_csv(rows))
        if args.out not in (None, "-"):
            write_json(args.out + ".meta.json", meta)
    if bad:
        print(f"{len(bad)} disagreement(s) outside the collar at alpha = {bad}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


# -- verify-construction -------------------------------------------------------

def _axis(lo: float, hi: float, step: float | None, default_n: int) -> np.ndarray:
    if step is None:
        return np.linspace(lo, hi, default_n)
    if not step > 0.0:
        raise InputError(f"grid step must be positive, got {step}")
    return np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)


def cmd_verify(args) -> int:
    spec = load_spec(args.spec)
    scene = build_scene(spec, c_scale=args.c_scale)
    xs = _axis(-1.5, 2.5, args.grid_x, 200)
    zs = _axis(0.0, 5.0, args.grid_z, 100)
    rep = verify_construction(scene, xs, zs)
    out = rep.to_dict()
    witnesses = {"excess_nonnegative": rep.min_excess_at, "hessian_psd": rep.min_eigenvalue_at,
                 "dz_negative_off_parabola": rep.dz_witness}
    out["failing_points"] = {k: witnesses.get(k) for k, ok in rep.checks.items() if not ok}
    out["spec_sha256"] = spec.digest()
    out["grid"] = {"nx": len(xs), "nz": len(zs), "x": [-1.5, 2.5], "z": [0.0, 5.0]}
    write_json(args.out, out)
    if not rep.passed:
        failed = ", ".join(out["failing_points"])
        print(f"construction check failed: {failed}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


# -- planar --------------------------------------------------------------------

def cmd_planar(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLANAR_COLUMNS)
    for a in alpha_grid(0.0, 1.0, args.alpha_step):
        if a == 0.0:
            w.writerow([fmt(a), fmt(1.0), fmt(phi(a)), "", "", "", "no unique fixed point at alpha=0"])
            continue
        fp = planar_fixed_point_closed_form(a, 1.0)
        w.writerow([fmt(a), fmt(1.0), fmt(phi(a)), fmt(fp.u[0]), fmt(fp.u[1]), fmt(fp.residual), ""])
    write_text(args.out, buf.getvalue())
    return EXIT_OK


# -- closedness-probe ----------------------------------------------------------

def cmd_probe(args) -> int:
    spec = load_spec(args.spec)
    if not 0.0 <= args.alpha0 <= 1.0:
        raise InputError(f"--alpha0 must lie in [0, 1], got {args.alpha0}")
    scene = build_scene(spec)
    alphas = alpha_sequence(args.alpha0, args.rate, args.terms)
    rep = closedness_probe(scene, alphas, args.alpha0, args.r, k=args.k)
    rep["spec_sha256"] = spec.digest()
    rep["rate"] = args.rate
    write_json(args.out, rep)
    return EXIT_OK if rep["confirmed"] else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fixscan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scan", help="classify a grid of relaxation parameters")
    s.add_argument("--spec", required=True)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--alpha-min", type=float, default=0.0)
    s.add_argument("--alpha-max", type=float, default=1.0)
    s.add_argument("--alpha-step", type=float, default=0.01)
    s.add_argument("--eps-fix", type=float, default=1e-9)
    s.add_argument("--max-iters", type=int, default=200_000)
    s.add_argument("--z-max", type=float, default=1e6)
    s.add_argument("--out", default="-")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_scan)

    v = sub.add_parser("verify-construction", help="grid checks of the constructed convex function")
    v.add_argument("--spec", required=True)
    v.add_argument("--grid-x", type=float, default=None, help="x step over [-1.5, 2.5] (default: 200 points)")
    v.add_argument("--grid-z", type=float, default=None, help="z step over [0, 5] (default: 100 points)")
    v.add_argument("--out", default="-")
    v.add_argument("--c-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("planar", help="table of planar fixed points")
    pl.add_argument("--alpha-step", type=float, default=0.05)
    pl.add_argument("--out", default="-")
    pl.set_defaults(func=cmd_planar)

    c = sub.add_parser("closedness-probe", help="check fixed points persist along alpha0 + rate/n")
    c.add_argument("--spec", required=True)
    c.add_argument("--alpha0", type=float, required=True)
    c.add_argument("--rate", type=float, default=0.1)
    c.add_argument("--terms", type=int, default=10)
    c.add_argument("--r", type=float, default=10.0)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: invalid spec: {exc}", file=sys.stderr)
    except (InputError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
