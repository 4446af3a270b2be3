"""Command-line interface: ``psizeta {power,zeta,residue,calibrate,verify}``.

Results go to ``--out`` (atomic write) or standard output.  The exit status
is 0 on success, 1 when a computed invariant fails its tolerance and 2 for
invalid input.  ``PSIZETA_THREADS`` sets the number of worker threads used
to evaluate independent ``s`` values; BLAS is pinned to a single thread so
outputs do not depend on it.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

from ._validation import PoleError, SpecError
from .cohomology import CocycleError
from .powers import build_family, defect_report
from .spec_io import (
    complex_to_json,
    dumps,
    load_config,
    load_spec,
    matrix_to_json,
    symbol_to_json,
    write_csv,
    write_json,
    write_text,
)
from .verify import SUITES, run_suite
from .zeta import (
    CalibrationError,
    LatticeSumConfig,
    gamma0,
    meromorphic_extend,
    nc_residue,
    residue_at_first_pole,
    trace_function,
)

THREADS_ENV = "PSIZETA_THREADS"


def _threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise SpecError(f"must be a positive integer, got {raw!r}", THREADS_ENV) from None
    if n < 1:
        raise SpecError(f"must be a positive integer, got {raw!r}", THREADS_ENV)
    return n


def _map(func, items):
    """Ordered map over ``items`` on ``PSIZETA_THREADS`` workers."""
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


def _parse_complex(text):
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def _config(args):
    cfg = load_config(args.config)
    return cfg.replace(seed=args.seed, K=getattr(args, "K", None), N=getattr(args, "N", None), B=getattr(args, "B", None))


def _emit(args, obj):
    text = dumps(obj)
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _family(spec, cfg):
    A = spec.to_symbol()
    K = min(cfg.K, spec.truncation)
    return build_family(A.truncate(K), cocycle_tol=cfg.cocycle_tol, seed=cfg.seed)


def _lattice(spec, cfg):
    return LatticeSumConfig(cfg.N, cfg.tail_order, spec.k0_override)


def cmd_power(args):
    cfg = _config(args)
    spec = load_spec(args.spec)
    F = _family(spec, cfg)
    s_values = args.s or [1.0]
    symbols = _map(F, s_values)
    rep = defect_report(F, cfg.samples, seed=cfg.seed, tol=cfg.defect_tol)
    ok = rep.achieved_level >= F.truncation + 1
    _emit(
        args,
        {
            "command": "power",
            "truncation": F.truncation,
            "level": F.level,
            "seed": cfg.seed,
            "symbols": [dict(s=complex_to_json(s), symbol=symbol_to_json(sym)) for s, sym in zip(s_values, symbols)],
            "defect": {
                "samples": [[complex_to_json(a), complex_to_json(b)] for a, b in rep.samples],
                "max_norms": [float(v) for v in rep.max_norms],
                "tol": rep.tol,
                "achieved_level": rep.achieved_level,
            },
            "cocycle_violations": [float(h.cocycle_violation) for h in F.history],
            "status": "ok" if ok else "fail",
        },
    )
    return 0 if ok else 1


def cmd_zeta(args):
    cfg = _config(args)
    spec = load_spec(args.spec)
    F = _family(spec, cfg)
    lat = _lattice(spec, cfg)
    rows, poles = [], []
    if args.window:
        data = meromorphic_extend(F, args.window, lat)
        poles = [(p, r) for p, r in data.poles]
        rows = list(data.regular_evaluations)
    if args.s:
        values = _map(lambda s: trace_function(F, s, lat), args.s)
        rows += list(zip(args.s, values))
    if args.out and args.out.endswith(".csv"):
        write_csv(args.out, ["s_re", "s_im", "value_re", "value_im"],
                  [(s.real, s.imag, v.real, v.imag) for s, v in ((complex(a), complex(b)) for a, b in rows)])
        if poles:
            stem = args.out[: -len(".csv")]
            write_csv(f"{stem}_poles.csv", ["pole", "residue_re", "residue_im"],
                      [(float(p), complex(r).real, complex(r).imag) for p, r in poles])
        return 0
    _emit(
        args,
        {
            "command": "zeta",
            "N": lat.N,
            "values": [{"s": complex_to_json(s), "value": complex_to_json(v)} for s, v in rows],
            "poles": [{"location": float(p), "residue": complex_to_json(r)} for p, r in poles],
            "window": list(args.window) if args.window else None,
        },
    )
    return 0


def cmd_residue(args):
    cfg = _config(args)
    spec = load_spec(args.spec)
    F = _family(spec, cfg)
    m = spec.dim
    res = nc_residue(F(-float(m)).principal)
    _emit(
        args,
        {
            "command": "residue",
            "dim": m,
            "nc_residue": {"matrix": matrix_to_json(res.matrix_part), "scalar": complex_to_json(res.scalar_part)},
            "first_pole": {"location": -m, "residue": complex_to_json(residue_at_first_pole(F))},
        },
    )
    return 0


def cmd_calibrate(args):
    cfg = _config(args)
    specs = [load_spec(p) for p in args.spec]
    if any(s.dim != args.dim for s in specs):
        raise SpecError(f"all specs must have dim={args.dim}", "dim")
    families = [_family(s, cfg) for s in specs]
    tol = args.tol if args.tol is not None else (1e-6 if args.dim == 1 else 1e-4)
    try:
        cal = gamma0(families, tol=tol)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 1
    _emit(args, {"command": "calibrate", "dim": args.dim, "gamma0": cal.value,
                 "values": list(cal.values), "spread": cal.spread, "tol": tol})
    return 0


def cmd_verify(args):
    cfg = _config(args)
    checks = run_suite(args.suite, cfg)
    for c in checks:
        print(c.line(), file=sys.stderr)
    ok = all(c.passed for c in checks)
    report = {
        "command": "verify",
        "suite": args.suite,
        "seed": cfg.seed,
        "checks": [{"name": c.name, "value": float(c.value), "tol": c.tol, "passed": c.passed} for c in checks],
        "passed": ok,
    }
    if args.out:
        write_json(args.out, report)
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="psizeta", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("--spec", required=True, help="operator spec (JSON)")
        p.add_argument("--out", help="output path; standard output if omitted")
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="seed for sampled (s, t) points")
        p.add_argument("--K", type=int, help="symbol truncation")
        p.add_argument("--N", type=int, help="lattice cutoff")
        p.add_argument("--B", type=int, help="Galerkin cutoff")

    p = sub.add_parser("power", help="build the family of complex powers and dump symbols")
    common(p)
    p.add_argument("--s", type=_parse_complex, action="append", help="power (repeatable)")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("zeta", help="trace function values and poles")
    common(p)
    p.add_argument("--s", type=_parse_complex, action="append", help="evaluation point (repeatable)")
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"), help="pole window in Re s")
    p.set_defaults(func=cmd_zeta)

    p = sub.add_parser("residue", help="noncommutative residue and first-pole residue")
    common(p)
    p.set_defaults(func=cmd_residue)

    p = sub.add_parser("calibrate", help="gamma_0 from two or more specs of one dimension")
    common(p, spec=False)
    p.add_argument("--dim", type=int, choices=(1, 2), required=True)
    p.add_argument("--spec", action="append", required=True, help="operator spec (repeatable)")
    p.add_argument("--tol", type=float, help="allowed spread between specs")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify", help="run a named invariant suite")
    p.add_argument("suite", choices=sorted(SUITES))
    common(p, spec=False)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "zeta" and not (args.s or args.window):
        parser.error("zeta needs --s or --window")
    try:
        with threadpool_limits(limits=1):
            return args.func(args)
    except (SpecError, PoleError, CocycleError, ValueError, OSError) as exc:
        print(f"psizeta {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
