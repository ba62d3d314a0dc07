"""Command line interface.

Exit codes: 0 on success, 2 when an equivalence or identity check fails,
1 on any error.  Reports print numbers with six decimals; dataset and model
files keep full precision.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .casestudy import CaseStudyConfig, run_case_study, simulate, write_case_study
from .distribution import EmpiricalSample
from .drr import optimal_weights, parse_noise, select_alpha, worst_case_objective
from .quadrangle import check_quadrangle_identities, cvar_norm_quadrangle, qsa_quadrangle
from .svr import Dataset, KernelSpec, SvrConfig, train

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2

log = logging.getLogger("quadsvr")


def _f(v) -> str:
    return "" if v is None else f"{v:.6f}"


def _read_sample(path) -> EmpiricalSample:
    """CSV with a value column and an optional weight column; a header row is skipped."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                if rows:
                    raise
                continue  # header
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    if data.shape[1] == 1:
        return EmpiricalSample(data[:, 0])
    return EmpiricalSample(data[:, 0], data[:, 1])


def cmd_simulate(args) -> int:
    d = simulate(args.l, args.seed)
    d.to_csv(args.out)
    print(f"wrote {d.l} rows to {args.out} (sha256 {d.fingerprint()})")
    return EXIT_OK


def cmd_train(args) -> int:
    d = Dataset.from_csv(args.input)
    cfg = SvrConfig(args.form, alpha=args.alpha, eps=args.eps, lam=args.lam, capC=args.c,
                    kernel=KernelSpec.parse(args.kernel), scaling=args.scaling)
    m = train(d, cfg)
    print(f"formulation,{m.formulation.value}")
    if m.weights is not None:
        print("w," + ";".join(_f(v) for v in m.weights))
    else:
        print(f"support_vectors,{int(np.count_nonzero(np.abs(m.dual_coeffs) > 1e-8))}")
    print(f"b,{_f(m.intercept)}")
    print(f"objective,{_f(m.objective)}")
    print(f"linked_alpha,{_f(m.linked_alpha.lo)};{_f(m.linked_alpha.hi)}")
    print(f"linked_eps,{_f(m.linked_eps.lo)};{_f(m.linked_eps.hi)}")
    if args.out:
        Path(args.out).write_text(json.dumps(m.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_case_study(args) -> int:
    cfg = CaseStudyConfig.from_json(args.config)
    if args.input:
        cfg = CaseStudyConfig(**{**cfg.__dict__, "input": args.input})
    res = run_case_study(cfg)
    print(res.table)
    r = res.report
    print(f"max_abs_dw,{_f(r['max_abs_dw'])}")
    print(f"max_abs_db,{_f(r['max_abs_db'])}")
    if r["alpha_new"] is not None:
        print(f"alpha_new,{_f(r['alpha_new'])}")
    out = args.out or cfg.output_dir
    if out:
        write_case_study(res, out)
    print("equivalence," + ("pass" if res.passed else "FAIL"))
    return EXIT_OK if res.passed else EXIT_MISMATCH


def cmd_quadrangle(args) -> int:
    s = _read_sample(args.input)
    if args.alpha is not None:
        q = cvar_norm_quadrangle(s, args.alpha)
    else:
        q = qsa_quadrangle(s, args.eps)
    print(f"kind,{q.kind}")
    print(f"parameter,{_f(q.parameter)}")
    for k in ("risk", "deviation", "regret", "error"):
        print(f"{k},{_f(getattr(q, k))}")
    print("statistic," + " ".join(f"[{_f(i.lo)};{_f(i.hi)}]" for i in q.statistic))
    rep = check_quadrangle_identities(s, q)
    print("identities," + ("pass" if rep.passed else "FAIL"))
    for line in rep.lines():
        if line.endswith("FAIL"):
            print(f"  {line}")
    return EXIT_OK if rep.passed else EXIT_MISMATCH


def cmd_drr_weights(args) -> int:
    s = _read_sample(args.input)
    wv = optimal_weights(s, args.alpha)
    if args.out:
        wv.to_csv(args.out)
    print("index,weight")
    for i, v in enumerate(wv.weights):
        print(f"{i},{_f(v)}")
    print(f"# worst_case,{_f(worst_case_objective(s, args.alpha))}")
    return EXIT_OK


def cmd_select_alpha(args) -> int:
    res = select_alpha(parse_noise(args.noise), default_alpha=args.default_alpha)
    print(f"alpha_star,{_f(res.alpha_star)}")
    print(f"nu,{_f(res.nu)}")
    print(f"eps,{_f(res.eps)}")
    print(f"symmetric,{str(res.symmetric).lower()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadsvr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a simulated y = x + Laplace dataset")
    s.add_argument("--l", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="fit one SVR formulation")
    s.add_argument("--input", required=True)
    s.add_argument("--form", required=True,
                   choices=["eps-primal", "nu-primal", "nu-deviation", "nu-dual"])
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", type=float)
    g.add_argument("--eps", type=float)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--c", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--kernel", default="linear", help="linear | rbf:GAMMA | poly:DEGREE,OFFSET")
    s.add_argument("--scaling", default="case-study", choices=["case-study", "prop"])
    s.add_argument("--out", help="model JSON path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("case-study", help="run all formulations and compare them")
    s.add_argument("--config", default="{}", help="JSON string or path")
    s.add_argument("--input", help="dataset CSV to use instead of simulating")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_case_study)

    s = sub.add_parser("quadrangle", help="quadrangle quartet of a sample")
    s.add_argument("--input", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", type=float)
    g.add_argument("--eps", type=float)
    s.set_defaults(func=cmd_quadrangle)

    s = sub.add_parser("drr-weights", help="worst-case weights of residuals")
    s.add_argument("--input", required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_drr_weights)

    s = sub.add_parser("select-alpha", help="alpha for a known noise law")
    s.add_argument("--noise", required=True,
                   help="laplace:a,d | gauss:mu,sigma | expshift:rate,shift | empirical:FILE")
    s.add_argument("--default-alpha", type=float, default=0.6)
    s.set_defaults(func=cmd_select_alpha)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # reported, not raised, so the exit code is stable
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
