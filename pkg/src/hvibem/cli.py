"""Command-line front end: ``hvibem bench|converge|tabulate-law|mesh-dump``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import load_config, run_benchmark, run_convergence_study
from .mesh import ConfigurationError
from .smoothing import build_benchmark_adhesion, write_law_csv, AdhesionParameters


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hvibem", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log solver iterations to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, default=None, help="INI file (default: bundled benchmark)")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--eps", type=float, default=None, help="smoothing parameter override")
        return sp

    common(sub.add_parser("bench", help="solve all load cases"))
    conv = common(sub.add_parser("converge", help="energy-norm refinement study"))
    conv.add_argument("--levels", type=int, default=None, help="number of compared levels (>= 3)")
    conv.add_argument("--control", action="store_true",
                      help="also run the law-free, unconstrained control case")
    law = common(sub.add_parser("tabulate-law", help="write the adhesion law table"))
    law.add_argument("--range", nargs=2, type=float, default=(-0.5, 0.1), metavar=("LO", "HI"))
    law.add_argument("--points", type=int, default=1201)
    common(sub.add_parser("mesh-dump", help="write the boundary mesh and its summary"))
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.eps is not None:
            cfg = replace(cfg, eps=args.eps)
        if getattr(args, "levels", None) is not None:
            cfg = replace(cfg, levels=args.levels)
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out if args.out is not None else cfg.output)

    if args.command == "bench":
        res = run_benchmark(cfg, out)
        print(f"unknowns {res.unknowns}  multipliers {res.multipliers}")
        for c in res.cases:
            r = c.report
            print(f"case {c.case}  t2={c.t2:g}  {r.reason:<15s} iterations {r.iterations:3d}  "
                  f"scaled merit {r.scaled_merit:.2e}  max|u2| {np.abs(c.fields.contact_displacement[:, 1]).max():.6e} mm")
        return 0 if res.all_converged else 1

    if args.command == "converge":
        studies = [run_convergence_study(cfg, out, "benchmark")]
        if args.control:
            ctrl = replace(cfg, law_enabled=False, constraints_enabled=False)
            studies.append(run_convergence_study(ctrl, out, "control"))
        for s in studies:
            errs = "  ".join(f"{e:.3e}" for e in s.errors)
            print(f"{s.label:<10s} h={s.h.tolist()}  errors {errs}  fitted rate {s.fitted_rate:.3f}")
        return 0 if all(s.converged for s in studies) else 1

    if args.command == "tabulate-law":
        law = build_benchmark_adhesion(AdhesionParameters(cfg.A, cfg.t), cfg.eps)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "law.csv"
        write_law_csv(path, law, np.linspace(args.range[0], args.range[1], args.points))
        print(path)
        return 0

    mesh = cfg.mesh()
    out.mkdir(parents=True, exist_ok=True)
    mesh.to_csv(out / "mesh.csv")
    (out / "mesh_summary.json").write_text(json.dumps(mesh.summary(), indent=2) + "\n")
    print(json.dumps(mesh.summary()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
