"""Command line entry point (``chj`` / ``python -m chj``)."""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import carleman, config, experiments, qres, tn
from .grid import FIELD_NAMES, GridSpec
from .metrics import resolve_probe, write_series_csv, ErrorSeries
from .nshj import SimParams, diagnostics, evolve, momentum


def _parse_grid(text: str) -> GridSpec:
    text = text.lower()
    if "x" in text:
        nx, ny = (int(t) for t in text.split("x"))
    else:
        nx = ny = int(text)
    return GridSpec(nx, ny)


def cmd_run_nshj(args) -> int:
    cfg = config.load_config(args.config)
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    s = experiments.build_ic(cfg)
    probes = [resolve_probe(x, y, cfg.grid) for x, y in cfg.probes]
    series = {i: [pr.value(momentum(s)[0])] for i, pr in enumerate(probes)}

    def record(k, st):
        jx = momentum(st)[0]
        for i, pr in enumerate(probes):
            series[i].append(pr.value(jx))

    final = evolve(s, cfg.params, callback=record)
    times = np.arange(cfg.params.n_steps + 1) * cfg.params.dt
    for i, pr in enumerate(probes):
        name = f"{cfg.prefix}_nshj_probe_{experiments.probe_tag(pr.x, pr.y)}.csv"
        write_series_csv([ErrorSeries(times, np.array(series[i]), label="nshj")], os.path.join(out, name))
    with open(os.path.join(out, f"{cfg.prefix}_nshj_final.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ix", "iy"] + list(FIELD_NAMES))
        for iy in range(cfg.grid.ny):
            for ix in range(cfg.grid.nx):
                w.writerow([ix, iy] + [repr(float(f[iy, ix])) for f in final.fields()])
    d = diagnostics(s, cfg.params, k=max(cfg.ic.kx, cfg.ic.ky))
    print(f"Re {d.reynolds:.6g}  Ma {d.mach:.6g}  T {d.dissipative_time:.6g}  steps {cfg.params.n_steps}")
    return 0


def cmd_run_chj(args) -> int:
    cfg = config.load_config(args.config)
    out = args.out or cfg.output_dir
    art = experiments.run_experiment(cfg)
    files = experiments.emit_plot_data([art], out, cfg.prefix)
    for N, r in art.orders.items():
        print(f"CHJ{N}: final J_x global error {r.errors['jx'][-1]:.6g}")
    print(f"wrote {len(files)} files to {out}")
    return 0


def cmd_preset(args) -> int:
    out = args.out or os.path.join("out", args.name)
    runs, files = experiments.run_preset(args.name, out, n_steps=args.steps)
    for art in runs:
        errs = ", ".join(f"CHJ{N} {r.errors['jx'][-1]:.3g}" for N, r in art.orders.items())
        print(f"{args.name} {art.nu_tag}: final J_x errors {errs}")
    print(f"wrote {len(files)} files to {out}")
    return 0


def cmd_resources(args) -> int:
    cfg = config.load_config(args.config)
    rep = qres.resource_report(cfg.params, cfg.grid, measure=args.measure)
    sys.stdout.write(rep.to_text())
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f"{cfg.prefix}_resources.csv"), "w") as fh:
        fh.write(rep.to_csv())
    return 0


def cmd_memory_scaling(args) -> int:
    orders = [int(o) for o in args.orders.split(",") if o]
    grids = [_parse_grid(g) for g in args.grids.split(",") if g]
    steps = [int(s) for s in args.steps.split(",") if s]
    reports = [tn.memory_cost(o, g.size, n) for o in orders for g in grids for n in steps]
    if args.out:
        d = os.path.dirname(args.out)
        if d:
            os.makedirs(d, exist_ok=True)
        tn.write_cost_csv(reports, args.out)
    w = csv.writer(sys.stdout)
    w.writerow(tn.COST_COLUMNS)
    for r in reports:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])
    return 0


def cmd_verify_appendix(args) -> int:
    g = GridSpec(args.nx, args.nx)
    p = SimParams()
    report = carleman.verify_appendix_matrices(carleman.build_quadratic(g, p))
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "discrepancy_report.txt"), "w") as fh:
            fh.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chj", description="Carleman-linearised Navier-Stokes-Hamilton-Jacobi simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-nshj", help="run the nonlinear reference solver")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run_nshj)

    p = sub.add_parser("run-chj", help="run reference and Carleman orders side by side")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run_chj)

    p = sub.add_parser("preset", help="run a figure preset")
    p.add_argument("name", choices=experiments.PRESET_NAMES)
    p.add_argument("--out")
    p.add_argument("--steps", type=int, help="override the number of time steps")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("resources", help="block-encoding resource estimate")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--measure", action="store_true", help="also count sparsity of the assembled operators")
    p.set_defaults(func=cmd_resources)

    p = sub.add_parser("memory-scaling", help="full vs factor-list memory estimates")
    p.add_argument("--orders", default="3,4,5")
    p.add_argument("--grids", default="16,32,64,128", help="comma list of N or NxM grids")
    p.add_argument("--steps", default="150", help="comma list of step counts")
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_memory_scaling)

    p = sub.add_parser("verify-appendix", help="diff the derived quadratic table against the printed one")
    p.add_argument("--nx", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_appendix)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # report and fail with a single diagnostic line
        print(f"chj: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
