"""Command-line front end: single runs, the two canned experiment sweeps,
the brute-force oracle check, and plot emission.

Subcommands: run, policy-sweep, feasible-region, oracle-check, plot.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io as cio
from .engine import SimConfig, attained_performance, is_feasible, run
from .oracle import oracle_check

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2


def _load(args):
    try:
        doc = cio.load_config(args.config) if args.config else {}
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    except cio.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    return doc


def _sim_config(doc, args) -> SimConfig:
    try:
        return cio.sim_config_from(doc, seed=args.seed)
    except cio.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_point(cfg: SimConfig):
    m = run(cfg)
    post_s = (cfg.horizon_slots - cfg.warmup_slots) * cfg.slot_duration
    thr, delay = attained_performance(m, post_s, cfg.num_users)
    return thr, delay, m


def _parallel_map(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def cmd_run(args) -> int:
    doc = _load(args)
    cfg = _sim_config(doc, args)
    out = _outdir(args)
    thr, delay, m = _run_point(cfg)
    cio.write_deliveries_csv(out / "deliveries.csv", m)
    cio.write_metadata_json(out / "metadata.json", m, extra={
        "throughput_fps": thr,
        "mean_delay_ms": None if delay is None else delay * 1e3,
    })
    if m.queue_rows:
        cio.write_queue_trajectory_csv(out / "queues.csv", m)
    delay_txt = "n/a" if delay is None else f"{delay * 1e3:.2f} ms"
    print(f"policy={cfg.policy} lambda={cfg.lambda_fps:g} fps "
          f"throughput={thr:.2f} fps mean_delay={delay_txt} "
          f"in_flight_end={m.in_flight_end}")
    if m.violations:
        print(f"WARNING: {len(m.violations)} invariant violations", file=sys.stderr)
    return EXIT_OK


def _policy_sweep_cfg(base: SimConfig, lam, policy, gamma, seed):
    return dataclasses.replace(base, lambda_fps=float(lam), policy=policy,
                               gamma_cache=float(gamma), seed=int(seed))


def _eval_sweep_point(cfg: SimConfig):
    thr, delay, _m = _run_point(cfg)
    return thr, delay


def cmd_policy_sweep(args) -> int:
    doc = _load(args)
    base = _sim_config(doc, args)
    spec = cio.sweep_spec_from(doc)
    out = _outdir(args)
    base = dataclasses.replace(base, beta3=float(spec["beta3"]))
    points = []
    for lam in spec["lambda_grid"]:
        for policy in spec["policies"]:
            for gamma in spec["gamma_grid"]:
                for rep in range(spec["repetitions"]):
                    points.append((lam, policy, gamma,
                                   _policy_sweep_cfg(base, lam, policy, gamma,
                                                     base.seed + rep)))
    results = _parallel_map(_eval_sweep_point, [p[3] for p in points],
                            args.workers)
    agg = {}
    for (lam, policy, gamma, _cfg), (thr, delay) in zip(points, results):
        agg.setdefault((lam, policy, gamma), []).append((thr, delay))
    rows = []
    for (lam, policy, gamma), vals in sorted(agg.items(),
                                             key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        thr = statistics.median(v[0] for v in vals)
        delays = [v[1] for v in vals if v[1] is not None]
        delay_ms = statistics.median(delays) * 1e3 if delays else ""
        rows.append([lam, policy, gamma, f"{thr:.4f}",
                     f"{delay_ms:.4f}" if delay_ms != "" else ""])
    csv_path = out / "policy_sweep.csv"
    cio.write_rows_csv(csv_path, ["lambda_fps", "policy", "gamma",
                                  "throughput_fps", "mean_delay_ms"], rows,
                       {"base": dataclasses.asdict(base), "sweep": spec})
    emit_plots(csv_path, "policy_sweep", out / "policy_sweep.svg")
    print(f"wrote {csv_path}")
    return EXIT_OK


def _region_cfg(base: SimConfig, b1, b2, b3, lam, seed):
    return dataclasses.replace(base, beta1=float(b1), beta2=float(b2),
                               beta3=float(b3), lambda_fps=float(lam),
                               policy="centralized", seed=int(seed))


def _eval_region_point(item):
    cfg, delay_req_s = item
    m = run(cfg)
    post_s = (cfg.horizon_slots - cfg.warmup_slots) * cfg.slot_duration
    thr, delay = attained_performance(m, post_s, cfg.num_users)
    feas = is_feasible(cfg, delay_req_s, metrics=m)
    return thr, delay, feas


def region_rows(base: SimConfig, spec: dict, workers: int = 1):
    """Evaluate the (beta1, beta2) grid per beta3; returns sorted rows and
    the per-beta3 saving ratios."""
    step = float(spec["beta12_step"])
    n = int(round(1.0 / step))
    grid = [round(i * step, 10) for i in range(n + 1)]
    lam = spec["region_lambda_fps"]
    delay_req_s = spec["delay_req_ms"] * 1e-3
    reps = spec["repetitions"]
    points = []
    for b3 in spec["beta3_grid"]:
        for b1 in grid:
            for b2 in grid:
                for rep in range(reps):
                    points.append((b3, b1, b2,
                                   (_region_cfg(base, b1, b2, b3, lam,
                                                base.seed + rep), delay_req_s)))
    results = _parallel_map(_eval_region_point, [p[3] for p in points], workers)
    agg = {}
    for (b3, b1, b2, _item), (thr, delay, feas) in zip(points, results):
        agg.setdefault((b3, b1, b2), []).append((thr, delay, feas))
    rows = []
    feasible = {}
    for (b3, b1, b2), vals in sorted(agg.items()):
        feas = sum(1 for v in vals if v[2]) * 2 > len(vals)   # majority
        thr = statistics.median(v[0] for v in vals)
        delays = [v[1] for v in vals if v[1] is not None]
        delay_ms = f"{statistics.median(delays) * 1e3:.4f}" if delays else ""
        feasible[(b3, b1, b2)] = feas
        rows.append([b3, b1, b2, int(feas), f"{thr:.4f}", delay_ms])

    savings = {}
    for b3 in spec["beta3_grid"]:
        diag = [b for b in grid if feasible.get((b3, b, b))]
        edge = [b2 for b2 in grid if feasible.get((b3, grid[-1], b2))]
        savings[b3] = {
            "diagonal_saving": None if not diag else round(1.0 - min(diag), 10),
            "edge_saving_beta1_1": None if not edge else round(1.0 - min(edge), 10),
        }
    return rows, savings


def cmd_feasible_region(args) -> int:
    doc = _load(args)
    base = _sim_config(doc, args)
    spec = cio.sweep_spec_from(doc)
    out = _outdir(args)
    rows, savings = region_rows(base, spec, args.workers)
    csv_path = out / "region.csv"
    cio.write_rows_csv(csv_path, ["beta3", "beta1", "beta2", "feasible",
                                  "throughput_fps", "mean_delay_ms"], rows,
                       {"base": dataclasses.asdict(base), "sweep": spec})
    (out / "region_savings.json").write_text(
        json.dumps({str(k): v for k, v in savings.items()}, indent=2) + "\n")
    emit_plots(csv_path, "region", out / "region.svg")
    for b3, s in savings.items():
        print(f"beta3={b3}: diagonal saving={s['diagonal_saving']} "
              f"edge saving (beta1=1)={s['edge_saving_beta1_1']}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    ok, counter = oracle_check(trials=args.trials, max_nodes=args.size,
                               seed=args.seed or 0,
                               perturb_metric=args.perturb_metric)
    if ok:
        print(f"oracle check passed ({args.trials} trials)")
        return EXIT_OK
    print("oracle mismatch; counterexample:", file=sys.stderr)
    print(counter, file=sys.stderr)
    return EXIT_MISMATCH


def emit_plots(csv_path, kind, out_path) -> int:
    """Render a sweep CSV to a self-contained SVG figure."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = cio.read_rows_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if kind == "policy_sweep":
        need = {"lambda_fps", "policy", "gamma", "throughput_fps", "mean_delay_ms"}
        if rows and not need <= set(rows[0]):
            raise ValueError(f"CSV schema does not match kind {kind!r}")
        series = {}
        for r in rows:
            if r["mean_delay_ms"] == "":
                continue
            key = (r["policy"], r["gamma"])
            series.setdefault(key, []).append(
                (float(r["throughput_fps"]), float(r["mean_delay_ms"])))
        for (policy, gamma), pts in sorted(series.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=f"{policy}, gamma={gamma}")
        ax.set_xlabel("attained throughput (fps)")
        ax.set_ylabel("average delay (ms)")
        ax.set_title("Effect of integrated 3C control")
    elif kind == "region":
        need = {"beta3", "beta1", "beta2", "feasible"}
        if rows and not need <= set(rows[0]):
            raise ValueError(f"CSV schema does not match kind {kind!r}")
        borders = {}
        for r in rows:
            if int(r["feasible"]):
                key = (r["beta3"], float(r["beta1"]))
                b2 = float(r["beta2"])
                if key not in borders or b2 < borders[key]:
                    borders[key] = b2
        by_b3 = {}
        for (b3, b1), b2 in sorted(borders.items()):
            by_b3.setdefault(b3, []).append((b1, b2))
        for b3, pts in sorted(by_b3.items()):
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="s",
                    label=f"beta3={b3}")
        ax.set_xlabel("processing capacity beta1")
        ax.set_ylabel("transmission capacity beta2")
        ax.set_title("Feasible region borders")
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    if not rows:
        print("warning: empty CSV, emitting empty axes", file=sys.stderr)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        return emit_plots(args.csv, args.kind, args.out_file)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="c3net",
                                description="3C network simulator and experiment harness")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=str, default=None, help="JSON scenario document")
        sp.add_argument("--out", type=str, default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the run seed")
        sp.add_argument("--workers", type=int, default=1, help="concurrent runs in sweeps")

    sp = sub.add_parser("run", help="execute one simulation run")
    common(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("policy-sweep", help="throughput/delay versus load per policy")
    common(sp)
    sp.set_defaults(fn=cmd_policy_sweep)

    sp = sub.add_parser("feasible-region", help="(beta1, beta2) feasibility grid per beta3")
    common(sp)
    sp.set_defaults(fn=cmd_feasible_region)

    sp = sub.add_parser("oracle-check", help="verify route selection against brute force")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--size", type=int, default=5, help="max nodes (<= 5)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--perturb-metric", action="store_true",
                    help="negative-control hook: bias the oracle metric")
    sp.set_defaults(fn=cmd_oracle_check)

    sp = sub.add_parser("plot", help="render a sweep CSV to SVG")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--kind", choices=["policy_sweep", "region"], required=True)
    sp.add_argument("--out-file", default="plot.svg")
    sp.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
