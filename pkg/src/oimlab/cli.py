"""Command-line runner: ``oimlab {gradcheck,toy2d,separability,ablation}``.

Every run writes ``results.csv``, ``summary.json`` and ``resolved_config.yaml``
into its output directory.  Exit codes: 0 ok, 1 configuration error, 2 a
check failed.
"""
import argparse
import json
import os
import sys
import time

import numpy as np

from . import gradcheck as gc
from . import presets
from .config import apply_overrides, dump_config, load_config
from .experiments import make_dataset, search_inputs, train
from .memory_bank import ConfigError
from .metrics import angular_occupancy, decision_grid, retrieval_eval, separability
from .numerics import make_rng
from .svg import render

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2
VARIANTS = ("none", "batchnorm", "protonorm")
GRID_RESOLUTION = 60


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _median(values):
    return float(np.median(values))


def _count(flags):
    return int(sum(bool(f) for f in flags))


def cmd_gradcheck(cfg, out):
    opts = dict(cfg.gradcheck or {})
    results = gc.run_suites(cfg.seed, int(opts.get("instances", 100)),
                            float(opts.get("tolerance", gc.TOLERANCE)))
    write_csv(os.path.join(out, "results.csv"), ["check", "instances", "max_rel_error", "tolerance", "passed"],
              [(r.name, r.instances, r.max_rel_error, r.tolerance, int(r.passed)) for r in results])
    for r in results:
        print(f"{r.name:<14} max rel err {r.max_rel_error:.3e}  {'ok' if r.passed else 'FAIL'}")
    passed = all(r.passed for r in results)
    return {"passed": passed, "checks": {r.name: r.max_rel_error for r in results}}, \
        EXIT_OK if passed else EXIT_CHECK


def _toy_bounds(inputs, pad=1.0):
    lo, hi = inputs.min(axis=0) - pad, inputs.max(axis=0) + pad
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def cmd_toy2d(cfg, out):
    """Angular occupancy of the final LUT under each standardizer.

    Each seed reports the median over the LUT snapshots taken after every
    step of the last epoch; a single snapshot is dominated by the last batch.
    """
    if cfg.data.in_dim != 2 or cfg.embedder.out_dim != 2:
        raise ConfigError("toy2d needs 2-D inputs and features")
    rows, per_seed = [], {}
    angular = {v: [] for v in VARIANTS}
    for seed in cfg.seeds:
        data = make_dataset(cfg, make_rng(seed, 0))
        labels = [t.id for t in data.tags]
        per_seed[seed] = {}
        for variant in VARIANTS:
            snaps = []

            def hook(epoch, step, pipe, snaps=snaps):
                if epoch == cfg.epochs:
                    rep = angular_occupancy(pipe.lut.entries)
                    snaps.append((rep.gap_std, rep.min_gap))

            pipe = train(cfg, data, variant, "oim", seed, on_step=hook)
            gap_std = _median([s[0] for s in snaps])
            min_gap = _median([s[1] for s in snaps])
            rows.append((seed, variant, gap_std, min_gap))
            per_seed[seed][variant] = (gap_std, min_gap)
            final = angular_occupancy(pipe.lut.entries)
            angular[variant].append((seed, final.gap_std, final.min_gap,
                                     ";".join(repr(float(g)) for g in final.sorted_gaps)))
            vdir = os.path.join(out, variant)
            os.makedirs(vdir, exist_ok=True)
            if seed == cfg.seeds[0]:
                bounds = _toy_bounds(data.inputs)
                grid = decision_grid(pipe.lut.entries, bounds, GRID_RESOLUTION, pipe.features)
                np.savetxt(os.path.join(vdir, "decision_grid.csv"), grid, fmt="%d", delimiter=",")
                with open(os.path.join(vdir, "decision_grid.svg"), "w") as fh:
                    fh.write(render(bounds, grid, data.inputs, labels, n_classes=data.num_ids))
    write_csv(os.path.join(out, "results.csv"), ["seed", "variant", "gap_std", "min_gap"], rows)
    for variant, arows in angular.items():
        write_csv(os.path.join(out, variant, "angular.csv"),
                  ["seed", "final_gap_std", "final_min_gap", "sorted_gaps"], arows)
    std_order = [r["protonorm"][0] < r["batchnorm"][0] < r["none"][0] for r in per_seed.values()]
    gap_order = [r["protonorm"][1] > r["batchnorm"][1] > r["none"][1] for r in per_seed.values()]
    summary = {
        "median_gap_std": {v: _median([r[v][0] for r in per_seed.values()]) for v in VARIANTS},
        "median_min_gap": {v: _median([r[v][1] for r in per_seed.values()]) for v in VARIANTS},
        "seeds": len(per_seed),
        "seeds_gap_std_ordered": _count(std_order),
        "seeds_min_gap_ordered": _count(gap_order),
    }
    return summary, EXIT_OK


SEP_FIELDS = ("lut_mean", "lut_std", "queue_mean", "queue_std", "combined_mean", "combined_std")


def cmd_separability(cfg, out):
    """Pairwise cosine of bank entries at every epoch boundary, OIM loss throughout."""
    rows, final = [], {}
    for seed in cfg.seeds:
        data = make_dataset(cfg, make_rng(seed, 0))
        final[seed] = {}
        for variant in VARIANTS:
            reports = []
            train(cfg, data, variant, "oim", seed,
                  on_epoch=lambda e, p, reports=reports: reports.append(
                      separability(e, p.lut.entries, p.queue.active())))
            for rep in reports:
                rows.append((seed, variant, rep.epoch) + tuple(getattr(rep, f) for f in SEP_FIELDS))
            final[seed][variant] = reports[-1].lut_mean
    write_csv(os.path.join(out, "results.csv"), ("seed", "variant", "epoch") + SEP_FIELDS, rows)
    for k, panel in enumerate(("lut", "queue", "combined")):
        write_csv(os.path.join(out, f"{panel}.csv"), ["seed", "variant", "epoch", "mean", "std"],
                  [r[:3] + r[3 + 2 * k:5 + 2 * k] for r in rows])
    ordered = [f["protonorm"] < f["batchnorm"] < f["none"] for f in final.values()]
    summary = {
        "final_lut_mean": {str(s): f for s, f in final.items()},
        "median_final_lut_mean": {v: _median([f[v] for f in final.values()]) for v in VARIANTS},
        "seeds": len(final),
        "seeds_ordered": _count(ordered),
    }
    return summary, EXIT_OK


CELLS = (("batchnorm", "oim"), ("batchnorm", "loim"), ("protonorm", "oim"), ("protonorm", "loim"))


def cmd_ablation(cfg, out):
    """Retrieval on corrupted held-out crops for each standardizer x loss cell."""
    if not cfg.data.test_per_id or cfg.data.test_per_id < 2:
        raise ConfigError("ablation needs data.test_per_id >= 2")
    rows, res = [], {}
    for seed in cfg.seeds:
        data = make_dataset(cfg, make_rng(seed, 0))
        query = search_inputs(cfg, data, seed)
        res[seed] = {}
        for norm, loss in CELLS:
            feats = train(cfg, data, norm, loss, seed).embed(query)
            rep = retrieval_eval(feats, data.test_ids, feats, data.test_ids, exclude_self=True)
            rows.append((seed, norm, loss, rep.mAP, rep.rank1))
            res[seed][(norm, loss)] = rep.mAP
    write_csv(os.path.join(out, "results.csv"), ["seed", "norm", "loss", "mAP", "rank1"], rows)
    table = []
    for norm, loss in CELLS:
        maps = [r[3] for r in rows if r[1:3] == (norm, loss)]
        r1s = [r[4] for r in rows if r[1:3] == (norm, loss)]
        table.append((norm, loss, _median(maps), float(np.std(maps)), _median(r1s), float(np.std(r1s))))
    write_csv(os.path.join(out, "table.csv"),
              ["norm", "loss", "median_mAP", "std_mAP", "median_rank1", "std_rank1"], table)
    medians = {f"{n}+{l}": t[2] for (n, l), t in zip(CELLS, table)}
    per = list(res.values())
    summary = {
        "median_mAP": medians,
        "std_mAP": {f"{n}+{l}": t[3] for (n, l), t in zip(CELLS, table)},
        "seeds": len(per),
        "seeds_loim_ge_oim": {n: _count(r[(n, "loim")] >= r[(n, "oim")] for r in per)
                              for n in ("batchnorm", "protonorm")},
        "seeds_protonorm_ge_batchnorm": {l: _count(r[("protonorm", l)] >= r[("batchnorm", l)] for r in per)
                                         for l in ("oim", "loim")},
        "best_cell": max(medians, key=medians.get),
    }
    return summary, EXIT_OK


COMMANDS = {"gradcheck": cmd_gradcheck, "toy2d": cmd_toy2d, "separability": cmd_separability,
            "ablation": cmd_ablation}


def resolve_config(command, config_path=None, seed=None, out=None):
    cfg = presets.PRESETS[command]()
    if config_path:
        cfg = load_config(config_path, cfg)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out"] = out
    return apply_overrides(cfg, overrides)


def run(command, config_path=None, seed=None, out=None):
    """Run ``command``; returns ``(exit_code, summary)``."""
    try:
        cfg = resolve_config(command, config_path, seed, out)
    except (ConfigError, OSError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    os.makedirs(cfg.out, exist_ok=True)
    dump_config(cfg, os.path.join(cfg.out, "resolved_config.yaml"))
    start = time.perf_counter()
    try:
        summary, code = COMMANDS[command](cfg, cfg.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    summary["seconds"] = round(time.perf_counter() - start, 3)
    write_json(os.path.join(cfg.out, "summary.json"), summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return code, summary


def build_parser():
    parser = argparse.ArgumentParser(prog="oimlab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="YAML file merged over the command's preset")
    parser.add_argument("--seed", type=int, help="first seed (overrides the config)")
    parser.add_argument("--out", help="output directory (overrides the config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    code, _ = run(args.command, args.config, args.seed, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
