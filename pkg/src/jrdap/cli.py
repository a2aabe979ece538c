"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from . import io as jio
from .config import PRESETS, ConfigError, dump_config, load_config
from .harness import (METHODS, GuardError, build_setup, check_ampc_guard, process, run_benchmark,
                      run_pipeline, run_validation, simulate)
from .scene import load_cube, save_cube
from .waveform import save_waveform

log = logging.getLogger("jrdap")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="jrdap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, default_preset="default"):
        sp.add_argument("--config", help="YAML scene config (overrides apply on top of the preset)")
        sp.add_argument("--preset", choices=sorted(PRESETS), default=None,
                        help=f"built-in config when --config is absent (default: {default_preset})")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default="out", help="output directory")
        sp.set_defaults(default_preset=default_preset)

    sp = sub.add_parser("design", help="design the CBM weight dictionary")
    common(sp)
    sp = sub.add_parser("simulate", help="synthesize one data cube")
    common(sp)
    sp = sub.add_parser("process", help="run estimators on a cube and write maps")
    common(sp)
    sp.add_argument("--cube", help="cube file from 'simulate' (default: synthesize from the config)")
    sp.add_argument("--methods", default=",".join(METHODS), help="comma-separated subset of " + ",".join(METHODS))
    sp.add_argument("--allow-large-ampc", action="store_true", help="permit AMPC with N*P > 512")
    sp = sub.add_parser("run", help="full pipeline: dictionary, cube, maps, traces, manifest")
    common(sp)
    sp.add_argument("--methods", default=",".join(METHODS))
    sp.add_argument("--allow-large-ampc", action="store_true")
    sp = sub.add_parser("validate", help="lemma oracles and property checks")
    common(sp, "small")
    sp.add_argument("--mc-draws", type=int, help="Monte-Carlo draws per oracle")
    sp = sub.add_parser("bench", help="AMPC vs JRDAP seconds per cell, CBM and NCBM")
    common(sp, "reduced")
    sp.add_argument("--repeats", type=int, help="full-map runs per method")
    sp.add_argument("--allow-large-ampc", action="store_true")
    return p


def _config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = PRESETS[args.preset or args.default_preset]()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed: must be a nonnegative integer")
        cfg = cfg.with_seed(args.seed)
    return cfg


def _methods(text):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    if not methods:
        raise ConfigError("methods: need at least one method")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"methods: unknown {bad}; choose from {list(METHODS)}")
    return methods


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        os.makedirs(args.out, exist_ok=True)
        head = {"config_hash": cfg.hash(), "seed": cfg.seed}
        dump_config(cfg, os.path.join(args.out, "config.yaml"))

        if args.command == "design":
            setup = build_setup(cfg)
            path = os.path.join(args.out, "dictionary.txt")
            jio.save_dictionary(path, setup.dictionary, head)
            for k, psl in enumerate(setup.dictionary.achieved_psl):
                log.info("entry %d: PSL %.3f dB", k, 20 * math.log10(psl))
            log.info("wrote %s", path)

        elif args.command == "simulate":
            setup = build_setup(cfg)
            cube, real = simulate(setup)
            save_cube(os.path.join(args.out, "cube.bin"), cube, cfg.cpi.Q, cfg.array.M)
            save_waveform(os.path.join(args.out, "waveform.txt"), setup.waveform)
            jio.save_dictionary(os.path.join(args.out, "dictionary.txt"), setup.dictionary, head)
            jio.save_complex_matrix(os.path.join(args.out, "truth.csv"), real.field_truth, head)
            jio.save_json(os.path.join(args.out, "simulate.json"),
                          {**head, "symbols": setup.symbols.tolist(), "clutter_patch_power": setup.clutter_power})
            log.info("wrote cube (P=%d, L=%d, N=%d) to %s", cfg.cpi.P, cfg.cpi.L, cfg.waveform.N, args.out)

        elif args.command == "process":
            methods = _methods(args.methods)
            if "ampc" in methods:
                check_ampc_guard(cfg.waveform.N, cfg.cpi.P, args.allow_large_ampc)
            setup = build_setup(cfg)
            if args.cube:
                cube, hdr = load_cube(args.cube)
                want = {"P": cfg.cpi.P, "L": cfg.cpi.L, "N": cfg.waveform.N, "Q": cfg.cpi.Q, "M": cfg.array.M}
                if hdr != want:
                    raise ConfigError(f"cube header {hdr} does not match config {want}")
            else:
                cube, _ = simulate(setup)
            maps, prior = process(cube, setup, methods, args.allow_large_ampc)
            rows = []
            for name, m in maps.items():
                jio.save_map_db(os.path.join(args.out, f"map_{name}.csv"), m.estimates, {"method": name, **head})
                rows.append({"method": name, "transmit": cfg.processing.transmit,
                             "cells": m.estimates.size, "total_s": m.meta["seconds"]})
                log.info("%-8s %.3f s", name, m.meta["seconds"])
            jio.save_timing(os.path.join(args.out, "timing.csv"), rows, head)

        elif args.command == "run":
            manifest = run_pipeline(cfg, _methods(args.methods), args.out, args.allow_large_ampc)
            for name, dets in manifest["detections"].items():
                vis = [d["cell"] for d in dets if d["visible"]]
                log.info("%-8s visible targets: %s", name, vis)

        elif args.command == "validate":
            rep = run_validation(cfg, num_draws=args.mc_draws)
            lines = rep.lines()
            with open(os.path.join(args.out, "validation.txt"), "w") as fh:
                fh.write(f"# config_hash={head['config_hash']}\n# seed={head['seed']}\n")
                fh.write("\n".join(lines) + "\n")
            print("\n".join(lines))
            if not rep.passed:
                return EXIT_VALIDATION

        elif args.command == "bench":
            rep = run_benchmark(cfg, repeats=args.repeats, allow_large_ampc=args.allow_large_ampc)
            jio.save_timing(os.path.join(args.out, "bench.csv"), rep.rows, head)
            for r in rep.rows:
                print(f"{r['transmit']:5s} {r['method']:12s} {r['s_per_cell']:.3e} s/cell ({r['cells']} cells)")
            for t in ("cbm", "ncbm"):
                print(f"{t}: JRDAP faster than AMPC: {rep.ordering_holds(t)}")

    except (ConfigError, GuardError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
