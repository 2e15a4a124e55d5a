import os
import sys
import asyncio
import argparse
import logging
import orjson
import numpy as np
from pydantic import ValidationError
from typing import List, Optional

from phunmix.converter import result_to_dict
from phunmix.errors import ConfigError, PhunmixError
from phunmix.lifting import BcdConfig
from phunmix.oracle import GridSpec, certify_global, grid_search
from phunmix.solvers import SOLVERS, run_solver, validate_solver_names
from phunmix.utils import derive_seed, make_rng, parse_snr
from phunmix.bench import settings, state, writer
from phunmix.bench.config import build_config, load_config
from phunmix.bench.processor import run_sweep_to_files
from phunmix.separation import settings as sep_settings
from phunmix.separation.audio import read_wav, synthetic_sources, write_wav
from phunmix.separation.processor import run_separation
from phunmix.separation.stft import StftConfig

log = logging.getLogger("phunmix")


def _solver_list(text: str) -> List[str]:
    return list(validate_solver_names([name.strip() for name in text.split(",") if name.strip()]))


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.trials is not None:
        cfg = build_config(**{**cfg.model_dump(), "trials": args.trials})
    csv_path = args.out or cfg.output_path
    if not csv_path:
        name = os.path.splitext(os.path.basename(args.config))[0]
        csv_path = os.path.join(settings.OUTPUT_DIR, f"{name}.csv")
    rows = run_sweep_to_files(cfg, csv_path, args.json, args.threads)
    log.info("SWEEP: finished, %d rows", len(rows))
    return settings.EXIT_OK


def _load_sources(args, cfg: StftConfig) -> np.ndarray:
    if args.sources:
        signals = [read_wav(path, cfg.sample_rate)[0] for path in args.sources.split(",")]
        lengths = {signal.shape[0] for signal in signals}
        if len(lengths) != 1:
            raise ConfigError(f"source files have different lengths: {sorted(lengths)}")
        return np.stack(signals)
    if args.synthetic:
        return synthetic_sources(args.synthetic, cfg, make_rng(derive_seed(args.seed, "sources")))
    raise ConfigError("give either --sources or --synthetic")


def cmd_separate(args) -> int:
    cfg = StftConfig(sample_rate=args.rate, window_len=args.window, hop=args.hop)
    solvers = _solver_list(args.solvers)
    sources = _load_sources(args, cfg)
    try:
        snr_db = parse_snr(args.snr)
    except ValueError:
        raise ConfigError(f"--snr must be a number of dB or 'noiseless', got '{args.snr}'")
    rows = run_separation(sources, args.m, solvers, args.seed, cfg, args.threshold_db, snr_db,
                          dump_dir=args.dump_spectrograms)
    for row in rows:
        print(f"{row.solver:>10}  {row.mean_sdr:8.2f} dB  " + "  ".join(f"{v:.2f}" for v in row.source_sdrs))
    if args.out:
        asyncio.run(writer.write_separation_csv(args.out, rows))
    if args.write_sources:
        os.makedirs(args.write_sources, exist_ok=True)
        for i, source in enumerate(sources):
            write_wav(os.path.join(args.write_sources, f"source_{i}.wav"), source, cfg.sample_rate)
    return settings.EXIT_OK


def cmd_solve(args) -> int:
    instance = asyncio.run(state.load_instance(args.instance))
    if args.solver not in SOLVERS:
        raise ConfigError(f"unknown solver '{args.solver}'")
    bcd_cfg = BcdConfig(trace_path=args.trace)
    result = run_solver(args.solver, instance, make_rng(derive_seed(args.seed, args.solver)), bcd_cfg=bcd_cfg)
    payload = result_to_dict(result, instance)
    if args.oracle:
        spec = GridSpec(points_per_phase=args.grid_points)
        payload["oracle_residual"] = grid_search(instance, spec).residual
        payload["certified_global"] = certify_global(instance, result, spec)
    sys.stdout.write(orjson.dumps(payload, option=orjson.OPT_INDENT_2).decode() + "\n")
    return settings.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phunmix", description="Phase unmixing solvers and benchmarks")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    sweep = commands.add_parser("sweep", help="Monte-Carlo sweep over (M, K, SNR) cells")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", help="CSV report path (overrides 'output' in the config)")
    sweep.add_argument("--json", help="JSON summary report path")
    sweep.add_argument("--threads", type=int)
    sweep.add_argument("--trials", type=int, help="override the trial count of the config")
    sweep.set_defaults(handler=cmd_sweep)

    separate = commands.add_parser("separate", help="informed STFT-domain separation scored by SDR")
    separate.add_argument("--sources", help="comma-separated mono WAV files, one per source")
    separate.add_argument("--synthetic", type=int, metavar="K", help="use K synthetic sources instead of WAV files")
    separate.add_argument("--m", type=int, required=True, help="number of mixture channels")
    separate.add_argument("--solvers", default="rand,nmwf,phunalt,phunlift,phunlift+")
    separate.add_argument("--seed", type=int, default=0)
    separate.add_argument("--snr", default="noiseless", help="mixture SNR in dB or 'noiseless'")
    separate.add_argument("--threshold-db", type=float, default=sep_settings.THRESHOLD_DB)
    separate.add_argument("--rate", type=int, default=sep_settings.SAMPLE_RATE)
    separate.add_argument("--window", type=int, default=sep_settings.WINDOW_LEN)
    separate.add_argument("--hop", type=int, default=sep_settings.HOP)
    separate.add_argument("--out", help="CSV table of SDRs")
    separate.add_argument("--write-sources", metavar="DIR", help="also save the source signals as WAV")
    separate.add_argument("--dump-spectrograms", metavar="DIR",
                          help="write mixture, source and estimated spectrograms as .spec files")
    separate.set_defaults(handler=cmd_separate)

    solve = commands.add_parser("solve", help="run one solver on an instance JSON file")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--solver", required=True, choices=sorted(SOLVERS))
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--trace", help="CSV of the BCD objective per sweep")
    solve.add_argument("--oracle", action="store_true", help="also run the grid oracle and certify the result")
    solve.add_argument("--grid-points", type=int, default=GridSpec().points_per_phase)
    solve.set_defaults(handler=cmd_solve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (ConfigError, ValidationError) as e:
        log.error("CONFIG: %s", e)
        return settings.EXIT_CONFIG_ERROR
    except (PhunmixError, OSError, np.linalg.LinAlgError) as e:
        log.error("RUNTIME: %s", e)
        return settings.EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
