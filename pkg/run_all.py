# run_all.py – command-line entry point for the QKD-keyed frequency-hopping simulator
# Description: Runs the full experiment (QKD link → key delivery → hop schedules → eavesdropper and
# jammer sweeps → ideal overlays) or any single stage on its own, serves the key-delivery API, and
# launches the results dashboard. Exit codes: 0 success, 2 configuration error or out-of-range argument, 3 stage failure.

import argparse
import json
import logging
import os
import subprocess
import sys

import numpy as np

from api_modules.kms_api import KMS_HOST, KMS_PORT, KmsClient, serve_kms
from database.key_store import KeyStore
from scripts.config import load_config
from scripts.experiment import qkd_config_for, run_experiment, sweep_config
from sim_modules.airsim import (JAM_STRATEGIES, SAMPLING_MODES, EveConfig, JamConfig, SymbolConfig,
                                run_eavesdropper, run_jammer, run_link, sweep_metric)
from sim_modules.errors import ConfigError, DomainError, QkdFhssError
from sim_modules.hopplan import derive_hop_schedule, dump_schedule_csv, verify_sync
from sim_modules.oracle import ideal_series, predictability_contrast
from sim_modules.qkdlink import run_qkd_link
from sim_modules.randomness import index_uniformity, randomness_suite
from sim_modules.seeds import derive_seed

logger = logging.getLogger("qkd_fhss")

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
APP_DIR = os.path.join(BASE_DIR, "streamlit_app")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _print_json(data):
    print(json.dumps(data, indent=2, sort_keys=True, default=str))


def _key_octets(args, config):
    """Key bytes for single-stage commands: a binary file if given, else a fresh QKD run."""
    if getattr(args, "key_file", None):
        with open(args.key_file, "rb") as f:
            return f.read()
    return run_qkd_link(qkd_config_for(config)).alice.whole_octets


# Full pipeline
def cmd_run(args, config):
    manifest = run_experiment(config, progress=True)
    print(f"Experiment complete: {len(manifest['files'])} files in {config.output_dir}")
    for entry in manifest["files"]:
        print(f"  {entry['path']}  {entry['sha256'][:12]}  {entry['bytes']} bytes")
    return EXIT_OK


def cmd_qkd_sim(args, config):
    result = run_qkd_link(qkd_config_for(config), estimation_fraction=args.estimation_fraction, passes=args.passes)
    _print_json(result.summary)
    if args.summary:
        with open(args.summary, "w") as f:
            json.dump(result.summary, f, indent=2, sort_keys=True)
    if args.key_out:
        with open(args.key_out, "wb") as f:
            f.write(result.alice.whole_octets)
    if args.kms_url:
        key_ids = KmsClient(args.kms_url).store_keys([result.alice])
        print(f"Pushed {len(key_ids)} key records to {args.kms_url}")
    return EXIT_OK


def cmd_kms_serve(args, config):
    store = KeyStore(record_size_bits=args.record_size or config.kms.record_size_bits,
                     max_key_count=args.max_keys or config.kms.max_key_count)
    serve_kms(store, args.host, args.port)
    return EXIT_OK


def cmd_pattern(args, config):
    octets = _key_octets(args, config)
    plan = config.channel.plan()
    os.makedirs(config.output_dir, exist_ok=True)
    for t_h in args.hop_interval or config.hop.hop_interval_us:
        tx = derive_hop_schedule(octets, plan, t_h)
        rx = derive_hop_schedule(octets, plan, t_h)
        path = os.path.join(config.output_dir, f"schedule_Th{t_h}.csv")
        dump_schedule_csv(tx, plan, path)
        print(f"T_h={t_h} us: {len(tx)} hops -> {path}; sync {verify_sync(tx, rx).to_dict()}")
    return EXIT_OK


def cmd_simulate(args, config):
    plan = config.channel.plan()
    rng = np.random.default_rng(derive_seed(config.master_seed, "simulate"))
    key = rng.integers(0, 256, size=args.hops, dtype=np.uint8).tobytes()
    tx = derive_hop_schedule(key, plan, args.hop_interval)
    sym = SymbolConfig.for_hop(args.hop_interval, config.sym.symbol_duration_us)
    seed = derive_seed(config.master_seed, "simulate", 1)

    if args.mode == "link":
        report = run_link(tx, derive_hop_schedule(key, plan, args.hop_interval), sym)
        _print_json({"symbols": report.symbols, "errors": report.errors, "ser": report.ser})
    elif args.mode == "eve":
        eve = EveConfig(args.period, args.phase, config.eve.noise_power, args.sampling)
        report = run_eavesdropper(tx, plan, eve, seed)
        _print_json({"windows": report.windows, "successes": report.successes, "detect_prob": report.probability})
    else:
        jam = JamConfig(args.period, args.phase, args.strategy or config.jam.strategy, config.jam.sir_db)
        report = run_jammer(tx, plan, jam, sym, seed)
        _print_json({"symbols": report.symbols, "errors": report.errors, "ser": report.ser, "sir_db": report.sir_db})
    return EXIT_OK


def cmd_sweep(args, config):
    plan = config.channel.plan()
    param = f"{args.param}_period_us"
    defaults = config.eve.detection_period_us if args.param == "detection" else config.jam.jamming_period_us
    values = args.values or list(defaults)
    prefix = "detect" if args.param == "detection" else "jam"
    for t_h in args.hop_interval or config.hop.hop_interval_us:
        series = sweep_metric(sweep_config(config, t_h, plan), param, values, config.trials,
                              derive_seed(config.master_seed, prefix, t_h), config.parallel, progress=True)
        series.write_csv(os.path.join(config.output_dir, f"{prefix}_Th{t_h}.csv"))
    print(f"Sweep written to {config.output_dir}")
    return EXIT_OK


def cmd_oracle(args, config):
    n_channels = config.channel.plan().n_channels
    for t_h in args.hop_interval or config.hop.hop_interval_us:
        series = ideal_series(t_h, n_channels, config.eve.detection_period_us, config.jam.jamming_period_us,
                              config.sym.symbol_duration_us, config.jam.strategy, config.ideal_trials,
                              derive_seed(config.master_seed, "oracle", t_h), jam_phase_us=config.jam.phase_us)
        series.write_csv(os.path.join(config.output_dir, f"ideal_Th{t_h}.csv"))
    print(f"Ideal curves written to {config.output_dir}")
    return EXIT_OK


def cmd_randomness(args, config):
    octets = _key_octets(args, config)
    n_channels = config.channel.plan().n_channels
    bits = np.unpackbits(np.frombuffer(octets, dtype=np.uint8))
    record = randomness_suite(bits)
    uniformity = index_uniformity(np.frombuffer(octets, dtype=np.uint8).astype(np.int64) % n_channels, n_channels)
    contrast = predictability_contrast(octets, n_channels, n_bits=args.bits)
    _print_json({
        "suite": record.to_dict(),
        "passed": record.passed(),
        "uniformity": {"chi2": uniformity.chi2, "dof": uniformity.dof, "p_value": uniformity.p_value},
        "predictability": {name: report.to_dict() for name, report in contrast.items()},
    })
    return EXIT_OK


def cmd_validate(args, config):
    print(f"Config OK: {len(config.hop.hop_interval_us)} hop intervals, {config.channel.n_channels} channels, "
          f"{config.trials} trials, seed {config.master_seed}")
    return EXIT_OK


# Launch the results dashboard in a separate Streamlit process
def launch_dashboard(results_dir):
    print("Launching Streamlit dashboard...")
    app_path = os.path.join(APP_DIR, "app.py")
    return subprocess.run([sys.executable, "-m", "streamlit", "run", app_path, "--", "--results", results_dir]).returncode


def cmd_dashboard(args, config):
    return launch_dashboard(config.output_dir)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (defaults describe the reference link)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--trials", type=int, help="trials per swept value")
    common.add_argument("--parallel", type=int, help="worker processes for sweep trials")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="run_all.py", description="QKD-keyed FHSS simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="full experiment").set_defaults(func=cmd_run)

    p = sub.add_parser("qkd-sim", parents=[common], help="simulate the QKD link only")
    p.add_argument("--estimation-fraction", type=float, default=0.1)
    p.add_argument("--passes", type=int, default=4)
    p.add_argument("--summary", help="write the diagnostic record to this JSON file")
    p.add_argument("--key-out", help="write the secret key bytes to this file")
    p.add_argument("--kms-url", help="push the secret key into a running key service")
    p.set_defaults(func=cmd_qkd_sim)

    kms = sub.add_parser("kms", help="key-delivery service")
    kms_sub = kms.add_subparsers(dest="kms_command", required=True)
    p = kms_sub.add_parser("serve", parents=[common], help="serve the ETSI-style key API")
    p.add_argument("--host", default=KMS_HOST)
    p.add_argument("--port", type=int, default=KMS_PORT)
    p.add_argument("--record-size", type=int, help="record size in bits")
    p.add_argument("--max-keys", type=int, help="maximum stored records")
    p.set_defaults(func=cmd_kms_serve)

    p = sub.add_parser("pattern", parents=[common], help="derive and dump hop schedules")
    p.add_argument("--key-file", help="binary key file (default: fresh QKD run)")
    p.add_argument("--hop-interval", type=int, nargs="+")
    p.set_defaults(func=cmd_pattern)

    p = sub.add_parser("simulate", parents=[common], help="single air-interface run")
    p.add_argument("--mode", choices=("link", "eve", "jam"), default="link")
    p.add_argument("--hop-interval", type=int, default=5000)
    p.add_argument("--hops", type=int, default=2000)
    p.add_argument("--period", type=int, default=5000, help="detection or jamming period (us)")
    p.add_argument("--phase", type=int, default=0)
    p.add_argument("--sampling", choices=SAMPLING_MODES, default="random")
    p.add_argument("--strategy", choices=JAM_STRATEGIES)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="detection or jamming sweep")
    p.add_argument("--param", choices=("detection", "jamming"), required=True)
    p.add_argument("--values", type=int, nargs="+")
    p.add_argument("--hop-interval", type=int, nargs="+")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", parents=[common], help="ideal curves")
    p.add_argument("--hop-interval", type=int, nargs="+")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("randomness", parents=[common], help="statistics of key-derived bits")
    p.add_argument("--key-file")
    p.add_argument("--bits", type=int, default=10_000, help="hop bits for the predictability contrast")
    p.set_defaults(func=cmd_randomness)

    sub.add_parser("validate", parents=[common], help="check a config file").set_defaults(func=cmd_validate)
    cfg = sub.add_parser("config", help="config utilities")
    cfg_sub = cfg.add_subparsers(dest="config_command", required=True)
    cfg_sub.add_parser("validate", parents=[common], help="check a config file").set_defaults(func=cmd_validate)

    sub.add_parser("dashboard", parents=[common], help="launch the results dashboard").set_defaults(func=cmd_dashboard)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config).with_overrides(args.out, args.seed, args.trials, args.parallel)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG

    try:
        return args.func(args, config)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except DomainError as exc:
        logger.error("invalid argument: %s", exc)
        return EXIT_CONFIG
    except (QkdFhssError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
