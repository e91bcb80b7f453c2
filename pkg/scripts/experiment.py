# scripts/experiment.py – end-to-end pipeline: QKD link → key store → hop schedules → air sims → ideal overlays
# Every artifact lands in config.output_dir and is listed with its SHA-256 in manifest.json.

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from api_modules.kms_api import KmsClient
from database.key_store import KeyStore
from sim_modules.airsim import SweepConfig, SymbolConfig, run_link, sweep_metric
from sim_modules.errors import EmptyScheduleError, StageError, stage
from sim_modules.hopplan import derive_hop_schedule, verify_sync
from sim_modules.oracle import ideal_series, predictability_contrast
from sim_modules.qkdlink import run_qkd_link
from sim_modules.randomness import index_uniformity, randomness_suite
from sim_modules.seeds import derive_seed

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "qkd_summary.json"


@contextmanager
def _logged_stage(name):
    logger.info("stage %s: start", name)
    with stage(name):
        yield
    logger.info("stage %s: done", name)


def open_key_store(config):
    """In-process store unless the config points at a running service."""
    if config.kms.endpoint:
        return KmsClient(config.kms.endpoint)
    return KeyStore(record_size_bits=config.kms.record_size_bits, max_key_count=config.kms.max_key_count,
                    uuid_seed=derive_seed(config.master_seed, "kms"))


def deliver_keys(store, secret_key, kms):
    """
    Pushes a secret key into the store and runs the master/slave handshake over all of its records.
    Returns (master_octets, slave_octets, key_ids).
    """
    key_ids = store.store_keys([secret_key])
    if not key_ids:
        raise EmptyScheduleError(f"secret key shorter than one {kms.record_size_bits}-bit record")
    enc = store.get_enc_keys(kms.slave_sae_id, number=len(key_ids), size=kms.record_size_bits)
    dec = store.get_dec_keys(kms.master_sae_id, enc.key_ids)
    return enc.octets, dec.octets, enc.key_ids


def _write_json(path, data):
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(output_dir):
    """Lists every file under output_dir (except the manifest itself) with its hash and size."""
    files = []
    for root, _, names in os.walk(output_dir):
        for name in names:
            path = os.path.join(root, name)
            rel = os.path.relpath(path, output_dir).replace(os.sep, "/")
            if rel == MANIFEST_NAME:
                continue
            files.append({"path": rel, "sha256": _sha256(path), "bytes": os.path.getsize(path)})
    files.sort(key=lambda entry: entry["path"])
    manifest = {"files": files}
    _write_json(os.path.join(output_dir, MANIFEST_NAME), manifest)
    return manifest


def qkd_config_for(config):
    """QKD link settings with the seed fanned out from the master seed."""
    return replace(config.qkd, seed=derive_seed(config.master_seed, "qkd", config.qkd.seed))


def sweep_config(config, hop_interval_us, plan):
    return SweepConfig(
        hop_interval_us=int(hop_interval_us),
        plan=plan,
        symbol_duration_us=config.sym.symbol_duration_us,
        windows_per_trial=config.eve.windows_per_trial,
        symbols_per_trial=config.jam.symbols_per_trial,
        noise_power=config.eve.noise_power,
        strategy=config.jam.strategy,
        sir_db=config.jam.sir_db,
        jam_phase_us=config.jam.phase_us,
    )


def run_experiment(config, progress=False):
    """
    Runs every stage in order and returns the manifest. A failing stage raises StageError
    carrying its name; a tx/rx schedule divergence is treated as a failure of the pattern stage.
    """
    output_dir = config.output_dir
    os.makedirs(output_dir, exist_ok=True)
    master = config.master_seed
    summary = {}

    with _logged_stage("qkd"):
        result = run_qkd_link(qkd_config_for(config))
        ends_agree = result.alice.octets == result.bob.octets
        summary["qkd"] = {**result.summary, "ends_agree": ends_agree}
        if not ends_agree:
            raise StageError("qkd", "alice and bob secret keys differ")

    with _logged_stage("kms"):
        store = open_key_store(config)
        tx_octets, rx_octets, key_ids = deliver_keys(store, result.alice, config.kms)
        summary["kms"] = {"records": len(key_ids), "record_size_bits": config.kms.record_size_bits,
                          "hop_bytes": len(tx_octets)}

    plan = config.channel.plan()
    schedules = {}
    with _logged_stage("pattern"):
        summary["sync"] = {}
        for t_h in config.hop.hop_interval_us:
            tx = derive_hop_schedule(tx_octets, plan, t_h)
            rx = derive_hop_schedule(rx_octets, plan, t_h)
            report = verify_sync(tx, rx)
            summary["sync"][str(t_h)] = report.to_dict()
            if not report.full_match:
                raise StageError("pattern", f"tx/rx schedules diverge at entry {report.entry} ({report.field})")
            schedules[t_h] = (tx, rx)

    with _logged_stage("baseline"):
        summary["baseline"] = {}
        for t_h, (tx, rx) in schedules.items():
            link = run_link(tx, rx, SymbolConfig.for_hop(t_h, config.sym.symbol_duration_us))
            summary["baseline"][str(t_h)] = {"symbols": link.symbols, "errors": link.errors, "ser": link.ser}

    with _logged_stage("randomness"):
        key_bits = np.unpackbits(np.frombuffer(tx_octets, dtype=np.uint8))
        tx_indices = next(iter(schedules.values()))[0].indices
        summary["randomness"] = randomness_suite(key_bits).to_dict()
        uniformity = index_uniformity(tx_indices, plan.n_channels)
        summary["uniformity"] = {"chi2": uniformity.chi2, "dof": uniformity.dof, "p_value": uniformity.p_value,
                                 "n_samples": uniformity.n_samples}
        contrast = predictability_contrast(tx_octets, plan.n_channels)
        summary["predictability"] = {name: report.to_dict() for name, report in contrast.items()}

    for t_h in config.hop.hop_interval_us:
        base = sweep_config(config, t_h, plan)
        with _logged_stage(f"detect T_h={t_h}"):
            detect = sweep_metric(base, "detection_period_us", list(config.eve.detection_period_us),
                                  config.trials, derive_seed(master, "detect", t_h), config.parallel, progress)
            detect.write_csv(os.path.join(output_dir, f"detect_Th{t_h}.csv"))
        with _logged_stage(f"jam T_h={t_h}"):
            jam = sweep_metric(base, "jamming_period_us", list(config.jam.jamming_period_us),
                               config.trials, derive_seed(master, "jam", t_h), config.parallel, progress)
            jam.write_csv(os.path.join(output_dir, f"jam_Th{t_h}.csv"))
        with _logged_stage(f"oracle T_h={t_h}"):
            ideal = ideal_series(t_h, plan.n_channels, config.eve.detection_period_us, config.jam.jamming_period_us,
                                 config.sym.symbol_duration_us, config.jam.strategy, config.ideal_trials,
                                 derive_seed(master, "oracle", t_h), jam_phase_us=config.jam.phase_us)
            ideal.write_csv(os.path.join(output_dir, f"ideal_Th{t_h}.csv"))

    _write_json(os.path.join(output_dir, SUMMARY_NAME), summary)
    manifest = write_manifest(output_dir)
    logger.info("experiment complete: %d artifacts in %s", len(manifest["files"]), output_dir)
    return manifest
