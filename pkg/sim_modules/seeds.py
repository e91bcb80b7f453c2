# seeds.py – counter-based seed fan-out so every stage can be rerun on its own
import hashlib

SEED_MASK = (1 << 63) - 1


def derive_seed(master_seed, stage, counter=0):
    """
    Derives a stage seed from the master seed.
    The seed is the first 8 bytes (big-endian) of SHA-256("{master}:{stage}:{counter}"),
    masked to 63 bits so it fits numpy's and sqlite's signed integer ranges.
    """
    digest = hashlib.sha256(f"{int(master_seed)}:{stage}:{int(counter)}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & SEED_MASK


def trial_seed(seed, trial_index):
    # Serial and parallel sweeps agree because a trial's seed depends only on its index
    return (int(seed) + int(trial_index)) & SEED_MASK
