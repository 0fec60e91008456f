import numpy as np


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed from a tuple of integer keys."""
    ss = np.random.SeedSequence([int(k) & (2**64 - 1) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
