"""Small numeric helpers used by several modules."""

import hashlib
import math

import numpy as np


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero (never banker's)."""
    return int(math.floor(x + 0.5))


def sigmoid(x):
    """Numerically stable logistic function for scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def float_to_hex(v: float) -> str:
    return float(v).hex()


def hex_to_float(s: str) -> float:
    return float.fromhex(s)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
