"""Counter-based random streams.

Every trajectory owns a 64-bit key derived from ``(master_seed, replication,
trajectory_index)``. Its n-th uniform is a pure function of ``(key, n)``, so
results never depend on how trajectories are scheduled across workers.
The mixer is splitmix64.
"""
import numpy as np

from ._backend import jit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_MASK64 = (1 << 64) - 1


@jit
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@jit
def uniform(key, counter):
    """The counter-th uniform in [0, 1) of stream ``key`` (53-bit resolution)."""
    z = mix64(key + (counter + np.uint64(1)) * GOLDEN)
    return float(z >> _S11) * _INV53


def _mix_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_key(*parts: int) -> int:
    """Fold integers into one 64-bit stream key."""
    h = 0x6A09E667F3BCC908
    for v in parts:
        h = _mix_int(h ^ _mix_int((int(v) + 0x9E3779B97F4A7C15) & _MASK64))
    return h


def stream_keys(base_key: int, n: int) -> np.ndarray:
    """Keys for trajectories 0..n-1 below ``base_key``."""
    idx = np.arange(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(base_key) ^ ((idx + np.uint64(1)) * GOLDEN)
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def uniforms(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Vectorised ``uniform`` for the numpy backend."""
    with np.errstate(over="ignore"):
        z = keys + (counters.astype(np.uint64) + np.uint64(1)) * GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        z = z ^ (z >> _S31)
    return (z >> _S11).astype(np.float64) * _INV53
