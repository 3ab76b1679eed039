"""Counter-based random streams.

Every random quantity in a run is a pure function of ``(key, stream, counter)``
so that any single draw can be regenerated without replaying the ones before
it. The mixer is SplitMix64, applied twice.
"""

import hashlib

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def stream_id(name):
    """Stable 64-bit identifier for a stream name."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_key(*parts):
    """Combine integers and strings into a single 64-bit key."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "little")


def random_bits(key, stream, counters):
    """64-bit hash of each counter value under ``(key, stream)``."""
    if isinstance(stream, str):
        stream = stream_id(stream)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.array([(key ^ (stream * 0x9E3779B97F4A7C15)) & _MASK],
                             dtype=np.uint64))[0]
        z = c * _GOLDEN + base
        return _mix(_mix(z) + _GOLDEN)


def uniforms(key, stream, counters):
    """Uniform(0, 1) values, open at both ends."""
    bits = random_bits(key, stream, counters)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normals(key, stream, counters):
    """Standard normal values by inversion of the uniform stream."""
    return ndtri(uniforms(key, stream, counters))


def generator(key, tag):
    """NumPy Philox generator for sequential draws tied to ``(key, tag)``."""
    ss = np.random.SeedSequence([key & _MASK, stream_id(tag)])
    return np.random.Generator(np.random.Philox(ss))


def replication_seed(run_seed, index):
    """Independent per-replication key derived from the run seed."""
    bits = random_bits(int(run_seed) & _MASK, "replication", [index])
    return int(bits[0])
