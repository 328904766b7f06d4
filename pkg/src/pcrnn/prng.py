"""Seeded random source.

All randomness in the library (initialization, dropout) is drawn from one
``Rng``. It wraps numpy's PCG64 bit generator and consumes only its raw
64-bit output, which numpy keeps stable across releases; uniforms are built
as ``(raw >> 11) * 2**-53``, so a given seed yields the same stream on every
platform and numpy version.
"""
import numpy as np


class Rng:
    def __init__(self, seed=0):
        self.seed = int(seed)
        self._bits = np.random.PCG64(self.seed)

    def uniform(self, shape, low=0.0, high=1.0):
        n = int(np.prod(shape, dtype=np.int64))
        raw = self._bits.random_raw(n) if n else np.zeros(0, dtype=np.uint64)
        u = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        u = u.reshape(shape)
        if low == 0.0 and high == 1.0:
            return u
        return low + (high - low) * u

    def get_state(self):
        s = self._bits.state["state"]
        return int(s["state"]), int(s["inc"])

    def set_state(self, state, inc):
        st = self._bits.state
        st["state"] = {"state": int(state), "inc": int(inc)}
        self._bits.state = st
