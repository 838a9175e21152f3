"""SplitMix64 random numbers.

A counter-based form of the SplitMix64 generator: output ``k`` (0-based) of
the stream seeded with ``s`` is ``mix(s + (k + 1) * GAMMA)`` where ``mix`` is
the standard SplitMix64 finalizer. Doubles in [0, 1) use the top 53 bits.
The stream is fully specified here so random test vectors can be regenerated
in any language.
"""

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Seedable 64-bit generator. Each draw advances the internal counter."""

    def __init__(self, seed=0):
        self.state = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)

    def next_uint64(self, n):
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            out = _mix(self.state + k * GAMMA)
            self.state = self.state + np.uint64(n) * GAMMA
        return out

    def random(self, shape=None):
        """Uniform doubles in [0, 1)."""
        n = 1 if shape is None else int(np.prod(shape))
        u = (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u[0] if shape is None else u.reshape(shape)

    def uniform(self, low=0.0, high=1.0, shape=None):
        return low + (high - low) * self.random(shape)

    def normal(self, shape):
        """Standard normals by Box-Muller on pairs of uniforms."""
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u = self.random(2 * m)
        r = np.sqrt(-2.0 * np.log1p(-u[:m]))
        t = 2.0 * np.pi * u[m:]
        z = np.concatenate([r * np.cos(t), r * np.sin(t)])[:n]
        return z.reshape(shape)


def random_vector(n, seed):
    """Vector of ``n`` uniforms in [-1, 1) drawn from a fresh stream."""
    return SplitMix64(seed).uniform(-1.0, 1.0, (n,))
