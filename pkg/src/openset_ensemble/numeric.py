"""Low-level numerics: portable seeded RNG, softmax, entropy.

Everything runs in float64. Matrices are plain numpy float64 arrays in
row-major layout; batch dimension first.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF

# log arguments are clamped here so CE/entropy terms stay finite
LOG_CLAMP = 1e-12


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Rng:
    """Deterministic xorshift64* generator.

    State update (64-bit wrapping arithmetic):

        s ^= s >> 12;  s ^= s << 25;  s ^= s >> 27
        output = (s * 0x2545F4914F6CDD1D) mod 2^64

    The initial state is derived from the seed with one splitmix64 step,
    which also guarantees a nonzero state. Doubles are formed from the top
    53 bits; normals use Box-Muller with one cached spare. The integer
    stream is identical across platforms, so any implementation of these
    update equations reproduces the sequences.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        _, s = _splitmix64(self.seed)
        self._s = s if s != 0 else 0x9E3779B97F4A7C15
        self._spare: float | None = None

    def next_u64(self) -> int:
        s = self._s
        s ^= s >> 12
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        self._s = s
        return (s * 0x2545F4914F6CDD1D) & _MASK64

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via the multiply-shift reduction."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        return (self.next_u64() * n) >> 64

    def normal(self) -> float:
        """Standard normal via Box-Muller; the second value is cached."""
        if self._spare is not None:
            z = self._spare
            self._spare = None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, shape: tuple[int, ...]) -> np.ndarray:
        flat = np.array([self.normal() for _ in range(int(np.prod(shape)))])
        return flat.reshape(shape)

    def uniforms(self, shape: tuple[int, ...]) -> np.ndarray:
        flat = np.array([self.uniform() for _ in range(int(np.prod(shape)))])
        return flat.reshape(shape)

    def indices(self, n: int, k: int) -> np.ndarray:
        """k indices drawn uniformly from [0, n) with replacement."""
        return np.array([self.below(n) for _ in range(k)], dtype=np.int64)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis.

    Accepts a vector or a batch of row vectors; empty input is rejected.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("empty logits")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(p: np.ndarray) -> float | np.ndarray:
    """Shannon entropy in nats, with the 0*log(0) = 0 convention.

    Vector input gives a scalar; a batch of rows gives a vector.
    """
    p = np.asarray(p, dtype=np.float64)
    logs = np.log(np.clip(p, LOG_CLAMP, None))
    h = -(p * logs).sum(axis=-1)
    if h.ndim == 0:
        return float(h)
    return h


def softmax_vjp(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. softmax outputs back to the logits.

    dL/dz_j = p_j * (dL/dp_j - sum_k dL/dp_k * p_k), rowwise.
    """
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner)
