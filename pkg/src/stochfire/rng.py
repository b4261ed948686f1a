"""SplitMix64 random streams.

Every simulation owns an independent stream whose seed is a pure function of
``(master_seed, stream_index)``::

    seed(i) = mix64(master_seed + GOLDEN * (i + 1))   (mod 2**64)

i.e. the ``i+1``-th output of a SplitMix64 generator started at
``master_seed``. Draws within a stream are

    state <- state + GOLDEN;  u = (mix64(state) >> 11) * 2**-53

which is counter based, so a block of ``k`` draws can be produced in one
vectorised call and the compiled kernels reproduce the same sequence bit for
bit.
"""
import numpy as np

from ._accel import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX_MUL1 = 0xBF58476D1CE4E5B9
MIX_MUL2 = 0x94D049BB133111EB

# stream reserved for the shared forest layout and seed placement; sim indices
# are 32-bit so this can never collide with a simulation stream
LAYOUT_STREAM = 1 << 32

MIXER_NAME = "splitmix64"

_GOLDEN_U = np.uint64(GOLDEN)
_MUL1_U = np.uint64(MIX_MUL1)
_MUL2_U = np.uint64(MIX_MUL2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


def mix64(z):
    """SplitMix64 finaliser on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MUL2) & MASK64
    return z ^ (z >> 31)


def substream_seed(master_seed, index):
    """Seed of stream ``index`` derived from ``master_seed``."""
    if index < 0:
        raise ValueError("stream index must be non-negative")
    return mix64((master_seed + GOLDEN * (index + 1)) & MASK64)


def _mix_array(z):
    z = (z ^ (z >> _S30)) * _MUL1_U
    z = (z ^ (z >> _S27)) * _MUL2_U
    return z ^ (z >> _S31)


@njit
def next_uniform(state):
    """Advance ``state`` once; returns ``(new_state, uniform in [0, 1))``."""
    state = state + _GOLDEN_U
    z = state
    z = (z ^ (z >> _S30)) * _MUL1_U
    z = (z ^ (z >> _S27)) * _MUL2_U
    z = z ^ (z >> _S31)
    return state, float(z >> _S11) * _INV53


class SplitMix64:
    """Sequential stream with block draws.

    ``state`` is the only mutable field; copying it forks the stream.
    """

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    @classmethod
    def for_stream(cls, master_seed, index):
        return cls(substream_seed(master_seed, index))

    def uniforms(self, n):
        """Next ``n`` uniforms in [0, 1) as float64."""
        if n <= 0:
            return np.empty(0, dtype=np.float64)
        with np.errstate(over="ignore"):
            ctr = np.arange(1, n + 1, dtype=np.uint64) * _GOLDEN_U + np.uint64(self.state)
            z = _mix_array(ctr)
        self.state = (self.state + GOLDEN * n) & MASK64
        return (z >> _S11).astype(np.float64) * _INV53

    def uniform(self):
        return float(self.uniforms(1)[0])

    def integers(self, n, high):
        """``n`` integers in ``[0, high)`` by floor(u * high)."""
        return np.minimum((self.uniforms(n) * high).astype(np.int64), high - 1)
