"""Philox4x64-10 inside numba kernels.

Bit-identical to ``numpy.random.Philox``: a stream with key ``k`` and counter
``c`` here yields the same raw 64-bit words as ``Philox(key=k, counter=c)``.
Streams are addressed by counter words, so every simulated path owns an
independent stream without any generator objects crossing into compiled code.

The generator state is a value tuple of eleven uint64 words
(key0, key1, ctr0..ctr3, out0..out3, position) threaded through the calls
as ``state, value = draw(state)``.  Unlike an array it carries no reference
count, which keeps the hot loops free of atomic operations.
"""

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

RNG_NAME = "philox4x64-10"
# bump when the mapping (seed, path index, stream) -> draws changes
RNG_SCHEME_VERSION = 1
RNG_VERSION = f"{RNG_NAME}/counter-split-v{RNG_SCHEME_VERSION}"

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_TWO = np.uint64(2)
_FOUR = np.uint64(4)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0


@intrinsic
def _mulhilo(typingctx, a, b):
    """(high, low) 64-bit words of the 128-bit product a * b."""
    sig = types.UniTuple(types.uint64, 2)(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i64 = ir.IntType(64)
        i128 = ir.IntType(128)
        prod = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
        hi = builder.trunc(builder.lshr(prod, ir.Constant(i128, 64)), i64)
        lo = builder.trunc(prod, i64)
        return context.make_tuple(builder, signature.return_type, (hi, lo))

    return sig, codegen


@njit(cache=True)
def philox_block(k0, k1, c0, c1, c2, c3):
    """The ten-round Philox4x64 bijection of one counter under one key."""
    for r in range(10):
        if r > 0:
            k0 += _W0
            k1 += _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True)
def rng_new(key0, key1, path_index, stream):
    """Fresh stream with counter words (0, 0, stream, path_index)."""
    z = _ZERO
    return (key0, key1, z, z, stream, path_index, z, z, z, z, _FOUR)


@njit(cache=True)
def next_raw(st):
    k0, k1, c0, c1, c2, c3, b0, b1, b2, b3, pos = st
    if pos >= _FOUR:
        # increment the 256-bit counter, then encrypt it
        c0 += _ONE
        if c0 == _ZERO:
            c1 += _ONE
            if c1 == _ZERO:
                c2 += _ONE
                if c2 == _ZERO:
                    c3 += _ONE
        b0, b1, b2, b3 = philox_block(k0, k1, c0, c1, c2, c3)
        pos = _ZERO
    if pos == _ZERO:
        v = b0
    elif pos == _ONE:
        v = b1
    elif pos == _TWO:
        v = b2
    else:
        v = b3
    return (k0, k1, c0, c1, c2, c3, b0, b1, b2, b3, pos + _ONE), v


@njit(cache=True)
def next_double(st):
    """Uniform on [0, 1) with 53 random bits (numpy's convention)."""
    st, w = next_raw(st)
    return st, np.float64(w >> _S11) * _TWO_M53


@njit(cache=True)
def raw_at(key0, key1, path_index, stream, position):
    """The raw word at ``position`` of a stream, computed without generating the prefix."""
    # the first block is produced from counter value 1
    out = philox_block(key0, key1, np.uint64(position // 4 + 1), _ZERO, stream, path_index)
    return out[position % 4]


@njit(cache=True)
def raw_words(key0, key1, path_index, stream, n):
    """First n raw words of a stream."""
    st = rng_new(key0, key1, path_index, stream)
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        st, out[i] = next_raw(st)
    return out


@njit(cache=True)
def doubles(key0, key1, path_index, stream, n):
    """First n uniform doubles of a stream."""
    st = rng_new(key0, key1, path_index, stream)
    out = np.empty(n)
    for i in range(n):
        st, out[i] = next_double(st)
    return out


def split_key(seed: int) -> tuple[int, int]:
    """A seed (any non-negative integer below 2**128) as the two key words."""
    seed = int(seed)
    if seed < 0 or seed >= 1 << 128:
        raise ValueError(f"seed must lie in [0, 2**128), got {seed}")
    return seed & 0xFFFFFFFFFFFFFFFF, seed >> 64


def numpy_counter(path_index: int, stream: int) -> int:
    """The integer counter giving the same stream from ``numpy.random.Philox``."""
    return (int(path_index) << 192) + (int(stream) << 128)
