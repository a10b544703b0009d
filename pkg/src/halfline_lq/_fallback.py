"""Pure numpy versions of the kernels in ``_core.pyx``.

Output is bit-identical to the compiled core for the integer Philox stream
and the derived uniforms; the heat kernel agrees to rounding.
"""

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_TWO_M53 = 1.0 / 9007199254740992.0


def _rounds(c0, c1, c2, c3, k0, k1):
    # operands are uint64 holding 32-bit values, so products are exact
    shift = np.uint64(32)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> shift, p0 & _MASK32
        hi1, lo1 = p1 >> shift, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ np.uint64(k0), lo1, hi0 ^ c3 ^ np.uint64(k1), lo0
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def philox4x32(counters, k0, k1):
    counters = np.asarray(counters, dtype=np.uint32)
    c = [counters[:, i].astype(np.uint64) for i in range(4)]
    out = _rounds(*c, int(k0) & 0xFFFFFFFF, int(k1) & 0xFFFFFFFF)
    return np.stack(out, axis=1).astype(np.uint32)


def philox_uniforms(seed, path_start, n_paths, n_steps, n_blocks):
    seed = int(seed)
    path = np.uint64(path_start) + np.arange(n_paths, dtype=np.uint64)
    shape = (n_paths, n_steps, n_blocks)
    c0 = np.broadcast_to(np.arange(n_blocks, dtype=np.uint64)[None, None, :], shape)
    c1 = np.broadcast_to(np.arange(n_steps, dtype=np.uint64)[None, :, None], shape)
    c2 = np.broadcast_to((path & _MASK32)[:, None, None], shape)
    c3 = np.broadcast_to((path >> np.uint64(32))[:, None, None], shape)
    w0, w1, w2, w3 = _rounds(c0, c1, c2, c3, seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF)
    five, six, s26 = np.uint64(5), np.uint64(6), np.uint64(26)
    out = np.empty((n_paths, n_steps, 2 * n_blocks))
    out[..., 0::2] = (((w0 >> five) << s26) | (w1 >> six)).astype(np.float64) + 0.5
    out[..., 1::2] = (((w2 >> five) << s26) | (w3 >> six)).astype(np.float64) + 0.5
    out *= _TWO_M53
    return out


def heat_kernel_matrix(t, xi, eta):
    xi = np.asarray(xi, dtype=float)[:, None]
    eta = np.asarray(eta, dtype=float)[None, :]
    return -np.exp(-((xi - eta) ** 2) / (4.0 * t)) * np.expm1(-xi * eta / t) / np.sqrt(4.0 * np.pi * t)
