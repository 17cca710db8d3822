"""Deterministic float32 compute kernels.

Every output element is accumulated as a strict sequence of float32
multiply-then-add steps in a fixed reduction order (channel-major, then
kernel row top-to-bottom, then kernel column left-to-right), with the bias
added last.  Parallelism only ever splits *across* output elements, never
across the reduction of a single element, so results are bit-identical
regardless of thread count.

numba is used with its defaults: no fastmath, hence no FMA contraction and
no reassociation, which keeps the compiled arithmetic bitwise-equal to a
plain Python float32 ladder over the same order.  The specialized pointwise
and depthwise kernels below execute the exact same per-element operation
sequence as the general kernel; they exist only because contiguous inner
loops vectorize and the general strided form does not.
"""

from __future__ import annotations

import os

import numpy as np
from numba import get_num_threads, njit, prange, set_num_threads

#: Environment variable capping internal parallelism (shared with the CLI).
THREADS_ENV = "FVWT_THREADS"

_threads_applied = False


def apply_thread_cap() -> int:
    """Clamp numba's thread pool to FVWT_THREADS if set; return the count."""
    global _threads_applied
    if not _threads_applied:
        cap = os.environ.get(THREADS_ENV, "").strip()
        if cap:
            try:
                n = max(1, int(cap))
            except ValueError:
                n = 0
            if n:
                set_num_threads(min(n, get_num_threads()))
        _threads_applied = True
    return get_num_threads()


def thread_count() -> int:
    return apply_thread_cap()


def force_threads(n: int) -> None:
    """Set the thread count explicitly (used by determinism tests)."""
    global _threads_applied
    set_num_threads(n)
    _threads_applied = True


@njit(cache=True, parallel=True)
def _conv2d_general(x, w, b, out, sh, sw, ph, pw, groups):
    n_batch, _, h, wdt = x.shape
    oc, icg, kh, kw = w.shape
    oh_n, ow_n = out.shape[2], out.shape[3]
    ocg = oc // groups
    for no in prange(n_batch * oc):
        n = no // oc
        o = no % oc
        cbase = (o // ocg) * icg
        acc = np.empty(ow_n, np.float32)
        for oh in range(oh_n):
            for t in range(ow_n):
                acc[t] = np.float32(0.0)
            ih0 = oh * sh - ph
            for c in range(icg):
                xplane = x[n, cbase + c]
                for i in range(kh):
                    ih = ih0 + i
                    if ih < 0 or ih >= h:
                        continue
                    xrow = xplane[ih]
                    for j in range(kw):
                        lo = pw - j
                        ow_lo = 0 if lo <= 0 else (lo + sw - 1) // sw
                        ow_hi = (wdt - 1 - j + pw) // sw + 1
                        if ow_hi > ow_n:
                            ow_hi = ow_n
                        wv = w[o, c, i, j]
                        base = j - pw
                        if sw == 1:
                            width = ow_hi - ow_lo
                            arow = acc[ow_lo : ow_lo + width]
                            xseg = xrow[base + ow_lo : base + ow_lo + width]
                            for t in range(width):
                                arow[t] += wv * xseg[t]
                        else:
                            for ow in range(ow_lo, ow_hi):
                                acc[ow] += wv * xrow[base + ow * sw]
            bias = b[o]
            for ow in range(ow_n):
                out[n, o, oh, ow] = acc[ow] + bias


@njit(cache=True, parallel=True)
def _dwconv_s1(x, w, b, out, ph, pw):
    # depthwise, stride 1; per-element tap order is (i, j) ascending, which
    # matches the general kernel since the channel reduction is trivial
    n_batch, chans, h, wdt = x.shape
    kh, kw = w.shape[2], w.shape[3]
    oh_n, ow_n = out.shape[2], out.shape[3]
    for nc in prange(n_batch * chans):
        n = nc // chans
        c = nc % chans
        acc = np.zeros((oh_n, ow_n), np.float32)
        xplane = x[n, c]
        for i in range(kh):
            dh = i - ph
            oh_lo = max(0, -dh)
            oh_hi = min(oh_n, h - dh)
            for j in range(kw):
                wv = w[c, 0, i, j]
                base = j - pw
                ow_lo = max(0, -base)
                ow_hi = min(ow_n, wdt - base)
                width = ow_hi - ow_lo
                for oh in range(oh_lo, oh_hi):
                    arow = acc[oh, ow_lo : ow_lo + width]
                    xseg = xplane[oh + dh, base + ow_lo : base + ow_lo + width]
                    for t in range(width):
                        arow[t] += wv * xseg[t]
        bias = b[c]
        for oh in range(oh_n):
            for ow in range(ow_n):
                out[n, c, oh, ow] = acc[oh, ow] + bias


@njit(cache=True, parallel=True)
def _matmul(a, bm, out):
    m, k_n = a.shape
    n_cols = bm.shape[1]
    for i in prange(m):
        acc = np.empty(n_cols, np.float32)
        for t in range(n_cols):
            acc[t] = np.float32(0.0)
        for k in range(k_n):
            av = a[i, k]
            row = bm[k]
            for t in range(n_cols):
                acc[t] += av * row[t]
        for t in range(n_cols):
            out[i, t] = acc[t]


def conv2d_raw(x, w, b, stride, padding, groups, out_shape):
    """Run the convolution into a fresh output array, picking the fastest
    kernel that preserves the canonical accumulation order."""
    apply_thread_cap()
    out = np.empty(out_shape, np.float32)
    n, _, h, wdt = x.shape
    oc, icg, kh, kw = w.shape
    pointwise = (
        kh == 1 and kw == 1 and stride == (1, 1) and padding == (0, 0)
        and groups == 1
    )
    if pointwise:
        w2 = w.reshape(oc, icg)
        for i in range(n):
            _matmul(w2, x[i].reshape(icg, h * wdt), out[i].reshape(oc, h * wdt))
        out += b[:, None, None]
        return out
    depthwise = groups == oc and icg == 1 and oc == x.shape[1]
    if depthwise and stride == (1, 1):
        _dwconv_s1(x, w, b, out, padding[0], padding[1])
        return out
    _conv2d_general(
        x, w, b, out, stride[0], stride[1], padding[0], padding[1], groups
    )
    return out


def matmul_f32(a: np.ndarray, bm: np.ndarray) -> np.ndarray:
    """(M, K) x (K, N) float32 product with an in-order K reduction."""
    apply_thread_cap()
    a = np.ascontiguousarray(a, np.float32)
    bm = np.ascontiguousarray(bm, np.float32)
    out = np.empty((a.shape[0], bm.shape[1]), np.float32)
    _matmul(a, bm, out)
    return out


def warmup() -> None:
    """Trigger JIT compilation of all kernels on tiny inputs."""
    x = np.zeros((1, 2, 4, 4), np.float32)
    conv2d_raw(x, np.zeros((2, 2, 1, 1), np.float32), np.zeros(2, np.float32),
               (1, 1), (0, 0), 1, (1, 2, 4, 4))
    conv2d_raw(x, np.zeros((2, 1, 3, 3), np.float32), np.zeros(2, np.float32),
               (1, 1), (1, 1), 2, (1, 2, 4, 4))
    conv2d_raw(x, np.zeros((2, 2, 3, 3), np.float32), np.zeros(2, np.float32),
               (2, 2), (1, 1), 1, (1, 2, 2, 2))
