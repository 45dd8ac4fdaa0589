"""Numeric hot kernels with two interchangeable backends.

Every kernel exists twice: a vectorized pure-numpy implementation and a
numba ``@njit`` implementation. The active backend is chosen once at import
time: numba is used when it imports cleanly, unless the environment variable
``AEROVPR_PURE_NUMPY`` is set to ``1``/``true``/``yes``, which forces the
numpy path. ``BACKEND`` records the choice. Both backends of a kernel
compute the same quantities; ``benchmarks/bench_kernels.py`` compares their
throughput.

All kernels take and return float64 arrays and are deterministic: no RNG
state lives here, callers pass pre-drawn samples in.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("AEROVPR_PURE_NUMPY", "").strip().lower() in {
    "1",
    "true",
    "yes",
}

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

BACKEND = "numpy" if (_FORCE_NUMPY or not _HAVE_NUMBA) else "numba"

# 64-bit mixing constants (splitmix64 / murmur3 finalizer family).
_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xC2B2AE3D27D4EB4F)
_C3 = np.uint64(0xFF51AFD7ED558CCD)
_C4 = np.uint64(0xC4CEB9FE1A85EC53)
_OCT = np.uint64(0xA24BAED4963EE407)
_INV53 = 1.0 / float(1 << 53)


# ---------------------------------------------------------------------------
# value-noise canvas
# ---------------------------------------------------------------------------

def _lattice_numpy(ix0: int, iy0: int, nx: int, ny: int, key: np.uint64) -> np.ndarray:
    """Hash an (ny, nx) block of integer lattice points to floats in [0, 1)."""
    gx = (np.arange(ix0, ix0 + nx, dtype=np.int64).astype(np.uint64)) * _C1
    gy = (np.arange(iy0, iy0 + ny, dtype=np.int64).astype(np.uint64)) * _C2
    n = gx[None, :] ^ gy[:, None] ^ key
    n ^= n >> np.uint64(33)
    n *= _C3
    n ^= n >> np.uint64(33)
    n *= _C4
    n ^= n >> np.uint64(33)
    return (n >> np.uint64(11)).astype(np.float64) * _INV53


def _mix_key(seed: int, octave: int) -> np.uint64:
    # Python-int arithmetic masked to 64 bits: same wrapping as uint64
    # without numpy's scalar-overflow warnings.
    mask = (1 << 64) - 1
    n = (int(seed) & mask) ^ ((int(octave) * int(_OCT)) & mask)
    n ^= n >> 33
    n = (n * int(_C3)) & mask
    n ^= n >> 33
    n = (n * int(_C4)) & mask
    n ^= n >> 33
    return np.uint64(n)


def noise_canvas_numpy(
    height: int,
    width: int,
    x0: float,
    y0: float,
    base_cell: float,
    octaves: int,
    gain: float,
    lacunarity: float,
    seed: int,
) -> np.ndarray:
    """Multi-octave value noise in [0, 1), sampled at pixel centers.

    ``x0``/``y0`` offset the canvas in global pixel coordinates so that
    windows cut from one logical plane are seamless.
    """
    out = np.zeros((height, width), dtype=np.float64)
    amp = 1.0
    total = 0.0
    cell = float(base_cell)
    for octave in range(octaves):
        key = _mix_key(seed, octave)
        u = (x0 + np.arange(width, dtype=np.float64) + 0.5) / cell
        v = (y0 + np.arange(height, dtype=np.float64) + 0.5) / cell
        ix = np.floor(u).astype(np.int64)
        iy = np.floor(v).astype(np.int64)
        fx = u - ix
        fy = v - iy
        sx = fx * fx * (3.0 - 2.0 * fx)
        sy = fy * fy * (3.0 - 2.0 * fy)
        ix0 = int(ix.min())
        iy0 = int(iy.min())
        lat = _lattice_numpy(
            ix0, iy0, int(ix.max()) - ix0 + 2, int(iy.max()) - iy0 + 2, key
        )
        cx = ix - ix0
        cy = iy - iy0
        v00 = lat[cy[:, None], cx[None, :]]
        v10 = lat[cy[:, None], cx[None, :] + 1]
        v01 = lat[cy[:, None] + 1, cx[None, :]]
        v11 = lat[cy[:, None] + 1, cx[None, :] + 1]
        top = v00 + (v10 - v00) * sx[None, :]
        bot = v01 + (v11 - v01) * sx[None, :]
        out += (top + (bot - top) * sy[:, None]) * amp
        total += amp
        amp *= gain
        cell /= lacunarity
    out /= total
    return out


def _noise_canvas_numba_impl(
    height, width, x0, y0, base_cell, octaves, gain, lacunarity, seed
):  # pragma: no cover - exercised through the dispatching alias
    out = np.zeros((height, width), dtype=np.float64)
    amp = 1.0
    total = 0.0
    cell = base_cell
    for octave in range(octaves):
        key = np.uint64(seed) ^ (np.uint64(octave) * _OCT)
        key ^= key >> np.uint64(33)
        key *= _C3
        key ^= key >> np.uint64(33)
        key *= _C4
        key ^= key >> np.uint64(33)

        ix = np.empty(width, dtype=np.int64)
        fx = np.empty(width, dtype=np.float64)
        for j in range(width):
            u = (x0 + j + 0.5) / cell
            ix[j] = np.int64(np.floor(u))
            fx[j] = u - ix[j]
        iy = np.empty(height, dtype=np.int64)
        fy = np.empty(height, dtype=np.float64)
        for i in range(height):
            v = (y0 + i + 0.5) / cell
            iy[i] = np.int64(np.floor(v))
            fy[i] = v - iy[i]

        ix0 = ix[0]
        iy0 = iy[0]
        nx = ix[width - 1] - ix0 + 2
        ny = iy[height - 1] - iy0 + 2
        lat = np.empty((ny, nx), dtype=np.float64)
        for a in range(ny):
            gy = np.uint64(iy0 + a) * _C2
            for b in range(nx):
                n = (np.uint64(ix0 + b) * _C1) ^ gy ^ key
                n ^= n >> np.uint64(33)
                n *= _C3
                n ^= n >> np.uint64(33)
                n *= _C4
                n ^= n >> np.uint64(33)
                lat[a, b] = np.float64(n >> np.uint64(11)) * _INV53

        for i in range(height):
            cy = iy[i] - iy0
            t = fy[i]
            sy = t * t * (3.0 - 2.0 * t)
            for j in range(width):
                cx = ix[j] - ix0
                t = fx[j]
                sx = t * t * (3.0 - 2.0 * t)
                v00 = lat[cy, cx]
                v10 = lat[cy, cx + 1]
                v01 = lat[cy + 1, cx]
                v11 = lat[cy + 1, cx + 1]
                top = v00 + (v10 - v00) * sx
                bot = v01 + (v11 - v01) * sx
                out[i, j] += (top + (bot - top) * sy) * amp
        total += amp
        amp *= gain
        cell /= lacunarity
    out /= total
    return out


# ---------------------------------------------------------------------------
# bilinear sampling
# ---------------------------------------------------------------------------

def bilinear_sample_numpy(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` at fractional array-index coordinates, clamped at edges."""
    h, w = img.shape
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2) if w > 1 else np.zeros_like(x, np.int64)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2) if h > 1 else np.zeros_like(y, np.int64)
    fx = x - x0
    fy = y - y0
    v00 = img[y0, x0]
    v10 = img[y0, x0 + 1] if w > 1 else v00
    v01 = img[y0 + 1, x0] if h > 1 else v00
    v11 = img[y0 + 1, x0 + 1] if w > 1 and h > 1 else v00
    top = v00 + (v10 - v00) * fx
    bot = v01 + (v11 - v01) * fx
    return top + (bot - top) * fy


def _bilinear_sample_numba_impl(img, xs, ys):  # pragma: no cover
    h, w = img.shape
    out = np.empty(xs.shape[0], dtype=np.float64)
    for k in range(xs.shape[0]):
        x = xs[k]
        y = ys[k]
        if x < 0.0:
            x = 0.0
        elif x > w - 1.0:
            x = w - 1.0
        if y < 0.0:
            y = 0.0
        elif y > h - 1.0:
            y = h - 1.0
        x0 = np.int64(np.floor(x))
        y0 = np.int64(np.floor(y))
        if x0 > w - 2:
            x0 = w - 2 if w > 1 else 0
        if y0 > h - 2:
            y0 = h - 2 if h > 1 else 0
        fx = x - x0
        fy = y - y0
        x1 = x0 + 1 if w > 1 else x0
        y1 = y0 + 1 if h > 1 else y0
        v00 = img[y0, x0]
        v10 = img[y0, x1]
        v01 = img[y1, x0]
        v11 = img[y1, x1]
        top = v00 + (v10 - v00) * fx
        bot = v01 + (v11 - v01) * fx
        out[k] = top + (bot - top) * fy
    return out


# ---------------------------------------------------------------------------
# Harris corner response
# ---------------------------------------------------------------------------

def harris_response_numpy(gray: np.ndarray, k: float) -> np.ndarray:
    """Harris response map: Sobel gradients, 3x3 Gaussian window, det - k*tr^2."""
    p = np.pad(gray, 1, mode="edge")
    # Sobel kernels, unnormalized: [-1 0 1] x [1 2 1].
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    ixx = gx * gx
    iyy = gy * gy
    ixy = gx * gy

    def blur(a: np.ndarray) -> np.ndarray:
        q = np.pad(a, 1, mode="edge")
        row = q[:, :-2] + 2.0 * q[:, 1:-1] + q[:, 2:]
        return (row[:-2] + 2.0 * row[1:-1] + row[2:]) / 16.0

    sxx = blur(ixx)
    syy = blur(iyy)
    sxy = blur(ixy)
    return (sxx * syy - sxy * sxy) - k * (sxx + syy) * (sxx + syy)


def _harris_response_numba_impl(gray, k):  # pragma: no cover
    h, w = gray.shape
    p = np.empty((h + 2, w + 2), dtype=np.float64)
    p[1:-1, 1:-1] = gray
    p[0, 1:-1] = gray[0]
    p[-1, 1:-1] = gray[-1]
    p[:, 0] = p[:, 1]
    p[:, -1] = p[:, -2]

    ixx = np.empty((h, w), dtype=np.float64)
    iyy = np.empty((h, w), dtype=np.float64)
    ixy = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            gx = (
                p[i, j + 2] + 2.0 * p[i + 1, j + 2] + p[i + 2, j + 2]
                - (p[i, j] + 2.0 * p[i + 1, j] + p[i + 2, j])
            )
            gy = (
                p[i + 2, j] + 2.0 * p[i + 2, j + 1] + p[i + 2, j + 2]
                - (p[i, j] + 2.0 * p[i, j + 1] + p[i, j + 2])
            )
            ixx[i, j] = gx * gx
            iyy[i, j] = gy * gy
            ixy[i, j] = gx * gy

    out = np.empty((h, w), dtype=np.float64)
    q = np.empty((h + 2, w + 2), dtype=np.float64)
    for plane in range(3):
        src = ixx if plane == 0 else (iyy if plane == 1 else ixy)
        q[1:-1, 1:-1] = src
        q[0, 1:-1] = src[0]
        q[-1, 1:-1] = src[-1]
        q[:, 0] = q[:, 1]
        q[:, -1] = q[:, -2]
        for i in range(h):
            for j in range(w):
                row0 = q[i, j] + 2.0 * q[i, j + 1] + q[i, j + 2]
                row1 = q[i + 1, j] + 2.0 * q[i + 1, j + 1] + q[i + 1, j + 2]
                row2 = q[i + 2, j] + 2.0 * q[i + 2, j + 1] + q[i + 2, j + 2]
                s = (row0 + 2.0 * row1 + row2) / 16.0
                if plane == 0:
                    ixx[i, j] = s
                elif plane == 1:
                    iyy[i, j] = s
                else:
                    ixy[i, j] = s
    for i in range(h):
        for j in range(w):
            tr = ixx[i, j] + iyy[i, j]
            out[i, j] = ixx[i, j] * iyy[i, j] - ixy[i, j] * ixy[i, j] - k * tr * tr
    return out


# ---------------------------------------------------------------------------
# pairwise squared L2 distances
# ---------------------------------------------------------------------------

def pairwise_sqdist_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs squared L2 distances between rows of ``a`` and rows of ``b``."""
    na = np.einsum("ij,ij->i", a, a)
    nb = np.einsum("ij,ij->i", b, b)
    d = na[:, None] + nb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def _pairwise_sqdist_numba_impl(a, b):  # pragma: no cover
    ka, m = a.shape
    kb = b.shape[0]
    out = np.empty((ka, kb), dtype=np.float64)
    for i in range(ka):
        for j in range(kb):
            s = 0.0
            for t in range(m):
                d = a[i, t] - b[j, t]
                s += d * d
            out[i, j] = s
    return out


# ---------------------------------------------------------------------------
# RANSAC inner scan
# ---------------------------------------------------------------------------
#
# One iteration: 4-point normalized DLT hypothesis, one-directional
# reprojection errors, strict inlier count. The scan returns the first
# iteration achieving the maximum count and that iteration's inlier mask;
# the caller re-fits on the mask. Samples are drawn by the caller so both
# backends consume one RNG stream.

def ransac_scan_numpy(
    src: np.ndarray, dst: np.ndarray, samples: np.ndarray, threshold: float
) -> tuple[int, np.ndarray]:
    n = src.shape[0]
    iters = samples.shape[0]
    sp = src[samples]  # (I, 4, 2)
    dp = dst[samples]

    def normalize(pts):
        c = pts.mean(axis=1)
        d = np.sqrt(((pts - c[:, None, :]) ** 2).sum(axis=2)).mean(axis=1)
        ok = d > 1e-12
        s = np.where(ok, np.sqrt(2.0) / np.where(ok, d, 1.0), 1.0)
        return (pts - c[:, None, :]) * s[:, None, None], c, s, ok

    spn, sc, ss, sok = normalize(sp)
    dpn, dc, ds, dok = normalize(dp)
    valid = sok & dok

    x = spn[:, :, 0]
    y = spn[:, :, 1]
    u = dpn[:, :, 0]
    v = dpn[:, :, 1]
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    a_even = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u], axis=2)
    a_odd = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=2)
    a = np.empty((iters, 8, 9), dtype=np.float64)
    a[:, 0::2] = a_even
    a[:, 1::2] = a_odd

    s_vals, vt = np.linalg.svd(a)[1:]
    valid &= s_vals[:, -2] > 1e-9 * s_vals[:, 0]
    hn = vt[:, -1, :].reshape(iters, 3, 3)

    # Closed-form inverses of the similarity normalizers.
    t_src = np.zeros((iters, 3, 3))
    t_src[:, 0, 0] = ss
    t_src[:, 1, 1] = ss
    t_src[:, 0, 2] = -ss * sc[:, 0]
    t_src[:, 1, 2] = -ss * sc[:, 1]
    t_src[:, 2, 2] = 1.0
    t_dst_inv = np.zeros((iters, 3, 3))
    t_dst_inv[:, 0, 0] = 1.0 / ds
    t_dst_inv[:, 1, 1] = 1.0 / ds
    t_dst_inv[:, 0, 2] = dc[:, 0]
    t_dst_inv[:, 1, 2] = dc[:, 1]
    t_dst_inv[:, 2, 2] = 1.0
    h = t_dst_inv @ hn @ t_src  # (I, 3, 3)

    xh = np.concatenate([src, np.ones((n, 1))], axis=1)  # (n, 3)
    proj = h @ xh.T  # (I, 3, n)
    w = proj[:, 2, :]
    wok = np.abs(w) > 1e-12
    wsafe = np.where(wok, w, 1.0)
    ex = proj[:, 0, :] / wsafe - dst[:, 0]
    ey = proj[:, 1, :] / wsafe - dst[:, 1]
    err2 = ex * ex + ey * ey
    inl = wok & (err2 < threshold * threshold) & valid[:, None]
    counts = inl.sum(axis=1)
    best = int(np.argmax(counts))  # first iteration holding the max
    return int(counts[best]), inl[best].copy()


def _ransac_scan_numba_impl(src, dst, samples, threshold):  # pragma: no cover
    n = src.shape[0]
    iters = samples.shape[0]
    best_count = 0
    best_mask = np.zeros(n, dtype=np.bool_)
    mask = np.zeros(n, dtype=np.bool_)
    a = np.zeros((8, 9), dtype=np.float64)
    thr2 = threshold * threshold

    for it in range(iters):
        scx = 0.0
        scy = 0.0
        dcx = 0.0
        dcy = 0.0
        for q in range(4):
            scx += src[samples[it, q], 0]
            scy += src[samples[it, q], 1]
            dcx += dst[samples[it, q], 0]
            dcy += dst[samples[it, q], 1]
        scx *= 0.25
        scy *= 0.25
        dcx *= 0.25
        dcy *= 0.25
        sd = 0.0
        dd = 0.0
        for q in range(4):
            dx = src[samples[it, q], 0] - scx
            dy = src[samples[it, q], 1] - scy
            sd += np.sqrt(dx * dx + dy * dy)
            dx = dst[samples[it, q], 0] - dcx
            dy = dst[samples[it, q], 1] - dcy
            dd += np.sqrt(dx * dx + dy * dy)
        sd *= 0.25
        dd *= 0.25
        if sd <= 1e-12 or dd <= 1e-12:
            continue
        ssc = np.sqrt(2.0) / sd
        dsc = np.sqrt(2.0) / dd

        for q in range(4):
            x = (src[samples[it, q], 0] - scx) * ssc
            y = (src[samples[it, q], 1] - scy) * ssc
            u = (dst[samples[it, q], 0] - dcx) * dsc
            v = (dst[samples[it, q], 1] - dcy) * dsc
            a[2 * q, 0] = x
            a[2 * q, 1] = y
            a[2 * q, 2] = 1.0
            a[2 * q, 3] = 0.0
            a[2 * q, 4] = 0.0
            a[2 * q, 5] = 0.0
            a[2 * q, 6] = -u * x
            a[2 * q, 7] = -u * y
            a[2 * q, 8] = -u
            a[2 * q + 1, 0] = 0.0
            a[2 * q + 1, 1] = 0.0
            a[2 * q + 1, 2] = 0.0
            a[2 * q + 1, 3] = -x
            a[2 * q + 1, 4] = -y
            a[2 * q + 1, 5] = -1.0
            a[2 * q + 1, 6] = v * x
            a[2 * q + 1, 7] = v * y
            a[2 * q + 1, 8] = v
        _, s_vals, vt = np.linalg.svd(a)
        if s_vals[7] <= 1e-9 * s_vals[0]:
            continue
        hn = np.empty((3, 3), dtype=np.float64)
        for r in range(3):
            for c in range(3):
                hn[r, c] = vt[8, 3 * r + c]

        # H = T_dst^-1 @ Hn @ T_src with similarity normalizers.
        h = np.zeros((3, 3), dtype=np.float64)
        for c in range(3):
            h[0, c] = hn[0, c] / dsc + dcx * hn[2, c]
            h[1, c] = hn[1, c] / dsc + dcy * hn[2, c]
            h[2, c] = hn[2, c]
        hh = np.zeros((3, 3), dtype=np.float64)
        for r in range(3):
            hh[r, 0] = h[r, 0] * ssc
            hh[r, 1] = h[r, 1] * ssc
            hh[r, 2] = -h[r, 0] * ssc * scx - h[r, 1] * ssc * scy + h[r, 2]

        count = 0
        for p in range(n):
            w = hh[2, 0] * src[p, 0] + hh[2, 1] * src[p, 1] + hh[2, 2]
            if np.abs(w) <= 1e-12:
                mask[p] = False
                continue
            px = (hh[0, 0] * src[p, 0] + hh[0, 1] * src[p, 1] + hh[0, 2]) / w
            py = (hh[1, 0] * src[p, 0] + hh[1, 1] * src[p, 1] + hh[1, 2]) / w
            ex = px - dst[p, 0]
            ey = py - dst[p, 1]
            good = ex * ex + ey * ey < thr2
            mask[p] = good
            if good:
                count += 1
        if count > best_count:
            best_count = count
            best_mask[:] = mask
    return best_count, best_mask


# ---------------------------------------------------------------------------
# backend dispatch
# ---------------------------------------------------------------------------

if BACKEND == "numba":
    noise_canvas_numba = njit(cache=True)(_noise_canvas_numba_impl)
    bilinear_sample_numba = njit(cache=True)(_bilinear_sample_numba_impl)
    harris_response_numba = njit(cache=True)(_harris_response_numba_impl)
    pairwise_sqdist_numba = njit(cache=True)(_pairwise_sqdist_numba_impl)
    ransac_scan_numba = njit(cache=True)(_ransac_scan_numba_impl)

    noise_canvas = noise_canvas_numba
    bilinear_sample = bilinear_sample_numba
    harris_response = harris_response_numba
    # BLAS matmul beats the compiled loop ~8x here (see
    # benchmarks/bench_kernels.py), so the numpy path is the default on
    # both backends; the numba variant stays for comparison.
    pairwise_sqdist = pairwise_sqdist_numpy
    ransac_scan = ransac_scan_numba
else:
    noise_canvas = noise_canvas_numpy
    bilinear_sample = bilinear_sample_numpy
    harris_response = harris_response_numpy
    pairwise_sqdist = pairwise_sqdist_numpy
    ransac_scan = ransac_scan_numpy
