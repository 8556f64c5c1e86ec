"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The numba path is used by default. Set ``IATRACK_DISABLE_NUMBA=1`` in the
environment (before import) to force the numpy fallback; the fallback is also
selected automatically when numba cannot be imported.

Both flavours are exported under ``<name>_numba`` / ``<name>_numpy`` so the
test-suite and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

import math
import os

import numpy as np

try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None

_FLAG = os.environ.get("IATRACK_DISABLE_NUMBA", "").strip().lower()
NUMBA_ENABLED = nb is not None and _FLAG not in ("1", "true", "yes", "on")


def _njit(fn):
    if nb is None:  # pragma: no cover
        return fn
    return nb.njit(cache=True)(fn)


# ---------------------------------------------------------------------------
# bilinear resampling with edge replication
# ---------------------------------------------------------------------------

def resample_bilinear_numpy(img, x0, y0, sx, sy, out_h, out_w):
    """Sample ``out_h x out_w`` points of ``img`` (H, W, C float) on a grid.

    Output pixel ``(i, j)`` reads source position
    ``(y0 + (i + .5) * sy - .5, x0 + (j + .5) * sx - .5)``. Positions outside
    the raster are clamped, which replicates the border.
    """
    h, w = img.shape[0], img.shape[1]
    xs = np.clip(x0 + (np.arange(out_w) + 0.5) * sx - 0.5, 0.0, w - 1.0)
    ys = np.clip(y0 + (np.arange(out_h) + 0.5) * sy - 0.5, 0.0, h - 1.0)
    xi = np.minimum(np.floor(xs).astype(np.int64), max(w - 2, 0))
    yi = np.minimum(np.floor(ys).astype(np.int64), max(h - 2, 0))
    wx = (xs - xi)[None, :, None]
    wy = (ys - yi)[:, None, None]
    xi1 = np.minimum(xi + 1, w - 1)
    yi1 = np.minimum(yi + 1, h - 1)
    top = img[yi][:, xi] * (1.0 - wx) + img[yi][:, xi1] * wx
    bot = img[yi1][:, xi] * (1.0 - wx) + img[yi1][:, xi1] * wx
    return top * (1.0 - wy) + bot * wy


@_njit
def resample_bilinear_numba(img, x0, y0, sx, sy, out_h, out_w):
    h, w, c = img.shape
    out = np.empty((out_h, out_w, c), dtype=np.float64)
    for i in range(out_h):
        y = y0 + (i + 0.5) * sy - 0.5
        y = min(max(y, 0.0), h - 1.0)
        yi = min(int(math.floor(y)), max(h - 2, 0))
        yi1 = min(yi + 1, h - 1)
        wy = y - yi
        for j in range(out_w):
            x = x0 + (j + 0.5) * sx - 0.5
            x = min(max(x, 0.0), w - 1.0)
            xi = min(int(math.floor(x)), max(w - 2, 0))
            xi1 = min(xi + 1, w - 1)
            wx = x - xi
            for k in range(c):
                top = img[yi, xi, k] * (1.0 - wx) + img[yi, xi1, k] * wx
                bot = img[yi1, xi, k] * (1.0 - wx) + img[yi1, xi1, k] * wx
                out[i, j, k] = top * (1.0 - wy) + bot * wy
    return out


# ---------------------------------------------------------------------------
# gradient-orientation cell histograms
# ---------------------------------------------------------------------------

def _gradients_numpy(gray):
    p = np.pad(gray, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def orientation_cells_numpy(gray, cell, nbins):
    """Unsigned orientation histograms, magnitude weighted, summed per cell.

    Each pixel votes into its two nearest orientation bins (linear split).
    Result has shape ``(rows // cell, cols // cell, nbins)``.
    """
    gx, gy = _gradients_numpy(gray)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    pos = theta / np.pi * nbins - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64) % nbins
    hi = (lo + 1) % nbins
    ch, cw = gray.shape[0] // cell, gray.shape[1] // cell
    rr, cc = np.indices(gray.shape)
    cell_idx = (rr // cell) * cw + (cc // cell)
    valid = (rr < ch * cell) & (cc < cw * cell)
    out = np.zeros(ch * cw * nbins)
    ci = cell_idx[valid]
    np.add.at(out, ci * nbins + lo[valid], (mag * (1.0 - frac))[valid])
    np.add.at(out, ci * nbins + hi[valid], (mag * frac)[valid])
    return out.reshape(ch, cw, nbins)


@_njit
def orientation_cells_numba(gray, cell, nbins):
    rows, cols = gray.shape
    ch, cw = rows // cell, cols // cell
    out = np.zeros((ch, cw, nbins))
    for r in range(ch * cell):
        rm = max(r - 1, 0)
        rp = min(r + 1, rows - 1)
        for c in range(cw * cell):
            cm = max(c - 1, 0)
            cp = min(c + 1, cols - 1)
            gx = 0.5 * (gray[r, cp] - gray[r, cm])
            gy = 0.5 * (gray[rp, c] - gray[rm, c])
            mag = math.sqrt(gx * gx + gy * gy)
            if mag == 0.0:
                continue
            theta = math.atan2(gy, gx) % math.pi
            pos = theta / math.pi * nbins - 0.5
            lo = math.floor(pos)
            frac = pos - lo
            b0 = int(lo) % nbins
            b1 = (b0 + 1) % nbins
            out[r // cell, c // cell, b0] += mag * (1.0 - frac)
            out[r // cell, c // cell, b1] += mag * frac
    return out


# ---------------------------------------------------------------------------
# chroma-weighted hue cell histograms
# ---------------------------------------------------------------------------

def hue_cells_numpy(rgb, cell, nbins, chroma_floor):
    """Per-cell hue histogram weighted by chroma (max - min channel).

    Pixels whose chroma is below ``chroma_floor`` do not vote, so achromatic
    regions produce exact zeros. Hue votes are split linearly between the two
    nearest circular bins.
    """
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    chroma = mx - mn
    safe = np.where(chroma > 0, chroma, 1.0)
    hue = np.where(
        mx == r, np.mod((g - b) / safe, 6.0),
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    pos = hue / 6.0 * nbins - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64) % nbins
    hi = (lo + 1) % nbins
    weight = np.where(chroma >= chroma_floor, chroma, 0.0)
    ch, cw = rgb.shape[0] // cell, rgb.shape[1] // cell
    rr, cc = np.indices(rgb.shape[:2])
    valid = (rr < ch * cell) & (cc < cw * cell) & (weight > 0)
    ci = ((rr // cell) * cw + (cc // cell))[valid]
    out = np.zeros(ch * cw * nbins)
    np.add.at(out, ci * nbins + lo[valid], (weight * (1.0 - frac))[valid])
    np.add.at(out, ci * nbins + hi[valid], (weight * frac)[valid])
    return out.reshape(ch, cw, nbins)


@_njit
def hue_cells_numba(rgb, cell, nbins, chroma_floor):
    rows, cols = rgb.shape[0], rgb.shape[1]
    ch, cw = rows // cell, cols // cell
    out = np.zeros((ch, cw, nbins))
    for i in range(ch * cell):
        for j in range(cw * cell):
            r = rgb[i, j, 0]
            g = rgb[i, j, 1]
            b = rgb[i, j, 2]
            mx = max(r, g, b)
            mn = min(r, g, b)
            chroma = mx - mn
            if chroma < chroma_floor or chroma <= 0.0:
                continue
            if mx == r:
                hue = ((g - b) / chroma) % 6.0
            elif mx == g:
                hue = (b - r) / chroma + 2.0
            else:
                hue = (r - g) / chroma + 4.0
            pos = hue / 6.0 * nbins - 0.5
            lo = math.floor(pos)
            frac = pos - lo
            b0 = int(lo) % nbins
            b1 = (b0 + 1) % nbins
            out[i // cell, j // cell, b0] += chroma * (1.0 - frac)
            out[i // cell, j // cell, b1] += chroma * frac
    return out


# ---------------------------------------------------------------------------
# multicut objective over every set partition
# ---------------------------------------------------------------------------

def partition_costs_numpy(labels, eu, ev, w):
    """Cost and cut-count of every labeling row for the given weighted edges."""
    costs = np.zeros(labels.shape[0])
    ncut = np.zeros(labels.shape[0], dtype=np.int64)
    for u, v, c in zip(eu, ev, w):
        cut = labels[:, u] != labels[:, v]
        costs += cut * c
        ncut += cut
    return costs, ncut


@_njit
def partition_costs_numba(labels, eu, ev, w):
    n_rows = labels.shape[0]
    costs = np.zeros(n_rows)
    ncut = np.zeros(n_rows, dtype=np.int64)
    for p in range(n_rows):
        s = 0.0
        k = 0
        for e in range(eu.shape[0]):
            if labels[p, eu[e]] != labels[p, ev[e]]:
                s += w[e]
                k += 1
        costs[p] = s
        ncut[p] = k
    return costs, ncut


if NUMBA_ENABLED:
    resample_bilinear = resample_bilinear_numba
    orientation_cells = orientation_cells_numba
    hue_cells = hue_cells_numba
    partition_costs = partition_costs_numba
else:
    resample_bilinear = resample_bilinear_numpy
    orientation_cells = orientation_cells_numpy
    hue_cells = hue_cells_numpy
    partition_costs = partition_costs_numpy

KERNELS = {
    "resample_bilinear": (resample_bilinear_numpy, resample_bilinear_numba),
    "orientation_cells": (orientation_cells_numpy, orientation_cells_numba),
    "hue_cells": (hue_cells_numpy, hue_cells_numba),
    "partition_costs": (partition_costs_numpy, partition_costs_numba),
}
