"""Pure numpy kernels.

Every routine here performs the same floating point operations, in the same
order per output element, as its counterpart in ``_ckernels.pyx``. Outputs
of the two backends are therefore bit-identical.
"""
import numpy as np

NAME = "python"


def ace_response(channel, sample, slope):
    """Spatially weighted, slope-clipped difference response of one channel.

    ``channel`` is a 2-D float64 array; ``sample`` holds flat pixel indices.
    Contributions are accumulated in ``sample`` order for every pixel.
    """
    h, w = channel.shape
    flat = np.ascontiguousarray(channel, dtype=np.float64).ravel()
    idx = np.arange(h * w)
    py = (idx // w).astype(np.float64)
    px = (idx % w).astype(np.float64)
    acc = np.zeros(h * w, dtype=np.float64)
    for j in np.asarray(sample, dtype=np.int64):
        t = slope * (flat - flat[j]) / 255.0
        np.clip(t, -1.0, 1.0, out=t)
        dy = py - py[j]
        dx = px - px[j]
        d = np.sqrt(dx * dx + dy * dy)
        d[j] = 1.0
        contrib = t / d
        contrib[j] = 0.0
        acc += contrib
    return acc.reshape(h, w)


def rasterize(sx, sy, sz, colors, faces, width, height):
    """Depth-buffered fill of screen-space triangles at pixel centers.

    Returns ``(depth, rgb, covered)``; ``rgb`` holds interpolated float
    codes. A face overwrites a pixel only when strictly nearer (larger
    depth), so ties keep the earlier face.
    """
    depth = np.full((height, width), -np.inf)
    rgb = np.zeros((height, width, 3))
    covered = np.zeros((height, width), dtype=np.uint8)
    for f in range(faces.shape[0]):
        a, b, c = faces[f]
        x0, y0, z0 = sx[a], sy[a], sz[a]
        x1, y1, z1 = sx[b], sy[b], sz[b]
        x2, y2, z2 = sx[c], sy[c], sz[c]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        i_lo = max(int(np.ceil(min(x0, x1, x2) - 0.5)), 0)
        i_hi = min(int(np.floor(max(x0, x1, x2) - 0.5)), width - 1)
        j_lo = max(int(np.ceil(min(y0, y1, y2) - 0.5)), 0)
        j_hi = min(int(np.floor(max(y0, y1, y2) - 0.5)), height - 1)
        if i_lo > i_hi or j_lo > j_hi:
            continue
        pxs = np.arange(i_lo, i_hi + 1) + 0.5
        pys = np.arange(j_lo, j_hi + 1) + 0.5
        px, py = np.meshgrid(pxs, pys)
        e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        if area > 0.0:
            inside = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
        else:
            inside = (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0)
        if not inside.any():
            continue
        b0 = e0 / area
        b1 = e1 / area
        b2 = e2 / area
        z = b0 * z0 + b1 * z1 + b2 * z2
        win = depth[j_lo:j_hi + 1, i_lo:i_hi + 1]
        take = inside & (z > win)
        if not take.any():
            continue
        win[take] = z[take]
        covered[j_lo:j_hi + 1, i_lo:i_hi + 1][take] = 1
        tile = rgb[j_lo:j_hi + 1, i_lo:i_hi + 1]
        for ch in range(3):
            val = b0 * colors[a, ch] + b1 * colors[b, ch] + b2 * colors[c, ch]
            tile[..., ch][take] = val[take]
    return depth, rgb, covered


def alpha_over(dst, src, x0, y0):
    """Composite RGBA ``src`` over RGB ``dst`` in place, top-left at (x0, y0).

    Integer blend: ``(s*a + d*(255 - a) + 127) // 255``; parts of ``src``
    outside ``dst`` are ignored.
    """
    H, W = dst.shape[:2]
    h, w = src.shape[:2]
    xa, ya = max(x0, 0), max(y0, 0)
    xb, yb = min(x0 + w, W), min(y0 + h, H)
    if xa >= xb or ya >= yb:
        return dst
    s = src[ya - y0:yb - y0, xa - x0:xb - x0].astype(np.int32)
    d = dst[ya:yb, xa:xb].astype(np.int32)
    a = s[..., 3:4]
    dst[ya:yb, xa:xb] = ((s[..., :3] * a + d * (255 - a) + 127) // 255).astype(np.uint8)
    return dst
