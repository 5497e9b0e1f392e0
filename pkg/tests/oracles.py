"""Slow scalar reference implementations used as test oracles."""

import math

import numpy as np


def naive_context(data, kind="std", patch=3):
    """Triple loop over pixels and window offsets with clamp-to-edge borders."""
    h, w, _ = data.shape
    r = patch // 2
    out = np.zeros((h, w))
    for u in range(h):
        for v in range(w):
            window = []
            for dx in range(-r, r + 1):
                for dy in range(-r, r + 1):
                    x = min(max(u + dx, 0), h - 1)
                    y = min(max(v + dy, 0), w - 1)
                    window.append([float(c) for c in data[x, y]])
            n = len(window)
            if kind == "entropy":
                total = 0.0
                for px in window:
                    for c in px:
                        if c > 0.0:
                            total -= c * math.log(c)
                out[u, v] = max(total, 0.0)
                continue
            mean = [sum(px[c] for px in window) / n for c in range(3)]
            sq = 0.0
            for px in window:
                for c in range(3):
                    sq += (px[c] - mean[c]) ** 2
            var = sq / n
            out[u, v] = math.sqrt(var) if kind == "std" else var
    return out


def naive_normalize(g):
    flat = [float(x) for x in np.ravel(g)]
    peak = max(flat)
    if peak == 0.0:
        return np.ones_like(g, dtype=float)
    floor = 0.01 * sum(flat) / len(flat)
    return np.array([max(x, floor) / peak for x in flat]).reshape(np.shape(g))


def naive_composite(sigmas, colors, deltas, background=1.0):
    """Front-to-back loop: weights, transmittances and final color."""
    trans = 1.0
    weights, ts = [], []
    color = [0.0, 0.0, 0.0]
    for s, c, d in zip(sigmas, colors, deltas):
        alpha = 1.0 - math.exp(-s * d)
        ts.append(trans)
        w = trans * alpha
        weights.append(w)
        for k in range(3):
            color[k] += w * c[k]
        trans *= 1.0 - alpha
    for k in range(3):
        color[k] += trans * background
    return np.array(color), np.array(weights), np.array(ts), trans


def naive_ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Explicit per-window SSIM on BT.601 luma, valid windows only."""
    la = np.asarray(a, dtype=float) @ np.array([0.299, 0.587, 0.114])
    lb = np.asarray(b, dtype=float) @ np.array([0.299, 0.587, 0.114])
    half = (size - 1) / 2.0
    g = [[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma * sigma))
          for j in range(size)] for i in range(size)]
    tot = sum(map(sum, g))
    g = [[x / tot for x in row] for row in g]
    c1, c2 = k1 ** 2, k2 ** 2
    h, w = la.shape
    vals = []
    for u in range(h - size + 1):
        for v in range(w - size + 1):
            mx = my = sxx = syy = sxy = 0.0
            for i in range(size):
                for j in range(size):
                    wt = g[i][j]
                    x = la[u + i, v + j]
                    y = lb[u + i, v + j]
                    mx += wt * x
                    my += wt * y
                    sxx += wt * x * x
                    syy += wt * y * y
                    sxy += wt * x * y
            vx, vy, cxy = sxx - mx * mx, syy - my * my, sxy - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


def random_ray_case(rng, max_d=8):
    """Random small field, a ray through the box and a random target color."""
    from quadnerf.field import VoxelField
    from quadnerf.render import RaySampling

    d = int(rng.integers(2, max_d + 1))
    f = VoxelField(d)
    f.raw_density = rng.uniform(-4.0, 3.0, f.raw_density.shape)
    f.raw_rgb = rng.uniform(-3.0, 3.0, f.raw_rgb.shape)
    origin = rng.normal(size=3)
    origin *= rng.uniform(1.8, 2.6) / np.linalg.norm(origin)
    direction = rng.uniform(-0.5, 0.5, 3) - origin
    direction /= np.linalg.norm(direction)
    sampling = RaySampling(int(rng.integers(2, 33)), 0.2, 4.5, jitter=False)
    return f, origin, direction, rng.random(3), sampling


def finite_difference_check(field, origin, direction, target, sampling, h=1e-4,
                            rel=1e-3, floor=1e-8):
    """Compare analytic ray-loss gradients against central differences.

    Returns the number of checked parameters and the list of violations.
    """
    from quadnerf.field import GradientBuffer
    from quadnerf.render import render_ray, render_ray_backward

    grads = GradientBuffer.for_field(field)
    render_ray_backward(field, origin, direction, target, sampling, grads)

    def loss():
        c = render_ray(field, origin, direction, sampling).color
        return float(((c - target) ** 2).sum())

    bad, checked = [], 0
    for params, analytic in ((field.raw_density.reshape(-1), grads.density.reshape(-1)),
                             (field.raw_rgb.reshape(-1), grads.rgb.reshape(-1))):
        for i in range(params.size):
            old = params[i]
            params[i] = old + h
            up = loss()
            params[i] = old - h
            down = loss()
            params[i] = old
            fd = (up - down) / (2 * h)
            checked += 1
            if abs(analytic[i] - fd) > max(rel * max(abs(fd), abs(analytic[i])), floor):
                bad.append((i, analytic[i], fd))
    return checked, bad
