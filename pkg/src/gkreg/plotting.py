"""Dependency-free, deterministic SVG and PGM writers."""
from __future__ import annotations

import math

import numpy as np

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50


def error_curve_svg(ks, errors, title="relative error vs k"):
    """Relative error against k on a log-y axis. Same input, same bytes."""
    ks = [int(k) for k in ks]
    errs = [float(e) for e in errors]
    good = [(k, e) for k, e in zip(ks, errs) if e > 0 and math.isfinite(e)]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">'
           f'{_escape(title)}</text>']
    if good:
        kmin, kmax = min(k for k, _ in good), max(k for k, _ in good)
        lo = math.floor(math.log10(min(e for _, e in good)))
        hi = math.ceil(math.log10(max(e for _, e in good)))
        if hi == lo:
            hi = lo + 1
        span_k = max(kmax - kmin, 1)

        def px(k):
            return LEFT + (k - kmin) / span_k * (W - LEFT - RIGHT)

        def py(e):
            return TOP + (hi - math.log10(e)) / (hi - lo) * (H - TOP - BOTTOM)

        out.append(f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" height="{H - TOP - BOTTOM}" '
                   'fill="none" stroke="black"/>')
        for d in range(lo, hi + 1):
            y = py(10.0**d)
            out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{W - RIGHT}" y2="{y:.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{LEFT - 6}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                       f'font-size="11">1e{d}</text>')
        step = max(1, span_k // 10)
        for k in range(kmin, kmax + 1, step):
            x = px(k)
            out.append(f'<text x="{x:.2f}" y="{H - BOTTOM + 16}" text-anchor="middle" '
                       f'font-family="sans-serif" font-size="11">{k}</text>')
        out.append(f'<text x="{W / 2:.1f}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" '
                   'font-size="12">k</text>')
        pts = " ".join(f"{px(k):.2f},{py(e):.2f}" for k, e in good)
        out.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{pts}"/>')
        kb, eb = min(good, key=lambda t: (t[1], t[0]))
        out.append(f'<circle cx="{px(kb):.2f}" cy="{py(eb):.2f}" r="4" fill="#d62728"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def pgm_bytes(image):
    """Plain (P2) graymap, linearly scaled to 0..255 over the image's range."""
    img = np.asarray(image, dtype=float)
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    vals = np.clip(np.rint(scaled * 255), 0, 255).astype(int)
    rows = "\n".join(" ".join(str(v) for v in row) for row in vals)
    return f"P2\n{img.shape[1]} {img.shape[0]}\n255\n{rows}\n".encode("ascii")
