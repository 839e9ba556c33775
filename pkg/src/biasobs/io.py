"""Frame, diagnostics and plot output: PGM, PFM, CSV and SVG."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MissingCSV


def write_pgm(path, y):
    """8-bit binary PGM of a brightness field in [1, 256] (stored as ``round(y) - 1``)."""
    img = np.clip(np.rint(np.asarray(y, float)) - 1, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def _split_header(data, n_tokens):
    """Header tokens and the payload, which starts after one whitespace byte."""
    tokens, pos = [], 0
    while len(tokens) < n_tokens:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated header")
        tokens.append(data[start:pos])
    return tokens, data[pos + 1 :]


def read_pgm(path):
    (magic, w, h, _), payload = _split_header(Path(path).read_bytes(), 4)
    if magic != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(w), int(h)
    img = np.frombuffer(payload[: w * h], dtype=np.uint8).reshape(h, w)
    return img.astype(float) + 1.0


def write_pfm(path, f):
    """Grayscale little-endian PFM; rows are stored bottom to top."""
    arr = np.asarray(f, dtype="<f4")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path):
    (magic, w, h, scale), payload = _split_header(Path(path).read_bytes(), 4)
    if magic != b"Pf":
        raise ValueError("not a grayscale PFM")
    w, h = int(w), int(h)
    dtype = "<f4" if float(scale) < 0 else ">f4"
    arr = np.frombuffer(payload[: 4 * w * h], dtype=dtype).reshape(h, w)
    return arr[::-1].astype(float)


def write_csv(path, columns, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join("%.9g" % v for v in row) + "\n")


def read_csv(path):
    path = Path(path)
    if not path.exists():
        raise MissingCSV(f"no diagnostics CSV at {path}")
    lines = path.read_text().splitlines()
    if len(lines) < 2:
        raise MissingCSV(f"{path} has no data rows")
    cols = lines[0].split(",")
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return cols, rows


_COLORS = ("#d62728", "#2ca02c", "#1f77b4")


def svg_line_chart(t, series, labels, title, ylabel, width=640, height=360):
    """Minimal SVG 1.1 line chart, one polyline per series."""
    t = np.asarray(t, float)
    ml, mr, mt, mb = 70, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    t0, t1 = float(t[0]), float(t[-1])
    if t1 == t0:
        t1 = t0 + 1.0
    allv = np.concatenate([np.asarray(s, float) for s in series])
    lo, hi = float(np.min(allv)), float(np.max(allv))
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    sx = lambda v: ml + (v - t0) / (t1 - t0) * pw
    sy = lambda v: mt + (hi - v) / (hi - lo) * ph
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle" font-size="12">t (s)</text>',
        f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {mt + ph / 2})">{ylabel}</text>',
    ]
    for v in np.linspace(lo, hi, 5):
        out.append(f'<text x="{ml - 4}" y="{sy(v) + 4:.1f}" text-anchor="end" font-size="10">{v:.3g}</text>')
    for v in np.linspace(t0, t1, 5):
        out.append(f'<text x="{sx(v):.1f}" y="{mt + ph + 14}" text-anchor="middle" font-size="10">{v:.3g}</text>')
    if lo < 0 < hi:
        out.append(f'<line x1="{ml}" y1="{sy(0):.2f}" x2="{ml + pw}" y2="{sy(0):.2f}" stroke="#999" stroke-dasharray="4 3"/>')
    for i, (s, lab) in enumerate(zip(series, labels)):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, s))
        col = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"><title>{lab}</title></polyline>')
        out.append(f'<text x="{ml + pw - 60}" y="{mt + 14 + 14 * i}" fill="{col}" font-size="11">{lab}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(csv_path, out_dir=None):
    """Translation- and rotation-bias error charts from a diagnostics CSV."""
    cols, rows = read_csv(csv_path)
    out_dir = Path(csv_path).parent if out_dir is None else Path(out_dir)
    idx = {c: i for i, c in enumerate(cols)}
    t = rows[:, idx["t"]]
    paths = []
    for stem, key, title, unit in (
        ("bias_error_translation", "pve", "Translation bias error", "m/s"),
        ("bias_error_rotation", "pwe", "Rotation bias error", "rad/s"),
    ):
        series = [rows[:, idx[f"{key}_{a}"]] for a in "xyz"]
        svg = svg_line_chart(t, series, [f"{key}_{a}" for a in "xyz"], title, f"error ({unit})")
        p = out_dir / f"{stem}.svg"
        p.write_text(svg)
        paths.append(p)
    return paths
