"""Generate the Hemker-domain fixture: (-3, 9) x (-3, 3) minus the unit disc.

The disc is a regular 32-gon with vertices at (0, +-1). Output is the plain
mesh format read by `sms_core::mesh::parse_mesh`.

    python3 tools/hemker_fixture.py > fixtures/hemker.mesh
"""

import sys

import numpy as np
from scipy.spatial import Delaunay

SIDES = 32
X0, X1, Y0, Y1 = -3.0, 9.0, -3.0, 3.0
SPACING = 0.4


def points():
    pts = []
    ang = np.pi / 2 + 2 * np.pi * np.arange(SIDES) / SIDES
    circle = np.c_[np.cos(ang), np.sin(ang)]
    circle[np.abs(circle) < 1e-15] = 0.0
    pts.extend(circle)
    for r, shift, count in [(1.2, 0.5, SIDES), (1.45, 0.0, 24), (1.75, 0.5, 20)]:
        a = np.pi / 2 + 2 * np.pi * (np.arange(count) + shift) / count
        pts.extend(np.c_[r * np.cos(a), r * np.sin(a)])
    nx = round((X1 - X0) / SPACING)
    ny = round((Y1 - Y0) / SPACING)
    for i in range(nx + 1):
        for j in range(ny + 1):
            p = (X0 + i * (X1 - X0) / nx, Y0 + j * (Y1 - Y0) / ny)
            if np.hypot(*p) > 2.05:
                pts.append(p)
    return np.array(pts), circle


def main():
    pts, circle = points()
    tri = Delaunay(pts)
    elems = []
    for s in tri.simplices:
        c = pts[s].mean(axis=0)
        if np.hypot(*c) < 1.0:
            continue
        a, b, d = pts[s]
        if (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0]) < 0:
            s = [s[0], s[2], s[1]]
        elems.append([int(v) for v in s])
    edges = {}
    for e in elems:
        for k in range(3):
            key = tuple(sorted((e[k], e[(k + 1) % 3])))
            edges[key] = edges.get(key, 0) + 1
    for k in range(SIDES):
        key = tuple(sorted((k, (k + 1) % SIDES)))
        if edges.get(key) != 1:
            sys.exit(f"circle edge {key} missing from the triangulation")
    boundary = []
    for e in elems:
        for k in range(3):
            a, b = e[k], e[(k + 1) % 3]
            if edges[tuple(sorted((a, b)))] == 1:
                m = (pts[a] + pts[b]) / 2
                tag = "D" if np.hypot(*m) < 1.5 or abs(m[0] - X0) < 1e-9 else "N"
                boundary.append((a, b, tag))
    out = [f"NODES {len(pts)}"]
    out += [f"{p[0]!r} {p[1]!r}" for p in pts.tolist()]
    out.append(f"ELEMENTS {len(elems)}")
    out += [f"{a} {b} {c}" for a, b, c in elems]
    out.append(f"BOUNDARY {len(boundary)}")
    out += [f"{a} {b} {t}" for a, b, t in boundary]
    print("\n".join(out))
    print(f"{len(pts)} nodes, {len(elems)} elements", file=sys.stderr)


if __name__ == "__main__":
    main()
