"""Scan file formats: KITTI-style ``.bin`` and ASCII PCD."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from lidarodom.errors import ParseError
from lidarodom.lidar_model import PointCloud


def read_bin(path: str | os.PathLike) -> PointCloud:
    """Read little-endian float32 ``x y z intensity`` quadruples."""
    path = Path(path)
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 4:
        raise ParseError(f"size {raw.size * 4} bytes is not a multiple of 16", path=path)
    raw = raw.reshape(-1, 4).astype(float)
    if not np.all(np.isfinite(raw[:, :3])):
        raise ParseError("non-finite coordinates", path=path)
    return PointCloud(raw[:, :3], intensity=raw[:, 3])


def write_bin(path: str | os.PathLike, cloud: PointCloud) -> None:
    out = np.zeros((len(cloud), 4), dtype="<f4")
    out[:, :3] = cloud.points
    if cloud.intensity is not None:
        out[:, 3] = cloud.intensity
    out.tofile(Path(path))


def read_pcd(path: str | os.PathLike) -> PointCloud:
    """Read an ASCII PCD with ``FIELDS x y z [intensity] [ring]`` (any order)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    header = {}
    data_start = None
    for n, line in enumerate(lines):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        header[key.upper()] = rest.split()
        if key.upper() == "DATA":
            if rest.strip().lower() != "ascii":
                raise ParseError(f"only ASCII PCD is supported, got DATA {rest.strip()}", n + 1, path)
            data_start = n + 1
            break
    if data_start is None:
        raise ParseError("missing DATA line", path=path)
    names = [f.lower() for f in header.get("FIELDS", [])]
    for axis in "xyz":
        if axis not in names:
            raise ParseError(f"FIELDS lacks {axis!r}", path=path)
    rows = []
    for n in range(data_start, len(lines)):
        parts = lines[n].split()
        if not parts:
            continue
        if len(parts) != len(names):
            raise ParseError(f"expected {len(names)} values, got {len(parts)}", n + 1, path)
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise ParseError("non-numeric value", n + 1, path) from None
    arr = np.array(rows, dtype=float).reshape(-1, len(names))
    col = {name: i for i, name in enumerate(names)}
    pts = arr[:, [col["x"], col["y"], col["z"]]]
    if not np.all(np.isfinite(pts)):
        raise ParseError("non-finite coordinates", path=path)
    ring = arr[:, col["ring"]].astype(np.int64) if "ring" in col else None
    intensity = arr[:, col["intensity"]] if "intensity" in col else None
    return PointCloud(pts, ring=ring, intensity=intensity)


def write_pcd(path: str | os.PathLike, points: np.ndarray, intensity=None, ring=None) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    names, cols = ["x", "y", "z"], [points]
    types, sizes = ["F", "F", "F"], ["4", "4", "4"]
    if intensity is not None:
        names.append("intensity")
        cols.append(np.asarray(intensity, dtype=float).reshape(-1, 1))
        types.append("F")
        sizes.append("4")
    if ring is not None:
        names.append("ring")
        cols.append(np.asarray(ring).reshape(-1, 1))
        types.append("U")
        sizes.append("2")
    n = len(points)
    header = [
        "# .PCD v0.7 - Point Cloud Data file format",
        "VERSION 0.7",
        "FIELDS " + " ".join(names),
        "SIZE " + " ".join(sizes),
        "TYPE " + " ".join(types),
        "COUNT " + " ".join("1" for _ in names),
        f"WIDTH {n}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {n}",
        "DATA ascii",
    ]
    body = []
    for i in range(n):
        vals = [repr(float(v)) for v in points[i]]
        k = 1
        if intensity is not None:
            vals.append(repr(float(cols[k][i, 0])))
            k += 1
        if ring is not None:
            vals.append(str(int(cols[k][i, 0])))
        body.append(" ".join(vals))
    Path(path).write_text("\n".join(header + body) + "\n")


def read_scan(path: str | os.PathLike) -> PointCloud:
    path = Path(path)
    if path.suffix.lower() == ".pcd":
        return read_pcd(path)
    return read_bin(path)


def write_pgm(path: str | os.PathLike, mask: np.ndarray) -> None:
    """Binary PGM (P5), 0 = false, 255 = true. Row 0 of the mask is written last (top = highest ring)."""
    img = np.where(np.asarray(mask, dtype=bool)[::-1], 255, 0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ParseError("not a binary PGM", path=path)
    w, h = int(parts[1]), int(parts[2])
    pix = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
    return pix[::-1] > 127
