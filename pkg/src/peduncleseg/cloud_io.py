"""Labelled point cloud and dataset manifest I/O.

Cloud files are ASCII with a two-line header::

    FIELDS x y z r g b [label]
    POINTS <n>

followed by ``n`` whitespace-separated data rows.  A header may instead
declare a single ``rgb`` field holding the packed-float colour convention
(the 32-bit pattern of the float is ``0x00RRGGBB``), which is decoded to
three integer channels on read.  Manifests are one CSV-ish line per scene:
``<path>,<scene_id>,<trip:1|2>,<colour:red|green|mixed>``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

UNLABELLED = -1


class PointLabel(IntEnum):
    """Per-point class. Serialized labelled values are exactly 0 or 1."""

    PEPPER = 0
    PEDUNCLE = 1
    UNLABELLED = -1


class CloudFormatError(ValueError):
    """Malformed cloud file; message carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ManifestError(ValueError):
    pass


@dataclass
class PointCloud:
    """Ordered, index-addressable points with colour and optional labels.

    xyz is (N, 3) float64 metres, rgb is (N, 3) uint8 channels, labels is
    (N,) int8 with values 0 (pepper body), 1 (peduncle) or -1 (unlabelled).
    """

    xyz: np.ndarray
    rgb: np.ndarray
    labels: np.ndarray
    frame_id: str = ""

    def __post_init__(self):
        self.xyz = np.ascontiguousarray(self.xyz, dtype=np.float64)
        self.rgb = np.ascontiguousarray(self.rgb, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int8)
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise ValueError(f"xyz must be (N, 3), got {self.xyz.shape}")
        if self.rgb.shape != self.xyz.shape:
            raise ValueError("rgb shape must match xyz")
        if self.labels.shape != (len(self.xyz),):
            raise ValueError("labels length must match point count")
        if not np.all(np.isfinite(self.xyz)):
            raise ValueError("coordinates must be finite")

    def __len__(self):
        return len(self.xyz)

    @property
    def has_labels(self):
        return bool(np.any(self.labels != UNLABELLED))

    def select(self, index):
        """Subset by boolean mask or index array, preserving order."""
        return PointCloud(self.xyz[index], self.rgb[index], self.labels[index],
                          self.frame_id)

    def with_labels(self, labels):
        return replace(self, labels=np.asarray(labels, dtype=np.int8))


PepperColour = ("red", "green", "mixed")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    scene_id: str
    trip: int
    colour: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    base_dir: Path | None = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        """Absolute path of an entry; relative paths hang off base_dir."""
        p = Path(entry.path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p


def _split_header(line, lineno, keyword):
    parts = line.split()
    if not parts or parts[0] != keyword:
        raise CloudFormatError(f"expected {keyword!r} header, got {line.strip()!r}",
                               lineno)
    return parts[1:]


def _decode_packed_rgb(values):
    # PCL packs colour into a float whose bit pattern is 0x00RRGGBB.
    bits = np.asarray(values, dtype=np.float32).view(np.uint32)
    r = (bits >> 16) & 0xFF
    g = (bits >> 8) & 0xFF
    b = bits & 0xFF
    return np.stack([r, g, b], axis=1).astype(np.int64)


def read_cloud(path) -> PointCloud:
    """Parse an ASCII cloud file.

    Raises CloudFormatError (with line number) on malformed headers,
    non-numeric fields, out-of-range channels, wrong row arity, bad labels
    or an empty cloud.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2:
        raise CloudFormatError("missing FIELDS/POINTS header", 1)

    fields = _split_header(lines[0], 1, "FIELDS")
    packed = fields[:4] == ["x", "y", "z", "rgb"]
    plain = fields[:6] == ["x", "y", "z", "r", "g", "b"]
    ncols = 4 if packed else 6
    if not (packed or plain):
        raise CloudFormatError(f"unsupported field layout {fields!r}", 1)
    rest = fields[ncols:]
    if rest not in ([], ["label"]):
        raise CloudFormatError(f"unsupported field layout {fields!r}", 1)
    has_label = rest == ["label"]
    ncols += int(has_label)

    count_parts = _split_header(lines[1], 2, "POINTS")
    try:
        (count_str,) = count_parts
        npoints = int(count_str)
    except ValueError:
        raise CloudFormatError(f"POINTS header needs a single integer count, "
                               f"got {lines[1].strip()!r}", 2) from None
    if npoints <= 0:
        raise CloudFormatError("cloud must contain at least one point", 2)

    data_lines = [l for l in lines[2:] if l.strip()]
    if len(data_lines) != npoints:
        raise CloudFormatError(
            f"POINTS declares {npoints} rows but file has {len(data_lines)}", 2)

    rows = np.empty((npoints, ncols), dtype=np.float64)
    for i, line in enumerate(data_lines):
        lineno = i + 3
        parts = line.split()
        if len(parts) != ncols:
            raise CloudFormatError(
                f"expected {ncols} columns, got {len(parts)}", lineno)
        try:
            rows[i] = [float(p) for p in parts]
        except ValueError:
            raise CloudFormatError(f"non-numeric field in {line.strip()!r}",
                                   lineno) from None

    xyz = rows[:, :3]
    if not np.all(np.isfinite(xyz)):
        bad = int(np.argwhere(~np.isfinite(xyz).all(axis=1))[0, 0])
        raise CloudFormatError("non-finite coordinate", bad + 3)

    if packed:
        rgb = _decode_packed_rgb(rows[:, 3])
    else:
        rgb = rows[:, 3:6]
        if np.any(rgb != np.floor(rgb)):
            bad = int(np.argwhere((rgb != np.floor(rgb)).any(axis=1))[0, 0])
            raise CloudFormatError("colour channel is not an integer", bad + 3)
        rgb = rgb.astype(np.int64)
    if np.any((rgb < 0) | (rgb > 255)):
        bad = int(np.argwhere(((rgb < 0) | (rgb > 255)).any(axis=1))[0, 0])
        raise CloudFormatError("colour channel out of [0, 255]", bad + 3)

    if has_label:
        lab = rows[:, -1]
        ok = np.isin(lab, (0.0, 1.0))
        if not np.all(ok):
            bad = int(np.argwhere(~ok)[0, 0])
            raise CloudFormatError(f"label must be 0 or 1, got {lab[bad]!r}", bad + 3)
        labels = lab.astype(np.int8)
    else:
        labels = np.full(npoints, UNLABELLED, dtype=np.int8)

    return PointCloud(xyz, rgb.astype(np.uint8), labels, frame_id=path.stem)


def write_cloud(cloud: PointCloud, path) -> None:
    """Write a cloud so that read_cloud reproduces it exactly.

    Coordinates are written with Python's shortest round-trip float
    representation, so the read-back values are bit-identical.
    """
    if len(cloud) == 0:
        raise ValueError("refusing to write an empty cloud")
    labelled = cloud.has_labels
    if labelled and np.any(cloud.labels == UNLABELLED):
        raise ValueError("cloud mixes labelled and unlabelled points")
    fields = "x y z r g b label" if labelled else "x y z r g b"
    lines = [f"FIELDS {fields}", f"POINTS {len(cloud)}"]
    for i in range(len(cloud)):
        x, y, z = (float(v) for v in cloud.xyz[i])
        r, g, b = (int(v) for v in cloud.rgb[i])
        row = f"{x!r} {y!r} {z!r} {r} {g} {b}"
        if labelled:
            row += f" {int(cloud.labels[i])}"
        lines.append(row)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_manifest(path) -> DatasetManifest:
    """Parse a dataset manifest; entries keep file order."""
    path = Path(path)
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ManifestError(
                    f"{path}:{lineno}: expected 4 comma-separated fields, got {len(parts)}")
            fpath, scene_id, trip_str, colour = parts
            if fpath in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate path {fpath!r}")
            seen.add(fpath)
            if trip_str not in ("1", "2"):
                raise ManifestError(f"{path}:{lineno}: trip must be 1 or 2, got {trip_str!r}")
            if colour not in PepperColour:
                raise ManifestError(
                    f"{path}:{lineno}: unknown colour tag {colour!r} (expected red/green/mixed)")
            entries.append(ManifestEntry(fpath, scene_id, int(trip_str), colour))
    if not entries:
        raise ManifestError(f"{path}: manifest has no entries")
    return DatasetManifest(entries, base_dir=path.parent)


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [f"{e.path},{e.scene_id},{e.trip},{e.colour}" for e in manifest.entries]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
