"""On-disk formats: images, masks, sampling patterns, structure specs,
measurement vectors, test outcomes, configs and manifests.

Images are "BUQO1 <rows> <cols>" followed by row-major little-endian
float64; masks and patterns are fully ASCII index lists; measurement
vectors interleave (re, im) float64 pairs after a "BUQOMEAS1 <m>"
header. All writers are deterministic given identical inputs.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import TestOutcome
from .operators import PixelMask, SamplingPattern

__all__ = [
    "StructureSpec",
    "read_image", "write_image",
    "read_mask", "write_mask",
    "read_pattern", "write_pattern",
    "read_measurements", "write_measurements",
    "read_structure_spec", "write_structure_spec",
    "read_outcome", "write_outcome",
    "read_config", "write_config",
    "write_manifest",
]


@dataclass
class StructureSpec:
    """Parsed structure description: kind, mask and free parameters."""

    kind: str
    mask: PixelMask
    params: dict = field(default_factory=dict)
    name: str | None = None


def _read_header_line(fh) -> str:
    chars = bytearray()
    while True:
        b = fh.read(1)
        if not b:
            raise ValueError("unexpected end of file in header")
        if b == b"\n":
            break
        chars.extend(b)
    return chars.decode("ascii")


def write_image(path, image: np.ndarray, rows: int, cols: int) -> None:
    data = np.asarray(image, dtype="<f8").ravel()
    if data.size != rows * cols:
        raise ValueError("image size does not match rows * cols")
    with open(path, "wb") as fh:
        fh.write(f"BUQO1 {rows} {cols}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_image(path) -> tuple[np.ndarray, int, int]:
    with open(path, "rb") as fh:
        header = _read_header_line(fh).split()
        if len(header) != 3 or header[0] != "BUQO1":
            raise ValueError(f"{path}: not a BUQO1 image file")
        rows, cols = int(header[1]), int(header[2])
        data = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
        if data.size != rows * cols:
            raise ValueError(f"{path}: truncated image payload")
    return data.astype(float), rows, cols


def _write_index_list(path, magic: str, rows: int, cols: int,
                      indices: np.ndarray) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{magic} {rows} {cols} {indices.size}\n")
        for idx in indices:
            fh.write(f"{int(idx)}\n")


def _read_index_list(path, magic: str) -> tuple[int, int, np.ndarray]:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != magic:
            raise ValueError(f"{path}: expected a {magic} file")
        rows, cols, n = int(header[1]), int(header[2]), int(header[3])
        indices = np.array([int(fh.readline()) for _ in range(n)],
                           dtype=np.int64)
    return rows, cols, indices


def write_mask(path, mask: PixelMask) -> None:
    _write_index_list(path, "BUQOMASK1", mask.rows, mask.cols, mask.indices)


def read_mask(path) -> PixelMask:
    rows, cols, indices = _read_index_list(path, "BUQOMASK1")
    return PixelMask(rows, cols, indices)


def write_pattern(path, pattern: SamplingPattern) -> None:
    _write_index_list(path, "BUQOFREQ1", pattern.rows, pattern.cols,
                      pattern.indices)


def read_pattern(path) -> SamplingPattern:
    rows, cols, indices = _read_index_list(path, "BUQOFREQ1")
    return SamplingPattern(rows, cols, indices)


def write_measurements(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=complex).ravel()
    inter = np.empty(2 * data.size, dtype="<f8")
    inter[0::2] = data.real
    inter[1::2] = data.imag
    with open(path, "wb") as fh:
        fh.write(f"BUQOMEAS1 {data.size}\n".encode("ascii"))
        fh.write(inter.tobytes())


def read_measurements(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = _read_header_line(fh).split()
        if len(header) != 2 or header[0] != "BUQOMEAS1":
            raise ValueError(f"{path}: not a BUQOMEAS1 file")
        m = int(header[1])
        inter = np.frombuffer(fh.read(16 * m), dtype="<f8")
        if inter.size != 2 * m:
            raise ValueError(f"{path}: truncated measurement payload")
    return inter[0::2] + 1j * inter[1::2]


def _format_param(value) -> str:
    if isinstance(value, (tuple, list, np.ndarray)):
        return ",".join(_format_param(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_param(key: str, raw: str):
    if key == "kernel_sizes":
        return tuple(int(v) for v in raw.split(","))
    if key == "dilation_radius":
        return int(raw)
    return float(raw)


def write_structure_spec(path, spec: StructureSpec) -> None:
    mask = spec.mask
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"BUQOSTRUCT1 {spec.kind}\n")
        fh.write(f"BUQOMASK1 {mask.rows} {mask.cols} {mask.n_selected}\n")
        for idx in mask.indices:
            fh.write(f"{int(idx)}\n")
        for key in sorted(spec.params):
            fh.write(f"{key}={_format_param(spec.params[key])}\n")


def read_structure_spec(path) -> StructureSpec:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "BUQOSTRUCT1":
            raise ValueError(f"{path}: not a BUQOSTRUCT1 file")
        kind = header[1]
        if kind not in ("localized", "background"):
            raise ValueError(f"{path}: unknown structure kind {kind!r}")
        mask_header = fh.readline().split()
        if len(mask_header) != 4 or mask_header[0] != "BUQOMASK1":
            raise ValueError(f"{path}: expected an embedded BUQOMASK1 block")
        rows, cols, n = (int(v) for v in mask_header[1:])
        indices = np.array([int(fh.readline()) for _ in range(n)],
                           dtype=np.int64)
        params = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, raw = line.partition("=")
            params[key.strip()] = _parse_param(key.strip(), raw.strip())
    name = Path(path).stem
    return StructureSpec(kind=kind, mask=PixelMask(rows, cols, indices),
                         params=params, name=name)


_OUTCOME_KEYS = ("rho_alpha", "distance", "decision", "alpha", "eta",
                 "iterations", "stop_reason")


def write_outcome(path, outcome: TestOutcome) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"rho_alpha = {outcome.rho_alpha!r}\n")
        fh.write(f"distance = {outcome.distance!r}\n")
        fh.write(f"decision = {outcome.decision}\n")
        fh.write(f"alpha = {outcome.alpha!r}\n")
        fh.write(f"eta = {outcome.eta_threshold!r}\n")
        fh.write(f"iterations = {outcome.iterations}\n")
        fh.write(f"stop_reason = {outcome.stop_reason}\n")


def read_outcome(path) -> dict:
    values: dict = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key in ("decision", "stop_reason"):
                values[key] = raw
            elif key == "iterations":
                values[key] = int(raw)
            else:
                values[key] = float(raw)
    missing = [k for k in _OUTCOME_KEYS if k not in values]
    if missing:
        raise ValueError(f"{path}: outcome file missing keys {missing}")
    return values


def write_config(path, config: dict) -> None:
    """Flat dotted-key config, one ``key = value`` per line, sorted."""
    with open(path, "w", encoding="ascii") as fh:
        for key in sorted(config):
            fh.write(f"{key} = {_format_param(config[key])}\n")


def read_config(path) -> dict:
    values: dict = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            if not sep:
                raise ValueError(f"config line without '=': {line!r}")
            values[key.strip()] = raw.strip()
    return values


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, files: list[str | Path], seed: int) -> None:
    """Record the master seed and the sha256 of every emitted file."""
    base = Path(path).parent
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"seed = {seed}\n")
        for f in sorted(str(f) for f in files):
            rel = os.path.relpath(f, base)
            fh.write(f"{rel} sha256={file_sha256(f)}\n")
