"""File formats: layouts, efficiency tables, fields, traces, configs and
result bundles.  All quantities are SI."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import TelegraphTrace
from .lens import (EfficiencyTable, LayoutTable, LensPrescription, assign_partition,
                   lattice_coordinates)
from .propagation import FocalStack, SampledField
from .tweezer import AtomSpecies

SCHEMA = "metatweezer.result/1"
LAYOUT_HEADER = ["x_m", "y_m", "class", "theta_rad", "len_m", "wid_m"]
TABLE_HEADER = ["lambda_m", "eff_class1", "eff_class2"]
TRACE_HEADER = ["bin_index", "t_start_s", "counts"]


class ConfigError(ValueError):
    """Invalid or unknown configuration keys."""


class InputError(ValueError):
    """Input file violates its schema."""


# ------------------------------------------------------------------ configs


PRESCRIPTION_KEYS = {
    "focal_length_m": "focal_length",
    "diameter_m": "diameter",
    "lambda1_m": "lambda1",
    "lambda2_m": "lambda2",
    "pitch_m": "pitch",
    "illumination": "illumination",
    "gauss_radius_m": "gauss_radius",
    "substrate_m": "substrate_size",
    "centered_site": "centered_site",
}

SPECIES_KEYS = {
    "mass_kg": "mass",
    "d1_lambda_m": "d1_wavelength",
    "d2_lambda_m": "d2_wavelength",
    "d1_gamma_rad_s": "d1_gamma",
    "d2_gamma_rad_s": "d2_gamma",
    "isat_W_m2": "saturation_intensity",
    "name": "name",
}


def check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def merge_config(section: str, defaults: dict, given: dict | None) -> dict:
    """Overlay ``given`` on ``defaults``, rejecting keys not in ``defaults``."""
    given = given or {}
    check_keys(section, given, defaults)
    out = dict(defaults)
    for key, value in given.items():
        if isinstance(defaults[key], dict) and isinstance(value, dict) and defaults[key]:
            out[key] = merge_config(f"{section}.{key}", defaults[key], value)
        else:
            out[key] = value
    return out


def prescription_from_dict(d: dict) -> LensPrescription:
    check_keys("prescription", d, PRESCRIPTION_KEYS)
    for key in ("focal_length_m", "diameter_m"):
        if key not in d:
            raise ConfigError(f"prescription is missing {key}")
    kwargs = {PRESCRIPTION_KEYS[k]: v for k, v in d.items() if v is not None}
    try:
        return LensPrescription(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid prescription: {exc}") from exc


def prescription_to_dict(pr: LensPrescription) -> dict:
    inverse = {v: k for k, v in PRESCRIPTION_KEYS.items()}
    return {inverse[k]: v for k, v in asdict(pr).items()}


def species_from_dict(d: dict) -> AtomSpecies:
    check_keys("species", d, SPECIES_KEYS)
    kwargs = {SPECIES_KEYS[k]: v for k, v in d.items()}
    kwargs.setdefault("name", "custom")
    try:
        return AtomSpecies(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid species: {exc}") from exc


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    return cfg


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def config_hash(config: dict, seed: int | None) -> str:
    return hashlib.sha256(canonical_json({"config": config, "seed": seed}).encode()).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path: str | Path, obj: Any) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default, allow_nan=True)
        fh.write("\n")


@dataclass
class ResultBundle:
    command: str
    config: dict
    seed: int | None
    payload: dict
    provenance: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "command": self.command,
            "config": self.config,
            "config_sha256": config_hash(self.config, self.seed),
            "seed": self.seed,
            "payload": self.payload,
            "provenance": self.provenance,
        }

    def write(self, path: str | Path) -> None:
        write_json(path, self.as_dict())


# ------------------------------------------------------------------ layouts


def write_layout_csv(layout: LayoutTable, path: str | Path) -> None:
    data = np.column_stack([layout.x, layout.y, layout.cls, layout.theta,
                            layout.length, layout.width])
    np.savetxt(path, data, fmt=["%.9g", "%.9g", "%d", "%.9g", "%.9g", "%.9g"],
               delimiter=",", header=",".join(LAYOUT_HEADER), comments="")


def read_layout_csv(path: str | Path, prescription: LensPrescription) -> LayoutTable:
    """Rebuild a layout table; lattice indices are recovered from positions."""
    rows = _read_csv(path, LAYOUT_HEADER)
    if not rows:
        raise InputError(f"{path}: no bricks")
    arr = np.array([[float(v) for v in r[1]] for r in rows])
    x, y, cls, theta = arr[:, 0], arr[:, 1], arr[:, 2].astype(np.int8), arr[:, 3]
    idx, coords = lattice_coordinates(prescription)
    col = np.rint((x - coords[0]) / prescription.pitch).astype(np.int64)
    row = np.rint((y - coords[0]) / prescription.pitch).astype(np.int64)
    bad = (col < 0) | (col >= len(idx)) | (row < 0) | (row >= len(idx))
    bad |= np.abs(coords[np.clip(col, 0, len(idx) - 1)] - x) > 1e-3 * prescription.pitch
    if np.any(bad):
        line = rows[int(np.argmax(bad))][0]
        raise InputError(f"{path}:{line}: brick is off the prescribed lattice")
    if np.any((cls != 1) & (cls != 2)):
        line = rows[int(np.argmax((cls != 1) & (cls != 2)))][0]
        raise InputError(f"{path}:{line}: class must be 1 or 2")
    return LayoutTable(prescription, x, y, cls, theta, row, col,
                       "checkerboard" if np.array_equal(cls, assign_partition(idx[row], idx[col]))
                       else "custom")


def write_efficiency_csv(table: EfficiencyTable, path: str | Path) -> None:
    data = np.column_stack([table.wavelengths, table.class1, table.class2])
    np.savetxt(path, data, fmt="%.9g", delimiter=",", header=",".join(TABLE_HEADER), comments="")


def read_efficiency_csv(path: str | Path) -> EfficiencyTable:
    rows = _read_csv(path, TABLE_HEADER)
    arr = np.array([[float(v) for v in r[1]] for r in rows])
    try:
        return EfficiencyTable(arr[:, 0], arr[:, 1], arr[:, 2])
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _read_csv(path, header) -> list[tuple[int, list[str]]]:
    try:
        fh = open(path, newline="")
    except FileNotFoundError as exc:
        raise InputError(f"input file not found: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if [h.strip() for h in first] != header:
            raise InputError(f"{path}:1: expected header {','.join(header)}")
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} columns, got {len(rec)}")
            for v in rec:
                try:
                    float(v)
                except ValueError:
                    raise InputError(f"{path}:{line}: not a number: {v!r}") from None
            rows.append((line, rec))
    return rows


# ------------------------------------------------------------------- fields


def write_field(f: SampledField, path: str | Path) -> None:
    """Raw little-endian (re, im) float64 pairs, row-major, plus JSON sidecar."""
    path = Path(path)
    np.ascontiguousarray(f.amplitude, dtype="<c16").tofile(path)
    ny, nx = f.shape
    write_json(path.with_suffix(".json"), {
        "nx": nx, "ny": ny, "pitch_m": f.pitch, "lambda_m": f.wavelength, "z_m": f.z,
        "x0_m": f.x0, "y0_m": f.y0, "dtype": "complex128-le",
    })


def read_field(path: str | Path) -> SampledField:
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    a = np.fromfile(path, dtype="<c16")
    if a.size != meta["nx"] * meta["ny"]:
        raise InputError(f"{path}: expected {meta['nx'] * meta['ny']} samples, found {a.size}")
    return SampledField(a.reshape(meta["ny"], meta["nx"]), meta["pitch_m"], meta["lambda_m"],
                        meta["z_m"], meta.get("x0_m"), meta.get("y0_m"))


def write_axial_csv(stack: FocalStack, path: str | Path) -> None:
    np.savetxt(path, np.column_stack([stack.z, stack.on_axis_intensity]), fmt="%.9g",
               delimiter=",", header="z_m,on_axis_intensity", comments="")


def write_radial_csv(r, intensity, path: str | Path) -> None:
    np.savetxt(path, np.column_stack([r, intensity]), fmt="%.9g", delimiter=",",
               header="r_m,intensity", comments="")


# ------------------------------------------------------------------- traces


def write_trace(trace: TelegraphTrace, path: str | Path) -> None:
    path = Path(path)
    i = np.arange(len(trace.counts))
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for k, t, c in zip(i, trace.t_start, trace.counts):
            fh.write(f"{k},{t:.9g},{c}\n")
    write_json(path.with_suffix(".json"), {
        "prep_s": trace.prep, "probe_s": trace.probe, "bin_s": trace.bin_width,
        "seed": trace.seed, "source": trace.source,
    })


def read_trace(path: str | Path, bin_width: float | None = None, prep: float | None = None,
               probe: float | None = None) -> TelegraphTrace:
    """Load and validate a trace CSV; the sidecar supplies cycle metadata."""
    path = Path(path)
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        with open(side) as fh:
            meta = json.load(fh)
    bin_width = bin_width or meta.get("bin_s")
    prep = prep if prep is not None else meta.get("prep_s", 2.0)
    probe = probe if probe is not None else meta.get("probe_s", 2.0)
    if bin_width is None:
        raise InputError(f"{path}: bin width unknown (no sidecar and no --bin)")
    rows = _read_csv(path, TRACE_HEADER)
    counts = []
    for expect, (line, rec) in enumerate(rows):
        idx, count = rec[0], rec[2]
        if float(idx) != expect:
            raise InputError(f"{path}:{line}: bin_index {idx} out of sequence (expected {expect})")
        c = float(count)
        if c < 0:
            raise InputError(f"{path}:{line}: negative count {count}")
        if c != int(c):
            raise InputError(f"{path}:{line}: count {count} is not an integer")
        counts.append(int(c))
    try:
        return TelegraphTrace(np.array(counts, dtype=np.int64), bin_width, prep, probe,
                              meta.get("seed"), "ingested")
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def read_points(path: str | Path) -> np.ndarray:
    """Two numeric columns with a header row of any names."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except FileNotFoundError as exc:
        raise InputError(f"input file not found: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 2:
            raise InputError(f"{path}:1: expected a two-column header")
        out = []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise InputError(f"{path}:{line}: expected 2 columns, got {len(rec)}")
            try:
                out.append([float(rec[0]), float(rec[1])])
            except ValueError:
                raise InputError(f"{path}:{line}: non-numeric value") from None
    if not out:
        raise InputError(f"{path}: no data rows")
    return np.array(out)


def write_points(points, path: str | Path, header=("x", "y")) -> None:
    np.savetxt(path, np.asarray(points), fmt="%.12g", delimiter=",", header=",".join(header),
               comments="")
