"""On-disk formats for scene pairs and flow estimates.

* clouds: ASCII PLY, one ``vertex`` element with ``x y z`` properties;
* flow: one ``fx fy fz`` line per point;
* mask: one ``0``/``1`` per line;
* permutation: one target index per line;
* scene manifest: JSON naming the files above, relative to the manifest.

Floats are written with 17 significant digits so that reading a file back
gives the exact same doubles. Writers produce LF line endings only.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import OtflowError, ScenePair

PathLike = Union[str, os.PathLike]

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "otflow-scene/1"

_PLY_TYPES = {"float", "float32", "double", "float64"}


class DataError(OtflowError):
    """An input file is malformed or inconsistent with its siblings."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_lines(path: PathLike):
    with open(path, "r", encoding="ascii", newline="") as fh:
        text = fh.read()
    if not text:
        return []
    return text.split("\n")[:-1] if text.endswith("\n") else text.split("\n")


def ply_text(points) -> str:
    points = np.asarray(points, dtype=np.float64)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {points.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    body = [" ".join(_fmt(v) for v in row) for row in points]
    return "\n".join(header + body) + "\n"


def write_ply(path: PathLike, points) -> None:
    atomic_write_text(path, ply_text(points))


def read_ply(path: PathLike) -> np.ndarray:
    lines = _read_lines(path)
    if not lines or lines[0].strip() != "ply":
        raise DataError(f"{path}: not a PLY file")
    count = None
    props = []
    in_vertex = False
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if tokens[1:2] != ["ascii"]:
                raise DataError(f"{path}: only ASCII PLY is supported")
        elif tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                count = int(tokens[2])
            elif int(tokens[2]) != 0:
                raise DataError(f"{path}: unsupported element {tokens[1]!r}")
        elif tokens[0] == "property":
            if in_vertex:
                if tokens[1] not in _PLY_TYPES:
                    raise DataError(f"{path}: unsupported property type {tokens[1]!r}")
                props.append(tokens[2])
        elif tokens[0] == "end_header":
            body_start = i + 1
            break
        else:
            raise DataError(f"{path}: unexpected header line {line!r}")
    if body_start is None or count is None:
        raise DataError(f"{path}: incomplete PLY header")
    if not {"x", "y", "z"} <= set(props):
        raise DataError(f"{path}: vertex element lacks x, y, z")
    rows = lines[body_start:body_start + count]
    if len(rows) != count:
        raise DataError(f"{path}: expected {count} vertices, found {len(rows)}")
    cols = [props.index(c) for c in ("x", "y", "z")]
    try:
        data = np.array([[float(t) for t in r.split()] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.size == 0:
        data = data.reshape(0, len(props))
    if data.ndim != 2 or data.shape[1] != len(props):
        raise DataError(f"{path}: ragged vertex rows")
    return data[:, cols]


def flow_text(flow) -> str:
    flow = np.asarray(flow, dtype=np.float64)
    return "".join(" ".join(_fmt(v) for v in row) + "\n" for row in flow)


def write_flow(path: PathLike, flow) -> None:
    atomic_write_text(path, flow_text(flow))


def read_flow(path: PathLike) -> np.ndarray:
    rows = _read_lines(path)
    try:
        data = [[float(t) for t in r.split()] for r in rows]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if any(len(r) != 3 for r in data):
        raise DataError(f"{path}: every flow line needs three values")
    return np.array(data, dtype=np.float64).reshape(len(data), 3)


def mask_text(mask) -> str:
    return "".join("1\n" if flag else "0\n" for flag in np.asarray(mask, dtype=bool))


def write_mask(path: PathLike, mask) -> None:
    atomic_write_text(path, mask_text(mask))


def read_mask(path: PathLike) -> np.ndarray:
    rows = [r.strip() for r in _read_lines(path)]
    if any(r not in ("0", "1") for r in rows):
        raise DataError(f"{path}: mask lines must be 0 or 1")
    return np.array([r == "1" for r in rows], dtype=bool)


def write_permutation(path: PathLike, perm) -> None:
    atomic_write_text(path, "".join(f"{int(j)}\n" for j in perm))


def read_permutation(path: PathLike) -> np.ndarray:
    try:
        return np.array([int(r) for r in _read_lines(path)], dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_scene(pair: ScenePair, directory: PathLike, meta: Optional[dict] = None) -> Path:
    """Write the four (or five) scene files plus a manifest; return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": MANIFEST_FORMAT,
        "n": pair.n,
        "source": "source.ply",
        "target": "target.ply",
        "flow": "flow.txt",
        "mask": "mask.txt",
        "permutation": None,
        "meta": meta or {},
    }
    write_ply(directory / "source.ply", pair.source)
    write_ply(directory / "target.ply", pair.target)
    write_flow(directory / "flow.txt", pair.truth)
    write_mask(directory / "mask.txt", pair.mask)
    if pair.permutation is not None:
        manifest["permutation"] = "permutation.txt"
        write_permutation(directory / "permutation.txt", pair.permutation)
    path = directory / MANIFEST_NAME
    atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")
    return path


def read_manifest(path: PathLike) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(manifest, dict) or manifest.get("format") != MANIFEST_FORMAT:
        raise DataError(f"{path}: not a scene manifest")
    for key in ("source", "target", "flow", "mask"):
        if not isinstance(manifest.get(key), str):
            raise DataError(f"{path}: manifest lacks {key!r}")
    return manifest


def read_scene(path: PathLike) -> ScenePair:
    """Load a scene pair from its manifest."""
    path = Path(path)
    manifest = read_manifest(path)
    base = path.parent
    perm = manifest.get("permutation")
    try:
        return ScenePair(
            read_ply(base / manifest["source"]),
            read_ply(base / manifest["target"]),
            read_flow(base / manifest["flow"]),
            read_mask(base / manifest["mask"]),
            None if perm is None else read_permutation(base / perm),
        )
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def load_schema(name: str) -> dict:
    """Return one of the shipped JSON schemas, e.g. ``load_schema("eval_report")``."""
    from importlib.resources import files

    text = files("otflow").joinpath("schemas", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)
