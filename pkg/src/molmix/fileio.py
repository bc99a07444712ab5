"""Text file formats.

Every file opens with a version line ``# molmix-<kind> v1``.  Files with
metadata follow it with ``key: value`` lines, then a ``---`` separator, then
the body.  Floats are written with ``repr`` so they read back bit-exactly.

=========  ==========================================================
library    TSV body ``id  name  detection_mass``; header keys
           ``block_size``, ``levels``
layout     manifest keys, body one row per well of space-separated
           integer levels (one column per compound)
spectra    TSV ``well_id  mass  intensity``, rows sorted by well then mass
channel    ``key: value`` lines only, one per :class:`ChannelConfig` field
codebook   keys ``type`` (``linear`` or ``explicit``), ``n``, ``k``; body
           rows of 0/1 characters (parity-check rows or codewords)
report     see :mod:`molmix.report`
=========  ==========================================================

Images are portable bitmaps: ``P1`` (ASCII) and ``P4`` (packed) are read,
``P1`` is written.  In PBM ``1`` is black.
"""

from __future__ import annotations

import dataclasses
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import BitImage, Compound, CompoundLibrary, Manifest, PlateLayout
from .ecc import Codebook, ExplicitCodebook, LinearCode
from .specsim import ChannelConfig, Spectrum

FORMAT_VERSION = 1

_MANIFEST_KEYS = {
    "scheme": ("scheme", str),
    "M": ("library_size", int),
    "S": ("block_size", int),
    "L": ("levels", int),
    "original_bit_length": ("original_bit_length", int),
    "padding_bits": ("padding_bits", int),
    "wells": ("wells", int),
    "wells_per_plate": ("wells_per_plate", int),
    "well_pitch_mm": ("well_pitch_mm", float),
    "library": ("library_file", str),
}
_EXTRA_PREFIX = "x-"


class FormatError(ValueError):
    pass


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _version_line(kind: str) -> str:
    return f"# molmix-{kind} v{FORMAT_VERSION}\n"


def _split(text: str, kind: str, path) -> tuple[dict[str, str], list[str]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _version_line(kind).strip():
        raise FormatError(f"{path}: not a molmix {kind} v{FORMAT_VERSION} file")
    header: dict[str, str] = {}
    body: list[str] = []
    in_body = False
    for lineno, line in enumerate(lines[1:], start=2):
        if in_body:
            if line.strip():
                body.append(line)
            continue
        if line.strip() == "---":
            in_body = True
            continue
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'key: value'")
        header[key.strip()] = value.strip()
    return header, body


def _header_text(items: Iterable[tuple[str, object]]) -> str:
    return "".join(f"{k}: {v}\n" for k, v in items)


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# library


def format_library(library: CompoundLibrary) -> str:
    rows = "".join(f"{c.id}\t{c.name}\t{_fmt(c.detection_mass)}\n" for c in library.compounds)
    return (
        _version_line("library")
        + _header_text([("block_size", library.block_size), ("levels", library.levels)])
        + "---\nid\tname\tdetection_mass\n"
        + rows
    )


def write_library(path, library: CompoundLibrary) -> None:
    atomic_write(path, format_library(library))


def read_library(path) -> CompoundLibrary:
    header, body = _split(Path(path).read_text(), "library", path)
    if not body or body[0].split("\t") != ["id", "name", "detection_mass"]:
        raise FormatError(f"{path}: library table needs columns id, name, detection_mass")
    compounds = []
    for line in body[1:]:
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}: bad library row {line!r}")
        compounds.append(Compound(int(parts[0]), parts[1], float(parts[2])))
    return CompoundLibrary(
        tuple(compounds), int(header.get("block_size", 1)), int(header.get("levels", 2))
    )


# ---------------------------------------------------------------------------
# layouts and manifests


def _manifest_items(man: Manifest) -> list[tuple[str, object]]:
    items = []
    for key, (attr, _) in _MANIFEST_KEYS.items():
        value = getattr(man, attr)
        items.append((key, _fmt(value) if isinstance(value, float) else value))
    items += [(_EXTRA_PREFIX + k, v) for k, v in sorted(man.extra.items())]
    return items


def _manifest_from_header(header: dict[str, str], path) -> Manifest:
    kwargs = {}
    for key, (attr, conv) in _MANIFEST_KEYS.items():
        if key not in header:
            if key == "library":
                kwargs[attr] = ""
                continue
            raise FormatError(f"{path}: manifest is missing {key!r}")
        kwargs[attr] = conv(header[key])
    extra = {k[len(_EXTRA_PREFIX):]: v for k, v in header.items() if k.startswith(_EXTRA_PREFIX)}
    return Manifest(**kwargs, extra=extra)


def format_layout(layout: PlateLayout) -> str:
    rows = "".join(" ".join(map(str, row)) + "\n" for row in layout.wells.tolist())
    return _version_line("layout") + _header_text(_manifest_items(layout.manifest)) + "---\n" + rows


def write_layout(path, layout: PlateLayout) -> None:
    atomic_write(path, format_layout(layout))


def read_manifest(path) -> Manifest:
    header, _ = _split(Path(path).read_text(), "layout", path)
    return _manifest_from_header(header, path)


def resolve_library(manifest: Manifest, relative_to) -> CompoundLibrary:
    if not manifest.library_file:
        raise FormatError("manifest does not name a library file; pass one explicitly")
    lib_path = Path(manifest.library_file)
    if not lib_path.is_absolute():
        lib_path = Path(relative_to).parent / lib_path
    return read_library(lib_path)


def read_layout(path, library: CompoundLibrary | None = None) -> PlateLayout:
    header, body = _split(Path(path).read_text(), "layout", path)
    manifest = _manifest_from_header(header, path)
    if library is None:
        library = resolve_library(manifest, path)
    try:
        wells = np.array([[int(v) for v in line.split()] for line in body], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer level ({exc})") from None
    wells = wells.reshape(len(body), -1) if body else np.zeros((0, library.size), dtype=np.int64)
    if wells.shape != (manifest.wells, manifest.library_size):
        raise FormatError(
            f"{path}: body is {wells.shape}, manifest says {manifest.wells} x {manifest.library_size}"
        )
    if library.size != manifest.library_size:
        raise FormatError(f"{path}: library has {library.size} compounds, manifest {manifest.library_size}")
    return PlateLayout(library, wells, manifest)


# ---------------------------------------------------------------------------
# spectra


def format_spectra(spectra: Sequence[Spectrum]) -> str:
    out = [_version_line("spectra"), "well_id\tmass\tintensity\n"]
    for spec in sorted(spectra, key=lambda s: s.well_id):
        out.extend(f"{spec.well_id}\t{m!r}\t{i!r}\n" for m, i in zip(spec.masses.tolist(), spec.intensities.tolist()))
    return "".join(out)


def write_spectra(path, spectra: Sequence[Spectrum]) -> None:
    atomic_write(path, format_spectra(spectra))


def read_spectra(path, num_wells: int | None = None) -> list[Spectrum]:
    """Spectra by well id; wells with no peaks come back as empty spectra."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != _version_line("spectra").strip():
        raise FormatError(f"{path}: not a molmix spectra v{FORMAT_VERSION} file")
    if len(lines) < 2 or lines[1].split("\t") != ["well_id", "mass", "intensity"]:
        raise FormatError(f"{path}: spectra table needs columns well_id, mass, intensity")
    peaks: dict[int, tuple[list[float], list[float]]] = {}
    for line in lines[2:]:
        if not line.strip():
            continue
        w, m, i = line.split("\t")
        ms, its = peaks.setdefault(int(w), ([], []))
        ms.append(float(m))
        its.append(float(i))
    top = max(peaks, default=-1) + 1
    W = top if num_wells is None else num_wells
    if top > W:
        raise FormatError(f"{path}: spectra mention well {top - 1} beyond {W} wells")
    return [Spectrum(w, *peaks.get(w, ([], []))) for w in range(W)]


# ---------------------------------------------------------------------------
# channel config


def format_channel_config(config: ChannelConfig) -> str:
    items = []
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        items.append((f.name, _fmt(v) if isinstance(v, float) else v))
    return _version_line("channel") + _header_text(items)


def write_channel_config(path, config: ChannelConfig) -> None:
    atomic_write(path, format_channel_config(config))


def parse_channel_config(text: str, path="<channel>") -> ChannelConfig:
    header, body = _split(text, "channel", path)
    if body:
        raise FormatError(f"{path}: channel config has no body section")
    types = {f.name: f.type for f in dataclasses.fields(ChannelConfig)}
    kwargs = {}
    for key, value in header.items():
        if key not in types:
            raise FormatError(f"{path}: unknown channel setting {key!r}")
        kwargs[key] = int(value) if types[key] in ("int", int) else float(value)
    return ChannelConfig(**kwargs)


def read_channel_config(path) -> ChannelConfig:
    return parse_channel_config(Path(path).read_text(), path)


# ---------------------------------------------------------------------------
# codebooks


def format_codebook(code: Codebook) -> str:
    if isinstance(code, LinearCode):
        kind, rows = "linear", code.H
    else:
        kind, rows = "explicit", code.words
    body = "".join("".join(map(str, r)) + "\n" for r in rows.tolist())
    return (
        _version_line("codebook")
        + _header_text([("type", kind), ("name", code.name), ("n", code.n), ("k", code.k)])
        + "---\n"
        + body
    )


def write_codebook(path, code: Codebook) -> None:
    atomic_write(path, format_codebook(code))


def read_codebook(path) -> Codebook:
    header, body = _split(Path(path).read_text(), "codebook", path)
    try:
        kind, n, k = header["type"], int(header["n"]), int(header["k"])
    except KeyError as exc:
        raise FormatError(f"{path}: codebook header is missing {exc}") from None
    rows = []
    for line in body:
        s = line.strip()
        if len(s) != n or set(s) - {"0", "1"}:
            raise FormatError(f"{path}: row {s!r} is not a {n}-bit 0/1 string")
        rows.append([int(c) for c in s])
    if kind not in ("linear", "explicit"):
        raise FormatError(f"{path}: unknown codebook type {kind!r}")
    name = header.get("name", kind)
    code = LinearCode(rows, name=name) if kind == "linear" else ExplicitCodebook(rows, name=name)
    if code.k != k:
        raise FormatError(f"{path}: header says k={k}, rows give k={code.k}")
    return code


# ---------------------------------------------------------------------------
# portable bitmaps


def _pbm_tokens(data: bytes, start: int, count: int) -> tuple[list[int], int]:
    out = []
    pos = start
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace() and data[end : end + 1] != b"#":
            end += 1
        if end == pos:
            raise FormatError("truncated PBM header")
        out.append(int(data[pos:end]))
        pos = end
    return out, pos


def read_pbm(path) -> BitImage:
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P1", b"P4"):
        raise FormatError(f"{path}: not a PBM file")
    (width, height), pos = _pbm_tokens(data, 2, 2)
    if magic == b"P4":
        pos += 1  # single whitespace byte
        row_bytes = -(-width // 8)
        raw = np.frombuffer(data[pos : pos + row_bytes * height], dtype=np.uint8)
        if raw.size != row_bytes * height:
            raise FormatError(f"{path}: truncated P4 raster")
        bits = np.unpackbits(raw.reshape(height, row_bytes), axis=1)[:, :width]
        return BitImage(width, height, bits.reshape(-1))
    digits = []
    text = data[pos:]
    i = 0
    while i < len(text) and len(digits) < width * height:
        ch = text[i : i + 1]
        if ch == b"#":
            while i < len(text) and text[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if ch in (b"0", b"1"):
            digits.append(int(ch))
        elif not ch.isspace():
            raise FormatError(f"{path}: unexpected byte {ch!r} in P1 raster")
        i += 1
    if len(digits) != width * height:
        raise FormatError(f"{path}: expected {width * height} pixels, found {len(digits)}")
    return BitImage(width, height, np.array(digits, dtype=np.uint8))


def format_pbm(image: BitImage) -> str:
    rows = image.as_array().tolist()
    lines = []
    for row in rows:
        s = "".join(map(str, row))
        lines.extend(s[i : i + 70] for i in range(0, len(s), 70))
    return f"P1\n{image.width} {image.height}\n" + "\n".join(lines) + "\n"


def write_pbm(path, image: BitImage) -> None:
    atomic_write(path, format_pbm(image))


def read_bits_file(path) -> np.ndarray:
    """A text file of 0/1 characters; whitespace is ignored."""
    from .codec import as_bits

    return as_bits(Path(path).read_text())


def format_bits(bits) -> str:
    s = "".join(map(str, np.asarray(bits, dtype=np.uint8).tolist()))
    return "\n".join(s[i : i + 64] for i in range(0, len(s), 64)) + "\n"
