"""Bitstreams to plate layouts and back.

Two schemes are supported:

``dense``
    every compound of every well carries ``log2(L)`` bits through its
    concentration level (presence/absence when ``L == 2``).
``sparse``
    the library is cut into blocks of ``S`` consecutive compounds and each
    block holds exactly one present compound, whose index within the block
    carries ``log2(S)`` bits.

Bits are taken in library order: the first bits of a well go to compound 0
(dense) or block 0 (sparse), multi-bit values are big-endian.  The last well
is padded with zeros (level 0, block index 0) and the pad length is kept in
the manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

DEFAULT_WELLS_PER_PLATE = 1536
DEFAULT_WELL_PITCH_MM = 2.25


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class Compound:
    id: int
    name: str
    detection_mass: float


@dataclass(frozen=True)
class CompoundLibrary:
    compounds: tuple[Compound, ...]
    block_size: int = 1
    levels: int = 2

    def __post_init__(self):
        object.__setattr__(self, "compounds", tuple(self.compounds))
        ids = [c.id for c in self.compounds]
        if not ids:
            raise CodecError("library is empty")
        if ids != list(range(len(ids))):
            raise CodecError("compound ids must be 0..M-1 in order")
        masses = [c.detection_mass for c in self.compounds]
        if len(set(masses)) != len(masses):
            raise CodecError("detection masses must be pairwise distinct")
        if self.block_size < 1 or len(ids) % self.block_size:
            raise CodecError(f"block size {self.block_size} does not divide M={len(ids)}")
        if self.levels < 2:
            raise CodecError("levels must be >= 2")

    @property
    def size(self) -> int:
        return len(self.compounds)

    @property
    def masses(self) -> np.ndarray:
        return np.array([c.detection_mass for c in self.compounds], dtype=np.float64)

    @classmethod
    def synthetic(
        cls,
        size: int,
        block_size: int = 1,
        levels: int = 2,
        base_mass: float = 180.0,
        spacing: float = 1.7,
    ) -> "CompoundLibrary":
        """Evenly spaced made-up compounds, handy for simulations."""
        compounds = tuple(
            Compound(i, f"cmp{i:03d}", round(base_mass + spacing * i + 0.0137 * (i % 7), 4))
            for i in range(size)
        )
        return cls(compounds, block_size, levels)


@dataclass
class Manifest:
    scheme: str
    library_size: int
    block_size: int
    levels: int
    original_bit_length: int
    padding_bits: int
    wells: int
    wells_per_plate: int = DEFAULT_WELLS_PER_PLATE
    well_pitch_mm: float = DEFAULT_WELL_PITCH_MM
    library_file: str = ""
    extra: dict[str, str] = field(default_factory=dict)

    @property
    def bits_per_well(self) -> int:
        return bits_per_well(self.scheme, self.library_size, self.block_size, self.levels)


@dataclass
class PlateLayout:
    library: CompoundLibrary
    wells: np.ndarray  # (W, M) integer levels
    manifest: Manifest

    def __post_init__(self):
        self.wells = np.asarray(self.wells, dtype=np.int64)
        if self.wells.ndim != 2 or self.wells.shape[1] != self.library.size:
            raise CodecError(
                f"well matrix shape {self.wells.shape} does not match M={self.library.size}"
            )

    @property
    def num_wells(self) -> int:
        return self.wells.shape[0]

    def same_shape(self, other: "PlateLayout") -> bool:
        return self.wells.shape == other.wells.shape

    def with_wells(self, wells: np.ndarray) -> "PlateLayout":
        return PlateLayout(self.library, np.asarray(wells), replace(self.manifest))


@dataclass(frozen=True)
class BitImage:
    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        bits = as_bits(self.bits)
        if self.width < 1 or self.height < 1:
            raise CodecError("image dimensions must be positive")
        if bits.size != self.width * self.height:
            raise CodecError(
                f"{bits.size} bits do not fill a {self.width}x{self.height} image"
            )
        object.__setattr__(self, "bits", bits)

    def as_array(self) -> np.ndarray:
        return self.bits.reshape(self.height, self.width)


def as_bits(bits: Iterable[int] | str | np.ndarray) -> np.ndarray:
    """Coerce a 0/1 sequence (or a string such as ``"1010"``) to a uint8 array."""
    if isinstance(bits, str):
        s = "".join(bits.split())
        if set(s) - {"0", "1"}:
            raise CodecError("bit strings may only contain 0 and 1")
        return np.frombuffer(s.encode(), dtype=np.uint8) - ord("0")
    arr = np.asarray(bits)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise CodecError("bit vectors may only contain 0 and 1")
    return arr.astype(np.uint8).ravel()


def bits_to_str(bits: Sequence[int]) -> str:
    return "".join("1" if b else "0" for b in bits)


def _log2_exact(n: int, what: str) -> int:
    if n < 1 or n & (n - 1):
        raise CodecError(f"{what}={n} is not a power of two")
    return n.bit_length() - 1


def bits_per_well(scheme: str, M: int, S: int, L: int) -> int:
    if scheme == "dense":
        return M * _log2_exact(L, "L")
    if scheme == "sparse":
        if S == 1:
            raise CodecError("sparse coding with S=1 carries no information")
        return (M // S) * _log2_exact(S, "S")
    raise CodecError(f"unknown scheme {scheme!r}")


def _pack_values(bits: np.ndarray, width: int) -> np.ndarray:
    """Big-endian groups of ``width`` bits to integers."""
    groups = bits.reshape(-1, width).astype(np.int64)
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    return groups @ weights


def _unpack_values(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def _pad(bits: np.ndarray, per_well: int) -> tuple[np.ndarray, int]:
    if bits.size == 0:
        raise CodecError("cannot encode an empty bitstream")
    wells = -(-bits.size // per_well)
    padding = wells * per_well - bits.size
    return np.concatenate([bits, np.zeros(padding, dtype=np.uint8)]), padding


def encode_dense(
    bits, library: CompoundLibrary, L: int | None = None, library_file: str = ""
) -> PlateLayout:
    """Each compound's level in each well encodes ``log2(L)`` bits."""
    L = library.levels if L is None else L
    bits = as_bits(bits)
    width = _log2_exact(L, "L")
    per_well = library.size * width
    padded, padding = _pad(bits, per_well)
    levels = _pack_values(padded, width).reshape(-1, library.size)
    manifest = Manifest(
        "dense", library.size, library.block_size, L, int(bits.size), padding,
        levels.shape[0], library_file=library_file,
    )
    return PlateLayout(library, levels, manifest)


def decode_dense(layout: PlateLayout) -> np.ndarray:
    man = layout.manifest
    if man.scheme != "dense":
        raise CodecError(f"manifest scheme is {man.scheme!r}, expected 'dense'")
    width = _log2_exact(man.levels, "L")
    if layout.wells.min(initial=0) < 0 or layout.wells.max(initial=0) >= man.levels:
        raise CodecError("well levels outside 0..L-1")
    bits = _unpack_values(layout.wells.reshape(-1), width)
    return bits[: man.original_bit_length]


def encode_sparse(bits, library: CompoundLibrary, library_file: str = "") -> PlateLayout:
    """One-hot within each block of ``S`` compounds, ``log2(S)`` bits per block."""
    S = library.block_size
    if S == 1:
        raise CodecError("sparse coding with S=1 carries no information")
    width = _log2_exact(S, "S")
    bits = as_bits(bits)
    blocks = library.size // S
    padded, padding = _pad(bits, blocks * width)
    index = _pack_values(padded, width).reshape(-1, blocks)
    wells = np.zeros((index.shape[0], library.size), dtype=np.int64)
    cols = index + np.arange(blocks) * S
    np.put_along_axis(wells, cols, 1, axis=1)
    manifest = Manifest(
        "sparse", library.size, S, library.levels, int(bits.size), padding,
        wells.shape[0], library_file=library_file,
    )
    return PlateLayout(library, wells, manifest)


def block_indices(layout: PlateLayout) -> np.ndarray:
    """(W, M/S) selected index per block; raises on any non-one-hot block."""
    S = layout.manifest.block_size
    W = layout.num_wells
    blocks = layout.wells.reshape(W, -1, S)
    nonzero = blocks != 0
    counts = nonzero.sum(axis=2)
    bad = np.argwhere((counts != 1) | (blocks.max(axis=2) != 1))
    if bad.size:
        well, block = (int(v) for v in bad[0])
        raise CodecError(f"well {well} block {block} is not one-hot")
    return nonzero.argmax(axis=2)


def decode_sparse(layout: PlateLayout) -> np.ndarray:
    man = layout.manifest
    if man.scheme != "sparse":
        raise CodecError(f"manifest scheme is {man.scheme!r}, expected 'sparse'")
    width = _log2_exact(man.block_size, "S")
    bits = _unpack_values(block_indices(layout).reshape(-1), width)
    return bits[: man.original_bit_length]


def encode(bits, library: CompoundLibrary, scheme: str, library_file: str = "") -> PlateLayout:
    if scheme == "dense":
        return encode_dense(bits, library, library_file=library_file)
    if scheme == "sparse":
        return encode_sparse(bits, library, library_file=library_file)
    raise CodecError(f"unknown scheme {scheme!r}")


def decode(layout: PlateLayout) -> np.ndarray:
    if layout.manifest.scheme == "dense":
        return decode_dense(layout)
    return decode_sparse(layout)


def image_to_bits(image: BitImage) -> np.ndarray:
    return image.bits.copy()


def bits_to_image(bits, width: int, height: int) -> BitImage:
    return BitImage(width, height, as_bits(bits))
