"""Block codes over mixture bits, with hard-decision GRAND decoding.

GRAND (guessing random additive noise decoding) walks through noise
patterns from most to least likely and stops at the first one that turns
the received word into a codeword.  For a binary symmetric channel with
flip probability below one half that order is non-decreasing Hamming
weight; ties are broken by the lexicographic order of the flipped
positions, so ``(0, 1)`` comes before ``(0, 2)`` before ``(1, 2)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

# Systematic Hamming(7,4): codeword = data (4 bits) followed by parity (3 bits).
HAMMING74_P = np.array(
    [
        [1, 1, 0],
        [1, 0, 1],
        [0, 1, 1],
        [1, 1, 1],
    ],
    dtype=np.uint8,
)
HAMMING74_G = np.hstack([np.eye(4, dtype=np.uint8), HAMMING74_P])
HAMMING74_H = np.hstack([HAMMING74_P.T, np.eye(3, dtype=np.uint8)])


class EccError(ValueError):
    pass


# ---------------------------------------------------------------------------
# GF(2) linear algebra


def gf2_rref(matrix: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2) and its pivot columns."""
    a = np.array(matrix, dtype=np.uint8) % 2
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.nonzero(a[r:, c])[0]
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        others = np.nonzero(a[:, c])[0]
        others = others[others != r]
        a[others] ^= a[r]
        pivots.append(c)
        r += 1
    return a[:r], pivots


def gf2_rank(matrix: np.ndarray) -> int:
    return len(gf2_rref(matrix)[1])


def gf2_nullspace(matrix: np.ndarray) -> np.ndarray:
    """Basis (as rows) of ``{x : matrix @ x = 0 mod 2}``."""
    rref, pivots = gf2_rref(matrix)
    n = np.asarray(matrix).shape[1]
    free = [c for c in range(n) if c not in pivots]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for row, p in enumerate(pivots):
            basis[i, p] = rref[row, f]
    return basis


# ---------------------------------------------------------------------------
# codebooks


class Codebook:
    """Interface shared by explicit and linear codebooks."""

    n: int
    k: int
    name: str

    @property
    def size(self) -> int:
        return 1 << self.k

    @property
    def rate(self) -> float:
        return self.k / self.n

    def contains(self, word) -> bool:
        raise NotImplementedError

    def encode(self, data: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def extract(self, codeword: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def codewords(self) -> np.ndarray:
        """All codewords, row ``i`` encoding data value ``i``."""
        data = np.array(list(itertools.product((0, 1), repeat=self.k)), dtype=np.uint8)
        return self.encode(data)


class LinearCode(Codebook):
    """Binary linear code given by its parity-check matrix."""

    def __init__(self, parity_check, name: str = "linear"):
        H = np.array(parity_check, dtype=np.uint8) % 2
        if H.ndim != 2:
            raise EccError("parity-check matrix must be 2-D")
        self.H = H
        self.n = H.shape[1]
        if self.n > 32:
            raise EccError("codes longer than 32 bits are not supported")
        self.k = self.n - gf2_rank(H)
        if self.k < 1:
            raise EccError("parity-check matrix leaves no codewords besides zero")
        G, info = gf2_rref(gf2_nullspace(H))
        # G has an identity at the information positions, so data = codeword[info]
        self.G = G
        self.info_positions = np.array(info)
        self.name = name
        self._col_masks = [int("".join(map(str, H[:, j])), 2) for j in range(self.n)]

    @classmethod
    def hamming74(cls) -> "LinearCode":
        return cls(HAMMING74_H, name="hamming74")

    @classmethod
    def random(cls, n: int, k: int, seed: int = 0) -> "LinearCode":
        """Random full-rank ``(n - k) x n`` parity-check matrix."""
        rng = np.random.default_rng(seed)
        while True:
            H = rng.integers(0, 2, size=(n - k, n), dtype=np.uint8)
            if gf2_rank(H) == n - k:
                return cls(H, name=f"random{n}_{k}")

    def syndrome(self, words: np.ndarray) -> np.ndarray:
        """Syndromes packed into integers, shape ``words.shape[:-1]``."""
        words = np.asarray(words, dtype=np.int64)
        s = (words @ self.H.T.astype(np.int64)) % 2
        weights = 1 << np.arange(s.shape[-1] - 1, -1, -1, dtype=np.int64)
        return s @ weights

    def pattern_syndrome(self, positions: Sequence[int]) -> int:
        s = 0
        for j in positions:
            s ^= self._col_masks[j]
        return s

    def contains(self, word) -> bool:
        word = np.asarray(word, dtype=np.int64)
        return not ((self.H.astype(np.int64) @ word) % 2).any()

    def encode(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.int64)
        return ((data @ self.G.astype(np.int64)) % 2).astype(np.uint8)

    def extract(self, codeword: np.ndarray) -> np.ndarray:
        return np.asarray(codeword, dtype=np.uint8)[..., self.info_positions]



class ExplicitCodebook(Codebook):
    """A listed set of codewords; data value ``i`` maps to the ``i``-th sorted word."""

    def __init__(self, codewords, name: str = "explicit"):
        words = np.array(codewords, dtype=np.uint8)
        if words.ndim != 2:
            raise EccError("codewords must form a 2-D array")
        keys = sorted({tuple(int(b) for b in w) for w in words})
        if len(keys) != len(words):
            raise EccError("codewords must be distinct")
        size = len(keys)
        if size < 2 or size & (size - 1):
            raise EccError("explicit codebooks need a power-of-two number (>= 2) of words")
        self.words = np.array(keys, dtype=np.uint8)
        self.n = self.words.shape[1]
        self.k = size.bit_length() - 1
        self.name = name
        self._index = {k: i for i, k in enumerate(keys)}

    def contains(self, word) -> bool:
        return tuple(int(b) for b in word) in self._index

    def encode(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.int64)
        weights = 1 << np.arange(self.k - 1, -1, -1)
        return self.words[data @ weights]

    def extract(self, codeword: np.ndarray) -> np.ndarray:
        idx = self._index.get(tuple(int(b) for b in codeword))
        if idx is None:
            raise EccError("word is not in the codebook")
        return np.array([(idx >> s) & 1 for s in range(self.k - 1, -1, -1)], dtype=np.uint8)


# ---------------------------------------------------------------------------
# GRAND


@dataclass(frozen=True)
class NoiseGuessOrder:
    """Noise patterns of length ``n`` by weight, then lexicographic flip positions."""

    n: int
    max_weight: int | None = None
    budget: int | None = None

    def __post_init__(self):
        if self.budget is not None and self.budget < 1:
            raise EccError("guess budget must be >= 1")

    @classmethod
    def default(cls, n: int) -> "NoiseGuessOrder":
        return cls(n, max_weight=3 if n <= 16 else 2)

    def positions(self) -> Iterator[tuple[int, ...]]:
        top = self.n if self.max_weight is None else min(self.max_weight, self.n)
        produced = 0
        for w in range(top + 1):
            for flips in itertools.combinations(range(self.n), w):
                if self.budget is not None and produced >= self.budget:
                    return
                produced += 1
                yield flips

    def __iter__(self) -> Iterator[np.ndarray]:
        for flips in self.positions():
            e = np.zeros(self.n, dtype=np.uint8)
            e[list(flips)] = 1
            yield e

    def __len__(self) -> int:
        top = self.n if self.max_weight is None else min(self.max_weight, self.n)
        total = sum(math.comb(self.n, w) for w in range(top + 1))
        return total if self.budget is None else min(total, self.budget)


@dataclass(frozen=True)
class GrandResult:
    codeword: np.ndarray | None
    guesses: int
    abandoned: bool = False


def grand_decode(received, codebook: Codebook, order: NoiseGuessOrder | None = None) -> GrandResult:
    """First ``received ^ noise`` in guessing order that is a codeword."""
    received = np.asarray(received, dtype=np.uint8)
    if received.shape != (codebook.n,):
        raise EccError(f"received word must have length {codebook.n}")
    order = order or NoiseGuessOrder.default(codebook.n)
    guesses = 0
    for noise in order:
        guesses += 1
        candidate = received ^ noise
        if codebook.contains(candidate):
            return GrandResult(candidate, guesses)
    return GrandResult(None, guesses, abandoned=True)


class SyndromeGuessTable:
    """GRAND for a linear code, precomputed over all received syndromes.

    ``r ^ e`` is a codeword exactly when ``e`` has the syndrome of ``r``, so
    the first pattern in guessing order with each syndrome is all GRAND ever
    needs; batches then decode by table lookup.
    """

    def __init__(self, code: LinearCode, order: NoiseGuessOrder | None = None):
        self.code = code
        self.order = order or NoiseGuessOrder.default(code.n)
        n_syn = 1 << code.H.shape[0]
        self.pattern = np.zeros((n_syn, code.n), dtype=np.uint8)
        self.guesses = np.zeros(n_syn, dtype=np.int64)  # 0 marks abandonment
        found = 0
        for i, flips in enumerate(self.order.positions(), start=1):
            s = code.pattern_syndrome(flips)
            if self.guesses[s] == 0:
                self.guesses[s] = i
                self.pattern[s, list(flips)] = 1
                found += 1
                if found == n_syn:
                    break
        self.exhausted_guesses = len(self.order)

    def decode(self, received: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (codewords, guesses used, abandoned mask) for ``(..., n)`` words."""
        received = np.asarray(received, dtype=np.uint8)
        s = self.code.syndrome(received)
        guesses = self.guesses[s]
        abandoned = guesses == 0
        words = received ^ self.pattern[s]
        guesses = np.where(abandoned, self.exhausted_guesses, guesses)
        return words, guesses, abandoned


# ---------------------------------------------------------------------------
# Hamming(7,4)


def hamming_encode(data) -> np.ndarray:
    """4 data bits (or ``(..., 4)``) to systematic 7-bit codewords."""
    data = np.asarray(data, dtype=np.int64)
    if data.shape[-1] != 4:
        raise EccError("Hamming(7,4) encodes 4 bits at a time")
    return ((data @ HAMMING74_G.astype(np.int64)) % 2).astype(np.uint8)


_H74_COLUMN_LOOKUP = np.full(8, -1, dtype=np.int64)
for _j in range(7):
    _H74_COLUMN_LOOKUP[int("".join(map(str, HAMMING74_H[:, _j])), 2)] = _j


def hamming_syndrome_decode(word) -> np.ndarray:
    """Nearest-codeword data bits for 7-bit words (or ``(..., 7)``)."""
    word = np.array(word, dtype=np.uint8)
    if word.shape[-1] != 7:
        raise EccError("Hamming(7,4) decodes 7 bits at a time")
    s = (word.astype(np.int64) @ HAMMING74_H.T.astype(np.int64)) % 2
    syn = s @ np.array([4, 2, 1])
    pos = _H74_COLUMN_LOOKUP[syn]
    flat = word.reshape(-1, 7)
    pflat = np.asarray(pos).reshape(-1)
    hit = pflat >= 0
    flat[np.nonzero(hit)[0], pflat[hit]] ^= 1
    return flat.reshape(word.shape)[..., :4]


# ---------------------------------------------------------------------------
# rate bound and the coding pipeline


def rate_admissible(codebook_size: int, n: int, capacity_per_use: float) -> bool:
    """True when ``log2|c| / N_c`` is strictly below the per-use capacity."""
    if n < 1 or codebook_size < 1:
        raise EccError("need n >= 1 and |c| >= 1")
    return math.log2(codebook_size) / n < capacity_per_use


def interleave(bits: np.ndarray, stride: int) -> np.ndarray:
    """Read ``bits`` at positions 0, stride, 2*stride, ..., 1, 1+stride, ..."""
    return bits[_stride_order(bits.size, stride)]


def deinterleave(bits: np.ndarray, stride: int) -> np.ndarray:
    out = np.empty_like(bits)
    out[_stride_order(bits.size, stride)] = bits
    return out


def _stride_order(n: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise EccError("stride must be >= 1")
    idx = np.arange(n)
    return np.lexsort((idx // stride, idx % stride))


@dataclass
class EccStats:
    blocks: int = 0
    abandoned: int = 0
    guess_histogram: dict[int, int] = field(default_factory=dict)


def ecc_encode_bits(bits, code: Codebook, stride: int = 1) -> np.ndarray:
    """Chunk into ``k``-bit blocks (zero-padded), encode, optionally interleave."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    blocks = -(-bits.size // code.k)
    padded = np.zeros(blocks * code.k, dtype=np.uint8)
    padded[: bits.size] = bits
    coded = code.encode(padded.reshape(blocks, code.k)).reshape(-1)
    return interleave(coded, stride)


def ecc_decode_bits(
    coded,
    code: Codebook,
    payload_length: int,
    stride: int = 1,
    order: NoiseGuessOrder | None = None,
) -> tuple[np.ndarray, EccStats]:
    """Undo :func:`ecc_encode_bits` through GRAND, returning payload and stats.

    Abandoned blocks fall back to the received bits at the information
    positions (linear codes) or to zeros (explicit codebooks).
    """
    coded = deinterleave(np.asarray(coded, dtype=np.uint8).ravel(), stride)
    if coded.size % code.n:
        raise EccError(f"coded length {coded.size} is not a multiple of n={code.n}")
    words = coded.reshape(-1, code.n)
    stats = EccStats(blocks=words.shape[0])
    if isinstance(code, LinearCode):
        decoded, guesses, abandoned = SyndromeGuessTable(code, order).decode(words)
        decoded = np.where(abandoned[:, None], words, decoded)
        data = code.extract(decoded)
        stats.abandoned = int(abandoned.sum())
    else:
        data = np.zeros((words.shape[0], code.k), dtype=np.uint8)
        guesses = np.zeros(words.shape[0], dtype=np.int64)
        for i, w in enumerate(words):
            res = grand_decode(w, code, order)
            guesses[i] = res.guesses
            if res.abandoned:
                stats.abandoned += 1
            else:
                data[i] = code.extract(res.codeword)
    values, counts = np.unique(guesses, return_counts=True)
    stats.guess_histogram = {int(v): int(c) for v, c in zip(values, counts)}
    return data.reshape(-1)[:payload_length], stats


def code_from_name(name: str) -> LinearCode:
    presets = {"hamming74": LinearCode.hamming74}
    try:
        return presets[name]()
    except KeyError:
        raise EccError(f"unknown code preset {name!r}") from None


def apply_ecc_pipeline(
    bits, code: Codebook, library, scheme: str, stride: int = 1, library_file: str = ""
):
    """Encode payload bits through ``code`` and then onto a plate layout.

    The manifest records the code so :func:`invert_ecc_pipeline` can undo
    both stages; ``original_bit_length`` counts coded bits.
    """
    from .codec import as_bits, encode

    payload = as_bits(bits)
    if payload.size == 0:
        raise EccError("cannot encode an empty bitstream")
    coded = ecc_encode_bits(payload, code, stride)
    layout = encode(coded, library, scheme, library_file=library_file)
    layout.manifest.extra.update(
        ecc_code=code.name,
        ecc_n=str(code.n),
        ecc_k=str(code.k),
        ecc_stride=str(stride),
        payload_bit_length=str(payload.size),
    )
    return layout


def check_code_matches(manifest, code: Codebook) -> None:
    extra = manifest.extra
    if "ecc_n" not in extra:
        raise EccError("layout was not written with an error-correcting code")
    if int(extra["ecc_n"]) != code.n or int(extra["ecc_k"]) != code.k:
        raise EccError(
            f"layout used a ({extra['ecc_n']},{extra['ecc_k']}) code, got ({code.n},{code.k})"
        )


def invert_ecc_pipeline(
    layout, code: Codebook, order: NoiseGuessOrder | None = None
) -> tuple[np.ndarray, EccStats]:
    """Mixture states back to payload bits via GRAND."""
    from .codec import decode

    check_code_matches(layout.manifest, code)
    extra = layout.manifest.extra
    coded = decode(layout)
    return ecc_decode_bits(
        coded, code, int(extra["payload_bit_length"]), int(extra.get("ecc_stride", 1)), order
    )
