"""Simulated mass-spectrometry readout of plate layouts, and its decoders.

Every library compound shows up as one sodiated peak per well.  Peak
heights are log-normal: a compound present at level ``l`` draws from the
"on" distribution with its median scaled by ``l / (L - 1)``, an absent one
from the "off" (background) distribution.  A median of zero means the peak
is never there.  Each well draws from its own random stream keyed on
``(rng_seed, stream, well_id)``, so any split of wells across workers gives
identical spectra.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize, special, stats

from .codec import (
    CodecError,
    CompoundLibrary,
    Manifest,
    PlateLayout,
    decode_dense,
    decode_sparse,
)

SODIUM_SHIFT = 21.981944  # Na+ in place of H+: 22.989218 - 1.007276
DATA_STREAM = 0
CALIBRATION_STREAM = 1
_GAIN_STREAM = 0x6A1


class ChannelPreconditionError(ValueError):
    """The library cannot be resolved at the configured mass tolerance."""


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    """Noise model of the simulated readout.

    ``*_mean`` values are median peak intensities in counts (the log-normal
    ``exp(mu)``); ``*_sigma`` are standard deviations of the natural log.
    ``compound_gain_sigma`` spreads per-compound ionisation efficiency: each
    compound's "on" median is multiplied by a fixed log-normal gain drawn
    from the seed.
    """

    intensity_on_mean: float = 1.0e6
    intensity_on_sigma: float = 0.35
    intensity_off_mean: float = 1.0e5
    intensity_off_sigma: float = 0.35
    mass_tolerance_ppm: float = 5.0
    sodiation_mass_shift: float = SODIUM_SHIFT
    rng_seed: int = 0
    dropout_probability: float = 0.0
    compound_gain_sigma: float = 0.0
    mass_jitter_ppm: float = 0.0

    def __post_init__(self):
        for name in ("intensity_on_sigma", "intensity_off_sigma", "compound_gain_sigma", "mass_jitter_ppm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.intensity_on_mean < 0 or self.intensity_off_mean < 0:
            raise ValueError("intensity medians must be non-negative")
        if self.mass_tolerance_ppm <= 0:
            raise ValueError("mass_tolerance_ppm must be positive")
        if not 0.0 <= self.dropout_probability <= 1.0:
            raise ValueError("dropout_probability must lie in [0, 1]")

    def with_seed(self, seed: int) -> "ChannelConfig":
        return replace(self, rng_seed=int(seed))

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def log_gap(self) -> float:
        """Natural-log separation of the on and off medians."""
        return math.log(self.intensity_on_mean) - math.log(self.intensity_off_mean)


def zero_noise(seed: int = 0) -> ChannelConfig:
    """On peaks of exactly 1, no background, no dropout."""
    return ChannelConfig(1.0, 0.0, 0.0, 0.0, rng_seed=seed)


def dense_operating_point(
    target_ber: float = 6.5e-4, sigma: float = 0.35, on_mean: float = 1.0e6, seed: int = 0
) -> ChannelConfig:
    """Equal-width on/off classes whose overlap at the midpoint equals ``target_ber``.

    With both log-intensity classes Gaussian of width ``sigma`` the error
    of the midpoint threshold is ``Phi(-gap / (2 sigma))``.
    """
    z = float(stats.norm.isf(target_ber))
    gap = 2.0 * z * sigma
    return ChannelConfig(on_mean, sigma, on_mean * math.exp(-gap), sigma, rng_seed=seed)


def sparse_block_error(gap: float, sigma_on: float, sigma_off: float, S: int, gain_sigma: float = 0.0) -> float:
    """Probability that the present compound is not the block's maximum.

    Log-intensities: present ~ N(gap + g, sigma_on) with g ~ N(0, gain_sigma),
    each of the ``S - 1`` absent ~ N(0, sigma_off).
    """
    if sigma_off == 0:
        raise ValueError("sigma_off must be positive")
    nodes, weights = special.roots_hermitenorm(96)
    weights = weights / weights.sum()
    shifts = gap + gain_sigma * nodes if gain_sigma > 0 else np.array([gap])
    shift_w = weights if gain_sigma > 0 else np.ones(1)
    x = shifts[:, None] + sigma_on * nodes[None, :]
    hit = special.ndtr(x / sigma_off) ** (S - 1)
    correct = hit @ weights
    return float(1.0 - shift_w @ correct)


def sparse_bit_error(block_error: float, S: int) -> float:
    """Bit error rate of a sparse block decoder given its block error rate.

    A wrong pick is uniform over the other ``S - 1`` indices, which differ
    from the true one in ``log2(S) * (S/2) / (S - 1)`` bits on average.
    """
    return block_error * (S / 2) / (S - 1)


def sparse_operating_point(
    target_accuracy: float = 0.946,
    S: int = 16,
    sigma: float = 0.5,
    gain_sigma: float = 0.6,
    on_mean: float = 1.0e6,
    seed: int = 0,
) -> ChannelConfig:
    """Gap between on and off medians giving ``target_accuracy`` after block decoding."""
    target = 1.0 - target_accuracy

    def excess(gap: float) -> float:
        return sparse_bit_error(sparse_block_error(gap, sigma, sigma, S, gain_sigma), S) - target

    gap = optimize.brentq(excess, 0.0, 40.0 * max(sigma, 0.1), xtol=1e-10)
    return ChannelConfig(
        on_mean, sigma, on_mean * math.exp(-gap), sigma,
        rng_seed=seed, compound_gain_sigma=gain_sigma,
    )


PRESETS = {
    "zero-noise": zero_noise,
    "dense-operating-point": dense_operating_point,
    "sparse-operating-point": sparse_operating_point,
}


@dataclass
class Spectrum:
    well_id: int
    masses: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=np.float64)
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        if self.masses.shape != self.intensities.shape:
            raise ValueError("masses and intensities differ in length")
        if self.masses.size > 1 and not (np.diff(self.masses) > 0).all():
            raise ValueError(f"well {self.well_id}: masses must be strictly increasing")
        if (self.intensities < 0).any():
            raise ValueError(f"well {self.well_id}: negative intensity")

    @property
    def peaks(self) -> list[tuple[float, float]]:
        return list(zip(self.masses.tolist(), self.intensities.tolist()))


# ---------------------------------------------------------------------------
# simulation


def check_mass_separation(library: CompoundLibrary, config: ChannelConfig) -> None:
    targets = np.sort(library.masses + config.sodiation_mass_shift)
    if targets.size < 2:
        return
    window = targets * config.mass_tolerance_ppm * 1e-6
    gaps = np.diff(targets)
    bad = np.nonzero(gaps <= 2.0 * window[1:])[0]
    if bad.size:
        i = int(bad[0])
        raise ChannelPreconditionError(
            f"sodiated masses {targets[i]:.6f} and {targets[i + 1]:.6f} collide at "
            f"{config.mass_tolerance_ppm} ppm"
        )


def compound_gains(library_size: int, config: ChannelConfig) -> np.ndarray:
    if config.compound_gain_sigma == 0:
        return np.ones(library_size)
    rng = np.random.default_rng([config.rng_seed, _GAIN_STREAM])
    return np.exp(config.compound_gain_sigma * rng.standard_normal(library_size))


def _lognormal(median: float, sigma: float, z: np.ndarray) -> np.ndarray:
    if median == 0:
        return np.zeros_like(z)
    return median * np.exp(sigma * z)


def _simulate_well(
    well_id: int,
    levels: np.ndarray,
    L: int,
    targets: np.ndarray,
    on_medians: np.ndarray,
    config: ChannelConfig,
    stream: int,
) -> Spectrum:
    rng = np.random.default_rng([config.rng_seed, stream, well_id])
    M = levels.size
    z_on = rng.standard_normal(M)
    z_off = rng.standard_normal(M)
    drop = rng.random(M) < config.dropout_probability
    jitter = rng.standard_normal(M)

    off = _lognormal(config.intensity_off_mean, config.intensity_off_sigma, z_off)
    scale = levels / (L - 1)
    on = on_medians * scale * np.exp(config.intensity_on_sigma * z_on)
    present = (levels > 0) & ~drop
    intensity = np.where(present, on, off)
    masses = targets * (1.0 + config.mass_jitter_ppm * 1e-6 * jitter)
    keep = intensity > 0
    order = np.argsort(masses[keep], kind="stable")
    return Spectrum(well_id, masses[keep][order], intensity[keep][order])


def simulate_readout(
    layout: PlateLayout,
    config: ChannelConfig,
    *,
    stream: int = DATA_STREAM,
    workers: int = 1,
) -> list[Spectrum]:
    """One spectrum per well, in well order."""
    library = layout.library
    check_mass_separation(library, config)
    targets = library.masses + config.sodiation_mass_shift
    on_medians = config.intensity_on_mean * compound_gains(library.size, config)
    L = layout.manifest.levels

    def run(rows: range) -> list[Spectrum]:
        return [
            _simulate_well(w, layout.wells[w], L, targets, on_medians, config, stream)
            for w in rows
        ]

    W = layout.num_wells
    if workers <= 1 or W < 2:
        return run(range(W))
    step = -(-W // workers)
    chunks = [range(s, min(s + step, W)) for s in range(0, W, step)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, chunks))
    return [s for part in parts for s in part]


# ---------------------------------------------------------------------------
# peak matching


def extract_intensities(
    spectra: Sequence[Spectrum],
    library: CompoundLibrary,
    num_wells: int | None = None,
    *,
    mass_shift: float = SODIUM_SHIFT,
    tolerance_ppm: float = 5.0,
) -> np.ndarray:
    """``(W, M)`` intensity of the nearest peak within tolerance, 0 if none."""
    W = num_wells if num_wells is not None else len(spectra)
    targets = library.masses + mass_shift
    tol = targets * tolerance_ppm * 1e-6
    out = np.zeros((W, library.size))
    for spec in spectra:
        if not 0 <= spec.well_id < W:
            raise ValueError(f"spectrum for well {spec.well_id} outside plate of {W} wells")
        if spec.masses.size == 0:
            continue
        idx = np.searchsorted(spec.masses, targets)
        lo = np.clip(idx - 1, 0, spec.masses.size - 1)
        hi = np.clip(idx, 0, spec.masses.size - 1)
        d_lo = np.abs(spec.masses[lo] - targets)
        d_hi = np.abs(spec.masses[hi] - targets)
        nearest = np.where(d_hi < d_lo, hi, lo)
        dist = np.minimum(d_lo, d_hi)
        out[spec.well_id] = np.where(dist <= tol, spec.intensities[nearest], 0.0)
    return out


def log_intensity(x: np.ndarray) -> np.ndarray:
    return np.log1p(x)


# ---------------------------------------------------------------------------
# Fisher classifier


class FisherSplit(NamedTuple):
    weight: float
    threshold: float
    degenerate: bool


def fisher_threshold(x0: np.ndarray, x1: np.ndarray) -> FisherSplit:
    """1-D Fisher discriminant between two samples.

    The weight is ``(mu1 - mu0) / (s0^2 + s1^2)``.  The threshold sits where
    the two class means are equally many standard deviations away, which is
    the plain midpoint for equal spreads and leans toward the tighter class
    otherwise.  With no spread at all the midpoint is used and the split is
    flagged ``degenerate``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.size == 0 or x1.size == 0:
        raise CalibrationError("calibration needs examples of both classes")
    mu0, mu1 = x0.mean(), x1.mean()
    s0, s1 = x0.std(), x1.std()
    if mu0 == mu1:
        raise CalibrationError("classes have identical means; no separating threshold")
    pooled = s0**2 + s1**2
    if pooled == 0:
        return FisherSplit(math.copysign(1.0, mu1 - mu0), 0.5 * (mu0 + mu1), True)
    w = (mu1 - mu0) / pooled
    t = (mu0 * s1 + mu1 * s0) / (s0 + s1)
    return FisherSplit(float(w), float(t), False)


@dataclass
class IntensityClassifier:
    """Per-compound thresholds on log-intensity between consecutive levels.

    ``weights`` and ``thresholds`` have shape ``(M, L - 1)``; a compound's
    level is the number of boundaries it clears.
    """

    weights: np.ndarray
    thresholds: np.ndarray
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        self.thresholds = np.atleast_2d(np.asarray(self.thresholds, dtype=np.float64))
        if not np.isfinite(self.thresholds).all():
            raise CalibrationError("thresholds must be finite")
        if self.degenerate is None:
            self.degenerate = np.zeros(self.thresholds.shape, dtype=bool)

    @property
    def levels(self) -> int:
        return self.thresholds.shape[1] + 1

    def predict(self, intensities: np.ndarray) -> np.ndarray:
        x = log_intensity(np.asarray(intensities, dtype=np.float64))
        above = self.weights[None] * x[..., None] > self.weights[None] * self.thresholds[None]
        return above.sum(axis=-1)


MIN_CALIBRATION_EXAMPLES = 10


def fit_classifier_from_intensities(intensities: np.ndarray, truth: np.ndarray, L: int = 2) -> IntensityClassifier:
    intensities = np.asarray(intensities, dtype=np.float64)
    truth = np.asarray(truth)
    M = intensities.shape[1]
    x = log_intensity(intensities)
    weights = np.zeros((M, L - 1))
    thresholds = np.zeros((M, L - 1))
    degenerate = np.zeros((M, L - 1), dtype=bool)
    for i in range(M):
        for lvl in range(L - 1):
            lo = x[truth[:, i] == lvl, i]
            hi = x[truth[:, i] == lvl + 1, i]
            if min(lo.size, hi.size) < MIN_CALIBRATION_EXAMPLES:
                raise CalibrationError(
                    f"compound {i}: need >= {MIN_CALIBRATION_EXAMPLES} calibration wells at "
                    f"levels {lvl} and {lvl + 1}, have {lo.size} and {hi.size}"
                )
            split = fisher_threshold(lo, hi)
            weights[i, lvl], thresholds[i, lvl], degenerate[i, lvl] = split
    return IntensityClassifier(weights, thresholds, degenerate)


def fit_classifier(
    spectra: Sequence[Spectrum],
    truth: PlateLayout,
    *,
    mass_shift: float = SODIUM_SHIFT,
    tolerance_ppm: float = 5.0,
) -> IntensityClassifier:
    """Fit per-compound thresholds on labelled calibration wells."""
    x = extract_intensities(
        spectra, truth.library, truth.num_wells, mass_shift=mass_shift, tolerance_ppm=tolerance_ppm
    )
    return fit_classifier_from_intensities(x, truth.wells, truth.manifest.levels)


def calibration_layout(library: CompoundLibrary, scheme: str, wells: int = 400, seed: int = 0) -> PlateLayout:
    """Known wells for fitting: every compound sees each level equally often.

    Dense: each compound's column is a shuffled repeat of ``0..L-1``.
    Sparse: each block cycles through its ``S`` indices in shuffled order.
    """
    rng = np.random.default_rng([seed, CALIBRATION_STREAM])
    M, S, L = library.size, library.block_size, library.levels
    if scheme == "dense":
        col = np.arange(wells) % L
        grid = np.stack([rng.permutation(col) for _ in range(M)], axis=1)
    elif scheme == "sparse":
        grid = np.zeros((wells, M), dtype=np.int64)
        for b in range(M // S):
            idx = rng.permutation(np.arange(wells) % S)
            grid[np.arange(wells), b * S + idx] = 1
    else:
        raise CodecError(f"unknown scheme {scheme!r}")
    manifest = Manifest(scheme, M, S, L, 0, 0, wells)
    manifest.extra["role"] = "calibration"
    return PlateLayout(library, grid, manifest)


def background_from_calibration(
    spectra: Sequence[Spectrum],
    truth: PlateLayout,
    *,
    mass_shift: float = SODIUM_SHIFT,
    tolerance_ppm: float = 5.0,
) -> np.ndarray:
    """Mean intensity of each compound over calibration wells where it is absent."""
    x = extract_intensities(
        spectra, truth.library, truth.num_wells, mass_shift=mass_shift, tolerance_ppm=tolerance_ppm
    )
    absent = truth.wells == 0
    counts = absent.sum(axis=0)
    if (counts == 0).any():
        raise CalibrationError("every compound needs absent calibration wells")
    return (x * absent).sum(axis=0) / counts


# ---------------------------------------------------------------------------
# decoding


class Decoded(NamedTuple):
    layout: PlateLayout
    bits: np.ndarray
    diagnostics: dict


def _template(library: CompoundLibrary, manifest: Manifest, wells: np.ndarray) -> PlateLayout:
    return PlateLayout(library, wells, replace(manifest, extra=dict(manifest.extra)))


def decode_dense_spectra(
    spectra: Sequence[Spectrum],
    classifier: IntensityClassifier,
    library: CompoundLibrary,
    manifest: Manifest,
    *,
    mass_shift: float = SODIUM_SHIFT,
    tolerance_ppm: float = 5.0,
) -> Decoded:
    if manifest.scheme != "dense":
        raise CodecError(f"manifest scheme is {manifest.scheme!r}, expected 'dense'")
    x = extract_intensities(
        spectra, library, manifest.wells, mass_shift=mass_shift, tolerance_ppm=tolerance_ppm
    )
    wells = classifier.predict(x)
    layout = _template(library, manifest, wells)
    missing = int((x == 0).sum())
    return Decoded(layout, decode_dense(layout), {"missing_peaks": missing})


def decode_sparse_spectra(
    spectra: Sequence[Spectrum],
    library: CompoundLibrary,
    manifest: Manifest,
    background: np.ndarray | None = None,
    *,
    mass_shift: float = SODIUM_SHIFT,
    tolerance_ppm: float = 5.0,
) -> Decoded:
    """Pick, in every block, the compound with the largest background-normalised signal.

    ``background`` is each compound's mean intensity when absent (see
    :func:`background_from_calibration`); without it the per-compound
    median over the plate stands in, since a compound is absent from all
    but ``1/S`` of the wells.  Ties go to the lowest compound id.
    """
    if manifest.scheme != "sparse":
        raise CodecError(f"manifest scheme is {manifest.scheme!r}, expected 'sparse'")
    S = manifest.block_size
    x = extract_intensities(
        spectra, library, manifest.wells, mass_shift=mass_shift, tolerance_ppm=tolerance_ppm
    )
    if background is None:
        background = np.median(x, axis=0)
    background = np.asarray(background, dtype=np.float64)
    positive = background[background > 0]
    floor = positive.min() * 1e-6 if positive.size else 1.0
    snr = x / np.maximum(background, floor)
    blocks = snr.reshape(x.shape[0], -1, S)
    pick = blocks.argmax(axis=2)  # first maximum, i.e. lowest id
    empty = int((blocks.max(axis=2) == 0).sum())
    wells = np.zeros_like(x, dtype=np.int64)
    cols = pick + np.arange(blocks.shape[1]) * S
    np.put_along_axis(wells, cols, 1, axis=1)
    layout = _template(library, manifest, wells)
    return Decoded(layout, decode_sparse(layout), {"empty_blocks": empty})


def decode_spectra(
    spectra: Sequence[Spectrum],
    library: CompoundLibrary,
    manifest: Manifest,
    config: ChannelConfig,
    calibration: PlateLayout | None = None,
    calibration_spectra: Sequence[Spectrum] | None = None,
) -> Decoded:
    """Decode a plate with the scheme named in its manifest.

    Dense plates need labelled calibration wells for the classifier.  Sparse
    plates use them for the background if given.
    """
    match = dict(mass_shift=config.sodiation_mass_shift, tolerance_ppm=config.mass_tolerance_ppm)
    have_cal = calibration is not None and calibration_spectra is not None
    if manifest.scheme == "dense":
        if not have_cal:
            raise CalibrationError("dense decoding needs calibration wells and their spectra")
        clf = fit_classifier(calibration_spectra, calibration, **match)
        return decode_dense_spectra(spectra, clf, library, manifest, **match)
    background = background_from_calibration(calibration_spectra, calibration, **match) if have_cal else None
    return decode_sparse_spectra(spectra, library, manifest, background, **match)


def run_channel(
    layout: PlateLayout, config: ChannelConfig, *, calibration_wells: int = 400, workers: int = 1
) -> tuple[Decoded, list[Spectrum]]:
    """Simulate a plate plus its calibration wells and decode it."""
    cal = calibration_layout(layout.library, layout.manifest.scheme, calibration_wells, config.rng_seed)
    cal_spectra = simulate_readout(cal, config, stream=CALIBRATION_STREAM, workers=workers)
    spectra = simulate_readout(layout, config, workers=workers)
    return decode_spectra(spectra, layout.library, layout.manifest, config, cal, cal_spectra), spectra


# ---------------------------------------------------------------------------
# confusion


@dataclass
class ConfusionEstimate:
    pc: float
    compound_error_rates: np.ndarray
    wells: int
    wrong_wells: int

    @property
    def independent_pc(self) -> float:
        """Well accuracy implied by the per-compound rates if errors were independent."""
        return float(np.prod(1.0 - self.compound_error_rates))

    def compounds_below(self, rate: float = 0.01) -> int:
        return int((self.compound_error_rates < rate).sum())


def estimate_confusion(decoded: PlateLayout, truth: PlateLayout) -> ConfusionEstimate:
    """Per-compound level error rates and the exact-well hit rate."""
    if decoded.wells.shape != truth.wells.shape:
        raise ValueError(f"shape mismatch: decoded {decoded.wells.shape} vs truth {truth.wells.shape}")
    wrong = decoded.wells != truth.wells
    W = truth.num_wells
    bad_wells = int(wrong.any(axis=1).sum())
    return ConfusionEstimate(1.0 - bad_wells / W, wrong.mean(axis=0), W, bad_wells)
