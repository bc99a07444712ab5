"""Run reports: accuracy, confusion, achieved capacity and plot-ready tables.

A report is a directory::

    summary.txt              # molmix-report v1, key: value lines
    compound_errors.csv      # compound, name, error_rate
    intensity_histogram.csv  # compound, class, bin_lo, bin_hi, count
    guess_histogram.csv      # guesses, count   (only with a code)

Everything in it is recomputed from a truth layout and a decoded layout
(plus, optionally, the spectra they came from).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import capacity
from .codec import PlateLayout, decode
from .ecc import Codebook, invert_ecc_pipeline, rate_admissible
from .fileio import _fmt, _header_text, _split, _version_line, atomic_write
from .specsim import estimate_confusion, log_intensity

UNDER_THRESHOLD = 0.01


@dataclass
class RunReport:
    manifest: dict[str, str]
    compound_names: list[str]
    compound_error_rates: np.ndarray
    raw_bit_accuracy: float
    payload_accuracy: float
    pc: float
    log2_omega_per_well: float
    c_prime_per_well: float
    c_prime_per_bit: float
    code_rate: float | None = None
    rate_admissible: bool | None = None
    abandoned_blocks: int | None = None
    guess_histogram: dict[int, int] = field(default_factory=dict)
    intensity_histogram: list[tuple[int, int, float, float, int]] = field(default_factory=list)

    @property
    def compounds_under_1pct(self) -> int:
        return int((self.compound_error_rates < UNDER_THRESHOLD).sum())

    def headline(self) -> str:
        M = len(self.compound_error_rates)
        return (
            f"{self.compounds_under_1pct} out of the {M} compounds yielded <1% raw error; "
            f"recovered data {100 * self.payload_accuracy:.2f}% accurate"
        )

    def summary_items(self) -> list[tuple[str, object]]:
        items: list[tuple[str, object]] = [(f"manifest.{k}", v) for k, v in self.manifest.items()]
        items += [
            ("raw_bit_accuracy", _fmt(self.raw_bit_accuracy)),
            ("payload_accuracy", _fmt(self.payload_accuracy)),
            ("pc", _fmt(self.pc)),
            ("log2_omega_per_well", _fmt(self.log2_omega_per_well)),
            ("c_prime_per_well", _fmt(self.c_prime_per_well)),
            ("c_prime_per_bit", _fmt(self.c_prime_per_bit)),
            ("compounds_under_1pct", f"{self.compounds_under_1pct}/{len(self.compound_error_rates)}"),
        ]
        if self.code_rate is not None:
            items += [
                ("code_rate", _fmt(self.code_rate)),
                ("rate_admissible", str(self.rate_admissible).lower()),
                ("abandoned_blocks", self.abandoned_blocks),
            ]
        return items


def _bit_accuracy(a: np.ndarray, b: np.ndarray) -> float:
    if a.size != b.size:
        raise ValueError(f"bit streams differ in length: {a.size} vs {b.size}")
    return float((a == b).mean()) if a.size else 1.0


def _log2_omega_per_well(layout: PlateLayout) -> float:
    man = layout.manifest
    if man.scheme == "dense":
        return capacity.capacity_c3(man.library_size, man.levels).bits
    return capacity.capacity_c4(man.library_size, man.block_size).bits


def intensity_histogram(
    intensities: np.ndarray, truth: np.ndarray, bins: int = 40
) -> list[tuple[int, int, float, float, int]]:
    """Per-compound log-intensity histograms split by true level."""
    x = log_intensity(intensities)
    rows = []
    for i in range(x.shape[1]):
        edges = np.histogram_bin_edges(x[:, i], bins=bins)
        for level in np.unique(truth[:, i]):
            counts, _ = np.histogram(x[truth[:, i] == level, i], bins=edges)
            rows += [
                (i, int(level), float(lo), float(hi), int(c))
                for lo, hi, c in zip(edges[:-1], edges[1:], counts)
            ]
    return rows


def build_report(
    truth: PlateLayout,
    decoded: PlateLayout,
    code: Codebook | None = None,
    intensities: np.ndarray | None = None,
) -> RunReport:
    if not truth.same_shape(decoded):
        raise ValueError(f"shape mismatch: truth {truth.wells.shape} vs decoded {decoded.wells.shape}")
    conf = estimate_confusion(decoded, truth)
    raw_truth, raw_dec = decode(truth), decode(decoded)
    raw_acc = _bit_accuracy(raw_truth, raw_dec)
    log2_omega = _log2_omega_per_well(truth)
    c_well = (
        capacity.confusion_limited_capacity(log2_omega=log2_omega, pc=conf.pc).bits
        if conf.pc > 0 and log2_omega >= 1
        else 0.0
    )
    ber = 1.0 - raw_acc
    c_bit = 1.0 - capacity.binary_entropy(ber) if ber <= 0.5 else 0.0
    report = RunReport(
        manifest={k: str(v) for k, v in _manifest_dict(truth).items()},
        compound_names=[c.name for c in truth.library.compounds],
        compound_error_rates=conf.compound_error_rates,
        raw_bit_accuracy=raw_acc,
        payload_accuracy=raw_acc,
        pc=conf.pc,
        log2_omega_per_well=log2_omega,
        c_prime_per_well=c_well,
        c_prime_per_bit=c_bit,
    )
    if code is not None:
        payload_truth, _ = invert_ecc_pipeline(truth, code)
        payload_dec, stats = invert_ecc_pipeline(decoded, code)
        report.payload_accuracy = _bit_accuracy(payload_truth, payload_dec)
        report.code_rate = code.rate
        report.rate_admissible = rate_admissible(code.size, code.n, c_bit)
        report.abandoned_blocks = stats.abandoned
        report.guess_histogram = stats.guess_histogram
    if intensities is not None:
        report.intensity_histogram = intensity_histogram(intensities, truth.wells)
    return report


def _manifest_dict(layout: PlateLayout) -> dict[str, object]:
    m = layout.manifest
    d = {
        "scheme": m.scheme,
        "M": m.library_size,
        "S": m.block_size,
        "L": m.levels,
        "wells": m.wells,
        "original_bit_length": m.original_bit_length,
        "padding_bits": m.padding_bits,
    }
    d.update(m.extra)
    return d


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_report(directory, report: RunReport) -> None:
    directory = Path(directory)
    atomic_write(
        directory / "summary.txt",
        _version_line("report") + _header_text(report.summary_items()) + f"# {report.headline()}\n",
    )
    atomic_write(
        directory / "compound_errors.csv",
        _csv_text(
            ["compound", "name", "error_rate"],
            [(i, n, _fmt(r)) for i, (n, r) in enumerate(zip(report.compound_names, report.compound_error_rates))],
        ),
    )
    atomic_write(
        directory / "intensity_histogram.csv",
        _csv_text(
            ["compound", "class", "bin_lo", "bin_hi", "count"],
            [(i, c, _fmt(lo), _fmt(hi), n) for i, c, lo, hi, n in report.intensity_histogram],
        ),
    )
    if report.code_rate is not None:
        atomic_write(
            directory / "guess_histogram.csv",
            _csv_text(["guesses", "count"], sorted(report.guess_histogram.items())),
        )


def _read_csv(path: Path) -> list[dict[str, str]]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def read_report(directory) -> RunReport:
    directory = Path(directory)
    header, _ = _split((directory / "summary.txt").read_text(), "report", directory / "summary.txt")
    errors = _read_csv(directory / "compound_errors.csv")
    hist = [
        (int(r["compound"]), int(r["class"]), float(r["bin_lo"]), float(r["bin_hi"]), int(r["count"]))
        for r in _read_csv(directory / "intensity_histogram.csv")
    ]
    report = RunReport(
        manifest={k[len("manifest."):]: v for k, v in header.items() if k.startswith("manifest.")},
        compound_names=[r["name"] for r in errors],
        compound_error_rates=np.array([float(r["error_rate"]) for r in errors]),
        raw_bit_accuracy=float(header["raw_bit_accuracy"]),
        payload_accuracy=float(header["payload_accuracy"]),
        pc=float(header["pc"]),
        log2_omega_per_well=float(header["log2_omega_per_well"]),
        c_prime_per_well=float(header["c_prime_per_well"]),
        c_prime_per_bit=float(header["c_prime_per_bit"]),
        intensity_histogram=hist,
    )
    if "code_rate" in header:
        report.code_rate = float(header["code_rate"])
        report.rate_admissible = header["rate_admissible"] == "true"
        report.abandoned_blocks = int(header["abandoned_blocks"])
        report.guess_histogram = {
            int(r["guesses"]): int(r["count"]) for r in _read_csv(directory / "guess_histogram.csv")
        }
    return report

