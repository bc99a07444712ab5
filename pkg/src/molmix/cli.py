"""``molmix`` command-line tool.

Exit status: 0 success, 2 usage error, 3 validation error, 4 the channel
cannot resolve the library (mass collision).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import capacity as cap
from . import codec, ecc, fileio, report, specsim

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_CHANNEL = 4
CONFIG_DIR_ENV = "MOLMIX_CONFIG_DIR"


def _num(x: float) -> str:
    return format(x, ".12g")


def big_int(text: str) -> int:
    """Integers, also written as ``4^40`` or ``4**40``."""
    text = text.strip()
    for op in ("**", "^"):
        if op in text:
            base, exp = text.split(op, 1)
            return int(base) ** int(exp)
    return int(text)


# ---------------------------------------------------------------------------
# capacity


def _capacity_rows(args) -> list[tuple[str, float]]:
    rows: list[tuple[str, float]] = []

    def need(*names):
        missing = [n for n in names if getattr(args, n) is None]
        if missing:
            raise ValueError("missing parameter(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))

    if args.c1:
        need("M", "Q")
        rows.append(("C1_bits", cap.capacity_c1(args.M, args.Q).bits))
    if args.c2:
        need("M", "Q")
        rows.append(("C2_bits", cap.capacity_c2(args.M, args.Q).bits))
    if args.c3:
        need("M", "L")
        rows.append(("C3_bits", cap.capacity_c3(args.M, args.L).bits))
    if args.c4:
        need("M", "S")
        v = cap.capacity_c4(args.M, args.S)
        rows.append(("C4_bits", v.bits))
        if v.degenerate:
            rows.append(("C2_dense_bits", cap.capacity_c2(args.M, args.M).bits))
    if args.address:
        need("B", "N", "A")
        ap = cap.address_payload_equivalence(cap.PolymerSpec(args.B, args.N, args.A))
        rows += [
            ("num_addresses", float(ap.num_addresses)),
            ("sparsity", float(ap.sparsity)),
            ("bits_per_mixture", ap.bits_per_mixture),
            ("dense_mixture_bits", ap.dense_bits),
        ]
    if args.cprime:
        need("pc")
        if (args.omega is None) == (args.omega_log2 is None):
            raise ValueError("--cprime needs exactly one of --omega or --omega-log2")
        v = cap.confusion_limited_capacity(args.omega, args.pc, log2_omega=args.omega_log2)
        lw = args.omega_log2 if args.omega_log2 is not None else math.log2(args.omega)
        rows.append(("Cprime_bits", v.bits))
        rows.append(("Cprime_approx_bits", cap.confusion_limited_capacity_approx(lw, args.pc)))
    if args.energy:
        if args.B is not None:
            rows.append(("energy_per_bit_sparse", cap.energy_per_bit_sparse(args.epsilon, args.B)))
        if args.N is not None:
            rows.append(("energy_per_bit_dense", cap.energy_per_bit_dense(args.epsilon, args.N)))
        rows.append(("energy_per_bit_mixing", cap.energy_per_bit_mixing(args.gamma)))
    if args.partition:
        need("C")
        p = cap.optimal_partition(args.C)
        rows += [("W", float(p.wells)), ("M", float(p.library_size)), ("sqrt_C", p.continuous)]
    if not rows:
        raise ValueError("choose at least one of --c1 --c2 --c3 --c4 --address --cprime --energy --partition")
    return rows


def _parse_sweep(text: str) -> tuple[str, list]:
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ValueError("--sweep takes NAME:START:STOP[:STEP]")
    name = parts[0].replace("-", "_")
    if name in ("pc", "epsilon", "gamma", "C", "omega_log2"):
        start, stop = float(parts[1]), float(parts[2])
        step = float(parts[3]) if len(parts) == 4 else (stop - start) / 20
        values = list(np.arange(start, stop + step / 2, step))
    else:
        start, stop = big_int(parts[1]), big_int(parts[2])
        step = big_int(parts[3]) if len(parts) == 4 else 1
        values = list(range(start, stop + 1, step))
    return name, values


def cmd_capacity(args) -> int:
    if args.sweep:
        name, values = _parse_sweep(args.sweep)
        if not hasattr(args, name):
            raise ValueError(f"cannot sweep unknown parameter {name!r}")
        lines = []
        header = None
        for v in values:
            setattr(args, name, v)
            try:
                rows = _capacity_rows(args)
            except ValueError:
                continue  # points outside a regime's domain are skipped
            if header is None:
                header = [name] + [k for k, _ in rows]
                lines.append(",".join(header))
            lines.append(",".join([_num(float(v))] + [_num(x) for _, x in rows]))
        print("\n".join(lines))
        return EXIT_OK
    for key, value in _capacity_rows(args):
        print(f"{key}\t{_num(value)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# library / encode


def cmd_library(args) -> int:
    lib = codec.CompoundLibrary.synthetic(args.size, args.block_size, args.levels)
    fileio.write_library(args.out, lib)
    print(f"library\t{args.out}\nM\t{lib.size}\nS\t{lib.block_size}\nL\t{lib.levels}")
    return EXIT_OK


def _load_code(spec: str | None) -> ecc.Codebook | None:
    if spec is None:
        return None
    if Path(spec).exists():
        return fileio.read_codebook(spec)
    return ecc.code_from_name(spec)


def cmd_encode(args) -> int:
    if (args.image is None) == (args.bits is None):
        raise ValueError("give exactly one of --image or --bits")
    library = fileio.read_library(args.library)
    if args.L is not None:
        library = codec.CompoundLibrary(library.compounds, library.block_size, args.L)
    image = None
    if args.image:
        image = fileio.read_pbm(args.image)
        bits = codec.image_to_bits(image)
    else:
        bits = fileio.read_bits_file(args.bits)
    lib_ref = os.path.relpath(Path(args.library).resolve(), Path(args.out).resolve().parent)
    code = _load_code(args.ecc)
    if code is None:
        layout = codec.encode(bits, library, args.scheme, library_file=lib_ref)
    else:
        layout = ecc.apply_ecc_pipeline(bits, code, library, args.scheme, args.stride, library_file=lib_ref)
    if image is not None:
        layout.manifest.extra.update(image_width=str(image.width), image_height=str(image.height))
    fileio.write_layout(args.out, layout)
    man = layout.manifest
    print(f"wells\t{man.wells}\nbits_per_well\t{man.bits_per_well}\npadding_bits\t{man.padding_bits}")
    if code is not None:
        print(f"payload_bits\t{bits.size}\ncoded_bits\t{man.original_bit_length}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def load_channel_config(spec: str | None, seed: int | None, S: int = 16) -> specsim.ChannelConfig:
    if spec is None:
        spec = "zero-noise"
    if spec in specsim.PRESETS:
        cfg = specsim.sparse_operating_point(S=S) if spec == "sparse-operating-point" else specsim.PRESETS[spec]()
    else:
        path = Path(spec)
        if not path.exists() and os.environ.get(CONFIG_DIR_ENV):
            path = Path(os.environ[CONFIG_DIR_ENV]) / spec
        cfg = fileio.read_channel_config(path)
    return cfg if seed is None else cfg.with_seed(seed)


def cmd_simulate(args) -> int:
    layout = fileio.read_layout(args.layout)
    cfg = load_channel_config(args.channel_config, args.seed, layout.manifest.block_size)
    specsim.check_mass_separation(layout.library, cfg)
    spectra = specsim.simulate_readout(layout, cfg, workers=args.workers)
    outputs = {args.out: fileio.format_spectra(spectra)}
    outputs[str(args.out) + ".channel"] = fileio.format_channel_config(cfg)
    if args.calibration_out:
        cal = specsim.calibration_layout(
            layout.library, layout.manifest.scheme, args.calibration_wells, cfg.rng_seed
        )
        cal.manifest.library_file = layout.manifest.library_file
        cal_spectra = specsim.simulate_readout(
            cal, cfg, stream=specsim.CALIBRATION_STREAM, workers=args.workers
        )
        prefix = args.calibration_out
        outputs[prefix + ".layout"] = fileio.format_layout(cal)
        outputs[prefix + ".spectra.tsv"] = fileio.format_spectra(cal_spectra)
    for path, text in outputs.items():
        fileio.atomic_write(path, text)
    print(fileio.format_channel_config(cfg), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# decode / report


def _payload(layout: codec.PlateLayout, code) -> tuple[np.ndarray, ecc.EccStats | None]:
    if code is None:
        return codec.decode(layout), None
    return ecc.invert_ecc_pipeline(layout, code)


def cmd_decode(args) -> int:
    manifest = fileio.read_manifest(args.manifest)
    library = fileio.read_library(args.library) if args.library else fileio.resolve_library(manifest, args.manifest)
    cfg = load_channel_config(args.channel_config, None, manifest.block_size)
    spectra = fileio.read_spectra(args.spectra, manifest.wells)
    calibration = fileio.read_layout(args.calibration, library) if args.calibration else None
    cal_spectra = None
    if args.calibration_spectra:
        cal_spectra = fileio.read_spectra(args.calibration_spectra, calibration.num_wells if calibration else None)
    code = _load_code(args.ecc)
    truth = fileio.read_layout(args.truth, library) if args.truth else None

    result = specsim.decode_spectra(spectra, library, manifest, cfg, calibration, cal_spectra)
    payload, stats = _payload(result.layout, code)
    outputs = {
        "decoded.layout": fileio.format_layout(result.layout),
        "decoded.bits": fileio.format_bits(payload),
    }
    extra = manifest.extra
    if "image_width" in extra:
        img = codec.bits_to_image(payload, int(extra["image_width"]), int(extra["image_height"]))
        outputs["decoded.pbm"] = fileio.format_pbm(img)
    rep = None
    if truth is not None:
        x = specsim.extract_intensities(
            spectra, library, manifest.wells,
            mass_shift=cfg.sodiation_mass_shift, tolerance_ppm=cfg.mass_tolerance_ppm,
        )
        rep = report.build_report(truth, result.layout, code, x)
    out = Path(args.out_dir)
    for name, text in outputs.items():
        fileio.atomic_write(out / name, text)
    if rep is not None:
        report.write_report(out / "report", rep)
    for k, v in result.diagnostics.items():
        print(f"{k}\t{v}")
    if stats is not None:
        print(f"abandoned_blocks\t{stats.abandoned}")
    if rep is not None:
        print(f"payload_accuracy\t{_num(rep.payload_accuracy)}\npc\t{_num(rep.pc)}")
        print(rep.headline())
    return EXIT_OK


def cmd_report(args) -> int:
    truth = fileio.read_layout(args.truth)
    decoded = fileio.read_layout(args.decoded, truth.library)
    code = _load_code(args.ecc)
    x = None
    if args.spectra:
        spectra = fileio.read_spectra(args.spectra, truth.num_wells)
        cfg = load_channel_config(args.channel_config, None, truth.manifest.block_size)
        x = specsim.extract_intensities(
            spectra, truth.library, truth.num_wells,
            mass_shift=cfg.sodiation_mass_shift, tolerance_ppm=cfg.mass_tolerance_ppm,
        )
    rep = report.build_report(truth, decoded, code, x)
    if args.out_dir:
        report.write_report(args.out_dir, rep)
    for key, value in rep.summary_items():
        print(f"{key}\t{value}")
    print(rep.headline())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="molmix", description="Data storage in small-molecule mixtures.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("capacity", help="capacity and energy bounds")
    for flag in ("c1", "c2", "c3", "c4", "address", "cprime", "energy", "partition"):
        c.add_argument(f"--{flag}", action="store_true")
    c.add_argument("--M", type=big_int)
    c.add_argument("--Q", type=big_int)
    c.add_argument("--L", type=int)
    c.add_argument("--S", type=big_int)
    c.add_argument("--B", type=int)
    c.add_argument("--N", type=int)
    c.add_argument("--A", type=int)
    c.add_argument("--C", type=float)
    c.add_argument("--omega", type=big_int)
    c.add_argument("--omega-log2", type=float)
    c.add_argument("--pc", type=float)
    c.add_argument("--epsilon", type=float, default=1.0)
    c.add_argument("--gamma", type=float, default=1.0)
    c.add_argument("--sweep", metavar="NAME:START:STOP[:STEP]", help="emit CSV over a parameter range")
    c.set_defaults(func=cmd_capacity)

    lib = sub.add_parser("library", help="write a synthetic compound library")
    lib.add_argument("--size", type=int, required=True)
    lib.add_argument("--block-size", type=int, default=1)
    lib.add_argument("--levels", type=int, default=2)
    lib.add_argument("--out", required=True)
    lib.set_defaults(func=cmd_library)

    e = sub.add_parser("encode", help="bits or image to a plate layout")
    e.add_argument("--image")
    e.add_argument("--bits")
    e.add_argument("--library", required=True)
    e.add_argument("--scheme", choices=("dense", "sparse"), default="dense")
    e.add_argument("--L", type=int)
    e.add_argument("--ecc", help="code preset name (hamming74) or codebook file")
    e.add_argument("--stride", type=int, default=1, help="codeword interleaving stride")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    s = sub.add_parser("simulate", help="simulated mass-spec readout of a layout")
    s.add_argument("--layout", required=True)
    s.add_argument("--channel-config", help="config file, or preset: " + ", ".join(specsim.PRESETS))
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--calibration-out", help="prefix for calibration layout and spectra")
    s.add_argument("--calibration-wells", type=int, default=400)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("decode", help="spectra back to bits, with an optional report")
    d.add_argument("--spectra", required=True)
    d.add_argument("--manifest", required=True, help="layout file whose manifest header is used")
    d.add_argument("--library")
    d.add_argument("--calibration", help="calibration truth layout")
    d.add_argument("--calibration-spectra")
    d.add_argument("--channel-config")
    d.add_argument("--ecc")
    d.add_argument("--truth", help="truth layout; enables the report")
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_decode)

    r = sub.add_parser("report", help="compare a decoded layout with the truth")
    r.add_argument("--truth", required=True)
    r.add_argument("--decoded", required=True)
    r.add_argument("--ecc")
    r.add_argument("--spectra")
    r.add_argument("--channel-config")
    r.add_argument("--out-dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except specsim.ChannelPreconditionError as exc:
        print(f"molmix: channel precondition failed: {exc}", file=sys.stderr)
        return EXIT_CHANNEL
    except (ValueError, OSError, KeyError) as exc:
        print(f"molmix: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
