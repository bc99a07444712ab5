import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molmix import codec, specsim
from molmix.codec import CompoundLibrary
from molmix.specsim import CalibrationError, ChannelConfig, Spectrum


def random_bits(n, seed):
    return np.random.default_rng(seed).integers(0, 2, n).astype(np.uint8)


class TestChannelConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"intensity_on_sigma": -1.0},
            {"mass_tolerance_ppm": 0.0},
            {"dropout_probability": 1.5},
            {"intensity_off_mean": -2.0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ChannelConfig(**kwargs)

    def test_dense_preset_gap(self):
        cfg = specsim.dense_operating_point()
        # midpoint error of two equal Gaussians at this gap is the target
        p = 0.5 * math.erfc(cfg.log_gap / (2 * cfg.intensity_on_sigma) / math.sqrt(2))
        assert p == pytest.approx(6.5e-4, rel=1e-9)

    def test_sparse_preset_hits_target(self):
        cfg = specsim.sparse_operating_point()
        blk = specsim.sparse_block_error(cfg.log_gap, 0.5, 0.5, 16, 0.6)
        assert 1 - specsim.sparse_bit_error(blk, 16) == pytest.approx(0.946, abs=1e-9)

    def test_block_error_against_monte_carlo(self):
        rng = np.random.default_rng(0)
        n, S, gap, sig, g = 200_000, 8, 2.0, 0.5, 0.4
        present = gap + g * rng.standard_normal(n) + sig * rng.standard_normal(n)
        absent = sig * rng.standard_normal((n, S - 1))
        mc = (absent.max(axis=1) > present).mean()
        se = math.sqrt(mc * (1 - mc) / n)
        assert abs(specsim.sparse_block_error(gap, sig, sig, S, g) - mc) < 4 * se


class TestSimulation:
    def test_zero_noise_intensities(self, ibex_library):
        layout = codec.encode_dense("1010101101", ibex_library)
        spectra = specsim.simulate_readout(layout, specsim.zero_noise())
        for spec, row in zip(spectra, layout.wells):
            assert spec.intensities.tolist() == [1.0] * int(row.sum())
            expected = ibex_library.masses[row == 1] + specsim.SODIUM_SHIFT
            np.testing.assert_allclose(spec.masses, np.sort(expected))

    def test_one_peak_per_compound(self, ibex_library):
        layout = codec.encode_dense(random_bits(100, 0), ibex_library)
        for spec in specsim.simulate_readout(layout, ChannelConfig(rng_seed=3)):
            assert spec.masses.size == 5
            assert (np.diff(spec.masses) > 0).all()

    def test_same_seed_same_spectra(self, ibex_library):
        layout = codec.encode_dense(random_bits(1000, 1), ibex_library)
        cfg = ChannelConfig(rng_seed=11, dropout_probability=0.1)
        a = specsim.simulate_readout(layout, cfg)
        b = specsim.simulate_readout(layout, cfg)
        c = specsim.simulate_readout(layout, cfg.with_seed(12))
        assert all(x.intensities.tobytes() == y.intensities.tobytes() for x, y in zip(a, b))
        assert any(x.intensities.tobytes() != y.intensities.tobytes() for x, y in zip(a, c))

    @pytest.mark.parametrize("workers", [2, 3, 8])
    def test_parallel_matches_serial(self, sparse_library, workers):
        layout = codec.encode_sparse(random_bits(5000, 2), sparse_library)
        cfg = specsim.sparse_operating_point(seed=4)
        serial = specsim.simulate_readout(layout, cfg)
        parallel = specsim.simulate_readout(layout, cfg, workers=workers)
        assert [s.well_id for s in parallel] == list(range(layout.num_wells))
        for a, b in zip(serial, parallel):
            assert a.masses.tobytes() == b.masses.tobytes()
            assert a.intensities.tobytes() == b.intensities.tobytes()

    def test_wells_do_not_depend_on_plate_size(self, ibex_library):
        cfg = ChannelConfig(rng_seed=5)
        small = specsim.simulate_readout(codec.encode_dense("1" * 10, ibex_library), cfg)
        big = specsim.simulate_readout(codec.encode_dense("1" * 50, ibex_library), cfg)
        assert small[1].intensities.tobytes() == big[1].intensities.tobytes()

    def test_full_dropout_reads_background(self, ibex_library):
        layout = codec.encode_dense("11111", ibex_library)
        cfg = ChannelConfig(intensity_off_mean=7.0, intensity_off_sigma=0.0, dropout_probability=1.0)
        (spec,) = specsim.simulate_readout(layout, cfg)
        assert spec.intensities.tolist() == [7.0] * 5

    def test_level_scaling(self):
        lib = CompoundLibrary.synthetic(2, levels=4)
        layout = codec.encode_dense("0111", lib)  # levels 1 and 3
        (spec,) = specsim.simulate_readout(layout, specsim.zero_noise())
        np.testing.assert_allclose(spec.intensities, [1 / 3, 1.0])

    def test_mass_collision(self):
        c = codec.Compound
        lib = codec.CompoundLibrary((c(0, "a", 500.0), c(1, "b", 500.001)))
        layout = codec.encode_dense("10", lib)
        with pytest.raises(specsim.ChannelPreconditionError):
            specsim.simulate_readout(layout, ChannelConfig())
        specsim.simulate_readout(layout, ChannelConfig(mass_tolerance_ppm=0.5))

    def test_spectrum_validation(self):
        with pytest.raises(ValueError):
            Spectrum(0, [2.0, 1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            Spectrum(0, [1.0], [-1.0])


class TestPeakMatching:
    def test_nearest_within_window(self, ibex_library):
        t = ibex_library.masses[0] + specsim.SODIUM_SHIFT
        spec = Spectrum(0, [t - 4e-4, t + 1e-4, t + 5e-4], [1.0, 2.0, 3.0])
        x = specsim.extract_intensities([spec], ibex_library)
        assert x[0, 0] == 2.0 and x[0, 1:].sum() == 0

    def test_outside_window_reads_zero(self, ibex_library):
        t = ibex_library.masses[2] + specsim.SODIUM_SHIFT
        spec = Spectrum(0, [t * (1 + 6e-6)], [9.0])
        assert specsim.extract_intensities([spec], ibex_library).sum() == 0
        x = specsim.extract_intensities([spec], ibex_library, tolerance_ppm=7.0)
        assert x[0, 2] == 9.0

    def test_protonated_peak_ignored(self, ibex_library):
        spec = Spectrum(0, ibex_library.masses, np.ones(5))
        assert specsim.extract_intensities([spec], ibex_library).sum() == 0


class TestFisher:
    def test_symmetric_midpoint(self):
        rng = np.random.default_rng(0)
        split = specsim.fisher_threshold(rng.normal(0, 1, 5000), rng.normal(10, 1, 5000))
        assert split.threshold == pytest.approx(5.0, abs=0.1)
        assert split.weight > 0 and not split.degenerate

    def test_unequal_variance_leans_to_tight_class(self):
        rng = np.random.default_rng(1)
        x0, x1 = rng.normal(0, 1, 20000), rng.normal(10, 4, 20000)
        split = specsim.fisher_threshold(x0, x1)
        mu0, mu1, s0, s1 = x0.mean(), x1.mean(), x0.std(), x1.std()
        assert split.threshold < 0.5 * (mu0 + mu1)
        assert split.threshold == pytest.approx((mu0 * s1 + mu1 * s0) / (s0 + s1), rel=1e-12)
        assert split.threshold == pytest.approx(2.0, abs=0.1)
        assert split.weight == pytest.approx((mu1 - mu0) / (s0**2 + s1**2), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.5, 10), st.floats(0.1, 3), st.integers(0, 2**31))
    def test_equal_variance_within_two_percent(self, mu0, gap, sigma, seed):
        rng = np.random.default_rng(seed)
        x0 = mu0 + sigma * rng.standard_normal(4000)
        x1 = mu0 + gap + sigma * rng.standard_normal(4000)
        split = specsim.fisher_threshold(x0, x1)
        mid = mu0 + gap / 2
        # 2% of the class separation, the scale the midpoint lives on
        assert abs(split.threshold - mid) <= 0.02 * gap + 4 * sigma / math.sqrt(4000)

    def test_identical_classes(self):
        x = np.arange(20.0)
        with pytest.raises(CalibrationError):
            specsim.fisher_threshold(x, x)

    def test_zero_variance_fallback(self):
        split = specsim.fisher_threshold(np.zeros(10), np.full(10, 4.0))
        assert split.degenerate and split.threshold == 2.0

    def test_single_class_rejected(self):
        x = np.ones((30, 2))
        truth = np.ones((30, 2), dtype=int)
        with pytest.raises(CalibrationError):
            specsim.fit_classifier_from_intensities(x, truth)

    def test_too_few_examples(self):
        x = np.r_[np.zeros(9), np.ones(30)][:, None] * 100
        truth = (x > 0).astype(int)
        with pytest.raises(CalibrationError, match=">= 10"):
            specsim.fit_classifier_from_intensities(x, truth)

    def test_predict(self):
        clf = specsim.IntensityClassifier([[1.0]], [[math.log1p(100.0)]])
        assert clf.predict(np.array([[50.0], [150.0]])).tolist() == [[0], [1]]


def test_calibration_layout_balanced(sparse_library, ibex_library):
    dense = specsim.calibration_layout(ibex_library, "dense", 200)
    assert (dense.wells.sum(axis=0) == 100).all()
    sparse = specsim.calibration_layout(sparse_library, "sparse", 200)
    assert (sparse.wells.reshape(200, 16, 16).sum(axis=2) == 1).all()
    counts = sparse.wells.sum(axis=0)
    assert counts.min() >= 12 and counts.max() <= 13


class TestDecoding:
    def test_dense_zero_noise(self, ibex_library):
        bits = random_bits(6142, 7)
        layout = codec.encode_dense(bits, ibex_library)
        decoded, _ = specsim.run_channel(layout, specsim.zero_noise())
        np.testing.assert_array_equal(decoded.bits, bits)
        assert decoded.diagnostics["missing_peaks"] == int((layout.wells == 0).sum())

    def test_sparse_zero_noise(self, sparse_library):
        bits = random_bits(10_000, 8)
        layout = codec.encode_sparse(bits, sparse_library)
        decoded, _ = specsim.run_channel(layout, specsim.zero_noise())
        np.testing.assert_array_equal(decoded.bits, bits)

    def test_dense_needs_calibration(self, ibex_library):
        layout = codec.encode_dense("10101", ibex_library)
        spectra = specsim.simulate_readout(layout, specsim.zero_noise())
        with pytest.raises(CalibrationError):
            specsim.decode_spectra(spectra, ibex_library, layout.manifest, specsim.zero_noise())

    def test_compound_eight_dominates(self, sparse_library):
        layout = codec.encode_sparse("1000" + "0" * 60, sparse_library)
        targets = sparse_library.masses + specsim.SODIUM_SHIFT
        intensities = np.full(256, 10.0)
        intensities[8] = 50.0
        intensities[3] = 20.0
        spec = Spectrum(0, targets, intensities)
        decoded = specsim.decode_sparse_spectra([spec], sparse_library, layout.manifest, np.full(256, 10.0))
        assert codec.bits_to_str(decoded.bits[:4]) == "1000"

    def test_background_normalisation(self, sparse_library):
        layout = codec.encode_sparse("0" * 64, sparse_library)
        targets = sparse_library.masses + specsim.SODIUM_SHIFT
        raw = np.ones(256)
        raw[5] = 30.0  # loud but loud everywhere
        raw[2] = 3.0
        background = np.ones(256)
        background[5] = 100.0
        spec = Spectrum(0, targets, raw)
        decoded = specsim.decode_sparse_spectra([spec], sparse_library, layout.manifest, background)
        assert decoded.layout.wells[0, :16].argmax() == 2

    def test_empty_block_picks_first(self, sparse_library):
        layout = codec.encode_sparse("1" * 64, sparse_library)
        decoded = specsim.decode_sparse_spectra([Spectrum(0, [], [])], sparse_library, layout.manifest)
        assert decoded.diagnostics["empty_blocks"] == 16
        assert (decoded.layout.wells[0, ::16] == 1).all()

    def test_ties_go_to_lowest_id(self, sparse_library):
        layout = codec.encode_sparse("0" * 64, sparse_library)
        targets = sparse_library.masses + specsim.SODIUM_SHIFT
        raw = np.ones(256)
        raw[[6, 9]] = 4.0
        decoded = specsim.decode_sparse_spectra(
            [Spectrum(0, targets, raw)], sparse_library, layout.manifest, np.ones(256)
        )
        assert decoded.layout.wells[0, :16].argmax() == 6

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.0, 3.0), st.floats(0.0, 0.5))
    def test_sparse_output_always_one_hot(self, seed, gap, dropout):
        lib = CompoundLibrary.synthetic(64, block_size=8)
        layout = codec.encode_sparse(random_bits(300, seed), lib)
        cfg = ChannelConfig(1e4 * math.exp(gap), 0.8, 1e4, 0.8, rng_seed=seed, dropout_probability=dropout)
        decoded, _ = specsim.run_channel(layout, cfg, calibration_wells=40)
        assert (decoded.layout.wells.reshape(-1, 8, 8).sum(axis=2) == 1).all()

    def test_error_grows_as_gap_shrinks(self, ibex_library):
        """Off median rises toward on median: mean BER over paired seeds strictly increases."""
        bits = random_bits(6142, 9)
        layout = codec.encode_dense(bits, ibex_library)
        gaps = [2.0, 1.6, 1.2, 0.8, 0.4]
        rates = []
        for gap in gaps:
            errs = []
            for seed in range(10):
                cfg = ChannelConfig(1e6, 0.35, 1e6 * math.exp(-gap), 0.35, rng_seed=seed)
                decoded, _ = specsim.run_channel(layout, cfg)
                errs.append((decoded.bits != bits).mean())
            rates.append(np.mean(errs))
        assert all(b > a for a, b in zip(rates, rates[1:])), rates


class TestConfusion:
    def test_perfect(self, ibex_library):
        layout = codec.encode_dense(random_bits(100, 0), ibex_library)
        est = specsim.estimate_confusion(layout, layout)
        assert est.pc == 1.0 and not est.compound_error_rates.any()

    def test_single_flip(self, ibex_library):
        truth = codec.encode_dense(random_bits(6142, 0), ibex_library)
        wells = truth.wells.copy()
        wells[17, 3] ^= 1
        est = specsim.estimate_confusion(truth.with_wells(wells), truth)
        assert est.pc == 1228 / 1229
        assert est.wrong_wells == 1
        assert est.compound_error_rates.tolist() == [0, 0, 0, 1 / 1229, 0]

    def test_shape_mismatch(self, ibex_library):
        a = codec.encode_dense("1" * 10, ibex_library)
        b = codec.encode_dense("1" * 15, ibex_library)
        with pytest.raises(ValueError):
            specsim.estimate_confusion(a, b)

    def test_pc_matches_independent_product(self, ibex_library):
        """Dense errors are independent across compounds, so Pc ~ prod(1 - e_i)."""
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2, 5 * 20_000)
        layout = codec.encode_dense(bits, ibex_library)
        gap = 2 * 1.7 * 0.35  # midpoint error about 4.5% per compound
        cfg = ChannelConfig(1e6, 0.35, 1e6 * math.exp(-gap), 0.35, rng_seed=21)
        decoded, _ = specsim.run_channel(layout, cfg)
        est = specsim.estimate_confusion(decoded.layout, layout)
        W = est.wells
        se = math.sqrt(est.pc * (1 - est.pc) / W)
        assert 0.7 < est.pc < 0.9
        assert abs(est.pc - est.independent_pc) < 3 * se
