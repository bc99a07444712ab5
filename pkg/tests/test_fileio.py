import numpy as np
import pytest

from molmix import codec, ecc, fileio, specsim
from molmix.codec import CompoundLibrary
from molmix.fileio import FormatError


def random_bits(n, seed):
    return np.random.default_rng(seed).integers(0, 2, n).astype(np.uint8)


class TestLibraryFile:
    def test_round_trip(self, tmp_path):
        lib = CompoundLibrary.synthetic(32, block_size=8, levels=2)
        path = tmp_path / "lib.tsv"
        fileio.write_library(path, lib)
        back = fileio.read_library(path)
        assert back == lib
        np.testing.assert_array_equal(back.masses, lib.masses)

    def test_version_line_first(self, tmp_path, ibex_library):
        path = tmp_path / "lib.tsv"
        fileio.write_library(path, ibex_library)
        assert path.read_text().startswith("# molmix-library v1\n")

    def test_wrong_kind_rejected(self, tmp_path, ibex_library):
        path = tmp_path / "lib.tsv"
        fileio.write_library(path, ibex_library)
        with pytest.raises(FormatError):
            fileio.read_layout(path, ibex_library)


class TestLayoutFile:
    @pytest.mark.parametrize("scheme,M,S", [("dense", 5, 1), ("sparse", 256, 16)])
    def test_round_trip(self, tmp_path, scheme, M, S):
        lib = CompoundLibrary.synthetic(M, block_size=S)
        fileio.write_library(tmp_path / "lib.tsv", lib)
        layout = codec.encode(random_bits(777, 3), lib, scheme, library_file="lib.tsv")
        path = tmp_path / "plate.layout"
        fileio.write_layout(path, layout)
        back = fileio.read_layout(path)
        assert back.manifest == layout.manifest
        np.testing.assert_array_equal(back.wells, layout.wells)
        assert fileio.format_layout(back) == path.read_text()

    def test_extras_survive(self, tmp_path, ibex_library):
        layout = codec.encode_dense("1011", ibex_library)
        layout.manifest.extra["image_width"] = "2"
        path = tmp_path / "p.layout"
        fileio.write_layout(path, layout)
        assert fileio.read_manifest(path).extra == {"image_width": "2"}

    def test_shape_mismatch(self, tmp_path, ibex_library):
        layout = codec.encode_dense("1011010101", ibex_library)
        path = tmp_path / "p.layout"
        text = fileio.format_layout(layout)
        path.write_text(text.rsplit("\n", 2)[0] + "\n")
        with pytest.raises(FormatError):
            fileio.read_layout(path, ibex_library)

    def test_missing_library_reference(self, tmp_path, ibex_library):
        path = tmp_path / "p.layout"
        fileio.write_layout(path, codec.encode_dense("1", ibex_library))
        with pytest.raises(FormatError):
            fileio.read_layout(path)


class TestSpectraFile:
    def test_bit_exact(self, tmp_path, ibex_library):
        layout = codec.encode_dense(random_bits(500, 4), ibex_library)
        cfg = specsim.ChannelConfig(rng_seed=9, mass_jitter_ppm=1.0)
        spectra = specsim.simulate_readout(layout, cfg)
        path = tmp_path / "s.tsv"
        fileio.write_spectra(path, spectra)
        back = fileio.read_spectra(path, layout.num_wells)
        for a, b in zip(spectra, back):
            assert a.well_id == b.well_id
            assert a.masses.tobytes() == b.masses.tobytes()
            assert a.intensities.tobytes() == b.intensities.tobytes()

    def test_empty_wells_restored(self, tmp_path, ibex_library):
        spectra = [specsim.Spectrum(0, [], []), specsim.Spectrum(1, [203.1], [5.0])]
        path = tmp_path / "s.tsv"
        fileio.write_spectra(path, spectra)
        back = fileio.read_spectra(path, 3)
        assert [s.masses.size for s in back] == [0, 1, 0]

    def test_well_beyond_plate(self, tmp_path):
        path = tmp_path / "s.tsv"
        fileio.write_spectra(path, [specsim.Spectrum(4, [1.0], [1.0])])
        with pytest.raises(FormatError):
            fileio.read_spectra(path, 2)


class TestChannelFile:
    def test_round_trip(self, tmp_path):
        cfg = specsim.sparse_operating_point(seed=17)
        path = tmp_path / "c.channel"
        fileio.write_channel_config(path, cfg)
        assert fileio.read_channel_config(path) == cfg

    def test_unknown_key(self):
        text = "# molmix-channel v1\nbogus: 1\n"
        with pytest.raises(FormatError):
            fileio.parse_channel_config(text)


class TestCodebookFile:
    def test_linear(self, tmp_path):
        code = ecc.LinearCode.hamming74()
        path = tmp_path / "h.code"
        fileio.write_codebook(path, code)
        back = fileio.read_codebook(path)
        np.testing.assert_array_equal(back.codewords(), code.codewords())

    def test_explicit(self, tmp_path):
        words = np.array([[0, 0, 0, 0], [1, 1, 1, 1], [1, 0, 1, 0], [0, 1, 0, 1]])
        code = ecc.ExplicitCodebook(words)
        path = tmp_path / "e.code"
        fileio.write_codebook(path, code)
        back = fileio.read_codebook(path)
        assert isinstance(back, ecc.ExplicitCodebook)
        np.testing.assert_array_equal(back.codewords(), code.codewords())


class TestPbm:
    def test_p1_round_trip(self, tmp_path):
        img = codec.bits_to_image(random_bits(150 * 3, 5), 150, 3)
        path = tmp_path / "i.pbm"
        fileio.write_pbm(path, img)
        back = fileio.read_pbm(path)
        assert (back.width, back.height) == (150, 3)
        np.testing.assert_array_equal(back.bits, img.bits)

    def test_p1_with_comments_and_spaces(self, tmp_path):
        path = tmp_path / "i.pbm"
        path.write_bytes(b"P1\n# a comment\n3 2\n1 0 1\n0 1 0\n")
        back = fileio.read_pbm(path)
        assert codec.bits_to_str(back.bits) == "101010"

    def test_p4(self, tmp_path):
        bits = random_bits(11 * 4, 6)
        rows = bits.reshape(4, 11)
        packed = np.packbits(rows, axis=1).tobytes()
        path = tmp_path / "i.pbm"
        path.write_bytes(b"P4\n11 4\n" + packed)
        back = fileio.read_pbm(path)
        np.testing.assert_array_equal(back.bits, bits)

    def test_truncated_p4(self, tmp_path):
        path = tmp_path / "i.pbm"
        path.write_bytes(b"P4\n16 4\n\x00\x00")
        with pytest.raises(FormatError):
            fileio.read_pbm(path)

    def test_not_pbm(self, tmp_path):
        path = tmp_path / "i.pbm"
        path.write_bytes(b"P2\n1 1\n3\n")
        with pytest.raises(FormatError):
            fileio.read_pbm(path)


def test_bits_file(tmp_path):
    path = tmp_path / "b.txt"
    path.write_text(fileio.format_bits([1, 0, 1, 1]))
    assert codec.bits_to_str(fileio.read_bits_file(path)) == "1011"
