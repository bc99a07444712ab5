import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molmix import codec
from molmix.codec import CodecError, CompoundLibrary


def random_bits(n, seed):
    return np.random.default_rng(seed).integers(0, 2, n).astype(np.uint8)


class TestLibrary:
    def test_ids_must_be_sequential(self):
        c = codec.Compound
        with pytest.raises(CodecError):
            CompoundLibrary((c(0, "a", 100.0), c(2, "b", 101.0)))

    def test_masses_distinct(self):
        c = codec.Compound
        with pytest.raises(CodecError):
            CompoundLibrary((c(0, "a", 100.0), c(1, "b", 100.0)))

    def test_block_divides(self):
        with pytest.raises(CodecError):
            CompoundLibrary.synthetic(10, block_size=4)


class TestDense:
    def test_ibex_well_count(self, ibex_library):
        layout = codec.encode_dense(random_bits(6142, 0), ibex_library)
        assert layout.num_wells == 1229
        assert layout.manifest.padding_bits == 1229 * 5 - 6142

    def test_single_well(self, ibex_library):
        layout = codec.encode_dense("10101", ibex_library)
        assert layout.wells.tolist() == [[1, 0, 1, 0, 1]]
        assert codec.bits_to_str(codec.decode_dense(layout)) == "10101"

    def test_empty(self, ibex_library):
        with pytest.raises(CodecError):
            codec.encode_dense([], ibex_library)

    def test_all_zero(self, ibex_library):
        layout = codec.encode_dense(np.zeros(100, dtype=np.uint8), ibex_library)
        assert layout.num_wells == 20 and not layout.wells.any()

    def test_multilevel_big_endian(self):
        lib = CompoundLibrary.synthetic(2, levels=4)
        layout = codec.encode_dense("1001", lib)
        assert layout.wells.tolist() == [[2, 1]]
        assert codec.bits_to_str(codec.decode_dense(layout)) == "1001"

    def test_non_power_of_two_levels(self):
        lib = CompoundLibrary.synthetic(3, levels=3)
        with pytest.raises(CodecError):
            codec.encode_dense("101", lib)

    def test_scheme_mismatch(self, ibex_library, sparse_library):
        sparse = codec.encode_sparse("1000", sparse_library)
        with pytest.raises(CodecError):
            codec.decode_dense(sparse)

    def test_random_6142_round_trips(self, ibex_library):
        for seed in range(1000):
            bits = random_bits(6142, seed)
            layout = codec.encode_dense(bits, ibex_library)
            np.testing.assert_array_equal(codec.decode_dense(layout), bits)


class TestSparse:
    def test_compound_eight(self, sparse_library):
        layout = codec.encode_sparse("1000", sparse_library)
        assert layout.wells[0, :16].tolist() == [0] * 8 + [1] + [0] * 7
        # remaining 15 blocks are padding, index 0
        assert (layout.wells[0, 16::16] == 1).all()
        assert layout.manifest.padding_bits == 60

    def test_zero_block(self, sparse_library):
        layout = codec.encode_sparse("0000", sparse_library)
        assert layout.wells[0, 0] == 1 and layout.wells[0, 1:16].sum() == 0

    def test_amazonomachy_well_count(self, sparse_library):
        layout = codec.encode_sparse(random_bits(97_969, 1), sparse_library)
        assert layout.manifest.bits_per_well == 64
        assert layout.num_wells == 1531
        assert layout.wells.sum(axis=1).tolist() == [16] * 1531

    def test_64_zero_bits(self, sparse_library):
        layout = codec.encode_sparse(np.zeros(64, dtype=np.uint8), sparse_library)
        assert layout.num_wells == 1 and layout.manifest.padding_bits == 0
        assert layout.wells[0, ::16].tolist() == [1] * 16

    def test_bad_block_size(self):
        with pytest.raises(CodecError):
            codec.encode_sparse("1", CompoundLibrary.synthetic(12, block_size=3))
        with pytest.raises(CodecError):
            codec.encode_sparse("1", CompoundLibrary.synthetic(12, block_size=1))

    def test_pattern_round_trip(self, sparse_library):
        bits = "1000" "0010" * 20
        layout = codec.encode_sparse(bits, sparse_library)
        assert codec.bits_to_str(codec.decode_sparse(layout)) == bits

    def test_non_one_hot_names_location(self, sparse_library):
        layout = codec.encode_sparse(random_bits(200, 2), sparse_library)
        layout.wells[2, 35] = 1 - layout.wells[2, 35]
        with pytest.raises(CodecError, match="well 2 block 2"):
            codec.decode_sparse(layout)

    def test_random_97969_round_trips(self, sparse_library):
        for seed in range(5):
            bits = random_bits(97_969, seed)
            np.testing.assert_array_equal(
                codec.decode_sparse(codec.encode_sparse(bits, sparse_library)), bits
            )


@settings(max_examples=150, deadline=None)
@given(
    st.integers(1, 10_000),
    st.integers(0, 2**32 - 1),
    st.sampled_from([("dense", 5, 1, 2), ("dense", 8, 1, 4), ("sparse", 64, 8, 2), ("sparse", 32, 32, 2)]),
)
def test_round_trip_property(n, seed, params):
    scheme, M, S, L = params
    lib = CompoundLibrary.synthetic(M, block_size=S, levels=L)
    bits = random_bits(n, seed)
    layout = codec.encode(bits, lib, scheme)
    man = layout.manifest
    assert man.wells * man.bits_per_well == man.original_bit_length + man.padding_bits
    assert 0 <= man.padding_bits < man.bits_per_well
    if scheme == "sparse":
        assert (layout.wells.reshape(man.wells, -1, S).sum(axis=2) == 1).all()
    np.testing.assert_array_equal(codec.decode(layout), bits)
    again = codec.encode(bits, lib, scheme)
    np.testing.assert_array_equal(again.wells, layout.wells)


class TestImages:
    def test_two_by_two(self):
        img = codec.BitImage(2, 2, np.array([1, 0, 0, 1]))
        assert codec.bits_to_str(codec.image_to_bits(img)) == "1001"
        assert img.as_array().tolist() == [[1, 0], [0, 1]]

    def test_one_by_five(self):
        img = codec.bits_to_image("10110", 5, 1)
        assert codec.bits_to_str(codec.image_to_bits(img)) == "10110"

    def test_length_mismatch(self):
        with pytest.raises(CodecError):
            codec.bits_to_image("101", 2, 2)

    def test_random_image(self):
        bits = random_bits(97 * 101, 7)
        img = codec.bits_to_image(bits, 97, 101)
        np.testing.assert_array_equal(codec.image_to_bits(img), bits)
