"""
Tests for memory bank construction, sampling and persistence.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from cl_uap.core.errors import ConfigurationError, ContractError, FormatError
from cl_uap.core.prompts import make_generator
from cl_uap.data.corpus import ingest_corpus
from cl_uap.data.framing import write_framed
from cl_uap.data.synthetic import write_corpus
from cl_uap.encoders.toy import make_toy_segmenter
from cl_uap.membank.bank import (
    BANK_MAGIC,
    MemoryBank,
    build_membank,
    load_membank,
    sample_negatives,
    save_membank,
)


@pytest.fixture
def identity_bank():
    """Four orthonormal rows."""
    return MemoryBank(embeddings=torch.eye(4), source_ids=["a", "b", "c", "d"], encoder_fingerprint="x")


class TestBuildMembank:
    """Tests for embedding a corpus into a bank."""

    def test_rows_are_unit_norm(self, toy_segmenter, bank_corpus):
        """M=5 rows all have norm within 1e-6 of 1."""
        bank = build_membank(toy_segmenter.encoder, bank_corpus, 5)
        norms = torch.linalg.vector_norm(bank.embeddings.double(), dim=1)
        assert bank.M == 5
        assert bank.D == 8 * 8 * 16
        assert bool(((norms - 1.0).abs() <= 1e-6).all())

    def test_records_sources_and_fingerprint(self, toy_segmenter, bank_corpus, small_bank):
        """Rows remember their source images and the encoder."""
        assert small_bank.source_ids == bank_corpus.ids
        assert small_bank.encoder_fingerprint == toy_segmenter.encoder.fingerprint()

    def test_directory_sources_are_paths(self, toy_segmenter, bank_corpus, temp_dir):
        """A bank built from a directory stores resolved file paths."""
        written = write_corpus(bank_corpus, temp_dir / "bank")
        corpus = ingest_corpus(temp_dir / "bank", (64, 64, 3))
        bank = build_membank(toy_segmenter.encoder, corpus, 3)
        assert bank.source_ids == [str(p.resolve()) for p in written[:3]]

    def test_corpus_too_small(self, toy_segmenter, bank_corpus):
        """Asking for more rows than images raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            build_membank(toy_segmenter.encoder, bank_corpus, len(bank_corpus) + 1)

    def test_zero_rows(self, toy_segmenter, bank_corpus):
        """M must be at least 1."""
        with pytest.raises(ConfigurationError):
            build_membank(toy_segmenter.encoder, bank_corpus, 0)

    def test_fingerprint_check(self, small_bank, toy_segmenter):
        """A bank refuses an encoder with different weights."""
        small_bank.check_fingerprint(toy_segmenter.encoder)
        with pytest.raises(ConfigurationError):
            small_bank.check_fingerprint(make_toy_segmenter(8).encoder)


class TestSampleNegatives:
    """Tests for negative sampling without replacement."""

    def test_rows_are_distinct(self, identity_bank):
        """K draws are K distinct rows."""
        negatives = sample_negatives(identity_bank, 3, make_generator(0))
        assert negatives.shape == (3, 4)
        assert len({tuple(row.tolist()) for row in negatives}) == 3

    def test_full_draw_is_permutation(self, identity_bank):
        """K = M returns every row once."""
        negatives = sample_negatives(identity_bank, 4, make_generator(1))
        assert torch.equal(negatives.sum(dim=0), torch.ones(4))

    def test_single_draw_frequencies(self, identity_bank):
        """Over 10^4 single draws every row appears within 3 sigma of 1/4."""
        rng = make_generator(2)
        counts = torch.zeros(4)
        draws = 10_000
        for _ in range(draws):
            counts += sample_negatives(identity_bank, 1, rng)[0]
        sigma = (draws * 0.25 * 0.75) ** 0.5
        assert bool(((counts - draws / 4).abs() <= 3 * sigma).all())

    @pytest.mark.parametrize("K", [0, 5])
    def test_k_out_of_range(self, identity_bank, K):
        """K must lie in [1, M]."""
        with pytest.raises(ContractError):
            sample_negatives(identity_bank, K, make_generator(0))

    def test_same_seed_same_draw(self, small_bank):
        """Sampling is a pure function of the generator state."""
        first = sample_negatives(small_bank, 4, make_generator(3))
        second = sample_negatives(small_bank, 4, make_generator(3))
        assert torch.equal(first, second)


class TestMembankPersistence:
    """Tests for the MBK1 file format."""

    def test_bit_exact_reload(self, small_bank, temp_dir):
        """Saving and loading preserves rows, sources and fingerprint exactly."""
        path = save_membank(small_bank, temp_dir / "bank.mbk")
        loaded = load_membank(path)
        assert torch.equal(loaded.embeddings, small_bank.embeddings)
        assert loaded.source_ids == small_bank.source_ids
        assert loaded.encoder_fingerprint == small_bank.encoder_fingerprint
        assert loaded.checksum() == small_bank.checksum()

    def test_identical_bytes(self, small_bank, temp_dir):
        """Saving twice produces identical files."""
        first = save_membank(small_bank, temp_dir / "a.mbk").read_bytes()
        second = save_membank(small_bank, temp_dir / "b.mbk").read_bytes()
        assert first == second
        assert first[:4] == BANK_MAGIC

    @settings(max_examples=25, deadline=None)
    @given(M=st.integers(1, 6), D=st.integers(1, 8), seed=st.integers(0, 2**31 - 1))
    def test_reload_across_sizes(self, M, D, seed):
        """Banks of any small size reload bit-exactly."""
        rows = torch.randn(M, D, generator=make_generator(seed), dtype=torch.float64)
        bank = MemoryBank(
            embeddings=F.normalize(rows, dim=1).to(torch.float32),
            source_ids=[f"img_{i}" for i in range(M)],
            encoder_fingerprint="f",
        )
        with tempfile.TemporaryDirectory() as tmp:
            loaded = load_membank(save_membank(bank, Path(tmp) / "bank.mbk"))
        assert torch.equal(loaded.embeddings, bank.embeddings)
        assert loaded.source_ids == bank.source_ids

    def test_reloaded_bank_samples_same_negatives(self, small_bank, temp_dir):
        """A reloaded bank gives the same negatives for the same seed."""
        loaded = load_membank(save_membank(small_bank, temp_dir / "bank.mbk"))
        expected = sample_negatives(small_bank, 4, make_generator(11))
        assert torch.equal(sample_negatives(loaded, 4, make_generator(11)), expected)

    def test_truncated_file(self, small_bank, temp_dir):
        """A truncated payload raises FormatError."""
        path = save_membank(small_bank, temp_dir / "bank.mbk")
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            load_membank(path)

    def test_bad_magic(self, small_bank, temp_dir):
        """A file with another magic is refused."""
        path = save_membank(small_bank, temp_dir / "bank.mbk")
        path.write_bytes(b"UAP1" + path.read_bytes()[4:])
        with pytest.raises(FormatError):
            load_membank(path)

    def test_rows_not_unit_norm(self, temp_dir):
        """Rows that are not unit norm are refused on load."""
        header = {"M": 2, "D": 2, "dtype": "f32", "encoder_fingerprint": "", "source_ids": ["a", "b"]}
        path = temp_dir / "bad.mbk"
        write_framed(path, BANK_MAGIC, header, np.array([1.0, 0.0, 2.0, 0.0], dtype=np.float32))
        with pytest.raises(FormatError):
            load_membank(path)

    def test_source_count_mismatch(self, temp_dir):
        """source_ids must have one entry per row."""
        header = {"M": 2, "D": 2, "dtype": "f32", "encoder_fingerprint": "", "source_ids": ["a"]}
        path = temp_dir / "bad.mbk"
        write_framed(path, BANK_MAGIC, header, np.array([1.0, 0.0, 0.0, 1.0], dtype=np.float32))
        with pytest.raises(FormatError):
            load_membank(path)
