"""
pytest configuration and fixtures for CL-UAP tests.

This module provides shared fixtures for all test modules.
"""

import json
import sys
import tempfile
from pathlib import Path

import pytest
import torch

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cl_uap.config import CLConfig, EvalConfig
from cl_uap.data.synthetic import synthetic_corpus, two_blob_fixture
from cl_uap.encoders.toy import make_toy_segmenter
from cl_uap.membank.bank import build_membank

# Import test utilities
from tests.test_utils import (
    cleanup_test_env,
    disable_test_mode,
    enable_test_mode,
    setup_test_env,
)

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Run slow reference tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end reference runs (enable with --runslow)")
    config.addinivalue_line("markers", "integration: tests that drive the command-line pipeline")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session", autouse=True)
def test_mode_guard():
    """
    Auto-enabled test mode guard that runs for all tests.

    This fixture:
    1. Enables test mode globally
    2. Points LOG_DIR and UAP_RUNS_DIR at a session temp directory
    3. Disables console logging and pins the device to the CPU
    4. Restores the environment after all tests complete
    """
    enable_test_mode()
    with tempfile.TemporaryDirectory() as root:
        setup_test_env(root)
        yield Path(root)
        cleanup_test_env()
    disable_test_mode()


@pytest.fixture(scope="function")
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture(scope="session")
def toy_segmenter():
    """Float32 toy segmenter, seed 7, 64x64x3 input, 8x8x16 features."""
    return make_toy_segmenter(7)


@pytest.fixture(scope="session")
def toy_segmenter64():
    """Float64 toy segmenter for finite-difference checks."""
    return make_toy_segmenter(7, dtype="float64")


@pytest.fixture(scope="session")
def small_segmenter():
    """Float64 toy segmenter on 16x16 images, cheap enough for gradient checks."""
    return make_toy_segmenter(3, input_shape=(16, 16, 3), feature_shape=(4, 4, 8), dtype="float64")


@pytest.fixture(scope="function")
def two_blob():
    """Red and blue squares on a dark 64x64 background."""
    return two_blob_fixture()


@pytest.fixture(scope="session")
def aug_corpus():
    """Eight natural-like images used as the add_image source."""
    return synthetic_corpus(8, seed=1, name="aug")


@pytest.fixture(scope="session")
def bank_corpus():
    """Six images the memory bank is built from."""
    return synthetic_corpus(6, seed=2, name="bank")


@pytest.fixture(scope="session")
def test_corpus():
    """Four held-out images."""
    return synthetic_corpus(4, seed=3, name="test")


@pytest.fixture(scope="session")
def small_bank(toy_segmenter, bank_corpus):
    """Memory bank of six embeddings from the float32 toy encoder."""
    return build_membank(toy_segmenter.encoder, bank_corpus, 6)


@pytest.fixture(scope="function")
def quick_cl_config():
    """Short contrastive training run."""
    return CLConfig(K=4, steps=15, lr=1e-2, seed=0, log_every=5)


@pytest.fixture(scope="function")
def quick_eval_config():
    """Evaluation over the four held-out images, one point each."""
    return EvalConfig(n_images=4, prompts_per_image=1, seed=0)


@pytest.fixture(scope="session")
def golden():
    """
    Load-or-record accessor for golden snapshots.

    ``golden(name, value)`` returns the stored value. On first use the value
    is written and the calling test is skipped.
    """

    def _golden(name, value):
        path = GOLDEN_DIR / f"{name}.json"
        if not path.exists():
            GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(value, f, indent=2)
            pytest.skip(f"Recorded golden snapshot {path.name}")
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)

    return _golden


@pytest.fixture(autouse=True)
def _deterministic_torch():
    """Keep torch's global RNG out of test outcomes."""
    torch.manual_seed(0)
    yield
