"""
Image corpora, synthetic fixtures and artefact persistence.
"""

from cl_uap.data.corpus import (
    ImageCorpus,
    ImageSource,
    InMemoryCorpus,
    check_disjoint,
    directory_identities,
    ingest_corpus,
    path_identity,
)
from cl_uap.data.synthetic import (
    TwoBlobFixture,
    natural_image,
    synthetic_corpus,
    two_blob_fixture,
    write_corpus,
)
from cl_uap.data.uap_io import load_uap, save_uap

__all__ = [
    "ImageCorpus",
    "ImageSource",
    "InMemoryCorpus",
    "check_disjoint",
    "directory_identities",
    "ingest_corpus",
    "path_identity",
    "TwoBlobFixture",
    "natural_image",
    "synthetic_corpus",
    "two_blob_fixture",
    "write_corpus",
    "load_uap",
    "save_uap",
]
