from raed.data.batching import iter_batches
from raed.data.features import FeatureReader, FeatureWriter
from raed.data.manifest import DatasetManifest, UtteranceRecord, load_split, read_manifest, write_manifest
from raed.data.records import Batch, Utterance
from raed.data.toy_task import generate_dataset
from raed.data.vocab import Vocabulary

__all__ = [
    "Batch",
    "DatasetManifest",
    "FeatureReader",
    "FeatureWriter",
    "Utterance",
    "UtteranceRecord",
    "Vocabulary",
    "generate_dataset",
    "iter_batches",
    "load_split",
    "read_manifest",
    "write_manifest",
]
