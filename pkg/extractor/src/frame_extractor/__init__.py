"""Offline sidecar that turns a video into a UVEB embedding store."""

from .encoders import HashEncoder, get_encoder
from .extract import ExtractionJob, extract_and_write
from .sampling import sample_indices
from .writer import write_store

__version__ = "0.1.0"
