import json
import logging
from typing import Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Payloads are stored little-endian regardless of host byte order
PAYLOAD_DTYPE = np.dtype("<f4")


class DatabaseError(Exception):
    """Custom exception for database operations."""
    pass


class CheckpointNotFoundError(DatabaseError):
    def __init__(self, run: str, epoch=None):
        where = f"epoch {epoch}" if epoch is not None else "any epoch"
        super().__init__(f"No checkpoint for run '{run}' at {where}")
        self.run = run
        self.epoch = epoch


def _encode_array(values) -> Tuple[str, bytes]:
    """JSON shape and float32 payload of an array."""
    arr = np.asarray(values, dtype=np.float64)
    return json.dumps(list(arr.shape)), arr.astype(PAYLOAD_DTYPE).tobytes()


def _decode_array(shape_json: str, payload: bytes) -> np.ndarray:
    shape: Sequence[int] = json.loads(shape_json)
    arr = np.frombuffer(payload, dtype=PAYLOAD_DTYPE)
    expected = int(np.prod(shape)) if shape else 1
    if arr.size != expected:
        raise ValueError(f"Payload holds {arr.size} values, shape {shape} needs {expected}")
    return arr.reshape(shape).astype(np.float64)
