import os
import zlib
from pathlib import Path
from typing import Any, Dict

import jsonpickle
from loguru import logger

from pbgcavity.errors import CheckpointError

MAGIC = b"PBGGA"
FORMAT_VERSION = 1


def save_checkpoint(path: Path, state: Dict[str, Any]):
    """Write `state` as MAGIC + version byte + zlib(jsonpickle), replacing `path` atomically."""
    path = Path(path)
    payload = zlib.compress(jsonpickle.encode(state).encode("utf-8"))
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as handle:
            handle.write(MAGIC + bytes([FORMAT_VERSION]) + payload)
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}", module="ga_optimizer")
    logger.debug(f"Checkpoint written to {path} (generation {state.get('generation')})")


def load_checkpoint(path: Path) -> Dict[str, Any]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}", module="ga_optimizer")

    if not blob.startswith(MAGIC) or len(blob) <= len(MAGIC):
        raise CheckpointError(f"{path} is not a GA checkpoint", module="ga_optimizer")
    version = blob[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})",
            module="ga_optimizer",
        )
    try:
        state = jsonpickle.decode(zlib.decompress(blob[len(MAGIC) + 1:]).decode("utf-8"))
    except (zlib.error, UnicodeDecodeError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}", module="ga_optimizer")
    if not isinstance(state, dict):
        raise CheckpointError(f"corrupt checkpoint {path}: payload is not a mapping", module="ga_optimizer")
    return state
