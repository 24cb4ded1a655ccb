from pathlib import Path
from typing import Any, Dict, List
import json
import logging

import numpy as np
import pandas as pd

import config

logger = logging.getLogger(__name__)


class OutputService:
    def __init__(self, output_dir: str, config_hash: str):
        """
        Initialize Output service

        Args:
            output_dir: Directory receiving every artifact
            config_hash: Hash written into each artifact header
        """
        self.output_dir = Path(output_dir)
        self.config_hash = config_hash
        self.written: List[Path] = []

    def _path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """CSV with a '#'-prefixed config-hash header line"""
        path = self._path(name)
        with open(path, "w", newline="") as handle:
            handle.write(f"# config_hash={self.config_hash}\n")
            frame.to_csv(handle, index=False, float_format=config.CSV_FLOAT_FORMAT, lineterminator="\n")
        self._record(path)
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self._path(name)
        document = {"config_hash": self.config_hash, **payload}
        with open(path, "w") as handle:
            json.dump(document, handle, indent=2, sort_keys=True, default=_json_default)
            handle.write("\n")
        self._record(path)
        return path

    def write_grid(self, name: str, values: np.ndarray, metadata: Dict[str, Any]) -> Path:
        """
        Row-major little-endian complex128 dump plus a JSON sidecar

        Args:
            name: File name of the binary dump
            values: Complex matrix
            metadata: Grid shape and step, stored in ``<name>.json``
        """
        path = self._path(name)
        np.ascontiguousarray(values, dtype="<c16").tofile(path)
        self._record(path)
        self.write_json(f"{name}.json", {"shape": list(values.shape), "dtype": "<c16", **metadata})
        return path

    def _record(self, path: Path):
        self.written.append(path)
        logger.info("wrote %s", path)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    raise TypeError(f"cannot serialize {type(value).__name__}")
