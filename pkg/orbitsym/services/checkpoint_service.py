"""
Checkpoint Service
Binary checkpoints (magic, version, JSON header, little-endian f64 weights)
and the per-epoch metrics CSV
"""
import csv
import json
import logging
import struct

import numpy as np

from orbitsym.config import ExperimentConfig
from orbitsym.errors import DataIOError, FormatError
from orbitsym.extensions import SeedStreams
from orbitsym.services.symmetrization_service import SymmetrizationService
from orbitsym.services.training_service import METRIC_COLUMNS

logger = logging.getLogger(__name__)

MAGIC = b"OSYM"
FORMAT_VERSION = 1


class CheckpointService:
    """Persist and restore SymmetrizedModel weights"""

    @staticmethod
    def encode(model, cfg, extra=None):
        parameters = model.parameters()
        header = {
            "config": cfg.to_dict(),
            "model": model.describe(),
            "parameters": [{"name": name, "shape": list(t.shape)} for name, t in parameters],
            "extra": extra or {},
        }
        header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
        payload = b"".join(np.ascontiguousarray(t.data, dtype="<f8").tobytes() for _, t in parameters)
        return MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<I", len(header_bytes)) + header_bytes + payload

    @staticmethod
    def save(path, model, cfg, extra=None):
        blob = CheckpointService.encode(model, cfg, extra)
        try:
            with open(path, "wb") as fh:
                fh.write(blob)
        except OSError as exc:
            raise DataIOError(f"cannot write checkpoint {path}: {exc}") from exc
        logger.info("checkpoint written to %s (%d bytes)", path, len(blob))

    @staticmethod
    def decode(blob):
        """(header, list of float64 arrays)"""
        if len(blob) < 12:
            raise FormatError("checkpoint truncated in preamble", offset=len(blob))
        if blob[:4] != MAGIC:
            raise FormatError("bad checkpoint magic", offset=0)
        (version,) = struct.unpack("<I", blob[4:8])
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})", offset=4)
        (header_len,) = struct.unpack("<I", blob[8:12])
        end = 12 + header_len
        if len(blob) < end:
            raise FormatError("checkpoint truncated in header", offset=len(blob))
        try:
            header = json.loads(blob[12:end].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"checkpoint header is not valid JSON: {exc}", offset=12) from exc

        arrays = []
        offset = end
        for entry in header.get("parameters", []):
            shape = tuple(entry["shape"])
            size = int(np.prod(shape)) * 8
            if len(blob) < offset + size:
                raise FormatError(f"checkpoint truncated in parameter {entry['name']}", offset=len(blob))
            arrays.append(np.frombuffer(blob, dtype="<f8", count=size // 8, offset=offset).astype(np.float64).reshape(shape))
            offset += size
        if offset != len(blob):
            raise FormatError("trailing bytes after parameters", offset=offset)
        return header, arrays

    @staticmethod
    def load(path):
        """(model, config, header) rebuilt from a checkpoint file"""
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except OSError as exc:
            raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
        header, arrays = CheckpointService.decode(blob)
        cfg = ExperimentConfig.from_dict(header["config"])
        output_action = header.get("model", {}).get("output_action", "invariant-scalar")
        model = SymmetrizationService.build_model(cfg, SeedStreams(cfg.seed), output_action=output_action)

        parameters = model.parameters()
        if len(parameters) != len(arrays):
            raise FormatError(f"checkpoint holds {len(arrays)} tensors, model declares {len(parameters)}")
        for (name, tensor), entry, value in zip(parameters, header["parameters"], arrays):
            if entry["name"] != name or value.shape != tensor.shape:
                raise FormatError(f"checkpoint tensor {entry['name']} {value.shape} does not match {name} {tensor.shape}")
            tensor.data[...] = value
        return model, cfg, header

    # ================= METRICS =================

    @staticmethod
    def write_metrics(path, history):
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(METRIC_COLUMNS)
                for row in history:
                    writer.writerow([row["epoch"]] + [repr(float(row[key])) for key in METRIC_COLUMNS[1:]])
        except OSError as exc:
            raise DataIOError(f"cannot write metrics {path}: {exc}") from exc

    @staticmethod
    def read_metrics(path):
        try:
            with open(path, "r", newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
                    raise FormatError(f"unexpected metrics header in {path}: {reader.fieldnames}")
                return [
                    {key: (int(row[key]) if key == "epoch" else float(row[key])) for key in METRIC_COLUMNS}
                    for row in reader
                ]
        except FileNotFoundError as exc:
            raise DataIOError(f"metrics file not found: {path}") from exc
