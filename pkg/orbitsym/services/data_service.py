"""
Data Service
Particle-scattering events, IDX ingestion, rotated point-set digits,
group augmentation and CSV + JSON dataset files
"""
import json
import logging
import math
import os
import struct

import numpy as np

from orbitsym.errors import DataIOError, FormatError
from orbitsym.models.group import minkowski_metric
from orbitsym.models.records import Batch, ParticleEvent, PointSetDigit, Split
from orbitsym.models.tensor import Tensor
from orbitsym.services.equivariant_service import GRID_SIZE, EquivariantService
from orbitsym.services.group_service import GroupService

logger = logging.getLogger(__name__)

GENERATOR_VERSION = 1
SIDECAR = "dataset.json"

# dtype code -> (numpy big-endian dtype, bytes per item)
IDX_DTYPES = {
    0x08: (">u1", 1),
    0x09: (">i1", 1),
    0x0B: (">i2", 2),
    0x0C: (">i4", 4),
    0x0D: (">f4", 4),
    0x0E: (">f8", 8),
}

PARTICLE_SPLITS = ("train", "val", "test")
POINTSET_SPLITS = ("train", "val", "test", "test-upright")


def minkowski_dot(a, b):
    """a^T L b for 4-vectors stored along the last axis"""
    a = np.asarray(a, dtype=np.float64)
    lam = minkowski_metric(a.shape[-1])
    return np.einsum("...i,ij,...j->...", a, lam, np.asarray(b, dtype=np.float64))


def particle_labels(momenta):
    """y = (p1.p3)(p2.p4) + (p1.p4)(p2.p3) with the Minkowski product"""
    momenta = np.asarray(momenta, dtype=np.float64)
    lam = minkowski_metric(momenta.shape[-2])
    gram = np.swapaxes(momenta, -1, -2) @ lam @ momenta
    return gram[..., 0, 2] * gram[..., 1, 3] + gram[..., 0, 3] * gram[..., 1, 2]


class DataService:
    """Dataset generation, parsing and persistence"""

    # ================= PARTICLES =================

    @staticmethod
    def generate_particle_dataset(n_train, n_val, n_test, seed, scale=0.25, rapidity=None):
        """
        Events with iid N(0, scale^2) momentum entries. Validation and test
        events are each moved by a fresh O(1,3) element; train is left as drawn.
        """
        for name, count in (("n_train", n_train), ("n_val", n_val), ("n_test", n_test)):
            if count < 1:
                raise ValueError(f"{name} must be at least 1")
        rng = np.random.default_rng(seed)
        group = GroupService.parse("lorentz13")
        splits = {}
        for name, count in zip(PARTICLE_SPLITS, (n_train, n_val, n_test)):
            momenta = rng.standard_normal((count, 4, 4)) * scale
            if name != "train":
                transforms = GroupService.sample_elements(group, rng, count, rapidity=rapidity)
                momenta = transforms @ momenta
            splits[name] = Split(name=name, kind="particle", x=momenta, labels=particle_labels(momenta))
        logger.info("generated particle events: %s", {k: len(v) for k, v in splits.items()})
        return splits

    # ================= IDX =================

    @staticmethod
    def parse_idx(path, scale=True):
        """
        Read a big-endian IDX file. Unsigned-byte payloads are scaled to [0, 1]
        unless scale is False (label files).
        """
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except OSError as exc:
            raise DataIOError(f"cannot read IDX file {path}: {exc}") from exc
        return DataService.decode_idx(blob, scale=scale)

    @staticmethod
    def decode_idx(blob, scale=True):
        if len(blob) < 4:
            raise FormatError("IDX header truncated", offset=len(blob))
        zero, code, ndim = struct.unpack(">HBB", blob[:4])
        if zero != 0:
            raise FormatError("bad IDX magic", offset=0)
        if code not in IDX_DTYPES:
            raise FormatError(f"unknown IDX dtype code 0x{code:02x}", offset=2)
        header_end = 4 + 4 * ndim
        if len(blob) < header_end:
            raise FormatError("IDX dimension sizes truncated", offset=len(blob))
        shape = struct.unpack(f">{ndim}I", blob[4:header_end])
        dtype, width = IDX_DTYPES[code]
        expected = int(np.prod(shape, dtype=np.int64)) * width
        if len(blob) - header_end < expected:
            raise FormatError(f"IDX payload truncated: expected {expected} bytes, found {len(blob) - header_end}",
                              offset=len(blob))
        data = np.frombuffer(blob, dtype=dtype, count=expected // width, offset=header_end).reshape(shape)
        values = data.astype(np.float64)
        if scale and code == 0x08:
            values = values / 255.0
        return Tensor(values)

    @staticmethod
    def write_idx(path, array):
        """Write an unsigned-byte IDX file"""
        array = np.asarray(array)
        if array.dtype != np.uint8:
            raise FormatError(f"write_idx stores unsigned bytes, got {array.dtype}")
        header = struct.pack(">HBB", 0, 0x08, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
        try:
            with open(path, "wb") as fh:
                fh.write(header + array.astype(">u1").tobytes())
        except OSError as exc:
            raise DataIOError(f"cannot write IDX file {path}: {exc}") from exc

    # ================= POINT SETS =================

    @staticmethod
    def build_rotated_pointset(images, labels, t, m, rotate, seed):
        """Preprocess every image; with rotate, turn each coordinate set by a fresh SO(2) angle"""
        images = np.asarray(images.data if isinstance(images, Tensor) else images, dtype=np.float64)
        labels = np.asarray(labels.data if isinstance(labels, Tensor) else labels).astype(np.int64)
        rng = np.random.default_rng(seed)
        digits = []
        for image, label in zip(images, labels):
            values, coords = EquivariantService.preprocess_pointset(image, t, m)
            coords = coords.data
            if rotate:
                coords = GroupService.rotation2d(rng.uniform(0.0, 2.0 * math.pi)) @ coords
            digits.append(PointSetDigit(values=values.data, coords=coords, label=int(label)))
        return digits

    @staticmethod
    def synthetic_digits(count, seed, jitter=0.6, sigma=1.4):
        """
        Ten classes of Gaussian-blob shapes on a 28x28 raster. Class c places
        1 + c // 2 blobs evenly on a ring of radius 4 + 4 * (c % 2) pixels, so
        classes differ in rotation-invariant ways.
        """
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 10, size=count)
        rows, cols = np.mgrid[0:GRID_SIZE, 0:GRID_SIZE].astype(np.float64)
        center = (GRID_SIZE - 1) / 2.0
        images = np.zeros((count, GRID_SIZE, GRID_SIZE))
        for i, label in enumerate(labels):
            blobs = 1 + label // 2
            radius = 4.0 + 4.0 * (label % 2)
            phase = 0.3 * label
            for k in range(blobs):
                angle = phase + 2.0 * math.pi * k / blobs
                cx = center + radius * math.cos(angle) + jitter * rng.standard_normal()
                cy = center - radius * math.sin(angle) + jitter * rng.standard_normal()
                brightness = rng.uniform(0.8, 1.0)
                images[i] += brightness * np.exp(-((cols - cx) ** 2 + (rows - cy) ** 2) / (2.0 * sigma ** 2))
        return np.clip(images, 0.0, 1.0), labels

    @staticmethod
    def generate_digit_dataset(data_cfg, seed):
        """
        Train on upright point sets; validation and test are rotated, and
        test-upright holds the test images without rotation.
        """
        counts = (data_cfg.n_train, data_cfg.n_val, data_cfg.n_test)
        total = sum(counts)
        if data_cfg.images:
            images = DataService.parse_idx(data_cfg.images).data
            if not data_cfg.labels:
                raise DataIOError("data.labels is required together with data.images")
            labels = DataService.parse_idx(data_cfg.labels, scale=False).data
            if len(images) < total:
                raise DataIOError(f"{data_cfg.images} holds {len(images)} images, {total} requested")
            images, labels = images[:total], labels[:total]
        else:
            logger.info("no IDX files configured, using synthetic blob digits")
            images, labels = DataService.synthetic_digits(total, seed)

        bounds = np.cumsum((0,) + counts)
        plan = {
            "train": (0, False),
            "val": (1, True),
            "test": (2, True),
            "test-upright": (2, False),
        }
        splits = {}
        for name, (part, rotate) in plan.items():
            lo, hi = bounds[part], bounds[part + 1]
            digits = DataService.build_rotated_pointset(
                images[lo:hi], labels[lo:hi], data_cfg.threshold, data_cfg.points, rotate, seed + part + 1)
            splits[name] = Split.from_digits(name, digits, data_cfg.points)
        return splits

    # ================= AUGMENTATION =================

    @staticmethod
    def augment(batch, spec, rng, rapidity=None):
        """Fresh group element per example on the equivariant channel; labels untouched"""
        transforms = GroupService.sample_elements(spec, rng, len(batch), rapidity=rapidity)
        return Batch(x=transforms @ batch.x, labels=batch.labels, side=batch.side)

    # ================= FILES =================

    @staticmethod
    def _split_rows(split):
        if split.kind == "particle":
            width = 16
            rows = [np.append(np.swapaxes(e.momenta, -1, -2).reshape(-1), e.label) for e in split.records()]
        else:
            width = 3 * split.x.shape[-1]
            rows = [
                np.concatenate([d.values.reshape(-1), np.swapaxes(d.coords, -1, -2).reshape(-1), [d.label]])
                for d in split.records()
            ]
        return np.stack(rows).astype(np.float64) if rows else np.zeros((0, width + 1))

    @staticmethod
    def _split_from_rows(name, kind, rows, points=None):
        if kind == "particle":
            events = [ParticleEvent(momenta=np.ascontiguousarray(row[:16].reshape(4, 4).T), label=float(row[-1]))
                      for row in rows]
            return Split.from_events(name, events)
        digits = [
            PointSetDigit(values=row[:points].reshape(1, points),
                          coords=np.ascontiguousarray(row[points:3 * points].reshape(points, 2).T),
                          label=int(row[-1]))
            for row in rows
        ]
        return Split.from_digits(name, digits, points)

    @staticmethod
    def save_splits(directory, splits, task, seed, points=None):
        """One CSV per split (column-major momenta or values then coordinates, label last) plus a JSON sidecar"""
        try:
            os.makedirs(directory, exist_ok=True)
            for name, split in splits.items():
                rows = DataService._split_rows(split)
                width = rows.shape[1] - 1
                header = ",".join([f"f{i}" for i in range(width)] + ["label"])
                np.savetxt(os.path.join(directory, f"{name}.csv"), rows, delimiter=",", header=header,
                           comments="", fmt="%.17g")
            sidecar = {
                "task": task,
                "seed": int(seed),
                "counts": {name: len(split) for name, split in splits.items()},
                "points": points,
                "generator_version": GENERATOR_VERSION,
            }
            with open(os.path.join(directory, SIDECAR), "w", encoding="utf-8") as fh:
                json.dump(sidecar, fh, indent=2, sort_keys=True)
        except OSError as exc:
            raise DataIOError(f"cannot write dataset to {directory}: {exc}") from exc
        logger.info("dataset written to %s", directory)
        return sidecar

    @staticmethod
    def load_splits(directory):
        """(splits, sidecar) written by save_splits"""
        sidecar_path = os.path.join(directory, SIDECAR)
        if not os.path.exists(sidecar_path):
            raise DataIOError(f"no dataset found in {directory} (missing {SIDECAR})")
        try:
            with open(sidecar_path, "r", encoding="utf-8") as fh:
                sidecar = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"dataset sidecar is not valid JSON: {exc}") from exc
        if sidecar.get("generator_version") != GENERATOR_VERSION:
            raise FormatError(f"dataset generator version {sidecar.get('generator_version')} is not supported")

        kind = "particle" if sidecar["task"] == "particle" else "pointset"
        splits = {}
        for name, count in sidecar["counts"].items():
            path = os.path.join(directory, f"{name}.csv")
            try:
                rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            except OSError as exc:
                raise DataIOError(f"cannot read {path}: {exc}") from exc
            except ValueError as exc:
                raise FormatError(f"malformed dataset file {path}: {exc}") from exc
            if len(rows) != count:
                raise FormatError(f"{path} holds {len(rows)} rows, sidecar says {count}")
            splits[name] = DataService._split_from_rows(name, kind, rows, sidecar.get("points"))
        return splits, sidecar

    @staticmethod
    def generate(cfg, streams):
        """Splits for the configured task, seeded from the data stream"""
        seed = streams.seed("data")
        if cfg.task == "particle":
            data = cfg.data
            return DataService.generate_particle_dataset(
                data.n_train, data.n_val, data.n_test, seed, scale=data.scale, rapidity=data.boost_rapidity), seed
        return DataService.generate_digit_dataset(cfg.data, seed), seed
