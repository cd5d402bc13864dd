"""Binary file formats for models and training datasets.

Model file ("LON1"): magic, u32 format version, length-prefixed config
JSON, then each parameter in canonical layer order as
[u16 name length][name][u8 ndim][u32 dims...][little-endian float64 data].

Dataset file ("LDS1"): magic, u32 version, length-prefixed meta JSON
(raster shape, feature dims, cell count, record count), then one
length-prefixed record per sample: raster as uint8 (value = round(255*p)),
actor and path features as little-endian float64, labels as int8.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ValidationError
from .config import ACTOR_FEATURE_DIM, PATH_FEATURE_DIM, LonConfig
from .net import LonModel, iter_param_shapes

MODEL_MAGIC = b"LON1"
DATASET_MAGIC = b"LDS1"
FORMAT_VERSION = 1


def save_model(model: LonModel, path) -> None:
    cfg_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<I", len(model.params)))
        for name, arr in model.params.items():
            blob = name.encode()
            fh.write(struct.pack("<H", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> LonModel:
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise ValidationError(f"{path}: not a model file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported model format v{version}")
        (n,) = struct.unpack("<I", fh.read(4))
        cfg = LonConfig.from_dict(json.loads(fh.read(n).decode()))
        (count,) = struct.unpack("<I", fh.read(4))
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(size * 8), dtype="<f8").reshape(shape)
            params[name] = data.astype(float)
    expected = dict(iter_param_shapes(cfg))
    if set(params) != set(expected):
        raise ValidationError(f"{path}: parameter set does not match the config")
    for name, arr in params.items():
        if arr.shape != expected[name]:
            raise ValidationError(f"{path}: {name} has shape {arr.shape}, "
                                  f"expected {expected[name]}")
    return LonModel(cfg, {name: params[name] for name in expected})


class LonDataset:
    """In-memory training set: quantized rasters plus float features and
    int8 labels, in insertion order."""

    def __init__(self, raster_shape, rasters=None, actor=None, path=None, labels=None):
        self.raster_shape = tuple(raster_shape)
        n = 0 if rasters is None else len(rasters)
        self.rasters = (np.zeros((0, *self.raster_shape), np.uint8)
                        if rasters is None else np.asarray(rasters, np.uint8))
        self.actor = (np.zeros((0, ACTOR_FEATURE_DIM))
                      if actor is None else np.asarray(actor, float))
        self.path = (np.zeros((0, PATH_FEATURE_DIM))
                     if path is None else np.asarray(path, float))
        self.labels = (np.zeros((0, 0), np.int8)
                       if labels is None else np.asarray(labels, np.int8))
        if not (len(self.rasters) == len(self.actor) == len(self.path) == len(self.labels)):
            raise ValidationError("dataset arrays disagree on record count")

    def __len__(self) -> int:
        return len(self.rasters)

    @classmethod
    def from_records(cls, records) -> "LonDataset":
        """Build from (FeatureBundle, CellLabels) pairs."""
        records = list(records)
        if not records:
            raise ValidationError("dataset needs at least one record")
        raster_shape = records[0][0].raster.shape
        rasters = np.stack([np.round(255.0 * b.raster).astype(np.uint8)
                            for b, _ in records])
        actor = np.stack([b.actor for b, _ in records])
        path = np.stack([b.path for b, _ in records])
        labels = np.stack([l.labels for _, l in records])
        return cls(raster_shape, rasters, actor, path, labels)

    def batch(self, indices):
        """Dequantized float arrays for the given record indices."""
        idx = np.asarray(indices)
        return (self.rasters[idx].astype(float) / 255.0,
                self.actor[idx], self.path[idx], self.labels[idx])

    def save(self, path) -> None:
        meta = {
            "raster_shape": list(self.raster_shape),
            "actor_dim": int(self.actor.shape[1]),
            "path_dim": int(self.path.shape[1]),
            "cells": int(self.labels.shape[1]),
            "records": len(self),
        }
        blob = json.dumps(meta, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(DATASET_MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for i in range(len(self)):
                payload = (self.rasters[i].tobytes()
                           + np.ascontiguousarray(self.actor[i], "<f8").tobytes()
                           + np.ascontiguousarray(self.path[i], "<f8").tobytes()
                           + self.labels[i].tobytes())
                fh.write(struct.pack("<I", len(payload)))
                fh.write(payload)

    @classmethod
    def load(cls, path) -> "LonDataset":
        with open(path, "rb") as fh:
            if fh.read(4) != DATASET_MAGIC:
                raise ValidationError(f"{path}: not a dataset file")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != FORMAT_VERSION:
                raise ValidationError(f"{path}: unsupported dataset format v{version}")
            (n,) = struct.unpack("<I", fh.read(4))
            meta = json.loads(fh.read(n).decode())
            raster_shape = tuple(meta["raster_shape"])
            raster_bytes = int(np.prod(raster_shape))
            fa, fp, L = meta["actor_dim"], meta["path_dim"], meta["cells"]
            rasters, actor, path_feats, labels = [], [], [], []
            for _ in range(meta["records"]):
                header = fh.read(4)
                if len(header) < 4:
                    raise ValidationError(f"{path}: truncated dataset file")
                (size,) = struct.unpack("<I", header)
                payload = fh.read(size)
                if len(payload) != size:
                    raise ValidationError(f"{path}: truncated record")
                off = 0
                rasters.append(np.frombuffer(
                    payload, np.uint8, raster_bytes, off).reshape(raster_shape))
                off += raster_bytes
                actor.append(np.frombuffer(payload, "<f8", fa, off))
                off += fa * 8
                path_feats.append(np.frombuffer(payload, "<f8", fp, off))
                off += fp * 8
                labels.append(np.frombuffer(payload, np.int8, L, off))
        return cls(raster_shape, np.stack(rasters), np.stack(actor),
                   np.stack(path_feats), np.stack(labels))
