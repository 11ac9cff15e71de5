"""Versioned binary checkpoints.

Layout::

    b"VFR1" | uint32 LE header length | UTF-8 JSON header | float32 LE payload

The header carries the resolved run configuration, the step, free-form
metadata and a manifest of ``{name, shape, offset}`` entries; offsets count
float32 elements from the start of the payload and are gap-free. The JSON is
written with sorted keys and fixed separators so identical state always
serialises to identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import DataError
from .render import SceneModel
from .sampling import OccupancyGrid, density_threshold

MAGIC = b"VFR1"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: RunConfig
    step: int
    arrays: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    # -- construction ---------------------------------------------------
    @classmethod
    def from_state(cls, model: SceneModel, occupancy: OccupancyGrid | None, config: RunConfig,
                   step: int, meta=None) -> "Checkpoint":
        arrays = {name: p.values for name, p in model.parameters().items()}
        if occupancy is not None:
            arrays["occupancy.density_ema"] = occupancy.density_ema
            arrays["occupancy.bitfield"] = occupancy.bitfield
        meta = dict(meta or {})
        meta.setdefault("aabb", model.aabb.tolist())
        return cls(config, int(step), {k: np.asarray(v, dtype=_F32) for k, v in arrays.items()}, meta)

    def to_bytes(self) -> bytes:
        manifest = []
        offset = 0
        for name, arr in self.arrays.items():
            manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += int(arr.size)
        header = {
            "version": FORMAT_VERSION,
            "step": self.step,
            "config": self.config.to_dict(),
            "meta": self.meta,
            "manifest": manifest,
            "payload_floats": offset,
        }
        head = json.dumps(header, sort_keys=True, separators=(",", ": "), indent=1).encode("utf-8")
        payload = b"".join(np.ascontiguousarray(a, dtype=_F32).tobytes() for a in self.arrays.values())
        return MAGIC + struct.pack("<I", len(head)) + head + payload

    @classmethod
    def from_bytes(cls, data: bytes, source="<bytes>") -> "Checkpoint":
        if len(data) < 8 or data[:4] != MAGIC:
            raise DataError(f"{source}: not a checkpoint (bad magic {data[:4]!r})")
        (head_len,) = struct.unpack("<I", data[4:8])
        if 8 + head_len > len(data):
            raise DataError(f"{source}: truncated header")
        try:
            header = json.loads(data[8:8 + head_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{source}: unreadable header: {exc}") from exc
        if header.get("version") != FORMAT_VERSION:
            raise DataError(f"{source}: unsupported checkpoint version {header.get('version')!r}")
        manifest = header.get("manifest", [])
        total = int(header.get("payload_floats", -1))
        expected_len = 8 + head_len + 4 * total
        if total < 0 or len(data) != expected_len:
            raise DataError(f"{source}: length {len(data)} does not match header ({expected_len})")
        payload = np.frombuffer(data, dtype=_F32, offset=8 + head_len)
        arrays = {}
        cursor = 0
        for entry in manifest:
            shape = tuple(entry["shape"])
            size = int(np.prod(shape, dtype=np.int64))
            if entry["offset"] != cursor:
                raise DataError(f"{source}: manifest entry {entry['name']!r} is not contiguous")
            arrays[entry["name"]] = payload[cursor:cursor + size].reshape(shape).copy()
            cursor += size
        if cursor != total:
            raise DataError(f"{source}: manifest covers {cursor} floats, payload has {total}")
        try:
            config = RunConfig.from_dict(header["config"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"{source}: bad config block: {exc}") from exc
        return cls(config, int(header["step"]), arrays, header.get("meta", {}))

    # -- restoring --------------------------------------------------------
    def build_model(self, dtype=np.float32) -> SceneModel:
        from .train import build_model

        cfg = self.config
        model = build_model(np.asarray(self.meta["aabb"]), cfg.grid_config(), cfg.net_config(), cfg.seed,
                            dtype)
        if not any(k.startswith("pilot.") for k in self.arrays):
            model.bundle.discard_pilot()
        params = model.parameters()
        for name, p in params.items():
            if name not in self.arrays:
                raise DataError(f"checkpoint is missing parameter {name!r}")
            if self.arrays[name].shape != p.shape:
                raise DataError(f"parameter {name!r}: shape {self.arrays[name].shape} != {p.shape}")
            p.values[...] = self.arrays[name]
        extra = [k for k in self.arrays if k not in params and not k.startswith("occupancy.")]
        if extra:
            raise DataError(f"checkpoint has unexpected arrays: {extra}")
        return model

    def build_occupancy(self) -> OccupancyGrid | None:
        if "occupancy.density_ema" not in self.arrays:
            return None
        cfg = self.config
        aabb = np.asarray(self.meta["aabb"])
        occ = OccupancyGrid(aabb, cfg.occupancy_resolution, cfg.occupancy_decay,
                            density_threshold(cfg.occupancy_threshold, aabb, cfg.samples_per_ray))
        occ.density_ema[...] = self.arrays["occupancy.density_ema"].reshape(-1)
        occ.bitfield = self.arrays["occupancy.bitfield"].reshape(-1) > 0.5
        return occ


def save_checkpoint(path, checkpoint: Checkpoint):
    Path(path).write_bytes(checkpoint.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return Checkpoint.from_bytes(data, str(path))
