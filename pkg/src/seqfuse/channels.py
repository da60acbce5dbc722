"""Channel objects, the template database, and build/localize plumbing.

A channel turns a frame (image and/or activation tensor) into a descriptor
and compares a query descriptor against the packed template block. The
database serializes each channel's template block as one tensor file plus
a YAML manifest carrying channel parameters and mutable state, so a query
run reconstructs exactly the pipeline the database was built with.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .config import GENERIC_PREFIX, RunConfig
from .dataset_io import (FrameSource, IngestionError, load_frame,
                         read_tensor, write_tensor)
from .descriptors import (KeypointSet, RunningStats, cnn_argmax_keypoints,
                          cnn_pyramid_descriptor, cosine_distance_column,
                          hog_descriptor, keypoint_distance_column,
                          sad_descriptor, sad_distance_column)

DB_MANIFEST = "manifest.yaml"
DB_VERSION = 1


@dataclass
class FrameBundle:
    """One frame's raw inputs: the grayscale raster and, when a CNN channel
    is active, its (F, H, W) activation tensor."""

    frame_id: int
    stem: str
    image: np.ndarray | None = None
    tensor: np.ndarray | None = None


def resolve_tensor_path(tensor_dir: str | Path, stem: str,
                        layer: str | None = None) -> Path:
    """Locate the tensor file for a frame, optionally pinned to one layer.

    Files follow ``<stem>.sqft`` or ``<stem>_<layer>.sqft``; with no layer
    configured an unambiguous single candidate is required.
    """
    tensor_dir = Path(tensor_dir)
    if layer:
        path = tensor_dir / f"{stem}_{layer}.sqft"
        if not path.is_file():
            raise IngestionError(f"no tensor file for frame {stem!r} layer {layer!r}: {path}")
        return path
    plain = tensor_dir / f"{stem}.sqft"
    if plain.is_file():
        return plain
    candidates = sorted(tensor_dir.glob(f"{stem}_*.sqft"))
    if len(candidates) == 1:
        return candidates[0]
    if not candidates:
        raise IngestionError(f"no tensor file for frame {stem!r} in {tensor_dir}")
    names = ", ".join(p.name for p in candidates)
    raise IngestionError(
        f"multiple tensor files for frame {stem!r} ({names}); set tensor_layer")


class Channel:
    """Base interface; subclasses fill in descriptor and distance logic."""

    kind = "base"
    needs_image = False
    needs_tensor = False

    def __init__(self, name: str, spec: str):
        self.name = name
        self.spec = spec

    def describe(self, bundle: FrameBundle):
        raise NotImplementedError

    def pack(self, descriptors: list) -> np.ndarray:
        block = np.stack([np.asarray(d, dtype=np.float64) for d in descriptors])
        if block.ndim != 2:
            raise ValueError(f"channel {self.name}: descriptors are not flat vectors")
        return block

    def column(self, descriptor, templates: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def state_dict(self) -> dict:
        return {}

    def load_state(self, state: dict) -> None:
        pass

    # template block <-> (F, H, W) tensor-file payload
    def to_payload(self, templates: np.ndarray) -> np.ndarray:
        return templates[:, None, :]

    def from_payload(self, payload: np.ndarray) -> np.ndarray:
        return payload[:, 0, :].astype(np.float64)

    def _image(self, bundle: FrameBundle) -> np.ndarray:
        if bundle.image is None:
            raise IngestionError(f"channel '{self.name}' requires image frames")
        return bundle.image

    def _tensor(self, bundle: FrameBundle) -> np.ndarray:
        if bundle.tensor is None:
            raise IngestionError(f"channel '{self.name}' requires tensor files")
        return bundle.tensor


class SadChannel(Channel):
    kind = "sad"
    needs_image = True

    def __init__(self, patch_size: int = 8, metric: str = "cosine",
                 name: str = "sad", spec: str = "sad"):
        super().__init__(name, spec)
        self.patch_size = int(patch_size)
        self.metric = metric

    def describe(self, bundle: FrameBundle) -> np.ndarray:
        return sad_descriptor(self._image(bundle), self.patch_size)

    def column(self, descriptor, templates) -> np.ndarray:
        if self.metric == "absdiff":
            return sad_distance_column(descriptor, templates)
        return cosine_distance_column(descriptor, templates)

    def params(self) -> dict:
        return {"patch_size": self.patch_size, "metric": self.metric}


class HogChannel(Channel):
    kind = "hog"
    needs_image = True

    def __init__(self, name: str = "hog", spec: str = "hog"):
        super().__init__(name, spec)

    def describe(self, bundle: FrameBundle) -> np.ndarray:
        return hog_descriptor(self._image(bundle))

    def column(self, descriptor, templates) -> np.ndarray:
        return cosine_distance_column(descriptor, templates)


class PyramidChannel(Channel):
    kind = "pyramid"
    needs_tensor = True

    def __init__(self, name: str = "cnn-pyramid", spec: str = "cnn-pyramid"):
        super().__init__(name, spec)
        self.stats: RunningStats | None = None

    def describe(self, bundle: FrameBundle) -> np.ndarray:
        maps = self._tensor(bundle)
        if self.stats is None:
            self.stats = RunningStats(maps.shape[0])
        return cnn_pyramid_descriptor(maps, self.stats)

    def column(self, descriptor, templates) -> np.ndarray:
        return cosine_distance_column(descriptor, templates)

    def state_dict(self) -> dict:
        return {} if self.stats is None else {"stats": self.stats.state_dict()}

    def load_state(self, state: dict) -> None:
        if "stats" in state:
            self.stats = RunningStats.from_state(state["stats"])


class KeypointChannel(Channel):
    kind = "keypoint"
    needs_tensor = True

    def __init__(self, name: str = "cnn-argmax", spec: str = "cnn-argmax"):
        super().__init__(name, spec)
        self.map_height: int | None = None
        self.map_width: int | None = None

    def describe(self, bundle: FrameBundle) -> KeypointSet:
        kps = cnn_argmax_keypoints(self._tensor(bundle))
        if self.map_height is None:
            self.map_height, self.map_width = kps.map_height, kps.map_width
        elif (kps.map_height, kps.map_width) != (self.map_height, self.map_width):
            raise IngestionError(
                f"channel '{self.name}': tensor geometry changed from "
                f"{self.map_height}x{self.map_width} to {kps.map_height}x{kps.map_width}")
        return kps

    def pack(self, descriptors: list) -> np.ndarray:
        return np.stack([k.coords.astype(np.float64) for k in descriptors])

    def column(self, descriptor: KeypointSet, templates) -> np.ndarray:
        return keypoint_distance_column(descriptor, templates,
                                        self.map_height, self.map_width)

    def state_dict(self) -> dict:
        if self.map_height is None:
            return {}
        return {"map_height": self.map_height, "map_width": self.map_width}

    def load_state(self, state: dict) -> None:
        if "map_height" in state:
            self.map_height = int(state["map_height"])
            self.map_width = int(state["map_width"])

    def to_payload(self, templates: np.ndarray) -> np.ndarray:
        return templates

    def from_payload(self, payload: np.ndarray) -> np.ndarray:
        return payload.astype(np.float64)


class GenericTensorChannel(Channel):
    """Ingests precomputed per-frame tensors from its own directory and
    compares them as flattened vectors."""

    kind = "generic"

    def __init__(self, path: str | Path, name: str, spec: str,
                 layer: str | None = None):
        super().__init__(name, spec)
        self.path = Path(path)
        self.layer = layer

    def describe(self, bundle: FrameBundle) -> np.ndarray:
        tensor = read_tensor(resolve_tensor_path(self.path, bundle.stem, self.layer))
        return tensor.astype(np.float64).ravel()

    def column(self, descriptor, templates) -> np.ndarray:
        return cosine_distance_column(descriptor, templates)

    def params(self) -> dict:
        return {"layer": self.layer}


def make_channels(config: RunConfig) -> list[Channel]:
    """Instantiate the configured channel list in order."""
    out: list[Channel] = []
    generic = 0
    for spec in config.channels:
        if spec == "sad":
            out.append(SadChannel(patch_size=config.patch_size,
                                  metric=config.sad_metric))
        elif spec == "hog":
            out.append(HogChannel())
        elif spec == "cnn-pyramid":
            out.append(PyramidChannel())
        elif spec == "cnn-argmax":
            out.append(KeypointChannel())
        elif spec.startswith(GENERIC_PREFIX):
            generic += 1
            out.append(GenericTensorChannel(spec[len(GENERIC_PREFIX):],
                                            name=f"tensor{generic}", spec=spec,
                                            layer=config.tensor_layer))
        else:  # pragma: no cover - config validation rejects this first
            raise ValueError(f"unknown channel spec {spec!r}")
    return out


_KIND_TO_CLASS = {"sad": SadChannel, "hog": HogChannel, "pyramid": PyramidChannel,
                  "keypoint": KeypointChannel}


class TemplateDatabase:
    """Per-channel template blocks over a common set of reference frames."""

    def __init__(self, frame_ids: list[int], stems: list[str],
                 channel_entries: list[dict], templates: dict[str, np.ndarray],
                 meta: dict | None = None):
        if len(frame_ids) != len(stems):
            raise ValueError("frame id and stem lists disagree")
        n = len(frame_ids)
        for name, block in templates.items():
            if block.shape[0] != n:
                raise ValueError(
                    f"channel {name!r} covers {block.shape[0]} templates, expected {n}")
        self.frame_ids = [int(i) for i in frame_ids]
        self.stems = list(stems)
        self.channel_entries = channel_entries
        self.templates = templates
        self.meta = meta or {}

    @property
    def n_templates(self) -> int:
        return len(self.frame_ids)

    @property
    def channel_names(self) -> list[str]:
        return [e["name"] for e in self.channel_entries]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        for entry in self.channel_entries:
            name = entry["name"]
            channel = _rebuild_channel(entry)
            payload = channel.to_payload(self.templates[name])
            write_tensor(payload.astype(np.float32), path / f"{name}.sqft")
        manifest = {
            "version": DB_VERSION,
            "frame_ids": self.frame_ids,
            "stems": self.stems,
            "channels": self.channel_entries,
            "meta": self.meta,
        }
        (path / DB_MANIFEST).write_text(yaml.safe_dump(manifest, sort_keys=False))

    @classmethod
    def load(cls, path: str | Path) -> "TemplateDatabase":
        path = Path(path)
        manifest_path = path / DB_MANIFEST
        if not manifest_path.is_file():
            raise IngestionError(f"no database manifest at {manifest_path}")
        manifest = yaml.safe_load(manifest_path.read_text())
        if not isinstance(manifest, dict) or manifest.get("version") != DB_VERSION:
            raise IngestionError(f"unsupported database manifest at {manifest_path}")
        templates = {}
        for entry in manifest["channels"]:
            name = entry["name"]
            tensor_path = path / f"{name}.sqft"
            if not tensor_path.is_file():
                raise IngestionError(f"database is missing templates for channel {name!r}")
            channel = _rebuild_channel(entry)
            templates[name] = channel.from_payload(read_tensor(tensor_path))
        return cls(frame_ids=manifest["frame_ids"], stems=manifest["stems"],
                   channel_entries=manifest["channels"], templates=templates,
                   meta=manifest.get("meta", {}))


def _rebuild_channel(entry: dict, generic_path: str | Path | None = None) -> Channel:
    kind = entry["kind"]
    params = entry.get("params", {})
    if kind == "generic":
        if generic_path is None:
            generic_path = entry["spec"][len(GENERIC_PREFIX):]
        channel = GenericTensorChannel(generic_path, name=entry["name"],
                                       spec=entry["spec"], layer=params.get("layer"))
    elif kind in _KIND_TO_CLASS:
        channel = _KIND_TO_CLASS[kind](**params) if params else _KIND_TO_CLASS[kind]()
        channel.name, channel.spec = entry["name"], entry["spec"]
    else:
        raise IngestionError(f"database names unknown channel kind {kind!r}")
    channel.load_state(entry.get("state", {}))
    return channel


def channels_from_db(db: TemplateDatabase, config: RunConfig) -> list[Channel]:
    """Reconstruct the database's channel pipeline for a query run.

    Channel parameters and state come from the database manifest; only
    generic-tensor channels take their (query-side) directories from the
    current config, matched positionally.
    """
    query_generic = [s[len(GENERIC_PREFIX):] for s in config.channels
                     if s.startswith(GENERIC_PREFIX)]
    out = []
    used = 0
    for entry in db.channel_entries:
        if entry["kind"] == "generic":
            if used >= len(query_generic):
                raise IngestionError(
                    f"database channel {entry['name']!r} needs a query-side "
                    f"{GENERIC_PREFIX}<dir> entry in the config")
            out.append(_rebuild_channel(entry, generic_path=query_generic[used]))
            used += 1
        else:
            out.append(_rebuild_channel(entry))
    return out


def _make_bundle(source: FrameSource, frame_id: int, channels: list[Channel],
                 tensor_dir: str | Path | None, layer: str | None) -> FrameBundle:
    stem = source.paths[frame_id].stem
    image = None
    if any(c.needs_image for c in channels):
        image = load_frame(source, frame_id)
    tensor = None
    if any(c.needs_tensor for c in channels):
        if tensor_dir is None:
            needy = next(c for c in channels if c.needs_tensor)
            raise IngestionError(
                f"channel '{needy.name}' requires tensor files; provide a tensor directory")
        tensor = read_tensor(resolve_tensor_path(tensor_dir, stem, layer))
    return FrameBundle(frame_id=frame_id, stem=stem, image=image, tensor=tensor)


def build_database(config: RunConfig, frames_dir: str | Path,
                   tensor_dir: str | Path | None = None) -> TemplateDatabase:
    """Describe every reference frame through every configured channel."""
    source = FrameSource.from_directory(frames_dir, stride=config.stride)
    channels = make_channels(config)
    collected: dict[str, list] = {c.name: [] for c in channels}
    for frame_id in source.frame_ids:
        bundle = _make_bundle(source, frame_id, channels, tensor_dir,
                              config.tensor_layer)
        for c in channels:
            collected[c.name].append(c.describe(bundle))
    templates = {c.name: c.pack(collected[c.name]) for c in channels}
    entries = [{"name": c.name, "spec": c.spec, "kind": c.kind,
                "params": c.params(), "state": c.state_dict()} for c in channels]
    meta = {"source": str(frames_dir), "stride": config.stride,
            "n_frames": len(source)}
    return TemplateDatabase(frame_ids=list(source.frame_ids),
                            stems=[source.paths[i].stem for i in source.frame_ids],
                            channel_entries=entries, templates=templates, meta=meta)


def localizer_for(db: TemplateDatabase, channels: list[Channel], config: RunConfig):
    """Build a SequenceLocalizer wired to this database and channel list."""
    from .controller import SequenceLocalizer
    thresholds = [config.o_thresh_for(c.name, c.spec) for c in channels]
    return SequenceLocalizer(
        db.frame_ids, len(channels), o_thresh=thresholds,
        epsilon=config.epsilon, q_t=config.q_t, window=config.window,
        s_min=config.s_min, s_max=config.s_max, v_min=config.v_min,
        v_max=config.v_max, theta_a=config.theta_a, mpf=config.mpf,
        vote_mode=config.vote_mode, dynamic=config.dynamic, tau=config.tau)


def localize_frames(db: TemplateDatabase, config: RunConfig,
                    frames_dir: str | Path,
                    tensor_dir: str | Path | None = None):
    """Yield one MatchDecision per query frame, in frame order."""
    source = FrameSource.from_directory(frames_dir, stride=config.stride)
    channels = channels_from_db(db, config)
    localizer = localizer_for(db, channels, config)
    for frame_id in source.frame_ids:
        bundle = _make_bundle(source, frame_id, channels, tensor_dir,
                              config.tensor_layer)
        columns = [c.column(c.describe(bundle), db.templates[c.name])
                   for c in channels]
        yield localizer.push(frame_id, columns)
