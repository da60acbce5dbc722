"""Batch CNN activation extraction over a frame directory.

Frames are preprocessed identically (RGB, 224x224, ImageNet scaling --
the exact recipe is recorded in ``meta.json``), pushed through the chosen
torchvision backbone in batches, and the requested ReLU feature maps are
written one tensor file per frame per layer. A checksum manifest row is
appended for every file; undecodable frames are skipped with a logged
warning and a gap row so downstream runs can account for them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch
from torchvision import models

from .tensorfile import write_tensor_file

log = logging.getLogger("seqfuse_extractor")

INPUT_SIZE = 224
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm", ".tif", ".tiff"}

# Index of each named ReLU output inside the backbone's ``features``
# module. For the VGG architecture the five names address the last ReLU of
# each convolutional block.
LAYER_INDICES = {
    "alexnet": {"conv1": 1, "conv2": 4, "conv3": 7, "conv4": 9, "conv5": 11},
    "vgg16": {"conv1": 3, "conv2": 8, "conv3": 15, "conv4": 22, "conv5": 29},
}

MANIFEST_FIELDS = ["filename", "frame_id", "layer", "f", "h", "w", "sha256",
                   "status"]


@dataclass
class ExtractionJob:
    """Everything one extraction run needs.

    ``weights`` is ``random`` (seeded initialization), ``imagenet``
    (torchvision pretrained), or a path to a saved state dict.
    """

    frames: Path
    out: Path
    layers: list[str] = field(default_factory=lambda: ["conv5"])
    batch_size: int = 8
    arch: str = "alexnet"
    weights: str = "random"
    seed: int = 0

    def __post_init__(self):
        self.frames = Path(self.frames)
        self.out = Path(self.out)
        if self.arch not in LAYER_INDICES:
            raise ValueError(f"unknown architecture {self.arch!r}; "
                             f"expected one of {sorted(LAYER_INDICES)}")
        known = LAYER_INDICES[self.arch]
        bad = [l for l in self.layers if l not in known]
        if bad:
            raise ValueError(f"unknown layers {bad} for {self.arch}; "
                             f"expected a subset of {sorted(known)}")
        if not self.layers:
            raise ValueError("at least one layer is required")
        if len(set(self.layers)) != len(self.layers):
            raise ValueError("duplicate layer names")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


def _build_model(job: ExtractionJob) -> torch.nn.Module:
    ctor = {"alexnet": models.alexnet, "vgg16": models.vgg16}[job.arch]
    if job.weights == "imagenet":
        model = ctor(weights="IMAGENET1K_V1")
    else:
        torch.manual_seed(job.seed)
        model = ctor(weights=None)
        if job.weights != "random":
            state = torch.load(job.weights, map_location="cpu",
                               weights_only=True)
            model.load_state_dict(state)
    model.eval()
    return model


def _preprocess(path: Path) -> np.ndarray | None:
    """Decode and normalize one frame; None when the image is unreadable."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None or img.size == 0:
        return None
    img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    img = cv2.resize(img, (INPUT_SIZE, INPUT_SIZE), interpolation=cv2.INTER_AREA)
    arr = img.astype(np.float32) / 255.0
    arr = (arr - np.array(IMAGENET_MEAN, dtype=np.float32)) \
        / np.array(IMAGENET_STD, dtype=np.float32)
    return arr.transpose(2, 0, 1)  # CHW


def _forward_layers(model: torch.nn.Module, batch: torch.Tensor,
                    indices: dict[str, int]) -> dict[str, torch.Tensor]:
    """Run ``features`` once, capturing the requested intermediate maps."""
    wanted = {idx: name for name, idx in indices.items()}
    captured: dict[str, torch.Tensor] = {}
    x = batch
    last = max(wanted)
    with torch.no_grad():
        for i, module in enumerate(model.features):
            x = module(x)
            if i in wanted:
                captured[wanted[i]] = x
            if i >= last:
                break
    return captured


def extract(job: ExtractionJob) -> dict:
    """Run the job; returns a small summary dict (counts and paths)."""
    if not job.frames.is_dir():
        raise FileNotFoundError(f"frame directory not found: {job.frames}")
    frame_paths = sorted(p for p in job.frames.iterdir()
                         if p.suffix.lower() in IMAGE_EXTENSIONS and p.is_file())
    if not frame_paths:
        raise FileNotFoundError(f"no frames in {job.frames}")
    job.out.mkdir(parents=True, exist_ok=True)

    model = _build_model(job)
    indices = {name: LAYER_INDICES[job.arch][name] for name in job.layers}

    rows: list[dict] = []
    written = 0
    skipped = 0
    pending: list[tuple[int, str, np.ndarray]] = []

    def flush():
        nonlocal written
        if not pending:
            return
        batch = torch.from_numpy(np.stack([p[2] for p in pending]))
        maps = _forward_layers(model, batch, indices)
        for b, (frame_id, stem, _) in enumerate(pending):
            for layer in job.layers:
                tensor = maps[layer][b].numpy()
                name = f"{stem}_{layer}.sqft"
                out_path = job.out / name
                write_tensor_file(tensor, out_path)
                digest = hashlib.sha256(out_path.read_bytes()).hexdigest()
                f, h, w = tensor.shape
                rows.append({"filename": name, "frame_id": frame_id,
                             "layer": layer, "f": f, "h": h, "w": w,
                             "sha256": digest, "status": "ok"})
                written += 1
        pending.clear()

    for frame_id, path in enumerate(frame_paths):
        arr = _preprocess(path)
        if arr is None:
            log.warning("skipping undecodable frame %s", path.name)
            rows.append({"filename": path.name, "frame_id": frame_id,
                         "layer": "", "f": "", "h": "", "w": "",
                         "sha256": "", "status": "skipped"})
            skipped += 1
            continue
        pending.append((frame_id, path.stem, arr))
        if len(pending) >= job.batch_size:
            flush()
    flush()

    manifest = job.out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        writer.writerows(rows)

    meta = {
        "arch": job.arch,
        "weights": job.weights,
        "seed": job.seed,
        "layers": {name: indices[name] for name in job.layers},
        "batch_size": job.batch_size,
        "preprocessing": {
            "color": "RGB",
            "resize": [INPUT_SIZE, INPUT_SIZE],
            "interpolation": "area",
            "scale": "1/255",
            "mean": list(IMAGENET_MEAN),
            "std": list(IMAGENET_STD),
        },
        "torch_version": torch.__version__,
        "device": "cpu",
    }
    meta_path = job.out / "meta.json"
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return {"written": written, "skipped": skipped, "frames": len(frame_paths),
            "manifest": str(manifest), "meta": str(meta_path)}
