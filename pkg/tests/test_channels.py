"""Channel pipelines, template database build/save/load, and localization."""

import numpy as np
import pytest
import yaml

import cv2

from seqfuse.channels import (TemplateDatabase, build_database,
                              channels_from_db, localize_frames,
                              make_channels, resolve_tensor_path)
from seqfuse.config import RunConfig
from seqfuse.dataset_io import IngestionError, write_tensor

N_FRAMES = 24


def _write_frames(path, n=N_FRAMES, seed=0):
    """Blurred random imagery, one 64x96 grayscale PNG per frame."""
    path.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        img = rng.integers(0, 256, size=(64, 96), dtype=np.uint8)
        img = cv2.GaussianBlur(img, (0, 0), 1.5)
        cv2.imwrite(str(path / f"frame_{i:03d}.png"), img)
    return path


def _write_tensors(path, n=N_FRAMES, shape=(4, 6, 5), seed=1, suffix=""):
    path.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        t = rng.normal(size=shape).astype(np.float32)
        write_tensor(t, path / f"frame_{i:03d}{suffix}.sqft")
    return path


@pytest.fixture(scope="module")
def frames_dir(tmp_path_factory):
    return _write_frames(tmp_path_factory.mktemp("frames"))


# ---------------------------------------------------------------------------
# Building and serializing the template database
# ---------------------------------------------------------------------------

def test_build_database_image_channels(frames_dir):
    db = build_database(RunConfig(), frames_dir)
    assert db.n_templates == N_FRAMES
    assert db.channel_names == ["sad", "hog"]
    assert db.templates["sad"].shape == (N_FRAMES, 2048)
    assert db.templates["hog"].shape == (N_FRAMES, 6156)
    assert db.frame_ids == list(range(N_FRAMES))
    assert db.stems[0] == "frame_000" and db.stems[-1] == "frame_023"
    assert db.meta["n_frames"] == N_FRAMES


def test_build_database_honors_stride(frames_dir):
    db = build_database(RunConfig(stride=5), frames_dir)
    assert db.frame_ids == [0, 5, 10, 15, 20]
    assert db.templates["sad"].shape[0] == 5


def test_database_roundtrip_is_float32_exact(frames_dir, tmp_path):
    db = build_database(RunConfig(), frames_dir)
    db.save(tmp_path / "db")
    loaded = TemplateDatabase.load(tmp_path / "db")
    assert loaded.frame_ids == db.frame_ids
    assert loaded.stems == db.stems
    assert loaded.channel_entries == db.channel_entries
    for name in db.channel_names:
        expected = db.templates[name].astype(np.float32).astype(np.float64)
        np.testing.assert_array_equal(loaded.templates[name], expected)


def test_localize_identity_traverse(frames_dir, tmp_path):
    config = RunConfig()
    db = build_database(config, frames_dir)
    db.save(tmp_path / "db")
    loaded = TemplateDatabase.load(tmp_path / "db")
    decisions = list(localize_frames(loaded, config, frames_dir))
    assert [d.template_index for d in decisions] == list(range(N_FRAMES))
    assert all(d.accepted for d in decisions)
    assert [d.frame_id for d in decisions] == list(range(N_FRAMES))


# ---------------------------------------------------------------------------
# Activation-tensor channels
# ---------------------------------------------------------------------------

def test_tensor_channels_build_and_localize(frames_dir, tmp_path):
    tensor_dir = _write_tensors(tmp_path / "tensors")
    config = RunConfig(channels=["cnn-pyramid", "cnn-argmax"])
    db = build_database(config, frames_dir, tensor_dir)
    assert db.templates["cnn-pyramid"].shape == (N_FRAMES, 20)  # 5 scores x F=4
    assert db.templates["cnn-argmax"].shape == (N_FRAMES, 4, 2)

    by_name = {e["name"]: e for e in db.channel_entries}
    assert by_name["cnn-pyramid"]["state"]["stats"]["count"] == N_FRAMES
    assert by_name["cnn-argmax"]["state"] == {"map_height": 6, "map_width": 5}

    db.save(tmp_path / "db")
    loaded = TemplateDatabase.load(tmp_path / "db")
    decisions = list(localize_frames(loaded, config, frames_dir, tensor_dir))
    # the first reference survey frame standardizes to the zero vector, so
    # the pyramid channel cannot vouch for the earliest queries
    assert [d.template_index for d in decisions[2:]] == list(range(2, N_FRAMES))


def test_tensor_channels_need_a_tensor_dir(frames_dir):
    config = RunConfig(channels=["cnn-pyramid"])
    with pytest.raises(IngestionError, match="requires tensor files"):
        build_database(config, frames_dir)


def test_keypoint_channel_rejects_geometry_changes(frames_dir, tmp_path):
    tensor_dir = _write_tensors(tmp_path / "tensors", n=N_FRAMES - 1)
    rng = np.random.default_rng(9)
    write_tensor(rng.normal(size=(4, 3, 3)).astype(np.float32),
                 tensor_dir / f"frame_{N_FRAMES - 1:03d}.sqft")
    config = RunConfig(channels=["cnn-argmax"])
    with pytest.raises(IngestionError, match="geometry"):
        build_database(config, frames_dir, tensor_dir)


# ---------------------------------------------------------------------------
# Tensor file resolution
# ---------------------------------------------------------------------------

def test_resolve_tensor_path_rules(tmp_path):
    t = np.zeros((1, 1, 1), dtype=np.float32)
    write_tensor(t, tmp_path / "a.sqft")
    write_tensor(t, tmp_path / "b_conv3.sqft")
    write_tensor(t, tmp_path / "c_conv3.sqft")
    write_tensor(t, tmp_path / "c_conv5.sqft")
    write_tensor(t, tmp_path / "d.sqft")
    write_tensor(t, tmp_path / "d_conv3.sqft")

    assert resolve_tensor_path(tmp_path, "a").name == "a.sqft"
    assert resolve_tensor_path(tmp_path, "b").name == "b_conv3.sqft"
    assert resolve_tensor_path(tmp_path, "b", "conv3").name == "b_conv3.sqft"
    assert resolve_tensor_path(tmp_path, "d").name == "d.sqft"  # exact wins
    assert resolve_tensor_path(tmp_path, "c", "conv5").name == "c_conv5.sqft"
    with pytest.raises(IngestionError, match="set tensor_layer"):
        resolve_tensor_path(tmp_path, "c")
    with pytest.raises(IngestionError, match="no tensor file"):
        resolve_tensor_path(tmp_path, "zzz")
    with pytest.raises(IngestionError, match="no tensor file"):
        resolve_tensor_path(tmp_path, "b", "conv9")


# ---------------------------------------------------------------------------
# Generic tensor channels
# ---------------------------------------------------------------------------

def test_generic_tensor_channel_end_to_end(frames_dir, tmp_path):
    acts = _write_tensors(tmp_path / "acts", shape=(3, 4, 2), seed=2)
    config = RunConfig(channels=[f"generic-tensor:{acts}", "sad"])
    db = build_database(config, frames_dir)
    assert db.channel_names == ["tensor1", "sad"]
    assert db.templates["tensor1"].shape == (N_FRAMES, 24)

    db.save(tmp_path / "db")
    loaded = TemplateDatabase.load(tmp_path / "db")
    decisions = list(localize_frames(loaded, config, frames_dir))
    assert [d.template_index for d in decisions] == list(range(N_FRAMES))


def test_generic_channel_needs_query_side_directory(frames_dir, tmp_path):
    acts = _write_tensors(tmp_path / "acts", shape=(3, 4, 2), seed=2)
    db = build_database(RunConfig(channels=[f"generic-tensor:{acts}"]),
                        frames_dir)
    with pytest.raises(IngestionError, match="query-side"):
        channels_from_db(db, RunConfig(channels=["sad"]))


def test_make_channels_names_generics_positionally():
    config = RunConfig(channels=["generic-tensor:/x", "hog", "generic-tensor:/y"])
    channels = make_channels(config)
    assert [c.name for c in channels] == ["tensor1", "hog", "tensor2"]


# ---------------------------------------------------------------------------
# Database load failure modes
# ---------------------------------------------------------------------------

def test_load_rejects_missing_manifest(tmp_path):
    with pytest.raises(IngestionError, match="manifest"):
        TemplateDatabase.load(tmp_path)


def test_load_rejects_unknown_version(frames_dir, tmp_path):
    db = build_database(RunConfig(channels=["sad"]), frames_dir)
    db.save(tmp_path / "db")
    manifest = tmp_path / "db" / "manifest.yaml"
    data = yaml.safe_load(manifest.read_text())
    data["version"] = 99
    manifest.write_text(yaml.safe_dump(data))
    with pytest.raises(IngestionError, match="unsupported"):
        TemplateDatabase.load(tmp_path / "db")


def test_load_rejects_missing_channel_payload(frames_dir, tmp_path):
    db = build_database(RunConfig(channels=["sad"]), frames_dir)
    db.save(tmp_path / "db")
    (tmp_path / "db" / "sad.sqft").unlink()
    with pytest.raises(IngestionError, match="missing templates"):
        TemplateDatabase.load(tmp_path / "db")
