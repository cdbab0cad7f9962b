import json

import numpy as np
import pytest
import torch

from eas_exporter.export import (
    export_bundle,
    importance_from_attention,
    keep_count_tenths,
    load_checkpoint,
    parse_random_spec,
    topk_ascending,
)

from conftest import CHECKPOINT


def test_random_spec_parsing():
    params = parse_random_spec("layers=2,heads=2,d=32,mels=16,positions=32,seed=5")
    assert params == dict(layers=2, heads=2, d=32, mels=16, positions=32, seed=5)
    with pytest.raises(ValueError, match="unknown"):
        parse_random_spec("width=3")


def test_random_checkpoint_is_seeded():
    a = load_checkpoint("random:seed=3")
    b = load_checkpoint("random:seed=3")
    pa = next(iter(a.parameters())).detach()
    pb = next(iter(b.parameters())).detach()
    assert torch.equal(pa, pb)


def test_export_files_exist(bundle):
    assert len(bundle.clips) == 3
    for clip in bundle.clips:
        assert clip.archive.exists()
        assert clip.values.exists()
        assert clip.seq_len == 64
    assert bundle.manifest is not None
    lines = bundle.manifest.read_text().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[0])
    assert rec["duration_seconds"] == pytest.approx(1.28)


def test_exported_attention_rows_are_softmax(bundle):
    from eas.archive import load_archive

    table = load_archive(bundle.clips[0].archive)
    for l in (1, 2, 3):
        attn = table[f"attn.layer{l}"]
        assert attn.shape == (4, 64, 64)
        np.testing.assert_allclose(attn.sum(-1), 1.0, atol=1e-4)
        hidden = table[f"hidden.layer{l}"]
        assert hidden.shape == (64, 64)


def test_values_file_shape(bundle):
    doc = json.loads(bundle.clips[0].values.read_text())
    assert sorted(doc["layers"]) == ["1", "2", "3"]
    layer = doc["layers"]["2"]
    assert len(layer["importance"]) == 64
    assert sorted(layer["kept"]) == [f"0.{i}" for i in range(1, 10)]
    assert len(layer["kept"]["0.5"]) == 32


def test_keep_count_tenths():
    assert keep_count_tenths(1500, 6) == 600
    assert keep_count_tenths(10, 7) == 3
    assert keep_count_tenths(3, 5) == 2     # half rounds up
    assert keep_count_tenths(5, 3) == 4     # 3.5 -> 4 in exact arithmetic
    assert keep_count_tenths(1, 9) == 1     # clamped


def test_topk_tie_rule():
    imp = torch.tensor([0.5, 0.5, 0.1], dtype=torch.float64)
    assert topk_ascending(imp, 2) == [0, 1]


def test_importance_matches_direct_mean():
    attn = torch.softmax(torch.randn(2, 5, 5, dtype=torch.float64), dim=-1)
    got = importance_from_attention(attn)
    expect = attn.sum(dim=(0, 1)) / (2 * 5)
    assert torch.allclose(got, expect)


def test_bad_clip_contained(tmp_path, clip_files):
    bad = tmp_path / "bad.npy"
    np.save(bad, np.zeros(7, np.float32))  # wrong rank
    result = export_bundle(CHECKPOINT, [clip_files[0], bad], [1],
                           tmp_path / "out")
    assert len(result.clips) == 1
    assert len(result.errors) == 1
    assert "bad.npy" in result.errors[0]["clip"]


def test_layer_out_of_range(tmp_path, clip_files):
    with pytest.raises(ValueError, match="outside"):
        export_bundle(CHECKPOINT, [clip_files[0]], [9], tmp_path / "out")


def test_cli_round(tmp_path, clip_files):
    from eas_exporter.cli import main

    out = tmp_path / "cli_out"
    code = main(["--checkpoint", CHECKPOINT,
                 "--clips", *[str(p) for p in clip_files[:2]],
                 "--layers", "1,3", "--out", str(out)])
    assert code == 0
    assert (out / "clip000.eas").exists()
    assert (out / "clip001.values.json").exists()
    assert (out / "manifest.jsonl").exists()
