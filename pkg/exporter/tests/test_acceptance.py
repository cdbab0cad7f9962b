"""Cross-validation acceptance: the engine's importance/top-k math agrees
with the exporter's independently computed values on real-architecture
encoder tensors (3 layers x 3 clips).
"""

import json

import numpy as np

from eas.archive import load_archive, save_archive
from eas.dataset import load_manifest
from eas.kernels import topk_indices
from eas.sparsify import importance_mean, keep_count


def test_c11_cross_validation_importance_and_kept_sets(bundle):
    checked = 0
    for clip in bundle.clips:
        table = load_archive(clip.archive)
        values = json.loads(clip.values.read_text())["layers"]
        for layer_key, stored in values.items():
            attn = table[f"attn.layer{layer_key}"]
            engine_importance = importance_mean(attn)
            exporter_importance = np.asarray(stored["importance"])
            np.testing.assert_allclose(engine_importance, exporter_importance,
                                       atol=1e-5)
            t = engine_importance.shape[0]
            for s_key, exporter_kept in stored["kept"].items():
                k = keep_count(t, float(s_key))
                engine_kept = topk_indices(engine_importance, k).tolist()
                assert engine_kept == exporter_kept, (
                    f"kept-set mismatch clip={clip.clip} layer={layer_key} s={s_key}"
                )
            checked += 1
    assert checked >= 9  # 3 layers x 3 clips
    print(f"[criterion 11] PASS — importance within 1e-5 and kept sets exact "
          f"on {checked} layer/clip pairs")


def test_round_trip_through_engine_loader(bundle, tmp_path):
    """Exporter-written archives reload bit-exactly via the engine."""
    for i, clip in enumerate(bundle.clips):
        table = load_archive(clip.archive)
        assert {"features"} <= set(table)
        resaved = tmp_path / f"resave{i}.eas"
        save_archive(resaved, table)
        assert resaved.read_bytes() == clip.archive.read_bytes()


def test_manifest_loads_in_engine(bundle):
    examples = load_manifest(bundle.manifest)
    assert len(examples) == 3
    assert all(e.duration_seconds > 0 for e in examples)
    assert all(e.features.shape == (128, 32) for e in examples)
