import numpy as np
import pytest

from eas_exporter.export import export_bundle

CHECKPOINT = "random:layers=4,heads=4,d=64,mels=32,positions=64,seed=0"


@pytest.fixture(scope="session")
def clip_files(tmp_path_factory):
    """Three synthetic mel clips, [num_mel_bins=32, T_mel=128]."""
    clips_dir = tmp_path_factory.mktemp("clips")
    rng = np.random.default_rng(2)
    paths = []
    for i in range(3):
        mel = rng.normal(0.0, 1.0, size=(32, 128)).astype(np.float32)
        path = clips_dir / f"clip{i}.npy"
        np.save(path, mel)
        paths.append(path)
    return paths


@pytest.fixture(scope="session")
def bundle(tmp_path_factory, clip_files):
    out = tmp_path_factory.mktemp("bundle")
    result = export_bundle(CHECKPOINT, clip_files, layers=[1, 2, 3], out_dir=out)
    assert not result.errors
    return result
