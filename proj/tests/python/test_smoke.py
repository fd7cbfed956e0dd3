import numpy as np
import pytest

import skinforge as sf


@pytest.fixture(scope="module")
def weights():
    w = sf.GeneratorWeights.initialize(mapping_depth=2, channels_4=16, channels_8=8, seed=11)
    w.ensure_average_latent()
    return w


def test_weights_round_trip(tmp_path, weights):
    path = tmp_path / "w.bin"
    weights.save(path)
    back = sf.GeneratorWeights.load(path)
    assert back == weights
    assert back.has_cached_average
    assert back.config == {"mapping_depth": 2, "channels_4": 16, "channels_8": 8}


def test_corrupt_checkpoint_raises(tmp_path, weights):
    path = tmp_path / "w.bin"
    weights.save(path)
    data = bytearray(path.read_bytes())
    data[40] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(sf.ChecksumError):
        sf.GeneratorWeights.load(path)
    with pytest.raises(sf.SkinforgeError):
        sf.GeneratorWeights.load(tmp_path / "missing.bin")


def test_synthesize_shapes_and_range(weights):
    latent = sf.sample_random_latent(weights, truncation=0.7, seed=3)
    assert latent.shape == (2, 512)
    face = sf.synthesize(weights, latent)
    assert face.shape == (8, 8, 3)
    assert face.min() >= 0.0 and face.max() <= 1.0
    np.testing.assert_array_equal(face, sf.synthesize(weights, latent))


def test_stat_loss_anchor():
    assert sf.stat_loss(np.full((8, 8, 3), 0.5), np.zeros((8, 8, 3))) == 0.5


def test_self_inversion(weights):
    target = sf.synthesize(weights, sf.sample_random_latent(weights, seed=5))
    result = sf.invert(weights, target, steps=300)
    assert result["latent"].shape == (2, 512)
    assert result["mse_term"] / 192 < 1e-3


def test_invert_rejects_tiny_images(weights):
    with pytest.raises(sf.TooSmall):
        sf.invert(weights, np.zeros((4, 4, 3)))


def test_mean_red_edit(weights):
    start = sf.sample_random_latent(weights, seed=2)
    result = sf.edit(weights, start, "red", scorer="mean_red", lambda_l2=0.01)
    before = sf.synthesize(weights, start)[..., 0].mean()
    assert result["rendered"][..., 0].mean() > before
    assert "mean_red" in sf.scorer_names()


def test_embed_extract(tmp_path):
    rng = np.random.default_rng(0)
    face = rng.random((8, 8, 3))
    skin = sf.embed_face(face)
    assert skin.shape == (64, 64, 4) and skin.dtype == np.uint8
    assert np.abs(sf.extract_face(skin) - face).max() <= 1 / 255
    sf.save_skin(skin, tmp_path / "s.png")
    np.testing.assert_array_equal(sf.load_skin(tmp_path / "s.png"), skin)


def test_latent_files(tmp_path, weights):
    latent = sf.average_latent(weights)
    sf.save_latent(latent, tmp_path / "l.bin")
    np.testing.assert_array_equal(sf.load_latent(tmp_path / "l.bin"), latent)


def test_refine_and_train(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    rng = np.random.default_rng(1)
    sf.save_face(rng.random((8, 8, 3)), corpus / "a.png")
    sf.save_face(np.full((8, 8, 3), 0.4), corpus / "flat.png")
    report = sf.refine_corpus(corpus, tmp_path / "refined")
    assert (report["accepted"], report["rejected"]) == (1, 1)
    assert dict((name.split("/")[-1], why) for name, why in report["decisions"])["flat.png"] == "monochrome"

    config = {
        "stage4": {"iterations": 2, "batch_size": 2},
        "stage8": {"iterations": 2, "batch_size": 2},
        "generator": {"mapping_depth": 1, "channels_4": 8, "channels_8": 6},
        "discriminator_channels": 6,
    }
    weights, log = sf.train(tmp_path / "refined", config)
    assert len(log) == 4
    assert all(np.isfinite(r["generator_loss"]) for r in log)
    assert weights.config["channels_8"] == 6
