"""Session-scoped fixtures for the trained models and calibrated tasks shared
by the unit suites and the acceptance criteria. Training runs once per
session; everything is seeded and deterministic on a given platform."""

import numpy as np
import pytest

import synthdata
from wlcodec import codec as cd
from wlcodec import complearn as cl


@pytest.fixture(scope="session")
def texture_spec():
    return cl.TaskSpec(seed=100)


@pytest.fixture(scope="session")
def texture_codec(texture_spec):
    """16x image codec trained on the texture-task distribution (disjoint
    generator stream from every evaluation task)."""
    rng = np.random.default_rng(7777)
    corpus = cl.texture_images(rng, 400, texture_spec)
    config = cd.CodecConfig("2d", c_x=3, levels=3, c_z=12, c_hidden=64, decoder_depth=4)
    result = cd.train(config, corpus, steps=300, batch_size=16, lr=1e-3, seed=1)
    return result.model


@pytest.fixture(scope="session")
def desk_codec_4x():
    """Desk-scale 4x image codec (J=3, C_z=48, C_hidden=64, depth 4) trained
    on >=500 96x96 crops of textured scenes; returns (model, held-out crops)
    with the held-out crops drawn from unseen scenes."""
    rng = np.random.default_rng(42)
    scenes = [synthdata.textured_scene(rng) for _ in range(14)]
    train_patches = synthdata.crops(scenes[:11], 560, 96, rng)
    held_out = synthdata.crops(scenes[11:], 60, 96, rng)
    config = cd.CodecConfig("2d", c_x=3, levels=3, c_z=48, c_hidden=64, decoder_depth=4)
    result = cd.train(config, train_patches, steps=500, batch_size=16, lr=1e-3, seed=43)
    return result.model, held_out


@pytest.fixture(scope="session")
def cr_codec_16x():
    """16x codec trained on flat+textured scenes, for compression-ratio
    checks on photograph-like content."""
    rng = np.random.default_rng(5000)
    scenes = [synthdata.flat_textured_scene(rng) for _ in range(10)]
    patches = synthdata.crops(scenes, 500, 64, rng)
    config = cd.CodecConfig("2d", c_x=3, levels=3, c_z=12, c_hidden=64, decoder_depth=4)
    result = cd.train(config, patches, steps=400, batch_size=16, lr=1e-3, seed=5001)
    return result.model


@pytest.fixture(scope="session")
def calibrated_task_200():
    return cl.gen_texture_task(cl.TaskSpec(seed=200))


@pytest.fixture(scope="session")
def calibrated_tasks(calibrated_task_200):
    """Five calibrated task seeds for the compressed-learning criterion."""
    tasks = [calibrated_task_200]
    for seed in (201, 202, 203, 204):
        tasks.append(cl.gen_texture_task(cl.TaskSpec(seed=seed)))
    return tasks
