#!/usr/bin/env python3
"""Smoke tests for the crvos python module against numpy oracles."""

import json
import os
import sys
import tempfile

import numpy as np

import crvos


def test_coord_channels_match_numpy():
    h, w = 5, 9
    cc = crvos.make_coord_channels(h, w)
    hr = np.linspace(-1, 1, h)[:, None] * np.ones((1, w))
    wr = np.ones((h, 1)) * np.linspace(-1, 1, w)[None, :]
    d = np.hypot(hr, wr)
    cd = 2.0 * d / np.hypot(1, 1) - 1.0
    assert np.allclose(cc[0], hr)
    assert np.allclose(cc[1], wr)
    assert np.allclose(cc[2], cd)


def test_downsample_matches_numpy_block_mean():
    rng = np.random.default_rng(3)
    fg = rng.random((32, 48))
    soft = np.stack([fg, 1.0 - fg])
    coarse = crvos.downsample_mask(soft)
    oracle = fg.reshape(2, 16, 3, 16).mean(axis=(1, 3))
    assert np.allclose(coarse[0], oracle, atol=1e-12)
    assert np.allclose(coarse[0] + coarse[1], 1.0, atol=1e-9)


def test_clue_shape_and_channel_order():
    fg = np.zeros((32, 32))
    soft = np.stack([fg, 1.0 - fg])
    clue = crvos.build_clue(soft)
    assert clue.shape == (5, 2, 2)
    assert np.allclose(clue[0], 0.0)  # coarse fg
    assert np.allclose(clue[1], 1.0)  # coarse bg


def test_metrics_trivial_cases():
    a = np.zeros((16, 16), dtype=np.int32)
    a[4:12, 4:12] = 1
    b = np.zeros_like(a)
    assert crvos.jaccard(a, a) == 1.0
    assert crvos.jaccard(a, b) == 0.0
    assert crvos.boundary_f(a, a) == 1.0
    assert abs(crvos.nll_loss(np.full((2, 16, 16), 0.5), b) - np.log(2)) < 1e-12


def test_network_forward_and_propagation():
    net = crvos.Network(variant="III", width_scale=0.125, seed=1)
    assert net.variant == "III"
    audit = net.audit()
    assert audit["deconv_in_refine_modules"] == 3
    assert audit["bilinear_in_refine_modules"] == 0

    spec = {"height": 64, "width": 64, "length": 4, "seed": 11, "translate_x": 1}
    frames, masks = crvos.generate_synthetic(json.dumps(spec))
    soft = net.segment(frames[1], np.stack([(masks[0] == 1) * 1.0, (masks[0] != 1) * 1.0]))
    assert soft.shape == (2, 64, 64)
    assert np.allclose(soft.sum(axis=0), 1.0, atol=1e-9)

    out = net.run_sequence(frames, masks[0])
    assert out.shape == (4, 64, 64)
    assert (out[0] == masks[0]).all()  # frame 0 verbatim

    report = net.benchmark(frames, masks[0], 1)
    assert report["frames_processed"] == 3
    assert report["fps"] > 0


def test_training_reduces_loss_and_checkpoint_roundtrip():
    spec = {"height": 48, "width": 48, "length": 3, "seed": 2, "translate_x": 0,
            "target_size": 18}
    frames, masks = crvos.generate_synthetic(json.dumps(spec))
    net = crvos.Network(variant="III", width_scale=0.125, seed=3)
    first = crvos.train_clip(net, frames, masks, steps=1, lr=3e-3)
    last = crvos.train_clip(net, frames, masks, steps=60, lr=3e-3)
    assert last < first

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.ckpt")
        net.save(path, step=61)
        loaded = crvos.Network.load(path)
        a = net.run_sequence(frames, masks[0])
        b = loaded.run_sequence(frames, masks[0])
        assert (a == b).all()


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok: {t.__name__}")
    print(f"{len(tests)} smoke tests passed")


if __name__ == "__main__":
    sys.exit(main())
