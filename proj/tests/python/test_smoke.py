import numpy as np
import pytest

import sourceswap as ss


def grid(seed, c=4, h=32, w=32):
    return np.random.default_rng(seed).standard_normal((c, h, w))


def rect(h, w, r0, c0, r1, c1):
    m = np.zeros((h, w), dtype=bool)
    m[r0 : r1 + 1, c0 : c1 + 1] = True
    return m


def test_split_is_a_partition():
    z = grid(0)
    low, high = ss.split_frequency(z, 0.3)
    assert low.shape == z.shape
    assert np.max(np.abs(low + high - z)) < 1e-10
    assert abs(ss.lpf_response(0.3, 0.3) - 0.5) < 1e-12


def test_perturb_keeps_outside_and_is_deterministic():
    z = grid(1)
    m = rect(32, 32, 8, 8, 20, 24)
    a = ss.perturb(z, m, mode="high-only", seed=5)
    b = ss.perturb(z, m, mode="high-only", seed=5)
    assert np.array_equal(a, b)
    assert np.max(np.abs(a[:, ~m] - z[:, ~m])) < 1e-8
    assert not np.allclose(a[:, m], z[:, m])

    shuffled = ss.perturb(z, m, mode="all", seed=5)
    for c in range(4):
        assert np.array_equal(np.sort(shuffled[c][m]), np.sort(z[c][m]))
    with pytest.raises(ss.Error):
        ss.perturb(z, m, mode="sideways")


def test_zero_denoiser_round_trip_is_exact():
    z0 = grid(2)
    zT = ss.ddim_invert(z0, steps=10, denoiser="zero")
    back = ss.ddim_sample(zT, steps=10, denoiser="zero")
    assert np.max(np.abs(back - z0)) < 1e-12


def test_pair_changes_only_the_masked_area():
    img = np.random.default_rng(3).uniform(size=(3, 32, 32))
    m = rect(32, 32, 8, 8, 23, 23)
    out = ss.synthesize_pair(img, m, seed=1, steps=10, denoiser="zero")
    assert np.max(np.abs(out[:, ~m] - img[:, ~m])) < 1e-8
    assert np.max(np.abs(out[:, m] - img[:, m])) > 1e-3


def test_mask_geometry():
    ok, reason = ss.size_filter(rect(100, 100, 0, 0, 74, 49))
    assert ok and reason == ""
    ok, reason = ss.size_filter(rect(100, 100, 0, 0, 75, 49))
    assert not ok and reason.startswith("mask size")
    fine = rect(10, 10, 3, 3, 6, 6)
    assert ss.boundary_region(fine, 1, 0).sum() == 0
    assert ss.boundary_region(fine, 0, 1).sum() == 20


def test_region_metric():
    src = np.full((3, 10, 10), 0.25)
    res = src.copy()
    res[:, 2, 4] += 0.5
    value, count = ss.region_metric(src, res, rect(10, 10, 3, 3, 6, 6), "mse", dilate_radius=0, rect_margin=1)
    assert count == 20
    assert abs(value - 0.25 / 20) < 1e-15


def test_wire_frames():
    hello = ss.frame_message(10)
    assert hello == bytes([0x53, 0x53, 0x57, 0x50, 1, 0, 10]) + bytes(8)
    framed = ss.frame_message(7, b"abc")
    assert ss.parse_frame(framed) == (7, b"abc", len(framed))
    assert ss.parse_frame(framed[:5]) is None
    with pytest.raises(ss.Error):
        ss.parse_frame(b"XXXXXXXXXXXXXXXXX")


def test_seed_derivation_is_stable():
    assert ss.derive_seed(1, "a") == ss.derive_seed(1, "a")
    assert ss.derive_seed(1, "a") != ss.derive_seed(1, "b")
