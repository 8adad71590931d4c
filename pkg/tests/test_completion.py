import numpy as np
import pytest

from illumkit.completion import PanoLibrary, complete_mirror, complete_nn, rotation_scores


def smooth_pano(rng, h=16, w=32):
    u = np.arange(w) * 2 * np.pi / w
    v = np.arange(h)[:, None] / h
    a = rng.uniform(size=(3, 3))
    img = np.stack([0.5 + 0.2 * a[c, 0] * np.sin(u + 6 * a[c, 1]) + 0.2 * a[c, 2] * v
                    + 0.05 * np.cos(3 * u) * v for c in range(3)], -1)
    return np.clip(img, 0, 1)


def partial_of(img, observed):
    out = img.copy()
    out[~observed] = -1.0
    return out


def random_mask(rng, h=16, w=32):
    m = np.zeros((h, w), bool)
    m[4:12, 5:20] = True
    m |= rng.uniform(size=(h, w)) > 0.9
    return m


def test_exact_match(rng):
    full = smooth_pano(rng)
    obs = random_mask(rng)
    res = complete_nn(partial_of(full, obs), PanoLibrary([("a", smooth_pano(rng)), ("b", full)]))
    assert res.entry_id == "b" and res.shift == 0 and res.score == 0.0
    np.testing.assert_array_equal(res.completed, full)


def test_two_entry_library_picks_closer(rng):
    full = smooth_pano(rng)
    obs = random_mask(rng)
    lib = PanoLibrary([("far", np.clip(full + 0.3, 0, 1)), ("near", np.clip(full - 0.05, 0, 1))])
    assert complete_nn(partial_of(full, obs), lib).entry_id == "near"


def test_planted_rotation_37(rng):
    src = smooth_pano(rng, 32, 64)
    m = np.zeros((32, 64), bool)
    m[10:20, 3:30] = True
    rotated = np.roll(src, 37, axis=1)
    res = complete_nn(partial_of(rotated, m), PanoLibrary([("src", src)]))
    assert res.shift == 37 and res.score == 0.0
    assert not np.any(res.completed == -1)


def test_score_rotation_invariant(rng):
    lib = PanoLibrary([("x", smooth_pano(rng)), ("y", smooth_pano(rng))])
    target = smooth_pano(rng)
    obs = random_mask(rng)
    base = complete_nn(partial_of(target, obs), lib)
    for k in (1, 5, 19):
        rolled = complete_nn(np.roll(partial_of(target, obs), k, axis=1), lib)
        assert rolled.entry_id == base.entry_id
        assert rolled.shift == (base.shift + k) % 32
        assert abs(rolled.score - base.score) < 1e-12


def test_rotation_scores_match_roll(rng):
    entry = smooth_pano(rng)
    color = smooth_pano(rng)
    obs = random_mask(rng)
    s = rotation_scores(color, obs, entry)
    for k in (0, 3, 31):
        d = color[obs] - np.roll(entry, k, axis=1)[obs]
        assert s[k] == pytest.approx(np.mean(np.sum(d * d, axis=-1)), rel=1e-12)


def test_nn_errors(rng):
    full = smooth_pano(rng)
    with pytest.raises(ValueError):
        complete_nn(partial_of(full, random_mask(rng)), PanoLibrary())
    with pytest.raises(ValueError):
        complete_nn(np.full((16, 32, 3), -1.0), PanoLibrary([("a", full)]))
    lib = PanoLibrary([("a", full)])
    with pytest.raises(ValueError):
        lib.add("b", np.zeros((8, 16, 3)))
    with pytest.raises(ValueError):
        lib.add("c", full + 1.0)


def test_mirror_left_half(rng):
    full = smooth_pano(rng)
    obs = np.zeros((16, 32), bool)
    obs[:, :16] = True
    out = complete_mirror(partial_of(full, obs))
    np.testing.assert_array_equal(out[:, 16:], full[:, :16][:, ::-1])
    np.testing.assert_array_equal(out[:, :16], full[:, :16])


def test_mirror_identity_on_complete(rng):
    full = smooth_pano(rng)
    np.testing.assert_array_equal(complete_mirror(full), full)


def test_mirror_single_column(rng):
    full = smooth_pano(rng)
    obs = np.zeros((16, 32), bool)
    obs[:, 5] = True
    out = complete_mirror(partial_of(full, obs))
    np.testing.assert_array_equal(out[:, 26], full[:, 5])
    np.testing.assert_array_equal(out[:, 5], full[:, 5])
    assert not np.any(out == -1)
    # diffusion fill stays within the range of the known values
    lo, hi = full[:, 5].min(0), full[:, 5].max(0)
    assert np.all(out >= lo - 1e-9) and np.all(out <= hi + 1e-9)


def test_outputs_have_no_sentinels(rng):
    full = smooth_pano(rng)
    obs = random_mask(rng)
    p = partial_of(full, obs)
    for out in (complete_mirror(p), complete_nn(p, PanoLibrary([("a", smooth_pano(rng))])).completed):
        assert not np.any(out == -1)
        np.testing.assert_array_equal(out[obs], full[obs])
