import numpy as np
import pytest

from leakprobe.audit import run_audit
from leakprobe.dataset import SplitSpec, load_image_folder, write_image_folder
from leakprobe.forest import ForestConfig
from leakprobe.probes import blur_metric, eight_pixel_probe, foreground_mask
from leakprobe.synth import (
    BiasChannel,
    SynthConfig,
    blur_radius,
    box_blur,
    class_names,
    generate,
    generate_with_foreground,
    level_offset,
)


def small(**kw):
    base = dict(n_classes=5, n_per_class=20, width=32, height=32, seed=3)
    base.update(kw)
    return SynthConfig(**base)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(n_classes=1), dict(n_per_class=0), dict(width=15), dict(bias_strength=1.5),
         dict(bias_strength=-0.1), dict(background_noise_sd=-1)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            small(**kw)

    def test_channel_from_string(self):
        assert small(bias_channel="blur").bias_channel is BiasChannel.BLUR


def test_level_offsets_k5():
    cfg = small(bias_strength=1.0)
    # (k - 2) * 60 / 5
    assert [level_offset(k, cfg) for k in range(5)] == [-24.0, -12.0, 0.0, 12.0, 24.0]
    assert [level_offset(k, small(bias_strength=0.0)) for k in range(5)] == [0.0] * 5
    assert level_offset(3, small(bias_channel="blur")) == 0.0


def test_blur_radii():
    assert [blur_radius(k, small(bias_channel="blur")) for k in range(5)] == [0, 1, 2, 3, 4]
    assert [blur_radius(k, small(bias_channel="blur", bias_strength=0.5)) for k in range(5)] == [0, 1, 1, 2, 2]
    assert blur_radius(4, small()) == 0


def test_box_blur_matches_window_mean():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 255, (7, 9))
    padded = np.pad(img, 2, mode="edge")
    expected = np.array([[padded[y:y + 5, x:x + 5].mean() for x in range(9)] for y in range(7)])
    assert np.allclose(box_blur(img, 2), expected, atol=1e-9)
    assert np.array_equal(box_blur(img, 0), img)


def test_class_names_sort_like_indices():
    names = class_names(12)
    assert names == sorted(names)
    assert names[0] == "class_00"


def test_shape_and_order():
    s = generate(small())
    assert len(s) == 100
    assert s.class_index == {f"class_{k}": k for k in range(5)}
    assert s.labels().tolist() == np.repeat(np.arange(5), 20).tolist()
    assert all(r.pixels.shape == (32, 32, 1) for r in s.records)


def test_deterministic():
    a = generate(small())
    b = generate(small())
    assert all(x.pixels.tobytes() == y.pixels.tobytes() for x, y in zip(a.records, b.records))
    c = generate(small(seed=4))
    assert a.records[0].pixels.tobytes() != c.records[0].pixels.tobytes()


def test_noise_free_levels_are_exact():
    s = generate(small(background_noise_sd=0.0))
    corners = [int(r.pixels[0, 0, 0]) for r in s.records]
    expected = [120 + (k - 2) * 12 for k in range(5)]
    assert sorted(set(corners)) == expected
    assert corners == np.repeat(expected, 20).tolist()


def test_unbiased_backgrounds_share_distribution():
    s = generate(small(bias_strength=0.0, n_per_class=40))
    feats = np.array([eight_pixel_probe(r).features.mean() for r in s.records]).reshape(5, 40)
    means = feats.mean(axis=1)
    se = feats.std(axis=1, ddof=1) / np.sqrt(40)
    assert np.ptp(means) < 3 * np.sqrt(2) * se.max()


def test_foreground_statistics_class_independent():
    full, fg = generate_with_foreground(small(n_per_class=60))
    per_image = []
    for r in fg.records:
        m = foreground_mask(r)
        per_image.append(r.pixels[m].mean())
    per_image = np.array(per_image).reshape(5, 60)
    means = per_image.mean(axis=1)
    se = per_image.std(axis=1, ddof=1) / np.sqrt(60)
    for i in range(5):
        for j in range(i + 1, 5):
            assert abs(means[i] - means[j]) < 3 * np.hypot(se[i], se[j])


def test_foreground_layout():
    full, fg = generate_with_foreground(small())
    for o, f in zip(full.records, fg.records):
        m = foreground_mask(f)
        assert 0 < m.sum() < m.size
        assert np.array_equal(f.pixels[m], np.maximum(o.pixels[m], 1))
        assert not f.pixels[~m].any()


def test_blur_bias_gives_monotone_bands():
    s = generate(small(bias_channel="blur", n_per_class=30, width=64, height=64))
    scores = np.array([blur_metric(r) for r in s.records]).reshape(5, 30)
    medians = np.median(scores, axis=1)
    assert all(medians[k] > medians[k + 1] for k in range(4))
    # the unblurred class is fully separated from all blurred ones
    assert scores[0].min() > scores[1:].max()


def test_round_trip_through_png(tmp_path):
    s = generate(small(n_per_class=3))
    write_image_folder(s, tmp_path / "d")
    back = load_image_folder(tmp_path / "d")
    assert back.class_index == s.class_index
    assert [r.pixels.tobytes() for r in back.records] == [r.pixels.tobytes() for r in s.records]


def test_accuracy_non_decreasing_in_bias_strength():
    accs = []
    for strength in (0.0, 0.25, 0.5, 1.0):
        s = generate(SynthConfig(5, 60, 32, 32, strength, BiasChannel.BACKGROUND_LEVEL, 5.0, 42))
        report = run_audit(s, "8px", SplitSpec(0.8, 42), ForestConfig(n_trees=30, seed=42))
        accs.append(report.accuracy_percent)
    for a, b in zip(accs, accs[1:]):
        assert b >= a - 2.0
    assert accs[-1] > 90.0
