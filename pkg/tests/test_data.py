import numpy as np
import pytest

from tessl.data import (
    AugmentConfig,
    Dataset,
    augment,
    build_multiview_batch,
    censored_fraction,
    follow_up_window,
    generate_synthetic,
    load_csv,
    save_csv,
)


def test_generator_is_deterministic():
    a = generate_synthetic(200, 8, seed=3)
    b = generate_synthetic(200, 8, seed=3)
    assert a.equals(b)
    assert not a.equals(generate_synthetic(200, 8, seed=4))


def test_no_censoring_means_all_events():
    ds = generate_synthetic(300, 4, censor_rate=0.0, seed=1)
    assert np.all(ds.events == 1)


def test_censored_fraction_near_target():
    ds = generate_synthetic(1000, 4, censor_rate=0.3, seed=2)
    assert abs((1 - ds.events.mean()) - 0.3) <= 0.05


def test_follow_up_window_hits_rate():
    hazard = np.geomspace(0.005, 0.2, 5)
    for rate in (0.05, 0.25, 0.6):
        w = follow_up_window(hazard, rate)
        assert censored_fraction(hazard, w) <= rate < censored_fraction(hazard, w - 1)


def test_censored_fraction_formula_by_enumeration():
    hazard = np.array([0.1, 0.3])
    window = 6
    # P(T > c) = (1 - p)^c for geometric T on 1, 2, ...
    brute = np.mean([np.mean([(1 - p) ** c for c in range(window + 1)]) for p in hazard])
    assert censored_fraction(hazard, window) == pytest.approx(brute, rel=1e-12)


def test_later_stages_have_shorter_times():
    ds, stage = generate_synthetic(1000, 8, n_stages=5, censor_rate=0.0, seed=5, return_stages=True)
    means = [ds.times[stage == s].mean() for s in range(5)]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_times_are_integer_months():
    ds = generate_synthetic(200, 4, seed=6)
    assert np.all(ds.times == np.floor(ds.times))
    assert np.all(ds.times >= 0)


def test_split_is_subject_level_and_disjoint():
    ds = generate_synthetic(600, 4, seed=0)
    parts = {name: set(ds.get_split(name).ids) for name in ("train", "val", "test")}
    assert not parts["train"] & parts["val"]
    assert not parts["train"] & parts["test"]
    assert not parts["val"] & parts["test"]
    assert [len(parts[k]) for k in ("train", "val", "test")] == [420, 90, 90]


@pytest.mark.parametrize("kwargs", [dict(n_subjects=5), dict(n_features=1), dict(censor_rate=1.0)])
def test_generator_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        generate_synthetic(**{"n_subjects": 50, "n_features": 4, **kwargs})


def test_dataset_rejects_duplicate_ids():
    with pytest.raises(ValueError, match="unique"):
        Dataset(("a", "a"), np.zeros((2, 2)), [1.0, 2.0], [1, 0])


# -- augmentation ---------------------------------------------------------------------

def test_identity_augmentation():
    x = np.arange(5.0)
    out = augment(x, AugmentConfig(0.0, 0.0), np.random.default_rng(0))
    assert np.array_equal(out, x)


def test_mask_prob_one_rejected():
    with pytest.raises(ValueError):
        AugmentConfig(mask_prob=1.0)


def test_augmentation_is_random():
    x = np.ones(16)
    rng = np.random.default_rng(0)
    assert not np.array_equal(augment(x, AugmentConfig(), rng), augment(x, AugmentConfig(), rng))


def test_masked_coordinates_are_zero():
    x = np.ones((200, 10))
    out = augment(x, AugmentConfig(0.0, 0.5), np.random.default_rng(1))
    assert set(np.unique(out)) <= {0.0, 1.0}
    assert 0.4 < (out == 0).mean() < 0.6


# -- multi-view batches ---------------------------------------------------------------

def test_multiview_batch_shape_and_maps():
    ds = generate_synthetic(100, 6, seed=0).subset(np.arange(16))
    b = build_multiview_batch(ds, AugmentConfig(), np.random.default_rng(0))
    assert b.features.shape == (32, 6)
    idx = np.arange(32)
    assert np.array_equal(b.pair[b.pair], idx)
    assert np.all(b.pair != idx)
    assert np.array_equal(b.origin[b.pair], b.origin)


def test_multiview_preserves_labels_and_times():
    ds = generate_synthetic(100, 6, seed=0).subset(np.arange(10))
    b = build_multiview_batch(ds, AugmentConfig(), np.random.default_rng(0))
    assert np.array_equal(b.times, ds.times[b.origin])
    assert np.array_equal(b.labels, ds.events[b.origin])


def test_multiview_subject_labels_unique_per_origin():
    ds = generate_synthetic(100, 6, seed=0).subset(np.arange(10))
    b = build_multiview_batch(ds, AugmentConfig(), np.random.default_rng(0), labels="subject")
    assert np.array_equal(b.labels, b.origin)


def test_multiview_needs_two_samples():
    ds = generate_synthetic(100, 6, seed=0).subset(np.arange(1))
    with pytest.raises(ValueError):
        build_multiview_batch(ds, AugmentConfig(), np.random.default_rng(0))


# -- CSV ------------------------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(120, 5, seed=9)
    path = tmp_path / "data.csv"
    save_csv(ds, path)
    assert load_csv(path).equals(ds)


def test_csv_fixture(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("id,time,event,f0,f1\n"
                    "p1,12,1,0.5,-1.25\n"
                    "p2,30.5,0,2,3e-2\n"
                    "p3,0,1,-0,7\n")
    ds = load_csv(path)
    assert ds.ids == ("p1", "p2", "p3")
    assert ds.times.tolist() == [12.0, 30.5, 0.0]
    assert ds.events.tolist() == [1, 0, 1]
    assert ds.features.tolist() == [[0.5, -1.25], [2.0, 0.03], [0.0, 7.0]]


def test_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,time,f0\np1,1,0.5\n")
    with pytest.raises(ValueError, match="line 1"):
        load_csv(path)


def test_csv_bad_event(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,time,event,f0\np1,1,1,0.5\np2,1,2,0.5\n")
    with pytest.raises(ValueError, match="line 3"):
        load_csv(path)


def test_csv_malformed_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,time,event,f0\np1,1,1\n")
    with pytest.raises(ValueError, match="line 2"):
        load_csv(path)
    path.write_text("id,time,event,f0\np1,soon,1,0.5\n")
    with pytest.raises(ValueError, match="line 2"):
        load_csv(path)
