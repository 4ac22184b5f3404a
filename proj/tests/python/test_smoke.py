import itertools
import json

import numpy as np
import pytest

import agcd


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(0)
    for k in range(2, 6):
        reward = rng.integers(-20, 20, size=(k, k)).astype(float)
        a = agcd.hungarian(reward)
        got = sum(reward[g, a[g]] for g in range(k))
        best = max(sum(reward[g, p[g]] for g in range(k)) for p in itertools.permutations(range(k)))
        assert got == best


def test_cluster_accuracy_relabelled():
    acc, perm = agcd.cluster_accuracy([0, 0, 1, 1, 2], [2, 2, 0, 0, 1], 3)
    assert acc == 1.0
    assert perm == [1, 2, 0]


def test_novelty_examples():
    r = agcd.novelty_metrics([0, 1, 2, 3], 2, 2)
    assert r["nov_r"] == 0.5
    assert abs(r["nov_u"] - 1.0) < 1e-12
    assert r["nov_i"] == r["nov_r"] * r["nov_u"]
    assert agcd.novelty_metrics([0, 1, 0, 1], 2, 2)["nov_i"] == 0.0


def test_accuracy_breakdown_absent_subset():
    r = agcd.accuracy_breakdown([0, 1], [1, 0], 3, 2)
    assert r["acc_all"] == 1.0
    assert r["acc_new"] is None


def test_mapping_diff():
    assert agcd.mapping_diff([0, 1, 2, 3], [1, 0, 2, 3]) == 0.5
    with pytest.raises(agcd.AgcdError):
        agcd.mapping_diff([0, 0], [0, 1])


def test_feature_dir_round_trip(tmp_path):
    ds = agcd.generate_synthetic(2, 1, 10, 4, 3.0, seed=1)
    assert len(ds) == 30
    assert ds.num_classes == 3 and ds.num_old == 2
    agcd.save_feature_dir(ds, tmp_path / "feat")
    back = agcd.load_feature_dir(tmp_path / "feat")
    np.testing.assert_array_equal(back.features, ds.features)
    assert list(back.labels) == list(ds.labels)
    with pytest.raises(agcd.DataError):
        agcd.load_feature_dir(tmp_path / "missing")


def test_estimate_k_separated():
    ds = agcd.generate_synthetic(4, 1, 40, 16, 8.0, seed=2)
    labels = np.asarray(ds.labels)
    rows = [i for i in range(len(ds)) if labels[i] < 4][::3]
    k, acc = agcd.estimate_k(ds.features, rows, [int(labels[i]) for i in rows], 3, 7, seed=0)
    assert 3 <= k <= 7
    assert len(acc) == 5


def test_run_reports_and_logs(tmp_path):
    out = tmp_path / "run"
    reports = agcd.run(synthetic="3,2,30,8,4.0", rounds=2, budget=5, epochs_base=2, epochs_round=1,
                       seed=3, out=str(out))
    assert [r["round"] for r in reports] == [0, 1, 2]
    assert all(r["strategy"] == "adaptive-novel" for r in reports)
    logged = [json.loads(line) for line in (out / "rounds.jsonl").read_text().splitlines()]
    assert logged == reports
    again = agcd.run(synthetic="3,2,30,8,4.0", rounds=2, budget=5, epochs_base=2, epochs_round=1, seed=3)
    assert again == reports


def test_run_config_errors():
    with pytest.raises(agcd.ConfigError):
        agcd.run(synthetic="3,2,30,8,4.0", strategy="greedy")
    with pytest.raises(agcd.ConfigError):
        agcd.run()
