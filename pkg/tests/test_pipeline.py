import json
import os

import numpy as np
import pytest

from burncf.pipeline import (RunConfig, config_from_dict, popularity_recommendations,
                             run_evaluate, run_recommend, run_synth, run_train,
                             run_verify, sha256_file)
from burncf.data import load_interactions


def desk_config(**kw):
    defaults = dict(stages=20, horizon=2.0, n_steps=10, gamma=1.0, lr=1e-3,
                    dropout=0.2, batch_size=16, patience=2, max_epochs=3,
                    seed=0, hidden=(32,), time_dim=8, valid_fraction=0.2)
    defaults.update(kw)
    return RunConfig(**defaults)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    """One tiny end-to-end run shared by the read-only assertions below."""
    root = tmp_path_factory.mktemp("pipeline")
    data = run_synth(str(root / "data"), n_users=40, n_items=24, n_blocks=2,
                     holdout=0.25, seed=3)
    config = desk_config()
    train_out = run_train(config, data["train_path"], str(root / "run"))
    rec_out = run_recommend(config, train_out["checkpoint_path"],
                            data["train_path"], str(root / "run"), cutoff=12)
    eval_out = run_evaluate(rec_out["output_path"], data["test_path"],
                            data["train_path"], out_dir=str(root / "run"),
                            cutoffs=(5, 10), config_hash=train_out["config_hash"])
    return data, config, train_out, rec_out, eval_out


class TestConfig:
    def test_hash_stable_and_sensitive(self):
        a = desk_config()
        assert a.config_hash() == desk_config().config_hash()
        assert a.config_hash() != desk_config(gamma=0.0).config_hash()

    def test_roundtrip_dict(self):
        cfg = desk_config(hidden=(64, 16))
        again = config_from_dict(cfg.to_dict())
        assert again == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config"):
            config_from_dict({"stage_count": 5})


class TestTrain(object):
    def test_artifacts_written(self, small_run):
        _, config, train_out, _, _ = small_run
        out_dir = os.path.dirname(train_out["checkpoint_path"])
        assert os.path.isfile(train_out["checkpoint_path"])
        assert os.path.isfile(os.path.join(out_dir, "validation_curve.json"))
        assert os.path.isfile(os.path.join(out_dir, "config.json"))
        log_lines = open(train_out["log_path"]).read().strip().splitlines()
        assert len(log_lines) == train_out["epochs_run"]
        assert "valid_recall20=" in log_lines[0]

    def test_best_epoch_matches_curve(self, small_run):
        _, _, train_out, _, _ = small_run
        out_dir = os.path.dirname(train_out["checkpoint_path"])
        curve = json.load(open(os.path.join(out_dir, "validation_curve.json")))
        recalls = [p["valid_recall20"] for p in curve["curve"]]
        assert curve["best_epoch"] == int(np.argmax(recalls)) + 1
        assert train_out["best_valid_recall20"] == max(recalls)

    def test_missing_train_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.txt"):
            run_train(desk_config(), str(tmp_path / "nope.txt"), str(tmp_path))


class TestRecommend:
    def test_lists_respect_cutoff_and_history(self, small_run):
        data, _, _, rec_out, _ = small_run
        train = load_interactions(data["train_path"])
        from burncf.recommend import read_recommendations
        ranked = read_recommendations(rec_out["output_path"])
        assert len(ranked) == rec_out["n_users"] - rec_out["n_empty_lists"]
        for u, items in ranked.items():
            assert len(items) <= 12
            assert set(items).isdisjoint(set(train.row_items(u).tolist()))

    def test_hash_mismatch_refused(self, small_run, tmp_path):
        data, config, train_out, _, _ = small_run
        other = desk_config(gamma=0.5)
        with pytest.raises(ValueError, match="config hash mismatch"):
            run_recommend(other, train_out["checkpoint_path"],
                          data["train_path"], str(tmp_path))

    def test_missing_checkpoint(self, small_run, tmp_path):
        data, config, _, _, _ = small_run
        with pytest.raises(FileNotFoundError, match="ckpt.bin"):
            run_recommend(config, str(tmp_path / "ckpt.bin"),
                          data["train_path"], str(tmp_path))


class TestEvaluate:
    def test_report_fields(self, small_run):
        _, _, train_out, _, eval_out = small_run
        assert set(eval_out["recall"]) == {"5", "10"}
        assert eval_out["config_hash"] == train_out["config_hash"]
        assert "groups" in eval_out
        assert set(eval_out["groups"]) == {"popular", "medium", "personal"}
        assert os.path.isfile(eval_out["report_path"])

    def test_report_bytes_deterministic(self, small_run, tmp_path):
        data, _, train_out, rec_out, eval_out = small_run
        again = run_evaluate(rec_out["output_path"], data["test_path"],
                             data["train_path"], out_dir=str(tmp_path),
                             cutoffs=(5, 10), config_hash=train_out["config_hash"])
        a = open(eval_out["report_path"], "rb").read()
        b = open(again["report_path"], "rb").read()
        assert a == b


class TestDeterminism:
    def test_identical_rerun_bytes(self, tmp_path):
        data = run_synth(str(tmp_path / "d"), 30, 16, 2, 0.25, seed=1)
        config = desk_config(max_epochs=2, patience=2)
        outs = []
        for name in ("r1", "r2"):
            t = run_train(config, data["train_path"], str(tmp_path / name))
            r = run_recommend(config, t["checkpoint_path"], data["train_path"],
                              str(tmp_path / name), cutoff=10)
            e = run_evaluate(r["output_path"], data["test_path"],
                             data["train_path"], out_dir=str(tmp_path / name),
                             cutoffs=(5, 10), config_hash=t["config_hash"])
            outs.append((t, r, e))
        t1, r1, e1 = outs[0]
        t2, r2, e2 = outs[1]
        assert t1["checkpoint_sha256"] == t2["checkpoint_sha256"]
        assert sha256_file(r1["output_path"]) == sha256_file(r2["output_path"])
        assert open(e1["report_path"], "rb").read() == open(e2["report_path"], "rb").read()


class TestPopularityBaseline:
    def test_excludes_history_and_orders_by_count(self):
        from burncf.data import from_rows
        pairs = [(u, 0) for u in range(5)] + [(u, 1) for u in range(3)] + [(0, 2)]
        train = from_rows(pairs, 5, 4)
        recs = popularity_recommendations(train, cutoff=3)
        assert recs[4] == [1, 2, 3]   # user 4's history is item 0
        assert recs[0] == [3]         # user 0 saw items 0,1,2; only 3 left


class TestVerify:
    def test_all_suites_pass(self):
        out = run_verify()
        for suite in out["suites"]:
            assert suite["passed"], f"{suite['name']}: {suite['detail']}"
        assert out["passed"]

    def test_unknown_suite_rejected(self):
        with pytest.raises(ValueError, match="unknown verify"):
            run_verify(["bogus"])

    def test_mutation_breaks_posterior_suite(self, monkeypatch):
        import burncf.pipeline as pl

        def flipped(coeffs, t, dt, rate_mode="personalized"):
            from burncf.kernel import bridge_ratio as real
            return -real(coeffs, t, dt, rate_mode)

        monkeypatch.setattr(pl, "bridge_ratio", flipped)
        out = pl.run_verify(["reverse_posterior"])
        assert not out["passed"]
