import json
import os

import pytest

from echoscope.cli import main
from echoscope.ingest import write_domain_scores, write_events, write_follow_edges
from echoscope.synth import SynthConfig, generate

SYNTH_CFG = (
    "n_users = 25\nn_domains = 12\nfollow_homophily = 0.3\n"
    "base_follow_prob = 0.3\nattention_bias = 2.0\nactivity_rate = 6.0\n"
    "retweet_rate = 4.0\nduration = 40000\nseed = 5\n"
)


@pytest.fixture
def dataset_dir(tmp_path):
    bundle, _ = generate(
        SynthConfig(
            n_users=25, n_domains=12, follow_homophily=0.3, base_follow_prob=0.3,
            attention_bias=2.0, activity_rate=6.0, retweet_rate=4.0,
            duration=40_000, seed=5,
        )
    )
    d = tmp_path / "data"
    d.mkdir()
    write_domain_scores(bundle.scores, str(d / "scores.csv"))
    write_follow_edges(bundle.edges, str(d / "edges.csv"))
    write_events(bundle.log, str(d / "events.jsonl"))
    return d


def inputs(d):
    return [
        "--scores", str(d / "scores.csv"),
        "--edges", str(d / "edges.csv"),
        "--events", str(d / "events.jsonl"),
    ]


# ---------------------------------------------------------------- validate


def test_validate_clean_bundle_exit_zero(dataset_dir, capsys):
    assert main(["validate", *inputs(dataset_dir)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["ok"]
    assert payload["counters"]["n_events"] > 0


def test_validate_missing_file_exit_two(dataset_dir, capsys):
    rc = main([
        "validate",
        "--scores", str(dataset_dir / "nope.csv"),
        "--edges", str(dataset_dir / "edges.csv"),
        "--events", str(dataset_dir / "events.jsonl"),
    ])
    assert rc == 2


def test_validate_malformed_csv_exit_two(tmp_path, dataset_dir):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,header\n")
    rc = main([
        "validate",
        "--scores", str(bad),
        "--edges", str(dataset_dir / "edges.csv"),
        "--events", str(dataset_dir / "events.jsonl"),
    ])
    assert rc == 2


def test_validate_dangling_retweets_warn_but_pass(tmp_path, capsys):
    (tmp_path / "scores.csv").write_text("domain,score\na.example,left\n")
    (tmp_path / "edges.csv").write_text("follower,friend\ns1,f1\n")
    (tmp_path / "events.jsonl").write_text(
        json.dumps({"id": "t1", "author": "s1", "ts": 1, "kind": "retweet",
                    "orig_author": "ghost", "urls": []}) + "\n"
    )
    assert main(["validate", *inputs(tmp_path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n_dangling_retweets"] == 1


def test_validate_report_to_file(dataset_dir, tmp_path):
    out = tmp_path / "validation.json"
    assert main(["validate", *inputs(dataset_dir), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["ok"]


# ---------------------------------------------------------------- synth


def test_synth_deterministic_bytes(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(SYNTH_CFG)
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("scores.csv", "edges.csv", "events.jsonl", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_seed_override_and_null_flag(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(SYNTH_CFG.replace("attention_bias = 2.0", "attention_bias = 0.0"))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "n"), "--seed", "77"]) == 0
    truth = json.loads((tmp_path / "n" / "truth.json").read_text())
    assert truth["null_model"] is True
    assert truth["config"]["seed"] == 77


def test_synth_infeasible_config_exit_two(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(SYNTH_CFG.replace("n_users = 25", "n_users = 1"))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


# ---------------------------------------------------------------- report


def report_args(dataset_dir, out, extra=()):
    return ["report", *inputs(dataset_dir), "--out", str(out), "--reps", "20",
            "--sample-n", "500", *extra]


def test_report_outputs_and_determinism(dataset_dir, tmp_path):
    rc = main(report_args(dataset_dir, tmp_path / "o1", ["--seed", "3"]))
    assert rc == 0
    rc = main(report_args(dataset_dir, tmp_path / "o2", ["--seed", "3"]))
    assert rc == 0
    names1 = sorted(os.listdir(tmp_path / "o1"))
    assert sorted(os.listdir(tmp_path / "o2")) == names1
    for name in names1:
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes(), name
    # ten bias tables for the default threshold range
    ks = [n for n in names1 if n.startswith("delta_vs_ms_k")]
    assert len(ks) == 10
    report = json.loads((tmp_path / "o1" / "report.json").read_text())
    assert set(report["correlations"]) == {str(k) for k in range(1, 11)}
    assert report["meta"]["config_hash"]
    header = (tmp_path / "o1" / "user_metrics.csv").read_text().splitlines()[0]
    assert header == "user,mu,m_s,m_e_f,m_e_r,delta,class,domain_count"


def test_report_seed_changes_baseline(dataset_dir, tmp_path):
    main(report_args(dataset_dir, tmp_path / "o1", ["--seed", "3"]))
    main(report_args(dataset_dir, tmp_path / "o2", ["--seed", "4"]))
    r1 = json.loads((tmp_path / "o1" / "report.json").read_text())
    r2 = json.loads((tmp_path / "o2" / "report.json").read_text())
    assert r1["meta"]["config_hash"] != r2["meta"]["config_hash"]


def test_report_window_excluding_everything(dataset_dir, tmp_path):
    rc = main(report_args(dataset_dir, tmp_path / "w", ["--window", "900000..900001"]))
    assert rc == 0
    report = json.loads((tmp_path / "w" / "report.json").read_text())
    assert "window excludes every event" in report["markers"]
    assert report["counts"]["n_events"] == 0


def test_report_bad_window_exit_two(dataset_dir, tmp_path):
    assert main(report_args(dataset_dir, tmp_path / "w", ["--window", "junk"])) == 2


def test_report_config_file_with_flag_overrides(dataset_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"scores = {dataset_dir/'scores.csv'}\n"
        f"edges = {dataset_dir/'edges.csv'}\n"
        f"events = {dataset_dir/'events.jsonl'}\n"
        f"out = {tmp_path/'from_file'}\n"
        "k_max = 3\nreps = 10\nsample_n = 100\n"
    )
    assert main(["report", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "from_file" / "report.json").read_text())
    assert set(report["correlations"]) == {"1", "2", "3"}
    # flags beat the file
    assert main(["report", "--config", str(cfg), "--out", str(tmp_path / "ovr"),
                 "--k-max", "2"]) == 0
    report = json.loads((tmp_path / "ovr" / "report.json").read_text())
    assert set(report["correlations"]) == {"1", "2"}


def test_report_missing_inputs_exit_two(tmp_path):
    assert main(["report", "--out", str(tmp_path / "x")]) == 2


def test_report_cache_reused_and_bypassed(dataset_dir, tmp_path):
    out = tmp_path / "c1"
    main(report_args(dataset_dir, out))
    cache = out / "graphs.cache"
    assert cache.exists()
    stamp = cache.stat().st_mtime_ns
    main(report_args(dataset_dir, out))  # second run loads the cache
    assert cache.stat().st_mtime_ns == stamp
    out2 = tmp_path / "c2"
    main(report_args(dataset_dir, out2, ["--no-cache"]))
    assert not (out2 / "graphs.cache").exists()
    # cached and cache-less runs agree byte for byte
    assert (out / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_report_threads_do_not_change_bytes(dataset_dir, tmp_path):
    main(report_args(dataset_dir, tmp_path / "t1", ["--threads", "1"]))
    main(report_args(dataset_dir, tmp_path / "t4", ["--threads", "4"]))
    for name in sorted(os.listdir(tmp_path / "t1")):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes(), name


# ---------------------------------------------------------------- oracle-check


def test_oracle_check_passes_on_synthetic(dataset_dir, capsys):
    assert main(["oracle-check", *inputs(dataset_dir)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["ok"]
    assert payload["n_compared"] > 0
    assert payload["max_abs_diff"] <= 1e-12


def test_oracle_check_guard_rail(dataset_dir):
    assert main(["oracle-check", *inputs(dataset_dir), "--max-events", "3"]) == 2


def test_oracle_check_out_file(dataset_dir, tmp_path):
    out = tmp_path / "diff.json"
    assert main(["oracle-check", *inputs(dataset_dir), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["ok"]


def test_log_level_env(dataset_dir, monkeypatch, capsys):
    monkeypatch.setenv("ECHOSCOPE_LOG", "DEBUG")
    assert main(["validate", *inputs(dataset_dir)]) == 0
