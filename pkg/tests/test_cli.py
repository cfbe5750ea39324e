import json
import subprocess
import sys

import pytest

from robustlocal.cli import aggregate, config_hash, main, parse_seeds
from robustlocal.transforms import DerandomizationError


def cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "robustlocal.cli", *args], capture_output=True, text=True, cwd=cwd)


def test_zoo_list():
    out = cli("zoo", "list")
    assert out.returncode == 0 and "all_equal_n8" in out.stdout


def test_partition_star_fixture(tmp_path):
    f = tmp_path / "sets.json"
    f.write_text(json.dumps({"n": 4, "q": 2, "sets": [[0, 1], [0, 2], [0, 3]]}))
    out = cli("partition", "--sets", str(f))
    assert out.returncode == 0
    rep = json.loads(out.stdout)
    part = rep["partitions"][0]["partition"]
    assert part["kernels"][1] == [0] and len(part["daisies"][1]) == 3
    assert rep["ok"] and len(rep["config_hash"]) == 64 and rep["version"]


def test_partition_text_and_empty(tmp_path):
    f = tmp_path / "sets.txt"
    f.write_text("0 1\n2 3\n")
    assert cli("partition", "--sets", str(f), "--n", "4", "--q", "2").returncode == 0
    e = tmp_path / "empty.json"
    e.write_text("[]")
    out = cli("partition", "--sets", str(e), "--n", "4", "--q", "2")
    assert out.returncode == 0 and all(not D for D in json.loads(out.stdout)["partitions"][0]["partition"]["daisies"])


def test_partition_malformed(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text("[[0, 1], [0")
    assert cli("partition", "--sets", str(f), "--n", "4", "--q", "2").returncode == 2
    g = tmp_path / "wrong.json"
    g.write_text("[[0, 1, 2]]")
    assert cli("partition", "--sets", str(g), "--n", "4", "--q", "2").returncode == 2


def test_partition_instance(tmp_path):
    out = cli("partition", "--instance", "hadamard_k3", "--out", str(tmp_path / "p.json"))
    assert out.returncode == 0
    assert json.loads((tmp_path / "p.json").read_text())["ok"]


@pytest.fixture(scope="module")
def prepared_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("t_all_equal")
    out = cli("transform", "--instance", "all_equal_n8", "--out", str(d))
    assert out.returncode == 0, out.stderr
    return d


def test_transform_all_equal_report(prepared_dir):
    rep = json.loads((prepared_dir / "report.json").read_text())
    prep = rep["preparation"]
    q = prep["query_complexity"]
    assert prep["achieved_sigma"] == f"1/{8 * q}"
    assert prep["support_size"] == round(48 * q * 8 * 0.6931471805599453)
    assert rep["sampler"]["p_clamped"] is True and rep["sampler"]["config"]["p"] == 1.0
    assert rep["config_hash"] and rep["seed"] == 0


def test_transform_relaxed_round_trip(tmp_path):
    out = cli("transform", "--instance", "relaxed_repetition3_k2", "--no-prepare", "--out", str(tmp_path))
    assert out.returncode == 0
    from robustlocal.sampler import preprocess, sampler_from_json, sampler_to_json
    from robustlocal.serialize import dumps
    from robustlocal.zoo import get_instance

    doc = json.loads((tmp_path / "sampler.json").read_text())
    loaded = sampler_from_json(doc)
    assert loaded.relaxed and {sd.b for sd in loaded.sides[0]} == {0, 1}
    fresh = preprocess(get_instance("relaxed_repetition3_k2").algorithm)
    assert dumps(sampler_to_json(loaded)) == dumps(sampler_to_json(fresh))


def test_transform_budget_exit(tmp_path):
    out = cli("transform", "--instance", "all_equal_n8", "--no-prepare", "--budget", "2", "--out", str(tmp_path))
    assert out.returncode == 3


def test_transform_derandomization_exit(tmp_path, monkeypatch):
    import robustlocal.cli as mod

    def boom(*a, **k):
        raise DerandomizationError("forced", worst_input=(0,), z=0, error=0.5)

    monkeypatch.setattr(mod, "prepare", boom)
    assert main(["transform", "--instance", "all_equal_n4", "--out", str(tmp_path)]) == 4


@pytest.fixture(scope="module")
def plain_sampler(tmp_path_factory):
    d = tmp_path_factory.mktemp("t_rep")
    assert cli("transform", "--instance", "repetition_n6", "--no-prepare", "--out", str(d)).returncode == 0
    return d / "sampler.json"


def test_run_many_seeds_success(plain_sampler, tmp_path):
    out = cli("run", "--sampler", str(plain_sampler), "--seeds", "0:200", "--out", str(tmp_path / "r.csv"),
              "--summary", str(tmp_path / "s.json"))
    assert out.returncode == 0
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["aggregate"]["overall"]["all_meet_two_thirds"]
    header = (tmp_path / "r.csv").read_text().splitlines()[0].split(",")
    assert header[:8] == ["instance", "seed", "p", "output", "aborted", "triggering_j", "votes", "elapsed"]


def test_run_replay_byte_identical(plain_sampler, tmp_path):
    for name in ("a", "b"):
        assert cli("run", "--sampler", str(plain_sampler), "--seed", "11", "--format", "jsonl",
                   "--out", str(tmp_path / name)).returncode == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_run_forced_abort(plain_sampler, tmp_path):
    out = cli("run", "--sampler", str(plain_sampler), "--seed", "0", "--override-cap", "0.01", "--format", "jsonl")
    rows = [json.loads(line) for line in out.stdout.splitlines()]
    assert rows and all(r["aborted"] for r in rows)


def test_run_inputs_file(plain_sampler, tmp_path):
    f = tmp_path / "in.txt"
    f.write_text("000000\n0 110011\n")
    out = cli("run", "--sampler", str(plain_sampler), "--inputs", str(f), "--seeds", "0,1", "--format", "jsonl")
    rows = [json.loads(line) for line in out.stdout.splitlines()]
    assert [r["input"] for r in rows] == ["000000", "000000", "110011", "110011"]
    bad = tmp_path / "bad.txt"
    bad.write_text("0120\n")
    assert cli("run", "--sampler", str(plain_sampler), "--inputs", str(bad)).returncode == 2


def test_run_missing_sampler():
    assert cli("run", "--sampler", "/nonexistent.json").returncode == 2


def test_verify_zoo_passes(tmp_path):
    out = cli("verify", "--instance", "hadamard_k3", "--out", str(tmp_path / "v.json"))
    assert out.returncode == 0
    rep = json.loads((tmp_path / "v.json").read_text())
    assert rep["failed"] == [] and set(rep["suites"]) == {"robustness", "normalize", "volume_lemma", "partition"}


def test_verify_negative_fixture(tmp_path):
    out = cli("verify", "--instance", "repetition_n6", "--rho0", "1/2", "--out", str(tmp_path / "v.json"))
    assert out.returncode == 1
    rep = json.loads((tmp_path / "v.json").read_text())
    assert "robustness" in rep["failed"] and rep["suites"]["robustness"]["counterexample"]["word"]


def test_verify_beyond_budget(tmp_path):
    out = cli("verify", "--instance", "hadamard_k4", "--budget", "1000", "--out", str(tmp_path / "v.json"))
    assert out.returncode == 0 and "warning" in out.stderr
    assert json.loads((tmp_path / "v.json").read_text())["exhaustive"] is False


def test_parse_errors():
    assert cli("frobnicate").returncode == 2
    assert main(["run", "--sampler", "x", "--seeds", "a:b"]) == 2


def test_helpers():
    assert parse_seeds("3:6", None) == [3, 4, 5]
    assert parse_seeds("1,4", None) == [1, 4]
    assert parse_seeds(None, 9) == [9]
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    agg = aggregate([{"z": 0, "input": "00", "correct": True, "aborted": False},
                     {"z": 0, "input": "00", "correct": False, "aborted": True}])
    assert agg["inputs"]["z=0:00"]["successes"] == 1 and agg["overall"]["aborted"] == 1
