import json

from perfektor.cli import main

SPONT_SPEC = {"dimension": 1, "alphabet": 3, "model": "table",
              "params": {"range": 0, "M": 1,
                         "rates": {"0": ["1/2", "1/3", "1/6"],
                                   "1": ["1/2", "1/3", "1/6"],
                                   "2": ["1/2", "1/3", "1/6"]}}}


def write_config(tmp_path, **overrides):
    data = {"kind": "sample", "model": SPONT_SPEC, "sites": [[0]],
            "replicates": 50, "seed": 4, "out_dir": str(tmp_path / "out")}
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_sample_subcommand(tmp_path, capsys):
    code = main(["sample", "--config", str(write_config(tmp_path))])
    assert code == 0
    out = capsys.readouterr().out
    assert "samples.csv" in out


def test_seed_and_out_overrides(tmp_path):
    out = tmp_path / "elsewhere"
    code = main(["sample", "--config", str(write_config(tmp_path)),
                 "--seed", "11", "--replicates", "20", "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "sample_manifest.json").read_text())
    assert manifest["seed"] == 11
    assert manifest["config"]["replicates"] == 20


def test_validate_subcommand(tmp_path):
    code = main(["validate", "--config", str(write_config(tmp_path))])
    assert code == 0


def test_decompose_check_subcommand(tmp_path, capsys):
    code = main(["decompose", "--config", str(write_config(tmp_path)), "--check"])
    assert code == 0
    assert "max_reconstruction_error" in capsys.readouterr().out


def test_sketch_subcommand_with_horizon(tmp_path):
    em1 = {"dimension": 1, "alphabet": 2, "model": "example1",
           "params": {"q0": "5/8", "q_inf": "1/2", "ratio": "1/4", "R": 3}}
    code = main(["sketch", "--config", str(write_config(tmp_path, model=em1)),
                 "--horizon", "2.0", "--replicates", "50"])
    assert code == 0


def test_missing_config_file_is_config_error(tmp_path, capsys):
    code = main(["sample", "--config", str(tmp_path / "nope.json")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_invalid_model_is_config_error(tmp_path, capsys):
    path = write_config(tmp_path, model={"dimension": 1, "alphabet": 2, "model": "nope"})
    code = main(["sample", "--config", str(path)])
    assert code == 2


def test_violated_precondition_is_run_failure(tmp_path, capsys):
    # dimension 2 with 1/4 radial decay pushes the weighted range mass to
    # 73/72 > 1, so the terminating sampler must refuse to run
    bad = {"dimension": 2, "alphabet": 2, "model": "example1",
           "params": {"q0": "5/8", "q_inf": "1/2", "ratio": "1/4", "R": 10}}
    code = main(["sample", "--config", str(write_config(tmp_path, model=bad,
                                                        sites=[[0, 0]]))])
    assert code == 1
    assert "run failed" in capsys.readouterr().err


def test_compare_subcommand(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps({"0": 500, "1": 500}))
    b.write_text(json.dumps({"0": 498, "1": 502}))
    path = write_config(tmp_path, kind="compare", counts_a=str(a), counts_b=str(b))
    assert main(["compare", "--config", str(path)]) == 0


def test_suite_subcommand_wiring(tmp_path, monkeypatch):
    # the full battery runs for minutes; check the wiring with stub criteria
    from perfektor import acceptance

    def fake_run_all(report=print):
        return [acceptance.CriterionResult("stub-ok", True, "fine"),
                acceptance.CriterionResult("stub-bad", False, "broken")]

    monkeypatch.setattr(acceptance, "run_all", fake_run_all)
    out = tmp_path / "suite"
    code = main(["suite", "--out", str(out)])
    assert code == 1  # one stub criterion fails
    rows = (out / "suite.csv").read_text().splitlines()
    assert rows[1].startswith("stub-ok,pass")
    assert rows[2].startswith("stub-bad,FAIL")
