import json

import numpy as np
import pytest

from tonaldipls.cli import main
from tonaldipls.datasets import read_dataset_rows
from tonaldipls.synthbench import ConditionSpec, SuiteSpec


def _small_spec(path, **overrides):
    suite = SuiteSpec(conditions=(ConditionSpec("a", "fixed", 50.0, n_samples=40),
                                  ConditionSpec("b", "fixed", 110.0, n_samples=40),
                                  ConditionSpec("c", "closed", 0.0, n_samples=40, mechanism_shift=1.0)),
                      n_accel_channels=12, n_thermo_channels=6, n_mics=3, duration=2.0,
                      sample_rate=2000.0, seed=7)
    doc = suite.to_dict()
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    spec = _small_spec(out / "suite.json")
    assert main(["generate", str(spec), "--out", str(out / "data"), "--waveforms",
                 "--waveform-limit", "2"]) == 0
    return out


def test_generate_writes_condition_files_and_manifest(generated):
    data = generated / "data"
    assert sorted(p.name for p in data.glob("*.csv")) == ["a.csv", "b.csv", "c.csv"]
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["schema_version"] == "1.0"
    assert manifest["conditions"] == ["a", "b", "c"]
    assert len(manifest["feature_names"]) == 18
    assert len(list((data / "waveforms").glob("*.json"))) == 6


def test_default_generate_is_byte_stable(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path / "x")]) == 0
    assert main(["generate", "--out", str(tmp_path / "y")]) == 0
    names = sorted(p.name for p in (tmp_path / "x").iterdir())
    assert len([n for n in names if n.endswith(".csv")]) == 6
    for name in names:
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_seed_override_is_recorded(tmp_path):
    spec = _small_spec(tmp_path / "s.json")
    assert main(["generate", str(spec), "--out", str(tmp_path / "o"), "--seed", "11"]) == 0
    prov = json.loads((tmp_path / "o" / "manifest.json").read_text())["provenance"]
    assert prov["seed_override"] == 11 and prov["seed"] == 11 and prov["spec_seed"] == 7


def test_duplicate_ids_exit_two(tmp_path, capsys):
    spec = tmp_path / "dup.json"
    spec.write_text(json.dumps({"conditions": [
        {"condition_id": "x", "valve_mode": "fixed", "opening": 50.0},
        {"condition_id": "x", "valve_mode": "fixed", "opening": 60.0},
        {"condition_id": "y", "valve_mode": "fixed", "opening": 70.0}]}))
    assert main(["generate", str(spec), "--out", str(tmp_path / "o")]) == 2
    assert "x" in capsys.readouterr().err


def test_malformed_spec_reports_line(tmp_path, capsys):
    spec = tmp_path / "broken.json"
    spec.write_text('{\n  "conditions": [\n    {"condition_id": "a" "x"}\n  ]\n}')
    assert main(["generate", str(spec), "--out", str(tmp_path / "o")]) == 2
    assert "broken.json:3:" in capsys.readouterr().err


def test_extract_reproduces_generated_features(generated, tmp_path):
    data = generated / "data"
    out = tmp_path / "ext.csv"
    assert main(["extract", str(data / "waveforms"), "--manifest", str(data / "manifest.json"),
                 "--out", str(out)]) == 0
    names, rows = read_dataset_rows(out)
    ref = {}
    for cid in "abc":
        _, r = read_dataset_rows(data / f"{cid}.csv")
        ref.update({row[0]: row for row in r})
    assert len(rows) == 6
    for sid, cid, label, feats in rows:
        assert abs(label - ref[sid][2]) <= 0.1
        assert np.abs(np.array(feats) - np.array(ref[sid][3])).max() <= 0.1


def test_extract_empty_dir_gives_header_only(generated, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "e.csv"
    assert main(["extract", str(empty), "--manifest", str(generated / "data" / "manifest.json"),
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("sample_id,condition_id,label_db,")


def test_extract_corrupt_header_exit_two(tmp_path, capsys):
    (tmp_path / "w").mkdir()
    (tmp_path / "w" / "frame7.json").write_text("{oops")
    assert main(["extract", str(tmp_path / "w"), "--out", str(tmp_path / "o.csv")]) == 2
    assert "frame7.json" in capsys.readouterr().err


def test_extract_nyquist_violation_exit_two(generated, tmp_path, capsys):
    out = tmp_path / "o.csv"
    code = main(["extract", str(generated / "data" / "waveforms"), "--half-band", "900",
                 "--out", str(out)])
    assert code == 2


def test_extract_reference_flags_shift_levels(generated, tmp_path):
    wdir = str(generated / "data" / "waveforms")
    main(["extract", wdir, "--out", str(tmp_path / "a.csv")])
    main(["extract", wdir, "--out", str(tmp_path / "b.csv"), "--db-ref-accel", "1e-5",
          "--db-ref-mic", "2e-4"])
    _, ra = read_dataset_rows(tmp_path / "a.csv")
    _, rb = read_dataset_rows(tmp_path / "b.csv")
    assert rb[0][2] == pytest.approx(ra[0][2] - 20.0)
    assert rb[0][3][0] == pytest.approx(ra[0][3][0] - 20.0)


def _evaluate(generated, tmp_path, name, *extra):
    out = tmp_path / f"{name}.json"
    code = main(["evaluate", str(generated / "data"), "--components", "4", "--out", str(out),
                 *extra])
    return code, out


def test_zero_lambda_report_matches_pls(generated, tmp_path):
    _, a = _evaluate(generated, tmp_path, "pls", "--model", "pls")
    _, b = _evaluate(generated, tmp_path, "d0", "--model", "dipls", "--lambda", "0")
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    for key in ("mse", "r2", "acc_lt2db", "acc_lt3db"):
        assert abs(ra["aggregate"][key] - rb["aggregate"][key]) <= 1e-8


def test_evaluate_outputs(generated, tmp_path):
    code, out = _evaluate(generated, tmp_path, "d", "--latent-dir", str(tmp_path / "lat"),
                          "--lambda-sweep", "1", "100", "3", "--jobs", "2")
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == "1.0" and doc["k_requested"] == 4
    assert [s["lambda"] for s in doc["lambda_sweep"]] == pytest.approx([1.0, 10.0, 100.0])
    assert sorted(p.name for p in (tmp_path / "lat").iterdir()) == [
        "latent_a.csv", "latent_b.csv", "latent_c.csv"]


def test_rank_clipped_components_still_exit_zero(generated, tmp_path, capsys):
    out = tmp_path / "big.json"
    code = main(["evaluate", str(generated / "data"), "--components", "40", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["k_requested"] == 40 and max(doc["k_effective"]) <= 12
    assert "k_effective" in capsys.readouterr().out


def test_evaluate_single_condition_exit_two(generated, tmp_path):
    out = tmp_path / "r.json"
    assert main(["evaluate", str(generated / "data" / "a.csv"), "--out", str(out)]) == 2


def test_evaluate_unlabeled_rows_exit_two(generated, tmp_path):
    for cid in "abc":
        text = (generated / "data" / f"{cid}.csv").read_text().splitlines()
        if cid == "b":
            text = [text[0]] + [",".join(ln.split(",")[:2] + [""] + ln.split(",")[3:]) for ln in text[1:]]
        (tmp_path / f"{cid}.csv").write_text("\n".join(text) + "\n")
    assert main(["evaluate", str(tmp_path / "*.csv"), "--out", str(tmp_path / "r.json")]) == 2


def test_compare_self_is_all_zero(generated, tmp_path, capsys):
    _, rep = _evaluate(generated, tmp_path, "d")
    out = tmp_path / "cmp.json"
    assert main(["compare", str(rep), str(rep), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    for row in doc["conditions"]:
        assert all(v == 0.0 for v in row["delta"].values())
    assert all(v == 0.0 for v in doc["aggregate"]["delta"].values())
    assert set(doc["scatter"]["a"]) == {"a", "b", "c"}
    assert "aggregate mse" in capsys.readouterr().out


def test_compare_mismatched_conditions_exit_three(generated, tmp_path, capsys):
    _, rep = _evaluate(generated, tmp_path, "d")
    doc = json.loads(rep.read_text())
    doc["folds"] = doc["folds"][:2]
    other = tmp_path / "other.json"
    other.write_text(json.dumps(doc))
    assert main(["compare", str(rep), str(other)]) == 3
    err = capsys.readouterr().err
    assert "['a', 'b', 'c']" in err and "['a', 'b']" in err


def test_jobs_default_from_environment(monkeypatch):
    from tonaldipls.cli import build_parser
    monkeypatch.setenv("DIPLS_JOBS", "3")
    args = build_parser().parse_args(["evaluate", "x", "--out", "y"])
    assert args.jobs == 3
