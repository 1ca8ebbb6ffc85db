import json

import numpy as np
import pytest

from fracgreen.cli import (
    ConfigError,
    OutputRecord,
    config_from_dict,
    config_to_dict,
    format_output,
    load_config,
    make_metadata,
    read_json_output,
    run,
    save_config,
    write_output,
)
from fracgreen.kernels import KernelQuery, SPDOperator, kernel_spec, z0_eval
from fracgreen.specfun import hfun_eval

MINIMAL = {"alpha": 0.5, "dim": 1}


def small_config(**extra):
    cfg = {
        "alpha": 0.5,
        "dim": 1,
        "T": 0.5,
        "operator": {"a": [[{"family": "trig", "base": 1.0, "amplitude": 0.2, "wavevector": [1.0]}]]},
        "u0": {"family": "bump", "base": 0.0, "amplitude": 1.0, "center": [0.0], "width": 0.8},
        "grid": {"counts": [8], "time_intervals": 3},
    }
    cfg.update(extra)
    return cfg


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


# run / subcommands


def test_kernel_record_matches_library(tmp_path, capsys):
    out = tmp_path / "k.json"
    assert run(["kernel", "--alpha", "0.5", "--dim", "1", "--t", "1.0", "--x", "0.3", "-o", str(out)]) == 0
    meta, recs = read_json_output(out)
    assert len(recs) == 1 and recs[0].t == 1.0 and recs[0].x == (0.3,)
    assert recs[0].value == z0_eval(SPDOperator.identity(1), KernelQuery(0.5, 1.0, [0.3]))
    assert meta["alpha"] == 0.5 and meta["n"] == 1 and meta["version"].startswith("0.1.0")


def test_kernel_to_stdout_csv(capsys):
    assert run(["kernel", "--alpha", "0.5", "--dim", "2", "--t", "0.5,1", "--x", "0.1,0.2,0.3,0.4",
                "--kind", "y", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("t,x1,x2,value,error_estimate")
    assert len(lines) == 5


def test_verify_normalization_passes(tmp_path):
    out = tmp_path / "report.json"
    assert run(["verify", "--suite", "normalization", "-o", str(out)]) == 0
    items = json.loads(out.read_text())
    assert items and all(i["pass"] for i in items)


def test_verify_zero_mass_reports_failure(tmp_path):
    assert run(["verify", "--suite", "zero_mass", "-o", str(tmp_path / "r.json")]) == 1


def test_verify_seed_is_reproducible(tmp_path):
    texts = []
    for name in ("a.json", "b.json"):
        assert run(["verify", "--suite", "lemma1", "--seed", "11", "-o", str(tmp_path / name)]) == 0
        items = json.loads((tmp_path / name).read_text())
        for i in items:
            i.pop("runtime_seconds")
        texts.append(items)
    assert texts[0] == texts[1]
    assert texts[0][0]["parameters"]["seed"] == 11


def test_alpha_out_of_range_exits_2(capsys):
    assert run(["kernel", "--alpha", "1.2", "--t", "1", "--x", "0.1"]) == 2
    assert "alpha" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    assert run(["kernel", "--alpha", "0.5", "--t", "1", "--bogus"]) == 2
    assert "unrecognized" in capsys.readouterr().err


def test_hfun_subcommand(capsys):
    assert run(["hfun", "--z", "0.2,3", "--kind", "z", "--dim", "2", "--alpha", "0.5"]) == 0
    data = json.loads(capsys.readouterr().out)
    spec = kernel_spec("z", 2, 0.5)
    assert [r["value"] for r in data["records"]] == [hfun_eval(spec, 0.2).value, hfun_eval(spec, 3.0).value]


def test_hfun_custom_spec(capsys):
    assert run(["hfun", "--z", "1.0", "--upper", "[]", "--lower", "[[0, 1]]", "--mu", "1"]) == 0
    value = json.loads(capsys.readouterr().out)["records"][0]["value"]
    assert value == pytest.approx(np.exp(-1.0), rel=1e-11)


def test_solve_subcommand(tmp_path):
    cfg = write_json(tmp_path / "c.json", small_config())
    out = tmp_path / "u.csv"
    assert run(["solve", "--config", cfg, "--format", "csv", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 4 * 8
    assert lines[0].split(",")[:4] == ["t", "x1", "value", "error_estimate"]


def test_green_writes_one_file_per_source(tmp_path):
    cfg = write_json(tmp_path / "c.json", small_config(sources=[[0.0], [1.0]]))
    out = tmp_path / "z.json"
    assert run(["green", "--config", cfg, "-o", str(out)]) == 0
    for i, xi in enumerate((0.0, 1.0)):
        meta, recs = read_json_output(tmp_path / f"z_src{i}.json")
        assert meta["source"] == [xi] and meta["kind"] == "Z"
        assert len(recs) == 3 * 8


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"dim": 1})
    assert run(["solve", "--config", cfg]) == 2
    assert "alpha" in capsys.readouterr().err


# configuration


def test_minimal_config_loads(tmp_path):
    cfg = load_config(write_json(tmp_path / "c.json", MINIMAL))
    assert cfg.alpha == 0.5 and cfg.dim == 1 and cfg.T == 1.0
    assert cfg.grid.periodic and cfg.grid.counts == (32,)
    assert cfg.operator().n == 1


def test_missing_alpha_names_field():
    with pytest.raises(ConfigError, match="alpha"):
        config_from_dict({"dim": 1})


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="colour"):
        config_from_dict({**MINIMAL, "colour": "red"})


def test_invalid_json_rejected(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{alpha: 0.5")
    with pytest.raises(ConfigError):
        load_config(path)


def test_anisotropic_config_round_trips(tmp_path):
    field = {"family": "trig", "base": 2.0, "amplitude": 0.3, "wavevector": [1.0, 0.0], "holder_gamma": 0.6}
    data = {
        "alpha": 0.4,
        "dim": 2,
        "operator": {"a": [[field, 0.3], [0.3, 1.0]], "delta": 0.5},
        "grid": {"counts": [12, 12], "time_intervals": 6},
    }
    cfg = config_from_dict(data)
    assert cfg.operator().gamma == 0.6
    path = tmp_path / "c.json"
    save_config(cfg, path)
    again = load_config(path)
    assert again == cfg
    assert config_to_dict(again) == config_to_dict(cfg)


# output


def records(count, n=1):
    meta = make_metadata(0.5, n, "constant")
    return [OutputRecord(0.1 * i, tuple(0.01 * i + j for j in range(n)), 1.0 / (i + 1), 1e-9, meta)
            for i in range(count)], meta


def test_empty_output_has_header(tmp_path):
    meta = make_metadata(0.5, 2, "constant")
    write_output([], tmp_path / "e.csv", "csv", meta, 2)
    assert (tmp_path / "e.csv").read_text().splitlines() == [
        "t,x1,x2,value,error_estimate,alpha,n,operator,version"]
    write_output([], tmp_path / "e.json", "json", meta)
    assert json.loads((tmp_path / "e.json").read_text()) == {"metadata": meta, "records": []}


def test_hundred_records_give_hundred_and_one_lines(tmp_path):
    recs, meta = records(100, 2)
    write_output(recs, tmp_path / "r.csv", "csv", meta)
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 101


def test_json_round_trip(tmp_path):
    recs, meta = records(20, 3)
    write_output(recs, tmp_path / "r.json", "json", meta)
    meta2, recs2 = read_json_output(tmp_path / "r.json")
    assert meta2 == meta and recs2 == recs


def test_output_is_bit_stable(tmp_path):
    recs, meta = records(30)
    write_output(recs, tmp_path / "a.json", "json", meta)
    write_output(recs, tmp_path / "b.json", "json", meta)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert format_output(recs, "csv", meta) == format_output(recs, "csv", meta)


def test_non_finite_values_survive(tmp_path):
    meta = make_metadata(0.5, 1, "constant")
    recs = [OutputRecord(1.0, (0.0,), float("nan"), float("inf"), meta)]
    write_output(recs, tmp_path / "n.json", "json", meta)
    _, back = read_json_output(tmp_path / "n.json")
    assert np.isnan(back[0].value) and back[0].error_estimate == float("inf")


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        format_output([], "xml", {})
