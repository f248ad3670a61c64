import csv
import hashlib
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polycover.cli import THREADS_ENV, dumps, run


def _run(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def _result(out_dir):
    return json.loads((out_dir / "result.json").read_text())


MLR_SMALL = {"data": {"n": 20_000, "model": {"kind": "mlr", "betas": [[3.0, 0, 0, 0, 0, 0], [0, -2.0, 0, 0, 0, 0]],
                                             "sigma": 0.0}}}


def test_cover_fixture_sound(tmp_path, capsys):
    out = tmp_path / "cov"
    code, _, _ = _run(capsys, "cover", "--out", out)
    assert code == 0
    res = _result(out)
    assert res["soundness"]["sound"] is True
    assert res["size"] == len(res["points"]) == len(res["tags"])
    with open(out / "points.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "tag"] and len(rows) == res["size"] + 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["result_sha256"] == hashlib.sha256((out / "result.json").read_bytes()).hexdigest()
    assert man["blas_threads"] == 1 and "numpy" in man["versions"] and man["wall_time_s"] >= 0


def test_selftest_passes(capsys):
    code, out, _ = _run(capsys, "selftest")
    assert code == 0
    assert "0 failed" in out


def test_learn_mlr_noiseless(tmp_path, capsys):
    cfg = _write(tmp_path / "mlr.json", {**MLR_SMALL, "data": {**MLR_SMALL["data"],
                                                               "model": {**MLR_SMALL["data"]["model"], "sigma": 0.01}}})
    code, _, _ = _run(capsys, "learn-mlr", "--noiseless", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0
    res = _result(tmp_path / "o")
    assert res["match_error"]["parameter"] < 1e-9
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["config"]["data"]["model"]["sigma"] == 0.0


@pytest.mark.parametrize("cfg, path", [
    ({"bogus": 1}, "bogus"),
    ({"data": {"n": -5, "model": {"kind": "gmm", "means": [[0.0]]}}}, "data.n"),
    ({"data": {"n": 10, "model": {"kind": "gmm", "means": [[0.0]], "extra": 2}}}, "data.model.gmm.extra"),
    ({"seed": 2 ** 64}, "seed"),
    ({"task": "nope"}, "task"),
])
def test_config_errors_name_field(tmp_path, capsys, cfg, path):
    code, _, err = _run(capsys, "learn-gmm", "--config", _write(tmp_path / "c.json", cfg), "--out", tmp_path)
    assert code == 2
    assert f"config error at {path}" in err


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(capsys, "cover", "--config", bad)[0] == 2
    assert _run(capsys, "cover", "--config", tmp_path / "missing.json")[0] == 2
    code, _, err = _run(capsys, "cover", "--config", _write(tmp_path / "p.json", {"polys": [[[[1, 2], 1.0]]]}),
                        "--out", tmp_path / "o")
    assert code == 2 and "polys.0.0" in err
    assert _run(capsys, "cover", "--noiseless")[0] == 2


MOMENT_MODELS = {
    "gmm": {"kind": "gmm", "means": [[1.0, 0.0], [-1.0, 0.5]]},
    "relu": {"kind": "glm", "a": [1.0], "W": [[0.6, 0.8]]},
    "glm": {"kind": "glm", "a": [1.0], "W": [[1.0, 0.0]], "activation": "abs"},
    "mlr": {"kind": "mlr", "betas": [[1.0, 0.0], [0.0, -1.0]], "sigma": 0.1},
    "hyperplane": {"kind": "hyperplane", "normals": [[1.0, 0.0], [0.0, 1.0]]},
}


@pytest.mark.parametrize("estimator", sorted(MOMENT_MODELS))
def test_moments_every_estimator(tmp_path, capsys, estimator):
    cfg = {"data": {"n": 5000, "model": MOMENT_MODELS[estimator]}, "estimator": estimator, "d": 1,
           "activation": "abs" if estimator == "glm" else "relu"}
    code, _, err = _run(capsys, "moments", "--config", _write(tmp_path / "c.json", cfg), "--out", tmp_path / "o")
    assert code == 0, err
    res = _result(tmp_path / "o")
    assert res["order"] == 2 and len(res["values"]) == len(res["orbits"]) == 3
    assert res["stderr_frobenius"] > 0
    assert res["stderr"] is None if estimator == "mlr" else len(res["stderr"]) == 3
    with open(tmp_path / "o" / "tensor.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["alpha_1", "alpha_2", "multiplicity", "value", "stderr"] and len(rows) == 4


def test_moments_model_mismatch(tmp_path, capsys):
    cfg = {"data": {"n": 100, "model": MOMENT_MODELS["gmm"]}, "estimator": "mlr"}
    code, _, err = _run(capsys, "moments", "--config", _write(tmp_path / "c.json", cfg))
    assert code == 2 and "estimator" in err


def test_glm_identity_rejected(tmp_path, capsys):
    cfg = _write(tmp_path / "g.json", {"data": {"n": 2000, "model": {"kind": "glm", "a": [1.0], "W": [[1.0, 0.0, 0.0]],
                                                                     "activation": "identity"}}})
    code, _, err = _run(capsys, "learn-glm", "--config", cfg, "--out", tmp_path / "o")
    assert code == 2
    assert "precondition rejected" in err and "odd activation" in err
    assert not (tmp_path / "o" / "result.json").exists()


def test_schema_published(capsys):
    code, out, _ = _run(capsys, "learn-mlr", "--schema")
    assert code == 0
    schema = json.loads(out)
    assert "noiseless" in schema["properties"] and schema["additionalProperties"] is False


def _round_trip(tmp_path, capsys, sub, cfg_path=None, threads=(1, 3)):
    first = tmp_path / f"{sub}-a"
    argv = [sub, "--out", first, "--threads", threads[0]] + (["--config", cfg_path] if cfg_path else [])
    assert _run(capsys, *argv)[0] == 0
    again = tmp_path / f"{sub}-b"
    assert _run(capsys, sub, "--config", first / "manifest.json", "--out", again, "--threads", threads[1])[0] == 0
    return first, again


def test_manifest_round_trip_cover(tmp_path, capsys):
    a, b = _round_trip(tmp_path, capsys, "cover")
    assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()
    assert (a / "points.csv").read_bytes() == (b / "points.csv").read_bytes()


def test_manifest_round_trip_mlr(tmp_path, capsys):
    cfg = _write(tmp_path / "m.json", MLR_SMALL)
    a, b = _round_trip(tmp_path, capsys, "learn-mlr", cfg, threads=(1, 2))
    assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    ma["config"].pop("out"), mb["config"].pop("out")
    assert ma["config"] == mb["config"] and ma["result_sha256"] == mb["result_sha256"]


def test_manifest_subcommand_mismatch(tmp_path, capsys):
    a = tmp_path / "cov"
    assert _run(capsys, "cover", "--out", a)[0] == 0
    code, _, err = _run(capsys, "learn-gmm", "--config", a / "manifest.json")
    assert code == 2 and "subcommand" in err


def test_threads_env_variable(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "2")
    assert _run(capsys, "cover", "--out", tmp_path / "e")[0] == 0
    assert json.loads((tmp_path / "e" / "manifest.json").read_text())["threads"] == 2
    assert _run(capsys, "cover", "--out", tmp_path / "f", "--threads", 1)[0] == 0
    assert json.loads((tmp_path / "f" / "manifest.json").read_text())["threads"] == 1
    assert (tmp_path / "e" / "result.json").read_bytes() == (tmp_path / "f" / "result.json").read_bytes()
    monkeypatch.setenv(THREADS_ENV, "many")
    code, _, err = _run(capsys, "cover", "--out", tmp_path / "g")
    assert code == 2 and THREADS_ENV in err


def test_seed_flag_overrides(tmp_path, capsys):
    cfg = _write(tmp_path / "m.json", MLR_SMALL)
    assert _run(capsys, "learn-mlr", "--config", cfg, "--seed", 7, "--out", tmp_path / "s")[0] == 0
    assert _result(tmp_path / "s")["seed"] == 7


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=5))
def test_dumps_round_trips_floats(xs):
    back = json.loads(dumps({"v": np.array(xs)}))["v"]
    assert back == xs
    assert json.loads(dumps(math.pi)) == math.pi
