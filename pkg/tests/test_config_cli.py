import csv
import json
from pathlib import Path

import pytest

from fgash import cli
from fgash.config import from_dict, load, with_overrides
from fgash.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMALL = {"model": "simple_avoided", "epsilon": 0.0625, "t_final": 0.25, "M": [1, 2],
         "replications": 2, "seed": 3}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_epsilon_list_expands():
    cfgs = from_dict({**SMALL, "epsilon": [0.0625, 0.03125]})
    assert [c.epsilon for c in cfgs] == [0.0625, 0.03125]
    assert all(c.M == (1, 2) for c in cfgs)
    assert cfgs[1].model_delta == 0.03125


def test_defaults():
    c = from_dict({})[0]
    assert c.step == pytest.approx(c.epsilon / 32)
    assert c.initial_packet().q0 == -1.0 and c.hop_mode == "bernoulli"
    assert with_overrides(c, exact_thinning=True).hop_mode == "clock"


@pytest.mark.parametrize("bad", [
    {"nope": 1},
    {"epsilon": 0.1},
    {"epsilon": -1.0},
    {"sampling_mode": "sobol"},
    {"M": [0]},
    {"replications": 0},
    {"packet": {"width": 3}},
    {"dx": 0.01},
    {"times": [0.5, 0.2]},
    {"model": "unknown"},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        from_dict(bad)


def test_time_step_too_large_for_coupling():
    with pytest.raises(ConfigError, match="reduce dt"):
        from_dict({"model": "conical", "delta": 0.001, "dt": 0.01})


def test_roundtrip_through_dict():
    c = from_dict(SMALL)[0]
    d = c.to_dict()
    d.pop("packet")
    assert from_dict(d)[0] == c


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.name)
def test_shipped_configs_load(path):
    assert load(path)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.json")


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["run-fga", str(write(tmp_path, {"nope": 1})), "--out", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_numerical_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, {**SMALL, "t_final": 1.5})
    assert cli.main(["run-reference", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "BoundaryContamination" in capsys.readouterr().err


def test_cli_inspect_model(tmp_path):
    out = tmp_path / "m.csv"
    assert cli.main(["inspect-model", "--model", "conical", "--delta", "0.1",
                     "--x-min", "-1", "--x-max", "1", "--n", "5", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x", "E0", "E1", "d01", "D01"]
    mid = [float(v) for v in rows[3]]
    assert mid[:3] == pytest.approx([0.0, -0.1, 0.1])
    assert abs(mid[3]) == pytest.approx(5.0)
    assert cli.main(["inspect-model", "--model", "conical", "--n", "1"]) == 2


def test_cli_sample_init(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["sample-init", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.reader((tmp_path / "o" / "partition.csv").open()))
    assert [r[0] for r in rows] == ["M", "1", "2"]
    assert int(rows[2][3]) >= int(rows[1][3])
    assert (tmp_path / "o" / "amplitude.csv").stat().st_size > 0


def test_cli_run_fga_outputs(tmp_path):
    cfg = write(tmp_path, {**SMALL, "epsilon": [0.0625, 0.03125], "M": [1]})
    assert cli.main(["run-fga", str(cfg), "--out", str(tmp_path / "o"), "--replications", "2"]) == 0
    for sub in ("eps_1-16", "eps_1-32"):
        d = tmp_path / "o" / sub
        names = {p.name for p in d.iterdir()}
        assert {"errors.csv", "stats.csv", "reference.csv", "wavefield_M1.csv"} <= names
        assert len(list(csv.reader((d / "errors.csv").open()))) == 3


def test_cli_transition_curve(tmp_path):
    cfg = write(tmp_path, {**SMALL, "sampling_mode": "iid", "n_traj": [200]})
    assert cli.main(["transition-curve", str(cfg), "--out", str(tmp_path / "o"),
                     "--t-step", "0.125"]) == 0
    rows = list(csv.reader((tmp_path / "o" / "transition.csv").open()))
    assert rows[0] == ["t", "rate_fga", "rate_ref"]
    assert [float(r[0]) for r in rows[1:]] == [0.0, 0.125, 0.25]
    assert float(rows[1][1]) == 0.0 and float(rows[1][2]) < 1e-20


def test_cli_transition_curve_needs_times(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["transition-curve", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_cli_run_fga_is_reproducible(tmp_path):
    cfg = write(tmp_path, SMALL)
    for name in ("a", "b"):
        assert cli.main(["run-fga", str(cfg), "--out", str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
