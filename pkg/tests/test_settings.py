import pytest

from errors import DataError, UsageError
from settings import OUT_ENV, RunConfig, parse_float_grid, parse_int_grid, read_config_file, resolve_config


def test_grids():
    assert parse_int_grid("0..4") == [0, 1, 2, 3, 4]
    assert parse_int_grid("1,3, 5") == [1, 3, 5]
    assert parse_float_grid("0,0.1,1e-5") == [0.0, 0.1, 1e-5]
    assert parse_float_grid("1..3") == [1.0, 2.0, 3.0]
    with pytest.raises(UsageError):
        parse_int_grid("4..1")
    with pytest.raises(UsageError):
        parse_float_grid("a,b")


def test_precedence_defaults_file_flags(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("epochs = 50\nlr-generator = 0.2\nsystem = springs\n")
    run = resolve_config(cfg, {"epochs": 7, "graph": None}, base={"epochs": 100, "hidden": 64})
    assert run.epochs == 7
    assert run.lr_generator == 0.2
    assert run.hidden == 64
    assert run.system == "springs"
    assert run.graph is None


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("learning_rate = 0.1\n")
    with pytest.raises(UsageError):
        read_config_file(cfg)
    with pytest.raises(DataError):
        read_config_file(tmp_path / "missing.ini")


def test_bad_value_is_usage_error():
    with pytest.raises(UsageError):
        resolve_config(None, {"epochs": "many"})


def test_out_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(OUT_ENV, str(tmp_path))
    assert RunConfig().resolved_out() == tmp_path
    assert RunConfig(out="x").resolved_out().name == "x"


def test_train_config_takes_first_k():
    cfg = RunConfig(K="3", epochs=10, tied=False).train_config()
    assert cfg.K == 3 and cfg.epochs == 10 and cfg.tied is False
