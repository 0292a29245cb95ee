import pytest

from bindpose.config import ConfigError, SEED_ENV, build_run_config, load_run_config, parse_config_text, resolve_seed


def test_parse_and_build():
    values = parse_config_text("""
        # comment
        d_f = 32   # trailing comment
        n_heads = 2
        lr = 5e-4
        dtype = float64
        max_nodes_ladder = 0:100, 4:150
        steps = none
    """)
    cfg = build_run_config(values)
    assert cfg.net.d_f == 32 and cfg.net.n_heads == 2 and cfg.net.d_e == 80
    assert cfg.train.lr == 5e-4 and cfg.train.steps is None
    assert cfg.train.max_nodes_ladder == ((0, 100), (4, 150))
    assert cfg.dtype == "float64"


def test_full_preset():
    cfg = build_run_config(parse_config_text("preset = full\nn_blocks = 2"))
    assert (cfg.net.d_f, cfg.net.d_e, cfg.net.n_heads, cfg.net.n_cycles, cfg.net.n_blocks) == (768, 384, 8, 4, 2)


@pytest.mark.parametrize("text, match", [
    ("bogus = 1", "unknown key"),
    ("lr = 1e-3\nlr = 2e-3", "duplicate key"),
    ("d_f 12", "key = value"),
    ("d_f = twelve", "cannot read"),
    ("max_nodes_ladder = 0-100", "epoch:max_nodes"),
])
def test_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


@pytest.mark.parametrize("text", ["preset = huge", "dtype = float16", "d_f = 10\nn_heads = 4", "lr = -1"])
def test_build_errors(text):
    with pytest.raises(ConfigError):
        build_run_config(parse_config_text(text))


def test_seed_priority(monkeypatch, tmp_path):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert resolve_seed(None, None) == (0, "default")
    monkeypatch.setenv(SEED_ENV, "9")
    assert resolve_seed(None, None) == (9, "env")
    assert resolve_seed(None, 5) == (5, "config")
    assert resolve_seed(3, 5) == (3, "flag")
    path = tmp_path / "run.cfg"
    path.write_text("seed = 5\n")
    assert load_run_config(path).train.seed == 5
    assert load_run_config(path, cli_seed=3).seed_source == "flag"
    monkeypatch.setenv(SEED_ENV, "x")
    with pytest.raises(ConfigError):
        resolve_seed(None, None)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "nope.cfg")
