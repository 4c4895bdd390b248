import os

import numpy as np
import pytest

from vesiflow.cli import main
from vesiflow.config import ConfigError, format_config, load_config, save_config


def test_unknown_key_is_fatal(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[core]\nqq1 = 1.0\n")
    with pytest.raises(ConfigError, match="qq1"):
        load_config(p)


def test_unknown_section_is_fatal(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[corr]\nq1 = 1.0\n")
    with pytest.raises(ConfigError, match="corr"):
        load_config(p)


def test_missing_file_is_error():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/path.cfg")


def test_set_override_applies():
    cfg = load_config(None, ["scenario.preset=wall_adhesion", "core.q1=3.5", "timestepper.dt=5e-5"])
    assert cfg.spec.params.q1 == 3.5
    assert cfg.options.dt == 5e-5


def test_interaction_exponents_locked():
    with pytest.raises(ConfigError, match="alpha_exp"):
        load_config(None, ["energetics.interaction_alpha_exp=3"])
    load_config(None, ["energetics.interaction_alpha_exp=2"])  # accepted


def test_inline_comments_stripped(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("[core]\nq1 = 1.5    ; repulsion weight\n")
    assert load_config(p).spec.params.q1 == 1.5


def test_preset_roundtrip(tmp_path):
    cfg = load_config(None, ["scenario.preset=rouleaux"])
    path = tmp_path / "t.cfg"
    save_config(path, cfg)
    back = load_config(path)
    assert back.spec.params == cfg.spec.params
    assert back.spec.cells == cfg.spec.cells


def test_cli_exit_codes(tmp_path):
    # unknown key -> 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("[core]\nqq1 = 1.0\n")
    assert main(["run", "--config", str(bad)]) == 2
    # malformed --set -> 2
    assert main(["run", "--set", "nonsense"]) == 2
    # empty sweep values -> 2
    assert main(["sweep", "--key", "core.q1", "--values", ""]) == 2


def test_cli_run_small(tmp_path):
    cfg = tmp_path / "ok.cfg"
    cfg.write_text(
        "[scenario]\npreset = wall_adhesion\nnx = 10\nny = 10\nwall_band = 0.15\n"
        "cells = 0.5,0.4,0.2\n\n[core]\ninterface_eps = 0.06\n\n"
        "[timestepper]\ndt = 2e-4\nn_steps = 3\n"
    )
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "run.csv").exists()
    assert (out / "report.txt").exists()
    lines = (out / "run.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 + 1  # header + initial row + three steps
    report = (out / "report.txt").read_text()
    assert "interface_eps = 0.06" in report
    # overrides echoed in the resolved configuration
    assert "dt = 0.0002" in report


def test_cli_single_value_sweep_matches_run(tmp_path):
    cfg = tmp_path / "ok.cfg"
    cfg.write_text(
        "[scenario]\npreset = wall_adhesion\nnx = 10\nny = 10\nwall_band = 0.15\n"
        "cells = 0.5,0.4,0.2\n\n[core]\ninterface_eps = 0.06\n\n"
        "[timestepper]\ndt = 2e-4\nn_steps = 2\n"
    )
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    assert main(["run", "--config", str(cfg), "--out", str(out1),
                 "--set", "core.interaction_scale=800"]) == 0
    assert main(["sweep", "--config", str(cfg), "--key", "core.interaction_scale",
                 "--values", "800", "--out", str(out2)]) == 0
    r1 = (out1 / "run.csv").read_bytes()
    r2 = (out2 / "interaction_scale=800" / "run.csv").read_bytes()
    assert r1 == r2
    assert (out2 / "summary.csv").exists()
