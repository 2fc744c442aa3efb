import json
from pathlib import Path

import numpy as np
import pytest

from stokesgreen.cli import (
    ExperimentConfig,
    PRESET_CONFIGS,
    main,
    run_experiment,
    verify,
)
from stokesgreen.errors import ConfigError

BASE = {
    "domain": {"kind": "box", "extent": [1.0, 1.0, 1.0], "h": 0.125},
    "coefficients": {"kind": "identity"},
    "estimates": [],
}


def make_config(tmp_path, **overrides):
    raw = dict(BASE)
    raw.update(overrides)
    raw.setdefault("out", str(tmp_path / "out"))
    return ExperimentConfig.from_dict(raw)


# -- config validation -----------------------------------------------------------


def test_config_roundtrip(tmp_path):
    cfg = make_config(tmp_path, estimates=["poincare"], seed=7)
    path = tmp_path / "config.json"
    path.write_text(cfg.canonical())
    back = ExperimentConfig.from_file(path)
    assert back.digest() == cfg.digest()
    assert back.estimates == ["poincare"]


def test_invalid_estimate_id_rejected_before_solving(tmp_path):
    with pytest.raises(ConfigError):
        make_config(tmp_path, estimates=["T9-x"])


MALFORMED = [
    {},  # missing domain
    {"domain": "box"},  # wrong type
    {"domain": {"extent": [1, 1, 1], "h": 0.1}},  # missing kind
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "estimates": "decay"},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "poles": 7},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "poles": [[1, 2]]},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "eps_sweep": [-1]},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "R0": 2.0},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "seed": "zero"},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "workers": 0},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "solver": {"tol": -1}},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "bogus_field": 1},
    {"domain": {"kind": "box", "extent": [1, 1, 1], "h": 0.125}, "preset": "huge"},
]


@pytest.mark.parametrize("raw", MALFORMED, ids=range(len(MALFORMED)))
def test_malformed_config_corpus(raw):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_malformed_configs_exit_code_2(tmp_path):
    for i, raw in enumerate(MALFORMED):
        path = tmp_path / f"bad{i}.json"
        path.write_text(json.dumps(raw))
        assert main(["run", "--config", str(path)]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json")
    assert main(["run", "--config", str(broken)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


# -- pipeline runs -----------------------------------------------------------------


def test_empty_estimate_selection_writes_manifest_only(tmp_path):
    cfg = make_config(tmp_path)
    assert run_experiment(cfg) == 0
    out = Path(cfg.out)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert not (out / "reports.csv").exists()


def test_small_run_exit_zero_and_deterministic(tmp_path):
    outs = []
    for tag in ("a", "b"):
        cfg = make_config(tmp_path, estimates=["poincare", "oscillation", "bogovskii"],
                          seed=3, out=str(tmp_path / tag))
        assert run_experiment(cfg) == 0
        outs.append((Path(cfg.out) / "reports.csv").read_bytes())
    assert outs[0] == outs[1]  # identical config+seed => identical CSV


def test_smoke_preset_run_completes_quickly(tmp_path):
    import time

    t0 = time.time()
    code = main(["run", "--preset", "smoke", "--out", str(tmp_path / "smoke")])
    elapsed = time.time() - t0
    assert elapsed < 60
    assert code in (0, 1)  # decay windows at 16^3 are honest, not gamed
    manifest = json.loads((tmp_path / "smoke" / "manifest.json").read_text())
    assert manifest["status"] in ("ok", "estimate-failures")
    assert (tmp_path / "smoke" / "reports.csv").exists()


def test_cli_requires_config_or_preset():
    assert main(["run"]) == 2


# -- verify ---------------------------------------------------------------------


def test_verify_memory_budget_skips_gracefully(tmp_path, capsys):
    cfg = make_config(tmp_path, preset="deep", memory_budget_mb=256)
    assert verify(cfg) == 0
    assert "SKIP" in capsys.readouterr().out


def test_export_and_fixture_verify_and_tamper(tmp_path):
    out = tmp_path / "fix"
    code = main(["export", "--config", str(_write_export_config(tmp_path, out))])
    assert code == 0
    exports = sorted(out.glob("green_*.bin"))
    assert exports

    cfg = make_config(tmp_path, fixture_dir=str(out))
    assert verify(cfg) == 0

    # tamper: scale the stored G (first 9 of 12 values per cell) by 2
    data = np.frombuffer(exports[0].read_bytes(), dtype=float).reshape(-1, 12).copy()
    data[:, :9] *= 2.0
    exports[0].write_bytes(data.tobytes())
    assert verify(cfg) == 1


def _write_export_config(tmp_path, out):
    raw = {
        "domain": {"kind": "box", "extent": [1.0, 1.0, 1.0], "h": 0.125},
        "coefficients": {"kind": "identity"},
        "poles": [[0.44, 0.56, 0.52]],
        "eps_sweep": [0.375, 0.25],
        "estimates": [],
        "out": str(out),
    }
    path = tmp_path / "export.json"
    path.write_text(json.dumps(raw))
    return path


def test_builtin_presets_validate():
    for name, raw in PRESET_CONFIGS.items():
        cfg = ExperimentConfig.from_dict(dict(raw))
        assert cfg.domain["kind"] == "box"


def test_every_estimate_runner_end_to_end(tmp_path):
    # one pipeline exercising every estimate id at 16^3
    raw = {
        "domain": {"kind": "box", "extent": [1.0, 1.0, 1.0], "h": 1.0 / 16},
        "coefficients": {"kind": "identity"},
        "estimates": list(
            __import__("stokesgreen.cli", fromlist=["VALID_ESTIMATES"]).VALID_ESTIMATES
        ),
        "out": str(tmp_path / "full"),
        "seed": 1,
    }
    cfg = ExperimentConfig.from_dict(raw)
    code = run_experiment(cfg)
    assert code in (0, 1)  # windows at 16^3 are honest; no crash, no skip
    out = Path(cfg.out)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] in ("ok", "estimate-failures")
    csv_lines = (out / "reports.csv").read_text().strip().splitlines()
    ids = {line.split(",")[0] for line in csv_lines[1:]}
    # every selected estimate produced at least one report row
    for eid in ("T1-i", "T1-v", "T2-viii", "decay-interior", "symmetry",
                "averaging", "representation", "caccioppoli-interior",
                "caccioppoli-boundary", "oscillation", "bogovskii", "poincare"):
        assert any(i.startswith(eid) for i in ids), (eid, ids)
    records = (out / "reports.txt").read_text()
    assert "coefficients_digest" in records
