import csv
import json

import pytest
import yaml

from renewalsim.cli import main, run
from renewalsim.config import ExperimentConfig, build_model, validate_for_kind
from renewalsim.errors import ConfigurationError
from renewalsim.first_passage import PerturbedWalkModel
from renewalsim.staggered import StaggeredExponentialModel

WALK_MODEL = {
    "kind": "perturbed_walk",
    "increment": {"family": "exponential", "params": {"rate": 1.0}},
    "vector": {"kind": "centered_x", "coeffs": [1.0]},
    "stationary": {"kind": "geometric_ma", "h": "identity", "beta": 0.5,
                   "centered": True},
    "quadratic": {"Q": [[0.5]]},
}

PLAIN_MODEL = {
    "kind": "perturbed_walk",
    "increment": {"family": "exponential", "params": {"rate": 1.0}},
}


def full_config(**over):
    d = {"kind": "simulate", "seed": 11, "reps": 50, "model": PLAIN_MODEL,
         "a_grid": [8.0]}
    d.update(over)
    return d


def test_config_round_trip():
    cfg = ExperimentConfig.from_dict(full_config(
        model=WALK_MODEL, a=3.0, b=0.5, y="median", q=0.4, eps=0.25,
        backward_reps=100, depth=64, h=0.2, c=1.96, horizon=40, level=0.1,
        predicate={"kind": "xi_leq", "c": 0.0}))
    again = ExperimentConfig.from_dict(yaml.safe_load(cfg.dumps()))
    assert again == cfg


def test_config_defaults():
    cfg = ExperimentConfig.from_dict(full_config())
    assert cfg.out == "results"
    assert cfg.workers == 1
    assert cfg.q == 0.4 and cfg.eps == 0.5 and cfg.level == 0.05
    assert cfg.a is None and cfg.predicate is None


@pytest.mark.parametrize("doc,field", [
    ({"seed": 1, "reps": 10, "model": PLAIN_MODEL}, "config.kind"),
    (full_config(kind="thm9"), "config.kind"),
    (full_config(seed=-1), "config.seed"),
    (full_config(seed=2 ** 70), "config.seed"),
    (full_config(reps=0), "config.reps"),
    (full_config(zzz=1), "config.zzz"),
    (full_config(q=0.3), "config.q"),
    (full_config(eps=0.0), "config.eps"),
    (full_config(level=1.0), "config.level"),
    (full_config(a_grid=[]), "config.a_grid"),
    (full_config(a_grid=[1.0, -2.0]), "config.a_grid"),
    (full_config(y="maybe"), "config.y"),
    (full_config(predicate={"kind": "sometimes"}), "config.predicate.kind"),
    (full_config(predicate={"kind": "xi_leq"}), "config.predicate.c"),
])
def test_config_rejections(doc, field):
    with pytest.raises(ConfigurationError) as err:
        ExperimentConfig.from_dict(doc)
    assert err.value.field == field


@pytest.mark.parametrize("model,field", [
    ({"kind": "lattice"}, "config.model.kind"),
    ({"kind": "perturbed_walk"}, "config.model.increment"),
    ({"kind": "perturbed_walk",
      "increment": {"family": "exponential", "params": {"rat": 1.0}}},
     "config.model.increment.params.rat"),
    ({"kind": "perturbed_walk",
      "increment": {"family": "exponential", "params": {"rate": -1.0}}},
     "config.model.increment.params"),
    ({"kind": "perturbed_walk",
      "increment": {"family": "exponential", "params": {"rate": 1.0}},
      "quadratic": {"Q": [[0.5]]}}, "model.vector_law"),
    ({"kind": "staggered", "arrival_rate": 1.0, "theta": 1.0, "g": "anova"},
     "config.model.g"),
])
def test_model_rejections(model, field):
    cfg = ExperimentConfig.from_dict(full_config(model=model))
    with pytest.raises(ConfigurationError) as err:
        build_model(cfg)
    assert field in str(err.value)


def test_cross_field_validation():
    with pytest.raises(ConfigurationError) as err:
        validate_for_kind(ExperimentConfig.from_dict(
            full_config(kind="verify-thm1", a=None)))
    assert err.value.field == "config.a"
    with pytest.raises(ConfigurationError) as err:
        validate_for_kind(ExperimentConfig.from_dict(
            full_config(kind="verify-thm4", a_grid=None)))
    assert err.value.field == "config.a_grid"
    with pytest.raises(ConfigurationError) as err:
        validate_for_kind(ExperimentConfig.from_dict(full_config(
            kind="example-fwci", h=0.2, c=1.96)))
    assert err.value.field == "config.model.kind"


def test_built_models_have_expected_types():
    walk = build_model(ExperimentConfig.from_dict(full_config(
        model=WALK_MODEL)))
    assert isinstance(walk, PerturbedWalkModel)
    assert walk.mixture() is not None
    stag = build_model(ExperimentConfig.from_dict(full_config(
        kind="constants",
        model={"kind": "staggered", "arrival_rate": 1.0, "theta": 1.0,
               "g": "fixed_width_ci"})))
    assert isinstance(stag, StaggeredExponentialModel)


def test_sha256_ignores_out_and_workers():
    base = ExperimentConfig.from_dict(full_config())
    moved = ExperimentConfig.from_dict(full_config(out="elsewhere",
                                                   workers=8))
    reseeded = ExperimentConfig.from_dict(full_config(seed=12))
    assert base.sha256() == moved.sha256()
    assert base.sha256() != reseeded.sha256()


@pytest.fixture
def config_file(tmp_path):
    def write(doc, name="cfg.yaml"):
        p = tmp_path / name
        p.write_text(yaml.safe_dump(doc))
        return str(p)
    return write


def read_results(out_dir, kind):
    with open(out_dir / f"{kind}.csv", newline="") as f:
        table = list(csv.reader(f))
    with open(out_dir / "manifest.json") as f:
        manifest = json.load(f)
    return table, manifest


MANIFEST_KEYS = {"kind", "config_sha256", "seed", "replications",
                 "toolkit_version", "wall_time_seconds", "non_crossing_rate",
                 "passed", "flags", "table"}


def test_cli_simulate_outputs(tmp_path, config_file):
    out = tmp_path / "out"
    path = config_file(full_config(reps=200, out=str(out)))
    assert main(["--config", path]) == 0
    table, manifest = read_results(out, "simulate")
    assert table[0] == ["a", "reps", "mean_t", "se_t", "mean_R", "se_R",
                        "mean_xi", "mean_zeta", "non_crossing_fraction"]
    assert len(table) == 2
    assert float(table[1][2]) == pytest.approx(9.0, abs=1.0)
    assert MANIFEST_KEYS <= set(manifest)
    assert manifest["kind"] == "simulate"
    assert manifest["seed"] == 11
    assert manifest["replications"] == 200
    assert manifest["passed"] is None
    assert manifest["flags"] == []
    assert manifest["table"] == "simulate.csv"
    cfg = ExperimentConfig.load(path)
    assert manifest["config_sha256"] == cfg.sha256()


def test_cli_worker_count_does_not_change_bytes(tmp_path, config_file):
    doc = full_config(reps=1500, a_grid=[6.0])
    path = config_file(doc)
    outs = []
    for i, w in enumerate((1, 2)):
        out = tmp_path / f"run{i}"
        assert main(["--config", path, "--out", str(out),
                     "--workers", str(w)]) == 0
        outs.append((out / "simulate.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_flag_overrides(tmp_path, config_file):
    path = config_file(full_config())
    out = tmp_path / "o"
    assert main(["--config", path, "--seed", "999", "--reps", "120",
                 "--out", str(out)]) == 0
    _, manifest = read_results(out, "simulate")
    assert manifest["seed"] == 999
    assert manifest["replications"] == 120


def test_cli_sha_tracks_overrides(tmp_path, config_file):
    path = config_file(full_config(reps=150))
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["--config", path, "--out", str(a)]) == 0
    assert main(["--config", path, "--out", str(b), "--workers", "2"]) == 0
    _, ma = read_results(a, "simulate")
    _, mb = read_results(b, "simulate")
    assert ma["config_sha256"] == mb["config_sha256"]
    c = tmp_path / "c"
    assert main(["--config", path, "--out", str(c), "--seed", "1"]) == 0
    _, mc = read_results(c, "simulate")
    assert mc["config_sha256"] != ma["config_sha256"]


def test_cli_bad_config_exits_2(tmp_path, config_file):
    path = config_file(full_config(kind="verify-thm1"))
    assert main(["--config", path]) == 2
    assert main(["--config", str(tmp_path / "missing.yaml")]) == 2
    broken = tmp_path / "broken.yaml"
    broken.write_text("kind: [unclosed\n")
    assert main(["--config", str(broken)]) == 2
    assert not (tmp_path / "results").exists()


def test_cli_flags_non_crossing_and_exits_1(tmp_path, config_file):
    model = dict(PLAIN_MODEL, horizon_factor=0.36)
    out = tmp_path / "nc"
    path = config_file(full_config(model=model, reps=300, a_grid=[50.0],
                                   out=str(out)))
    with pytest.warns(RuntimeWarning, match="non-crossing"):
        assert main(["--config", path]) == 1
    table, manifest = read_results(out, "simulate")
    assert manifest["flags"]
    assert manifest["non_crossing_rate"] > 0.01
    assert float(table[1][8]) == manifest["non_crossing_rate"]


def test_cli_constants_staggered(tmp_path, config_file):
    out = tmp_path / "k"
    doc = {"kind": "constants", "seed": 5, "reps": 600, "out": str(out),
           "model": {"kind": "staggered", "arrival_rate": 1.0, "theta": 1.0,
                     "g": "fixed_width_ci"}}
    assert main(["--config", config_file(doc)]) == 0
    table, manifest = read_results(out, "constants")
    assert table[0][:4] == ["mu", "sigma2", "rho", "se_rho"]
    assert float(table[1][0]) == pytest.approx(1.0)
    assert float(table[1][1]) == pytest.approx(4.0)
    assert manifest["mu"] == pytest.approx(1.0)
    assert manifest["lam"] == pytest.approx(1.0)


def test_run_thm1_table(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "kind": "verify-thm1", "seed": 7, "reps": 1200,
        "out": str(tmp_path / "t1"), "model": WALK_MODEL,
        "a": 60.0, "b": 0.5, "y": "median",
        "predicate": {"kind": "xi_leq", "c": 0.0}})
    code = run(cfg)
    table, manifest = read_results(tmp_path / "t1", "verify-thm1")
    assert table[0] == ["label", "estimate", "theory", "std_error", "reps",
                        "passed"]
    assert manifest["passed"] == (code == 0)
