import pytest

from xylab.core.config import settings
from xylab.core.errors import ConfigError
from xylab.models.experiment import load_experiment, parse_experiment


def test_defaults_fill_in():
    config = parse_experiment({"potential": {"name": "cosine"}})
    assert config.grid.n_nodes == 128
    assert config.c_schedule[0] == 1.0
    assert config.sampler.seed == 20240601
    assert config.build_probes()[0].periodic_tail == (0.0,)
    assert config.build_metric().theta == 0.5


def test_unknown_key_names_the_field():
    with pytest.raises(ConfigError) as err:
        parse_experiment({"potential": {"name": "cosine"}, "grid": {"nodes": 64}})
    assert err.value.field == "grid.nodes"
    assert err.value.exit_code == 2


def test_schedule_must_increase():
    with pytest.raises(ConfigError) as err:
        parse_experiment({"potential": {"name": "cosine"}, "c_schedule": [5, 1]})
    assert err.value.field == "c_schedule"


def test_potential_needs_exactly_one_source():
    with pytest.raises(ConfigError):
        parse_experiment({"potential": {}})
    with pytest.raises(ConfigError):
        parse_experiment({"potential": {"name": "cosine", "fourier": [{"freqs": [1], "cos": 1.0}]}})


def test_arity_mismatch():
    config = parse_experiment({"potential": {"name": "xy_pair"}, "grid": {"arity": 1}})
    with pytest.raises(ConfigError) as err:
        config.build_potential()
    assert err.value.field == "grid.arity"


def test_fourier_and_sets_build():
    config = parse_experiment({
        "potential": {"fourier": [{"freqs": [1, -1], "cos": 1.0}, {"freqs": [1, 0], "sin": 0.3}]},
        "sets": [{"arcs": {0: [[2.64, 3.64]], 2: [[0.0, 1.0]]}}],
    })
    assert config.build_potential().arity == 2
    boxes = config.build_sets()[0]
    assert boxes.depth == 3


def test_load_experiment_from_yaml(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(
        "name: pinned\n"
        "potential:\n"
        "  name: xy_pinned\n"
        "  params: {eps: 0.25}\n"
        "c_schedule: [1, 10]\n",
        encoding="utf-8",
    )
    config = load_experiment(path)
    assert config.name == "pinned"
    assert config.build_potential().params == {"eps": 0.25}


def test_load_experiment_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "missing.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("potential: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment(broken)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment(listing)


@pytest.mark.parametrize("arcs", [{0: [[1.0, 1.0]]}, {0: [[0.0, 1.0], [2.0, 2.0]]}, {-1: [[0.0, 1.0]]}])
def test_bad_arcs_are_rejected_at_load(arcs):
    with pytest.raises(ConfigError) as err:
        parse_experiment({"potential": {"name": "cosine"}, "sets": [{"arcs": {0: [[2.0, 3.0]]}}, {"arcs": arcs}]})
    assert err.value.field == "sets.1.arcs"
    assert err.value.exit_code == 2


@pytest.mark.parametrize("key", ["probes", "sampler_c"])
def test_lists_must_not_be_empty(key):
    with pytest.raises(ConfigError) as err:
        parse_experiment({"potential": {"name": "cosine"}, key: []})
    assert err.value.field == key


def test_selection_gap_defaults_to_settings(monkeypatch):
    monkeypatch.setattr(settings, "SELECTION_GAP", 0.2)
    assert parse_experiment({"potential": {"name": "cosine"}}).selection_gap == 0.2
    config = parse_experiment({"potential": {"name": "cosine"}, "selection_gap": 0.01})
    assert config.selection_gap == 0.01
    with pytest.raises(ConfigError):
        parse_experiment({"potential": {"name": "cosine"}, "selection_gap": 0.0})
