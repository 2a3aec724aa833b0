import pytest

from spectralshift.config import DEFAULT_TOLERANCES, ExperimentConfig, validate

LATTICE = {"d": 3, "N": 4, "h": 0.5, "m": 2, "potential": {"family": "hedgehog", "mu": 1.0}}


def fields(raw):
    return [it["field"] for it in validate(raw)]


def test_valid_configs_have_no_issues():
    assert validate({"kind": "clifford-check", "clifford": {"d": [1, 3, 5, 7]}}) == []
    assert validate({"kind": "trace-compare", "lattice": LATTICE}) == []
    assert validate({"kind": "example", "example": {}}) == []
    assert validate({"kind": "full-pipeline", "lattice": LATTICE, "example": {"method": "all"}}) == []


def test_even_d_names_the_field():
    assert fields({"kind": "trace-compare", "lattice": dict(LATTICE, d=4)}) == ["lattice.d"]
    assert fields({"kind": "clifford-check", "clifford": {"d": [3, 6]}}) == ["clifford.d"]


def test_missing_potential_block():
    assert "lattice.potential" in fields({"kind": "trace-compare", "lattice": {k: v for k, v in LATTICE.items()
                                                                              if k != "potential"}})


def test_missing_module_block():
    issues = validate({"kind": "trace-compare"})
    assert issues and "lattice" in issues[0]["message"]


def test_unknown_keys_rejected():
    assert fields({"kind": "clifford-check", "clifford": {"d": [3]}, "colour": "red"}) == ["colour"]
    assert fields({"kind": "trace-compare", "lattice": dict(LATTICE, spacing=1.0)}) == ["lattice.spacing"]
    assert fields({"kind": "clifford-check", "clifford": {}, "tolerances": {"made_up": 1.0}}) == ["tolerances"]


def test_potential_keys_follow_the_family():
    bad = dict(LATTICE, potential={"family": "hedgehog", "amplitude": 2.0})
    assert fields({"kind": "trace-compare", "lattice": bad}) == ["lattice.potential"]


@pytest.mark.parametrize("patch, field", [
    ({"t_list": [0.5, -1.0]}, "lattice.t_list"),
    ({"h": 0.0}, "lattice.h"),
    ({"N": 1}, "lattice.N"),
])
def test_plausibility(patch, field):
    assert fields({"kind": "trace-compare", "lattice": dict(LATTICE, **patch)}) == [field]


def test_cap_limit():
    issues = validate({"kind": "trace-compare", "lattice": dict(LATTICE, N=20)})
    assert len(issues) == 1 and "cap" in issues[0]["message"]
    assert validate({"kind": "trace-compare", "lattice": dict(LATTICE, N=20, cap=32000)}) == []


def test_phi_order():
    assert fields({"kind": "trace-compare", "lattice": dict(LATTICE, phi={"inner": 2.0, "outer": 1.0})}) \
        == ["lattice.phi"]


def test_ssf_block_counts_matrices():
    raw = {"kind": "ssf", "ssf": {"n": 2, "A": [[1.0]], "T": [[[1.0]]]}}
    assert fields(raw) == ["ssf"]


def test_tolerance_overrides():
    cfg = ExperimentConfig.model_validate({"kind": "clifford-check", "clifford": {},
                                           "tolerances": {"clifford": 1e-6}})
    assert cfg.tolerance("clifford") == 1e-6
    assert cfg.tolerance("trace_relgap") == DEFAULT_TOLERANCES["trace_relgap"]


def test_example_dimension_restricted():
    assert fields({"kind": "example", "example": {"d": 5}}) == ["example.d"]
