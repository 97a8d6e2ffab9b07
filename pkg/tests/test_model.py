import pytest

from redfam import example_path
from redfam.model import (
    Configuration,
    Mechanism,
    ModelError,
    SparingMode,
    config_at,
    config_index,
    enumerate_configs,
    format_model,
    load_model,
    parse_model,
    reset_value_optimization,
    validate,
)

MINIMAL = "data out critical; element P reads{} writes{out} p=0.5;"


def test_minimal_model():
    fam = parse_model(MINIMAL)
    assert len(fam.depm.round_body) == 1
    assert fam.depm.critical == {0}
    assert fam.annotations == ()
    assert fam.size == 1
    assert enumerate_configs(fam)[0].abbrev == ""


def test_shipped_family_sizes():
    assert load_model(example_path("pid.fam")).size == 64
    assert load_model(example_path("vcl.fam")).size == 65536
    assert load_model(example_path("scale.fam")).size == 65536


def test_enumerate_order():
    fam = parse_model(MINIMAL + "element Q reads{out} writes{out} p=0.1;"
                      "protect P with {none,voting}; protect Q with {none,voting};")
    assert [c.abbrev for c in enumerate_configs(fam)] == ["--", "-v", "v-", "vv"]
    one = parse_model(MINIMAL + "protect P with {none,comparison};")
    assert [c.abbrev for c in enumerate_configs(one)] == ["-", "c"]


def test_vcl_enumeration_length_and_index_roundtrip():
    fam = load_model(example_path("vcl.fam"))
    configs = enumerate_configs(fam)
    assert len(configs) == 65536
    assert len(set(c.abbrev for c in configs)) == 65536
    for i in (0, 1, 4095, 65535):
        assert config_at(fam, i) == configs[i]
        assert config_index(fam, configs[i]) == i


def test_configuration_from_abbrev():
    fam = load_model(example_path("pid.fam"))
    c = Configuration.from_abbrev(fam, "c-s")
    assert c.mechanism(fam.element("P").id) is Mechanism.COMPARISON
    assert c.mechanism(fam.element("D").id) is Mechanism.SPARING
    assert c.mechanism(fam.element("Sum").id) is Mechanism.NONE
    with pytest.raises(ValueError):
        Configuration.from_abbrev(fam, "cc")


def test_round_trip_print_parse():
    for name in ("pid.fam", "vcl.fam", "scale.fam"):
        fam = load_model(example_path(name))
        assert parse_model(format_model(fam)) == fam


def test_sparing_parameters_parsed():
    fam = parse_model(MINIMAL + "protect P with {none,sparing}; sparing spares=3 coverage=0.9 mode=recompute;")
    assert (fam.spare_count, fam.coverage, fam.sparing_mode) == (3, 0.9, SparingMode.RECOMPUTE)


def test_parse_errors_carry_position():
    with pytest.raises(ModelError) as exc:
        parse_model("data out critical;\nelement P reads{nope} writes{out} p=0.5;")
    assert exc.value.line == 2
    assert exc.value.col is not None
    assert "nope" in str(exc.value)
    with pytest.raises(ModelError):
        parse_model(MINIMAL + "element Q reads{} writes{out} p=1.5;")
    with pytest.raises(ModelError, match="unknown mechanism"):
        parse_model(MINIMAL + "protect P with {none,tmr};")


def test_validate_diagnostics():
    no_crit = parse_model("data out; element P reads{} writes{out} p=0.5;", check=False)
    assert any("no failure condition" in d for d in validate(no_crit))
    with pytest.raises(ModelError, match="no failure condition"):
        parse_model("data out; element P reads{} writes{out} p=0.5;")
    with pytest.raises(ModelError, match="Ghost"):
        parse_model(MINIMAL + "protect Ghost with {none,voting};")
    assert validate(load_model(example_path("pid.fam"))) == []


def test_allowed_set_without_none_rejected():
    with pytest.raises(ModelError, match="none"):
        parse_model(MINIMAL + "protect P with {voting};")


def _resets_of(depm, name):
    d = [x.id for x in depm.data if x.name == name][0]
    return [g for g, dd in depm.resets if dd == d]


def test_reset_after_last_read():
    fam = parse_model("data x; data out critical;"
                      "element A reads{} writes{x} p=0.1;"
                      "element B reads{x} writes{out} p=0.1;")
    opt = reset_value_optimization(fam.depm)
    assert _resets_of(opt, "x") == [2]  # directly after B


def test_no_reset_when_always_read():
    fam = parse_model("data d critical;"
                      "element A reads{d} writes{d} p=0.1;"
                      "element B reads{d} writes{d} p=0.1;")
    assert reset_value_optimization(fam.depm) == fam.depm


def test_critical_datum_not_reset_before_check():
    fam = load_model(example_path("pid.fam"))
    opt = reset_value_optimization(fam.depm)
    m = len(opt.round_body)
    for d in opt.critical:
        assert (m, d) not in opt.resets


def test_reset_optimization_idempotent():
    depm = load_model(example_path("vcl.fam")).depm
    once = reset_value_optimization(depm)
    assert reset_value_optimization(once) == once
