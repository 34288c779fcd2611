import math

import numpy as np
import pytest

from chj.cli import main
from chj.config import RunConfig, from_ini_string, load_config, parse_number, to_ini_string
from chj.experiments import build_ic, nu_tag, preset_configs, probe_tag
from chj.grid import FluidState, GridSpec, flatten

SMALL_INI = """
[grid]
nx = 8
ny = 8

[params]
dt = 0.01
nu = 1/6      # fraction syntax
n_steps = 5

[carleman]
orders = 2, 3
backend = tn

[probes]
points = 0 0; 5.5 2

[output]
prefix = small
"""


def test_parse_number():
    assert parse_number("1/6") == pytest.approx(1 / 6)
    assert parse_number(" 0.25 ") == 0.25
    assert parse_number("1e-3") == 1e-3
    with pytest.raises(ValueError):
        parse_number("pi")


def test_ini_parsing_and_roundtrip():
    cfg = from_ini_string(SMALL_INI)
    assert cfg.grid.nx == 8 and cfg.params.nu == pytest.approx(1 / 6) and cfg.params.n_steps == 5
    assert cfg.carleman.orders == (2, 3)
    assert cfg.probes == ((0.0, 0.0), (5.5, 2.0))
    assert cfg.prefix == "small"
    assert from_ini_string(to_ini_string(cfg)) == cfg
    assert from_ini_string("") == RunConfig()


@pytest.mark.parametrize(
    "text",
    ["[carleman]\norders = 5\n", "[carleman]\nbackend = gpu\n", "[params]\ndt = 0\n", "[grid]\nnx = 2\n", "[ic]\nkind = vortex\n"],
)
def test_ini_rejects_bad_values(text):
    with pytest.raises(ValueError):
        from_ini_string(text)


def test_default_ic_with_zero_velocity_is_rest():
    cfg = from_ini_string("[ic]\nux = 0\nuy = 0\n")
    np.testing.assert_array_equal(flatten(build_ic(cfg)), flatten(FluidState.rest(GridSpec(32, 32))))


PRESETS = {
    # name: (side, steps, orders, (ux, uy, kx, ky), probes, dt for nu = 1/6, 1/18)
    "fig2": (32, 100, (2,), (0.1, 0.1, 1, 1), (), (0.01, 0.01)),
    "fig3": (32, 600, (2, 3), (0.1, 0.1, 1, 1), (), (0.01, 0.03)),
    "fig4": (32, 150, (2, 3, 4), (0.1, 0.1, 1, 1), ((0, 0), (5.5, 2)), (0.01, 0.03)),
    "fig7": (32, 100, (2, 3, 4), (0.3, 0.2, 1, 4), ((0, 0), (5.5, 2)), (0.01, 0.03)),
    "fig8": (128, 2400, (2,), (0.3, 0.2, 1, 4), ((5.5, 2),), (0.000625, 0.001875)),
}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_fidelity(name):
    side, steps, orders, ic, probes, dts = PRESETS[name]
    cfgs = preset_configs(name)
    assert [c.params.nu for c in cfgs] == pytest.approx([1 / 6, 1 / 18])
    for c, dt in zip(cfgs, dts):
        assert (c.grid.nx, c.grid.ny) == (side, side)
        assert c.params.n_steps == steps
        assert c.params.dt == pytest.approx(dt, rel=1e-12)
        assert c.params.cs2 == pytest.approx(1 / 3)
        assert c.carleman.orders == orders
        assert (c.ic.ux, c.ic.uy, c.ic.kx, c.ic.ky) == ic
        assert c.probes == probes


def test_unknown_preset():
    with pytest.raises(ValueError):
        preset_configs("fig9")


def test_tags():
    assert nu_tag(1 / 6) == "nu6"
    assert nu_tag(1 / 18) == "nu18"
    assert probe_tag(0, 0) == "00"
    assert probe_tag(5.5, 2) == "5p5_2"


def test_preset_emits_expected_files(tmp_path):
    out = tmp_path / "fig4"
    assert main(["preset", "fig4", "--out", str(out), "--steps", "3"]) == 0
    names = {p.name for p in out.iterdir()}
    for f in ("fig4_error_nu6.csv", "fig4_error_nu18.csv", "fig4_probe_00.csv", "fig4_probe_5p5_2.csv", "manifest.txt"):
        assert f in names
    head = (out / "fig4_error_nu6.csv").read_text().splitlines()[0]
    assert head == "time,value,label"
    labels = {line.rsplit(",", 1)[1] for line in (out / "fig4_probe_00.csv").read_text().splitlines()[1:]}
    assert {"nu6_nshj", "nu6_chj4", "nu6_decay_kx", "nu18_chj2"} <= labels


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["preset", "fig7", "--out", str(d), "--steps", "2"]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_run_chj_without_probes_writes_manifest(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[grid]\nnx = 8\nny = 8\n[params]\nn_steps = 3\n[carleman]\norders = 2\n[output]\nprefix = np\n")
    assert main(["run-chj", str(ini), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "manifest.txt").exists()
    assert not list((tmp_path / "o").glob("*probe*"))


def test_run_nshj_and_chj(tmp_path, capsys):
    ini = tmp_path / "small.ini"
    ini.write_text(SMALL_INI)
    assert main(["run-nshj", str(ini), "--out", str(tmp_path / "n")]) == 0
    assert "Re" in capsys.readouterr().out
    assert (tmp_path / "n" / "small_nshj_probe_5p5_2.csv").exists()
    rows = (tmp_path / "n" / "small_nshj_final.csv").read_text().splitlines()
    assert len(rows) == 1 + 64
    assert main(["run-chj", str(ini), "--out", str(tmp_path / "c")]) == 0
    assert "CHJ3" in capsys.readouterr().out
    assert load_config(ini).params.n_steps == 5


def test_resources_command(tmp_path, capsys):
    ini = tmp_path / "r.ini"
    ini.write_text("[grid]\nnx = 8\nny = 8\n[output]\nprefix = r\n")
    assert main(["resources", str(ini), "--measure", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "alpha_total_sq" in text and "sparsity_b_row" in text
    assert (tmp_path / "r_resources.csv").read_text().startswith("mu_a,mu_b")


def test_memory_scaling_command(tmp_path, capsys):
    out = tmp_path / "m" / "cost.csv"
    assert main(["memory-scaling", "--orders", "3,4", "--grids", "32,8x16", "--steps", "150", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("order,G,steps")
    assert len(lines) == 1 + 4
    assert out.read_text().splitlines()[1:] == lines[1:]
    row = lines[3].split(",")
    assert row[:3] == ["4", "1024", "150"]
    assert math.isclose(float(row[3]), 4096.0**4)


def test_verify_appendix_command(tmp_path, capsys):
    assert main(["verify-appendix", "--nx", "6", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "discrepancy_report.txt").read_text()
    assert text == capsys.readouterr().out
    assert text.strip()


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run-chj", str(tmp_path / "missing.ini")]) != 0
    bad = tmp_path / "bad.ini"
    bad.write_text("[carleman]\norders = 7\n")
    assert main(["run-chj", str(bad)]) != 0
    assert "error" in capsys.readouterr().err.lower()
    with pytest.raises(SystemExit) as e:
        main(["nonsense"])
    assert e.value.code != 0
