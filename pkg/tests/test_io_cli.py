import json

import numpy as np
import pytest

from metatweezer.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_NONCONVERGENCE, EXIT_OK, main
from metatweezer.dynamics import METALENS_PRESET, simulate_trace
from metatweezer.io import (ConfigError, InputError, ResultBundle, config_hash, merge_config,
                            prescription_from_dict, prescription_to_dict, read_efficiency_csv,
                            read_field, read_layout_csv, read_trace, write_efficiency_csv,
                            write_field, write_layout_csv, write_trace)
from metatweezer.lens import LensPrescription, default_efficiency_table, generate_layout
from metatweezer.propagation import gaussian_beam

SMALL = {"focal_length_m": 20e-6, "diameter_m": 20e-6}


def test_layout_round_trip(tmp_path):
    pr = LensPrescription(20e-6, 20e-6)
    lay = generate_layout(pr)
    write_layout_csv(lay, tmp_path / "a.csv")
    text = (tmp_path / "a.csv").read_text()
    assert text.splitlines()[0] == "x_m,y_m,class,theta_rad,len_m,wid_m"
    back = read_layout_csv(tmp_path / "a.csv", pr)
    assert np.array_equal(back.row, lay.row) and np.array_equal(back.cls, lay.cls)
    assert np.allclose(back.theta, lay.theta, rtol=1e-8)
    write_layout_csv(back, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text() == text


def test_layout_off_lattice_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x_m,y_m,class,theta_rad,len_m,wid_m\n1.3e-7,0,1,0,2.5e-07,1.4e-07\n")
    with pytest.raises(InputError, match=":2:"):
        read_layout_csv(p, LensPrescription(20e-6, 20e-6))


def test_efficiency_round_trip(tmp_path):
    t = default_efficiency_table()
    write_efficiency_csv(t, tmp_path / "e.csv")
    back = read_efficiency_csv(tmp_path / "e.csv")
    assert np.allclose(back.class1, t.class1, rtol=1e-8)


def test_field_round_trip(tmp_path):
    g = gaussian_beam(1e-6, 852e-9, 32, 0.1e-6)
    write_field(g, tmp_path / "f.bin")
    meta = json.loads((tmp_path / "f.json").read_text())
    assert {"nx", "ny", "pitch_m", "lambda_m", "z_m"} <= set(meta)
    back = read_field(tmp_path / "f.bin")
    assert np.array_equal(back.amplitude, g.amplitude) and back.x0 == g.x0


def test_trace_round_trip_and_validation(tmp_path):
    tr = simulate_trace(METALENS_PRESET, 5, seed=1)
    write_trace(tr, tmp_path / "t.csv")
    back = read_trace(tmp_path / "t.csv")
    assert np.array_equal(back.counts, tr.counts) and back.seed == 1
    bad = tmp_path / "n.csv"
    bad.write_text("bin_index,t_start_s,counts\n0,0,1\n1,1,2.5\n")
    with pytest.raises(InputError, match="n.csv:3"):
        read_trace(bad, bin_width=1.0, probe=2.0)
    with pytest.raises(InputError, match="bin width"):
        read_trace(bad)


def test_strict_config():
    with pytest.raises(ConfigError, match="foo"):
        merge_config("x", {"a": 1}, {"foo": 2})
    with pytest.raises(ConfigError):
        prescription_from_dict({"focal_length_m": 1e-3, "diameter_m": 1e-3, "typo": 1})
    pr = prescription_from_dict(SMALL)
    assert prescription_from_dict(prescription_to_dict(pr)) == pr


def test_bundle_hash():
    a = ResultBundle("trap", {"x": 1}, 0, {}).as_dict()
    assert a["config_sha256"] == config_hash({"x": 1}, 0)
    assert a["config_sha256"] != config_hash({"x": 1}, 1)
    assert a["schema"].startswith("metatweezer")


def run(tmp_path, *argv, config=None):
    args = list(argv) + ["--out", str(tmp_path), "--quiet"]
    if config is not None:
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(config))
        args += ["--config", str(p)]
    return main(args)


def test_cli_design_and_focus(tmp_path):
    cfg = {"prescription": SMALL}
    assert run(tmp_path, "design", config=cfg) == EXIT_OK
    assert (tmp_path / "layout.csv").exists()
    cfg = {"prescription": SMALL, "layout_csv": str(tmp_path / "layout.csv"), "n_planes": 61}
    assert run(tmp_path, "focus", config=cfg) == EXIT_OK
    out = json.loads((tmp_path / "focus.json").read_text())
    assert set(out["payload"]["wavelengths"]) == {"852nm", "780nm"}
    assert "focal_offset_m" in out["payload"]
    assert out["seed"] == 0 and len(out["config_sha256"]) == 64
    assert (tmp_path / "axial_852nm.csv").read_text().startswith("z_m,on_axis_intensity")


def test_cli_focus_selftest(tmp_path):
    assert run(tmp_path, "focus", config={"source": "gaussian-selftest", "kernel": "fresnel"}) == EXIT_OK
    out = json.loads((tmp_path / "focus.json").read_text())
    assert out["payload"]["max_on_axis_error"] < 1e-9


def test_cli_focus_nonconvergence(tmp_path):
    cfg = {"prescription": SMALL, "source": "ideal", "half_range_m": 0.2e-6, "background": False}
    assert run(tmp_path, "focus", config=cfg) == EXIT_NONCONVERGENCE


def test_cli_trap(tmp_path):
    assert run(tmp_path, "trap") == EXIT_OK
    out = json.loads((tmp_path / "trap.json").read_text())
    assert 0.7 < out["payload"]["trap"]["depth_mK"] < 1.0
    assert out["payload"]["count_ratio"] == pytest.approx(0.242, abs=0.001)


def test_cli_mc_and_ingest(tmp_path):
    assert run(tmp_path, "mc", "--seed", "7", config={"cycles": 300}) == EXIT_OK
    out = json.loads((tmp_path / "mc.json").read_text())
    assert out["seed"] == 7 and "lifetime" in out["payload"]
    assert run(tmp_path, "ingest", str(tmp_path / "trace.csv")) == EXIT_OK
    first = (tmp_path / "trace.csv").read_text()
    assert run(tmp_path, "mc", "--seed", "7", config={"cycles": 300}) == EXIT_OK
    assert (tmp_path / "trace.csv").read_text() == first


def test_cli_fit(tmp_path):
    x = np.linspace(10, 22, 13)
    y = 0.5 * (1 + np.tanh(x - 15))
    np.savetxt(tmp_path / "p.csv", np.column_stack([x, y]), delimiter=",", header="P,N", comments="")
    assert run(tmp_path, "fit", config={"model": "erf", "input_csv": str(tmp_path / "p.csv")}) == EXIT_OK
    res = json.loads((tmp_path / "fit_result.json").read_text())
    assert res["converged"] and abs(res["parameters"]["center"] - 15) < 0.1


def test_cli_exit_codes(tmp_path):
    assert run(tmp_path, "trap", config={"unknown": 1}) == EXIT_CONFIG
    assert run(tmp_path, "fit", config={"model": "nope", "input_csv": "x"}) == EXIT_CONFIG
    bad = tmp_path / "neg.csv"
    bad.write_text("bin_index,t_start_s,counts\n0,0,-3\n")
    assert run(tmp_path, "ingest", str(bad), "--bin", "2") == EXIT_INPUT
    assert run(tmp_path, "ingest", str(tmp_path / "missing.csv"), "--bin", "1") == EXIT_INPUT
    assert main(["trap", "--threads", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
