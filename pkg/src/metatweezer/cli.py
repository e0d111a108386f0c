"""Command line front end: ``python -m metatweezer <command> [options]``.

Every command takes an optional JSON config (unknown keys are rejected),
writes its artifacts plus ``<command>.json`` into ``--out``, and exits with
0 on success, 2 on a configuration error, 3 on bad input data and 4 when a
fit or focus search does not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (GAUSS_PER_TESLA, METALENS_PRESET, OBJECTIVE_PRESET, BiasLifetimeModel,
                       DynamicsParams, LifetimeError, average_decay, fit_decay, histogram,
                       lifetime_count_consistency, misclassification_probability,
                       simulate_bias_sweep, simulate_trace, trace_lifetime)
from .fitting import FitError, NonConvergenceError, fit_bias_lifetime, fit_erf, fit_exponential, fit_line
from .io import (ConfigError, InputError, ResultBundle, load_config, merge_config,
                 prescription_from_dict, prescription_to_dict, read_efficiency_csv,
                 read_layout_csv, read_points, read_trace, species_from_dict, write_axial_csv,
                 write_efficiency_csv, write_json, write_layout_csv, write_radial_csv, write_trace)
from .lens import default_efficiency_table, desk_prescription, generate_layout
from .propagation import (FocusAtBoundaryError, angular_spectrum_propagate, focal_metrics,
                          focus_scan, gaussian_beam, gaussian_on_axis_intensity, gaussian_width,
                          ideal_lens_field, radial_profile, second_moment_width,
                          synthesize_aperture_field, unmodulated_background)
from .tweezer import (RB87, CollectionModel,
                      FictitiousFieldModel, count_ratio, fictitious_field,
                      optimal_bias_linear_fit, trap_parameters)

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 2, 3, 4

log = logging.getLogger("metatweezer")

# ------------------------------------------------------------------ defaults

_DESK = prescription_to_dict(desk_prescription())

DEFAULTS = {
    "design": {
        "prescription": _DESK,
        "efficiency_table_csv": None,
    },
    "focus": {
        "prescription": _DESK,
        "source": "layout",  # layout | ideal | gaussian-selftest
        "layout_csv": None,
        "efficiency_table_csv": None,
        "wavelengths_m": None,
        "oversample": 1,
        "padding": 2.0,
        "n_planes": 81,
        "half_range_m": None,
        "kernel": "exact",
        "ideal_pitch_m": None,
        "background": True,
        "gaussian_waist_m": 5 * 852e-9,
    },
    "trap": {
        "power_W": 15.9e-3,
        "concentration": 0.33,
        "waist_m": 1.33e-6,
        "rayleigh_length_m": None,
        "wavelength_m": 852e-9,
        "species": None,
        "counter_rotating": False,
        "metalens": {"na": 0.46, "transmission": 0.22, "concentration": 0.33,
                     "efficiency": 0.040, "pattern": "isotropic", "path_factor": 1.0},
        "objective": {"na": 0.28, "transmission": 0.8, "concentration": 1.0,
                      "efficiency": 0.015, "pattern": "isotropic", "path_factor": 1.0},
        "optimal_bias_points": [[14.0e-3, 0.52e-4], [16.3e-3, 0.59e-4], [18.6e-3, 0.66e-4]],
    },
    "mc": {
        "preset": "metalens",
        "dynamics": None,
        "cycles": 1500,
        "bin_s": 0.05,
        "prep_s": 2.0,
        "probe_s": 2.0,
        "bias_sweep": None,
    },
    "fit": {
        "model": "erf",  # erf | exponential | bias_lifetime | linear
        "input_csv": None,
    },
}

DYNAMICS_KEYS = {
    "load_rate_per_s": "load_rate", "lifetime_s": "lifetime", "atom_rate_per_s": "atom_rate",
    "background_rate_per_s": "background_rate", "blockade": "blockade",
    "probe_load_rate_per_s": "probe_load_rate",
}

BIAS_SWEEP_DEFAULTS = {
    "powers_W": [14.0e-3, 16.3e-3, 18.6e-3],
    "b_opt_G": [0.52, 0.59, 0.66],
    "tau_max_s": 1.0,
    "tau_floor_s": 0.1,
    "width_G": 0.04,
    "offsets_G": [round(0.02 * k, 2) for k in range(-6, 7)],
    "cycles": 400,
}

FITTERS = {"erf": fit_erf, "exponential": fit_exponential,
           "bias_lifetime": fit_bias_lifetime, "linear": fit_line}


# ------------------------------------------------------------------ helpers


def _efficiency_table(path):
    return default_efficiency_table() if path is None else read_efficiency_csv(path)


def _summary(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _bundle(args, command, config, payload, t0, **prov) -> ResultBundle:
    prov.update({"version": __version__, "wall_clock_s": time.perf_counter() - t0,
                 "threads": args.threads})
    bundle = ResultBundle(command, config, args.seed, payload, prov)
    bundle.write(Path(args.out) / f"{command}.json")
    return bundle


# ------------------------------------------------------------------ commands


def cmd_design(args, cfg) -> ResultBundle:
    t0 = time.perf_counter()
    pr = prescription_from_dict(cfg["prescription"])
    table = _efficiency_table(cfg["efficiency_table_csv"])
    layout = generate_layout(pr)
    out = Path(args.out)
    write_layout_csv(layout, out / "layout.csv")
    write_efficiency_csv(table, out / "efficiency.csv")
    counts = layout.class_counts()
    payload = {
        "n_bricks": len(layout),
        "class_counts": {str(k): v for k, v in counts.items()},
        "numerical_aperture": pr.numerical_aperture,
        "layout_csv": "layout.csv",
        "efficiency_csv": "efficiency.csv",
    }
    _summary(args, f"design: {len(layout)} bricks, NA {pr.numerical_aperture:.3f}")
    return _bundle(args, "design", cfg, payload, t0)


def _gaussian_selftest(args, cfg, t0) -> ResultBundle:
    lam = cfg["prescription"]["lambda1_m"]
    w0 = cfg["gaussian_waist_m"]
    pitch = w0 / 8
    n = 256
    g = gaussian_beam(w0, lam, n, pitch)
    zr = np.pi * w0**2 / lam
    kernel = cfg["kernel"]
    rows = []
    for z in np.linspace(0, 2 * zr, 5):
        f = angular_spectrum_propagate(g, z, kernel)
        rows.append({
            "z_m": z,
            "on_axis_ratio": float(f.intensity[n // 2, n // 2]),
            "on_axis_expected": gaussian_on_axis_intensity(w0, lam, z),
            "width_m": second_moment_width(f),
            "width_expected_m": gaussian_width(w0, lam, z),
            "power_ratio": f.power / g.power,
        })
    worst = max(abs(r["on_axis_ratio"] - r["on_axis_expected"]) for r in rows)
    payload = {"source": "gaussian-selftest", "kernel": kernel, "waist_m": w0,
               "rayleigh_length_m": zr, "planes": rows, "max_on_axis_error": worst}
    _summary(args, f"focus self-test ({kernel}): max on-axis error {worst:.2e}")
    return _bundle(args, "focus", cfg, payload, t0, grid=[n, n], grid_pitch_m=pitch)


def cmd_focus(args, cfg) -> ResultBundle:
    t0 = time.perf_counter()
    if cfg["source"] not in ("layout", "ideal", "gaussian-selftest"):
        raise ConfigError(f"unknown focus source {cfg['source']!r}")
    if cfg["kernel"] not in ("exact", "fresnel"):
        raise ConfigError(f"unknown kernel {cfg['kernel']!r}")
    if cfg["source"] == "gaussian-selftest":
        return _gaussian_selftest(args, cfg, t0)
    pr = prescription_from_dict(cfg["prescription"])
    table = _efficiency_table(cfg["efficiency_table_csv"])
    wavelengths = cfg["wavelengths_m"] or [pr.lambda1, pr.lambda2]
    layout = None
    if cfg["source"] == "layout":
        layout = (read_layout_csv(cfg["layout_csv"], pr) if cfg["layout_csv"]
                  else generate_layout(pr))
    out = Path(args.out)
    results = {}
    grid = None
    for lam in wavelengths:
        if layout is not None:
            field = synthesize_aperture_field(layout, table, lam, oversample=cfg["oversample"],
                                              padding=cfg["padding"])
        else:
            field = ideal_lens_field(pr, lam, cfg["ideal_pitch_m"] or pr.pitch, cfg["padding"])
        grid = list(field.shape)
        stack = focus_scan(field, pr.focal_length, cfg["half_range_m"], cfg["n_planes"],
                           cfg["kernel"])
        m = focal_metrics(stack)
        tag = f"{lam * 1e9:.0f}nm"
        write_axial_csv(stack, out / f"axial_{tag}.csv")
        r, prof = radial_profile(stack, m.focal_z, 6 * m.waist)
        write_radial_csv(r, prof / m.peak_intensity, out / f"radial_{tag}.csv")
        entry = m.as_dict()
        if cfg["background"] and layout is not None:
            entry["background_ratio"] = unmodulated_background(layout, table, lam)
        results[tag] = entry
        _summary(args, f"focus {tag}: w0 {m.waist * 1e6:.3f} um, zR {m.rayleigh_length * 1e6:.3f} um, "
                       f"z {m.focal_z * 1e6:.2f} um, T {m.efficiency:.3f}")
    payload = {"source": cfg["source"], "wavelengths": results,
               "numerical_aperture": pr.numerical_aperture}
    if len(wavelengths) == 2:
        a, b = (results[k]["focal_z_m"] for k in results)
        payload["focal_offset_m"] = a - b
    return _bundle(args, "focus", cfg, payload, t0, grid=grid)


def cmd_trap(args, cfg) -> ResultBundle:
    t0 = time.perf_counter()
    species = RB87 if cfg["species"] is None else species_from_dict(cfg["species"])
    zr = cfg["rayleigh_length_m"] or np.pi * cfg["waist_m"] ** 2 / cfg["wavelength_m"]
    try:
        trap = trap_parameters(cfg["power_W"], cfg["concentration"], cfg["waist_m"], zr,
                               cfg["wavelength_m"], species, cfg["counter_rotating"])
        lenses = {}
        for key in ("metalens", "objective"):
            d = merge_config(key, DEFAULTS["trap"][key], cfg[key])
            lenses[key] = CollectionModel(**d)
        ratio = count_ratio(lenses["metalens"], lenses["objective"])
        line = optimal_bias_linear_fit(cfg["optimal_bias_points"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    ff = FictitiousFieldModel.from_linear_fit(line, cfg["waist_m"])
    b_f, grad = fictitious_field(cfg["power_W"], ff)
    payload = {
        "trap": trap.as_dict(),
        "species": species.name,
        "collection": {k: {"eta": v.eta, "throughput": v.throughput} for k, v in lenses.items()},
        "count_ratio": ratio,
        "optimal_bias_fit": {"slope_T_per_W": line.slope, "intercept_T": line.intercept,
                             "slope_err": line.slope_err, "intercept_err": line.intercept_err},
        "fictitious_field_T": b_f,
        "fictitious_gradient_T_per_m": grad,
    }
    _summary(args, f"trap: depth {trap.depth_mk:.3f} mK, count ratio {ratio:.3f}, "
                   f"B_F {b_f * GAUSS_PER_TESLA:.3f} G")
    return _bundle(args, "trap", cfg, payload, t0)


def _dynamics(cfg) -> DynamicsParams:
    base = {"metalens": METALENS_PRESET, "objective": OBJECTIVE_PRESET}.get(cfg["preset"])
    if cfg["dynamics"] is None:
        if base is None:
            raise ConfigError(f"unknown preset {cfg['preset']!r} and no dynamics block")
        return base
    from .io import check_keys
    check_keys("dynamics", cfg["dynamics"], DYNAMICS_KEYS)
    kwargs = {} if base is None else {v: getattr(base, v) for v in DYNAMICS_KEYS.values()}
    kwargs.update({DYNAMICS_KEYS[k]: v for k, v in cfg["dynamics"].items()})
    try:
        return DynamicsParams(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid dynamics: {exc}") from exc


def cmd_mc(args, cfg) -> ResultBundle:
    t0 = time.perf_counter()
    params = _dynamics(cfg)
    trace = simulate_trace(params, cfg["cycles"], cfg["bin_s"], args.seed, cfg["prep_s"],
                           cfg["probe_s"])
    out = Path(args.out)
    write_trace(trace, out / "trace.csv")
    summary = histogram(trace)
    payload = {"histogram": summary.as_dict(), "n_bins": len(trace.counts)}
    if not summary.single_peak:
        truth = trace.hidden_state()
        payload["classification_accuracy"] = float(np.mean((trace.counts > summary.threshold) == truth))
        payload["misclassification_model"] = misclassification_probability(summary)
        try:
            payload["lifetime"] = trace_lifetime(trace, summary).as_dict()
        except LifetimeError as exc:
            payload["lifetime_error"] = str(exc)
        try:
            payload["decay_fit"] = fit_decay(average_decay(trace, summary.threshold)).as_dict()
        except (FitError, ValueError) as exc:
            payload["decay_fit_error"] = str(exc)
        payload["count_consistency"] = lifetime_count_consistency(
            params.lifetime, cfg["probe_s"], params.atom_rate, cfg["bin_s"])
    _summary(args, f"mc: peaks {summary.background_mean:.2f} / {summary.atom_mean}"
                   + (f", tau {payload['lifetime']['tau_s']:.3f} s" if "lifetime" in payload else ""))
    if cfg["bias_sweep"] is not None:
        payload["bias_sweep"] = _bias_sweep(args, cfg, params)
    return _bundle(args, "mc", cfg, payload, t0)


def _bias_sweep(args, cfg, params) -> dict:
    sw = merge_config("bias_sweep", BIAS_SWEEP_DEFAULTS, cfg["bias_sweep"])
    if len(sw["powers_W"]) != len(sw["b_opt_G"]):
        raise ConfigError("bias_sweep: powers_W and b_opt_G differ in length")
    offsets = np.asarray(sw["offsets_G"], dtype=float)
    rows = []
    for i, (p, b0) in enumerate(zip(sw["powers_W"], sw["b_opt_G"])):
        model = BiasLifetimeModel(sw["tau_max_s"], sw["tau_floor_s"], b0 / GAUSS_PER_TESLA,
                                  sw["width_G"] / GAUSS_PER_TESLA)
        sweep = simulate_bias_sweep(model, (b0 + offsets) / GAUSS_PER_TESLA, params, sw["cycles"],
                                    args.seed, cfg["bin_s"], args.threads,
                                    index_offset=1000 * (i + 1))
        rows.append({"power_W": p, "b_opt_T": sweep.b_opt, "b_opt_err_T": sweep.fit.error("b_opt"),
                     "flags": list(sweep.fit.flags), "bias_T": sweep.bias,
                     "lifetime_s": sweep.lifetimes})
        _summary(args, f"bias sweep {p * 1e3:.1f} mW: B_opt {sweep.b_opt * GAUSS_PER_TESLA:.4f} G")
    line = optimal_bias_linear_fit([[r["power_W"], r["b_opt_T"]] for r in rows])
    return {"sweeps": rows, "slope_T_per_W": line.slope, "intercept_T": line.intercept,
            "slope_err": line.slope_err, "intercept_err": line.intercept_err,
            "beta_T_per_W": -line.slope}


def cmd_fit(args, cfg) -> ResultBundle:
    t0 = time.perf_counter()
    if cfg["model"] not in FITTERS:
        raise ConfigError(f"unknown fit model {cfg['model']!r}")
    if cfg["input_csv"] is None:
        raise ConfigError("fit needs input_csv")
    pts = read_points(cfg["input_csv"])
    try:
        res = FITTERS[cfg["model"]](pts)
    except FitError as exc:
        raise InputError(str(exc)) from exc
    write_json(Path(args.out) / "fit_result.json", res.as_dict())
    _summary(args, f"fit {res.model}: " + ", ".join(f"{n}={v:.6g}" for n, v in zip(res.names, res.values)))
    return _bundle(args, "fit", cfg, res.as_dict(), t0)


def cmd_ingest(args, cfg) -> ResultBundle:
    t0 = time.perf_counter()
    config = {"path": str(args.path), "schema": args.schema, "bin_s": args.bin}
    if args.schema == "trace":
        trace = read_trace(args.path, args.bin)
        summary = histogram(trace)
        payload = {"n_bins": len(trace.counts), "n_cycles": trace.n_cycles,
                   "histogram": summary.as_dict()}
        if not summary.single_peak:
            try:
                payload["lifetime"] = trace_lifetime(trace, summary).as_dict()
            except LifetimeError as exc:
                payload["lifetime_error"] = str(exc)
    elif args.schema == "points":
        pts = read_points(args.path)
        payload = {"n_points": len(pts), "x_range": [pts[:, 0].min(), pts[:, 0].max()]}
    else:
        table = read_efficiency_csv(args.path)
        payload = {"n_rows": len(table.wavelengths),
                   "peak_wavelength_m": {"1": table.peak_wavelength(1), "2": table.peak_wavelength(2)}}
    _summary(args, f"ingest {args.schema}: ok")
    return _bundle(args, "ingest", config, payload, t0)


COMMANDS = {"design": cmd_design, "focus": cmd_focus, "trap": cmd_trap, "mc": cmd_mc,
            "fit": cmd_fit, "ingest": cmd_ingest}


# ------------------------------------------------------------------ parser


def _global_flags(parser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="JSON config file")
    parser.add_argument("--seed", type=int, default=d(0), help="master RNG seed")
    parser.add_argument("--out", default=d("."), help="output directory")
    parser.add_argument("--threads", type=int, default=d(1), help="worker threads")
    parser.add_argument("--quiet", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metatweezer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"design": "generate a bifocal nanobrick layout",
             "focus": "propagate the lens field and measure the focus",
             "trap": "trap depth, frequencies, collection and fictitious field",
             "mc": "simulate an occupancy trace and analyse it",
             "fit": "fit a model to a two-column CSV",
             "ingest": "validate and summarize an external data file"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _global_flags(p, suppress=True)
        if name == "ingest":
            p.add_argument("path")
            p.add_argument("--schema", choices=["trace", "points", "efficiency"], default="trace")
            p.add_argument("--bin", type=float, default=None, help="bin width (s) if no sidecar")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        raw = load_config(args.config)
        cfg = {} if args.command == "ingest" else merge_config(args.command, DEFAULTS[args.command], raw)
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonConvergenceError, FocusAtBoundaryError) as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
