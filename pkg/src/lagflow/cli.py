"""Batch scenario runner: field -> flow -> mixing, written out as CSV and P2 artifacts.

Configuration files are flat ``key = value`` text (``#`` starts a comment).
Unknown keys are errors. Keys:

``scenario``        built-in scenario providing the defaults
``field``           rigid | differential | doublewell
``amplitude``       field amplitude (default 1)
``offset``          double-well offset c (default 0.1)
``n``               raster cells per side, a power of two in [64, 4096]
``datum``           half-disk | sector | stripes | raster
``datum_angle``     sector opening in radians (default pi/2)
``datum_width``     stripe width (default 0.125)
``datum_path``      P2 file for ``datum = raster``
``times``           comma-separated snapshot times, strictly increasing
``t_min``, ``t_max``, ``t_count``   log-spaced schedule used when ``times`` is absent
``k``, ``k0``, ``alpha0``, ``alpha1``, ``eps``   mixing certificate parameters
``lipschitz_eps``   exceptional area for the Lipschitz profile
``lipschitz_pairs`` number of sample pairs
``lipschitz_offset`` initial pair distance
``lipschitz_times`` comma-separated profile times (default 1, 2, ..., 100)
``seed``            64-bit sample seed
``out``             output directory
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import ConfigError, LagflowError
from .field import catalogue_field
from .flow import SampleSpec, lusin_lipschitz_profile
from .mixing import (
    IndicatorRaster,
    MixingParams,
    decay_certificate,
    half_disk,
    mixing_series,
    sector_datum,
    stripes,
)

log = logging.getLogger("lagflow")

SCENARIOS = {
    "rigid": ("uniform rotation of a half-disk: an isometry, nothing mixes",
              {"field": "rigid", "n": "128", "datum": "half-disk", "t_min": "1", "t_max": "100", "t_count": "6",
               "lipschitz_pairs": "200"}),
    "mixer": ("differential rotation of alternating sectors, log-spaced times in [1, 100]",
              {"field": "differential", "n": "512", "datum": "sector", "t_min": "1", "t_max": "100",
               "t_count": "12"}),
    "doublewell": ("double-well Hamiltonian with two cells of closed orbits, half-disk datum",
                   {"field": "doublewell", "n": "256", "datum": "half-disk", "t_min": "1", "t_max": "100",
                    "t_count": "8", "lipschitz_pairs": "400"}),
}

KEYS = {"scenario", "field", "amplitude", "offset", "n", "datum", "datum_angle", "datum_width", "datum_path",
        "times", "t_min", "t_max", "t_count", "k", "k0", "alpha0", "alpha1", "eps", "lipschitz_eps",
        "lipschitz_pairs", "lipschitz_offset", "lipschitz_times", "seed", "out"}


@dataclass
class ScenarioConfig:
    name: str
    field: str
    amplitude: float
    offset: float
    n: int
    datum: str
    datum_angle: float
    datum_width: float
    datum_path: str | None
    times: np.ndarray
    params: MixingParams
    lipschitz_eps: float
    lipschitz_pairs: int
    lipschitz_offset: float
    lipschitz_times: np.ndarray
    seed: int
    out: Path
    raw: dict = dc_field(default_factory=dict)


def parse_config_text(text: str) -> dict:
    out: dict[str, str] = {}
    problems: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems[f"line {lineno}"] = f"expected 'key = value', got {line!r}"
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            problems[key] = "unknown key"
            continue
        out[key] = value
    if problems:
        raise ConfigError("invalid configuration", problems)
    return out


def _times(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip()])


def build_config(values: dict, seed: int | None = None, n: int | None = None, out: str | None = None) -> ScenarioConfig:
    """Merge scenario defaults, file values and command-line overrides, then validate."""
    problems: dict[str, str] = {}
    unknown = set(values) - KEYS
    for k in sorted(unknown):
        problems[k] = "unknown key"
    name = values.get("scenario", "custom")
    merged: dict[str, str] = {}
    if name in SCENARIOS:
        merged.update(SCENARIOS[name][1])
    elif "scenario" in values:
        problems["scenario"] = f"unknown scenario {name!r}"
    merged.update({k: v for k, v in values.items() if k in KEYS})
    if seed is not None:
        merged["seed"] = str(seed)
    if n is not None:
        merged["n"] = str(n)
    if out is not None:
        merged["out"] = out

    def get(key, conv, default):
        if key not in merged:
            return default
        try:
            return conv(merged[key])
        except (TypeError, ValueError):
            problems[key] = f"cannot parse {merged[key]!r}"
            return default

    fld = merged.get("field", "")
    if fld not in ("rigid", "differential", "doublewell"):
        problems["field"] = f"expected rigid, differential or doublewell, got {fld!r}"
    grid = get("n", int, 256)
    if grid < 64 or grid > 4096 or grid & (grid - 1):
        problems["n"] = f"must be a power of two in [64, 4096], got {grid}"
    datum = merged.get("datum", "half-disk")
    if datum not in ("half-disk", "sector", "stripes", "raster"):
        problems["datum"] = f"expected half-disk, sector, stripes or raster, got {datum!r}"
    if datum == "raster" and "datum_path" not in merged:
        problems["datum_path"] = "required when datum = raster"
    if "times" in merged:
        times = get("times", _times, np.zeros(0))
    else:
        t0, t1, cnt = get("t_min", float, 1.0), get("t_max", float, 100.0), get("t_count", int, 8)
        times = np.geomspace(t0, t1, cnt) if t0 > 0 and t1 > t0 and cnt >= 2 else np.array([t0, t1])
    if times.size == 0:
        problems["times"] = "empty schedule"
    elif np.any(times < 0) or np.any(np.diff(times) <= 0):
        problems["times"] = "schedule must be nonnegative and strictly increasing"
    k = get("k", float, 0.25)
    if not 0 < k < 0.5:
        problems["k"] = "must lie in (0, 1/2)"
    base = MixingParams.default(k if 0 < k < 0.5 else 0.25)
    params = MixingParams(k=k, k0=get("k0", float, base.k0), alpha0=get("alpha0", float, base.alpha0),
                          alpha1=get("alpha1", float, base.alpha1), eps=get("eps", float, base.eps))
    lt = get("lipschitz_times", _times, np.arange(1.0, 101.0))
    if lt.size == 0 or np.any(lt < 0) or np.any(np.diff(lt) <= 0):
        problems["lipschitz_times"] = "schedule must be nonempty, nonnegative and strictly increasing"
    seed_v = get("seed", int, 0)
    if not 0 <= seed_v < 2 ** 64:
        problems["seed"] = "must be a 64-bit unsigned integer"
    leps = get("lipschitz_eps", float, 0.05)
    if leps <= 0:
        problems["lipschitz_eps"] = "must be positive"
    pairs = get("lipschitz_pairs", int, 1000)
    if pairs < 2:
        problems["lipschitz_pairs"] = "need at least two pairs"
    if problems:
        raise ConfigError("invalid configuration", problems)
    return ScenarioConfig(
        name=name, field=fld, amplitude=get("amplitude", float, 1.0), offset=get("offset", float, 0.1), n=grid,
        datum=datum, datum_angle=get("datum_angle", float, math.pi / 2), datum_width=get("datum_width", float, 0.125),
        datum_path=merged.get("datum_path"), times=times, params=params, lipschitz_eps=leps,
        lipschitz_pairs=pairs, lipschitz_offset=get("lipschitz_offset", float, 1e-3), lipschitz_times=lt,
        seed=seed_v, out=Path(merged.get("out", f"lagflow-{name}")), raw=merged)


def _field(cfg: ScenarioConfig):
    if cfg.field == "doublewell":
        return catalogue_field("doublewell", offset=cfg.offset, amplitude=cfg.amplitude)
    return catalogue_field(cfg.field, amplitude=cfg.amplitude)


def _datum(cfg: ScenarioConfig) -> IndicatorRaster:
    if cfg.datum == "sector":
        return sector_datum(cfg.n, cfg.datum_angle)
    if cfg.datum == "stripes":
        return stripes(cfg.n, cfg.datum_width)
    if cfg.datum == "raster":
        u = IndicatorRaster.from_p2(cfg.datum_path)
        if u.n != cfg.n:
            raise ConfigError("raster size mismatch", {"datum_path": f"raster has n={u.n}, config n={cfg.n}"})
        return u
    return half_disk(cfg.n)


def lipschitz_verdict(times, c_est, slack: float = 3.0) -> tuple[bool, float]:
    """Upper envelope ``C_est(t) <= C (1 + t)``.

    ``C`` is fitted as ``slack`` times the largest ``C_est / (1 + t)`` over the
    earliest quarter of the times; every later time must stay under the line.
    Exponential stretching breaks the envelope, linear or slower growth keeps it.
    """
    times = np.asarray(times, dtype=float)
    ratio = np.asarray(c_est, dtype=float) / (1.0 + times)
    head = max(1, int(np.ceil(times.size / 4)))
    c = slack * float(np.max(ratio[:head]))
    return bool(np.all(ratio <= c)), c


def run_scenario(cfg: ScenarioConfig) -> dict:
    """Write every artifact for one scenario and return the verdicts."""
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    fld = _field(cfg)
    u0 = _datum(cfg)
    log.info("scenario %s: field %s, n=%d, %d times", cfg.name, cfg.field, cfg.n, cfg.times.size)

    spec = SampleSpec(n_points=cfg.lipschitz_pairs, pair_offset=cfg.lipschitz_offset, seed=cfg.seed, radius=1.0)
    prof = lusin_lipschitz_profile(fld, cfg.lipschitz_eps, spec, cfg.lipschitz_times)
    prof.to_csv(out / "lipschitz_profile.csv")
    lip_ok, lip_c = lipschitz_verdict(prof.times, prof.c_est)
    log.info("lipschitz profile: slope %.4g, R2 %.6f, max rel residual %.4f", prof.fit_slope, prof.r2,
             prof.max_rel_residual)

    u0.to_p2(out / "snapshot_t0.pgm", comment="t = 0")

    def snap(t, u):
        u.to_p2(out / f"snapshot_t{t:.6g}.pgm", comment=f"t = {t:.10g}")

    report = mixing_series(fld, u0, cfg.times, k=cfg.params.k, snapshot=snap)
    cert = decay_certificate(report, u0, cfg.params)
    report.to_csv(out / "mixing_report.csv")
    verdicts = {"lipschitz_linear_growth": lip_ok, "mixing_decay": cert.passed}

    p = cfg.params
    lines = [
        f"scenario: {cfg.name}",
        f"field: {cfg.field} (amplitude {cfg.amplitude:g})",
        f"grid: n = {cfg.n}",
        f"seed: {cfg.seed}",
        "",
        f"lipschitz_linear_growth: {'PASS' if lip_ok else 'FAIL'}",
        f"  fitted: envelope constant C = {lip_c:.10g}",
        f"  fitted: affine intercept = {prof.fit_intercept:.10g}",
        f"  fitted: affine slope = {prof.fit_slope:.10g}",
        f"  fitted: R2 = {prof.r2:.10g}",
        f"  fitted: max relative residual = {prof.max_rel_residual:.10g}",
        f"  paper-structural: exceptional area eps = {cfg.lipschitz_eps:g}",
        f"  measured: pairs retained = {prof.pairs_retained} of {prof.n_pairs} ({prof.retained_description})",
        "",
        f"mixing_decay: {cert.verdict}",
        f"  fitted: c_g = {cert.c_g:.10g}",
        f"  fitted: c_a = {cert.c_a:.10g}",
        f"  fitted: perimeter-form c_g = {cert.c_g_per:.10g}",
        f"  fitted: perimeter-form c_a = {cert.c_a_per:.10g}",
        f"  measured: r0_bar = {cert.r0_bar:.10g}",
        f"  measured: r0_tilde = {cert.r0_tilde:.10g}",
        f"  measured: perimeter = {cert.perimeter:.10g}",
        f"  measured: band of delta_g*(1+t) = {cert.band_g:.10g}",
        f"  measured: band of hm1*(1+t) = {cert.band_a:.10g}",
        f"  paper-structural: k = {p.k:.10g}, k0 = {p.k0:.10g}, alpha0 = {p.alpha0:.10g}, "
        f"alpha1 = {p.alpha1:.10g}, eps = {p.eps:.10g}",
        f"  paper-structural: parameter inequality margin = {p.margin():.10g}",
        "",
        f"overall: {'PASS' if all(verdicts.values()) else 'FAIL'}",
    ]
    (out / "certificate.txt").write_text("\n".join(lines) + "\n")
    return verdicts


def list_scenarios(names_only: bool = False) -> str:
    if names_only:
        return "\n".join(SCENARIOS)
    width = max(len(k) for k in SCENARIOS)
    return "\n".join(f"{k:<{width}}  {v[0]}" for k, v in SCENARIOS.items())


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lagflow", description="Lagrangian flow and mixing experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write its artifacts")
    run.add_argument("scenario", nargs="?", help="built-in scenario name")
    run.add_argument("--config", type=Path, help="flat key=value configuration file")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="sample seed override")
    run.add_argument("--n", type=int, help="grid size override")
    run.add_argument("-v", "--verbose", action="count", default=0)
    lst = sub.add_parser("list", help="list the built-in scenarios")
    lst.add_argument("--names-only", action="store_true", help="one name per line")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        print(list_scenarios(args.names_only))
        return 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        values = parse_config_text(args.config.read_text()) if args.config else {}
        if args.scenario:
            if args.scenario not in SCENARIOS:
                raise ConfigError("unknown scenario", {"scenario": f"unknown scenario {args.scenario!r}"})
            values["scenario"] = args.scenario
        if "scenario" not in values and not args.config:
            raise ConfigError("nothing to run", {"scenario": "give a scenario name or --config"})
        cfg = build_config(values, seed=args.seed, n=args.n, out=args.out)
    except ConfigError as exc:
        print(f"lagflow: {exc}", file=sys.stderr)
        for key, msg in exc.problems.items():
            print(f"  {key}: {msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"lagflow: cannot read configuration: {exc}", file=sys.stderr)
        return 2
    try:
        verdicts = run_scenario(cfg)
    except LagflowError as exc:
        print(f"lagflow: scenario {cfg.name!r} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for name, ok in verdicts.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return 0 if all(verdicts.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
