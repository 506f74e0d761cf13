"""Configuration, history ingestion, result files and the batch orchestrator.

A run reads one YAML file (schema in ``config_schema.json``), resolves each
asset to per-regime moment targets, and executes the requested stages in
order. Every output goes under one directory together with ``manifest.json``,
which records the config hash, seed, library version and the SHA-256 of every
file written. Nothing time-dependent is recorded, so identical inputs give
identical hashes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np
import yaml

from . import __version__
from .instrument import DualTrigger, SCoCoSpec
from .lsm_contingent import BasisSpec, lsm_price
from .presets import DEFAULT_SMOOTHNESS_RATIO, country, flat_rate_factor, index_factor, rate_factor
from .pricing_mc import par_rate, par_rate_table, price, price_dual
from .regime_model import RegimeSpec, StationaryDistribution, TransitionMatrix, default_eigenvalues, estimate_max_entropy
from .scenario_engine import (
    FactorModel,
    ScenarioConfig,
    ScenarioSet,
    averaged_targets,
    generate,
    save_scenarios,
    testbed_config,
)
from .sensitivity import DirichletSpec, SensitivityPipeline, reprice_under, sample_dirichlet
from .srmr_process import AnchoredParams, CorrelationSpec, MomentTargets, calibrate, estimate_moments

__all__ = [
    "AssetModel",
    "ConfigError",
    "HistoricalSeries",
    "RegimeBreakpoints",
    "RunConfig",
    "SeriesFormatError",
    "StageError",
    "ingest",
    "load_config",
    "read_series",
    "run",
    "write_series",
]

STAGES = ("estimate", "calibrate", "simulate", "price", "par-rate", "lsm", "sensitivity")


class ConfigError(ValueError):
    pass


class SeriesFormatError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


# --------------------------------------------------------------------------
# historical series


@dataclass(frozen=True)
class HistoricalSeries:
    dates: np.ndarray  # datetime64[D], strictly increasing
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        d = np.asarray(self.dates, dtype="datetime64[D]")
        v = np.asarray(self.values, dtype=float)
        if d.shape != v.shape or d.ndim != 1:
            raise ValueError("dates and values must be 1-d and the same length")
        if d.size > 1 and np.any(np.diff(d) <= np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        object.__setattr__(self, "dates", d)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def read_series(path: str | Path, label: str | None = None, positive: bool = True) -> HistoricalSeries:
    """Parse a ``date,value`` CSV; errors name the offending line."""
    path = Path(path)
    dates, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "value"]:
            raise SeriesFormatError(f"{path}:1: expected header 'date,value', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise SeriesFormatError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            d, v = row[0].strip(), row[1].strip()
            if not _DATE.match(d):
                raise SeriesFormatError(f"{path}:{line}: bad date {d!r}")
            try:
                day = np.datetime64(d, "D")
                x = float(v)
            except ValueError as exc:
                raise SeriesFormatError(f"{path}:{line}: {exc}") from None
            if not math.isfinite(x):
                raise SeriesFormatError(f"{path}:{line}: non-finite value {v!r}")
            if positive and x <= 0:
                raise SeriesFormatError(f"{path}:{line}: spread must be positive, got {v}")
            if dates and day <= dates[-1]:
                raise SeriesFormatError(f"{path}:{line}: date {d} does not follow {dates[-1]}")
            dates.append(day)
            values.append(x)
    if not values:
        raise SeriesFormatError(f"{path}: no observations")
    return HistoricalSeries(np.array(dates, dtype="datetime64[D]"), np.array(values), label or path.stem)


def write_series(series: HistoricalSeries, path: str | Path) -> None:
    """Inverse of ``read_series``; ``repr`` keeps every float bit-exact."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "value"])
        for d, v in zip(series.dates, series.values):
            w.writerow([str(d), repr(float(v))])


@dataclass(frozen=True)
class RegimeBreakpoints:
    """First date of every regime after the first one."""

    dates: tuple[np.datetime64, ...] = ()

    def __post_init__(self):
        d = tuple(np.datetime64(x, "D") for x in self.dates)
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "dates", d)

    def segments(self, series: HistoricalSeries) -> list[slice]:
        if self.dates and (self.dates[0] <= series.dates[0] or self.dates[-1] > series.dates[-1]):
            raise ValueError(
                f"breakpoints must fall after {series.dates[0]} and no later than {series.dates[-1]}"
            )
        cuts = [0] + [int(np.searchsorted(series.dates, b)) for b in self.dates] + [len(series)]
        out = []
        for i, (a, b) in enumerate(zip(cuts, cuts[1:])):
            if b - a < 3:
                raise ValueError(f"segment {i} has {b - a} observations; at least 3 are needed")
            out.append(slice(a, b))
        return out


def ingest(series: HistoricalSeries, breakpoints: RegimeBreakpoints | None = None) -> list[tuple[RegimeSpec, MomentTargets]]:
    """Per-segment statistics; each segment's start level is its own mean."""
    out = []
    for i, sl in enumerate((breakpoints or RegimeBreakpoints()).segments(series)):
        m = estimate_moments(series.values[sl])
        m = m.with_start(m.level_mean)
        d = series.dates[sl]
        spec = RegimeSpec(i, m.level_mean, m.level_stdev, m.return_stdev, f"{d[0]}..{d[-1]}")
        out.append((spec, m))
    return out


# --------------------------------------------------------------------------
# configuration


def _schema() -> dict:
    return json.loads(resources.files("scoco").joinpath("config_schema.json").read_text())


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: Path
    digest: str

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def stages(self) -> list[str]:
        asked = self.raw.get("stages", list(STAGES))
        return [s for s in STAGES if s in asked]

    @property
    def output(self) -> Path:
        return self.base_dir / self.raw.get("output", "out")

    def section(self, name: str) -> dict:
        return self.raw.get(name, {}) or {}

    def override(self, **kwargs) -> "RunConfig":
        raw = json.loads(json.dumps(self.raw))
        for k, v in kwargs.items():
            if v is None:
                continue
            node = raw
            *path, leaf = k.split(".")
            for p in path:
                node = node.setdefault(p, {})
            node[leaf] = v
        validate(raw)
        return RunConfig(raw, self.base_dir, _digest(raw))


def _digest(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def validate(raw: Any) -> None:
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    names = [a["name"] for a in raw["assets"]]
    if len(set(names)) != len(names):
        raise ConfigError("asset names must be unique")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    # YAML turns bare ISO dates into date objects; keep them as strings
    raw = json.loads(json.dumps(raw, default=str))
    validate(raw)
    return RunConfig(raw, path.resolve().parent, _digest(raw))


# --------------------------------------------------------------------------
# assets


@dataclass(frozen=True)
class AssetModel:
    name: str
    regimes: tuple[RegimeSpec, ...]
    targets: tuple[MomentTargets, ...]
    weights: np.ndarray  # trading days (or any positive weights) per regime
    stationary: StationaryDistribution
    eigenvalues: np.ndarray
    switching: bool = True

    def transition_matrix(self) -> TransitionMatrix:
        return estimate_max_entropy(self.stationary, self.eigenvalues)

    def spread_factor(self, matrix: TransitionMatrix | None = None) -> FactorModel:
        if not self.switching:
            return FactorModel.single(averaged_targets(self.targets, self.weights))
        m = self.transition_matrix() if matrix is None else matrix
        cals = []
        for spec, t in zip(self.regimes, self.targets):
            try:
                cals.append(AnchoredParams.from_targets(t))
            except ValueError as exc:
                raise type(exc)(f"regime {spec.regime_id} ({spec.label}): {exc}") from None
        return FactorModel(m, tuple(cals), labels=tuple(r.label for r in self.regimes))

    def off(self) -> "AssetModel":
        return replace(self, switching=False)


def _with_ratio(t: MomentTargets, ratio: float) -> MomentTargets:
    return replace(t, smoothness=ratio * t.return_stdev**2)


def resolve_asset(block: dict, base_dir: Path) -> AssetModel:
    name = block["name"]
    ratio = block.get("smoothness_ratio")
    if "preset" in block:
        p = country(block["preset"], ratio or DEFAULT_SMOOTHNESS_RATIO)
        regimes, targets, weights = p.regimes, p.targets, p.trading_days
        stationary, lam = p.stationary, p.eigenvalues
    else:
        if "series" in block:
            series = read_series(base_dir / block["series"], name)
            rows = ingest(series, RegimeBreakpoints(tuple(block.get("breakpoints", ()))))
            regimes = tuple(r for r, _ in rows)
            targets = tuple(_with_ratio(t, ratio) if ratio else t for _, t in rows)
            bounds = RegimeBreakpoints(tuple(block.get("breakpoints", ()))).segments(series)
            weights = np.array([s.stop - s.start for s in bounds], dtype=float)
        else:
            unit = 0.01 if block["return_stdev_units"] == "percent" else 1.0
            regimes, targets, weights = [], [], []
            for i, r in enumerate(block["regimes"]):
                ret = r["return_stdev"] * unit
                if "smoothness" in r:
                    smooth = r["smoothness"] * unit * unit
                else:
                    smooth = r.get("smoothness_ratio", ratio or DEFAULT_SMOOTHNESS_RATIO) * ret * ret
                regimes.append(RegimeSpec(i, r["spread_mean"], r["spread_stdev"], ret, r.get("label", f"R{i + 1}")))
                targets.append(MomentTargets(r["spread_mean"], r["spread_stdev"], ret, smooth, r["spread_mean"]))
                weights.append(r.get("days", 1.0))
            regimes, targets, weights = tuple(regimes), tuple(targets), np.array(weights, dtype=float)
        stationary = StationaryDistribution.normalized(weights)
        lam = default_eigenvalues(len(regimes))
    if "stationary" in block:
        stationary = StationaryDistribution.normalized(block["stationary"])
    if "eigenvalues" in block:
        lam = np.asarray(block["eigenvalues"], dtype=float)
    if len(stationary) != len(regimes):
        raise ConfigError(f"asset {name}: {len(stationary)} stationary probabilities for {len(regimes)} regimes")
    return AssetModel(name, tuple(regimes), tuple(targets), np.asarray(weights, dtype=float), stationary,
                      np.asarray(lam, dtype=float), block.get("regime_switching", True))


def rate_model(cfg: RunConfig) -> FactorModel:
    sec = cfg.section("rate")
    if sec.get("model", "synthetic") == "flat":
        if "flat_rate" not in sec:
            raise ConfigError("rate.model 'flat' needs rate.flat_rate")
        return flat_rate_factor(float(sec["flat_rate"]))
    rows = sec.get("regimes")
    if rows is not None:
        rows = [(r["mean_pct"], r["stdev_pct"], r["return_stdev"]) for r in rows]
    return rate_factor(regimes=rows, stationary=sec.get("stationary"), eigenvalue=sec.get("eigenvalue"),
                       smoothness_ratio=sec.get("smoothness_ratio", DEFAULT_SMOOTHNESS_RATIO))


def scenario_config(cfg: RunConfig, threads: int = 1) -> ScenarioConfig:
    sec = cfg.section("scenarios")
    inst = cfg.section("instrument")
    dual = inst.get("dual")
    index, rho_index = None, 0.0
    if dual is not None:
        ix = dual.get("index", {})
        index = index_factor(ix.get("mean", 100.0), ix.get("stdev", 30.0), ix.get("return_stdev", 0.03))
        rho_index = ix.get("correlation", 0.0)
    return ScenarioConfig(
        n_regime_scenarios=sec.get("n_regime_scenarios", 10),
        n_paths_per_regime=sec.get("n_paths_per_regime", 1000),
        horizon_years=sec["horizon_years"],
        periods_per_year=sec.get("periods_per_year", 2),
        days_per_year=sec.get("days_per_year", 252),
        seed=cfg.seed,
        correlation=CorrelationSpec(sec.get("rate_spread_correlation", 0.0)),
        market_index=index,
        index_correlation=rho_index,
        threads=threads,
    )


def instrument_spec(cfg: RunConfig, periods_per_year: int) -> tuple[SCoCoSpec, bool]:
    """(spec, coupon_is_par); the coupon in the spec is per period."""
    sec = cfg.section("instrument")
    steps = sec["maturity_years"] * periods_per_year
    if abs(steps - round(steps)) > 1e-9:
        raise ConfigError("maturity must be a whole number of pricing periods")
    th = sec.get("threshold_bp")
    coupon = sec.get("coupon", "par")
    is_par = coupon == "par"
    dual = None
    if sec.get("dual"):
        d = sec["dual"]
        dual = DualTrigger(d["index_threshold"], d["market_periods"], d["idiosyncratic_periods"],
                           d.get("allow_short_idiosyncratic", False))
    spec = SCoCoSpec(
        maturity=int(round(steps)),
        coupon=0.0 if is_par else float(coupon) / periods_per_year,
        threshold=math.inf if th is None else float(th),
        standstill_periods=sec.get("standstill_periods", 2),
        dual=dual,
    )
    return spec, is_par


# --------------------------------------------------------------------------
# output helpers


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


class _Writer:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[Path] = []

    def path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if p not in self.files:
            self.files.append(p)
        return p

    def json(self, rel: str, obj) -> None:
        self.path(rel).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")

    def csv(self, rel: str, header: list[str], rows) -> None:
        with open(self.path(rel), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# --------------------------------------------------------------------------
# orchestration


@dataclass
class _Context:
    cfg: RunConfig
    out: _Writer
    threads: int
    alphas: list[float] | None = None
    samples: int | None = None
    assets: list[AssetModel] = field(default_factory=list)
    matrices: dict[str, TransitionMatrix] = field(default_factory=dict)
    scenarios: dict[tuple[str, str], ScenarioSet] = field(default_factory=dict)
    par_tables: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def testbeds(self) -> list[str]:
        return list(self.cfg.section("scenarios").get("testbeds", [""]))

    def matrix(self, asset: AssetModel) -> TransitionMatrix:
        if asset.name not in self.matrices:
            self.matrices[asset.name] = asset.transition_matrix()
        return self.matrices[asset.name]

    def scenario_set(self, asset: AssetModel, bed: str) -> tuple[ScenarioSet, ScenarioConfig]:
        sc = scenario_config(self.cfg, self.threads)
        model = asset
        if bed:
            sc = testbed_config(bed, sc)
            if bed == "R-OFF":
                model = asset.off()
        key = (asset.name, bed)
        if key not in self.scenarios:
            matrix = self.matrix(asset) if model.switching else None
            self.scenarios[key] = generate(sc, model.spread_factor(matrix), rate_model(self.cfg))
        return self.scenarios[key], sc

    def prefix(self, asset: AssetModel, bed: str) -> str:
        return f"{asset.name}/{bed}/" if bed else f"{asset.name}/"

    def spec(self, sc: ScenarioConfig) -> tuple[SCoCoSpec, bool]:
        return instrument_spec(self.cfg, sc.periods_per_year)


def _stage_estimate(ctx: _Context) -> None:
    for a in ctx.assets:
        m = ctx.matrix(a)
        m.to_csv(ctx.out.path(f"{a.name}/transition_matrix.csv"))
        ctx.out.json(f"{a.name}/transition_matrix.json", {
            **m.to_json(),
            "target_stationary": a.stationary.probs,
            "eigenvalues_requested": a.eigenvalues,
        })
        ctx.out.csv(
            f"{a.name}/regimes.csv",
            ["regime", "label", "trading_days", "spread_mean_bp", "spread_stdev_bp", "return_stdev_pct", "stationary"],
            [
                [r.regime_id, r.label, w, r.spread_mean, r.spread_stdev, r.return_stdev * 100.0, p]
                for r, w, p in zip(a.regimes, a.weights, a.stationary.probs)
            ],
        )


def _stage_calibrate(ctx: _Context) -> None:
    for a in ctx.assets:
        rows = []
        for spec, t in zip(a.regimes, a.targets):
            try:
                p = calibrate(t)
            except ValueError as exc:
                raise type(exc)(f"asset {a.name}, regime {spec.regime_id} ({spec.label}): {exc}") from None
            rows.append({"regime": spec.regime_id, "label": spec.label, "params": p.to_dict(),
                         "targets": t.__dict__, "log_anchor": math.log(t.start_level) + p.k0 / p.k2})
        entry = {"regimes": rows}
        if len(a.targets) > 1:
            avg = averaged_targets(a.targets, a.weights)
            entry["regime_off"] = {"params": calibrate(avg).to_dict(), "targets": avg.__dict__}
        ctx.out.json(f"{a.name}/calibration.json", entry)


def _stage_simulate(ctx: _Context) -> None:
    cache = ctx.cfg.section("scenarios").get("cache", True)
    for a in ctx.assets:
        for bed in ctx.testbeds:
            s, sc = ctx.scenario_set(a, bed)
            pre = ctx.prefix(a, bed)
            if cache:
                save_scenarios(s, ctx.out.path(pre + "scenarios.bin"))
            ctx.out.json(pre + "scenarios.json", {
                "n_paths": s.n_paths, "n_steps": s.n_steps, "dt": s.dt,
                "n_regime_scenarios": sc.n_regime_scenarios, "n_paths_per_regime": sc.n_paths_per_regime,
                "mean_rate": float(np.mean(s.rates)), "mean_spread": float(np.mean(s.spreads)),
                "max_spread": float(np.max(s.spreads)),
            })


def _priced_spec(s: ScenarioSet, spec: SCoCoSpec, is_par: bool) -> tuple[SCoCoSpec, dict]:
    info = {}
    if is_par:
        pr = par_rate(s, spec)
        spec = spec.with_coupon(pr.per_period)
        info = {"par_rate": pr.to_dict()}
    return spec, info


def _stage_price(ctx: _Context) -> None:
    for a in ctx.assets:
        for bed in ctx.testbeds:
            s, sc = ctx.scenario_set(a, bed)
            spec, is_par = ctx.spec(sc)
            spec, info = _priced_spec(s, spec, is_par)
            res = price_dual(s, spec) if spec.dual is not None else price(s, spec)
            ctx.out.json(ctx.prefix(a, bed) + "price.json", {
                **res.to_dict(), **info,
                "coupon_per_period": spec.coupon, "coupon_annual": spec.coupon * sc.periods_per_year,
                "threshold_bp": spec.threshold, "maturity_periods": spec.maturity,
            })


def _stage_par_rate(ctx: _Context) -> None:
    sec = ctx.cfg.section("par_rate")
    for a in ctx.assets:
        for bed in ctx.testbeds:
            s, sc = ctx.scenario_set(a, bed)
            spec, _ = ctx.spec(sc)
            ths = sec.get("thresholds_bp") or [spec.threshold]
            rows = par_rate_table(s, spec, ths)
            ctx.par_tables[a.name + (f"/{bed}" if bed else "")] = rows
            keys = ["threshold", "par_rate", "straight_par_rate", "premium_bp", "trigger_probability"]
            ctx.out.csv(ctx.prefix(a, bed) + "par_rate.csv", keys, [[r[k] for k in keys] for r in rows])
    # one wide table: x = threshold, one par-rate column per asset
    names = list(ctx.par_tables)
    thresholds = [r["threshold"] for r in ctx.par_tables[names[0]]]
    ctx.out.csv("par_rate_table.csv", ["threshold_bp"] + names,
                [[th] + [ctx.par_tables[n][i]["par_rate"] for n in names] for i, th in enumerate(thresholds)])


def _horizons(ctx: _Context, sc: ScenarioConfig, spec: SCoCoSpec) -> list[int]:
    years = ctx.cfg.section("lsm").get("horizons_years")
    if not years:
        return list(range(1, spec.maturity))
    out = []
    for y in years:
        h = y * sc.periods_per_year
        if abs(h - round(h)) > 1e-9:
            raise ConfigError(f"LSM horizon {y}y is not on the pricing grid")
        out.append(int(round(h)))
    return out


def _stage_lsm(ctx: _Context) -> None:
    sec = ctx.cfg.section("lsm")
    basis = BasisSpec(sec.get("rate_terms", 2), sec.get("include_indicator", True))
    for a in ctx.assets:
        for bed in ctx.testbeds:
            s, sc = ctx.scenario_set(a, bed)
            spec, is_par = ctx.spec(sc)
            spec, info = _priced_spec(s, spec, is_par)
            horizons = _horizons(ctx, sc, spec)
            res = lsm_price(s, spec, basis, horizons)
            pre = ctx.prefix(a, bed)
            ctx.out.csv(pre + "lsm_distributions.csv", ["scenario", "horizon", "price"],
                        ([l, h, res.distributions[h].prices[l]] for h in horizons for l in range(s.n_paths)))
            ctx.out.json(pre + "lsm_summary.json", {
                **info,
                "basis": basis.column_names(),
                "root_price": res.root_price,
                "mc_price": (price_dual(s, spec) if spec.dual is not None else price(s, spec)).price,
                "max_orthogonality": res.max_orthogonality,
                "degradations": res.degradations,
                "horizons": [{**res.distributions[h].summary(), "years": h / sc.periods_per_year} for h in horizons],
            })


def _stage_sensitivity(ctx: _Context) -> None:
    sec = ctx.cfg.section("sensitivity")
    alphas = ctx.alphas or sec.get("alphas") or [10.0, 20.0, 30.0]
    n = ctx.samples or sec.get("samples", 100)
    for a in ctx.assets:
        if not a.switching:
            continue
        s, sc = ctx.scenario_set(a, "")
        spec, is_par = ctx.spec(sc)
        spec, info = _priced_spec(s, spec, True) if is_par else (spec, {})
        pipe = SensitivityPipeline(a.spread_factor(ctx.matrix(a)), a.eigenvalues, rate_model(ctx.cfg), sc, spec)
        reports, rows = [], []
        for alpha in alphas:
            samples, redrawn = sample_dirichlet(DirichletSpec(a.stationary, float(alpha), n), ctx.cfg.seed)
            rep = reprice_under(samples, pipe, float(alpha), redrawn)
            reports.append(rep.to_dict())
            for i in range(n):
                rows.append([alpha, i, *rep.samples[i], rep.prices[i], rep.par_rates[i], rep.failures.get(i, "")])
        header = ["alpha", "sample"] + [f"p{j + 1}" for j in range(len(a.stationary))] + ["price", "par_rate", "error"]
        ctx.out.csv(f"{a.name}/sensitivity_samples.csv", header, rows)
        ctx.out.json(f"{a.name}/sensitivity_summary.json", {
            **info, "coupon_per_period": spec.coupon, "base_stationary": a.stationary.probs, "reports": reports,
        })


_RUNNERS: dict[str, Callable[[_Context], None]] = {
    "estimate": _stage_estimate,
    "calibrate": _stage_calibrate,
    "simulate": _stage_simulate,
    "price": _stage_price,
    "par-rate": _stage_par_rate,
    "lsm": _stage_lsm,
    "sensitivity": _stage_sensitivity,
}


def run(
    cfg: RunConfig,
    stages: list[str] | None = None,
    out: str | Path | None = None,
    threads: int = 1,
    alphas: list[float] | None = None,
    samples: int | None = None,
) -> Path:
    """Execute ``stages`` (default: those in the config) and write the manifest; returns its path."""
    stages = [s for s in STAGES if s in (stages or cfg.stages)]
    root = Path(out) if out is not None else cfg.output
    root.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg, _Writer(root), threads, alphas, samples)
    try:
        ctx.assets = [resolve_asset(b, cfg.base_dir) for b in cfg.raw["assets"]]
    except Exception as exc:
        raise StageError("ingest", exc) from exc
    for st in stages:
        try:
            _RUNNERS[st](ctx)
        except Exception as exc:
            raise StageError(st, exc) from exc
    files = {p.relative_to(root).as_posix(): sha256_file(p) for p in sorted(ctx.out.files)}
    manifest = {
        "config_sha256": cfg.digest,
        "seed": cfg.seed,
        "version": __version__,
        "stages": stages,
        "files": files,
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
