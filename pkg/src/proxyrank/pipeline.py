"""End-to-end runs from a single JSON-able config: simulate, fit, rank,
placebo, confounder sweep, campaign validation, and machine-readable outputs.

A fully defaulted config reproduces the reference simulation study: a clean
10k-unit cohort, an IPTW-weighted linear model with interactions next to an
IPTW-weighted linear SVR, a three-point confounder ladder, and a simulated
campaign with 66.1% exposure. Identical config and seed give byte-identical
output files.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import AnalysisConfig, AnalysisResult, ModelSpec, analyze_model, prepare_cohort
from .data import Dataset
from .outcomes import compute_ite
from .ranking import rank_rmse, select_top_percentile
from .rng import derive_seed
from .sensitivity import (ConfounderConfig, PlaceboResult, SensitivityReport,
                          confounding_overlap, placebo_test)
from .simulate import ConfigError, SimConfig, ground_truth_rank, simulate_cohort
from .validation import DEFAULT_K_GRID, IVResult, simulate_campaign, validate_ranking_splits


class StageError(RuntimeError):
    pass


def _default_models() -> tuple[ModelSpec, ...]:
    return (ModelSpec(family="linear_wls", causal=True, label="iptw_linear"),
            ModelSpec(family="svr_linear", causal=True, label="iptw_svr"))


def _default_confounders() -> tuple[ConfounderConfig, ...]:
    return (ConfounderConfig(alpha=1e5, epsilon=40 * 1e5),
            ConfounderConfig(alpha=1e5, epsilon=100 * 1e5),
            ConfounderConfig(alpha=1e3, epsilon=1700 * 1e3))


@dataclass(frozen=True)
class RunConfig:
    """Everything one end-to-end run needs; JSON round-trippable."""

    master_seed: int = 2024
    sim: SimConfig = field(default_factory=SimConfig)
    sim_seed_explicit: bool = False
    models: tuple[ModelSpec, ...] = field(default_factory=_default_models)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    sensitivity_configs: tuple[ConfounderConfig, ...] = field(default_factory=_default_confounders)
    sensitivity_runs: int = 3
    placebo_bootstrap: int = 200
    k_grid: tuple[float, ...] = DEFAULT_K_GRID
    campaign_exposure: float = 0.661

    def __post_init__(self) -> None:
        if not self.models:
            raise ConfigError("config must declare at least one outcome model")
        if self.sensitivity_runs < 1:
            raise ConfigError("sensitivity_runs must be >= 1")
        if not 0.0 < self.campaign_exposure < 1.0:
            raise ConfigError("campaign_exposure must lie in (0, 1)")

    def resolved_sim(self) -> SimConfig:
        if self.sim_seed_explicit:
            return self.sim
        return replace(self.sim, seed=derive_seed(self.master_seed, "sim"))

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "sim": asdict(self.sim),
            "sim_seed_explicit": self.sim_seed_explicit,
            "models": [asdict(m) for m in self.models],
            "analysis": asdict(self.analysis),
            "sensitivity_configs": [asdict(c) for c in self.sensitivity_configs],
            "sensitivity_runs": self.sensitivity_runs,
            "placebo_bootstrap": self.placebo_bootstrap,
            "k_grid": list(self.k_grid),
            "campaign_exposure": self.campaign_exposure,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        unknown = set(raw) - {"master_seed", "sim", "sim_seed_explicit", "models",
                              "analysis", "sensitivity_configs", "sensitivity_runs",
                              "placebo_bootstrap", "k_grid", "campaign_exposure"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "master_seed" in raw:
            kwargs["master_seed"] = int(raw["master_seed"])
        if "sim" in raw:
            sim_raw = dict(raw["sim"])
            kwargs["sim_seed_explicit"] = "seed" in sim_raw or raw.get("sim_seed_explicit", False)
            for key in ("cate_levels", "coef_values", "coef_probs", "compliance_table"):
                if sim_raw.get(key) is not None:
                    sim_raw[key] = tuple(sim_raw[key])
            try:
                kwargs["sim"] = SimConfig(**sim_raw)
            except TypeError as exc:
                raise ConfigError(f"bad sim config: {exc}") from None
        if "models" in raw:
            if not isinstance(raw["models"], list) or not raw["models"]:
                raise ConfigError("config must declare at least one outcome model")
            try:
                kwargs["models"] = tuple(ModelSpec(**m) for m in raw["models"])
            except TypeError as exc:
                raise ConfigError(f"bad model spec: {exc}") from None
        if "analysis" in raw:
            acfg = dict(raw["analysis"])
            if acfg.get("report_range") is not None:
                acfg["report_range"] = tuple(acfg["report_range"])
            try:
                kwargs["analysis"] = AnalysisConfig(**acfg)
            except TypeError as exc:
                raise ConfigError(f"bad analysis config: {exc}") from None
        if "sensitivity_configs" in raw:
            try:
                kwargs["sensitivity_configs"] = tuple(
                    ConfounderConfig(**c) for c in raw["sensitivity_configs"])
            except TypeError as exc:
                raise ConfigError(f"bad confounder config: {exc}") from None
        for key in ("sensitivity_runs", "placebo_bootstrap"):
            if key in raw:
                kwargs[key] = int(raw[key])
        if "k_grid" in raw:
            kwargs["k_grid"] = tuple(float(k) for k in raw["k_grid"])
        if "campaign_exposure" in raw:
            kwargs["campaign_exposure"] = float(raw["campaign_exposure"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class ModelReport:
    """Everything recorded for one model branch of a run."""

    label: str
    family: str
    causal: bool
    error: str | None = None
    rank_rmse_vs_truth: float | None = None
    placebo: PlaceboResult | None = None
    sensitivity: SensitivityReport | None = None
    iv: IVResult | None = None
    analysis: AnalysisResult | None = None
    campaign_predicted: np.ndarray | None = None

    def summary_dict(self) -> dict:
        out = {"label": self.label, "family": self.family, "causal": self.causal,
               "error": self.error, "rank_rmse_vs_truth": self.rank_rmse_vs_truth}
        if self.placebo is not None:
            out["placebo"] = self.placebo.to_dict()
        if self.sensitivity is not None:
            out["sensitivity_summaries"] = [s.to_dict() for s in self.sensitivity.summaries]
            out["mean_confounded_rank_rmse"] = self.sensitivity.mean_rank_rmse()
        if self.iv is not None:
            out["iv_separation"] = {str(k): v for k, v in self.iv.separation.items()}
            out["iv_separated_fraction"] = self.iv.separated_fraction()
        return out


@dataclass
class RunReport:
    config: RunConfig
    config_hash: str
    n: int
    k: int
    true_levels: np.ndarray | None
    model_reports: list[ModelReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash,
                "master_seed": self.config.master_seed,
                "version": __version__,
                "n": self.n, "k": self.k,
                "config": self.config.to_dict(),
                "models": [m.summary_dict() for m in self.model_reports]}


def run_pipeline(cfg: RunConfig, dataset: Dataset | None = None) -> RunReport:
    """Execute every stage for every model; a stage error aborts only that
    model's branch and is recorded in the report.

    When ``dataset`` is given it replaces the simulated observed cohort (no
    oracle metrics in that case).
    """
    sim_cfg = cfg.resolved_sim()
    if dataset is None:
        sim_out = simulate_cohort(sim_cfg)
        observed = sim_out.observed
        true_levels = ground_truth_rank(sim_out)
    else:
        observed = dataset
        true_levels = (ground_truth_rank(dataset) if dataset.ground_truth is not None
                       else None)

    campaign = None
    campaign_error = None
    try:
        campaign_seed = derive_seed(cfg.master_seed, "campaign")
        campaign = simulate_campaign(replace(sim_cfg, seed=campaign_seed),
                                     exposure=cfg.campaign_exposure)
    except Exception as exc:  # recorded per model below
        campaign_error = f"campaign stage failed: {exc}"

    report = RunReport(config=cfg, config_hash=cfg.config_hash(),
                       n=observed.n, k=observed.k, true_levels=true_levels)
    placebo_seed = derive_seed(cfg.master_seed, "placebo")
    sens_seed = derive_seed(cfg.master_seed, "sensitivity")

    prepared = None
    for spec in cfg.models:
        mr = ModelReport(label=spec.name(), family=spec.family, causal=spec.causal)
        report.model_reports.append(mr)
        try:
            if prepared is None:
                prepared = prepare_cohort(observed, cfg.analysis)
            result = analyze_model(prepared, spec, cfg.analysis)
            mr.analysis = result
            if true_levels is not None:
                mr.rank_rmse_vs_truth = rank_rmse(result.ranked.level, true_levels)
            mr.placebo = placebo_test(observed, spec, cfg.analysis, seed=placebo_seed,
                                      baseline=result.ranked,
                                      n_bootstrap=cfg.placebo_bootstrap)
            sens = confounding_overlap(observed, spec, list(cfg.sensitivity_configs),
                                       runs=cfg.sensitivity_runs, cfg=cfg.analysis,
                                       seed=sens_seed, baseline=result)
            mr.sensitivity = SensitivityReport(placebo=mr.placebo, records=sens.records,
                                               summaries=sens.summaries)
            if campaign is not None:
                predicted = compute_ite(result.model, campaign.data).ite
                mr.campaign_predicted = predicted
                mr.iv = validate_ranking_splits(campaign.with_predicted_ite(predicted),
                                                k_grid=cfg.k_grid)
            elif campaign_error:
                mr.error = campaign_error
        except Exception as exc:
            mr.error = f"{type(exc).__name__}: {exc}"
    return report


def summary_from_payload(payload: dict) -> str:
    """Human-readable summary.md from a report.json-shaped dict."""
    lines = [f"# Run summary (config {payload.get('config_hash', '?')})", "",
             f"master_seed: {payload.get('master_seed', '?')}",
             f"version: {payload.get('version', '?')}",
             f"cohort: n={payload.get('n', '?')}, k={payload.get('k', '?')}", ""]
    for m in payload.get("models", []):
        lines.append(f"## {m.get('label')}")
        if m.get("error"):
            lines.append(f"- status: FAILED ({m['error']})")
        else:
            lines.append("- status: ok")
        if m.get("rank_rmse_vs_truth") is not None:
            lines.append(f"- rank RMSE vs ground truth: {m['rank_rmse_vs_truth']:.4f}")
        if m.get("placebo"):
            lines.append(f"- placebo ATE: {m['placebo']['ate_estimate']:.4f} "
                         f"(bootstrap se {m['placebo']['ate_se']:.4f})")
            lines.append(f"- placebo rank RMSE vs original: "
                         f"{m['placebo']['rank_rmse_vs_original']:.4f}")
        if m.get("mean_confounded_rank_rmse") is not None:
            lines.append(f"- mean confounded rank RMSE vs baseline: "
                         f"{m['mean_confounded_rank_rmse']:.4f}")
        if m.get("iv_separated_fraction") is not None:
            lines.append(f"- campaign separation: "
                         f"{m['iv_separated_fraction']:.0%} of thresholds")
        lines.append("")
    return "\n".join(lines)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_csv(path: Path, config_hash: str, header: list[str], rows) -> None:
    lines = [f"# config_hash={config_hash}", ",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_report(report: RunReport, outdir: str | Path) -> dict:
    """Write report.json plus per-stage CSVs and summary.md; return a manifest.

    Every emitted file carries the config hash in its first line (JSON files
    as a top-level key). The manifest maps file names to SHA-256 hashes and
    is also written as manifest.json.
    """
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise StageError(f"output directory {out} is not writable: {exc}") from None

    chash = report.config_hash
    written: list[Path] = []

    report_path = out / "report.json"
    report_path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=1),
                           encoding="utf-8")
    written.append(report_path)

    ok_models = [m for m in report.model_reports if m.analysis is not None]
    if ok_models:
        k_grid = report.config.k_grid
        header = ["model", "index", "ite", "rank", "level"]
        if report.true_levels is not None:
            header.append("true_level")
        header += [f"top_{int(k) if float(k).is_integer() else k}" for k in k_grid]
        rows = []
        for m in ok_models:
            ranked = m.analysis.ranked
            tops = [np.zeros(ranked.n, dtype=int) for _ in k_grid]
            for flags, k in zip(tops, k_grid):
                flags[select_top_percentile(ranked, k)] = 1
            for i in range(ranked.n):
                row = [m.label, i, repr(float(ranked.ite[i])), int(ranked.rank[i]),
                       int(ranked.level[i])]
                if report.true_levels is not None:
                    row.append(int(report.true_levels[i]))
                row += [int(flags[i]) for flags in tops]
                rows.append(row)
        write_csv(out / "ranking.csv", chash, header, rows)
        written.append(out / "ranking.csv")

        balance = ok_models[0].analysis.prepared.balance
        rows = [[r.covariate, repr(r.smd_before), repr(r.smd_after),
                 int(r.smd_after > balance.threshold)] for r in balance.rows]
        write_csv(out / "balance.csv", chash,
                   ["covariate", "smd_before", "smd_after", "flagged"], rows)
        written.append(out / "balance.csv")

    sens_models = [m for m in report.model_reports if m.sensitivity is not None]
    if sens_models:
        payload = {"config_hash": chash,
                   "models": {m.label: m.sensitivity.to_dict() for m in sens_models}}
        (out / "sensitivity.json").write_text(json.dumps(payload, sort_keys=True, indent=1),
                                              encoding="utf-8")
        written.append(out / "sensitivity.json")
        rows = []
        for m in sens_models:
            for rec in m.sensitivity.records:
                rows.append([m.label, rec.config_index, rec.run, repr(rec.overlap),
                             repr(rec.rank_rmse_vs_baseline), repr(rec.corr_u_a),
                             repr(rec.corr_u_y)])
        write_csv(out / "overlap.csv", chash,
                   ["model", "config", "run", "overlap", "rank_rmse", "corr_u_a", "corr_u_y"],
                   rows)
        written.append(out / "overlap.csv")

    iv_models = [m for m in report.model_reports if m.iv is not None]
    if iv_models:
        rows = []
        for m in iv_models:
            for rec in m.iv.records:
                if rec.estimate is None:
                    rows.append([m.label, rec.k, rec.group, 0, "", "", "",
                                 rec.skipped or ""])
                else:
                    est = rec.estimate
                    sep = m.iv.separation.get(rec.k)
                    rows.append([m.label, rec.k, rec.group, est.n_group,
                                 repr(est.first_stage), repr(est.cate), repr(est.se),
                                 "" if sep is None else int(sep)])
        write_csv(out / "cate_by_k.csv", chash,
                   ["model", "k", "group", "n", "first_stage", "cate", "se", "separated"],
                   rows)
        written.append(out / "cate_by_k.csv")

    if report.model_reports:
        (out / "summary.md").write_text(summary_from_payload(report.to_dict()),
                                        encoding="utf-8")
        written.append(out / "summary.md")

    manifest = {p.name: _sha256_file(p) for p in written}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1),
                                       encoding="utf-8")
    return manifest
