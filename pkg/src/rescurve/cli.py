"""Command-line front end: ingest, select-k, analyze, synth, plot, run-all.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import dataclass, fields
from datetime import timedelta
from pathlib import Path


from . import archetype, cluster, modelselect, reports, synth
from .errors import ConfigError, DataError, DomainError
from .ingest import CurveSet, TimeGrid, build_curve_set, infer_grid, parse_observations, parse_timestamp
from .metric import pairwise_matrix

log = logging.getLogger("rescurve")

CURVESET = "curveset.json"
KSWEEP = "ksweep.json"
CLUSTERS = "clusters.json"
ARCHETYPES = "archetypes.json"
PLOT_DATA = "plot_data.json"


@dataclass
class RunConfig:
    schema: str = "count"
    grid_step: str = "24h"
    grid_start: str | None = None
    n_steps: int | None = None
    event: str = ""
    max_missing_ratio: float = 0.5
    min_peak: float = 0.10
    k_min: int = 2
    k_max: int = 10
    k: int | None = None
    seed: int | None = None
    restarts: int = 5
    max_iter: int = 50
    center: str = "mean"
    eps_grad: float = 0.01
    pc_peak_threshold: float = 1.0
    min_plateau: int = 2
    plateau_tol: float = 0.02
    eps_rec: float = 0.02
    min_stage: int = 2

    def validate(self, need_seed: bool = False) -> "RunConfig":
        if self.schema not in ("count", "fraction"):
            raise ConfigError(f"schema must be 'count' or 'fraction', got {self.schema!r}")
        parse_step(self.grid_step)
        if self.grid_start is not None:
            try:
                parse_timestamp(self.grid_start)
            except ValueError as exc:
                raise ConfigError(f"bad --grid-start: {exc}") from exc
        if self.n_steps is not None and self.n_steps < 3:
            raise ConfigError("--n-steps must be at least 3")
        for name in ("max_missing_ratio", "min_peak", "plateau_tol", "eps_rec"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.eps_grad < 0 or self.pc_peak_threshold <= 0:
            raise ConfigError("eps_grad must be >= 0 and pc_peak_threshold > 0")
        if self.min_plateau < 1 or self.min_stage < 1:
            raise ConfigError("min_plateau and min_stage must be at least 1")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError(f"need 2 <= k_min <= k_max, got {self.k_min}..{self.k_max}")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.restarts < 1 or self.max_iter < 1:
            raise ConfigError("restarts and max_iter must be positive")
        if self.center not in ("dba", "mean"):
            raise ConfigError(f"center must be 'dba' or 'mean', got {self.center!r}")
        if need_seed and self.seed is None:
            raise ConfigError("--seed is required (no default seed is ever generated)")
        return self

    def archetype_kwargs(self) -> dict:
        return {k: getattr(self, k) for k in
                ("eps_grad", "pc_peak_threshold", "plateau_tol", "min_plateau", "eps_rec", "min_stage")}


def parse_step(text: str) -> timedelta:
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([smhd]?)\s*", str(text))
    if not m:
        raise ConfigError(f"bad grid step {text!r}; use e.g. 24h, 6h, 1d, 900s")
    value, unit = float(m.group(1)), m.group(2) or "h"
    step = timedelta(**{{"s": "seconds", "m": "minutes", "h": "hours", "d": "days"}[unit]: value})
    if step <= timedelta(0):
        raise ConfigError("grid step must be positive")
    return step


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by the --config JSON file, overridden by explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as f:
                values = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def do_ingest(inputs: list[str], cfg: RunConfig, out: Path) -> CurveSet:
    observations, rejects = [], []
    for path in inputs:
        obs, rej = parse_observations(path, cfg.schema)
        observations += obs
        rejects += [{"file": Path(path).name, "line": r.line, "reason": r.reason} for r in rej]
    if not observations:
        raise DataError("no valid observations in the input")
    step = parse_step(cfg.grid_step)
    if cfg.grid_start is not None:
        start = parse_timestamp(cfg.grid_start)
        if cfg.n_steps is None:
            n = (max(o.timestamp for o in observations) - start) // step + 1
            grid = TimeGrid(start, step, max(int(n), 3))
        else:
            grid = TimeGrid(start, step, cfg.n_steps)
    else:
        grid = infer_grid(observations, step)
        if cfg.n_steps is not None:
            grid = TimeGrid(grid.start, step, cfg.n_steps)
    cs = build_curve_set(observations, grid, cfg.event, cfg.max_missing_ratio, cfg.min_peak,
                         source=",".join(Path(p).name for p in inputs), n_rejected_rows=len(rejects))
    cs.provenance["rejects"] = rejects
    reports.write_json(out / CURVESET, cs.to_dict())
    reports.write_json(out / "drop_report.json", {
        "dropped": cs.provenance["dropped"], "rejected_rows": rejects,
        "n_units_in": cs.provenance["n_units_in"], "n_units_retained": len(cs),
    })
    log.info("%d curves retained, %d units dropped", len(cs), len(cs.provenance["dropped"]))
    return cs


def do_select_k(cs: CurveSet, cfg: RunConfig, out: Path, emit_distances: bool = False) -> modelselect.KSweepReport:
    k_max = min(cfg.k_max, len(cs))
    if k_max != cfg.k_max:
        raise ConfigError(f"k_max={cfg.k_max} exceeds the number of curves ({len(cs)})")
    D = pairwise_matrix(cs)
    if emit_distances:
        reports.write_json(out / "distances.json", {"unit_ids": cs.unit_ids, "dtw": D.tolist()})
    rep = modelselect.sweep_k(cs, cfg.k_min, k_max, cfg.seed, n_restarts=cfg.restarts,
                              max_iter=cfg.max_iter, distances=D)
    reports.write_json(out / KSWEEP, rep.to_dict())
    log.info("recommended k=%d: %s", rep.recommended_k, rep.rationale)
    return rep


def do_analyze(cs: CurveSet, k: int, cfg: RunConfig, out: Path) -> tuple[dict, dict]:
    if k > len(cs):
        raise ConfigError(f"k={k} exceeds the number of curves ({len(cs)})")
    model = cluster.fit(cs, k, cfg.seed, max_iter=cfg.max_iter, n_restarts=cfg.restarts)
    infos = cluster.summarize(model, cs)
    step_days = cs.grid.step_seconds / 86400.0
    doc_clusters = {
        "event_name": cs.event_name,
        "grid": cs.grid.to_dict(),
        "center_method": cfg.center,
        "model": model.to_dict(cs.unit_ids),
        "clusters": [i.to_dict() for i in infos],
    }
    arche = []
    for info in infos:
        curve = info.center if cfg.center == "dba" else info.mean_curve
        rep = archetype.classify(curve, cluster=info.cluster, **cfg.archetype_kwargs())
        d = rep.to_dict(step_days)
        d["size"] = info.size
        d["small_cluster"] = info.small
        arche.append(d)
    relation = archetype.duration_rate_relation([
        archetype.ArchetypeProperties(plateau_duration=a["properties"]["plateau_duration"],
                                      constant_recovery_rate=a["properties"]["constant_recovery_rate"])
        for a in arche if a["label"] == archetype.TRAPEZOIDAL
    ])
    doc_arche = {
        "event_name": cs.event_name,
        "step_days": step_days,
        "parameters": cfg.archetype_kwargs(),
        "reports": arche,
        "duration_rate_spearman": relation,
    }
    reports.write_json(out / CLUSTERS, doc_clusters)
    reports.write_json(out / ARCHETYPES, doc_arche)
    log.info("labels: %s", ", ".join(f"{a['cluster']}={a['label']}" for a in arche))
    return doc_clusters, doc_arche


def do_plot(src: Path, out: Path) -> list[Path]:
    have_sweep = (src / KSWEEP).exists()
    have_clusters = (src / CLUSTERS).exists() and (src / ARCHETYPES).exists()
    if not (have_sweep or have_clusters):
        raise ConfigError(f"no report files ({KSWEEP}, {CLUSTERS}+{ARCHETYPES}) in {src}")
    written, plot_data = [], {}
    try:
        if have_sweep:
            sweep = reports.read_json(src / KSWEEP)
            if not sweep.get("rows"):
                raise ConfigError(f"{KSWEEP} has no rows")
            plot_data["ksweep"] = {"k": [r["k"] for r in sweep["rows"]],
                                   "silhouette": [r["silhouette"] for r in sweep["rows"]],
                                   "distortion": [r["distortion"] for r in sweep["rows"]],
                                   "elbow_k": sweep["elbow_k"], "recommended_k": sweep["recommended_k"]}
            written.append(reports.plot_ksweep(sweep, out / "ksweep.svg"))
        if have_clusters:
            clusters = reports.read_json(src / CLUSTERS)
            arche = reports.read_json(src / ARCHETYPES)
            if not clusters.get("clusters") or not arche.get("reports"):
                raise ConfigError("cluster report is empty")
            step_hours = clusters["grid"]["step_seconds"] / 3600
            key = "center" if clusters.get("center_method") == "dba" else "pointwise_mean"
            written.append(reports.plot_cluster_overlay(clusters["clusters"], out / "clusters.svg", step_hours, key))
            plot_data["clusters"] = [{"cluster": c["cluster"], "size": c["size"], "curve": c[key], "curve_kind": key}
                                     for c in clusters["clusters"]]
            plot_data["triptychs"] = []
            for rep in arche["reports"]:
                written.append(reports.plot_triptych(rep, out / f"triptych_cluster{rep['cluster']}.svg"))
                plot_data["triptychs"].append({"cluster": rep["cluster"], "label": rep["label"], **rep["triptych"]})
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"malformed report: {exc!r}") from exc
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    written.append(reports.write_json(out / PLOT_DATA, plot_data))
    return written


def cmd_ingest(args):
    cfg = load_config(args).validate()
    do_ingest(args.input, cfg, _out(args))


def cmd_select_k(args):
    cfg = load_config(args).validate(need_seed=True)
    cs = CurveSet.load(args.curveset)
    do_select_k(cs, cfg, _out(args), args.emit_distances)


def cmd_analyze(args):
    cfg = load_config(args).validate(need_seed=True)
    if cfg.k is None:
        raise ConfigError("--k is required for analyze")
    cs = CurveSet.load(args.curveset)
    do_analyze(cs, cfg.k, cfg, _out(args))


def cmd_synth(args):
    if args.seed is None:
        raise ConfigError("--seed is required (no default seed is ever generated)")
    mixture: dict = {}
    for item in args.preset or []:
        name, _, count = item.partition("=")
        try:
            mixture[name] = int(count or 1)
        except ValueError as exc:
            raise ConfigError(f"bad --preset {item!r}; use name=count") from exc
    if args.template:
        try:
            doc = json.loads(Path(args.template).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read template file: {exc}") from exc
        for entry in doc if isinstance(doc, list) else [doc]:
            entry = dict(entry)
            count = int(entry.pop("count", 1))
            mixture[synth.template_from_dict(entry)] = count
    if args.noise_sigma < 0:
        raise ConfigError("--noise-sigma must be non-negative")
    cs, truth = synth.generate_dataset(mixture, args.noise_sigma, args.seed, args.event or "synthetic")
    out = _out(args)
    reports.write_json(out / CURVESET, cs.to_dict())
    reports.write_json(out / "ground_truth.json", {
        "seed": args.seed, "noise_sigma": args.noise_sigma,
        "labels": dict(zip(cs.unit_ids, truth)),
    })


def cmd_plot(args):
    src = Path(args.reports)
    do_plot(src, Path(args.out) if args.out else src)


def cmd_run_all(args):
    cfg = load_config(args).validate(need_seed=True)
    if bool(args.input) == bool(args.curveset):
        raise ConfigError("give exactly one of --input (CSV) or --curveset")
    out = _out(args)
    if args.input:
        cs = do_ingest(args.input, cfg, out)
    else:
        cs = CurveSet.load(args.curveset)
        reports.write_json(out / CURVESET, cs.to_dict())
    k = cfg.k
    if len(cs) >= cfg.k_min:
        cfg_sweep = RunConfig(**{**cfg.__dict__, "k_max": min(cfg.k_max, len(cs))})
        if cfg_sweep.k_max >= cfg_sweep.k_min:
            rep = do_select_k(cs, cfg_sweep, out, args.emit_distances)
            k = k or rep.recommended_k
    if k is None:
        k = 1
    do_analyze(cs, k, cfg, out)
    do_plot(out, out)


def _add_config_flags(p: argparse.ArgumentParser, groups: set[str]):
    p.add_argument("--config", help="JSON file of RunConfig keys; flags override it")
    p.add_argument("--seed", type=int)
    if "ingest" in groups:
        p.add_argument("--schema", choices=["count", "fraction"])
        p.add_argument("--grid-step", dest="grid_step", help="e.g. 24h (default), 6h, 1d")
        p.add_argument("--grid-start", dest="grid_start", help="RFC-3339 start of the first cell")
        p.add_argument("--n-steps", dest="n_steps", type=int)
        p.add_argument("--event")
        p.add_argument("--max-missing-ratio", dest="max_missing_ratio", type=float)
        p.add_argument("--min-peak", dest="min_peak", type=float)
    if "cluster" in groups:
        p.add_argument("--restarts", type=int)
        p.add_argument("--max-iter", dest="max_iter", type=int)
    if "sweep" in groups:
        p.add_argument("--k-min", dest="k_min", type=int)
        p.add_argument("--k-max", dest="k_max", type=int)
        p.add_argument("--emit-distances", action="store_true", help="also write distances.json")
    if "analyze" in groups:
        p.add_argument("--k", type=int)
        p.add_argument("--center", choices=["dba", "mean"])
        p.add_argument("--eps-grad", dest="eps_grad", type=float)
        p.add_argument("--pc-peak-threshold", dest="pc_peak_threshold", type=float)
        p.add_argument("--min-plateau", dest="min_plateau", type=int)
        p.add_argument("--plateau-tol", dest="plateau_tol", type=float)
        p.add_argument("--eps-rec", dest="eps_rec", type=float)
        p.add_argument("--min-stage", dest="min_stage", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rescurve", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="CSV observations -> curve-set JSON")
    p.add_argument("input", nargs="+")
    p.add_argument("--out", required=True)
    _add_config_flags(p, {"ingest"})
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("select-k", help="silhouette / distortion sweep over k")
    p.add_argument("curveset")
    p.add_argument("--out", required=True)
    _add_config_flags(p, {"cluster", "sweep"})
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("analyze", help="cluster with k and classify cluster-average curves")
    p.add_argument("curveset")
    p.add_argument("--out", required=True)
    _add_config_flags(p, {"cluster", "analyze"})
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="write a synthetic curve set with ground truth")
    p.add_argument("--preset", action="append", help=f"name=count, name in {sorted(synth.PRESETS)}")
    p.add_argument("--template", help="JSON template (or list of templates with 'count')")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--event")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plot", help="render SVG figures from report files")
    p.add_argument("reports", help="directory holding ksweep.json and/or clusters.json + archetypes.json")
    p.add_argument("--out", help="output directory (default: the report directory)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("run-all", help="ingest (or load) -> select-k -> analyze -> plot")
    p.add_argument("--input", nargs="+", help="CSV observation file(s)")
    p.add_argument("--curveset", help="existing curve-set JSON instead of CSV input")
    p.add_argument("--out", required=True)
    _add_config_flags(p, {"ingest", "cluster", "sweep", "analyze"})
    p.set_defaults(func=cmd_run_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
