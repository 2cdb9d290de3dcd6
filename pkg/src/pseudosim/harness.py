"""Command-line front end and batch experiment machinery.

Subcommands: generate, stage2, evaluate, closed-loop, correlate, report.
Results are line-delimited JSON records keyed by (planner, scenario, config
hash); finished keys are skipped on resume and files are rewritten sorted,
so reruns are byte-identical at any worker count.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateData,
    GenerationError,
    GridMismatch,
    ParseError,
    PseudosimError,
    SchemaError,
    StageError,
    ValidationError,
)
from .evaluator import AggregationConfig, evaluate_pseudo, run_closed_loop
from .generate import LAYOUTS, TRAFFIC_LEVELS, GeneratorConfig, generate_scenario
from .metrics import ALL_FIELDS, MetricWeights, compose_epdms, SubscoreVector
from .planners import build_planner, default_zoo
from .scene import load_scenario, save_scenario
from .stage2 import TrajectoryBank, build_stage2_set, downsample, load_stage2, save_stage2

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PLANNER_FAILURES = 3


# ---------------------------------------------------------------------------
# statistics

def pearson_r(xs, ys) -> float:
    """Product-moment correlation; DegenerateData for n < 3 or zero
    variance."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise DegenerateData(f"need equal-length lists with n >= 3, got {len(x)}/{len(y)}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateData("zero variance")
    return float(dx @ dy) / (sx * sy)


def rank_with_ties(xs) -> np.ndarray:
    """1-based ranks; ties get the average rank."""
    x = np.asarray(xs, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(xs, ys) -> float:
    """Pearson correlation over average ranks."""
    return pearson_r(rank_with_ties(xs), rank_with_ties(ys))


# ---------------------------------------------------------------------------
# manifests and configuration

@dataclass(frozen=True)
class ExperimentManifest:
    scenario_dir: str
    scenarios: tuple  # scenario ids
    planners: tuple  # planner spec dicts (hashable as json)
    sigma2: float = 0.1
    stage_mode: str = "product"
    weighting: str = "gaussian"
    knn_k: int = 3
    density: float = 1.0
    metrics: str = "full"
    seed: int = 0

    def aggregation(self) -> AggregationConfig:
        return AggregationConfig(
            sigma2=self.sigma2, stage_mode=self.stage_mode, weighting=self.weighting, knn_k=self.knn_k
        )

    def weights(self) -> MetricWeights:
        return MetricWeights.named(self.metrics)


def load_manifest(path, overrides: dict = None) -> ExperimentManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    doc.update(overrides or {})
    try:
        scenario_dir = doc["scenario_dir"]
        scenarios = tuple(doc["scenarios"])
        planners = tuple(doc["planners"])
    except KeyError as e:
        raise SchemaError(f"manifest missing key {e}") from None
    return ExperimentManifest(
        scenario_dir=scenario_dir,
        scenarios=scenarios,
        planners=planners,
        sigma2=float(doc.get("sigma2", 0.1)),
        stage_mode=doc.get("stage_mode", "product"),
        weighting=doc.get("weighting", "gaussian"),
        knn_k=int(doc.get("knn_k", 3)),
        density=float(doc.get("density", 1.0)),
        metrics=doc.get("metrics", "full"),
        seed=int(doc.get("seed", 0)),
    )


def save_manifest(manifest: ExperimentManifest, path) -> None:
    doc = {
        "scenario_dir": manifest.scenario_dir,
        "scenarios": list(manifest.scenarios),
        "planners": [dict(p) for p in manifest.planners],
        "sigma2": manifest.sigma2,
        "stage_mode": manifest.stage_mode,
        "weighting": manifest.weighting,
        "knn_k": manifest.knn_k,
        "density": manifest.density,
        "metrics": manifest.metrics,
        "seed": manifest.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def config_hash(manifest: ExperimentManifest, kind: str) -> str:
    payload = {
        "kind": kind,
        "sigma2": manifest.sigma2,
        "stage_mode": manifest.stage_mode,
        "weighting": manifest.weighting,
        "knn_k": manifest.knn_k,
        "density": manifest.density,
        "metrics": manifest.metrics,
        "seed": manifest.seed,
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


# ---------------------------------------------------------------------------
# record I/O

def read_records(path) -> list:
    if not os.path.exists(path):
        return []
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_records(path, records: list) -> None:
    records = sorted(records, key=lambda r: (r["planner"], r["scenario"], r["config_hash"]))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _subscores_dict(sv) -> dict:
    return {k: v for k, v in sv.as_dict().items()}


# ---------------------------------------------------------------------------
# worker tasks (module-level for pickling)

def _pseudo_task(args) -> dict:
    (scenario_path, stage2_path, spec, cfg_doc, metrics_name, chash, density) = args
    sc = load_scenario(scenario_path)
    planner = build_planner(spec)
    weights = MetricWeights.named(metrics_name)
    cfg = AggregationConfig(**cfg_doc)
    base = {"planner": spec["id"], "scenario": sc.id, "config_hash": chash}
    observations = None
    if cfg.stage_mode != "stage1":
        _, observations = load_stage2(stage2_path)
        if observations is None:
            return {**base, "failed": True, "error": "scene discarded (fewer than 5 observations)"}
        observations = downsample(observations, density)
    try:
        result = evaluate_pseudo(sc, observations, planner, cfg, weights)
    except (PseudosimError,) as e:
        return {**base, "failed": True, "error": str(e)}
    rec = {
        **base,
        "failed": False,
        "s1": result.combined.s1,
        "s2": result.combined.s2,
        "s_combined": result.combined.s_combined,
        "inference_count": result.combined.inference_count,
        "stage_mode": cfg.stage_mode,
        "subscores_s1": _subscores_dict(result.stage1.subscores),
        "raw_subscores_s1": _subscores_dict(result.stage1.raw_subscores),
    }
    if result.stage2 is not None:
        rec["stage2"] = [
            {
                "index": o.index,
                "score": o.score,
                "x": list(o.position),
                "w": o.weight_raw,
                "w_hat": o.weight,
                "subscores": _subscores_dict(o.subscores),
            }
            for o in result.stage2.observations
        ]
        rec["stage2_failed_indices"] = list(result.stage2.failed_indices)
    return rec


def _closed_loop_task(args) -> dict:
    (scenario_path, spec, metrics_name, chash) = args
    sc = load_scenario(scenario_path)
    planner = build_planner(spec)
    weights = MetricWeights.named(metrics_name)
    base = {"planner": spec["id"], "scenario": sc.id, "config_hash": chash}
    result = run_closed_loop(sc, planner, weights)
    if result.cls is None:
        return {**base, "failed": True, "error": result.failure, "inference_count": result.inference_count}
    return {
        **base,
        "failed": False,
        "cls": result.cls,
        "inference_count": result.inference_count,
        "subscores": _subscores_dict(result.subscores),
        "raw_subscores": _subscores_dict(result.raw_subscores),
    }


def _run_parallel(task_fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [task_fn(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task_fn, tasks, chunksize=1))


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    speeds = {"low": 5.0, "medium": 10.0, "high": 14.0}
    combos = []
    k = 0
    while len(combos) < args.count:
        layout = LAYOUTS[k % len(LAYOUTS)]
        traffic = TRAFFIC_LEVELS[(k // len(LAYOUTS)) % len(TRAFFIC_LEVELS)]
        speed = list(speeds.values())[(k // (len(LAYOUTS) * len(TRAFFIC_LEVELS))) % 3]
        combos.append((layout, traffic, speed, args.seed + k))
        k += 1

    scenarios = []
    retries = 0
    for layout, traffic, speed, seed in combos:
        attempt = 0
        while True:
            try:
                sc = generate_scenario(GeneratorConfig(layout, traffic, speed, seed + 10007 * attempt))
                break
            except GenerationError:
                attempt += 1
                retries += 1
                if attempt > 5:
                    raise
        scenarios.append(sc)
        save_scenario(sc, os.path.join(args.out, f"{sc.id}.json"))

    bank = TrajectoryBank.from_scenarios(scenarios)
    discards = 0
    for sc in scenarios:
        obs = build_stage2_set(sc, bank)
        if obs is None:
            discards += 1
        save_stage2(os.path.join(args.out, f"{sc.id}.stage2"), sc.id, obs)
    print(f"generated {len(scenarios)} scenarios ({retries} retries), "
          f"{len(scenarios) - discards} with stage-2 sets, {discards} discarded")
    return EXIT_OK


def cmd_stage2(args) -> int:
    paths = sorted(
        os.path.join(args.scenario_dir, f)
        for f in os.listdir(args.scenario_dir)
        if f.endswith(".json") and not f.endswith(".stage2")
    )
    scenarios = [load_scenario(p) for p in paths]
    if not scenarios:
        print("no scenario files found", file=sys.stderr)
        return EXIT_DATA
    bank = TrajectoryBank.from_scenarios(scenarios)
    discards = 0
    for sc in scenarios:
        obs = build_stage2_set(sc, bank)
        if obs is None:
            discards += 1
        save_stage2(os.path.join(args.scenario_dir, f"{sc.id}.stage2"), sc.id, obs)
    print(f"stage-2 sets for {len(scenarios)} scenes, {discards} discarded")
    return EXIT_OK


def _manifest_from_args(args) -> ExperimentManifest:
    overrides = {}
    for key in ("sigma2", "stage_mode", "weighting", "knn_k", "density", "metrics", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return load_manifest(args.manifest, overrides)


def _evaluate_common(args, kind: str) -> int:
    manifest = _manifest_from_args(args)
    chash = config_hash(manifest, kind)
    existing = read_records(args.out)
    done = {(r["planner"], r["scenario"], r["config_hash"]) for r in existing}

    tasks = []
    skipped_scenes = []
    for spec in manifest.planners:
        for sid in manifest.scenarios:
            if (spec["id"], sid, chash) in done:
                continue
            scenario_path = os.path.join(manifest.scenario_dir, f"{sid}.json")
            if kind == "pseudo":
                stage2_path = os.path.join(manifest.scenario_dir, f"{sid}.stage2")
                if manifest.stage_mode != "stage1" and not os.path.exists(stage2_path):
                    skipped_scenes.append(sid)
                    continue
                tasks.append(
                    (
                        scenario_path,
                        stage2_path,
                        dict(spec),
                        {
                            "sigma2": manifest.sigma2,
                            "stage_mode": manifest.stage_mode,
                            "weighting": manifest.weighting,
                            "knn_k": manifest.knn_k,
                        },
                        manifest.metrics,
                        chash,
                        manifest.density,
                    )
                )
            else:
                tasks.append((scenario_path, dict(spec), manifest.metrics, chash))

    task_fn = _pseudo_task if kind == "pseudo" else _closed_loop_task
    new_records = _run_parallel(task_fn, tasks, args.workers)
    write_records(args.out, existing + new_records)

    all_records = existing + new_records
    failures = sum(1 for r in all_records if r.get("failed"))
    total = len(all_records)
    print(f"{kind}: {total} records ({len(new_records)} new), {failures} failed planner runs")
    if skipped_scenes:
        print(f"skipped discarded scenes: {sorted(set(skipped_scenes))}")
    if total and failures / total > args.failure_threshold:
        print(f"planner failure fraction {failures / total:.2f} exceeds threshold", file=sys.stderr)
        return EXIT_PLANNER_FAILURES
    return EXIT_OK


def cmd_evaluate(args) -> int:
    return _evaluate_common(args, "pseudo")


def cmd_closed_loop(args) -> int:
    return _evaluate_common(args, "closed")


def _per_planner_means(records: list, field: str) -> dict:
    by_planner: dict = {}
    for rec in records:
        if rec.get("failed"):
            continue
        by_planner.setdefault(rec["planner"], {})[rec["scenario"]] = rec[field]
    return by_planner


def correlation_report(pseudo_records: list, closed_records: list) -> dict:
    """Per-planner-mean correlation between pseudo-simulation scores and the
    closed-loop score; raises GridMismatch when the grids differ."""
    pseudo = _per_planner_means(pseudo_records, "s_combined")
    closed = _per_planner_means(closed_records, "cls")
    if set(pseudo) != set(closed):
        raise GridMismatch(
            f"planner sets differ: {sorted(set(pseudo) ^ set(closed))}"
        )
    points = []
    for planner in sorted(pseudo):
        common = sorted(set(pseudo[planner]) & set(closed[planner]))
        if set(pseudo[planner]) != set(closed[planner]):
            raise GridMismatch(f"scenario sets differ for planner '{planner}'")
        if not common:
            raise GridMismatch(f"no common scenarios for planner '{planner}'")
        points.append(
            {
                "planner": planner,
                "pseudo_mean": float(np.mean([pseudo[planner][s] for s in common])),
                "closed_mean": float(np.mean([closed[planner][s] for s in common])),
                "scenario_count": len(common),
            }
        )
    xs = [p["pseudo_mean"] for p in points]
    ys = [p["closed_mean"] for p in points]
    r = pearson_r(xs, ys)
    rho = spearman_rho(xs, ys)
    pseudo_inferences = [r_["inference_count"] for r_ in pseudo_records if not r_.get("failed")]
    closed_inferences = [r_["inference_count"] for r_ in closed_records if not r_.get("failed")]
    mean_ratio = float(np.mean([80.0 / n for n in pseudo_inferences])) if pseudo_inferences else None
    return {
        "pearson_r": r,
        "spearman_rho": rho,
        "r_squared": r * r,
        "count": len(points),
        "points": points,
        "pseudo_inference_counts": sorted(set(pseudo_inferences)),
        "closed_inference_counts": sorted(set(closed_inferences)),
        "mean_inference_ratio": mean_ratio,
    }


def cmd_correlate(args) -> int:
    closed_records = read_records(args.closed)
    if not closed_records:
        print(f"no closed-loop records in {args.closed}", file=sys.stderr)
        return EXIT_DATA
    reports = []
    for pseudo_path in args.pseudo:
        pseudo_records = read_records(pseudo_path)
        if not pseudo_records:
            print(f"no pseudo records in {pseudo_path}", file=sys.stderr)
            return EXIT_DATA
        rep = correlation_report(pseudo_records, closed_records)
        rep["pseudo_file"] = pseudo_path
        reports.append(rep)
    doc = reports[0] if len(reports) == 1 else {"configs": reports}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if args.scatter:
        with open(args.scatter, "w", encoding="utf-8") as fh:
            fh.write("config,planner,pseudo_mean,closed_mean\n")
            for rep in reports:
                for p in rep["points"]:
                    fh.write(
                        f"{rep['pseudo_file']},{p['planner']},{p['pseudo_mean']!r},{p['closed_mean']!r}\n"
                    )
    for rep in reports:
        print(
            f"{rep['pseudo_file']}: r={rep['pearson_r']:.4f} rho={rep['spearman_rho']:.4f} "
            f"R^2={rep['r_squared']:.4f} over {rep['count']} planners"
        )
    return EXIT_OK


def cmd_report(args) -> int:
    records = [r for r in read_records(args.results) if not r.get("failed")]
    if not records:
        print(f"no usable records in {args.results}", file=sys.stderr)
        return EXIT_DATA

    is_pseudo = "s_combined" in records[0]
    by_planner: dict = {}
    for rec in records:
        by_planner.setdefault(rec["planner"], []).append(rec)

    rows = []
    for planner in sorted(by_planner):
        recs = by_planner[planner]
        row = {"planner": planner}
        if is_pseudo:
            for f in ALL_FIELDS:
                row[f"{f}_s1"] = float(np.mean([r["subscores_s1"][f] for r in recs]))
                s2_vals = []
                for r in recs:
                    for o in r.get("stage2", []):
                        s2_vals.append((o["w_hat"], o["subscores"][f]))
                if s2_vals:
                    w = np.array([v[0] for v in s2_vals])
                    x = np.array([v[1] for v in s2_vals])
                    row[f"{f}_s2"] = float((w * x).sum() / w.sum())
                else:
                    row[f"{f}_s2"] = float("nan")
            row["epdms"] = float(np.mean([r["s_combined"] for r in recs]))
        else:
            for f in ALL_FIELDS:
                row[f"{f}_s1"] = float(np.mean([r["subscores"][f] for r in recs]))
            row["epdms"] = float(np.mean([r["cls"] for r in recs]))
        rows.append(row)

    csv_path = args.out + ".csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        cols = ["planner"] + [c for c in rows[0] if c != "planner"]
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in cols) + "\n")

    lines = []
    planners = [row["planner"] for row in rows]
    lines.append("Metric   Stage  " + "".join(f"{p[:14]:>16s}" for p in planners))
    for f in ALL_FIELDS:
        for stage in (["s1", "s2"] if is_pseudo else ["s1"]):
            vals = []
            for row in rows:
                v = row.get(f"{f}_{stage}", float("nan"))
                vals.append(f"{100.0 * v:>15.1f} " if not math.isnan(v) else f"{'-':>16s}")
            lines.append(f"{f.upper():8s} {stage.upper():5s} " + "".join(vals))
    lines.append("EPDMS           " + "".join(f"{100.0 * row['epdms']:>15.1f} " for row in rows))
    table = "\n".join(lines)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pseudosim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate scenarios plus stage-2 sets")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("stage2", help="rebuild stage-2 sets for a scenario directory")
    p.add_argument("scenario_dir")
    p.set_defaults(fn=cmd_stage2)

    for name, fn in (("evaluate", cmd_evaluate), ("closed-loop", cmd_closed_loop)):
        p = sub.add_parser(name, help=f"run {name} for a manifest")
        p.add_argument("manifest")
        p.add_argument("--out", required=True)
        p.add_argument("--workers", type=int, default=0)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--failure-threshold", type=float, default=0.25)
        if name == "evaluate":
            p.add_argument("--sigma2", type=float, default=None)
            p.add_argument("--stage-mode", dest="stage_mode", default=None,
                           choices=("product", "mean", "hybrid", "stage1"))
            p.add_argument("--weighting", default=None, choices=("gaussian", "uniform", "knn"))
            p.add_argument("--knn-k", dest="knn_k", type=int, default=None)
            p.add_argument("--density", type=float, default=None, choices=(1.0, 0.5, 0.25))
        p.add_argument("--metrics", default=None, choices=("full", "reduced"))
        p.set_defaults(fn=fn)

    p = sub.add_parser("correlate", help="correlate pseudo results against closed loop")
    p.add_argument("--pseudo", nargs="+", required=True)
    p.add_argument("--closed", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scatter", default=None)
    p.set_defaults(fn=cmd_correlate)

    p = sub.add_parser("report", help="per-planner subscore table from a results file")
    p.add_argument("results")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "workers", None) == 0:
        args.workers = os.cpu_count() or 1
    try:
        return args.fn(args)
    except (ParseError, SchemaError, ValidationError, GridMismatch, DegenerateData, FileNotFoundError, NotADirectoryError, PermissionError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
