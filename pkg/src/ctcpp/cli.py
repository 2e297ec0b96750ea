"""Command-line entry point: ``ctcpp validate | run | compare``.

Exit codes: 0 success, 2 invalid configuration or input, 3 file-system error.
Log verbosity comes from ``CTCPP_LOG_LEVEL`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import io as cio
from .errors import ConfigurationError
from .metrics import EnergyModel, point_filter, report
from .mission import CT_CPP, TF_CPP, MissionConfig, max_delta_h, max_lap_width, run_ct_cpp, run_tf_cpp
from .occupancy import compute_l_occ
from .sensor import beams_per_cell
from .terrain import generate_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

log = logging.getLogger("ctcpp")


class InputError(ValueError):
    """Malformed or inconsistent input files (exit code 2)."""


@dataclass(frozen=True)
class ExportOptions:
    artifacts: str = "all"  # "all" | "metrics"
    include_runtime: bool = False
    filter_points: bool = False
    filter_pitch: float = 1.0

    def to_dict(self) -> dict:
        return {
            "artifacts": self.artifacts,
            "include_runtime": self.include_runtime,
            "filter_points": self.filter_points,
            "filter_pitch": self.filter_pitch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExportOptions":
        base = cls()
        opts = cls(
            artifacts=d.get("artifacts", base.artifacts),
            include_runtime=bool(d.get("include_runtime", base.include_runtime)),
            filter_points=bool(d.get("filter_points", base.filter_points)),
            filter_pitch=float(d.get("filter_pitch", base.filter_pitch)),
        )
        if opts.artifacts not in ("all", "metrics"):
            raise ConfigurationError(f"export.artifacts must be 'all' or 'metrics', not {opts.artifacts!r}")
        return opts


@dataclass(frozen=True)
class Document:
    """Everything one JSON config file holds."""

    mission: MissionConfig
    energy: EnergyModel = field(default_factory=EnergyModel)
    export: ExportOptions = field(default_factory=ExportOptions)

    def to_dict(self) -> dict:
        d = self.mission.to_dict()
        d["mission"]["energy"] = self.energy.to_dict()
        d["export"] = self.export.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(d) - {"scene", "sonar", "planner", "mission", "export"}
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        try:
            return cls(
                MissionConfig.from_dict(d),
                EnergyModel.from_dict(d.get("mission", {}).get("energy", {})),
                ExportOptions.from_dict(d.get("export", {})),
            )
        except (TypeError, KeyError) as exc:
            raise ConfigurationError(f"malformed config: {exc}") from exc


def load_document(path) -> Document:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return Document.from_dict(raw)


@dataclass(frozen=True)
class RunManifest:
    config_path: Path
    out_dir: Path
    planners: tuple[str, ...]
    seeds: tuple[int, ...]
    artifacts: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("seed list must not be empty")


def derived_quantities(cfg: MissionConfig) -> dict:
    sonar = cfg.sonar
    b = beams_per_cell(sonar, cfg.w, cfg.delta_h)
    b_total = (cfg.w / cfg.v) / sonar.sample_interval * b
    return {
        "lap_width_limit_m": max_lap_width(sonar.range, sonar.aperture),
        "delta_h_bound_m": max_delta_h(sonar.range, sonar.aperture, cfg.w),
        "beams_per_cell": b,
        "beams_per_cell_per_lap": b_total,
        "l_occ": compute_l_occ(sonar, cfg.w, cfg.delta_h, cfg.v, cfg.log_base, cfg.threat_probability),
    }


def cmd_validate(args) -> int:
    doc = load_document(args.config)
    cfg = doc.mission
    try:
        limit = max_lap_width(cfg.sonar.range, cfg.sonar.aperture)
        print(f"lap width limit        w < {limit:.4f} m   (w = {cfg.w})")
        bound = max_delta_h(cfg.sonar.range, cfg.sonar.aperture, cfg.w)
        print(f"plane spacing bound    delta_h <= {bound:.4f} m   (delta_h = {cfg.delta_h})")
        # the spacing bound is always audited here, even when runs are allowed to bypass it
        if not 0 < cfg.delta_h <= bound:
            raise ConfigurationError(
                f"plane spacing must satisfy 0 < delta_h <= sqrt(r^2 - 2.25 w^2) - 1.5 w cot(theta/2) "
                f"= {bound:.4f}; got {cfg.delta_h}"
            )
        cfg.check()
        q = derived_quantities(cfg)
        print(f"beams per cell         B = {q['beams_per_cell']:.4f}")
        print(f"per lap                B_total = {q['beams_per_cell_per_lap']:.4f}")
        print(f"log-odds step          l_occ = {q['l_occ']:.6f}")
    except ConfigurationError as exc:
        print(f"INVALID: {exc}")
        return EXIT_CONFIG
    print("OK")
    return EXIT_OK


def _export_mission(out: Path, trace, tree, artifacts: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if artifacts != "all":
        return
    cio.write_trajectory_csv(out / "trajectory.csv", trace.times, trace.poses)
    cio.write_xyz(out / "cloud.xyz", trace.point_cloud)
    for lv, grid in sorted(trace.poms.items()):
        cio.write_pom(out / f"pom_plane{lv}.pgm", grid)
    for lv, sym in sorted(trace.symbolic.items()):
        cio.write_symbolic(out / f"symbolic_plane{lv}.txt", sym)
    if tree is not None:
        cio.write_tree(out / "tree.json", out / "tree.dot", tree)
        cio.write_json(out / "events.json", trace.events)


def run_seed(doc_dict: dict, seed: int, planners: tuple[str, ...], out_dir: str, artifacts: str) -> dict:
    """Run every requested planner on one seed; returns ``{planner: metrics}``."""
    doc = Document.from_dict(doc_dict)
    cfg = doc.mission.with_seed(seed)
    hm = generate_scene(cfg.scene)
    results = {}
    for planner in planners:
        t0 = time.perf_counter()
        if planner == CT_CPP:
            trace, tree = run_ct_cpp(cfg, hm)
        else:
            trace, tree = run_tf_cpp(cfg, hm), None
        runtime = time.perf_counter() - t0
        cloud = point_filter(trace.point_cloud, doc.export.filter_pitch) if doc.export.filter_points else None
        metrics = report(trace, hm, tree, doc.energy,
                         runtime if doc.export.include_runtime else None, cloud)
        dest = Path(out_dir) / f"seed_{seed:04d}" / planner
        _export_mission(dest, trace, tree, artifacts)
        cio.write_json(dest / "metrics.json", metrics)
        results[planner] = metrics
        log.info("seed %d %s: %.2f s", seed, planner, runtime)
    return results


def cmd_run(args) -> int:
    doc = load_document(args.config)
    doc.mission.check()
    seeds = _seed_list(args)
    planners = {"ct": (CT_CPP,), "tf": (TF_CPP,), "both": (CT_CPP, TF_CPP)}[args.planner]
    manifest = RunManifest(Path(args.config), Path(args.out), planners, seeds,
                           args.export or doc.export.artifacts, args.workers)
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    cio.write_json(manifest.out_dir / "config.json", doc.to_dict())

    payload = doc.to_dict()
    jobs = [(payload, s, planners, str(manifest.out_dir), manifest.artifacts) for s in seeds]
    if manifest.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=manifest.workers) as pool:
            results = list(pool.map(run_seed, *zip(*jobs)))
    else:
        results = [run_seed(*job) for job in jobs]

    for seed, res in zip(seeds, results):
        parts = [f"{p}: L={m['trajectory_length_m']:.1f} m E={m['energy_J']:.4g} J RMSE={m['rmse_normalized']:.4f}"
                 for p, m in res.items()]
        print(f"seed {seed}: " + "; ".join(parts))
    if len(planners) == 2:
        rows = compare_dir(manifest.out_dir)
        summary = format_comparison(rows)
        (manifest.out_dir / "comparison.txt").write_text(summary)
        cio.write_json(manifest.out_dir / "comparison.json", rows)
        print(summary, end="")
    return EXIT_OK


COMPARED = (
    ("trajectory_length_m", "length"),
    ("energy_J", "energy"),
    ("rmse_normalized", "rmse"),
)


def compare_dir(root) -> list[dict]:
    """Per-seed deltas (CT minus TF) read from ``seed_*/{ct,tf}/metrics.json``."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    seeds = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("seed_"))
    if not seeds:
        raise InputError(f"no seed_* directories under {root}")
    rows = []
    for sd in seeds:
        seed = int(sd.name.split("_", 1)[1])
        files = {p: sd / p / "metrics.json" for p in (CT_CPP, TF_CPP)}
        missing = [p for p, f in files.items() if not f.is_file()]
        if missing:
            raise InputError(f"seed {seed}: missing metrics for planner(s) {', '.join(missing)}")
        ct, tf = (cio.read_json(files[p]) for p in (CT_CPP, TF_CPP))
        row = {"seed": seed}
        for key, name in COMPARED:
            row[f"ct_{name}"] = ct[key]
            row[f"tf_{name}"] = tf[key]
            row[f"delta_{name}"] = ct[key] - tf[key]
        row["ct_worse"] = [name for key, name in COMPARED if ct[key] > tf[key]]
        rows.append(row)
    return rows


def format_comparison(rows: list[dict]) -> str:
    head = f"{'seed':>6} {'d_length_m':>12} {'d_energy_J':>14} {'d_rmse':>10}  flags"
    lines = [head]
    for r in rows:
        flag = ("CT worse: " + ", ".join(r["ct_worse"])) if r["ct_worse"] else ""
        lines.append(
            f"{r['seed']:>6} {r['delta_length']:>12.1f} {r['delta_energy']:>14.4g} {r['delta_rmse']:>10.5f}  {flag}"
        )
    n = len(rows)
    wins = {name: sum(r[f"delta_{name}"] < 0 for r in rows) for _, name in COMPARED}
    mean = {name: sum(r[f"delta_{name}"] for r in rows) / n for _, name in COMPARED}
    lines.append(
        f"{'mean':>6} {mean['length']:>12.1f} {mean['energy']:>14.4g} {mean['rmse']:>10.5f}"
    )
    lines.append(
        "CT better in: " + ", ".join(f"{name} {wins[name]}/{n}" for _, name in COMPARED)
    )
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    rows = compare_dir(args.dir)
    print(format_comparison(rows), end="")
    return EXIT_OK


def _seed_list(args) -> tuple[int, ...]:
    if args.seed_list:
        try:
            seeds = tuple(int(s) for s in args.seed_list.split(",") if s.strip())
        except ValueError as exc:
            raise ConfigurationError(f"bad --seed-list: {exc}") from exc
    else:
        seeds = tuple(range(args.seeds))
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigurationError("need at least one non-negative seed")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctcpp", description="Layered 3D coverage path planning simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config against the sensing bounds")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run missions and export artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--planner", choices=("ct", "tf", "both"), default="both")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--seeds", type=int, default=1, help="run seeds 0 .. N-1")
    g.add_argument("--seed-list", help="comma-separated seeds")
    r.add_argument("--export", choices=("all", "metrics"), default=None)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="tabulate CT vs TF deltas from a run directory")
    c.add_argument("dir")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CTCPP_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
