"""Command-line experiments: dataset, calibration, training, evaluation, episodes, report.

Every command reads its inputs from, and writes its outputs to, one run
directory (``--out``), so the commands compose through files only::

    palmgrasp gen-dataset --out run/ --seed 0
    palmgrasp calibrate   --out run/
    palmgrasp train       --out run/
    palmgrasp eval        --out run/
    palmgrasp episodes    --out run/
    palmgrasp report      --out run/

``palmgrasp all`` chains them and ``palmgrasp --check`` runs the acceptance
suite.  Exit codes: 0 success, 2 invalid config, 3 missing upstream
artifact, 4 acceptance failure.

Config files are either a JSON object or ``key = value`` lines, where each
value is JSON (bare words are read as strings), ``#`` starts a comment and
dotted keys address nested tables, e.g. ``sim.spread_sigma = 4.0``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .control import (
    ABLATION_GROUPS, EpisodeLog, Perturbation, StrategyConfig, loss_detection_depths, make_scene,
    run_episode, summary_csv,
)
from .datasets import generate_dataset, read_dataset
from .geometry import default_catalog, object_id
from .pose_models import (
    GroundTruthEstimator, ModelSetSpec, TrainConfig, load_model, mae_csv, predictions_csv,
    predictions_table, read_predictions_csv, rows_from_predictions, save_model, train_model_set,
)
from .similarity import Thresholds, calibrate, config_hash
from .tactile import PalmGeometry, RenderConfig, TactileSim

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class MissingArtifact(FileNotFoundError):
    def __init__(self, path, hint: str):
        super().__init__(f"missing {path}; {hint}")
        self.path, self.hint = Path(path), hint


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    seed: int = 0
    n_train: int = 1000  # samples per training object
    n_test: int = 200  # samples per test object
    palm: dict = field(default_factory=dict)  # PalmGeometry overrides
    sim: dict = field(default_factory=dict)  # spread_sigma, spread_gain, field_of_view
    n_contacts: int = 50  # calibration contacts per training object
    n_trials: int = 100  # calibration pull trials
    variants: list = field(default_factory=lambda: ["M1", "M2", "M3"])
    estimator: str = "knn_oracle"  # or "learned"
    episode_model: str = "M3"
    groups: list = field(default_factory=lambda: list(ABLATION_GROUPS))
    n_episodes: int = 30  # seeds per group
    random_tap: bool = True  # extra full-strategy batch with a random first tap direction
    pull: dict = field(default_factory=lambda: {"rate": 0.05, "total": 2.0, "settle_ticks": 20})

    def __post_init__(self):
        for name in ("n_train", "n_test", "n_contacts", "n_trials"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not isinstance(self.n_episodes, int) or self.n_episodes < 0:
            raise ConfigError("n_episodes must be a non-negative integer")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        bad = [g for g in self.groups if g not in ABLATION_GROUPS]
        if bad:
            raise ConfigError(f"unknown episode groups {bad}; choose from {list(ABLATION_GROUPS)}")
        for v in list(self.variants) + [self.episode_model]:
            if v not in ("M1", "M2", "M3"):
                raise ConfigError(f"unknown model set {v!r}")
        if self.episode_model not in self.variants:
            raise ConfigError("episode_model must be one of the trained variants")
        if self.estimator not in ("knn_oracle", "learned"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        unknown = set(self.sim) - {"spread_sigma", "spread_gain", "field_of_view"}
        if unknown:
            raise ConfigError(f"unknown sim keys {sorted(unknown)}")
        try:
            self.make_sim()
            Perturbation(**self.pull)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def make_sim(self) -> TactileSim:
        s = dict(self.sim)
        fov = s.pop("field_of_view", None)
        rcfg = RenderConfig() if fov is None else RenderConfig(field_of_view=float(fov))
        return TactileSim(PalmGeometry(**self.palm), rcfg, **s)

    def snapshot(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @property
    def hash(self) -> str:
        return config_hash(asdict(self))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> dict:
    """JSON object, or ``key = value`` lines with JSON values."""
    if text.lstrip().startswith("{"):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be an object")
        return d
    out: dict = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        node = out
        *head, last = key.split(".")
        for k in head:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {ln}: {key} conflicts with a scalar")
        node[last] = _parse_value(val)
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    d = parse_config_text(Path(path).read_text()) if path else {}
    d.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        return ExperimentConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def write_snapshot(out: Path, cfg: ExperimentConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.snapshot())
    (out / "config.hash").write_text(cfg.hash + "\n")


def _need(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifact(path, hint)
    return path


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_gen_dataset(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    write_snapshot(out, cfg)
    root = out / "dataset"
    generate_dataset(root, default_catalog(), {"train": cfg.n_train, "test": cfg.n_test}, seed=cfg.seed,
                     sim=cfg.make_sim(), config_hash=cfg.hash, workers=workers)
    return root


def cmd_calibrate(cfg: ExperimentConfig, out: Path) -> Thresholds:
    write_snapshot(out, cfg)
    th = calibrate(cfg.make_sim(), default_catalog()["train"], cfg.n_contacts, cfg.n_trials, seed=cfg.seed)
    th.save(out / "thresholds.json")
    return th


def cmd_train(cfg: ExperimentConfig, out: Path) -> list[Path]:
    root = _need(out / "dataset" / "meta.json", "run `palmgrasp gen-dataset` first").parent
    write_snapshot(out, cfg)
    ds = read_dataset(root, load_images=cfg.estimator == "learned", load_markers=True, splits=("train",))
    (out / "models").mkdir(exist_ok=True)
    paths = []
    for v in cfg.variants:
        ms = train_model_set(ModelSetSpec(v), ds.splits["train"], TrainConfig(estimator_kind=cfg.estimator),
                             seed=cfg.seed, config_hash=cfg.hash)
        p = out / "models" / f"{v}.pgm"
        save_model(ms, p)
        paths.append(p)
    return paths


def cmd_eval(cfg: ExperimentConfig, out: Path, oracle: bool = False) -> list[Path]:
    """MAE per test object; ``oracle`` scores ground-truth predictions instead of the models."""
    root = _need(out / "dataset" / "meta.json", "run `palmgrasp gen-dataset` first").parent
    write_snapshot(out, cfg)
    ds = read_dataset(root, load_images=cfg.estimator == "learned", load_markers=True, splits=("test",))
    test = ds.splits["test"]
    (out / "eval").mkdir(exist_ok=True)
    paths = []
    for v in cfg.variants:
        if oracle:
            model = GroundTruthEstimator(v)
        else:
            model = load_model(_need(out / "models" / f"{v}.pgm", "run `palmgrasp train` first"))
        table = predictions_table(model, test)
        tag = f"{v}_oracle" if oracle else v
        (out / "eval" / f"predictions_{tag}.csv").write_text(predictions_csv(table))
        p = out / "eval" / f"mae_{tag}.csv"
        p.write_text(mae_csv(rows_from_predictions(table)))
        paths.append(p)
    return paths


_WORKER: dict = {}


def _init_worker(sim, model, shapes):
    # large read-only state is sent once per worker, not once per job
    _WORKER.update(sim=sim, model=model, shapes=shapes)


def _episode_job(args):
    shape_idx, scfg, pull, seed, group, tap = args
    sim, model, shape = _WORKER["sim"], _WORKER["model"], _WORKER["shapes"][shape_idx]
    rng = np.random.default_rng(seed)
    scene = make_scene(sim, shape, rng)
    tap_dir = float(rng.uniform(-180.0, 180.0)) if tap == "random" else None
    log = run_episode(scene, model, scfg, Perturbation(**pull), seed=seed, group=group, rng=rng,
                      tap_direction=tap_dir)
    return object_id(shape), log.to_jsonl()


def episode_batches(cfg: ExperimentConfig) -> list[tuple[str, str, tuple[bool, bool, bool]]]:
    """(name, tap policy, stage flags); the same seeds are used in every batch."""
    out = [(g, "fixed", ABLATION_GROUPS[g]) for g in cfg.groups]
    if cfg.random_tap and cfg.n_episodes:
        out.append(("+loss/random-tap", "random", ABLATION_GROUPS["+loss"]))
    return out


def _slug(name: str) -> str:
    return name.replace("+", "plus-").replace("/", "_")


def cmd_episodes(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    th = Thresholds.load(_need(out / "thresholds.json", "run `palmgrasp calibrate` first"))
    model = load_model(_need(out / "models" / f"{cfg.episode_model}.pgm", "run `palmgrasp train` first"))
    write_snapshot(out, cfg)
    sim = cfg.make_sim()
    shapes = default_catalog()["test"]
    base = StrategyConfig(th)
    seeds = [cfg.seed * 1_000_000 + i for i in range(cfg.n_episodes)]
    jobs, names = [], []
    for name, tap, flags in episode_batches(cfg):
        scfg = base.with_stages(*flags)
        for i, seed in enumerate(seeds):
            jobs.append((i % len(shapes), scfg, cfg.pull, seed, name, tap))
            names.append((name, seed))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(sim, model, shapes)) as ex:
            results = list(ex.map(_episode_job, jobs, chunksize=4))
    else:
        _init_worker(sim, model, shapes)
        results = [_episode_job(j) for j in jobs]

    root = out / "episodes"
    root.mkdir(exist_ok=True)
    for old in root.glob("*/*.jsonl"):
        old.unlink()
    rows = []
    for (name, seed), (oid, text) in zip(names, results):
        d = root / _slug(name)
        d.mkdir(exist_ok=True)
        (d / f"{seed:08d}_{oid}.jsonl").write_text(text)
        rows.append(EpisodeLog.from_jsonl(text))
    (root / "summary.csv").write_text(summary_csv(rows))
    return root


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def _read_logs(root: Path) -> list[EpisodeLog]:
    return [EpisodeLog.from_jsonl(p.read_text()) for p in sorted(root.glob("*/*.jsonl"))]


def histogram_lines(values, lo: float, hi: float, width: float) -> list[str]:
    edges = np.arange(lo, hi + width / 2, width)
    counts, _ = np.histogram(np.clip(values, lo, hi), bins=edges)
    lines = ["| depth (mm) | count | |", "|---|---:|---|"]
    for a, b, c in zip(edges[:-1], edges[1:], counts):
        lines.append(f"| {a:.1f}–{b:.1f} | {c} | {'#' * int(c)} |")
    return lines


def _f(v, nd=3):
    return "n/a" if v is None or (isinstance(v, float) and not math.isfinite(v)) else f"{v:.{nd}f}"


def render_report(out: Path) -> str:
    """Markdown summary of whatever artifacts exist under ``out``."""
    lines = ["# Experiment report", ""]
    snap = out / "config.json"
    if snap.exists():
        cfg = json.loads(snap.read_text())
        lines += [f"Config hash: `{config_hash(cfg)}`", f"Seed: {cfg.get('seed')}", ""]
    else:
        lines += ["No config snapshot found.", ""]
    th = out / "thresholds.json"
    if th.exists():
        t = Thresholds.load(th)
        lines += ["## Thresholds", "", f"- contact: {t.contact:.6f}", f"- loss of contact: {t.loss_of_contact:.6f}", ""]

    # pose estimation
    lines += ["## Pose estimation MAE", ""]
    preds = sorted((out / "eval").glob("predictions_M?.csv")) if (out / "eval").exists() else []
    evals = {p.stem.split("_", 1)[1]: rows_from_predictions(read_predictions_csv(p)) for p in preds}
    if not evals:
        lines += ["No evaluation results.", ""]
    else:
        lines += ["| model set | object | dimension | MAE | extreme-band MAE | mid-band MAE |",
                  "|---|---|---|---:|---:|---:|"]
        for v, rows in evals.items():
            for r in rows:
                unit = "deg" if r.dimension == "yaw" else "mm"
                lines.append(f"| {v} | {r.object_id} | {r.dimension} ({unit}) | {_f(r.mae)} | "
                             f"{_f(r.extreme_band_mae)} | {_f(r.mid_band_mae)} |")
        lines.append("")
        if "M2" in evals and "M3" in evals:
            lines += ["## Yaw aliasing near the range boundary", "",
                      "| object | M2 extreme | M2 mid | M2 ratio | M3 extreme |", "|---|---:|---:|---:|---:|"]
            m3 = {r.object_id: r for r in evals["M3"] if r.dimension == "yaw"}
            for r in evals["M2"]:
                if r.dimension != "yaw" or r.extreme_band_mae is None or r.object_id not in m3:
                    continue
                ratio = r.extreme_band_mae / r.mid_band_mae if r.mid_band_mae else math.inf
                lines.append(f"| {r.object_id} | {_f(r.extreme_band_mae)} | {_f(r.mid_band_mae)} | "
                             f"{_f(ratio, 1)} | {_f(m3[r.object_id].extreme_band_mae)} |")
            lines.append("")

    # episodes
    root = out / "episodes"
    logs = _read_logs(root) if root.exists() else []
    lines += ["## Episodes", ""]
    if not logs:
        lines += ["No episodes.", ""]
        return "\n".join(lines)
    by_group: dict[str, list[EpisodeLog]] = {}
    for log in logs:
        by_group.setdefault(log.group, []).append(log)
    order = [g for g in ABLATION_GROUPS if g in by_group] + sorted(g for g in by_group if g not in ABLATION_GROUPS)
    lines += ["### Ablation", "", "| group | episodes | held | mean final error (mm) | mean final error (deg) |",
              "|---|---:|---:|---:|---:|"]
    for g in order:
        ls = by_group[g]
        mm = np.mean([l.final_err_mm for l in ls])
        deg = np.mean([l.final_err_deg for l in ls])
        held = sum(l.outcome == "held" for l in ls)
        lines.append(f"| {g} | {len(ls)} | {held} | {_f(mm)} | {_f(deg)} |")
    lines.append("")
    outcomes: dict[str, int] = {}
    for l in logs:
        outcomes[l.outcome] = outcomes.get(l.outcome, 0) + 1
    lines += ["Outcomes: " + ", ".join(f"{k} {v}" for k, v in sorted(outcomes.items())), ""]

    contact = [l.detection_depth_mm for l in logs
               if l.group != "baseline" and math.isfinite(l.detection_depth_mm)]
    first = []
    for l in logs:
        for e in l.events:
            if e["kind"] == "ssim_reading" and e.get("stage") == "contact_detect" and e.get("depth") is not None:
                first.append(e["depth"])
                break
    loss = [d for l in logs for d in loss_detection_depths(l)]
    lines += ["### Light-contact detection depth", ""]
    if first:
        lines += [f"n = {len(first)}, mean {np.mean(first):.3f} mm, min {np.min(first):.3f}, "
                  f"max {np.max(first):.3f}", ""] + histogram_lines(first, 0.0, 5.0, 0.5) + [""]
    else:
        lines += ["No detections.", ""]
    lines += ["### Loss-of-contact detection depth", ""]
    if loss:
        lines += [f"n = {len(loss)}, mean {np.mean(loss):.3f} mm, min {np.min(loss):.3f}", ""]
        lines += histogram_lines(loss, 0.0, 5.0, 0.5) + [""]
    else:
        lines += ["No loss-of-contact events.", ""]
    if contact:
        lines += [f"Depth at grasp (stages with contact detection): mean {np.mean(contact):.3f} mm", ""]
    return "\n".join(lines)


def cmd_report(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / "report.md"
    p.write_text(render_report(out))
    return p


def run_all(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    cmd_gen_dataset(cfg, out, workers)
    cmd_calibrate(cfg, out)
    cmd_train(cfg, out)
    cmd_eval(cfg, out)
    cmd_episodes(cfg, out, workers)
    return cmd_report(out)


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or 'key = value' config file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", default="run", help="run directory (default: ./run)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="parallel worker processes")
    common.add_argument("--n-train", type=int, dest="n_train", help="samples per training object")
    common.add_argument("--check", action="store_true", help="run the acceptance suite and exit")

    ap = argparse.ArgumentParser(prog="palmgrasp", description=__doc__.split("\n")[0], parents=[common])
    sub = ap.add_subparsers(dest="command")
    sub.add_parser("gen-dataset", parents=[common], help="generate the labelled tactile dataset")
    sub.add_parser("calibrate", parents=[common], help="calibrate the SSIM thresholds")
    sub.add_parser("train", parents=[common], help="train pose-model sets")
    ev = sub.add_parser("eval", parents=[common], help="evaluate pose models on the test objects")
    ev.add_argument("--oracle", action="store_true", help="score ground-truth predictions instead")
    sub.add_parser("episodes", parents=[common], help="run grasping episode batches")
    sub.add_parser("report", parents=[common], help="write report.md from on-disk artifacts")
    sub.add_parser("all", parents=[common], help="run every step in order")
    sub.add_parser("check", parents=[common], help="same as --check")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.check or args.command == "check":
        from .acceptance import run_checks
        results = run_checks(workers=args.workers, stream=sys.stdout)
        return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK
    if args.command is None:
        build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        if args.command == "report":
            print(cmd_report(out))
            return EXIT_OK
        cfg = load_config(args.config, seed=args.seed, n_train=args.n_train)
        if args.command == "gen-dataset":
            print(cmd_gen_dataset(cfg, out, args.workers))
        elif args.command == "calibrate":
            print(cmd_calibrate(cfg, out).to_json(), end="")
        elif args.command == "train":
            for p in cmd_train(cfg, out):
                print(p)
        elif args.command == "eval":
            for p in cmd_eval(cfg, out, oracle=args.oracle):
                print(p)
        elif args.command == "episodes":
            print(cmd_episodes(cfg, out, args.workers))
        elif args.command == "all":
            print(run_all(cfg, out, args.workers))
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        if isinstance(exc, MissingArtifact):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_MISSING
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
