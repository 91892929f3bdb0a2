"""Command-line interface.

Exit codes: 0 success, 1 I/O or internal failure, 2 usage or validation
error, 3 solver gave up or a graph exceeded the exact-search bound.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .agent import ActorCritic, CheckpointMismatchError, EpochStats, solve_scene, train
from .baselines import anneal_solve, dfs_solve, random_solve
from .config import ConfigError, RunConfig
from .energy import total_energy
from .learnkit import CheckpointError
from .metrics import (EXACT_GED_MAX_NODES, approximate_graph_edit_distance, evaluate_corpus,
                      graph_report, layout_report, load_corpus, rows_to_csv, rows_to_table)
from .providers import ProviderError, classify_room_type, providers_from_env
from .render import render_svg
from .scene import (Layout, SceneError, export_layout, load_graph, load_layout, load_scene)
from .viewpoint import SamplerConfig, ViewpointCandidate, ViewpointError, sample_viewpoints

log = logging.getLogger("roomplace")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
METHODS = ("rl", "dfs", "anneal", "random")


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise CLIError(f"no such file: {path}", EXIT_USAGE) from exc
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}", EXIT_IO) from exc


def _write(path, data) -> None:
    try:
        if isinstance(data, bytes):
            Path(path).write_bytes(data)
        else:
            Path(path).write_text(data, encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _scene(path):
    try:
        return load_scene(_read(path))
    except SceneError as exc:
        raise CLIError(f"{path}: {exc}", EXIT_USAGE) from exc


def _config(args) -> RunConfig:
    text = _read(args.config) if getattr(args, "config", None) else None
    flags = {"seed": args.seed,
             "env": {"resolution": getattr(args, "resolution", None),
                     "max_cells": getattr(args, "max_cells", None)}}
    if getattr(args, "epochs", None) is not None:
        flags["train"] = {"epochs": args.epochs}
    try:
        return RunConfig.resolve(text, os.environ, flags)
    except (ConfigError, TypeError) as exc:
        raise CLIError(str(exc), EXIT_USAGE) from exc


def _load_model(path) -> ActorCritic:
    try:
        return ActorCritic.from_bytes(Path(path).read_bytes())
    except FileNotFoundError as exc:
        raise CLIError(f"no such checkpoint: {path}", EXIT_USAGE) from exc
    except (CheckpointError, TypeError, KeyError, ValueError) as exc:
        raise CLIError(f"checkpoint does not match the agent: {exc}", EXIT_USAGE) from exc


def _rl_env_config(cfg: RunConfig, model: ActorCritic, args):
    env_cfg = cfg.env_config()
    mc = model.config
    if getattr(args, "max_cells", None) is None and "max_cells" not in _file_env_keys(cfg, args):
        env_cfg = replace(env_cfg, canvas_cols=mc.canvas_cols, canvas_rows=mc.canvas_rows)
    if env_cfg.n_actions != mc.n_actions:
        raise CLIError(f"checkpoint expects a {mc.canvas_cols}x{mc.canvas_rows} canvas, "
                       f"configuration asks for {env_cfg.canvas_cols}x{env_cfg.canvas_rows}",
                       EXIT_USAGE)
    return env_cfg


def _file_env_keys(cfg, args) -> set:
    if not getattr(args, "config", None):
        return set()
    try:
        return set(json.loads(_read(args.config)).get("env", {}))
    except (ValueError, AttributeError):
        return set()


def _make_solver(method: str, cfg: RunConfig, args, providers):
    if method == "rl":
        if not getattr(args, "checkpoint", None):
            raise CLIError("method rl needs --checkpoint", EXIT_USAGE)
        model = _load_model(args.checkpoint)
        env_cfg = _rl_env_config(cfg, model, args)

        def solve(scene, seed):
            return solve_scene(model, scene, providers.embedder, env_cfg, seed=seed)[0]
        return solve
    env_cfg = cfg.env_config()
    if method == "dfs":
        return lambda scene, seed: dfs_solve(scene, replace(cfg.budget(), seed=seed), env_cfg)
    if method == "anneal":
        return lambda scene, seed: anneal_solve(scene, replace(cfg.budget(), seed=seed),
                                                env_config=env_cfg)
    if method == "random":
        return lambda scene, seed: random_solve(scene, seed, env_cfg)
    raise CLIError(f"unknown method {method!r}; choose from {', '.join(METHODS)}", EXIT_USAGE)


def _strip_timing(layout: Layout, keep: bool) -> Layout:
    return layout if keep else Layout(layout.placements, layout.skipped, 0.0)


# -- commands --------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = _config(args)
    scene = _scene(args.scene)
    providers = providers_from_env(cfg.provider_env(), with_scorer=False)
    solve = _make_solver(args.method, cfg, args, providers)
    try:
        layout = _strip_timing(solve(scene, cfg.seed), args.timing)
    except CheckpointMismatchError as exc:
        raise CLIError(str(exc), EXIT_USAGE) from exc
    report = layout_report(scene, layout)
    energy = total_energy(scene, layout, weights=cfg.weights())
    out = Path(args.out)
    _write(out, export_layout(layout))
    doc = {"method": args.method, "report": report.as_dict(), "energy": energy.as_dict(),
           "config": cfg.data}
    _write(out.with_name(out.stem + ".report.json"), json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if scene.objects and not layout.placements:
        print(f"{args.method}: no object could be placed", file=sys.stderr)
        return EXIT_SOLVER
    print(json.dumps(report.as_dict(), sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    directory = Path(args.corpus)
    if not directory.is_dir():
        raise CLIError(f"corpus directory not found: {directory}", EXIT_USAGE)
    named, _ = load_corpus(directory)
    if not named:
        raise CLIError("corpus holds no readable scenes", EXIT_USAGE)
    providers = providers_from_env(cfg.provider_env())
    model, curve = train([s for _, s in named], cfg.model_config(), cfg.train_config(),
                         cfg.env_config(), providers.embedder, providers.scorer)
    out = Path(args.out)
    _write(out, model.to_bytes())
    rows = [EpochStats.CSV_HEADER] + [c.csv_row() for c in curve]
    _write(out.with_name(out.name + ".curve.csv"), "\n".join(rows) + "\n")
    _write(out.with_name(out.name + ".config.json"), cfg.to_json() + "\n")
    print(f"trained on {len(named)} scenes for {len(curve)} epochs -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    directory = Path(args.corpus)
    if not directory.is_dir():
        raise CLIError(f"corpus directory not found: {directory}", EXIT_USAGE)
    if args.runs < 1:
        raise CLIError("--runs must be >= 1", EXIT_USAGE)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise CLIError(f"unknown method(s): {', '.join(unknown) or '(none)'}", EXIT_USAGE)
    named, _ = load_corpus(directory)
    if not named:
        raise CLIError("corpus holds no readable scenes", EXIT_USAGE)
    providers = providers_from_env(cfg.provider_env(), with_scorer=False)
    solvers = {}
    for m in methods:
        base = _make_solver(m, cfg, args, providers)
        solvers[m] = (lambda f: (lambda s, seed: _strip_timing(f(s, seed), args.timing)))(base)
    scenes = [s for _, s in named]
    if args.jobs < 1:
        raise CLIError("--jobs must be >= 1", EXIT_USAGE)
    rows = evaluate_corpus(scenes, solvers, args.runs, cfg.seed, energy_weights=cfg.weights(),
                           jobs=args.jobs)
    text = rows_to_csv(rows)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    print(rows_to_table(rows), file=sys.stderr)
    return EXIT_OK


def cmd_render(args) -> int:
    scene = _scene(args.scene)
    try:
        layout = load_layout(_read(args.layout), scene)
    except SceneError as exc:
        raise CLIError(f"{args.layout}: {exc}", EXIT_USAGE) from exc
    views = []
    if args.viewpoints:
        doc = json.loads(_read(args.viewpoints))
        views = [ViewpointCandidate(c["x"], c["y"], c.get("z", 0.0), tuple(c["dir"]), 0.0,
                                    c["dist_to_center"]) for c in doc.get("candidates", [])]
    _write(args.out, render_svg(scene, layout, views))
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = _config(args)
    providers = providers_from_env(cfg.provider_env(), with_scorer=False)
    objects = [o.strip() for o in args.objects.split(",") if o.strip()]
    rooms = [r.strip() for r in args.rooms.split(",") if r.strip()]
    if not objects or not rooms:
        raise CLIError("--objects and --rooms must both be non-empty", EXIT_USAGE)
    answer = classify_room_type(objects, rooms, providers.llm)
    print(json.dumps({"room_type": answer}))
    return EXIT_OK


def cmd_vrpos(args) -> int:
    scene = _scene(args.scene)
    try:
        layout = load_layout(_read(args.layout), scene)
    except SceneError as exc:
        raise CLIError(f"{args.layout}: {exc}", EXIT_USAGE) from exc
    anchor = args.anchor
    if anchor is None:
        placed = set(layout.placed_ids)
        anchors = [o.id for o in scene.objects if o.role == "anchor" and o.id in placed]
        if not anchors:
            raise CLIError("no placed anchor object; pass --anchor", EXIT_USAGE)
        anchor = anchors[0]
    try:
        config = SamplerConfig(standoff=args.standoff, trials=args.trials,
                               interaction_reach=args.reach, seed=args.seed or 0)
        cands = sample_viewpoints(scene, layout, anchor, config)
    except (ViewpointError, ValueError) as exc:
        raise CLIError(str(exc), EXIT_USAGE) from exc
    doc = {"anchor": anchor, "candidates": [c.as_dict() for c in cands]}
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_ged(args) -> int:
    try:
        pred = load_graph(_read(args.pred))
        gt = load_graph(_read(args.gt))
    except SceneError as exc:
        raise CLIError(str(exc), EXIT_USAGE) from exc
    biggest = max(len(pred.nodes), len(gt.nodes))
    if biggest > EXACT_GED_MAX_NODES:
        est = approximate_graph_edit_distance(pred, gt)
        raise CLIError(f"graphs have up to {biggest} nodes, exact search is limited to "
                       f"{EXACT_GED_MAX_NODES}; greedy upper-bound estimate: {est}", EXIT_SOLVER)
    rep = graph_report(pred, gt)
    print(json.dumps({"ged": rep.ged, "irecall": rep.irecall, "f1": rep.f1}))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roomplace", description="Room layout placement toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        if grid:
            sp.add_argument("--resolution", type=float)
            sp.add_argument("--max-cells", type=int, dest="max_cells")

    s = sub.add_parser("solve", help="place the objects of one scene")
    s.add_argument("scene")
    s.add_argument("--method", choices=METHODS, default="dfs")
    s.add_argument("--checkpoint")
    s.add_argument("--out", required=True)
    s.add_argument("--timing", action="store_true", help="record wall-clock time per object")
    common(s)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="train the placement agent on a scene directory")
    t.add_argument("corpus")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int)
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="aggregate layout metrics over a scene directory")
    e.add_argument("corpus")
    e.add_argument("--methods", default="dfs,anneal,random")
    e.add_argument("--runs", type=int, default=5)
    e.add_argument("--checkpoint")
    e.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    e.add_argument("--out")
    e.add_argument("--timing", action="store_true")
    common(e)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="draw a layout as SVG")
    r.add_argument("scene")
    r.add_argument("layout")
    r.add_argument("--viewpoints", help="JSON written by vrpos")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)

    c = sub.add_parser("classify", help="predict the room type of an object list")
    c.add_argument("--objects", required=True, help="comma-separated object names")
    c.add_argument("--rooms", required=True, help="comma-separated candidate room types")
    common(c, grid=False)
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("vrpos", help="sample VR standing positions near the anchor")
    v.add_argument("scene")
    v.add_argument("layout")
    v.add_argument("--anchor")
    v.add_argument("--standoff", type=float, default=1.0)
    v.add_argument("--reach", type=float, default=1.2, help="interaction reach in metres")
    v.add_argument("--trials", type=int, default=64)
    v.add_argument("--seed", type=int)
    v.add_argument("--out")
    v.set_defaults(func=cmd_vrpos)

    g = sub.add_parser("ged", help="compare a predicted scene graph with ground truth")
    g.add_argument("pred")
    g.add_argument("gt")
    g.set_defaults(func=cmd_ged)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ProviderError as exc:
        print(f"error: provider failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"error: internal failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
