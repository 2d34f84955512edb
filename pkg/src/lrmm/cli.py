"""Command-line entry point: lrmm <command> [options].

Stages compose through files only:

    gen-world    -> world JSON
    gen-dataset  -> labelled dataset (binary)
    train        -> model file + training log JSON
    infer        -> prints the risk of one state
    eval         -> guardian comparison report (JSON + text table)
    render       -> SVG risk map or episode frame

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .cbf import HocbfParams
from .config import apply_override, load_config, set_if
from .dataset import (
    DatasetManifest,
    build_dataset,
    default_world_params,
    load_dataset,
    make_system,
    sample_states,
    save_dataset,
)
from .dynamics import Dubins4D
from .errors import ConfigError, DataError, LrmmError, NumericError
from .model import TrainConfig, evaluate as evaluate_model, file_digest, load_model, save_model, train
from .risk import RiskParams, approx_risk_metric, derive_rng, parse_metric
from .sensing import observe
from .sim import (
    DEFAULT_CHARGED_LATENCY,
    BrakesOnlyGuardian,
    CbfGuardian,
    DriverGains,
    EpisodeConfig,
    InactiveGuardian,
    LrmmGuardian,
    RandomGuardian,
    evaluate,
    format_report,
    make_episode,
    run_episode,
)
from .world import WorldGeometry, WorldSpec, generate_world, load_world, save_world

GUARDIANS = ("lrmm", "cbf", "random", "inactive", "brakes_only")
STREAM_INFER, STREAM_RENDER = 20, 21


# ---------------------------------------------------------------- config helpers

def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def world_spec(cfg: dict, kind: str | None = None, seed: int | None = None) -> WorldSpec:
    params = {**default_world_params(cfg["system"]), **cfg["world"]}
    kind = kind or params.pop("kind", None) or ("maze" if cfg["system"] == "dubins3d" else "circles")
    params.pop("kind", None)
    if seed is not None:
        params["seed"] = seed
    for key in ("bounds", "radius_range"):
        if key in params:
            params[key] = tuple(params[key])
    allowed = {f.name for f in fields(WorldSpec)}
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"unknown world keys: {sorted(unknown)}")
    return WorldSpec(kind=kind, **params)


def manifest_from(cfg: dict) -> DatasetManifest:
    ds = dict(cfg["dataset"])
    name, alpha = parse_metric(str(ds.pop("metric", "expected")))
    ds.setdefault("alpha", alpha)
    world = {k: v for k, v in cfg["world"].items() if k not in ("kind", "seed")}
    return DatasetManifest(system=cfg["system"], metric=name, system_params=dict(cfg["system_params"]),
                           world_params=world, **ds)


def episode_config(cfg: dict) -> EpisodeConfig:
    ev = cfg["eval"]
    if cfg["system"] != "dubins4d":
        raise ConfigError("evaluation runs the dubins4d environment only")
    latency = {**DEFAULT_CHARGED_LATENCY, **{k: float(v) for k, v in ev.get("charged_latency", {}).items()}}
    return EpisodeConfig(
        world=world_spec(cfg, kind="circles"),
        system=Dubins4D(**cfg["system_params"]),
        duration=float(ev["duration"]),
        decision_period=float(ev["decision_period"]),
        latency_mode=ev["latency_mode"],
        charged_latency=latency,
        driver=DriverGains(**ev.get("driver", {})),
        seed=int(ev["seed"]),
    )


def make_guardian(name: str, cfg: dict, model=None):
    system = Dubins4D(**cfg["system_params"])
    if name == "inactive":
        return InactiveGuardian()
    if name == "brakes_only":
        return BrakesOnlyGuardian(system)
    if name == "random":
        return RandomGuardian(system)
    if name == "cbf":
        return CbfGuardian(HocbfParams(), system)
    if name == "lrmm":
        if model is None:
            raise ConfigError("the lrmm guardian needs --model")
        if model.system and model.system != "dubins4d":
            raise DataError(f"model was trained for {model.system}, not dubins4d")
        return LrmmGuardian(model, float(cfg["eval"]["threshold"]), system)
    raise ConfigError(f"unknown guardian {name!r}; choose from {GUARDIANS}")


# ---------------------------------------------------------------- commands

def cmd_gen_world(args, cfg):
    spec = world_spec(cfg, args.kind, args.seed)
    save_world(generate_world(spec), args.out)
    print(f"wrote {args.out}")


def cmd_gen_dataset(args, cfg):
    ds = cfg["dataset"]
    for key, flag in (("worlds", args.worlds), ("samples", args.samples), ("test_worlds", args.test_worlds),
                      ("test_samples", args.test_samples), ("n", args.branch), ("m", args.depth),
                      ("t", args.horizon), ("metric", args.metric), ("seed", args.seed)):
        set_if(ds, key, flag)
    set_if(cfg, "system", args.system)
    manifest = manifest_from(cfg)

    def progress(done, total):
        print(f"  world {done}/{total}", file=sys.stderr)

    data = build_dataset(manifest, workers=args.workers, progress=None if args.quiet else progress)
    save_dataset(data, args.out)
    print(f"wrote {args.out}: {len(data)} records, manifest {manifest.digest()[:12]}")


def cmd_train(args, cfg):
    tr = cfg["train"]
    for key, flag in (("epochs", args.epochs), ("lr", args.lr), ("batch_size", args.batch_size), ("seed", args.seed)):
        set_if(tr, key, flag)
    tcfg = TrainConfig(**tr)
    data = load_dataset(args.data)
    train_part, test_part = data.split("train"), data.split("test")
    if not len(train_part):
        raise DataError("dataset has no training records")

    def progress(epoch, log):
        if epoch % 10 == 0 or epoch == tcfg.epochs:
            extra = f" test MAE {log.test_mae[-1]:.4f}" if log.test_mae else ""
            print(f"  epoch {epoch}: train MSE {log.train_mse[-1]:.5f}{extra}", file=sys.stderr)

    model, log = train(
        train_part.observations, train_part.risks, tcfg,
        test_part.observations if len(test_part) else None,
        test_part.risks if len(test_part) else None,
        system=data.manifest.system, manifest_digest=data.manifest.digest(),
        progress=None if args.quiet else progress,
    )
    save_model(model, args.out)
    doc = {
        "version": 1,
        "dataset_manifest": data.manifest.digest(),
        "train_config": tr,
        "log": log.as_dict(),
        "train": evaluate_model(model, train_part.observations, train_part.risks),
    }
    if len(test_part):
        doc["test"] = evaluate_model(model, test_part.observations, test_part.risks)
    log_path = args.log or str(args.out) + ".log.json"
    _write(log_path, _dumps(doc))
    summary = f"test MAE {doc['test']['mae']:.4f}" if "test" in doc else f"train MAE {doc['train']['mae']:.4f}"
    print(f"wrote {args.out} and {log_path}; {summary}")


def _world_for(args, cfg) -> WorldGeometry:
    if args.world:
        return load_world(args.world)
    if args.data is not None:
        manifest = load_dataset(args.data).manifest
        return generate_world(manifest.world_spec(args.world_id))
    raise ConfigError("need --world or --data")


def cmd_infer(args, cfg):
    if bool(args.model) == bool(args.oracle):
        raise ConfigError("give exactly one of --model or --oracle")
    world = _world_for(args, cfg)
    system_name = cfg["system"]
    system = make_system(system_name, cfg["system_params"])
    s = np.asarray(args.state, dtype=float)
    if len(s) != system.state_dim:
        raise ConfigError(f"{system_name} states have {system.state_dim} entries, got {len(s)}")
    if args.oracle:
        ds = cfg["dataset"]
        metric, alpha = parse_metric(str(ds["metric"]))
        params = RiskParams(n=int(ds["n"]), m=int(ds["m"]), t=float(ds["t"]), metric=metric, alpha=alpha)
        radius = 0.25 if system_name == "dubins4d" else 0.0
        risk = approx_risk_metric(world, s, None, params, derive_rng(int(ds["seed"]), STREAM_INFER),
                                  system, radius)
    else:
        model = load_model(args.model)
        obs = observe(system_name, world, s, args.time)
        try:
            risk = float(model.predict(obs))
        except ValueError as exc:
            raise DataError(f"model does not fit {system_name} observations: {exc}") from exc
    print(repr(float(risk)))


def cmd_eval(args, cfg):
    ev = cfg["eval"]
    for key, flag in (("episodes", args.episodes), ("latency_mode", args.latency_mode), ("seed", args.seed),
                      ("threshold", args.threshold)):
        set_if(ev, key, flag)
    if args.guardians:
        ev["guardians"] = args.guardians.split(",")
    ecfg = episode_config(cfg)
    model = load_model(args.model) if args.model else None
    names = list(ev["guardians"])
    if "lrmm" in names and model is None:
        raise ConfigError("the lrmm guardian needs --model (or drop it from --guardians)")
    guardians = [make_guardian(name, cfg, model) for name in names]
    report = evaluate(ecfg, guardians, int(ev["episodes"]), workers=args.workers)
    report["config"] = {"eval": ev, "system_params": cfg["system_params"], "world": cfg["world"]}
    if args.model:
        report["model_sha256"] = file_digest(args.model)
    _write(args.out, _dumps(report))
    table = format_report(report)
    if args.table:
        _write(args.table, table)
    print(table, end="")


# ---------------------------------------------------------------- rendering

def risk_colour(r: float) -> str:
    """Green (0) through yellow to red (1)."""
    r = min(max(float(r), 0.0), 1.0)
    red = int(round(255 * min(1.0, 2 * r)))
    green = int(round(200 * min(1.0, 2 * (1 - r))))
    return f"#{red:02x}{green:02x}00"


class Svg:
    def __init__(self, bounds, width=800):
        xmin, ymin, xmax, ymax = bounds
        span = max(xmax - xmin, ymax - ymin, 1e-9)
        self.scale = width / span
        self.bounds = bounds
        self.w = (xmax - xmin) * self.scale
        self.h = (ymax - ymin) * self.scale
        self.items = []

    def p(self, x, y):
        return (x - self.bounds[0]) * self.scale, (self.bounds[3] - y) * self.scale

    def add(self, text):
        self.items.append(text)

    def world(self, world: WorldGeometry):
        self.add(f'<rect x="0" y="0" width="{self.w:.2f}" height="{self.h:.2f}" fill="white" stroke="black"/>')
        for cx, cy, r in world.discs:
            px, py = self.p(cx, cy)
            self.add(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{r * self.scale:.2f}" fill="#d04040"/>')
        width = max(world.wall_thickness * self.scale, 1.0)
        for x0, y0, x1, y1 in world.segments:
            a, b = self.p(x0, y0), self.p(x1, y1)
            self.add(f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" '
                     f'stroke="black" stroke-width="{width:.2f}" stroke-linecap="round"/>')
        if world.goal is not None:
            gx, gy, gr = world.goal
            px, py = self.p(gx, gy)
            self.add(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{gr * self.scale:.2f}" fill="#40b040" '
                     f'fill-opacity="0.6"/>')

    def arrow(self, x, y, theta, length, colour):
        """Arrow whose base (not tip) sits at (x, y)."""
        bx, by = self.p(x, y)
        tx, ty = self.p(x + length * math.cos(theta), y + length * math.sin(theta))
        head = 0.35 * length * self.scale
        ang = math.atan2(ty - by, tx - bx)
        left = (tx - head * math.cos(ang - 0.4), ty - head * math.sin(ang - 0.4))
        right = (tx - head * math.cos(ang + 0.4), ty - head * math.sin(ang + 0.4))
        self.add(f'<g class="arrow" data-x="{x:.4f}" data-y="{y:.4f}" data-theta="{theta:.4f}">'
                 f'<line x1="{bx:.2f}" y1="{by:.2f}" x2="{tx:.2f}" y2="{ty:.2f}" stroke="{colour}" stroke-width="1.5"/>'
                 f'<polygon points="{tx:.2f},{ty:.2f} {left[0]:.2f},{left[1]:.2f} {right[0]:.2f},{right[1]:.2f}" '
                 f'fill="{colour}"/></g>')

    def polyline(self, pts, colour):
        coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in (self.p(x, y) for x, y in pts))
        self.add(f'<polyline points="{coords}" fill="none" stroke="{colour}" stroke-width="2"/>')

    def text(self) -> str:
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w:.0f}" height="{self.h:.0f}" '
                f'viewBox="0 0 {self.w:.2f} {self.h:.2f}">\n{body}\n</svg>\n')


def render_risk_map(world: WorldGeometry, states, risks, width=800) -> str:
    svg = Svg(world.bounds, width)
    svg.world(world)
    length = 0.03 * max(world.width, world.height)
    for s, r in zip(states, risks):
        svg.arrow(float(s[0]), float(s[1]), float(s[2]), length, risk_colour(r))
    return svg.text()


def render_episode(world: WorldGeometry, result, width=800) -> str:
    svg = Svg(world.bounds, width)
    svg.world(world)
    svg.polyline(result.states[:, :2], "#2050d0")
    x, y, th = result.states[-1, :3]
    svg.arrow(float(x), float(y), float(th), 0.03 * max(world.width, world.height), "#2050d0")
    return svg.text()


def cmd_render(args, cfg):
    if args.episode is not None:
        ecfg = episode_config(cfg)
        model = load_model(args.model) if args.model else None
        guardian = make_guardian(args.guardian, cfg, model)
        ep = make_episode(ecfg, args.episode)
        result = run_episode(ecfg, guardian, ep)
        text = render_episode(ep.world, result, args.width)
        print(f"episode {args.episode} with {args.guardian}: {result.outcome}")
    elif args.data is not None and not args.world:
        data = load_dataset(args.data)
        world = generate_world(data.manifest.world_spec(args.world_id))
        part = data.subset(data.world_ids == args.world_id)
        if not len(part):
            raise DataError(f"dataset has no records for world {args.world_id}")
        text = render_risk_map(world, part.states, part.risks, args.width)
    elif args.world and args.model:
        world = load_world(args.world)
        model = load_model(args.model)
        system = make_system(model.system or cfg["system"], cfg["system_params"])
        states = sample_states(world, args.samples, derive_rng(args.seed, STREAM_RENDER), system)
        obs = np.array([observe(model.system or cfg["system"], world, s, 0.0) for s in states])
        try:
            risks = model.predict(obs)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        text = render_risk_map(world, states, risks, args.width)
    else:
        raise ConfigError("render needs --data, --world with --model, or --episode")
    _write(args.out, text)
    print(f"wrote {args.out}")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrmm", description="Learned risk metric maps: data, training, evaluation.")
    ap.add_argument("--config", help="JSON run configuration (version 1)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key, e.g. --set eval.episodes=64")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate one world file")
    p.add_argument("--kind", choices=("circles", "maze"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("gen-dataset", help="sample, observe and label states")
    p.add_argument("--system", choices=("dubins4d", "dubins3d"))
    p.add_argument("--worlds", type=int, help="training worlds M")
    p.add_argument("--samples", type=int, help="training samples N")
    p.add_argument("--test-worlds", type=int)
    p.add_argument("--test-samples", type=int)
    p.add_argument("--branch", type=int, help="branching factor n")
    p.add_argument("--depth", type=int, help="tree depth m")
    p.add_argument("--horizon", type=float, help="seconds per tree level t")
    p.add_argument("--metric", help="expected | worst_case | cvar(alpha)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="fit the risk network")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="risk of one state")
    p.add_argument("--world")
    p.add_argument("--data", help="dataset whose manifest regenerates the world")
    p.add_argument("--world-id", type=int, default=0)
    p.add_argument("--state", type=float, nargs="+", required=True, metavar="S")
    p.add_argument("--time", type=float, default=0.0, help="simulation time fed to the observation")
    p.add_argument("--model")
    p.add_argument("--oracle", action="store_true", help="sample the risk tree instead of using a model")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="paired guardian comparison")
    p.add_argument("--model")
    p.add_argument("--guardians", help="comma separated subset of " + ",".join(GUARDIANS))
    p.add_argument("--episodes", type=int)
    p.add_argument("--latency-mode", choices=("charged", "wallclock"))
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="JSON report")
    p.add_argument("--table", help="also write the text table here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="SVG risk map or episode frame")
    p.add_argument("--data")
    p.add_argument("--world-id", type=int, default=0)
    p.add_argument("--world")
    p.add_argument("--model")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episode", type=int)
    p.add_argument("--guardian", default="inactive", choices=GUARDIANS)
    p.add_argument("--width", type=int, default=800)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        for assignment in args.set:
            apply_override(cfg, assignment)
        args.func(args, cfg)
    except LrmmError as exc:
        print(f"lrmm: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"lrmm: error: missing file: {exc.filename}", file=sys.stderr)
        return DataError.exit_code
    except (TypeError, ValueError) as exc:
        # bad values or keys in the config surface here from dataclass validation
        print(f"lrmm: error: invalid configuration: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"lrmm: error: numeric failure: {exc}", file=sys.stderr)
        return NumericError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
