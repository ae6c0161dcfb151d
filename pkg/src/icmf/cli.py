"""Command-line entry point.

Subcommands: train, eval, simulate, gradcheck, synth, serve.  Settings merge
in priority order: command-line flags > --config JSON file > ICMF_SEED
environment variable (seed only) > preset defaults.  The effective config is
echoed as one JSON line before work starts.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric-check
or replay-mismatch failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .config import ModelConfig, TrainConfig, load_config_file
from .model import Segmenter, load_model
from .stubs import ConstantEmptyStub, DiskStub, OracleStub

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

MODEL_KEYS = ("dim", "patch_size", "heads", "shared_depth", "cross_depth",
              "second_depth", "ffn_hidden", "variant", "image_side",
              "click_radius", "pyramid_channels", "head_dim", "hierarchical")
TRAIN_KEYS = ("lr", "beta1", "beta2", "batch_size", "steps", "lr_drop_step",
              "lr_drop_factor", "max_iter_clicks", "max_initial_clicks",
              "gamma", "border_prob", "seed", "checkpoint_every")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=("tiny", "full"), default="tiny")
    p.add_argument("--seed", type=int, default=None)
    for key in ("dim", "patch_size", "heads", "shared_depth", "cross_depth",
                "second_depth", "ffn_hidden", "image_side", "click_radius",
                "head_dim"):
        p.add_argument(f"--{key.replace('_', '-')}", type=int, default=None,
                       dest=key)
    p.add_argument("--variant", default=None)
    for key in ("lr", "beta1", "beta2", "gamma", "border_prob",
                "lr_drop_factor"):
        p.add_argument(f"--{key.replace('_', '-')}", type=float, default=None,
                       dest=key)
    for key in ("batch_size", "steps", "lr_drop_step", "max_iter_clicks",
                "max_initial_clicks", "checkpoint_every"):
        p.add_argument(f"--{key.replace('_', '-')}", type=int, default=None,
                       dest=key)


def resolve_configs(args: argparse.Namespace) -> tuple[ModelConfig, TrainConfig]:
    model_dict = (ModelConfig.tiny() if args.preset == "tiny"
                  else ModelConfig.full()).to_dict()
    train_dict = TrainConfig().to_dict()
    if args.preset == "tiny":
        train_dict["lr"] = 2e-3   # desk-scale default; full preset keeps 5e-5

    file_seed = None
    if args.config:
        try:
            loaded = load_config_file(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config!r}: {exc}")
        for key, value in loaded.items():
            if key in MODEL_KEYS:
                model_dict[key] = value
            elif key in TRAIN_KEYS:
                train_dict[key] = value
                if key == "seed":
                    file_seed = value
            else:
                raise UsageError(f"unknown config key {key!r}")

    for key in MODEL_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            model_dict[key] = value
    for key in TRAIN_KEYS:
        if key == "seed":
            continue
        value = getattr(args, key, None)
        if value is not None:
            train_dict[key] = value

    if args.seed is not None:
        train_dict["seed"] = args.seed
    elif file_seed is not None:
        train_dict["seed"] = file_seed
    elif os.environ.get("ICMF_SEED"):
        try:
            train_dict["seed"] = int(os.environ["ICMF_SEED"])
        except ValueError:
            raise UsageError(
                f"ICMF_SEED must be an integer, got {os.environ['ICMF_SEED']!r}")

    if isinstance(model_dict.get("pyramid_channels"), list):
        model_dict["pyramid_channels"] = tuple(model_dict["pyramid_channels"])
    try:
        mcfg = ModelConfig.from_dict(model_dict)
        tcfg = TrainConfig.from_dict(train_dict)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))
    print("config: " + json.dumps(
        {"model": mcfg.to_dict(), "train": tcfg.to_dict()}, sort_keys=True))
    return mcfg, tcfg


def _load_samples(args: argparse.Namespace, mcfg: ModelConfig):
    from .evaluation import load_pair_dataset
    from .training import SynthSample, synth_dataset

    if getattr(args, "data", None):
        if not os.path.isdir(args.data):
            raise DataError(f"dataset directory {args.data!r} does not exist")
        samples, rejects = load_pair_dataset(args.data, mcfg.image_side)
        for reject in rejects:
            print(f"rejected {reject['name']}: {reject['reason']}", file=sys.stderr)
        if not samples:
            raise DataError(f"no usable image/mask pairs in {args.data!r}")
        return [SynthSample(s.image, s.gt, "file") for s in samples], [s.name for s in samples]
    n = args.synth or 8
    data = synth_dataset(n, mcfg.image_side, getattr(args, "data_seed", None) or 3)
    return data, [f"synth_{i:03d}" for i in range(len(data))]


def _load_predictor(args: argparse.Namespace, mcfg: ModelConfig):
    if getattr(args, "oracle", False):
        return "oracle"
    if getattr(args, "stub_disk", False):
        return DiskStub(mcfg.image_side, mcfg.click_radius)
    if getattr(args, "checkpoint", None):
        if not os.path.exists(args.checkpoint):
            raise DataError(f"checkpoint {args.checkpoint!r} does not exist")
        try:
            model = load_model(args.checkpoint)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot load checkpoint {args.checkpoint!r}: {exc}")
        if model.cfg.dim != mcfg.dim:
            raise DataError(
                f"checkpoint dim {model.cfg.dim} != configured dim {mcfg.dim}")
        return model
    if getattr(args, "random_model", False):
        return Segmenter(mcfg, np.random.default_rng(0))
    raise UsageError("pick a model: --checkpoint PATH, --oracle, --stub-disk "
                     "or --random-model")


def cmd_train(args: argparse.Namespace) -> int:
    from .training import train

    mcfg, tcfg = resolve_configs(args)
    dataset, _ = _load_samples(args, mcfg)
    model = Segmenter(mcfg, np.random.default_rng(tcfg.seed))
    if args.resume:
        if not os.path.exists(args.resume):
            raise DataError(f"resume checkpoint {args.resume!r} does not exist")
    path = train(model, dataset, tcfg, args.out, resume_from=args.resume)
    print(f"final checkpoint: {path}")
    return EXIT_OK


def _evaluate(args: argparse.Namespace, mcfg: ModelConfig):
    from concurrent.futures import ThreadPoolExecutor

    from .evaluation import evaluate_instance

    samples, names = _load_samples(args, mcfg)
    predictor = _load_predictor(args, mcfg)
    thresholds = tuple(float(t) for t in args.thresholds.split(","))

    def run_one(pair):
        name, sample = pair
        model = OracleStub(sample.gt) if predictor == "oracle" else predictor
        return evaluate_instance(
            model, sample.image, sample.gt, click_radius=mcfg.click_radius,
            cap=args.cap, thresholds=thresholds, instance_id=name)

    workers = getattr(args, "workers", None) or 1
    pairs = list(zip(names, samples))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_one, pairs))
    return [run_one(pair) for pair in pairs]


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import records_to_csv, summarize

    mcfg, _ = resolve_configs(args)
    records = _evaluate(args, mcfg)
    summary = summarize(records, cap=args.cap)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "summary.json"), "w") as f:
        f.write(summary.to_json())
    with open(os.path.join(args.out, "records.csv"), "w") as f:
        f.write(records_to_csv(records, cap=args.cap))
    print(f"{'model':>12} | NoC@85 {summary.noc85:5.2f} | NoC@90 {summary.noc90:5.2f} "
          f"| NoF@85 {summary.nof85:3d} | NoF@90 {summary.nof90:3d} "
          f"| n={summary.n_instances}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    mcfg, _ = resolve_configs(args)
    records = _evaluate(args, mcfg)
    traces = [{"instance": r.instance_id,
               "clicks": [c.to_json() for c in r.clicks],
               "ious": r.ious} for r in records]
    if args.replay:
        with open(args.replay) as f:
            expected = json.load(f)
        if expected != json.loads(json.dumps(traces)):
            print("replay mismatch: click traces differ from recorded run")
            return EXIT_NUMERIC
        print(f"replay verified: {len(traces)} instances identical")
        return EXIT_OK
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "traces.json")
    with open(out_path, "w") as f:
        json.dump(traces, f)
    print(f"wrote {len(traces)} click traces to {out_path}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from .clicks import InteractionState, encode_interaction
    from .gradcheck import check_sampled_parameters
    from .tensor import Tensor
    from .training import nfl_loss

    mcfg, tcfg = resolve_configs(args)
    if mcfg.dim > 128:
        raise UsageError(f"gradcheck only runs at desk scale (dim <= 128), "
                         f"got dim {mcfg.dim}")
    if args.samples == 0:
        print("PASS (vacuous): 0 parameters sampled — nothing was checked")
        return EXIT_OK
    rng = np.random.default_rng(tcfg.seed)
    model = Segmenter(mcfg, rng)
    side = mcfg.image_side
    image = rng.random((3, side, side))
    gt = np.zeros((side, side), dtype=bool)
    gt[side // 4: 3 * side // 4, side // 4: 3 * side // 4] = True
    state = InteractionState(side, side)
    state.add(side // 2, side // 2, True)
    interaction = encode_interaction(state, mcfg.click_radius)

    def build_loss():
        return nfl_loss(model(Tensor(image), Tensor(interaction)), gt, tcfg.gamma)

    report = check_sampled_parameters(
        build_loss, dict(model.named_params()),
        np.random.default_rng(tcfg.seed), n_samples=args.samples,
        tolerance=args.tolerance)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_synth(args: argparse.Namespace) -> int:
    from PIL import Image

    from .training import synth_dataset

    mcfg, tcfg = resolve_configs(args)
    side = args.side or mcfg.image_side
    data = synth_dataset(args.n, side, tcfg.seed)
    os.makedirs(args.out, exist_ok=True)
    for i, sample in enumerate(data):
        rgb = (sample.image.transpose(1, 2, 0) * 255).round().astype(np.uint8)
        Image.fromarray(rgb).save(os.path.join(args.out, f"shape_{i:03d}.png"))
        Image.fromarray(sample.gt.astype(np.uint8) * 255, mode="L").save(
            os.path.join(args.out, f"shape_{i:03d}_mask.png"))
    print(f"wrote {len(data)} image/mask pairs to {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    mcfg, _ = resolve_configs(args)
    predictor = _load_predictor(args, mcfg)
    if predictor == "oracle":
        raise UsageError("--oracle is not a servable model; use --stub-disk")
    frontend = args.frontend
    if frontend is None and os.path.isdir("frontend/dist"):
        frontend = "frontend/dist"
    if frontend is not None and not os.path.isdir(frontend):
        raise DataError(f"frontend directory {frontend!r} does not exist")
    app = create_app(predictor, image_side=mcfg.image_side,
                     click_radius=mcfg.click_radius, frontend_dir=frontend)
    print(f"serving on http://{args.host}:{args.port} "
          f"(frontend: {frontend or 'none'})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icmf", description="click-based interactive image segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_config_flags(p_train)
    p_train.add_argument("--data", help="directory of name.png/name_mask.png pairs")
    p_train.add_argument("--synth", type=int, default=None,
                         help="train on N synthetic images instead of --data")
    p_train.add_argument("--data-seed", type=int, default=None)
    p_train.add_argument("--out", default="run")
    p_train.add_argument("--resume", default=None)
    p_train.set_defaults(func=cmd_train)

    def add_eval_like(p):
        _add_config_flags(p)
        p.add_argument("--data")
        p.add_argument("--synth", type=int, default=None)
        p.add_argument("--data-seed", type=int, default=None)
        p.add_argument("--checkpoint")
        p.add_argument("--oracle", action="store_true",
                       help="per-instance ground-truth oracle stub")
        p.add_argument("--stub-disk", action="store_true",
                       help="click-geometry stub (no learning)")
        p.add_argument("--random-model", action="store_true",
                       help="freshly initialized (untrained) model")
        p.add_argument("--cap", type=int, default=20)
        p.add_argument("--thresholds", default="0.85,0.90")

    p_eval = sub.add_parser("eval", help="run the click protocol and report metrics")
    add_eval_like(p_eval)
    p_eval.add_argument("--out", default="eval_out")
    p_eval.add_argument("--workers", type=int, default=os.cpu_count(),
                        help="reserved for parallel evaluation")
    p_eval.set_defaults(func=cmd_eval)

    p_sim = sub.add_parser("simulate", help="emit or verify click traces")
    add_eval_like(p_sim)
    p_sim.add_argument("--out", default="sim_out")
    p_sim.add_argument("--replay", help="verify against a recorded traces.json")
    p_sim.set_defaults(func=cmd_simulate)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_config_flags(p_grad)
    p_grad.add_argument("--samples", type=int, default=20)
    p_grad.add_argument("--tolerance", type=float, default=1e-4)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_synth = sub.add_parser("synth", help="write a synthetic PNG dataset")
    _add_config_flags(p_synth)
    p_synth.add_argument("--n", type=int, default=8)
    p_synth.add_argument("--side", type=int, default=None)
    p_synth.add_argument("--out", default="synth_out")
    p_synth.set_defaults(func=cmd_synth)

    p_serve = sub.add_parser("serve", help="run the interactive session service")
    _add_config_flags(p_serve)
    p_serve.add_argument("--checkpoint")
    p_serve.add_argument("--oracle", action="store_true")
    p_serve.add_argument("--stub-disk", action="store_true")
    p_serve.add_argument("--random-model", action="store_true")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--frontend", default=None,
                         help="static bundle directory (default: frontend/dist)")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def entrypoint(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(entrypoint())


if __name__ == "__main__":
    main()
