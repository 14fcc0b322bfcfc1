"""Command-line entry point.

Subcommands cover the whole pipeline: gen-data, train, eval-cls, eval-det,
grad-check, inspect. Exit codes: 0 success, 1 usage problem, 2 data problem,
3 numeric failure. All CSV outputs are byte-reproducible for a fixed seed.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import autodiff as ad
from . import config as config_mod
from . import data, evaluate, model, pseudo, train
from .errors import DataError, NumericError
from .losses import LossConfig

ABLATABLE = ("soft", "bg", "sw", "cl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="fewvid",
        description="Few-shot recognition and detection of actions in untrimmed videos.",
        epilog=config_mod.describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, text in (
        ("gen-data", "generate the synthetic dataset tree"),
        ("train", "train the head on the base split"),
        ("eval-cls", "episodic K-way classification accuracy"),
        ("eval-det", "episodic temporal detection mAP"),
        ("grad-check", "finite-difference check of the full objective"),
        ("inspect", "dump per-segment max logits and pseudo-label roles as CSV"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out", help="output path (command-specific)")
        p.add_argument("--ckpt", help="checkpoint path")
        p.add_argument("--K", type=int, help="way count per episode")
        p.add_argument("--n", type=int, help="shots per class")
        p.add_argument("--q", type=int, help="queries per class")
        p.add_argument("--episodes", type=int, help="episode count")
        p.add_argument("--ablate", action="append", choices=ABLATABLE, default=None,
                       metavar="|".join(ABLATABLE),
                       help="disable a component (repeatable)")
        p.add_argument("--jobs", type=int, help="parallel workers for evaluation")
    return parser


def load_run_config(args) -> config_mod.RunConfig:
    overrides = {key: getattr(args, key) for key in
                 ("seed", "out", "ckpt", "K", "n", "q", "episodes", "jobs")}
    cfg = config_mod.build_config(args.config, overrides)
    for name in args.ablate or ():
        setattr(cfg, name, False)
    return cfg.validate()


def _fmt(value) -> str:
    return "%.17g" % value


def cmd_gen_data(cfg) -> int:
    out_dir = Path(cfg.out or cfg.data_dir)
    base, novel = data.generate_synthetic_dataset(cfg.synthetic_config(), out_dir)
    for manifest in (base, novel):
        classes = len(manifest.class_labels())
        print(f"{manifest.split}: {len(manifest.entries)} videos, {classes} classes "
              f"-> {out_dir / (manifest.split + '_manifest.jsonl')}")
    return 0


def cmd_train(cfg) -> int:
    manifest = data.load_manifest(Path(cfg.data_dir) / "base_manifest.jsonl")
    log_path = cfg.out or (cfg.ckpt + ".log.csv")
    result = train.train_base(
        manifest, cfg.loss_config(),
        d=cfg.d, kernel_width=cfg.kernel_width, attn_width=cfg.attn_width,
        lr=cfg.lr, momentum=cfg.momentum, batch_size=cfg.batch_size,
        epochs=cfg.epochs, seed=cfg.seed, t_n=cfg.t_n,
        top_m=cfg.top_m or None, use_probabilities=cfg.use_probabilities,
        ckpt_path=cfg.ckpt, log_path=log_path,
        config_echo={"seed": cfg.seed, "ablate": [a for a in ABLATABLE if not getattr(cfg, a)]})
    final = result.log_rows[-1]
    print(f"trained {final[0]} steps, final loss {final[1]:.6f}")
    print(f"checkpoint: {cfg.ckpt}")
    print(f"log: {log_path}")
    return 0


def _load_eval_assets(cfg):
    params, echo = model.load_checkpoint(cfg.ckpt)
    manifest = data.load_manifest(Path(cfg.data_dir) / "novel_manifest.jsonl")
    loss_cfg = cfg.loss_config()
    for name in echo.get("ablate", []):
        setattr(loss_cfg, name, False)
    return params, manifest, loss_cfg


_WORKER_STATE = {}


def _episode_score(payload):
    """Worker for --jobs parallelism; loads assets once per process."""
    ckpt, manifest_path, mode, K, n, q, seed, index, flags = payload
    key = (ckpt, manifest_path)
    if _WORKER_STATE.get("key") != key:
        params, _ = model.load_checkpoint(ckpt)
        manifest = data.load_manifest(manifest_path)
        _WORKER_STATE.update(key=key, params=params, manifest=manifest)
    loss_cfg = LossConfig(**flags)
    ep = data.sample_episode(_WORKER_STATE["manifest"], K=K, n=n, q=q, seed=[seed, index])
    if mode == "classification":
        return evaluate.episode_accuracy(_WORKER_STATE["params"], ep, loss_cfg)
    map50, avg_map, _ = evaluate.episode_detection(_WORKER_STATE["params"], ep, loss_cfg)
    return (map50, avg_map)


def _run_episodes(cfg, mode):
    params, manifest, loss_cfg = _load_eval_assets(cfg)
    if cfg.jobs <= 1:
        return evaluate.evaluate(params, manifest, mode, K=cfg.K, n=cfg.n, q=cfg.q,
                                 episodes=cfg.episodes, seed=cfg.seed, cfg=loss_cfg)
    flags = {k: getattr(loss_cfg, k) for k in
             ("tau", "tau_s", "c", "margin", "beta", "gamma1", "gamma2",
              "soft", "bg", "sw", "cl", "renormalize_video_feature")}
    manifest_path = str(Path(cfg.data_dir) / "novel_manifest.jsonl")
    payloads = [(cfg.ckpt, manifest_path, mode, cfg.K, cfg.n, cfg.q, cfg.seed, e, flags)
                for e in range(cfg.episodes)]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        per_episode = list(pool.map(_episode_score, payloads))
    return evaluate.summarize(mode, per_episode, K=cfg.K, n=cfg.n, q=cfg.q, seed=cfg.seed)


def cmd_eval_cls(cfg) -> int:
    report = _run_episodes(cfg, "classification")
    mean, ci = report["accuracy_mean"], report["accuracy_ci"]
    print(f"{cfg.K}-way {cfg.n}-shot accuracy over {cfg.episodes} episodes: "
          f"{100.0 * mean:.2f} ± {100.0 * ci:.2f}")
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write("episode,accuracy\n")
            for e, acc in enumerate(report["per_episode"]):
                fh.write(f"{e},{_fmt(acc)}\n")
        print(f"per-episode CSV: {cfg.out}")
    return 0


def cmd_eval_det(cfg) -> int:
    report = _run_episodes(cfg, "detection")
    print(f"mAP@0.50 over {cfg.episodes} episodes: "
          f"{100.0 * report['map50_mean']:.2f} ± {100.0 * report['map50_ci']:.2f}")
    print(f"average mAP (tIoU 0.50:0.05:0.95): "
          f"{100.0 * report['avg_map_mean']:.2f} ± {100.0 * report['avg_map_ci']:.2f}")
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write("episode,map50,avg_map\n")
            for e, (m50, avg) in enumerate(report["per_episode"]):
                fh.write(f"{e},{_fmt(m50)},{_fmt(avg)}\n")
        print(f"per-episode CSV: {cfg.out}")
    return 0


def cmd_grad_check(cfg) -> int:
    arrays, builder = train.gradcheck_objective(seed=cfg.seed, loss_cfg=cfg.loss_config())
    report = ad.grad_check(builder, arrays, h=1e-5, tol=1e-4)
    print(report.summary())
    return 0 if report.passed else 3


def cmd_inspect(cfg) -> int:
    params, _ = model.load_checkpoint(cfg.ckpt)
    manifest = data.load_manifest(Path(cfg.data_dir) / "base_manifest.jsonl")
    lines = ["video_id,segment,max_logit,role"]
    for entry in manifest.entries:
        seq = manifest.load_sequence(entry)
        f = model.embed_segments(params, seq.features)
        logits = model.segment_logits(params, f)
        rec = pseudo.pseudo_label_video(logits.data, t_n=cfg.t_n, M=cfg.top_m or None,
                                        use_probabilities=cfg.use_probabilities)
        for i, role in enumerate(pseudo.segment_roles(rec)):
            lines.append(f"{seq.video_id},{i},{_fmt(rec.max_logits[i])},{role}")
    text = "\n".join(lines) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
        print(f"wrote {len(manifest.entries)} videos to {cfg.out}")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval-cls": cmd_eval_cls,
    "eval-det": cmd_eval_det,
    "grad-check": cmd_grad_check,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = load_run_config(args)
        return COMMANDS[args.command](cfg)
    except DataError as err:
        print(f"fewvid: data error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"fewvid: numeric failure: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"fewvid: invalid configuration: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
