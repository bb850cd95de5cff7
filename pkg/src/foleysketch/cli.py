"""Command-line interface.

Verbs: gen-data, train, sample, eval, grad-check, encode-signal, mix,
serve.  Exit codes: 0 success, 2 validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import CLASS_NAMES, ModelConfig, load_config
from .conditioning import MaskTrack
from .denoiser import TrainItem
from .diffusion import make_schedule
from .dsp import mix_audio, read_wav, write_wav
from .generate import RequestError, evaluate, generate
from .loudness import LoudnessCurve, loudness_pipeline
from .synthdata import load_dataset, loudness_config, make_dataset, save_dataset
from .training import (TrainConfig, covering_draws, grad_check, prepare_items,
                       train)


def _load_curve(path: str | None) -> LoudnessCurve | None:
    if path is None:
        return None
    return LoudnessCurve.from_json(json.loads(Path(path).read_text()))


def _load_mask(path: str | None, cfg: ModelConfig) -> MaskTrack | None:
    if path is None:
        return None
    return MaskTrack.from_json(json.loads(Path(path).read_text()),
                               cfg.n_frames_video, cfg.grid_h, cfg.grid_w)


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    examples = make_dataset(args.n, args.seed, cfg)
    manifest = save_dataset(examples, args.out, cfg, args.seed)
    print(f"wrote {len(manifest['clips'])} clips to {args.out} "
          f"(mean={manifest['normalization']['mean']:.4f}, "
          f"std={manifest['normalization']['std']:.4f})")
    return 0


def cmd_train(args) -> int:
    examples, manifest = load_dataset(args.data)
    cfg = ModelConfig.from_dict(manifest["config"]) if args.config is None \
        else load_config(args.config)
    tcfg = TrainConfig(learning_rate=args.lr, weight_decay=args.weight_decay,
                       batch_size=args.batch_size, steps=args.steps, seed=args.seed)
    result = train(examples, tcfg, cfg)
    save_checkpoint(args.out, cfg, result.params, result.norm_mean, result.norm_std,
                    meta={"train_steps": tcfg.steps, "train_seed": tcfg.seed,
                          "dataset": str(args.data)})
    log_path = args.log or str(Path(args.out).with_suffix(".loss.csv"))
    with open(log_path, "w") as f:
        f.write("step,loss\n")
        for step, loss in result.log:
            f.write(f"{step},{loss:.6f}\n")
    first = np.mean([l for _, l in result.log[:100]])
    last = np.mean([l for _, l in result.log[-100:]])
    print(f"trained {tcfg.steps} steps; loss {first:.4f} -> {last:.4f}; "
          f"checkpoint {args.out}; log {log_path}")
    return 0


def cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    curve = _load_curve(args.curve)
    mask = _load_mask(args.mask, ckpt.cfg)
    result = generate(ckpt, tag=args.tag, mask=mask, curve=curve,
                      s_text=args.s_text, s_video=args.s_video,
                      steps=args.steps, sampler=args.sampler, seed=args.seed)
    out = Path(args.out)
    out.write_bytes(result.wav)
    mel_path = out.with_suffix(".mel.json")
    mel_path.write_text(json.dumps({"frame_rate": result.mel.frame_rate,
                                    "values": result.mel.values.tolist()}))
    env_path = out.with_suffix(".envelope.json")
    env_path.write_text(json.dumps(result.envelope.to_json()))
    print(f"seed={result.seed} class={CLASS_NAMES[result.predicted_class]} "
          f"envelope_r={result.envelope_r} wav={out} mel={mel_path} env={env_path}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    examples, _ = load_dataset(args.data, ckpt.cfg)
    if args.n:
        examples = examples[:args.n]
    report = evaluate(ckpt, examples, seed=args.seed, sampler=args.sampler)
    Path(args.out).write_text(json.dumps(report, indent=1))
    summary = {k: v for k, v in report.items() if isinstance(v, (int, float))}
    print(json.dumps(summary, indent=1))
    return 0


def cmd_grad_check(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.cfg
    examples, manifest = load_dataset(args.data, cfg)
    norm = manifest["normalization"]
    items = prepare_items(examples[:args.batch], norm["mean"], norm["std"], cfg)
    sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    rng = np.random.default_rng(args.seed)
    draws = covering_draws(rng, len(items), sched.T, cfg.latent_shape)
    report = grad_check(ckpt.params, items, draws, sched, cfg,
                        per_group=args.per_group, seed=args.seed)
    print(f"checked {len(report.entries)} coordinates; "
          f"max rel err {report.max_rel_err:.3e}; "
          f"{'PASS' if report.passed else 'FAIL'} at tol {report.tolerance:g}")
    for e in report.worst(5):
        print(f"  {e.name}{list(e.index)}: analytic={e.analytic:+.6e} "
              f"numeric={e.numeric:+.6e} rel={e.rel_err:.3e}")
    return 0 if report.passed else 3


def cmd_encode_signal(args) -> int:
    audio = read_wav(args.wav)
    cfg = load_config(args.config)
    curve = loudness_pipeline(audio, loudness_config(cfg))
    Path(args.out).write_text(json.dumps(curve.to_json()))
    print(f"wrote curve of {len(curve)} values to {args.out}")
    return 0


def cmd_mix(args) -> int:
    clips = [read_wav(p) for p in args.wavs]
    write_wav(mix_audio(clips), args.out)
    print(f"mixed {len(clips)} clips -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    ckpt = load_checkpoint(args.checkpoint)
    app = create_app(ckpt, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foleysketch",
                                description="sketch-controlled foley synthesis")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic paired dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", default=None)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train the denoiser on a dataset directory")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--weight-decay", type=float, default=0.01)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--log", default=None, help="loss log CSV path")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="generate a clip from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True, help="output WAV path")
    s.add_argument("--curve", default=None, help="loudness curve JSON")
    s.add_argument("--mask", default=None, help="mask JSON")
    s.add_argument("--tag", default=None, help="class name or id")
    s.add_argument("--s-text", type=float, default=None)
    s.add_argument("--s-video", type=float, default=None)
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--sampler", choices=("ddpm", "ddim"), default="ddim")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(fn=cmd_sample)

    e = sub.add_parser("eval", help="score a checkpoint against a reference split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--n", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--sampler", choices=("ddpm", "ddim"), default="ddim")
    e.set_defaults(fn=cmd_eval)

    gc = sub.add_parser("grad-check", help="finite-difference gradient verification")
    gc.add_argument("--checkpoint", required=True)
    gc.add_argument("--data", required=True)
    gc.add_argument("--batch", type=int, default=5)
    gc.add_argument("--per-group", type=int, default=2)
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(fn=cmd_grad_check)

    es = sub.add_parser("encode-signal", help="extract a loudness curve from a WAV")
    es.add_argument("--wav", required=True)
    es.add_argument("--out", required=True)
    es.add_argument("--config", default=None)
    es.set_defaults(fn=cmd_encode_signal)

    m = sub.add_parser("mix", help="additively mix WAV files")
    m.add_argument("wavs", nargs="+")
    m.add_argument("--out", required=True)
    m.set_defaults(fn=cmd_mix)

    sv = sub.add_parser("serve", help="run the generation service")
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8377)
    sv.add_argument("--ui", default=None, help="static UI directory to mount at /ui")
    sv.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (RequestError, ValueError, FileNotFoundError, json.JSONDecodeError,
            KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - boundary of the program
        print(f"runtime failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
