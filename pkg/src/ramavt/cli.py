"""Command-line entry point binding all modules together.

Commands:
  train       collect + optimize, writing checkpoints and a training log
  eval        greedy evaluation of a checkpoint against the random baseline
  ablate      train and evaluate the five-variant ablation matrix
  perturb     robustness table under actuator noise / delay / blur
  viz         export attention maps from a seeded episode
  grad-check  finite-difference oracle over every differentiable primitive

Flags mirror RunConfig fields as ``--key value``; ``--config FILE`` loads a
``key = value`` file first; RAMAVT_SEED overrides the seed between the two.
Exit status is 0 only when the command's outputs were produced.
"""

from __future__ import annotations

import os
import sys
import numpy as np

from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .util import tune_allocator


class UsageError(ValueError):
    pass


def _perturb_tag(cfg: RunConfig) -> str:
    bits = []
    if cfg.actuator_noise:
        bits.append("noise")
    if cfg.time_delay:
        bits.append("delay")
    if cfg.image_blur:
        bits.append("blur")
    return "+".join(bits) if bits else "none"


def _say(msg: str) -> None:
    print(msg, flush=True)


def cmd_train(cfg: RunConfig) -> int:
    from .env import TrackingEnv
    from .trainer import train, write_training_log

    env = TrackingEnv(cfg.to_env_config(mode="train"))
    spec = cfg.to_network_spec()
    params, rows = train(cfg.to_train_config(), env, spec,
                         augment_cfg=cfg.to_augment_config(),
                         checkpoint_dir=cfg.checkpoint_dir, progress=_say)
    os.makedirs(cfg.report_dir, exist_ok=True)
    log_path = os.path.join(cfg.report_dir, f"train_{cfg.variant}_{cfg.input_format}.csv")
    write_training_log(log_path, rows)
    _say(f"wrote {log_path}")
    if rows:
        tail = rows[-min(50, len(rows)):]
        _say(f"final-{len(tail)}-episode mean length: {np.mean([r.length for r in tail]):.1f}")
    return 0


def _load_for_eval(cfg: RunConfig):
    from .checkpoint import load_params

    if not cfg.checkpoint:
        raise UsageError("this command needs --checkpoint <path>")
    return load_params(cfg.checkpoint, cfg.to_network_spec())


def cmd_eval(cfg: RunConfig) -> int:
    from .env import TrackingEnv
    from .evalkit import eval_seeds, evaluate, random_baseline, write_report_csv

    params, meta = _load_for_eval(cfg)
    seeds = eval_seeds(10_000 + cfg.seed, cfg.eval_episodes)
    env_cfg = cfg.to_env_config(mode="eval", with_perturbations=True)
    tag = _perturb_tag(cfg)
    trace_dir = os.path.join(cfg.report_dir, f"traces_{cfg.variant}_{cfg.input_format}_{tag}") \
        if cfg.export_traces else None
    agent_report = evaluate(params, TrackingEnv(env_cfg), episodes=cfg.eval_episodes, seeds=seeds,
                            trace_dir=trace_dir)
    random_report = random_baseline(TrackingEnv(env_cfg), episodes=cfg.eval_episodes, seeds=seeds)

    os.makedirs(cfg.report_dir, exist_ok=True)
    path = os.path.join(cfg.report_dir, f"eval_{cfg.variant}_{cfg.input_format}_{tag}.csv")
    write_report_csv(path, [(cfg.variant, [], agent_report), ("random", [], random_report)])
    _say(f"wrote {path}")
    _say(f"{cfg.variant}: AEL {agent_report.ael:.1f} (min {agent_report.min_el} max {agent_report.max_el}) "
         f"AER {agent_report.aer:.1f} speed {agent_report.speed_hz:.0f} Hz")
    _say(f"random: AEL {random_report.ael:.1f} AER {random_report.aer:.1f}")
    return 0


def cmd_perturb(cfg: RunConfig) -> int:
    from .evalkit import eval_seeds, perturbation_suite

    params, meta = _load_for_eval(cfg)
    seeds = eval_seeds(10_000 + cfg.seed, cfg.eval_episodes)
    os.makedirs(cfg.report_dir, exist_ok=True)
    path = os.path.join(cfg.report_dir, f"perturb_{cfg.variant}_{cfg.input_format}.csv")
    rows = perturbation_suite(params, cfg.to_env_config(mode="eval"),
                              episodes=cfg.eval_episodes, seeds=seeds, out_path=path)
    _say(f"wrote {path}")
    for name, flags, report in rows:
        _say(f"{name:6s} noise={flags[0]:d} delay={flags[1]:d} blur={flags[2]:d} "
             f"AEL {report.ael:.1f} AER {report.aer:.1f}")
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    from .evalkit import run_ablation

    os.makedirs(cfg.report_dir, exist_ok=True)
    path = os.path.join(cfg.report_dir, f"ablation_{cfg.input_format}.csv")
    results = run_ablation(cfg.to_train_config(), cfg.to_env_config(mode="train"),
                           input_format=cfg.input_format, eval_episodes=cfg.eval_episodes,
                           out_path=path, progress=_say)
    _say(f"wrote {path}")
    for name, report, count in results:
        _say(f"{name:8s} AEL {report.ael:7.1f} AER {report.aer:8.1f} "
             f"speed {report.speed_hz:8.0f} Hz params {count}")
    return 0


def cmd_viz(cfg: RunConfig) -> int:
    from .env import TrackingEnv
    from .evalkit import export_attention_maps, write_pgm
    from .blocks import FrozenEvalNet

    params, meta = _load_for_eval(cfg)
    env = TrackingEnv(cfg.to_env_config(mode="eval", with_perturbations=True))
    _, obs = env.reset(seed=cfg.seed)
    net = FrozenEvalNet(params)
    h, c = net.zero_state(1)
    from collections import deque

    stack = deque([obs] * params.spec.frame_stack, maxlen=params.spec.frame_stack)
    for _ in range(10):  # settle onto the target before capturing
        if params.spec.has_lstm:
            q, h, c = net.step(obs, h, c)
        else:
            q = net.stacked_q(np.concatenate(list(stack), axis=0))
        _, obs, _, done, _ = env.step(int(np.argmax(q)))
        stack.append(obs)
        if done:
            break
    out_dir = os.path.join(cfg.report_dir, f"attention_{cfg.variant}_{cfg.input_format}")
    if params.spec.variant == "drlavt":
        capture_input = np.concatenate(list(stack), axis=0)
    else:
        capture_input = obs
    files = export_attention_maps(params, capture_input, out_dir)
    write_pgm(os.path.join(out_dir, "observation.pgm"), obs[-1])
    _say(f"wrote {len(files)} map files under {out_dir}")
    return 0


def cmd_grad_check(cfg: RunConfig) -> int:
    from .gradsuite import run_suite

    results = run_suite(seed=cfg.seed)
    failed = 0
    for name, report, tol in results:
        _say(f"{name:32s} {report}")
        failed += 0 if report.passed else 1
    if failed:
        _say(f"{failed} operator(s) above tolerance")
        return 1
    _say(f"all {len(results)} gradient checks passed")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    tune_allocator()
    try:
        cfg = parse_config(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        print(f"usage: ramavt <{'|'.join(COMMANDS)}> [--key value ...] [--config file]", file=sys.stderr)
        return 2
    try:
        handler = {
            "train": cmd_train,
            "eval": cmd_eval,
            "ablate": cmd_ablate,
            "perturb": cmd_perturb,
            "viz": cmd_viz,
            "grad-check": cmd_grad_check,
        }[cfg.command]
        return handler(cfg)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # surfaced, never silent
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
