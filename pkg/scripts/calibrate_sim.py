#!/usr/bin/env python3
"""Closed-form predictions for the simulated deployment.

Prints the per-stage latencies, the expected reasoning-latency split, the
paired speedup, and the valid-token throughput ratio as functions of the
hard-question rate.  Useful for picking scenario constants before wiring
them into a sim script: every number the engine should report at scale is
plain arithmetic over the token counts and rates below.
"""

import argparse
import sys

DRAFT_RATE_TPS = 50.0
TARGET_RATE_TPS = 10.0
DRAFT_THINK_TOKENS = 265
RETHINK_THINK_TOKENS = 302
TARGET_ANSWER_TOKENS = 314
SELECTION_LATENCY_MS = 520.0


def stage_ms() -> dict[str, float]:
    return {
        "drafting": DRAFT_THINK_TOKENS / DRAFT_RATE_TPS * 1000.0,
        "selection": SELECTION_LATENCY_MS,
        "rethink": RETHINK_THINK_TOKENS / TARGET_RATE_TPS * 1000.0,
        "answering": TARGET_ANSWER_TOKENS / TARGET_RATE_TPS * 1000.0,
    }


def predictions(hard_rate: float) -> dict[str, float]:
    stages = stage_ms()
    draft = stages["drafting"]
    select = stages["selection"]
    rethink = stages["rethink"]

    reasoning_total = draft + select + hard_rate * rethink
    split = {
        "target": hard_rate * rethink / reasoning_total,
        "draft": draft / reasoning_total,
        "selection": select / reasoning_total,
    }

    # vanilla reasons with the target for every question
    speedup = rethink / reasoning_total

    # valid tokens: the kept chain plus the one selection step
    scot_tokens = (1 - hard_rate) * (DRAFT_THINK_TOKENS + 1) \
        + hard_rate * (RETHINK_THINK_TOKENS + 1)
    scot_tps = scot_tokens / (reasoning_total / 1000.0)
    vanilla_tps = RETHINK_THINK_TOKENS / (rethink / 1000.0)

    return {
        "stages_ms": stages,
        "split": split,
        "speedup": speedup,
        "scot_tps": scot_tps,
        "vanilla_tps": vanilla_tps,
        "throughput_ratio": scot_tps / vanilla_tps,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--hard-rate", type=float, default=0.098,
                        help="share of questions no draft can solve")
    args = parser.parse_args(argv)
    if not 0.0 <= args.hard_rate <= 1.0:
        parser.error("--hard-rate must be within [0, 1]")

    pred = predictions(args.hard_rate)
    print(f"hard rate: {args.hard_rate:.3f}")
    print("stage latencies (ms):")
    for name, value in pred["stages_ms"].items():
        print(f"  {name:<10} {value:8.1f}")
    split = pred["split"]
    print("expected reasoning-latency split:")
    for key in ("target", "draft", "selection"):
        print(f"  {key:<10} {split[key]:.3f}")
    print(f"expected paired speedup: {pred['speedup']:.2f}x")
    print(f"valid-token throughput: {pred['scot_tps']:.2f} tok/s "
          f"vs vanilla {pred['vanilla_tps']:.2f} tok/s "
          f"(ratio {pred['throughput_ratio']:.2f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
