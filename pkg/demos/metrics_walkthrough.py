"""Gated @k metrics, token efficiency and run-level confidence intervals."""

from __future__ import annotations

from guiplay.metrics import (
    SampleOutcomes,
    TokenLedger,
    aggregate_stage,
    confidence_interval,
    efficiency_at_k,
    estimate_at_k,
)

# Three samples per problem; one of them survives behavioral play.
print("play@1 with 1 of 3 good samples:", estimate_at_k(3, 1, 1))
print("play@3 with 1 of 3 good samples:", estimate_at_k(3, 1, 3))

# Each stage gates the next, so counts shrink from exec to play.
suite = [
    SampleOutcomes("flappy_collision", 3, c_exec=3, c_pass=3, c_play=1),
    SampleOutcomes("game2048_glyphs", 3, c_exec=2, c_pass=1, c_play=0),
    SampleOutcomes("snake_wraparound", 3, c_exec=3, c_pass=2, c_play=2),
]
for k in (1, 3):
    row = {stage: round(aggregate_stage(suite, stage, k), 4) for stage in ("exec", "pass", "play")}
    print(f"k={k}", row)

# Efficiency divides Play% by thousands of tokens spent per problem.
play_pct = 100 * aggregate_stage(suite, "play", 1)
ledger = TokenLedger.from_total(total_tokens=3 * 4267, n_problems=3)
print("efficiency@1:", round(efficiency_at_k(play_pct, ledger, 1), 3))

# Five independent runs give a mean and a Student-t half width.
mean, half = confidence_interval([0.31, 0.36, 0.29, 0.40, 0.33])
print(f"play@1 over runs: {mean:.3f} +/- {half:.3f}")
