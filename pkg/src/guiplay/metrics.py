"""Unbiased @k estimators, Efficiency@k, token accounting and t-intervals.

Probabilities are fractions in [0, 1] everywhere in this module except the
``play_pct`` argument of :func:`efficiency_at_k`, which follows the published
tables (percent over thousands of tokens).
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ._ttable import T_CRITICAL

STAGES = ("exec", "pass", "play")


class MetricDomainError(ValueError):
    """Raised when a metric is asked for outside its domain."""


@dataclass(frozen=True)
class SampleOutcomes:
    """Per-problem success counts at each gated stage."""

    problem_id: str
    n: int
    c_exec: int
    c_pass: int
    c_play: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise MetricDomainError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.c_play <= self.c_pass <= self.c_exec <= self.n:
            raise MetricDomainError(
                "stage counts must satisfy 0 <= c_play <= c_pass <= c_exec <= n, "
                f"got play={self.c_play} pass={self.c_pass} exec={self.c_exec} n={self.n}"
            )

    def count(self, stage: str) -> int:
        if stage not in STAGES:
            raise MetricDomainError(f"unknown stage {stage!r}")
        return getattr(self, f"c_{stage}")


@dataclass
class TokenLedger:
    """Token usage over a set of LLM calls and the number of problems it covers."""

    per_call: list[tuple[str, int, int]] = field(default_factory=list)
    N: int = 0

    @property
    def total_tokens(self) -> int:
        return sum(tin + tout for _, tin, tout in self.per_call)

    @classmethod
    def from_total(cls, total_tokens: int, n_problems: int) -> "TokenLedger":
        return cls([("total", int(total_tokens), 0)], n_problems)

    def add(self, call_id: str, tokens_in: int, tokens_out: int) -> None:
        if tokens_in < 0 or tokens_out < 0:
            raise MetricDomainError("token counts must be non-negative")
        self.per_call.append((call_id, int(tokens_in), int(tokens_out)))

    def merged(self, other: "TokenLedger") -> "TokenLedger":
        return TokenLedger(self.per_call + other.per_call, self.N + other.N)


def estimate_at_k(n: int, c: int, k: int) -> float:
    """Probability that at least one of ``k`` draws (without replacement)
    from ``n`` samples hits one of the ``c`` successes.

    Equals ``1 - C(n-c, k) / C(n, k)``. The ratio is accumulated as a sum of
    ``log1p`` terms over whichever of ``k`` or ``c`` is shorter, so large
    ``n`` never touches a factorial.
    """
    if k < 1 or k > n:
        raise MetricDomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    if c < 0 or c > n:
        raise MetricDomainError(f"need 0 <= c <= n, got c={c}, n={n}")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    if k <= c:
        log_ratio = math.fsum(math.log1p(-c / (n - i)) for i in range(k))
    else:
        log_ratio = math.fsum(math.log1p(-k / i) for i in range(n - c + 1, n + 1))
    return -math.expm1(log_ratio)


def aggregate_stage(records: Sequence[SampleOutcomes], stage: str, k: int) -> float:
    """Mean of :func:`estimate_at_k` over problems for one stage."""
    if not records:
        raise MetricDomainError("cannot aggregate an empty record list")
    ns = {r.n for r in records}
    if len(ns) != 1:
        raise MetricDomainError(f"records mix sample counts: {sorted(ns)}")
    return math.fsum(estimate_at_k(r.n, r.count(stage), k) for r in records) / len(records)


def average_tokens_k(ledger: TokenLedger) -> float:
    """Average tokens per problem, in thousands."""
    if ledger.N <= 0:
        raise MetricDomainError("ledger must cover at least one problem")
    total = ledger.total_tokens
    if total <= 0:
        raise MetricDomainError("efficiency is undefined for zero token usage")
    return total / (ledger.N * 1e3)


def efficiency_at_k(play_pct: float, ledger: TokenLedger, k: int) -> float:
    """Play@k (in percent) per thousand tokens spent per problem.

    ``ledger`` must hold the tokens spent producing the first ``k`` samples of
    every problem that ``play_pct`` was computed over.
    """
    if k < 1:
        raise MetricDomainError(f"k must be >= 1, got {k}")
    return play_pct / average_tokens_k(ledger)


def efficiency_from_successes(expected_successes: float, total_tokens: int) -> float:
    """Efficiency@1 as successes per token, rescaled to percent per kilo-token.

    ``expected_successes`` is the sum over problems of ``c_play / n``. The
    problem count cancels, which makes this an independent route to the same
    value as :func:`efficiency_at_k` with ``k = 1``.
    """
    if total_tokens <= 0:
        raise MetricDomainError("efficiency is undefined for zero token usage")
    return 1e5 * expected_successes / total_tokens


def t_critical(level: float, df: int) -> float:
    """Two-sided Student-t critical value ``t_{(1+level)/2, df}``."""
    if df < 1:
        raise MetricDomainError(f"df must be >= 1, got {df}")
    table = T_CRITICAL.get(round(level, 6))
    if table is None:
        raise MetricDomainError(
            f"unsupported confidence level {level}; choose one of {sorted(T_CRITICAL)}"
        )
    if df <= len(table):
        return table[df - 1]
    # Cornish-Fisher expansion of t around the normal quantile.
    z = statistics.NormalDist().inv_cdf((1 + level) / 2)
    return z + (z**3 + z) / (4 * df) + (5 * z**5 + 16 * z**3 + 3 * z) / (96 * df**2)


def confidence_interval(run_means: Iterable[float], level: float = 0.95) -> tuple[float, float]:
    """Mean and t-based half-width over independent runs."""
    values = [float(v) for v in run_means]
    m = len(values)
    if m < 2:
        raise MetricDomainError("a confidence interval needs at least 2 runs")
    mean = statistics.fmean(values)
    s = statistics.stdev(values)
    return mean, t_critical(level, m - 1) * s / math.sqrt(m)


@dataclass
class MetricSummary:
    name: str
    per_run: list[float]
    mean: float
    half_width: float | None

    @classmethod
    def from_runs(cls, name: str, per_run: Sequence[float], level: float = 0.95) -> "MetricSummary":
        values = list(per_run)
        if len(values) >= 2:
            mean, half = confidence_interval(values, level)
        else:
            mean, half = (values[0] if values else float("nan")), None
        return cls(name, values, mean, half)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "per_run": self.per_run,
            "mean": self.mean,
            "half_width": self.half_width,
        }


@dataclass
class MetricReport:
    """Per-run @k and Efficiency@k values with their across-run summaries.

    Metric names are ``"<stage>@<k>"`` and ``"efficiency@<k>"``.
    """

    ks: list[int]
    runs: int
    metrics: dict[str, MetricSummary] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, summary in self.metrics.items():
            if summary.half_width is not None and summary.half_width < 0:
                raise MetricDomainError(f"{name}: negative CI half-width")
            if not name.startswith("efficiency"):
                for v in summary.per_run:
                    if not 0.0 <= v <= 1.0:
                        raise MetricDomainError(f"{name}: value {v} outside [0, 1]")

    def __getitem__(self, name: str) -> MetricSummary:
        return self.metrics[name]

    def to_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "runs": self.runs,
            "metrics": {name: m.to_dict() for name, m in self.metrics.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        return cls(
            ks=list(data["ks"]),
            runs=data["runs"],
            metrics={
                name: MetricSummary(m["name"], list(m["per_run"]), m["mean"], m["half_width"])
                for name, m in data["metrics"].items()
            },
        )

    def format_text(self) -> str:
        """Line-oriented ``key = value`` block; @k values shown in percent."""
        lines = [f"runs = {self.runs}", f"ks = {','.join(map(str, self.ks))}"]
        for name, m in self.metrics.items():
            scale = 1.0 if name.startswith("efficiency") else 100.0
            half = "n/a" if m.half_width is None else f"{m.half_width * scale:.2f}"
            lines.append(f"{name} = {m.mean * scale:.2f} +- {half}")
        return "\n".join(lines) + "\n"
