"""Operation-count cost model for the three-level recognizer.

Every arithmetic operation, shift, comparison or activation evaluation counts
as one operation. Per-second stages are rounded half-up individually before
totaling, which is how the published stage values (e.g. 609.5 -> 610) add up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass(frozen=True)
class CostParams:
    f_i: float = 2000.0
    f_s: float = 150.0
    jm_events_per_s: float = 2.0
    jm_mlp: tuple[int, int, int] = (5, 6, 4)
    activity_mlp: tuple[int, int, int] = (5, 10, 3)
    segment_s: float = 300.0

    def __post_init__(self):
        if self.f_i <= 0 or self.f_s <= 0 or self.segment_s <= 0:
            raise ConfigError("rates and segment length must be positive")
        if self.jm_events_per_s < 0:
            raise ConfigError("jm_events_per_s must be nonnegative")
        if min(self.jm_mlp) <= 0 or min(self.activity_mlp) <= 0:
            raise ConfigError("MLP layer sizes must be positive")


@dataclass(frozen=True)
class Stage:
    level: str
    name: str
    value: int
    unit: str  # "ops/s" or "ops/segment"
    exact: float


@dataclass
class OpsBudget:
    name: str
    stages: list[Stage] = field(default_factory=list)
    segment_s: float = 300.0

    @property
    def ops_per_s(self) -> int:
        return sum(s.value for s in self.stages if s.unit == "ops/s")

    @property
    def ops_per_segment(self) -> int:
        return sum(s.value for s in self.stages if s.unit == "ops/segment")

    @property
    def total_per_segment(self) -> float:
        """Everything expressed per segment (per-second stages times segment length)."""
        total = self.ops_per_s * self.segment_s + self.ops_per_segment
        return int(total) if float(total).is_integer() else total

    @property
    def amortized_ops_per_s(self) -> float:
        return self.ops_per_s + self.ops_per_segment / self.segment_s

    def level_total(self, level: str) -> int:
        return sum(s.value for s in self.stages if s.level == level and s.unit == "ops/s")

    def rows(self) -> list[dict]:
        return [
            {"level": s.level, "stage": s.name, "value": s.value, "unit": s.unit, "exact": s.exact}
            for s in self.stages
        ]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def mlp_ops(n_in: int, n_hidden: int, n_out: int) -> int:
    """Operations for one forward pass of an in-hidden-out tanh/softmax MLP.

    Hidden layer: multiply-accumulate plus bias and tanh per neuron; output
    layer: multiply-accumulate per neuron; the remaining ``2*out + 9`` covers
    softmax normalisation and the argmax decision. Gives 131 for 5-6-4 and
    185 for 5-10-3.
    """
    return 2 * n_in * n_hidden + n_hidden + 2 * n_hidden * n_out + 2 * n_out + 9


def cost(params: CostParams | None = None, name: str = "NRFAR") -> OpsBudget:
    p = params or CostParams()
    fi, fs, r = p.f_i, p.f_s, p.jm_events_per_s
    bottom, middle, top = "bottom", "middle", "top"

    per_s = [
        (bottom, "audio pre-processing", 7 * fi + fi),
        (bottom, "signal computation", (11 * fi + fs) + (fi + 2 * fs)),
        (middle, "JM-event detection", r * ((4 + 0.925 * fs) + (12 + fs))),
        (middle, "JM feature extraction", r * 3.5 * fs),
        (middle, "JM-event classification", r * ((fs + 3) + mlp_ops(*p.jm_mlp))),
        (middle, "threshold tuning", r * (fs + 39)),
        (top, "segment buffering", r * 2),
    ]
    per_segment = [
        # one accumulation per buffered event plus the five feature divisions/normalisations
        (top, "activity feature extraction", r * p.segment_s + 8),
        (top, "activity classification", mlp_ops(*p.activity_mlp)),
        (top, "smoothing", 2),
    ]
    budget = OpsBudget(name=name, segment_s=p.segment_s)
    for level, stage, value in per_s:
        budget.stages.append(Stage(level, stage, round_half_up(value), "ops/s", float(value)))
    for level, stage, value in per_segment:
        budget.stages.append(Stage(level, stage, round_half_up(value), "ops/segment", float(value)))
    return budget


# Published totals of the two reference recognizers, in ops/s.
REFERENCE_TOTALS = {"BUFAR": 37966, "JMFAR": 50445}


def relative_difference(a: float, b: float) -> float:
    """Percentage by which ``a`` is higher (positive) or lower (negative) than ``b``."""
    if b == 0:
        raise ConfigError("reference total must be nonzero")
    return 100.0 * (a - b) / b


def compare(budgets: list[OpsBudget | tuple[str, float]]) -> list[dict]:
    """Pairwise percentage differences of ops/s totals.

    Entries can be budgets or ``(name, ops_per_s)`` pairs for recognizers only
    known through their published totals.
    """
    if len(budgets) < 2:
        raise ConfigError("need at least two budgets to compare")
    named = []
    for b in budgets:
        if isinstance(b, OpsBudget):
            named.append((b.name, float(b.ops_per_s)))
        else:
            named.append((b[0], float(b[1])))
    report = []
    for i, (na, ta) in enumerate(named):
        for nb, tb in named[i + 1:]:
            report.append({
                "a": na, "b": nb, "a_ops_per_s": ta, "b_ops_per_s": tb,
                "percent": relative_difference(ta, tb),
            })
    return report


def format_table(budget: OpsBudget, fmt: str = "csv") -> str:
    rows = budget.rows()
    if fmt == "csv":
        lines = ["level,stage,value,unit"]
        lines += [f"{r['level']},{r['stage']},{r['value']},{r['unit']}" for r in rows]
        lines.append(f"total,per second,{budget.ops_per_s},ops/s")
        lines.append(f"total,per segment,{budget.ops_per_segment},ops/segment")
        lines.append(f"total,all per segment,{budget.total_per_segment},ops/segment")
        return "\n".join(lines) + "\n"
    if fmt in ("md", "markdown"):
        lines = ["| level | stage | value | unit |", "|---|---|---:|---|"]
        lines += [f"| {r['level']} | {r['stage']} | {r['value']:,} | {r['unit']} |" for r in rows]
        lines.append(f"| total | per second | {budget.ops_per_s:,} | ops/s |")
        lines.append(f"| total | per segment | {budget.ops_per_segment:,} | ops/segment |")
        lines.append(f"| total | all per segment | {budget.total_per_segment:,} | ops/segment |")
        lines.append(f"| total | amortized | {budget.amortized_ops_per_s:,.2f} | ops/s |")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown table format {fmt!r}")
