"""Pipeline configuration shared by the planner, validator, and dataset tools."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one plot-generation run.

    ``char_range`` and ``sub_range`` are inclusive (lo, hi) bounds;
    ``candidates_per_step`` is the rejection-sampling width k;
    ``sequential_candidates`` switches to one API call per candidate for
    endpoints that do not support an ``n`` parameter (every call is then
    counted in the ledger).
    """

    char_range: tuple[int, int] = (3, 6)
    max_top_points: int = 4
    sub_range: tuple[int, int] = (3, 4)
    candidates_per_step: int = 4
    max_step_retries: int = 2
    annotate_scenes: bool = True
    seed: int = 0
    sequential_candidates: bool = False

    def __post_init__(self) -> None:
        for name, (lo, hi) in (("char_range", self.char_range), ("sub_range", self.sub_range)):
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must be a non-empty positive range, got {(lo, hi)}")
        if self.max_top_points < 1:
            raise ValueError("max_top_points must be >= 1")
        if self.candidates_per_step < 1:
            raise ValueError("candidates_per_step must be >= 1")
        if self.max_step_retries < 0:
            raise ValueError("max_step_retries must be >= 0")
