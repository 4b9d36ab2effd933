from __future__ import annotations

from dataclasses import dataclass

from .gan.networks import SCALES, ScaleState


@dataclass(frozen=True)
class ScaleSchedule:
    start_scale: int = 4
    final_scale: int = 64
    iterations_per_scale: int = 25_000
    fade_iterations: int = 12_500

    def __post_init__(self):
        if self.start_scale not in SCALES or self.final_scale not in SCALES:
            raise ValueError(f"scales must be in {SCALES}")
        if self.final_scale < self.start_scale:
            raise ValueError("final_scale must be >= start_scale")
        if self.iterations_per_scale < 1 or self.fade_iterations < 1:
            raise ValueError("iteration counts must be positive")
        if self.fade_iterations > self.iterations_per_scale:
            raise ValueError("fade_iterations must not exceed iterations_per_scale")

    @property
    def n_growths(self) -> int:
        return SCALES.index(self.final_scale) - SCALES.index(self.start_scale)

    @property
    def full_length(self) -> int:
        """Iterations until the last stage has run as long as every other stage."""
        return self.iterations_per_scale * (self.n_growths + 1)

    def growth_iterations(self) -> list[int]:
        return [self.iterations_per_scale * k for k in range(1, self.n_growths + 1)]


def schedule_state(iteration: int, schedule: ScaleSchedule) -> ScaleState:
    """Active scale and fade-in weight after ``iteration`` completed iterations."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    stage = iteration // schedule.iterations_per_scale
    if stage == 0:
        return ScaleState(schedule.start_scale, 1.0)
    if stage >= schedule.n_growths:
        # the final scale runs at full weight from the moment it is reached
        return ScaleState(schedule.final_scale, 1.0)
    scale = schedule.start_scale * 2 ** stage
    offset = iteration - stage * schedule.iterations_per_scale
    alpha = min(1.0, offset / schedule.fade_iterations)
    return ScaleState(scale, alpha)
