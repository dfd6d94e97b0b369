"""Learning-rate and exploration schedules."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

SCHEDULE_KINDS = ("global_stair", "per_visit_count", "constant")


@dataclass(frozen=True)
class LearningRateSchedule:
    """Step sizes for the stochastic-approximation updates.

    ``global_stair``
        ``1 / (1 + floor(t / width))`` from the global step counter.
    ``per_visit_count``
        ``1 / (n + offset)`` where ``n`` counts updates of the entry, this one
        included. Harmonic in ``n``, so the sum diverges and the squares sum.
    ``constant``
        ``value`` at every step (tabular stand-in for a fixed SGD rate).
    """

    kind: str = "global_stair"
    width: int = 250
    offset: float = 0.0
    value: float = 0.5

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if self.kind == "global_stair" and (int(self.width) != self.width or self.width < 1):
            raise ValueError("stair width must be a positive integer")
        if self.kind == "per_visit_count" and self.offset < 0:
            raise ValueError("offset must be non-negative")
        if self.kind == "constant" and not 0.0 < self.value <= 1.0:
            raise ValueError("constant rate must lie in (0, 1]")

    def rate(self, t, visits):
        if self.kind == "global_stair":
            return 1.0 / (1 + t // self.width)
        if self.kind == "per_visit_count":
            return 1.0 / (visits + self.offset)
        return self.value

    def rate_function(self):
        """Specialised ``f(t, visits) -> alpha`` for the inner loops."""
        if self.kind == "global_stair":
            w = int(self.width)
            return lambda t, n: 1.0 / (1 + t // w)
        if self.kind == "per_visit_count":
            off = float(self.offset)
            return lambda t, n: 1.0 / (n + off)
        v = float(self.value)
        return lambda t, n: v

    def to_dict(self):
        d = asdict(self)
        keep = {"global_stair": ("kind", "width"), "per_visit_count": ("kind", "offset"),
                "constant": ("kind", "value")}[self.kind]
        return {k: d[k] for k in keep}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class ExplorationSchedule:
    """``eps_t = max(epsilon_min, 1 / (1 + t / decay))``.

    ``decay=None`` resolves to a tenth of the run horizon. Behaviour is
    ``(1 - eps) * best_response + eps * uniform``; update targets ignore eps.
    """

    epsilon_min: float = 0.01
    decay: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon_min <= 1.0:
            raise ValueError("epsilon_min must lie in [0, 1]")
        if self.decay is not None and self.decay <= 0:
            raise ValueError("decay must be positive")

    def resolve(self, horizon):
        return self.decay if self.decay is not None else max(horizon / 10.0, 1e-12)

    def epsilon(self, t, horizon):
        return max(self.epsilon_min, 1.0 / (1.0 + t / self.resolve(horizon)))

    def to_dict(self):
        return {"epsilon_min": self.epsilon_min, "decay": self.decay}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class VisitCounter:
    """Update counts per table entry; ``count`` is the number of updates applied."""

    def __init__(self, shape):
        self._counts = np.zeros(shape, dtype=np.int64).tolist()

    def increment(self, s, a):
        row = self._counts[s]
        row[a] += 1
        return row[a]

    @property
    def counts(self):
        return np.array(self._counts, dtype=np.int64)
