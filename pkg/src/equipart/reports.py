"""Verdicts and check reports shared by all check families."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping


class Verdict(str, enum.Enum):
    CONSISTENT = "CONSISTENT"
    REFUTED = "REFUTED"
    INCONCLUSIVE = "INCONCLUSIVE"
    STABLE_CANDIDATE = "STABLE-CANDIDATE"
    UNSTABLE = "UNSTABLE"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one numerical check.

    CONSISTENT only says that no counterexample above ``tol`` was found among
    the evaluated samples; it is not a proof.  REFUTED always carries the
    witness point with the largest residual.
    """

    verdict: Verdict
    max_residual: float
    tol: float
    samples: int
    excluded: int = 0
    witness: Mapping[str, float] | None = None
    sub_residuals: Mapping[str, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()
    legs: Mapping[str, "CheckReport"] = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict is Verdict.REFUTED and self.witness is None and not self.legs:
            raise ValueError("a REFUTED report needs a witness")

    @property
    def passed(self) -> bool:
        return self.verdict in (Verdict.CONSISTENT, Verdict.STABLE_CANDIDATE)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "max_residual": _enc(self.max_residual),
            "tol": _enc(self.tol),
            "samples": self.samples,
            "excluded": self.excluded,
            "witness": dict(self.witness) if self.witness is not None else None,
            "sub_residuals": {k: _enc(v) for k, v in self.sub_residuals.items()},
            "notes": list(self.notes),
            "legs": {k: v.to_dict() for k, v in self.legs.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CheckReport":
        return cls(
            verdict=Verdict(d["verdict"]),
            max_residual=_dec(d["max_residual"]),
            tol=_dec(d["tol"]),
            samples=int(d["samples"]),
            excluded=int(d["excluded"]),
            witness=dict(d["witness"]) if d["witness"] is not None else None,
            sub_residuals={k: _dec(v) for k, v in d["sub_residuals"].items()},
            notes=tuple(d["notes"]),
            legs={k: cls.from_dict(v) for k, v in d["legs"].items()},
        )


def _enc(x: float):
    # JSON has no inf/nan
    return x if math.isfinite(x) else repr(float(x))


def _dec(x) -> float:
    return float(x)
