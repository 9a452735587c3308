"""Progress measures, phase/stage classification, and trajectory CSV schema.

Half-integer progress values (x_hat = x + b/2, y_hat = y + b/2,
P = margin + x_hat - y_hat) are stored as doubled integers so all
progress arithmetic stays exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .engine import Configuration

TRAJECTORY_HEADER = ("step,x,y,b,x_hat2,y_hat2,P2,sample_error,phase,stage,"
                     "cum_productive,cum_blank,cum_leaks")


class Regime(Enum):
    NO_LEAK = "NO_LEAK"
    LARGE_BETA = "LARGE_BETA"
    SMALL_BETA = "SMALL_BETA"


@dataclass(frozen=True)
class PhaseParams:
    """Context needed to classify a snapshot: population sizes, the initial
    input margin, the leak rate, and the free threshold constants."""
    m: int                 # worker population (standard: the whole population)
    n: int                 # input population (standard: equal to m)
    margin: int
    beta: float = 0.0
    alpha: float = 1.0     # no-leak Phase 3 threshold constant
    a: float = 1.0         # leak-regime threshold constant
    ci: bool = True


@dataclass(frozen=True)
class PhaseTag:
    phase: str             # "1" | "2" | "3" | "DONE"
    stage: Optional[int]
    regime: Regime


@dataclass(frozen=True)
class ProgressSnapshot:
    step: int
    x: int
    y: int
    b: int
    x_hat2: int
    y_hat2: int
    P2: int
    sample_error: float
    phase: PhaseTag
    cum_productive: int
    cum_blank_consuming: int
    cum_leaks: int

    @property
    def x_hat(self) -> float:
        return self.x_hat2 / 2

    @property
    def y_hat(self) -> float:
        return self.y_hat2 / 2

    @property
    def P(self) -> float:
        return self.P2 / 2


def regime_of(params: PhaseParams) -> Regime:
    if params.beta == 0.0:
        return Regime.NO_LEAK
    pop = params.m if params.ci else params.n
    if params.beta > params.a * math.log(pop) / pop:
        return Regime.LARGE_BETA
    return Regime.SMALL_BETA


def _doubling_stage(P2: int, margin: int) -> Optional[int]:
    # Stage index t with P in [margin * 2^t, margin * 2^(t+1)).
    if margin <= 0 or P2 <= 0:
        return None
    return max(0, int(math.floor(math.log2(P2 / (2 * margin)))))


def _halving_stage(y_hat2: int, start2: float) -> Optional[int]:
    # Stage index s with y_hat in (start * 2^-(s+1), start * 2^-s].
    if y_hat2 <= 0 or start2 <= 0:
        return None
    return max(0, int(math.floor(math.log2(start2 / y_hat2))))


def classify_phase(x: int, y: int, b: int, params: PhaseParams) -> PhaseTag:
    """Phase/stage from the current counts only (pure; no hysteresis).

    No-leak runs follow the three-phase doubling/halving structure; leak
    runs follow the two-phase structure with terminal y_hat thresholds
    scaled by beta (large regime) or log (small regime).
    """
    regime = regime_of(params)
    m, n = params.m, params.n
    y_hat2 = 2 * y + b
    P2 = 2 * params.margin + (2 * x + b) - y_hat2

    if regime is Regime.NO_LEAK:
        if y_hat2 == 0:
            return PhaseTag("DONE", None, regime)
        phase3_thr2 = 2 * params.alpha * math.log(m) if m > 1 else 0.0
        if y_hat2 * 16 > 2 * m:  # y_hat > m/16
            return PhaseTag("1", _doubling_stage(P2, params.margin), regime)
        if y_hat2 > phase3_thr2:
            return PhaseTag("2", _halving_stage(y_hat2, 2 * m / 16), regime)
        return PhaseTag("3", None, regime)

    if params.ci:
        # DBAMC with leaks: Phase 1 until y_hat <= m/16, Phase 2 until the
        # terminal threshold 300*beta*m (large) or 300*a*log m (small).
        if regime is Regime.LARGE_BETA:
            done_thr2 = 2 * 300 * params.beta * m
        else:
            done_thr2 = 2 * 300 * params.a * math.log(m)
        if y_hat2 * 16 > 2 * m:
            return PhaseTag("1", _doubling_stage(P2, params.margin), regime)
        if y_hat2 > done_thr2:
            return PhaseTag("2", _halving_stage(y_hat2, 2 * m / 16), regime)
        return PhaseTag("DONE", None, regime)

    # DBAM with leaks: Phase 1 until x_hat - y_hat >= 2n/3 (y_hat <= n/6),
    # Phase 2 until 25*beta*n (large) or 25*a*log n (small).
    if regime is Regime.LARGE_BETA:
        done_thr2 = 2 * 25 * params.beta * n
    else:
        done_thr2 = 2 * 25 * params.a * math.log(n)
    if y_hat2 * 6 > 2 * n:  # y_hat > n/6
        return PhaseTag("1", _doubling_stage(P2, params.margin), regime)
    if y_hat2 > done_thr2:
        return PhaseTag("2", _halving_stage(y_hat2, 2 * n / 6), regime)
    return PhaseTag("DONE", None, regime)


def snapshot(cfg: Configuration, params: PhaseParams, step: int = 0,
             cum_productive: int = 0, cum_blank_consuming: int = 0,
             cum_leaks: int = 0) -> ProgressSnapshot:
    """Exact progress measures for a configuration (honest workers only)."""
    x, y, b = cfg.x, cfg.y, cfg.b
    m = x + y + b
    if m == 0:
        raise ValueError("worker population is empty")
    x_hat2 = 2 * x + b
    y_hat2 = 2 * y + b
    P2 = 2 * params.margin + x_hat2 - y_hat2
    return ProgressSnapshot(
        step=step, x=x, y=y, b=b, x_hat2=x_hat2, y_hat2=y_hat2, P2=P2,
        sample_error=(y + b) / m,
        phase=classify_phase(x, y, b, params),
        cum_productive=cum_productive,
        cum_blank_consuming=cum_blank_consuming,
        cum_leaks=cum_leaks)


def trajectory_rows(points, params: PhaseParams):
    """Render engine TrajectoryPoints as trajectory-CSV row dicts."""
    rows = []
    for p in points:
        m = p.x + p.y + p.b
        y_hat2 = 2 * p.y + p.b
        x_hat2 = 2 * p.x + p.b
        tag = classify_phase(p.x, p.y, p.b, params)
        rows.append({
            "step": p.step, "x": p.x, "y": p.y, "b": p.b,
            "x_hat2": x_hat2, "y_hat2": y_hat2,
            "P2": 2 * params.margin + x_hat2 - y_hat2,
            "sample_error": (p.y + p.b) / m if m else "",
            "phase": tag.phase,
            "stage": tag.stage if tag.stage is not None else "",
            "cum_productive": p.cum_xy + p.cum_blank + p.cum_byz,
            "cum_blank": p.cum_blank,
            "cum_leaks": p.cum_leaks,
        })
    return rows


def write_trajectory_csv(points, params: PhaseParams, path) -> None:
    fields = TRAJECTORY_HEADER.split(",")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in trajectory_rows(points, params):
            if isinstance(row["sample_error"], float):
                row["sample_error"] = f"{row['sample_error']:.9g}"
            writer.writerow(row)
