"""Counts-based execution of third-state approximate-majority population protocols.

A population is represented by exact per-state counts (agents are anonymous,
so the multiset of states is a sufficient statistic).  One step of the
uniform random scheduler either injects a single-agent leak fault (with
probability beta) or draws an ordered pair (or triple) of distinct agents
and applies the matching rule.  Null draws consume a time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, Optional

import numpy as np

from ._kernel import run_kernel

# Internal count-slot layout shared with the jitted kernel.
# STUB is the stubborn-Y Byzantine pseudo-slot: agents that interact as Y
# but never update their own state.
SLOT_X, SLOT_Y, SLOT_B, SLOT_IX, SLOT_IY, SLOT_T, SLOT_STUB = range(7)


class AgentState(Enum):
    X = "X"
    Y = "Y"
    B = "B"
    I_X = "I_X"
    I_Y = "I_Y"
    T = "T"

    @property
    def persistent(self) -> bool:
        return self in (AgentState.I_X, AgentState.I_Y, AgentState.T)


_STATE_TO_SLOT = {
    AgentState.X: SLOT_X,
    AgentState.Y: SLOT_Y,
    AgentState.B: SLOT_B,
    AgentState.I_X: SLOT_IX,
    AgentState.I_Y: SLOT_IY,
    AgentState.T: SLOT_T,
}
_SLOT_TO_STATE = {v: k for k, v in _STATE_TO_SLOT.items()}
# The stubborn pseudo-slot presents itself as Y to interaction partners.
_SLOT_TO_STATE[SLOT_STUB] = AgentState.Y


class ProtocolKind(Enum):
    TRIAM = "triam"
    DBAM = "dbam"
    DBAMC = "dbamc"


class LeakModel(Enum):
    NONE = "none"
    ADVERSARIAL = "adversarial"
    WEAK = "weak"


class LeakPool(Enum):
    ALL_AGENTS = "all"
    WORKERS_ONLY = "workers"


class ByzMode(Enum):
    NONE = "none"
    STUBBORN_Y = "stubborn"
    SUPER_ADVERSARIAL = "super"


class StepClass(IntEnum):
    NULL = 0
    PRODUCTIVE_XY = 1
    PRODUCTIVE_BLANK = 2
    LEAK = 3
    BYZ_CONTACT = 4


class TerminalClass(Enum):
    ALL_X = "ALL_X"
    ALL_Y = "ALL_Y"
    ALL_BLANK_DEADLOCK = "ALL_BLANK_DEADLOCK"
    NONE = "NONE"


class StopMode(Enum):
    AT_CONVERGENCE = "at_convergence"
    AT_HORIZON = "at_horizon"


class EngineError(ValueError):
    pass


@dataclass
class FaultSpec:
    leak_model: LeakModel = LeakModel.NONE
    beta: float = 0.0
    leak_pool: LeakPool = LeakPool.ALL_AGENTS
    byz_mode: ByzMode = ByzMode.NONE
    byz_count: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise EngineError(f"beta must be in [0,1], got {self.beta}")
        if self.byz_count < 0:
            raise EngineError("byz_count must be nonnegative")
        if self.byz_mode is ByzMode.NONE and self.byz_count != 0:
            raise EngineError("byz_count requires a Byzantine mode")

    @property
    def leaking(self) -> bool:
        # beta == 0 must be indistinguishable from a leak-free run.
        return self.leak_model is not LeakModel.NONE and self.beta > 0.0


@dataclass
class Configuration:
    """Exact per-state counts of the whole population.

    ``byz_stubborn_y`` tracks stubborn-Y Byzantine agents separately from
    honest Y agents; ``counts[T]`` holds super-adversarial agents.
    """

    counts: np.ndarray  # int64[6], indexed by SLOT_X..SLOT_T
    model: str = "standard"  # "standard" | "ci"
    byz_stubborn_y: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (6,):
            raise EngineError("counts must have one entry per agent state")
        if (self.counts < 0).any() or self.byz_stubborn_y < 0:
            raise EngineError("negative counts are not allowed")
        if self.model not in ("standard", "ci"):
            raise EngineError(f"unknown model {self.model!r}")

    @classmethod
    def from_counts(cls, mapping: dict, model: str = "standard",
                    byz_stubborn_y: int = 0) -> "Configuration":
        counts = np.zeros(6, dtype=np.int64)
        for state, c in mapping.items():
            if isinstance(state, str):
                state = AgentState(state)
            counts[_STATE_TO_SLOT[state]] = c
        return cls(counts=counts, model=model, byz_stubborn_y=byz_stubborn_y)

    # Count accessors (conventional notation: x, y, b, i_X, i_Y).
    @property
    def x(self) -> int:
        return int(self.counts[SLOT_X])

    @property
    def y(self) -> int:
        return int(self.counts[SLOT_Y])

    @property
    def b(self) -> int:
        return int(self.counts[SLOT_B])

    @property
    def i_x(self) -> int:
        return int(self.counts[SLOT_IX])

    @property
    def i_y(self) -> int:
        return int(self.counts[SLOT_IY])

    @property
    def t(self) -> int:
        return int(self.counts[SLOT_T])

    @property
    def workers(self) -> int:
        """Honest worker count m = x + y + b."""
        return self.x + self.y + self.b

    @property
    def total(self) -> int:
        """Total population N, Byzantine extras included."""
        return int(self.counts.sum()) + self.byz_stubborn_y

    @property
    def margin(self) -> int:
        """Input margin: |i_X - i_Y| in CI mode, |x - y| otherwise."""
        if self.model == "ci":
            return abs(self.i_x - self.i_y)
        return abs(self.x - self.y)

    def slot_counts(self) -> np.ndarray:
        """Counts over the 7 internal slots (stubborn-Y agents last)."""
        out = np.zeros(7, dtype=np.int64)
        out[:6] = self.counts
        out[SLOT_STUB] = self.byz_stubborn_y
        return out

    def copy(self) -> "Configuration":
        return Configuration(counts=self.counts.copy(), model=self.model,
                             byz_stubborn_y=self.byz_stubborn_y)

    def as_dict(self) -> dict:
        return {s.value: int(self.counts[i]) for i, s in _SLOT_TO_STATE.items()
                if i < 6 and self.counts[i] > 0}


@dataclass
class ProtocolSpec:
    kind: ProtocolKind
    arity: int
    rules: dict  # ordered state tuple -> state tuple
    converged: Callable[[Configuration], bool]

    def __post_init__(self):
        for lhs, rhs in self.rules.items():
            if len(lhs) != self.arity or len(rhs) != self.arity:
                raise EngineError("rule arity mismatch")
            for s_in, s_out in zip(lhs, rhs):
                if s_in.persistent and s_out is not s_in:
                    raise EngineError(f"rule {lhs}->{rhs} changes persistent tag")
        if self.arity == 2:
            # Pairwise rules must be symmetric under initiator/responder swap.
            for (a, b), (c, d) in self.rules.items():
                swapped = self.rules.get((b, a))
                if swapped is not None and swapped != (d, c):
                    raise EngineError(f"rule {(a, b)} is not swap-symmetric")


def make_protocol(kind: ProtocolKind | str) -> ProtocolSpec:
    """Build the rule table and convergence predicate for one protocol."""
    if isinstance(kind, str):
        try:
            kind = ProtocolKind(kind.lower())
        except ValueError:
            raise EngineError(f"unknown protocol kind {kind!r}") from None
    X, Y, B, IX, IY = (AgentState.X, AgentState.Y, AgentState.B,
                       AgentState.I_X, AgentState.I_Y)
    if kind is ProtocolKind.TRIAM:
        rules = {}
        # All orderings of X+X+Y -> X+X+X and X+Y+Y -> Y+Y+Y.
        for lhs_base, out in (((X, X, Y), X), ((X, Y, Y), Y)):
            import itertools
            for perm in set(itertools.permutations(lhs_base)):
                rules[perm] = (out,) * 3
        return ProtocolSpec(kind, 3, rules,
                            converged=lambda c: c.x == 0 or c.y == 0)
    if kind is ProtocolKind.DBAM:
        rules = {
            (X, Y): (B, B),
            (X, B): (X, X),
            (Y, B): (Y, Y),
        }
        # Initial X-majority is the target consensus.
        return ProtocolSpec(kind, 2, rules,
                            converged=lambda c: c.x == c.workers and c.workers > 0)
    if kind is ProtocolKind.DBAMC:
        rules = {
            (X, Y): (B, B),
            (X, B): (X, X),
            (Y, B): (Y, Y),
            (IX, B): (IX, X),
            (IY, B): (IY, Y),
        }
        # All workers in the majority-accepting state.
        return ProtocolSpec(kind, 2, rules,
                            converged=lambda c: c.x == c.workers and c.workers > 0)
    raise EngineError(f"unknown protocol kind {kind!r}")


def init_configuration(model: str, n_inputs: int, m_workers: int, margin: int,
                       initial_workers: str = "all-blank",
                       byz: Optional[FaultSpec] = None) -> Configuration:
    """Build the initial configuration for one run.

    CI: inputs split (n+margin)/2 vs (n-margin)/2, workers all blank (or
    split the same way when ``initial_workers="split"``).  Standard: the
    whole population splits X vs Y with the given margin.  Byzantine extras
    are appended on top of the honest counts.
    """
    if margin < 0:
        raise EngineError("margin must be nonnegative")
    byz = byz or FaultSpec()
    counts = np.zeros(6, dtype=np.int64)
    stub = 0
    if model == "ci":
        if margin > n_inputs:
            raise EngineError("margin exceeds input population")
        if (n_inputs + margin) % 2 != 0:
            raise EngineError(f"margin {margin} has wrong parity for n={n_inputs}")
        counts[SLOT_IX] = (n_inputs + margin) // 2
        counts[SLOT_IY] = (n_inputs - margin) // 2
        if initial_workers == "all-blank":
            counts[SLOT_B] = m_workers
        elif initial_workers == "split":
            if (m_workers + margin) % 2 != 0 or margin > m_workers:
                raise EngineError("worker split margin invalid")
            counts[SLOT_X] = (m_workers + margin) // 2
            counts[SLOT_Y] = (m_workers - margin) // 2
        else:
            raise EngineError(f"unknown initial_workers {initial_workers!r}")
    elif model == "standard":
        n = n_inputs
        if margin > n:
            raise EngineError("margin exceeds population")
        if (n + margin) % 2 != 0:
            raise EngineError(f"margin {margin} has wrong parity for n={n}")
        counts[SLOT_X] = (n + margin) // 2
        counts[SLOT_Y] = (n - margin) // 2
    else:
        raise EngineError(f"unknown model {model!r}")
    if byz.byz_mode is ByzMode.STUBBORN_Y:
        stub = byz.byz_count
    elif byz.byz_mode is ByzMode.SUPER_ADVERSARIAL:
        counts[SLOT_T] = byz.byz_count
    return Configuration(counts=counts, model=model, byz_stubborn_y=stub)


def auto_margin(total_population: int, alpha: float = 1.0,
                parity_of: Optional[int] = None) -> int:
    """Smallest integer >= alpha * sqrt(N ln N), rounded up to the parity of
    ``parity_of`` (defaults to N) so initial counts stay integral."""
    n_ref = total_population if parity_of is None else parity_of
    margin = math.ceil(alpha * math.sqrt(total_population * math.log(total_population)))
    if margin % 2 != n_ref % 2:
        margin += 1
    return margin


def _sample_slots(slot_counts: np.ndarray, arity: int, rng: np.random.Generator):
    """Draw an ordered tuple of distinct agents; returns their slots."""
    total = int(slot_counts.sum())
    if total < arity:
        raise EngineError(f"population {total} smaller than arity {arity}")
    c = slot_counts.copy()
    picked = []
    for k in range(arity):
        r = int(rng.random() * (total - k))
        acc = 0
        for s in range(7):
            acc += c[s]
            if r < acc:
                picked.append(s)
                c[s] -= 1
                break
    return tuple(picked)


def sample_interaction(cfg: Configuration, arity: int,
                       rng: np.random.Generator) -> tuple:
    """Uniform ordered draw of ``arity`` distinct agents, returned as states.

    Stubborn-Y Byzantine agents present as Y.
    """
    slots = _sample_slots(cfg.slot_counts(), arity, rng)
    return tuple(_SLOT_TO_STATE[s] for s in slots)


_BLANK_PAIRS = {
    frozenset((AgentState.B, AgentState.X)),
    frozenset((AgentState.B, AgentState.Y)),
    frozenset((AgentState.B, AgentState.I_X)),
    frozenset((AgentState.B, AgentState.I_Y)),
}


def apply_rule(spec: ProtocolSpec, states: tuple,
               byz_mode: ByzMode = ByzMode.NONE):
    """Apply the matching rule to an ordered tuple of states.

    Returns (new states, StepClass).  Unmatched tuples are null.  In
    SUPER_ADVERSARIAL mode the extra rule T + _ -> T + Y applies to every
    non-catalytic partner.
    """
    if len(states) != spec.arity:
        raise EngineError("tuple arity does not match protocol")
    if byz_mode is ByzMode.SUPER_ADVERSARIAL and AgentState.T in states:
        out = tuple(AgentState.Y if (s is not AgentState.T and not s.persistent)
                    else s for s in states)
        if out != states:
            return out, StepClass.BYZ_CONTACT
        return states, StepClass.NULL
    image = spec.rules.get(states)
    if image is None and spec.arity == 2:
        rev = spec.rules.get((states[1], states[0]))
        if rev is not None:
            image = (rev[1], rev[0])
    if image is None:
        return states, StepClass.NULL
    if spec.arity == 2 and frozenset(states) in _BLANK_PAIRS:
        cls = StepClass.PRODUCTIVE_BLANK
    else:
        cls = StepClass.PRODUCTIVE_XY
    return image, cls


def leak(fault: FaultSpec, s: AgentState) -> AgentState:
    """Leak function: adversarial maps every worker state to Y; weak lowers
    confidence by one degree (X->B, B->Y).  Persistent tags are fixed points."""
    if fault.leak_model is LeakModel.NONE:
        raise EngineError("leak() requires an active leak model")
    if s.persistent:
        return s
    if fault.leak_model is LeakModel.ADVERSARIAL:
        return AgentState.Y
    # WEAK
    if s is AgentState.X:
        return AgentState.B
    return AgentState.Y  # B -> Y, Y -> Y


@dataclass
class StepOutcome:
    step_class: StepClass
    before: tuple
    after: tuple


def step(cfg: Configuration, spec: ProtocolSpec, fault: FaultSpec,
         rng: np.random.Generator) -> StepOutcome:
    """Advance the configuration by exactly one scheduler time step.

    With probability beta a leak is applied to one agent drawn uniformly
    from the leak pool; otherwise an ordered tuple of distinct agents is
    drawn and the matching rule applied.  Mutates ``cfg`` in place.
    """
    counts = cfg.counts
    if fault.leaking and rng.random() < fault.beta:
        if fault.leak_pool is LeakPool.WORKERS_ONLY:
            pool = [SLOT_X, SLOT_Y, SLOT_B]
        else:
            pool = [SLOT_X, SLOT_Y, SLOT_B, SLOT_IX, SLOT_IY, SLOT_T, SLOT_STUB]
        weights = [cfg.byz_stubborn_y if s == SLOT_STUB else int(counts[s])
                   for s in pool]
        total = sum(weights)
        if total == 0:
            raise EngineError("leak pool is empty")
        r = int(rng.random() * total)
        acc = 0
        slot = pool[-1]
        for s, w in zip(pool, weights):
            acc += w
            if r < acc:
                slot = s
                break
        # Byzantine agents never change state; catalysts are fixed points.
        if slot in (SLOT_X, SLOT_Y, SLOT_B):
            before = _SLOT_TO_STATE[slot]
            after = leak(fault, before)
            counts[_STATE_TO_SLOT[before]] -= 1
            counts[_STATE_TO_SLOT[after]] += 1
            return StepOutcome(StepClass.LEAK, (before,), (after,))
        before = _SLOT_TO_STATE[slot]
        return StepOutcome(StepClass.LEAK, (before,), (before,))

    slots = _sample_slots(cfg.slot_counts(), spec.arity, rng)
    states = tuple(_SLOT_TO_STATE[s] for s in slots)

    # Stubborn-Y participants interact as Y but never update their own state.
    stub_positions = {i for i, s in enumerate(slots) if s == SLOT_STUB}
    new_states, cls = apply_rule(spec, states, byz_mode=fault.byz_mode)
    changed = False
    for i, (s_old, s_new) in enumerate(zip(states, new_states)):
        if i in stub_positions or s_old is s_new:
            continue
        counts[_STATE_TO_SLOT[s_old]] -= 1
        counts[_STATE_TO_SLOT[s_new]] += 1
        changed = True
    if stub_positions and changed and cls in (StepClass.PRODUCTIVE_XY,
                                              StepClass.PRODUCTIVE_BLANK):
        cls = StepClass.BYZ_CONTACT
    if not changed and cls is not StepClass.NULL and stub_positions:
        cls = StepClass.NULL
    return StepOutcome(cls, states, new_states)


@dataclass
class TrajectoryPoint:
    step: int
    x: int
    y: int
    b: int
    cum_null: int
    cum_xy: int
    cum_blank: int
    cum_leaks: int
    cum_byz: int


@dataclass
class RunResult:
    steps_run: int
    converged: bool
    steps_to_converge: Optional[int]
    final: Configuration
    terminal_class: TerminalClass
    cum_null: int
    cum_xy: int
    cum_blank: int
    cum_leaks: int
    cum_byz: int
    trajectory: list = field(default_factory=list)


_KIND_CODE = {ProtocolKind.TRIAM: 0, ProtocolKind.DBAM: 1, ProtocolKind.DBAMC: 2}


def terminal_class_of(cfg: Configuration) -> TerminalClass:
    m = cfg.workers
    if m == 0:
        return TerminalClass.NONE
    if cfg.x == m:
        return TerminalClass.ALL_X
    if cfg.y == m:
        return TerminalClass.ALL_Y
    if cfg.b == m:
        return TerminalClass.ALL_BLANK_DEADLOCK
    return TerminalClass.NONE


def run(cfg: Configuration, spec: ProtocolSpec, fault: FaultSpec, seed: int,
        horizon: int, stop: StopMode = StopMode.AT_CONVERGENCE,
        checkpoint_every: int = 0) -> RunResult:
    """Execute one full seeded run on a copy of ``cfg``.

    Stops at the convergence predicate (AT_CONVERGENCE), at the horizon, or
    when the chain is absorbed and no fault can ever change it again.
    Trajectory points are recorded every ``checkpoint_every`` steps (0 means
    endpoints only), always including step 0 and the final step.
    """
    if horizon < 0:
        raise EngineError("horizon must be nonnegative")
    if spec.kind is ProtocolKind.TRIAM and (
            fault.byz_mode is not ByzMode.NONE):
        raise EngineError("Byzantine modes are not supported for TRIAM")
    if cfg.total < spec.arity:
        raise EngineError("population smaller than interaction arity")
    work = cfg.copy()
    ce = checkpoint_every if checkpoint_every and checkpoint_every > 0 else horizon + 1
    max_ckpt = horizon // ce + 3
    traj = np.zeros((max_ckpt, 9), dtype=np.int64)
    beta = fault.beta if fault.leak_model is not LeakModel.NONE else 0.0
    (steps_run, conv, steps_to_conv, cum_null, cum_xy, cum_blank, cum_leak,
     cum_byz, n_ckpt, fx, fy, fb) = run_kernel(
        work.counts.copy(), work.byz_stubborn_y, _KIND_CODE[spec.kind],
        beta, 1 if fault.leak_model is LeakModel.WEAK else 0,
        1 if fault.leak_pool is LeakPool.WORKERS_ONLY else 0,
        1 if fault.byz_mode is ByzMode.SUPER_ADVERSARIAL else 0,
        int(horizon), 1 if stop is StopMode.AT_CONVERGENCE else 0,
        int(ce), np.uint32(seed & 0xFFFFFFFF), traj)
    final_counts = work.counts.copy()
    final_counts[SLOT_X], final_counts[SLOT_Y], final_counts[SLOT_B] = fx, fy, fb
    final = Configuration(counts=final_counts, model=work.model,
                          byz_stubborn_y=work.byz_stubborn_y)
    trajectory = [TrajectoryPoint(*map(int, traj[i])) for i in range(n_ckpt)]
    return RunResult(
        steps_run=int(steps_run), converged=bool(conv),
        steps_to_converge=int(steps_to_conv) if steps_to_conv >= 0 else None,
        final=final, terminal_class=terminal_class_of(final),
        cum_null=int(cum_null), cum_xy=int(cum_xy), cum_blank=int(cum_blank),
        cum_leaks=int(cum_leak), cum_byz=int(cum_byz), trajectory=trajectory)


class SampleValue(Enum):
    MAJ = "MAJ"
    MIN = "MIN"
    UNDECIDED = "UNDECIDED"


def sample_output(cfg: Configuration, rng: np.random.Generator) -> SampleValue:
    """Draw one honest worker uniformly and report its opinion (initial
    X-majority assumed)."""
    m = cfg.workers
    if m == 0:
        raise EngineError("worker pool is empty")
    r = int(rng.random() * m)
    if r < cfg.x:
        return SampleValue.MAJ
    if r < cfg.x + cfg.y:
        return SampleValue.MIN
    return SampleValue.UNDECIDED


def sample_error(cfg: Configuration) -> float:
    """Probability one uniform worker sample misreports the X majority."""
    m = cfg.workers
    if m == 0:
        raise EngineError("worker pool is empty")
    return (cfg.y + cfg.b) / m


def derive_seed(base_seed: int, trial_index: int) -> np.random.SeedSequence:
    """Statistically independent per-trial stream from one base seed."""
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_index,))


def kernel_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint32)[0])
