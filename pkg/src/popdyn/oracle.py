"""Exact small-instance ground truth and binomial-tail lower-bound machinery.

The Markov-chain side enumerates every count-configuration with the fixed
conserved totals, builds the exact one-step kernel (scheduler pair weights
plus leak branches), and solves absorption / finite-horizon questions by
dense linear algebra.  The analytic side evaluates the binomial lower-tail
exactly and the KL-based closed-form lower bound on it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, gammaln, logsumexp

from .engine import (SLOT_B, SLOT_IX, SLOT_IY, SLOT_STUB, SLOT_T, SLOT_X,
                     SLOT_Y, ByzMode, Configuration, FaultSpec, LeakModel,
                     LeakPool, ProtocolKind, ProtocolSpec)

MAX_CHAIN_N = 20
MAX_HORIZON_T = 10**6
MIN_SAMPLES_CAP = 10**9


class OracleError(ValueError):
    pass


def _key(slots) -> tuple:
    return tuple(int(v) for v in slots)


@dataclass
class ChainIndex:
    """Exhaustive enumeration of count-configurations with fixed conserved
    totals (worker total, catalyst counts, Byzantine counts)."""
    configs: list          # list of 7-slot count tuples
    index: dict            # tuple -> row number

    @classmethod
    def build(cls, template: Configuration) -> "ChainIndex":
        if template.total > MAX_CHAIN_N:
            raise OracleError(f"population {template.total} exceeds chain "
                              f"guard N <= {MAX_CHAIN_N}")
        m = template.workers
        fixed = (template.i_x, template.i_y, template.t, template.byz_stubborn_y)
        configs = []
        for x in range(m + 1):
            for y in range(m + 1 - x):
                b = m - x - y
                configs.append((x, y, b) + fixed)
        return cls(configs=configs, index={c: i for i, c in enumerate(configs)})


def _pair_successor(slots, s, t, spec: ProtocolSpec, byz_mode: ByzMode):
    """Apply the rule for an unordered slot pair; returns new slots or None."""
    x, y, b = slots[0], slots[1], slots[2]
    lo, hi = min(s, t), max(s, t)
    kind = spec.kind
    if byz_mode is ByzMode.SUPER_ADVERSARIAL and SLOT_T in (s, t):
        p = t if s == SLOT_T else s
        if p == SLOT_X:
            return (x - 1, y + 1, b) + slots[3:]
        if p == SLOT_B:
            return (x, y + 1, b - 1) + slots[3:]
        return None
    if SLOT_STUB in (s, t):
        p = t if s == SLOT_STUB else s
        if p == SLOT_X:
            return (x - 1, y, b + 1) + slots[3:]
        if p == SLOT_B:
            return (x, y + 1, b - 1) + slots[3:]
        return None
    if lo == SLOT_X and hi == SLOT_Y:
        return (x - 1, y - 1, b + 2) + slots[3:]
    if lo == SLOT_X and hi == SLOT_B:
        return (x + 1, y, b - 1) + slots[3:]
    if lo == SLOT_Y and hi == SLOT_B:
        return (x, y + 1, b - 1) + slots[3:]
    if kind is ProtocolKind.DBAMC and lo == SLOT_B and hi == SLOT_IX:
        return (x + 1, y, b - 1) + slots[3:]
    if kind is ProtocolKind.DBAMC and lo == SLOT_B and hi == SLOT_IY:
        return (x, y + 1, b - 1) + slots[3:]
    return None


def _leak_image(slot: int, weak: bool):
    if slot == SLOT_X:
        return SLOT_B if weak else SLOT_Y
    if slot == SLOT_B:
        return SLOT_Y
    return None  # Y, catalysts, T, stubborn: fixed points


def step_distribution(cfg: Configuration, spec: ProtocolSpec,
                      fault: FaultSpec | None = None) -> dict:
    """Exact one-step distribution over successor configurations.

    Keys are 7-slot count tuples (x, y, b, i_x, i_y, t, stubborn).
    """
    fault = fault or FaultSpec()
    slots = _key(cfg.slot_counts())
    N = sum(slots)
    if N > MAX_CHAIN_N:
        raise OracleError(f"population {N} exceeds chain guard N <= {MAX_CHAIN_N}")
    if N < spec.arity:
        raise OracleError("population smaller than interaction arity")
    dist: dict = {}

    def add(key, p):
        if p > 0:
            dist[key] = dist.get(key, 0.0) + p

    beta = fault.beta if fault.leak_model is not LeakModel.NONE else 0.0
    interact_w = 1.0 - beta
    if beta > 0:
        weak = fault.leak_model is LeakModel.WEAK
        if fault.leak_pool is LeakPool.WORKERS_ONLY:
            pool_slots = (SLOT_X, SLOT_Y, SLOT_B)
        else:
            pool_slots = tuple(range(7))
        pool = sum(slots[s] for s in pool_slots)
        if pool == 0:
            raise OracleError("leak pool is empty")
        for s in pool_slots:
            if slots[s] == 0:
                continue
            w = beta * slots[s] / pool
            img = _leak_image(s, weak)
            if img is None:
                add(slots, w)
            else:
                nxt = list(slots)
                nxt[s] -= 1
                nxt[img] += 1
                add(tuple(nxt), w)

    if spec.arity == 2:
        denom = N * (N - 1)
        for s in range(7):
            for t in range(s, 7):
                if s == t:
                    w = slots[s] * (slots[s] - 1)
                else:
                    w = 2 * slots[s] * slots[t]
                if w == 0:
                    continue
                p = interact_w * w / denom
                nxt = _pair_successor(slots, s, t, spec, fault.byz_mode)
                add(nxt if nxt is not None else slots, p)
    else:
        denom = N * (N - 1) * (N - 2)
        for combo in itertools.combinations_with_replacement(range(7), 3):
            w = 0
            for perm in set(itertools.permutations(combo)):
                avail = list(slots)
                pw = 1
                for s in perm:
                    pw *= avail[s]
                    avail[s] -= 1
                w += pw
            if w == 0:
                continue
            p = interact_w * w / denom
            nx = combo.count(SLOT_X)
            ny = combo.count(SLOT_Y)
            nxt = None
            x, y = slots[0], slots[1]
            if nx == 2 and ny == 1:
                nxt = (x + 1, y - 1) + slots[2:]
            elif nx == 1 and ny == 2:
                nxt = (x - 1, y + 1) + slots[2:]
            add(nxt if nxt is not None else slots, p)

    total = sum(dist.values())
    assert abs(total - 1.0) < 1e-12, total
    return dist


def _build_matrix(chain: ChainIndex, spec: ProtocolSpec,
                  fault: FaultSpec, template: Configuration) -> np.ndarray:
    n = len(chain.configs)
    P = np.zeros((n, n))
    for i, key in enumerate(chain.configs):
        cfg = Configuration(counts=np.array(key[:6], dtype=np.int64),
                            model=template.model, byz_stubborn_y=key[6])
        for nxt, p in step_distribution(cfg, spec, fault).items():
            P[i, chain.index[nxt]] += p
    return P


def _terminal_class(key, spec: ProtocolSpec):
    x, y, b = key[0], key[1], key[2]
    m = x + y + b
    ix, iy, t, stub = key[3], key[4], key[5], key[6]
    if spec.kind is ProtocolKind.TRIAM:
        if y == 0 and x > 0:
            return "ALL_X"
        if x == 0 and y > 0:
            return "ALL_Y"
        return None
    fires = (x > 0 and y > 0) or (b > 0 and (x > 0 or y > 0))
    if spec.kind is ProtocolKind.DBAMC and b > 0 and (ix > 0 or iy > 0):
        fires = True
    if stub > 0 and (x > 0 or b > 0):
        fires = True
    if fires:
        return None
    if x == m and m > 0:
        return "ALL_X"
    if y == m and m > 0:
        return "ALL_Y"
    if b == m and m > 0:
        return "ALL_BLANK_DEADLOCK"
    return None


def absorption_probabilities(init: Configuration, spec: ProtocolSpec) -> dict:
    """Exact probability of each terminal class for the leak-free chain."""
    chain = ChainIndex.build(init)
    fault = FaultSpec(byz_mode=ByzMode.STUBBORN_Y if init.byz_stubborn_y else ByzMode.NONE,
                      byz_count=init.byz_stubborn_y)
    if init.t > 0:
        raise OracleError("super-adversarial chains are not absorbing")
    P = _build_matrix(chain, spec, fault, init)
    classes = {}
    absorbing = []
    for i, key in enumerate(chain.configs):
        cls = _terminal_class(key, spec)
        if cls is not None:
            absorbing.append(i)
            classes[i] = cls
    if not absorbing:
        raise OracleError("chain has no absorbing states (non-absorbing setup?)")
    transient = [i for i in range(len(chain.configs)) if i not in set(absorbing)]
    start = chain.index[_key(init.slot_counts())]
    out = {"ALL_X": 0.0, "ALL_Y": 0.0, "ALL_BLANK_DEADLOCK": 0.0}
    if start in classes:
        out[classes[start]] = 1.0
        return out
    Q = P[np.ix_(transient, transient)]
    A = np.eye(len(transient)) - Q
    pos = {i: r for r, i in enumerate(transient)}
    for cls in out:
        targets = [i for i in absorbing if classes[i] == cls]
        if not targets:
            continue
        rhs = P[np.ix_(transient, targets)].sum(axis=1)
        h = np.linalg.solve(A, rhs)
        out[cls] = float(h[pos[start]])
    assert abs(sum(out.values()) - 1.0) < 1e-9
    return out


def finite_horizon_distribution(init: Configuration, spec: ProtocolSpec,
                                fault: FaultSpec | None = None,
                                T: int = 0) -> dict:
    """T-step push-forward of the exact transition kernel."""
    if T < 0 or T > MAX_HORIZON_T:
        raise OracleError(f"T must be in [0, {MAX_HORIZON_T}]")
    fault = fault or FaultSpec()
    chain = ChainIndex.build(init)
    start = chain.index[_key(init.slot_counts())]
    if T == 0:
        return {chain.configs[start]: 1.0}
    P = _build_matrix(chain, spec, fault, init)
    # Binary decomposition keeps T up to 1e6 cheap.
    result = np.zeros(len(chain.configs))
    result[start] = 1.0
    power = P
    t = T
    while t:
        if t & 1:
            result = result @ power
        t >>= 1
        if t:
            power = power @ power
    total = result.sum()
    assert abs(total - 1.0) < 1e-9
    return {chain.configs[i]: float(p) for i, p in enumerate(result) if p > 0.0}


# ---------------------------------------------------------------------------
# Binomial-tail machinery


def binomial_tail_exact(S: int, p: float, k: int) -> float:
    """P[Bin(S, p) <= k], exact via the regularized incomplete beta."""
    if not 0 <= k <= S or S < 1:
        raise OracleError("need 0 <= k <= S, S >= 1")
    if not 0.0 <= p <= 1.0:
        raise OracleError("p must be in [0, 1]")
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 1.0 if k == S else 0.0
    if k == S:
        return 1.0
    # P[Bin(S,p) <= k] = I_{1-p}(S-k, k+1)
    return float(betainc(S - k, k + 1, 1.0 - p))


def binomial_tail_logsum(S: int, p: float, k: int) -> float:
    """Direct log-space summation of the lower tail (independent cross-check
    of binomial_tail_exact; only viable for moderate S)."""
    if not 0 <= k <= S or S < 1:
        raise OracleError("need 0 <= k <= S, S >= 1")
    if p in (0.0, 1.0):
        return binomial_tail_exact(S, p, k)
    ks = np.arange(k + 1)
    logs = (gammaln(S + 1) - gammaln(ks + 1) - gammaln(S - ks + 1)
            + ks * math.log(p) + (S - ks) * math.log1p(-p))
    return float(np.exp(logsumexp(logs)))


def kl_bernoulli(a: float, p: float) -> float:
    """KL divergence (nats) between Bernoulli(a) and Bernoulli(p)."""
    if not (0.0 < a < 1.0 and 0.0 < p < 1.0):
        raise OracleError("kl_bernoulli requires arguments in (0, 1)")
    return a * math.log(a / p) + (1.0 - a) * math.log((1.0 - a) / (1.0 - p))


def tail_lower_bound(S: int, delta: float) -> float:
    """Closed-form lower bound on P[Bin(S, 1/2 + delta) <= S/2]:
    (1/sqrt(2S)) * exp(-S * KL(1/2 || 1/2 + delta)), valid for delta <= 1/3."""
    if not 0.0 < delta <= 1.0 / 3.0:
        raise OracleError("delta must be in (0, 1/3]")
    if S < 1:
        raise OracleError("S must be >= 1")
    return (1.0 / math.sqrt(2.0 * S)) * math.exp(-S * kl_bernoulli(0.5, 0.5 + delta))


class MinSamplesCapExceeded(OracleError):
    pass


def min_samples(n: int, c: float) -> int:
    """Smallest sample count S with P[Bin(S, 1/2 + 1/2n) <= S/2] <= n^-c,
    located by doubling then bisection on the exact tail (with a local scan
    to absorb even/odd tail wobble)."""
    if n < 2 or c < 1:
        raise OracleError("need n >= 2 and c >= 1")
    p = 0.5 + 1.0 / (2 * n)
    target = float(n) ** (-c)

    def ok(S: int) -> bool:
        return binomial_tail_exact(S, p, S // 2) <= target

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > MIN_SAMPLES_CAP:
            raise MinSamplesCapExceeded(
                f"min_samples(n={n}, c={c}) exceeds cap {MIN_SAMPLES_CAP}")
    lo = hi // 2 if hi > 1 else 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    # Parity wobble: the tail is not strictly monotone step-to-step.
    s = hi
    while s > 1 and ok(s - 1):
        s -= 1
    return s


def sample_majority_trial(n: int, margin: int, S: int,
                          rng: np.random.Generator) -> bool:
    """One Super CI trial: S samples with replacement from an n-agent input
    population at the given margin; True iff the sample majority is the true
    majority (ties count as incorrect)."""
    if margin < 1 or S < 1:
        raise OracleError("need margin >= 1 and S >= 1")
    if margin > n:
        raise OracleError("margin exceeds population")
    p = 0.5 + margin / (2 * n)
    hits = rng.binomial(S, p)
    return bool(hits * 2 > S)
