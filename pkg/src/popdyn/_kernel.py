"""Jitted inner loop for seeded protocol runs.

Operates on plain integer counts so campaigns with billions of scheduler
steps stay cheap.  Slot layout matches engine: 0=X, 1=Y, 2=B, 3=I_X,
4=I_Y, 5=T, 6=stubborn-Y.  Protocol codes: 0=TRIAM, 1=DBAM, 2=DBAMC.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _draw(x, y, b, ix, iy, t, stub, total):
    r = int(np.random.random() * total)
    if r < x:
        return 0
    r -= x
    if r < y:
        return 1
    r -= y
    if r < b:
        return 2
    r -= b
    if r < ix:
        return 3
    r -= ix
    if r < iy:
        return 4
    r -= iy
    if r < t:
        return 5
    return 6


@njit(cache=True, inline="always")
def _is_conv(kind, x, y, b):
    if kind == 0:  # TRIAM: either consensus
        return x == 0 or y == 0
    # DBAM / DBAMC: all workers in the initial-majority state X
    return y == 0 and b == 0 and x > 0


@njit(cache=True, inline="always")
def _fires(kind, x, y, b, ix, iy, t, stub, super_adv):
    """Whether any state-changing non-leak event is possible."""
    if kind == 0:
        f = x > 0 and y > 0
    else:
        f = (x > 0 and y > 0) or (b > 0 and (x > 0 or y > 0))
        if kind == 2 and b > 0 and (ix > 0 or iy > 0):
            f = True
    if stub > 0 and (x > 0 or b > 0):
        f = True
    if super_adv == 1 and t > 0 and (x > 0 or b > 0):
        f = True
    return f


@njit(cache=True)
def run_kernel(counts, stub, kind, beta, leak_weak, pool_workers, super_adv,
               horizon, stop_conv, ce, seed, traj):
    np.random.seed(seed)
    x = counts[0]
    y = counts[1]
    b = counts[2]
    ix = counts[3]
    iy = counts[4]
    t = counts[5]
    N = x + y + b + ix + iy + t + stub
    arity = 3 if kind == 0 else 2

    cum_null = 0
    cum_xy = 0
    cum_blank = 0
    cum_leak = 0
    cum_byz = 0
    steps_to_conv = -1
    nck = 0
    last_emit = -1

    # step-0 checkpoint
    traj[nck, 0] = 0
    traj[nck, 1] = x
    traj[nck, 2] = y
    traj[nck, 3] = b
    nck += 1
    last_emit = 0

    if _is_conv(kind, x, y, b):
        steps_to_conv = 0

    step = 0
    stopped = False
    while step < horizon and not stopped:
        # Absorption: nothing can ever change again without leaks.
        if beta == 0.0 and not _fires(kind, x, y, b, ix, iy, t, stub, super_adv):
            if stop_conv == 1:
                break
            # Fast-forward the remaining all-null steps, keeping checkpoints.
            base_null = cum_null
            s = ((step // ce) + 1) * ce
            while s <= horizon:
                traj[nck, 0] = s
                traj[nck, 1] = x
                traj[nck, 2] = y
                traj[nck, 3] = b
                traj[nck, 4] = base_null + (s - step)
                traj[nck, 5] = cum_xy
                traj[nck, 6] = cum_blank
                traj[nck, 7] = cum_leak
                traj[nck, 8] = cum_byz
                nck += 1
                last_emit = s
                s += ce
            cum_null = base_null + (horizon - step)
            step = horizon
            break

        if stop_conv == 1 and steps_to_conv == 0 and step == 0:
            break

        step += 1
        changed = False
        is_leak = False
        if beta > 0.0 and np.random.random() < beta:
            is_leak = True
            cum_leak += 1
            pool = x + y + b if pool_workers == 1 else N
            r = int(np.random.random() * pool)
            if r < x:
                x -= 1
                if leak_weak == 1:
                    b += 1
                else:
                    y += 1
                changed = True
            elif r < x + y:
                pass  # Y is a leak fixed point in both models
            elif r < x + y + b:
                b -= 1
                y += 1
                changed = True
            # catalysts, T, and stubborn agents are leak fixed points
        else:
            s1 = _draw(x, y, b, ix, iy, t, stub, N)
            x2 = x - (1 if s1 == 0 else 0)
            y2 = y - (1 if s1 == 1 else 0)
            b2 = b - (1 if s1 == 2 else 0)
            ix2 = ix - (1 if s1 == 3 else 0)
            iy2 = iy - (1 if s1 == 4 else 0)
            t2 = t - (1 if s1 == 5 else 0)
            st2 = stub - (1 if s1 == 6 else 0)
            s2 = _draw(x2, y2, b2, ix2, iy2, t2, st2, N - 1)
            if arity == 3:
                x3 = x2 - (1 if s2 == 0 else 0)
                y3 = y2 - (1 if s2 == 1 else 0)
                b3 = b2 - (1 if s2 == 2 else 0)
                ix3 = ix2 - (1 if s2 == 3 else 0)
                iy3 = iy2 - (1 if s2 == 4 else 0)
                t3 = t2 - (1 if s2 == 5 else 0)
                st3 = st2 - (1 if s2 == 6 else 0)
                s3 = _draw(x3, y3, b3, ix3, iy3, t3, st3, N - 2)
                nx = (1 if s1 == 0 else 0) + (1 if s2 == 0 else 0) + (1 if s3 == 0 else 0)
                ny = (1 if s1 == 1 else 0) + (1 if s2 == 1 else 0) + (1 if s3 == 1 else 0)
                if nx == 2 and ny == 1:
                    y -= 1
                    x += 1
                    cum_xy += 1
                    changed = True
                elif nx == 1 and ny == 2:
                    x -= 1
                    y += 1
                    cum_xy += 1
                    changed = True
            else:
                if super_adv == 1 and (s1 == 5 or s2 == 5):
                    p = s2 if s1 == 5 else s1
                    if p == 0:
                        x -= 1
                        y += 1
                        cum_byz += 1
                        changed = True
                    elif p == 2:
                        b -= 1
                        y += 1
                        cum_byz += 1
                        changed = True
                elif s1 == 6 or s2 == 6:
                    p = s2 if s1 == 6 else s1
                    if p == 0:  # stubborn-Y meets X: X + Y -> B + B, Y frozen
                        x -= 1
                        b += 1
                        cum_byz += 1
                        changed = True
                    elif p == 2:  # stubborn-Y meets B: B adopts Y
                        b -= 1
                        y += 1
                        cum_byz += 1
                        changed = True
                else:
                    lo = s1 if s1 < s2 else s2
                    hi = s2 if s1 < s2 else s1
                    if lo == 0 and hi == 1:
                        x -= 1
                        y -= 1
                        b += 2
                        cum_xy += 1
                        changed = True
                    elif lo == 0 and hi == 2:
                        b -= 1
                        x += 1
                        cum_blank += 1
                        changed = True
                    elif lo == 1 and hi == 2:
                        b -= 1
                        y += 1
                        cum_blank += 1
                        changed = True
                    elif kind == 2 and lo == 2 and hi == 3:
                        b -= 1
                        x += 1
                        cum_blank += 1
                        changed = True
                    elif kind == 2 and lo == 2 and hi == 4:
                        b -= 1
                        y += 1
                        cum_blank += 1
                        changed = True

        if not changed and not is_leak:
            cum_null += 1

        if step % ce == 0 and step != last_emit:
            traj[nck, 0] = step
            traj[nck, 1] = x
            traj[nck, 2] = y
            traj[nck, 3] = b
            traj[nck, 4] = cum_null
            traj[nck, 5] = cum_xy
            traj[nck, 6] = cum_blank
            traj[nck, 7] = cum_leak
            traj[nck, 8] = cum_byz
            nck += 1
            last_emit = step

        if changed and _is_conv(kind, x, y, b):
            if steps_to_conv < 0:
                steps_to_conv = step
            if stop_conv == 1:
                break

    conv_final = 1 if _is_conv(kind, x, y, b) else 0
    if step != last_emit:
        traj[nck, 0] = step
        traj[nck, 1] = x
        traj[nck, 2] = y
        traj[nck, 3] = b
        traj[nck, 4] = cum_null
        traj[nck, 5] = cum_xy
        traj[nck, 6] = cum_blank
        traj[nck, 7] = cum_leak
        traj[nck, 8] = cum_byz
        nck += 1
    return (step, conv_final, steps_to_conv, cum_null, cum_xy, cum_blank,
            cum_leak, cum_byz, nck, x, y, b)
