"""Pure-Python (numpy) fallback for :mod:`fogoffload._kernels`."""

import math

import numpy as np


def ucb_scores(n_disc, w_bar, p_bar, length, tx, queue, tau_max, xi,
               n_total, explore, out):
    mu = length * tx + queue * w_bar + length * p_bar
    score = tau_max - mu
    if explore:
        log_n = math.log(n_total) if n_total > 1.0 else 0.0
        played = n_disc > 0.0
        bonus = np.full_like(score, np.inf)
        with np.errstate(over="ignore"):  # denormal counts give an infinite bonus
            np.divide(xi * log_n, n_disc, out=bonus, where=played)
        np.sqrt(bonus, out=bonus, where=played)
        bonus[played] *= 2.0 * tau_max
        score = score + bonus
    out[:] = score
    return int(np.argmax(out))


def discount_merge(gamma, n_disc, w_bar, p_bar, add_n, add_w, add_p):
    decayed = gamma * n_disc
    new_n = decayed + add_n
    live = new_n > 0.0
    safe_n = np.where(live, new_n, 1.0)
    w_bar[:] = np.where(live, (decayed * w_bar + add_w) / safe_n, 0.0)
    p_bar[:] = np.where(live, (decayed * p_bar + add_p) / safe_n, 0.0)
    n_disc[:] = np.where(live, new_n, 0.0)
    return float(n_disc.sum())


def realize_slot(length, cplx, cplx_w, cpu, tx, queue, cplx_mean, W, P, U, mu):
    W[:] = cplx_w / cpu
    P[:] = cplx / cpu
    U[:] = length * tx + queue * W + length * P
    rate = cplx_mean / cpu
    mu[:] = length * tx + queue * rate + length * rate
    return int(np.argmin(mu)), int(np.argmin(U))


def evolve_queues(queue, arrivals, cpu, service_rate, chosen, offloaded_kb):
    q = queue + arrivals - service_rate * cpu
    if chosen >= 0:
        q[chosen] += offloaded_kb
    np.maximum(q, 0.0, out=queue)
