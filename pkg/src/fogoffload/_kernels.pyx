# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-slot kernels for the discounted-UCB learner.

Both functions operate in place on float64 arrays of length K and mirror
:mod:`fogoffload._kernels_py` exactly; the test-suite checks agreement.
"""
from libc.math cimport log, sqrt, INFINITY


def ucb_scores(const double[:] n_disc, const double[:] w_bar,
               const double[:] p_bar, double length, const double[:] tx,
               const double[:] queue, double tau_max, double xi,
               double n_total, bint explore, double[:] out):
    """Fill ``out`` with estimated reward plus padding; return the argmax.

    Ties go to the lowest index.  An arm with zero discounted count scores
    +inf when ``explore`` is set.
    """
    cdef Py_ssize_t k = n_disc.shape[0]
    cdef Py_ssize_t i, best = 0
    cdef double log_n = log(n_total) if n_total > 1.0 else 0.0
    cdef double mu, score, best_score = -INFINITY
    for i in range(k):
        mu = length * tx[i] + queue[i] * w_bar[i] + length * p_bar[i]
        score = tau_max - mu
        if explore:
            if n_disc[i] <= 0.0:
                score = INFINITY
            else:
                score = score + 2.0 * tau_max * sqrt(xi * log_n / n_disc[i])
        out[i] = score
        if score > best_score:
            best_score = score
            best = i
    return best


def discount_merge(double gamma, double[:] n_disc, double[:] w_bar,
                   double[:] p_bar, const double[:] add_n,
                   const double[:] add_w, const double[:] add_p):
    """Decay every arm by ``gamma`` and fold in this slot's weighted sums.

    ``add_w``/``add_p`` hold sum(weight * observation) per arm.  Returns the
    new total discounted count.
    """
    cdef Py_ssize_t k = n_disc.shape[0]
    cdef Py_ssize_t i
    cdef double decayed, new_n, total = 0.0
    for i in range(k):
        decayed = gamma * n_disc[i]
        new_n = decayed + add_n[i]
        if new_n > 0.0:
            w_bar[i] = (decayed * w_bar[i] + add_w[i]) / new_n
            p_bar[i] = (decayed * p_bar[i] + add_p[i]) / new_n
        else:
            new_n = 0.0
            w_bar[i] = 0.0
            p_bar[i] = 0.0
        n_disc[i] = new_n
        total += new_n
    return total


def realize_slot(double length, double cplx, const double[:] cplx_w,
                 const double[:] cpu, const double[:] tx, const double[:] queue,
                 double cplx_mean, double[:] W, double[:] P, double[:] U,
                 double[:] mu):
    """Draw-free delay assembly for one slot.

    Fills per-node waiting/processing delays, realized latency and oracle
    mean latency; returns (argmin mu, argmin U) with lowest-index ties.
    """
    cdef Py_ssize_t k = cpu.shape[0]
    cdef Py_ssize_t i, opt_mu = 0, opt_u = 0
    cdef double mean_rate
    for i in range(k):
        W[i] = cplx_w[i] / cpu[i]
        P[i] = cplx / cpu[i]
        U[i] = length * tx[i] + queue[i] * W[i] + length * P[i]
        mean_rate = cplx_mean / cpu[i]
        mu[i] = length * tx[i] + queue[i] * mean_rate + length * mean_rate
        if mu[i] < mu[opt_mu]:
            opt_mu = i
        if U[i] < U[opt_u]:
            opt_u = i
    return opt_mu, opt_u


def evolve_queues(double[:] queue, const double[:] arrivals,
                  const double[:] cpu, double service_rate, Py_ssize_t chosen,
                  double offloaded_kb):
    """queue <- max(0, queue + arrivals + offload - service_rate * cpu)."""
    cdef Py_ssize_t k = queue.shape[0]
    cdef Py_ssize_t i
    cdef double q
    for i in range(k):
        q = queue[i] + arrivals[i] - service_rate * cpu[i]
        if i == chosen:
            q += offloaded_kb
        queue[i] = q if q > 0.0 else 0.0
