"""Compiled inner loops for the Markov-modulated likelihoods.

All functions here work on plain floats and float64 arrays so they can be
compiled once with ``numba`` and cached on disk.
"""

import math
from fractions import Fraction

import numpy as np
from numba import njit

# Below this many kernel units of remaining excitation mass the rest of an
# interval is treated as one constant-rate step.
COLLAPSE_MASS = 1e-12

# Largest excitation mass per Magnus step, and the most pieces a substep is cut into.
MAGNUS_MASS = 0.5
MAX_PIECES = 64


@njit(cache=True)
def _pade6(a, b, c, d):
    """exp([[a, b], [c, d]]) by scaling and squaring with a (6, 6) Pade approximant."""
    norm = max(abs(a) + abs(b), abs(c) + abs(d))
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    scale = 2.0 ** (-s)
    a *= scale
    b *= scale
    c *= scale
    d *= scale
    # powers of A accumulated into numerator / denominator polynomials
    n00, n01, n10, n11 = 1.0, 0.0, 0.0, 1.0
    d00, d01, d10, d11 = 1.0, 0.0, 0.0, 1.0
    p00, p01, p10, p11 = 1.0, 0.0, 0.0, 1.0
    sign = 1.0
    coef = (1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0)
    for k in range(1, 7):
        p00, p01, p10, p11 = (
            p00 * a + p01 * c,
            p00 * b + p01 * d,
            p10 * a + p11 * c,
            p10 * b + p11 * d,
        )
        sign = -sign
        ck = coef[k]
        n00 += ck * p00
        n01 += ck * p01
        n10 += ck * p10
        n11 += ck * p11
        d00 += sign * ck * p00
        d01 += sign * ck * p01
        d10 += sign * ck * p10
        d11 += sign * ck * p11
    det = d00 * d11 - d01 * d10
    i00, i01, i10, i11 = d11 / det, -d01 / det, -d10 / det, d00 / det
    r00 = i00 * n00 + i01 * n10
    r01 = i00 * n01 + i01 * n11
    r10 = i10 * n00 + i11 * n10
    r11 = i10 * n01 + i11 * n11
    for _ in range(s):
        r00, r01, r10, r11 = (
            r00 * r00 + r01 * r10,
            r00 * r01 + r01 * r11,
            r10 * r00 + r11 * r10,
            r10 * r01 + r11 * r11,
        )
    return r00, r01, r10, r11


@njit(cache=True)
def expm2_scaled(a, b, c, d):
    """Scaled exponential of [[a, b], [c, d]].

    Returns ``(k00, k01, k10, k11, log_scale)`` with
    ``expm(M) = exp(log_scale) * K`` and K bounded, so callers can accumulate
    ``log_scale`` instead of multiplying by numbers that under/overflow.
    """
    norm = max(max(abs(a), abs(b)), max(abs(c), abs(d)))
    if norm == 0.0:
        return 1.0, 0.0, 0.0, 1.0, 0.0
    s = 0.5 * (a + d)
    h = 0.5 * (a - d)
    disc = h * h + b * c
    gap = 2.0 * math.sqrt(abs(disc))
    if gap < 1e-8 * norm:
        k00, k01, k10, k11 = _pade6(a - s, b, c, d - s)
        return k00, k01, k10, k11, s
    if disc > 0.0:
        q = math.sqrt(disc)
        e = math.exp(-2.0 * q)
        ch = 0.5 * (1.0 + e)
        sh = -math.expm1(-2.0 * q) / (2.0 * q)
        return ch + sh * h, sh * b, sh * c, ch - sh * h, s + q
    w = math.sqrt(-disc)
    cw = math.cos(w)
    sw = math.sin(w) / w
    return cw + sw * h, sw * b, sw * c, cw - sw * h, s


@njit(cache=True)
def substep_count(tau, rate):
    if rate <= 0.0:
        return 8
    return max(8, int(math.ceil(4.0 * tau * rate)))


def _simplex_monomial(powers):
    """Integral of prod s_i**a_i over the ordered simplex 0 < s_d < ... < s_1 < 1."""
    val = Fraction(1)
    p = 0
    for a in reversed(powers):
        p += a + 1
        val /= p
    return val


def _compositions(n, d):
    if d == 1:
        yield (n,)
        return
    for k in range(n + 1):
        for rest in _compositions(n - k, d - 1):
            yield (k,) + rest


def _exp_series(combo, terms):
    """Taylor coefficients in y of the simplex integral of sum_w w * exp(-y c.s)."""
    out = []
    for n in range(terms):
        total = Fraction(0)
        for w, c in combo:
            for a in _compositions(n, len(c)):
                coef = Fraction(math.factorial(n))
                for ai, ci in zip(a, c):
                    coef = coef / math.factorial(ai) * ci**ai
                if coef:
                    total += w * coef * _simplex_monomial(a)
        out.append(float(total * (-1) ** n / math.factorial(n)))
    return out


# Scalar weights of the Magnus terms for A(t) = B + g(t) D with g(t) = e exp(-beta t),
# as series in y = beta h over the unit simplex (substeps always have y <= 1/4).
_MAGNUS_SERIES = np.array([
    _exp_series([(1, (0, 1)), (-1, (1, 0))], 16),
    _exp_series([(1, (1, 0, 0)), (-2, (0, 1, 0)), (1, (0, 0, 1))], 16),
    _exp_series([(1, (1, 1, 0)), (-2, (1, 0, 1)), (1, (0, 1, 1))], 16),
    _exp_series([(1, (0, 1, 0, 0)), (-1, (0, 0, 1, 0))], 16),
    _exp_series([(1, (1, 1, 0, 0)), (-1, (1, 0, 1, 0)), (1, (0, 1, 0, 1)), (-1, (0, 0, 1, 1))], 16),
    _exp_series([(1, (1, 1, 0, 1)), (-1, (1, 0, 1, 1))], 16),
])


@njit(cache=True)
def _mul(x, y):
    out = np.empty((2, 2))
    out[0, 0] = x[0, 0] * y[0, 0] + x[0, 1] * y[1, 0]
    out[0, 1] = x[0, 0] * y[0, 1] + x[0, 1] * y[1, 1]
    out[1, 0] = x[1, 0] * y[0, 0] + x[1, 1] * y[1, 0]
    out[1, 1] = x[1, 0] * y[0, 1] + x[1, 1] * y[1, 1]
    return out


@njit(cache=True)
def _comm(x, y):
    return _mul(x, y) - _mul(y, x)


@njit(cache=True)
def magnus_matrices(lam0, lam1, q01, q10):
    """Constant matrices of the Magnus expansion, column-vector convention.

    Index 0 is B (the generator with the baseline rates), then the nested
    commutators of B and D = diag(0, -1) weighted by the series in
    ``_MAGNUS_SERIES`` (with the fixed integer prefactors folded in).
    """
    b = np.empty((2, 2))
    b[0, 0] = -q01 - lam0
    b[0, 1] = q10
    b[1, 0] = q01
    b[1, 1] = -q10 - lam1
    d = np.zeros((2, 2))
    d[1, 1] = -1.0
    c = _comm(b, d)
    out = np.empty((7, 2, 2))
    out[0] = b
    out[1] = 0.5 * c
    out[2] = _comm(b, c) / 6.0
    w3b = _comm(d, _comm(d, b))
    out[3] = w3b / 6.0
    out[4] = _comm(b, _comm(b, c)) / 6.0
    bb = _mul(b, b)
    dd = _mul(d, d)
    db = _mul(d, b)
    bd = _mul(b, d)
    out[5] = (-2.0 * _mul(bb, dd) + 2.0 * _mul(dd, bb) - 4.0 * _mul(db, db) + 4.0 * _mul(bd, bd)) / 12.0
    out[6] = -_comm(d, w3b) / 6.0
    return out


@njit(cache=True)
def magnus_weights(y):
    """The six series weights at ``y = beta h``."""
    out = np.empty(6)
    for i in range(6):
        acc = 0.0
        for k in range(_MAGNUS_SERIES.shape[1] - 1, -1, -1):
            acc = acc * y + _MAGNUS_SERIES[i, k]
        out[i] = acc
    return out


@njit(cache=True)
def _magnus_step(e, h, frac, mats, wts):
    """Propagator over one substep of length ``h`` starting at excitation mass ``e``.

    The exponent is the exact integral of the generator (substep-average
    intensity) plus the next three Magnus terms, each a fixed nested
    commutator times a scalar integral; the scheme is sixth order in ``h``.
    Accurate while the excitation mass ``e * frac`` of the step is small;
    see :func:`_substep`. Returns the row-vector propagator as
    ``expm2_scaled`` output.
    """
    h2 = h * h
    h3 = h2 * h
    h4 = h3 * h
    e2 = e * e
    c1 = h2 * e * wts[0]
    c2 = h3 * e * wts[1]
    c3 = h3 * e2 * wts[2]
    c4 = h4 * e * wts[3]
    c5 = h4 * e2 * wts[4]
    c6 = h4 * e2 * e * wts[5]
    o00 = h * mats[0, 0, 0] + c1 * mats[1, 0, 0] + c2 * mats[2, 0, 0] + c3 * mats[3, 0, 0] + c4 * mats[4, 0, 0] + c5 * mats[5, 0, 0] + c6 * mats[6, 0, 0]
    o01 = h * mats[0, 0, 1] + c1 * mats[1, 0, 1] + c2 * mats[2, 0, 1] + c3 * mats[3, 0, 1] + c4 * mats[4, 0, 1] + c5 * mats[5, 0, 1] + c6 * mats[6, 0, 1]
    o10 = h * mats[0, 1, 0] + c1 * mats[1, 1, 0] + c2 * mats[2, 1, 0] + c3 * mats[3, 1, 0] + c4 * mats[4, 1, 0] + c5 * mats[5, 1, 0] + c6 * mats[6, 1, 0]
    o11 = h * mats[0, 1, 1] + c1 * mats[1, 1, 1] + c2 * mats[2, 1, 1] + c3 * mats[3, 1, 1] + c4 * mats[4, 1, 1] + c5 * mats[5, 1, 1] + c6 * mats[6, 1, 1]
    o11 -= e * frac
    # transpose back to the row-vector convention
    return expm2_scaled(o00, o10, o01, o11)


@njit(cache=True)
def _substep(e, h, beta, frac, mats, wts):
    """Row-vector propagator of one substep, split where the excitation is large.

    The truncated Magnus exponent loses accuracy (and eventually positivity)
    once the excitation mass of a step is of order one, so such steps are cut
    into equal pieces of mass at most ``MAGNUS_MASS`` and the pieces composed.
    Beyond ``MAX_PIECES`` pieces state 1 cannot survive the step anyway and the
    plain average-rate exponent (always a valid sub-stochastic matrix) is used.
    """
    mass = e * frac
    if mass <= MAGNUS_MASS:
        return _magnus_step(e, h, frac, mats, wts)
    pieces = int(math.ceil(mass / MAGNUS_MASS))
    if pieces > MAX_PIECES:
        return expm2_scaled(h * mats[0, 0, 0], h * mats[0, 1, 0], h * mats[0, 0, 1], h * mats[0, 1, 1] - mass)
    hp = h / pieces
    fp = -math.expm1(-beta * hp) / beta
    wp = magnus_weights(beta * hp)
    decay = math.exp(-beta * hp)
    r00, r01, r10, r11 = 1.0, 0.0, 0.0, 1.0
    log_scale = 0.0
    for _ in range(pieces):
        k00, k01, k10, k11, ls = _magnus_step(e, hp, fp, mats, wp)
        r00, r01, r10, r11 = (
            r00 * k00 + r01 * k10,
            r00 * k01 + r01 * k11,
            r10 * k00 + r11 * k10,
            r10 * k01 + r11 * k11,
        )
        top = max(max(abs(r00), abs(r01)), max(abs(r10), abs(r11)))
        r00 /= top
        r01 /= top
        r10 /= top
        r11 /= top
        log_scale += ls + math.log(top)
        e *= decay
    return r00, r01, r10, r11, log_scale


@njit(cache=True)
def modulated_loglik(times, horizon, lam0, lam1, alpha, beta, q01, q10, p0, p1, refine=1):
    """Forward-filter log-likelihood of a 2-state modulated process.

    State 0 has rate ``lam0``; state 1 has ``lam1 + alpha * sum exp(-beta (t - t_m))``
    over all earlier events. ``alpha == 0`` gives the MMPP (one exact exponential
    per interval). Returns ``(loglik, bad_index)``; ``bad_index >= 0`` flags the
    interval at which the filter broke down. ``refine`` multiplies the number
    of substeps per interval (grid-refinement checks).
    """
    m_total = times.shape[0]
    f0 = p0
    f1 = p1
    loglik = 0.0
    excite = 0.0  # sum of exp(-beta (u - t_k)) just after the last boundary
    prev = 0.0
    g00 = -q01 - lam0
    mats = magnus_matrices(lam0, lam1, q01, q10)
    for m in range(m_total + 1):
        end = horizon if m == m_total else times[m]
        tau = end - prev
        if tau > 0.0:
            mass = alpha * excite
            if mass <= 0.0 or beta <= 0.0:
                k00, k01, k10, k11, ls = expm2_scaled(g00 * tau, q01 * tau, q10 * tau, (-q10 - lam1) * tau)
                f0, f1 = f0 * k00 + f1 * k10, f0 * k01 + f1 * k11
                loglik += ls
            else:
                n = substep_count(tau, beta) * refine
                h = tau / n
                decay_h = math.exp(-beta * h)
                frac = -math.expm1(-beta * h) / beta
                wts = magnus_weights(beta * h)
                e_k = mass
                for k in range(n):
                    if e_k / beta <= COLLAPSE_MASS:
                        r = tau - k * h
                        lbar = lam1 + e_k * (-math.expm1(-beta * r)) / (beta * r)
                        k00, k01, k10, k11, ls = expm2_scaled(g00 * r, q01 * r, q10 * r, (-q10 - lbar) * r)
                        f0, f1 = f0 * k00 + f1 * k10, f0 * k01 + f1 * k11
                        loglik += ls
                        break
                    k00, k01, k10, k11, ls = _substep(e_k, h, beta, frac, mats, wts)
                    f0, f1 = f0 * k00 + f1 * k10, f0 * k01 + f1 * k11
                    loglik += ls
                    e_k *= decay_h
            excite *= math.exp(-beta * tau) if beta > 0.0 else 1.0
        if m < m_total:
            f0 *= lam0
            f1 *= lam1 + alpha * excite
            excite += 1.0
        c = f0 + f1
        if not (c > 0.0) or not math.isfinite(c):
            return np.nan, m
        f0 /= c
        f1 /= c
        loglik += math.log(c)
        if not math.isfinite(loglik):
            return np.nan, m
        prev = end
    return loglik, -1


@njit(cache=True)
def modulated_loglik_many(times, offsets, horizon, lam0, lam1, alpha, beta, q01, q10):
    """Per-sequence log-likelihoods for concatenated sequences.

    Sequence ``i`` occupies ``times[offsets[i]:offsets[i + 1]]``; parameters
    are per-sequence arrays. Initial law is stationary.
    """
    n_seq = offsets.shape[0] - 1
    out = np.empty(n_seq)
    for i in range(n_seq):
        tot = q01[i] + q10[i]
        p0 = q10[i] / tot
        out[i] = modulated_loglik(
            times[offsets[i]:offsets[i + 1]], horizon,
            lam0[i], lam1[i], alpha[i], beta[i], q01[i], q10[i], p0, 1.0 - p0,
        )[0]
    return out


@njit(cache=True)
def _grid_sizes(times, horizon, grid_rate):
    m_total = times.shape[0]
    sizes = np.empty(m_total + 1, dtype=np.int64)
    prev = 0.0
    for m in range(m_total + 1):
        end = horizon if m == m_total else times[m]
        tau = end - prev
        sizes[m] = substep_count(tau, grid_rate) if tau > 0.0 else 0
        prev = end
    return sizes


@njit(cache=True)
def _log(x):
    return math.log(x) if x > 0.0 else -np.inf


@njit(cache=True)
def modulated_viterbi(times, horizon, lam0, lam1, alpha, beta, q01, q10, p0, p1, grid_rate):
    """MAP state sequence on the fixed filtering sub-grid.

    Returns ``(grid, states)``: ``grid[k]`` is the right end of sub-step k and
    ``states[k]`` the decoded state on ``(grid[k-1], grid[k]]``.
    """
    m_total = times.shape[0]
    sizes = _grid_sizes(times, horizon, grid_rate)
    n_nodes = 0
    for m in range(m_total + 1):
        n_nodes += sizes[m]
    grid = np.empty(n_nodes)
    back = np.empty((n_nodes, 2), dtype=np.int8)
    d0 = _log(p0)
    d1 = _log(p1)
    excite = 0.0
    prev = 0.0
    g00 = -q01 - lam0
    mats = magnus_matrices(lam0, lam1, q01, q10)
    node = 0
    for m in range(m_total + 1):
        end = horizon if m == m_total else times[m]
        n = sizes[m]
        if n > 0:
            tau = end - prev
            h = tau / n
            frac = -math.expm1(-beta * h) / beta if beta > 0.0 else h
            wts = magnus_weights(beta * h)
            decay_h = math.exp(-beta * h) if beta > 0.0 else 1.0
            e_k = alpha * excite
            for k in range(n):
                if beta > 0.0:
                    k00, k01, k10, k11, ls = _substep(e_k, h, beta, frac, mats, wts)
                else:
                    k00, k01, k10, k11, ls = expm2_scaled(g00 * h, q01 * h, q10 * h, (-q10 - lam1 - e_k) * h)
                a0 = d0 + _log(k00)
                b0 = d1 + _log(k10)
                a1 = d0 + _log(k01)
                b1 = d1 + _log(k11)
                if a0 >= b0:
                    n0 = a0
                    back[node, 0] = 0
                else:
                    n0 = b0
                    back[node, 0] = 1
                if a1 >= b1:
                    n1 = a1
                    back[node, 1] = 0
                else:
                    n1 = b1
                    back[node, 1] = 1
                top = max(n0, n1)
                d0 = n0 - top
                d1 = n1 - top
                grid[node] = prev + (k + 1) * h
                node += 1
                e_k *= decay_h
            grid[node - 1] = end
            excite *= math.exp(-beta * tau) if beta > 0.0 else 1.0
        if m < m_total:
            d0 += _log(lam0)
            d1 += _log(lam1 + alpha * excite)
            excite += 1.0
        prev = end
    states = np.empty(n_nodes, dtype=np.int8)
    z = 0 if d0 >= d1 else 1
    for k in range(n_nodes - 1, -1, -1):
        states[k] = z
        z = back[k, z]
    return grid, states


@njit(cache=True)
def hawkes_excitation(times, beta):
    """A_m = sum_{k<m} exp(-beta (t_m - t_k)) by the O(M) recursion."""
    m_total = times.shape[0]
    out = np.zeros(m_total)
    for m in range(1, m_total):
        out[m] = math.exp(-beta * (times[m] - times[m - 1])) * (1.0 + out[m - 1])
    return out


@njit(cache=True)
def edge_excitation(edges, is_event, beta):
    """Excitation sum just after each edge (an event at the edge included)."""
    out = np.zeros(edges.shape[0])
    s = 0.0
    for k in range(edges.shape[0]):
        if k > 0:
            s *= math.exp(-beta * (edges[k] - edges[k - 1]))
        if is_event[k]:
            s += 1.0
        out[k] = s
    return out


@njit(cache=True)
def modulated_filtered_compensator(times, horizon, lam0, lam1, alpha, beta, q01, q10, p0, p1):
    """Compensator increments of the filtered (observed-history) intensity.

    For gap m the increment is ``-log`` of the probability of no event in the
    gap given the filtered state law at its start, using the same sub-grid as
    :func:`modulated_loglik`. Entry ``M`` is the gap (t_M, T].
    """
    m_total = times.shape[0]
    out = np.empty(m_total + 1)
    f0 = p0
    f1 = p1
    excite = 0.0
    prev = 0.0
    g00 = -q01 - lam0
    mats = magnus_matrices(lam0, lam1, q01, q10)
    for m in range(m_total + 1):
        end = horizon if m == m_total else times[m]
        tau = end - prev
        logs = 0.0
        if tau > 0.0:
            mass = alpha * excite
            if mass <= 0.0 or beta <= 0.0:
                k00, k01, k10, k11, ls = expm2_scaled(g00 * tau, q01 * tau, q10 * tau, (-q10 - lam1) * tau)
                f0, f1 = f0 * k00 + f1 * k10, f0 * k01 + f1 * k11
                logs += ls
            else:
                n = substep_count(tau, beta)
                h = tau / n
                decay_h = math.exp(-beta * h)
                frac = -math.expm1(-beta * h) / beta
                wts = magnus_weights(beta * h)
                e_k = mass
                for k in range(n):
                    if e_k / beta <= COLLAPSE_MASS:
                        r = tau - k * h
                        lbar = lam1 + e_k * (-math.expm1(-beta * r)) / (beta * r)
                        k00, k01, k10, k11, ls = expm2_scaled(g00 * r, q01 * r, q10 * r, (-q10 - lbar) * r)
                        f0, f1 = f0 * k00 + f1 * k10, f0 * k01 + f1 * k11
                        logs += ls
                        break
                    k00, k01, k10, k11, ls = _substep(e_k, h, beta, frac, mats, wts)
                    f0, f1 = f0 * k00 + f1 * k10, f0 * k01 + f1 * k11
                    logs += ls
                    e_k *= decay_h
            excite *= math.exp(-beta * tau) if beta > 0.0 else 1.0
        c = f0 + f1
        out[m] = -(logs + math.log(c))
        f0 /= c
        f1 /= c
        if m < m_total:
            f0 *= lam0
            f1 *= lam1 + alpha * excite
            excite += 1.0
            c = f0 + f1
            f0 /= c
            f1 /= c
        prev = end
    return out
