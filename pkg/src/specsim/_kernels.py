"""Hot inner loops: trace-replay walks and the n-gram suffix match.

Every kernel exists twice: the ``_py_*`` function is the plain-Python
reference over numpy arrays, and the public name is the same function
compiled with numba's ``@njit`` when available. Setting
``SPECSIM_DISABLE_NUMBA=1`` (or running without numba installed) selects
the pure fallback, which computes identical results. See
``benchmarks/bench_kernels.py`` for a timing comparison of the two paths.

Walk kernels accumulate *raw* step costs, i.e. without the multiplicative
overhead fraction; callers apply that factor once at the end so that
speedup ratios are exactly invariant to it.
"""

from __future__ import annotations

import os

ENV_DISABLE = "SPECSIM_DISABLE_NUMBA"


def numba_enabled() -> bool:
    """True when kernels should be jitted (numba importable, env flag unset)."""
    if os.environ.get(ENV_DISABLE, "").strip().lower() in ("1", "true", "yes", "on"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = numba_enabled()


def _py_fixed_k_walk(m, k, c, t_unit, t_s, t_pt):
    """Replay a trace under a fixed proposed length k.

    Per step at cursor i: accept a = min(m[i], k), generate g = a + 1
    clamped to the remaining positions, and pay the full k drafted /
    k + 1 verified cost regardless of clamping. Returns
    (steps, drafted, accepted, raw_wall).
    """
    length = m.shape[0]
    steps = 0
    drafted = 0
    accepted = 0
    wall = 0.0
    step_cost = k * c * t_unit + t_s + t_pt * (k + 1)
    i = 0
    while i < length:
        a = m[i]
        if a > k:
            a = k
        g = a + 1
        rem = length - i
        if g > rem:
            g = rem
        steps += 1
        drafted += k
        accepted += g - 1
        wall += step_cost
        i += g
    return steps, drafted, accepted, wall


def _py_oracle_walk(m, c, t_unit, t_s, t_pt):
    """Replay a trace proposing exactly the acceptable length each step.

    The proposal is clamped so no token beyond the trace end is drafted or
    verified; everything proposed is accepted. Returns
    (steps, drafted, accepted, raw_wall).
    """
    length = m.shape[0]
    steps = 0
    drafted = 0
    accepted = 0
    wall = 0.0
    i = 0
    while i < length:
        p = m[i]
        rem = length - i
        if p + 1 > rem:
            p = rem - 1
        steps += 1
        drafted += p
        accepted += p
        wall += p * c * t_unit + t_s + t_pt * (p + 1)
        i += p + 1
    return steps, drafted, accepted, wall


def _py_combine_walk(ma, mb, c_a, c_b, t_unit, t_s, t_pt):
    """Replay two aligned traces, per step picking the longer accepted span.

    Ties go to the primary trace. The winning method's draft-time ratio is
    charged; clamping matches the single-method oracle walk. Returns
    (steps, drafted, accepted, raw_wall).
    """
    length = ma.shape[0]
    steps = 0
    drafted = 0
    accepted = 0
    wall = 0.0
    i = 0
    while i < length:
        pa = ma[i]
        pb = mb[i]
        if pa >= pb:
            p = pa
            c = c_a
        else:
            p = pb
            c = c_b
        rem = length - i
        if p + 1 > rem:
            p = rem - 1
        steps += 1
        drafted += p
        accepted += p
        wall += p * c * t_unit + t_s + t_pt * (p + 1)
        i += p + 1
    return steps, drafted, accepted, wall


def _py_ngram_match(ctx, n_min, n_max, k, search_limit):
    """Find the continuation span for prompt-lookup drafting.

    Tries suffix lengths n from n_max down to n_min; for each n scans match
    starts from most recent to oldest, requiring the match to end strictly
    before the suffix starts and (via search_limit) to lie inside the
    searchable prefix. On a hit returns (start, count) of the up-to-k tokens
    following the match; (-1, 0) when nothing matches.
    """
    length = ctx.shape[0]
    for n in range(n_max, n_min - 1, -1):
        if 2 * n > length:
            continue
        s_hi = length - 2 * n
        lim = search_limit - n
        if lim < s_hi:
            s_hi = lim
        for s in range(s_hi, -1, -1):
            hit = True
            for j in range(n):
                if ctx[s + j] != ctx[length - n + j]:
                    hit = False
                    break
            if hit:
                start = s + n
                count = length - start
                if count > k:
                    count = k
                return start, count
    return -1, 0


if NUMBA_ENABLED:
    from numba import njit

    _jit = njit(cache=True, nogil=True)
    fixed_k_walk = _jit(_py_fixed_k_walk)
    oracle_walk = _jit(_py_oracle_walk)
    combine_walk = _jit(_py_combine_walk)
    ngram_match = _jit(_py_ngram_match)
else:
    fixed_k_walk = _py_fixed_k_walk
    oracle_walk = _py_oracle_walk
    combine_walk = _py_combine_walk
    ngram_match = _py_ngram_match
