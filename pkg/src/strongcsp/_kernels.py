"""Hot loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and the environment variable
``STRONGCSP_DISABLE_NUMBA`` is unset (or set to ``0``). Both paths compute
the same quantities and are cross-checked in the test suite.
"""

from __future__ import annotations

import contextlib
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _env_disabled() -> bool:
    return os.environ.get("STRONGCSP_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


_state = {"numba": HAS_NUMBA and not _env_disabled()}


def backend() -> str:
    return "numba" if _state["numba"] else "numpy"


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily force ``"numba"`` or ``"numpy"`` kernels."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    old = _state["numba"]
    _state["numba"] = name == "numba"
    try:
        yield
    finally:
        _state["numba"] = old


# ---------------------------------------------------------------- sweep cuts


def _sweep_cuts_np(lo, hi, w, n):
    delta = np.zeros(n, dtype=np.float64)
    np.add.at(delta, lo, w)
    np.add.at(delta, hi, -w)
    return np.cumsum(delta)[: n - 1]


@njit(cache=True)
def _sweep_cuts_nb(lo, hi, w, n):
    delta = np.zeros(n, dtype=np.float64)
    for e in range(lo.shape[0]):
        delta[lo[e]] += w[e]
        delta[hi[e]] -= w[e]
    out = np.empty(n - 1, dtype=np.float64)
    acc = 0.0
    for t in range(n - 1):
        acc += delta[t]
        out[t] = acc
    return out


def sweep_cuts(pos_u, pos_v, w, n):
    """Cut weight of every prefix ``{0..t}`` of a vertex ordering.

    ``pos_u``/``pos_v`` are the positions of each edge's endpoints in the
    ordering. Entry ``t`` of the result is the weight of edges with one end
    at position ``<= t`` and the other at ``> t``.
    """
    lo = np.minimum(pos_u, pos_v).astype(np.int64)
    hi = np.maximum(pos_u, pos_v).astype(np.int64)
    w = np.asarray(w, dtype=np.float64)
    if n < 2:
        return np.zeros(0)
    if _state["numba"]:
        return _sweep_cuts_nb(lo, hi, w, n)
    return _sweep_cuts_np(lo, hi, w, n)


# --------------------------------------------------------------------- FWHT


def _fwht_np(a):
    n = a.shape[0]
    h = 1
    while h < n:
        a = a.reshape(-1, 2, h)
        x = a[:, 0, :].copy()
        y = a[:, 1, :]
        a[:, 0, :] += y
        a[:, 1, :] = x - y
        a = a.reshape(n)
        h *= 2
    return a


@njit(cache=True)
def _fwht_nb(a):
    n = a.shape[0]
    h = 1
    while h < n:
        for i in range(0, n, 2 * h):
            for j in range(i, i + h):
                x = a[j]
                y = a[j + h]
                a[j] = x + y
                a[j + h] = x - y
        h *= 2
    return a


def fwht(values):
    """Unnormalized Walsh-Hadamard transform of a length ``2**k`` vector."""
    a = np.array(values, dtype=np.float64)
    n = a.shape[0]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    if _state["numba"]:
        return _fwht_nb(a)
    return _fwht_np(a)


# ------------------------------------------------- 4-Lin test, raw enumeration


def _project_all(pi, s):
    """``proj[x]`` is the k-bit integer with bit i equal to bit ``pi[i]`` of x."""
    xs = np.arange(1 << s, dtype=np.int64)
    out = np.zeros(1 << s, dtype=np.int64)
    for i, p in enumerate(pi):
        out |= ((xs >> int(p)) & 1) << i
    return out


def _noise_weights(k, eta):
    r = np.arange(1 << k)
    pc = np.array([bin(int(v)).count("1") for v in r])
    return (eta ** pc) * ((1.0 - eta) ** (k - pc))


def _fourlin_np(f1, f2, px1, px2, wr, k):
    size = 1 << k
    ones = size - 1
    y = np.arange(size)
    yy, rr = np.meshgrid(y, y, indexing="ij")
    q1 = yy ^ rr
    total = 0.0
    for x in range(px1.shape[0]):
        for b in range(2):
            a = f1[q1] * f1[px1[x] ^ yy]  # indexed by (y1, r1)
            c = f2[q1] * f2[px2[x] ^ yy ^ (ones * b)]  # indexed by (y2, r2)
            prod = a[:, :, None, None] * c[None, None, :, :]
            sign = 1.0 if b == 0 else -1.0
            acc = (prod == sign).astype(np.float64)
            wt = wr[None, :, None, None] * wr[None, None, None, :]
            total += float(np.sum(acc * wt))
    return total / (px1.shape[0] * 2 * size * size)


@njit(cache=True)
def _fourlin_nb(f1, f2, px1, px2, wr, k):
    size = 1 << k
    ones = size - 1
    total = 0.0
    for x in range(px1.shape[0]):
        for b in range(2):
            want = 1.0 if b == 0 else -1.0
            for y1 in range(size):
                a2 = f1[px1[x] ^ y1]
                for r1 in range(size):
                    a = f1[y1 ^ r1] * a2
                    w1 = wr[r1]
                    for y2 in range(size):
                        c2 = f2[px2[x] ^ y2 ^ (ones * b)]
                        for r2 in range(size):
                            if a * f2[y2 ^ r2] * c2 == want:
                                total += w1 * wr[r2]
    return total / (px1.shape[0] * 2 * size * size)


def fourlin_accept_enumerate(f1, f2, pi1, pi2, s, eta):
    """Acceptance probability of one product edge by raw enumeration.

    ``f1``/``f2`` hold the folded tables as +-1 arrays over ``{0,1}^k``;
    ``pi1``/``pi2`` map ``[k] -> [s]``. Every draw of
    ``(x, y1, r1, y2, r2, b)`` is visited with its exact weight.
    """
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    k = int(np.log2(f1.shape[0]))
    px1 = _project_all(np.asarray(pi1), s)
    px2 = _project_all(np.asarray(pi2), s)
    wr = _noise_weights(k, eta)
    if _state["numba"]:
        return float(_fourlin_nb(f1, f2, px1, px2, wr, k))
    return float(_fourlin_np(f1, f2, px1, px2, wr, k))


# ------------------------------------------- brute-force Strong 2-CSP optimum


def _strong_csp_np(n, k, cu, cv, allowed):
    subsets = np.arange(1 << n, dtype=np.int64)
    sizes = np.zeros(1 << n, dtype=np.int64)
    for v in range(n):
        sizes += (subsets >> v) & 1
    best = -1
    best_mask = 0
    digits = np.zeros(n, dtype=np.int64)
    for _ in range(k**n):
        bad = np.zeros(n, dtype=np.int64)
        for c in range(cu.shape[0]):
            u, v = cu[c], cv[c]
            if not allowed[c, digits[u], digits[v]]:
                bad[u] |= 1 << v
                bad[v] |= 1 << u
        ok = np.ones(1 << n, dtype=bool)
        for v in range(n):
            if bad[v]:
                inside = ((subsets >> v) & 1) == 1
                ok &= ~inside | ((subsets & bad[v]) == 0)
        cand = np.where(ok, sizes, -1)
        j = int(np.argmax(cand))
        if cand[j] > best:
            best = int(cand[j])
            best_mask = j
        for i in range(n):
            digits[i] += 1
            if digits[i] < k:
                break
            digits[i] = 0
    return best, best_mask


@njit(cache=True)
def _strong_csp_nb(n, k, cu, cv, allowed):
    best = -1
    best_mask = 0
    digits = np.zeros(n, dtype=np.int64)
    bad = np.zeros(n, dtype=np.int64)
    total = 1
    for _ in range(n):
        total *= k
    for _ in range(total):
        for v in range(n):
            bad[v] = 0
        for c in range(cu.shape[0]):
            u = cu[c]
            v = cv[c]
            if not allowed[c, digits[u], digits[v]]:
                bad[u] |= 1 << v
                bad[v] |= 1 << u
        for mask in range(1 << n):
            size = 0
            good = True
            for v in range(n):
                if (mask >> v) & 1:
                    size += 1
                    if mask & bad[v]:
                        good = False
                        break
            if good and size > best:
                best = size
                best_mask = mask
        for i in range(n):
            digits[i] += 1
            if digits[i] < k:
                break
            digits[i] = 0
    return best, best_mask


def strong_csp_bruteforce(n, k, cu, cv, allowed):
    """Largest vertex set whose induced constraints are jointly satisfiable.

    ``allowed[c, a, b]`` says whether labels ``(a, b)`` satisfy constraint
    ``c`` on ``(cu[c], cv[c])``. Returns ``(size, bitmask)``.
    """
    cu = np.asarray(cu, dtype=np.int64)
    cv = np.asarray(cv, dtype=np.int64)
    allowed = np.asarray(allowed, dtype=np.bool_)
    if _state["numba"]:
        best, mask = _strong_csp_nb(n, k, cu, cv, allowed)
    else:
        best, mask = _strong_csp_np(n, k, cu, cv, allowed)
    return int(best), int(mask)
