"""Label Cover squaring, the folded long-code 4-Lin test, and the independent-set reduction.

Bit ``i`` of an integer ``x`` is coordinate ``i`` of ``x`` in ``{0,1}^k``;
coordinate 0 plays the role of the first coordinate in folding. A +-1
table ``f`` has Fourier coefficients ``f_hat(a) = E_x f(x) (-1)^{popcount(a & x)}``.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graph import Graph
from .relax import CSPInstance

MAX_FWHT_K = 20
MAX_EXACT_K = 10
MAX_CONTAIN_K = 8


class GadgetError(ValueError):
    pass


class BoundViolation(AssertionError):
    pass


def _popcount(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    out = np.zeros(a.shape, dtype=np.int64)
    while a.any():
        out += a & 1
        a = a >> 1
    return out


# ---------------------------------------------------------------- label cover


@dataclass(frozen=True, eq=False)
class LabelCover:
    """Bipartite Label Cover: edge ``e`` joins ``u[e]`` and ``v[e]`` with projection ``proj[e]: [k] -> [s]``."""

    n_u: int
    n_v: int
    u: np.ndarray
    v: np.ndarray
    proj: np.ndarray  # (m, k) with values in [s]
    k: int
    s: int

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int64)
        v = np.asarray(self.v, dtype=np.int64)
        proj = np.asarray(self.proj, dtype=np.int64).reshape(u.size, self.k)
        if u.shape != v.shape:
            raise GadgetError("edge endpoint arrays differ in length")
        if u.size and (u.min() < 0 or u.max() >= self.n_u or v.min() < 0 or v.max() >= self.n_v):
            raise GadgetError("edge endpoint out of range")
        if proj.size and (proj.min() < 0 or proj.max() >= self.s):
            raise GadgetError("projection value out of range")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "proj", proj)

    @property
    def m(self) -> int:
        return int(self.u.size)

    @property
    def degrees(self) -> tuple[np.ndarray, np.ndarray]:
        return np.bincount(self.u, minlength=self.n_u), np.bincount(self.v, minlength=self.n_v)

    @property
    def biregular(self) -> bool:
        du, dv = self.degrees
        return bool(self.m and du.min() == du.max() and dv.min() == dv.max())

    def satisfied(self, sigma_u, sigma_v) -> float:
        su = np.asarray(sigma_u)
        sv = np.asarray(sigma_v)
        return float(np.mean(self.proj[np.arange(self.m), sv[self.v]] == su[self.u])) if self.m else 1.0


def random_label_cover(n_u: int, deg_u: int, n_v: int, k: int, s: int, rng=0) -> tuple[LabelCover, np.ndarray, np.ndarray]:
    """A satisfiable bi-regular instance and its planted labeling ``(lc, sigma_u, sigma_v)``.

    Needs ``n_u * deg_u`` divisible by ``n_v``. Parallel edges may occur.
    """
    if (n_u * deg_u) % n_v:
        raise GadgetError("n_u * deg_u must be divisible by n_v")
    if s > k:
        raise GadgetError("need s <= k")
    rng = np.random.default_rng(rng)
    deg_v = n_u * deg_u // n_v
    u = np.repeat(np.arange(n_u), deg_u)
    v = rng.permutation(np.repeat(np.arange(n_v), deg_v))
    sigma_u = rng.integers(0, s, n_u)
    sigma_v = rng.integers(0, k, n_v)
    proj = rng.integers(0, s, (u.size, k))
    proj[np.arange(u.size), sigma_v[v]] = sigma_u[u]
    return LabelCover(n_u, n_v, u, v, proj, k, s), sigma_u, sigma_v


@dataclass(frozen=True, eq=False)
class ProductLabelCover:
    """Constraints ``(v1, v2, pi1, pi2, weight)`` on the right vertices; weights sum to 1."""

    n: int
    k: int
    s: int
    v1: np.ndarray
    v2: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise GadgetError("constraint weights must be nonnegative and sum to 1")

    @property
    def m(self) -> int:
        return int(self.v1.size)

    def satisfied(self, sigma) -> float:
        sigma = np.asarray(sigma)
        r = np.arange(self.m)
        ok = self.pi1[r, sigma[self.v1]] == self.pi2[r, sigma[self.v2]]
        return float(self.weight[ok].sum())


def square_label_cover(lc: LabelCover) -> ProductLabelCover:
    """Pick a left vertex, then two of its edges independently; merge identical constraints."""
    if not lc.biregular:
        raise GadgetError("label cover is not bi-regular")
    by_u = defaultdict(list)
    for e in range(lc.m):
        by_u[int(lc.u[e])].append(e)
    deg = len(by_u[int(lc.u[0])])
    w0 = 1.0 / (lc.n_u * deg * deg)
    acc: dict = defaultdict(float)
    for u in sorted(by_u):
        for e1 in by_u[u]:
            for e2 in by_u[u]:
                key = (int(lc.v[e1]), int(lc.v[e2]), tuple(lc.proj[e1].tolist()), tuple(lc.proj[e2].tolist()))
                acc[key] += w0
    keys = list(acc)
    return ProductLabelCover(
        lc.n_v, lc.k, lc.s,
        np.array([t[0] for t in keys], dtype=np.int64), np.array([t[1] for t in keys], dtype=np.int64),
        np.array([t[2] for t in keys], dtype=np.int64).reshape(-1, lc.k),
        np.array([t[3] for t in keys], dtype=np.int64).reshape(-1, lc.k),
        np.array([acc[t] for t in keys]))


@dataclass
class ExpansionReport:
    alpha: float
    weight: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.weight >= self.bound - 1e-12


def weak_expansion_product(plc: ProductLabelCover, s, check: bool = True) -> ExpansionReport:
    """Induced constraint weight of ``s`` against ``alpha**2``."""
    inside = np.zeros(plc.n, dtype=bool)
    inside[np.asarray(list(s), dtype=np.int64)] = True
    alpha = inside.sum() / plc.n
    w = float(plc.weight[inside[plc.v1] & inside[plc.v2]].sum())
    rep = ExpansionReport(float(alpha), w, float(alpha**2))
    if check and not rep.ok:
        raise BoundViolation(f"induced weight {w} below alpha^2 = {alpha**2}")
    return rep


# -------------------------------------------------------------------- tables


@dataclass(frozen=True, eq=False)
class BooleanTable:
    """A +-1 valued function on ``{0,1}^k``."""

    k: int
    values: np.ndarray
    folded: bool = False

    def __post_init__(self):
        if not 1 <= self.k <= MAX_FWHT_K:
            raise GadgetError(f"k must lie in [1, {MAX_FWHT_K}]")
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if vals.size != 1 << self.k or not np.isin(vals, (-1.0, 1.0)).all():
            raise GadgetError("values must be +-1 of length 2**k")
        object.__setattr__(self, "values", vals)
        if self.folded and not self.is_folded():
            raise GadgetError("table flagged folded but f(x ^ 1) != -f(x)")

    def is_folded(self) -> bool:
        ones = (1 << self.k) - 1
        x = np.arange(1 << self.k)
        return bool(np.all(self.values[x ^ ones] == -self.values))

    @classmethod
    def fold(cls, k: int, bits) -> "BooleanTable":
        """Fold a 0/1 table: ``g(x) = f(x ^ x_0 * ones) + x_0`` (mod 2), returned as ``(-1)**g``."""
        f = np.asarray(bits, dtype=np.int64).reshape(-1) & 1
        if f.size != 1 << k:
            raise GadgetError("need 2**k bits")
        x = np.arange(1 << k)
        x0 = x & 1
        g = f[np.where(x0 == 1, x ^ ((1 << k) - 1), x)] ^ x0
        return cls(k, 1.0 - 2.0 * g, folded=True)

    @classmethod
    def from_canonical(cls, k: int, signs) -> "BooleanTable":
        """Folded table from its values at the ``2**(k-1)`` points with coordinate 0 equal to 0."""
        signs = np.asarray(signs, dtype=np.float64).reshape(-1)
        if signs.size != 1 << (k - 1):
            raise GadgetError("need 2**(k-1) canonical values")
        x = np.arange(1 << k)
        canon = np.where(x & 1, x ^ ((1 << k) - 1), x)
        sign = np.where(x & 1, -1.0, 1.0)
        return cls(k, sign * signs[canon >> 1], folded=True)

    @classmethod
    def dictator(cls, k: int, i: int) -> "BooleanTable":
        x = np.arange(1 << k)
        return cls(k, 1.0 - 2.0 * ((x >> i) & 1), folded=True)

    @classmethod
    def character(cls, k: int, alpha: int) -> "BooleanTable":
        vals = 1.0 - 2.0 * (_popcount(np.arange(1 << k) & alpha) & 1)
        return cls(k, vals, folded=bool(_popcount(np.array([alpha]))[0] & 1))

    @classmethod
    def random_folded(cls, k: int, rng) -> "BooleanTable":
        rng = np.random.default_rng(rng)
        return cls.from_canonical(k, rng.choice([-1.0, 1.0], 1 << (k - 1)))


def walsh_hadamard(table: BooleanTable) -> np.ndarray:
    """All Fourier coefficients via the fast transform; checks Parseval."""
    coef = _kernels.fwht(table.values) / (1 << table.k)
    err = abs(float(coef @ coef) - 1.0)
    if err > 1e-12:
        raise GadgetError(f"Parseval off by {err}")
    return coef


def noise_character_mean(alpha: int, k: int, eta: float) -> float:
    """``E chi_alpha(rho)`` for ``rho`` with i.i.d. Bernoulli(eta) bits, by enumeration."""
    r = np.arange(1 << k)
    pc = _popcount(r)
    w = eta**pc * (1 - eta) ** (k - pc)
    chi = 1.0 - 2.0 * (_popcount(r & alpha) & 1)
    return float(w @ chi)


def parity_projection(pi: np.ndarray, k: int) -> np.ndarray:
    """``out[a]``: the ``s``-bit vector of coordinates hit an odd number of times by ``pi`` on ``supp(a)``."""
    a = np.arange(1 << k)
    out = np.zeros(1 << k, dtype=np.int64)
    for i in range(k):
        out ^= ((a >> i) & 1) << int(pi[i])
    return out


# ------------------------------------------------------------------ 4-Lin test


def _check_tables(plc: ProductLabelCover, tables, folded: bool = True) -> list[BooleanTable]:
    tables = list(tables)
    if len(tables) != plc.n:
        raise GadgetError("one table per variable required")
    for t in tables:
        if t.k != plc.k:
            raise GadgetError("table dimension differs from label count")
        if folded and not t.folded:
            raise GadgetError("tables must be folded")
    return tables


def edge_acceptance(c1: np.ndarray, c2: np.ndarray, pi1, pi2, k: int, s: int, eta: float) -> float:
    """Closed form for one product edge from Fourier coefficients.

    ``1/2 + 1/2 sum f1_hat(a)^2 f2_hat(b)^2 (1 - 2 eta)^{|a| + |b|}`` over
    pairs with equal parity projections and ``|b|`` odd.
    """
    size = 1 << k
    pc = _popcount(np.arange(size))
    damp = (1.0 - 2.0 * eta) ** pc
    p1 = parity_projection(np.asarray(pi1), k)
    p2 = parity_projection(np.asarray(pi2), k)
    a1 = np.bincount(p1, weights=c1**2 * damp, minlength=1 << s)
    a2 = np.bincount(p2, weights=c2**2 * damp * (pc & 1), minlength=1 << s)
    return 0.5 + 0.5 * float(a1 @ a2)


@dataclass
class Acceptance:
    value: float
    stderr: float
    mode: str
    exact: float | None = None


def _mc_accept(plc, tables, eta, samples, rng):
    k, s = plc.k, plc.s
    ones = (1 << k) - 1
    e = rng.choice(plc.m, samples, p=plc.weight)
    x = rng.integers(0, 1 << s, samples)
    y1 = rng.integers(0, 1 << k, samples)
    y2 = rng.integers(0, 1 << k, samples)
    bits = (rng.random((samples, 2, k)) < eta).astype(np.int64)
    weights = 1 << np.arange(k)
    r1 = bits[:, 0] @ weights
    r2 = bits[:, 1] @ weights
    b = rng.integers(0, 2, samples)
    vals = np.stack([t.values for t in tables])
    px1 = np.zeros(samples, dtype=np.int64)
    px2 = np.zeros(samples, dtype=np.int64)
    for i in range(k):
        px1 |= ((x >> plc.pi1[e, i]) & 1) << i
        px2 |= ((x >> plc.pi2[e, i]) & 1) << i
    f1 = vals[plc.v1[e]]
    f2 = vals[plc.v2[e]]
    r = np.arange(samples)
    prod = f1[r, y1 ^ r1] * f1[r, px1 ^ y1] * f2[r, y2 ^ r2] * f2[r, px2 ^ y2 ^ (ones * b)]
    acc = prod == np.where(b == 0, 1.0, -1.0)
    return float(acc.mean()), float(acc.std(ddof=1) / np.sqrt(samples)) if samples > 1 else float("inf")


def acceptance_probability(plc: ProductLabelCover, tables, eta: float, mode: str = "exact", samples: int = 20000,
                           rng=0, cross_check: bool = True) -> Acceptance:
    """Probability that the folded 4-Lin test accepts ``tables``.

    ``exact`` sums the Fourier closed form per constraint, ``brute`` visits
    every random draw of the test, and ``mc`` samples it. In ``mc`` mode
    with ``k <= 10`` the estimate is checked against the exact value.
    """
    tables = _check_tables(plc, tables)
    if not 0 <= eta <= 0.5:
        raise GadgetError("eta must lie in [0, 1/2]")
    if mode == "exact":
        if plc.k > MAX_EXACT_K:
            raise GadgetError(f"exact mode needs k <= {MAX_EXACT_K}")
        coefs = [walsh_hadamard(t) for t in tables]
        val = sum(w * edge_acceptance(coefs[a], coefs[b], p1, p2, plc.k, plc.s, eta)
                  for a, b, p1, p2, w in zip(plc.v1, plc.v2, plc.pi1, plc.pi2, plc.weight))
        return Acceptance(float(val), 0.0, mode, float(val))
    if mode == "brute":
        val = sum(w * _kernels.fourlin_accept_enumerate(tables[a].values, tables[b].values, p1, p2, plc.s, eta)
                  for a, b, p1, p2, w in zip(plc.v1, plc.v2, plc.pi1, plc.pi2, plc.weight))
        return Acceptance(float(val), 0.0, mode, None)
    if mode == "mc":
        val, se = _mc_accept(plc, tables, eta, samples, np.random.default_rng(rng))
        exact = None
        if cross_check and plc.k <= MAX_EXACT_K:
            exact = acceptance_probability(plc, tables, eta, "exact").value
            if abs(val - exact) > 4 * max(se, 1.0 / samples):
                raise RuntimeError(f"Monte Carlo {val:.4f} +- {se:.4f} disagrees with exact {exact:.6f}")
        return Acceptance(val, se, mode, exact)
    raise GadgetError(f"unknown mode {mode!r}")


@dataclass
class Decoding:
    labels: np.ndarray
    satisfied: float


def randomized_decode(tables, plc: ProductLabelCover, rng=0, require_folded: bool = True) -> Decoding:
    """Draw ``a`` with probability ``f_hat(a)^2`` and a label uniform on ``supp(a)``, per variable.

    Folding makes ``f_hat(0) = 0``; unfolded tables are accepted with
    ``require_folded=False`` and fail only if the empty character is drawn.
    """
    tables = _check_tables(plc, tables, require_folded)
    rng = np.random.default_rng(rng)
    labels = np.zeros(plc.n, dtype=np.int64)
    for v, t in enumerate(tables):
        p = walsh_hadamard(t) ** 2
        a = int(rng.choice(p.size, p=p / p.sum()))
        if a == 0:
            raise GadgetError(f"empty character drawn for variable {v}")
        supp = [i for i in range(plc.k) if (a >> i) & 1]
        labels[v] = supp[int(rng.integers(len(supp)))]
    return Decoding(labels, plc.satisfied(labels))


def decode_trials(tables, plc: ProductLabelCover, trials: int, rng=0) -> float:
    rng = np.random.default_rng(rng)
    return float(np.mean([randomized_decode(tables, plc, rng).satisfied for _ in range(trials)]))


# ------------------------------------------------------ weak expansion in tests


def folded_indicator(members, k: int) -> np.ndarray:
    """Indicator on ``{0,1}^k`` of a set of folded positions given as ``(k-1)``-bit ints."""
    ind = np.zeros(1 << (k - 1))
    ind[np.asarray(list(members), dtype=np.int64)] = 1.0
    x = np.arange(1 << k)
    rest = x >> 1
    rest = np.where(x & 1, rest ^ ((1 << (k - 1)) - 1), rest)
    return ind[rest]


@dataclass
class ContainmentReport:
    probability: float
    lower: float
    upper: float

    @property
    def ok(self) -> bool:
        return self.lower - 1e-12 <= self.probability <= self.upper + 1e-12


def query_containment_probability(eta: float, k: int, a, b, pi1=None, pi2=None, s: int | None = None,
                                  check: bool = True) -> ContainmentReport:
    """Exact probability that all four queries of one product edge land in ``A`` (first table) or ``B`` (second)."""
    if not 2 <= k <= MAX_CONTAIN_K:
        raise GadgetError(f"k must lie in [2, {MAX_CONTAIN_K}]")
    s = k if s is None else s
    pi1 = np.arange(k) if pi1 is None else np.asarray(pi1)
    pi2 = np.arange(k) if pi2 is None else np.asarray(pi2)
    size = 1 << k
    ones = size - 1
    ia = folded_indicator(a, k)
    ib = folded_indicator(b, k)
    r = np.arange(size)
    pc = _popcount(r)
    w = eta**pc * (1 - eta) ** (k - pc)
    y = np.arange(size)
    # noise folded analytically: smooth[y] = sum_rho w(rho) 1(y ^ rho)
    smooth_a = ia[y[:, None] ^ r[None, :]] @ w
    smooth_b = ib[y[:, None] ^ r[None, :]] @ w
    px1 = _kernels._project_all(pi1, s)
    px2 = _kernels._project_all(pi2, s)
    total = 0.0
    for x in range(1 << s):
        part1 = float(smooth_a @ ia[px1[x] ^ y]) / size
        part2 = sum(float(smooth_b @ ib[px2[x] ^ y ^ (ones * bb)]) / size for bb in (0, 1)) / 2
        total += part1 * part2
    p = total / (1 << s)
    alpha = len(set(a)) / (1 << (k - 1))
    beta = len(set(b)) / (1 << (k - 1))
    rep = ContainmentReport(p, alpha**2 * beta**2 / 2, alpha * beta)
    if check and not rep.ok:
        raise BoundViolation(f"containment {p} outside [{rep.lower}, {rep.upper}]")
    return rep


# ------------------------------------------------------------ 4-Lin instances


@dataclass(frozen=True, eq=False)
class FourLinInstance:
    """Weighted XOR constraints ``x[v0] ^ x[v1] ^ x[v2] ^ x[v3] = rhs`` over folded table positions.

    Variable ``v * 2**(k-1) + c`` is position ``c`` (coordinate 0 dropped) of variable ``v``'s table.
    """

    n_tables: int
    k: int
    vars: np.ndarray  # (m, 4)
    rhs: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vars, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 4:
            raise GadgetError("constraints must have arity exactly 4")
        if (np.asarray(self.weight) < 0).any():
            raise GadgetError("weights must be nonnegative")
        object.__setattr__(self, "vars", v)
        object.__setattr__(self, "rhs", np.asarray(self.rhs, dtype=np.int64))
        object.__setattr__(self, "weight", np.asarray(self.weight, dtype=np.float64))

    @property
    def n_vars(self) -> int:
        return self.n_tables << (self.k - 1)

    @property
    def m(self) -> int:
        return int(self.rhs.size)

    def satisfied(self, bits) -> float:
        bits = np.asarray(bits, dtype=np.int64)
        ok = (np.bitwise_xor.reduce(bits[self.vars], axis=1) == self.rhs)
        return float(self.weight[ok].sum() / self.weight.sum())

    def induced_weight(self, s) -> float:
        inside = np.zeros(self.n_vars, dtype=bool)
        inside[np.asarray(list(s), dtype=np.int64)] = True
        return float(self.weight[inside[self.vars].all(axis=1)].sum() / self.weight.sum())

    def dictator_assignment(self, sigma) -> np.ndarray:
        """Bits of the long codes of ``sigma``: position ``c`` of table ``v`` gets bit ``sigma[v]`` of ``c << 1``."""
        sigma = np.asarray(sigma, dtype=np.int64)
        half = 1 << (self.k - 1)
        var = np.arange(self.n_vars)
        c = (var % half) << 1
        return (c >> sigma[var // half]) & 1

    def to_dict(self) -> dict:
        return {"n_tables": self.n_tables, "k": self.k,
                "constraints": [{"vars": v.tolist(), "rhs": int(r), "weight": float(w)}
                                for v, r, w in zip(self.vars, self.rhs, self.weight)]}

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "FourLinInstance":
        cons = d["constraints"]
        return cls(int(d["n_tables"]), int(d["k"]), np.array([c["vars"] for c in cons], dtype=np.int64).reshape(-1, 4),
                   np.array([c["rhs"] for c in cons], dtype=np.int64), np.array([c["weight"] for c in cons]))


def build_4lin(plc: ProductLabelCover, eta: float, m: int, rng=0) -> FourLinInstance:
    """Sample ``m`` runs of the test; each becomes one XOR constraint with weight ``1/m``.

    A query at point ``t`` of a folded table reads canonical position
    ``t`` (or ``t ^ ones`` when coordinate 0 is set) and flips the sign in
    the latter case, which moves into the right-hand side.
    """
    if m < 1:
        raise GadgetError("need m >= 1")
    rng = np.random.default_rng(rng)
    k, s = plc.k, plc.s
    ones = (1 << k) - 1
    half = 1 << (k - 1)
    e = rng.choice(plc.m, m, p=plc.weight)
    x = rng.integers(0, 1 << s, m)
    y1 = rng.integers(0, 1 << k, m)
    y2 = rng.integers(0, 1 << k, m)
    noise = (rng.random((m, 2, k)) < eta).astype(np.int64) @ (1 << np.arange(k))
    b = rng.integers(0, 2, m)
    px1 = np.zeros(m, dtype=np.int64)
    px2 = np.zeros(m, dtype=np.int64)
    for i in range(k):
        px1 |= ((x >> plc.pi1[e, i]) & 1) << i
        px2 |= ((x >> plc.pi2[e, i]) & 1) << i
    points = np.stack([y1 ^ noise[:, 0], px1 ^ y1, y2 ^ noise[:, 1], px2 ^ y2 ^ (ones * b)], axis=1)
    owner = np.stack([plc.v1[e], plc.v1[e], plc.v2[e], plc.v2[e]], axis=1)
    flip = points & 1
    canon = np.where(flip == 1, points ^ ones, points) >> 1
    rhs = b ^ np.bitwise_xor.reduce(flip, axis=1)
    return FourLinInstance(plc.n, k, owner * half + canon, rhs, np.full(m, 1.0 / m))


# ------------------------------------------------------- independent-set reduction


def indset_to_strong_csp(g: Graph) -> CSPInstance:
    """Two labels; every edge carries both ``x_u = x_v`` and ``x_u != x_v``, so no edge can be kept."""
    eq = np.eye(2, dtype=bool)
    return CSPInstance(g, 2, tuple((eq, ~eq) for _ in range(g.m)))


def strong_csp_bruteforce(inst: CSPInstance) -> tuple[int, np.ndarray]:
    """Largest vertex set whose induced constraints are jointly satisfiable (exhaustive, n <= 14)."""
    n = inst.graph.n
    if n > 14:
        raise GadgetError("brute force limited to n <= 14")
    size, mask = _kernels.strong_csp_bruteforce(n, inst.k, inst.graph.src, inst.graph.dst, inst.allowed)
    return size, np.array([v for v in range(n) if (mask >> v) & 1], dtype=np.int64)
