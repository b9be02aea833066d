"""Families of consistent local distributions over an extended alphabet."""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

STAR = "STAR"
BOT = "BOT"
DEL = "DEL"
SPECIALS = (STAR, BOT, DEL)

NULL_EVENT = 1e-9


class PseudoDistError(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """Base labels ``0..k-1`` followed by the special symbols in order."""

    k: int
    specials: tuple[str, ...] = ()

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("need at least one base label")
        if len(set(self.specials)) != len(self.specials) or not set(self.specials) <= set(SPECIALS):
            raise ValueError(f"specials must be distinct members of {SPECIALS}")

    @property
    def size(self) -> int:
        return self.k + len(self.specials)

    def index(self, sym) -> int:
        if isinstance(sym, str):
            if sym not in self.specials:
                raise KeyError(f"{sym} not in alphabet")
            return self.k + self.specials.index(sym)
        i = int(sym)
        if not 0 <= i < self.size:
            raise KeyError(f"label {i} out of range")
        return i

    def symbol(self, i: int):
        return i if i < self.k else self.specials[i - self.k]

    def is_base(self, i: int) -> bool:
        return 0 <= i < self.k

    def to_dict(self) -> dict:
        return {"k": self.k, "specials": list(self.specials)}


@dataclass(frozen=True)
class Conditioning:
    seed: tuple[int, ...] = ()
    assignment: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.seed) != len(self.assignment):
            raise ValueError("seed and assignment lengths differ")
        if len(set(self.seed)) != len(self.seed):
            raise ValueError("repeated seed vertex")

    def __len__(self) -> int:
        return len(self.seed)

    def extend(self, v: int, a: int) -> "Conditioning":
        return Conditioning(self.seed + (int(v),), self.assignment + (int(a),))

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.seed, self.assignment))


@dataclass(frozen=True)
class PartialLabeling:
    n: int
    labels: Mapping[int, int]
    deleted: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        overlap = set(self.labels) & set(self.deleted)
        if overlap:
            raise ValueError(f"vertices both labelled and deleted: {sorted(overlap)[:5]}")
        for v in itertools.chain(self.labels, self.deleted):
            if not 0 <= v < self.n:
                raise ValueError(f"vertex {v} out of range")

    @property
    def domain(self) -> np.ndarray:
        return np.array(sorted(self.labels), dtype=np.int64)

    def to_dict(self) -> dict:
        return {"n": self.n, "labels": {str(k): int(v) for k, v in sorted(self.labels.items())},
                "deleted": sorted(int(v) for v in self.deleted)}

    @classmethod
    def from_dict(cls, d: dict) -> "PartialLabeling":
        return cls(int(d["n"]), {int(k): int(v) for k, v in d["labels"].items()}, frozenset(int(v) for v in d["deleted"]))


def _key(s: Iterable[int]) -> tuple[int, ...]:
    t = tuple(sorted(int(v) for v in s))
    if len(set(t)) != len(t):
        raise PseudoDistError("repeated vertex in tuple")
    return t


@dataclass(frozen=True)
class ConsistencyReport:
    max_violation: float
    worst: tuple | None
    min_entry: float
    max_sum_error: float

    def ok(self, tol: float) -> bool:
        return self.max_violation <= tol and self.min_entry >= -tol and self.max_sum_error <= tol


class PseudoDistribution:
    """Local distributions on variable tuples, read through marginalization.

    Locals come from one of four sources: an explicit sparse table of
    stored tuples, a full integral assignment, a product of singleton
    marginals, or another pseudo-distribution viewed under a conditioning.
    """

    def __init__(self, level: int, n: int, alphabet: Alphabet, locals: Mapping | None = None, *,
                 tol: float = 1e-7, _integral=None, _product=None, _base=None, _cond: Conditioning | None = None):
        self.level = level
        self.n = n
        self.alphabet = alphabet
        self.tol = tol
        self._integral = _integral
        self._product = _product
        self._base = _base
        self._cond = _cond
        self._store: dict[tuple[int, ...], np.ndarray] = {}
        self._by_vertex: dict[int, list[tuple[int, ...]]] = {}
        self._cache: dict[tuple[int, ...], np.ndarray] = {}
        self._warned = False
        self.derivations: dict[tuple[int, ...], tuple] = {}
        q = alphabet.size
        for key, arr in (locals or {}).items():
            k = _key(key)
            a = np.asarray(arr)
            if a.dtype != object:
                a = a.astype(np.float64)
            if a.shape != (q,) * len(k):
                raise PseudoDistError(f"local on {k} has shape {a.shape}, expected {(q,) * len(k)}")
            self._store[k] = a
            for v in k:
                self._by_vertex.setdefault(v, []).append(k)

    # ---------------------------------------------------------------- sources

    @classmethod
    def from_integral(cls, n: int, alphabet: Alphabet, assignment: Sequence) -> "PseudoDistribution":
        idx = np.array([alphabet.index(a) for a in assignment], dtype=np.int64)
        if idx.size != n:
            raise PseudoDistError("assignment length differs from n")
        return cls(level=10**9, n=n, alphabet=alphabet, _integral=idx)

    @classmethod
    def product(cls, n: int, alphabet: Alphabet, marginals, level: int = 10**9) -> "PseudoDistribution":
        m = np.asarray(marginals)
        if m.dtype != object:
            m = m.astype(np.float64)
        if m.ndim == 1:
            m = np.tile(m, (n, 1)) if m.dtype != object else np.array([list(m)] * n, dtype=object)
        if m.shape != (n, alphabet.size):
            raise PseudoDistError("marginal table has the wrong shape")
        return cls(level=level, n=n, alphabet=alphabet, _product=m)

    @classmethod
    def uniform(cls, n: int, alphabet: Alphabet, level: int = 10**9, exact: bool = False) -> "PseudoDistribution":
        if exact:
            from fractions import Fraction

            row = np.array([Fraction(1, alphabet.size)] * alphabet.size, dtype=object)
        else:
            row = np.full(alphabet.size, 1.0 / alphabet.size)
        return cls.product(n, alphabet, row, level)

    # --------------------------------------------------------------- queries

    @property
    def stored(self) -> list[tuple[int, ...]]:
        return list(self._store)

    @property
    def conditioning(self) -> Conditioning:
        return self._cond or Conditioning()

    def has_local(self, s: Iterable[int]) -> bool:
        try:
            self._locate(_key(s))
            return True
        except PseudoDistError:
            return False

    def _locate(self, s: tuple[int, ...]):
        free = len(set(s) - set(self._cond.seed)) if self._cond is not None else len(s)
        if free > self.level:
            raise PseudoDistError(f"local not materialized: |S| = {len(s)} exceeds level {self.level}")
        if self._integral is not None or self._product is not None:
            return ("closed-form",)
        if self._base is not None:
            seed = self._cond.seed
            u = _key(set(s) | set(seed))
            self._base._locate(u)
            return ("conditioned", u)
        if s in self._store:
            return ("stored", s)
        if not s:
            if self._store:
                return ("stored-any",)
            raise PseudoDistError("local not materialized: empty distribution")
        cands = None
        for v in s:
            lst = set(self._by_vertex.get(v, ()))
            cands = lst if cands is None else cands & lst
            if not cands:
                break
        if not cands:
            raise PseudoDistError(f"local not materialized: {s}")
        best = min(cands, key=len)
        return ("marginalized", best)

    def marginal(self, s: Iterable[int]) -> np.ndarray:
        """Distribution over assignments to ``sorted(s)``, one axis per vertex."""
        s = _key(s)
        if s in self._cache:
            return self._cache[s]
        how = self._locate(s)
        q = self.alphabet.size
        if how[0] == "closed-form":
            if self._integral is not None:
                out = np.zeros((q,) * len(s))
                out[tuple(self._integral[list(s)])] = 1.0
            else:
                one = 1 if self._product.dtype == object else 1.0
                out = np.array(one, dtype=self._product.dtype)
                for v in s:
                    out = np.multiply.outer(out, self._product[v])
        elif how[0] == "conditioned":
            out = self._conditioned_local(s, how[1])
        elif how[0] == "stored":
            out = self._read(s, self._store[s])
        elif how[0] == "stored-any":
            out = np.array(1.0)
        else:
            t = how[1]
            arr = self._read(t, self._store[t])
            axes = tuple(i for i, v in enumerate(t) if v not in s)
            out = arr.sum(axis=axes)
        self.derivations[s] = how
        if len(self._cache) < 200000:
            self._cache[s] = out
        return out

    def _read(self, key, arr):
        if arr.dtype == object:
            return arr
        lo = float(arr.min()) if arr.size else 0.0
        if lo < 0:
            neg = float(-arr[arr < 0].sum())
            if neg > 10 * self.tol:
                raise PseudoDistError(f"local on {key} has negative mass {neg:.3g}")
            if not self._warned:
                warnings.warn("clipping small negative probabilities", RuntimeWarning, stacklevel=3)
                self._warned = True
            arr = np.clip(arr, 0.0, None)
            arr = arr / arr.sum()
        return arr

    def _conditioned_local(self, s, u):
        seed, alpha = self._cond.seed, self._cond.assignment
        base = self._base.marginal(u)
        q = self.alphabet.size
        index = []
        for v in u:
            if v in seed and v not in s:
                index.append(alpha[seed.index(v)])
            else:
                index.append(slice(None))
        arr = base[tuple(index)]
        # seed vertices that are also queried keep their axis as a point mass
        kept = [v for v in u if not (v in seed and v not in s)]
        for v in s:
            if v in seed:
                ax = kept.index(v)
                mask = np.zeros(q, dtype=bool)
                mask[alpha[seed.index(v)]] = True
                shape = [1] * arr.ndim
                shape[ax] = q
                arr = np.where(mask.reshape(shape), arr, 0 * arr)
        z = self._base.probability(self._cond)
        return arr / z

    def probability(self, c: Conditioning) -> float:
        """Mass of the event ``X_seed = assignment``."""
        if not c.seed:
            return 1.0
        arr = self.marginal(c.seed)
        order = np.argsort(c.seed)
        idx = tuple(np.asarray(c.assignment)[order])
        return arr[idx]

    def condition(self, c: Conditioning) -> "PseudoDistribution":
        if not c.seed:
            return self
        if len(c.seed) > self.level:
            raise PseudoDistError("seed larger than the level")
        p = self.probability(c)
        if not p > NULL_EVENT:
            raise PseudoDistError("conditioning on null event")
        if self._integral is not None:
            if any(self._integral[v] != a for v, a in zip(c.seed, c.assignment)):
                raise PseudoDistError("conditioning on null event")
            return self
        if self._base is not None:
            merged = Conditioning(self._cond.seed + tuple(c.seed), self._cond.assignment + tuple(c.assignment))
            return PseudoDistribution(self.level - len(c.seed), self.n, self.alphabet, tol=self.tol,
                                      _base=self._base, _cond=merged)
        return PseudoDistribution(self.level - len(c.seed), self.n, self.alphabet, tol=self.tol, _base=self, _cond=c)

    def singleton_table(self, vertices: Iterable[int] | None = None) -> np.ndarray:
        vs = range(self.n) if vertices is None else vertices
        return np.array([self.marginal((v,)) for v in vs])

    # ------------------------------------------------------------ statistics

    def variance(self, i: int, c: Conditioning | None = None):
        pd = self.condition(c) if c else self
        p = pd.marginal((i,))
        return 1 - (p * p).sum()

    def pair_covariance(self, i: int, j: int, labels: Iterable | None = None, c: Conditioning | None = None):
        pd = self.condition(c) if c else self
        labs = [self.alphabet.index(a) for a in labels] if labels is not None else list(range(self.alphabet.size))
        if i == j:
            p = pd.marginal((i,))
            return sum(p[a] - p[a] * p[a] for a in labs)
        pij = pd.marginal((i, j))
        if i > j:
            pij = pij.T
        pi, pj = pij.sum(axis=1), pij.sum(axis=0)
        return sum(pij[a, a] - pi[a] * pj[a] for a in labs)

    def sample(self, s: Iterable[int], rng=None) -> tuple[int, ...]:
        """One draw from the local on ``sorted(s)``."""
        s = _key(s)
        rng = np.random.default_rng(rng)
        arr = np.asarray(self.marginal(s), dtype=np.float64).ravel()
        arr = np.clip(arr, 0, None)
        flat = int(rng.choice(arr.size, p=arr / arr.sum()))
        return tuple(int(x) for x in np.unravel_index(flat, (self.alphabet.size,) * len(s)))

    def check_consistency(self) -> ConsistencyReport:
        """Compare every pair of stored locals on their overlap."""
        groups: dict[tuple[int, ...], list[tuple[tuple, np.ndarray]]] = {}
        min_entry, sum_err = 0.0, 0.0
        for t, arr in self._store.items():
            a = np.asarray(arr, dtype=np.float64)
            min_entry = min(min_entry, float(a.min()))
            sum_err = max(sum_err, abs(float(a.sum()) - 1.0))
            for r in range(1, len(t) + 1):
                for sub in itertools.combinations(range(len(t)), r):
                    u = tuple(t[i] for i in sub)
                    axes = tuple(i for i in range(len(t)) if i not in sub)
                    groups.setdefault(u, []).append((t, a.sum(axis=axes) if axes else a))
        worst, where = 0.0, None
        for u, lst in groups.items():
            if len(lst) < 2:
                continue
            stack = np.stack([m for _, m in lst])
            spread = stack.max(axis=0) - stack.min(axis=0)
            v = float(spread.max())
            if v > worst:
                worst, where = v, u
        return ConsistencyReport(worst, where, min_entry, sum_err)

    # ------------------------------------------------------------------ I/O

    def to_dict(self) -> dict:
        out = {"level": self.level, "n": self.n, "alphabet": self.alphabet.to_dict(), "locals": []}
        for t, arr in sorted(self._store.items()):
            probs = {",".join(str(self.alphabet.symbol(i)) for i in idx): float(arr[idx])
                     for idx in zip(*np.nonzero(np.asarray(arr, dtype=np.float64) > 0))}
            out["locals"].append({"tuple": list(t), "probs": probs})
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "PseudoDistribution":
        alpha = Alphabet(d["alphabet"]["k"], tuple(d["alphabet"]["specials"]))
        q = alpha.size
        locs = {}
        for rec in d["locals"]:
            t = tuple(rec["tuple"])
            arr = np.zeros((q,) * len(t))
            for key, p in rec["probs"].items():
                idx = tuple(alpha.index(x if x in SPECIALS else int(x)) for x in key.split(",")) if key else ()
                arr[idx] = p
            locs[t] = arr
        return cls(d["level"], d["n"], alpha, locs)
