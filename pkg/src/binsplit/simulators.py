"""Monte Carlo samplers for the parking, PATRICIA, geometric and urn models.

Every trial draws from its own counter-based stream
``Philox(key = seed + 2**64 * trial_index)``, so histograms do not depend on
how trials are split across workers or in which order they run.
"""

from __future__ import annotations

import itertools
import math
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy import stats

from .errors import ParameterError, ResourceLimitError, UnderpoweredWarning
from .exact import ExactPmf

MIN_TRIALS = 1000
KEY_CHUNK = 64
MAX_KEY_BITS = 4096


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial."""
    if seed < 0 or trial < 0:
        raise ParameterError("seed and trial index must be non-negative")
    return np.random.Generator(np.random.Philox(key=(seed % 2**64) + (trial << 64)))


# ---------------------------------------------------------------------------
# corner-preference parking


@dataclass(frozen=True)
class ParkingConfig:
    """Cubes of side ``m`` in a box of side ``2m``; corners live in ``{0..m}^n``."""

    n: int
    m: int
    enumeration_threshold: int = 10**6
    debug: bool = False

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ParameterError("parking needs n >= 1 and m >= 1")


@lru_cache(maxsize=4096)
def _valid_positions(a: tuple, m: int) -> np.ndarray:
    """All ``x <= a`` with ``x_j = 0`` for some ``j`` where ``a_j = m``."""
    grid = np.array(list(itertools.product(*(range(v + 1) for v in a))), dtype=np.int64)
    full = np.array([v == m for v in a])
    ok = np.any((grid == 0) & full, axis=1)
    return grid[ok]


def _overlaps(x, c, m) -> bool:
    return all(abs(xi - ci) < m for xi, ci in zip(x, c))


def park_direct(config: ParkingConfig, rng: np.random.Generator) -> int:
    """Run the parking process literally; returns the number of cars after the first.

    The first car sits at ``(m, ..., m)``.  Each later car is uniform among
    corners ``x <= a`` (``a`` the previous corner) that do not overlap the
    previous cube, i.e. ``a_j - x_j >= m`` for some ``j``.  Coordinates only
    decrease, so earlier cubes are never closer than the last one; ``debug``
    re-checks that against every parked cube.
    """
    n, m = config.n, config.m
    a = (m,) * n
    parked = [a]
    count = 0
    while m in a:
        box = math.prod(v + 1 for v in a)
        if box <= config.enumeration_threshold:
            choices = _valid_positions(a, m)
            x = tuple(int(v) for v in choices[rng.integers(len(choices))])
        else:
            hi = np.array(a) + 1
            full = np.array([v == m for v in a])
            while True:
                cand = rng.integers(0, hi)
                if np.any((cand == 0) & full):
                    x = tuple(int(v) for v in cand)
                    break
        if config.debug:
            for c in parked:
                if _overlaps(x, c, m):
                    raise AssertionError(f"cube at {x} overlaps cube at {c}")
            parked.append(x)
        a = x
        count += 1
    return count


@lru_cache(maxsize=1024)
def _parking_split_weights(r: int, m: int) -> np.ndarray:
    den = (m + 1) ** r - m**r
    w = [Fraction(math.comb(r, k) * (m**k - (m - 1) ** k), den) for k in range(1, r + 1)]
    return np.array([float(x) for x in w])


def park_split(config: ParkingConfig, rng: np.random.Generator) -> int:
    """Sample ``Y_n`` through the splitting recurrence: ``k`` coordinates leave the value ``m``."""
    r, m = config.n, config.m
    count = 0
    while r > 0:
        w = _parking_split_weights(r, m)
        k = 1 + int(rng.choice(r, p=w))
        r -= k
        count += 1
    return count


# ---------------------------------------------------------------------------
# PATRICIA tries


@dataclass
class PatriciaNode:
    """Internal node testing ``bit``; ``skip`` bits were compressed away above it."""

    bit: int
    skip: int
    left: "PatriciaNode | int"
    right: "PatriciaNode | int"

    def internal_count(self) -> int:
        c = 1
        for child in (self.left, self.right):
            if isinstance(child, PatriciaNode):
                c += child.internal_count()
        return c


class _LazyKeys:
    """``n`` bit streams with ``P(bit = 1) = p``, generated in 64-bit chunks."""

    def __init__(self, n: int, p: float, rng: np.random.Generator):
        self.n, self.p, self.rng = n, p, rng
        self.bits = [0] * n
        self.length = 0
        self.extend()

    def extend(self) -> None:
        if self.length >= MAX_KEY_BITS:
            raise ResourceLimitError(f"keys still tied after {MAX_KEY_BITS} bits")
        chunk = self.rng.random((self.n, KEY_CHUNK)) < self.p
        packed = np.packbits(chunk, axis=1, bitorder="little")
        for i in range(self.n):
            self.bits[i] |= int.from_bytes(packed[i].tobytes(), "little") << self.length
        self.length += KEY_CHUNK

    def bit(self, i: int, pos: int) -> int:
        while pos >= self.length:
            self.extend()
        return (self.bits[i] >> pos) & 1

    def first_difference(self, idx: list[int], pos: int) -> int:
        """Smallest position ``>= pos`` where the keys in ``idx`` are not all equal."""
        while True:
            k0 = self.bits[idx[0]]
            diff = 0
            for i in idx[1:]:
                diff |= self.bits[i] ^ k0
            diff >>= pos
            if diff:
                return pos + ((diff & -diff).bit_length() - 1)
            self.extend()

    def first_one(self, i: int) -> int:
        while self.bits[i] == 0:
            self.extend()
        b = self.bits[i]
        return (b & -b).bit_length() - 1


def build_patricia(keys: _LazyKeys, idx: list[int] | None = None, pos: int = 0) -> "PatriciaNode | int":
    """Compressed binary trie over the keys in ``idx``; leaves are key indices."""
    if idx is None:
        idx = list(range(keys.n))
    if len(idx) == 1:
        return idx[0]
    d = keys.first_difference(idx, pos)
    left = [i for i in idx if not (keys.bits[i] >> d) & 1]
    right = [i for i in idx if (keys.bits[i] >> d) & 1]
    return PatriciaNode(d, d - pos, build_patricia(keys, left, d + 1), build_patricia(keys, right, d + 1))


def _depth_of(tree, key: int, keys: _LazyKeys) -> int:
    depth = 0
    node = tree
    while isinstance(node, PatriciaNode):
        node = node.right if keys.bit(key, node.bit) else node.left
        depth += 1
    return depth


def _left_arm(tree, keys: _LazyKeys) -> int:
    """Distinct first-1 positions among the keys, read off the left spine.

    A spine node whose test bit precedes the first 1 of the leftmost key
    separates keys that have only zeros before that bit; each such node and
    the leftmost key's own first 1 give one distinct position.
    """
    spine = []
    node = tree
    while isinstance(node, PatriciaNode):
        spine.append(node.bit)
        node = node.left
    g = keys.first_one(node)
    return 1 + sum(1 for b in spine if b < g)


@dataclass(frozen=True)
class PatriciaSample:
    depth: int
    left_arm: int
    internal_nodes: int
    spine_edges: int


def patricia_sample(n: int, p: float, rng: np.random.Generator) -> PatriciaSample:
    """Build a PATRICIA trie on ``n`` random keys (1-bits with probability ``p``).

    ``depth`` is the edge distance from the root to a uniformly chosen key.
    ``left_arm`` counts the distinct positions of the first 1-bit, i.e. the
    all-left path once the all-zero key is added as a sentinel; this is the
    statistic obeying the left-arm recurrence (1 for a single key).
    ``spine_edges`` is the plain edge count of the all-left path.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    if not 0 < p < 1:
        raise ParameterError("p must lie in (0, 1)")
    keys = _LazyKeys(n, float(p), rng)
    tree = build_patricia(keys)
    chosen = int(rng.integers(n))
    internal = tree.internal_count() if isinstance(tree, PatriciaNode) else 0
    if internal != n - 1:
        raise AssertionError(f"PATRICIA trie on {n} keys has {internal} internal nodes")
    spine = 0
    node = tree
    while isinstance(node, PatriciaNode):
        node = node.left
        spine += 1
    return PatriciaSample(_depth_of(tree, chosen, keys), _left_arm(tree, keys), internal, spine)


# ---------------------------------------------------------------------------
# distinct values and urns


def geometric_distinct(n: int, p: float, rng: np.random.Generator) -> int:
    """Number of distinct values among ``n`` iid draws with ``P(j) = p q^j``, ``j >= 0``."""
    if n < 1:
        raise ParameterError("n must be positive")
    return len(np.unique(rng.geometric(float(p), size=n) - 1))


def urn_occupancy(n: int, p: float, rng: np.random.Generator) -> int:
    """Occupied urns after ``n`` balls land in urn ``j`` with probability ``p q^j``."""
    if n < 1:
        raise ParameterError("n must be positive")
    u = 1.0 - rng.random(n)
    urns = np.floor(np.log(u) / math.log1p(-float(p))).astype(np.int64)
    return len(np.unique(urns))


# ---------------------------------------------------------------------------
# trial runner and statistics


@dataclass(frozen=True)
class TrialHistogram:
    counts: Mapping[int, int]
    trials: int
    seed: int
    model: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if sum(self.counts.values()) != self.trials:
            raise ValueError("histogram counts do not add up to the trial count")

    def frequencies(self) -> dict[int, float]:
        return {k: c / self.trials for k, c in sorted(self.counts.items())}

    def merge(self, other: "TrialHistogram") -> "TrialHistogram":
        if other.model != self.model:
            raise ParameterError("cannot merge histograms of different models")
        counts = Counter(self.counts)
        counts.update(other.counts)
        return TrialHistogram(dict(sorted(counts.items())), self.trials + other.trials, self.seed, self.model, self.meta)

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "seed": self.seed,
            "trials": self.trials,
            "counts": {str(k): v for k, v in sorted(self.counts.items())},
            **self.meta,
        }


def _sample_one(model: str, params: dict, rng: np.random.Generator) -> tuple:
    if model == "parking":
        return (park_direct(ParkingConfig(params["n"], params["m"]), rng),)
    if model == "parking_split":
        return (park_split(ParkingConfig(params["n"], params["m"]), rng),)
    if model == "patricia":
        s = patricia_sample(params["n"], params["p"], rng)
        return (s.depth, s.left_arm)
    if model == "geometric":
        return (geometric_distinct(params["n"], params["p"], rng),)
    if model == "urn":
        return (urn_occupancy(params["n"], params["p"], rng),)
    raise ParameterError(f"unknown model {model!r}")


SIM_MODELS = ("parking", "parking_split", "patricia", "geometric", "urn")
_OUTPUTS = {"patricia": ("patricia_depth", "patricia_left_arm")}


def _run_chunk(model: str, params: dict, seed: int, start: int, stop: int) -> list[Counter]:
    out = None
    for t in range(start, stop):
        vals = _sample_one(model, params, trial_rng(seed, t))
        if out is None:
            out = [Counter() for _ in vals]
        for c, v in zip(out, vals):
            c[v] += 1
    return out or []


def run_trials(model: str, params: dict, trials: int, seed: int, workers: int = 1) -> dict[str, TrialHistogram]:
    """Run ``trials`` independent samples; returns one histogram per output statistic."""
    if model not in SIM_MODELS:
        raise ParameterError(f"unknown model {model!r}; expected one of {SIM_MODELS}")
    if trials < 1:
        raise ParameterError("trials must be positive")
    names = _OUTPUTS.get(model, (model,))
    if workers <= 1:
        parts = [_run_chunk(model, params, seed, 0, trials)]
    else:
        bounds = np.linspace(0, trials, workers + 1).astype(int)
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(_run_chunk, model, params, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            parts = [f.result() for f in futs]
    merged = [Counter() for _ in names]
    for part in parts:
        for c, pc in zip(merged, part):
            c.update(pc)
    meta = {"params": {k: str(v) for k, v in params.items()}}
    return {
        name: TrialHistogram(dict(sorted(c.items())), trials, seed, name, meta) for name, c in zip(names, merged)
    }


@dataclass(frozen=True)
class FitReport:
    statistic: float
    dof: int
    p_value: float
    tv_distance: float
    trials: int
    cells: int

    def passes(self, alpha: float = 0.01) -> bool:
        return self.p_value >= alpha


def _probabilities(exact) -> dict[int, float]:
    if isinstance(exact, ExactPmf):
        return exact.as_floats()
    return {int(k): float(v) for k, v in exact.items()}


def _pool(expected: list[float], observed: list[float], minimum: float = 5.0):
    """Merge neighbouring cells (in value order) until every expected count is at least ``minimum``."""
    cells_e, cells_o = [], []
    acc_e = acc_o = 0.0
    for e, o in zip(expected, observed):
        acc_e += e
        acc_o += o
        if acc_e >= minimum:
            cells_e.append(acc_e)
            cells_o.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0 or acc_o > 0:
        if cells_e:
            cells_e[-1] += acc_e
            cells_o[-1] += acc_o
        else:
            cells_e.append(acc_e)
            cells_o.append(acc_o)
    return np.array(cells_e), np.array(cells_o)


def goodness_of_fit(hist: TrialHistogram, exact) -> FitReport:
    """Pearson chi-square of ``hist`` against an exact law, plus total variation distance."""
    if hist.trials < MIN_TRIALS:
        warnings.warn(
            f"only {hist.trials} trials (recommended >= {MIN_TRIALS})", UnderpoweredWarning, stacklevel=2
        )
    probs = _probabilities(exact)
    support = sorted(set(probs) | set(hist.counts))
    N = hist.trials
    freq = hist.frequencies()
    tv = 0.5 * sum(abs(freq.get(k, 0.0) - probs.get(k, 0.0)) for k in support)
    if any(probs.get(k, 0.0) == 0 and hist.counts.get(k, 0) for k in support):
        return FitReport(math.inf, 0, 0.0, tv, N, 0)
    support = [k for k in support if probs.get(k, 0.0) > 0]
    e, o = _pool([N * probs[k] for k in support], [hist.counts.get(k, 0) for k in support])
    dof = len(e) - 1
    if dof < 1:
        return FitReport(0.0, 0, 1.0, tv, N, len(e))
    chi2 = float(np.sum((o - e) ** 2 / e))
    return FitReport(chi2, dof, float(stats.chi2.sf(chi2, dof)), tv, N, len(e))


def two_sample_test(h1: TrialHistogram, h2: TrialHistogram) -> FitReport:
    """Chi-square homogeneity test between two histograms (cells pooled to expected >= 5)."""
    support = sorted(set(h1.counts) | set(h2.counts))
    a = [h1.counts.get(k, 0) for k in support]
    b = [h2.counts.get(k, 0) for k in support]
    n1, n2 = h1.trials, h2.trials
    tot = [x + y for x, y in zip(a, b)]
    # pool on the smaller expected count of the two rows
    scale = min(n1, n2) / (n1 + n2)
    cells_a, cells_b = [], []
    acc_a = acc_b = 0
    for x, y, t in zip(a, b, tot):
        acc_a += x
        acc_b += y
        if (acc_a + acc_b) * scale >= 5:
            cells_a.append(acc_a)
            cells_b.append(acc_b)
            acc_a = acc_b = 0
    if acc_a or acc_b:
        if cells_a:
            cells_a[-1] += acc_a
            cells_b[-1] += acc_b
        else:
            cells_a.append(acc_a)
            cells_b.append(acc_b)
    tv = 0.5 * sum(abs(x / n1 - y / n2) for x, y in zip(a, b))
    if len(cells_a) < 2:
        return FitReport(0.0, 0, 1.0, tv, n1 + n2, len(cells_a))
    res = stats.chi2_contingency(np.array([cells_a, cells_b]), correction=False)
    return FitReport(float(res.statistic), int(res.dof), float(res.pvalue), tv, n1 + n2, len(cells_a))

