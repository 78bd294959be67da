"""Classical cheating committers and the exact binding analysis"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from math import prod
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from config.settings import get_settings

from .errors import InstanceTooLargeError, StrategyMismatchError
from .exact import le_sqrt_bound, sqrt_two_over_q
from .games import DeterministicStrategy, GameSpec, InputDistribution
from .gf import TABLE_LIMIT, FieldElement, FieldSpec, tables
from .parallel import map_chunks
from .protocol import ProtocolParams

Index = Union[int, FieldElement]


def responder_shape(q: int, j: int) -> tuple[int, ...]:
    """Axes of y_j: (b_1,) for the commit, (d, b_1..b_{j-2}, b_j) afterwards"""
    if j == 1:
        return (q,)
    return (2,) + (q,) * (j - 1)


def guesser_shape(q: int, rounds: int) -> tuple[int, ...]:
    """Axes of G: (d, b_1..b_{k-1})"""
    return (2,) + (q,) * (rounds - 1)


def _frozen(table) -> np.ndarray:
    arr = np.array(table, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CheatingStrategy:
    """
    Deterministic cheating Alice as lookup tables

    The table for y_j has no axis for b_{j-1}, so a responder cannot read the
    challenge issued at the other location in the previous round. The commit
    responder y_1 sees only b_1.
    """

    field: FieldSpec
    responders: tuple[np.ndarray, ...]
    guesser: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "responders", tuple(_frozen(t) for t in self.responders))
        object.__setattr__(self, "guesser", _frozen(self.guesser))
        q, k = self.field.order, len(self.responders)
        if k < 1:
            raise StrategyMismatchError("a strategy needs at least one responder")
        for j, table in enumerate(self.responders, start=1):
            if table.shape != responder_shape(q, j):
                raise StrategyMismatchError(
                    f"y_{j} table has shape {table.shape}, expected {responder_shape(q, j)}", round=j
                )
        if self.guesser.shape != guesser_shape(q, k):
            raise StrategyMismatchError(f"guess table has shape {self.guesser.shape}, expected {guesser_shape(q, k)}")
        for arr in self.responders + (self.guesser,):
            if arr.min() < 0 or arr.max() >= q:
                raise StrategyMismatchError(f"table entries must be element values of {self.field.label}")

    @property
    def q(self) -> int:
        return self.field.order

    @property
    def rounds(self) -> int:
        return len(self.responders)

    def respond(self, j: int, d: int, b: Sequence[Index]) -> int:
        """y_j for the challenges b (only the legal coordinates are read)"""
        if j == 1:
            return int(self.responders[0][int(b[0])])
        key = (d, *(int(v) for v in b[: j - 2]), int(b[j - 1]))
        return int(self.responders[j - 1][key])

    def guess(self, d: int, b: Sequence[Index]) -> int:
        return int(self.guesser[(d, *(int(v) for v in b[: self.rounds - 1]))])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CheatingStrategy):
            return NotImplemented
        return (
            self.field == other.field
            and self.rounds == other.rounds
            and all(np.array_equal(a, b) for a, b in zip(self.responders, other.responders))
            and np.array_equal(self.guesser, other.guesser)
        )

    __hash__ = None


@dataclass(frozen=True)
class AttackResult:
    """Reveal success probabilities for both bits"""

    p0: Fraction
    p1: Fraction

    def __post_init__(self):
        for p in (self.p0, self.p1):
            if not 0 <= p <= 1:
                raise ValueError(f"probability out of range: {p}")

    @property
    def epsilon(self) -> Fraction:
        return self.p0 + self.p1 - 1

    @property
    def success_rate(self) -> Fraction:
        """Pr[reveal accepted] when the revealed bit is uniform"""
        return (self.p0 + self.p1) / 2


def induced_ak(strategy: CheatingStrategy, d: int, b_vector: Sequence[Index]) -> FieldElement:
    """a_k through a_j = y_j - b_j * a_{j-1} from a_0 = d"""
    if len(b_vector) != strategy.rounds:
        raise StrategyMismatchError(f"expected {strategy.rounds} challenges, got {len(b_vector)}")
    spec = strategy.field
    a = spec.embed_bit(d)
    for j in range(1, strategy.rounds + 1):
        y = spec.element(strategy.respond(j, d, b_vector))
        a = y - spec.element(int(b_vector[j - 1])) * a
    return a


# ---------------------------------------------------------------------------
# Vectorised evaluation
# ---------------------------------------------------------------------------

def _check_instance(strategy: CheatingStrategy, params: ProtocolParams) -> None:
    if strategy.field != params.field or strategy.rounds != params.rounds:
        raise StrategyMismatchError(
            f"strategy is for {strategy.field.label} k={strategy.rounds}, "
            f"params are {params.field.label} k={params.rounds}"
        )
    _check_enumerable(params)


def _check_enumerable(params: ProtocolParams) -> None:
    q, k = params.q, params.rounds
    ceiling = get_settings().max_attack_space
    if q > TABLE_LIMIT or q**k > ceiling:
        raise InstanceTooLargeError(f"q^k = {q}^{k} exceeds the enumeration ceiling {ceiling}", q=q, rounds=k)


def _chain_grids(spec: FieldSpec, responders: Sequence[np.ndarray], d: int) -> list[np.ndarray]:
    """a_1..a_k for fixed d; a_j has axes (b_1, ..., b_j)"""
    t = tables(spec)
    b = np.arange(spec.order)
    a = np.asarray(d)
    grids = []
    for j, table in enumerate(responders, start=1):
        # broadcast over the missing b_{j-1} axis
        y = table if j == 1 else np.expand_dims(table[d], axis=j - 2)
        a = t.sub[y, t.mul[b, a[..., None]]]
        grids.append(a)
    return grids


def _value_counts(a: np.ndarray, q: int) -> np.ndarray:
    """Occurrences of each value along the last axis"""
    return np.stack([(a == v).sum(axis=-1) for v in range(q)], axis=-1)


def attack_value(strategy: CheatingStrategy, params: ProtocolParams) -> AttackResult:
    """p_d = Pr_b[G(d, b_<k) = a_k(d, b)] by enumerating every b-vector"""
    _check_instance(strategy, params)
    q, k = params.q, params.rounds
    probs = []
    for d in (0, 1):
        a_k = _chain_grids(strategy.field, strategy.responders, d)[-1]
        guess = np.expand_dims(np.asarray(strategy.guesser[d]), -1)
        probs.append(Fraction(int((guess == a_k).sum()), q**k))
    return AttackResult(p0=probs[0], p1=probs[1])


def mixture_value(
    strategies: Sequence[CheatingStrategy],
    weights: Sequence[Union[Fraction, int, str]],
    params: ProtocolParams,
) -> AttackResult:
    """Value of a convex combination of deterministic strategies"""
    weights = [Fraction(w) for w in weights]
    if len(weights) != len(strategies) or any(w < 0 for w in weights) or sum(weights) != 1:
        raise ValueError("weights must be non-negative, one per strategy, summing to 1")
    results = [attack_value(s, params) for s in strategies]
    return AttackResult(
        p0=sum((w * r.p0 for w, r in zip(weights, results)), Fraction(0)),
        p1=sum((w * r.p1 for w, r in zip(weights, results)), Fraction(0)),
    )


def theorem1_bound(params: ProtocolParams) -> float:
    return min(1.0, 2 * params.rounds * sqrt_two_over_q(params.q))


def theorem1_holds(result: AttackResult, params: ProtocolParams) -> bool:
    """epsilon <= min(1, 2k sqrt(2/q)), exactly"""
    eps = result.epsilon
    return eps <= 1 and le_sqrt_bound(eps, 0, 2 * params.rounds, Fraction(2, params.q))


# ---------------------------------------------------------------------------
# Strategy constructors and enumeration
# ---------------------------------------------------------------------------

def honest_strategy(spec: FieldSpec, a_values: Sequence[Index], d: int) -> CheatingStrategy:
    """Honest committer to d with a fixed a-vector, as tables"""
    t = tables(spec)
    q = spec.order
    a = [int(v) for v in a_values]
    b = np.arange(q)
    responders = [t.add[a[0], t.mul[d, b]]]
    for j in range(2, len(a) + 1):
        row = t.add[a[j - 1], t.mul[a[j - 2], b]]
        responders.append(np.broadcast_to(row, responder_shape(q, j)))
    guesser = np.full(guesser_shape(q, len(a)), a[-1])
    return CheatingStrategy(field=spec, responders=tuple(responders), guesser=guesser)


def random_strategy(spec: FieldSpec, rounds: int, rng: np.random.Generator) -> CheatingStrategy:
    q = spec.order
    responders = tuple(rng.integers(0, q, size=responder_shape(q, j)) for j in range(1, rounds + 1))
    return CheatingStrategy(field=spec, responders=responders, guesser=rng.integers(0, q, size=guesser_shape(q, rounds)))


def _responder_sizes(q: int, rounds: int) -> list[int]:
    return [prod(responder_shape(q, j)) for j in range(1, rounds + 1)]


def _digits(index: int, q: int, width: int) -> np.ndarray:
    out = np.zeros(width, dtype=np.int64)
    for pos in range(width - 1, -1, -1):
        index, out[pos] = divmod(index, q)
    return out


def _decode_responders(index: int, q: int, rounds: int) -> tuple[np.ndarray, ...]:
    """Responder tables number `index` in lexicographic order, y_1 entries most significant"""
    sizes = _responder_sizes(q, rounds)
    flat = _digits(index, q, sum(sizes))
    tables_, start = [], 0
    for j, size in enumerate(sizes, start=1):
        tables_.append(flat[start : start + size].reshape(responder_shape(q, j)))
        start += size
    return tuple(tables_)


def _best_guesser(spec: FieldSpec, responders: Sequence[np.ndarray]) -> tuple[np.ndarray, int]:
    """Modal a_k for every (d, b_<k) and the total number of hits"""
    guesser, hits = [], 0
    for d in (0, 1):
        counts = _value_counts(_chain_grids(spec, responders, d)[-1], spec.order)
        guesser.append(counts.argmax(axis=-1))
        hits += int(counts.max(axis=-1).sum())
    return np.stack(guesser), hits


def _optimizer_feasible(params: ProtocolParams) -> None:
    q, k = params.q, params.rounds
    if not ((q == 2 and k <= 2) or (q == 3 and k == 1)):
        raise InstanceTooLargeError(
            f"exhaustive optimisation supports (q=2, k<=2) and (q=3, k=1), got q={q}, k={k}", q=q, rounds=k
        )


def iter_strategies(params: ProtocolParams, guessers: str = "optimal") -> Iterator[CheatingStrategy]:
    """
    Every deterministic strategy of a tiny instance

    Args:
        params: One of the optimiser-feasible instances
        guessers: "optimal" pairs each responder family with its modal guesser,
            "all" also enumerates every guess table

    Returns:
        Strategies in lexicographic order of their tables
    """
    _optimizer_feasible(params)
    spec, q, k = params.field, params.q, params.rounds
    n_responders = q ** sum(_responder_sizes(q, k))
    g_shape = guesser_shape(q, k)
    for index in range(n_responders):
        responders = _decode_responders(index, q, k)
        if guessers == "optimal":
            guesser, _ = _best_guesser(spec, responders)
            yield CheatingStrategy(field=spec, responders=responders, guesser=guesser)
        elif guessers == "all":
            for g_index in range(q ** prod(g_shape)):
                guesser = _digits(g_index, q, prod(g_shape)).reshape(g_shape)
                yield CheatingStrategy(field=spec, responders=responders, guesser=guesser)
        else:
            raise ValueError(f"guessers must be 'optimal' or 'all', got {guessers!r}")


def iter_responder_families(params: ProtocolParams) -> Iterator[CheatingStrategy]:
    """
    Every responder family of an instance, paired with a zero guesser

    For checks that never read the guesser, such as proposition1_check.
    The number of families is capped by max_attack_space.
    """
    spec, q, k = params.field, params.q, params.rounds
    _check_enumerable(params)
    total = q ** sum(_responder_sizes(q, k))
    ceiling = get_settings().max_attack_space
    if total > ceiling:
        raise InstanceTooLargeError(
            f"{total} responder families for q={q}, k={k} exceed the enumeration ceiling {ceiling}", q=q, rounds=k
        )
    guesser = np.zeros(guesser_shape(q, k), dtype=np.int64)
    for index in range(total):
        yield CheatingStrategy(field=spec, responders=_decode_responders(index, q, k), guesser=guesser)


def honest_family(spec: FieldSpec, rounds: int, d: int) -> Iterator[CheatingStrategy]:
    """honest_strategy for every a-vector in F_q^k, in lexicographic order"""
    q = spec.order
    for index in range(q**rounds):
        yield honest_strategy(spec, _digits(index, q, rounds).tolist(), d)


def _optimal_chunk(lo: int, hi: int, spec: FieldSpec, rounds: int) -> tuple[int, int]:
    best_hits, best_index = -1, lo
    for index in range(lo, hi):
        _, hits = _best_guesser(spec, _decode_responders(index, spec.order, rounds))
        if hits > best_hits:
            best_hits, best_index = hits, index
    return best_hits, best_index


def optimal_attack_exact(
    params: ProtocolParams, workers: Optional[int] = None
) -> tuple[AttackResult, CheatingStrategy]:
    """
    Maximum of p0 + p1 over all deterministic cheating strategies

    Responder tables are enumerated and the guesser is chosen pointwise.
    The witness is the first optimum in enumeration order.
    """
    _optimizer_feasible(params)
    q, k = params.q, params.rounds
    total = q ** sum(_responder_sizes(q, k))
    logger.info(f"Optimising over {total} responder families for {params.field.label} k={k}")

    results = map_chunks(partial(_optimal_chunk, spec=params.field, rounds=k), total, chunk_size=256, workers=workers)
    best_hits, best_index = results[0]
    for hits, index in results[1:]:
        if hits > best_hits:
            best_hits, best_index = hits, index

    responders = _decode_responders(best_index, q, k)
    guesser, _ = _best_guesser(params.field, responders)
    witness = CheatingStrategy(field=params.field, responders=responders, guesser=guesser)
    result = attack_value(witness, params)
    logger.info(f"Optimal cheating: p0={result.p0}, p1={result.p1}, epsilon={result.epsilon}")
    return result, witness


# ---------------------------------------------------------------------------
# Independence parameter
# ---------------------------------------------------------------------------

def independence_parameter(
    table,
    x_weights: Optional[Sequence[Fraction]] = None,
    y_weights: Optional[Sequence[Fraction]] = None,
) -> Fraction:
    """
    IP = E_x[max_z Pr_y[f(x, y) = z]]

    Args:
        table: f as a 2-D table, rows indexed by x and columns by y
        x_weights: Distribution of x, uniform by default
        y_weights: Distribution of y, uniform by default
    """
    table = np.asarray(table)
    if table.ndim != 2 or 0 in table.shape:
        raise ValueError("independence parameter needs non-empty x and y domains")
    n_x, n_y = table.shape
    x_weights = [Fraction(1, n_x)] * n_x if x_weights is None else [Fraction(w) for w in x_weights]
    y_weights = [Fraction(1, n_y)] * n_y if y_weights is None else [Fraction(w) for w in y_weights]
    total = Fraction(0)
    for x in range(n_x):
        mass: dict[int, Fraction] = defaultdict(Fraction)
        for y in range(n_y):
            mass[int(table[x, y])] += y_weights[y]
        total += x_weights[x] * max(mass.values())
    return total


def a_chain_table(strategy: CheatingStrategy, j: int) -> np.ndarray:
    """a_j as a table: rows are histories (d, b_1..b_{j-1}), columns are b_j"""
    q = strategy.q
    rows = [_chain_grids(strategy.field, strategy.responders, d)[j - 1].reshape(-1, q) for d in (0, 1)]
    return np.concatenate(rows)


def masked_independence_parameter(family: Iterable[CheatingStrategy], j: int) -> Fraction:
    """
    IP(a_j; b_j) when the strategy is drawn uniformly from family and hidden

    The predictor sees the history (d, b_1..b_{j-1}) only; the hidden member
    joins b_j on the y side. For the honest family over all a-vectors this
    is the uniform masking of a_j.
    """
    tables_ = [a_chain_table(s, j) for s in family]
    if not tables_:
        raise ValueError("the family needs at least one strategy")
    return independence_parameter(np.concatenate(tables_, axis=1))


@dataclass
class Proposition1Report:
    q: int
    rounds: int
    rows: list[dict] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return all(r["cumulative_ok"] and r["increment_ok"] in (True, None) for r in self.rows)

    def ip(self, j: int) -> Fraction:
        return self.rows[j - 1]["ip"]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def proposition1_check(strategy: CheatingStrategy, params: ProtocolParams) -> Proposition1Report:
    """
    Independence of a_j from b_j, round by round

    Z_j^h is the modal probability of a_j over b_j given the history
    h = (d, b_1..b_{j-1}). Per history, averaging Z_{j+1} over b_j may
    exceed Z_j^h by at most sqrt(2/q); the average over histories must stay
    below 1/2 + j sqrt(2/q).
    """
    _check_instance(strategy, params)
    q, k = params.q, params.rounds
    radicand = Fraction(2, q)
    grids = [_chain_grids(strategy.field, strategy.responders, d) for d in (0, 1)]
    # modal counts per history, one array per (d, j)
    modal = [[_value_counts(g, q).max(axis=-1) for g in grids[d]] for d in (0, 1)]

    report = Proposition1Report(q=q, rounds=k)
    for j in range(1, k + 1):
        hits = sum(int(modal[d][j - 1].sum()) for d in (0, 1))
        ip = Fraction(hits, 2 * q**j)
        row = {
            "round": j,
            "ip": ip,
            "cumulative_bound": 0.5 + j * sqrt_two_over_q(q),
            "cumulative_ok": le_sqrt_bound(ip, Fraction(1, 2), j, radicand),
            "max_increment": None,
            "increment_ok": None,
        }
        if j < k:
            # scaled by q^2: Z_{j+1}^h - Z_j^h = gap / q^2
            gaps = np.concatenate(
                [(modal[d][j].sum(axis=-1) - q * modal[d][j - 1]).ravel() for d in (0, 1)]
            )
            ok = (gaps <= 0) | (gaps * gaps <= 2 * q**3)
            row["max_increment"] = Fraction(int(gaps.max()), q * q)
            row["increment_ok"] = bool(ok.all())
        report.rows.append(row)
        logger.debug(f"Round {j}: IP={ip}, increment ok={row['increment_ok']}")

    if not report.holds:
        logger.warning(f"Independence bound violated for {params.field.label} k={k}")
    return report


# ---------------------------------------------------------------------------
# Base case as a game
# ---------------------------------------------------------------------------

def base_case_game(params: ProtocolParams) -> GameSpec:
    """k = 1 cheating as a game: Alice's input is d (half-half on 0 and 1), Bob's is b_1"""
    if params.rounds != 1:
        raise StrategyMismatchError("the base-case game exists for one round only", rounds=params.rounds)
    return GameSpec(field=params.field, alice_dist=InputDistribution.two_point(params.field, Fraction(1, 2)))


def to_game_strategy(strategy: CheatingStrategy) -> DeterministicStrategy:
    """
    Game strategy with win probability (p0 + p1) / 2

    Alice answers f(d) = -G(d) and Bob answers g(b) = y_1(b), so the game
    is won exactly when the guess equals a_1.
    """
    if strategy.rounds != 1:
        raise StrategyMismatchError("only one-round strategies map to a game", rounds=strategy.rounds)
    t = tables(strategy.field)
    f = [int(t.neg[strategy.guesser[d]]) for d in (0, 1)] + [0] * (strategy.q - 2)
    return DeterministicStrategy(f=tuple(f), g=tuple(int(v) for v in strategy.responders[0]))
