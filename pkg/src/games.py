"""CHSH_q games: definitions, exact classical values and the guessing-reduction bound"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from math import lcm
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from config.settings import get_settings

from .errors import InstanceTooLargeError, StrategyMismatchError
from .exact import as_decimal, le_sqrt_bound, sqrt_two_over_q
from .gf import FieldElement, FieldSpec, tables
from .parallel import map_chunks

ProbLike = Union[Fraction, int, str]


class InputDistribution(BaseModel):
    """Exact probabilities over F_q, indexed by element value"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    field: FieldSpec
    probs: tuple[Fraction, ...]

    @field_validator("probs", mode="before")
    @classmethod
    def _as_fractions(cls, value: Sequence[ProbLike]) -> tuple[Fraction, ...]:
        return tuple(Fraction(v.strip()) if isinstance(v, str) else Fraction(v) for v in value)

    @model_validator(mode="after")
    def _is_distribution(self) -> "InputDistribution":
        if len(self.probs) != self.field.order:
            raise ValueError(f"expected {self.field.order} probabilities, got {len(self.probs)}")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be non-negative")
        if sum(self.probs) != 1:
            raise ValueError(f"probabilities sum to {sum(self.probs)}, not 1")
        return self

    @classmethod
    def uniform(cls, spec: FieldSpec) -> "InputDistribution":
        return cls(field=spec, probs=[Fraction(1, spec.order)] * spec.order)

    @classmethod
    def point_heavy(cls, spec: FieldSpec, p: ProbLike, point: int = 0) -> "InputDistribution":
        """Mass p on one element, the rest spread uniformly"""
        p = Fraction(p)
        q = spec.order
        rest = (1 - p) / (q - 1)
        return cls(field=spec, probs=[p if x == point else rest for x in range(q)])

    @classmethod
    def two_point(cls, spec: FieldSpec, p: ProbLike) -> "InputDistribution":
        """Mass p on 0 and 1 - p on 1"""
        p = Fraction(p)
        probs = [Fraction(0)] * spec.order
        probs[0], probs[1] = p, 1 - p
        return cls(field=spec, probs=probs)

    def max_prob(self) -> Fraction:
        return max(self.probs)

    def is_uniform(self) -> bool:
        return all(p == self.probs[0] for p in self.probs)

    def scaled(self) -> tuple[np.ndarray, int]:
        """Integer numerators over a common denominator"""
        den = lcm(*(p.denominator for p in self.probs))
        nums = [int(p * den) for p in self.probs]
        dtype = np.int64 if den < 2**31 else object
        return np.array(nums, dtype=dtype), den


class GameSpec(BaseModel):
    """A game in CHSH_q(p): win iff a + b = x * y"""

    model_config = ConfigDict(frozen=True)

    field: FieldSpec
    alice_dist: InputDistribution
    bob_dist: Optional[InputDistribution] = None
    paper_mode: bool = True

    @model_validator(mode="after")
    def _consistent(self) -> "GameSpec":
        if self.alice_dist.field != self.field or self.bob.field != self.field:
            raise ValueError("input distributions must live on the game's field")
        if self.paper_mode and not self.bob.is_uniform():
            raise ValueError("Bob's input distribution must be uniform when paper_mode is set")
        return self

    @classmethod
    def chsh(cls, spec: FieldSpec) -> "GameSpec":
        return cls(field=spec, alice_dist=InputDistribution.uniform(spec))

    @property
    def bob(self) -> InputDistribution:
        """Bob's distribution, uniform when not given"""
        return self.bob_dist or InputDistribution.uniform(self.field)

    @property
    def q(self) -> int:
        return self.field.order

    @property
    def p(self) -> Fraction:
        return self.alice_dist.max_prob()


@dataclass(frozen=True)
class DeterministicStrategy:
    """Answer tables f (Alice) and g (Bob), indexed by element value"""

    f: tuple[int, ...]
    g: tuple[int, ...]

    def check(self, spec: FieldSpec) -> None:
        q = spec.order
        if len(self.f) != q or len(self.g) != q:
            raise StrategyMismatchError(f"strategy tables must have {q} entries")
        if any(not 0 <= v < q for v in self.f + self.g):
            raise StrategyMismatchError(f"strategy entries must be element values of {spec.label}")


def win_predicate(x: FieldElement, y: FieldElement, a: FieldElement, b: FieldElement) -> bool:
    return a + b == x * y


def _win_matrix(spec: FieldSpec, strategy: DeterministicStrategy) -> np.ndarray:
    t = tables(spec)
    f = np.asarray(strategy.f)
    g = np.asarray(strategy.g)
    return t.add[f[:, None], g[None, :]] == t.mul


def strategy_value(spec: GameSpec, strategy: DeterministicStrategy) -> Fraction:
    """sum_{x,y} p_x q_y [f(x) + g(y) = x y]"""
    strategy.check(spec.field)
    wins = _win_matrix(spec.field, strategy).astype(np.int64)
    nx, dx = spec.alice_dist.scaled()
    ny, dy = spec.bob.scaled()
    if nx.dtype == object or ny.dtype == object:
        wins = wins.astype(object)
    return Fraction(int(nx @ wins @ ny), dx * dy)


# ---------------------------------------------------------------------------
# Exact solver
# ---------------------------------------------------------------------------

def _g_tables(lo: int, hi: int, q: int) -> np.ndarray:
    """Rows are g tables in lexicographic order, g(0) most significant"""
    idx = np.arange(lo, hi, dtype=np.int64)
    powers = q ** np.arange(q - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % q


def _best_responses(spec: FieldSpec, g: np.ndarray, ny: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per g row and x: weight of the best answer a, and that smallest a"""
    t = tables(spec)
    q = spec.order
    # a wins at (x, y) iff a = x y - g(y)
    target = t.sub[t.mul[None, :, :], g[:, None, :]]
    counts = np.stack([((target == a) * ny).sum(axis=2) for a in range(q)], axis=2)
    return counts.max(axis=2), counts.argmax(axis=2)


def _solve_chunk(lo: int, hi: int, spec: FieldSpec, nx: np.ndarray, ny: np.ndarray) -> tuple:
    g = _g_tables(lo, hi, spec.order)
    best, _ = _best_responses(spec, g, ny)
    if nx.dtype == object or ny.dtype == object:
        best = best.astype(object)
    scores = best @ nx
    i = int(np.argmax(scores))
    return scores[i], lo + i


def classical_value_exact(
    spec: GameSpec,
    workers: Optional[int] = None,
    chunk_size: Optional[int] = None,
) -> tuple[Fraction, DeterministicStrategy]:
    """
    Exact classical value by enumerating Bob's tables

    For each g, Alice's pointwise-best answer is taken; the witness is the
    lexicographically smallest optimal g with the smallest best a per x.

    Args:
        spec: Game instance with q at most settings.max_game_order
        workers: Process count for the g enumeration
        chunk_size: g tables per work unit

    Returns:
        (value, witness strategy)
    """
    q = spec.q
    ceiling = get_settings().max_game_order
    if q > ceiling:
        raise InstanceTooLargeError(f"exact solving is limited to q <= {ceiling}, got {q}", q=q)
    nx, dx = spec.alice_dist.scaled()
    ny, dy = spec.bob.scaled()
    total = q**q

    logger.info(f"Solving {spec.field.label} game over {total} g tables")
    results = map_chunks(
        partial(_solve_chunk, spec=spec.field, nx=nx, ny=ny),
        total,
        chunk_size=chunk_size,
        workers=workers,
    )
    best_score, best_index = results[0]
    for score, index in results[1:]:
        if score > best_score:
            best_score, best_index = score, index

    g = _g_tables(best_index, best_index + 1, q)
    _, f = _best_responses(spec.field, g, ny)
    witness = DeterministicStrategy(f=tuple(int(v) for v in f[0]), g=tuple(int(v) for v in g[0]))
    value = Fraction(int(best_score), dx * dy)
    logger.info(f"Classical value of {spec.field.label} game: {value} ({as_decimal(value)})")
    return value, witness


def classical_value_naive(spec: GameSpec) -> Fraction:
    """Maximum over every (f, g) pair; reference for tiny q"""
    q = spec.q
    if q ** (2 * q) > 1 << 20:
        raise InstanceTooLargeError(f"naive enumeration over q={q} is too large", q=q)
    best = Fraction(0)
    for f in itertools.product(range(q), repeat=q):
        for g in itertools.product(range(q), repeat=q):
            best = max(best, strategy_value(spec, DeterministicStrategy(f=f, g=g)))
    return best


def chsh_value_q2(p: ProbLike) -> Fraction:
    """(1 + p) / 2, the classical value of CHSH_2 with Alice's inputs (p, 1 - p), p >= 1/2"""
    p = Fraction(p)
    if not Fraction(1, 2) <= p <= 1:
        raise ValueError(f"p must lie in [1/2, 1], got {p}")
    return (1 + p) / 2


# ---------------------------------------------------------------------------
# Bound and its proof mechanics
# ---------------------------------------------------------------------------

def lemma1_bound(p: ProbLike, q: int) -> float:
    """p + sqrt(2/q)"""
    p = Fraction(p)
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    return float(p) + sqrt_two_over_q(q)


def lemma1_holds_exact(value: Fraction, p: ProbLike, q: int) -> bool:
    return le_sqrt_bound(value, Fraction(p), 1, Fraction(2, q))


@dataclass(frozen=True)
class GuessingReport:
    """S_y for every y and their mean under uniform y"""

    success: tuple[Fraction, ...]
    mean: Fraction


def _pair_weights(alice_dist: InputDistribution) -> Fraction:
    return 1 - sum(p * p for p in alice_dist.probs)


def guessing_reduction(strategy: DeterministicStrategy, alice_dist: InputDistribution) -> GuessingReport:
    """
    Guess y from two of Alice's answers: y^ = (f(x) - f(x')) / (x - x')

    Ordered pairs x != x' are drawn with weight p_x p_x' / D.
    """
    spec = alice_dist.field
    strategy.check(spec)
    q = spec.order
    total = _pair_weights(alice_dist)
    if total == 0:
        raise ValueError("Alice's distribution is supported on a single point")
    t = tables(spec)
    probs = alice_dist.probs
    success = [Fraction(0)] * q
    for x in range(q):
        for x2 in range(q):
            if x == x2 or probs[x] == 0 or probs[x2] == 0:
                continue
            guess = t.mul[t.sub[strategy.f[x], strategy.f[x2]], t.inverse[t.sub[x, x2]]]
            success[int(guess)] += probs[x] * probs[x2] / total
    return GuessingReport(success=tuple(success), mean=sum(success) / q)


@dataclass
class Lemma1Report:
    """Per-y chain of the proof plus the final bound"""

    q: int
    p: Fraction
    value: Fraction
    rows: list[dict] = field(default_factory=list)
    final_holds: bool = False

    @property
    def bound(self) -> float:
        return lemma1_bound(self.p, self.q)

    @property
    def slack(self) -> float:
        return self.bound - float(self.value)

    @property
    def holds(self) -> bool:
        return self.final_holds and all(
            r["square_split"] and r["diagonal_ok"] and r["cross_ok"] and r["per_y_ok"] for r in self.rows
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def lemma1_chain_check(spec: GameSpec, strategy: DeterministicStrategy) -> Lemma1Report:
    """
    Recompute each step of the bound for one strategy

    With r_x^y the win indicator and w^y = sum_x p_x r_x^y:
    (w^y)^2 = diag + cross, diag <= p w^y, cross <= D S_y <= 2 S_y,
    so w^y <= p + sqrt(2 S_y); the final value is checked against p + sqrt(2/q).
    """
    strategy.check(spec.field)
    q, p = spec.q, spec.p
    probs = spec.alice_dist.probs
    wins = _win_matrix(spec.field, strategy)
    d_total = _pair_weights(spec.alice_dist)
    if d_total > 0:
        s = guessing_reduction(strategy, spec.alice_dist).success
    else:
        s = (Fraction(0),) * q

    report = Lemma1Report(q=q, p=p, value=strategy_value(spec, strategy))
    for y in range(q):
        r = [bool(wins[x, y]) for x in range(q)]
        omega_y = sum((probs[x] for x in range(q) if r[x]), Fraction(0))
        diag = sum((probs[x] ** 2 for x in range(q) if r[x]), Fraction(0))
        cross = sum(
            (probs[x] * probs[x2] for x in range(q) for x2 in range(q) if x != x2 and r[x] and r[x2]),
            Fraction(0),
        )
        report.rows.append(
            {
                "y": y,
                "omega_y": omega_y,
                "S_y": s[y],
                "square_split": omega_y**2 == diag + cross,
                "diagonal_ok": diag <= p * omega_y,
                "cross_ok": cross <= d_total * s[y] <= 2 * s[y],
                "per_y_ok": le_sqrt_bound(omega_y, p, 1, 2 * s[y]),
            }
        )
    report.final_holds = lemma1_holds_exact(report.value, p, q)
    if not report.holds:
        logger.warning(f"Bound chain fails for {spec.field.label} strategy {strategy}")
    return report


def game_summary(spec: GameSpec, value: Fraction, strategy: DeterministicStrategy) -> dict:
    """Solver output record: value, witness, bound and slack"""
    bound = lemma1_bound(spec.p, spec.q)
    return {
        "field": spec.field.label,
        "p": str(spec.p),
        "value": str(value),
        "value_decimal": as_decimal(value),
        "f": list(strategy.f),
        "g": list(strategy.g),
        "bound": bound,
        "slack": bound - float(value),
        "bound_holds": lemma1_holds_exact(value, spec.p, spec.q),
    }
