"""The sequential erasure mechanism and its exact verification machinery.

Position i is released with probability

    min_u p(x_i | sensitive = u, produced prefix) / p(x_i | true sensitive, prefix)

and erased otherwise, processing positions in a configurable ordering.  The
prefix conditionals treat released entries as observed symbols and weight
erased entries by the mechanism's own erasure probability in that context,
so the composition of model and mechanism is exact.

Everything here works for any `SequenceModel` by enumerating the sequence
space, which is the authoritative (slow) reference path.  The mechanism's
belief about the data may differ from the true distribution
(``mechanism_model``), which is what the model-mismatch analysis exercises.

Conventions:
  * the minimum ranges over sensitive assignments that are possible under
    the mechanism's model in the current context; positions in the
    sensitive set are erased with probability one unconditionally;
  * a zero-probability context (ratio 0/0) erases with probability one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import (
    DEFAULT_ENUMERATION_BUDGET,
    HmmModel,
    SequenceModel,
    assignment_index,
    sensitive_assignments,
    validate_sequence,
)
from .errors import (
    CapacityError,
    ImpossibleContextError,
    InputError,
    NumericalError,
)
from .info import mutual_information
from .masking import STAR, MaskedSequence, Ordering, TranscriptEntry

#: Probabilities may leave [0, 1] by at most this much before it is treated
#: as a logic error rather than round-off.
RATIO_TOL = 1e-9

#: Release ratios this close to 1 are round-off residue of an exact 1 (two
#: mathematically equal conditionals summed in different orders); snapping
#: keeps certain releases certain, so impossible branches carry mass 0
#: exactly rather than ~1e-16.
RATIO_SNAP = 1e-13

#: Cap on the number of distinct output sequences visited by exact
#: composition walks.
DEFAULT_LEAF_BUDGET = 1 << 17


def clamp_probability(value: float, what: str = "probability") -> float:
    """Clamp round-off noise into [0, 1]; larger violations are hard errors."""
    if value < -RATIO_TOL or value > 1.0 + RATIO_TOL:
        raise NumericalError(f"{what} {value} outside [0, 1] beyond tolerance")
    return min(1.0, max(0.0, value))


def _validate_sensitive(K, n: int) -> tuple[int, ...]:
    K = tuple(sorted({int(k) for k in K}))
    if any(k < 0 or k >= n for k in K):
        raise InputError(f"sensitive positions {K} outside 0..{n - 1}")
    return K


class EnumeratedMechanism:
    """Exact mechanism composition over an enumerated sequence space.

    Parameters
    ----------
    model : SequenceModel
        True data-generating distribution.
    K : iterable of int
        Sensitive positions (0-based).
    mechanism_model : SequenceModel, optional
        Distribution the mechanism believes in; defaults to ``model``.
    budget : int
        Cap on the enumerated sequence-space size.
    """

    def __init__(self, model: SequenceModel, K, mechanism_model=None,
                 budget: int = DEFAULT_ENUMERATION_BUDGET):
        self.model = model
        self.mech_model = mechanism_model if mechanism_model is not None else model
        if self.mech_model.arities != model.arities:
            raise InputError("model and mechanism_model must share shape")
        self.n = model.n
        self.arities = model.arities
        self.K = _validate_sensitive(K, self.n)

        space, p = model.joint_table(budget)
        if self.mech_model is model:
            q = p
        else:
            _, q = self.mech_model.joint_table(budget)
        keep = (p > 0) | (q > 0)
        self.space = space[keep]
        self.p = p[keep]
        self.q = q[keep]
        self._row_lookup = np.full(space.shape[0], -1, dtype=np.int64)
        self._row_lookup[np.flatnonzero(keep)] = np.arange(self.space.shape[0])
        strides = []
        acc = 1
        for a in reversed(self.arities):
            strides.append(acc)
            acc *= a
        self._strides = np.array(strides[::-1], dtype=np.int64)

        self.u_values = sensitive_assignments(self.arities, self.K)
        self.num_u = len(self.u_values)
        if self.K:
            cols = self.space[:, list(self.K)]
            radix = np.array([self.arities[k] for k in self.K], dtype=np.int64)
            codes = np.zeros(self.space.shape[0], dtype=np.int64)
            for t in range(len(self.K)):
                codes = codes * radix[t] + cols[:, t]
            self.u_codes = codes
        else:
            self.u_codes = np.zeros(self.space.shape[0], dtype=np.int64)
        self.q_prior = np.bincount(self.u_codes, weights=self.q,
                                   minlength=self.num_u)
        self.p_prior = np.bincount(self.u_codes, weights=self.p,
                                   minlength=self.num_u)

    # -- primitive queries --------------------------------------------------

    def row_of(self, x) -> int:
        """Row index of sequence x, or -1 if it was filtered out as
        impossible under both models."""
        x = validate_sequence(x, self.arities)
        return int(self._row_lookup[int(np.dot(x, self._strides))])

    def assignment_code(self, x) -> int:
        return assignment_index([x[k] for k in self.K], self.arities, self.K)

    def predictive(self, wq: np.ndarray, pos: int):
        """Per-hypothesis conditional of X_pos given the current weights.

        Returns (cond, totals): ``cond[u, v]`` is the conditional probability
        of symbol v under sensitive assignment u (NaN when u is impossible in
        this context), ``totals[u]`` the unnormalized mass of u.
        """
        arity = self.arities[pos]
        keys = self.u_codes * arity + self.space[:, pos]
        sums = np.bincount(keys, weights=wq, minlength=self.num_u * arity)
        sums = sums.reshape(self.num_u, arity)
        totals = sums.sum(axis=1)
        cond = np.full_like(sums, np.nan)
        np.divide(sums, totals[:, None], out=cond, where=totals[:, None] > 0)
        return cond, totals

    def release_table(self, cond: np.ndarray, totals: np.ndarray, pos: int):
        """Release probabilities for position pos.

        Returns (mins, ratios): ``mins[v]`` is the over-hypotheses minimum
        conditional of symbol v (also the marginal probability of releasing
        v), ``ratios[u, v]`` the probability of release for a holder of
        assignment u observing symbol v.
        """
        arity = cond.shape[1]
        live = totals > 0
        if pos in self.K or not live.any():
            mins = np.zeros(arity)
        else:
            mins = cond[live].min(axis=0)
        ratios = np.zeros_like(cond)
        np.divide(np.broadcast_to(mins, cond.shape), cond, out=ratios,
                  where=cond > 0)
        if np.any(ratios > 1.0 + RATIO_TOL) or np.any(ratios < -RATIO_TOL):
            raise NumericalError("release ratio outside [0, 1] beyond tolerance")
        np.clip(ratios, 0.0, 1.0, out=ratios)
        ratios[ratios > 1.0 - RATIO_SNAP] = 1.0
        return mins, ratios

    def step_factor(self, pos: int, y: int, ratios: np.ndarray) -> np.ndarray:
        """Per-sequence weight multiplier for outcome y at position pos."""
        vals = self.space[:, pos]
        row_r = ratios[self.u_codes, vals]
        if y == STAR:
            return 1.0 - row_r
        return np.where(vals == y, ratios[self.u_codes, y], 0.0)

    # -- single runs ---------------------------------------------------------

    def mask(self, x, ordering: Ordering, rng: np.random.Generator):
        """Mask one sequence; returns (MaskedSequence, transcript)."""
        x = validate_sequence(x, self.arities)
        row = self.row_of(x)
        if row < 0 or self.q[row] == 0.0:
            warnings.warn(
                "input sequence has probability zero under the mechanism's "
                "model; impossible contexts will be erased",
                stacklevel=3,
            )
        u_code = self.assignment_code(x)
        wq = self.q.copy()
        y = [STAR] * self.n
        transcript = []
        for pos in ordering:
            cond, totals = self.predictive(wq, pos)
            _, ratios = self.release_table(cond, totals, pos)
            r = float(ratios[u_code, x[pos]])
            y[pos] = x[pos] if rng.random() < r else STAR
            wq *= self.step_factor(pos, y[pos], ratios)
            transcript.append(TranscriptEntry(pos, r, y[pos]))
        return MaskedSequence(tuple(y)), tuple(transcript)

    # -- exact composition ----------------------------------------------------

    def output_distribution(self, ordering: Ordering,
                            leaf_budget: int = DEFAULT_LEAF_BUDGET):
        """Exact joint law of (sensitive values, masked output)."""
        table: dict[tuple[int, ...], np.ndarray] = {}
        perm = ordering.perm
        leaves = 0

        def walk(depth: int, wp: np.ndarray, wq: np.ndarray, acc: list[int]):
            nonlocal leaves
            if depth == self.n:
                y = [STAR] * self.n
                for pos, v in zip(perm, acc):
                    y[pos] = v
                mass = np.bincount(self.u_codes, weights=wp,
                                   minlength=self.num_u)
                key = tuple(y)
                if key in table:
                    table[key] += mass
                else:
                    table[key] = mass
                leaves += 1
                if leaves > leaf_budget:
                    raise CapacityError(
                        f"output enumeration exceeded {leaf_budget} leaves")
                return
            pos = perm[depth]
            cond, totals = self.predictive(wq, pos)
            mins, ratios = self.release_table(cond, totals, pos)
            for y in (*range(self.arities[pos]), STAR):
                if y != STAR and mins[y] <= 0.0:
                    continue
                f = self.step_factor(pos, y, ratios)
                wp2 = wp * f
                if wp2.max() <= 0.0:
                    continue
                acc.append(y)
                walk(depth + 1, wp2, wq * f, acc)
                acc.pop()

        walk(0, self.p.copy(), self.q.copy(), [])
        return OutputDistribution.from_table(self.n, self.K, self.arities,
                                             self.u_values, table)

    def stepwise_minima_rate(self, ordering: Ordering,
                             leaf_budget: int = DEFAULT_LEAF_BUDGET) -> float:
        """Sequential rate as the prefix-expected sum of conditional minima,
        evaluated term by term over the prefix tree.

        Only defined for a mechanism matched to the true model.
        """
        if self.mech_model is not self.model:
            raise InputError("rate identity requires a matched mechanism")
        perm = ordering.perm
        acc = 0.0
        nodes = 0

        def walk(depth: int, wq: np.ndarray):
            nonlocal acc, nodes
            if depth == self.n:
                return
            nodes += 1
            if nodes > leaf_budget * self.n:
                raise CapacityError("prefix enumeration exceeded budget")
            pos = perm[depth]
            cond, totals = self.predictive(wq, pos)
            mins, ratios = self.release_table(cond, totals, pos)
            acc += wq.sum() * mins.sum()
            for y in (*range(self.arities[pos]), STAR):
                if y != STAR and mins[y] <= 0.0:
                    continue
                wq2 = wq * self.step_factor(pos, y, ratios)
                if wq2.max() > 0.0:
                    walk(depth + 1, wq2)

        walk(0, self.q.copy())
        return acc / self.n


@dataclass
class OutputDistribution:
    """Exact joint table p(sensitive assignment, masked output)."""

    n: int
    K: tuple[int, ...]
    u_values: list[tuple[int, ...]]
    y_values: list[tuple[int, ...]]
    matrix: np.ndarray  # (num_u, num_y)

    @classmethod
    def from_table(cls, n, K, arities, u_values, table):
        y_values = sorted(table.keys())
        matrix = np.stack([table[y] for y in y_values], axis=1) if y_values \
            else np.zeros((len(u_values), 0))
        return cls(n, tuple(K), list(u_values), y_values, matrix)

    @property
    def total(self) -> float:
        return float(self.matrix.sum())

    def sensitive_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def output_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def prob(self, u: tuple[int, ...], y: tuple[int, ...]) -> float:
        try:
            j = self.y_values.index(tuple(y))
        except ValueError:
            return 0.0
        return float(self.matrix[self.u_values.index(tuple(u)), j])

    def expected_erasure_fraction(self) -> float:
        stars = np.array([sum(1 for v in y if v == STAR) for y in self.y_values],
                         dtype=float)
        return float(self.output_marginal() @ stars) / self.n

    def mutual_information_bits(self) -> float:
        return mutual_information(self.matrix / self.total)

    def max_conditional_deviation(self) -> float:
        """max over (u, y) of |p(y | u) - p(y)|, over possible u."""
        pu = self.sensitive_marginal()
        py = self.output_marginal() / self.total
        dev = 0.0
        for i in range(len(self.u_values)):
            if pu[i] <= 0:
                continue
            dev = max(dev, float(np.max(np.abs(self.matrix[i] / pu[i] - py))))
        return dev


@dataclass(frozen=True)
class PrivacyAudit:
    max_deviation: float
    mutual_information_bits: float


class ModelConditionals:
    """Conditional-query provider backed by exact enumeration."""

    def __init__(self, model: SequenceModel, K, mechanism_model=None,
                 budget: int = DEFAULT_ENUMERATION_BUDGET):
        self.engine = EnumeratedMechanism(model, K, mechanism_model, budget)
        self.K = self.engine.K

    def assignments(self) -> list[tuple[int, ...]]:
        """Sensitive assignments that are possible a priori."""
        return [u for u, w in zip(self.engine.u_values, self.engine.q_prior)
                if w > 0]

    def query(self, i: int, u, y_prefix) -> np.ndarray:
        """Conditional distribution of X_i given sensitive = u and the
        produced prefix (an ordered sequence of (position, outcome) pairs)."""
        eng = self.engine
        if not 0 <= i < eng.n:
            raise InputError(f"position {i} out of range")
        u = tuple(int(v) for v in u)
        if len(u) != len(self.K):
            raise InputError("assignment length does not match sensitive set")
        seen = set()
        wq = eng.q.copy()
        for pos, val in y_prefix:
            pos = int(pos)
            if pos == i or pos in seen or not 0 <= pos < eng.n:
                raise InputError(f"invalid prefix position {pos}")
            if val != STAR and not 0 <= val < eng.arities[pos]:
                raise InputError(f"invalid prefix outcome {val} at {pos}")
            seen.add(pos)
            cond, totals = eng.predictive(wq, pos)
            _, ratios = eng.release_table(cond, totals, pos)
            wq *= eng.step_factor(pos, val, ratios)
        cond, totals = eng.predictive(wq, i)
        code = assignment_index(u, eng.arities, self.K)
        if totals[code] <= 0.0:
            raise ImpossibleContextError(
                f"context (sensitive={u}, prefix) has probability zero")
        return cond[code].copy()


# ---------------------------------------------------------------------------
# Module-level operations


def conditional_query(model: SequenceModel, i: int, u, K, y_prefix=(),
                      mechanism_model=None) -> np.ndarray:
    """Exact p(X_i | sensitive = u, produced prefix) by enumeration."""
    return ModelConditionals(model, K, mechanism_model).query(i, u, y_prefix)


def erasure_probability(cond, i: int, x_i: int, u_obs, K, y_prefix=()) -> float:
    """Probability that position i is erased given the true symbol and the
    true sensitive values, per the release-ratio rule.

    ``cond`` is a conditional-query provider (e.g. `ModelConditionals`).
    """
    K = tuple(sorted(int(k) for k in K))
    if i in K:
        return 1.0
    try:
        denom = float(cond.query(i, u_obs, y_prefix)[x_i])
    except ImpossibleContextError:
        return 1.0
    if denom <= 0.0:
        return 1.0
    best = None
    for u in cond.assignments():
        try:
            val = float(cond.query(i, u, y_prefix)[x_i])
        except ImpossibleContextError:
            continue  # hypothesis impossible in this context
        best = val if best is None else min(best, val)
    if best is None:
        return 1.0
    return 1.0 - clamp_probability(best / denom, "release probability")


def mask_sequence(model: SequenceModel, x, K, ordering: Ordering | None = None,
                  rng: np.random.Generator | None = None, mechanism_model=None,
                  budget: int = DEFAULT_ENUMERATION_BUDGET):
    """Mask one sequence with the sequential mechanism (reference path)."""
    if rng is None:
        raise InputError("mask_sequence requires a random generator")
    engine = EnumeratedMechanism(model, K, mechanism_model, budget)
    ordering = ordering or Ordering.linear(model.n)
    if len(ordering) != model.n:
        raise InputError("ordering length does not match model")
    return engine.mask(x, ordering, rng)


def exact_output_distribution(model: SequenceModel, K,
                              ordering: Ordering | None = None,
                              mechanism_model=None,
                              budget: int = DEFAULT_ENUMERATION_BUDGET,
                              leaf_budget: int = DEFAULT_LEAF_BUDGET):
    """Exact joint law of (sensitive values, masked output)."""
    engine = EnumeratedMechanism(model, K, mechanism_model, budget)
    ordering = ordering or Ordering.linear(model.n)
    return engine.output_distribution(ordering, leaf_budget)


def achievable_rate_exact(model: SequenceModel, K,
                          ordering: Ordering | None = None,
                          budget: int = DEFAULT_ENUMERATION_BUDGET) -> float:
    """Exact rate (released fraction) of the mechanism: 1 - E[erasures]/n."""
    dist = exact_output_distribution(model, K, ordering, budget=budget)
    return 1.0 - dist.expected_erasure_fraction()


def rate_from_stepwise_minima(model: SequenceModel, K,
                              ordering: Ordering | None = None,
                              budget: int = DEFAULT_ENUMERATION_BUDGET) -> float:
    """The sequential-rate expression: the prefix-expected sum of minimum
    conditionals, averaged over positions.  Equals `achievable_rate_exact`."""
    engine = EnumeratedMechanism(model, K, budget=budget)
    ordering = ordering or Ordering.linear(model.n)
    return engine.stepwise_minima_rate(ordering)


def achievable_rate_mc(model: SequenceModel, K, ordering: Ordering | None = None,
                       runs: int = 1000, rng: np.random.Generator | None = None,
                       budget: int = DEFAULT_ENUMERATION_BUDGET):
    """Monte-Carlo rate estimate: (mean of 1 - e(Y)/n, standard error)."""
    if rng is None:
        raise InputError("achievable_rate_mc requires a random generator")
    if runs < 1:
        raise InputError("runs must be >= 1")
    ordering = ordering or Ordering.linear(model.n)
    if isinstance(model, HmmModel) and ordering.is_linear:
        from . import hmm as _hmm  # deferred: hmm imports this module

        return _hmm.erasure_rate_mc(model, K, runs, rng)
    engine = EnumeratedMechanism(model, K, budget=budget)
    rates = np.empty(runs)
    for r in range(runs):
        x = model.sample(rng)
        masked, _ = engine.mask(x, ordering, rng)
        rates[r] = 1.0 - masked.erasure_rate
    return float(rates.mean()), _sample_stderr(rates)


def _sample_stderr(values: np.ndarray) -> float:
    if values.size < 2 or np.ptp(values) == 0.0:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


def verify_privacy_exact(model: SequenceModel, K,
                         ordering: Ordering | None = None,
                         mechanism_model=None,
                         budget: int = DEFAULT_ENUMERATION_BUDGET) -> PrivacyAudit:
    """Exact privacy audit: worst-case conditional deviation and mutual
    information between sensitive values and the masked output."""
    dist = exact_output_distribution(model, K, ordering, mechanism_model,
                                     budget=budget)
    return PrivacyAudit(dist.max_conditional_deviation(),
                        dist.mutual_information_bits())
