"""Efficient masking for the haplotype-copying HMM.

The reference mechanism needs p(x_i | sensitive = u, produced prefix) at
every step, which enumeration only delivers for toy sizes.  The HMM
structure gives it in O(n m^2) arithmetic per hypothesis:

* a backward pass over hidden states precomputes, for every position and
  sensitive assignment u, the likelihood of the not-yet-passed sensitive
  symbols given the current hidden state;
* a per-hypothesis belief over hidden states is filtered forward through
  the outputs actually produced, folding in the mechanism's own release
  randomness, not just the chain's.

The belief filter is renormalized per position per hypothesis, so long
sequences stay in the linear domain without underflow.  All state is kept
in arrays with a leading batch axis; independent Monte-Carlo runs share
the immutable backward table and advance in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import HmmModel, sensitive_assignments, validate_sequence
from .errors import (
    CapacityError,
    ImpossibleContextError,
    InputError,
    NumericalError,
)
from .masking import STAR, MaskedSequence, Ordering, TranscriptEntry
from .mechanism import RATIO_SNAP, RATIO_TOL, _validate_sensitive

#: Sensitive sets larger than this make the 2^|K| hypothesis loop pointless.
MAX_SENSITIVE = 12

#: Belief-filter normalizers must match the predicted output probability
#: to this absolute tolerance.
NORM_TOL = 1e-6


@dataclass(frozen=True)
class SensitiveBackwardTable:
    """Backward likelihoods of future sensitive symbols.

    ``values[i, u, s]`` is the probability that the sensitive positions at
    or after i carry the values assigned by u, given hidden state s at
    position i.  Positions past the last sensitive index have value 1 for
    every state, where the filter falls back to the plain chain kernel.
    """

    K: tuple[int, ...]
    values: np.ndarray            # (n, num_u, m)
    u_components: np.ndarray      # (num_u, |K|)
    prior: np.ndarray             # (num_u,) = p(sensitive = u)
    plain_from: int               # first position with no sensitive suffix

    @property
    def num_u(self) -> int:
        return self.values.shape[1]


def _u_components(hmm: HmmModel, K: tuple[int, ...]) -> np.ndarray:
    us = sensitive_assignments(hmm.arities, K)
    return np.array(us, dtype=np.int64).reshape(len(us), len(K))


def sensitive_backward_table(hmm: HmmModel, K) -> SensitiveBackwardTable:
    """Backward recursion over hidden states, one column per hypothesis."""
    K = _validate_sensitive(K, hmm.n)
    if len(K) > MAX_SENSITIVE:
        raise CapacityError(
            f"|K| = {len(K)} exceeds the supported maximum {MAX_SENSITIVE}")
    n, m = hmm.n, hmm.m
    ucomp = _u_components(hmm, K)
    num_u = ucomp.shape[0] if K else 1
    if not K:
        ucomp = np.zeros((1, 0), dtype=np.int64)
    t = hmm.transition_matrix
    values = np.ones((n, num_u, m))
    slot = {k: j for j, k in enumerate(K)}
    nxt = np.ones((num_u, m))
    for i in range(n - 1, -1, -1):
        cur = nxt @ t.T  # cur[u, s] = sum_s' T[s, s'] * nxt[u, s']
        if i == n - 1:
            cur = np.ones((num_u, m))
        if i in slot:
            emis = hmm.emission_likelihoods(i)           # (arity, m)
            cur = cur * emis[ucomp[:, slot[i]]]
        values[i] = cur
        nxt = cur
    prior = values[0] @ hmm.initial_state
    plain_from = (max(K) + 1) if K else 0
    return SensitiveBackwardTable(K, values, ucomp, prior, plain_from)


def transition_given_sensitive(hmm: HmmModel, table: SensitiveBackwardTable,
                               i: int, u) -> np.ndarray:
    """Hidden-state kernel into position i conditioned on sensitive = u.

    Row s_prev is the plain kernel reweighted by the backward likelihoods at
    position i and renormalized.  Requires 1 <= i <= n-1.
    """
    if not 1 <= i < hmm.n:
        raise InputError(f"kernel position {i} out of range 1..{hmm.n - 1}")
    from .distributions import assignment_index

    code = assignment_index(u, hmm.arities, table.K)
    g = table.values[i, code]
    raw = hmm.transition_matrix * g[None, :]
    z = raw.sum(axis=1)
    if np.any(z <= 0.0):
        raise ImpossibleContextError(
            f"sensitive assignment {tuple(u)} unreachable from some state")
    return raw / z[:, None]


def initial_given_sensitive(hmm: HmmModel, table: SensitiveBackwardTable,
                            u) -> np.ndarray:
    """p(S_0 | sensitive = u)."""
    from .distributions import assignment_index

    code = assignment_index(u, hmm.arities, table.K)
    raw = hmm.initial_state * table.values[0, code]
    z = raw.sum()
    if z <= 0.0:
        raise ImpossibleContextError(f"sensitive assignment {tuple(u)} impossible")
    return raw / z


def sensitive_conditionals(hmm: HmmModel, K,
                           table: SensitiveBackwardTable | None = None) -> np.ndarray:
    """Prior conditionals p(x_i = v | sensitive = u), shape (n, num_u, arity).

    Positions in K get the indicator of u's component.  Assignments with
    zero prior get NaN rows.
    """
    if table is None:
        table = sensitive_backward_table(hmm, K)
    K = table.K
    n, m = hmm.n, hmm.m
    num_u = table.num_u
    arity = hmm.alphabet.size
    slot = {k: j for j, k in enumerate(K)}
    out = np.full((n, num_u, arity), np.nan)
    fwd = np.broadcast_to(hmm.initial_state, (num_u, m)).copy()
    t = hmm.transition_matrix
    for i in range(n):
        emis = hmm.emission_likelihoods(i)  # (arity, m)
        if i in slot:
            rows = np.zeros((num_u, arity))
            rows[np.arange(num_u), table.u_components[:, slot[i]]] = 1.0
            out[i] = rows
            fwd = fwd * emis[table.u_components[:, slot[i]]]
        else:
            joint = np.einsum("um,vm,um->uv", fwd, emis, table.values[i])
            z = joint.sum(axis=1)
            np.divide(joint, z[:, None], out=out[i], where=z[:, None] > 0)
            out[i][z <= 0] = np.nan
        fwd = fwd @ t
    return out


class BatchMaskingSession:
    """Lockstep masking of a batch of sequences sharing (hmm, K).

    Per position, the session computes the per-hypothesis predictive
    distribution of the next symbol, turns it into release probabilities,
    and — once the outcome is fixed — filters the hidden-state beliefs
    through the corresponding output likelihood.
    """

    def __init__(self, hmm: HmmModel, K, x_sensitive, table=None):
        self.hmm = hmm
        self.K = _validate_sensitive(K, hmm.n)
        if len(self.K) > MAX_SENSITIVE:
            raise CapacityError(
                f"|K| = {len(self.K)} exceeds the supported maximum {MAX_SENSITIVE}")
        self.table = table if table is not None else sensitive_backward_table(hmm, self.K)
        if self.table.K != self.K:
            raise InputError("backward table was built for a different K")
        x_sensitive = np.asarray(x_sensitive, dtype=np.int64)
        if x_sensitive.ndim != 2 or x_sensitive.shape[1] != len(self.K):
            raise InputError("x_sensitive must have shape (batch, |K|)")
        self.batch = x_sensitive.shape[0]
        radix = hmm.alphabet.size
        codes = np.zeros(self.batch, dtype=np.int64)
        for j in range(len(self.K)):
            codes = codes * radix + x_sensitive[:, j]
        self.u_true = codes
        self.trans = hmm.transition_matrix
        self.emissions = hmm.emission_stack()  # (n, arity, m)
        self.pos = 0
        self.belief = None                     # (batch, num_u, m)
        self.live = np.broadcast_to(self.table.prior > 0,
                                    (self.batch, self.table.num_u)).copy()
        if not np.all(self.live[np.arange(self.batch), self.u_true]):
            raise InputError("a supplied sensitive assignment has prior zero")
        self._slot = {k: j for j, k in enumerate(self.K)}
        self._cache: tuple | None = None

    # -- per-position quantities -------------------------------------------

    def _predicted_states(self) -> np.ndarray:
        """p(S_pos = s | u, prefix) as (batch, num_u, m)."""
        num_u, m = self.table.num_u, self.hmm.m
        if self.pos == 0:
            base = self.hmm.initial_state[None, :] * self.table.values[0]
            z = base.sum(axis=1)
            pred = np.zeros_like(base)
            np.divide(base, z[:, None], out=pred, where=z[:, None] > 0)
            return np.broadcast_to(pred, (self.batch, num_u, m)).copy()
        if self.pos >= self.table.plain_from:
            # no sensitive positions remain: the plain chain kernel applies
            flat = self.belief.reshape(self.batch * num_u, m) @ self.trans
            return flat.reshape(self.batch, num_u, m)
        g = self.table.values[self.pos]                     # (num_u, m)
        z = self.trans @ g.T                                # (m, num_u)
        ratio = np.zeros_like(self.belief)
        np.divide(self.belief, z.T[None, :, :], out=ratio,
                  where=(z.T[None, :, :] > 0) & (self.belief > 0))
        # out[b,u,k] = sum_s ratio[b,u,s] * T[s,k] * g[u,k]
        pred = np.matmul(ratio.transpose(1, 0, 2), self.trans)  # (num_u, b, m)
        pred *= g[:, None, :]
        return pred.transpose(1, 0, 2).copy()

    def _position_tables(self):
        """(pred_states, pred_symbols, mins, ratios) for the current position."""
        if self._cache is not None:
            return self._cache
        if self.pos >= self.hmm.n:
            raise InputError("session already consumed the whole sequence")
        pred = self._predicted_states()
        mass = pred.sum(axis=2)
        live = self.live & (mass > 1e-12)
        # defensive renormalization; mass is 1 for live hypotheses unless a
        # degenerate (theta or epsilon = 0) model starved some states
        np.divide(pred, mass[:, :, None], out=pred,
                  where=live[:, :, None])
        pred[~live] = 0.0
        arity = self.hmm.alphabet.size
        if self.pos in self._slot:
            comp = self.table.u_components[:, self._slot[self.pos]]
            px = np.zeros((self.batch, self.table.num_u, arity))
            px[:, np.arange(self.table.num_u), comp] = 1.0
            px[~live] = 0.0
            mins = np.zeros((self.batch, arity))  # sensitive: always erase
        else:
            px = np.matmul(pred, self.emissions[self.pos].T)
            masked = np.where(live[:, :, None], px, np.inf)
            mins = masked.min(axis=1)
            mins[~np.isfinite(mins)] = 0.0
        ratios = np.zeros_like(px)
        np.divide(np.broadcast_to(mins[:, None, :], px.shape), px, out=ratios,
                  where=px > 0)
        if np.any(ratios > 1.0 + RATIO_TOL):
            raise NumericalError("release ratio left [0, 1] beyond tolerance")
        np.clip(ratios, 0.0, 1.0, out=ratios)
        ratios[ratios > 1.0 - RATIO_SNAP] = 1.0
        self._cache = (pred, px, mins, ratios)
        return self._cache

    def predictive(self, u) -> np.ndarray:
        """p(x_pos | sensitive = u, prefix) for the current position,
        shape (batch, arity)."""
        from .distributions import assignment_index

        code = assignment_index(u, self.hmm.arities, self.K)
        _, px, _, _ = self._position_tables()
        if not np.all(self.live[:, code]):
            raise ImpossibleContextError(
                f"assignment {tuple(u)} impossible in the current context")
        return px[:, code, :].copy()

    def release_probability(self, x_col) -> np.ndarray:
        """Probability of releasing the true symbol at the current position."""
        x_col = np.asarray(x_col, dtype=np.int64)
        _, _, _, ratios = self._position_tables()
        return ratios[np.arange(self.batch), self.u_true, x_col]

    def advance(self, y_col) -> None:
        """Filter beliefs through the produced outcomes and move on."""
        y_col = np.asarray(y_col, dtype=np.int64)
        pred, px, mins, ratios = self._position_tables()
        released = y_col != STAR
        if self.pos in self._slot and released.any():
            raise InputError("sensitive positions must be erased")
        b_idx = np.arange(self.batch)
        emis = self.emissions[self.pos]                     # (arity, m)
        # released: factor = p(v | state) * release-ratio(u, v)
        # erased:   factor = 1 - sum_v p(v | state) * release-ratio(u, v)
        weighted = np.matmul(ratios, emis)
        y_safe = np.where(released, y_col, 0)
        rel_factor = emis[y_safe][:, None, :] * \
            ratios[b_idx, :, y_safe][:, :, None]
        factor = np.where(released[:, None, None], rel_factor, 1.0 - weighted)
        np.maximum(factor, 0.0, out=factor)
        new_belief = pred * factor
        norms = new_belief.sum(axis=2)
        expected = np.where(released, mins[b_idx, y_safe],
                            1.0 - mins.sum(axis=1))
        bad = self.live & (np.abs(norms - expected[:, None]) > NORM_TOL)
        if bad.any():
            raise NumericalError(
                "belief normalizer deviates from the predicted output "
                "probability beyond tolerance")
        np.divide(new_belief, norms[:, :, None], out=new_belief,
                  where=self.live[:, :, None] & (norms[:, :, None] > 0))
        # hypotheses whose context became impossible drop out of the minimum
        self.live = self.live & (norms > 0)
        new_belief[~self.live] = 0.0
        self.belief = new_belief
        self.pos += 1
        self._cache = None

    def step(self, x_col, rng: np.random.Generator):
        """Sample outcomes for the current position; returns (y, release_prob)."""
        x_col = np.asarray(x_col, dtype=np.int64)
        r = self.release_probability(x_col)
        y = np.where(rng.random(self.batch) < r, x_col, STAR)
        self.advance(y)
        return y, r


class MaskingSession:
    """Streaming single-sequence interface: feed a symbol, receive the
    masked outcome."""

    def __init__(self, hmm: HmmModel, K, x_sensitive, table=None):
        x_sensitive = np.asarray(x_sensitive, dtype=np.int64).reshape(1, -1)
        self._batch = BatchMaskingSession(hmm, K, x_sensitive, table)

    @property
    def position(self) -> int:
        return self._batch.pos

    def predictive(self, u) -> np.ndarray:
        return self._batch.predictive(u)[0]

    def release_probability(self, x_i: int) -> float:
        return float(self._batch.release_probability([x_i])[0])

    def advance(self, y_i: int) -> None:
        self._batch.advance([y_i])

    def step(self, x_i: int, rng: np.random.Generator) -> int:
        y, _ = self._batch.step([x_i], rng)
        return int(y[0])


def mask_hmm(hmm: HmmModel, x, K, rng: np.random.Generator, table=None):
    """Mask one sequence; returns (MaskedSequence, transcript)."""
    x = validate_sequence(x, hmm.arities)
    K = _validate_sensitive(K, hmm.n)
    session = BatchMaskingSession(
        hmm, K, np.array([[x[k] for k in K]], dtype=np.int64), table)
    y = []
    transcript = []
    for i in range(hmm.n):
        out, r = session.step(np.array([x[i]]), rng)
        y.append(int(out[0]))
        transcript.append(TranscriptEntry(i, float(r[0]), int(out[0])))
    return MaskedSequence(tuple(y)), tuple(transcript)


def mask_hmm_batch(hmm: HmmModel, xs, K, rng: np.random.Generator,
                   table=None) -> np.ndarray:
    """Mask a batch of sequences in lockstep; returns (batch, n) outcomes."""
    xs = np.asarray(xs, dtype=np.int64)
    K = _validate_sensitive(K, hmm.n)
    session = BatchMaskingSession(hmm, K, xs[:, list(K)], table)
    out = np.empty_like(xs)
    for i in range(hmm.n):
        out[:, i], _ = session.step(xs[:, i], rng)
    return out


def erasure_rate_mc(hmm: HmmModel, K, runs: int, rng: np.random.Generator,
                    batch_size: int = 512):
    """Monte-Carlo rate of the mechanism on an HMM: (mean of 1 - e/n, stderr)."""
    if runs < 1:
        raise InputError("runs must be >= 1")
    K = _validate_sensitive(K, hmm.n)
    table = sensitive_backward_table(hmm, K)
    rates = np.empty(runs)
    done = 0
    while done < runs:
        b = min(batch_size, runs - done)
        xs = hmm.sample_batch(b, rng)
        ys = mask_hmm_batch(hmm, xs, K, rng, table)
        rates[done:done + b] = 1.0 - (ys == STAR).sum(axis=1) / hmm.n
        done += b
    from .mechanism import _sample_stderr

    return float(rates.mean()), _sample_stderr(rates)
