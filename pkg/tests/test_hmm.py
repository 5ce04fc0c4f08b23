import copy
import itertools

import numpy as np
import pytest

from genomask import (
    CapacityError,
    HmmModel,
    ImpossibleContextError,
    InputError,
    MaskingSession,
    ModelConditionals,
    Ordering,
    STAR,
    exact_output_distribution,
    mask_hmm,
    mask_hmm_batch,
    sensitive_backward_table,
    sensitive_conditionals,
    transition_given_sensitive,
)
from genomask.distributions import assignment_index, sensitive_assignments
from genomask.hmm import BatchMaskingSession, erasure_rate_mc
from genomask.mechanism import EnumeratedMechanism

from conftest import random_hmm


def path_probability_table(model, K):
    """Brute force p(x_K = u | S_0 = s) by enumerating hidden paths and
    sensitive emissions."""
    K = tuple(sorted(K))
    t = model.transition_matrix
    emis = [model.emission_likelihoods(i) for i in range(model.n)]
    us = sensitive_assignments(model.arities, K)
    out = np.zeros((len(us), model.m))
    for s0 in range(model.m):
        for path in itertools.product(range(model.m), repeat=model.n - 1):
            full = (s0,) + path
            pp = 1.0
            for i in range(1, model.n):
                pp *= t[full[i - 1], full[i]]
            for ui, u in enumerate(us):
                pe = pp
                for slot, k in enumerate(K):
                    pe *= emis[k][u[slot], full[k]]
                out[ui, s0] += pe
    return out


def test_backward_table_empty_sensitive(rng):
    model = random_hmm(rng, 4, 3)
    table = sensitive_backward_table(model, [])
    assert np.all(table.values == 1.0)
    assert table.prior == pytest.approx([1.0])


def test_backward_table_last_position_not_sensitive(rng):
    model = random_hmm(rng, 4, 3)
    table = sensitive_backward_table(model, [1])
    assert np.all(table.values[3] == 1.0)
    assert np.all(table.values[2] == 1.0)  # past the last sensitive index
    assert table.plain_from == 2


def test_backward_table_matches_path_enumeration(rng):
    model = random_hmm(rng, 3, 2, eps=0.2, theta=0.1)
    table = sensitive_backward_table(model, [0])
    brute = path_probability_table(model, [0])
    assert table.values[0] == pytest.approx(brute, abs=1e-12)


def test_transition_kernel_reductions(rng):
    model = random_hmm(rng, 4, 3)
    plain = model.transition_matrix
    table = sensitive_backward_table(model, [0])
    # past the last sensitive position the kernel is the plain one
    got = transition_given_sensitive(model, table, 2, (1,))
    assert got == pytest.approx(plain, abs=1e-12)
    assert got.sum(axis=1) == pytest.approx(np.ones(model.m), abs=1e-12)


def test_transition_kernel_matches_bayes(rng):
    model = random_hmm(rng, 3, 2, eps=0.25, theta=0.15)
    K = [2]
    table = sensitive_backward_table(model, K)
    t = model.transition_matrix
    emis = model.emission_likelihoods(2)
    for u in ((0,), (1,)):
        got = transition_given_sensitive(model, table, 1, u)
        # p(s_1 | s_0, x_2 = u) by explicit path sums
        want = np.zeros((model.m, model.m))
        for s0 in range(model.m):
            for s1 in range(model.m):
                num = t[s0, s1] * sum(
                    t[s1, s2] * emis[u[0], s2] for s2 in range(model.m))
                want[s0, s1] = num
            want[s0] /= want[s0].sum()
        assert got == pytest.approx(want, abs=1e-12)


def test_sensitive_conditionals_match_enumeration(rng):
    model = random_hmm(rng, 5, 3)
    K = [1, 3]
    cond = sensitive_conditionals(model, K)
    eng = EnumeratedMechanism(model, K)
    for pos in range(model.n):
        brute, totals = eng.predictive(eng.q, pos)
        assert cond[pos] == pytest.approx(brute, abs=1e-12, nan_ok=True)


def test_predictive_uniform_when_emissions_are_noise(rng):
    model = HmmModel(rng.integers(2, size=(3, 4)), epsilon=0.3, theta=0.5)
    ses = MaskingSession(model, [0], x_sensitive=[1])
    ses.advance(STAR)
    for u in ((0,), (1,)):
        assert ses.predictive(u) == pytest.approx([0.5, 0.5], abs=1e-12)


def test_first_predictive_is_direct_marginalization(rng):
    model = random_hmm(rng, 4, 3, eps=0.2, theta=0.1)
    K = [2]
    ses = MaskingSession(model, K, x_sensitive=[1])
    cond = ModelConditionals(model, K)
    for u in cond.assignments():
        assert ses.predictive(u) == pytest.approx(cond.query(0, u, []), abs=1e-10)


def _walk_all_prefixes(model, K, x_sensitive, tol=1e-10):
    """Compare the session's predictive with brute force on every reachable
    prefix; returns the worst absolute deviation."""
    eng = EnumeratedMechanism(model, K)
    ses0 = MaskingSession(model, K, x_sensitive=x_sensitive)
    worst = 0.0

    def walk(depth, wq, ses):
        nonlocal worst
        if depth == model.n:
            return
        cond, totals = eng.predictive(wq, depth)
        for code, u in enumerate(eng.u_values):
            if totals[code] <= 0:
                continue
            got = ses.predictive(u)
            worst = max(worst, float(np.max(np.abs(got - cond[code]))))
        mins, ratios = eng.release_table(cond, totals, depth)
        for y in (*range(model.arities[depth]), STAR):
            if y != STAR and mins[y] <= 0.0:
                continue
            wq2 = wq * eng.step_factor(depth, y, ratios)
            if wq2.max() <= 0.0:
                continue
            nxt = copy.deepcopy(ses)
            nxt.advance(y)
            walk(depth + 1, wq2, nxt)

    walk(0, eng.q.copy(), ses0)
    return worst


@pytest.mark.parametrize("n,m,K", [(4, 2, (0,)), (5, 3, (1, 3)), (4, 3, (3,))])
def test_session_predictive_matches_brute_force_everywhere(rng, n, m, K):
    model = random_hmm(rng, n, m)
    x_sens = [int(rng.integers(2)) for _ in K]
    assert _walk_all_prefixes(model, K, x_sens) <= 1e-10


def hmm_session_joint(model, K):
    """Joint (sensitive, output) law computed purely from session updates."""
    table = sensitive_backward_table(model, K)
    num_u = table.num_u
    out = {}

    def walk(depth, ses, acc, probs):
        if depth == model.n:
            out[tuple(acc)] = probs * table.prior
            return
        _, px, mins, ratios = ses._batch._position_tables()
        for y in (*range(model.arities[depth]), STAR):
            if y != STAR and mins[0, y] <= 0:
                continue
            if y == STAR:
                pr = 1.0 - (px[0] * ratios[0]).sum(axis=1)
            else:
                pr = px[0, :, y] * ratios[0, :, y]
            if np.max(probs * pr) <= 0:
                continue
            nxt = copy.deepcopy(ses)
            nxt.advance(y)
            walk(depth + 1, nxt, acc + [y], probs * pr)

    x_sens = [0] * len(tuple(K))
    walk(0, MaskingSession(model, K, x_sensitive=x_sens), [],
         np.ones(num_u))
    return out


@pytest.mark.parametrize("n,m,K", [(4, 2, (0,)), (5, 3, (1, 3))])
def test_session_output_law_matches_enumeration(rng, n, m, K):
    model = random_hmm(rng, n, m)
    dist = exact_output_distribution(model, K)
    got = hmm_session_joint(model, K)
    num_u = len(dist.u_values)
    worst = 0.0
    seen = set()
    for j, y in enumerate(dist.y_values):
        vec = got.get(y, np.zeros(num_u))
        worst = max(worst, float(np.abs(dist.matrix[:, j] - vec).max()))
        seen.add(y)
    stray = sum(float(v.sum()) for y, v in got.items() if y not in seen)
    assert worst <= 1e-9 and stray <= 1e-12


def test_sensitive_positions_step_to_star(rng):
    model = random_hmm(rng, 4, 3)
    x = model.sample(rng)
    masked, transcript = mask_hmm(model, x, [0, 2], rng)
    assert masked.symbols[0] == STAR and masked.symbols[2] == STAR
    assert transcript[0].release_prob == 0.0
    assert transcript[2].release_prob == 0.0
    assert masked.is_faithful_to(x)


def test_single_reference_row_releases_everything(rng):
    model = HmmModel(np.array([[0, 1, 0, 1]]), epsilon=0.3, theta=0.2)
    ses = MaskingSession(model, [0], x_sensitive=[1])
    ses.advance(STAR)
    assert ses.release_probability(0) == 1.0


def test_empty_sensitive_set_releases_all(rng):
    model = random_hmm(rng, 5, 3)
    x = model.sample(rng)
    masked, _ = mask_hmm(model, x, [], rng)
    assert masked.symbols == x


def test_sensitive_size_guard(rng):
    model = random_hmm(rng, 14, 2)
    with pytest.raises(CapacityError):
        sensitive_backward_table(model, list(range(13)))


def test_prior_zero_sensitive_value_rejected():
    model = HmmModel(np.array([[0, 0], [0, 1]]), epsilon=0.2, theta=0.0)
    with pytest.raises(InputError):
        BatchMaskingSession(model, (0,), np.array([[1]]))


def test_belief_rows_stay_normalized(rng):
    model = random_hmm(rng, 6, 3)
    ses = MaskingSession(model, [1], x_sensitive=[0])
    x = model.sample(rng)
    for i in range(model.n):
        ses.step(int(x[i]), rng)
        live = ses._batch.live[0]
        sums = ses._batch.belief[0].sum(axis=1)
        assert sums[live] == pytest.approx(np.ones(live.sum()), abs=1e-9)


def test_plain_kernel_fast_path_equals_general(rng):
    model = random_hmm(rng, 5, 3)
    K = (1,)
    ses_a = MaskingSession(model, K, x_sensitive=[1])
    ses_b = MaskingSession(model, K, x_sensitive=[1])
    # force the general kernel in one session by pretending the sensitive
    # suffix never ends (the backward values past K are all ones anyway)
    object.__setattr__(ses_b._batch.table, "plain_from", model.n)
    for y in (0, STAR, 1, STAR, 1):
        for u in ((0,), (1,)):
            assert ses_a.predictive(u) == pytest.approx(ses_b.predictive(u),
                                                        abs=1e-12)
        ses_a.advance(y)
        ses_b.advance(y)


def test_degenerate_parameters_still_mask_faithfully(rng):
    panel = rng.integers(2, size=(3, 5))
    for eps, theta in [(0.0, 0.1), (0.2, 0.0), (0.0, 0.0)]:
        model = HmmModel(panel, eps, theta)
        xs = model.sample_batch(64, rng)
        ys = mask_hmm_batch(model, xs, (0,), rng)
        assert np.all((ys == xs) | (ys == STAR))
        assert np.all(ys[:, 0] == STAR)


def test_degenerate_parameters_keep_privacy(rng):
    panel = np.array([[0, 1, 0], [1, 1, 0], [0, 0, 1]])
    model = HmmModel(panel, epsilon=0.0, theta=0.1)
    from genomask import verify_privacy_exact

    audit = verify_privacy_exact(model, [0])
    assert audit.mutual_information_bits <= 1e-10


def test_batch_rate_agrees_with_exact(rng):
    model = random_hmm(rng, 6, 3, eps=0.15, theta=0.05)
    from genomask import achievable_rate_exact

    exact = achievable_rate_exact(model, [0])
    est, err = erasure_rate_mc(model, [0], runs=4000, rng=rng)
    assert abs(est - exact) < 4 * max(err, 1e-6)
