import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genomask import (
    ExplicitJointModel,
    ImpossibleContextError,
    InputError,
    MarkovChainModel,
    ModelConditionals,
    Ordering,
    STAR,
    achievable_rate_exact,
    achievable_rate_mc,
    conditional_query,
    erasure_probability,
    exact_output_distribution,
    mask_sequence,
    rate_from_stepwise_minima,
    verify_privacy_exact,
)
from genomask.hardness import HittingSetInstance, ParityModel
from genomask.masking import MaskedSequence, TranscriptEntry, transcript_to_json_lines

from conftest import parity_n3, random_explicit, random_hmm, random_markov


def independent_model(n=3, p1=0.3):
    """Product of independent biased bits (position i has P(1) = p1 + i/10)."""
    probs = np.ones(2 ** n)
    for idx in range(2 ** n):
        for i in range(n):
            bit = (idx >> (n - 1 - i)) & 1
            q = p1 + i / 10.0
            probs[idx] *= q if bit else 1 - q
    return ExplicitJointModel(probs, n=n, alphabet=2)


# --- conditional_query --------------------------------------------------------


def test_conditional_of_independent_model_is_marginal():
    m = independent_model()
    d = conditional_query(m, 2, (0,), K=[0], y_prefix=[(0, STAR), (1, 1)])
    assert d == pytest.approx([0.5, 0.5])  # P(1) = 0.3 + 2/10


def test_markov_conditional_with_erased_sensitive():
    mc = MarkovChainModel.binary_symmetric(0.9, 3)
    d0 = conditional_query(mc, 1, (0,), K=[0], y_prefix=[(0, STAR)])
    d1 = conditional_query(mc, 1, (1,), K=[0], y_prefix=[(0, STAR)])
    assert d0 == pytest.approx([0.9, 0.1], abs=1e-12)
    assert d1 == pytest.approx([0.1, 0.9], abs=1e-12)


def test_conditional_sums_to_one_on_reachable_prefixes(rng):
    model = random_markov(rng, 4)
    cond = ModelConditionals(model, [1])
    for u in cond.assignments():
        d = cond.query(3, u, [(1, STAR), (0, 0)])
        assert d.sum() == pytest.approx(1.0, abs=1e-9)


def test_impossible_context_raises():
    m = ExplicitJointModel([0.5, 0.0, 0.0, 0.5], n=2, alphabet=2)
    with pytest.raises(ImpossibleContextError):
        conditional_query(m, 1, (0,), K=[0], y_prefix=[(0, 1)])  # y0=1 under u=0


def test_prefix_validation():
    m = independent_model()
    with pytest.raises(InputError):
        conditional_query(m, 1, (0,), K=[0], y_prefix=[(1, 0)])
    with pytest.raises(InputError):
        conditional_query(m, 1, (0,), K=[0], y_prefix=[(0, 5)])


# --- erasure_probability ------------------------------------------------------


def test_sensitive_positions_always_erased():
    m = independent_model()
    cond = ModelConditionals(m, [0])
    assert erasure_probability(cond, 0, 1, (1,), [0], []) == 1.0


def test_independent_position_never_erased():
    m = independent_model()
    cond = ModelConditionals(m, [0])
    assert erasure_probability(cond, 2, 0, (1,), [0], [(0, STAR)]) == 0.0


def test_markov_erasure_probability_value():
    mc = MarkovChainModel.binary_symmetric(0.9, 3)
    cond = ModelConditionals(mc, [0])
    got = erasure_probability(cond, 1, 0, (0,), [0], [(0, STAR)])
    assert got == pytest.approx(1 - 0.1 / 0.9, abs=1e-12)


# --- mask_sequence ------------------------------------------------------------


def test_independent_model_masks_only_sensitive(rng):
    m = independent_model()
    masked, transcript = mask_sequence(m, (1, 0, 1), [0], rng=rng)
    assert masked.symbols == (STAR, 0, 1)
    assert transcript[0].release_prob == 0.0
    assert all(0.0 <= e.release_prob <= 1.0 for e in transcript)


def test_markov_release_follows_release():
    # once a position is released, every later one is released too
    mc = MarkovChainModel.binary_symmetric(0.8, 4)
    dist = exact_output_distribution(mc, [0])
    for y, p in zip(dist.y_values, dist.output_marginal()):
        if p <= 0:
            continue
        seen_release = False
        for v in y:
            if seen_release:
                assert v != STAR
            seen_release = seen_release or (v != STAR)


def test_zero_probability_input_warns(rng):
    m = ExplicitJointModel([0.5, 0.0, 0.0, 0.5], n=2, alphabet=2)
    with pytest.warns(UserWarning):
        mask_sequence(m, (0, 1), [0], rng=rng)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), ksize=st.integers(1, 3))
def test_masking_is_faithful(seed, ksize):
    rng = np.random.default_rng(seed)
    model = random_markov(rng, 5)
    K = sorted(rng.choice(5, size=ksize, replace=False))
    x = model.sample(rng)
    masked, _ = mask_sequence(model, x, K, rng=rng)
    assert masked.is_faithful_to(x)
    assert all(masked.symbols[k] == STAR for k in K)


# --- exact output law ---------------------------------------------------------


def test_output_distribution_consistency(rng):
    model = random_explicit(rng, 4)
    dist = exact_output_distribution(model, [1])
    assert dist.total == pytest.approx(1.0, abs=1e-10)
    space, probs = model.joint_table()
    true_marginal = [probs[space[:, 1] == v].sum() for v in (0, 1)]
    assert dist.sensitive_marginal() == pytest.approx(true_marginal, abs=1e-10)
    # every output with mass erases the sensitive position
    for y, p in zip(dist.y_values, dist.output_marginal()):
        if p > 0:
            assert y[1] == STAR


def test_exact_and_monte_carlo_rates_agree(rng):
    model = random_markov(rng, 6)
    exact = achievable_rate_exact(model, [0])
    est, err = achievable_rate_mc(model, [0], runs=3000, rng=rng)
    assert abs(est - exact) < 4 * max(err, 1e-6)


def test_rate_identity_across_models_and_orderings(rng):
    cases = [
        (random_explicit(rng, 4), [0], None),
        (random_explicit(rng, 4, sparse=True), [2], None),
        (random_markov(rng, 5), [0], Ordering((4, 2, 0, 1, 3))),
        (random_hmm(rng, 5, 3), [1, 3], Ordering((3, 0, 4, 1, 2))),
        (parity_n3(), [0], None),
    ]
    for model, K, ordering in cases:
        direct = achievable_rate_exact(model, K, ordering)
        stepwise = rate_from_stepwise_minima(model, K, ordering)
        assert direct == pytest.approx(stepwise, abs=1e-9)


def test_deterministic_mechanism_has_zero_mc_variance(rng):
    inst = HittingSetInstance.from_lists(2, [[1, 2]])
    model = ParityModel(inst)
    est, err = achievable_rate_mc(model, model.K, runs=64, rng=rng)
    assert err == 0.0


def test_privacy_of_random_instances(rng):
    for _ in range(6):
        model = random_explicit(rng, 4)
        perm = tuple(int(v) for v in rng.permutation(4))
        audit = verify_privacy_exact(model, [0], Ordering(perm))
        assert audit.max_deviation <= 1e-10
        assert abs(audit.mutual_information_bits) <= 1e-10


def test_release_everything_leaks():
    # negative control: the identity "mechanism" on a correlated model
    mc = MarkovChainModel.binary_symmetric(0.9, 3)
    space, probs = mc.joint_table()
    from genomask.mechanism import OutputDistribution

    table = {tuple(int(v) for v in row): None for row in space}
    tbl = {}
    for row, p in zip(space, probs):
        y = tuple(int(v) for v in row)
        vec = tbl.setdefault(y, np.zeros(2))
        vec[row[0]] += p
    dist = OutputDistribution.from_table(3, (0,), mc.arities, [(0,), (1,)], tbl)
    assert dist.mutual_information_bits() > 0.1
    assert dist.max_conditional_deviation() > 0.1


def test_all_sensitive_yields_all_star():
    mc = MarkovChainModel.binary_symmetric(0.7, 3)
    dist = exact_output_distribution(mc, [0, 1, 2])
    assert dist.y_values == [(STAR, STAR, STAR)]
    assert abs(dist.mutual_information_bits()) <= 1e-12


def test_local_optimality_release_mass(rng):
    """The chance of releasing position i given any reachable prefix equals
    the summed minimum conditionals: no single step can release more."""
    model = random_markov(rng, 4)
    K = [0]
    dist = exact_output_distribution(model, K)
    cond = ModelConditionals(model, K)

    def prefix_mass(prefix, extra=None):
        total = 0.0
        for y, p in zip(dist.y_values, dist.output_marginal()):
            if all(y[pos] == val for pos, val in prefix):
                if extra is None or extra(y):
                    total += p
        return total

    def walk(prefix, depth):
        base = prefix_mass(prefix)
        if base <= 0 or depth == model.n:
            return
        mins = None
        for u in cond.assignments():
            try:
                d = cond.query(depth, u, prefix)
            except ImpossibleContextError:
                continue
            mins = d if mins is None else np.minimum(mins, d)
        expected = float(mins.sum()) if depth not in K else 0.0
        released = prefix_mass(prefix, extra=lambda y: y[depth] != STAR)
        assert released / base == pytest.approx(expected, abs=1e-10)
        for v in (0, 1, STAR):
            walk(prefix + [(depth, v)], depth + 1)

    walk([], 0)


def test_ordering_validation():
    with pytest.raises(InputError):
        Ordering((0, 0, 1))
    assert Ordering.linear(3).is_linear


def test_masked_sequence_roundtrip():
    ms = MaskedSequence((1, STAR, 0))
    assert ms.text() == "1*0"
    assert MaskedSequence.parse("1*0") == ms
    assert ms.erasure_count == 1
    assert ms.is_faithful_to((1, 1, 0))
    assert not ms.is_faithful_to((1, 1, 1))


def test_transcript_serialization():
    entries = (TranscriptEntry(0, 0.5, STAR), TranscriptEntry(1, 1.0, 1))
    lines = transcript_to_json_lines(entries).splitlines()
    assert '"outcome": "*"' in lines[0]
    assert '"release_prob": 1.0' in lines[1]
