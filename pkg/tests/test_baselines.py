import numpy as np
import pytest

from genomask import (
    DegenerateSensitiveError,
    ExplicitJointModel,
    HmmModel,
    InputError,
    MarkovChainModel,
    MismatchPair,
    STAR,
    WindowPolicy,
    robustness_experiment,
    sequence_kl,
    window_leakage_exact,
    window_leakage_mc,
    window_leakage_sweep,
    window_mask,
)
from genomask.baselines import sequence_kl_mc

from conftest import random_hmm, random_markov


def test_window_mask_examples():
    assert window_mask((0, 1, 0, 1, 1), WindowPolicy("prefix", 0)).text() == "01011"
    assert window_mask((0, 1, 0), WindowPolicy("prefix", 3)).text() == "***"
    assert window_mask((0, 1, 0, 1, 1), WindowPolicy("prefix", 3)).text() == "***11"


def test_window_mask_radius_mode():
    policy = WindowPolicy("radius", 1, sensitive=(2,))
    assert window_mask((0, 1, 0, 1, 1), policy).text() == "0***1"
    with pytest.raises(InputError):
        WindowPolicy("radius", 1)
    with pytest.raises(InputError):
        WindowPolicy("sideways", 1)


def test_window_mask_is_faithful(rng):
    x = tuple(int(v) for v in rng.integers(2, size=6))
    masked = window_mask(x, WindowPolicy("prefix", 4))
    assert masked.is_faithful_to(x)


def test_full_window_has_zero_leakage(rng):
    model = random_markov(rng, 5)
    assert window_leakage_exact(model, [0], 5) == pytest.approx(0.0, abs=1e-10)


def test_independent_model_needs_only_its_own_position():
    m = ExplicitJointModel.uniform(4, 2)
    assert window_leakage_exact(m, [0], 1) == pytest.approx(0.0, abs=1e-10)
    assert window_leakage_exact(m, [0], 0) == pytest.approx(1.0)


def test_markov_leakage_decreases_with_window():
    mc = MarkovChainModel.binary_symmetric(0.9, 6)
    vals = [window_leakage_exact(mc, [0], w) for w in range(7)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[0] == pytest.approx(1.0)


def test_degenerate_sensitive_raises():
    m = ExplicitJointModel([0.5, 0.0, 0.5, 0.0], n=2, alphabet=2)
    with pytest.raises(DegenerateSensitiveError):
        window_leakage_exact(m, [1], 1)


def test_estimator_matches_exact(rng):
    model = random_hmm(rng, 8, 4, eps=0.15, theta=0.05)
    for w in (1, 3, 6):
        exact = window_leakage_exact(model, [0], w)
        est, err = window_leakage_mc(model, [0], w, 4000,
                                     np.random.default_rng(5))
        assert abs(est - exact) <= 4 * max(err, 1e-4)


def test_pure_noise_emissions_leak_nothing(rng):
    model = HmmModel(rng.integers(2, size=(4, 6)), epsilon=0.2, theta=0.5)
    est, err = window_leakage_sweep(model, [0], [1, 3], 3000, rng)
    assert np.all(np.abs(est) <= 4 * np.maximum(err, 1e-4))


def test_sweep_requires_leading_sensitive(rng):
    model = random_hmm(rng, 6, 3)
    with pytest.raises(InputError):
        window_leakage_sweep(model, [1], [2], 100, rng)


def test_matched_models_leak_nothing():
    mc = MarkovChainModel.binary_symmetric(0.9, 4)
    res = robustness_experiment(MismatchPair(mc, mc), [0])
    assert res.leakage_bits == pytest.approx(0.0, abs=1e-10)
    assert res.kl_bound_bits == pytest.approx(0.0, abs=1e-12)


def test_mismatch_leakage_below_divergence():
    pair = MismatchPair(MarkovChainModel.binary_symmetric(0.9, 4),
                        MarkovChainModel.binary_symmetric(0.8, 4))
    res = robustness_experiment(pair, [0])
    assert 0.0 < res.leakage_bits < res.kl_bound_bits


def test_mismatch_grid(rng):
    for _ in range(15):
        stay_p = float(rng.uniform(0.55, 0.95))
        stay_q = float(np.clip(stay_p + rng.uniform(-0.2, 0.2), 0.05, 0.95))
        pair = MismatchPair(MarkovChainModel.binary_symmetric(stay_p, 4),
                            MarkovChainModel.binary_symmetric(stay_q, 4))
        res = robustness_experiment(pair, [0])
        assert res.leakage_bits <= res.kl_bound_bits + 1e-9


def test_mismatched_support_gives_infinite_bound(rng):
    p = ExplicitJointModel([0.5, 0.25, 0.25, 0.0], n=2, alphabet=2)
    q = ExplicitJointModel([0.0, 0.5, 0.25, 0.25], n=2, alphabet=2)
    res = robustness_experiment(MismatchPair(p, q), [0])
    assert res.kl_bound_bits == float("inf")


def test_sequence_kl_exact_vs_mc(rng):
    p = random_hmm(rng, 5, 3, eps=0.2, theta=0.1)
    q = HmmModel(p.panel, 0.3, 0.15)
    exact = sequence_kl(p, q)
    est, err = sequence_kl_mc(p, q, 4000, rng)
    assert abs(est - exact) <= 4 * max(err, 1e-4)


def test_q_built_mechanism_private_under_q():
    from genomask import verify_privacy_exact

    q = MarkovChainModel.binary_symmetric(0.8, 4)
    audit = verify_privacy_exact(q, [0])
    assert audit.mutual_information_bits <= 1e-10
