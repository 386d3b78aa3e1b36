"""Tests for payment rules and utility accounting."""

import itertools
import random
from fractions import Fraction

import pytest

from helpers import monotone_tables, random_profile
from mechlab.core import (
    AdditiveValuation,
    AffineWeights,
    Allocation,
    SingleMindedValuation,
    TypeProfile,
    full_bundle,
    profile_of,
    unit_weights,
)
from mechlab.payments import (
    VcgMechanism,
    affine_based_payments,
    affine_utility_of,
    clarke_pivot,
    make_pivot,
    run_vcg_based,
    utility_of,
    vcg_based_payments,
    zero_pivot,
)
from mechlab.wd import (
    AllocationAlgorithm,
    AllocationRange,
    affine_optimal_algorithm,
    greedy_algorithm,
    in_range_algorithm,
    optimal_algorithm,
    single_winner_algorithm,
)


def single_item_profile(*values):
    return TypeProfile(tuple(SingleMindedValuation(1, 1, v) for v in values))


def second_highest_algorithm():
    """Toy rule from the worked example: everything to the runner-up bidder."""

    def fn(profile):
        everything = full_bundle(profile.num_items)
        order = sorted(
            range(profile.num_agents),
            key=lambda i: (-profile[i].value(everything), i),
        )
        winner = order[1] if len(order) > 1 else order[0]
        bundles = [0] * profile.num_agents
        bundles[winner] = everything
        return Allocation(tuple(bundles))

    return AllocationAlgorithm("second_highest", "heuristic", fn)


VICKREY_PROFILE = single_item_profile(2000, 1700, 1000)


def test_vickrey_payments():
    payments = vcg_based_payments(optimal_algorithm(), VICKREY_PROFILE, make_pivot("clarke_exact"))
    assert payments == (-1700, 0, 0)


def test_vickrey_outcome():
    outcome = run_vcg_based(
        optimal_algorithm(), VICKREY_PROFILE, make_pivot("clarke_exact"), VICKREY_PROFILE
    )
    assert outcome.allocation == Allocation((1, 0, 0))
    assert outcome.payments == (-1700, 0, 0)
    assert outcome.utilities == (300, 0, 0)


def test_zero_pivot_is_plain_externality_sum():
    alg = optimal_algorithm()
    payments = vcg_based_payments(alg, VICKREY_PROFILE, zero_pivot())
    alloc = alg(VICKREY_PROFILE)
    for i, p in enumerate(payments):
        expected = sum(
            VICKREY_PROFILE[j].value(alloc.bundles[j]) for j in range(3) if j != i
        )
        assert p == expected


def test_second_highest_with_algorithmic_clarke():
    alg = second_highest_algorithm()
    payments = vcg_based_payments(alg, VICKREY_PROFILE, make_pivot("clarke_algorithmic", alg))
    # Bob (the runner-up) wins and pays the third-highest value.
    assert payments[1] == -1000
    assert payments == (700, -1000, 0)


def test_run_vcg_based_zero_profile():
    profile = single_item_profile(0, 0)
    outcome = run_vcg_based(
        optimal_algorithm(), profile, make_pivot("clarke_exact"), profile
    )
    assert outcome.payments == (0, 0)
    assert outcome.utilities == (0, 0)


def test_utility_of_vickrey_winner_and_losers():
    alg = optimal_algorithm()
    pivot = make_pivot("clarke_exact")
    assert utility_of(VICKREY_PROFILE[0], 0, VICKREY_PROFILE, alg, pivot) == 300
    assert utility_of(VICKREY_PROFILE[1], 1, VICKREY_PROFILE, alg, pivot) == 0
    assert utility_of(VICKREY_PROFILE[2], 2, VICKREY_PROFILE, alg, pivot) == 0


def test_utility_identity_on_random_instances():
    rng = random.Random(99)
    algs = [optimal_algorithm(), single_winner_algorithm(), greedy_algorithm()]
    for _ in range(150):
        declared = random_profile(rng, rng.randint(1, 3), rng.randint(1, 3))
        true_types = random_profile(rng, declared.num_agents, declared.num_items)
        alg = rng.choice(algs)
        pivot = rng.choice([zero_pivot(), clarke_pivot(alg), make_pivot("clarke_exact")])
        outcome = run_vcg_based(alg, declared, pivot, true_types)
        for i in range(declared.num_agents):
            assert utility_of(true_types[i], i, declared, alg, pivot) == outcome.utilities[i]


def test_pivot_never_reads_own_declaration():
    rng = random.Random(4)
    for pivot_name in ("zero", "clarke_exact"):
        pivot = make_pivot(pivot_name)
        for _ in range(50):
            declared = random_profile(rng, 3, 2)
            perturbed = declared.replace(1, random_profile(rng, 1, 2)[0])
            assert pivot(1, declared) == pivot(1, perturbed)


def test_affine_unit_weights_reproduce_vcg_exactly():
    tables = monotone_tables(2, (0, 1, 2))
    alg = optimal_algorithm()
    pivot = make_pivot("clarke_exact")
    for v0, v1 in itertools.product(tables[:10], repeat=2):
        profile = profile_of(v0, v1)
        assert affine_based_payments(alg, profile, unit_weights(2), pivot) == \
            vcg_based_payments(alg, profile, pivot)


def test_affine_weighted_single_item():
    weights = AffineWeights((Fraction(2), Fraction(1)))
    profile = profile_of(AdditiveValuation((3,)), AdditiveValuation((4,)))
    alg = affine_optimal_algorithm(weights)
    # weighted welfare 2*3 = 6 for agent 0 beats 1*4 = 4 for agent 1
    assert alg(profile) == Allocation((1, 0))
    payments = affine_based_payments(alg, profile, weights, zero_pivot())
    assert payments == (0, 6)


def test_affine_rejects_inexact_division():
    weights = AffineWeights((Fraction(2), Fraction(1)))
    profile = profile_of(AdditiveValuation((1,)), AdditiveValuation((5,)))
    alg = affine_optimal_algorithm(weights)
    assert alg(profile) == Allocation((0, 1))
    with pytest.raises(ValueError):
        affine_based_payments(alg, profile, weights, zero_pivot())


def test_affine_utility_identity_with_divisible_values():
    rng = random.Random(17)
    weight_choices = [Fraction(1), Fraction(2), Fraction(3)]
    for _ in range(100):
        n, m = rng.randint(2, 3), rng.randint(1, 2)
        # All values multiples of 6 keep every division exact.
        declared = TypeProfile(tuple(
            AdditiveValuation(tuple(6 * rng.randint(0, 5) for _ in range(m)))
            for _ in range(n)
        ))
        weights = AffineWeights(tuple(rng.choice(weight_choices) for _ in range(n)))
        alg = affine_optimal_algorithm(weights)
        payments = affine_based_payments(alg, declared, weights, zero_pivot())
        alloc = alg(declared)
        for i in range(n):
            true_v = AdditiveValuation(tuple(6 * rng.randint(0, 5) for _ in range(m)))
            direct = true_v.value(alloc.bundles[i]) + payments[i]
            assert affine_utility_of(true_v, i, declared, alg, weights, zero_pivot()) == direct


def assert_grid_truthful(mech, grid_valuations):
    n = 2
    for v0, v1 in itertools.product(grid_valuations, repeat=n):
        truth = profile_of(v0, v1)
        truthful = mech.run(truth, truth)
        for agent in range(n):
            for deviation in grid_valuations:
                outcome = mech.run(truth.replace(agent, deviation), truth)
                assert outcome.utilities[agent] <= truthful.utilities[agent], (
                    f"agent {agent} gains by deviating at {truth}"
                )


def test_optimal_clarke_is_truthful_on_small_grid():
    grid = monotone_tables(1, (0, 1, 2, 3))
    mech = VcgMechanism(optimal_algorithm(), make_pivot("clarke_exact"))
    assert_grid_truthful(mech, grid)


def test_maximal_in_range_is_truthful_on_small_grid():
    grid = monotone_tables(1, (0, 1, 2, 3))
    rng = AllocationRange((Allocation((0, 0)), Allocation((1, 0)), Allocation((0, 1))))
    alg = in_range_algorithm(rng)
    mech = VcgMechanism(alg, clarke_pivot(alg))
    assert_grid_truthful(mech, grid)


def test_second_highest_is_not_truthful():
    alg = second_highest_algorithm()
    mech = VcgMechanism(alg, make_pivot("clarke_algorithmic", alg))
    truth = VICKREY_PROFILE
    truthful_u = mech.run(truth, truth).utilities[0]
    lowered = truth.replace(0, SingleMindedValuation(1, 1, 1500))
    assert mech.run(lowered, truth).utilities[0] > truthful_u


def test_make_pivot_validation():
    with pytest.raises(ValueError):
        make_pivot("clarke_algorithmic")
    with pytest.raises(ValueError):
        make_pivot("bogus")
