mod common;

use common::{suite, RandomGame};
use gameclaims::equilibrium::{
    coalition_values, enumerate_profiles, is_optimal_equilibrium, partitions, profile_values, search_equilibria,
};
use gameclaims::valuation::{best_response, worst_response};
use gameclaims::{Coalition, GameState, Rational, StrategyProfile};

const BUDGET: u128 = 1 << 12;

fn coalition_sum(values: &[Rational], c: Coalition) -> Rational {
    c.members().map(|p| values[p].clone()).sum()
}

fn proper_coalitions(m: usize) -> Vec<Coalition> {
    Coalition::nonempty_subsets(m).into_iter().filter(|c| c.len() < m).collect()
}

/// The four equivalent conditions for a zero-sum game, in order.
fn conditions(g: &RandomGame, profile: &StrategyProfile) -> [bool; 4] {
    let root = GameState::root();
    let m = g.game.players();
    let values = profile_values(profile, &g.game, &g.lattice, &g.measure, &root).unwrap();
    let guarantees_each = (0..m).all(|k| {
        let me = Coalition::singleton(k);
        let worst = worst_response(me, me.complement(m), profile, &g.game, &g.lattice, &g.measure, &root).unwrap();
        values[k] <= *worst.start_value()
    });
    let no_coalition_gain = proper_coalitions(m).into_iter().all(|c| {
        let best = best_response(c, c, profile, &g.game, &g.lattice, &g.measure, &root).unwrap();
        coalition_sum(&values, c) >= *best.start_value()
    });
    let coalition_guarantees = proper_coalitions(m).into_iter().all(|c| {
        let worst = worst_response(c, c.complement(m), profile, &g.game, &g.lattice, &g.measure, &root).unwrap();
        coalition_sum(&values, c) <= *worst.start_value()
    });
    let optimal = is_optimal_equilibrium(profile, &g.game, &g.lattice, &g.measure, &root)
        .unwrap()
        .is_optimal();
    [guarantees_each, no_coalition_gain, coalition_guarantees, optimal]
}

#[test]
fn zero_sum_conditions_agree() {
    let root = GameState::root();
    let mut profiles = 0;
    let mut optimal = 0;
    for g in suite(20_001, 30, true, BUDGET) {
        for profile in enumerate_profiles(&g.game, &g.lattice, &root, BUDGET).unwrap() {
            let c = conditions(&g, &profile);
            assert!(c.iter().all(|&b| b == c[0]), "seed {}: conditions {:?}", g.seed, c);
            profiles += 1;
            optimal += c[3] as usize;
        }
    }
    assert!(profiles > 100);
    assert!(optimal > 0);
}

#[test]
fn guarantees_and_equilibrium_components() {
    let root = GameState::root();
    for g in suite(30_001, 30, false, BUDGET) {
        let m = g.game.players();
        let bounds: Vec<_> = (0..m)
            .map(|k| coalition_values(Coalition::singleton(k), &g.game, &g.lattice, &g.measure, &root).unwrap())
            .collect();
        for profile in enumerate_profiles(&g.game, &g.lattice, &root, BUDGET).unwrap() {
            let check = is_optimal_equilibrium(&profile, &g.game, &g.lattice, &g.measure, &root).unwrap();
            for k in 0..m {
                // what a player can guarantee with any strategy is at most the maximin
                assert!(check.guaranteed[k] <= bounds[k].maximin, "seed {}", g.seed);
            }
        }
        let search = search_equilibria(&g.game, &g.lattice, &g.measure, &root, BUDGET).unwrap();
        for found in &search.optimal {
            for k in 0..m {
                let me = Coalition::singleton(k);
                let others = me.complement(m);
                let worst = worst_response(me, others, &found.profile, &g.game, &g.lattice, &g.measure, &root).unwrap();
                assert_eq!(worst.start_value(), &bounds[k].maximin, "seed {}: not a maximin strategy", g.seed);
                let best = best_response(me, me, &found.profile, &g.game, &g.lattice, &g.measure, &root).unwrap();
                assert_eq!(best.start_value(), &bounds[k].minimax, "seed {}: not a minimax strategy", g.seed);
            }
        }
    }
}

#[test]
fn partition_counts_are_bell_numbers() {
    for (n, bell) in [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52)] {
        let c = Coalition::all(n);
        let parts = partitions(c);
        assert_eq!(parts.len(), bell);
        for p in &parts {
            let union = p.iter().fold(Coalition::empty(), |acc, b| acc.union(*b));
            assert_eq!(union, c);
            assert_eq!(p.iter().map(|b| b.len()).sum::<usize>(), n);
        }
    }
}
