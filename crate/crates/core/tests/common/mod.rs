#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use gameclaims::equilibrium::enumerate_profiles;
use gameclaims::gamecore::{enumerate_reduced_strategies, Situation};
use gameclaims::tranches::{LegPayoff, TrancheContract, TrancheLeg};
use gameclaims::{ratio, Coalition, GameSpec, GameState, MarketLattice, MartingaleMeasure, Rational};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn r(v: i64) -> Rational {
    ratio(v, 1)
}

pub fn rv(v: &[i64]) -> Vec<Rational> {
    v.iter().map(|&x| r(x)).collect()
}

/// S0 = 4, u = 2, d = 1/2, R = 1: q = 1/3.
pub fn lattice(steps: usize) -> MarketLattice<Rational> {
    MarketLattice::build(r(4), r(2), ratio(1, 2), r(1), steps).unwrap()
}

pub fn matrix_game(table: [[(i64, i64); 2]; 2]) -> GameSpec<Rational> {
    GameSpec::with_action_counts(&[2, 2], 0).unwrap().with_payoff(move |s| {
        let a = s.current();
        let (x, y) = table[a.player(0)][a.player(1)];
        vec![r(x), r(y)]
    })
}

/// Action 0 cooperates, action 1 defects.
pub fn dilemma() -> GameSpec<Rational> {
    matrix_game([[(1, 1), (-1, 2)], [(2, -1), (0, 0)]])
}

pub fn constant_game(values: &[i64]) -> GameSpec<Rational> {
    let v = rv(values);
    GameSpec::with_action_counts(&vec![2; values.len()], 1).unwrap().with_payoff(move |_| v.clone())
}

/// Player 1 may stop at date 0 for 1 or wait; at date 1 player 2 picks
/// which of the call or the put player 1 receives. Zero-sum.
pub fn stop_or_pick() -> GameSpec<Rational> {
    GameSpec::<Rational>::with_action_counts(&[2, 2], 1)
        .unwrap()
        .with_termination(|s| s.current().player(0) == 0)
        .with_payoff(|s| {
            let v = if s.date() == 0 {
                r(1)
            } else {
                let price = s.price.clone();
                if s.current().player(1) == 0 {
                    Rational::max(price - r(4), r(0))
                } else {
                    Rational::max(r(4) - price, r(0))
                }
            };
            vec![v.clone(), -v]
        })
}

/// Three players; player 3 pays what 1 and 2 win. Zero-sum, with a saddle
/// point where everyone plays action 1 and all values are 0.
pub fn three_way() -> GameSpec<Rational> {
    GameSpec::with_action_counts(&[2, 2, 2], 0).unwrap().with_payoff(|s| {
        let a = s.current();
        let (a0, a1, a2) = (a.player(0) as i64, a.player(1) as i64, a.player(2) as i64);
        let x = 2 * a0 - a2 - a0 * a1;
        let y = a1 - a0 * a2;
        vec![r(x), r(y), r(-x - y)]
    })
}

fn mix(parts: impl Hash) -> u64 {
    let mut h = DefaultHasher::new();
    parts.hash(&mut h);
    h.finish()
}

fn key(s: &Situation<Rational>) -> (usize, usize, Vec<Vec<usize>>) {
    (s.node.date, s.node.ups, s.history.iter().map(|a| a.0.clone()).collect())
}

#[derive(Debug, Clone)]
pub struct RandomGame {
    pub seed: u64,
    pub game: GameSpec<Rational>,
    pub lattice: MarketLattice<Rational>,
    pub measure: MartingaleMeasure<Rational>,
}

/// A game whose termination and payoffs are pseudo-random functions of the
/// node and the action history. Payoffs are integers in [-5, 5].
pub fn random_game(seed: u64, zero_sum: bool) -> RandomGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let players = rng.gen_range(1..=3usize);
    let counts: Vec<usize> = (0..players).map(|_| rng.gen_range(1..=2)).collect();
    let horizon = rng.gen_range(0..=1usize);
    let steps = rng.gen_range(horizon.max(1)..=2);
    let settle_one_in = rng.gen_range(2..=4u64);
    let lattice = match rng.gen_range(0..3) {
        0 => lattice(steps),
        1 => MarketLattice::build(r(8), ratio(3, 2), ratio(2, 3), ratio(11, 10), steps).unwrap(),
        _ => MarketLattice::build(r(10), r(2), ratio(1, 2), ratio(5, 4), steps).unwrap(),
    };
    let game = GameSpec::with_action_counts(&counts, horizon)
        .unwrap()
        .with_termination(move |s| mix((seed, "stop", key(s))).is_multiple_of(settle_one_in))
        .with_payoff(move |s| {
            let k = key(s);
            let mut v: Vec<Rational> = (0..players).map(|p| r((mix((seed, p, &k)) % 11) as i64 - 5)).collect();
            if zero_sum {
                let rest: Rational = v[..players - 1].iter().cloned().sum();
                v[players - 1] = -rest;
            }
            v
        });
    let measure = MartingaleMeasure::of(&lattice);
    RandomGame {
        seed,
        game,
        lattice,
        measure,
    }
}

/// Whether the coalition-vs-counter pairs of every coalition and the
/// profiles of the whole game fit the budget.
pub fn fits(g: &RandomGame, budget: u128) -> bool {
    let root = GameState::root();
    let m = g.game.players();
    for c in Coalition::nonempty_subsets(m) {
        let Ok(own) = enumerate_reduced_strategies(c, &g.game, &g.lattice, &root, budget) else {
            return false;
        };
        let Ok(other) = enumerate_reduced_strategies(c.complement(m), &g.game, &g.lattice, &root, budget) else {
            return false;
        };
        if own.len() as u128 * other.len() as u128 > budget {
            return false;
        }
    }
    enumerate_profiles(&g.game, &g.lattice, &root, budget).is_ok()
}

/// `count` games from consecutive seeds, skipping those over budget.
pub fn suite(first_seed: u64, count: usize, zero_sum: bool, budget: u128) -> Vec<RandomGame> {
    let mut out = Vec::with_capacity(count);
    let mut seed = first_seed;
    while out.len() < count {
        let g = random_game(seed, zero_sum);
        if fits(&g, budget) {
            out.push(g);
        }
        seed += 1;
    }
    out
}

/// Two tranches paying a call and a put struck at 4, puttable at dates 1
/// and 2 on the two-step lattice.
pub fn two_date_contract(puts_at_1: [[i64; 2]; 2], puts_at_2: [[i64; 2]; 3]) -> TrancheContract<Rational> {
    TrancheContract::new(
        vec![
            TrancheLeg::european(LegPayoff::Call(r(4))),
            TrancheLeg::european(LegPayoff::Put(r(4))),
        ],
        vec![1, 2],
        2,
        vec![
            puts_at_1.iter().map(|row| rv(row)).collect(),
            puts_at_2.iter().map(|row| rv(row)).collect(),
        ],
    )
    .unwrap()
}

pub fn reference_contract() -> TrancheContract<Rational> {
    two_date_contract([[0, 1], [2, 1]], [[0, 2], [-1, 0], [10, 0]])
}
