mod common;

use common::{r, random_game, RandomGame};
use gameclaims::gamecore::{enumerate_reduced_strategies, play, Combined};
use gameclaims::valuation::{
    lower_values, price_interval, snell_envelope, superhedge_holder, upper_price, upper_values,
};
use gameclaims::{Coalition, GameSpec, GameState, JointAction, MartingaleMeasure, Rational, StrategyProfile};
use proptest::prelude::*;

const BUDGET: u128 = 1 << 12;

fn small_game(seed: u64) -> Option<RandomGame> {
    let g = random_game(seed, false);
    common::fits(&g, BUDGET).then_some(g)
}

fn pick_coalition(g: &RandomGame, pick: u32) -> Coalition {
    let all = Coalition::nonempty_subsets(g.game.players());
    all[pick as usize % all.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn snell_envelope_is_a_supermartingale_above_settlement(seed in 0u64..5_000, pick in 0u32..8, which in 0usize..64) {
        let Some(g) = small_game(seed) else { return Ok(()) };
        let c = pick_coalition(&g, pick);
        let m = g.game.players();
        let root = GameState::root();
        let sigmas = enumerate_reduced_strategies(c.complement(m), &g.game, &g.lattice, &root, BUDGET).unwrap();
        let sigma = &sigmas[which % sigmas.len()];
        let env = snell_envelope(c, sigma, &g.game, &g.lattice, &g.measure, &root).unwrap();
        let q = MartingaleMeasure::of(&g.lattice);
        for (state, value) in &env.values {
            let fixed: Option<Vec<usize>> = c
                .complement(m)
                .members()
                .map(|p| sigma.table(p).get(state).copied())
                .collect();
            // states the fixed strategy never reaches carry no constraint
            let Some(fixed) = fixed else { continue };
            for moves in g.game.coalition_moves(c) {
                let joint = JointAction::merge(m, c, &moves, &fixed);
                if g.game.settles(&g.lattice, state, &joint) {
                    let pay = g.game.discounted_payoff(&g.lattice, state, &joint).unwrap();
                    let total: Rational = c.members().map(|p| pay[p].clone()).sum();
                    prop_assert!(total <= *value);
                } else {
                    let up = &env.values[&state.child(&joint, true)];
                    let down = &env.values[&state.child(&joint, false)];
                    prop_assert!(q.expect(up, down) <= *value);
                }
            }
        }
    }

    #[test]
    fn lower_never_exceeds_upper(seed in 0u64..5_000, pick in 0u32..8) {
        let Some(g) = small_game(seed) else { return Ok(()) };
        let c = pick_coalition(&g, pick);
        let root = GameState::root();
        let lo = lower_values(c, &g.game, &g.lattice, &g.measure, &root).unwrap();
        let hi = upper_values(c, &g.game, &g.lattice, &g.measure, &root).unwrap();
        prop_assert_eq!(lo.values.len(), hi.values.len());
        for (state, v) in &lo.values {
            prop_assert!(*v <= hi.values[state]);
        }
    }

    #[test]
    fn reported_minimizer_attains_the_upper_price(seed in 0u64..5_000, pick in 0u32..8) {
        let Some(g) = small_game(seed) else { return Ok(()) };
        let c = pick_coalition(&g, pick);
        let m = g.game.players();
        let root = GameState::root();
        let interval = price_interval(c, &g.game, &g.lattice, &g.measure, &root).unwrap();
        let sigma = interval.minimizing_strategy(m);
        let taus = enumerate_reduced_strategies(c, &g.game, &g.lattice, &root, BUDGET).unwrap();
        let best = taus
            .iter()
            .map(|tau| {
                let profile = Combined { coalition: c, inside: tau, outside: &sigma };
                play(&profile, &g.game, &g.lattice, &g.measure, &root).unwrap().expected_coalition(c)
            })
            .max()
            .unwrap();
        prop_assert_eq!(&best, interval.upper_price());
    }

    #[test]
    fn holder_hedge_dominates(seed in 0u64..5_000, pick in 0u32..8, which in 0usize..64) {
        let Some(g) = small_game(seed) else { return Ok(()) };
        let c = pick_coalition(&g, pick);
        let m = g.game.players();
        let root = GameState::root();
        let taus = enumerate_reduced_strategies(c, &g.game, &g.lattice, &root, BUDGET).unwrap();
        let tau = &taus[which % taus.len()];
        let hedge = superhedge_holder(c, tau, &g.game, &g.lattice, &g.measure, &root).unwrap();
        for sigma in enumerate_reduced_strategies(c.complement(m), &g.game, &g.lattice, &root, BUDGET).unwrap() {
            for path in hedge.simulate(&sigma, &g.game, &g.lattice).unwrap() {
                prop_assert!(path.dominates());
            }
        }
    }

    #[test]
    fn prices_are_positively_homogeneous_and_translate(seed in 0u64..5_000, pick in 0u32..8, k in 1i64..5, shift in -3i64..4) {
        let Some(g) = small_game(seed) else { return Ok(()) };
        // unit accrual so a constant paid at any date is worth itself
        let lattice = common::lattice(g.lattice.steps());
        let q = MartingaleMeasure::of(&lattice);
        let c = pick_coalition(&g, pick);
        let base = g.game.clone();
        let labels = base.action_labels().to_vec();
        let scaled_base = base.clone();
        let scaled = GameSpec::new(labels, base.horizon())
            .unwrap()
            .with_termination(move |s| {
                let state = GameState::new(s.node.date, s.node.ups, s.history[..s.history.len() - 1].to_vec()).unwrap();
                base.settles(&common::lattice(2), &state, s.current())
            })
            .with_payoff(move |s| {
                let state = GameState::new(s.node.date, s.node.ups, s.history[..s.history.len() - 1].to_vec()).unwrap();
                scaled_base
                    .payoff(&common::lattice(2), &state, s.current())
                    .unwrap()
                    .into_iter()
                    .map(|v| v * r(k) + r(shift))
                    .collect()
            });
        let root = GameState::root();
        let before = upper_price(c, &g.game, &lattice, &q, &root).unwrap();
        let after = upper_price(c, &scaled, &lattice, &q, &root).unwrap();
        prop_assert_eq!(after, before * r(k) + r(shift * c.len() as i64));
    }
}

#[test]
fn constant_strategy_profile_plays_fixed_moves() {
    let g = common::stop_or_pick();
    let l = common::lattice(1);
    let q = MartingaleMeasure::of(&l);
    let stop = StrategyProfile::constant(&g, &l, &GameState::root(), &[0, 0]);
    let out = play(&stop, &g, &l, &q, &GameState::root()).unwrap();
    assert_eq!(out.expected_discounted(), vec![r(1), r(-1)]);
}
