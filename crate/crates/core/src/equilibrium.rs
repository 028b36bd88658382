//! Nash and optimal equilibria, maximin/minimax values, coalition
//! additivity and pricing by equilibrium.

use crate::error::{PricingError, Result};
use crate::gamecore::{enumerate_reduced_strategies, play, Coalition, GameSpec, GameState, StrategyProfile};
use crate::lattice::{MarketLattice, MartingaleMeasure};
use crate::scalar::Scalar;
use crate::valuation::{best_response, lower_values, planner_values, price_interval, upper_values, worst_response};

/// A profitable unilateral deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation<S> {
    pub player: usize,
    pub current: S,
    pub improved: S,
    pub strategy: StrategyProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashCheck<S> {
    pub values: Vec<S>,
    pub witness: Option<Deviation<S>>,
}

impl<S> NashCheck<S> {
    pub fn is_nash(&self) -> bool {
        self.witness.is_none()
    }
}

/// Expected discounted payoff vector of a profile played from `at`.
pub fn profile_values<S: Scalar>(
    profile: &StrategyProfile,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<Vec<S>> {
    Ok(play(profile, game, lattice, measure, at)?.expected_discounted())
}

/// Checks every player's best response against the rest of `profile`.
pub fn is_nash<S: Scalar>(
    profile: &StrategyProfile,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<NashCheck<S>> {
    let values = profile_values(profile, game, lattice, measure, at)?;
    for k in 0..game.players() {
        let me = Coalition::singleton(k);
        let best = best_response(me, me, profile, game, lattice, measure, at)?;
        let improved = best.start_value().clone();
        if !improved.approx_le(&values[k]) {
            return Ok(NashCheck {
                witness: Some(Deviation {
                    player: k,
                    current: values[k].clone(),
                    improved,
                    strategy: best.strategy_for(game.players(), me),
                }),
                values,
            });
        }
    }
    Ok(NashCheck { values, witness: None })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCheck<S> {
    pub nash: NashCheck<S>,
    /// Per player: the least payoff the others can force while the player
    /// keeps its strategy from the profile.
    pub guaranteed: Vec<S>,
}

impl<S: Scalar> OptimalityCheck<S> {
    pub fn is_optimal(&self) -> bool {
        self.nash.is_nash()
            && self
                .guaranteed
                .iter()
                .zip(&self.nash.values)
                .all(|(g, v)| v.approx_le(g))
    }
}

/// Nash check plus, for each player, the guarantee that no joint move of the
/// others pushes the player below the profile payoff.
pub fn is_optimal_equilibrium<S: Scalar>(
    profile: &StrategyProfile,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<OptimalityCheck<S>> {
    let nash = is_nash(profile, game, lattice, measure, at)?;
    let mut guaranteed = Vec::with_capacity(game.players());
    for k in 0..game.players() {
        let me = Coalition::singleton(k);
        let others = me.complement(game.players());
        let worst = worst_response(me, others, profile, game, lattice, measure, at)?;
        guaranteed.push(worst.start_value().clone());
    }
    Ok(OptimalityCheck { nash, guaranteed })
}

/// Maximin and minimax values of a coalition with attaining strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionValues<S> {
    pub coalition: Coalition,
    pub maximin: S,
    pub minimax: S,
    /// Coalition strategy guaranteeing `maximin`.
    pub maximin_strategy: StrategyProfile,
    /// Counter-coalition strategy holding the coalition to `minimax`.
    pub minimax_strategy: StrategyProfile,
}

impl<S: Scalar> CoalitionValues<S> {
    pub fn value(&self) -> Option<&S> {
        self.maximin.approx_eq(&self.minimax).then_some(&self.maximin)
    }
}

pub fn coalition_values<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<CoalitionValues<S>> {
    let players = game.players();
    let lower = lower_values(coalition, game, lattice, measure, at)?;
    let upper = upper_values(coalition, game, lattice, measure, at)?;
    Ok(CoalitionValues {
        coalition,
        maximin: lower.start_value().clone(),
        minimax: upper.start_value().clone(),
        maximin_strategy: lower.strategy_for(players, coalition),
        minimax_strategy: upper.strategy_for(players, coalition.complement(players)),
    })
}

pub fn maximin<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<S> {
    Ok(coalition_values(coalition, game, lattice, measure, at)?.maximin)
}

pub fn minimax<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<S> {
    Ok(coalition_values(coalition, game, lattice, measure, at)?.minimax)
}

/// Value of the game for `player`, when maximin and minimax agree.
pub fn game_value<S: Scalar>(
    player: usize,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<Option<S>> {
    let values = coalition_values(Coalition::singleton(player), game, lattice, measure, at)?;
    Ok(values.value().cloned())
}

/// `true` if the profile's total payoff equals the best total achievable by
/// any profile.
pub fn planner_condition<S: Scalar>(
    profile_total: &S,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<bool> {
    let best = planner_values(game.everyone(), game, lattice, measure, at)?;
    Ok(best.start_value().approx_eq(profile_total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionCheck<S> {
    pub coalition: Coalition,
    pub member_sum: S,
    pub lower: S,
    pub upper: S,
}

impl<S: Scalar> CoalitionCheck<S> {
    pub fn is_additive(&self) -> bool {
        self.lower.approx_eq(&self.member_sum) && self.upper.approx_eq(&self.member_sum)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdditivityReport<S> {
    pub values: Vec<S>,
    pub zero_sum: bool,
    pub planner_condition: bool,
    pub coalitions: Vec<CoalitionCheck<S>>,
}

impl<S: Scalar> AdditivityReport<S> {
    pub fn hypothesis_holds(&self) -> bool {
        self.zero_sum || self.planner_condition
    }

    pub fn is_additive(&self) -> bool {
        self.coalitions.iter().all(CoalitionCheck::is_additive)
    }

    pub fn violations(&self) -> Vec<Coalition> {
        self.coalitions
            .iter()
            .filter(|c| !c.is_additive())
            .map(|c| c.coalition)
            .collect()
    }
}

/// Compares, for every non-empty coalition, its price interval with the sum
/// of the members' equilibrium values.
pub fn coalition_additivity<S: Scalar>(
    equilibrium: &StrategyProfile,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<AdditivityReport<S>> {
    let values = profile_values(equilibrium, game, lattice, measure, at)?;
    let total: S = values.iter().cloned().sum();
    let zero_sum = game.is_zero_sum(lattice, at)?;
    let planner = planner_condition(&total, game, lattice, measure, at)?;
    let mut coalitions = Vec::new();
    for coalition in Coalition::nonempty_subsets(game.players()) {
        let interval = price_interval(coalition, game, lattice, measure, at)?;
        coalitions.push(CoalitionCheck {
            coalition,
            member_sum: coalition.members().map(|p| values[p].clone()).sum(),
            lower: interval.lower_price().clone(),
            upper: interval.upper_price().clone(),
        });
    }
    Ok(AdditivityReport {
        values,
        zero_sum,
        planner_condition: planner,
        coalitions,
    })
}

/// A profile found by the exhaustive search with its values.
#[derive(Debug, Clone, PartialEq)]
pub struct FoundProfile<S> {
    pub profile: StrategyProfile,
    pub values: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSearch<S> {
    pub searched: usize,
    pub nash: Vec<FoundProfile<S>>,
    pub optimal: Vec<FoundProfile<S>>,
}

/// Every pure profile built from per-player strategies that only cover
/// states consistent with the player's own earlier moves.
pub fn enumerate_profiles<S: Scalar>(
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    at: &GameState,
    budget: u128,
) -> Result<Vec<StrategyProfile>> {
    let mut per_player = Vec::with_capacity(game.players());
    let mut required: u128 = 1;
    for p in 0..game.players() {
        let strategies = enumerate_reduced_strategies(Coalition::singleton(p), game, lattice, at, budget)?;
        required = required.saturating_mul(strategies.len() as u128);
        if required > budget {
            return Err(PricingError::BudgetExceeded { required, budget });
        }
        per_player.push(strategies);
    }
    let mut profiles = vec![StrategyProfile::new(game.players())];
    for (p, strategies) in per_player.iter().enumerate() {
        let me = Coalition::singleton(p);
        profiles = profiles
            .iter()
            .flat_map(|base| strategies.iter().map(move |s| StrategyProfile::combine(me, s, base)))
            .collect();
    }
    Ok(profiles)
}

/// Exhaustive search for Nash and optimal equilibria.
pub fn search_equilibria<S: Scalar>(
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
    budget: u128,
) -> Result<EquilibriumSearch<S>> {
    let profiles = enumerate_profiles(game, lattice, at, budget)?;
    let mut search = EquilibriumSearch {
        searched: profiles.len(),
        nash: Vec::new(),
        optimal: Vec::new(),
    };
    for profile in profiles {
        if !is_nash(&profile, game, lattice, measure, at)?.is_nash() {
            continue;
        }
        let check = is_optimal_equilibrium(&profile, game, lattice, measure, at)?;
        let optimal = check.is_optimal();
        let found = FoundProfile {
            values: check.nash.values,
            profile,
        };
        if optimal {
            search.optimal.push(found.clone());
        }
        search.nash.push(found);
    }
    Ok(search)
}

/// First optimal equilibrium in enumeration order.
pub fn find_optimal_equilibrium<S: Scalar>(
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
    budget: u128,
) -> Result<FoundProfile<S>> {
    let profiles = enumerate_profiles(game, lattice, at, budget)?;
    let searched = profiles.len();
    for profile in profiles {
        if !is_nash(&profile, game, lattice, measure, at)?.is_nash() {
            continue;
        }
        let check = is_optimal_equilibrium(&profile, game, lattice, measure, at)?;
        if check.is_optimal() {
            return Ok(FoundProfile {
                values: check.nash.values,
                profile,
            });
        }
    }
    Err(PricingError::NoEquilibriumFound { searched })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionPrice<S> {
    pub coalition: Coalition,
    pub lower: S,
    pub upper: S,
    pub member_sum: S,
    /// Unique price when the interval collapses onto the member sum.
    pub price: Option<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPricing<S> {
    pub equilibrium: FoundProfile<S>,
    pub planner_condition: bool,
    pub zero_sum: bool,
    pub coalitions: Vec<CoalitionPrice<S>>,
}

impl<S: Scalar> EquilibriumPricing<S> {
    pub fn tranche_prices(&self) -> &[S] {
        &self.equilibrium.values
    }

    pub fn is_additive(&self) -> bool {
        self.coalitions.iter().all(|c| c.price.is_some())
    }
}

/// Prices each tranche by an optimal equilibrium and each coalition by the
/// member sum where that is the unique arbitrage price, otherwise by its
/// interval.
pub fn price_by_equilibrium<S: Scalar>(
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
    budget: u128,
) -> Result<EquilibriumPricing<S>> {
    let equilibrium = find_optimal_equilibrium(game, lattice, measure, at, budget)?;
    let report = coalition_additivity(&equilibrium.profile, game, lattice, measure, at)?;
    let coalitions = report
        .coalitions
        .iter()
        .map(|c| CoalitionPrice {
            coalition: c.coalition,
            lower: c.lower.clone(),
            upper: c.upper.clone(),
            member_sum: c.member_sum.clone(),
            price: c.is_additive().then(|| c.member_sum.clone()),
        })
        .collect();
    Ok(EquilibriumPricing {
        equilibrium,
        planner_condition: report.planner_condition,
        zero_sum: report.zero_sum,
        coalitions,
    })
}

/// Summary of one profile: values, equilibrium flags and coalition checks.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport<S> {
    pub profile: StrategyProfile,
    pub values: Vec<S>,
    pub is_nash: bool,
    pub is_optimal: bool,
    pub additivity: AdditivityReport<S>,
}

pub fn equilibrium_report<S: Scalar>(
    profile: &StrategyProfile,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<EquilibriumReport<S>> {
    let check = is_optimal_equilibrium(profile, game, lattice, measure, at)?;
    let additivity = coalition_additivity(profile, game, lattice, measure, at)?;
    Ok(EquilibriumReport {
        profile: profile.clone(),
        is_nash: check.nash.is_nash(),
        is_optimal: check.is_optimal(),
        values: check.nash.values,
        additivity,
    })
}

/// Every partition of `coalition` into non-empty blocks.
pub fn partitions(coalition: Coalition) -> Vec<Vec<Coalition>> {
    let members: Vec<usize> = coalition.members().collect();
    let Some((&first, rest)) = members.split_first() else {
        return vec![Vec::new()];
    };
    let rest = Coalition::from_members(rest);
    let mut out = Vec::new();
    // the block holding `first` is {first} ∪ sub for every sub ⊆ rest
    let mut subs = vec![Coalition::empty()];
    subs.extend(rest.nonempty_parts());
    for sub in subs {
        let block = sub.union(Coalition::singleton(first));
        let remaining = Coalition::from_bits(rest.bits() & !sub.bits());
        for mut tail in partitions(remaining) {
            tail.insert(0, block);
            out.push(tail);
        }
    }
    out
}

/// A partition whose lower prices add up to more than the whole's.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperadditivityViolation<S> {
    pub coalition: Coalition,
    pub partition: Vec<Coalition>,
    pub parts_sum: S,
    pub whole: S,
}

/// Checks `Σ lower(parts) ≤ lower(whole)` for every partition of every
/// coalition.
pub fn check_superadditivity<S: Scalar>(
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<Option<SuperadditivityViolation<S>>> {
    let mut lower = std::collections::BTreeMap::new();
    for c in Coalition::nonempty_subsets(game.players()) {
        lower.insert(c, lower_values(c, game, lattice, measure, at)?.start_value().clone());
    }
    for (&c, whole) in &lower {
        for partition in partitions(c) {
            let parts_sum: S = partition.iter().map(|p| lower[p].clone()).sum();
            if !parts_sum.approx_le(whole) {
                return Ok(Some(SuperadditivityViolation {
                    coalition: c,
                    partition,
                    parts_sum,
                    whole: whole.clone(),
                }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    fn lattice() -> MarketLattice<Rational> {
        MarketLattice::build(ratio(4, 1), ratio(2, 1), ratio(1, 2), ratio(1, 1), 1).unwrap()
    }

    fn matrix_game(table: [[(i64, i64); 2]; 2]) -> GameSpec<Rational> {
        GameSpec::with_action_counts(&[2, 2], 0).unwrap().with_payoff(move |s| {
            let a = s.current();
            let (x, y) = table[a.player(0)][a.player(1)];
            vec![ratio(x, 1), ratio(y, 1)]
        })
    }

    fn dilemma() -> GameSpec<Rational> {
        matrix_game([[(1, 1), (-1, 2)], [(2, -1), (0, 0)]])
    }

    fn constant_profile(g: &GameSpec<Rational>, a: &[usize]) -> StrategyProfile {
        StrategyProfile::constant(g, &lattice(), &GameState::root(), a)
    }

    #[test]
    fn dilemma_equilibria() {
        let (g, l) = (dilemma(), lattice());
        let q = MartingaleMeasure::of(&l);
        let root = GameState::root();
        let defect = constant_profile(&g, &[1, 1]);
        let check = is_optimal_equilibrium(&defect, &g, &l, &q, &root).unwrap();
        assert!(check.is_optimal());
        assert_eq!(check.nash.values, vec![ratio(0, 1), ratio(0, 1)]);
        let cooperate = constant_profile(&g, &[0, 0]);
        let nash = is_nash(&cooperate, &g, &l, &q, &root).unwrap();
        let w = nash.witness.unwrap();
        assert_eq!((w.current, w.improved), (ratio(1, 1), ratio(2, 1)));
        for k in 0..2 {
            assert_eq!(game_value(k, &g, &l, &q, &root).unwrap(), Some(ratio(0, 1)));
        }
        let report = coalition_additivity(&defect, &g, &l, &q, &root).unwrap();
        assert!(!report.zero_sum && !report.planner_condition);
        assert_eq!(report.violations(), vec![g.everyone()]);
        let pricing = price_by_equilibrium(&g, &l, &q, &root, 1000).unwrap();
        assert_eq!(pricing.tranche_prices(), &[ratio(0, 1), ratio(0, 1)]);
        let whole = pricing.coalitions.last().unwrap();
        assert_eq!((whole.lower.clone(), whole.upper.clone(), whole.price.clone()), (ratio(2, 1), ratio(2, 1), None));
    }

    #[test]
    fn pennies_has_a_gap() {
        let g = matrix_game([[(1, -1), (-1, 1)], [(-1, 1), (1, -1)]]);
        let l = lattice();
        let q = MartingaleMeasure::of(&l);
        let root = GameState::root();
        let v = coalition_values(Coalition::singleton(0), &g, &l, &q, &root).unwrap();
        assert_eq!((v.maximin.clone(), v.minimax.clone()), (ratio(-1, 1), ratio(1, 1)));
        assert_eq!(game_value(0, &g, &l, &q, &root).unwrap(), None);
        assert!(matches!(
            price_by_equilibrium(&g, &l, &q, &root, 1000),
            Err(PricingError::NoEquilibriumFound { searched: 4 })
        ));
    }

    #[test]
    fn nash_but_not_optimal() {
        // (0,0) is Nash; player 2 can push player 1 down to -3 by playing 1
        let g = matrix_game([[(1, 1), (-3, 0)], [(0, 0), (0, 0)]]);
        let l = lattice();
        let q = MartingaleMeasure::of(&l);
        let p = constant_profile(&g, &[0, 0]);
        let check = is_optimal_equilibrium(&p, &g, &l, &q, &GameState::root()).unwrap();
        assert!(check.nash.is_nash());
        assert!(!check.is_optimal());
    }

    #[test]
    fn zero_sum_game_is_additive() {
        let g = matrix_game([[(2, -2), (1, -1)], [(3, -3), (0, 0)]]);
        let l = lattice();
        let q = MartingaleMeasure::of(&l);
        let root = GameState::root();
        let eq = find_optimal_equilibrium(&g, &l, &q, &root, 1000).unwrap();
        let report = coalition_additivity(&eq.profile, &g, &l, &q, &root).unwrap();
        assert!(report.zero_sum);
        assert!(report.is_additive());
        let pricing = price_by_equilibrium(&g, &l, &q, &root, 1000).unwrap();
        assert!(pricing.is_additive());
    }

    #[test]
    fn constant_game_every_profile_is_optimal() {
        let g = matrix_game([[(4, 1); 2]; 2]);
        let l = lattice();
        let q = MartingaleMeasure::of(&l);
        let search = search_equilibria(&g, &l, &q, &GameState::root(), 1000).unwrap();
        assert_eq!(search.optimal.len(), 4);
        let pricing = price_by_equilibrium(&g, &l, &q, &GameState::root(), 1000).unwrap();
        assert_eq!(pricing.tranche_prices(), &[ratio(4, 1), ratio(1, 1)]);
        assert!(pricing.is_additive());
    }

    #[test]
    fn partition_counts_are_bell_numbers() {
        let counts: Vec<usize> = (1..=4).map(|m| partitions(Coalition::all(m)).len()).collect();
        assert_eq!(counts, vec![1, 2, 5, 15]);
    }

    #[test]
    fn dilemma_lower_prices_are_superadditive() {
        let (g, l) = (dilemma(), lattice());
        let q = MartingaleMeasure::of(&l);
        assert_eq!(check_superadditivity(&g, &l, &q, &GameState::root()).unwrap(), None);
    }
}
