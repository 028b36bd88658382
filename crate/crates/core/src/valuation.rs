//! Snell envelopes, coalition price bounds, super-hedging and the
//! enumeration oracle.
//!
//! All values are in discounted (time-0) units. Prices are quoted at states
//! observed before the date-`t` actions, so the actions at the quoting date
//! are the first move of the continuation.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{PricingError, Result};
use crate::gamecore::{
    enumerate_reduced_strategies, play, Coalition, Combined, GameSpec, GameState, JointAction, Strategy,
    StrategyProfile,
};
use crate::lattice::{MarketLattice, MartingaleMeasure};
use crate::scalar::Scalar;

/// Per-state values for one coalition objective, with the joint action that
/// attains each value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<S> {
    pub coalition: Coalition,
    pub start: GameState,
    pub values: BTreeMap<GameState, S>,
    pub choices: BTreeMap<GameState, JointAction>,
}

impl<S: Scalar> ValueTable<S> {
    pub fn value(&self, state: &GameState) -> Option<&S> {
        self.values.get(state)
    }

    pub fn start_value(&self) -> &S {
        &self.values[&self.start]
    }

    /// Attaining choices as a strategy for the members of `part`.
    pub fn strategy_for(&self, players: usize, part: Coalition) -> StrategyProfile {
        let mut profile = StrategyProfile::new(players);
        for (state, joint) in &self.choices {
            profile.set_moves(part, state, &joint.restrict(part));
        }
        profile
    }
}

/// Who moves how in one backward induction.
struct Induction<'a, S: Scalar> {
    game: &'a GameSpec<S>,
    lattice: &'a MarketLattice<S>,
    measure: &'a MartingaleMeasure<S>,
    objective: Coalition,
    negate: bool,
    maximizer: Coalition,
    minimizer: Coalition,
    /// Moves of every player outside `maximizer` and `minimizer`.
    fixed: Option<&'a dyn Strategy>,
    /// `true`: outer min over the minimizer, inner max (upper value).
    min_outer: bool,
    memo: HashMap<GameState, (S, JointAction)>,
}

impl<'a, S: Scalar> Induction<'a, S> {
    fn objective_of(&self, payoff: &[S]) -> S {
        let total: S = self.objective.members().map(|p| payoff[p].clone()).sum();
        if self.negate {
            -total
        } else {
            total
        }
    }

    fn stage(&mut self, state: &GameState, joint: &JointAction) -> Result<S> {
        if self.game.settles(self.lattice, state, joint) {
            let payoff = self.game.discounted_payoff(self.lattice, state, joint)?;
            return Ok(self.objective_of(&payoff));
        }
        let down = self.value(&state.child(joint, false))?;
        let up = self.value(&state.child(joint, true))?;
        Ok(self.measure.expect(&up, &down))
    }

    fn assemble(&self, state: &GameState, max_moves: &[usize], min_moves: &[usize]) -> Result<JointAction> {
        let players = self.game.players();
        let mut joint = vec![0; players];
        let (mut i, mut j) = (0, 0);
        for (p, slot) in joint.iter_mut().enumerate() {
            if self.maximizer.contains(p) {
                *slot = max_moves[i];
                i += 1;
            } else if self.minimizer.contains(p) {
                *slot = min_moves[j];
                j += 1;
            } else {
                let action = self.fixed.and_then(|f| f.action(p, state)).ok_or_else(|| {
                    PricingError::IncompleteStrategy {
                        player: p + 1,
                        state: state.to_string(),
                    }
                })?;
                if action >= self.game.action_count(p) {
                    return Err(PricingError::InvalidGame(format!(
                        "fixed strategy picks action {action} for player {} at {state}",
                        p + 1
                    )));
                }
                *slot = action;
            }
        }
        Ok(JointAction(joint))
    }

    fn value(&mut self, state: &GameState) -> Result<S> {
        if let Some((v, _)) = self.memo.get(state) {
            return Ok(v.clone());
        }
        let max_moves = self.game.coalition_moves(self.maximizer);
        let min_moves = self.game.coalition_moves(self.minimizer);
        // table[a][b]
        let mut table = Vec::with_capacity(max_moves.len());
        let mut joints = Vec::with_capacity(max_moves.len());
        for a in &max_moves {
            let mut row = Vec::with_capacity(min_moves.len());
            let mut jrow = Vec::with_capacity(min_moves.len());
            for b in &min_moves {
                let joint = self.assemble(state, a, b)?;
                row.push(self.stage(state, &joint)?);
                jrow.push(joint);
            }
            table.push(row);
            joints.push(jrow);
        }
        let (value, (ia, ib)) = if self.min_outer {
            let mut best: Option<(S, (usize, usize))> = None;
            for b in 0..min_moves.len() {
                let ia = argbest(max_moves.len(), |a| table[a][b].clone(), true);
                let v = table[ia][b].clone();
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, (ia, b)));
                }
            }
            best.expect("move sets are nonempty")
        } else {
            let mut best: Option<(S, (usize, usize))> = None;
            for a in 0..max_moves.len() {
                let ib = argbest(min_moves.len(), |b| table[a][b].clone(), false);
                let v = table[a][ib].clone();
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, (a, ib)));
                }
            }
            best.expect("move sets are nonempty")
        };
        let joint = joints[ia][ib].clone();
        self.memo.insert(state.clone(), (value.clone(), joint));
        Ok(value)
    }

    fn run(mut self, from: &GameState) -> Result<ValueTable<S>> {
        self.game.check_lattice(self.lattice)?;
        if from.date > self.game.horizon() {
            return Err(PricingError::Domain(format!("state {from} is past the game horizon")));
        }
        self.value(from)?;
        let mut values = BTreeMap::new();
        let mut choices = BTreeMap::new();
        for (state, (v, joint)) in self.memo {
            values.insert(state.clone(), v);
            choices.insert(state, joint);
        }
        Ok(ValueTable {
            coalition: self.objective,
            start: from.clone(),
            values,
            choices,
        })
    }
}

/// Index of the first maximum (or minimum) of `f` over `0..n`.
fn argbest<S: Scalar>(n: usize, f: impl Fn(usize) -> S, maximize: bool) -> usize {
    let mut best = 0;
    let mut best_value = f(0);
    for i in 1..n {
        let v = f(i);
        if (maximize && v > best_value) || (!maximize && v < best_value) {
            best = i;
            best_value = v;
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn induce<S: Scalar>(
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    objective: Coalition,
    negate: bool,
    maximizer: Coalition,
    minimizer: Coalition,
    fixed: Option<&dyn Strategy>,
    min_outer: bool,
    from: &GameState,
) -> Result<ValueTable<S>> {
    Induction {
        game,
        lattice,
        measure,
        objective,
        negate,
        maximizer,
        minimizer,
        fixed,
        min_outer,
        memo: HashMap::new(),
    }
    .run(from)
}

/// Best value `sup` over the moves of `free` of the expected discounted
/// payoff of `objective`, everyone else following `fixed`.
pub fn best_response<S: Scalar>(
    objective: Coalition,
    free: Coalition,
    fixed: &dyn Strategy,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<ValueTable<S>> {
    induce(game, lattice, measure, objective, false, free, Coalition::empty(), Some(fixed), true, from)
}

/// Worst value `inf` over the moves of `free` of the expected discounted
/// payoff of `objective`, everyone else following `fixed`.
pub fn worst_response<S: Scalar>(
    objective: Coalition,
    free: Coalition,
    fixed: &dyn Strategy,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<ValueTable<S>> {
    induce(game, lattice, measure, objective, false, Coalition::empty(), free, Some(fixed), true, from)
}

/// Snell envelope of coalition `A` against the fixed strategy `opponent` of
/// the other players.
pub fn snell_envelope<S: Scalar>(
    coalition: Coalition,
    opponent: &dyn Strategy,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<ValueTable<S>> {
    best_response(coalition, coalition, opponent, game, lattice, measure, from)
}

/// Stage-wise `inf` over the other players of `sup` over `A`.
pub fn upper_values<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<ValueTable<S>> {
    let others = coalition.complement(game.players());
    induce(game, lattice, measure, coalition, false, coalition, others, None, true, from)
}

/// Stage-wise `sup` over `A` of `inf` over the other players.
pub fn lower_values<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<ValueTable<S>> {
    let others = coalition.complement(game.players());
    induce(game, lattice, measure, coalition, false, coalition, others, None, false, from)
}

/// Largest total payoff of `objective` when every player cooperates.
pub fn planner_values<S: Scalar>(
    objective: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<ValueTable<S>> {
    induce(game, lattice, measure, objective, false, game.everyone(), Coalition::empty(), None, true, from)
}

pub fn upper_price<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<S> {
    Ok(upper_values(coalition, game, lattice, measure, at)?.start_value().clone())
}

pub fn lower_price<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<S> {
    Ok(lower_values(coalition, game, lattice, measure, at)?.start_value().clone())
}

/// Where a quoted price sits relative to the no-arbitrage interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QuoteVerdict {
    NoArbitrage,
    /// Quote above the upper price: selling and super-hedging is riskless.
    IssuerArbitrage,
    /// Quote below the lower price: buying and hedging is riskless.
    HolderArbitrage,
}

/// Lower and upper no-arbitrage prices of coalition `A` at every reachable
/// state, with attaining strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceInterval<S> {
    pub coalition: Coalition,
    pub lower: ValueTable<S>,
    pub upper: ValueTable<S>,
}

impl<S: Scalar> PriceInterval<S> {
    pub fn lower_price(&self) -> &S {
        self.lower.start_value()
    }

    pub fn upper_price(&self) -> &S {
        self.upper.start_value()
    }

    pub fn verdict(&self, quote: &S) -> QuoteVerdict {
        if !quote.approx_le(self.upper_price()) {
            QuoteVerdict::IssuerArbitrage
        } else if !self.lower_price().approx_le(quote) {
            QuoteVerdict::HolderArbitrage
        } else {
            QuoteVerdict::NoArbitrage
        }
    }

    /// `true` if lower ≤ upper at every state.
    pub fn is_ordered(&self) -> bool {
        self.lower
            .values
            .iter()
            .all(|(s, lo)| self.upper.values.get(s).is_none_or(|up| lo.approx_le(up)))
    }

    /// The other players' strategy attaining the upper price.
    pub fn minimizing_strategy(&self, players: usize) -> StrategyProfile {
        self.upper.strategy_for(players, self.coalition.complement(players))
    }

    /// The coalition's strategy attaining the lower price.
    pub fn maximizing_strategy(&self, players: usize) -> StrategyProfile {
        self.lower.strategy_for(players, self.coalition)
    }
}

pub fn price_interval<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<PriceInterval<S>> {
    Ok(PriceInterval {
        coalition,
        lower: lower_values(coalition, game, lattice, measure, at)?,
        upper: upper_values(coalition, game, lattice, measure, at)?,
    })
}

/// Bond and stock units held over one period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Holdings<S> {
    pub bond: S,
    pub stock: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HedgeSide {
    Issuer,
    Holder,
}

/// Super-hedge of a coalition's payoff (issuer side) or of its negative
/// (holder side) against a fixed strategy of the counterparty.
///
/// The hedger replicates the Snell envelope of the next date at every
/// continuation and parks any surplus in the bond, so wealth is path
/// dependent and is produced by [`HedgePortfolio::simulate`].
#[derive(Debug, Clone)]
pub struct HedgePortfolio<S> {
    pub coalition: Coalition,
    pub side: HedgeSide,
    pub start: GameState,
    /// Discounted initial wealth, equal to the Snell value at `start`.
    pub initial_wealth: S,
    pub envelope: ValueTable<S>,
    fixed: StrategyProfile,
    replication: BTreeMap<(GameState, JointAction), Holdings<S>>,
}

/// One rebalancing date along a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeStep<S> {
    pub state: GameState,
    pub action: JointAction,
    /// Discounted wealth on entering the state.
    pub wealth: S,
    /// Snell value at the state.
    pub envelope: S,
    /// Holdings carried to the next date; `None` at settlement.
    pub holdings: Option<Holdings<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgePath<S> {
    pub moves: Vec<bool>,
    pub steps: Vec<HedgeStep<S>>,
    /// Discounted wealth at settlement.
    pub final_wealth: S,
    /// Discounted liability at settlement (`V̂^A` or `-V̂^A`).
    pub liability: S,
}

impl<S: Scalar> HedgePath<S> {
    pub fn dominates(&self) -> bool {
        self.liability.approx_le(&self.final_wealth)
    }
}

impl<S: Scalar> HedgePortfolio<S> {
    fn free_players(&self, players: usize) -> Coalition {
        match self.side {
            HedgeSide::Issuer => self.coalition,
            HedgeSide::Holder => self.coalition.complement(players),
        }
    }

    /// The counterparty strategy the hedge is built against.
    pub fn fixed_strategy(&self) -> &StrategyProfile {
        &self.fixed
    }

    /// Replicating holdings for the envelope after `action` at `state`.
    pub fn replication(&self, state: &GameState, action: &JointAction) -> Option<&Holdings<S>> {
        self.replication.get(&(state.clone(), action.clone()))
    }

    /// Runs the hedge along every market path while the free players follow
    /// `free`.
    pub fn simulate(
        &self,
        free: &dyn Strategy,
        game: &GameSpec<S>,
        lattice: &MarketLattice<S>,
    ) -> Result<Vec<HedgePath<S>>> {
        let players = game.players();
        let free_set = self.free_players(players);
        let strategy = Combined {
            coalition: free_set,
            inside: free,
            outside: &self.fixed,
        };
        let remaining = game.horizon() - self.start.date;
        let mut out = Vec::with_capacity(1 << remaining);
        for bits in 0..(1usize << remaining) {
            let moves: Vec<bool> = (0..remaining).map(|k| bits >> (remaining - 1 - k) & 1 == 1).collect();
            let mut state = self.start.clone();
            let mut wealth = self.initial_wealth.clone();
            let mut steps = Vec::new();
            let mut k = 0;
            loop {
                let action = crate::gamecore::joint_action(game, &strategy, &state)?;
                let envelope = self.envelope.value(&state).cloned().ok_or_else(|| {
                    PricingError::Domain(format!("hedge has no envelope value at {state}"))
                })?;
                if game.settles(lattice, &state, &action) {
                    let payoff = game.discounted_payoff(lattice, &state, &action)?;
                    let total: S = self.coalition.members().map(|p| payoff[p].clone()).sum();
                    let liability = match self.side {
                        HedgeSide::Issuer => total,
                        HedgeSide::Holder => -total,
                    };
                    steps.push(HedgeStep {
                        state,
                        action,
                        wealth: wealth.clone(),
                        envelope,
                        holdings: None,
                    });
                    out.push(HedgePath {
                        moves,
                        steps,
                        final_wealth: wealth,
                        liability,
                    });
                    break;
                }
                let base = self
                    .replication(&state, &action)
                    .ok_or_else(|| PricingError::Domain(format!("hedge has no holdings at {state}")))?;
                let next = state.child(&action, moves[k]);
                let expected = {
                    let s_now = lattice.price(state.node()) / lattice.numeraire(state.date);
                    base.bond.clone() + base.stock.clone() * s_now
                };
                let surplus = wealth.clone() - expected;
                let holdings = Holdings {
                    bond: base.bond.clone() + surplus,
                    stock: base.stock.clone(),
                };
                let s_next = lattice.price(next.node()) / lattice.numeraire(next.date);
                let next_wealth = holdings.bond.clone() + holdings.stock.clone() * s_next;
                steps.push(HedgeStep {
                    state,
                    action,
                    wealth,
                    envelope,
                    holdings: Some(holdings),
                });
                wealth = next_wealth;
                state = next;
                k += 1;
            }
        }
        Ok(out)
    }
}

fn build_hedge<S: Scalar>(
    coalition: Coalition,
    side: HedgeSide,
    fixed: &dyn Strategy,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<HedgePortfolio<S>> {
    let players = game.players();
    let (free, negate) = match side {
        HedgeSide::Issuer => (coalition, false),
        HedgeSide::Holder => (coalition.complement(players), true),
    };
    let envelope = induce(game, lattice, measure, coalition, negate, free, Coalition::empty(), Some(fixed), true, from)?;
    let fixed_players = free.complement(players);
    let mut fixed_table = StrategyProfile::new(players);
    let mut replication = BTreeMap::new();
    for state in envelope.values.keys() {
        let fixed_moves: Vec<usize> = fixed_players
            .members()
            .map(|p| fixed.action(p, state).expect("checked during induction"))
            .collect();
        fixed_table.set_moves(fixed_players, state, &fixed_moves);
        for free_moves in game.coalition_moves(free) {
            let joint = JointAction::merge(players, free, &free_moves, &fixed_moves);
            if game.settles(lattice, state, &joint) {
                continue;
            }
            let up_state = state.child(&joint, true);
            let down_state = state.child(&joint, false);
            let u_up = envelope.values[&up_state].clone();
            let u_down = envelope.values[&down_state].clone();
            let next = state.date + 1;
            let b_next = lattice.numeraire(next);
            let s_up = lattice.price(up_state.node());
            let s_down = lattice.price(down_state.node());
            if s_up == s_down {
                return Err(PricingError::SingularReplication(state.to_string()));
            }
            let stock = b_next.clone() * (u_up.clone() - u_down) / (s_up.clone() - s_down);
            let bond = u_up - stock.clone() * s_up / b_next;
            replication.insert((state.clone(), joint), Holdings { bond, stock });
        }
    }
    Ok(HedgePortfolio {
        coalition,
        side,
        start: from.clone(),
        initial_wealth: envelope.start_value().clone(),
        envelope,
        fixed: fixed_table,
        replication,
    })
}

/// Issuer's super-hedge of `V̂^A` against the other players' strategy `sigma`.
pub fn superhedge_issuer<S: Scalar>(
    coalition: Coalition,
    sigma: &dyn Strategy,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<HedgePortfolio<S>> {
    build_hedge(coalition, HedgeSide::Issuer, sigma, game, lattice, measure, from)
}

/// Holder's super-hedge of `-V̂^A` given the coalition's own strategy `tau`.
pub fn superhedge_holder<S: Scalar>(
    coalition: Coalition,
    tau: &dyn Strategy,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<HedgePortfolio<S>> {
    build_hedge(coalition, HedgeSide::Holder, tau, game, lattice, measure, from)
}

/// An issuer's hedge costs at least any arbitrage-free quote, and a
/// holder's hedge guarantees at most it: `-Z_holder ≤ quote ≤ Z_issuer`.
pub fn hedge_bounds_hold<S: Scalar>(issuer: &HedgePortfolio<S>, holder: &HedgePortfolio<S>, quote: &S) -> bool {
    let floor = -holder.initial_wealth.clone();
    floor.approx_le(quote) && quote.approx_le(&issuer.initial_wealth)
}

/// `(sup_τ inf_σ, inf_σ sup_τ)` of `E_Q[V̂^A]` by playing every pair of
/// coalition and counter-coalition strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce<S> {
    pub sup_inf: S,
    pub inf_sup: S,
    pub coalition_strategies: usize,
    pub counter_strategies: usize,
}

pub fn brute_force_values<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
    budget: u128,
) -> Result<BruteForce<S>> {
    let others = coalition.complement(game.players());
    let taus = enumerate_reduced_strategies(coalition, game, lattice, at, budget)?;
    let sigmas = enumerate_reduced_strategies(others, game, lattice, at, budget)?;
    let required = taus.len() as u128 * sigmas.len() as u128;
    if required > budget {
        return Err(PricingError::BudgetExceeded { required, budget });
    }
    let mut matrix = Vec::with_capacity(taus.len());
    for tau in &taus {
        let mut row = Vec::with_capacity(sigmas.len());
        for sigma in &sigmas {
            let profile = Combined {
                coalition,
                inside: tau,
                outside: sigma,
            };
            row.push(play(&profile, game, lattice, measure, at)?.expected_coalition(coalition));
        }
        matrix.push(row);
    }
    let sup_inf = matrix
        .iter()
        .map(|row| row.iter().cloned().reduce(S::min_of).expect("nonempty"))
        .reduce(S::max_of)
        .expect("nonempty");
    let inf_sup = (0..sigmas.len())
        .map(|j| matrix.iter().map(|row| row[j].clone()).reduce(S::max_of).expect("nonempty"))
        .reduce(S::min_of)
        .expect("nonempty");
    Ok(BruteForce {
        sup_inf,
        inf_sup,
        coalition_strategies: taus.len(),
        counter_strategies: sigmas.len(),
    })
}
