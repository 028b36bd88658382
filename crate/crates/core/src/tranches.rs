//! Contracts with puttable tranches.
//!
//! Each of `m` holders owns a tranche paying an option at maturity. At the
//! decision dates `T_1 < ... < T_n` every holder may put the tranche back to
//! the issuer for `X^i_l`; the deviation of the putters from their
//! continuation values is shared evenly by the remaining holders. Values are
//! found backwards by projecting the continuation values onto a simplex.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::gamecore::Coalition;
use crate::lattice::{MarketLattice, MartingaleMeasure, Node};
use crate::scalar::Scalar;

/// Orthogonal projection of `p` onto `{x : Σx = c, x_i = fixed_i for i ∈ E}`.
pub fn project_hyperplane<S: Scalar>(p: &[S], fixed_set: Coalition, fixed: &[S], c: &S) -> Result<Vec<S>> {
    let m = p.len();
    if fixed.len() != m {
        return Err(PricingError::Shape {
            expected: m,
            actual: fixed.len(),
        });
    }
    let free = m - fixed_set.len();
    let fixed_sum: S = fixed_set.members().map(|i| fixed[i].clone()).sum();
    if free == 0 {
        return if fixed_sum.approx_eq(c) {
            Ok(fixed.to_vec())
        } else {
            Err(PricingError::DegenerateHyperplane)
        };
    }
    let free_sum: S = (0..m).filter(|&i| !fixed_set.contains(i)).map(|i| p[i].clone()).sum();
    let shift = (c.clone() - fixed_sum - free_sum) / S::from_i64(free as i64);
    Ok((0..m)
        .map(|i| {
            if fixed_set.contains(i) {
                fixed[i].clone()
            } else {
                p[i].clone() + shift.clone()
            }
        })
        .collect())
}

/// Orthogonal projection of `p` onto `{x : Σx = c, x ≥ lower}` by
/// water-filling: `x_i = max(lower_i, p_i - λ)`.
pub fn project_simplex<S: Scalar>(p: &[S], lower: &[S], c: &S) -> Result<Vec<S>> {
    let m = p.len();
    if lower.len() != m {
        return Err(PricingError::Shape {
            expected: m,
            actual: lower.len(),
        });
    }
    let bounds_sum: S = lower.iter().cloned().sum();
    if !bounds_sum.approx_le(c) {
        return Err(PricingError::EmptySimplex {
            bounds_sum: bounds_sum.render(),
            target: c.render(),
        });
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    // breakpoints λ_i = p_i - lower_i, largest first
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let ba = p[a].clone() - lower[a].clone();
        let bb = p[b].clone() - lower[b].clone();
        bb.partial_cmp(&ba).unwrap_or(std::cmp::Ordering::Equal)
    });
    let breakpoint = |i: usize| p[i].clone() - lower[i].clone();
    let mut free_p = S::zero();
    let mut bound_lower = bounds_sum;
    let mut lambda = breakpoint(order[0]);
    for k in 0..m {
        let i = order[k];
        free_p = free_p + p[i].clone();
        bound_lower = bound_lower - lower[i].clone();
        lambda = (free_p.clone() - (c.clone() - bound_lower.clone())) / S::from_i64(k as i64 + 1);
        if k + 1 == m || lambda >= breakpoint(order[k + 1]) {
            break;
        }
    }
    Ok((0..m)
        .map(|i| S::max_of(lower[i].clone(), p[i].clone() - lambda.clone()))
        .collect())
}

/// Whether `value` sits on its lower bound, exactly or within
/// `tolerance · (1 + |bound|)`.
pub fn at_bound<S: Scalar>(value: &S, bound: &S) -> bool {
    let slack = S::tolerance() * (S::one() + bound.abs_value());
    value.clone() - bound.clone() <= slack
}

/// Holders who put: coordinates where the simplex projection sits on its
/// lower bound.
pub fn put_set<S: Scalar>(p: &[S], lower: &[S], total: &S) -> Result<Coalition> {
    let x = project_simplex(p, lower, total)?;
    let members: Vec<usize> = (0..p.len()).filter(|&i| at_bound(&x[i], &lower[i])).collect();
    Ok(Coalition::from_members(&members))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LegPayoff<S> {
    Call(S),
    Put(S),
    Stock,
    Constant(S),
}

impl<S: Scalar> LegPayoff<S> {
    pub fn intrinsic(&self, price: &S) -> S {
        match self {
            LegPayoff::Call(k) => S::max_of(price.clone() - k.clone(), S::zero()),
            LegPayoff::Put(k) => S::max_of(k.clone() - price.clone(), S::zero()),
            LegPayoff::Stock => price.clone(),
            LegPayoff::Constant(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExerciseStyle {
    European,
    /// Exercisable on `[T_n, T]`.
    American,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheLeg<S> {
    pub payoff: LegPayoff<S>,
    pub style: ExerciseStyle,
}

impl<S> TrancheLeg<S> {
    pub fn european(payoff: LegPayoff<S>) -> Self {
        Self {
            payoff,
            style: ExerciseStyle::European,
        }
    }

    pub fn american(payoff: LegPayoff<S>) -> Self {
        Self {
            payoff,
            style: ExerciseStyle::American,
        }
    }
}

/// Legs, decision dates, maturity and put payoffs `X^i_l` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrancheContract<S> {
    legs: Vec<TrancheLeg<S>>,
    decision_dates: Vec<usize>,
    maturity: usize,
    /// `[l][ups][i]`, for the nodes of date `decision_dates[l]`.
    put_payoffs: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> TrancheContract<S> {
    pub fn new(
        legs: Vec<TrancheLeg<S>>,
        decision_dates: Vec<usize>,
        maturity: usize,
        put_payoffs: Vec<Vec<Vec<S>>>,
    ) -> Result<Self> {
        let m = legs.len();
        if m == 0 {
            return Err(PricingError::InvalidContract("at least one tranche is required".into()));
        }
        if m > Coalition::MAX_PLAYERS {
            return Err(PricingError::InvalidContract(format!(
                "at most {} tranches are supported",
                Coalition::MAX_PLAYERS
            )));
        }
        if decision_dates.is_empty() {
            return Err(PricingError::InvalidContract("at least one decision date is required".into()));
        }
        if decision_dates[0] == 0 {
            return Err(PricingError::InvalidContract("putting at date 0 is not allowed".into()));
        }
        if decision_dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PricingError::InvalidContract("decision dates must be strictly increasing".into()));
        }
        let last = *decision_dates.last().expect("nonempty");
        if last > maturity {
            return Err(PricingError::InvalidContract(format!(
                "decision date {last} is after maturity {maturity}"
            )));
        }
        if put_payoffs.len() != decision_dates.len() {
            return Err(PricingError::InvalidContract(format!(
                "{} put schedules for {} decision dates",
                put_payoffs.len(),
                decision_dates.len()
            )));
        }
        for (l, (table, &date)) in put_payoffs.iter().zip(&decision_dates).enumerate() {
            if table.len() != date + 1 {
                return Err(PricingError::InvalidContract(format!(
                    "decision {} (date {date}) needs {} nodes, got {}",
                    l + 1,
                    date + 1,
                    table.len()
                )));
            }
            if let Some(row) = table.iter().find(|row| row.len() != m) {
                return Err(PricingError::InvalidContract(format!(
                    "decision {} has a node with {} put payoffs for {m} tranches",
                    l + 1,
                    row.len()
                )));
            }
        }
        Ok(Self {
            legs,
            decision_dates,
            maturity,
            put_payoffs,
        })
    }

    /// Builds the put schedule from `rule(tranche, decision index, node, price)`.
    pub fn from_rule(
        legs: Vec<TrancheLeg<S>>,
        decision_dates: Vec<usize>,
        maturity: usize,
        lattice: &MarketLattice<S>,
        rule: impl Fn(usize, usize, Node, &S) -> S,
    ) -> Result<Self> {
        let m = legs.len();
        let mut tables = Vec::with_capacity(decision_dates.len());
        for (l, &date) in decision_dates.iter().enumerate() {
            if date > lattice.steps() {
                return Err(PricingError::InvalidContract(format!(
                    "decision date {date} exceeds lattice steps {}",
                    lattice.steps()
                )));
            }
            let table = lattice
                .nodes_at(date)
                .map(|node| {
                    let price = lattice.price(node);
                    (0..m).map(|i| rule(i, l, node, &price)).collect()
                })
                .collect();
            tables.push(table);
        }
        Self::new(legs, decision_dates, maturity, tables)
    }

    pub fn tranches(&self) -> usize {
        self.legs.len()
    }

    pub fn legs(&self) -> &[TrancheLeg<S>] {
        &self.legs
    }

    pub fn decision_dates(&self) -> &[usize] {
        &self.decision_dates
    }

    pub fn maturity(&self) -> usize {
        self.maturity
    }

    /// `X_l` at a node; `level` is 1-based.
    pub fn put_payoffs(&self, level: usize, ups: usize) -> &[S] {
        &self.put_payoffs[level - 1][ups]
    }

    pub fn date_of(&self, level: usize) -> usize {
        self.decision_dates[level - 1]
    }

    pub fn levels(&self) -> usize {
        self.decision_dates.len()
    }

    fn check_lattice(&self, lattice: &MarketLattice<S>) -> Result<()> {
        if self.maturity > lattice.steps() {
            return Err(PricingError::InvalidContract(format!(
                "maturity {} exceeds lattice steps {}",
                self.maturity,
                lattice.steps()
            )));
        }
        Ok(())
    }

    /// Leg values at the nodes of date `to`, in date-`to` currency, with no
    /// puts. American legs may exercise on `[max(to, T_n), T]`.
    fn leg_values_at(&self, lattice: &MarketLattice<S>, measure: &MartingaleMeasure<S>, to: usize) -> Result<Vec<Vec<S>>> {
        let exercise_from = *self.decision_dates.last().expect("nonempty");
        let mut per_leg = Vec::with_capacity(self.legs.len());
        for leg in &self.legs {
            let intrinsic = |date: usize| -> Vec<S> {
                lattice.prices_at(date).iter().map(|s| leg.payoff.intrinsic(s)).collect()
            };
            let mut layer = intrinsic(self.maturity);
            for date in (to..self.maturity).rev() {
                layer = measure
                    .conditional_expectation(&layer)?
                    .into_iter()
                    .map(|v| v / lattice.accrual().clone())
                    .collect();
                if leg.style == ExerciseStyle::American && date >= exercise_from {
                    layer = layer
                        .into_iter()
                        .zip(intrinsic(date))
                        .map(|(c, x)| S::max_of(c, x))
                        .collect();
                }
            }
            per_leg.push(layer);
        }
        // transpose to [node][leg]
        let nodes = to + 1;
        Ok((0..nodes).map(|j| per_leg.iter().map(|v| v[j].clone()).collect()).collect())
    }
}

/// Valuation at one decision node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDecision<S> {
    pub node: Node,
    /// Continuation values `P_l`.
    pub continuation: Vec<S>,
    /// `p_l = Σ P^i_l`.
    pub total: S,
    pub put_payoffs: Vec<S>,
    /// Equilibrium value `V*_l`.
    pub value: Vec<S>,
    pub put_set: Coalition,
}

impl<S: Scalar> NodeDecision<S> {
    /// Every holder puts: admissible only when `Σ X = p`.
    pub fn everyone_puts(&self) -> bool {
        self.put_set.len() == self.continuation.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionLevel<S> {
    /// 1-based decision index.
    pub level: usize,
    pub date: usize,
    pub nodes: Vec<NodeDecision<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrancheValuation<S> {
    pub levels: Vec<DecisionLevel<S>>,
    /// `V*_0`, in time-0 currency.
    pub initial: Vec<S>,
    /// Stand-alone prices of the legs at time 0, without any puts.
    pub option_prices: Vec<S>,
}

impl<S: Scalar> TrancheValuation<S> {
    pub fn decision(&self, level: usize, ups: usize) -> &NodeDecision<S> {
        &self.levels[level - 1].nodes[ups]
    }

    /// Equilibrium put rule: put iff the holder is in the node's put set.
    pub fn equilibrium_puts(&self, player: usize, state: &TrancheState) -> bool {
        self.decision(state.level, state.ups).put_set.contains(player)
    }

    /// Nodes where every holder puts.
    pub fn boundary_nodes(&self) -> Vec<(usize, Node)> {
        self.levels
            .iter()
            .flat_map(|lv| lv.nodes.iter().filter(|n| n.everyone_puts()).map(move |n| (lv.level, n.node)))
            .collect()
    }
}

/// Discounted expectation at `node` of values given on the nodes of a later
/// date, weighting only the reachable nodes.
fn expect_forward<S: Scalar>(
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    node: Node,
    to: usize,
    value_at: impl Fn(usize) -> Result<S>,
) -> Result<S> {
    let steps = to - node.date;
    let mut total = S::zero();
    let mut binom: i64 = 1;
    for k in 0..=steps {
        let weight = S::from_i64(binom) * measure.path_probability(k, steps);
        total = total + weight * value_at(node.ups + k)?;
        binom = binom * (steps - k) as i64 / (k as i64 + 1);
    }
    Ok(total / lattice.accrual().powi(steps))
}

/// Backward induction over the decision dates.
pub fn value_tranches<S: Scalar>(
    contract: &TrancheContract<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
) -> Result<TrancheValuation<S>> {
    contract.check_lattice(lattice)?;
    let n = contract.levels();
    let last_date = contract.date_of(n);
    let mut continuation = contract.leg_values_at(lattice, measure, last_date)?;
    let mut levels = Vec::with_capacity(n);
    for level in (1..=n).rev() {
        let date = contract.date_of(level);
        let mut nodes = Vec::with_capacity(date + 1);
        for (ups, p) in continuation.iter().enumerate() {
            let x = contract.put_payoffs(level, ups).to_vec();
            let total: S = p.iter().cloned().sum();
            let put_sum: S = x.iter().cloned().sum();
            if !put_sum.approx_le(&total) {
                return Err(PricingError::ZeroSumViolation {
                    decision: level,
                    date,
                    node: ups,
                    put_sum: put_sum.render(),
                    continuation_sum: total.render(),
                });
            }
            let value = project_simplex(p, &x, &total)?;
            let members: Vec<usize> = (0..x.len()).filter(|&i| at_bound(&value[i], &x[i])).collect();
            nodes.push(NodeDecision {
                node: Node::new(date, ups),
                continuation: p.clone(),
                total,
                put_payoffs: x,
                value,
                put_set: Coalition::from_members(&members),
            });
        }
        let previous = if level > 1 { contract.date_of(level - 1) } else { 0 };
        let values: Vec<Vec<S>> = nodes.iter().map(|d| d.value.clone()).collect();
        continuation = roll_vectors(lattice, measure, &values, previous, date)?;
        levels.push(DecisionLevel { level, date, nodes });
    }
    levels.reverse();
    let initial = continuation.into_iter().next().expect("one node at date 0");
    let option_prices = contract
        .leg_values_at(lattice, measure, 0)?
        .into_iter()
        .next()
        .expect("one node at date 0");
    Ok(TrancheValuation {
        levels,
        initial,
        option_prices,
    })
}

/// Rolls `[node][tranche]` values from date `to` back to date `from`.
fn roll_vectors<S: Scalar>(
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    values: &[Vec<S>],
    from: usize,
    to: usize,
) -> Result<Vec<Vec<S>>> {
    let m = values.first().map_or(0, Vec::len);
    let mut per_tranche = Vec::with_capacity(m);
    for i in 0..m {
        let column: Vec<S> = values.iter().map(|v| v[i].clone()).collect();
        per_tranche.push(measure.rollback(lattice, &column, from, to)?);
    }
    Ok((0..=from).map(|j| per_tranche.iter().map(|c| c[j].clone()).collect()).collect())
}

/// A decision point: decision index, node of its date, and the put sets of
/// the earlier decisions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrancheState {
    /// 1-based decision index.
    pub level: usize,
    pub ups: usize,
    pub history: Vec<Coalition>,
}

impl TrancheState {
    /// Holders of the original tranches that have not put yet.
    pub fn active(&self, m: usize) -> Coalition {
        let put = self.history.iter().fold(Coalition::empty(), |acc, e| acc.union(*e));
        put.complement(m)
    }
}

/// Put/hold decisions of the current holder of each tranche.
pub trait PutStrategy {
    fn puts(&self, player: usize, state: &TrancheState) -> Option<bool>;
}

impl<T: PutStrategy + ?Sized> PutStrategy for &T {
    fn puts(&self, player: usize, state: &TrancheState) -> Option<bool> {
        (**self).puts(player, state)
    }
}

impl<S: Scalar> PutStrategy for TrancheValuation<S> {
    fn puts(&self, player: usize, state: &TrancheState) -> Option<bool> {
        Some(self.equilibrium_puts(player, state))
    }
}

/// Table-backed put strategies, one map per tranche.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PutProfile {
    tables: Vec<BTreeMap<TrancheState, bool>>,
}

impl PutProfile {
    pub fn new(m: usize) -> Self {
        Self {
            tables: vec![BTreeMap::new(); m],
        }
    }

    pub fn set(&mut self, player: usize, state: TrancheState, put: bool) {
        self.tables[player].insert(state, put);
    }
}

impl PutStrategy for PutProfile {
    fn puts(&self, player: usize, state: &TrancheState) -> Option<bool> {
        self.tables.get(player)?.get(state).copied()
    }
}

/// Members of `coalition` follow `inside`, the others `outside`.
pub struct CombinedPuts<'a> {
    pub coalition: Coalition,
    pub inside: &'a dyn PutStrategy,
    pub outside: &'a dyn PutStrategy,
}

impl PutStrategy for CombinedPuts<'_> {
    fn puts(&self, player: usize, state: &TrancheState) -> Option<bool> {
        if self.coalition.contains(player) {
            self.inside.puts(player, state)
        } else {
            self.outside.puts(player, state)
        }
    }
}

/// Every decision state: all nodes of every decision date, all put histories.
pub fn all_states<S: Scalar>(contract: &TrancheContract<S>) -> Vec<TrancheState> {
    let m = contract.tranches();
    let sets: Vec<Coalition> = (0..(1u32 << m)).map(Coalition::from_bits).collect();
    let mut histories: Vec<Vec<Coalition>> = vec![Vec::new()];
    let mut out = Vec::new();
    for level in 1..=contract.levels() {
        for history in &histories {
            for ups in 0..=contract.date_of(level) {
                out.push(TrancheState {
                    level,
                    ups,
                    history: history.clone(),
                });
            }
        }
        histories = histories
            .iter()
            .flat_map(|h| {
                sets.iter().map(move |e| {
                    let mut h = h.clone();
                    h.push(*e);
                    h
                })
            })
            .collect();
    }
    out
}

fn put_set_of(m: usize, strategy: &dyn PutStrategy, state: &TrancheState) -> Result<Coalition> {
    let mut members = Vec::new();
    for i in 0..m {
        match strategy.puts(i, state) {
            Some(true) => members.push(i),
            Some(false) => {}
            None => {
                return Err(PricingError::IncompleteStrategy {
                    player: i + 1,
                    state: format!("decision {} node {} history {:?}", state.level, state.ups, state.history),
                })
            }
        }
    }
    Ok(Coalition::from_members(&members))
}

/// Redistribution adjustment `[π_H(E, X, p)(P)]^i - P^i` for the keepers.
fn adjustments<S: Scalar>(decision: &NodeDecision<S>, puts: Coalition) -> Result<Vec<S>> {
    let m = decision.continuation.len();
    if puts.len() == m {
        return Ok(vec![S::zero(); m]);
    }
    let projected = project_hyperplane(&decision.continuation, puts, &decision.put_payoffs, &decision.total)?;
    Ok(projected
        .into_iter()
        .zip(&decision.continuation)
        .map(|(x, p)| x - p.clone())
        .collect())
}

/// Payoff vectors of a put profile at every decision state it is asked
/// about, in the currency of the state's date, plus the time-0 vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePayoffs<S> {
    pub values: BTreeMap<TrancheState, Vec<S>>,
    pub initial: Vec<S>,
}

struct PayoffEval<'a, S: Scalar> {
    contract: &'a TrancheContract<S>,
    valuation: &'a TrancheValuation<S>,
    strategy: &'a dyn PutStrategy,
    lattice: &'a MarketLattice<S>,
    measure: &'a MartingaleMeasure<S>,
    memo: BTreeMap<TrancheState, Vec<S>>,
}

impl<S: Scalar> PayoffEval<'_, S> {
    fn value(&mut self, state: &TrancheState) -> Result<Vec<S>> {
        if let Some(v) = self.memo.get(state) {
            return Ok(v.clone());
        }
        let m = self.contract.tranches();
        let decision = self.valuation.decision(state.level, state.ups);
        let puts = put_set_of(m, self.strategy, state)?;
        let adjust = adjustments(decision, puts)?;
        let next: Vec<S> = if state.level == self.contract.levels() {
            decision.continuation.clone()
        } else {
            let mut history = state.history.clone();
            history.push(puts);
            let date = self.contract.date_of(state.level);
            let to = self.contract.date_of(state.level + 1);
            let node = Node::new(date, state.ups);
            let mut children = BTreeMap::new();
            for k in 0..=(to - date) {
                let child = TrancheState {
                    level: state.level + 1,
                    ups: state.ups + k,
                    history: history.clone(),
                };
                children.insert(state.ups + k, self.value(&child)?);
            }
            (0..m)
                .map(|i| expect_forward(self.lattice, self.measure, node, to, |j| Ok(children[&j][i].clone())))
                .collect::<Result<_>>()?
        };
        let value: Vec<S> = (0..m)
            .map(|i| {
                if puts.contains(i) {
                    decision.put_payoffs[i].clone()
                } else {
                    adjust[i].clone() + next[i].clone()
                }
            })
            .collect();
        self.memo.insert(state.clone(), value.clone());
        Ok(value)
    }
}

/// Evaluates a put profile by the recursive payoff definition, using the
/// equilibrium continuation values for `P_l` and `p_l`. `states` lists
/// extra decision states to evaluate besides those reached from date 0.
pub fn payoff_of_profile<S: Scalar>(
    contract: &TrancheContract<S>,
    valuation: &TrancheValuation<S>,
    strategy: &dyn PutStrategy,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    states: &[TrancheState],
) -> Result<ProfilePayoffs<S>> {
    let mut eval = PayoffEval {
        contract,
        valuation,
        strategy,
        lattice,
        measure,
        memo: BTreeMap::new(),
    };
    let first = contract.date_of(1);
    let mut roots = Vec::with_capacity(first + 1);
    for ups in 0..=first {
        roots.push(eval.value(&TrancheState {
            level: 1,
            ups,
            history: Vec::new(),
        })?);
    }
    for state in states {
        eval.value(state)?;
    }
    let initial = roll_vectors(lattice, measure, &roots, 0, first)?
        .into_iter()
        .next()
        .expect("one node at date 0");
    Ok(ProfilePayoffs {
        values: eval.memo,
        initial,
    })
}

/// One failed saddle inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleViolation<S> {
    pub player: usize,
    pub state: TrancheState,
    pub deviating: bool,
    pub payoff: S,
    pub equilibrium: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport<S> {
    pub strategies_checked: usize,
    pub states_checked: usize,
    pub violations: Vec<SaddleViolation<S>>,
}

impl<S> DeviationReport<S> {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Every put strategy of `coalition` over `states`.
fn enumerate_put_strategies(m: usize, coalition: Coalition, states: &[TrancheState], budget: u128) -> Result<Vec<PutProfile>> {
    let bits = coalition.len() * states.len();
    let required = if bits >= 127 { u128::MAX } else { 1u128 << bits };
    if required > budget {
        return Err(PricingError::BudgetExceeded { required, budget });
    }
    let members: Vec<usize> = coalition.members().collect();
    let mut out = Vec::with_capacity(required as usize);
    for code in 0..required {
        let mut profile = PutProfile::new(m);
        let mut bit = 0;
        for state in states {
            for &p in &members {
                profile.set(p, state.clone(), code >> bit & 1 == 1);
                bit += 1;
            }
        }
        out.push(profile);
    }
    Ok(out)
}

/// Decision states reachable from `from` when the members of `free` may
/// choose anything and everyone else follows `fixed`.
pub fn reachable_states<S: Scalar>(
    contract: &TrancheContract<S>,
    from: &TrancheState,
    free: Coalition,
    fixed: &dyn PutStrategy,
) -> Result<Vec<TrancheState>> {
    let m = contract.tranches();
    let mut free_choices = vec![Coalition::empty()];
    free_choices.extend(free.nonempty_parts());
    let mut out = Vec::new();
    let mut frontier = vec![from.clone()];
    while let Some(state) = frontier.pop() {
        if state.level < contract.levels() {
            let mut forced = Vec::new();
            for i in (0..m).filter(|&i| !free.contains(i)) {
                let puts = fixed.puts(i, &state).ok_or_else(|| PricingError::IncompleteStrategy {
                    player: i + 1,
                    state: format!("decision {} node {}", state.level, state.ups),
                })?;
                if puts {
                    forced.push(i);
                }
            }
            let forced = Coalition::from_members(&forced);
            let span = contract.date_of(state.level + 1) - contract.date_of(state.level);
            for choice in &free_choices {
                let mut history = state.history.clone();
                history.push(forced.union(*choice));
                for k in 0..=span {
                    frontier.push(TrancheState {
                        level: state.level + 1,
                        ups: state.ups + k,
                        history: history.clone(),
                    });
                }
            }
        }
        out.push(state);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Payoff vector of a put profile at one decision state.
pub fn payoff_at<S: Scalar>(
    contract: &TrancheContract<S>,
    valuation: &TrancheValuation<S>,
    strategy: &dyn PutStrategy,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    state: &TrancheState,
) -> Result<Vec<S>> {
    PayoffEval {
        contract,
        valuation,
        strategy,
        lattice,
        measure,
        memo: BTreeMap::new(),
    }
    .value(state)
}

/// Exhaustive saddle check of the equilibrium put rule: at every decision
/// state, no strategy of a single holder improves on its equilibrium value,
/// and no joint strategy of the others pushes it below. The payoff at a
/// state only depends on choices in its subtree, so every strategy on the
/// states reachable from it is tried there.
pub fn check_equilibrium<S: Scalar>(
    contract: &TrancheContract<S>,
    valuation: &TrancheValuation<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    budget: u128,
) -> Result<DeviationReport<S>> {
    let m = contract.tranches();
    let mut report = DeviationReport {
        strategies_checked: 0,
        states_checked: 0,
        violations: Vec::new(),
    };
    for state in all_states(contract) {
        report.states_checked += 1;
        let eq_value = &valuation.decision(state.level, state.ups).value;
        for player in 0..m {
            let me = Coalition::singleton(player);
            for (deviating, free) in [(true, me), (false, me.complement(m))] {
                let subtree = reachable_states(contract, &state, free, valuation)?;
                for alt in enumerate_put_strategies(m, free, &subtree, budget)? {
                    let profile = CombinedPuts {
                        coalition: free,
                        inside: &alt,
                        outside: valuation,
                    };
                    let v = payoff_at(contract, valuation, &profile, lattice, measure, &state)?;
                    report.strategies_checked += 1;
                    let eq = &eq_value[player];
                    let ok = if deviating { v[player].approx_le(eq) } else { eq.approx_le(&v[player]) };
                    if !ok {
                        report.violations.push(SaddleViolation {
                            player,
                            state: state.clone(),
                            deviating,
                            payoff: v[player].clone(),
                            equilibrium: eq.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Lower and upper values of a coalition's total payoff, from stage-wise
/// induction over put vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrancheCoalitionBounds<S> {
    pub coalition: Coalition,
    pub lower: S,
    pub upper: S,
    /// Sum of the members' equilibrium values at time 0.
    pub member_sum: S,
}

impl<S: Scalar> TrancheCoalitionBounds<S> {
    pub fn is_additive(&self) -> bool {
        self.lower.approx_eq(&self.member_sum) && self.upper.approx_eq(&self.member_sum)
    }
}

struct BoundsEval<'a, S: Scalar> {
    contract: &'a TrancheContract<S>,
    valuation: &'a TrancheValuation<S>,
    lattice: &'a MarketLattice<S>,
    measure: &'a MartingaleMeasure<S>,
    coalition: Coalition,
    min_outer: bool,
    /// `true`: every player maximizes the coalition total.
    planner: bool,
    memo: HashMap<(usize, usize, Coalition), S>,
}

impl<S: Scalar> BoundsEval<'_, S> {
    /// Value at a decision node for the coalition members still holding
    /// their original tranche (`active`).
    fn value(&mut self, level: usize, ups: usize, active: Coalition) -> Result<S> {
        let key = (level, ups, active);
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        let m = self.contract.tranches();
        let objective = Coalition::from_bits(self.coalition.bits() & active.bits());
        let (maxer, miner) = if self.planner {
            (Coalition::all(m), Coalition::empty())
        } else {
            (self.coalition, self.coalition.complement(m))
        };
        let subsets = |c: Coalition| -> Vec<Coalition> {
            let mut v = vec![Coalition::empty()];
            v.extend(c.nonempty_parts());
            v
        };
        let decision = self.valuation.decision(level, ups).clone();
        let mut table = Vec::new();
        for a in subsets(maxer) {
            let mut row = Vec::new();
            for b in subsets(miner) {
                let puts = a.union(b);
                let adjust = adjustments(&decision, puts)?;
                let mut stage = S::zero();
                for i in objective.members() {
                    stage = stage
                        + if puts.contains(i) {
                            decision.put_payoffs[i].clone()
                        } else {
                            adjust[i].clone()
                        };
                }
                let remaining = Coalition::from_bits(objective.bits() & !puts.bits());
                let next_active = Coalition::from_bits(active.bits() & !puts.bits());
                let continuation = if level == self.contract.levels() {
                    remaining.members().map(|i| decision.continuation[i].clone()).sum()
                } else {
                    let date = self.contract.date_of(level);
                    let to = self.contract.date_of(level + 1);
                    let mut children = BTreeMap::new();
                    for k in 0..=(to - date) {
                        children.insert(ups + k, self.value(level + 1, ups + k, next_active)?);
                    }
                    expect_forward(self.lattice, self.measure, Node::new(date, ups), to, |j| Ok(children[&j].clone()))?
                };
                row.push(stage + continuation);
            }
            table.push(row);
        }
        let rows = table.len();
        let cols = table[0].len();
        let value = if self.min_outer {
            (0..cols)
                .map(|b| (0..rows).map(|a| table[a][b].clone()).reduce(S::max_of).expect("nonempty"))
                .reduce(S::min_of)
                .expect("nonempty")
        } else {
            table
                .iter()
                .map(|row| row.iter().cloned().reduce(S::min_of).expect("nonempty"))
                .reduce(S::max_of)
                .expect("nonempty")
        };
        self.memo.insert(key, value.clone());
        Ok(value)
    }

    fn at_zero(&mut self) -> Result<S> {
        let m = self.contract.tranches();
        let first = self.contract.date_of(1);
        let mut roots = Vec::with_capacity(first + 1);
        for ups in 0..=first {
            roots.push(self.value(1, ups, Coalition::all(m))?);
        }
        Ok(self.measure.rollback(self.lattice, &roots, 0, first)?.remove(0))
    }
}

/// Coalition value bounds at time 0 for the put game.
pub fn tranche_coalition_bounds<S: Scalar>(
    contract: &TrancheContract<S>,
    valuation: &TrancheValuation<S>,
    coalition: Coalition,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
) -> Result<TrancheCoalitionBounds<S>> {
    let mut bounds = Vec::with_capacity(2);
    for min_outer in [false, true] {
        let mut eval = BoundsEval {
            contract,
            valuation,
            lattice,
            measure,
            coalition,
            min_outer,
            planner: false,
            memo: HashMap::new(),
        };
        bounds.push(eval.at_zero()?);
    }
    let upper = bounds.pop().expect("two bounds");
    let lower = bounds.pop().expect("two bounds");
    Ok(TrancheCoalitionBounds {
        coalition,
        lower,
        upper,
        member_sum: coalition.members().map(|i| valuation.initial[i].clone()).sum(),
    })
}

/// Largest total time-0 payoff of all original holders over all put
/// profiles.
pub fn tranche_planner_value<S: Scalar>(
    contract: &TrancheContract<S>,
    valuation: &TrancheValuation<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
) -> Result<S> {
    let mut eval = BoundsEval {
        contract,
        valuation,
        lattice,
        measure,
        coalition: Coalition::all(contract.tranches()),
        min_outer: true,
        planner: true,
        memo: HashMap::new(),
    };
    eval.at_zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    fn r(v: i64) -> Rational {
        ratio(v, 1)
    }

    fn rv(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| r(x)).collect()
    }

    #[test]
    fn hyperplane_examples() {
        let x = project_hyperplane(&rv(&[1, 1]), Coalition::singleton(0), &rv(&[0, 0]), &r(2)).unwrap();
        assert_eq!(x, rv(&[0, 2]));
        let x = project_hyperplane(&rv(&[1, 2]), Coalition::empty(), &rv(&[0, 0]), &r(3)).unwrap();
        assert_eq!(x, rv(&[1, 2]));
        let x = project_hyperplane(&rv(&[3, 1, 2]), Coalition::singleton(2), &rv(&[0, 0, 2]), &r(6)).unwrap();
        assert_eq!(x, rv(&[3, 1, 2]));
        let x = project_hyperplane(&rv(&[3, 1, 2]), Coalition::singleton(2), &rv(&[0, 0, 2]), &r(7)).unwrap();
        assert_eq!(x, vec![ratio(7, 2), ratio(3, 2), r(2)]);
        assert_eq!(
            project_hyperplane(&rv(&[1, 1]), Coalition::all(2), &rv(&[0, 0]), &r(1)),
            Err(PricingError::DegenerateHyperplane)
        );
    }

    #[test]
    fn simplex_examples() {
        assert_eq!(project_simplex(&rv(&[1, 1]), &rv(&[0, 0]), &r(2)).unwrap(), rv(&[1, 1]));
        assert_eq!(project_simplex(&rv(&[3, 1]), &rv(&[0, 0]), &r(2)).unwrap(), rv(&[2, 0]));
        assert_eq!(project_simplex(&rv(&[2, -1, 1]), &rv(&[0, 0, 0]), &r(1)).unwrap(), rv(&[1, 0, 0]));
        assert!(matches!(
            project_simplex(&rv(&[0, 0]), &rv(&[1, 1]), &r(1)),
            Err(PricingError::EmptySimplex { .. })
        ));
    }

    #[test]
    fn put_set_examples() {
        assert_eq!(put_set(&rv(&[2, -1]), &rv(&[0, 0]), &r(1)).unwrap(), Coalition::singleton(1));
        assert_eq!(put_set(&rv(&[2, 3]), &rv(&[0, 0]), &r(5)).unwrap(), Coalition::empty());
        assert_eq!(put_set(&rv(&[0, 0]), &rv(&[0, 0]), &r(0)).unwrap(), Coalition::all(2));
    }

    #[test]
    fn float_put_set_uses_relative_tolerance() {
        let e = put_set(&[2.0, -1.0 + 1e-12], &[0.0, 0.0], &(1.0 + 1e-12)).unwrap();
        assert_eq!(e, Coalition::singleton(1));
    }

    fn one_date_contract() -> (TrancheContract<Rational>, MarketLattice<Rational>) {
        // constants 2 and -1 at maturity 1 = the single decision date
        let lattice = MarketLattice::build(r(4), r(2), ratio(1, 2), r(1), 1).unwrap();
        let legs = vec![
            TrancheLeg::european(LegPayoff::Constant(r(2))),
            TrancheLeg::european(LegPayoff::Constant(r(-1))),
        ];
        let contract = TrancheContract::from_rule(legs, vec![1], 1, &lattice, |_, _, _, _| r(0)).unwrap();
        (contract, lattice)
    }

    #[test]
    fn single_decision_projects_onto_the_simplex() {
        let (contract, lattice) = one_date_contract();
        let q = MartingaleMeasure::of(&lattice);
        let v = value_tranches(&contract, &lattice, &q).unwrap();
        for node in &v.levels[0].nodes {
            assert_eq!(node.value, rv(&[1, 0]));
            assert_eq!(node.put_set, Coalition::singleton(1));
        }
        assert_eq!(v.initial, rv(&[1, 0]));
        assert_eq!(v.option_prices, rv(&[2, -1]));
        let pay = payoff_of_profile(&contract, &v, &v, &lattice, &q, &[]).unwrap();
        assert_eq!(pay.initial, v.initial);
    }

    #[test]
    fn zero_sum_violation_is_reported() {
        let lattice = MarketLattice::build(r(4), r(2), ratio(1, 2), r(1), 1).unwrap();
        let q = MartingaleMeasure::of(&lattice);
        let legs = vec![TrancheLeg::european(LegPayoff::Constant(r(1))); 2];
        let contract = TrancheContract::from_rule(legs, vec![1], 1, &lattice, |_, _, _, _| r(2)).unwrap();
        assert!(matches!(
            value_tranches(&contract, &lattice, &q),
            Err(PricingError::ZeroSumViolation { decision: 1, date: 1, .. })
        ));
    }

    #[test]
    fn single_tranche_reduces_to_rollback() {
        let lattice = MarketLattice::build(r(4), r(2), ratio(1, 2), ratio(5, 4), 2).unwrap();
        let q = MartingaleMeasure::of(&lattice);
        let legs = vec![TrancheLeg::european(LegPayoff::Call(r(4)))];
        let contract = TrancheContract::from_rule(legs, vec![1, 2], 2, &lattice, |_, _, _, _| r(-1)).unwrap();
        let v = value_tranches(&contract, &lattice, &q).unwrap();
        assert_eq!(v.initial, v.option_prices);
        // call on 16 / 4 / 1 with strike 4: (12, 0, 0), q = 1/2, R = 5/4
        assert_eq!(v.option_prices, vec![ratio(12 * 16, 4 * 25)]);
    }

    #[test]
    fn american_leg_is_worth_at_least_european() {
        let lattice = MarketLattice::build(r(4), r(2), ratio(1, 2), ratio(5, 4), 2).unwrap();
        let q = MartingaleMeasure::of(&lattice);
        let euro = vec![TrancheLeg::european(LegPayoff::Put(r(4)))];
        let amer = vec![TrancheLeg::american(LegPayoff::Put(r(4)))];
        let rule = |_: usize, _: usize, _: Node, _: &Rational| r(-10);
        let ve = value_tranches(&TrancheContract::from_rule(euro, vec![1], 2, &lattice, rule).unwrap(), &lattice, &q).unwrap();
        let va = value_tranches(&TrancheContract::from_rule(amer, vec![1], 2, &lattice, rule).unwrap(), &lattice, &q).unwrap();
        assert!(va.initial[0] > ve.initial[0]);
    }

    #[test]
    fn state_count() {
        let (contract, _) = one_date_contract();
        assert_eq!(all_states(&contract).len(), 2);
    }
}
