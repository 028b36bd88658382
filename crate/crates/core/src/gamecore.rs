//! Perfect-information stochastic games played on a market lattice.
//!
//! A game state is `(date, lattice node, joint-action history)`. The market
//! part recombines, the action history does not. At every live state all
//! players move simultaneously; the termination rule then decides whether
//! the contract settles at that date with the payoff vector, or continues to
//! the two market successors. Settlement is forced at the game horizon.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::lattice::{MarketLattice, MartingaleMeasure, Node};
use crate::scalar::Scalar;

/// A set of players, stored as a bit mask over 0-based player indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition(u32);

impl Coalition {
    pub const MAX_PLAYERS: usize = 30;

    pub fn empty() -> Self {
        Coalition(0)
    }

    pub fn all(players: usize) -> Self {
        assert!(players <= Self::MAX_PLAYERS);
        Coalition(((1u64 << players) - 1) as u32)
    }

    pub fn singleton(player: usize) -> Self {
        Coalition(1 << player)
    }

    pub fn from_members(members: &[usize]) -> Self {
        Coalition(members.iter().fold(0, |acc, &p| acc | (1 << p)))
    }

    pub fn from_bits(bits: u32) -> Self {
        Coalition(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, player: usize) -> bool {
        self.0 & (1 << player) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn complement(self, players: usize) -> Self {
        Coalition(!self.0 & Self::all(players).0)
    }

    pub fn union(self, other: Coalition) -> Self {
        Coalition(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in increasing order (0-based).
    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&p| self.0 & (1 << p) != 0)
    }

    /// Every non-empty coalition of `players`, ordered by size and then
    /// lexicographically by members.
    pub fn nonempty_subsets(players: usize) -> Vec<Coalition> {
        let mut all: Vec<Coalition> = (1..(1u32 << players)).map(Coalition).collect();
        all.sort_by_key(|c| (c.len(), c.members().collect::<Vec<_>>()));
        all
    }

    /// Every non-empty sub-coalition of `self`.
    pub fn nonempty_parts(self) -> Vec<Coalition> {
        let mut parts = Vec::new();
        let mut sub = self.0;
        while sub != 0 {
            parts.push(Coalition(sub));
            sub = (sub - 1) & self.0;
        }
        parts.sort_by_key(|c| (c.len(), c.members().collect::<Vec<_>>()));
        parts
    }

    /// Parses a 1-based member list such as `"1,3"`.
    pub fn parse(text: &str, players: usize) -> Result<Self> {
        let text = text.trim().trim_start_matches('{').trim_end_matches('}');
        let mut members = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let index: usize = part
                .parse()
                .map_err(|_| PricingError::Domain(format!("bad player index {part:?}")))?;
            if index == 0 || index > players {
                return Err(PricingError::Domain(format!(
                    "player {index} outside 1..={players}"
                )));
            }
            members.push(index - 1);
        }
        Ok(Coalition::from_members(&members))
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.members().map(|p| (p + 1).to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// One action index per player, for a single date.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction(pub Vec<usize>);

impl JointAction {
    pub fn player(&self, player: usize) -> usize {
        self.0[player]
    }

    /// Assembles a joint action from the moves of a coalition and of its
    /// complement, each listed in increasing member order.
    pub fn merge(players: usize, coalition: Coalition, inside: &[usize], outside: &[usize]) -> Self {
        let mut joint = Vec::with_capacity(players);
        let (mut i, mut o) = (0, 0);
        for p in 0..players {
            if coalition.contains(p) {
                joint.push(inside[i]);
                i += 1;
            } else {
                joint.push(outside[o]);
                o += 1;
            }
        }
        JointAction(joint)
    }

    /// Moves of the members of `coalition`, in increasing member order.
    pub fn restrict(&self, coalition: Coalition) -> Vec<usize> {
        coalition.members().map(|p| self.0[p]).collect()
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A decision point of the game, observed before date-`date` actions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GameState {
    pub date: usize,
    pub ups: usize,
    pub history: Vec<JointAction>,
}

impl GameState {
    pub fn root() -> Self {
        Self {
            date: 0,
            ups: 0,
            history: Vec::new(),
        }
    }

    pub fn new(date: usize, ups: usize, history: Vec<JointAction>) -> Result<Self> {
        if history.len() != date {
            return Err(PricingError::Domain(format!(
                "state at date {date} needs {date} history entries, got {}",
                history.len()
            )));
        }
        if ups > date {
            return Err(PricingError::Domain(format!("node {ups} does not exist at date {date}")));
        }
        Ok(Self { date, ups, history })
    }

    pub fn node(&self) -> Node {
        Node::new(self.date, self.ups)
    }

    /// Successor after `action` and one market move.
    pub fn child(&self, action: &JointAction, up: bool) -> Self {
        let mut history = self.history.clone();
        history.push(action.clone());
        Self {
            date: self.date + 1,
            ups: self.ups + usize::from(up),
            history,
        }
    }
}

impl fmt::Display for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} node={}", self.date, self.ups)?;
        if !self.history.is_empty() {
            let parts: Vec<String> = self.history.iter().map(|a| format!("({a})")).collect();
            write!(f, " history={}", parts.join(""))?;
        }
        Ok(())
    }
}

/// What the termination and payoff rules observe: market node and the action
/// history up to and including the current date.
#[derive(Debug)]
pub struct Situation<'a, S> {
    pub node: Node,
    pub price: &'a S,
    pub history: &'a [JointAction],
}

impl<S> Situation<'_, S> {
    pub fn date(&self) -> usize {
        self.node.date
    }

    /// The joint action taken at the current date.
    pub fn current(&self) -> &JointAction {
        self.history.last().expect("situation always carries the current action")
    }
}

pub type TerminationRule<S> = Arc<dyn Fn(&Situation<S>) -> bool + Send + Sync>;
pub type PayoffRule<S> = Arc<dyn Fn(&Situation<S>) -> Vec<S> + Send + Sync>;

/// A finite multi-player game: action sets, horizon, termination and payoff
/// rules. Settlement is forced at `horizon`.
#[derive(Clone)]
pub struct GameSpec<S> {
    action_labels: Vec<Vec<String>>,
    horizon: usize,
    termination: TerminationRule<S>,
    payoff: PayoffRule<S>,
}

impl<S: Scalar> fmt::Debug for GameSpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("action_labels", &self.action_labels)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> GameSpec<S> {
    /// A game with the given action labels per player. Until rules are set,
    /// it never terminates early and pays zero.
    pub fn new(action_labels: Vec<Vec<String>>, horizon: usize) -> Result<Self> {
        if action_labels.is_empty() {
            return Err(PricingError::InvalidGame("a game needs at least one player".into()));
        }
        if action_labels.len() > Coalition::MAX_PLAYERS {
            return Err(PricingError::InvalidGame(format!(
                "at most {} players are supported",
                Coalition::MAX_PLAYERS
            )));
        }
        if let Some(p) = action_labels.iter().position(Vec::is_empty) {
            return Err(PricingError::InvalidGame(format!("player {} has no actions", p + 1)));
        }
        let players = action_labels.len();
        Ok(Self {
            action_labels,
            horizon,
            termination: Arc::new(|_| false),
            payoff: Arc::new(move |_| vec![S::zero(); players]),
        })
    }

    /// Shorthand: every player gets actions labelled `0..count`.
    pub fn with_action_counts(counts: &[usize], horizon: usize) -> Result<Self> {
        let labels = counts
            .iter()
            .map(|&n| (0..n).map(|a| a.to_string()).collect())
            .collect();
        Self::new(labels, horizon)
    }

    pub fn with_termination(mut self, rule: impl Fn(&Situation<S>) -> bool + Send + Sync + 'static) -> Self {
        self.termination = Arc::new(rule);
        self
    }

    pub fn with_payoff(mut self, rule: impl Fn(&Situation<S>) -> Vec<S> + Send + Sync + 'static) -> Self {
        self.payoff = Arc::new(rule);
        self
    }

    pub fn players(&self) -> usize {
        self.action_labels.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn action_count(&self, player: usize) -> usize {
        self.action_labels[player].len()
    }

    pub fn action_labels(&self) -> &[Vec<String>] {
        &self.action_labels
    }

    pub fn label(&self, player: usize, action: usize) -> &str {
        &self.action_labels[player][action]
    }

    pub fn everyone(&self) -> Coalition {
        Coalition::all(self.players())
    }

    /// Every combination of moves for the members of `coalition`, in
    /// lexicographic order of declared actions (lowest member most
    /// significant). The empty coalition has exactly one (empty) move.
    pub fn coalition_moves(&self, coalition: Coalition) -> Vec<Vec<usize>> {
        let mut moves = vec![Vec::new()];
        for p in coalition.members() {
            let mut next = Vec::with_capacity(moves.len() * self.action_count(p));
            for prefix in &moves {
                for a in 0..self.action_count(p) {
                    let mut m = prefix.clone();
                    m.push(a);
                    next.push(m);
                }
            }
            moves = next;
        }
        moves
    }

    pub fn joint_actions(&self) -> Vec<JointAction> {
        self.coalition_moves(self.everyone()).into_iter().map(JointAction).collect()
    }

    pub fn check_lattice(&self, lattice: &MarketLattice<S>) -> Result<()> {
        if self.horizon > lattice.steps() {
            return Err(PricingError::InvalidGame(format!(
                "game horizon {} exceeds lattice steps {}",
                self.horizon,
                lattice.steps()
            )));
        }
        Ok(())
    }

    pub fn check_action(&self, action: &JointAction) -> Result<()> {
        if action.0.len() != self.players() {
            return Err(PricingError::InvalidGame(format!(
                "joint action {action} has {} entries for {} players",
                action.0.len(),
                self.players()
            )));
        }
        for (p, &a) in action.0.iter().enumerate() {
            if a >= self.action_count(p) {
                return Err(PricingError::InvalidGame(format!(
                    "action {a} out of range for player {}",
                    p + 1
                )));
            }
        }
        Ok(())
    }

    fn with_situation<R>(
        &self,
        lattice: &MarketLattice<S>,
        state: &GameState,
        action: &JointAction,
        f: impl FnOnce(&Situation<S>) -> R,
    ) -> R {
        let mut history = state.history.clone();
        history.push(action.clone());
        let price = lattice.price(state.node());
        let situation = Situation {
            node: state.node(),
            price: &price,
            history: &history,
        };
        f(&situation)
    }

    /// Whether `action` at the live `state` settles the contract.
    pub fn settles(&self, lattice: &MarketLattice<S>, state: &GameState, action: &JointAction) -> bool {
        state.date >= self.horizon || self.with_situation(lattice, state, action, |s| (self.termination)(s))
    }

    /// Payoff vector (time-`date` currency) when `action` settles at `state`.
    pub fn payoff(&self, lattice: &MarketLattice<S>, state: &GameState, action: &JointAction) -> Result<Vec<S>> {
        let payoff = self.with_situation(lattice, state, action, |s| (self.payoff)(s));
        if payoff.len() != self.players() {
            return Err(PricingError::InvalidGame(format!(
                "payoff at {state} has {} entries for {} players",
                payoff.len(),
                self.players()
            )));
        }
        Ok(payoff)
    }

    /// Payoff vector discounted to time 0.
    pub fn discounted_payoff(
        &self,
        lattice: &MarketLattice<S>,
        state: &GameState,
        action: &JointAction,
    ) -> Result<Vec<S>> {
        let numeraire = lattice.numeraire(state.date);
        Ok(self
            .payoff(lattice, state, action)?
            .into_iter()
            .map(|v| v / numeraire.clone())
            .collect())
    }

    /// Every live state reachable from `from` under some play, in
    /// breadth-first (date-major) order.
    pub fn reachable_states(&self, lattice: &MarketLattice<S>, from: &GameState) -> Vec<GameState> {
        let joint = self.joint_actions();
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        let mut frontier = vec![from.clone()];
        seen.insert(from.clone());
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for state in frontier {
                for action in &joint {
                    if self.settles(lattice, &state, action) {
                        continue;
                    }
                    for up in [false, true] {
                        let child = state.child(action, up);
                        if seen.insert(child.clone()) {
                            next.push(child);
                        }
                    }
                }
                order.push(state);
            }
            frontier = next;
        }
        order
    }

    /// Every `(state, action)` pair at which the game settles, reachable from
    /// `from`.
    pub fn settlement_points(&self, lattice: &MarketLattice<S>, from: &GameState) -> Vec<(GameState, JointAction)> {
        let joint = self.joint_actions();
        let mut points = Vec::new();
        for state in self.reachable_states(lattice, from) {
            for action in &joint {
                if self.settles(lattice, &state, action) {
                    points.push((state.clone(), action.clone()));
                }
            }
        }
        points
    }

    /// `true` if payoffs sum to zero at every reachable settlement.
    pub fn is_zero_sum(&self, lattice: &MarketLattice<S>, from: &GameState) -> Result<bool> {
        for (state, action) in self.settlement_points(lattice, from) {
            let total: S = self.payoff(lattice, &state, &action)?.into_iter().sum();
            if !total.approx_eq(&S::zero()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A (possibly partial) assignment of actions to players at game states.
pub trait Strategy {
    fn action(&self, player: usize, state: &GameState) -> Option<usize>;
}

impl<T: Strategy + ?Sized> Strategy for &T {
    fn action(&self, player: usize, state: &GameState) -> Option<usize> {
        (**self).action(player, state)
    }
}

/// Strategy given by a closure `(player, state) -> action`.
pub struct FnStrategy<F>(pub F);

impl<F: Fn(usize, &GameState) -> Option<usize>> Strategy for FnStrategy<F> {
    fn action(&self, player: usize, state: &GameState) -> Option<usize> {
        (self.0)(player, state)
    }
}

/// Members of `coalition` follow `inside`, everyone else follows `outside`.
pub struct Combined<'a> {
    pub coalition: Coalition,
    pub inside: &'a dyn Strategy,
    pub outside: &'a dyn Strategy,
}

impl Strategy for Combined<'_> {
    fn action(&self, player: usize, state: &GameState) -> Option<usize> {
        if self.coalition.contains(player) {
            self.inside.action(player, state)
        } else {
            self.outside.action(player, state)
        }
    }
}

/// Table-backed pure strategies, one map per player. A coalition strategy
/// simply leaves non-members' tables empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyProfile {
    tables: Vec<BTreeMap<GameState, usize>>,
}

impl StrategyProfile {
    pub fn new(players: usize) -> Self {
        Self {
            tables: vec![BTreeMap::new(); players],
        }
    }

    pub fn players(&self) -> usize {
        self.tables.len()
    }

    pub fn set(&mut self, player: usize, state: GameState, action: usize) {
        self.tables[player].insert(state, action);
    }

    /// Assigns the moves of every member of `coalition` at `state`.
    pub fn set_moves(&mut self, coalition: Coalition, state: &GameState, moves: &[usize]) {
        for (p, &a) in coalition.members().zip(moves) {
            self.tables[p].insert(state.clone(), a);
        }
    }

    pub fn table(&self, player: usize) -> &BTreeMap<GameState, usize> {
        &self.tables[player]
    }

    /// Keeps only the tables of `coalition`.
    pub fn restrict(&self, coalition: Coalition) -> Self {
        let tables = self
            .tables
            .iter()
            .enumerate()
            .map(|(p, t)| if coalition.contains(p) { t.clone() } else { BTreeMap::new() })
            .collect();
        Self { tables }
    }

    /// Tables of `coalition` from `inside`, the rest from `outside`.
    pub fn combine(coalition: Coalition, inside: &StrategyProfile, outside: &StrategyProfile) -> Self {
        let tables = (0..inside.players().max(outside.players()))
            .map(|p| {
                let src = if coalition.contains(p) { inside } else { outside };
                src.tables.get(p).cloned().unwrap_or_default()
            })
            .collect();
        Self { tables }
    }

    /// Fills every reachable live state with a constant action per player.
    pub fn constant<S: Scalar>(game: &GameSpec<S>, lattice: &MarketLattice<S>, from: &GameState, actions: &[usize]) -> Self {
        let mut profile = Self::new(game.players());
        for state in game.reachable_states(lattice, from) {
            for (p, &a) in actions.iter().enumerate() {
                profile.set(p, state.clone(), a);
            }
        }
        profile
    }

    /// Total number of assigned (player, state) entries.
    pub fn len(&self) -> usize {
        self.tables.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Strategy for StrategyProfile {
    fn action(&self, player: usize, state: &GameState) -> Option<usize> {
        self.tables.get(player)?.get(state).copied()
    }
}

/// Joint action of all players at `state`, or the first missing player.
pub fn joint_action<S: Scalar>(game: &GameSpec<S>, strategy: &dyn Strategy, state: &GameState) -> Result<JointAction> {
    let mut joint = Vec::with_capacity(game.players());
    for p in 0..game.players() {
        match strategy.action(p, state) {
            Some(a) if a < game.action_count(p) => joint.push(a),
            Some(a) => {
                return Err(PricingError::InvalidGame(format!(
                    "strategy picks action {a} for player {} at {state}, which has {} actions",
                    p + 1,
                    game.action_count(p)
                )))
            }
            None => {
                return Err(PricingError::IncompleteStrategy {
                    player: p + 1,
                    state: state.to_string(),
                })
            }
        }
    }
    Ok(JointAction(joint))
}

/// The play along one market path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome<S> {
    /// Market moves (`true` = up) from the starting date to the horizon.
    pub moves: Vec<bool>,
    /// Joint actions from the starting date to settlement, inclusive.
    pub actions: Vec<JointAction>,
    pub settlement: GameState,
    /// Payoff in settlement-date currency.
    pub payoff: Vec<S>,
    /// Payoff discounted to time 0.
    pub discounted: Vec<S>,
    pub probability: S,
}

impl<S: Scalar> PathOutcome<S> {
    pub fn settlement_date(&self) -> usize {
        self.settlement.date
    }

    /// Full outcome from date 0: prefix history plus played actions.
    pub fn full_history(&self, start: &GameState) -> Vec<JointAction> {
        let mut h = start.history.clone();
        h.extend(self.actions.iter().cloned());
        h
    }
}

/// Outcome of a strategy profile played from a state, one entry per market
/// path in lexicographic order (down before up).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<S> {
    pub start: GameState,
    pub paths: Vec<PathOutcome<S>>,
}

impl<S: Scalar> Outcome<S> {
    /// `E_Q` of the discounted payoff vector, expressed in time-0 units.
    pub fn expected_discounted(&self) -> Vec<S> {
        let players = self.paths.first().map_or(0, |p| p.payoff.len());
        let mut total = vec![S::zero(); players];
        for path in &self.paths {
            for (acc, v) in total.iter_mut().zip(&path.discounted) {
                *acc = acc.clone() + path.probability.clone() * v.clone();
            }
        }
        total
    }

    pub fn expected_coalition(&self, coalition: Coalition) -> S {
        let v = self.expected_discounted();
        coalition.members().map(|p| v[p].clone()).sum()
    }
}

fn market_paths(len: usize) -> Vec<Vec<bool>> {
    (0..(1usize << len))
        .map(|bits| (0..len).map(|k| bits >> (len - 1 - k) & 1 == 1).collect())
        .collect()
}

/// Plays `strategy` forward from `from` along every market path.
pub fn play<S: Scalar>(
    strategy: &dyn Strategy,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    from: &GameState,
) -> Result<Outcome<S>> {
    game.check_lattice(lattice)?;
    if from.date > game.horizon() {
        return Err(PricingError::Domain(format!("state {from} is past the game horizon")));
    }
    let remaining = game.horizon() - from.date;
    let mut paths = Vec::with_capacity(1 << remaining);
    for moves in market_paths(remaining) {
        let mut state = from.clone();
        let mut actions = Vec::new();
        let mut step = 0;
        loop {
            let action = joint_action(game, strategy, &state)?;
            actions.push(action.clone());
            if game.settles(lattice, &state, &action) {
                let payoff = game.payoff(lattice, &state, &action)?;
                let discounted = game.discounted_payoff(lattice, &state, &action)?;
                let ups = moves.iter().filter(|&&m| m).count();
                paths.push(PathOutcome {
                    probability: measure.path_probability(ups, moves.len()),
                    moves,
                    actions,
                    settlement: state,
                    payoff,
                    discounted,
                });
                break;
            }
            state = state.child(&action, moves[step]);
            step += 1;
        }
    }
    Ok(Outcome {
        start: from.clone(),
        paths,
    })
}

/// First date at which two outcomes differ, capped at `horizon`, per path.
/// Dates after settlement compare as "no action".
pub fn divergence_time<S: Scalar>(a: &Outcome<S>, b: &Outcome<S>, horizon: usize) -> Vec<usize> {
    a.paths
        .iter()
        .zip(&b.paths)
        .map(|(pa, pb)| {
            let ha = pa.full_history(&a.start);
            let hb = pb.full_history(&b.start);
            (0..=horizon)
                .find(|&t| ha.get(t) != hb.get(t))
                .map_or(horizon, |t| t.min(horizon))
        })
        .collect()
}

/// A pair of outcomes on which a mapping breaks predictability/adaptedness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub date: usize,
    pub moves: Vec<bool>,
    pub first: Vec<JointAction>,
    pub second: Vec<JointAction>,
}

fn all_outcomes<S: Scalar>(game: &GameSpec<S>) -> Vec<Vec<JointAction>> {
    let joint = game.joint_actions();
    let mut outcomes = vec![Vec::new()];
    for _ in 0..=game.horizon() {
        outcomes = outcomes
            .into_iter()
            .flat_map(|prefix| {
                joint.iter().map(move |a| {
                    let mut h = prefix.clone();
                    h.push(a.clone());
                    h
                })
            })
            .collect();
    }
    outcomes
}

fn check_mapping<S: Scalar, C: PartialEq>(
    game: &GameSpec<S>,
    inclusive: bool,
    f: impl Fn(&[bool], usize, &[JointAction]) -> C,
) -> std::result::Result<(), Violation> {
    let horizon = game.horizon();
    let outcomes = all_outcomes(game);
    for moves in market_paths(horizon) {
        for (i, h) in outcomes.iter().enumerate() {
            for g in &outcomes[i + 1..] {
                let rho = (0..=horizon).find(|&t| h[t] != g[t]).unwrap_or(horizon);
                let last = if inclusive { rho + 1 } else { rho };
                for t in 0..last.min(horizon + 1) {
                    if f(&moves, t, h) != f(&moves, t, g) {
                        return Err(Violation {
                            date: t,
                            moves: moves.clone(),
                            first: h.clone(),
                            second: g.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Checks that `f(path, t, h)` agrees on every pair of outcomes up to and
/// including their divergence date.
pub fn check_predictable<S: Scalar, C: PartialEq>(
    game: &GameSpec<S>,
    f: impl Fn(&[bool], usize, &[JointAction]) -> C,
) -> std::result::Result<(), Violation> {
    check_mapping(game, true, f)
}

/// Checks that `f(path, t, h)` agrees on every pair of outcomes strictly
/// before their divergence date.
pub fn check_adapted<S: Scalar, C: PartialEq>(
    game: &GameSpec<S>,
    f: impl Fn(&[bool], usize, &[JointAction]) -> C,
) -> std::result::Result<(), Violation> {
    check_mapping(game, false, f)
}

/// Number of full coalition strategies from `from`: the product of the
/// coalition's move counts over every reachable live state.
pub fn count_strategies<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    from: &GameState,
) -> u128 {
    let per_state = game.coalition_moves(coalition).len() as u128;
    let states = game.reachable_states(lattice, from).len();
    (0..states).fold(1u128, |acc, _| acc.saturating_mul(per_state))
}

/// Every coalition strategy defined on all reachable live states from
/// `from`, each produced exactly once.
pub fn enumerate_strategies<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    from: &GameState,
    budget: u128,
) -> Result<Vec<StrategyProfile>> {
    let states = game.reachable_states(lattice, from);
    enumerate_strategies_over(coalition, game, &states, budget)
}

/// Every coalition strategy on an explicit set of decision states.
pub fn enumerate_strategies_over<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    states: &[GameState],
    budget: u128,
) -> Result<Vec<StrategyProfile>> {
    let moves = game.coalition_moves(coalition);
    let required = (0..states.len()).fold(1u128, |acc, _| acc.saturating_mul(moves.len() as u128));
    if required > budget {
        return Err(PricingError::BudgetExceeded { required, budget });
    }
    let mut out = Vec::with_capacity(required as usize);
    let mut digits = vec![0usize; states.len()];
    loop {
        let mut profile = StrategyProfile::new(game.players());
        for (state, &d) in states.iter().zip(&digits) {
            profile.set_moves(coalition, state, &moves[d]);
        }
        out.push(profile);
        // odometer increment
        let mut k = 0;
        loop {
            if k == digits.len() {
                return Ok(out);
            }
            digits[k] += 1;
            if digits[k] < moves.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// Coalition strategies defined only on states consistent with the
/// coalition's own earlier moves (any moves by the other players). These
/// are representatives of the outcome-equivalence classes of full
/// strategies and are far fewer.
pub fn enumerate_reduced_strategies<S: Scalar>(
    coalition: Coalition,
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    from: &GameState,
    budget: u128,
) -> Result<Vec<StrategyProfile>> {
    let moves = game.coalition_moves(coalition);
    let others = game.coalition_moves(coalition.complement(game.players()));
    let mut out = Vec::new();
    let mut assigned: BTreeMap<GameState, usize> = BTreeMap::new();
    let mut ctx = ReducedCtx {
        coalition,
        game,
        lattice,
        moves: &moves,
        others: &others,
        budget,
        out: &mut out,
    };
    let mut pending = BTreeSet::new();
    pending.insert(from.clone());
    ctx.extend(pending, &mut assigned)?;
    Ok(out)
}

struct ReducedCtx<'a, S: Scalar> {
    coalition: Coalition,
    game: &'a GameSpec<S>,
    lattice: &'a MarketLattice<S>,
    moves: &'a [Vec<usize>],
    others: &'a [Vec<usize>],
    budget: u128,
    out: &'a mut Vec<StrategyProfile>,
}

impl<S: Scalar> ReducedCtx<'_, S> {
    fn extend(&mut self, mut pending: BTreeSet<GameState>, assigned: &mut BTreeMap<GameState, usize>) -> Result<()> {
        // States are processed in date-major order, so a state is complete
        // once popped: its parents were all handled before.
        let Some(state) = pending.pop_first_by_date() else {
            if self.out.len() as u128 >= self.budget {
                return Err(PricingError::BudgetExceeded {
                    required: self.out.len() as u128 + 1,
                    budget: self.budget,
                });
            }
            let mut profile = StrategyProfile::new(self.game.players());
            for (state, &m) in assigned.iter() {
                profile.set_moves(self.coalition, state, &self.moves[m]);
            }
            self.out.push(profile);
            return Ok(());
        };
        if assigned.contains_key(&state) {
            return self.extend(pending, assigned);
        }
        let players = self.game.players();
        for (m, mv) in self.moves.iter().enumerate() {
            let mut next = pending.clone();
            for other in self.others {
                let joint = JointAction::merge(players, self.coalition, mv, other);
                if self.game.settles(self.lattice, &state, &joint) {
                    continue;
                }
                next.insert(state.child(&joint, false));
                next.insert(state.child(&joint, true));
            }
            assigned.insert(state.clone(), m);
            self.extend(next, assigned)?;
            assigned.remove(&state);
        }
        Ok(())
    }
}

trait PopByDate {
    fn pop_first_by_date(&mut self) -> Option<GameState>;
}

impl PopByDate for BTreeSet<GameState> {
    fn pop_first_by_date(&mut self) -> Option<GameState> {
        // GameState orders by date first, so the minimum has the lowest date.
        self.pop_first()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    fn lattice(steps: usize) -> MarketLattice<Rational> {
        MarketLattice::build(ratio(4, 1), ratio(2, 1), ratio(1, 2), ratio(1, 1), steps).unwrap()
    }

    /// Player 1 picks the row, player 2 the column; 1 = defect.
    pub(crate) fn dilemma() -> GameSpec<Rational> {
        GameSpec::with_action_counts(&[2, 2], 0)
            .unwrap()
            .with_payoff(|s| {
                let a = s.current();
                let (x, y) = match (a.player(0), a.player(1)) {
                    (0, 0) => (1, 1),
                    (0, 1) => (-1, 2),
                    (1, 0) => (2, -1),
                    _ => (0, 0),
                };
                vec![ratio(x, 1), ratio(y, 1)]
            })
    }

    #[test]
    fn coalition_basics() {
        let c = Coalition::parse("1,3", 3).unwrap();
        assert_eq!(c.members().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(c.to_string(), "{1,3}");
        assert_eq!(c.complement(3), Coalition::singleton(1));
        assert!(Coalition::parse("4", 3).is_err());
        let order: Vec<String> = Coalition::nonempty_subsets(3).iter().map(|c| c.to_string()).collect();
        assert_eq!(order, vec!["{1}", "{2}", "{3}", "{1,2}", "{1,3}", "{2,3}", "{1,2,3}"]);
        assert_eq!(Coalition::all(3).nonempty_parts().len(), 7);
    }

    #[test]
    fn merge_and_restrict_roundtrip() {
        let c = Coalition::from_members(&[1]);
        let j = JointAction::merge(3, c, &[5], &[7, 8]);
        assert_eq!(j, JointAction(vec![7, 5, 8]));
        assert_eq!(j.restrict(c), vec![5]);
        assert_eq!(j.restrict(c.complement(3)), vec![7, 8]);
    }

    #[test]
    fn dilemma_mutual_defection_pays_zero() {
        let game = dilemma();
        let l = lattice(1);
        let q = MartingaleMeasure::of(&l);
        let profile = StrategyProfile::constant(&game, &l, &GameState::root(), &[1, 1]);
        let out = play(&profile, &game, &l, &q, &GameState::root()).unwrap();
        assert_eq!(out.expected_discounted(), vec![ratio(0, 1), ratio(0, 1)]);
    }

    #[test]
    fn constant_game_pays_constant_everywhere() {
        let game = GameSpec::with_action_counts(&[2, 3], 2)
            .unwrap()
            .with_termination(|_| true)
            .with_payoff(|_| vec![ratio(3, 1), ratio(-2, 1)]);
        let l = lattice(2);
        let q = MartingaleMeasure::of(&l);
        let profile = StrategyProfile::constant(&game, &l, &GameState::root(), &[1, 2]);
        let out = play(&profile, &game, &l, &q, &GameState::root()).unwrap();
        for p in &out.paths {
            assert_eq!(p.payoff, vec![ratio(3, 1), ratio(-2, 1)]);
            assert_eq!(p.settlement_date(), 0);
        }
    }

    #[test]
    fn two_period_game_matches_hand_simulation() {
        // One player, actions {wait, stop}; stop pays the stock price,
        // settlement forced at date 1 pays zero.
        let game = GameSpec::<Rational>::with_action_counts(&[2], 1)
            .unwrap()
            .with_termination(|s| s.current().player(0) == 1)
            .with_payoff(|s| {
                if s.current().player(0) == 1 {
                    vec![s.price.clone()]
                } else {
                    vec![ratio(0, 1)]
                }
            });
        let l = lattice(1);
        let q = MartingaleMeasure::of(&l);
        // wait at 0, stop at 1 everywhere
        let profile = FnStrategy(|_, s: &GameState| Some(usize::from(s.date == 1)));
        let out = play(&profile, &game, &l, &q, &GameState::root()).unwrap();
        assert_eq!(out.paths.len(), 2);
        assert_eq!(out.paths[0].moves, vec![false]);
        assert_eq!(out.paths[0].payoff, vec![ratio(2, 1)]);
        assert_eq!(out.paths[0].probability, ratio(2, 3));
        assert_eq!(out.paths[1].payoff, vec![ratio(8, 1)]);
        assert_eq!(out.paths[1].probability, ratio(1, 3));
        assert_eq!(out.expected_discounted(), vec![ratio(4, 1)]);
    }

    #[test]
    fn incomplete_strategy_is_reported() {
        let game = dilemma();
        let l = lattice(1);
        let q = MartingaleMeasure::of(&l);
        let mut profile = StrategyProfile::new(2);
        profile.set(0, GameState::root(), 0);
        let err = play(&profile, &game, &l, &q, &GameState::root()).unwrap_err();
        assert!(matches!(err, PricingError::IncompleteStrategy { player: 2, .. }));
    }

    fn two_date_game() -> GameSpec<Rational> {
        GameSpec::with_action_counts(&[2], 2)
            .unwrap()
            .with_payoff(|s| vec![ratio(s.history.iter().map(|a| a.player(0) as i64).sum(), 1)])
    }

    #[test]
    fn divergence_cases() {
        let game = two_date_game();
        let l = lattice(2);
        let q = MartingaleMeasure::of(&l);
        let zero = StrategyProfile::constant(&game, &l, &GameState::root(), &[0]);
        let one = StrategyProfile::constant(&game, &l, &GameState::root(), &[1]);
        let a = play(&zero, &game, &l, &q, &GameState::root()).unwrap();
        let b = play(&one, &game, &l, &q, &GameState::root()).unwrap();
        assert_eq!(divergence_time(&a, &a, 2), vec![2; 4]);
        assert_eq!(divergence_time(&a, &b, 2), vec![0; 4]);
        // differ only at date 2 after an up-move at date 0 -> paths (up, *)
        let late = FnStrategy(|_, s: &GameState| Some(usize::from(s.date == 2 && s.ups >= 1 && s.history.len() == 2 && s.ups == 2 || (s.date == 2 && s.ups == 1 && false))));
        let c = play(&late, &game, &l, &q, &GameState::root()).unwrap();
        // late differs from zero only on the up-up path, at date 2
        assert_eq!(divergence_time(&a, &c, 2), vec![2, 2, 2, 2]);
        let early_up = FnStrategy(|_, s: &GameState| Some(usize::from(s.date == 1 && s.ups == 1)));
        let d = play(&early_up, &game, &l, &q, &GameState::root()).unwrap();
        // paths: dd, du, ud, uu -> divergence at 1 on the two up-first paths
        assert_eq!(divergence_time(&a, &d, 2), vec![2, 2, 1, 1]);
    }

    #[test]
    fn predictability_checks() {
        let game = GameSpec::<Rational>::with_action_counts(&[2], 1).unwrap();
        assert!(check_predictable(&game, |_, t, _| t).is_ok());
        assert!(check_adapted(&game, |_, t, h: &[JointAction]| h[t].clone()).is_ok());
        let v = check_predictable(&game, |_, t, h: &[JointAction]| h[t].clone()).unwrap_err();
        assert_eq!(v.date, (0..=1).find(|&t| v.first[t] != v.second[t]).unwrap());
        assert!(check_predictable(&game, |_, t, h: &[JointAction]| if t == 0 { None } else { Some(h[t - 1].clone()) }).is_ok());
    }

    #[test]
    fn strategy_counts() {
        let l = lattice(1);
        // one date, one node
        let g0 = GameSpec::<Rational>::with_action_counts(&[2], 0).unwrap();
        assert_eq!(enumerate_strategies(Coalition::singleton(0), &g0, &l, &GameState::root(), 100).unwrap().len(), 2);
        // a date-1 decision seen from the root of a game where date 0 always
        // continues: 1 root state + 2 nodes x 2 histories
        let g1 = GameSpec::<Rational>::with_action_counts(&[2], 1).unwrap();
        assert_eq!(count_strategies(Coalition::singleton(0), &g1, &l, &GameState::root()), 32);
        let from = GameState::new(1, 0, vec![JointAction(vec![0])]).unwrap();
        assert_eq!(enumerate_strategies(Coalition::singleton(0), &g1, &l, &from, 100).unwrap().len(), 2);
        // two players, each with two actions, at one date with a single state
        let g2 = GameSpec::<Rational>::with_action_counts(&[2, 2], 0).unwrap();
        assert_eq!(enumerate_strategies(Coalition::all(2), &g2, &l, &GameState::root(), 100).unwrap().len(), 4);
        assert!(matches!(
            enumerate_strategies(Coalition::singleton(0), &g1, &l, &GameState::root(), 10),
            Err(PricingError::BudgetExceeded { required: 32, budget: 10 })
        ));
    }

    #[test]
    fn counts_over_explicit_states() {
        let h = vec![JointAction(vec![0])];
        let states = vec![
            GameState::new(1, 0, h.clone()).unwrap(),
            GameState::new(1, 1, h).unwrap(),
        ];
        let g1 = GameSpec::<Rational>::with_action_counts(&[2], 1).unwrap();
        assert_eq!(enumerate_strategies_over(Coalition::singleton(0), &g1, &states, 100).unwrap().len(), 4);
        let h2 = vec![JointAction(vec![0, 0])];
        let states2 = vec![
            GameState::new(1, 0, h2.clone()).unwrap(),
            GameState::new(1, 1, h2).unwrap(),
        ];
        let g2 = GameSpec::<Rational>::with_action_counts(&[2, 2], 1).unwrap();
        assert_eq!(enumerate_strategies_over(Coalition::all(2), &g2, &states2, 100).unwrap().len(), 16);
    }

    #[test]
    fn full_enumeration_produces_distinct_strategies() {
        let l = lattice(1);
        let g = GameSpec::<Rational>::with_action_counts(&[2], 1).unwrap();
        let all = enumerate_strategies(Coalition::singleton(0), &g, &l, &GameState::root(), 1000).unwrap();
        let distinct: BTreeSet<_> = all.iter().map(|p| format!("{:?}", p)).collect();
        assert_eq!(distinct.len(), all.len());
    }

    #[test]
    fn reduced_enumeration_counts() {
        let l = lattice(1);
        let g = GameSpec::<Rational>::with_action_counts(&[2], 1).unwrap();
        // 2 choices at the root, then 2 own-consistent states with 2 choices each
        let reduced = enumerate_reduced_strategies(Coalition::singleton(0), &g, &l, &GameState::root(), 1000).unwrap();
        assert_eq!(reduced.len(), 8);
        let g2 = GameSpec::<Rational>::with_action_counts(&[2, 2], 1).unwrap();
        // own root move (2) x 2 nodes x 2 opponent moves at date 1 (2^4)
        let reduced = enumerate_reduced_strategies(Coalition::singleton(0), &g2, &l, &GameState::root(), 1000).unwrap();
        assert_eq!(reduced.len(), 32);
    }
}
