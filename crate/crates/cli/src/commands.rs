//! The commands, generic over the numeric back-end.

use gameclaims::equilibrium::price_by_equilibrium;
use gameclaims::feasibility::{
    check_feasibility, classify_quotes, game_bounds, tranche_bounds, CoalitionBound, Side,
};
use gameclaims::tranches::{check_equilibrium, value_tranches};
use gameclaims::valuation::{price_interval, superhedge_holder, superhedge_issuer, HedgeSide, QuoteVerdict};
use gameclaims::{Coalition, GameSpec, GameState, MarketLattice, MartingaleMeasure, PricingError, Rational, Scalar, StrategyProfile};

use crate::config::{Body, ContractConfig, GameConfig, Numeric};
use crate::report::*;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Price,
    Interval,
    Equilibrium,
    Hedge,
    ValueTranches,
    CheckArbitrage,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Price => "price",
            CommandKind::Interval => "interval",
            CommandKind::Equilibrium => "equilibrium",
            CommandKind::Hedge => "hedge",
            CommandKind::ValueTranches => "value-tranches",
            CommandKind::CheckArbitrage => "check-arbitrage",
        }
    }
}

/// Everything a command needs beyond the configuration file. `None` fields
/// fall back to the configuration or to the command's default.
#[derive(Debug, Clone)]
pub struct Request {
    pub command: CommandKind,
    pub coalition: Option<String>,
    pub state: Option<(usize, usize)>,
    pub numeric: Option<Numeric>,
    pub budget: Option<u128>,
    pub side: HedgeSide,
    /// Single-tranche quotes, comma separated.
    pub quote: Option<String>,
    /// Separate quotes for combined tranches, as `1,2=3/2`.
    pub combined: Vec<String>,
    /// Run the exhaustive saddle check after valuing tranches.
    pub check: bool,
}

impl Request {
    pub fn new(command: CommandKind) -> Self {
        Self {
            command,
            coalition: None,
            state: None,
            numeric: None,
            budget: None,
            side: HedgeSide::Issuer,
            quote: None,
            combined: Vec::new(),
            check: false,
        }
    }
}

/// Parses `DATE:NODE`.
pub fn parse_state(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("state {text:?} is not DATE:NODE"));
    let (date, node) = text.split_once(':').ok_or_else(bad)?;
    let date = date.trim().parse().map_err(|_| bad())?;
    let node = node.trim().parse().map_err(|_| bad())?;
    Ok((date, node))
}

pub fn execute(config: &ContractConfig, request: &Request) -> Result<Envelope, CliError> {
    let numeric = request.numeric.unwrap_or(config.numeric);
    let budget = request.budget.unwrap_or(config.budget);
    let report = match numeric {
        Numeric::Rational => run::<Rational>(config, request, budget)?,
        Numeric::Float => run::<f64>(config, request, budget)?,
    };
    Ok(Envelope::new(request.command.name(), numeric.name(), report))
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn run<S: Scalar>(config: &ContractConfig, request: &Request, budget: u128) -> Result<Report, CliError> {
    let lattice = config.lattice.build::<S>()?;
    let measure = MartingaleMeasure::of(&lattice);
    let command = request.command;
    match &config.body {
        Body::Game(spec) => {
            if command == CommandKind::ValueTranches {
                return Err(usage("value-tranches needs a [tranches] block"));
            }
            let game = spec.build::<S>();
            game.check_lattice(&lattice)?;
            let at = start_state(&game, &lattice, request.state)?;
            let ctx = GameContext {
                spec,
                game: &game,
                lattice: &lattice,
                measure: &measure,
                at: &at,
            };
            match command {
                CommandKind::Price => ctx.price(request),
                CommandKind::Interval => ctx.interval(request),
                CommandKind::Equilibrium => ctx.equilibrium(budget),
                CommandKind::Hedge => ctx.hedge(request),
                CommandKind::CheckArbitrage => {
                    check_budget(game.players(), budget)?;
                    let bounds = game_bounds(&game, &lattice, &measure, &at)?;
                    feasibility_report(at.to_string(), game.players(), bounds, request)
                }
                CommandKind::ValueTranches => unreachable!(),
            }
        }
        Body::Tranches(spec) => {
            let contract = spec.build::<S>()?;
            let valuation = value_tranches(&contract, &lattice, &measure)?;
            match command {
                CommandKind::ValueTranches => {
                    let saddle = if request.check {
                        let r = check_equilibrium(&contract, &valuation, &lattice, &measure, budget)?;
                        Some(SaddleRow {
                            states: r.states_checked,
                            strategies: r.strategies_checked,
                            violations: r.violations.len(),
                        })
                    } else {
                        None
                    };
                    let mut levels = Vec::new();
                    for level in &valuation.levels {
                        let nodes: Vec<TrancheNodeRow> = level
                            .nodes
                            .iter()
                            .filter(|n| match request.state {
                                Some((date, node)) => level.date == date && n.node.ups == node,
                                None => true,
                            })
                            .map(|n| TrancheNodeRow {
                                node: n.node.ups,
                                price: lattice.price(n.node).render(),
                                continuation: render_all(&n.continuation),
                                put_payoffs: render_all(&n.put_payoffs),
                                value: render_all(&n.value),
                                put_set: n.put_set.to_string(),
                                everyone_puts: n.everyone_puts(),
                            })
                            .collect();
                        if !nodes.is_empty() {
                            levels.push(TrancheLevelRow {
                                level: level.level,
                                date: level.date,
                                nodes,
                            });
                        }
                    }
                    if let (Some((date, node)), true) = (request.state, levels.is_empty()) {
                        return Err(usage(format!("no decision at date {date}, node {node}")));
                    }
                    Ok(Report::Tranches(TrancheReport {
                        initial: render_all(&valuation.initial),
                        option_prices: render_all(&valuation.option_prices),
                        levels,
                        saddle,
                    }))
                }
                CommandKind::CheckArbitrage => {
                    if request.state.is_some_and(|s| s != (0, 0)) {
                        return Err(usage("tranche bounds are only available at time 0"));
                    }
                    let m = contract.tranches();
                    check_budget(m, budget)?;
                    let bounds = tranche_bounds(&contract, &valuation, &lattice, &measure)?;
                    feasibility_report("t=0 node=0".to_string(), m, bounds, request)
                }
                other => Err(usage(format!("{} needs a [game] block", other.name()))),
            }
        }
    }
}

fn render_all<S: Scalar>(values: &[S]) -> Vec<String> {
    values.iter().map(Scalar::render).collect()
}

/// One interval per nonempty coalition.
fn check_budget(players: usize, budget: u128) -> Result<(), CliError> {
    let required = (1u128 << players) - 1;
    if required > budget {
        return Err(PricingError::BudgetExceeded { required, budget }.into());
    }
    Ok(())
}

/// The root, or the lexicographically smallest live state at the requested
/// date and node.
fn start_state<S: Scalar>(
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    state: Option<(usize, usize)>,
) -> Result<GameState, CliError> {
    let root = GameState::root();
    let Some((date, node)) = state else {
        return Ok(root);
    };
    if date > game.horizon() || node > date {
        return Err(usage(format!("no state at date {date}, node {node} (horizon {})", game.horizon())));
    }
    game.reachable_states(lattice, &root)
        .into_iter()
        .filter(|s| s.date == date && s.ups == node)
        .min()
        .ok_or_else(|| usage(format!("the game has settled on every path to date {date}, node {node}")))
}

fn parse_coalition(text: &str, players: usize) -> Result<Coalition, CliError> {
    let c = Coalition::parse(text, players).map_err(|e| usage(e.to_string()))?;
    if c.is_empty() {
        return Err(usage("coalition must not be empty"));
    }
    Ok(c)
}

fn parse_number<S: Scalar>(text: &str) -> Result<S, CliError> {
    S::parse(text.trim()).ok_or_else(|| usage(format!("{:?} is not a number", text.trim())))
}

struct GameContext<'a, S: Scalar> {
    spec: &'a GameConfig,
    game: &'a GameSpec<S>,
    lattice: &'a MarketLattice<S>,
    measure: &'a MartingaleMeasure<S>,
    at: &'a GameState,
}

impl<S: Scalar> GameContext<'_, S> {
    fn players(&self) -> usize {
        self.game.players()
    }

    fn moves(&self, profile: &StrategyProfile, who: Coalition) -> Vec<String> {
        who.members()
            .map(|p| {
                let label = match profile.table(p).get(self.at) {
                    Some(&a) => self.game.label(p, a),
                    None => "-",
                };
                format!("{}={label}", self.spec.names[p])
            })
            .collect()
    }

    fn price(&self, request: &Request) -> Result<Report, CliError> {
        let coalitions = match &request.coalition {
            Some(text) => vec![parse_coalition(text, self.players())?],
            None => (0..self.players()).map(Coalition::singleton).collect(),
        };
        let mut rows = Vec::new();
        for c in coalitions {
            let interval = price_interval(c, self.game, self.lattice, self.measure, self.at)?;
            let (lower, upper) = (interval.lower_price(), interval.upper_price());
            rows.push(PriceRow {
                coalition: c.to_string(),
                lower: lower.render(),
                upper: upper.render(),
                price: lower.approx_eq(upper).then(|| lower.render()),
            });
        }
        Ok(Report::Price(PriceReport {
            state: self.at.to_string(),
            rows,
        }))
    }

    fn interval(&self, request: &Request) -> Result<Report, CliError> {
        let m = self.players();
        let c = match &request.coalition {
            Some(text) => parse_coalition(text, m)?,
            None => Coalition::all(m),
        };
        let interval = price_interval(c, self.game, self.lattice, self.measure, self.at)?;
        Ok(Report::Interval(IntervalReport {
            state: self.at.to_string(),
            coalition: c.to_string(),
            lower: interval.lower_price().render(),
            upper: interval.upper_price().render(),
            maximizer_moves: self.moves(&interval.maximizing_strategy(m), c),
            minimizer_moves: self.moves(&interval.minimizing_strategy(m), c.complement(m)),
        }))
    }

    fn equilibrium(&self, budget: u128) -> Result<Report, CliError> {
        let pricing = price_by_equilibrium(self.game, self.lattice, self.measure, self.at, budget)?;
        Ok(Report::Equilibrium(EquilibriumReport {
            state: self.at.to_string(),
            values: render_all(pricing.tranche_prices()),
            moves: self.moves(&pricing.equilibrium.profile, Coalition::all(self.players())),
            zero_sum: pricing.zero_sum,
            planner_condition: pricing.planner_condition,
            additive: pricing.is_additive(),
            coalitions: pricing
                .coalitions
                .iter()
                .map(|c| CoalitionRow {
                    coalition: c.coalition.to_string(),
                    lower: c.lower.render(),
                    upper: c.upper.render(),
                    member_sum: c.member_sum.render(),
                    price: c.price.as_ref().map(Scalar::render),
                })
                .collect(),
        }))
    }

    fn hedge(&self, request: &Request) -> Result<Report, CliError> {
        let m = self.players();
        let c = match &request.coalition {
            Some(text) => parse_coalition(text, m)?,
            None => Coalition::all(m),
        };
        let interval = price_interval(c, self.game, self.lattice, self.measure, self.at)?;
        let (hedge, free) = match request.side {
            HedgeSide::Issuer => {
                let sigma = interval.minimizing_strategy(m);
                let hedge = superhedge_issuer(c, &sigma, self.game, self.lattice, self.measure, self.at)?;
                let free = hedge.envelope.strategy_for(m, c);
                (hedge, free)
            }
            HedgeSide::Holder => {
                let tau = interval.maximizing_strategy(m);
                let hedge = superhedge_holder(c, &tau, self.game, self.lattice, self.measure, self.at)?;
                let free = hedge.envelope.strategy_for(m, c.complement(m));
                (hedge, free)
            }
        };
        let paths = hedge
            .simulate(&free, self.game, self.lattice)?
            .into_iter()
            .map(|path| HedgePathRow {
                moves: path.moves.iter().map(|&up| if up { 'U' } else { 'D' }).collect(),
                dominates: path.dominates(),
                final_wealth: path.final_wealth.render(),
                liability: path.liability.render(),
                steps: path
                    .steps
                    .iter()
                    .map(|s| HedgeStepRow {
                        state: s.state.to_string(),
                        action: s
                            .action
                            .0
                            .iter()
                            .enumerate()
                            .map(|(p, &a)| self.game.label(p, a).to_string())
                            .collect(),
                        wealth: s.wealth.render(),
                        envelope: s.envelope.render(),
                        bond: s.holdings.as_ref().map(|h| h.bond.render()),
                        stock: s.holdings.as_ref().map(|h| h.stock.render()),
                    })
                    .collect(),
            })
            .collect();
        Ok(Report::Hedge(HedgeReport {
            state: self.at.to_string(),
            coalition: c.to_string(),
            side: match request.side {
                HedgeSide::Issuer => "issuer",
                HedgeSide::Holder => "holder",
            }
            .to_string(),
            initial_wealth: hedge.initial_wealth.render(),
            paths,
        }))
    }
}

fn feasibility_report<S: Scalar>(
    state: String,
    players: usize,
    bounds: Vec<CoalitionBound<S>>,
    request: &Request,
) -> Result<Report, CliError> {
    let result = check_feasibility(players, bounds.clone());
    let mut report = FeasibilityReport {
        state,
        bounds: bounds
            .iter()
            .map(|b| BoundRow {
                coalition: b.coalition.to_string(),
                lower: b.lower.render(),
                upper: b.upper.render(),
            })
            .collect(),
        feasible: result.is_feasible(),
        witness: result.witness.as_deref().map(render_all),
        conflict: result
            .conflict
            .iter()
            .map(|r| {
                let side = match r.side {
                    Side::Lower => "lower",
                    Side::Upper => "upper",
                };
                format!("{side} {}", r.coalition)
            })
            .collect(),
        quote: None,
        enter_and_hold: Vec::new(),
        reselling: Vec::new(),
    };
    let Some(text) = &request.quote else {
        if !request.combined.is_empty() {
            return Err(usage("--combined needs --quote"));
        }
        return Ok(Report::Feasibility(report));
    };
    let singles = text.split(',').map(parse_number::<S>).collect::<Result<Vec<S>, _>>()?;
    if singles.len() != players {
        return Err(usage(format!("--quote needs {players} values, got {}", singles.len())));
    }
    let mut combined = Vec::new();
    for item in &request.combined {
        let (members, value) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("combined quote {item:?} is not MEMBERS=PRICE")))?;
        combined.push((parse_coalition(members, players)?, parse_number::<S>(value)?));
    }
    let analysis = classify_quotes(&bounds, &singles, &combined);
    report.quote = Some(render_all(&singles));
    report.enter_and_hold = analysis
        .enter_and_hold
        .iter()
        .map(|(c, q, verdict)| QuoteRow {
            coalition: c.to_string(),
            quote: q.render(),
            verdict: match verdict {
                QuoteVerdict::NoArbitrage => "no arbitrage",
                QuoteVerdict::IssuerArbitrage => "issuer arbitrage",
                QuoteVerdict::HolderArbitrage => "holder arbitrage",
            }
            .to_string(),
        })
        .collect();
    report.reselling = analysis
        .reselling
        .iter()
        .map(|r| ResaleRow {
            coalition: r.coalition.to_string(),
            combined: r.combined.render(),
            parts: r.parts.render(),
        })
        .collect();
    Ok(Report::Feasibility(report))
}
