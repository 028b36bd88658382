//! Contract configuration files.
//!
//! A config is a TOML document with a `version`, a `[lattice]` block and
//! exactly one of `[game]` or `[tranches]`. See `SCHEMA.md` for the format.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use gameclaims::gamecore::Situation;
use gameclaims::tranches::{LegPayoff, TrancheContract, TrancheLeg};
use gameclaims::{GameSpec, GameState, JointAction, MarketLattice, Rational, Scalar};
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BUDGET: u128 = 1 << 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error{}: {message}", at_line(*line))]
    Parse { line: Option<usize>, message: String },
    #[error("schema error in `{field}`{}: {message}", at_line(*line))]
    Schema {
        field: String,
        line: Option<usize>,
        message: String,
    },
    #[error("horizon error in `{field}`{}: {message}", at_line(*line))]
    Horizon {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Numeric {
    Rational,
    Float,
}

impl Numeric {
    pub fn name(self) -> &'static str {
        match self {
            Numeric::Rational => "rational",
            Numeric::Float => "float",
        }
    }
}

/// A number written as a TOML integer, float or string (`"3/2"`).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Int(i64),
    Float(f64),
    Text(String),
}

impl RawNumber {
    fn text(&self) -> String {
        match self {
            RawNumber::Int(v) => v.to_string(),
            RawNumber::Float(v) => v.to_string(),
            RawNumber::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: Spanned<u32>,
    numeric: Option<Numeric>,
    budget: Option<u64>,
    lattice: Spanned<RawLattice>,
    game: Option<Spanned<RawGame>>,
    tranches: Option<Spanned<RawTranches>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    initial_price: RawNumber,
    up: RawNumber,
    down: RawNumber,
    #[serde(default = "unit_accrual")]
    accrual: RawNumber,
    steps: Spanned<usize>,
}

fn unit_accrual() -> RawNumber {
    RawNumber::Int(1)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlayer {
    name: String,
    actions: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPattern {
    date: Option<usize>,
    node: Option<usize>,
    #[serde(default)]
    history: Vec<Vec<String>>,
    actions: Vec<String>,
    pays: Option<Vec<RawNumber>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    horizon: Spanned<usize>,
    players: Vec<RawPlayer>,
    #[serde(default)]
    stop: Vec<Spanned<RawPattern>>,
    payoff: Vec<Spanned<RawPattern>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeg {
    payoff: String,
    #[serde(default)]
    style: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTranches {
    legs: Vec<Spanned<RawLeg>>,
    decision_dates: Spanned<Vec<usize>>,
    maturity: Spanned<usize>,
    puts: Spanned<Vec<Vec<Vec<RawNumber>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    pub initial_price: String,
    pub up: String,
    pub down: String,
    pub accrual: String,
    pub steps: usize,
}

impl LatticeConfig {
    pub fn build<S: Scalar>(&self) -> gameclaims::Result<MarketLattice<S>> {
        let num = |t: &str| S::parse(t).expect("validated on load");
        MarketLattice::build(
            num(&self.initial_price),
            num(&self.up),
            num(&self.down),
            num(&self.accrual),
            self.steps,
        )
    }
}

/// A payoff term: a constant, a call or put on the stock, or the stock.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Constant(String),
    Call(String),
    Put(String),
    Stock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedTerm {
    pub negative: bool,
    pub term: Term,
}

impl SignedTerm {
    fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) if !rest.trim_start().starts_with(|c: char| c.is_ascii_digit() || c == '.') => (true, rest.trim()),
            _ => (false, text),
        };
        let term = if body == "S" {
            Term::Stock
        } else if let Some(k) = body.strip_prefix("call:") {
            Rational::parse(k)?;
            Term::Call(k.trim().to_string())
        } else if let Some(k) = body.strip_prefix("put:") {
            Rational::parse(k)?;
            Term::Put(k.trim().to_string())
        } else {
            Rational::parse(body)?;
            Term::Constant(body.to_string())
        };
        Some(Self { negative, term })
    }

    pub fn eval<S: Scalar>(&self, price: &S) -> S {
        let num = |t: &str| S::parse(t).expect("validated on load");
        let v = match &self.term {
            Term::Constant(c) => num(c),
            Term::Call(k) => S::max_of(price.clone() - num(k), S::zero()),
            Term::Put(k) => S::max_of(num(k) - price.clone(), S::zero()),
            Term::Stock => price.clone(),
        };
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// Matches a settlement situation: date, node, earlier joint actions and
/// the current joint action, with `None` as a wildcard.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub date: Option<usize>,
    pub node: Option<usize>,
    pub history: Vec<Vec<Option<usize>>>,
    pub actions: Vec<Option<usize>>,
}

impl Pattern {
    fn joint_matches(pattern: &[Option<usize>], action: &JointAction) -> bool {
        pattern.iter().enumerate().all(|(p, a)| a.is_none_or(|a| action.player(p) == a))
    }

    pub fn matches(&self, date: usize, ups: usize, history: &[JointAction]) -> bool {
        let Some((current, earlier)) = history.split_last() else {
            return false;
        };
        self.date.is_none_or(|d| d == date)
            && self.node.is_none_or(|n| n == ups)
            && self.history.len() <= earlier.len()
            && self.history.iter().zip(earlier).all(|(p, a)| Self::joint_matches(p, a))
            && Self::joint_matches(&self.actions, current)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffRule {
    pub pattern: Pattern,
    pub pays: Vec<SignedTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub horizon: usize,
    pub names: Vec<String>,
    pub actions: Vec<Vec<String>>,
    pub stop: Vec<Pattern>,
    pub payoff: Vec<PayoffRule>,
}

impl GameConfig {
    pub fn players(&self) -> usize {
        self.names.len()
    }

    pub fn build<S: Scalar>(&self) -> GameSpec<S> {
        let stop = self.stop.clone();
        let payoff = self.payoff.clone();
        let players = self.players();
        GameSpec::new(self.actions.clone(), self.horizon)
            .expect("validated on load")
            .with_termination(move |s: &Situation<S>| {
                stop.iter().any(|p| p.matches(s.node.date, s.node.ups, s.history))
            })
            .with_payoff(move |s: &Situation<S>| {
                payoff
                    .iter()
                    .find(|r| r.pattern.matches(s.node.date, s.node.ups, s.history))
                    .map(|r| r.pays.iter().map(|t| t.eval(s.price)).collect())
                    .unwrap_or_else(|| vec![S::zero(); players])
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrancheConfig {
    pub legs: Vec<(SignedTerm, bool)>,
    pub decision_dates: Vec<usize>,
    pub maturity: usize,
    pub puts: Vec<Vec<Vec<String>>>,
}

impl TrancheConfig {
    pub fn tranches(&self) -> usize {
        self.legs.len()
    }

    pub fn build<S: Scalar>(&self) -> gameclaims::Result<TrancheContract<S>> {
        let num = |t: &str| S::parse(t).expect("validated on load");
        let legs = self
            .legs
            .iter()
            .map(|(term, american)| {
                let payoff = match &term.term {
                    Term::Constant(c) => LegPayoff::Constant(num(c)),
                    Term::Call(k) => LegPayoff::Call(num(k)),
                    Term::Put(k) => LegPayoff::Put(num(k)),
                    Term::Stock => LegPayoff::Stock,
                };
                if *american {
                    TrancheLeg::american(payoff)
                } else {
                    TrancheLeg::european(payoff)
                }
            })
            .collect();
        let puts = self
            .puts
            .iter()
            .map(|level| level.iter().map(|node| node.iter().map(|t| num(t)).collect()).collect())
            .collect();
        TrancheContract::new(legs, self.decision_dates.clone(), self.maturity, puts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Game(GameConfig),
    Tranches(TrancheConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractConfig {
    pub version: u32,
    pub numeric: Numeric,
    pub budget: u128,
    pub lattice: LatticeConfig,
    pub body: Body,
}

/// Byte offsets to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of(&self, span: Range<usize>) -> Option<usize> {
        let end = span.start.min(self.0.len());
        Some(self.0[..end].matches('\n').count() + 1)
    }
}

fn schema(field: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        field: field.into(),
        line,
        message: message.into(),
    }
}

fn horizon(field: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError::Horizon {
        field: field.into(),
        line,
        message: message.into(),
    }
}

fn number(raw: &RawNumber, field: &str, line: Option<usize>) -> Result<String, ConfigError> {
    let text = raw.text();
    Rational::parse(&text)
        .map(|_| text.clone())
        .ok_or_else(|| schema(field, line, format!("`{text}` is not a number")))
}

pub fn load_config(path: &Path) -> Result<ContractConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ContractConfig, ConfigError> {
    let lines = Lines(text);
    let table = toml::from_str::<toml::Table>(text).map_err(|e| ConfigError::Parse {
        line: e.span().and_then(|s| lines.of(s)),
        message: e.message().to_string(),
    })?;
    if table.is_empty() {
        return Err(ConfigError::Parse {
            line: Some(1),
            message: "the document is empty".into(),
        });
    }
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().and_then(|s| lines.of(s));
        schema(field_of(e.message()), line, e.message().trim())
    })?;
    let version_line = lines.of(raw.version.span());
    if *raw.version.get_ref() != SCHEMA_VERSION {
        return Err(schema(
            "version",
            version_line,
            format!("unsupported version {}, expected {SCHEMA_VERSION}", raw.version.get_ref()),
        ));
    }
    let lattice = lattice_config(raw.lattice, &lines)?;
    let body = match (raw.game, raw.tranches) {
        (Some(game), None) => Body::Game(game_config(game, &lattice, &lines)?),
        (None, Some(tranches)) => Body::Tranches(tranche_config(tranches, &lattice, &lines)?),
        (Some(_), Some(_)) => return Err(schema("game", None, "give either [game] or [tranches], not both")),
        (None, None) => return Err(schema("game", None, "one of [game] or [tranches] is required")),
    };
    Ok(ContractConfig {
        version: SCHEMA_VERSION,
        numeric: raw.numeric.unwrap_or(Numeric::Rational),
        budget: raw.budget.map_or(DEFAULT_BUDGET, u128::from),
        lattice,
        body,
    })
}

/// Best-effort field name from a deserializer message.
fn field_of(message: &str) -> String {
    for marker in ["missing field `", "unknown field `"] {
        if let Some(rest) = message.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "document".into()
}

fn lattice_config(raw: Spanned<RawLattice>, lines: &Lines) -> Result<LatticeConfig, ConfigError> {
    let line = lines.of(raw.span());
    let raw = raw.into_inner();
    let config = LatticeConfig {
        initial_price: number(&raw.initial_price, "lattice.initial_price", line)?,
        up: number(&raw.up, "lattice.up", line)?,
        down: number(&raw.down, "lattice.down", line)?,
        accrual: number(&raw.accrual, "lattice.accrual", line)?,
        steps: *raw.steps.get_ref(),
    };
    config
        .build::<Rational>()
        .map_err(|e| schema("lattice", line, e.to_string()))?;
    Ok(config)
}

fn action_pattern(
    labels: &[Vec<String>],
    raw: &[String],
    field: &str,
    line: Option<usize>,
) -> Result<Vec<Option<usize>>, ConfigError> {
    if raw.len() != labels.len() {
        return Err(schema(
            field,
            line,
            format!("{} entries for {} players", raw.len(), labels.len()),
        ));
    }
    raw.iter()
        .zip(labels)
        .map(|(label, options)| {
            if label == "*" {
                return Ok(None);
            }
            options
                .iter()
                .position(|o| o == label)
                .map(Some)
                .ok_or_else(|| schema(field, line, format!("unknown action `{label}`")))
        })
        .collect()
}

fn pattern(
    raw: &RawPattern,
    labels: &[Vec<String>],
    game_horizon: usize,
    field: &str,
    line: Option<usize>,
) -> Result<Pattern, ConfigError> {
    if let Some(date) = raw.date {
        if date > game_horizon {
            return Err(horizon(
                format!("{field}.date"),
                line,
                format!("date {date} is after the game horizon {game_horizon}"),
            ));
        }
        if raw.history.len() > date {
            return Err(schema(
                format!("{field}.history"),
                line,
                format!("{} earlier joint actions at date {date}", raw.history.len()),
            ));
        }
        if raw.node.is_some_and(|n| n > date) {
            return Err(schema(format!("{field}.node"), line, format!("node beyond date {date}")));
        }
    }
    let history = raw
        .history
        .iter()
        .map(|h| action_pattern(labels, h, &format!("{field}.history"), line))
        .collect::<Result<_, _>>()?;
    Ok(Pattern {
        date: raw.date,
        node: raw.node,
        history,
        actions: action_pattern(labels, &raw.actions, &format!("{field}.actions"), line)?,
    })
}

fn game_config(raw: Spanned<RawGame>, lattice: &LatticeConfig, lines: &Lines) -> Result<GameConfig, ConfigError> {
    let game_line = lines.of(raw.span());
    let raw = raw.into_inner();
    let horizon_line = lines.of(raw.horizon.span());
    let game_horizon = *raw.horizon.get_ref();
    if game_horizon > lattice.steps {
        return Err(horizon(
            "game.horizon",
            horizon_line,
            format!("horizon {game_horizon} exceeds the {} lattice steps", lattice.steps),
        ));
    }
    if raw.players.is_empty() {
        return Err(schema("game.players", game_line, "at least one player is required"));
    }
    for (i, p) in raw.players.iter().enumerate() {
        let unique: BTreeSet<&String> = p.actions.iter().collect();
        if p.actions.is_empty() || unique.len() != p.actions.len() || p.actions.iter().any(|a| a == "*") {
            return Err(schema(
                format!("game.players[{i}].actions"),
                game_line,
                "actions must be nonempty, distinct and not `*`",
            ));
        }
    }
    let labels: Vec<Vec<String>> = raw.players.iter().map(|p| p.actions.clone()).collect();
    let m = labels.len();
    let mut stop = Vec::new();
    for (i, rule) in raw.stop.iter().enumerate() {
        let line = lines.of(rule.span());
        if rule.get_ref().pays.is_some() {
            return Err(schema(format!("game.stop[{i}].pays"), line, "stop rules carry no payoff"));
        }
        stop.push(pattern(rule.get_ref(), &labels, game_horizon, &format!("game.stop[{i}]"), line)?);
    }
    let mut payoff = Vec::new();
    for (i, rule) in raw.payoff.iter().enumerate() {
        let field = format!("game.payoff[{i}]");
        let line = lines.of(rule.span());
        let r = rule.get_ref();
        let pays = r
            .pays
            .as_ref()
            .ok_or_else(|| schema(format!("{field}.pays"), line, "missing payoff vector"))?;
        if pays.len() != m {
            return Err(schema(
                format!("{field}.pays"),
                line,
                format!("{} payoffs for {m} players", pays.len()),
            ));
        }
        let pays = pays
            .iter()
            .map(|t| {
                let text = t.text();
                SignedTerm::parse(&text).ok_or_else(|| {
                    schema(
                        format!("{field}.pays"),
                        line,
                        format!("`{text}` is not a number, `S`, `call:K` or `put:K`"),
                    )
                })
            })
            .collect::<Result<_, _>>()?;
        payoff.push(PayoffRule {
            pattern: pattern(r, &labels, game_horizon, &field, line)?,
            pays,
        });
    }
    let config = GameConfig {
        horizon: game_horizon,
        names: raw.players.iter().map(|p| p.name.clone()).collect(),
        actions: labels,
        stop,
        payoff,
    };
    check_total(&config, lattice, game_line)?;
    Ok(config)
}

/// Every reachable settlement must be matched by some payoff rule.
fn check_total(config: &GameConfig, lattice: &LatticeConfig, line: Option<usize>) -> Result<(), ConfigError> {
    let game = config.build::<Rational>();
    let lat = lattice.build::<Rational>().expect("validated");
    for (state, action) in game.settlement_points(&lat, &GameState::root()) {
        let mut history = state.history.clone();
        history.push(action.clone());
        if !config.payoff.iter().any(|r| r.pattern.matches(state.date, state.ups, &history)) {
            let moves: Vec<&str> = action.0.iter().enumerate().map(|(p, &a)| config.actions[p][a].as_str()).collect();
            return Err(schema(
                "game.payoff",
                line,
                format!(
                    "no payoff rule for actions [{}] at date {} node {} (state {state})",
                    moves.join(", "),
                    state.date,
                    state.ups
                ),
            ));
        }
    }
    Ok(())
}

fn tranche_config(
    raw: Spanned<RawTranches>,
    lattice: &LatticeConfig,
    lines: &Lines,
) -> Result<TrancheConfig, ConfigError> {
    let block_line = lines.of(raw.span());
    let raw = raw.into_inner();
    let dates_line = lines.of(raw.decision_dates.span());
    let maturity_line = lines.of(raw.maturity.span());
    let puts_line = lines.of(raw.puts.span());
    let maturity = *raw.maturity.get_ref();
    if maturity > lattice.steps {
        return Err(horizon(
            "tranches.maturity",
            maturity_line,
            format!("maturity {maturity} exceeds the {} lattice steps", lattice.steps),
        ));
    }
    let dates = raw.decision_dates.get_ref().clone();
    for (i, &d) in dates.iter().enumerate() {
        if d > lattice.steps || d > maturity {
            return Err(horizon(
                format!("tranches.decision_dates[{i}]"),
                dates_line,
                format!("decision date {d} is after maturity {maturity} or the {} lattice steps", lattice.steps),
            ));
        }
    }
    if raw.legs.is_empty() {
        return Err(schema("tranches.legs", block_line, "at least one leg is required"));
    }
    let mut legs = Vec::with_capacity(raw.legs.len());
    for (i, leg) in raw.legs.iter().enumerate() {
        let line = lines.of(leg.span());
        let leg = leg.get_ref();
        let term = SignedTerm::parse(&leg.payoff)
            .filter(|t| !t.negative)
            .ok_or_else(|| {
                schema(
                    format!("tranches.legs[{i}].payoff"),
                    line,
                    format!("`{}` is not `S`, `call:K`, `put:K` or a number", leg.payoff),
                )
            })?;
        let american = match leg.style.as_deref() {
            None | Some("european") => false,
            Some("american") => true,
            Some(other) => {
                return Err(schema(
                    format!("tranches.legs[{i}].style"),
                    line,
                    format!("unknown style `{other}`, expected european or american"),
                ))
            }
        };
        legs.push((term, american));
    }
    let mut puts = Vec::new();
    for (l, level) in raw.puts.get_ref().iter().enumerate() {
        let mut nodes = Vec::new();
        for (j, node) in level.iter().enumerate() {
            let field = format!("tranches.puts[{l}][{j}]");
            nodes.push(node.iter().map(|v| number(v, &field, puts_line)).collect::<Result<Vec<_>, _>>()?);
        }
        puts.push(nodes);
    }
    let config = TrancheConfig {
        legs,
        decision_dates: dates,
        maturity,
        puts,
    };
    config
        .build::<Rational>()
        .map_err(|e| schema("tranches", puts_line.or(block_line), e.to_string()))?;
    Ok(config)
}
