//! Command reports: a versioned JSON envelope for machines and plain-text
//! tables for people. Numbers are carried as rendered strings, exact
//! fractions in rational mode and six decimals in float mode.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "gameclaims-report";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub numeric: String,
    pub report: Report,
}

impl Envelope {
    pub fn new(command: &str, numeric: &str, report: Report) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            command: command.to_string(),
            numeric: numeric.to_string(),
            report,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Report {
    Price(PriceReport),
    Interval(IntervalReport),
    Equilibrium(EquilibriumReport),
    Hedge(HedgeReport),
    Tranches(TrancheReport),
    Feasibility(FeasibilityReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub coalition: String,
    pub lower: String,
    pub upper: String,
    /// Present when the interval is a single point.
    pub price: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub state: String,
    pub rows: Vec<PriceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub state: String,
    pub coalition: String,
    pub lower: String,
    pub upper: String,
    /// Moves of the coalition attaining the lower price at the state.
    pub maximizer_moves: Vec<String>,
    /// Moves of the other players attaining the upper price at the state.
    pub minimizer_moves: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionRow {
    pub coalition: String,
    pub lower: String,
    pub upper: String,
    pub member_sum: String,
    pub price: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub state: String,
    pub values: Vec<String>,
    /// Equilibrium move of each player at the state.
    pub moves: Vec<String>,
    pub zero_sum: bool,
    pub planner_condition: bool,
    pub additive: bool,
    pub coalitions: Vec<CoalitionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeStepRow {
    pub state: String,
    pub action: Vec<String>,
    pub wealth: String,
    pub envelope: String,
    pub bond: Option<String>,
    pub stock: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgePathRow {
    /// `U`/`D` per period.
    pub moves: String,
    pub steps: Vec<HedgeStepRow>,
    pub final_wealth: String,
    pub liability: String,
    pub dominates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeReport {
    pub state: String,
    pub coalition: String,
    pub side: String,
    pub initial_wealth: String,
    pub paths: Vec<HedgePathRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheNodeRow {
    pub node: usize,
    pub price: String,
    pub continuation: Vec<String>,
    pub put_payoffs: Vec<String>,
    pub value: Vec<String>,
    pub put_set: String,
    pub everyone_puts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheLevelRow {
    pub level: usize,
    pub date: usize,
    pub nodes: Vec<TrancheNodeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleRow {
    pub states: usize,
    pub strategies: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheReport {
    pub initial: Vec<String>,
    pub option_prices: Vec<String>,
    pub levels: Vec<TrancheLevelRow>,
    pub saddle: Option<SaddleRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub coalition: String,
    pub lower: String,
    pub upper: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteRow {
    pub coalition: String,
    pub quote: String,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResaleRow {
    pub coalition: String,
    pub combined: String,
    pub parts: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub state: String,
    pub bounds: Vec<BoundRow>,
    pub feasible: bool,
    pub witness: Option<Vec<String>>,
    /// Constraints combined into the contradiction, as `lower {1,2}`.
    pub conflict: Vec<String>,
    pub quote: Option<Vec<String>>,
    pub enter_and_hold: Vec<QuoteRow>,
    pub reselling: Vec<ResaleRow>,
}

fn tuple(values: &[String]) -> String {
    format!("({})", values.join(", "))
}

fn yes(flag: bool) -> &'static str {
    if flag {
        "yes"
    } else {
        "no"
    }
}

/// Left-aligned columns separated by two spaces.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

impl Envelope {
    pub fn to_human(&self) -> String {
        let mut out = format!("{} ({} mode)\n", self.command, self.numeric);
        match &self.report {
            Report::Price(r) => {
                let _ = writeln!(out, "state {}", r.state);
                let rows: Vec<Vec<String>> = r
                    .rows
                    .iter()
                    .map(|row| {
                        vec![
                            row.coalition.clone(),
                            row.lower.clone(),
                            row.upper.clone(),
                            row.price.clone().unwrap_or_else(|| "-".into()),
                        ]
                    })
                    .collect();
                out += &table(&["coalition", "lower", "upper", "price"], &rows);
            }
            Report::Interval(r) => {
                let _ = writeln!(out, "state {}", r.state);
                let _ = writeln!(out, "coalition {}: [{}, {}]", r.coalition, r.lower, r.upper);
                let _ = writeln!(out, "coalition moves at the lower price: {}", tuple(&r.maximizer_moves));
                let _ = writeln!(out, "other moves at the upper price: {}", tuple(&r.minimizer_moves));
            }
            Report::Equilibrium(r) => {
                let _ = writeln!(out, "state {}", r.state);
                let _ = writeln!(out, "optimal equilibrium values {}", tuple(&r.values));
                let _ = writeln!(out, "equilibrium moves {}", tuple(&r.moves));
                let _ = writeln!(
                    out,
                    "zero-sum: {}  planner condition: {}  additive: {}",
                    yes(r.zero_sum),
                    yes(r.planner_condition),
                    yes(r.additive)
                );
                let rows: Vec<Vec<String>> = r
                    .coalitions
                    .iter()
                    .map(|c| {
                        vec![
                            c.coalition.clone(),
                            c.lower.clone(),
                            c.upper.clone(),
                            c.member_sum.clone(),
                            c.price.clone().unwrap_or_else(|| "-".into()),
                        ]
                    })
                    .collect();
                out += &table(&["coalition", "lower", "upper", "member sum", "price"], &rows);
            }
            Report::Hedge(r) => {
                let _ = writeln!(out, "state {}", r.state);
                let _ = writeln!(out, "{} hedge of coalition {}, initial wealth {}", r.side, r.coalition, r.initial_wealth);
                for path in &r.paths {
                    let moves = if path.moves.is_empty() { "-" } else { path.moves.as_str() };
                    let _ = writeln!(
                        out,
                        "path {moves}: final wealth {}, liability {}, dominates: {}",
                        path.final_wealth,
                        path.liability,
                        yes(path.dominates)
                    );
                    let rows: Vec<Vec<String>> = path
                        .steps
                        .iter()
                        .map(|s| {
                            vec![
                                format!("  {}", s.state),
                                tuple(&s.action),
                                s.wealth.clone(),
                                s.envelope.clone(),
                                s.bond.clone().unwrap_or_else(|| "-".into()),
                                s.stock.clone().unwrap_or_else(|| "-".into()),
                            ]
                        })
                        .collect();
                    out += &table(&["  state", "action", "wealth", "envelope", "bond", "stock"], &rows);
                }
            }
            Report::Tranches(r) => {
                let _ = writeln!(out, "time-0 values {}", tuple(&r.initial));
                let _ = writeln!(out, "option prices {}", tuple(&r.option_prices));
                let mut rows = Vec::new();
                for level in &r.levels {
                    for n in &level.nodes {
                        rows.push(vec![
                            level.level.to_string(),
                            level.date.to_string(),
                            n.node.to_string(),
                            n.price.clone(),
                            tuple(&n.continuation),
                            tuple(&n.put_payoffs),
                            tuple(&n.value),
                            format!("{}{}", n.put_set, if n.everyone_puts { " (all)" } else { "" }),
                        ]);
                    }
                }
                out += &table(
                    &["decision", "date", "node", "price", "continuation", "put payoffs", "value", "puts"],
                    &rows,
                );
                if let Some(s) = &r.saddle {
                    let _ = writeln!(
                        out,
                        "saddle check: {} states, {} strategies, {} violations",
                        s.states, s.strategies, s.violations
                    );
                }
            }
            Report::Feasibility(r) => {
                let _ = writeln!(out, "state {}", r.state);
                let rows: Vec<Vec<String>> = r
                    .bounds
                    .iter()
                    .map(|b| vec![b.coalition.clone(), b.lower.clone(), b.upper.clone()])
                    .collect();
                out += &table(&["coalition", "lower", "upper"], &rows);
                match &r.witness {
                    Some(w) => {
                        let _ = writeln!(out, "feasible: witness {}", tuple(w));
                    }
                    None => {
                        let _ = writeln!(out, "EMPTY: conflicting constraints {}", r.conflict.join(", "));
                    }
                }
                if let Some(q) = &r.quote {
                    let _ = writeln!(out, "quote {}", tuple(q));
                    let rows: Vec<Vec<String>> = r
                        .enter_and_hold
                        .iter()
                        .map(|q| vec![q.coalition.clone(), q.quote.clone(), q.verdict.clone()])
                        .collect();
                    out += &table(&["coalition", "quote", "verdict"], &rows);
                    for resale in &r.reselling {
                        let _ = writeln!(
                            out,
                            "reselling arbitrage: {} quoted {} but its parts sum to {}",
                            resale.coalition, resale.combined, resale.parts
                        );
                    }
                }
            }
        }
        out
    }
}
