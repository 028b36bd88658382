//! Browser bindings. Every export takes and returns JSON text; numbers are
//! exact fractions written as strings, and failures come back as
//! `{"error": "..."}`.

use gameclaims::feasibility::{check_feasibility, game_bounds, Side};
use gameclaims::tranches::{project_simplex, put_set, value_tranches, LegPayoff, TrancheContract, TrancheLeg};
use gameclaims::gamecore::Situation;
use gameclaims::{GameSpec, GameState, MarketLattice, MartingaleMeasure, Rational, Scalar};
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

type Outcome = Result<Value, String>;

fn respond(outcome: Outcome) -> String {
    match outcome {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn num(text: &str) -> Result<Rational, String> {
    Rational::parse(text.trim()).ok_or_else(|| format!("{:?} is not a number", text.trim()))
}

fn nums(texts: &[String]) -> Result<Vec<Rational>, String> {
    texts.iter().map(|t| num(t)).collect()
}

fn render(values: &[Rational]) -> Vec<String> {
    values.iter().map(Scalar::render).collect()
}

#[derive(Deserialize)]
struct SimplexInput {
    point: Vec<String>,
    lower: Vec<String>,
    total: String,
}

/// Projects `point` onto `{x >= lower, sum x = total}` and reports which
/// coordinates end at their bound.
#[wasm_bindgen]
pub fn project(input: &str) -> String {
    respond((|| {
        let input: SimplexInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
        let p = nums(&input.point)?;
        let lower = nums(&input.lower)?;
        let total = num(&input.total)?;
        if p.len() != lower.len() {
            return Err("point and lower bounds differ in length".into());
        }
        let x = project_simplex(&p, &lower, &total).map_err(|e| e.to_string())?;
        let at_bound = put_set(&p, &lower, &total).map_err(|e| e.to_string())?;
        Ok(json!({
            "projection": render(&x),
            "at_bound": at_bound.members().map(|i| i + 1).collect::<Vec<_>>(),
        }))
    })())
}

#[derive(Deserialize)]
struct LatticeInput {
    initial_price: String,
    up: String,
    down: String,
    #[serde(default = "one")]
    accrual: String,
    steps: usize,
}

fn one() -> String {
    "1".into()
}

impl LatticeInput {
    fn build(&self) -> Result<MarketLattice<Rational>, String> {
        MarketLattice::build(
            num(&self.initial_price)?,
            num(&self.up)?,
            num(&self.down)?,
            num(&self.accrual)?,
            self.steps,
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Deserialize)]
struct LegInput {
    /// `call`, `put`, `stock` or `constant`.
    kind: String,
    #[serde(default)]
    strike: Option<String>,
    #[serde(default)]
    american: bool,
}

#[derive(Deserialize)]
struct TrancheInput {
    lattice: LatticeInput,
    legs: Vec<LegInput>,
    decision_dates: Vec<usize>,
    maturity: usize,
    puts: Vec<Vec<Vec<String>>>,
}

fn leg(input: &LegInput) -> Result<TrancheLeg<Rational>, String> {
    let strike = || num(input.strike.as_deref().ok_or("leg needs a strike")?);
    let payoff = match input.kind.as_str() {
        "call" => LegPayoff::Call(strike()?),
        "put" => LegPayoff::Put(strike()?),
        "constant" => LegPayoff::Constant(strike()?),
        "stock" => LegPayoff::Stock,
        other => return Err(format!("unknown leg kind {other:?}")),
    };
    Ok(if input.american {
        TrancheLeg::american(payoff)
    } else {
        TrancheLeg::european(payoff)
    })
}

/// Equilibrium values of puttable tranches at every decision node.
#[wasm_bindgen]
pub fn tranche_tree(input: &str) -> String {
    respond((|| {
        let input: TrancheInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
        let lattice = input.lattice.build()?;
        let measure = MartingaleMeasure::of(&lattice);
        let legs = input.legs.iter().map(leg).collect::<Result<Vec<_>, _>>()?;
        let puts = input
            .puts
            .iter()
            .map(|level| level.iter().map(|node| nums(node)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let contract =
            TrancheContract::new(legs, input.decision_dates, input.maturity, puts).map_err(|e| e.to_string())?;
        let valuation = value_tranches(&contract, &lattice, &measure).map_err(|e| e.to_string())?;
        let levels: Vec<Value> = valuation
            .levels
            .iter()
            .map(|level| {
                json!({
                    "level": level.level,
                    "date": level.date,
                    "nodes": level.nodes.iter().map(|n| json!({
                        "node": n.node.ups,
                        "price": lattice.price(n.node).render(),
                        "continuation": render(&n.continuation),
                        "put_payoffs": render(&n.put_payoffs),
                        "value": render(&n.value),
                        "puts": n.put_set.members().map(|i| i + 1).collect::<Vec<_>>(),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        Ok(json!({
            "initial": render(&valuation.initial),
            "option_prices": render(&valuation.option_prices),
            "levels": levels,
        }))
    })())
}

#[derive(Deserialize)]
struct MatrixInput {
    /// Action labels per player.
    actions: Vec<Vec<String>>,
    /// One payoff vector per joint action, the last player's action
    /// varying fastest.
    payoffs: Vec<Vec<String>>,
}

/// Price bounds of every coalition in a one-shot game, and whether some
/// price vector satisfies all of them.
#[wasm_bindgen]
pub fn coalition_bounds(input: &str) -> String {
    respond((|| {
        let input: MatrixInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
        let m = input.actions.len();
        let cells: usize = input.actions.iter().map(Vec::len).product();
        if input.payoffs.len() != cells {
            return Err(format!("expected {cells} payoff vectors, got {}", input.payoffs.len()));
        }
        let table = input
            .payoffs
            .iter()
            .map(|row| {
                if row.len() == m {
                    nums(row)
                } else {
                    Err(format!("payoff vector {row:?} needs {m} entries"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let counts: Vec<usize> = input.actions.iter().map(Vec::len).collect();
        let game = GameSpec::new(input.actions, 0)
            .map_err(|e| e.to_string())?
            .with_payoff(move |s: &Situation<Rational>| {
                let index = s.current().0.iter().zip(&counts).fold(0, |acc, (a, n)| acc * n + a);
                table[index].clone()
            });
        let lattice = MarketLattice::build(Rational::from_i64(1), Rational::from_i64(2), Rational::from_ratio(1, 2), Rational::from_i64(1), 1)
            .map_err(|e| e.to_string())?;
        let measure = MartingaleMeasure::of(&lattice);
        let bounds = game_bounds(&game, &lattice, &measure, &GameState::root()).map_err(|e| e.to_string())?;
        let result = check_feasibility(m, bounds.clone());
        Ok(json!({
            "bounds": bounds.iter().map(|b| json!({
                "coalition": b.coalition.to_string(),
                "lower": b.lower.render(),
                "upper": b.upper.render(),
            })).collect::<Vec<_>>(),
            "feasible": result.is_feasible(),
            "witness": result.witness.as_deref().map(render),
            "conflict": result.conflict.iter().map(|r| format!(
                "{} {}",
                match r.side { Side::Lower => "lower", Side::Upper => "upper" },
                r.coalition
            )).collect::<Vec<_>>(),
        }))
    })())
}
