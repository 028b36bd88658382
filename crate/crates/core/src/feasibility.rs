//! Joint consistency of coalition price intervals.
//!
//! A vector of single-tranche prices `x` is consistent with every coalition
//! interval when `lower_A ≤ Σ_{i∈A} x_i ≤ upper_A` for all `A`. The system is
//! decided by Fourier-Motzkin elimination, which is exact on rationals.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::Result;
use crate::gamecore::{Coalition, GameSpec, GameState};
use crate::lattice::{MarketLattice, MartingaleMeasure};
use crate::scalar::Scalar;
use crate::tranches::{tranche_coalition_bounds, TrancheContract, TrancheValuation};
use crate::valuation::{price_interval, QuoteVerdict};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalitionBound<S> {
    pub coalition: Coalition,
    pub lower: S,
    pub upper: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Side {
    Lower,
    Upper,
}

/// One side of one coalition interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct BoundRef {
    pub coalition: Coalition,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult<S> {
    pub bounds: Vec<CoalitionBound<S>>,
    /// Lexicographically smallest consistent price vector.
    pub witness: Option<Vec<S>>,
    /// Original constraints combined into the contradiction when empty.
    pub conflict: Vec<BoundRef>,
}

impl<S: Scalar> FeasibilityResult<S> {
    pub fn is_feasible(&self) -> bool {
        self.witness.is_some()
    }

    /// Whether `x` satisfies every interval.
    pub fn admits(&self, x: &[S]) -> bool {
        satisfies(&self.bounds, x)
    }
}

pub fn satisfies<S: Scalar>(bounds: &[CoalitionBound<S>], x: &[S]) -> bool {
    bounds.iter().all(|b| {
        let sum: S = b.coalition.members().map(|i| x[i].clone()).sum();
        b.lower.approx_le(&sum) && sum.approx_le(&b.upper)
    })
}

/// Price intervals of every nonempty coalition of a game at `at`, ordered by
/// size and then members.
pub fn game_bounds<S: Scalar>(
    game: &GameSpec<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    at: &GameState,
) -> Result<Vec<CoalitionBound<S>>> {
    Coalition::nonempty_subsets(game.players())
        .into_iter()
        .map(|coalition| {
            let interval = price_interval(coalition, game, lattice, measure, at)?;
            Ok(CoalitionBound {
                coalition,
                lower: interval.lower_price().clone(),
                upper: interval.upper_price().clone(),
            })
        })
        .collect()
}

/// Time-0 value bounds of every nonempty coalition of tranche holders.
pub fn tranche_bounds<S: Scalar>(
    contract: &TrancheContract<S>,
    valuation: &TrancheValuation<S>,
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
) -> Result<Vec<CoalitionBound<S>>> {
    Coalition::nonempty_subsets(contract.tranches())
        .into_iter()
        .map(|coalition| {
            let b = tranche_coalition_bounds(contract, valuation, coalition, lattice, measure)?;
            Ok(CoalitionBound {
                coalition,
                lower: b.lower,
                upper: b.upper,
            })
        })
        .collect()
}

/// `coef · x ≤ rhs`, with the original constraints it was derived from.
#[derive(Debug, Clone)]
struct Row<S> {
    coef: Vec<S>,
    rhs: S,
    origin: BTreeSet<BoundRef>,
}

fn is_zero<S: Scalar>(v: &S) -> bool {
    v.approx_eq(&S::zero())
}

/// Keeps one row per coefficient direction (the tightest), after scaling
/// the first non-zero coefficient to ±1.
fn normalize<S: Scalar>(rows: Vec<Row<S>>) -> Vec<Row<S>> {
    let mut best: BTreeMap<Vec<String>, Row<S>> = BTreeMap::new();
    let mut constant = Vec::new();
    for row in rows {
        let Some(lead) = row.coef.iter().find(|c| !is_zero(*c)).cloned() else {
            constant.push(row);
            continue;
        };
        let scale = lead.abs_value();
        let row = Row {
            coef: row.coef.iter().map(|c| c.clone() / scale.clone()).collect(),
            rhs: row.rhs / scale,
            origin: row.origin,
        };
        let key: Vec<String> = row.coef.iter().map(Scalar::render).collect();
        match best.get(&key) {
            Some(existing) if existing.rhs <= row.rhs => {}
            _ => {
                best.insert(key, row);
            }
        }
    }
    constant.extend(best.into_values());
    constant
}

fn eliminate<S: Scalar>(rows: &[Row<S>], var: usize) -> Vec<Row<S>> {
    let mut keep = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for row in rows {
        let c = &row.coef[var];
        if is_zero(c) {
            keep.push(row.clone());
        } else if *c > S::zero() {
            pos.push(row);
        } else {
            neg.push(row);
        }
    }
    for p in &pos {
        for n in &neg {
            let a = p.coef[var].clone();
            let b = -n.coef[var].clone();
            let coef = p
                .coef
                .iter()
                .zip(&n.coef)
                .enumerate()
                .map(|(k, (x, y))| if k == var { S::zero() } else { b.clone() * x.clone() + a.clone() * y.clone() })
                .collect();
            let rhs = b.clone() * p.rhs.clone() + a.clone() * n.rhs.clone();
            let origin = p.origin.union(&n.origin).copied().collect();
            keep.push(Row { coef, rhs, origin });
        }
    }
    normalize(keep)
}

/// Decides whether some price vector lies in every coalition interval.
pub fn check_feasibility<S: Scalar>(players: usize, bounds: Vec<CoalitionBound<S>>) -> FeasibilityResult<S> {
    let mut rows = Vec::with_capacity(2 * bounds.len());
    for b in &bounds {
        let indicator: Vec<S> = (0..players)
            .map(|i| if b.coalition.contains(i) { S::one() } else { S::zero() })
            .collect();
        rows.push(Row {
            coef: indicator.iter().map(|c| -c.clone()).collect(),
            rhs: -b.lower.clone(),
            origin: [BoundRef {
                coalition: b.coalition,
                side: Side::Lower,
            }]
            .into(),
        });
        rows.push(Row {
            coef: indicator,
            rhs: b.upper.clone(),
            origin: [BoundRef {
                coalition: b.coalition,
                side: Side::Upper,
            }]
            .into(),
        });
    }
    // systems[k] involves only x_0..x_k (k = players means the full system)
    let mut systems = vec![normalize(rows)];
    for var in (0..players).rev() {
        let next = eliminate(systems.last().expect("nonempty"), var);
        systems.push(next);
    }
    systems.reverse();
    // systems[0] has no variables left
    if let Some(bad) = systems[0].iter().find(|r| !S::zero().approx_le(&r.rhs)) {
        return FeasibilityResult {
            bounds,
            witness: None,
            conflict: bad.origin.iter().copied().collect(),
        };
    }
    let mut x: Vec<S> = Vec::with_capacity(players);
    for var in 0..players {
        // rows of systems[var + 1] involve x_0..x_var only
        let mut low: Option<S> = None;
        let mut high: Option<S> = None;
        for row in &systems[var + 1] {
            let c = &row.coef[var];
            if is_zero(c) {
                continue;
            }
            let known: S = (0..var).map(|k| row.coef[k].clone() * x[k].clone()).sum();
            let bound = (row.rhs.clone() - known) / c.clone();
            if *c > S::zero() {
                high = Some(high.map_or(bound.clone(), |h| S::min_of(h, bound)));
            } else {
                low = Some(low.map_or(bound.clone(), |l| S::max_of(l, bound)));
            }
        }
        x.push(low.or(high).unwrap_or_else(S::zero));
    }
    FeasibilityResult {
        bounds,
        witness: Some(x),
        conflict: Vec::new(),
    }
}

/// Reselling arbitrage: a combined tranche quoted apart from the sum of its
/// members' quotes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResellingArbitrage<S> {
    pub coalition: Coalition,
    pub combined: S,
    pub parts: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuoteAnalysis<S> {
    /// Per coalition: its quote and where it sits in the interval.
    pub enter_and_hold: Vec<(Coalition, S, QuoteVerdict)>,
    pub reselling: Vec<ResellingArbitrage<S>>,
}

impl<S: Scalar> QuoteAnalysis<S> {
    pub fn is_arbitrage_free(&self) -> bool {
        self.reselling.is_empty() && self.enter_and_hold.iter().all(|(_, _, v)| *v == QuoteVerdict::NoArbitrage)
    }
}

/// Classifies single-tranche quotes, with optional separate quotes for
/// combined tranches (otherwise the sum of the members' quotes).
pub fn classify_quotes<S: Scalar>(
    bounds: &[CoalitionBound<S>],
    singles: &[S],
    combined: &[(Coalition, S)],
) -> QuoteAnalysis<S> {
    let overrides: BTreeMap<Coalition, S> = combined.iter().cloned().collect();
    let mut enter_and_hold = Vec::with_capacity(bounds.len());
    for b in bounds {
        let parts: S = b.coalition.members().map(|i| singles[i].clone()).sum();
        let quote = overrides.get(&b.coalition).cloned().unwrap_or(parts);
        let verdict = if !quote.approx_le(&b.upper) {
            QuoteVerdict::IssuerArbitrage
        } else if !b.lower.approx_le(&quote) {
            QuoteVerdict::HolderArbitrage
        } else {
            QuoteVerdict::NoArbitrage
        };
        enter_and_hold.push((b.coalition, quote, verdict));
    }
    let reselling = overrides
        .into_iter()
        .filter_map(|(coalition, quote)| {
            let parts: S = coalition.members().map(|i| singles[i].clone()).sum();
            (!quote.approx_eq(&parts)).then_some(ResellingArbitrage {
                coalition,
                combined: quote,
                parts,
            })
        })
        .collect();
    QuoteAnalysis {
        enter_and_hold,
        reselling,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    fn b(members: &[usize], lo: i64, hi: i64) -> CoalitionBound<Rational> {
        CoalitionBound {
            coalition: Coalition::from_members(members),
            lower: ratio(lo, 1),
            upper: ratio(hi, 1),
        }
    }

    #[test]
    fn dilemma_is_empty() {
        let r = check_feasibility(2, vec![b(&[0], 0, 0), b(&[1], 0, 0), b(&[0, 1], 2, 2)]);
        assert!(!r.is_feasible());
        let involved: BTreeSet<Coalition> = r.conflict.iter().map(|c| c.coalition).collect();
        assert_eq!(involved.len(), 3);
        assert!(r.conflict.contains(&BoundRef {
            coalition: Coalition::all(2),
            side: Side::Lower
        }));
    }

    #[test]
    fn constant_game_witness_is_the_quote() {
        let r = check_feasibility(2, vec![b(&[0], 3, 3), b(&[1], -1, -1), b(&[0, 1], 2, 2)]);
        assert_eq!(r.witness, Some(vec![ratio(3, 1), ratio(-1, 1)]));
    }

    #[test]
    fn witness_is_lexicographically_smallest() {
        let r = check_feasibility(2, vec![b(&[0], 0, 5), b(&[1], 0, 5), b(&[0, 1], 6, 8)]);
        assert_eq!(r.witness, Some(vec![ratio(1, 1), ratio(5, 1)]));
        assert!(r.admits(r.witness.as_ref().unwrap()));
    }

    #[test]
    fn quote_classification() {
        let bounds = vec![b(&[0], 1, 1), b(&[1], -1, -1), b(&[0, 1], 0, 0)];
        let high = classify_quotes(&bounds, &[ratio(11, 10), ratio(-1, 1)], &[]);
        assert_eq!(high.enter_and_hold[0].2, QuoteVerdict::IssuerArbitrage);
        let resold = classify_quotes(&bounds, &[ratio(11, 10), ratio(-1, 1)], &[(Coalition::all(2), ratio(0, 1))]);
        assert_eq!(resold.reselling.len(), 1);
        let fair = classify_quotes(&bounds, &[ratio(1, 1), ratio(-1, 1)], &[]);
        assert!(fair.is_arbitrage_free());
    }
}
