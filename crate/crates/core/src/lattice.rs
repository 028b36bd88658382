//! Recombining binomial market model.
//!
//! Nodes are addressed by `(date, ups)` with `0 <= ups <= date`. The
//! numeraire is `accrual^date`, and the unique martingale measure moves up
//! with the same probability at every node.

use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::scalar::Scalar;

/// A node of the lattice: `ups` counts up-moves since date 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub date: usize,
    pub ups: usize,
}

impl Node {
    pub const ROOT: Node = Node { date: 0, ups: 0 };

    pub fn new(date: usize, ups: usize) -> Self {
        Self { date, ups }
    }

    pub fn up(self) -> Node {
        Node::new(self.date + 1, self.ups + 1)
    }

    pub fn down(self) -> Node {
        Node::new(self.date + 1, self.ups)
    }
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.date, self.ups)
    }
}

/// Binomial (CRR) market with a risky asset and a bond growing by `accrual`
/// each period.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketLattice<S> {
    initial_price: S,
    up_factor: S,
    down_factor: S,
    accrual: S,
    steps: usize,
}

impl<S: Scalar> MarketLattice<S> {
    /// Validates the parameters and builds the lattice.
    pub fn build(initial_price: S, up_factor: S, down_factor: S, accrual: S, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(PricingError::Domain("lattice needs at least one step".into()));
        }
        if initial_price <= S::zero() {
            return Err(PricingError::Domain(format!(
                "initial price must be positive, got {}",
                initial_price.render()
            )));
        }
        if down_factor <= S::zero() {
            return Err(PricingError::Domain(format!(
                "down factor must be positive, got {}",
                down_factor.render()
            )));
        }
        if up_factor <= down_factor {
            return Err(PricingError::Domain(format!(
                "up factor {} must exceed down factor {}",
                up_factor.render(),
                down_factor.render()
            )));
        }
        if accrual <= S::zero() {
            return Err(PricingError::Domain(format!(
                "accrual must be positive, got {}",
                accrual.render()
            )));
        }
        if !(down_factor < accrual && accrual < up_factor) {
            return Err(PricingError::ArbitrageViolation {
                up: up_factor.render(),
                down: down_factor.render(),
                accrual: accrual.render(),
            });
        }
        Ok(Self {
            initial_price,
            up_factor,
            down_factor,
            accrual,
            steps,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn initial_price(&self) -> &S {
        &self.initial_price
    }

    pub fn up_factor(&self) -> &S {
        &self.up_factor
    }

    pub fn down_factor(&self) -> &S {
        &self.down_factor
    }

    pub fn accrual(&self) -> &S {
        &self.accrual
    }

    /// Total number of nodes, `(T+1)(T+2)/2`.
    pub fn node_count(&self) -> usize {
        (self.steps + 1) * (self.steps + 2) / 2
    }

    /// Nodes at `date`, bottom (`ups = 0`) first.
    pub fn nodes_at(&self, date: usize) -> impl Iterator<Item = Node> {
        (0..=date).map(move |ups| Node::new(date, ups))
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..=self.steps).flat_map(move |t| self.nodes_at(t))
    }

    /// `S0 * u^ups * d^(date - ups)`.
    pub fn price(&self, node: Node) -> S {
        debug_assert!(node.ups <= node.date);
        self.initial_price.clone()
            * self.up_factor.powi(node.ups)
            * self.down_factor.powi(node.date - node.ups)
    }

    /// Prices at every node of `date`, bottom first.
    pub fn prices_at(&self, date: usize) -> Vec<S> {
        self.nodes_at(date).map(|n| self.price(n)).collect()
    }

    /// Bond value `B_t = accrual^t`.
    pub fn numeraire(&self, date: usize) -> S {
        self.accrual.powi(date)
    }

    /// Converts a time-`date` amount into time-0 units.
    pub fn discount(&self, value: S, date: usize) -> Result<S> {
        self.check_date(date)?;
        Ok(value / self.numeraire(date))
    }

    /// Inverse of [`MarketLattice::discount`].
    pub fn compound(&self, value: S, date: usize) -> Result<S> {
        self.check_date(date)?;
        Ok(value * self.numeraire(date))
    }

    fn check_date(&self, date: usize) -> Result<()> {
        if date > self.steps {
            return Err(PricingError::Domain(format!(
                "date {date} beyond lattice horizon {}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// The risk-neutral measure of a binomial lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleMeasure<S> {
    up_probability: S,
}

impl<S: Scalar> MartingaleMeasure<S> {
    /// `q = (R - d) / (u - d)`.
    pub fn of(lattice: &MarketLattice<S>) -> Self {
        let q = (lattice.accrual.clone() - lattice.down_factor.clone())
            / (lattice.up_factor.clone() - lattice.down_factor.clone());
        Self { up_probability: q }
    }

    pub fn up_probability(&self) -> &S {
        &self.up_probability
    }

    pub fn down_probability(&self) -> S {
        S::one() - self.up_probability.clone()
    }

    /// One-step expectation `q * up + (1 - q) * down`, no discounting.
    pub fn expect(&self, up: &S, down: &S) -> S {
        self.up_probability.clone() * up.clone() + self.down_probability() * down.clone()
    }

    /// Maps values over the `t+2` nodes of date `t+1` to the `t+1` nodes of
    /// date `t` (undiscounted).
    pub fn conditional_expectation(&self, next: &[S]) -> Result<Vec<S>> {
        if next.len() < 2 {
            return Err(PricingError::Shape {
                expected: 2,
                actual: next.len(),
            });
        }
        Ok(next.windows(2).map(|w| self.expect(&w[1], &w[0])).collect())
    }

    /// Probability of a specific path with `ups` up-moves out of `steps`.
    pub fn path_probability(&self, ups: usize, steps: usize) -> S {
        self.up_probability.powi(ups) * self.down_probability().powi(steps - ups)
    }

    /// Discounted rollback over `from..to` dates: values at the nodes of `to`
    /// become time-`from` values at the nodes of `from` (same currency date
    /// convention as the inputs, i.e. divided by `accrual^(to - from)`).
    pub fn rollback(&self, lattice: &MarketLattice<S>, values_at_to: &[S], from: usize, to: usize) -> Result<Vec<S>> {
        if values_at_to.len() != to + 1 {
            return Err(PricingError::Shape {
                expected: to + 1,
                actual: values_at_to.len(),
            });
        }
        let mut layer = values_at_to.to_vec();
        for _ in from..to {
            layer = self
                .conditional_expectation(&layer)?
                .into_iter()
                .map(|v| v / lattice.accrual().clone())
                .collect();
        }
        Ok(layer)
    }
}

/// Convenience wrapper for [`MartingaleMeasure::of`].
pub fn martingale_measure<S: Scalar>(lattice: &MarketLattice<S>) -> MartingaleMeasure<S> {
    MartingaleMeasure::of(lattice)
}

/// Validated conditional expectation: `values` must cover every node of
/// `date + 1`.
pub fn conditional_expectation<S: Scalar>(
    lattice: &MarketLattice<S>,
    measure: &MartingaleMeasure<S>,
    date: usize,
    values: &[S],
) -> Result<Vec<S>> {
    if date >= lattice.steps() {
        return Err(PricingError::Domain(format!("no date after {date}")));
    }
    if values.len() != date + 2 {
        return Err(PricingError::Shape {
            expected: date + 2,
            actual: values.len(),
        });
    }
    measure.conditional_expectation(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    fn lat(s0: i64, u: Rational, d: Rational, r: Rational, steps: usize) -> MarketLattice<Rational> {
        MarketLattice::build(ratio(s0, 1), u, d, r, steps).unwrap()
    }

    #[test]
    fn one_step_prices() {
        let l = lat(4, ratio(2, 1), ratio(1, 2), ratio(1, 1), 1);
        assert_eq!(l.price(Node::ROOT), ratio(4, 1));
        assert_eq!(l.prices_at(1), vec![ratio(2, 1), ratio(8, 1)]);
        assert_eq!(l.node_count(), 3);
    }

    #[test]
    fn two_step_extremes() {
        let l = lat(1, ratio(2, 1), ratio(1, 2), ratio(1, 1), 2);
        assert_eq!(l.price(Node::new(2, 2)), ratio(4, 1));
        assert_eq!(l.price(Node::new(2, 0)), ratio(1, 4));
        assert_eq!(l.node_count(), 6);
    }

    #[test]
    fn rejects_arbitrage_and_bad_domain() {
        let err = MarketLattice::build(ratio(4, 1), ratio(2, 1), ratio(1, 2), ratio(3, 1), 1).unwrap_err();
        assert!(matches!(err, PricingError::ArbitrageViolation { .. }));
        let err = MarketLattice::build(ratio(4, 1), ratio(2, 1), ratio(1, 2), ratio(1, 2), 1).unwrap_err();
        assert!(matches!(err, PricingError::ArbitrageViolation { .. }));
        assert!(matches!(
            MarketLattice::build(ratio(0, 1), ratio(2, 1), ratio(1, 2), ratio(1, 1), 1),
            Err(PricingError::Domain(_))
        ));
        assert!(matches!(
            MarketLattice::build(ratio(1, 1), ratio(2, 1), ratio(1, 2), ratio(1, 1), 0),
            Err(PricingError::Domain(_))
        ));
        assert!(matches!(
            MarketLattice::build(ratio(1, 1), ratio(1, 2), ratio(2, 1), ratio(1, 1), 1),
            Err(PricingError::Domain(_))
        ));
    }

    #[test]
    fn measure_values() {
        let q = MartingaleMeasure::of(&lat(4, ratio(2, 1), ratio(1, 2), ratio(1, 1), 1));
        assert_eq!(q.up_probability(), &ratio(1, 3));
        let q = MartingaleMeasure::of(&lat(4, ratio(2, 1), ratio(1, 2), ratio(5, 4), 1));
        assert_eq!(q.up_probability(), &ratio(1, 2));
        for eps in [ratio(1, 10), ratio(1, 2), ratio(99, 100)] {
            let l = lat(1, ratio(1, 1) + eps.clone(), ratio(1, 1) - eps, ratio(1, 1), 1);
            assert_eq!(MartingaleMeasure::of(&l).up_probability(), &ratio(1, 2));
        }
    }

    #[test]
    fn conditional_expectation_cases() {
        let l = lat(4, ratio(2, 1), ratio(1, 2), ratio(1, 1), 1);
        let q = MartingaleMeasure::of(&l);
        // down first: (down = 2, up = 8)
        let e = conditional_expectation(&l, &q, 0, &[ratio(2, 1), ratio(8, 1)]).unwrap();
        assert_eq!(e, vec![ratio(4, 1)]);
        let c = conditional_expectation(&l, &q, 0, &[ratio(7, 1), ratio(7, 1)]).unwrap();
        assert_eq!(c, vec![ratio(7, 1)]);
        assert!(matches!(
            conditional_expectation(&l, &q, 0, &[ratio(7, 1)]),
            Err(PricingError::Shape { .. })
        ));
    }

    #[test]
    fn discount_and_compound() {
        let l = lat(4, ratio(2, 1), ratio(1, 2), ratio(5, 4), 2);
        assert_eq!(l.discount(ratio(100, 1), 0).unwrap(), ratio(100, 1));
        assert_eq!(l.discount(ratio(125, 1), 1).unwrap(), ratio(100, 1));
        let v = ratio(37, 3);
        assert_eq!(l.discount(l.compound(v.clone(), 2).unwrap(), 2).unwrap(), v);
        assert!(matches!(l.discount(ratio(1, 1), 3), Err(PricingError::Domain(_))));
    }

    #[test]
    fn float_mode_agrees() {
        let l = MarketLattice::build(4.0, 2.0, 0.5, 1.0, 1).unwrap();
        let q = MartingaleMeasure::of(&l);
        assert!((q.up_probability() - 1.0 / 3.0).abs() < 1e-12);
    }
}
