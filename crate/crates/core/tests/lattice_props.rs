mod common;

use gameclaims::lattice::{conditional_expectation, martingale_measure};
use gameclaims::{ratio, MarketLattice, Node, Rational, Scalar};
use proptest::prelude::*;

fn market() -> impl Strategy<Value = (MarketLattice<Rational>, usize)> {
    (1i64..20, 1i64..4, 1i64..4, 0i64..3, 1usize..6).prop_map(|(s0, up_extra, down_den, carry, steps)| {
        // d < 1 <= R < u
        let up = ratio(1, 1) + ratio(up_extra, 2);
        let down = ratio(1, down_den + 1);
        let accrual = ratio(1, 1) + ratio(carry, 10) * (up.clone() - ratio(1, 1)) / ratio(2, 1);
        (MarketLattice::build(ratio(s0, 1), up, down, accrual, steps).unwrap(), steps)
    })
}

proptest! {
    #[test]
    fn discounted_price_is_a_martingale((lat, steps) in market()) {
        let q = martingale_measure(&lat);
        for date in 0..steps {
            for node in lat.nodes_at(date) {
                let here = lat.price(node) / lat.numeraire(date);
                let up = lat.price(node.up()) / lat.numeraire(date + 1);
                let down = lat.price(node.down()) / lat.numeraire(date + 1);
                prop_assert_eq!(q.expect(&up, &down), here);
            }
        }
    }

    #[test]
    fn rollback_matches_path_sum((lat, steps) in market(), strike in 1i64..30) {
        let q = martingale_measure(&lat);
        let k = ratio(strike, 1);
        let payoff: Vec<Rational> = lat
            .prices_at(steps)
            .into_iter()
            .map(|s| Rational::max_of(s - k.clone(), Rational::zero()))
            .collect();
        let mut values = payoff.clone();
        for date in (0..steps).rev() {
            values = conditional_expectation(&lat, &q, date, &values)
                .unwrap()
                .into_iter()
                .map(|v| v / lat.accrual().clone())
                .collect();
        }
        let mut direct = Rational::zero();
        let mut binom = 1i64;
        for (ups, v) in payoff.iter().enumerate() {
            direct += Rational::from_i64(binom) * q.path_probability(ups, steps) * v.clone();
            binom = binom * (steps - ups) as i64 / (ups as i64 + 1);
        }
        direct /= lat.numeraire(steps);
        prop_assert_eq!(&values[0], &direct);
        prop_assert_eq!(&q.rollback(&lat, &payoff, 0, steps).unwrap()[0], &direct);
    }

    #[test]
    fn float_martingale_within_tolerance(s0 in 1.0f64..100.0, up in 1.05f64..2.0, down in 0.3f64..0.95) {
        let accrual = 1.0 + (up - 1.0) / 3.0;
        let lat = MarketLattice::build(s0, up, down, accrual, 4).unwrap();
        let q = martingale_measure(&lat);
        for date in 0..4 {
            for node in lat.nodes_at(date) {
                let here = lat.price(node) / lat.numeraire(date);
                let next = q.expect(&(lat.price(node.up()) / lat.numeraire(date + 1)), &(lat.price(node.down()) / lat.numeraire(date + 1)));
                prop_assert!((next - here).abs() <= 1e-12 * here.abs().max(1.0));
            }
        }
    }
}

#[test]
fn node_count_is_triangular() {
    let lat = common::lattice(3);
    assert_eq!(lat.node_count(), 10);
    assert_eq!(lat.price(Node::new(3, 0)), ratio(1, 2));
}
