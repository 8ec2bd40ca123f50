//! Products of quadratic operators with the basis, decomposed into Weyl symbols.

use num_traits::Zero;
use sld_forge::operator_algebra::{multiply, weyl_decompose, OperatorPoly, WeylCombination};
use sld_forge::scalar::{crat, rat, ExactComplex};

fn x() -> OperatorPoly {
    OperatorPoly::x()
}
fn p() -> OperatorPoly {
    OperatorPoly::p()
}
fn mul(a: &OperatorPoly, b: &OperatorPoly) -> OperatorPoly {
    multiply(a, b).unwrap()
}
fn c(re: (i64, i64), im: (i64, i64)) -> ExactComplex {
    crat(rat(re.0, re.1), rat(im.0, im.1))
}
fn w(terms: &[((u32, u32), ExactComplex)]) -> WeylCombination {
    WeylCombination::from_terms(terms.iter().map(|((n, m), c)| (*n, *m, c.clone())))
}

const ZERO: (i64, i64) = (0, 1);

fn rows() -> Vec<(&'static str, OperatorPoly)> {
    vec![
        ("x²", mul(&x(), &x())),
        ("xp", mul(&x(), &p())),
        ("p²", mul(&p(), &p())),
        ("px", mul(&p(), &x())),
    ]
}

fn cols() -> Vec<(&'static str, OperatorPoly)> {
    vec![
        ("x", x()),
        ("p", p()),
        ("x²", mul(&x(), &x())),
        ("xp", mul(&x(), &p())),
        ("p²", mul(&p(), &p())),
        ("px", mul(&p(), &x())),
    ]
}

/// Correct decomposition of every row × column product.
fn corrected_table() -> Vec<Vec<WeylCombination>> {
    let r = |n: i64, d: i64| c((n, d), ZERO);
    let i = |n: i64, d: i64| c(ZERO, (n, d));
    vec![
        vec![
            w(&[((3, 0), r(1, 1))]),
            w(&[((2, 1), r(1, 1)), ((1, 0), i(1, 1))]),
            w(&[((4, 0), r(1, 1))]),
            w(&[((3, 1), r(1, 1)), ((2, 0), i(3, 2))]),
            w(&[((2, 2), r(1, 1)), ((1, 1), i(2, 1)), ((0, 0), r(-1, 2))]),
            w(&[((3, 1), r(1, 1)), ((2, 0), i(1, 2))]),
        ],
        vec![
            w(&[((2, 1), r(1, 1))]),
            w(&[((1, 2), r(1, 1)), ((0, 1), i(1, 1))]),
            w(&[((3, 1), r(1, 1)), ((2, 0), i(-1, 2))]),
            w(&[((2, 2), r(1, 1)), ((1, 1), i(1, 1))]),
            w(&[((1, 3), r(1, 1)), ((0, 2), i(3, 2))]),
            w(&[((2, 2), r(1, 1)), ((0, 0), r(1, 2))]),
        ],
        vec![
            w(&[((1, 2), r(1, 1)), ((0, 1), i(-1, 1))]),
            w(&[((0, 3), r(1, 1))]),
            w(&[((2, 2), r(1, 1)), ((1, 1), i(-2, 1)), ((0, 0), r(-1, 2))]),
            w(&[((1, 3), r(1, 1)), ((0, 2), i(-1, 2))]),
            w(&[((0, 4), r(1, 1))]),
            w(&[((1, 3), r(1, 1)), ((0, 2), i(-3, 2))]),
        ],
        vec![
            w(&[((2, 1), r(1, 1)), ((1, 0), i(-1, 1))]),
            w(&[((1, 2), r(1, 1))]),
            w(&[((3, 1), r(1, 1)), ((2, 0), i(-3, 2))]),
            w(&[((2, 2), r(1, 1)), ((0, 0), r(1, 2))]),
            w(&[((1, 3), r(1, 1)), ((0, 2), i(1, 2))]),
            w(&[((2, 2), r(1, 1)), ((1, 1), i(-1, 1))]),
        ],
    ]
}

#[test]
fn all_cells_match_corrected_table() {
    let expected = corrected_table();
    for (ri, (rn, row)) in rows().into_iter().enumerate() {
        for (ci, (cn, col)) in cols().into_iter().enumerate() {
            let got = weyl_decompose(&mul(&row, &col));
            assert_eq!(got, expected[ri][ci], "cell {rn}·{cn}: got {got}");
        }
    }
}

#[test]
fn cells_round_trip_through_expansion() {
    for (_, row) in rows() {
        for (_, col) in cols() {
            let prod = mul(&row, &col);
            assert_eq!(weyl_decompose(&prod).expand(), prod);
        }
    }
}

#[test]
fn reference_slips_violate_parity() {
    // x²·(xp) and x²·(px) are even; a correction proportional to x̂ cannot occur
    let x2 = mul(&x(), &x());
    for partner in [mul(&x(), &p()), mul(&p(), &x())] {
        let d = weyl_decompose(&mul(&x2, &partner));
        assert!(d.coefficient(1, 0).is_zero());
        assert!(!d.coefficient(2, 0).is_zero());
        for ((n, m), _) in d.terms() {
            assert_eq!((n + m) % 2, 0);
        }
    }
}
