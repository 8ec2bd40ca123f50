//! Assembly of the linear system `M·c = D` for the SLD expansion coefficients.
//!
//! Tracing `∂θ∂tρ = ∂t∂θρ` against a test operator `A_j`, with the SLD
//! expanded as `Λ = Σ c_i A_i` and held fixed in time, gives eight bracket
//! terms per matrix entry. With `ℒ†` the adjoint Caldeira–Leggett generator
//! they read, for test operator `A_j` and expansion operator `A_i`:
//!
//! ```text
//!  1. −(i/2)    ⟨{A_j, [H, A_i]}⟩
//!  2. −(iγ/2)   ⟨{A_i, {p, [A_j, x]}}⟩
//!  3. −(γT/2b)  ⟨{A_i, [x, [x, A_j]]}⟩
//!  4. +(iγ/2)   ⟨{p, [{A_i, A_j}, x]}⟩
//!  5. +(γT/2b)  ⟨[x, [x, {A_i, A_j}]]⟩
//!  6. −i        ⟨A_j⟩⟨[A_i, H]⟩
//!  7. −iγ       ⟨A_j⟩⟨{p, [A_i, x]}⟩
//!  8. −(γT/b)   ⟨A_j⟩⟨[x, [x, A_i]]⟩
//! ```
//!
//! and the constant vector is `D_j = −Tr[A_j (∂θℒ)ρ]`:
//! `(γ/b)⟨[x,[x,A_j]]⟩` for `θ = T`, and
//! `(T/b)⟨[x,[x,A_j]]⟩ + i⟨{p,[A_j,x]}⟩` for `θ = γ`.
//!
//! [`Layout::Printed`] stores the entry for `(A_i, A_j)` at row `i`, column
//! `j` and solves `M·c = D` row by row. This is the layout of the reference
//! equilibrium and squeezed-state matrices and reproduces their closed-form
//! coefficients. [`Layout::TestRows`] is its transpose: one row per test
//! operator, i.e. the equations exactly as traced.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ModelParams;
use crate::gaussian_moments::{CompiledOperator, MomentError, MomentState, WeylMomentTable};
use crate::operator_algebra::{anticommutator, commutator, multiply, AlgebraError, OperatorPoly};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("degenerate state: {0}")]
    Degenerate(#[from] MomentError),
    #[error("basis element {index} ({label}) is not Hermitian")]
    NonHermitianBasis { index: usize, label: String },
    #[error("unknown estimation parameter `{0}` (expected `T` or `gamma`)")]
    UnknownTheta(String),
    #[error("entry ({row}, {col}) has imaginary part {imag} (real part {real})")]
    ComplexEntry {
        row: usize,
        col: usize,
        real: f64,
        imag: f64,
    },
}

/// Environmental parameter being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Theta {
    #[serde(rename = "T")]
    Temperature,
    #[serde(rename = "gamma")]
    Gamma,
}

impl Theta {
    pub const ALL: [Theta; 2] = [Theta::Temperature, Theta::Gamma];

    pub fn tag(self) -> &'static str {
        match self {
            Theta::Temperature => "T",
            Theta::Gamma => "gamma",
        }
    }

    /// Value of this parameter in `params`.
    pub fn value<S: Scalar>(self, params: &ModelParams<S>) -> S {
        match self {
            Theta::Temperature => params.temperature.clone(),
            Theta::Gamma => params.gamma.clone(),
        }
    }

    /// `params` with this parameter replaced by `value`.
    pub fn with_value<S: Scalar>(self, params: &ModelParams<S>, value: S) -> ModelParams<S> {
        match self {
            Theta::Temperature => params.with_temperature(value),
            Theta::Gamma => params.with_gamma(value),
        }
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Theta {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "T" | "temperature" => Ok(Theta::Temperature),
            "gamma" | "γ" => Ok(Theta::Gamma),
            other => Err(BuildError::UnknownTheta(other.to_string())),
        }
    }
}

/// Orientation of the assembled matrix; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Printed,
    TestRows,
}

/// Ordered list of Hermitian expansion operators.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorBasis {
    elements: Vec<OperatorPoly>,
    labels: Vec<String>,
}

impl OperatorBasis {
    /// `[x, p, x², p², {x,p}]`
    pub fn standard() -> Self {
        let x = OperatorPoly::x();
        let p = OperatorPoly::p();
        let xx = multiply(&x, &x).expect("degree 2");
        let pp = multiply(&p, &p).expect("degree 2");
        let anti = anticommutator(&x, &p).expect("degree 2");
        Self {
            elements: vec![x, p, xx, pp, anti],
            labels: ["x", "p", "xx", "pp", "xp"].map(String::from).to_vec(),
        }
    }

    pub fn new(elements: Vec<OperatorPoly>, labels: Vec<String>) -> Result<Self, BuildError> {
        assert_eq!(elements.len(), labels.len(), "one label per basis element");
        for (index, (op, label)) in elements.iter().zip(&labels).enumerate() {
            if !op.is_hermitian() {
                return Err(BuildError::NonHermitianBasis {
                    index,
                    label: label.clone(),
                });
            }
        }
        Ok(Self { elements, labels })
    }

    pub fn elements(&self) -> &[OperatorPoly] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Index groups of odd and of even operators; entries coupling the two
    /// groups vanish in every zero-mean Gaussian state. A single group is
    /// returned when some element mixes parities.
    pub fn parity_blocks(&self) -> Vec<Vec<usize>> {
        let parity = |op: &OperatorPoly| {
            let mut it = op.terms().map(|((n, m), _)| (n + m) % 2);
            let first = it.next()?;
            it.all(|q| q == first).then_some(first)
        };
        let mut odd = Vec::new();
        let mut even = Vec::new();
        for (k, op) in self.elements.iter().enumerate() {
            match parity(op) {
                Some(1) => odd.push(k),
                Some(_) => even.push(k),
                None => return vec![(0..self.len()).collect()],
            }
        }
        [odd, even].into_iter().filter(|b| !b.is_empty()).collect()
    }
}

/// Labels of the eight matrix terms, in order.
pub const TERM_LABELS: [&str; 8] = [
    "hamiltonian",
    "friction",
    "diffusion",
    "friction_pair",
    "diffusion_pair",
    "mean_hamiltonian",
    "mean_friction",
    "mean_diffusion",
];

#[derive(Debug, Clone)]
enum Factor<S> {
    Single(CompiledOperator<S>),
    /// `⟨first⟩·⟨second⟩`
    Product(CompiledOperator<S>, CompiledOperator<S>),
}

impl<S: Scalar> Factor<S> {
    fn eval(&self, table: &WeylMomentTable<S>) -> Complex<S> {
        match self {
            Factor::Single(w) => w.eval(table),
            Factor::Product(a, b) => a.eval(table) * b.eval(table),
        }
    }
}

#[derive(Debug, Clone)]
struct Term<S> {
    parts: Vec<(Complex<S>, Factor<S>)>,
}

impl<S: Scalar> Term<S> {
    fn eval(&self, table: &WeylMomentTable<S>) -> Complex<S> {
        let mut acc = Complex::new(S::zero(), S::zero());
        for (pre, f) in &self.parts {
            acc = acc + pre.clone() * f.eval(table);
        }
        acc
    }
}

fn cplx<S: Scalar>(re: S, im: S) -> Complex<S> {
    Complex::new(re, im)
}

/// One matrix entry for expansion operator `a_i` and test operator `a_j`,
/// term by term.
fn entry_terms<S: Scalar>(
    a_i: &OperatorPoly,
    a_j: &OperatorPoly,
    params: &ModelParams<S>,
) -> Result<[Term<S>; 8], AlgebraError> {
    let x = OperatorPoly::x();
    let p = OperatorPoly::p();
    let xx = multiply(&x, &x)?;
    let pp = multiply(&p, &p)?;
    let b = params.b();
    let c = params.c();
    let g = params.gamma.clone();
    let t = params.temperature.clone();
    let zero = S::zero();
    let half = S::ratio(1, 2);
    let gt_over_b = g.clone() * t / b.clone();

    let single = |op: OperatorPoly| Factor::Single(CompiledOperator::new(&op));
    let product = |l: &OperatorPoly, r: OperatorPoly| {
        Factor::Product(CompiledOperator::new(l), CompiledOperator::new(&r))
    };

    // H = b p² + c x² enters linearly; each H-term is split in two parts.
    let ham_anti = |h: &OperatorPoly| -> Result<OperatorPoly, AlgebraError> {
        anticommutator(a_j, &commutator(h, a_i)?)
    };
    let t1 = Term {
        parts: vec![
            (
                cplx(zero.clone(), -half.clone() * b.clone()),
                single(ham_anti(&pp)?),
            ),
            (
                cplx(zero.clone(), -half.clone() * c.clone()),
                single(ham_anti(&xx)?),
            ),
        ],
    };
    let t2 = Term {
        parts: vec![(
            cplx(zero.clone(), -half.clone() * g.clone()),
            single(anticommutator(
                a_i,
                &anticommutator(&p, &commutator(a_j, &x)?)?,
            )?),
        )],
    };
    let t3 = Term {
        parts: vec![(
            cplx(-half.clone() * gt_over_b.clone(), zero.clone()),
            single(anticommutator(
                a_i,
                &commutator(&x, &commutator(&x, a_j)?)?,
            )?),
        )],
    };
    let pair = anticommutator(a_i, a_j)?;
    let t4 = Term {
        parts: vec![(
            cplx(zero.clone(), half.clone() * g.clone()),
            single(anticommutator(&p, &commutator(&pair, &x)?)?),
        )],
    };
    let t5 = Term {
        parts: vec![(
            cplx(half * gt_over_b.clone(), zero.clone()),
            single(commutator(&x, &commutator(&x, &pair)?)?),
        )],
    };
    let t6 = Term {
        parts: vec![
            (cplx(zero.clone(), -b), product(a_j, commutator(a_i, &pp)?)),
            (cplx(zero.clone(), -c), product(a_j, commutator(a_i, &xx)?)),
        ],
    };
    let t7 = Term {
        parts: vec![(
            cplx(zero.clone(), -g),
            product(a_j, anticommutator(&p, &commutator(a_i, &x)?)?),
        )],
    };
    let t8 = Term {
        parts: vec![(
            cplx(-gt_over_b, zero),
            product(a_j, commutator(&x, &commutator(&x, a_i)?)?),
        )],
    };
    Ok([t1, t2, t3, t4, t5, t6, t7, t8])
}

fn rhs_terms<S: Scalar>(
    a_j: &OperatorPoly,
    params: &ModelParams<S>,
    theta: Theta,
) -> Result<Term<S>, AlgebraError> {
    let x = OperatorPoly::x();
    let p = OperatorPoly::p();
    let b = params.b();
    let zero = S::zero();
    let double = CompiledOperator::new(&commutator(&x, &commutator(&x, a_j)?)?);
    Ok(match theta {
        Theta::Temperature => Term {
            parts: vec![(cplx(params.gamma.clone() / b, zero), Factor::Single(double))],
        },
        Theta::Gamma => Term {
            parts: vec![
                (
                    cplx(params.temperature.clone() / b, zero.clone()),
                    Factor::Single(double),
                ),
                (
                    cplx(zero, S::one()),
                    Factor::Single(CompiledOperator::new(&anticommutator(
                        &p,
                        &commutator(a_j, &x)?,
                    )?)),
                ),
            ],
        },
    })
}

/// Matrix `M`, vector `D`, and the inputs they were assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct SldSystem<S: nalgebra::Scalar = f64> {
    pub matrix: DMatrix<S>,
    pub rhs: DVector<S>,
    pub theta: Theta,
    pub layout: Layout,
    pub state: MomentState<S>,
    pub params: ModelParams<S>,
}

impl<S: Scalar + nalgebra::Scalar> SldSystem<S> {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Same system in the other layout.
    pub fn transposed(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
            layout: match self.layout {
                Layout::Printed => Layout::TestRows,
                Layout::TestRows => Layout::Printed,
            },
            ..self.clone()
        }
    }
}

/// Per-entry, per-term diagnostic of `M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryBreakdown {
    pub row: usize,
    pub col: usize,
    pub terms: Vec<(String, f64)>,
    pub total: f64,
}

/// Precompiled bracket templates for fixed basis and model parameters.
///
/// All operator algebra happens once in [`SldAssembler::new`]; assembling a
/// system for a state only evaluates Gaussian moments.
#[derive(Debug, Clone)]
pub struct SldAssembler<S: Scalar = f64> {
    basis: OperatorBasis,
    params: ModelParams<S>,
    /// `entries[i][j]`: expansion operator `i`, test operator `j`
    entries: Vec<Vec<[Term<S>; 8]>>,
    rhs_temperature: Vec<Term<S>>,
    rhs_gamma: Vec<Term<S>>,
    max_degree: u32,
}

impl<S: Scalar + nalgebra::Scalar> SldAssembler<S> {
    pub fn new(basis: &OperatorBasis, params: &ModelParams<S>) -> Result<Self, BuildError> {
        let ops = basis.elements();
        let mut entries = Vec::with_capacity(ops.len());
        for a_i in ops {
            let row = ops
                .iter()
                .map(|a_j| entry_terms(a_i, a_j, params))
                .collect::<Result<Vec<_>, _>>()?;
            entries.push(row);
        }
        let rhs_temperature = ops
            .iter()
            .map(|a| rhs_terms(a, params, Theta::Temperature))
            .collect::<Result<Vec<_>, _>>()?;
        let rhs_gamma = ops
            .iter()
            .map(|a| rhs_terms(a, params, Theta::Gamma))
            .collect::<Result<Vec<_>, _>>()?;
        let top = ops.iter().map(OperatorPoly::degree).max().unwrap_or(1);
        Ok(Self {
            basis: basis.clone(),
            params: params.clone(),
            entries,
            rhs_temperature,
            rhs_gamma,
            max_degree: (2 * top).max(2),
        })
    }

    pub fn basis(&self) -> &OperatorBasis {
        &self.basis
    }

    pub fn params(&self) -> &ModelParams<S> {
        &self.params
    }

    fn table(&self, state: &MomentState<S>) -> Result<WeylMomentTable<S>, BuildError> {
        state.validate()?;
        Ok(WeylMomentTable::new(state, self.max_degree))
    }

    fn real_part(value: Complex<S>, scale: S, row: usize, col: usize) -> Result<S, BuildError> {
        if value.im.abs() > S::tolerance() * (scale + S::one()) {
            return Err(BuildError::ComplexEntry {
                row,
                col,
                real: value.re.to_f64(),
                imag: value.im.to_f64(),
            });
        }
        Ok(value.re)
    }

    /// Matrix `M` in the requested layout.
    pub fn matrix(&self, state: &MomentState<S>, layout: Layout) -> Result<DMatrix<S>, BuildError> {
        let table = self.table(state)?;
        self.matrix_with(&table, layout)
    }

    fn matrix_with(
        &self,
        table: &WeylMomentTable<S>,
        layout: Layout,
    ) -> Result<DMatrix<S>, BuildError> {
        let n = self.basis.len();
        let mut m = DMatrix::from_element(n, n, S::zero());
        for i in 0..n {
            for j in 0..n {
                let mut total = Complex::new(S::zero(), S::zero());
                let mut scale = S::zero();
                for term in &self.entries[i][j] {
                    let v = term.eval(table);
                    scale = scale + v.re.abs() + v.im.abs();
                    total = total + v;
                }
                let value = Self::real_part(total, scale, i, j)?;
                match layout {
                    Layout::Printed => m[(i, j)] = value,
                    Layout::TestRows => m[(j, i)] = value,
                }
            }
        }
        Ok(m)
    }

    /// Constant vector `D` (indexed by test operator in both layouts).
    pub fn rhs(&self, state: &MomentState<S>, theta: Theta) -> Result<DVector<S>, BuildError> {
        let table = self.table(state)?;
        self.rhs_with(&table, theta)
    }

    fn rhs_with(&self, table: &WeylMomentTable<S>, theta: Theta) -> Result<DVector<S>, BuildError> {
        let terms = match theta {
            Theta::Temperature => &self.rhs_temperature,
            Theta::Gamma => &self.rhs_gamma,
        };
        let mut d = DVector::from_element(terms.len(), S::zero());
        for (j, term) in terms.iter().enumerate() {
            let v = term.eval(table);
            let scale = v.re.abs();
            d[j] = Self::real_part(v, scale, j, usize::MAX)?;
        }
        Ok(d)
    }

    pub fn assemble(
        &self,
        state: &MomentState<S>,
        theta: Theta,
        layout: Layout,
    ) -> Result<SldSystem<S>, BuildError> {
        let table = self.table(state)?;
        Ok(SldSystem {
            matrix: self.matrix_with(&table, layout)?,
            rhs: self.rhs_with(&table, theta)?,
            theta,
            layout,
            state: state.clone(),
            params: self.params.clone(),
        })
    }

    /// Term-by-term values of every entry (printed layout indices).
    pub fn breakdown(&self, state: &MomentState<S>) -> Result<Vec<EntryBreakdown>, BuildError> {
        let table = self.table(state)?;
        let n = self.basis.len();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let terms: Vec<(String, f64)> = self.entries[i][j]
                    .iter()
                    .zip(TERM_LABELS)
                    .map(|(t, label)| (label.to_string(), t.eval(&table).re.to_f64()))
                    .collect();
                let total = terms.iter().map(|(_, v)| v).sum();
                out.push(EntryBreakdown {
                    row: i,
                    col: j,
                    terms,
                    total,
                });
            }
        }
        Ok(out)
    }
}

/// Per-term JSON diagnostic, keyed `"M[row][col]" → {term: value}`.
pub fn breakdown_json(entries: &[EntryBreakdown], labels: &[String]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for e in entries {
        let mut terms = serde_json::Map::new();
        for (label, v) in &e.terms {
            terms.insert(label.clone(), serde_json::json!(v));
        }
        terms.insert("total".into(), serde_json::json!(e.total));
        map.insert(
            format!(
                "M[{}][{}] ({},{})",
                e.row, e.col, labels[e.row], labels[e.col]
            ),
            serde_json::Value::Object(terms),
        );
    }
    serde_json::Value::Object(map)
}

/// One-shot generic assembly in the printed layout.
pub fn build_generic<S: Scalar + nalgebra::Scalar>(
    basis: &OperatorBasis,
    params: &ModelParams<S>,
    state: &MomentState<S>,
    theta: Theta,
) -> Result<SldSystem<S>, BuildError> {
    SldAssembler::new(basis, params)?.assemble(state, theta, Layout::Printed)
}

/// Checks that rows/columns of different parity blocks are exactly zero.
pub fn block_structure_holds<S: Scalar + nalgebra::Scalar>(
    matrix: &DMatrix<S>,
    blocks: &[Vec<usize>],
) -> bool {
    let block_of = |k: usize| blocks.iter().position(|b| b.contains(&k));
    (0..matrix.nrows()).all(|i| {
        (0..matrix.ncols()).all(|j| block_of(i) == block_of(j) || matrix[(i, j)].is_zero())
    })
}
