//! Dense complex linear algebra for Hilbert spaces of a few qubits.
//!
//! Everything here is sized for at most a few thousand basis states. Matrices
//! are stored row-major. Tensor products put the left factor outermost, so
//! qubit 0 is the most significant bit of a basis index.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::prob::{FiniteProbabilitySpace, Symbol};

/// Absolute entrywise tolerance for every operator identity in the crate.
pub const TOLERANCE: f64 = 1e-12;

/// Default cap on the total dimension of a tensor product.
pub const DEFAULT_MAX_DIM: usize = 1 << 12;

/// Environment variable overriding [`DEFAULT_MAX_DIM`].
pub const MAX_DIM_ENV: &str = "TYPICALITY_LAB_MAX_DIM";

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// The active tensor-dimension cap.
pub fn max_dim() -> usize {
    std::env::var(MAX_DIM_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&v: &usize| v > 0)
        .unwrap_or(DEFAULT_MAX_DIM)
}

fn check_finite(entries: &[Complex64]) -> Result<()> {
    match entries.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Square complex matrix.
#[derive(Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    entries: Vec<Complex64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator({}x{})", self.dim, self.dim)?;
        for row in self.entries.chunks(self.dim) {
            let cells: Vec<String> = row.iter().map(|z| format!("{:+.4}{:+.4}i", z.re, z.im)).collect();
            writeln!(f, "  [{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

impl Operator {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("operator dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        check_finite(&entries)?;
        Ok(Self { dim, entries })
    }

    /// Builds an operator from real rows.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            entries.extend(row.iter().map(|&x| Complex64::new(x, 0.0)));
        }
        Self::new(dim, entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.entries[i * dim + i] = ONE;
        }
        op
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    /// `Y = i|1><0| - i|0><1|`.
    pub fn pauli_y() -> Self {
        let i = Complex64::new(0.0, 1.0);
        Self { dim: 2, entries: vec![ZERO, -i, i, ZERO] }
    }

    pub fn pauli_z() -> Self {
        Self::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap()
    }

    /// The rank-one projector `|v><v|`.
    pub fn projector(v: &StateVector) -> Self {
        Self::outer(v, v)
    }

    /// `|a><b|`.
    pub fn outer(a: &StateVector, b: &StateVector) -> Self {
        let dim = a.dim();
        assert_eq!(dim, b.dim(), "outer product of vectors with different dimensions");
        let mut entries = Vec::with_capacity(dim * dim);
        for x in &a.amplitudes {
            entries.extend(b.amplitudes.iter().map(|y| x * y.conj()));
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut entries = vec![ZERO; n * n];
        for r in 0..n {
            for c in 0..n {
                entries[c * n + r] = self.entries[r * n + c].conj();
            }
        }
        Self { dim: n, entries }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|z| z * factor).collect() }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Ok(Self { dim: self.dim, entries })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect();
        Ok(Self { dim: self.dim, entries })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let n = self.dim;
        let mut entries = vec![ZERO; n * n];
        for r in 0..n {
            let out = &mut entries[r * n..(r + 1) * n];
            for k in 0..n {
                let a = self.entries[r * n + k];
                // Projectors built from tensor products are mostly zeros.
                if a == ZERO {
                    continue;
                }
                let row = &other.entries[k * n..(k + 1) * n];
                for (o, b) in out.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self { dim: n, entries })
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.dim() });
        }
        let amplitudes = self
            .entries
            .chunks(self.dim)
            .map(|row| row.iter().zip(&v.amplitudes).map(|(a, x)| a * x).sum())
            .collect();
        Ok(StateVector { amplitudes })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_dim(other)?;
        Ok(max_abs_diff(&self.entries, &other.entries))
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other).map(|d| d <= tol).unwrap_or(false)
    }

    /// `max |A - A^dag|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `max |U^dag U - I|` together with `max |U U^dag - I|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let id = Self::identity(self.dim);
        let adj = self.adjoint();
        let left = adj.try_mul(self).unwrap().max_abs_diff(&id).unwrap();
        let right = self.try_mul(&adj).unwrap().max_abs_diff(&id).unwrap();
        left.max(right)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    /// `max |P^2 - P|`.
    pub fn idempotency_deviation(&self) -> f64 {
        self.try_mul(self).unwrap().max_abs_diff(self).unwrap()
    }

    fn same_dim(&self, other: &Self) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, found: other.dim })
        }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: Self) -> Operator {
        self.try_add(rhs).expect("operator dimensions differ")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: Self) -> Operator {
        self.try_sub(rhs).expect("operator dimensions differ")
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: Self) -> Operator {
        self.try_mul(rhs).expect("operator dimensions differ")
    }
}

/// Unit vector in a finite-dimensional Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Validates finiteness and unit norm within [`TOLERANCE`].
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("state vector must be non-empty".into()));
        }
        check_finite(&amplitudes)?;
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amplitudes })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dimension {dim}");
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    /// `|0>`.
    pub fn zero() -> Self {
        Self::basis(2, 0)
    }

    /// `|1>`.
    pub fn one() -> Self {
        Self::basis(2, 1)
    }

    /// `|+> = (|0> + |1>)/sqrt 2`.
    pub fn plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { amplitudes: vec![Complex64::new(h, 0.0); 2] }
    }

    /// The singlet `(|01> - |10>)/sqrt 2`.
    pub fn bell_singlet() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_real(&[0.0, h, -h, 0.0]).unwrap()
    }

    /// `(|000> - |111>)/sqrt 2`, with `|+1>` identified with `|0>`.
    pub fn ghz() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = [0.0; 8];
        amps[0] = h;
        amps[7] = -h;
        Self::from_real(&amps).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(max_abs_diff(&self.amplitudes, &other.amplitudes))
    }
}

/// Kronecker product with the left operand outermost.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

fn checked_product(a: usize, b: usize) -> Result<usize> {
    let cap = max_dim();
    match a.checked_mul(b) {
        Some(dim) if dim <= cap => Ok(dim),
        Some(dim) => Err(Error::DimensionOverflow { dim, cap }),
        None => Err(Error::DimensionOverflow { dim: usize::MAX, cap }),
    }
}

impl Tensor for Operator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let (n, m) = (self.dim, other.dim);
        let dim = checked_product(n, m)?;
        let mut entries = vec![ZERO; dim * dim];
        for (ar, arow) in self.entries.chunks(n).enumerate() {
            for (ac, &a) in arow.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for br in 0..m {
                    let dst = (ar * m + br) * dim + ac * m;
                    let src = &other.entries[br * m..(br + 1) * m];
                    for (d, b) in entries[dst..dst + m].iter_mut().zip(src) {
                        *d = a * b;
                    }
                }
            }
        }
        Ok(Self { dim, entries })
    }
}

impl Tensor for StateVector {
    fn tensor(&self, other: &Self) -> Result<Self> {
        checked_product(self.dim(), other.dim())?;
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Ok(Self { amplitudes })
    }
}

/// Folds [`Tensor::tensor`] left to right over a non-empty list.
pub fn tensor_all<T: Tensor + Clone>(factors: &[T]) -> Result<T> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("empty tensor product".into()))?;
    rest.iter().try_fold(first.clone(), |acc, f| acc.tensor(f))
}

/// `<psi|A|psi>` for Hermitian `A`.
pub fn expectation(state: &StateVector, op: &Operator) -> Result<f64> {
    if state.dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), found: state.dim() });
    }
    let dev = op.hermitian_deviation();
    if dev > TOLERANCE {
        return Err(Error::NotHermitian(dev));
    }
    let value = state.inner(&op.apply(state)?)?;
    // Hermitian input guarantees this up to rounding.
    debug_assert!(value.im.abs() <= TOLERANCE, "imaginary part {} in expectation", value.im);
    Ok(value.re)
}

/// Projection-valued measure: orthogonal projectors summing to the identity.
#[derive(Clone, Debug)]
pub struct Pvm {
    elements: Vec<(Symbol, Operator)>,
}

impl Pvm {
    pub fn new(elements: Vec<(Symbol, Operator)>) -> Result<Self> {
        let (_, first) = elements
            .first()
            .ok_or_else(|| Error::NotPvm("no elements".into()))?;
        let dim = first.dim();
        let mut sum = Operator::zeros(dim);
        for (i, (label, p)) in elements.iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
            let herm = p.hermitian_deviation();
            if herm > TOLERANCE {
                return Err(Error::NotPvm(format!("element {label} is not Hermitian ({herm:e})")));
            }
            for (j, (other_label, q)) in elements.iter().enumerate().skip(i) {
                let prod = p.try_mul(q)?;
                let target = if i == j { p.clone() } else { Operator::zeros(dim) };
                let dev = prod.max_abs_diff(&target)?;
                if dev > TOLERANCE {
                    return Err(Error::NotPvm(format!(
                        "P_{label} P_{other_label} deviates from the expected product by {dev:e}"
                    )));
                }
            }
            sum = sum.try_add(p)?;
        }
        let dev = sum.max_abs_diff(&Operator::identity(dim))?;
        if dev > TOLERANCE {
            return Err(Error::NotPvm(format!("projectors sum to identity only within {dev:e}")));
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[(Symbol, Operator)] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements[0].1.dim()
    }

    pub fn get(&self, label: &Symbol) -> Option<&Operator> {
        self.elements.iter().find(|(l, _)| l == label).map(|(_, p)| p)
    }

    pub fn into_measurement_set(self) -> MeasurementOperatorSet {
        MeasurementOperatorSet { elements: self.elements }
    }
}

/// Spectral PVM of an observable with `A^2 = I`: `E(+1) = (I + A)/2`, `E(-1) = (I - A)/2`.
pub fn involutory_pvm(obs: &Operator) -> Result<Pvm> {
    let herm = obs.hermitian_deviation();
    if herm > TOLERANCE {
        return Err(Error::NotHermitian(herm));
    }
    let id = Operator::identity(obs.dim());
    let square_dev = obs.try_mul(obs)?.max_abs_diff(&id)?;
    if square_dev > TOLERANCE {
        return Err(Error::NotInvolutory(square_dev));
    }
    let plus = (&id + obs).scale_real(0.5);
    let minus = (&id - obs).scale_real(0.5);
    Pvm::new(vec![(Symbol::Int(1), plus), (Symbol::Int(-1), minus)])
}

/// `U = sum_n U_n (x) P_n` with the target space on the left and the control on the right.
pub fn controlled_unitary(branches: &[(Operator, Operator)]) -> Result<Operator> {
    let (first_u, first_p) = branches
        .first()
        .ok_or_else(|| Error::InvalidArgument("controlled unitary needs at least one branch".into()))?;
    let target_dim = first_u.dim();
    let control_dim = first_p.dim();
    for (u, _) in branches {
        if u.dim() != target_dim {
            return Err(Error::DimensionMismatch { expected: target_dim, found: u.dim() });
        }
        let dev = u.unitarity_deviation();
        if dev > TOLERANCE {
            return Err(Error::NotUnitary(dev));
        }
    }
    Pvm::new(
        branches
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (Symbol::Int(i as i64), p.clone()))
            .collect(),
    )?;
    let mut total = Operator::zeros(checked_product(target_dim, control_dim)?);
    for (u, p) in branches {
        total = total.try_add(&u.tensor(p)?)?;
    }
    Ok(total)
}

/// Measurement operators `{M_m}` with `sum M^dag M = I`.
#[derive(Clone, Debug)]
pub struct MeasurementOperatorSet {
    elements: Vec<(Symbol, Operator)>,
}

impl MeasurementOperatorSet {
    /// Validates that the elements share a dimension and satisfy completeness.
    pub fn new(elements: Vec<(Symbol, Operator)>) -> Result<Self> {
        let set = Self::new_unchecked(elements)?;
        let dev = check_completeness(&set);
        if dev > TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "measurement operators violate completeness by {dev:e}"
            )));
        }
        Ok(set)
    }

    /// Checks only that the elements are non-empty and share a dimension.
    pub fn new_unchecked(elements: Vec<(Symbol, Operator)>) -> Result<Self> {
        let dim = elements
            .first()
            .map(|(_, m)| m.dim())
            .ok_or_else(|| Error::InvalidArgument("empty measurement operator set".into()))?;
        if let Some((_, m)) = elements.iter().find(|(_, m)| m.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: m.dim() });
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[(Symbol, Operator)] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].1.dim()
    }

    /// `<psi|M^dag M|psi>` for every element, in element order.
    pub fn outcome_probabilities(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.elements
            .iter()
            .map(|(_, m)| {
                let effect = m.adjoint().try_mul(m)?;
                expectation(state, &effect)
            })
            .collect()
    }

    /// The finite probability space of outcomes induced by `state`.
    pub fn outcome_distribution(&self, state: &StateVector) -> Result<FiniteProbabilitySpace> {
        let weights = self
            .outcome_probabilities(state)?
            .into_iter()
            // Rounding can leave -1e-17 on outcomes of probability zero.
            .map(|p| if p < 0.0 && p > -TOLERANCE { 0.0 } else { p })
            .collect();
        let alphabet = self.elements.iter().map(|(l, _)| l.clone()).collect();
        FiniteProbabilitySpace::new(alphabet, weights)
    }
}

/// `max |sum M^dag M - I|`.
pub fn check_completeness(set: &MeasurementOperatorSet) -> f64 {
    let dim = set.dim();
    let mut sum = Operator::zeros(dim);
    for (_, m) in &set.elements {
        sum = &sum + &(&m.adjoint() * m);
    }
    sum.max_abs_diff(&Operator::identity(dim)).unwrap()
}
