//! Operators `Σ_n D_{c_n} T^n` on ℓ²(ℤ) kept in normal form (diagonals to the
//! left of shifts), with `T e_k = e_{k+1}` and `(Sγ)_k = γ_{k+1}`, so that
//! `T^n D_γ = D_{S^{-n}γ} T^n`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use faer::c64;

use crate::error::{Error, Result};
use crate::opcore::{IndexWindow, TruncatedOperator};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// What is known symbolically about a sequence; used only to fold constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeqTag {
    Constant(c64),
    Affine { slope: c64, offset: c64 },
    General,
}

/// Evaluatable map `k ↦ γ_k`. Evaluators must be pure.
#[derive(Clone)]
pub struct DiagSeq {
    f: Arc<dyn Fn(i64) -> c64 + Send + Sync>,
    tag: SeqTag,
}

impl fmt::Debug for DiagSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiagSeq({:?})", self.tag)
    }
}

impl DiagSeq {
    pub fn from_fn(f: impl Fn(i64) -> c64 + Send + Sync + 'static) -> Self {
        DiagSeq { f: Arc::new(f), tag: SeqTag::General }
    }

    pub fn from_real(f: impl Fn(i64) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_fn(move |k| c64::new(f(k), 0.0))
    }

    pub fn constant(c: c64) -> Self {
        DiagSeq { f: Arc::new(move |_| c), tag: SeqTag::Constant(c) }
    }

    pub fn zero() -> Self {
        Self::constant(ZERO)
    }

    pub fn one() -> Self {
        Self::constant(ONE)
    }

    /// `k ↦ slope·k + offset`.
    pub fn affine(slope: c64, offset: c64) -> Self {
        if slope == ZERO {
            return Self::constant(offset);
        }
        DiagSeq {
            f: Arc::new(move |k| slope * k as f64 + offset),
            tag: SeqTag::Affine { slope, offset },
        }
    }

    /// The position sequence `x_k = k`.
    pub fn position() -> Self {
        Self::affine(ONE, ZERO)
    }

    /// Deterministic bounded sequence with values in the unit square.
    pub fn hashed(seed: u64) -> Self {
        Self::from_fn(move |k| {
            let a = splitmix64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let b = splitmix64(a);
            c64::new(unit(a), unit(b))
        })
    }

    pub fn eval(&self, k: i64) -> c64 {
        (self.f)(k)
    }

    pub fn tag(&self) -> SeqTag {
        self.tag
    }

    pub fn is_zero(&self) -> bool {
        self.tag == SeqTag::Constant(ZERO)
    }

    /// `S^m γ`, i.e. `k ↦ γ_{k+m}`.
    pub fn shift(&self, m: i64) -> Self {
        match self.tag {
            SeqTag::Constant(_) => self.clone(),
            _ if m == 0 => self.clone(),
            SeqTag::Affine { slope, offset } => Self::affine(slope, offset + slope * m as f64),
            SeqTag::General => {
                let f = self.f.clone();
                Self::from_fn(move |k| f(k + m))
            }
        }
    }

    pub fn conj(&self) -> Self {
        match self.tag {
            SeqTag::Constant(c) => Self::constant(c.conj()),
            SeqTag::Affine { slope, offset } => Self::affine(slope.conj(), offset.conj()),
            SeqTag::General => {
                let f = self.f.clone();
                Self::from_fn(move |k| f(k).conj())
            }
        }
    }

    pub fn scale(&self, s: c64) -> Self {
        match self.tag {
            _ if s == ZERO => Self::zero(),
            SeqTag::Constant(c) => Self::constant(c * s),
            SeqTag::Affine { slope, offset } => Self::affine(slope * s, offset * s),
            SeqTag::General => {
                let f = self.f.clone();
                Self::from_fn(move |k| f(k) * s)
            }
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self.tag, other.tag) {
            (SeqTag::Constant(a), _) if a == ZERO => other.clone(),
            (_, SeqTag::Constant(b)) if b == ZERO => self.clone(),
            (SeqTag::Constant(a), SeqTag::Constant(b)) => Self::constant(a + b),
            (SeqTag::Affine { slope, offset }, SeqTag::Constant(b))
            | (SeqTag::Constant(b), SeqTag::Affine { slope, offset }) => Self::affine(slope, offset + b),
            (SeqTag::Affine { slope: s1, offset: o1 }, SeqTag::Affine { slope: s2, offset: o2 }) => {
                Self::affine(s1 + s2, o1 + o2)
            }
            _ => {
                let (f, g) = (self.f.clone(), other.f.clone());
                Self::from_fn(move |k| f(k) + g(k))
            }
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_re(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        match (self.tag, other.tag) {
            (SeqTag::Constant(a), _) => other.scale(a),
            (_, SeqTag::Constant(b)) => self.scale(b),
            _ => {
                let (f, g) = (self.f.clone(), other.f.clone());
                Self::from_fn(move |k| f(k) * g(k))
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// `Σ_n D_{c_n} T^n` with finitely many offsets.
#[derive(Clone, Debug, Default)]
pub struct BandOperator {
    terms: BTreeMap<i64, DiagSeq>,
}

impl BandOperator {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `D_c T^n`.
    pub fn term(n: i64, c: DiagSeq) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(n, c);
        }
        BandOperator { terms }
    }

    pub fn diag(c: DiagSeq) -> Self {
        Self::term(0, c)
    }

    pub fn identity() -> Self {
        Self::diag(DiagSeq::one())
    }

    /// `T^n`.
    pub fn shift(n: i64) -> Self {
        Self::term(n, DiagSeq::one())
    }

    /// The position operator `A = D_x`.
    pub fn position() -> Self {
        Self::diag(DiagSeq::position())
    }

    /// `J_n(D_α, D_β) = T^n D_α + D_β T^{-n}`.
    pub fn j_op(n: i64, alpha: &DiagSeq, beta: &DiagSeq) -> Self {
        Self::term(n, alpha.shift(-n)).add(&Self::term(-n, beta.clone()))
    }

    pub fn offsets(&self) -> impl Iterator<Item = i64> + '_ {
        self.terms.keys().copied()
    }

    pub fn coeff(&self, n: i64) -> Option<&DiagSeq> {
        self.terms.get(&n)
    }

    pub fn bandwidth(&self) -> usize {
        self.terms.keys().map(|n| n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (&n, c) in &other.terms {
            let sum = match terms.get(&n) {
                Some(prev) => prev.add(c),
                None => c.clone(),
            };
            if sum.is_zero() {
                terms.remove(&n);
            } else {
                terms.insert(n, sum);
            }
        }
        BandOperator { terms }
    }

    pub fn scale(&self, s: c64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(&n, c)| (n, c.scale(s)))
            .filter(|(_, c)| !c.is_zero())
            .collect();
        BandOperator { terms }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c64::new(s, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_re(-1.0))
    }

    /// Exact normal-form product; offsets add.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = BandOperator::zero();
        for (&n, a) in &self.terms {
            for (&m, b) in &other.terms {
                // (D_a T^n)(D_b T^m) = D_{a · S^{-n} b} T^{n+m}
                out = out.add(&Self::term(n + m, a.mul(&b.shift(-n))));
            }
        }
        out
    }

    /// `(D_c T^n)* = D_{S^n c̄} T^{-n}`.
    pub fn adjoint(&self) -> Self {
        let mut out = BandOperator::zero();
        for (&n, c) in &self.terms {
            out = out.add(&Self::term(-n, c.conj().shift(n)));
        }
        out
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// `[A, X]` with `A = D_x`: each term `D_c T^n` picks up the factor `n`.
    pub fn ad_a(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(&n, _)| n != 0)
            .map(|(&n, c)| (n, c.scale_re(n as f64)))
            .collect();
        BandOperator { terms }
    }

    /// Matrix element `⟨e_row, X e_col⟩`.
    pub fn entry(&self, row: i64, col: i64) -> c64 {
        self.terms.get(&(row - col)).map_or(ZERO, |c| c.eval(row))
    }

    /// Finite section on `window`; contributions leaving the window are dropped.
    pub fn materialize(&self, window: IndexWindow) -> TruncatedOperator {
        let mut m = TruncatedOperator::zeros(window).into_entries();
        for (&n, c) in &self.terms {
            for col in window.sites() {
                if let Some(r) = window.index_of(col + n) {
                    m[(r, (col - window.k_lo) as usize)] = c.eval(col + n);
                }
            }
        }
        TruncatedOperator::from_matrix(window, m)
    }

    /// Largest coefficient modulus on the window, or the offending site.
    fn check_growth(&self, window: IndexWindow) -> Result<()> {
        for c in self.terms.values() {
            for k in window.sites() {
                let v = c.eval(k);
                if !v.re.is_finite() || !v.im.is_finite() || v.norm() > OVERFLOW {
                    return Err(Error::UnboundedGrowth { k });
                }
            }
        }
        Ok(())
    }
}

const OVERFLOW: f64 = 1e150;

/// `z T^n A + z̄ A T^{-n}`.
pub fn conjugate_generator(z: c64, n: i64) -> BandOperator {
    let x = BandOperator::position();
    BandOperator::shift(n).mul(&x).scale(z).add(&x.mul(&BandOperator::shift(-n)).scale(z.conj()))
}

/// Exact commutator `[z T^n A + z̄ A T^{-n}, X]`, with an overflow guard on `window`.
pub fn ad_conjugate(z: c64, n: i64, x: &BandOperator, window: IndexWindow) -> Result<BandOperator> {
    if z == ZERO || n == 0 {
        return Err(Error::InvalidArgument("generator needs z ≠ 0 and n ≠ 0".into()));
    }
    x.check_growth(window)?;
    let out = conjugate_generator(z, n).commutator(x);
    out.check_growth(window)?;
    Ok(out)
}

/// Closed form of `ad_A J_m(D_α, D_β) = J_m(D_{mα}, D_{−mβ})`.
pub fn ad_a_j_closed(m: i64, alpha: &DiagSeq, beta: &DiagSeq) -> BandOperator {
    BandOperator::j_op(m, &alpha.scale_re(m as f64), &beta.scale_re(-(m as f64)))
}

/// Closed form of `[z T^n A + z̄ A T^{-n}, D_α] = J_n(D_{z x(α − S^nα)}, D_{z̄ x(S^nα − α)})`.
pub fn ad_conjugate_diag_closed(z: c64, n: i64, alpha: &DiagSeq) -> BandOperator {
    let x = DiagSeq::position();
    let d = alpha.sub(&alpha.shift(n));
    BandOperator::j_op(n, &x.mul(&d).scale(z), &x.mul(&d).scale(-z.conj()))
}

/// Closed form of `[z T^n A + z̄ A T^{-n}, J_m(D_α, D_β)]`, covering the
/// collisions `n = −m` and `n = m` (a `J_0` collapses to a diagonal).
///
/// The `−mβ` coefficient of the `J_{n+m}` part carries the factor `z̄`; for
/// `z = 1` this is the literal form of the lemma.
pub fn ad_conjugate_j_closed(z: c64, n: i64, m: i64, alpha: &DiagSeq, beta: &DiagSeq) -> BandOperator {
    let x = DiagSeq::position();
    let xn = DiagSeq::affine(ONE, c64::new(-(n as f64), 0.0));
    let mf = m as f64;
    let zb = z.conj();
    let p1 = x.mul(&alpha.sub(&alpha.shift(n))).scale(z).add(&alpha.scale(z * mf));
    let p2 = x.mul(&beta.shift(n).sub(beta)).scale(zb).sub(&beta.scale(zb * mf));
    let p3 = xn.mul(&alpha.sub(&alpha.shift(-n))).scale(zb).add(&alpha.scale(zb * mf));
    let p4 = xn.mul(&beta.shift(-n).sub(beta)).scale(z).sub(&beta.scale(z * mf));
    let part = |k: i64, a: &DiagSeq, b: &DiagSeq| {
        if k == 0 {
            BandOperator::diag(a.add(b))
        } else {
            BandOperator::j_op(k, a, b)
        }
    };
    part(n + m, &p1, &p2).add(&part(m - n, &p3, &p4))
}

/// Sup-seminorms `p_{m,m}(u) = sup_k |k^m (Δ^m u)_k|` with `(Δu)_k = u_k − u_{k−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeminormReport {
    pub order: usize,
    pub values: Vec<f64>,
    pub q: f64,
    pub window: IndexWindow,
    /// Per order: the supremum is still growing in the outer 10% of the window.
    pub edge_growth: Vec<bool>,
}

impl SeminormReport {
    pub fn converged(&self) -> bool {
        !self.edge_growth.iter().any(|&g| g)
    }
}

pub fn seminorm(u: &DiagSeq, n: usize, window: IndexWindow) -> Result<SeminormReport> {
    if window.dim() < n + 2 {
        return Err(Error::WindowTooSmall { need: n + 2, have: window.dim() });
    }
    let vals: Vec<c64> = window.sites().map(|k| u.eval(k)).collect();
    let mut diff = vals.clone();
    let mut values = Vec::with_capacity(n + 1);
    let mut edge_growth = Vec::with_capacity(n + 1);
    for m in 0..=n {
        if m > 0 {
            // After m passes, entry r holds (Δ^m u) at site k_lo + r for r ≥ m.
            for r in (m..diff.len()).rev() {
                diff[r] = diff[r] - diff[r - 1];
            }
        }
        let terms: Vec<f64> = (m..diff.len())
            .map(|r| {
                let k = window.site(r) as f64;
                k.abs().powi(m as i32) * diff[r].norm()
            })
            .collect();
        let len = terms.len();
        let collar = ((len as f64) * 0.1).ceil().max(1.0) as usize;
        let (mut inner, mut outer) = (0.0f64, 0.0f64);
        for (i, &t) in terms.iter().enumerate() {
            if i < collar || i + collar >= len {
                outer = outer.max(t);
            } else {
                inner = inner.max(t);
            }
        }
        values.push(inner.max(outer));
        edge_growth.push(outer > inner * (1.0 + 1e-9) && outer > 0.0);
    }
    let q = values.iter().sum();
    Ok(SeminormReport { order: n, values, q, window, edge_growth })
}
