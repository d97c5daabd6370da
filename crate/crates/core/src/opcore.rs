//! Dense complex matrices over finite sections of ℓ²(ℤ) and the
//! eigendecompositions everything else is built on.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};

use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

/// Inclusive integer window `[k_lo, k_hi]` of ℓ²(ℤ) sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexWindow {
    pub k_lo: i64,
    pub k_hi: i64,
}

impl IndexWindow {
    pub fn new(k_lo: i64, k_hi: i64) -> Self {
        assert!(k_lo <= k_hi, "empty window [{k_lo}, {k_hi}]");
        IndexWindow { k_lo, k_hi }
    }

    pub fn with_dim(k_lo: i64, dim: usize) -> Self {
        assert!(dim >= 1, "window needs at least one site");
        IndexWindow::new(k_lo, k_lo + dim as i64 - 1)
    }

    /// `dim` sites starting at `-floor(dim/2)` rounded toward -inf.
    pub fn centered(dim: usize) -> Self {
        IndexWindow::with_dim((-(dim as i64)).div_euclid(2), dim)
    }

    pub fn dim(&self) -> usize {
        (self.k_hi - self.k_lo + 1) as usize
    }

    pub fn contains(&self, k: i64) -> bool {
        self.k_lo <= k && k <= self.k_hi
    }

    pub fn index_of(&self, k: i64) -> Option<usize> {
        self.contains(k).then(|| (k - self.k_lo) as usize)
    }

    pub fn site(&self, r: usize) -> i64 {
        self.k_lo + r as i64
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<i64> {
        self.k_lo..=self.k_hi
    }

    /// Shrinks by `margin` sites on both sides; `None` if nothing is left.
    pub fn shrink(&self, margin: usize) -> Option<IndexWindow> {
        let m = margin as i64;
        (self.k_lo + m <= self.k_hi - m).then(|| IndexWindow::new(self.k_lo + m, self.k_hi - m))
    }

    /// Row indices lying in the outer `frac` of the window on either side.
    pub fn collar_mask(&self, frac: f64) -> Vec<bool> {
        let n = self.dim();
        let w = ((n as f64) * frac).round() as usize;
        (0..n).map(|r| r < w || r + w >= n).collect()
    }
}

/// Dense matrix whose entry `(r, c)` is `<e_{k_lo+r}, M e_{k_lo+c}>`.
#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    window: IndexWindow,
    entries: CMat,
}

impl TruncatedOperator {
    pub fn from_matrix(window: IndexWindow, entries: CMat) -> Self {
        assert_eq!(entries.nrows(), window.dim(), "row count does not match window");
        assert_eq!(entries.ncols(), window.dim(), "column count does not match window");
        TruncatedOperator { window, entries }
    }

    /// Square matrix indexed by `0..n`, for bases that are not lattice sites.
    pub fn from_plain(entries: CMat) -> Self {
        let n = entries.nrows();
        Self::from_matrix(IndexWindow::with_dim(0, n), entries)
    }

    pub fn zeros(window: IndexWindow) -> Self {
        let n = window.dim();
        Self::from_matrix(window, Mat::zeros(n, n))
    }

    pub fn identity(window: IndexWindow) -> Self {
        let n = window.dim();
        Self::from_matrix(window, Mat::identity(n, n))
    }

    /// Entries from a function of the site labels `(k_row, k_col)`.
    pub fn from_sites(window: IndexWindow, f: impl Fn(i64, i64) -> c64) -> Self {
        let n = window.dim();
        let m = Mat::from_fn(n, n, |r, c| f(window.site(r), window.site(c)));
        Self::from_matrix(window, m)
    }

    pub fn diagonal(window: IndexWindow, f: impl Fn(i64) -> c64) -> Self {
        Self::from_sites(window, |r, c| if r == c { f(r) } else { c64::new(0.0, 0.0) })
    }

    pub fn window(&self) -> IndexWindow {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn as_ref(&self) -> MatRef<'_, c64> {
        self.entries.as_ref()
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    /// Entry by site labels; zero outside the window.
    pub fn at(&self, k_row: i64, k_col: i64) -> c64 {
        match (self.window.index_of(k_row), self.window.index_of(k_col)) {
            (Some(r), Some(c)) => self.entries[(r, c)],
            _ => c64::new(0.0, 0.0),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_matrix(self.window, self.entries.adjoint().to_owned())
    }

    pub fn scale(&self, s: c64) -> Self {
        let m = &self.entries;
        let n = self.dim();
        Self::from_matrix(self.window, Mat::from_fn(n, n, |i, j| m[(i, j)] * s))
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c64::new(s, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(self.entries.as_ref())
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.norm_l2()
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.entries[(i, i)]).sum()
    }

    /// `max |M - M*|`.
    pub fn hermitian_defect(&self) -> f64 {
        let m = &self.entries;
        let n = self.dim();
        let mut d: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        d
    }

    /// `max |U*U - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.entries.adjoint() * &self.entries;
        identity_defect(g.as_ref())
    }

    pub fn checked_mul(&self, rhs: &Self) -> Result<Self> {
        same_window(self, rhs)?;
        Ok(Self::from_matrix(self.window, &self.entries * &rhs.entries))
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self> {
        same_window(self, rhs)?;
        Ok(Self::from_matrix(self.window, &self.entries + &rhs.entries))
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self> {
        same_window(self, rhs)?;
        Ok(Self::from_matrix(self.window, &self.entries - &rhs.entries))
    }

    /// `[self, rhs] = self·rhs − rhs·self`.
    pub fn commutator(&self, rhs: &Self) -> Result<Self> {
        same_window(self, rhs)?;
        let ab = &self.entries * &rhs.entries;
        let ba = &rhs.entries * &self.entries;
        Ok(Self::from_matrix(self.window, ab - ba))
    }

    /// Restriction to a sub-window (entries outside are dropped).
    pub fn restrict(&self, sub: IndexWindow) -> Self {
        assert!(
            self.window.contains(sub.k_lo) && self.window.contains(sub.k_hi),
            "sub-window not contained in window"
        );
        let off = (sub.k_lo - self.window.k_lo) as usize;
        let n = sub.dim();
        let m = &self.entries;
        Self::from_matrix(sub, Mat::from_fn(n, n, |i, j| m[(i + off, j + off)]))
    }

    /// `V* M V` as a plain operator on the span of the columns of `V`.
    pub fn compress(&self, v: MatRef<'_, c64>) -> Self {
        let mv = &self.entries * v;
        Self::from_plain(v.adjoint() * mv)
    }

    /// Largest entry modulus of `self − other` over rows/cols in `sub`.
    pub fn max_deviation_on(&self, other: &Self, sub: IndexWindow) -> f64 {
        let mut d: f64 = 0.0;
        for r in sub.sites() {
            for c in sub.sites() {
                d = d.max((self.at(r, c) - other.at(r, c)).norm());
            }
        }
        d
    }
}

fn same_window(a: &TruncatedOperator, b: &TruncatedOperator) -> Result<()> {
    if a.window == b.window {
        Ok(())
    } else {
        Err(Error::WindowMismatch)
    }
}

// Operator sugar panics on mismatched windows; the checked_* forms return errors.
impl Mul for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn mul(self, rhs: Self) -> TruncatedOperator {
        self.checked_mul(rhs).expect("window mismatch in product")
    }
}

impl Add for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn add(self, rhs: Self) -> TruncatedOperator {
        self.checked_add(rhs).expect("window mismatch in sum")
    }
}

impl Sub for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn sub(self, rhs: Self) -> TruncatedOperator {
        self.checked_sub(rhs).expect("window mismatch in difference")
    }
}

impl Neg for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn neg(self) -> TruncatedOperator {
        self.scale_re(-1.0)
    }
}

pub fn max_abs(m: MatRef<'_, c64>) -> f64 {
    let mut d: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            d = d.max(m[(i, j)].norm());
        }
    }
    d
}

pub fn identity_defect(m: MatRef<'_, c64>) -> f64 {
    let mut d: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let e = if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
            d = d.max((m[(i, j)] - e).norm());
        }
    }
    d
}

/// Reconstruction tolerance `1e-10 · dim · ‖M‖`.
pub fn tol_eig(dim: usize, norm: f64) -> f64 {
    1e-10 * dim as f64 * norm.max(f64::MIN_POSITIVE)
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> CMat {
        let v = &self.vectors;
        let n = v.nrows();
        let scaled = Mat::from_fn(n, self.values.len(), |i, j| v[(i, j)] * self.values[j]);
        scaled * v.adjoint()
    }
}

pub fn hermitian_eig(m: &TruncatedOperator) -> Result<HermitianEig> {
    let scale = m.max_abs();
    let limit = 1e-12 * scale;
    let asym = m.hermitian_defect();
    if asym > limit {
        return Err(Error::NotHermitian { asymmetry: asym, limit });
    }
    hermitian_eig_unchecked(m.as_ref())
}

/// Real part of `m` when every entry is real.
fn real_matrix(m: MatRef<'_, c64>) -> Option<Mat<f64>> {
    let (r, c) = (m.nrows(), m.ncols());
    for j in 0..c {
        for i in 0..r {
            if m[(i, j)].im != 0.0 {
                return None;
            }
        }
    }
    Some(Mat::from_fn(r, c, |i, j| m[(i, j)].re))
}

/// Real symmetric eigensolve: ascending values and orthonormal vectors.
fn symmetric_eig_real(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = m.nrows();
    let h = Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::ConvergenceFailure(format!("self-adjoint eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = order.iter().map(|&i| s[i]).collect();
    Ok((values, Mat::from_fn(n, n, |i, j| u[(i, order[j])])))
}

/// Symmetrizes and diagonalizes without the asymmetry precondition.
pub(crate) fn hermitian_eig_unchecked(m: MatRef<'_, c64>) -> Result<HermitianEig> {
    let n = m.nrows();
    // Real symmetric input is diagonalized in real arithmetic, about four times cheaper.
    if let Some(re) = real_matrix(m) {
        let (values, v) = symmetric_eig_real(&re)?;
        return Ok(HermitianEig { values, vectors: Mat::from_fn(n, n, |i, j| c64::new(v[(i, j)], 0.0)) });
    }
    let h = Mat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::ConvergenceFailure(format!("self-adjoint eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
    let values = order.iter().map(|&i| s[i].re).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok(HermitianEig { values, vectors })
}

/// Eigenphases in `[0, 2π)` (ascending) with orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub window: IndexWindow,
    pub phases: Vec<f64>,
    pub vectors: CMat,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn eigenvalue(&self, j: usize) -> c64 {
        c64::from_polar(1.0, self.phases[j])
    }

    /// `Σ g(θ_j) v_j v_j*`.
    pub fn apply_fn(&self, g: impl Fn(f64) -> c64) -> TruncatedOperator {
        let w: Vec<c64> = self.phases.iter().map(|&t| g(t)).collect();
        self.apply_diag(&w)
    }

    /// `Σ w_j v_j v_j*` for per-eigenvector weights.
    pub fn apply_diag(&self, w: &[c64]) -> TruncatedOperator {
        let v = &self.vectors;
        let n = v.nrows();
        let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * w[j]);
        TruncatedOperator::from_matrix(self.window, scaled * v.adjoint())
    }

    pub fn reconstruct(&self) -> TruncatedOperator {
        self.apply_fn(|t| c64::from_polar(1.0, t))
    }
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
// Relative spectral gap below which neighbouring eigenvalues of the Hermitian
// projection are split again by a recursive solve.
const CLUSTER_GAP: f64 = 1e-4;
const MAX_DEPTH: usize = 64;

pub fn unitary_eig(u: &TruncatedOperator) -> Result<SpectralDecomposition> {
    let defect = u.unitarity_defect();
    if defect > 1e-9 {
        return Err(Error::NotUnitary { defect });
    }
    let n = u.dim();
    let abs_tol = 1e-13 * (n as f64).sqrt();
    let (lambdas, vectors) = normal_eig(u.as_ref(), 0, abs_tol)?;

    let phases: Vec<f64> = lambdas.iter().map(|l| wrap_phase(l.arg())).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]));
    // Tie-break runs of equal phases by the argument of the first nonzero component.
    let key = |j: usize| -> (f64, usize) {
        for i in 0..n {
            let z = vectors[(i, j)];
            if z.norm() > 1e-12 {
                return (wrap_phase(z.arg()), i);
            }
        }
        (0.0, n)
    };
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && phases[order[end]] - phases[order[end - 1]] <= 1e-12 {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by(|&a, &b| {
                let (ta, ia) = key(a);
                let (tb, ib) = key(b);
                ta.total_cmp(&tb).then(ia.cmp(&ib))
            });
        }
        start = end;
    }

    let sorted_phases: Vec<f64> = order.iter().map(|&j| phases[j]).collect();
    let sorted_vectors = Mat::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    let dec = SpectralDecomposition { window: u.window(), phases: sorted_phases, vectors: sorted_vectors };

    let tol = tol_eig(n, 1.0);
    let gram = dec.vectors.adjoint() * &dec.vectors;
    let gram_err = identity_defect(gram.as_ref());
    let uv = u.entries() * &dec.vectors;
    let mut resid: f64 = 0.0;
    for j in 0..n {
        let l = dec.eigenvalue(j);
        for i in 0..n {
            resid = resid.max((uv[(i, j)] - dec.vectors[(i, j)] * l).norm());
        }
    }
    if gram_err > tol || resid > tol {
        return Err(Error::ConvergenceFailure(format!(
            "unitary eigendecomposition residual {resid:.3e}, orthogonality {gram_err:.3e}"
        )));
    }
    Ok(dec)
}

/// Eigendecomposition of a normal matrix: diagonalize a generic Hermitian
/// projection of it, then split clusters recursively with a fresh angle.
fn normal_eig(m: MatRef<'_, c64>, depth: usize, abs_tol: f64) -> Result<(Vec<c64>, CMat)> {
    let n = m.nrows();
    if n == 1 {
        return Ok((vec![m[(0, 0)]], Mat::identity(1, 1)));
    }
    let c = (0..n).map(|i| m[(i, i)]).sum::<c64>() / n as f64;
    let centered = Mat::from_fn(n, n, |i, j| if i == j { m[(i, j)] - c } else { m[(i, j)] });
    let fro = centered.norm_l2();
    if fro <= abs_tol {
        return Ok((vec![c; n], Mat::identity(n, n)));
    }
    if depth >= MAX_DEPTH {
        return Err(Error::ConvergenceFailure("eigenvalue clusters did not separate".into()));
    }
    let rot = c64::from_polar(1.0 / fro, -(0.37 + depth as f64 * GOLDEN_ANGLE));
    let h = Mat::from_fn(n, n, |i, j| {
        (rot * centered[(i, j)] + (rot * centered[(j, i)]).conj()) * 0.5
    });
    let eig = hermitian_eig_unchecked(h.as_ref())?;
    let lam = &eig.values;
    let spread = (lam[n - 1] - lam[0]).max(f64::MIN_POSITIVE);

    // One blocked product serves every Rayleigh quotient and cluster compression.
    let mw = m * &eig.vectors;
    let mut values = Vec::with_capacity(n);
    let mut vectors = Mat::<c64>::zeros(n, n);
    let mut start = 0;
    for i in 1..=n {
        if i < n && lam[i] - lam[i - 1] <= CLUSTER_GAP * spread {
            continue;
        }
        let len = i - start;
        let w = eig.vectors.as_ref().subcols(start, len);
        if len == 1 {
            let v = w.col(0);
            values.push(v.adjoint() * mw.col(start));
            for r in 0..n {
                vectors[(r, start)] = v[r];
            }
        } else {
            let mc = w.adjoint() * mw.as_ref().subcols(start, len);
            let (sub_vals, sub_vecs) = normal_eig(mc.as_ref(), depth + 1, abs_tol)?;
            let lifted = w * &sub_vecs;
            values.extend(sub_vals);
            for j in 0..len {
                for r in 0..n {
                    vectors[(r, start + j)] = lifted[(r, j)];
                }
            }
        }
        start = i;
    }
    Ok((values, vectors))
}

/// Largest singular value.
pub fn op_norm(m: &TruncatedOperator) -> f64 {
    op_norm_mat(m.as_ref())
}

/// From this size on the norm comes from Lanczos on `M*M`, which needs only
/// matrix-vector products; below it a full SVD is cheap enough.
pub const LANCZOS_MIN_DIM: usize = 400;

pub fn op_norm_mat(m: MatRef<'_, c64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows().min(m.ncols()) >= LANCZOS_MIN_DIM {
        return psd_top_eigenvalue(m.ncols(), |x| m.adjoint() * (m * x)).sqrt();
    }
    match m.singular_values() {
        Ok(s) => s.into_iter().fold(0.0, f64::max),
        Err(_) => {
            // Gram route: λ_max(M*M) has relative accuracy ~ eps.
            let g = m.adjoint() * m;
            let ev = g.self_adjoint_eigenvalues(Side::Lower).unwrap_or_default();
            ev.into_iter().fold(0.0, f64::max).sqrt()
        }
    }
}

/// Largest eigenvalue of a positive semidefinite operator given by its
/// action, by Lanczos with full reorthogonalization from a fixed start
/// vector. Stops once the Ritz residual `β_k|y_k|` drops below `1e-13 λ`.
pub fn psd_top_eigenvalue(dim: usize, apply: impl Fn(&Mat<c64>) -> Mat<c64>) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let max_iter = dim.min(500);
    let mut basis: Vec<Mat<c64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut v = Mat::from_fn(dim, 1, |i, _| c64::from_polar(1.0, 0.7 * i as f64 + 0.1 * (i * i % 997) as f64));
    v = &v * faer::Scale(c64::new(1.0 / (dim as f64).sqrt(), 0.0));
    let mut top = 0.0;
    for _ in 0..max_iter {
        let mut w = apply(&v);
        alphas.push((v.adjoint() * &w)[(0, 0)].re);
        basis.push(v.clone());
        for _ in 0..2 {
            for b in &basis {
                let proj = (b.adjoint() * &w)[(0, 0)];
                w -= b * faer::Scale(proj);
            }
        }
        let beta = w.norm_l2();
        let k = alphas.len();
        let t = Mat::from_fn(k, k, |i, j| match i.abs_diff(j) {
            0 => alphas[i],
            1 => betas[i.min(j)],
            _ => 0.0,
        });
        let Ok(eig) = t.self_adjoint_eigen(Side::Lower) else { break };
        let last = k - 1;
        let (idx, val) = (0..k).map(|i| (i, eig.S()[i])).fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        top = val;
        let residual = beta * eig.U()[(last, idx)].abs();
        if residual <= 1e-13 * top.abs().max(f64::MIN_POSITIVE) || beta <= f64::EPSILON * top.abs() {
            break;
        }
        betas.push(beta);
        v = w * faer::Scale(c64::new(1.0 / beta, 0.0));
    }
    top.max(0.0)
}

/// `⟨A⟩^{-s} = (1 + A²)^{-s/2}` through the spectral theorem.
pub fn weight_power(a: &TruncatedOperator, s: f64) -> Result<TruncatedOperator> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("weight exponent must be positive, got {s}")));
    }
    let limit = 1e-12 * a.max_abs();
    let asym = a.hermitian_defect();
    if asym > limit {
        return Err(Error::NotHermitian { asymmetry: asym, limit });
    }
    if let Some(re) = real_matrix(a.as_ref()) {
        let (values, v) = symmetric_eig_real(&re)?;
        let n = v.nrows();
        let w: Vec<f64> = values.iter().map(|l| (1.0 + l * l).powf(-s / 2.0)).collect();
        let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * w[j]);
        let prod = scaled * v.transpose();
        return Ok(TruncatedOperator::from_matrix(a.window(), Mat::from_fn(n, n, |i, j| c64::new(prod[(i, j)], 0.0))));
    }
    let eig = hermitian_eig(a)?;
    Ok(weight_from_eig(a.window(), &eig, s))
}

pub(crate) fn weight_from_eig(window: IndexWindow, eig: &HermitianEig, s: f64) -> TruncatedOperator {
    let v = &eig.vectors;
    let n = v.nrows();
    let w: Vec<f64> = eig.values.iter().map(|l| (1.0 + l * l).powf(-s / 2.0)).collect();
    let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * w[j]);
    TruncatedOperator::from_matrix(window, scaled * v.adjoint())
}

#[cfg(test)]
pub(crate) use crate::random as testing;

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn lanczos_norm_matches_svd() {
        let mut r = rng(71);
        for n in [1usize, 7, 60, 450] {
            let m = random_matrix(n, &mut r);
            let svd = m.singular_values().unwrap().into_iter().fold(0.0, f64::max);
            let got = psd_top_eigenvalue(n, |x| m.adjoint() * (&m * x)).sqrt();
            assert!((got - svd).abs() <= 1e-12 * svd, "n={n}: {got} vs {svd}");
        }
        // Unitary times a diagonal with one dominant entry.
        let u = random_unitary(500, &mut r);
        let phases: Vec<c64> = (0..500).map(|j| c64::new(if j == 3 { 50.0 } else { 1.0 }, 0.0)).collect();
        let scaled = Mat::from_fn(500, 500, |i, j| u.entries()[(i, j)] * phases[j]);
        assert!((op_norm_mat(scaled.as_ref()) - 50.0).abs() < 1e-11);
    }
    use std::f64::consts::PI;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn centered_window_matches_floor_division() {
        assert_eq!(IndexWindow::centered(400), IndexWindow::new(-200, 199));
        assert_eq!(IndexWindow::centered(5), IndexWindow::new(-3, 1));
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let id = TruncatedOperator::identity(IndexWindow::with_dim(0, 5));
        let e = hermitian_eig(&id).unwrap();
        assert!(e.values.iter().all(|&l| (l - 1.0).abs() < 1e-14));
    }

    #[test]
    fn diagonal_eigenvalues_come_back_sorted() {
        let w = IndexWindow::with_dim(0, 3);
        let vals = [-1.0, 3.0, 0.0];
        let m = TruncatedOperator::diagonal(w, |k| c(vals[k as usize]));
        let e = hermitian_eig(&m).unwrap();
        for (got, want) in e.values.iter().zip([-1.0, 0.0, 3.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn random_hermitian_reconstructs() {
        let mut r = rng(1);
        let h = random_hermitian(50, &mut r);
        let e = hermitian_eig(&h).unwrap();
        let err = max_abs((e.reconstruct() - h.entries()).as_ref());
        assert!(err <= tol_eig(50, op_norm(&h)), "{err}");
        assert!(err <= 1e-10);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = TruncatedOperator::from_plain(Mat::from_fn(2, 2, |i, j| c((i * 2 + j) as f64)));
        assert!(matches!(hermitian_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn unitary_eig_of_identity_is_all_zero_phases() {
        let d = unitary_eig(&TruncatedOperator::identity(IndexWindow::with_dim(0, 6))).unwrap();
        assert!(d.phases.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn cyclic_shift_has_roots_of_unity() {
        let n = 16;
        let m = Mat::from_fn(n, n, |i, j| if i == (j + 1) % n { c(1.0) } else { c(0.0) });
        let d = unitary_eig(&TruncatedOperator::from_plain(m)).unwrap();
        // Discrete Fourier oracle: the spectrum is exactly {2πj/n}.
        for (j, t) in d.phases.iter().enumerate() {
            assert!((t - TAU * j as f64 / n as f64).abs() < 1e-12, "{j}: {t}");
        }
    }

    #[test]
    fn conjugate_pair_wraps_into_range() {
        let w = IndexWindow::with_dim(0, 2);
        let m = TruncatedOperator::diagonal(w, |k| c64::from_polar(1.0, if k == 0 { PI / 3.0 } else { -PI / 3.0 }));
        let d = unitary_eig(&m).unwrap();
        assert!((d.phases[0] - PI / 3.0).abs() < 1e-14);
        assert!((d.phases[1] - 5.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn random_unitary_reconstructs_and_projectors_are_idempotent() {
        let mut r = rng(2);
        let u = random_unitary(60, &mut r);
        let d = unitary_eig(&u).unwrap();
        let err = max_abs((d.reconstruct().entries() - u.entries()).as_ref());
        assert!(err <= tol_eig(60, 1.0), "{err}");
        let p = d.apply_fn(|t| if t < PI { c(1.0) } else { c(0.0) });
        let p2 = &p * &p;
        assert!((&p2 - &p).max_abs() <= tol_eig(60, 1.0));
        assert!(p.hermitian_defect() <= tol_eig(60, 1.0));
        let total: f64 = d.phases.iter().map(|&t| c64::from_polar(1.0, t).norm_sqr()).sum();
        assert!((total - 60.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_unitary_splits_cleanly() {
        // Block-diagonal with a repeated phase and a near-repeated pair.
        let w = IndexWindow::with_dim(0, 6);
        let ph = [0.5, 0.5, 0.5, 2.0, 2.0 + 1e-9, 4.0];
        let d0 = TruncatedOperator::diagonal(w, |k| c64::from_polar(1.0, ph[k as usize]));
        let mut r = rng(3);
        let q = random_unitary(6, &mut r);
        let q = TruncatedOperator::from_matrix(w, q.into_entries());
        let u = &(&q * &d0) * &q.adjoint();
        let d = unitary_eig(&u).unwrap();
        for (got, want) in d.phases.iter().zip(ph) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        let err = max_abs((d.reconstruct().entries() - u.entries()).as_ref());
        assert!(err < 1e-12);
    }

    #[test]
    fn non_unitary_is_rejected() {
        let m = TruncatedOperator::identity(IndexWindow::with_dim(0, 3)).scale_re(1.1);
        assert!(matches!(unitary_eig(&m), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn op_norm_examples() {
        let w = IndexWindow::with_dim(0, 4);
        assert_eq!(op_norm(&TruncatedOperator::zeros(w)), 0.0);
        let mut r = rng(4);
        let u = random_unitary(20, &mut r);
        assert!((op_norm(&u) - 1.0).abs() < 1e-10);
        // Rank one u v* with |u| = 2, |v| = 3: the only singular value is 6.
        let uu = [2.0, 0.0, 0.0, 0.0];
        let vv = [0.0, 3.0 / 2f64.sqrt(), 0.0, 3.0 / 2f64.sqrt()];
        let m = TruncatedOperator::from_sites(w, |i, j| c(uu[i as usize] * vv[j as usize]));
        assert!((op_norm(&m) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn op_norm_is_adjoint_invariant_and_homogeneous() {
        let mut r = rng(5);
        let m = TruncatedOperator::from_plain(random_matrix(30, &mut r));
        let n = op_norm(&m);
        assert!((op_norm(&m.adjoint()) - n).abs() <= 1e-12 * n);
        let s = c64::new(-2.0, 1.5);
        assert!((op_norm(&m.scale(s)) - s.norm() * n).abs() <= 1e-12 * s.norm() * n);
    }

    #[test]
    fn weight_power_examples() {
        let w = IndexWindow::with_dim(0, 3);
        let z = weight_power(&TruncatedOperator::zeros(w), 1.7).unwrap();
        assert!((&z - &TruncatedOperator::identity(w)).max_abs() < 1e-14);
        let a = TruncatedOperator::diagonal(w, |k| c(k as f64));
        let p = weight_power(&a, 2.0).unwrap();
        for (k, want) in [1.0, 0.5, 0.2].into_iter().enumerate() {
            assert!((p.entries()[(k, k)].re - want).abs() < 1e-14);
        }
    }

    #[test]
    fn weight_power_identities() {
        let mut r = rng(6);
        let a = random_hermitian(25, &mut r);
        let w1 = weight_power(&a, 1.0).unwrap();
        let a2 = &a * &a;
        let lhs = &(&w1 * &w1) * &(&a2 + &TruncatedOperator::identity(a.window()));
        assert!((&lhs - &TruncatedOperator::identity(a.window())).max_abs() < 1e-9);
        let comm = w1.commutator(&a).unwrap();
        assert!(comm.max_abs() <= tol_eig(25, op_norm(&a)));
        let w_half = weight_power(&a, 0.5).unwrap();
        let w_third = weight_power(&a, 0.25).unwrap();
        let w_sum = weight_power(&a, 0.75).unwrap();
        assert!((&(&w_half * &w_third) - &w_sum).max_abs() <= tol_eig(25, 1.0));
    }
}
