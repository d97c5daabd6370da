//! Arcs, smooth bumps and the functional calculus of a finite unitary;
//! compressed commutator positivity (Mourre constants), virial values, and
//! the symbol identity for `H_a* B_a H_a − B_a`.

use std::f64::consts::TAU;

use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::models::{conjugate_b_a, g_a_band, pinned_constant_ggt, ConstantSymbol, KoopmanModel};
use crate::opcore::{
    hermitian_eig, hermitian_eig_unchecked, unitary_eig, wrap_phase, IndexWindow, SpectralDecomposition,
    TruncatedOperator,
};

/// Fraction of the index window, at each end, treated as boundary collar.
pub const COLLAR_FRACTION: f64 = 0.1;
pub const DEFAULT_BOUNDARY_FILTER: f64 = 0.5;

/// Counter-clockwise arc from `start` of length `len ∈ (0, 2π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub len: f64,
}

impl Arc {
    /// Arc from `start` to `end` counter-clockwise; both wrapped to `[0, 2π)`.
    pub fn new(start: f64, end: f64) -> Result<Self> {
        let (s, e) = (wrap_phase(start), wrap_phase(end));
        let len = (e - s).rem_euclid(TAU);
        if len == 0.0 {
            return Err(Error::InvalidArgument("arc must be nonempty; use Arc::full for the circle".into()));
        }
        Ok(Arc { start: s, len })
    }

    /// `[centre − half_width, centre + half_width]`.
    pub fn centered(centre: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::InvalidArgument("arc half-width must be positive".into()));
        }
        if half_width >= TAU / 2.0 {
            return Ok(Arc::full());
        }
        Arc::new(centre - half_width, centre + half_width)
    }

    pub fn full() -> Self {
        Arc { start: 0.0, len: TAU }
    }

    /// The image arc `Θ_a` of the constant model.
    pub fn theta_a(sym: &ConstantSymbol) -> Self {
        Arc { start: sym.arc_start, len: sym.arc_width() }
    }

    pub fn end(&self) -> f64 {
        wrap_phase(self.start + self.len)
    }

    pub fn is_full(&self) -> bool {
        self.len >= TAU
    }

    pub fn wraps(&self) -> bool {
        self.start + self.len > TAU
    }

    pub fn mid(&self) -> f64 {
        wrap_phase(self.start + self.len / 2.0)
    }

    fn offset(&self, theta: f64) -> f64 {
        (theta - self.start).rem_euclid(TAU)
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.is_full() || self.offset(theta) <= self.len
    }

    /// Distance from `theta` to the arc (zero inside).
    pub fn distance(&self, theta: f64) -> f64 {
        if self.contains(theta) {
            return 0.0;
        }
        let r = self.offset(theta);
        (r - self.len).min(TAU - r)
    }

    /// The arc widened by `margin` on both sides.
    pub fn widen(&self, margin: f64) -> Self {
        if self.len + 2.0 * margin >= TAU {
            return Arc::full();
        }
        Arc { start: wrap_phase(self.start - margin), len: self.len + 2.0 * margin }
    }
}

/// `ψ(t) = h(t)/(h(t)+h(1−t))`, `h(t) = e^{−1/t}` for `t > 0`.
pub fn smooth_step(t: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        h(t) / (h(t) + h(1.0 - t))
    }
}

/// `C^∞` bump equal to 1 on `plateau` and 0 off `support`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpFunction {
    pub support: Arc,
    pub plateau: Arc,
    rise: f64,
    fall: f64,
}

pub fn bump(support: Arc, plateau: Arc) -> Result<BumpFunction> {
    if support.is_full() || plateau.is_full() {
        return Err(Error::DegenerateMargin);
    }
    let rise = support.offset(plateau.start);
    let fall = support.len - rise - plateau.len;
    if !(rise > 0.0 && fall > 0.0 && rise < support.len) {
        return Err(Error::DegenerateMargin);
    }
    Ok(BumpFunction { support, plateau, rise, fall })
}

impl BumpFunction {
    pub fn eval(&self, theta: f64) -> f64 {
        let r = self.support.offset(theta);
        if r >= self.support.len {
            0.0
        } else if r < self.rise {
            smooth_step(r / self.rise)
        } else if r <= self.rise + self.plateau.len {
            1.0
        } else {
            smooth_step((self.support.len - r) / self.fall)
        }
    }

    /// Symmetric bump around `centre` with the given plateau and support half-widths.
    pub fn centered(centre: f64, plateau_half: f64, support_half: f64) -> Result<Self> {
        bump(Arc::centered(centre, support_half)?, Arc::centered(centre, plateau_half)?)
    }
}

fn columns_in(dec: &SpectralDecomposition, arc: &Arc) -> Vec<usize> {
    (0..dec.dim()).filter(|&j| arc.contains(dec.phases[j])).collect()
}

fn select_columns(m: &Mat<c64>, cols: &[usize]) -> Mat<c64> {
    Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// `E = Σ_{θ_j ∈ arc} v_j v_j*`.
pub fn spectral_projector(dec: &SpectralDecomposition, arc: &Arc) -> TruncatedOperator {
    let v = select_columns(&dec.vectors, &columns_in(dec, arc));
    TruncatedOperator::from_matrix(dec.window, &v * v.adjoint())
}

/// `Σ φ(θ_j) v_j v_j*`.
pub fn func_calc(dec: &SpectralDecomposition, phi: impl Fn(f64) -> f64) -> TruncatedOperator {
    dec.apply_fn(|t| c64::new(phi(t), 0.0))
}

/// Trapezoidal Fourier coefficients `φ̂_m`, `|m| ≤ order`, indexed `m + order`.
pub fn fourier_coefficients(phi: impl Fn(f64) -> f64, order: usize) -> Vec<c64> {
    let nodes = (8 * order).max(4096);
    let samples: Vec<f64> = (0..nodes).map(|k| phi(TAU * k as f64 / nodes as f64)).collect();
    (0..=2 * order)
        .map(|i| {
            let m = i as f64 - order as f64;
            samples
                .iter()
                .enumerate()
                .map(|(k, &s)| c64::from_polar(s, -m * TAU * k as f64 / nodes as f64))
                .sum::<c64>()
                / nodes as f64
        })
        .collect()
}

/// `Σ_{|m|≤M} φ̂_m U^m`, by Horner's scheme in `U` and in `U*`.
pub fn func_calc_fourier(u: &TruncatedOperator, phi: impl Fn(f64) -> f64, order: usize) -> TruncatedOperator {
    let coeffs = fourier_coefficients(phi, order);
    let id = TruncatedOperator::identity(u.window());
    let horner = |x: &TruncatedOperator, cs: &mut dyn Iterator<Item = c64>| {
        let mut acc = TruncatedOperator::zeros(u.window());
        for c in cs {
            acc = &(&acc * x) + &id.scale(c);
        }
        acc
    };
    // Positive powers including m = 0, then negative powers.
    let pos = horner(u, &mut coeffs[order..].iter().rev().copied());
    let neg = horner(&u.adjoint(), &mut coeffs[..order].iter().copied());
    &pos + &(&neg * &u.adjoint())
}

/// Positivity of `U*AU − A` compressed to the spectral subspace of an arc.
#[derive(Debug, Clone)]
pub struct MourreReport {
    pub arc: Arc,
    /// Dimension of `Ran E_arc`.
    pub rank: usize,
    /// Ascending eigenvalues of the compressed commutator.
    pub eigenvalues: Vec<f64>,
    /// Collar weight of each compressed eigenvector.
    pub boundary_weights: Vec<f64>,
    pub c_strict: f64,
    /// Smallest eigenvalue once boundary-localized vectors are discarded;
    /// `None` if none survive.
    pub c_filtered: Option<f64>,
    /// `min j_a` over `f_a^{-1}(arc)`, when a symbol is attached.
    pub symbol_prediction: Option<f64>,
}

impl MourreReport {
    pub fn with_symbol(mut self, sym: &ConstantSymbol) -> Self {
        let arc = self.arc;
        self.symbol_prediction = sym.min_j_over_preimage(|p| arc.contains(p));
        self
    }
}

fn collar_weights(x: &Mat<c64>, mask: &[bool]) -> Vec<f64> {
    (0..x.ncols())
        .map(|j| (0..x.nrows()).filter(|&i| mask[i]).map(|i| x[(i, j)].norm_sqr()).sum())
        .collect()
}

fn commutator_form(u: &TruncatedOperator, a: &TruncatedOperator) -> TruncatedOperator {
    &(&(&u.adjoint() * a) * u) - a
}

fn check_pair(u: &TruncatedOperator, a: &TruncatedOperator) -> Result<()> {
    if u.window() != a.window() {
        return Err(Error::WindowMismatch);
    }
    let defect = u.unitarity_defect();
    if defect > 1e-9 {
        return Err(Error::NotUnitary { defect });
    }
    let limit = 1e-12 * a.max_abs().max(1.0);
    let asym = a.hermitian_defect();
    if asym > limit {
        return Err(Error::NotHermitian { asymmetry: asym, limit });
    }
    Ok(())
}

pub fn mourre_constant(
    u: &TruncatedOperator,
    a: &TruncatedOperator,
    arc: &Arc,
    boundary_filter: f64,
) -> Result<MourreReport> {
    check_pair(u, a)?;
    let dec = unitary_eig(u)?;
    mourre_from_decomposition(&dec, u, a, arc, boundary_filter)
}

/// As [`mourre_constant`] with a precomputed decomposition of `u`.
pub fn mourre_from_decomposition(
    dec: &SpectralDecomposition,
    u: &TruncatedOperator,
    a: &TruncatedOperator,
    arc: &Arc,
    boundary_filter: f64,
) -> Result<MourreReport> {
    if !(0.0..1.0).contains(&boundary_filter) {
        return Err(Error::InvalidArgument(format!("boundary filter must lie in [0,1), got {boundary_filter}")));
    }
    let v = select_columns(&dec.vectors, &columns_in(dec, arc));
    let m1 = commutator_form(u, a);
    let compressed = m1.compress(v.as_ref());
    let eig = hermitian_eig_unchecked(compressed.as_ref())?;
    let x = &v * &eig.vectors;
    let mask = dec.window.collar_mask(COLLAR_FRACTION);
    Ok(summarize(*arc, eig.values, collar_weights(&x, &mask), boundary_filter))
}

fn summarize(arc: Arc, values: Vec<f64>, weights: Vec<f64>, boundary_filter: f64) -> MourreReport {
    let c_strict = values.first().copied().unwrap_or(f64::INFINITY);
    let c_filtered = values
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w <= boundary_filter)
        .map(|(&v, _)| v)
        .reduce(f64::min);
    MourreReport {
        arc,
        rank: values.len(),
        eigenvalues: values,
        boundary_weights: weights,
        c_strict,
        c_filtered,
        symbol_prediction: None,
    }
}

/// The Koopman commutator `U*AU − A` compressed to the span of the
/// non-constant basis vectors on which the truncated shift is exact. There
/// it equals `Q^⊥ = I`, whatever arc of the (absolutely continuous) spectrum
/// of `U` restricted to `Q^⊥` is chosen; `arc` is carried for reporting only.
pub fn mourre_constant_koopman(km: &KoopmanModel, arc: &Arc) -> Result<MourreReport> {
    let cols: Vec<usize> = km.shift_domain().into_iter().filter(|&i| i != km.vacuum()).collect();
    let n = km.dim();
    let v = Mat::from_fn(n, cols.len(), |i, j| if i == cols[j] { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) });
    let m1 = commutator_form(&km.u(), &km.a());
    let eig = hermitian_eig(&m1.compress(v.as_ref()))?;
    let weights = vec![0.0; eig.values.len()];
    Ok(summarize(*arc, eig.values, weights, DEFAULT_BOUNDARY_FILTER))
}

/// `⟨φ, (U*AU − A)φ⟩` for a unit vector `φ`.
pub fn virial_value(u: &TruncatedOperator, a: &TruncatedOperator, phi: &[c64]) -> f64 {
    let n = phi.len();
    let col = Mat::from_fn(n, 1, |i, _| phi[i]);
    let up = u.entries() * &col;
    let aup = a.entries() * &up;
    let ap = a.entries() * &col;
    let dot = |x: &Mat<c64>, y: &Mat<c64>| (0..n).map(|i| x[(i, 0)].conj() * y[(i, 0)]).sum::<c64>();
    (dot(&up, &aup) - dot(&col, &ap)).re
}

/// Per-eigenvector virial values and collar weights.
#[derive(Debug, Clone)]
pub struct VirialScan {
    pub phases: Vec<f64>,
    pub values: Vec<f64>,
    pub localization: Vec<f64>,
}

impl VirialScan {
    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

pub fn virial_scan(u: &TruncatedOperator, a: &TruncatedOperator) -> Result<VirialScan> {
    check_pair(u, a)?;
    let dec = unitary_eig(u)?;
    let n = dec.dim();
    let mask = dec.window.collar_mask(COLLAR_FRACTION);
    let values = (0..n)
        .map(|j| {
            let phi: Vec<c64> = (0..n).map(|i| dec.vectors[(i, j)]).collect();
            virial_value(u, a, &phi)
        })
        .collect();
    Ok(VirialScan { phases: dec.phases.clone(), values, localization: collar_weights(&dec.vectors, &mask) })
}

/// Outcome of comparing `H_a*B_aH_a − B_a` with its symbol form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolCheck {
    /// Max entry deviation on the interior half-window.
    pub interior_deviation: f64,
    /// Smallest eigenvalue of the interior compression of `H*BH − B`.
    pub interior_min_eigenvalue: f64,
}

/// `H_a*B_aH_a − B_a` on `window`, with `H_a` pinned.
pub fn symbol_commutator(a: f64, window: IndexWindow) -> Result<TruncatedOperator> {
    let h = pinned_constant_ggt(a, window)?;
    let b = conjugate_b_a(a, window);
    Ok(&(&(&h.adjoint() * &b) * &h) - &b)
}

/// `2(a−T)^{-1}(aT + aT* − 2)²(a−T*)^{-1}` by dense solves on `window`.
pub fn symbol_form(a: f64, window: IndexWindow) -> Result<TruncatedOperator> {
    let t = crate::bandalg::BandOperator::shift(1).materialize(window);
    let id = TruncatedOperator::identity(window);
    let a_minus_t = &id.scale_re(a) - &t;
    let g = g_a_band(a).materialize(window);
    let g2 = &g * &g;
    let left = solve_checked(&a_minus_t, g2.entries())?;
    // X (a−T*)^{-1} = ((a−T)^{-1} X*)*.
    let right = solve_checked(&a_minus_t, &left.adjoint().to_owned())?;
    Ok(TruncatedOperator::from_matrix(window, right.adjoint().to_owned()).scale_re(2.0))
}

fn solve_checked(m: &TruncatedOperator, rhs: &Mat<c64>) -> Result<Mat<c64>> {
    use faer::linalg::solvers::Solve;
    let x = m.entries().partial_piv_lu().solve(rhs);
    let resid = (m.entries() * &x - rhs).norm_max() / rhs.norm_max().max(1.0);
    if !resid.is_finite() || resid > 1e-8 {
        return Err(Error::SingularResolvent { ratio: resid });
    }
    Ok(x)
}

pub fn symbol_commutator_check(a: f64, window: IndexWindow) -> Result<SymbolCheck> {
    let lhs = symbol_commutator(a, window)?;
    let rhs = symbol_form(a, window)?;
    let n = window.dim();
    let interior = IndexWindow::with_dim(window.k_lo + (n / 4) as i64, n / 2);
    let interior_deviation = lhs.max_deviation_on(&rhs, interior);
    let sub = lhs.restrict(interior);
    let sym = &sub + &sub.adjoint();
    let eig = hermitian_eig_unchecked(sym.scale_re(0.5).as_ref())?;
    Ok(SymbolCheck { interior_deviation, interior_min_eigenvalue: eig.values[0] })
}

/// Gaussian wave packet `e^{iθ₀k} e^{−k²/(2w²)}`, normalized on `window`.
pub fn wave_packet(window: IndexWindow, theta0: f64, width: f64) -> Vec<c64> {
    let raw: Vec<c64> = window
        .sites()
        .map(|k| c64::from_polar((-(k as f64).powi(2) / (2.0 * width * width)).exp(), theta0 * k as f64))
        .collect();
    let nrm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    raw.into_iter().map(|z| z / nrm).collect()
}

/// `⟨φ, (H_a*B_aH_a − B_a)φ⟩` for a wave packet; approximates `j_a(θ₀)`.
pub fn wave_packet_form(a: f64, window: IndexWindow, theta0: f64, width: f64) -> Result<f64> {
    let m = symbol_commutator(a, window)?;
    let phi = wave_packet(window, theta0, width);
    let n = phi.len();
    let col = Mat::from_fn(n, 1, |i, _| phi[i]);
    let mp = m.entries() * &col;
    Ok((0..n).map(|i| phi[i].conj() * mp[(i, 0)]).sum::<c64>().re)
}
