//! The two concrete models: GGT matrices built from Verblunsky coefficients
//! (closed into exactly unitary blocks by pinning `|α| = 1` at two cut sites)
//! with their conjugate `B_a`, and the Koopman operator of the Bernoulli shift
//! in a truncated Fourier–Walsh basis with conjugate `A f_σ = mean(σ) f_σ`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};

use crate::bandalg::{BandOperator, DiagSeq};
use crate::error::{Error, Result};
use crate::opcore::{wrap_phase, IndexWindow, TruncatedOperator};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// `k ↦ α_k`, with optional pins where `|α_k| = 1` and `a_k^{-1} := 0`.
#[derive(Clone)]
pub struct VerblunskySeq {
    alpha: Arc<dyn Fn(i64) -> c64 + Send + Sync>,
    pins: BTreeMap<i64, c64>,
    delta: Option<DiagSeq>,
    paper_regime: bool,
}

impl std::fmt::Debug for VerblunskySeq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VerblunskySeq")
            .field("pins", &self.pins)
            .field("paper_regime", &self.paper_regime)
            .finish()
    }
}

impl VerblunskySeq {
    /// Arbitrary evaluator; the regime flag is left unset because neither
    /// `inf |α_k| > 0` nor the divergence of `Σ |α_k|²` can be checked.
    pub fn from_fn(f: impl Fn(i64) -> c64 + Send + Sync + 'static) -> Self {
        VerblunskySeq { alpha: Arc::new(f), pins: BTreeMap::new(), delta: None, paper_regime: false }
    }

    pub fn constant(alpha: c64) -> Result<Self> {
        verblunsky_profile(alpha, &Profile::Constant)
    }

    /// Adds pins; each value must lie on the unit circle.
    pub fn with_pins(mut self, pins: &[(i64, c64)]) -> Result<Self> {
        for &(k, v) in pins {
            if (v.norm() - 1.0).abs() > 1e-14 {
                return Err(Error::InvalidArgument(format!("pin at {k} has |α| = {}", v.norm())));
            }
            self.pins.insert(k, v);
        }
        Ok(self)
    }

    /// Pins `value` at both ends `k_lo` and `k_hi + 1` of `block`, which is
    /// then an exactly unitary block of the GGT matrix.
    pub fn pinned_around(self, block: IndexWindow, value: c64) -> Result<Self> {
        self.with_pins(&[(block.k_lo, value), (block.k_hi + 1, value)])
    }

    pub fn alpha(&self, k: i64) -> c64 {
        match self.pins.get(&k) {
            Some(&v) => v,
            None => (self.alpha)(k),
        }
    }

    pub fn is_pin(&self, k: i64) -> bool {
        self.pins.contains_key(&k)
    }

    pub fn pins(&self) -> impl Iterator<Item = (i64, c64)> + '_ {
        self.pins.iter().map(|(&k, &v)| (k, v))
    }

    /// `a_k^{-1} = (1 − |α_k|²)^{1/2}`, zero on pins.
    pub fn a_inv(&self, k: i64) -> f64 {
        if self.is_pin(k) {
            0.0
        } else {
            (1.0 - self.alpha(k).norm_sqr()).max(0.0).sqrt()
        }
    }

    /// The relative perturbation `δ` of a profile built by [`verblunsky_profile`].
    pub fn delta(&self) -> Option<&DiagSeq> {
        self.delta.as_ref()
    }

    /// Set when `inf |α_k| > 0` off the pins (hence `Σ|α_k|² = ∞` on both half-lines).
    pub fn paper_regime(&self) -> bool {
        self.paper_regime
    }

    fn check_sites(&self, sites: impl Iterator<Item = i64>) -> Result<()> {
        for k in sites {
            if self.is_pin(k) {
                continue;
            }
            let m = self.alpha(k).norm();
            if !(m < 1.0) {
                return Err(Error::OutOfDisk { k, modulus: m });
            }
            if m <= 1e-12 {
                return Err(Error::NonDecayingTail { k });
            }
        }
        Ok(())
    }
}

/// Perturbation profiles `α_k = α_∞ (1 + δ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant,
    /// `δ_k = C (1 + |k|)^{-β}`.
    Power { beta: f64, c: f64 },
    /// `δ_k = values[i]` at `support[i]`, zero elsewhere.
    Compact { support: Vec<i64>, values: Vec<f64> },
}

pub fn verblunsky_profile(alpha_inf: c64, profile: &Profile) -> Result<VerblunskySeq> {
    let delta = match profile {
        Profile::Constant => DiagSeq::zero(),
        &Profile::Power { beta, c } => {
            if !(beta > 0.0) {
                return Err(Error::InvalidArgument(format!("power profile needs β > 0, got {beta}")));
            }
            DiagSeq::from_real(move |k| c * (1.0 + k.unsigned_abs() as f64).powf(-beta))
        }
        Profile::Compact { support, values } => {
            if support.len() != values.len() {
                return Err(Error::InvalidArgument("compact profile: support/values length mismatch".into()));
            }
            let map: HashMap<i64, f64> = support.iter().copied().zip(values.iter().copied()).collect();
            DiagSeq::from_real(move |k| map.get(&k).copied().unwrap_or(0.0))
        }
    };
    // Extremes of |1 + δ_k|: the tail value 1 and whatever the profile hits.
    let mut factors = vec![1.0f64];
    match profile {
        Profile::Constant => {}
        &Profile::Power { c, .. } => factors.push(1.0 + c),
        Profile::Compact { values, .. } => factors.extend(values.iter().map(|v| 1.0 + v)),
    }
    let probe: Vec<i64> = match profile {
        Profile::Compact { support, .. } => support.clone(),
        _ => vec![0],
    };
    for (&f, k) in factors.iter().skip(1).zip(probe.iter().copied()) {
        let m = alpha_inf.norm() * f.abs();
        if m >= 1.0 {
            return Err(Error::OutOfDisk { k, modulus: m });
        }
    }
    if alpha_inf.norm() >= 1.0 {
        return Err(Error::OutOfDisk { k: i64::MAX, modulus: alpha_inf.norm() });
    }
    let regime = alpha_inf.norm() > 0.0 && factors.iter().all(|f| f.abs() > 0.0);
    let d = delta.clone();
    let mut seq = VerblunskySeq::from_fn(move |k| alpha_inf * (1.0 + d.eval(k).re));
    seq.delta = Some(delta);
    seq.paper_regime = regime;
    Ok(seq)
}

/// Column-wise defining action: column `k` carries `a_k^{-1}` at row `k−1` and
/// `−ᾱ_k α_{i+1} Π_{j=k+1}^{i} a_j^{-1}` at rows `i ≥ k`, the tail cut once
/// the running product falls below `tail_tol`.
pub fn ggt_build_series(alpha: &VerblunskySeq, window: IndexWindow, tail_tol: f64) -> Result<TruncatedOperator> {
    if !(tail_tol > 0.0 && tail_tol <= 1e-8) {
        return Err(Error::InvalidArgument(format!("tail_tol must lie in (0, 1e-8], got {tail_tol}")));
    }
    alpha.check_sites(window.k_lo..=window.k_hi + 1)?;
    let n = window.dim();
    let mut m = Mat::<c64>::zeros(n, n);
    for c in 0..n {
        let k = window.site(c);
        if c > 0 {
            m[(c - 1, c)] = c64::new(alpha.a_inv(k), 0.0);
        }
        let lead = -alpha.alpha(k).conj();
        let mut prod = 1.0;
        for r in c..n {
            let i = window.site(r);
            if i > k {
                prod *= alpha.a_inv(i);
            }
            if prod < tail_tol {
                break;
            }
            m[(r, c)] = lead * alpha.alpha(i + 1) * prod;
        }
    }
    Ok(TruncatedOperator::from_matrix(window, m))
}

/// `T*D_2 − T*D_1 T (I − D_2 T)^{-1} D_1*` with `D_1 = diag(α)`,
/// `D_2 = diag(a^{-1})`, assembled on the window extended by one site at the
/// top (the last row needs `α_{k_hi+1}`) and then restricted.
pub fn ggt_build_closed(alpha: &VerblunskySeq, window: IndexWindow) -> Result<TruncatedOperator> {
    alpha.check_sites(window.k_lo..=window.k_hi + 1)?;
    let ext = IndexWindow::new(window.k_lo, window.k_hi + 1);
    let al = alpha.clone();
    let d1 = BandOperator::diag(DiagSeq::from_fn(move |k| al.alpha(k))).materialize(ext);
    let al = alpha.clone();
    let d2 = BandOperator::diag(DiagSeq::from_real(move |k| al.a_inv(k))).materialize(ext);
    let t = BandOperator::shift(1).materialize(ext);
    let ts = BandOperator::shift(-1).materialize(ext);
    let id = TruncatedOperator::identity(ext);
    let lhs = &id - &(&d2 * &t);
    let rhs = d1.adjoint();
    let lu = lhs.entries().partial_piv_lu();
    let x = lu.solve(rhs.entries());
    let resid = (lhs.entries() * &x - rhs.entries()).norm_max();
    if !resid.is_finite() || resid > 1e-8 {
        return Err(Error::SingularResolvent { ratio: resid });
    }
    let x = TruncatedOperator::from_matrix(ext, x);
    let h = &(&ts * &d2) - &(&(&(&ts * &d1) * &t) * &x);
    Ok(h.restrict(window))
}

/// Pinned constant-coefficient block `H_a` on `window` (pins `+1` at both ends).
pub fn pinned_constant_ggt(a: f64, window: IndexWindow) -> Result<TruncatedOperator> {
    let sym = constant_symbol(a)?;
    let seq = VerblunskySeq::constant(c64::new(sym.alpha_inf, 0.0))?.pinned_around(window, c64::new(1.0, 0.0))?;
    ggt_build_series(&seq, window, DEFAULT_TAIL_TOL)
}

pub const DEFAULT_TAIL_TOL: f64 = 1e-14;

/// `B_a = G_a(T) A + A G_a(T)` with `G_a(T) = aT + aT* − 2`: tridiagonal with
/// `(k+1,k) = (k,k+1) = a(2k+1)` and `(k,k) = −4k`.
pub fn conjugate_b_a(a: f64, window: IndexWindow) -> TruncatedOperator {
    TruncatedOperator::from_sites(window, |r, c| {
        if r == c {
            c64::new(-4.0 * r as f64, 0.0)
        } else if r == c + 1 {
            c64::new(a * (2 * c + 1) as f64, 0.0)
        } else if c == r + 1 {
            c64::new(a * (2 * r + 1) as f64, 0.0)
        } else {
            ZERO
        }
    })
}

/// `G_a(T) = aT + aT* − 2` as a band operator.
pub fn g_a_band(a: f64) -> BandOperator {
    BandOperator::shift(1)
        .scale_re(a)
        .add(&BandOperator::shift(-1).scale_re(a))
        .sub(&BandOperator::identity().scale_re(2.0))
}

/// Closed-form data of the constant-coefficient model `H_a = F_a(T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSymbol {
    pub a: f64,
    pub alpha_inf: f64,
    pub theta_a: f64,
    /// Arc endpoints in `[0, 2π)`; the arc runs counter-clockwise from
    /// `arc_start` to `arc_end` through `arg f_a(0) = π`.
    pub arc_start: f64,
    pub arc_end: f64,
}

pub fn constant_symbol(a: f64) -> Result<ConstantSymbol> {
    if !(a > 1.0) {
        return Err(Error::InvalidArgument(format!("symbol parameter must exceed 1, got {a}")));
    }
    let theta_a = (1.0 / a).acos();
    let mut s = ConstantSymbol { a, alpha_inf: (1.0 - 1.0 / (a * a)).sqrt(), theta_a, arc_start: 0.0, arc_end: 0.0 };
    s.arc_start = s.phase_map(-theta_a);
    s.arc_end = s.phase_map(theta_a);
    Ok(s)
}

impl ConstantSymbol {
    /// `f_a(θ) = (e^{−iθ} − a)/(a − e^{iθ})`.
    pub fn f(&self, theta: f64) -> c64 {
        let e = c64::from_polar(1.0, theta);
        (e.conj() - self.a) / (c64::new(self.a, 0.0) - e)
    }

    /// `F_a(z) = (1 − az)/(z(a − z))`.
    pub fn big_f(&self, z: c64) -> c64 {
        (c64::new(1.0, 0.0) - z * self.a) / (z * (c64::new(self.a, 0.0) - z))
    }

    pub fn g(&self, theta: f64) -> f64 {
        2.0 * self.a * theta.cos() - 2.0
    }

    /// `j_a(θ) = 8 (a cos θ − 1)² / |a − e^{iθ}|²`.
    pub fn j(&self, theta: f64) -> f64 {
        let num = self.a * theta.cos() - 1.0;
        8.0 * num * num / (c64::new(self.a, 0.0) - c64::from_polar(1.0, theta)).norm_sqr()
    }

    /// `θ ↦ arg f_a(θ)` wrapped to `[0, 2π)`.
    pub fn phase_map(&self, theta: f64) -> f64 {
        wrap_phase(self.f(theta).arg())
    }

    pub fn arc_width(&self) -> f64 {
        (self.arc_end - self.arc_start).rem_euclid(TAU)
    }

    /// Signed distance outside the arc (zero inside).
    pub fn distance_outside(&self, phase: f64) -> f64 {
        let rel = (phase - self.arc_start).rem_euclid(TAU);
        let w = self.arc_width();
        if rel <= w {
            0.0
        } else {
            (rel - w).min(TAU - rel)
        }
    }

    /// Sorted images of a uniform `samples`-point grid on the circle.
    pub fn pushforward_samples(&self, samples: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..samples).map(|i| self.phase_map(TAU * i as f64 / samples as f64)).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Kolmogorov–Smirnov distance between the empirical distribution of
    /// `phases` and the pushforward of the uniform measure by `arg f_a`.
    pub fn ks_distance(&self, phases: &[f64]) -> f64 {
        let reference = self.pushforward_samples(1 << 18);
        let cdf = |t: f64| reference.partition_point(|&x| x <= t) as f64 / reference.len() as f64;
        let mut s = phases.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        s.iter()
            .enumerate()
            .map(|(i, &t)| {
                let f = cdf(t);
                ((i + 1) as f64 / n - f).max(f - i as f64 / n)
            })
            .fold(0.0, f64::max)
    }

    /// `min j_a` over the preimage `f_a^{-1}(arc)`, sampled on a fine grid.
    pub fn min_j_over_preimage(&self, contains: impl Fn(f64) -> bool) -> Option<f64> {
        let n = 200_000;
        (0..n)
            .map(|i| TAU * i as f64 / n as f64)
            .filter(|&t| contains(self.phase_map(t)))
            .map(|t| self.j(t))
            .reduce(f64::min)
    }
}

/// Subsets `σ ⊂ [−L, L]` with `|σ| ≤ n_max`: ∅ first, then by level,
/// lexicographic within a level.
#[derive(Debug, Clone)]
pub struct FourierWalshBasis {
    pub l: i64,
    pub n_max: usize,
    pub subsets: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
}

impl FourierWalshBasis {
    pub fn new(l: i64, n_max: usize, cap: usize) -> Result<Self> {
        if l < 1 || n_max < 1 {
            return Err(Error::InvalidArgument("Fourier–Walsh basis needs L ≥ 1 and n_max ≥ 1".into()));
        }
        let sites = (2 * l + 1) as u128;
        let mut count: u128 = 0;
        let mut binom: u128 = 1;
        for n in 0..=n_max as u128 {
            if n > 0 {
                binom = binom * (sites + 1 - n) / n;
            }
            count = count.saturating_add(binom);
            if n >= sites {
                break;
            }
        }
        if count > cap as u128 {
            return Err(Error::BasisTooLarge { count: count.min(usize::MAX as u128) as usize, cap });
        }
        let mut subsets = vec![Vec::new()];
        for level in 1..=n_max.min(sites as usize) {
            let mut combo: Vec<i64> = (-l..-l + level as i64).collect();
            loop {
                subsets.push(combo.clone());
                // Advance to the next combination in lexicographic order.
                let mut i = level;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    if combo[i] < l - (level - 1 - i) as i64 {
                        combo[i] += 1;
                        for j in i + 1..level {
                            combo[j] = combo[j - 1] + 1;
                        }
                        break;
                    }
                    if i == 0 {
                        i = usize::MAX;
                        break;
                    }
                }
                if i == usize::MAX {
                    break;
                }
            }
        }
        let index = subsets.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(FourierWalshBasis { l, n_max, subsets, index })
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn index_of(&self, sigma: &[i64]) -> Option<usize> {
        self.index.get(sigma).copied()
    }

    pub fn level(&self, i: usize) -> usize {
        self.subsets[i].len()
    }
}

/// Truncated Koopman operator of the Bernoulli shift. `U` is a partial
/// isometry: `U f_σ = f_{σ+1}` whenever `σ + 1 ⊂ [−L, L]`, and zero otherwise.
#[derive(Debug, Clone)]
pub struct KoopmanModel {
    pub basis: FourierWalshBasis,
    /// `shift[i] = Some(j)` when `U f_i = f_j`.
    pub shift: Vec<Option<usize>>,
    /// Eigenvalues of `A`: `mean(σ)`, and 0 for ∅.
    pub means: Vec<f64>,
}

pub const DEFAULT_BASIS_CAP: usize = 4000;

pub fn koopman_build(l: i64, n_max: usize, cap: usize) -> Result<KoopmanModel> {
    let basis = FourierWalshBasis::new(l, n_max, cap)?;
    let shift = basis
        .subsets
        .iter()
        .map(|s| {
            let moved: Vec<i64> = s.iter().map(|i| i + 1).collect();
            basis.index_of(&moved)
        })
        .collect();
    let means = basis
        .subsets
        .iter()
        .map(|s| if s.is_empty() { 0.0 } else { s.iter().sum::<i64>() as f64 / s.len() as f64 })
        .collect();
    Ok(KoopmanModel { basis, shift, means })
}

impl KoopmanModel {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn vacuum(&self) -> usize {
        0
    }

    /// Basis indices on which the truncated shift acts exactly.
    pub fn shift_domain(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.shift[i].is_some()).collect()
    }

    pub fn u(&self) -> TruncatedOperator {
        let n = self.dim();
        let mut m = Mat::<c64>::zeros(n, n);
        for (c, t) in self.shift.iter().enumerate() {
            if let Some(r) = *t {
                m[(r, c)] = c64::new(1.0, 0.0);
            }
        }
        TruncatedOperator::from_plain(m)
    }

    pub fn a(&self) -> TruncatedOperator {
        let n = self.dim();
        let mut m = Mat::<c64>::zeros(n, n);
        for (i, &v) in self.means.iter().enumerate() {
            m[(i, i)] = c64::new(v, 0.0);
        }
        TruncatedOperator::from_plain(m)
    }

    /// Permutation extending `U`: the basis vectors the shift pushes out of
    /// the window are sent, in order, to the ones it never reaches. Agrees
    /// with `U` on the shift domain and is exactly unitary.
    pub fn unitary_closure(&self) -> TruncatedOperator {
        let n = self.dim();
        let mut m = Mat::<c64>::zeros(n, n);
        let mut hit = vec![false; n];
        for (c, t) in self.shift.iter().enumerate() {
            if let Some(r) = *t {
                m[(r, c)] = c64::new(1.0, 0.0);
                hit[r] = true;
            }
        }
        let free_rows = (0..n).filter(|&r| !hit[r]);
        let free_cols = (0..n).filter(|&c| self.shift[c].is_none());
        for (r, c) in free_rows.zip(free_cols) {
            m[(r, c)] = c64::new(1.0, 0.0);
        }
        TruncatedOperator::from_plain(m)
    }

    /// `Q^⊥ = I − |f_∅⟩⟨f_∅|`.
    pub fn qperp(&self) -> TruncatedOperator {
        let n = self.dim();
        let mut m = Mat::<c64>::identity(n, n);
        m[(0, 0)] = ZERO;
        TruncatedOperator::from_plain(m)
    }

    /// Index map of `U^m` (`None` once the shifted set leaves the window).
    pub fn shift_power(&self, m: usize) -> Vec<Option<usize>> {
        (0..self.dim())
            .map(|i| {
                let mut cur = Some(i);
                for _ in 0..m {
                    cur = cur.and_then(|j| self.shift[j]);
                }
                cur
            })
            .collect()
    }
}

/// Unit vector orthogonal to `1` in `L²` of the two-point law `P(ω = −1) = p`,
/// `P(ω = +1) = q`; returns its values at `ω = −1` and `ω = +1`.
pub fn e0_perp(p: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0,1), got {p}")));
    }
    let q = 1.0 - p;
    let mean = q - p;
    let s = 2.0 * (p * q).sqrt();
    Ok(((-1.0 - mean) / s, (1.0 - mean) / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::op_norm;
    use std::f64::consts::PI;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn pinned_seq(alpha: VerblunskySeq, block: IndexWindow) -> VerblunskySeq {
        alpha.pinned_around(block, c(1.0)).unwrap()
    }

    #[test]
    fn constant_column_matches_geometric_expansion() {
        let win = IndexWindow::new(-30, 30);
        let seq = VerblunskySeq::constant(c(0.6)).unwrap();
        let h = ggt_build_series(&seq, win, 1e-14).unwrap();
        // F_a(T) = 0.8 T* − 0.36 Σ (0.8 T)^j for a = 1.25.
        let want = [0.8, -0.36, -0.288, -0.2304, -0.18432];
        for (off, w) in want.iter().enumerate() {
            let row = off as i64 - 1;
            assert!((h.at(row, 0) - c(*w)).norm() < 1e-15, "row {row}");
        }
    }

    #[test]
    fn pins_decouple_the_block() {
        let outer = IndexWindow::new(-20, 20);
        let pin_site = 5;
        let seq = VerblunskySeq::constant(c(0.6)).unwrap().with_pins(&[(pin_site, c(1.0))]).unwrap();
        let h = ggt_build_series(&seq, outer, 1e-14).unwrap();
        assert_eq!(h.at(pin_site - 1, pin_site), c(0.0));
        for k in outer.k_lo..pin_site {
            for i in pin_site..=outer.k_hi {
                assert_eq!(h.at(i, k), c(0.0), "col {k} row {i}");
            }
        }
    }

    #[test]
    fn pinned_block_is_unitary() {
        let block = IndexWindow::new(-100, 99);
        let seq = pinned_seq(VerblunskySeq::constant(c(0.6)).unwrap(), block);
        let h = ggt_build_series(&seq, block, 1e-14).unwrap();
        assert!(h.unitarity_defect() <= 1e-10);
    }

    #[test]
    fn closed_form_agrees_with_series() {
        let block = IndexWindow::new(-40, 39);
        for seq in [
            VerblunskySeq::constant(c(0.6)).unwrap(),
            verblunsky_profile(c64::new(0.3, 0.5), &Profile::Power { beta: 3.0, c: 0.2 }).unwrap(),
        ] {
            let seq = pinned_seq(seq, block);
            let s = ggt_build_series(&seq, block, 1e-14).unwrap();
            let f = ggt_build_closed(&seq, block).unwrap();
            assert!((&s - &f).max_abs() <= 1e-10);
        }
    }

    #[test]
    fn near_boundary_coefficients_stay_unitary() {
        let block = IndexWindow::new(-30, 29);
        let seq = pinned_seq(VerblunskySeq::constant(c(0.99)).unwrap(), block);
        let f = ggt_build_closed(&seq, block).unwrap();
        assert!(f.unitarity_defect() <= 1e-9);
    }

    #[test]
    fn vanishing_coefficients_are_rejected() {
        let seq = VerblunskySeq::from_fn(|k| if k == 3 { c(0.0) } else { c(0.5) });
        let r = ggt_build_series(&seq, IndexWindow::new(0, 10), 1e-14);
        assert!(matches!(r, Err(Error::NonDecayingTail { k: 3 })));
    }

    #[test]
    fn b_a_entries_and_band_oracle() {
        let a = 1.25;
        let win = IndexWindow::new(-50, 50);
        let b = conjugate_b_a(a, win);
        assert_eq!(b.at(1, 0), c(1.25));
        assert_eq!(b.at(0, 0), c(0.0));
        assert!(b.hermitian_defect() <= 1e-15);
        let g = g_a_band(a);
        let x = BandOperator::position();
        let band = g.mul(&x).add(&x.mul(&g)).materialize(win);
        assert!((&band - &b).max_abs() == 0.0);
    }

    #[test]
    fn symbol_values() {
        let s = constant_symbol(1.25).unwrap();
        assert!((s.theta_a - 0.8f64.acos()).abs() < 1e-15);
        assert!((s.f(0.0) - c(-1.0)).norm() < 1e-15);
        assert!((s.f(s.theta_a).arg() - (-0.96f64).atan2(0.28)).abs() < 1e-12);
        assert!((s.arc_width() - (TAU - 2.0 * 0.96f64.atan2(0.28))).abs() < 1e-12);
        assert!((s.arc_width() - 3.7092).abs() < 1e-4);
        assert!(s.j(s.theta_a).abs() < 1e-12);
        assert!(s.j(-s.theta_a).abs() < 1e-12);
        assert!((s.j(0.0) - 8.0).abs() < 1e-12);
        assert!((s.j(PI) - 8.0).abs() < 1e-12);
        assert!(s.distance_outside(PI) == 0.0);
        for i in 0..10_000 {
            let t = TAU * i as f64 / 10_000.0;
            assert!((s.f(t).norm() - 1.0).abs() < 1e-12);
            let z = c64::from_polar(1.0, t);
            assert!((s.big_f(z) - s.f(t)).norm() < 1e-12);
        }
    }

    #[test]
    fn profiles() {
        let flat = verblunsky_profile(c(0.6), &Profile::Constant).unwrap();
        assert_eq!(flat.delta().unwrap().eval(7), c(0.0));
        assert!(flat.paper_regime());
        let pw = verblunsky_profile(c(0.6), &Profile::Power { beta: 3.0, c: 0.1 }).unwrap();
        assert!((pw.alpha(0).norm() - 0.66).abs() < 1e-15);
        let rep = crate::bandalg::seminorm(pw.delta().unwrap(), 2, IndexWindow::new(-2000, 2000)).unwrap();
        assert!(rep.converged());
        assert!(rep.q.is_finite());
        let bad = verblunsky_profile(c(0.9), &Profile::Power { beta: 2.0, c: 0.2 });
        assert!(matches!(bad, Err(Error::OutOfDisk { .. })));
    }

    #[test]
    fn compact_perturbation_changes_few_columns() {
        let block = IndexWindow::new(-50, 49);
        let base = pinned_seq(VerblunskySeq::constant(c(0.6)).unwrap(), block);
        let bump = pinned_seq(
            verblunsky_profile(c(0.6), &Profile::Compact { support: vec![0], values: vec![0.2] }).unwrap(),
            block,
        );
        let h0 = ggt_build_series(&base, block, 1e-14).unwrap();
        let h1 = ggt_build_series(&bump, block, 1e-14).unwrap();
        let d = &h1 - &h0;
        for k in block.sites() {
            let col = block.sites().map(|i| d.at(i, k).norm()).fold(0.0, f64::max);
            if k > 0 {
                assert_eq!(col, 0.0, "column {k}");
            } else {
                assert!(col <= 0.8f64.powi((-k) as i32), "column {k}: {col}");
            }
        }
    }

    #[test]
    fn koopman_small_basis() {
        let km = koopman_build(3, 1, DEFAULT_BASIS_CAP).unwrap();
        assert_eq!(km.dim(), 8);
        assert!(km.basis.subsets[0].is_empty());
        assert_eq!(km.basis.subsets[1], vec![-3]);
        let u = km.u();
        let from = km.basis.index_of(&[-3]).unwrap();
        let to = km.basis.index_of(&[-2]).unwrap();
        assert_eq!(u.entries()[(to, from)], c(1.0));
        let two = km.basis.index_of(&[2]).unwrap();
        assert_eq!(km.means[two], 2.0);
    }

    #[test]
    fn koopman_level_two() {
        let km = koopman_build(3, 2, DEFAULT_BASIS_CAP).unwrap();
        assert_eq!(km.dim(), 1 + 7 + 21);
        let s = km.basis.index_of(&[0, 2]).unwrap();
        assert_eq!(km.means[s], 1.0);
        assert_eq!(km.shift[s], km.basis.index_of(&[1, 3]));
        // Level sets are lexicographic within each level.
        assert_eq!(km.basis.subsets[8], vec![-3, -2]);
        assert_eq!(km.basis.subsets[9], vec![-3, -1]);
    }

    #[test]
    fn koopman_commutator_is_qperp_on_the_domain() {
        let km = koopman_build(4, 3, DEFAULT_BASIS_CAP).unwrap();
        let (u, a, q) = (km.u(), km.a(), km.qperp());
        let m1 = &(&(&u.adjoint() * &a) * &u) - &a;
        for &c0 in &km.shift_domain() {
            for r in 0..km.dim() {
                assert!((m1.entries()[(r, c0)] - q.entries()[(r, c0)]).norm() < 1e-12);
            }
        }
        // U preserves levels on its domain.
        for &i in &km.shift_domain() {
            assert_eq!(km.basis.level(i), km.basis.level(km.shift[i].unwrap()));
        }
        assert!(op_norm(&u) <= 1.0 + 1e-12);
    }

    #[test]
    fn basis_cap_is_enforced() {
        assert!(matches!(koopman_build(50, 3, 1000), Err(Error::BasisTooLarge { .. })));
    }

    #[test]
    fn e0_perp_examples() {
        let (m, p) = e0_perp(0.5).unwrap();
        assert!((m + 1.0).abs() < 1e-15 && (p - 1.0).abs() < 1e-15);
        let (m, p) = e0_perp(0.25).unwrap();
        let s = 3f64.sqrt() / 2.0;
        assert!((m + 1.5 / s).abs() < 1e-12 && (p - 0.5 / s).abs() < 1e-12);
        assert!((0.25 * m + 0.75 * p).abs() < 1e-15);
        assert!((0.25 * m * m + 0.75 * p * p - 1.0).abs() < 1e-14);
    }
}
