//! Weighted resolvents `F_{j,s}(z) = ⟨A⟩^{-s}(1 − zU*)^{-j}⟨A⟩^{-s}` near the
//! unit circle: radial studies, the θ-derivative identity, the spectral
//! density and the regularized resolvents `G_ε^±(z)`.

use std::f64::consts::TAU;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use rand::Rng;

use crate::commutators::EpsFamily;
use crate::error::{Error, Result};
use crate::opcore::{op_norm, op_norm_mat, weight_power, SpectralDecomposition, TruncatedOperator};

/// Condition numbers above this are refused.
pub const COND_LIMIT: f64 = 1e14;

/// A unitary with its weight `⟨A⟩^{-s}`, shared by many resolvent samples.
#[derive(Debug, Clone)]
pub struct WeightedResolvent {
    pub u: TruncatedOperator,
    pub weight: TruncatedOperator,
    pub s: f64,
}

#[derive(Debug, Clone)]
pub struct WeightedResolventSample {
    pub j: usize,
    pub s: f64,
    pub z: c64,
    /// `|z| = 1` to rounding.
    pub boundary: bool,
    pub f: TruncatedOperator,
    pub norm: f64,
}

impl WeightedResolvent {
    pub fn new(u: &TruncatedOperator, a: &TruncatedOperator, s: f64) -> Result<Self> {
        if u.window() != a.window() {
            return Err(Error::WindowMismatch);
        }
        let defect = u.unitarity_defect();
        if defect > 1e-9 {
            return Err(Error::NotUnitary { defect });
        }
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("weight exponent must be positive, got {s}")));
        }
        Ok(WeightedResolvent { u: u.clone(), weight: weight_power(a, s)?, s })
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    fn factor(&self, z: c64) -> Result<(faer::linalg::solvers::PartialPivLu<c64>, bool)> {
        let id = TruncatedOperator::identity(self.u.window());
        let m = &id - &self.u.adjoint().scale(z);
        let r = z.norm();
        let boundary = (r - 1.0).abs() < 1e-15;
        // Singular values of 1 − zU* lie in [||z|−1|, 1+|z|].
        let cond = if boundary {
            let n = m.dim();
            let inv = m.entries().partial_piv_lu().solve(Mat::<c64>::identity(n, n));
            op_norm(&m) * op_norm_mat(inv.as_ref())
        } else {
            (1.0 + r) / (r - 1.0).abs()
        };
        if !(cond <= COND_LIMIT) {
            return Err(Error::NearSingular { cond });
        }
        Ok((m.entries().partial_piv_lu(), boundary))
    }

    /// `(1 − zU*)^{-j} X` for a given right-hand side.
    fn apply_resolvent(&self, z: c64, j: usize, rhs: &Mat<c64>) -> Result<(Mat<c64>, bool)> {
        let (lu, boundary) = self.factor(z)?;
        let mut x = rhs.clone();
        for _ in 0..j {
            x = lu.solve(&x);
        }
        Ok((x, boundary))
    }

    pub fn sample(&self, j: usize, z: c64) -> Result<WeightedResolventSample> {
        if j == 0 {
            return Err(Error::InvalidArgument("resolvent power j must be ≥ 1".into()));
        }
        let (x, boundary) = self.apply_resolvent(z, j, self.weight.entries())?;
        let f = TruncatedOperator::from_matrix(self.u.window(), self.weight.entries() * &x);
        let norm = op_norm(&f);
        Ok(WeightedResolventSample { j, s: self.s, z, boundary, f, norm })
    }

    /// `⟨A⟩^{-2s} − F_{1,s}(z̄^{-1})*`, which equals `F_{1,s}(z)` for `|z| > 1`.
    pub fn mirrored_minus(&self, z: c64) -> Result<TruncatedOperator> {
        let w = c64::new(1.0, 0.0) / z.conj();
        let inner = self.sample(1, w)?.f;
        Ok(&(&self.weight * &self.weight) - &inner.adjoint())
    }
}

pub fn weighted_resolvent(
    u: &TruncatedOperator,
    a: &TruncatedOperator,
    s: f64,
    j: usize,
    z: c64,
) -> Result<WeightedResolventSample> {
    WeightedResolvent::new(u, a, s)?.sample(j, z)
}

/// Norms along `z = (1 ∓ δ)e^{iθ}` for a decreasing δ grid.
#[derive(Debug, Clone)]
pub struct RadialStudy {
    pub theta: f64,
    pub deltas: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    /// Last three plus-side norms within 10% of each other.
    pub plateau: bool,
    /// Slope of `log ‖F‖` against `log(1/δ)` (plus side).
    pub blowup_exponent: f64,
    /// `δ·‖F‖` at the smallest δ: the weighted overlap of a pole.
    pub overlap: f64,
    pub point_spectrum: bool,
}

pub const PLATEAU_TOL: f64 = 0.1;
pub const PP_EXPONENT: f64 = 0.8;
pub const PP_OVERLAP: f64 = 1e-6;

pub fn radial_study(wr: &WeightedResolvent, j: usize, theta: f64, deltas: &[f64]) -> Result<RadialStudy> {
    if deltas.len() < 3 {
        return Err(Error::InsufficientPoints { need: 3, have: deltas.len() });
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d <= 0.5)) || deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("δ grid must lie in (0, 0.5] and strictly decrease".into()));
    }
    let mut plus = Vec::with_capacity(deltas.len());
    let mut minus = Vec::with_capacity(deltas.len());
    for &d in deltas {
        plus.push(wr.sample(j, c64::from_polar(1.0 - d, theta))?.norm);
        minus.push(wr.sample(j, c64::from_polar(1.0 + d, theta))?.norm);
    }
    let tail = &plus[plus.len() - 3..];
    let plateau = relative_spread(tail) < PLATEAU_TOL;
    let pts: Vec<(f64, f64)> = deltas.iter().zip(&plus).map(|(d, n)| ((1.0 / d).ln(), n.ln())).collect();
    let (blowup_exponent, _, _) = crate::commutators::linear_fit(&pts);
    let overlap = deltas.last().unwrap() * plus.last().unwrap();
    Ok(RadialStudy {
        theta,
        deltas: deltas.to_vec(),
        plus,
        minus,
        plateau,
        blowup_exponent,
        overlap,
        point_spectrum: blowup_exponent >= PP_EXPONENT && overlap >= PP_OVERLAP,
    })
}

/// `(max − min)/min`.
pub fn relative_spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo
}

impl RadialStudy {
    /// Relative spread of the plus-side norms over `δ ∈ [lo, hi]`.
    pub fn spread_over(&self, lo: f64, hi: f64) -> f64 {
        let v: Vec<f64> = self
            .deltas
            .iter()
            .zip(&self.plus)
            .filter(|(&d, _)| d >= lo * (1.0 - 1e-12) && d <= hi * (1.0 + 1e-12))
            .map(|(_, &n)| n)
            .collect();
        relative_spread(&v)
    }

    /// Smallest grid δ such that the plus-side norms over `[δ, upper]` stay
    /// within `tol` relative spread; below it the finite block's level
    /// spacing takes over.
    pub fn plateau_floor(&self, upper: f64, tol: f64) -> Option<f64> {
        let mut floor = None;
        for &d in self.deltas.iter().filter(|&&d| d <= upper * (1.0 + 1e-12)) {
            if self.spread_over(d, upper) < tol {
                floor = Some(d);
            } else {
                break;
            }
        }
        floor
    }
}

/// Relative deviation between the central θ-difference of `F_{j,s}` at
/// fixed `|z|` and `ij(F_{j+1,s} − F_{j,s})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    pub deviation: f64,
    pub rhs_norm: f64,
}

pub fn derivative_identity_check(wr: &WeightedResolvent, j: usize, z: c64, h: f64) -> Result<DerivativeCheck> {
    if (z.norm() - 1.0).abs() < 1e-12 {
        return Err(Error::InvalidArgument("derivative identity needs |z| ≠ 1".into()));
    }
    let (r, t) = (z.norm(), z.arg());
    let fp = wr.sample(j, c64::from_polar(r, t + h))?.f;
    let fm = wr.sample(j, c64::from_polar(r, t - h))?.f;
    let lhs = (&fp - &fm).scale_re(1.0 / (2.0 * h));
    let fj = wr.sample(j, z)?.f;
    let fj1 = wr.sample(j + 1, z)?.f;
    let rhs = (&fj1 - &fj).scale(c64::new(0.0, j as f64));
    let rhs_norm = op_norm(&rhs);
    let diff = op_norm(&(&lhs - &rhs));
    Ok(DerivativeCheck { deviation: if rhs_norm > 0.0 { diff / rhs_norm } else { diff }, rhs_norm })
}

/// `(1/2π)(F_{1,s}((1−δ)e^{iθ}) − F_{1,s}((1+δ)e^{iθ}))`.
pub fn spectral_density(wr: &WeightedResolvent, theta: f64, delta: f64) -> Result<TruncatedOperator> {
    let p = wr.sample(1, c64::from_polar(1.0 - delta, theta))?.f;
    let m = wr.sample(1, c64::from_polar(1.0 + delta, theta))?.f;
    Ok((&p - &m).scale_re(1.0 / TAU))
}

/// Scalar density kernel `(1/2π)(1/(1−(1−δ)e^{iφ}) − 1/(1−(1+δ)e^{iφ}))`.
pub fn density_kernel(phi: f64, delta: f64) -> c64 {
    let one = c64::new(1.0, 0.0);
    let e = c64::from_polar(1.0, phi);
    (one / (one - e * (1.0 - delta)) - one / (one - e * (1.0 + delta))) / TAU
}

/// `Σ_n w_n φ(θ_n) · density(θ_n)` on a uniform `nodes`-point trapezoid,
/// evaluated in the eigenbasis of `U`: each node contributes the scalar
/// kernel at `θ_n − θ_j` on eigenvector `j`.
pub fn density_integral(
    dec: &SpectralDecomposition,
    weight: &TruncatedOperator,
    phi: impl Fn(f64) -> f64,
    delta: f64,
    nodes: usize,
) -> TruncatedOperator {
    let h = TAU / nodes as f64;
    let samples: Vec<(f64, f64)> = (0..nodes)
        .map(|n| (h * n as f64, phi(h * n as f64)))
        .filter(|&(_, v)| v != 0.0)
        .collect();
    let g: Vec<c64> = dec
        .phases
        .iter()
        .map(|&tj| samples.iter().map(|&(t, v)| density_kernel(t - tj, delta) * (h * v)).sum())
        .collect();
    &(weight * &dec.apply_diag(&g)) * weight
}

/// `G_ε^±(z)` samples with the quadratic-estimate constant and the adjoint
/// relation `G^+(z)* = −z̄^{-1}U*e^{εB(ε)*}G^−(z)`.
#[derive(Debug, Clone)]
pub struct UepsSample {
    pub eps: f64,
    pub z: c64,
    pub g_plus: TruncatedOperator,
    pub g_minus: TruncatedOperator,
    pub g_plus_norm: f64,
    pub g_minus_norm: f64,
    /// `⟨A⟩^{-s}G^±⟨A⟩^{-s}` norms.
    pub weighted_plus_norm: f64,
    pub weighted_minus_norm: f64,
    /// Smallest `C` with `‖Gψ‖ ≤ C(√(|⟨ψ, Re G ψ⟩|/ε) + ‖ψ‖)` on the sampled `ψ`.
    pub c_plus: f64,
    pub c_minus: f64,
    pub adjoint_defect: f64,
}

fn invert_checked(t: &TruncatedOperator) -> Result<TruncatedOperator> {
    let n = t.dim();
    let inv = t.entries().partial_piv_lu().solve(Mat::<c64>::identity(n, n));
    let cond = op_norm(t) * op_norm_mat(inv.as_ref());
    if !(cond <= COND_LIMIT) {
        return Err(Error::NotInvertible { cond });
    }
    Ok(TruncatedOperator::from_matrix(t.window(), inv))
}

/// `G^± = (T^±)^{-1}` with `T^+ = 1 − zU*e^{−C}` and `T^− = 1 − z̄^{-1}U*e^{C*}`,
/// given the two exponentials.
pub fn regularized_resolvents(
    u: &TruncatedOperator,
    e_neg: &TruncatedOperator,
    e_pos_star: &TruncatedOperator,
    z: c64,
) -> Result<(TruncatedOperator, TruncatedOperator)> {
    let id = TruncatedOperator::identity(u.window());
    let us = u.adjoint();
    let tp = &id - &(&us * e_neg).scale(z);
    let tm = &id - &(&us * e_pos_star).scale(c64::new(1.0, 0.0) / z.conj());
    Ok((invert_checked(&tp)?, invert_checked(&tm)?))
}

fn quadratic_constant(g: &TruncatedOperator, eps: f64, psis: &Mat<c64>) -> f64 {
    let gp = g.entries() * psis;
    let n = psis.nrows();
    (0..psis.ncols())
        .map(|c| {
            let norm_psi = (0..n).map(|i| psis[(i, c)].norm_sqr()).sum::<f64>().sqrt();
            let norm_g = (0..n).map(|i| gp[(i, c)].norm_sqr()).sum::<f64>().sqrt();
            // ⟨ψ, Re G ψ⟩ = Re⟨ψ, Gψ⟩.
            let form: f64 = (0..n).map(|i| (psis[(i, c)].conj() * gp[(i, c)]).re).sum();
            norm_g / ((form.abs() / eps).sqrt() + norm_psi)
        })
        .fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
pub fn ueps_resolvents(
    fam: &EpsFamily,
    wr: &WeightedResolvent,
    eps: f64,
    z: c64,
    probes: usize,
    rng: &mut impl Rng,
) -> Result<UepsSample> {
    let r = z.norm();
    if !(r > 0.5 && r <= 1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("|z| = {r} outside (1/2, 1]")));
    }
    let (e_neg, e_pos_star) = fam.exponentials(eps)?;
    let u = &wr.u;
    let (gp, gm) = regularized_resolvents(u, &e_neg, &e_pos_star, z)?;
    let n = u.dim();
    let psis = Mat::from_fn(n, probes.max(1), |_, _| {
        c64::new(crate::random::gaussian(rng), crate::random::gaussian(rng))
    });
    let w = &wr.weight;
    let rel = &(&u.adjoint() * &e_pos_star) * &gm;
    let adjoint_defect = (&gp.adjoint() + &rel.scale(c64::new(1.0, 0.0) / z.conj())).max_abs();
    Ok(UepsSample {
        eps,
        z,
        g_plus_norm: op_norm(&gp),
        g_minus_norm: op_norm(&gm),
        weighted_plus_norm: op_norm(&(&(w * &gp) * w)),
        weighted_minus_norm: op_norm(&(&(w * &gm) * w)),
        c_plus: quadratic_constant(&gp, eps, &psis),
        c_minus: quadratic_constant(&gm, eps, &psis),
        adjoint_defect,
        g_plus: gp,
        g_minus: gm,
    })
}
