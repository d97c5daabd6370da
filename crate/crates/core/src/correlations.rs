//! Correlation norms `c_m = ‖⟨A⟩^{-s}U^mΦ(U)⟨A⟩^{-s}‖`, their power-law fits,
//! and the exact level-one Bernoulli values they are checked against.

use faer::{c64, Mat};

use crate::commutators::linear_fit;
use crate::error::{Error, Result};
use crate::models::KoopmanModel;
use crate::opcore::{hermitian_eig_unchecked, psd_top_eigenvalue, tol_eig, unitary_eig, SpectralDecomposition, TruncatedOperator};

/// `c_m` over an `m` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySeries {
    pub s: f64,
    pub dim: usize,
    pub m_grid: Vec<i64>,
    pub values: Vec<f64>,
}

impl DecaySeries {
    pub fn value_at(&self, m: i64) -> Option<f64> {
        self.m_grid.iter().position(|&x| x == m).map(|i| self.values[i])
    }
}

/// Relative eigenvalue cut for the Gram matrix of the weighted eigenvectors;
/// the discarded part perturbs every `c_m` by at most `2·sqrt(cut)·c_max`.
const GRAM_CUT: f64 = 1e-26;

/// Eigen-route correlation norms. With `X = V_r*W` over the eigenvectors on
/// which `φ ≠ 0`, `c_m = ‖X* D_m X‖ = ‖K D_m K‖` for `K = (XX*)^{1/2}`, and `K`
/// is replaced by its numerically nonzero spectral part.
pub fn correlation_norms_eig(
    dec: &SpectralDecomposition,
    weight: &TruncatedOperator,
    phi: &[f64],
    s: f64,
    m_grid: &[i64],
) -> Result<DecaySeries> {
    let cols: Vec<usize> = (0..dec.dim()).filter(|&j| phi[j] != 0.0).collect();
    let n = dec.dim();
    let r = cols.len();
    if r == 0 {
        return Ok(DecaySeries { s, dim: n, m_grid: m_grid.to_vec(), values: vec![0.0; m_grid.len()] });
    }
    let v = Mat::from_fn(n, r, |i, j| dec.vectors[(i, cols[j])]);
    let x = v.adjoint() * weight.entries();
    let gram = &x * x.adjoint();
    let eig = hermitian_eig_unchecked(gram.as_ref())?;
    let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..r).filter(|&k| eig.values[k] > GRAM_CUT * top).collect();
    let q = keep.len();
    // K restricted to its range: columns Y_k √λ_k.
    let kq = Mat::from_fn(r, q, |i, j| eig.vectors[(i, keep[j])] * eig.values[keep[j]].sqrt());
    let values = m_grid
        .iter()
        .map(|&m| {
            let d: Vec<c64> = cols.iter().map(|&j| c64::from_polar(phi[j], m as f64 * dec.phases[j])).collect();
            // M = K_q* D K_q applied through two thin products, never formed.
            let apply = |x: &Mat<c64>, adjoint: bool| {
                let y = &kq * x;
                let dy = Mat::from_fn(r, x.ncols(), |i, j| if adjoint { d[i].conj() } else { d[i] } * y[(i, j)]);
                kq.adjoint() * dy
            };
            psd_top_eigenvalue(q, |x| apply(&apply(x, false), true)).sqrt()
        })
        .collect();
    Ok(DecaySeries { s, dim: n, m_grid: m_grid.to_vec(), values })
}

/// `c_m` for a unitary `U`, conjugate `A` and an operator `Φ` commuting with
/// `U`; `Φ` enters through its diagonal `v_j*Φv_j` in the eigenbasis.
pub fn correlation_norms(
    u: &TruncatedOperator,
    a: &TruncatedOperator,
    phi: &TruncatedOperator,
    s: f64,
    m_grid: &[i64],
) -> Result<DecaySeries> {
    let n = u.dim();
    let comm = (&(phi * u) - &(u * phi)).max_abs();
    if comm > tol_eig(n, 1.0f64.max(phi.max_abs())) {
        return Err(Error::InvalidArgument(format!("Φ does not commute with U (defect {comm:.3e})")));
    }
    let dec = unitary_eig(u)?;
    let weight = crate::opcore::weight_power(a, s)?;
    let pv = phi.entries() * &dec.vectors;
    let diag: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| dec.vectors[(i, j)].conj() * pv[(i, j)]).sum::<c64>().re)
        .map(|v| if v.abs() < 1e-14 { 0.0 } else { v })
        .collect();
    correlation_norms_eig(&dec, &weight, &diag, s, m_grid)
}

/// Koopman correlations on `Q^⊥` (optionally one level) through the index
/// map of `U^m`: the weighted shift is monomial, so its norm is its largest entry.
pub fn koopman_correlation(km: &KoopmanModel, s: f64, m: usize, level: Option<usize>) -> f64 {
    let w: Vec<f64> = km.means.iter().map(|&x| (1.0 + x * x).powf(-s / 2.0)).collect();
    let map = km.shift_power(m);
    (0..km.dim())
        .filter(|&i| i != km.vacuum() && level.is_none_or(|l| km.basis.level(i) == l))
        .filter_map(|i| map[i].map(|t| w[t] * w[i]))
        .fold(0.0, f64::max)
}

/// Exact level-one value `max_i (1+i²)^{-s/2}(1+(i+m)²)^{-s/2}` over
/// `|i|, |i+m| ≤ L`.
pub fn bernoulli_oracle(s: f64, m: i64, l: i64) -> Result<f64> {
    let mut best: Option<(f64, i64)> = None;
    for i in -l..=l {
        if (i + m).abs() > l {
            continue;
        }
        let v = ((1.0 + (i * i) as f64) * (1.0 + ((i + m) * (i + m)) as f64)).powf(-s / 2.0);
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    let (v, i) = best.ok_or_else(|| Error::InvalidArgument(format!("no admissible i for m = {m}, L = {l}")))?;
    if i.abs() == l || (i + m).abs() == l {
        return Err(Error::WindowClipsOptimum { i });
    }
    Ok(v)
}

/// Least-squares power law `c_m ≈ C⟨m⟩^{-exponent}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    pub c: f64,
    pub residual: f64,
    /// `m` values that entered the fit.
    pub used: Vec<i64>,
    /// `m` values dropped as truncation floor.
    pub floor: Vec<i64>,
}

pub const MIN_FIT_POINTS: usize = 8;
/// Relative `N`-vs-`2N` disagreement above which a point is floor.
pub const FLOOR_TOL: f64 = 0.1;

/// `⟨m⟩ = (1 + m²)^{1/2}`.
pub fn japanese(m: f64) -> f64 {
    (1.0 + m * m).sqrt()
}

/// Fits over `m ∈ [lo, hi]`. With `doubled` (the same series at twice the
/// dimension) a point is floor when the two runs disagree by more than
/// [`FLOOR_TOL`]; without it, once `c_m` stops decreasing.
pub fn decay_exponent_fit(series: &DecaySeries, lo: i64, hi: i64, doubled: Option<&DecaySeries>) -> Result<DecayFit> {
    let mut used = Vec::new();
    let mut floor = Vec::new();
    let mut pts = Vec::new();
    let mut prev = f64::INFINITY;
    let mut in_floor = false;
    for (&m, &c) in series.m_grid.iter().zip(&series.values) {
        if m < lo || m > hi {
            continue;
        }
        let is_floor = match doubled {
            Some(d) => match d.value_at(m) {
                Some(c2) => (c - c2).abs() > FLOOR_TOL * c2.abs(),
                None => true,
            },
            None => {
                in_floor |= c >= prev;
                in_floor
            }
        };
        prev = c;
        if is_floor || !(c > 0.0) {
            floor.push(m);
        } else {
            used.push(m);
            pts.push((japanese(m as f64).ln(), c.ln()));
        }
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(if floor.is_empty() {
            Error::InsufficientPoints { need: MIN_FIT_POINTS, have: pts.len() }
        } else {
            Error::FloorDominates { clean: pts.len(), need: MIN_FIT_POINTS }
        });
    }
    let (slope, intercept, residual) = linear_fit(&pts);
    Ok(DecayFit { exponent: -slope, c: intercept.exp(), residual, used, floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{conjugate_b_a, koopman_build, pinned_constant_ggt};
    use crate::opcore::{op_norm, weight_power, IndexWindow};
    use crate::random::*;
    use crate::spectral::{func_calc, BumpFunction};
    use std::f64::consts::PI;

    #[test]
    fn lanczos_matches_dense_norm() {
        let mut r = rng(11);
        for n in [1usize, 5, 40, 120] {
            let k = random_matrix(n, &mut r);
            let want = crate::opcore::op_norm_mat(k.as_ref());
            let got = psd_top_eigenvalue(n, |x| k.adjoint() * (&k * x)).sqrt();
            assert!((got - want).abs() <= 1e-10 * want, "n={n}: {got} vs {want}");
        }
        assert_eq!(psd_top_eigenvalue(0, |x| x.clone()), 0.0);
    }

    #[test]
    fn oracle_values() {
        assert_eq!(bernoulli_oracle(2.0, 0, 50).unwrap(), 1.0);
        assert!((bernoulli_oracle(2.0, 10, 50).unwrap() - 1.0 / 101.0).abs() < 1e-15);
        assert!((bernoulli_oracle(2.0, 2, 50).unwrap() - 0.25).abs() < 1e-15);
        assert!((bernoulli_oracle(1.0, 1, 50).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let big = bernoulli_oracle(2.0, 400, 1000).unwrap() * (1.0 + 400.0f64 * 400.0);
        assert!((big - 1.0).abs() < 1e-12);
        assert!(matches!(bernoulli_oracle(2.0, 10, 5), Err(_)));
    }

    #[test]
    fn koopman_matches_oracle() {
        let km = koopman_build(60, 1, 1000).unwrap();
        for m in [0usize, 1, 2, 5, 10, 30] {
            let got = koopman_correlation(&km, 2.0, m, Some(1));
            let want = bernoulli_oracle(2.0, m as i64, 60).unwrap();
            assert!((got - want).abs() <= 1e-12, "m={m}: {got} vs {want}");
        }
        assert!((koopman_correlation(&km, 2.0, 10, Some(1)) - 1.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn koopman_dense_route_agrees_with_index_map() {
        let km = koopman_build(6, 2, 1000).unwrap();
        let w = weight_power(&km.a(), 1.5).unwrap();
        let q = km.qperp();
        let u = km.u();
        let mut um = TruncatedOperator::identity(u.window());
        for m in 0..6 {
            let dense = op_norm(&(&(&(&(&q * &w) * &um) * &w) * &q));
            assert!((dense - koopman_correlation(&km, 1.5, m, None)).abs() < 1e-12);
            um = &u * &um;
        }
    }

    #[test]
    fn unitarity_gives_unit_norms() {
        let mut r = rng(41);
        let u = random_unitary(20, &mut r);
        let zero = TruncatedOperator::zeros(u.window());
        let id = TruncatedOperator::identity(u.window());
        let series = correlation_norms(&u, &zero, &id, 1.0, &[0, 1, 5, 17]).unwrap();
        assert!(series.values.iter().all(|&c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn compressed_route_matches_dense_norms() {
        let win = IndexWindow::centered(150);
        let h = pinned_constant_ggt(1.25, win).unwrap();
        let b = conjugate_b_a(1.25, win);
        let dec = unitary_eig(&h).unwrap();
        let bump = BumpFunction::centered(PI, 0.6, 1.2).unwrap();
        let phi_op = func_calc(&dec, |t| bump.eval(t));
        let w = weight_power(&b, 2.0).unwrap();
        let series = correlation_norms(&h, &b, &phi_op, 2.0, &[-7, 0, 3, 7]).unwrap();
        let mut hm = TruncatedOperator::identity(win);
        for m in 0..=7 {
            if let Some(c) = series.value_at(m) {
                let dense = op_norm(&(&(&(&w * &hm) * &phi_op) * &w));
                assert!((c - dense).abs() < 1e-10 * dense.max(1e-3), "m={m}: {c} vs {dense}");
            }
            hm = &h * &hm;
        }
        assert!((series.value_at(7).unwrap() - series.value_at(-7).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fits() {
        let m: Vec<i64> = (20..=200).step_by(10).collect();
        let synth = DecaySeries {
            s: 3.0,
            dim: 0,
            m_grid: m.clone(),
            values: m.iter().map(|&x| 5.0 * japanese(x as f64).powi(-3)).collect(),
        };
        let fit = decay_exponent_fit(&synth, 20, 200, None).unwrap();
        assert!((fit.exponent - 3.0).abs() < 1e-12 && (fit.c - 5.0).abs() < 1e-10 && fit.residual < 1e-12);
        let oracle = DecaySeries {
            s: 2.0,
            dim: 0,
            m_grid: m.clone(),
            values: m.iter().map(|&x| bernoulli_oracle(2.0, x, 1000).unwrap()).collect(),
        };
        let fit = decay_exponent_fit(&oracle, 20, 200, None).unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.02);
        let short = DecaySeries { s: 2.0, dim: 0, m_grid: vec![1, 2, 3], values: vec![1.0, 0.5, 0.3] };
        assert!(matches!(decay_exponent_fit(&short, 1, 3, None), Err(Error::InsufficientPoints { .. })));
        let mut flat = oracle.clone();
        for v in flat.values.iter_mut().skip(5) {
            *v = 1e-3;
        }
        assert!(matches!(decay_exponent_fit(&flat, 20, 200, None), Err(Error::FloorDominates { .. })));
    }
}
