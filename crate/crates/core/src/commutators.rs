//! Iterated commutators `ad_A^j`, the coefficient operators `B_p` of the
//! regularized conjugate `B(ε)`, the remainders `Q^±(ε,z)` they are built to
//! kill, the Baker–Campbell–Hausdorff transform and a scalar Gronwall bound.

use faer::c64;

use crate::error::{Error, Result};
use crate::opcore::{op_norm, TruncatedOperator};

/// Norm guard for plain Taylor exponentials.
pub const EXP_NORM_LIMIT: f64 = 20.0;
const SERIES_RTOL: f64 = 1e-16;
const MAX_SERIES_TERMS: usize = 400;

/// `ad_A^j(B)`, with `ad_A(B) = AB − BA`.
pub fn ad_power(a: &TruncatedOperator, b: &TruncatedOperator, j: usize) -> Result<TruncatedOperator> {
    let mut cur = b.clone();
    for _ in 0..j {
        cur = a.commutator(&cur)?;
    }
    if j == 0 && a.window() != b.window() {
        return Err(Error::WindowMismatch);
    }
    Ok(cur)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Compositions of `total` into exactly `parts` positive integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// `U`, `A` and the cached `ad_A^j(U)` and `B_p`.
#[derive(Debug, Clone)]
pub struct CommutatorChain {
    pub u: TruncatedOperator,
    pub a: TruncatedOperator,
    ad_u: Vec<TruncatedOperator>,
    bs: Vec<TruncatedOperator>,
}

impl CommutatorChain {
    /// Caches `ad_A^j(U)` for `j ≤ k_max` and `B_1..B_{k_max+1}`.
    pub fn new(u: &TruncatedOperator, a: &TruncatedOperator, k_max: usize) -> Result<Self> {
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
        let mut ad_u = vec![u.clone()];
        for _ in 0..k_max {
            let next = a.commutator(ad_u.last().unwrap())?;
            ad_u.push(next);
        }
        let mut chain = CommutatorChain { u: u.clone(), a: a.clone(), ad_u, bs: Vec::new() };
        chain.bs.push(a - &(&(u * a) * &u.adjoint()));
        for q in 1..=k_max {
            let next = chain.next_b(q);
            chain.bs.push(next);
        }
        Ok(chain)
    }

    /// `B_{q+1}/q!` as the order-`q` coefficient that cancels the expansion
    /// of `(∂e^{−C})e^{C} + B_1 + e^{−C}Ae^{C} − A`, with `C = Σ ε^p/p! B_p`.
    fn next_b(&self, q: usize) -> TruncatedOperator {
        let b = |p: usize| &self.bs[p - 1];
        let mut acc = TruncatedOperator::zeros(self.a.window());
        // Transport term e^{−C}Ae^{C} − A.
        for k in 1..=q {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            for alpha in compositions(q, k) {
                let weight: f64 = alpha.iter().map(|&p| factorial(p)).product();
                let last = *alpha.last().unwrap();
                let mut term = self.a.commutator(b(last)).expect("same window");
                for &p in alpha[..k - 1].iter().rev() {
                    term = b(p).commutator(&term).expect("same window");
                }
                acc = &acc + &term.scale_re(sign / (factorial(k) * weight));
            }
        }
        // Derivative term (∂e^{−C})e^{C} beyond its leading −∂C.
        for n in 1..=q {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            for j in 1..=q {
                if q + 1 < j + n {
                    continue;
                }
                for alpha in compositions(q + 1 - j, n) {
                    let weight: f64 = alpha.iter().map(|&p| factorial(p)).product::<f64>() * factorial(j - 1);
                    let mut term = b(j).clone();
                    for &p in alpha.iter().rev() {
                        term = b(p).commutator(&term).expect("same window");
                    }
                    acc = &acc + &term.scale_re(sign / (factorial(n + 1) * weight));
                }
            }
        }
        acc.scale_re(factorial(q))
    }

    pub fn k_max(&self) -> usize {
        self.bs.len() - 1
    }

    /// `B_p` for `1 ≤ p ≤ k_max + 1`.
    pub fn b(&self, p: usize) -> &TruncatedOperator {
        &self.bs[p - 1]
    }

    /// `ad_A^j(U)` for `j ≤ k_max`.
    pub fn ad_u(&self, j: usize) -> &TruncatedOperator {
        &self.ad_u[j]
    }

    /// Deviations in `U*AU − A = U*(ad_A U)` and `A − UAU* = (ad_A U)U*`.
    pub fn identity_defects(&self) -> (f64, f64) {
        let (u, a) = (&self.u, &self.a);
        let adu = a.commutator(u).expect("same window");
        let lhs1 = &(&(&u.adjoint() * a) * u) - a;
        let rhs1 = &u.adjoint() * &adu;
        let lhs2 = a - &(&(u * a) * &u.adjoint());
        let rhs2 = &adu * &u.adjoint();
        ((&lhs1 - &rhs1).max_abs(), (&lhs2 - &rhs2).max_abs())
    }
}

/// `B_1..B_{k+1}`.
pub fn bp_sequence(chain: &CommutatorChain, k: usize) -> Vec<TruncatedOperator> {
    assert!(k <= chain.k_max(), "chain built for k ≤ {}", chain.k_max());
    (1..=k + 1).map(|p| chain.b(p).clone()).collect()
}

/// Log-spaced grid of `points` values in `[lo, hi]`, descending.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (h + (l - h) * i as f64 / (points.max(2) - 1) as f64).exp())
        .collect()
}

/// The regularized conjugate `B(ε) = Σ_{p=1}^{k+1} ε^{p−1}/p! B_p` over an ε grid.
///
/// The sum runs one order past `k` so that the remainders `Q^±` vanish to
/// order `ε^{k+1}`; stopping at `k` only buys `ε^k`.
#[derive(Debug, Clone)]
pub struct EpsFamily {
    pub k: usize,
    pub grid: Vec<f64>,
    bs: Vec<TruncatedOperator>,
}

impl EpsFamily {
    pub fn new(chain: &CommutatorChain, k: usize, grid: Vec<f64>) -> Result<Self> {
        if k == 0 || k > chain.k_max() {
            return Err(Error::InvalidArgument(format!("order k = {k} needs a chain with k_max ≥ k ≥ 1")));
        }
        if grid.is_empty() || grid.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidArgument("ε grid must be nonempty and positive".into()));
        }
        Ok(EpsFamily { k, grid, bs: bp_sequence(chain, k) })
    }

    fn in_range(&self, eps: f64) -> Result<()> {
        let lo = self.grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.grid.iter().copied().fold(0.0, f64::max);
        if eps < lo * (1.0 - 1e-12) || eps > hi * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("ε = {eps} outside the grid range [{lo}, {hi}]")));
        }
        Ok(())
    }

    fn series(&self, eps: f64, coeff: impl Fn(usize) -> f64) -> TruncatedOperator {
        let mut acc = TruncatedOperator::zeros(self.bs[0].window());
        for (i, b) in self.bs.iter().enumerate() {
            acc = &acc + &b.scale_re(coeff(i + 1) * eps.powi(i as i32));
        }
        acc
    }

    pub fn b_eps(&self, eps: f64) -> TruncatedOperator {
        self.series(eps, |p| 1.0 / factorial(p))
    }

    /// `C(ε) = εB(ε)`.
    pub fn c_eps(&self, eps: f64) -> TruncatedOperator {
        self.b_eps(eps).scale_re(eps)
    }

    /// `∂_ε C(ε) = Σ ε^{p−1}/(p−1)! B_p`, exactly.
    pub fn dc_eps(&self, eps: f64) -> TruncatedOperator {
        self.series(eps, |p| 1.0 / factorial(p - 1))
    }

    /// `Σ_{p≥2} ε^{p−1}/p! ‖B_p‖`, which dominates `‖B(ε) − B_1‖`.
    pub fn deviation_bound(&self, eps: f64) -> f64 {
        self.bs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, b)| eps.powi(i as i32) / factorial(i + 1) * op_norm(b))
            .sum()
    }

    pub fn b1(&self) -> &TruncatedOperator {
        &self.bs[0]
    }

    /// `e^{−εB(ε)}` and `e^{εB(ε)*}`.
    pub fn exponentials(&self, eps: f64) -> Result<(TruncatedOperator, TruncatedOperator)> {
        let c = self.c_eps(eps);
        Ok((expm_taylor(&c.scale_re(-1.0))?, expm_taylor(&c.adjoint())?))
    }
}

/// Plain Taylor exponential, refused above [`EXP_NORM_LIMIT`].
pub fn expm_taylor(c: &TruncatedOperator) -> Result<TruncatedOperator> {
    let norm = op_norm(c);
    if norm > EXP_NORM_LIMIT {
        return Err(Error::SeriesDivergence { norm, limit: EXP_NORM_LIMIT });
    }
    let mut sum = TruncatedOperator::identity(c.window());
    let mut term = sum.clone();
    for n in 1..MAX_SERIES_TERMS {
        term = (&term * c).scale_re(1.0 / n as f64);
        sum = &sum + &term;
        if n as f64 > norm && term.frobenius() < SERIES_RTOL * sum.frobenius() {
            return Ok(sum);
        }
    }
    Err(Error::ConvergenceFailure("Taylor exponential did not settle".into()))
}

/// `e^{X}·Σ_{p≥1} (−1)^{p−1}/p! ad_X^{p−1}(∂X)`, the derivative of `e^{X}`.
fn dexp(x: &TruncatedOperator, dx: &TruncatedOperator, ex: &TruncatedOperator) -> Result<TruncatedOperator> {
    let norm = op_norm(x);
    let mut sum = dx.clone();
    let mut nested = dx.clone();
    for p in 2..MAX_SERIES_TERMS {
        nested = x.commutator(&nested)?;
        let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
        let term = nested.scale_re(sign / factorial(p));
        sum = &sum + &term;
        if p as f64 > 2.0 * norm && term.frobenius() <= SERIES_RTOL * sum.frobenius() {
            return Ok(ex * &sum);
        }
        if !term.frobenius().is_finite() {
            break;
        }
    }
    if sum.frobenius() == 0.0 {
        return Ok(sum);
    }
    Err(Error::ConvergenceFailure("derivative series did not settle".into()))
}

fn check_z(z: c64) -> Result<()> {
    let r = z.norm();
    if !(r > 0.5 && r <= 1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("|z| = {r} outside (1/2, 1]")));
    }
    Ok(())
}

/// `Q^+ = zU*(∂e^{−C} + B_1e^{−C} − ad_A e^{−C})` and
/// `Q^− = z̄^{-1}U*(∂e^{C*} − B_1e^{C*} + ad_A e^{C*})`, with `C = εB(ε)`.
pub fn q_operators(
    fam: &EpsFamily,
    u: &TruncatedOperator,
    a: &TruncatedOperator,
    eps: f64,
    z: c64,
) -> Result<(TruncatedOperator, TruncatedOperator)> {
    fam.in_range(eps)?;
    check_z(z)?;
    let c = fam.c_eps(eps);
    let dc = fam.dc_eps(eps);
    let neg_c = c.scale_re(-1.0);
    let e_neg = expm_taylor(&neg_c)?;
    let e_pos = expm_taylor(&c)?;
    let d_neg = dexp(&neg_c, &dc.scale_re(-1.0), &e_neg)?;
    let d_pos = dexp(&c, &dc, &e_pos)?;
    let b1 = fam.b1();
    let us = u.adjoint();

    let inner_p = &(&d_neg + &(b1 * &e_neg)) - &a.commutator(&e_neg)?;
    let qp = (&us * &inner_p).scale(z);

    let e_star = e_pos.adjoint();
    let d_star = d_pos.adjoint();
    let inner_m = &(&d_star - &(b1 * &e_star)) + &a.commutator(&e_star)?;
    let qm = (&us * &inner_m).scale(c64::new(1.0, 0.0) / z.conj());
    Ok((qp, qm))
}

/// Least-squares fit of `log max_z ‖Q^±(ε,z)‖` against `log ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct QDecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Every sample sat below the absolute floor.
    pub exact_cancellation: bool,
    pub eps: Vec<f64>,
    pub q_max: Vec<f64>,
    pub used: Vec<bool>,
}

/// Samples below this are excluded from the fit as rounding noise.
pub const Q_FLOOR: f64 = 1e-13;

/// The `z` sample: three radii in `(1/2, 1]` times three arguments.
pub fn z_grid() -> Vec<c64> {
    let mut zs = Vec::new();
    for r in [0.55, 0.8, 1.0] {
        for t in [0.0, 2.1, 4.2] {
            zs.push(c64::from_polar(r, t));
        }
    }
    zs
}

pub fn q_decay_fit(u: &TruncatedOperator, a: &TruncatedOperator, k: usize, eps_grid: &[f64]) -> Result<QDecayFit> {
    if k == 0 || k > 3 {
        return Err(Error::InvalidArgument(format!("q_decay_fit supports 1 ≤ k ≤ 3, got {k}")));
    }
    let lo = eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eps_grid.iter().copied().fold(0.0, f64::max);
    if !(hi / lo >= 100.0 * (1.0 - 1e-9)) {
        return Err(Error::InvalidArgument("ε grid must span at least two decades".into()));
    }
    let chain = CommutatorChain::new(u, a, k)?;
    let fam = EpsFamily::new(&chain, k, eps_grid.to_vec())?;
    let zs = z_grid();
    let mut q_max = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let mut m: f64 = 0.0;
        for &z in &zs {
            let (qp, qm) = q_operators(&fam, u, a, eps, z)?;
            m = m.max(op_norm(&qp)).max(op_norm(&qm));
        }
        q_max.push(m);
    }
    let used: Vec<bool> = q_max.iter().map(|&q| q >= Q_FLOOR).collect();
    let pts: Vec<(f64, f64)> = eps_grid
        .iter()
        .zip(&q_max)
        .zip(&used)
        .filter(|(_, &u)| u)
        .map(|((&e, &q), _)| (e.ln(), q.ln()))
        .collect();
    if pts.is_empty() {
        return Ok(QDecayFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            residual: 0.0,
            exact_cancellation: true,
            eps: eps_grid.to_vec(),
            q_max,
            used,
        });
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientPoints { need: 3, have: pts.len() });
    }
    let (slope, intercept, residual) = linear_fit(&pts);
    Ok(QDecayFit { slope, intercept, residual, exact_cancellation: false, eps: eps_grid.to_vec(), q_max, used })
}

/// Ordinary least squares `y = slope·x + intercept`; residual is the RMS error.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

/// `e^{−C}Ae^{C} − A = Σ_{k≥1} (−1)^{k−1}/k! ad_C^{k−1}(ad_A C)`.
pub fn bch_transform(c: &TruncatedOperator, a: &TruncatedOperator) -> Result<TruncatedOperator> {
    let norm = op_norm(c);
    if norm > EXP_NORM_LIMIT {
        return Err(Error::SeriesDivergence { norm, limit: EXP_NORM_LIMIT });
    }
    let mut nested = a.commutator(c)?;
    let mut sum = nested.clone();
    for k in 2..MAX_SERIES_TERMS {
        nested = c.commutator(&nested)?;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = nested.scale_re(sign / factorial(k));
        sum = &sum + &term;
        let t = term.frobenius();
        if t == 0.0 || (k as f64 > 2.0 * norm && t <= SERIES_RTOL * sum.frobenius()) {
            return Ok(sum);
        }
    }
    Err(Error::ConvergenceFailure("BCH series did not settle".into()))
}

/// Pointwise right-hand side of the nonlinear Gronwall lemma:
/// `f(λ) ≤ [ω^{1−θ} + (1−θ)∫_λ^b φ(μ)e^{(θ−1)∫_μ^b ψ}dμ]^{1/(1−θ)} e^{∫_λ^b ψ}`,
/// with trapezoidal quadrature on `grid` (ascending, `b` its last point).
pub fn gronwall_bound(omega: f64, theta: f64, phi: &[f64], psi: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let n = grid.len();
    if phi.len() != n || psi.len() != n || n < 2 {
        return Err(Error::InvalidArgument("φ, ψ and the grid must share a length ≥ 2".into()));
    }
    if !(omega >= 0.0) || !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("need ω ≥ 0 and θ ∈ [0,1), got ω = {omega}, θ = {theta}")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    let tail = |f: &dyn Fn(usize) -> f64| {
        let mut out = vec![0.0; n];
        for i in (0..n - 1).rev() {
            out[i] = out[i + 1] + 0.5 * (grid[i + 1] - grid[i]) * (f(i) + f(i + 1));
        }
        out
    };
    let psi_tail = tail(&|i| psi[i]);
    let inner = tail(&|i| phi[i] * ((theta - 1.0) * psi_tail[i]).exp());
    let p = 1.0 - theta;
    Ok((0..n)
        .map(|i| (omega.powf(p) + p * inner[i]).powf(1.0 / p) * psi_tail[i].exp())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandalg::BandOperator;
    use crate::models::koopman_build;
    use crate::opcore::{IndexWindow, TruncatedOperator};
    use crate::random::*;

    fn normalized_pair(seed: u64, n: usize) -> (TruncatedOperator, TruncatedOperator) {
        let mut r = rng(seed);
        let u = random_unitary(n, &mut r);
        let a = random_hermitian(n, &mut r);
        let a = a.scale_re(1.0 / op_norm(&a));
        (u, a)
    }

    /// Scaling-and-squaring exponential, independent of [`expm_taylor`].
    fn expm_oracle(c: &TruncatedOperator) -> TruncatedOperator {
        let s = 12;
        let small = c.scale_re(0.5f64.powi(s));
        let mut sum = TruncatedOperator::identity(c.window());
        let mut term = sum.clone();
        for n in 1..20 {
            term = (&term * &small).scale_re(1.0 / n as f64);
            sum = &sum + &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn ad_power_basics() {
        let (_, a) = normalized_pair(1, 12);
        assert!(ad_power(&a, &a, 1).unwrap().max_abs() == 0.0);
        assert!((&ad_power(&a, &a, 0).unwrap() - &a).max_abs() == 0.0);
        let win = IndexWindow::new(-20, 20);
        let x = BandOperator::position().materialize(win);
        let t = BandOperator::shift(1).materialize(win);
        assert!((&ad_power(&x, &t, 1).unwrap() - &t).max_abs() == 0.0);
        let other = TruncatedOperator::identity(IndexWindow::new(-5, 6));
        assert!(matches!(ad_power(&a, &other, 1), Err(Error::WindowMismatch)));
    }

    #[test]
    fn derivation_property() {
        let mut r = rng(2);
        let a = random_hermitian(15, &mut r);
        let b = TruncatedOperator::from_plain(random_matrix(15, &mut r));
        let c = TruncatedOperator::from_plain(random_matrix(15, &mut r));
        let lhs = ad_power(&a, &(&b * &c), 1).unwrap();
        let rhs = &(&ad_power(&a, &b, 1).unwrap() * &c) + &(&b * &ad_power(&a, &c, 1).unwrap());
        assert!((&lhs - &rhs).max_abs() < 1e-12 * lhs.max_abs().max(1.0) * 10.0);
    }

    #[test]
    fn chain_identities_and_b2() {
        let (u, a) = normalized_pair(3, 30);
        let chain = CommutatorChain::new(&u, &a, 2).unwrap();
        let (d1, d2) = chain.identity_defects();
        assert!(d1 < 1e-10 && d2 < 1e-10);
        assert!(chain.b(1).hermitian_defect() < 1e-12);
        let b2 = a.commutator(chain.b(1)).unwrap();
        assert!((&b2 - chain.b(2)).max_abs() < 1e-14);
    }

    #[test]
    fn identity_unitary_has_vanishing_b() {
        let (_, a) = normalized_pair(4, 10);
        let u = TruncatedOperator::identity(a.window());
        let chain = CommutatorChain::new(&u, &a, 3).unwrap();
        for p in 1..=4 {
            assert!(chain.b(p).max_abs() < 1e-15);
        }
    }

    /// Order-ε coefficient of `(∂e^{−C})e^{C} + B_1 + e^{−C}Ae^{C} − A` with
    /// `C = εB_1`, extracted by Richardson extrapolation, equals `B_2`.
    #[test]
    fn b2_is_the_first_order_defect() {
        let (u, a) = normalized_pair(5, 40);
        let chain = CommutatorChain::new(&u, &a, 1).unwrap();
        let b1 = chain.b(1);
        let x = |eps: f64| {
            let c = b1.scale_re(eps);
            let em = expm_oracle(&c.scale_re(-1.0));
            let ep = expm_oracle(&c);
            // ∂_ε e^{−εB_1} = −B_1 e^{−εB_1}
            let d = &(&(-b1) * &em) * &ep;
            &(&(&d + b1) + &(&(&em * &a) * &ep)) - &a
        };
        let h = 1e-3;
        let coeff = &x(h).scale_re(2.0 / h) - &x(2.0 * h).scale_re(1.0 / (2.0 * h));
        assert!((&coeff - chain.b(2)).max_abs() < 1e-5 * chain.b(2).max_abs().max(1.0));
    }

    #[test]
    fn koopman_cancels_exactly() {
        let km = koopman_build(4, 2, 1000).unwrap();
        let (u, a) = (km.unitary_closure(), km.a());
        assert!(u.unitarity_defect() < 1e-15);
        // B_1 is diagonal for a permutation U and diagonal A.
        let chain = CommutatorChain::new(&u, &a, 2).unwrap();
        assert!(chain.b(2).max_abs() < 1e-14);
        let fit = q_decay_fit(&u, &a, 1, &log_grid(1e-3, 1e-1, 8)).unwrap();
        assert!(fit.exact_cancellation, "{:?}", fit.q_max);
    }

    #[test]
    fn q_norm_depends_on_z_only_through_modulus() {
        let (u, a) = normalized_pair(6, 20);
        let chain = CommutatorChain::new(&u, &a, 1).unwrap();
        let fam = EpsFamily::new(&chain, 1, log_grid(1e-3, 1e-1, 5)).unwrap();
        let (p0, m0) = q_operators(&fam, &u, &a, 1e-2, c64::new(0.8, 0.0)).unwrap();
        for t in [0.7, 2.0, 5.5] {
            let (p, m) = q_operators(&fam, &u, &a, 1e-2, c64::from_polar(0.8, t)).unwrap();
            assert!((op_norm(&p) - op_norm(&p0)).abs() < 1e-14);
            assert!((op_norm(&m) - op_norm(&m0)).abs() < 1e-14);
        }
        assert!(q_operators(&fam, &u, &a, 1e-2, c64::new(0.3, 0.0)).is_err());
        assert!(q_operators(&fam, &u, &a, 1.0, c64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn q_decay_slopes() {
        let (u, a) = normalized_pair(7, 40);
        let grid = log_grid(1e-3, 1e-1, 9);
        let f1 = q_decay_fit(&u, &a, 1, &grid).unwrap();
        assert!((1.9..=2.3).contains(&f1.slope), "k=1 slope {}", f1.slope);
        let f2 = q_decay_fit(&u, &a, 2, &grid).unwrap();
        assert!((2.9..=3.4).contains(&f2.slope), "k=2 slope {}", f2.slope);
    }

    #[test]
    fn deviation_bound_holds_and_shrinks() {
        let (u, a) = normalized_pair(8, 20);
        let chain = CommutatorChain::new(&u, &a, 2).unwrap();
        let grid = log_grid(1e-3, 1e-1, 6);
        let fam = EpsFamily::new(&chain, 2, grid.clone()).unwrap();
        let mut last = f64::INFINITY;
        for &e in &grid {
            let dev = op_norm(&(&fam.b_eps(e) - fam.b1()));
            assert!(dev <= fam.deviation_bound(e) * (1.0 + 1e-12));
            assert!(dev <= last);
            last = dev;
        }
    }

    #[test]
    fn bch_matches_exponential_oracle_and_bound() {
        let mut r = rng(9);
        for _ in 0..20 {
            let a = random_hermitian(12, &mut r);
            let c = TruncatedOperator::from_plain(random_matrix(12, &mut r));
            let c = c.scale_re(1.5 / op_norm(&c));
            let got = bch_transform(&c, &a).unwrap();
            let want = &(&(&expm_oracle(&c.scale_re(-1.0)) * &a) * &expm_oracle(&c)) - &a;
            assert!((&got - &want).max_abs() < 1e-8);
            let bound = op_norm(&c).exp() * op_norm(&a.commutator(&c).unwrap());
            assert!(op_norm(&got) <= bound);
        }
        let (_, a) = normalized_pair(10, 8);
        assert!(bch_transform(&a.scale_re(2.0), &a).unwrap().max_abs() < 1e-15);
        assert!(matches!(bch_transform(&a.scale_re(30.0), &a), Err(Error::SeriesDivergence { .. })));
    }

    #[test]
    fn expm_agrees_with_oracle() {
        let mut r = rng(11);
        let c = TruncatedOperator::from_plain(random_matrix(10, &mut r));
        let c = c.scale_re(3.0 / op_norm(&c));
        let d = &expm_taylor(&c).unwrap() - &expm_oracle(&c);
        assert!(d.max_abs() < 1e-10);
    }

    #[test]
    fn gronwall_trivial_cases() {
        let grid: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let zero = vec![0.0; 101];
        let b = gronwall_bound(2.0, 0.5, &zero, &zero, &grid).unwrap();
        assert!(b.iter().all(|&v| (v - 2.0).abs() < 1e-14));
        let psi = vec![0.7; 101];
        let b = gronwall_bound(2.0, 0.0, &zero, &psi, &grid).unwrap();
        for (i, &v) in b.iter().enumerate() {
            let want = 2.0 * (0.7 * (1.0 - grid[i])).exp();
            assert!((v - want).abs() < 1e-12);
        }
    }

    /// `f' = −√f` integrated backward from `f(b) = ω` saturates the bound.
    #[test]
    fn gronwall_saturates_on_sqrt_ode() {
        let n = 10_000;
        let (a0, b0, omega) = (0.0, 2.0, 0.25);
        let grid: Vec<f64> = (0..n).map(|i| a0 + (b0 - a0) * i as f64 / (n - 1) as f64).collect();
        let bound = gronwall_bound(omega, 0.5, &vec![1.0; n], &vec![0.0; n], &grid).unwrap();
        let mut f = vec![0.0; n];
        f[n - 1] = omega;
        for i in (0..n - 1).rev() {
            let h = grid[i] - grid[i + 1];
            let rhs = |y: f64| -y.max(0.0).sqrt();
            let y = f[i + 1];
            let k1 = rhs(y);
            let k2 = rhs(y + 0.5 * h * k1);
            let k3 = rhs(y + 0.5 * h * k2);
            let k4 = rhs(y + h * k3);
            f[i] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let dev = f.iter().zip(&bound).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-6, "{dev}");
    }
}
