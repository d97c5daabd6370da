use std::f64::consts::TAU;

use mourre_core::bandalg::{
    ad_conjugate_diag_closed, ad_conjugate_j_closed, conjugate_generator, seminorm, BandOperator, DiagSeq,
};
use mourre_core::c64;
use mourre_core::commutators::{log_grid, q_decay_fit, Q_FLOOR};
use mourre_core::correlations::{
    bernoulli_oracle, correlation_norms_eig, decay_exponent_fit, koopman_correlation, DecayFit, DecaySeries,
};
use mourre_core::lap::{derivative_identity_check, radial_study, WeightedResolvent};
use mourre_core::models::{
    conjugate_b_a, constant_symbol, e0_perp, ggt_build_closed, ggt_build_series, koopman_build, verblunsky_profile,
    ConstantSymbol, KoopmanModel, Profile, VerblunskySeq, DEFAULT_TAIL_TOL,
};
use mourre_core::opcore::{op_norm, unitary_eig, weight_power, IndexWindow, TruncatedOperator};
use mourre_core::random::{random_hermitian, random_unitary, rng};
use mourre_core::spectral::{
    mourre_constant_koopman, mourre_from_decomposition, symbol_commutator_check, virial_scan, Arc, BumpFunction,
};
use rand::Rng;
use serde_json::{json, Value};

use crate::config::{Builder, ExperimentConfig, GgtConfig, Kind, ModelConfig, ProfileConfig};
use crate::error::{Op, RunError};
use crate::report::{int, num, Check, Outcome, Series};

struct Model {
    u: TruncatedOperator,
    a: TruncatedOperator,
    symbol: Option<ConstantSymbol>,
    seq: Option<VerblunskySeq>,
    koopman: Option<KoopmanModel>,
}

fn ggt_sequence(g: &GgtConfig) -> mourre_core::Result<VerblunskySeq> {
    let [re, im] = g.alpha();
    let profile = match &g.profile {
        ProfileConfig::Constant => Profile::Constant,
        ProfileConfig::Power { beta, c } => Profile::Power { beta: *beta, c: *c },
        ProfileConfig::Compact { support, values } => Profile::Compact { support: support.clone(), values: values.clone() },
    };
    verblunsky_profile(c64::new(re, im), &profile)
}

fn build_ggt(g: &GgtConfig, n: usize) -> Result<Model, RunError> {
    let win = IndexWindow::centered(n);
    let seq = ggt_sequence(g)
        .and_then(|s| s.pinned_around(win, c64::new(g.pin[0], g.pin[1])))
        .op("verblunsky_profile")?;
    let u = match g.builder {
        Builder::Closed => ggt_build_closed(&seq, win).op("ggt_build_closed")?,
        Builder::Series => ggt_build_series(&seq, win, DEFAULT_TAIL_TOL).op("ggt_build_series")?,
    };
    let a_val = g.a_value();
    let [re, im] = g.alpha();
    let symbol = if matches!(g.profile, ProfileConfig::Constant) && im == 0.0 && re > 0.0 {
        Some(constant_symbol(a_val).op("constant_symbol")?)
    } else {
        None
    };
    Ok(Model { u, a: conjugate_b_a(a_val, win), symbol, seq: Some(seq), koopman: None })
}

fn build(cfg: &ExperimentConfig) -> Result<Option<Model>, RunError> {
    let Some(m) = &cfg.model else { return Ok(None) };
    let model = match m {
        ModelConfig::Koopman(k) => {
            let km = koopman_build(k.l, k.n_max, k.cap).op("koopman_build")?;
            Model { u: km.unitary_closure(), a: km.a(), symbol: None, seq: None, koopman: Some(km) }
        }
        ModelConfig::Ggt(g) => build_ggt(g, g.n)?,
        ModelConfig::Random(r) => {
            let mut g = rng(cfg.seed);
            let u = random_unitary(r.dim, &mut g);
            let mut a = random_hermitian(r.dim, &mut g);
            if r.normalize {
                a = a.scale_re(1.0 / op_norm(&a));
            }
            Model { u, a, symbol: None, seq: None, koopman: None }
        }
    };
    Ok(Some(model))
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let model = build(cfg)?;
    let mut out = Outcome { dimension: model.as_ref().map_or(0, |m| m.u.dim()), ..Default::default() };
    if let Some(ModelConfig::Koopman(k)) = &cfg.model {
        let (minus, plus) = e0_perp(k.p).op("e0_perp")?;
        out.put("e0_perp", json!([minus, plus]));
    }
    match (cfg.kind, model) {
        (Kind::IdentitySuite, _) => identity_suite(cfg, &mut out)?,
        (Kind::MourreScan, Some(m)) => mourre_scan(cfg, &m, &mut out)?,
        (Kind::LapScan, Some(m)) => lap_scan(cfg, &m, &mut out)?,
        (Kind::VirialScan, Some(m)) => {
            let scan = virial_scan(&m.u, &m.a).op("virial_scan")?;
            let mut s = Series::new("virial", &["phase (rad)", "virial (dimensionless)", "collar_weight (dimensionless)"]);
            for i in 0..scan.phases.len() {
                s.push(vec![num(scan.phases[i]), num(scan.values[i]), num(scan.localization[i])]);
            }
            out.put("max_abs_virial", scan.max_abs_value());
            out.checks.push(Check::at_most("max |virial|", scan.max_abs_value(), cfg.numeric.tolerances.virial));
            out.series.push(s);
        }
        (Kind::CorrelationDecay, Some(m)) => correlation_decay(cfg, &m, &mut out)?,
        (Kind::RegularityScan, Some(m)) => regularity_scan(cfg, &m, &mut out)?,
        (_, None) => unreachable!("validated configs carry a model"),
    }
    Ok(out)
}

fn mourre_scan(cfg: &ExperimentConfig, m: &Model, out: &mut Outcome) -> Result<(), RunError> {
    let n = &cfg.numeric;
    let mut s = Series::new(
        "mourre",
        &[
            "arc_center (rad)",
            "arc_half_width (rad)",
            "rank (count)",
            "c_strict (dimensionless)",
            "c_filtered (dimensionless)",
            "min_j_prediction (dimensionless)",
        ],
    );
    let dec = if m.koopman.is_none() { Some(unitary_eig(&m.u).op("unitary_eig")?) } else { None };
    let mut rows = Vec::new();
    for spec in &n.arcs {
        let arc = Arc::centered(spec.center, spec.half_width).op("arc")?;
        let label = format!("arc {:.4} ± {:.4}", spec.center.rem_euclid(TAU), spec.half_width);
        let rep = match (&m.koopman, &dec) {
            (Some(km), _) => mourre_constant_koopman(km, &arc).op("mourre_constant_koopman")?,
            (None, Some(d)) => {
                let r = mourre_from_decomposition(d, &m.u, &m.a, &arc, n.boundary_filter).op("mourre_constant")?;
                match &m.symbol {
                    Some(sym) => r.with_symbol(sym),
                    None => r,
                }
            }
            (None, None) => unreachable!(),
        };
        let cf = rep.c_filtered.unwrap_or(f64::NAN);
        let pred = rep.symbol_prediction.unwrap_or(f64::NAN);
        if m.koopman.is_some() {
            out.checks.push(Check::at_least(format!("c_strict on {label}"), rep.c_strict, 1.0 - 1e-12));
        } else if pred > 0.0 {
            let ratio = n.tolerances.mourre_ratio;
            out.checks.push(Check::at_least(format!("c_filtered / min j_a on {label}"), cf / pred, ratio));
        }
        s.push(vec![
            num(spec.center.rem_euclid(TAU)),
            num(spec.half_width),
            int(rep.rank as i64),
            num(rep.c_strict),
            num(cf),
            num(pred),
        ]);
        rows.push(json!({
            "center": spec.center.rem_euclid(TAU),
            "half_width": spec.half_width,
            "rank": rep.rank,
            "c_strict": finite(rep.c_strict),
            "c_filtered": finite(cf),
            "min_j_prediction": finite(pred),
        }));
    }
    out.put("arcs", rows);
    out.series.push(s);
    Ok(())
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn lap_scan(cfg: &ExperimentConfig, m: &Model, out: &mut Outcome) -> Result<(), RunError> {
    let n = &cfg.numeric;
    let wr = WeightedResolvent::new(&m.u, &m.a, n.s).op("weighted_resolvent")?;
    let deltas = log_grid(n.delta_grid.lo, n.delta_grid.hi, n.delta_grid.points);
    let mut s = Series::new(
        "radial",
        &["delta (dimensionless)", "theta (rad)", "plus_norm (dimensionless)", "minus_norm (dimensionless)"],
    );
    let [plo, phi] = n.plateau_window;
    let mut per_theta = Vec::new();
    for &theta in &n.thetas {
        let theta = theta.rem_euclid(TAU);
        let study = radial_study(&wr, n.j, theta, &deltas).op("radial_study")?;
        for i in 0..deltas.len() {
            s.push(vec![num(deltas[i]), num(theta), num(study.plus[i]), num(study.minus[i])]);
        }
        let spread = study.spread_over(plo, phi);
        out.checks.push(Check::below(
            format!("plateau spread over [{plo:e}, {phi:e}] at θ = {theta:.4}"),
            spread,
            n.tolerances.plateau_spread,
        ));
        per_theta.push(json!({
            "theta": theta,
            "spread": finite(spread),
            "blowup_exponent": study.blowup_exponent,
            "point_spectrum": study.point_spectrum,
            "plateau_floor": study.plateau_floor(phi, n.tolerances.plateau_spread),
        }));
    }
    out.put("thetas", per_theta);
    if let Some(d) = &n.derivative {
        let z = c64::from_polar(d.radius, d.theta);
        let full = derivative_identity_check(&wr, n.j, z, d.h).op("derivative_identity_check")?;
        let half = derivative_identity_check(&wr, n.j, z, d.h / 2.0).op("derivative_identity_check")?;
        let ratio = full.deviation / half.deviation;
        out.put("derivative_deviation", full.deviation);
        out.put("derivative_halving_ratio", ratio);
        out.checks.push(Check::at_most("derivative identity deviation", full.deviation, n.tolerances.derivative));
        out.checks.push(Check::at_least("h-halving ratio", ratio, 3.0));
        out.checks.push(Check::at_most("h-halving ratio", ratio, 5.0));
    }
    out.series.push(s);
    Ok(())
}

fn m_values(cfg: &ExperimentConfig) -> Vec<i64> {
    let [lo, hi] = cfg.numeric.m_range;
    (lo..=hi).step_by(cfg.numeric.m_step as usize).collect()
}

fn record_fit(out: &mut Outcome, fit: mourre_core::Result<DecayFit>) -> f64 {
    match fit {
        Ok(f) => {
            out.put(
                "fit",
                json!({
                    "exponent": f.exponent,
                    "c": f.c,
                    "residual": f.residual,
                    "used": f.used.len(),
                    "floor": f.floor,
                }),
            );
            f.exponent
        }
        Err(e) => {
            out.put("fit_error", e.to_string());
            f64::NAN
        }
    }
}

fn ggt_correlations(g: &GgtConfig, n: usize, cfg: &ExperimentConfig, ms: &[i64]) -> Result<DecaySeries, RunError> {
    let model = build_ggt(g, n)?;
    let dec = unitary_eig(&model.u).op("unitary_eig")?;
    let w = weight_power(&model.a, cfg.numeric.s).op("weight_power")?;
    let b = &cfg.numeric.bump;
    let bump = BumpFunction::centered(b.center, b.plateau_half, b.support_half).op("bump")?;
    let phi: Vec<f64> = dec.phases.iter().map(|&t| bump.eval(t)).collect();
    correlation_norms_eig(&dec, &w, &phi, cfg.numeric.s, ms).op("correlation_norms")
}

fn correlation_decay(cfg: &ExperimentConfig, m: &Model, out: &mut Outcome) -> Result<(), RunError> {
    let n = &cfg.numeric;
    let ms = m_values(cfg);
    let [lo, hi] = n.m_range;
    match (&cfg.model, &m.koopman) {
        (Some(ModelConfig::Koopman(k)), Some(km)) => {
            let mut s = Series::new(
                "correlation",
                &["m (steps)", "c_m (dimensionless)", "oracle (dimensionless)", "ratio (dimensionless)"],
            );
            let mut values = Vec::new();
            let mut dev: f64 = 0.0;
            for &mm in &ms {
                let c = koopman_correlation(km, n.s, mm as usize, Some(1));
                let o = bernoulli_oracle(n.s, mm, k.l).op("bernoulli_oracle")?;
                dev = dev.max((c - o).abs());
                s.push(vec![int(mm), num(c), num(o), num(c / o)]);
                values.push(c);
            }
            let series = DecaySeries { s: n.s, dim: km.dim(), m_grid: ms.clone(), values };
            let exponent = record_fit(out, decay_exponent_fit(&series, lo, hi, None));
            out.put("oracle_deviation", dev);
            out.checks.push(Check::at_most("max |c_m − oracle|", dev, n.tolerances.oracle));
            out.checks.push(Check::at_most("|exponent − s|", (exponent - n.s).abs(), n.tolerances.exponent));
            out.series.push(s);
        }
        (Some(ModelConfig::Ggt(g)), _) => {
            let base = ggt_correlations(g, g.n, cfg, &ms)?;
            let doubled = if n.doubling { Some(ggt_correlations(g, 2 * g.n, cfg, &ms)?) } else { None };
            let mut cols = vec!["m (steps)", "c_m (dimensionless)"];
            if doubled.is_some() {
                cols.push("c_m_doubled (dimensionless)");
            }
            let mut s = Series::new("correlation", &cols);
            for (i, &mm) in ms.iter().enumerate() {
                let mut row = vec![int(mm), num(base.values[i])];
                if let Some(d) = &doubled {
                    row.push(num(d.values[i]));
                }
                s.push(row);
            }
            let exponent = record_fit(out, decay_exponent_fit(&base, lo, hi, doubled.as_ref()));
            let floor = n.tolerances.min_exponent.unwrap_or(n.s - 0.5);
            out.checks.push(Check::at_least("fitted exponent", exponent, floor));
            out.series.push(s);
        }
        _ => unreachable!("validated configs pair correlation-decay with koopman or ggt"),
    }
    Ok(())
}

fn regularity_scan(cfg: &ExperimentConfig, m: &Model, out: &mut Outcome) -> Result<(), RunError> {
    let n = &cfg.numeric;
    let eps = log_grid(n.eps_grid.lo, n.eps_grid.hi, n.eps_grid.points);
    let mut cols = vec!["eps (dimensionless)".to_string()];
    let mut fits = Vec::new();
    for k in 1..=n.k {
        let fit = q_decay_fit(&m.u, &m.a, k, &eps).op("q_decay_fit")?;
        cols.push(format!("q_max_k{k} (dimensionless)"));
        if fit.exact_cancellation {
            let top = fit.q_max.iter().copied().fold(0.0, f64::max);
            out.checks.push(Check::at_most(format!("max ‖Q‖ (k = {k}, exact cancellation)"), top, Q_FLOOR));
        } else {
            let want = (k + 1) as f64 - n.tolerances.slope_margin;
            out.checks.push(Check::at_least(format!("Q slope (k = {k})"), fit.slope, want));
        }
        fits.push(json!({
            "k": k,
            "slope": fit.slope,
            "residual": fit.residual,
            "exact_cancellation": fit.exact_cancellation,
        }));
        out.results.insert("q_fits".into(), Value::Array(fits.clone()));
        let qs = fit.q_max;
        if out.series.is_empty() {
            let mut s = Series::new("q_decay", &[]);
            s.rows = eps.iter().map(|&e| vec![num(e)]).collect();
            out.series.push(s);
        }
        for (row, q) in out.series[0].rows.iter_mut().zip(qs) {
            row.push(num(q));
        }
    }
    out.series[0].columns = cols;
    if let Some(delta) = m.seq.as_ref().and_then(|s| s.delta()) {
        let hw = n.seminorm_half_width;
        let rep = seminorm(delta, n.seminorm_order, IndexWindow::new(-hw, hw)).op("seminorm")?;
        let mut s = Series::new("seminorms", &["order (count)", "p_mm (dimensionless)", "edge_growth (flag)"]);
        for (i, v) in rep.values.iter().enumerate() {
            s.push(vec![int(i as i64), num(*v), int(rep.edge_growth[i] as i64)]);
        }
        out.put("seminorm_q", rep.q);
        out.put("seminorm_converged", rep.converged());
        out.series.push(s);
    }
    Ok(())
}

fn identity_suite(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<(), RunError> {
    let n = &cfg.numeric;
    let win = IndexWindow::centered(n.band_width);
    let mut r = rng(cfg.seed);
    let z = c64::new(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
    let pos = BandOperator::position().materialize(win);
    let mut s = Series::new(
        "band_identities",
        &["pair (index)", "identity (label)", "n (offset)", "m (offset)", "deviation (dimensionless)"],
    );
    let mut worst: f64 = 0.0;
    let pairs = n.sequences.div_ceil(2);
    for p in 0..pairs {
        let base = cfg.seed.wrapping_mul(1_000_003).wrapping_add(2 * p as u64);
        let (al, be) = (DiagSeq::hashed(base), DiagSeq::hashed(base + 1));
        let mut record = |label: &str, nn: i64, mm: i64, d: f64| {
            worst = worst.max(d);
            s.push(vec![int(p as i64), label.to_string(), int(nn), int(mm), num(d)]);
        };
        for m in [-3i64, -2, -1, 1, 2, 3] {
            let j = BandOperator::j_op(m, &al, &be);
            let mat = pos.commutator(&j.materialize(win)).op("commutator")?;
            let sym = j.ad_a().materialize(win);
            let interior = win.shrink(m.unsigned_abs() as usize).expect("band width exceeds offsets");
            record("ad_A J_m", 0, m, mat.max_deviation_on(&sym, interior));
        }
        for nn in [-2i64, -1, 1, 2] {
            let g = conjugate_generator(z, nn).materialize(win);
            let d = BandOperator::diag(al.clone());
            let mat = g.commutator(&d.materialize(win)).op("commutator")?;
            let closed = ad_conjugate_diag_closed(z, nn, &al).materialize(win);
            record("ad_gen D_alpha", nn, 0, mat.max_deviation_on(&closed, win.shrink(nn.unsigned_abs() as usize).unwrap()));
            for (label, mm) in [("ad_gen J_m (n = -m)", -nn), ("ad_gen J_m (n = m)", nn), ("ad_gen J_m (generic)", nn + 1)] {
                let j = BandOperator::j_op(mm, &al, &be);
                let mat = g.commutator(&j.materialize(win)).op("commutator")?;
                let closed = ad_conjugate_j_closed(z, nn, mm, &al, &be).materialize(win);
                let margin = (nn.abs() + mm.abs()) as usize;
                record(label, nn, mm, mat.max_deviation_on(&closed, win.shrink(margin).unwrap()));
            }
        }
    }
    out.put("max_band_deviation", worst);
    out.checks.push(Check::at_most("max band identity deviation", worst, n.tolerances.identity));
    let sym = symbol_commutator_check(n.symbol_a, IndexWindow::centered(n.symbol_n)).op("symbol_commutator_check")?;
    out.put("symbol_deviation", sym.interior_deviation);
    out.put("symbol_min_eigenvalue", sym.interior_min_eigenvalue);
    out.checks.push(Check::at_most("symbol commutator deviation", sym.interior_deviation, n.tolerances.symbol));
    out.checks.push(Check::at_least("symbol form minimum", sym.interior_min_eigenvalue, -n.tolerances.symbol));
    out.dimension = n.symbol_n;
    out.series.push(s);
    Ok(())
}
