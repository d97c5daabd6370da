use serde::Serialize;

use crate::config::{Kind, NumericConfig};

#[derive(Debug, Serialize)]
pub struct Param {
    pub name: &'static str,
    pub default: String,
    pub range: &'static str,
    pub meaning: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Entry {
    pub kind: &'static str,
    pub summary: &'static str,
    pub models: &'static [&'static str],
    pub params: Vec<Param>,
}

fn p(name: &'static str, default: String, range: &'static str, meaning: &'static str) -> Param {
    Param { name, default, range, meaning }
}

pub fn catalog() -> Vec<Entry> {
    let d = NumericConfig::default();
    let t = &d.tolerances;
    let grid = |g: &crate::config::GridSpec| format!("{{lo = {:e}, hi = {:e}, points = {}}}", g.lo, g.hi, g.points);
    Kind::ALL
        .iter()
        .map(|&kind| {
            let (summary, params) = match kind {
                Kind::MourreScan => (
                    "Positivity of U*AU − A compressed to spectral arcs",
                    vec![
                        p("arcs", format!("[{{center = {:.6}, half_width = 0.6}}]", std::f64::consts::PI), "half_width in (0, π]", "arcs of the circle, radians"),
                        p("boundary_filter", d.boundary_filter.to_string(), "[0, 1)", "collar weight above which eigenvectors are discarded"),
                        p("tolerances.mourre_ratio", t.mourre_ratio.to_string(), "≥ 0", "required c_filtered / min j_a"),
                    ],
                ),
                Kind::LapScan => (
                    "Weighted resolvent norms along radial approach to the circle",
                    vec![
                        p("s", d.s.to_string(), "(0, 10]", "weight exponent"),
                        p("j", d.j.to_string(), "[1, 8]", "resolvent power"),
                        p("thetas", "[π]".into(), "radians", "arguments of the radial rays"),
                        p("delta_grid", grid(&d.delta_grid), "0 < lo < hi ≤ 0.5, points ≥ 3", "log grid of 1 − |z|"),
                        p("plateau_window", format!("{:?}", d.plateau_window), "0 < lo < hi", "δ range of the plateau check"),
                        p("derivative", "{radius = 0.99, theta = 0, h = 1e-4}".into(), "radius ≠ 1, h in (0, 0.1)", "θ-derivative identity sample"),
                        p("tolerances.plateau_spread", t.plateau_spread.to_string(), "≥ 0", "max relative spread"),
                        p("tolerances.derivative", t.derivative.to_string(), "≥ 0", "max relative deviation"),
                    ],
                ),
                Kind::VirialScan => (
                    "Commutator form on every eigenvector of U",
                    vec![p("tolerances.virial", t.virial.to_string(), "≥ 0", "max |⟨φ, (U*AU − A)φ⟩|")],
                ),
                Kind::CorrelationDecay => (
                    "Decay of ‖⟨A⟩^{-s}U^mΦ(U)⟨A⟩^{-s}‖ and its power-law fit",
                    vec![
                        p("s", d.s.to_string(), "(0, 10]", "weight exponent"),
                        p("m_range", format!("{:?}", d.m_range), "0 ≤ lo ≤ hi", "fit window in steps"),
                        p("m_step", d.m_step.to_string(), "≥ 1", "grid stride"),
                        p("bump", "{center = π, plateau_half = 0.9, support_half = 1.4}".into(), "0 < plateau < support < π", "observable Φ (GGT only)"),
                        p("doubling", d.doubling.to_string(), "bool", "rerun at 2N to exclude the truncation floor"),
                        p("tolerances.exponent", t.exponent.to_string(), "≥ 0", "allowed |exponent − s| (Koopman)"),
                        p("tolerances.min_exponent", "s − 0.5".into(), "real", "lower bound on the exponent (GGT)"),
                    ],
                ),
                Kind::RegularityScan => (
                    "Decay of the Q± operators in ε and seminorms of the perturbation",
                    vec![
                        p("k", d.k.to_string(), "[1, 3]", "highest regularity order"),
                        p("eps_grid", grid(&d.eps_grid), "0 < lo < hi ≤ 0.5, points ≥ 3", "log grid of ε"),
                        p("seminorm_order", d.seminorm_order.to_string(), "[0, 6]", "highest p_{m,m} (GGT only)"),
                        p("seminorm_half_width", d.seminorm_half_width.to_string(), "≥ 10", "window [−w, w] for seminorms"),
                        p("tolerances.slope_margin", t.slope_margin.to_string(), "≥ 0", "allowed shortfall below slope k + 1"),
                    ],
                ),
                Kind::IdentitySuite => (
                    "Band-operator commutator identities and the B_a symbol check",
                    vec![
                        p("sequences", d.sequences.to_string(), "≥ 1", "random bounded sequences (used in pairs)"),
                        p("band_width", d.band_width.to_string(), "≥ 20", "window width"),
                        p("symbol_a", d.symbol_a.to_string(), "> 1", "constant model parameter"),
                        p("symbol_n", d.symbol_n.to_string(), "≥ 50", "dimension of the symbol check"),
                        p("tolerances.identity", t.identity.to_string(), "≥ 0", "max interior deviation"),
                        p("tolerances.symbol", t.symbol.to_string(), "≥ 0", "max symbol deviation"),
                    ],
                ),
            };
            Entry { kind: kind.name(), summary, models: kind.models(), params }
        })
        .collect()
}

pub fn render_text(entries: &[Entry]) -> String {
    let mut s = String::from("Experiment kinds (parameters live under [numeric]; models under [model] with type = ...)\n");
    s.push_str("Models: koopman {l ≥ 1, n_max ≥ 1, p in (0,1), cap}; ggt {a > 1 | alpha_inf, profile, n in [20, 5000], pin, builder}; random {dim in [2, 2000], normalize}\n");
    for e in entries {
        s.push_str(&format!("\n{}\n  {}\n", e.kind, e.summary));
        let models = if e.models.is_empty() { "none".to_string() } else { e.models.join(", ") };
        s.push_str(&format!("  models: {models}\n"));
        for p in &e.params {
            s.push_str(&format!("  {:<28} default {:<44} range {:<32} {}\n", p.name, p.default, p.range, p.meaning));
        }
    }
    s
}
