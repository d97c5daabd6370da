use std::f64::consts::PI;
use std::path::Path;

use mourre_core::models::DEFAULT_BASIS_CAP;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    MourreScan,
    LapScan,
    VirialScan,
    CorrelationDecay,
    RegularityScan,
    IdentitySuite,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::MourreScan,
        Kind::LapScan,
        Kind::VirialScan,
        Kind::CorrelationDecay,
        Kind::RegularityScan,
        Kind::IdentitySuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::MourreScan => "mourre-scan",
            Kind::LapScan => "lap-scan",
            Kind::VirialScan => "virial-scan",
            Kind::CorrelationDecay => "correlation-decay",
            Kind::RegularityScan => "regularity-scan",
            Kind::IdentitySuite => "identity-suite",
        }
    }

    /// Model families the kind accepts; empty means no model is needed.
    pub fn models(self) -> &'static [&'static str] {
        match self {
            Kind::CorrelationDecay => &["koopman", "ggt"],
            Kind::IdentitySuite => &[],
            _ => &["koopman", "ggt", "random"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelConfig {
    Koopman(KoopmanConfig),
    Ggt(GgtConfig),
    Random(RandomConfig),
}

impl ModelConfig {
    pub fn family(&self) -> &'static str {
        match self {
            ModelConfig::Koopman(_) => "koopman",
            ModelConfig::Ggt(_) => "ggt",
            ModelConfig::Random(_) => "random",
        }
    }
}

/// Bernoulli shift on `[−L, L]`, Fourier–Walsh levels up to `n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KoopmanConfig {
    pub l: i64,
    pub n_max: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_p() -> f64 {
    0.5
}

fn default_cap() -> usize {
    DEFAULT_BASIS_CAP
}

/// Pinned GGT block of `n` sites; give exactly one of `a` or `alpha_inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GgtConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_inf: Option<[f64; 2]>,
    #[serde(default)]
    pub profile: ProfileConfig,
    pub n: usize,
    /// Unimodular value placed on the two cut sites.
    #[serde(default = "default_pin")]
    pub pin: [f64; 2],
    #[serde(default)]
    pub builder: Builder,
}

fn default_pin() -> [f64; 2] {
    [1.0, 0.0]
}

impl GgtConfig {
    pub fn alpha(&self) -> [f64; 2] {
        match (self.a, self.alpha_inf) {
            (Some(a), _) => [(1.0 - 1.0 / (a * a)).sqrt(), 0.0],
            (None, Some(al)) => al,
            (None, None) => [0.0, 0.0],
        }
    }

    /// `a = (1 − |α_∞|²)^{-1/2}`.
    pub fn a_value(&self) -> f64 {
        let [re, im] = self.alpha();
        self.a.unwrap_or_else(|| (1.0 - re * re - im * im).powf(-0.5))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builder {
    #[default]
    Closed,
    Series,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    #[default]
    Constant,
    Power {
        beta: f64,
        c: f64,
    },
    Compact {
        support: Vec<i64>,
        values: Vec<f64>,
    },
}

/// Haar unitary and GUE Hermitian of size `dim` drawn from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConfig {
    pub dim: usize,
    /// Rescale `A` to unit norm.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSpec {
    pub center: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: f64,
    pub plateau_half: f64,
    pub support_half: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeSpec {
    pub radius: f64,
    pub theta: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericConfig {
    /// Weight exponent in `⟨A⟩^{-s}`.
    pub s: f64,
    /// Resolvent power.
    pub j: usize,
    /// Highest regularity order for regularity-scan.
    pub k: usize,
    pub arcs: Vec<ArcSpec>,
    pub boundary_filter: f64,
    pub thetas: Vec<f64>,
    pub delta_grid: GridSpec,
    pub plateau_window: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivative: Option<DerivativeSpec>,
    pub eps_grid: GridSpec,
    pub m_range: [i64; 2],
    pub m_step: i64,
    pub bump: BumpSpec,
    /// Rerun at twice the dimension to locate the truncation floor.
    pub doubling: bool,
    pub seminorm_order: usize,
    pub seminorm_half_width: i64,
    pub sequences: usize,
    pub band_width: usize,
    pub symbol_a: f64,
    pub symbol_n: usize,
    pub tolerances: Tolerances,
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig {
            s: 1.0,
            j: 1,
            k: 2,
            arcs: vec![ArcSpec { center: PI, half_width: 0.6 }],
            boundary_filter: mourre_core::spectral::DEFAULT_BOUNDARY_FILTER,
            thetas: vec![PI],
            delta_grid: GridSpec { lo: 1e-4, hi: 1e-2, points: 7 },
            plateau_window: [1e-3, 1e-2],
            derivative: Some(DerivativeSpec { radius: 0.99, theta: 0.0, h: 1e-4 }),
            eps_grid: GridSpec { lo: 1e-3, hi: 1e-1, points: 9 },
            m_range: [20, 200],
            m_step: 1,
            bump: BumpSpec { center: PI, plateau_half: 0.9, support_half: 1.4 },
            doubling: true,
            seminorm_order: 2,
            seminorm_half_width: 10_000,
            sequences: 20,
            band_width: 100,
            symbol_a: 1.25,
            symbol_n: 400,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub identity: f64,
    pub symbol: f64,
    pub virial: f64,
    pub plateau_spread: f64,
    pub derivative: f64,
    pub oracle: f64,
    /// Allowed `|exponent − s|` against the Bernoulli oracle.
    pub exponent: f64,
    /// Lower bound on the fitted GGT exponent; `s − 1/2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_exponent: Option<f64>,
    /// Required `c_filtered / min j_a`.
    pub mourre_ratio: f64,
    /// Allowed shortfall of the `Q^±` slope below `k + 1`.
    pub slope_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-12,
            symbol: 1e-6,
            virial: 1e-9,
            plateau_spread: 0.1,
            derivative: 1e-6,
            oracle: 1e-12,
            exponent: 0.05,
            min_exponent: None,
            mourre_ratio: 0.5,
            slope_margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "results".into() }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.display().to_string(), e))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |what: &str| Err(ConfigError::Invalid(what.to_string()));
        let allowed = self.kind.models();
        match &self.model {
            None if !allowed.is_empty() => return bad(&format!("{} needs a [model] block", self.kind.name())),
            Some(m) if !allowed.contains(&m.family()) => {
                return bad(&format!("{} does not accept a {} model", self.kind.name(), m.family()))
            }
            _ => {}
        }
        if let Some(m) = &self.model {
            validate_model(m)?;
        }
        let n = &self.numeric;
        if !(n.s > 0.0 && n.s <= 10.0) {
            return bad("numeric.s must lie in (0, 10]");
        }
        if n.j < 1 || n.j > 8 {
            return bad("numeric.j must lie in [1, 8]");
        }
        if n.k < 1 || n.k > 3 {
            return bad("numeric.k must lie in [1, 3]");
        }
        if n.arcs.is_empty() || n.arcs.iter().any(|a| !(a.half_width > 0.0 && a.half_width <= PI)) {
            return bad("numeric.arcs needs at least one arc with half_width in (0, π]");
        }
        if !(0.0..1.0).contains(&n.boundary_filter) {
            return bad("numeric.boundary_filter must lie in [0, 1)");
        }
        if n.thetas.is_empty() {
            return bad("numeric.thetas must not be empty");
        }
        check_grid(&n.delta_grid, 0.5, "numeric.delta_grid")?;
        if !(n.plateau_window[0] > 0.0 && n.plateau_window[0] < n.plateau_window[1]) {
            return bad("numeric.plateau_window must be [lo, hi] with 0 < lo < hi");
        }
        if let Some(d) = &n.derivative {
            if !(d.radius > 0.0 && (d.radius - 1.0).abs() > 1e-9 && d.h > 0.0 && d.h < 0.1) {
                return bad("numeric.derivative needs radius > 0, radius ≠ 1 and h in (0, 0.1)");
            }
        }
        check_grid(&n.eps_grid, 0.5, "numeric.eps_grid")?;
        if !(n.m_range[0] >= 0 && n.m_range[0] <= n.m_range[1] && n.m_step >= 1) {
            return bad("numeric.m_range must be [lo, hi] with 0 ≤ lo ≤ hi and m_step ≥ 1");
        }
        let b = &n.bump;
        if !(b.plateau_half > 0.0 && b.plateau_half < b.support_half && b.support_half < PI) {
            return bad("numeric.bump needs 0 < plateau_half < support_half < π");
        }
        if n.seminorm_order > 6 || n.seminorm_half_width < 10 {
            return bad("numeric.seminorm_order must be ≤ 6 and seminorm_half_width ≥ 10");
        }
        if n.sequences < 1 || n.band_width < 20 {
            return bad("numeric.sequences must be ≥ 1 and band_width ≥ 20");
        }
        if !(n.symbol_a > 1.0) || n.symbol_n < 50 {
            return bad("numeric.symbol_a must exceed 1 and symbol_n be ≥ 50");
        }
        let t = &n.tolerances;
        let all = [t.identity, t.symbol, t.virial, t.plateau_spread, t.derivative, t.oracle, t.exponent, t.mourre_ratio, t.slope_margin];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("numeric.tolerances must be finite and non-negative");
        }
        if self.output.dir.is_empty() {
            return bad("output.dir must not be empty");
        }
        Ok(())
    }
}

fn check_grid(g: &GridSpec, max: f64, name: &str) -> Result<(), ConfigError> {
    if !(g.lo > 0.0 && g.lo < g.hi && g.hi <= max && g.points >= 3) {
        return Err(ConfigError::Invalid(format!("{name} needs 0 < lo < hi ≤ {max} and at least 3 points")));
    }
    Ok(())
}

fn validate_model(m: &ModelConfig) -> Result<(), ConfigError> {
    let bad = |what: &str| Err(ConfigError::Invalid(what.to_string()));
    match m {
        ModelConfig::Koopman(k) => {
            if k.l < 1 || k.n_max < 1 || !(k.p > 0.0 && k.p < 1.0) || k.cap < 1 {
                return bad("koopman model needs l ≥ 1, n_max ≥ 1, p in (0, 1) and cap ≥ 1");
            }
        }
        ModelConfig::Ggt(g) => {
            match (g.a, g.alpha_inf) {
                (Some(a), None) if a > 1.0 && a.is_finite() => {}
                (None, Some([re, im])) if re * re + im * im < 1.0 && re * re + im * im > 0.0 => {}
                _ => return bad("ggt model needs exactly one of a > 1 or 0 < |alpha_inf| < 1"),
            }
            if g.n < 20 || g.n > 5000 {
                return bad("ggt model needs n in [20, 5000]");
            }
            if ((g.pin[0] * g.pin[0] + g.pin[1] * g.pin[1]).sqrt() - 1.0).abs() > 1e-12 {
                return bad("ggt pin must be unimodular");
            }
            if let ProfileConfig::Compact { support, values } = &g.profile {
                if support.len() != values.len() {
                    return bad("compact profile needs as many values as support sites");
                }
            }
        }
        ModelConfig::Random(r) => {
            if r.dim < 2 || r.dim > 2000 {
                return bad("random model needs dim in [2, 2000]");
            }
        }
    }
    Ok(())
}
