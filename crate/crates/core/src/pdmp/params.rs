use serde::{Deserialize, Serialize};

use super::state::{Mode, Treatment};
use crate::error::ConfigError;

/// Nonnegative piecewise-linear function of the time since the last jump,
/// constant before the first knot and after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, ConfigError> {
        if knots.is_empty() {
            return Err(ConfigError::invalid("risk curve needs at least one knot"));
        }
        for &(u, v) in &knots {
            if !u.is_finite() || !v.is_finite() || v < 0.0 {
                return Err(ConfigError::invalid(format!(
                    "risk knot ({u}, {v}) must be finite and nonnegative"
                )));
            }
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ConfigError::invalid(
                    "risk knots must have strictly increasing abscissae",
                ));
            }
            if w[1].1 < w[0].1 {
                return Err(ConfigError::invalid(
                    "risk curve must be nondecreasing on each piece",
                ));
            }
        }
        Ok(Self { knots })
    }

    pub fn zero() -> Self {
        Self {
            knots: vec![(0.0, 0.0)],
        }
    }

    pub fn constant(rate: f64) -> Self {
        Self {
            knots: vec![(0.0, rate)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn is_zero(&self) -> bool {
        self.knots.iter().all(|&(_, v)| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            knots: self.knots.iter().map(|&(u, v)| (u, v * factor)).collect(),
        }
    }

    /// Pointwise sum, exact since both operands are piecewise linear.
    pub fn sum(&self, other: &Self) -> Self {
        let mut abscissae: Vec<f64> = self.knots.iter().chain(&other.knots).map(|k| k.0).collect();
        abscissae.sort_by(f64::total_cmp);
        abscissae.dedup();
        let knots = abscissae
            .into_iter()
            .map(|u| (u, self.value(u) + other.value(u)))
            .collect();
        Self { knots }
    }

    pub fn value(&self, u: f64) -> f64 {
        let first = self.knots[0];
        if u <= first.0 {
            return first.1;
        }
        let last = self.knots[self.knots.len() - 1];
        if u >= last.0 {
            return last.1;
        }
        let i = self.knots.partition_point(|k| k.0 <= u);
        let (u0, v0) = self.knots[i - 1];
        let (u1, v1) = self.knots[i];
        v0 + (v1 - v0) * (u - u0) / (u1 - u0)
    }

    /// End of the linear piece containing `u` (the next knot strictly after it).
    fn piece_end(&self, u: f64) -> Option<f64> {
        let i = self.knots.partition_point(|k| k.0 <= u);
        self.knots.get(i).map(|k| k.0)
    }

    /// `∫ value` over `[from, to]`.
    pub fn integral(&self, from: f64, to: f64) -> f64 {
        let mut x = from;
        let mut total = 0.0;
        while x < to {
            let end = self.piece_end(x).map_or(to, |e| e.min(to));
            total += 0.5 * (self.value(x) + self.value(end)) * (end - x);
            x = end;
        }
        total
    }

    /// Smallest `τ ≥ 0` with `∫_from^{from+τ} value = amount`, or `None` when the
    /// integral stays below `amount` forever.
    pub fn time_to_accumulate(&self, from: f64, amount: f64) -> Option<f64> {
        if amount <= 0.0 {
            return Some(0.0);
        }
        let mut x = from;
        let mut remaining = amount;
        loop {
            let a = self.value(x);
            match self.piece_end(x) {
                Some(end) => {
                    let b = (self.value(end) - a) / (end - x);
                    let area = 0.5 * (a + self.value(end)) * (end - x);
                    if area >= remaining {
                        return Some(x - from + solve_linear_area(a, b, remaining));
                    }
                    remaining -= area;
                    x = end;
                }
                None => {
                    if a <= 0.0 {
                        return None;
                    }
                    return Some(x - from + remaining / a);
                }
            }
        }
    }
}

/// Solves `a·τ + b·τ²/2 = area` for the smallest nonnegative root.
fn solve_linear_area(a: f64, b: f64, area: f64) -> f64 {
    if b == 0.0 {
        return area / a;
    }
    let disc = (a * a + 2.0 * b * area).max(0.0);
    let denom = a + disc.sqrt();
    if denom <= 0.0 {
        0.0
    } else {
        2.0 * area / denom
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = ConfigError;
    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(knots)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(p: PiecewiseLinear) -> Self {
        p.knots
    }
}

/// Exponential flow slopes per (disease, treatment). Treated slopes are stored
/// as positive efficiencies and enter the flow with a minus sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Slopes {
    pub disease1_untreated: f64,
    pub disease2_untreated: f64,
    pub disease1_efficiency_a: f64,
    pub disease2_efficiency_b: f64,
    pub disease1_under_b: f64,
    pub disease2_under_a: f64,
}

impl Default for Slopes {
    fn default() -> Self {
        Self {
            disease1_untreated: 0.02,
            disease2_untreated: 0.006,
            disease1_efficiency_a: 0.077,
            disease2_efficiency_b: 0.025,
            disease1_under_b: 0.01,
            disease2_under_a: 0.003,
        }
    }
}

impl Slopes {
    /// Signed slope `v_m^ℓ` of the marker flow.
    pub fn slope(&self, mode: Mode, treatment: Treatment) -> f64 {
        match (mode, treatment) {
            (Mode::Disease1, Treatment::None) => self.disease1_untreated,
            (Mode::Disease1, Treatment::A) => -self.disease1_efficiency_a,
            (Mode::Disease1, Treatment::B) => self.disease1_under_b,
            (Mode::Disease2, Treatment::None) => self.disease2_untreated,
            (Mode::Disease2, Treatment::A) => self.disease2_under_a,
            (Mode::Disease2, Treatment::B) => -self.disease2_efficiency_b,
            (Mode::Remission | Mode::Death, _) => 0.0,
        }
    }
}

/// Weibull-type therapeutic escape risk `μ'(ζ) = (scale·ζ)^shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeRisk {
    pub shape: f64,
    pub scale: f64,
}

impl Default for EscapeRisk {
    fn default() -> Self {
        Self {
            shape: -0.8,
            scale: 1000.0,
        }
    }
}

impl EscapeRisk {
    pub fn rate(&self, marker: f64) -> f64 {
        (self.scale * marker).powf(self.shape)
    }
}

/// Default breakpoints of the standard-relapse risk, in days.
pub const RELAPSE_RISE_END: f64 = 365.0;
pub const RELAPSE_PLATEAU_END: f64 = 1460.0;
pub const RELAPSE_LATE_END: f64 = 2190.0;
/// Fraction of first relapses going to disease 1.
pub const DISEASE1_SHARE: f64 = 0.22;
/// Probability of no relapse before the horizon under the default curves.
pub const NEVER_RELAPSE_FRACTION: f64 = 0.20;

/// Total standard-relapse risk shape: linear rise to `h` at 365 d, plateau
/// until 1460 d, linear rise to `2h` at 2190 d, then constant. `h` is chosen
/// so the integrated risk over the horizon equals `-ln(0.2)`.
pub fn default_relapse_total(horizon: f64) -> PiecewiseLinear {
    let unit = PiecewiseLinear {
        knots: vec![
            (0.0, 0.0),
            (RELAPSE_RISE_END, 1.0),
            (RELAPSE_PLATEAU_END, 1.0),
            (RELAPSE_LATE_END, 2.0),
        ],
    };
    let height = -NEVER_RELAPSE_FRACTION.ln() / unit.integral(0.0, horizon);
    unit.scaled(height)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Nominal marker level ζ0.
    pub nominal_level: f64,
    /// Death level D.
    pub death_level: f64,
    /// Observation noise variance σ². Zero gives noiseless readings.
    pub noise_variance: f64,
    /// Study horizon H in days.
    pub horizon: f64,
    pub slopes: Slopes,
    /// Standard relapse risk μ1 towards disease 1, as `(u, rate)` knots.
    pub relapse1: PiecewiseLinear,
    /// Standard relapse risk μ2 towards disease 2.
    pub relapse2: PiecewiseLinear,
    /// Therapeutic escape risk; `null` disables escapes.
    pub escape: Option<EscapeRisk>,
}

pub const DEFAULT_HORIZON: f64 = 2400.0;

impl Default for ModelParams {
    fn default() -> Self {
        let total = default_relapse_total(DEFAULT_HORIZON);
        Self {
            nominal_level: 1.0,
            death_level: 40.0,
            noise_variance: 1.0,
            horizon: DEFAULT_HORIZON,
            slopes: Slopes::default(),
            relapse1: total.scaled(DISEASE1_SHARE),
            relapse2: total.scaled(1.0 - DISEASE1_SHARE),
            escape: Some(EscapeRisk::default()),
        }
    }
}

impl ModelParams {
    /// Same model with every random jump switched off (λ ≡ 0). Boundary
    /// jumps at ζ0 and D still happen.
    pub fn without_risk(mut self) -> Self {
        self.relapse1 = PiecewiseLinear::zero();
        self.relapse2 = PiecewiseLinear::zero();
        self.escape = None;
        self
    }

    pub fn with_noise_variance(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.nominal_level > 0.0
            && self.nominal_level < self.death_level
            && self.death_level.is_finite())
        {
            return Err(ConfigError::invalid(
                "need 0 < nominal_level < death_level < inf",
            ));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(ConfigError::invalid(
                "noise_variance must be finite and nonnegative",
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid("horizon must be positive"));
        }
        let s = &self.slopes;
        let all = [
            s.disease1_untreated,
            s.disease2_untreated,
            s.disease1_efficiency_a,
            s.disease2_efficiency_b,
            s.disease1_under_b,
            s.disease2_under_a,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::invalid("flow slopes must be finite"));
        }
        if let Some(e) = &self.escape {
            if !(e.shape > -1.0 && e.shape < 0.0) {
                return Err(ConfigError::invalid("escape shape must lie in (-1, 0)"));
            }
            if !(e.scale > 0.0 && e.scale.is_finite()) {
                return Err(ConfigError::invalid("escape scale must be positive"));
            }
        }
        // Re-run knot validation for values built in code.
        PiecewiseLinear::new(self.relapse1.knots.clone())?;
        PiecewiseLinear::new(self.relapse2.knots.clone())?;
        Ok(())
    }
}

/// Weights of the per-visit cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    /// C_V, paid at every visit.
    pub visit: f64,
    /// κ, per day and per unit of marker above nominal.
    pub marker: f64,
    /// β, per day of treatment given at the nominal level.
    pub overtreatment: f64,
    /// M, paid once at death.
    pub death: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            visit: 1.0,
            marker: 1.0 / 6.0,
            overtreatment: 0.1,
            death: 110.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [self.visit, self.marker, self.overtreatment, self.death];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ConfigError::invalid(
                "cost weights must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}
