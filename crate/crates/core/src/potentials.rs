//! The three-part potential `q(x) + c·sin(2ωx+δ)/(x+1) + q₁(x)` and its
//! configuration file.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad;

/// ω is declared resonant when `dist(2aω/π, ℤ)` falls below this.
pub const TOL_FREQ: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum PeriodicRepr {
    /// `Σ A_m cos(2πmx/a) + B_m sin(2πmx/a)`; index 0 of `cos` is the constant.
    Fourier { cos: Vec<f64>, sin: Vec<f64> },
    /// Left-continuous steps: `values[i]` on `(nodes[i-1], nodes[i]]`, and
    /// `values[0]` on the wrap-around piece `(nodes[last], a]`.
    Steps { nodes: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential {
    period: f64,
    repr: PeriodicRepr,
    l1_norm_per_period: f64,
}

impl PeriodicPotential {
    pub fn zero(period: f64) -> Result<Self> {
        Self::fourier(period, Vec::new(), Vec::new())
    }

    pub fn fourier(period: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        check_period(period)?;
        if cos.iter().chain(&sin).any(|v| !v.is_finite()) {
            return Err(invalid("periodic.fourier", "non-finite coefficient"));
        }
        let mut p = Self { period, repr: PeriodicRepr::Fourier { cos, sin }, l1_norm_per_period: 0.0 };
        if !p.is_zero() {
            p.l1_norm_per_period = quad::integrate_real(|x| p.eval(x).abs(), 0.0, period, 1e-13, 1e-11)?;
        }
        Ok(p)
    }

    pub fn steps(period: f64, nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_period(period)?;
        if nodes.is_empty() || nodes.len() != values.len() {
            return Err(invalid("periodic.samples", "need equally many x and q entries"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("periodic.samples", "x must be strictly increasing"));
        }
        if nodes[0] < 0.0 || *nodes.last().unwrap() > period {
            return Err(invalid("periodic.samples", "x must lie in [0, a]"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("periodic.samples", "non-finite q"));
        }
        let mut l1 = 0.0;
        let mut prev = 0.0;
        for (x, v) in nodes.iter().zip(&values) {
            l1 += v.abs() * (x - prev);
            prev = *x;
        }
        l1 += values[0].abs() * (period - prev);
        Ok(Self { period, repr: PeriodicRepr::Steps { nodes, values }, l1_norm_per_period: l1 })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn repr(&self) -> &PeriodicRepr {
        &self.repr
    }

    pub fn l1_norm_per_period(&self) -> f64 {
        self.l1_norm_per_period
    }

    pub fn is_zero(&self) -> bool {
        match &self.repr {
            PeriodicRepr::Fourier { cos, sin } => cos.iter().chain(sin).all(|v| *v == 0.0),
            PeriodicRepr::Steps { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = x.rem_euclid(self.period);
        match &self.repr {
            PeriodicRepr::Fourier { cos, sin } => {
                let th = 2.0 * PI * t / self.period;
                let mut s = cos.first().copied().unwrap_or(0.0);
                for (m, a) in cos.iter().enumerate().skip(1) {
                    s += a * (m as f64 * th).cos();
                }
                for (m, b) in sin.iter().enumerate().skip(1) {
                    s += b * (m as f64 * th).sin();
                }
                s
            }
            PeriodicRepr::Steps { nodes, values } => {
                let i = nodes.partition_point(|n| *n < t);
                if i == nodes.len() {
                    values[0]
                } else {
                    values[i]
                }
            }
        }
    }

    /// A lower bound for `q`.
    pub fn lower_bound(&self) -> f64 {
        match &self.repr {
            PeriodicRepr::Fourier { cos, sin } => {
                let c0 = cos.first().copied().unwrap_or(0.0);
                c0 - cos.iter().skip(1).chain(sin.iter().skip(1)).map(|v| v.abs()).sum::<f64>()
            }
            PeriodicRepr::Steps { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Discontinuities of `q` inside `(0, a)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.repr {
            PeriodicRepr::Fourier { .. } => Vec::new(),
            PeriodicRepr::Steps { nodes, .. } => {
                nodes.iter().copied().filter(|x| *x > 0.0 && *x < self.period).collect()
            }
        }
    }

    /// Discontinuities inside `(x0, x1)`, sorted.
    pub fn breakpoints_between(&self, x0: f64, x1: f64) -> Vec<f64> {
        let base = self.breakpoints();
        let mut out = Vec::new();
        let a = self.period;
        if let PeriodicRepr::Steps { .. } = self.repr {
            let m0 = (x0 / a).floor() as i64;
            let m1 = (x1 / a).ceil() as i64;
            for m in m0..=m1 {
                let off = m as f64 * a;
                if off > x0 && off < x1 {
                    out.push(off);
                }
                for b in &base {
                    let p = off + b;
                    if p > x0 && p < x1 {
                        out.push(p);
                    }
                }
            }
            out.sort_by(f64::total_cmp);
        }
        out
    }
}

fn check_period(a: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(invalid("periodic.a", "period must be positive and finite"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WvnTerm {
    pub c: f64,
    pub omega: f64,
    pub delta: f64,
}

impl WvnTerm {
    pub fn new(c: f64, omega: f64, delta: f64) -> Result<Self> {
        if !c.is_finite() || !delta.is_finite() {
            return Err(invalid("wvn", "c and delta must be finite"));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(invalid("wvn.omega", "frequency must be positive"));
        }
        Ok(Self { c, omega, delta })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c * (2.0 * self.omega * x + self.delta).sin() / (x + 1.0)
    }

    /// Reject ω with `2aω/π` within [`TOL_FREQ`] of an integer.
    pub fn check_non_resonant(&self, period: f64) -> Result<()> {
        let ratio = 2.0 * period * self.omega / PI;
        if (ratio - ratio.round()).abs() < TOL_FREQ {
            return Err(Error::ResonantFrequency { ratio, tol: TOL_FREQ });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SummablePerturbation {
    Zero,
    /// Left-continuous steps on `[0, nodes[last]]`, zero beyond.
    Table { nodes: Vec<f64>, values: Vec<f64> },
    /// `amplitude·exp(−rate·x)`.
    Exponential { amplitude: f64, rate: f64 },
}

impl SummablePerturbation {
    pub fn table(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != values.len() {
            return Err(invalid("q1.samples", "need equally many x and q entries"));
        }
        if nodes[0] < 0.0 || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("q1.samples", "x must be nonnegative and strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("q1.samples", "non-finite q"));
        }
        Ok(Self::Table { nodes, values })
    }

    pub fn exponential(amplitude: f64, rate: f64) -> Result<Self> {
        if !amplitude.is_finite() || !(rate.is_finite() && rate > 0.0) {
            return Err(invalid("q1", "exponential envelope needs finite amplitude and rate > 0"));
        }
        Ok(Self::Exponential { amplitude, rate })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Table { nodes, values } => {
                let i = nodes.partition_point(|n| *n < x);
                values.get(i).copied().unwrap_or(0.0)
            }
            Self::Exponential { amplitude, rate } => amplitude * (-rate * x).exp(),
        }
    }

    pub fn l1_bound(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Table { nodes, values } => {
                let mut s = values[0].abs() * nodes[0];
                for i in 1..nodes.len() {
                    s += values[i].abs() * (nodes[i] - nodes[i - 1]);
                }
                s
            }
            Self::Exponential { amplitude, rate } => amplitude.abs() / rate,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Table { values, .. } => values.iter().all(|v| *v == 0.0),
            Self::Exponential { amplitude, .. } => *amplitude == 0.0,
        }
    }

    fn breakpoints_between(&self, x0: f64, x1: f64) -> impl Iterator<Item = f64> + '_ {
        let nodes: &[f64] = match self {
            Self::Table { nodes, .. } => nodes,
            _ => &[],
        };
        nodes.iter().copied().filter(move |x| *x > x0 && *x < x1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub periodic: PeriodicPotential,
    pub wvn: WvnTerm,
    pub q1: SummablePerturbation,
    pub alpha: f64,
}

impl ProblemConfig {
    pub fn new(periodic: PeriodicPotential, wvn: WvnTerm, q1: SummablePerturbation, alpha: f64) -> Result<Self> {
        if !(0.0..PI).contains(&alpha) {
            return Err(invalid("boundary.alpha", "alpha must lie in [0, π)"));
        }
        wvn.check_non_resonant(periodic.period())?;
        Ok(Self { periodic, wvn, q1, alpha })
    }

    /// The free case `q ≡ 0`, `q₁ ≡ 0`.
    pub fn free(a: f64, c: f64, omega: f64, delta: f64, alpha: f64) -> Result<Self> {
        Self::new(PeriodicPotential::zero(a)?, WvnTerm::new(c, omega, delta)?, SummablePerturbation::Zero, alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.periodic.clone(), self.wvn, self.q1.clone(), alpha)
    }

    pub fn period(&self) -> f64 {
        self.periodic.period()
    }

    pub fn evaluate_total(&self, x: f64) -> f64 {
        self.periodic.eval(x) + self.wvn.eval(x) + self.q1.eval(x)
    }

    /// The decaying part `c·sin(2ωx+δ)/(x+1) + q₁(x)`.
    pub fn perturbation(&self, x: f64) -> f64 {
        self.wvn.eval(x) + self.q1.eval(x)
    }

    /// All discontinuities of the total potential inside `(x0, x1)`, sorted.
    pub fn breakpoints_between(&self, x0: f64, x1: f64) -> Vec<f64> {
        let mut out = self.periodic.breakpoints_between(x0, x1);
        out.extend(self.q1.breakpoints_between(x0, x1));
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Discontinuities of the perturbation alone inside `(x0, x1)`.
    pub fn perturbation_breakpoints(&self, x0: f64, x1: f64) -> Vec<f64> {
        self.q1.breakpoints_between(x0, x1).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, path.parent())
    }

    /// Parse the key=value config. Relative sample paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_config(base)
    }

    /// Serialize with all tables inlined, so that `parse(to_toml())` is exact.
    pub fn to_toml(&self) -> String {
        let periodic = match self.periodic.repr() {
            PeriodicRepr::Fourier { cos, sin } => RawPeriodic {
                a: self.period(),
                fourier_cos: cos.clone(),
                fourier_sin: sin.clone(),
                ..Default::default()
            },
            PeriodicRepr::Steps { nodes, values } => RawPeriodic {
                a: self.period(),
                sample_x: Some(nodes.clone()),
                sample_q: Some(values.clone()),
                ..Default::default()
            },
        };
        let q1 = match &self.q1 {
            SummablePerturbation::Zero => RawQ1::default(),
            SummablePerturbation::Table { nodes, values } => RawQ1 {
                kind: "table".into(),
                sample_x: Some(nodes.clone()),
                sample_q: Some(values.clone()),
                ..Default::default()
            },
            SummablePerturbation::Exponential { amplitude, rate } => RawQ1 {
                kind: "exponential".into(),
                amplitude: Some(*amplitude),
                rate: Some(*rate),
                ..Default::default()
            },
        };
        let raw = RawConfig {
            periodic,
            wvn: RawWvn { c: self.wvn.c, omega: self.wvn.omega, delta: self.wvn.delta },
            q1,
            boundary: RawBoundary { alpha: self.alpha },
        };
        toml::to_string(&raw).expect("config serializes")
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    periodic: RawPeriodic,
    wvn: RawWvn,
    #[serde(default)]
    q1: RawQ1,
    #[serde(default)]
    boundary: RawBoundary,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPeriodic {
    a: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    fourier_cos: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    fourier_sin: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_q: Option<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWvn {
    c: f64,
    omega: f64,
    #[serde(default)]
    delta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQ1 {
    #[serde(default = "zero_kind")]
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_q: Option<Vec<f64>>,
}

impl Default for RawQ1 {
    fn default() -> Self {
        Self { kind: zero_kind(), amplitude: None, rate: None, samples: None, sample_x: None, sample_q: None }
    }
}

fn zero_kind() -> String {
    "zero".into()
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    #[serde(default)]
    alpha: f64,
}

fn table_from(
    key: &str,
    path: &Option<String>,
    xs: &Option<Vec<f64>>,
    qs: &Option<Vec<f64>>,
    base: Option<&Path>,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    match (path, xs, qs) {
        (Some(p), None, None) => {
            let full = match base {
                Some(b) if Path::new(p).is_relative() => b.join(p),
                _ => Path::new(p).to_path_buf(),
            };
            read_sample_csv(&full).map(Some)
        }
        (None, Some(x), Some(q)) => Ok(Some((x.clone(), q.clone()))),
        (None, None, None) => Ok(None),
        _ => Err(invalid(key, "give either samples=<path> or both sample_x and sample_q")),
    }
}

/// Read a two-column `x,q` CSV with header.
pub fn read_sample_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let display = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{display}: {e}")))?;
    let mut xs = Vec::new();
    let mut qs = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{display}: {e}")))?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse(format!("{display}: row {} has fewer than 2 columns", line + 2)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{display}: row {}: {e}", line + 2)))
        };
        xs.push(get(0)?);
        qs.push(get(1)?);
    }
    Ok((xs, qs))
}

impl RawConfig {
    fn into_config(self, base: Option<&Path>) -> Result<ProblemConfig> {
        let p = &self.periodic;
        let periodic = match table_from("periodic.samples", &p.samples, &p.sample_x, &p.sample_q, base)? {
            Some((x, q)) => {
                if !p.fourier_cos.is_empty() || !p.fourier_sin.is_empty() {
                    return Err(invalid("periodic", "give either Fourier coefficients or samples, not both"));
                }
                PeriodicPotential::steps(p.a, x, q)?
            }
            None => PeriodicPotential::fourier(p.a, p.fourier_cos.clone(), p.fourier_sin.clone())?,
        };
        let wvn = WvnTerm::new(self.wvn.c, self.wvn.omega, self.wvn.delta)?;
        let q = &self.q1;
        let q1 = match q.kind.as_str() {
            "zero" => SummablePerturbation::Zero,
            "exponential" | "exponential_envelope" => SummablePerturbation::exponential(
                q.amplitude.ok_or_else(|| invalid("q1.amplitude", "missing"))?,
                q.rate.ok_or_else(|| invalid("q1.rate", "missing"))?,
            )?,
            "table" | "compactly_supported_table" => {
                let (x, v) = table_from("q1.samples", &q.samples, &q.sample_x, &q.sample_q, base)?
                    .ok_or_else(|| invalid("q1.samples", "table kind needs samples"))?;
                SummablePerturbation::table(x, v)?
            }
            other => return Err(invalid("q1.kind", format!("unknown kind '{other}'"))),
        };
        ProblemConfig::new(periodic, wvn, q1, self.boundary.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mathieu(c: f64, omega: f64, delta: f64) -> ProblemConfig {
        ProblemConfig::new(
            PeriodicPotential::fourier(2.0 * PI, vec![0.0, 2.0], vec![]).unwrap(),
            WvnTerm::new(c, omega, delta).unwrap(),
            SummablePerturbation::Zero,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn evaluate_total_examples() {
        let zero = ProblemConfig::free(1.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(zero.evaluate_total(5.0), 0.0);
        let wvn = ProblemConfig::free(1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(wvn.evaluate_total(0.0), 0.0);
        // ω = 1 with a = 2π is a resonant frequency, so build the struct directly
        let m = ProblemConfig {
            periodic: PeriodicPotential::fourier(2.0 * PI, vec![0.0, 2.0], vec![]).unwrap(),
            wvn: WvnTerm::new(1.0, 1.0, PI / 2.0).unwrap(),
            q1: SummablePerturbation::Zero,
            alpha: 0.0,
        };
        assert!((m.evaluate_total(0.0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn minimal_config_parses() {
        let text = "[periodic]\na = 1\n[wvn]\nc = 1\nomega = 1\ndelta = 0\n[boundary]\nalpha = 0\n";
        let cfg = ProblemConfig::parse(text, None).unwrap();
        assert!(cfg.periodic.is_zero());
        assert_eq!(cfg.wvn.c, 1.0);
    }

    #[test]
    fn resonant_frequency_rejected() {
        let text = format!("[periodic]\na = 1\n[wvn]\nc = 1\nomega = {}\n", PI / 2.0);
        match ProblemConfig::parse(&text, None) {
            Err(Error::ResonantFrequency { .. }) => {}
            other => panic!("expected resonant frequency error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_key() {
        let err = ProblemConfig::parse("[periodic]\na = 1\n[wvn]\nc = 1\nomegga = 1\n", None).unwrap_err();
        assert!(err.to_string().contains("omegga"), "{err}");
        let err = ProblemConfig::parse("[periodic]\na = -1\n[wvn]\nc = 1\nomega = 1\n", None).unwrap_err();
        assert!(err.to_string().contains("periodic.a"), "{err}");
        let err =
            ProblemConfig::parse("[periodic]\na = 1\n[wvn]\nc = 1\nomega = 1\n[boundary]\nalpha = 4\n", None)
                .unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn sample_table_from_csv() {
        let dir = std::env::temp_dir().join(format!("wvn-samples-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let n = 1024;
        let a = 2.0;
        let mut csv = String::from("x,q\n");
        let mut xs = Vec::new();
        let mut qs = Vec::new();
        for i in 0..n {
            let x = a * i as f64 / n as f64;
            let q = (2.0 * PI * x / a).cos() + 0.5;
            csv.push_str(&format!("{x},{q}\n"));
            xs.push(x);
            qs.push(q);
        }
        std::fs::write(dir.join("q.csv"), csv).unwrap();
        let text = "[periodic]\na = 2\nsamples = \"q.csv\"\n[wvn]\nc = 1\nomega = 1\n";
        std::fs::write(dir.join("cfg.toml"), text).unwrap();
        let cfg = ProblemConfig::load(dir.join("cfg.toml")).unwrap();
        assert!(matches!(cfg.periodic.repr(), PeriodicRepr::Steps { .. }));
        // trapezoid oracle over one period, periodic wrap included
        let h = a / n as f64;
        let trap: f64 = qs.iter().map(|q| q.abs() * h).sum();
        assert!((cfg.periodic.l1_norm_per_period() - trap).abs() < 1e-12, "{}", trap);
        // left-continuous evaluation
        assert_eq!(cfg.periodic.eval(xs[3]), qs[3]);
        assert_eq!(cfg.periodic.eval(xs[3] + 1e-9), qs[4]);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn round_trip_all_kinds() {
        let cfgs = vec![
            mathieu(0.7, 0.3, 0.1),
            ProblemConfig::new(
                PeriodicPotential::steps(1.5, vec![0.0, 0.5, 1.0], vec![1.0, -2.0, 0.25]).unwrap(),
                WvnTerm::new(-1.25, 0.9, 2.0).unwrap(),
                SummablePerturbation::table(vec![0.0, 1.0, 3.0], vec![0.1, 0.2, -0.3]).unwrap(),
                1.0 / 3.0,
            )
            .unwrap(),
            ProblemConfig::new(
                PeriodicPotential::fourier(1.0, vec![0.1, 0.2, 0.3], vec![0.0, -0.4]).unwrap(),
                WvnTerm::new(1.0, 1.0, 0.0).unwrap(),
                SummablePerturbation::exponential(0.3, 0.7).unwrap(),
                0.1,
            )
            .unwrap(),
        ];
        for cfg in cfgs {
            let back = ProblemConfig::parse(&cfg.to_toml(), None).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn l1_bound_dominates_partial_integrals() {
        let q1 = SummablePerturbation::exponential(-0.8, 0.5).unwrap();
        for x in [0.5, 1.0, 5.0, 50.0] {
            let part = quad::integrate_real(|t| q1.eval(t).abs(), 0.0, x, 1e-14, 1e-12).unwrap();
            assert!(part <= q1.l1_bound());
        }
        let t = SummablePerturbation::table(vec![0.5, 1.0, 2.0], vec![1.0, -3.0, 2.0]).unwrap();
        assert!((t.l1_bound() - (0.5 + 1.5 + 2.0)).abs() < 1e-15);
        assert_eq!(t.eval(2.5), 0.0);
    }

    #[test]
    fn breakpoints_repeat_each_period() {
        let q = PeriodicPotential::steps(1.0, vec![0.0, 0.25, 0.5], vec![1.0, 2.0, 3.0]).unwrap();
        let b = q.breakpoints_between(0.0, 2.0);
        assert_eq!(b, vec![0.25, 0.5, 1.0, 1.25, 1.5]);
    }

    proptest! {
        #[test]
        fn periodicity(k in 0u32..10_000, m in 1u32..10) {
            let q = PeriodicPotential::fourier(2.0, vec![0.3, 1.0, -0.5], vec![0.0, 0.25]).unwrap();
            let x = k as f64 / 1024.0;
            let shifted = x + 2.0 * m as f64;
            prop_assert!((q.eval(x) - q.eval(shifted)).abs() < 1e-12);
            let s = PeriodicPotential::steps(2.0, vec![0.0, 0.5, 1.25], vec![1.0, -1.0, 2.0]).unwrap();
            prop_assert_eq!(s.eval(x), s.eval(shifted));
        }

        #[test]
        fn wvn_decay(x in 0.0f64..1e6, c in -5.0f64..5.0, w in 0.1f64..3.0, d in -3.0f64..3.0) {
            let t = WvnTerm { c, omega: w, delta: d };
            prop_assert!(t.eval(x).abs() <= c.abs() / (x + 1.0) * (1.0 + 1e-15));
        }
    }
}
