//! Calibration and accuracy metrics over prediction outcomes: kσ coverage,
//! Mahalanobis error quantiles and ADE/FDE, with CSV and text rendering.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Mat, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Fp,
    Mc,
    Signn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fp, Method::Mc, Method::Signn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fp => "FP",
            Method::Mc => "MC",
            Method::Signn => "SIGNN",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// How "inside the kσ interval" is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// Mahalanobis distance ≤ k (2D ellipse).
    #[default]
    Mahalanobis,
    /// |e_x| ≤ kσ_x and |e_y| ≤ kσ_y.
    PerAxis,
}

impl CoverageMode {
    /// Expected percentage inside kσ for a calibrated 2D Gaussian.
    pub fn expected_pct(self, k: f64) -> f64 {
        match self {
            CoverageMode::Mahalanobis => 100.0 * (1.0 - (-0.5 * k * k).exp()),
            CoverageMode::PerAxis => 100.0 * libm::erf(k / std::f64::consts::SQRT_2).powi(2),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoverageMode::Mahalanobis => "mahalanobis",
            CoverageMode::PerAxis => "per_axis",
        }
    }
}

impl FromStr for CoverageMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mahalanobis" => Ok(CoverageMode::Mahalanobis),
            "per_axis" => Ok(CoverageMode::PerAxis),
            other => Err(Error::Config(format!(
                "coverage_mode must be `mahalanobis` or `per_axis`, got `{other}`"
            ))),
        }
    }
}

/// Prediction at one horizon step against the observed position.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeStep {
    pub mean: Vec2,
    pub cov2: Mat,
    pub truth: Vec2,
}

impl OutcomeStep {
    pub fn error(&self) -> Vec2 {
        self.mean - self.truth
    }
}

/// One method's prediction for one window; `steps[h - 1]` is horizon step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutcome {
    pub method: Method,
    pub ped_id: i64,
    pub window: usize,
    pub steps: Vec<OutcomeStep>,
}

impl PredictionOutcome {
    pub fn step(&self, horizon_step: usize) -> Option<&OutcomeStep> {
        horizon_step.checked_sub(1).and_then(|i| self.steps.get(i))
    }
}

/// `sqrt(eᵀ Σ⁻¹ e)` with `Σ` diagonally loaded by 1e-9.
pub fn mahalanobis(error: Vec2, cov2: &Mat) -> Result<f64> {
    let e = [error.x, error.y];
    let x = solve_spd(cov2, &e)?;
    Ok((e[0] * x[0] + e[1] * x[1]).max(0.0).sqrt())
}

fn inside(step: &OutcomeStep, k: f64, mode: CoverageMode) -> Result<bool> {
    let e = step.error();
    match mode {
        CoverageMode::Mahalanobis => Ok(mahalanobis(e, &step.cov2)? <= k),
        CoverageMode::PerAxis => {
            let sx = step.cov2[(0, 0)].max(0.0).sqrt();
            let sy = step.cov2[(1, 1)].max(0.0).sqrt();
            Ok(e.x.abs() <= k * sx && e.y.abs() <= k * sy)
        }
    }
}

fn percent_inside<'a>(
    steps: impl Iterator<Item = &'a OutcomeStep>,
    k: f64,
    mode: CoverageMode,
) -> Result<(f64, usize)> {
    let (mut hit, mut n) = (0usize, 0usize);
    for s in steps {
        n += 1;
        if inside(s, k, mode)? {
            hit += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "coverage over an empty selection".into(),
        ));
    }
    Ok((100.0 * hit as f64 / n as f64, n))
}

/// Percentage of outcomes whose error at `horizon_step` lies inside kσ.
pub fn sigma_coverage(
    outcomes: &[PredictionOutcome],
    horizon_step: usize,
    k: f64,
    mode: CoverageMode,
) -> Result<f64> {
    percent_inside(
        outcomes.iter().filter_map(|o| o.step(horizon_step)),
        k,
        mode,
    )
    .map(|r| r.0)
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub n: usize,
}

fn quartiles(mut values: Vec<f64>) -> Result<Quartiles> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "quantiles of an empty selection".into(),
        ));
    }
    values.sort_by(f64::total_cmp);
    Ok(Quartiles {
        p25: quantile_sorted(&values, 0.25),
        median: quantile_sorted(&values, 0.5),
        p75: quantile_sorted(&values, 0.75),
        n: values.len(),
    })
}

pub fn mahalanobis_quantiles(
    outcomes: &[PredictionOutcome],
    horizon_step: usize,
) -> Result<Quartiles> {
    let values = outcomes
        .iter()
        .filter_map(|o| o.step(horizon_step))
        .map(|s| mahalanobis(s.error(), &s.cov2))
        .collect::<Result<Vec<_>>>()?;
    quartiles(values)
}

/// (ADE, FDE) in meters over the outcomes' mean trajectories.
pub fn displacement_errors(outcomes: &[PredictionOutcome]) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut final_total = 0.0;
    let mut finals = 0usize;
    for o in outcomes {
        for s in &o.steps {
            total += s.error().norm();
            count += 1;
        }
        if let Some(last) = o.steps.last() {
            final_total += last.error().norm();
            finals += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "displacement errors of no outcomes".into(),
        ));
    }
    Ok((total / count as f64, final_total / finals as f64))
}

/// `%.6g`-style rendering without exponent notation.
pub fn fmt_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() {
            "0".into()
        } else {
            format!("{v}")
        };
    }
    let decimals = (5 - v.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub method: Method,
    /// `None` for the aggregate over all horizons.
    pub horizon_s: Option<f64>,
    pub pct_1sigma: f64,
    pub pct_3sigma: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTable {
    pub mode: CoverageMode,
    pub rows: Vec<CoverageRow>,
}

pub const COVERAGE_HEADER: &str = "method,horizon_s,pct_1sigma,pct_3sigma,n";

fn methods_present(outcomes: &[PredictionOutcome]) -> Vec<Method> {
    let mut m: Vec<Method> = outcomes.iter().map(|o| o.method).collect();
    m.sort();
    m.dedup();
    m
}

fn max_steps(outcomes: &[PredictionOutcome]) -> usize {
    outcomes.iter().map(|o| o.steps.len()).max().unwrap_or(0)
}

/// Per-horizon rows followed by one aggregate row, for every method present.
pub fn coverage_table(
    outcomes: &[PredictionOutcome],
    dt: f64,
    mode: CoverageMode,
) -> Result<CoverageTable> {
    let mut rows = Vec::new();
    for method in methods_present(outcomes) {
        let mine: Vec<&PredictionOutcome> =
            outcomes.iter().filter(|o| o.method == method).collect();
        for h in 1..=max_steps(outcomes) {
            let sel = || mine.iter().filter_map(|o| o.step(h));
            if sel().next().is_none() {
                continue;
            }
            let (p1, n) = percent_inside(sel(), 1.0, mode)?;
            let (p3, _) = percent_inside(sel(), 3.0, mode)?;
            rows.push(CoverageRow {
                method,
                horizon_s: Some(h as f64 * dt),
                pct_1sigma: p1,
                pct_3sigma: p3,
                n,
            });
        }
        let all = || mine.iter().flat_map(|o| o.steps.iter());
        let (p1, n) = percent_inside(all(), 1.0, mode)?;
        let (p3, _) = percent_inside(all(), 3.0, mode)?;
        rows.push(CoverageRow {
            method,
            horizon_s: None,
            pct_1sigma: p1,
            pct_3sigma: p3,
            n,
        });
    }
    Ok(CoverageTable { mode, rows })
}

fn horizon_field(h: Option<f64>) -> String {
    h.map_or_else(|| "all".to_string(), fmt_sig6)
}

impl CoverageTable {
    pub fn aggregate(&self, method: Method) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.horizon_s.is_none())
    }

    pub fn at_horizon(&self, method: Method, horizon_s: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| {
            r.method == method && r.horizon_s.is_some_and(|h| (h - horizon_s).abs() < 1e-9)
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{COVERAGE_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.method,
                horizon_field(r.horizon_s),
                fmt_sig6(r.pct_1sigma),
                fmt_sig6(r.pct_3sigma),
                r.n
            );
        }
        s
    }

    pub fn from_csv(text: &str, mode: CoverageMode) -> Result<Self> {
        let path = std::path::Path::new("coverage.csv");
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == COVERAGE_HEADER => {}
            _ => return Err(Error::parse(path, 1, "missing coverage header")),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let bad = |m: &str| Error::parse(path, i + 1, m.to_string());
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 columns"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("invalid number"));
            rows.push(CoverageRow {
                method: f[0].parse()?,
                horizon_s: if f[1] == "all" {
                    None
                } else {
                    Some(num(f[1])?)
                },
                pct_1sigma: num(f[2])?,
                pct_3sigma: num(f[3])?,
                n: f[4].parse().map_err(|_| bad("invalid count"))?,
            });
        }
        Ok(CoverageTable { mode, rows })
    }

    /// Aligned table with deltas from the expected coverage of the active mode.
    pub fn render(&self) -> String {
        let e1 = self.mode.expected_pct(1.0);
        let e3 = self.mode.expected_pct(3.0);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "coverage mode: {} (expected {:.2}% inside 1σ, {:.2}% inside 3σ)",
            self.mode.as_str(),
            e1,
            e3
        );
        let _ = writeln!(
            s,
            "{:<7} {:>9} {:>20} {:>20} {:>7}",
            "method", "horizon", "inside 1σ (Δ)", "inside 3σ (Δ)", "n"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<7} {:>9} {:>20} {:>20} {:>7}",
                r.method.as_str(),
                r.horizon_s
                    .map_or_else(|| "all".into(), |h| format!("{h:.1}s")),
                format!("{:.2} ({:+.2})", r.pct_1sigma, r.pct_1sigma - e1),
                format!("{:.2} ({:+.2})", r.pct_3sigma, r.pct_3sigma - e3),
                r.n
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisRow {
    pub method: Method,
    pub horizon_s: f64,
    pub quartiles: Quartiles,
}

/// Per-horizon Mahalanobis quartiles for every method present.
pub fn mahalanobis_table(outcomes: &[PredictionOutcome], dt: f64) -> Result<Vec<MahalanobisRow>> {
    let mut rows = Vec::new();
    for method in methods_present(outcomes) {
        let mine: Vec<PredictionOutcome> = outcomes
            .iter()
            .filter(|o| o.method == method)
            .cloned()
            .collect();
        for h in 1..=max_steps(&mine) {
            rows.push(MahalanobisRow {
                method,
                horizon_s: h as f64 * dt,
                quartiles: mahalanobis_quantiles(&mine, h)?,
            });
        }
    }
    Ok(rows)
}

pub fn mahalanobis_csv(rows: &[MahalanobisRow]) -> String {
    let mut s = String::from("method,horizon_s,p25,median,p75,n\n");
    for r in rows {
        let q = &r.quartiles;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method,
            fmt_sig6(r.horizon_s),
            fmt_sig6(q.p25),
            fmt_sig6(q.median),
            fmt_sig6(q.p75),
            q.n
        );
    }
    s
}

/// `method,ade,fde` for every method present.
pub fn errors_csv(outcomes: &[PredictionOutcome]) -> Result<String> {
    let mut s = String::from("method,ade,fde\n");
    for method in methods_present(outcomes) {
        let mine: Vec<PredictionOutcome> = outcomes
            .iter()
            .filter(|o| o.method == method)
            .cloned()
            .collect();
        let (ade, fde) = displacement_errors(&mine)?;
        let _ = writeln!(s, "{},{},{}", method, fmt_sig6(ade), fmt_sig6(fde));
    }
    Ok(s)
}
