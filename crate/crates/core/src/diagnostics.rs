//! Unit-root tests and residual diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EbmData, EbmParamVector, MeasurementConfig, DIFFUSE_VARIANCE};
use crate::ssm::standardized_innovations;

pub const DEFAULT_MAX_LAG: usize = 15;
/// 5% critical value of chi-squared with 2 degrees of freedom.
pub const CHI2_2_5PCT: f64 = 5.991464547107979;
/// 5% critical value of chi-squared with 1 degree of freedom.
pub const CHI2_1_5PCT: f64 = 3.841458820694124;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdfSpec {
    Constant,
    ConstantTrend,
}

impl AdfSpec {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdfSpec::Constant => "constant",
            AdfSpec::ConstantTrend => "constant_trend",
        }
    }

    fn deterministic_terms(&self) -> usize {
        match self {
            AdfSpec::Constant => 1,
            AdfSpec::ConstantTrend => 2,
        }
    }
}

/// Response-surface coefficients `[b_inf, b1, b2, b3]` of the ADF critical
/// value `b_inf + b1/T + b2/T^2 + b3/T^3`, one regressor under test.
pub const CRITICAL_VALUE_COEFFS: [(AdfSpec, f64, [f64; 4]); 4] = [
    (AdfSpec::Constant, 0.01, [-3.43035, -6.5393, -16.786, -79.433]),
    (AdfSpec::Constant, 0.05, [-2.86154, -2.8903, -4.234, -40.040]),
    (AdfSpec::ConstantTrend, 0.01, [-3.95877, -9.0531, -28.428, -134.155]),
    (AdfSpec::ConstantTrend, 0.05, [-3.41049, -4.3904, -9.036, -45.374]),
];

/// ADF critical value at `level` (0.01 or 0.05) for `n_obs` regression
/// observations.
pub fn adf_critical_value(spec: AdfSpec, level: f64, n_obs: usize) -> Result<f64> {
    let (_, _, b) = CRITICAL_VALUE_COEFFS
        .iter()
        .find(|(s, l, _)| *s == spec && (*l - level).abs() < 1e-12)
        .ok_or_else(|| Error::InvalidParameter(format!("no critical value for level {level}")))?;
    let t = n_obs as f64;
    Ok(b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfRegression {
    pub lag: usize,
    pub statistic: f64,
    pub n_obs: usize,
    pub bic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub spec: AdfSpec,
    pub statistic: f64,
    pub chosen_lag: usize,
    pub n_obs: usize,
    pub crit_1pct: f64,
    pub crit_5pct: f64,
    pub reject_1pct: bool,
    pub reject_5pct: bool,
}

impl AdfResult {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.reject_1pct, self.reject_5pct)
    }
}

fn significance_stars(at1: bool, at5: bool) -> &'static str {
    if at1 {
        "**"
    } else if at5 {
        "*"
    } else {
        ""
    }
}

/// Least-squares fit of `dy_t = a [+ b t] + pi y_{t-1} + sum_j g_j dy_{t-j}`
/// over levels indices `start..n` (`start >= lag + 1`). Returns the t-ratio
/// on `pi`, the number of observations and the BIC.
pub fn adf_regression(y: &[f64], spec: AdfSpec, lag: usize, start: usize) -> Result<AdfRegression> {
    let n = y.len();
    if start < lag + 1 || start >= n {
        return Err(Error::InvalidParameter(format!(
            "ADF sample start {start} invalid for lag {lag} and length {n}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("ADF series has non-finite values".into()));
    }
    let m = n - start;
    let d = spec.deterministic_terms();
    let p = d + 1 + lag;
    if m <= p {
        return Err(Error::InvalidParameter(format!(
            "ADF regression has {m} observations for {p} regressors"
        )));
    }
    let pi_col = d;
    let x = DMatrix::from_fn(m, p, |r, c| {
        let t = start + r;
        match c {
            0 => 1.0,
            1 if d == 2 => t as f64,
            c if c == pi_col => y[t - 1],
            c => {
                let j = c - pi_col;
                y[t - j] - y[t - j - 1]
            }
        }
    });
    let dy = DVector::from_fn(m, |r, _| y[start + r] - y[start + r - 1]);
    let fit = ols(&x, &dy)?;
    let rss = fit.rss.max(f64::MIN_POSITIVE);
    let sigma2 = rss / (m - p) as f64;
    let se = (sigma2 * fit.xtx_inv_diag[pi_col]).sqrt();
    let mf = m as f64;
    Ok(AdfRegression {
        lag,
        statistic: fit.beta[pi_col] / se,
        n_obs: m,
        bic: mf * (rss / mf).ln() + p as f64 * mf.ln(),
    })
}

struct OlsFit {
    beta: DVector<f64>,
    rss: f64,
    xtx_inv_diag: Vec<f64>,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let singular = || Error::SingularRegressors("regressor matrix is rank deficient".into());
    // Column scaling keeps the rank test independent of regressor units.
    let scale: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    if scale.contains(&0.0) {
        return Err(singular());
    }
    let mut xs = x.clone();
    for (j, mut c) in xs.column_iter_mut().enumerate() {
        c /= scale[j];
    }
    let qr = xs.qr();
    let r = qr.r();
    let p = r.ncols();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * rmax) {
        return Err(singular());
    }
    let qty = qr.q().transpose() * y;
    let bs = r
        .solve_upper_triangular(&qty)
        .ok_or_else(singular)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(singular)?;
    let beta = DVector::from_fn(p, |i, _| bs[i] / scale[i]);
    let resid = y - x * &beta;
    let xtx_inv_diag = (0..p)
        .map(|i| r_inv.row(i).norm_squared() / (scale[i] * scale[i]))
        .collect();
    Ok(OlsFit {
        beta,
        rss: resid.norm_squared(),
        xtx_inv_diag,
    })
}

/// ADF test with BIC lag selection over `0..=max_lag`, all candidates fitted
/// on the common sample implied by `max_lag`; ties go to the smaller lag.
/// The statistic is then re-estimated for the chosen lag on its largest
/// sample.
pub fn adf_test(y: &[f64], spec: AdfSpec, max_lag: usize) -> Result<AdfResult> {
    if y.len() <= max_lag + 5 {
        return Err(Error::InvalidParameter(format!(
            "ADF needs more than {} points, got {}",
            max_lag + 5,
            y.len()
        )));
    }
    let mut best: Option<AdfRegression> = None;
    for k in 0..=max_lag {
        let reg = adf_regression(y, spec, k, max_lag + 1)?;
        if best.is_none_or(|b| reg.bic < b.bic) {
            best = Some(reg);
        }
    }
    let lag = best.map(|b| b.lag).unwrap_or(0);
    let reg = adf_regression(y, spec, lag, lag + 1)?;
    adf_result(spec, reg)
}

/// ADF test at a fixed lag on the largest available sample.
pub fn adf_fixed_lag(y: &[f64], spec: AdfSpec, lag: usize) -> Result<AdfResult> {
    adf_result(spec, adf_regression(y, spec, lag, lag + 1)?)
}

fn adf_result(spec: AdfSpec, reg: AdfRegression) -> Result<AdfResult> {
    let crit_1pct = adf_critical_value(spec, 0.01, reg.n_obs)?;
    let crit_5pct = adf_critical_value(spec, 0.05, reg.n_obs)?;
    Ok(AdfResult {
        spec,
        statistic: reg.statistic,
        chosen_lag: reg.lag,
        n_obs: reg.n_obs,
        crit_1pct,
        crit_5pct,
        reject_1pct: reg.statistic < crit_1pct,
        reject_5pct: reg.statistic < crit_5pct,
    })
}

pub fn difference(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| w[1] - w[0]).collect()
}

/// ADF results for one series: level and first difference, both specs,
/// fixed lags `0..=3` plus the BIC choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfRow {
    pub label: String,
    pub transform: String,
    pub spec: AdfSpec,
    pub fixed: Vec<AdfResult>,
    pub selected: AdfResult,
}

pub const REPORTED_LAGS: usize = 4;

pub fn adf_rows(label: &str, y: &[f64], max_lag: usize) -> Result<Vec<AdfRow>> {
    let dy = difference(y);
    let mut rows = Vec::new();
    for (transform, series) in [("level", y), ("difference", dy.as_slice())] {
        for spec in [AdfSpec::Constant, AdfSpec::ConstantTrend] {
            let fixed = (0..REPORTED_LAGS)
                .map(|k| adf_fixed_lag(series, spec, k))
                .collect::<Result<Vec<_>>>()?;
            rows.push(AdfRow {
                label: label.to_string(),
                transform: transform.to_string(),
                spec,
                fixed,
                selected: adf_test(series, spec, max_lag)?,
            });
        }
    }
    Ok(rows)
}

/// Delimited ADF table: one line per series, transform and spec.
pub fn adf_table(rows: &[AdfRow]) -> String {
    let mut out = String::from("series,transform,spec");
    for k in 0..REPORTED_LAGS {
        out.push_str(&format!(",k{k}"));
    }
    out.push_str(",bic_lag,bic_statistic\n");
    for r in rows {
        out.push_str(&format!("{},{},{}", r.label, r.transform, r.spec.as_str()));
        for f in &r.fixed {
            out.push_str(&format!(",{:.3}{}", f.statistic, f.stars()));
        }
        out.push_str(&format!(
            ",{},{:.3}{}\n",
            r.selected.chosen_lag,
            r.selected.statistic,
            r.selected.stars()
        ));
    }
    out
}

struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

fn moments(x: &[f64], min_n: usize) -> Result<Moments> {
    if x.len() < min_n {
        return Err(Error::InvalidParameter(format!(
            "need at least {min_n} points, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("sample has non-finite values".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if !(m2 > 1e-300) || m2 <= 1e-28 * mean * mean {
        return Err(Error::Numerical("sample has zero variance".into()));
    }
    Ok(Moments { n, mean, m2, m3, m4 })
}

impl Moments {
    fn skewness(&self) -> f64 {
        self.m3 / self.m2.powf(1.5)
    }

    fn kurtosis(&self) -> f64 {
        self.m4 / (self.m2 * self.m2)
    }

    fn jb(&self) -> f64 {
        let s = self.skewness();
        let k = self.kurtosis() - 3.0;
        self.n / 6.0 * (s * s + k * k / 4.0)
    }
}

/// Jarque-Bera statistic `n/6 (S^2 + (K-3)^2/4)` with moment-based skewness
/// and raw kurtosis.
pub fn jarque_bera(x: &[f64]) -> Result<f64> {
    Ok(moments(x, 8)?.jb())
}

/// Ljung-Box `Q(k) = n(n+2) sum_{j<=k} rho_j^2 / (n-j)`.
pub fn ljung_box(x: &[f64], k: usize) -> Result<f64> {
    let n = x.len();
    if k < 1 || n <= k {
        return Err(Error::InvalidParameter(format!(
            "Ljung-Box needs n > k >= 1, got n = {n}, k = {k}"
        )));
    }
    let m = moments(x, 2)?;
    let d: Vec<f64> = x.iter().map(|v| v - m.mean).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    let nf = n as f64;
    let mut q = 0.0;
    for j in 1..=k {
        let cj: f64 = (j..n).map(|t| d[t] * d[t - j]).sum();
        let rho = cj / c0;
        q += rho * rho / (nf - j as f64);
    }
    Ok(nf * (nf + 2.0) * q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation with divisor `n - 1`.
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub jb: f64,
    pub q1: f64,
    pub jb_reject_5pct: bool,
    pub q1_reject_5pct: bool,
}

pub fn residual_summary(x: &[f64]) -> Result<ResidualSummary> {
    let m = moments(x, 8)?;
    let jb = m.jb();
    let q1 = ljung_box(x, 1)?;
    Ok(ResidualSummary {
        n: x.len(),
        mean: m.mean,
        std: (m.m2 * m.n / (m.n - 1.0)).sqrt(),
        skewness: m.skewness(),
        kurtosis: m.kurtosis(),
        jb,
        q1,
        jb_reject_5pct: jb > CHI2_2_5PCT,
        q1_reject_5pct: q1 > CHI2_1_5PCT,
    })
}

/// Delimited residual table: statistics as rows, series as columns.
pub fn residual_table(columns: &[(String, ResidualSummary)]) -> String {
    let mut out = String::from("statistic");
    for (label, _) in columns {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    let rows: [(&str, fn(&ResidualSummary) -> String); 6] = [
        ("mean", |s| format!("{:.3}", s.mean)),
        ("std", |s| format!("{:.3}", s.std)),
        ("skewness", |s| format!("{:.3}", s.skewness)),
        ("kurtosis", |s| format!("{:.3}", s.kurtosis)),
        ("jb", |s| format!("{:.3}{}", s.jb, significance_stars(false, s.jb_reject_5pct))),
        ("q1", |s| format!("{:.3}{}", s.q1, significance_stars(false, s.q1_reject_5pct))),
    ];
    for (name, f) in rows {
        out.push_str(name);
        for (_, s) in columns {
            out.push(',');
            out.push_str(&f(s));
        }
        out.push('\n');
    }
    out
}

/// Standardized one-step prediction errors of each panel series at
/// `params`, skipping steps whose prediction still carries diffuse
/// initial variance.
pub fn prediction_errors(
    data: &EbmData,
    params: &EbmParamVector,
    config: &MeasurementConfig,
) -> Result<Vec<(String, Vec<f64>)>> {
    let filt = data.filter(params, config)?;
    let diffuse = |t: usize| filt.pred_cov[t].diagonal().amax() > 1e-3 * DIFFUSE_VARIANCE;
    let e = standardized_innovations(&filt)?;
    Ok(data
        .panel
        .meta()
        .iter()
        .zip(e)
        .map(|(m, row)| {
            let kept = row
                .into_iter()
                .enumerate()
                .filter(|(t, _)| !diffuse(*t))
                .filter_map(|(_, v)| v)
                .collect();
            (m.label.clone(), kept)
        })
        .collect())
}

/// Residual summaries of every panel series with at least 8 retained
/// prediction errors.
pub fn prediction_error_summaries(
    data: &EbmData,
    params: &EbmParamVector,
    config: &MeasurementConfig,
) -> Result<Vec<(String, ResidualSummary)>> {
    prediction_errors(data, params, config)?
        .into_iter()
        .filter(|(_, v)| v.len() >= 8)
        .map(|(label, v)| Ok((label, residual_summary(&v)?)))
        .collect()
}
