//! Two-component energy balance model in state-space form.
//!
//! State vector, in order: mixed-layer temperature `T_m`, deep-ocean
//! temperature `T_d`, natural forcing `N`, anthropogenic forcing `A`, its
//! stochastic slope `beta`, and a constant `1`.
//!
//! Observation vector, in order: `K` GMST series, `J` ocean temperatures,
//! the `J` OHC series of the same pairs, and total forcing.
//!
//! The temperature block is the explicit Euler step of
//! `C_m dT_m/dt = F - lambda T_m - gamma (T_m - T_d)`,
//! `C_d dT_d/dt = gamma (T_m - T_d)` with a one-year step and `F = N + A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::{
    kalman_filter, sequential_filter, FilterResult, ObservationPanel, SeriesKind, SystemMatrices,
    TimeVaryingEntry,
};

pub const STATE_DIM: usize = 6;
pub const IDX_TM: usize = 0;
pub const IDX_TD: usize = 1;
pub const IDX_N: usize = 2;
pub const IDX_A: usize = 3;
pub const IDX_BETA: usize = 4;
pub const IDX_CONST: usize = 5;

/// Lower bound applied to every variance parameter.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// "Big K" variance for the non-stationary states.
pub const DIFFUSE_VARIANCE: f64 = 1e6;
/// Correlations are mapped to `RHO_SCALE * tanh(x)`.
pub const RHO_SCALE: f64 = 0.9999;

pub const DEFAULT_F2X: f64 = 3.93;
/// Half-width 0.47 of a 5-95% interval, converted to a Gaussian standard error.
pub const DEFAULT_F2X_SE: f64 = 0.47 / 1.645;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Climate feedback (W m-2 K-1).
    pub lambda: f64,
    /// Heat-transfer coefficient (W m-2 K-1).
    pub gamma: f64,
    /// Mixed-layer heat capacity (W yr m-2 K-1).
    pub c_m: f64,
    /// Deep-ocean heat capacity (W yr m-2 K-1).
    pub c_d: f64,
}

impl PhysicalParams {
    pub fn new(lambda: f64, gamma: f64, c_m: f64, c_d: f64) -> Self {
        Self {
            lambda,
            gamma,
            c_m,
            c_d,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.lambda, self.gamma, self.c_m, self.c_d]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Checks positivity, `C_m < C_d` and discrete stability of the
    /// temperature block. `gamma = 0` is accepted (decoupled deep ocean).
    pub fn validate(&self) -> Result<()> {
        let Self {
            lambda,
            gamma,
            c_m,
            c_d,
        } = *self;
        if !(lambda > 0.0 && c_m > 0.0 && c_d > 0.0 && gamma >= 0.0)
            || ![lambda, gamma, c_m, c_d].iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "physical parameters must be positive: {self:?}"
            )));
        }
        if c_m >= c_d {
            return Err(Error::InvalidParameter(format!(
                "mixed-layer capacity {c_m} must be below deep-ocean capacity {c_d}"
            )));
        }
        let r_m = (lambda + gamma) / c_m;
        let r_d = gamma / c_d;
        if !(r_m > 0.0 && r_m < 2.0 && r_d < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature block is not stable: (lambda+gamma)/c_m = {r_m}, gamma/c_d = {r_d}"
            )));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Coefficients of the temperature block:
    /// `[[tm_tm, tm_td, tm_f], [td_tm, td_td]]` flattened to
    /// `(tm_tm, tm_td, tm_f, td_tm, td_td)`.
    pub fn temperature_coefficients(&self) -> [f64; 5] {
        [
            1.0 - (self.lambda + self.gamma) / self.c_m,
            self.gamma / self.c_m,
            1.0 / self.c_m,
            self.gamma / self.c_d,
            1.0 - self.gamma / self.c_d,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub var_eta_tm: f64,
    pub var_eta_td: f64,
    pub var_eta_a: f64,
    pub var_eta_beta: f64,
    pub var_eps_gmst: Vec<f64>,
    pub var_eps_td: Vec<f64>,
    pub var_eps_ohc: Vec<f64>,
    pub var_eps_f: f64,
    pub rho: Vec<f64>,
    /// Baseline offset of each ocean pair (deg C).
    pub mu_td: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub n_gmst: usize,
    pub n_ocean_pairs: usize,
    pub f2x: f64,
    pub f2x_se: f64,
}

impl MeasurementConfig {
    pub fn new(n_gmst: usize, n_ocean_pairs: usize) -> Self {
        Self {
            n_gmst,
            n_ocean_pairs,
            f2x: DEFAULT_F2X,
            f2x_se: DEFAULT_F2X_SE,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.n_gmst + 2 * self.n_ocean_pairs + 1
    }

    pub fn n_params(&self) -> usize {
        4 + 4 + self.n_gmst + 2 * self.n_ocean_pairs + 1 + 2 * self.n_ocean_pairs
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_gmst == 0 {
            return Err(Error::InvalidParameter("at least one GMST series is required".into()));
        }
        if !(self.f2x > 0.0) || !(self.f2x_se >= 0.0) {
            return Err(Error::InvalidParameter("f2x must be positive, its SE nonnegative".into()));
        }
        Ok(())
    }

    pub fn row_gmst(&self, k: usize) -> usize {
        k
    }

    pub fn row_ocean_temp(&self, j: usize) -> usize {
        self.n_gmst + j
    }

    pub fn row_ohc(&self, j: usize) -> usize {
        self.n_gmst + self.n_ocean_pairs + j
    }

    pub fn row_forcing(&self) -> usize {
        self.n_gmst + 2 * self.n_ocean_pairs
    }
}

/// Initial state distribution used by [`build_system_with_init`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateInit {
    /// Zero means with "Big K" variance on `T_m`, `T_d`, `A`, `beta`.
    Diffuse,
    /// Exactly known starting state.
    Known {
        t_m: f64,
        t_d: f64,
        anthro: f64,
        trend: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbmParamVector {
    pub physical: PhysicalParams,
    pub noise: NoiseParams,
}

impl EbmParamVector {
    /// Reference data-generating values for the multi-source configuration
    /// (8 GMST series, 2 ocean pairs).
    pub fn reference_dgp() -> Self {
        Self {
            physical: PhysicalParams::new(1.0828, 1.3027, 9.6376, 98.4886),
            noise: NoiseParams {
                var_eta_tm: 0.0122,
                var_eta_td: 3.66e-5,
                var_eta_a: 4.73e-5,
                var_eta_beta: 9.72e-6,
                var_eps_gmst: vec![0.0010, 0.00090, 0.00241, 0.0118, 0.00282, 0.00659, 0.00074, 0.00026],
                var_eps_td: vec![0.00014, 0.00015],
                var_eps_ohc: vec![1.5311, 1.2805],
                var_eps_f: 1.61e-11,
                rho: vec![0.9092, 0.9943],
                mu_td: vec![-0.2738, -0.2802],
            },
        }
    }

    /// Keeps the first `n_gmst` GMST series and first `n_pairs` ocean pairs.
    pub fn restrict(&self, n_gmst: usize, n_pairs: usize) -> Result<Self> {
        let k = self.noise.var_eps_gmst.len();
        let j = self.noise.var_eps_td.len();
        if n_gmst > k || n_pairs > j {
            return Err(Error::InvalidParameter("cannot restrict to a larger configuration".into()));
        }
        let mut out = self.clone();
        out.noise.var_eps_gmst.truncate(n_gmst);
        out.noise.var_eps_td.truncate(n_pairs);
        out.noise.var_eps_ohc.truncate(n_pairs);
        out.noise.rho.truncate(n_pairs);
        out.noise.mu_td.truncate(n_pairs);
        Ok(out)
    }

    pub fn n_gmst(&self) -> usize {
        self.noise.var_eps_gmst.len()
    }

    pub fn n_ocean_pairs(&self) -> usize {
        self.noise.var_eps_td.len()
    }

    pub fn validate(&self, config: &MeasurementConfig) -> Result<()> {
        config.validate()?;
        self.physical.validate()?;
        let n = &self.noise;
        let (k, j) = (config.n_gmst, config.n_ocean_pairs);
        if n.var_eps_gmst.len() != k
            || n.var_eps_td.len() != j
            || n.var_eps_ohc.len() != j
            || n.rho.len() != j
            || n.mu_td.len() != j
        {
            return Err(Error::Dimension(format!(
                "parameter vector does not match configuration K={k}, J={j}"
            )));
        }
        let values = self.values();
        for (i, slot) in self.layout().iter().enumerate() {
            let v = values[i];
            if *slot == Slot::Variance && (!(v >= VARIANCE_FLOOR) || !v.is_finite()) {
                let name = &self.names()[i];
                return Err(Error::InvalidParameter(format!(
                    "variance {name} = {v:e} is below the floor {VARIANCE_FLOOR:e}"
                )));
            }
        }
        if n.rho.iter().any(|r| !(r.abs() < 1.0)) {
            return Err(Error::InvalidParameter("correlations must lie in (-1, 1)".into()));
        }
        if n.mu_td.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("ocean offsets must be finite".into()));
        }
        Ok(())
    }

    fn variances(&self) -> Vec<(String, f64)> {
        let names = self.names();
        let values = self.values();
        let layout = self.layout();
        layout
            .iter()
            .enumerate()
            .filter(|(_, kind)| **kind == Slot::Variance)
            .map(|(i, _)| (names[i].clone(), values[i]))
            .collect()
    }

    fn layout(&self) -> Vec<Slot> {
        let (k, j) = (self.n_gmst(), self.n_ocean_pairs());
        let mut v = vec![Slot::Physical; 4];
        v.extend(std::iter::repeat_n(Slot::Variance, 4 + k + 2 * j + 1));
        v.extend(std::iter::repeat_n(Slot::Correlation, j));
        v.extend(std::iter::repeat_n(Slot::Offset, j));
        v
    }

    /// Parameter names in the flat layout used by [`Self::values`] and
    /// [`Self::transform`].
    pub fn names(&self) -> Vec<String> {
        param_names(self.n_gmst(), self.n_ocean_pairs())
    }

    /// Original-scale values in the flat layout.
    pub fn values(&self) -> Vec<f64> {
        let n = &self.noise;
        let mut v = self.physical.as_array().to_vec();
        v.extend([n.var_eta_tm, n.var_eta_td, n.var_eta_a, n.var_eta_beta]);
        v.extend(&n.var_eps_gmst);
        v.extend(&n.var_eps_td);
        v.extend(&n.var_eps_ohc);
        v.push(n.var_eps_f);
        v.extend(&n.rho);
        v.extend(&n.mu_td);
        v
    }

    pub fn from_values(values: &[f64], n_gmst: usize, n_pairs: usize) -> Result<Self> {
        let expected = MeasurementConfig::new(n_gmst, n_pairs).n_params();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameter values, got {}",
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let phys = take(4);
        let eta = take(4);
        let var_eps_gmst = take(n_gmst);
        let var_eps_td = take(n_pairs);
        let var_eps_ohc = take(n_pairs);
        let var_eps_f = take(1)[0];
        let rho = take(n_pairs);
        let mu_td = take(n_pairs);
        Ok(Self {
            physical: PhysicalParams::new(phys[0], phys[1], phys[2], phys[3]),
            noise: NoiseParams {
                var_eta_tm: eta[0],
                var_eta_td: eta[1],
                var_eta_a: eta[2],
                var_eta_beta: eta[3],
                var_eps_gmst,
                var_eps_td,
                var_eps_ohc,
                var_eps_f,
                rho,
                mu_td,
            },
        })
    }

    /// Map to the unconstrained space: log for positive quantities, scaled
    /// inverse tanh for correlations, identity for ocean offsets.
    pub fn transform(&self) -> Result<Vec<f64>> {
        let values = self.values();
        let names = self.names();
        self.layout()
            .iter()
            .zip(values)
            .zip(&names)
            .map(|((slot, v), name)| match slot {
                Slot::Physical => {
                    if v > 0.0 && v.is_finite() {
                        Ok(v.ln())
                    } else {
                        Err(Error::InvalidParameter(format!("{name} = {v} is not positive")))
                    }
                }
                Slot::Variance => {
                    if v >= VARIANCE_FLOOR && v.is_finite() {
                        Ok(v.ln())
                    } else {
                        Err(Error::InvalidParameter(format!(
                            "{name} = {v:e} is below the variance floor"
                        )))
                    }
                }
                Slot::Correlation => {
                    if v.abs() < RHO_SCALE {
                        Ok((v / RHO_SCALE).atanh())
                    } else {
                        Err(Error::InvalidParameter(format!("{name} = {v} is at the boundary")))
                    }
                }
                Slot::Offset => Ok(v),
            })
            .collect()
    }

    pub fn untransform(x: &[f64], n_gmst: usize, n_pairs: usize) -> Result<Self> {
        let layout = slot_layout(n_gmst, n_pairs);
        if x.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "expected {} unconstrained values, got {}",
                layout.len(),
                x.len()
            )));
        }
        let values: Vec<f64> = layout
            .iter()
            .zip(x)
            .map(|(slot, &u)| match slot {
                Slot::Physical => u.exp(),
                Slot::Variance => u.exp().max(VARIANCE_FLOOR),
                Slot::Correlation => RHO_SCALE * u.tanh(),
                Slot::Offset => u,
            })
            .collect();
        Self::from_values(&values, n_gmst, n_pairs)
    }

    /// Diagonal of the Jacobian d(original)/d(unconstrained) at `x`.
    pub fn untransform_jacobian(x: &[f64], n_gmst: usize, n_pairs: usize) -> Vec<f64> {
        slot_layout(n_gmst, n_pairs)
            .iter()
            .zip(x)
            .map(|(slot, &u)| match slot {
                Slot::Physical => u.exp(),
                Slot::Variance => {
                    let e = u.exp();
                    if e > VARIANCE_FLOOR {
                        e
                    } else {
                        0.0
                    }
                }
                Slot::Correlation => RHO_SCALE * (1.0 - u.tanh().powi(2)),
                Slot::Offset => 1.0,
            })
            .collect()
    }

    /// Names of variance parameters sitting at the floor.
    pub fn at_floor(&self) -> Vec<String> {
        self.variances()
            .into_iter()
            .filter(|(_, v)| *v <= VARIANCE_FLOOR)
            .map(|(n, _)| n)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Physical,
    Variance,
    Correlation,
    Offset,
}

fn slot_layout(k: usize, j: usize) -> Vec<Slot> {
    let mut v = vec![Slot::Physical; 4];
    v.extend(std::iter::repeat_n(Slot::Variance, 4 + k + 2 * j + 1));
    v.extend(std::iter::repeat_n(Slot::Correlation, j));
    v.extend(std::iter::repeat_n(Slot::Offset, j));
    v
}

pub fn param_names(k: usize, j: usize) -> Vec<String> {
    let mut v: Vec<String> = [
        "lambda",
        "gamma",
        "c_m",
        "c_d",
        "var_eta_tm",
        "var_eta_td",
        "var_eta_a",
        "var_eta_beta",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend((1..=k).map(|i| format!("var_eps_gmst_{i}")));
    v.extend((1..=j).map(|i| format!("var_eps_td_{i}")));
    v.extend((1..=j).map(|i| format!("var_eps_ohc_{i}")));
    v.push("var_eps_f".into());
    v.extend((1..=j).map(|i| format!("rho_{i}")));
    v.extend((1..=j).map(|i| format!("mu_td_{i}")));
    v
}

/// System matrices with the diffuse ("Big K") initialization.
pub fn build_system(
    params: &EbmParamVector,
    config: &MeasurementConfig,
    natural_forcing: &[f64],
) -> Result<SystemMatrices> {
    build_system_with_init(params, config, natural_forcing, StateInit::Diffuse)
}

/// `natural_forcing[t]` is the natural forcing of sample step `t`; the first
/// value seeds the initial state and later values enter the transition.
pub fn build_system_with_init(
    params: &EbmParamVector,
    config: &MeasurementConfig,
    natural_forcing: &[f64],
    init: StateInit,
) -> Result<SystemMatrices> {
    params.validate(config)?;
    if natural_forcing.is_empty() {
        return Err(Error::Coverage("natural forcing series is empty".into()));
    }
    if let Some(i) = natural_forcing.iter().position(|v| !v.is_finite()) {
        return Err(Error::Coverage(format!("natural forcing missing at step {i}")));
    }
    let ph = &params.physical;
    let nz = &params.noise;
    let (k, j) = (config.n_gmst, config.n_ocean_pairs);
    let m = STATE_DIM;
    let p = config.obs_dim();

    let [tm_tm, tm_td, tm_f, td_tm, td_td] = ph.temperature_coefficients();
    let mut tr = DMatrix::zeros(m, m);
    tr[(IDX_TM, IDX_TM)] = tm_tm;
    tr[(IDX_TM, IDX_TD)] = tm_td;
    tr[(IDX_TM, IDX_N)] = tm_f;
    tr[(IDX_TM, IDX_A)] = tm_f;
    tr[(IDX_TD, IDX_TM)] = td_tm;
    tr[(IDX_TD, IDX_TD)] = td_td;
    tr[(IDX_A, IDX_A)] = 1.0;
    tr[(IDX_A, IDX_BETA)] = 1.0;
    tr[(IDX_BETA, IDX_BETA)] = 1.0;
    tr[(IDX_CONST, IDX_CONST)] = 1.0;
    let entry = TimeVaryingEntry {
        row: IDX_N,
        col: IDX_CONST,
        values: natural_forcing[1..].to_vec(),
    };

    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![
        nz.var_eta_tm,
        nz.var_eta_td,
        0.0,
        nz.var_eta_a,
        nz.var_eta_beta,
        0.0,
    ]));

    let mut z = DMatrix::zeros(p, m);
    let mut h = DMatrix::zeros(p, p);
    for (i, var) in nz.var_eps_gmst.iter().enumerate() {
        let r = config.row_gmst(i);
        z[(r, IDX_TM)] = 1.0;
        h[(r, r)] = *var;
    }
    for jj in 0..j {
        let rt = config.row_ocean_temp(jj);
        let ro = config.row_ohc(jj);
        z[(rt, IDX_TD)] = 1.0;
        z[(rt, IDX_CONST)] = nz.mu_td[jj];
        z[(ro, IDX_TD)] = ph.c_d;
        z[(ro, IDX_CONST)] = ph.c_d * nz.mu_td[jj];
        let (st, so) = (nz.var_eps_td[jj], nz.var_eps_ohc[jj]);
        h[(rt, rt)] = st;
        h[(ro, ro)] = so;
        let cov = nz.rho[jj] * st.sqrt() * so.sqrt();
        h[(rt, ro)] = cov;
        h[(ro, rt)] = cov;
    }
    let rf = config.row_forcing();
    z[(rf, IDX_N)] = 1.0;
    z[(rf, IDX_A)] = 1.0;
    h[(rf, rf)] = nz.var_eps_f;
    let _ = k;

    let mut a1 = DVector::zeros(m);
    a1[IDX_N] = natural_forcing[0];
    a1[IDX_CONST] = 1.0;
    let mut p1 = DMatrix::zeros(m, m);
    match init {
        StateInit::Diffuse => {
            for i in [IDX_TM, IDX_TD, IDX_A, IDX_BETA] {
                p1[(i, i)] = DIFFUSE_VARIANCE;
            }
        }
        StateInit::Known {
            t_m,
            t_d,
            anthro,
            trend,
        } => {
            a1[IDX_TM] = t_m;
            a1[IDX_TD] = t_d;
            a1[IDX_A] = anthro;
            a1[IDX_BETA] = trend;
        }
    }

    let model = SystemMatrices::new_unchecked(tr, Some(entry), z, q, h, a1, p1);
    model.check_dimensions()?;
    Ok(model)
}

/// Observation panel in canonical row order together with the exogenous
/// natural forcing aligned to the same years.
#[derive(Debug, Clone, PartialEq)]
pub struct EbmData {
    pub panel: ObservationPanel,
    pub natural: Vec<f64>,
}

impl EbmData {
    /// Checks the canonical layout (GMSTs, ocean temperatures, OHCs, total
    /// forcing) and that natural forcing covers every year.
    pub fn new(panel: ObservationPanel, natural: Vec<f64>) -> Result<Self> {
        if natural.len() != panel.n_steps() {
            return Err(Error::Coverage(format!(
                "natural forcing has {} values for {} sample years",
                natural.len(),
                panel.n_steps()
            )));
        }
        if let Some(i) = natural.iter().position(|v| !v.is_finite()) {
            return Err(Error::Coverage(format!(
                "natural forcing missing in {}",
                panel.years()[i]
            )));
        }
        let kinds: Vec<SeriesKind> = panel.meta().iter().map(|m| m.kind).collect();
        let k = kinds.iter().take_while(|k| **k == SeriesKind::Gmst).count();
        let j = kinds[k..].iter().take_while(|k| **k == SeriesKind::OceanTemp).count();
        let canonical = kinds.len() == k + 2 * j + 1
            && kinds[k + j..k + 2 * j].iter().all(|k| *k == SeriesKind::Ohc)
            && kinds[k + 2 * j] == SeriesKind::ForcingTotal;
        if k == 0 || !canonical {
            return Err(Error::Data(
                "panel rows must be GMSTs, ocean temperatures, OHCs, then total forcing".into(),
            ));
        }
        Ok(Self { panel, natural })
    }

    pub fn n_gmst(&self) -> usize {
        self.panel.rows_of_kind(SeriesKind::Gmst).len()
    }

    pub fn n_ocean_pairs(&self) -> usize {
        self.panel.rows_of_kind(SeriesKind::OceanTemp).len()
    }

    /// Measurement configuration matching this panel, with default `f2x`.
    pub fn config(&self) -> MeasurementConfig {
        MeasurementConfig::new(self.n_gmst(), self.n_ocean_pairs())
    }

    /// Exact log-likelihood under the diffuse initialization.
    pub fn loglik(&self, params: &EbmParamVector, config: &MeasurementConfig) -> Result<f64> {
        let sys = build_system(params, config, &self.natural)?;
        Ok(sequential_filter(&sys, &self.panel)?.loglik)
    }

    /// Full filter output (means, covariances, innovations) at `params`.
    pub fn filter(&self, params: &EbmParamVector, config: &MeasurementConfig) -> Result<FilterResult> {
        let sys = build_system(params, config, &self.natural)?;
        kalman_filter(&sys, &self.panel)
    }
}

/// Equilibrium climate sensitivity `f2x / lambda` (deg C).
pub fn ecs(lambda: f64, f2x: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be positive")));
    }
    Ok(f2x / lambda)
}

/// Delta-method standard error of `f2x / lambda`, treating the two
/// estimates as independent.
pub fn ecs_std_error(lambda: f64, se_lambda: f64, f2x: f64, se_f2x: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be positive")));
    }
    let d_f2x = 1.0 / lambda;
    let d_lambda = f2x / (lambda * lambda);
    Ok(((d_f2x * se_f2x).powi(2) + (d_lambda * se_lambda).powi(2)).sqrt())
}
