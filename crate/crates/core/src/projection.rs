//! Scenario projections of the mixed-layer temperature under parameter
//! uncertainty.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::model::{build_system, EbmData, EbmParamVector, PhysicalParams, IDX_A, IDX_N, IDX_TD, IDX_TM};
use crate::ssm::{min_eigenvalue, psd_sqrt, sequential_filter, PSD_TOL};

pub const DEFAULT_DRAWS: usize = 10_000;
pub const DEFAULT_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];
/// Share of rejected draws above which a fan carries a warning.
pub const REJECTION_WARNING: f64 = 0.5;
/// Attempts per requested draw before giving up.
const MAX_ATTEMPTS_PER_DRAW: usize = 1000;

/// Total forcing over contiguous future years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPath {
    pub name: String,
    pub years: Vec<i32>,
    pub forcing: Vec<f64>,
}

impl ScenarioPath {
    pub fn new(name: impl Into<String>, years: Vec<i32>, forcing: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if years.is_empty() || years.len() != forcing.len() {
            return Err(Error::Data(format!(
                "scenario '{name}' needs matching, nonempty years and forcing"
            )));
        }
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Data(format!("scenario '{name}' years are not contiguous")));
        }
        if forcing.iter().any(|f| !f.is_finite()) {
            return Err(Error::Data(format!("scenario '{name}' has non-finite forcing")));
        }
        Ok(Self { name, years, forcing })
    }

    pub fn horizon(&self) -> usize {
        self.years.len()
    }
}

/// Temperatures and total forcing in the year before the projection starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardState {
    pub t_m: f64,
    pub t_d: f64,
    pub forcing: f64,
}

/// Noise-free recursion of the temperature block. Year `h` uses the forcing
/// of year `h - 1`, so the first step uses `init.forcing` and the last
/// scenario value never enters.
pub fn deterministic_forward(
    physical: &PhysicalParams,
    init: ForwardState,
    forcing: &[f64],
) -> Result<Vec<f64>> {
    physical.validate()?;
    if forcing.is_empty() {
        return Err(Error::InvalidParameter("scenario forcing is empty".into()));
    }
    Ok(forward_unchecked(physical, init, forcing))
}

fn forward_unchecked(physical: &PhysicalParams, init: ForwardState, forcing: &[f64]) -> Vec<f64> {
    let [mm, md, mf, dm, dd] = physical.temperature_coefficients();
    let (mut tm, mut td, mut f) = (init.t_m, init.t_d, init.forcing);
    forcing
        .iter()
        .map(|&next| {
            let tm_new = mm * tm + md * td + mf * f;
            td = dm * tm + dd * td;
            tm = tm_new;
            f = next;
            tm
        })
        .collect()
}

/// Linear-interpolation sample quantile (the usual "type 7" definition).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    pub draws: usize,
    pub seed: u64,
    pub quantiles: Vec<f64>,
}

impl ProjectionOptions {
    pub fn new(draws: usize, seed: u64) -> Self {
        Self {
            draws,
            seed,
            quantiles: DEFAULT_QUANTILES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFan {
    pub scenario: String,
    pub years: Vec<i32>,
    pub quantile_levels: Vec<f64>,
    /// `values[h][q]`: quantile `q` of projected `T_m` in year `h`.
    pub values: Vec<Vec<f64>>,
    pub draws: usize,
    pub seed: u64,
    pub rejected: usize,
    pub warning: Option<String>,
}

impl ProjectionFan {
    pub fn column(&self, q: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[q]).collect()
    }

    /// `year,q05,q50,q95` style table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year");
        for p in &self.quantile_levels {
            out.push_str(&format!(",q{:02}", (p * 100.0).round() as i64));
        }
        out.push('\n');
        for (y, row) in self.years.iter().zip(&self.values) {
            out.push_str(&y.to_string());
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Parameter draws with their end-of-sample states, shared by every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawSet {
    pub physical: Vec<PhysicalParams>,
    pub init: Vec<ForwardState>,
    pub rejected: usize,
    pub seed: u64,
}

impl DrawSet {
    pub fn len(&self) -> usize {
        self.physical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.physical.is_empty()
    }

    pub fn rejection_rate(&self) -> f64 {
        let total = self.rejected + self.len();
        if total == 0 {
            0.0
        } else {
            self.rejected as f64 / total as f64
        }
    }

    /// Projected `T_m` paths, one per draw.
    pub fn paths(&self, scenario: &ScenarioPath) -> Vec<Vec<f64>> {
        self.physical
            .iter()
            .zip(&self.init)
            .map(|(p, s)| forward_unchecked(p, *s, &scenario.forcing))
            .collect()
    }
}

/// Draws physical parameters from `N(theta_hat, vcov_physical)` with the noise
/// parameters fixed at their estimates. Draws that violate the physical
/// invariants or make the filter fail are redrawn. Each retained draw
/// re-runs the filter over the sample to get its own end-of-sample state.
pub fn draw_parameters(fit: &FitResult, data: &EbmData, draws: usize, seed: u64) -> Result<DrawSet> {
    if draws == 0 {
        return Err(Error::InvalidParameter("draw count must be positive".into()));
    }
    let vcov = &fit
        .uncertainty
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("fit has no parameter covariance".into()))?
        .vcov_physical;
    let sigma = DMatrix::from_fn(4, 4, |i, j| vcov[i][j]);
    let min_eig = min_eigenvalue(&sigma);
    if min_eig < -PSD_TOL * (1.0 + sigma.abs().max()) {
        return Err(Error::NotPsd {
            what: "physical parameter covariance".into(),
            min_eigenvalue: min_eig,
        });
    }
    let root = psd_sqrt(&sigma, "physical parameter covariance")?;
    let mean = DVector::from_row_slice(&fit.theta_hat.physical.as_array());
    let config = &fit.config;

    let one = |i: usize| -> Result<(PhysicalParams, ForwardState, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut rejected = 0;
        for _ in 0..MAX_ATTEMPTS_PER_DRAW {
            let z = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
            let x = &mean + &root * z;
            let physical = PhysicalParams::new(x[0], x[1], x[2], x[3]);
            if physical.is_valid() {
                let params = EbmParamVector {
                    physical,
                    noise: fit.theta_hat.noise.clone(),
                };
                if let Some(s) = end_state(&params, config, data) {
                    return Ok((physical, s, rejected));
                }
            }
            rejected += 1;
        }
        Err(Error::InvalidParameter(format!(
            "no valid parameter draw in {MAX_ATTEMPTS_PER_DRAW} attempts"
        )))
    };

    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        (0..draws).into_par_iter().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = (0..draws).map(one).collect::<Result<_>>()?;

    let mut set = DrawSet {
        physical: Vec::with_capacity(draws),
        init: Vec::with_capacity(draws),
        rejected: 0,
        seed,
    };
    for (p, s, r) in results {
        set.physical.push(p);
        set.init.push(s);
        set.rejected += r;
    }
    Ok(set)
}

fn end_state(
    params: &EbmParamVector,
    config: &crate::model::MeasurementConfig,
    data: &EbmData,
) -> Option<ForwardState> {
    let sys = build_system(params, config, &data.natural).ok()?;
    let a = sequential_filter(&sys, &data.panel).ok()?.final_mean;
    let s = ForwardState {
        t_m: a[IDX_TM],
        t_d: a[IDX_TD],
        forcing: a[IDX_N] + a[IDX_A],
    };
    [s.t_m, s.t_d, s.forcing].iter().all(|v| v.is_finite()).then_some(s)
}

/// Quantile fan of one scenario from a shared draw set. The scenario must
/// start in the year after the sample ends.
pub fn fan(
    draws: &DrawSet,
    data: &EbmData,
    scenario: &ScenarioPath,
    quantiles: &[f64],
) -> Result<ProjectionFan> {
    let last = *data.panel.years().last().ok_or(Error::NoObservations)?;
    if scenario.years[0] != last + 1 {
        return Err(Error::Coverage(format!(
            "scenario '{}' starts in {} but the sample ends in {last}",
            scenario.name, scenario.years[0]
        )));
    }
    if quantiles.is_empty() || quantiles.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter(format!("quantiles must lie in [0, 1]: {quantiles:?}")));
    }
    if draws.is_empty() {
        return Err(Error::InvalidParameter("draw set is empty".into()));
    }
    let mut levels = quantiles.to_vec();
    levels.sort_by(f64::total_cmp);
    let paths = draws.paths(scenario);
    let mut values = Vec::with_capacity(scenario.horizon());
    let mut column = vec![0.0; paths.len()];
    for h in 0..scenario.horizon() {
        for (c, p) in column.iter_mut().zip(&paths) {
            *c = p[h];
        }
        column.sort_by(f64::total_cmp);
        values.push(levels.iter().map(|&p| quantile_sorted(&column, p)).collect());
    }
    let rate = draws.rejection_rate();
    Ok(ProjectionFan {
        scenario: scenario.name.clone(),
        years: scenario.years.clone(),
        quantile_levels: levels,
        values,
        draws: draws.len(),
        seed: draws.seed,
        rejected: draws.rejected,
        warning: (rate > REJECTION_WARNING).then(|| {
            format!("{:.0}% of parameter draws were rejected and redrawn", 100.0 * rate)
        }),
    })
}

/// Fans for several scenarios from one set of parameter draws.
pub fn project(
    fit: &FitResult,
    data: &EbmData,
    scenarios: &[ScenarioPath],
    options: &ProjectionOptions,
) -> Result<Vec<ProjectionFan>> {
    let draws = draw_parameters(fit, data, options.draws, options.seed)?;
    scenarios
        .iter()
        .map(|s| fan(&draws, data, s, &options.quantiles))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::tests::small_data;
    use crate::estimation::{Convergence, ConvergenceStatus, Uncertainty};
    use crate::model::{ecs, DEFAULT_F2X};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> PhysicalParams {
        EbmParamVector::reference_dgp().physical
    }

    const ZERO: ForwardState = ForwardState {
        t_m: 0.0,
        t_d: 0.0,
        forcing: 0.0,
    };

    #[test]
    fn zero_input_gives_zero_path() {
        let path = deterministic_forward(&reference(), ZERO, &[0.0; 50]).unwrap();
        assert!(path.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_forcing_converges_to_equilibrium() {
        let p = reference();
        let init = ForwardState {
            forcing: DEFAULT_F2X,
            ..ZERO
        };
        let path = deterministic_forward(&p, init, &vec![DEFAULT_F2X; 20_000]).unwrap();
        let limit = ecs(p.lambda, DEFAULT_F2X).unwrap();
        assert_relative_eq!(limit, 3.6294, epsilon = 1e-4);
        assert_relative_eq!(*path.last().unwrap(), limit, epsilon = 1e-8);
    }

    #[test]
    fn first_step_uses_initial_forcing() {
        let p = reference();
        let init = ForwardState {
            forcing: 2.0,
            ..ZERO
        };
        let path = deterministic_forward(&p, init, &[100.0, 0.0]).unwrap();
        assert_relative_eq!(path[0], 2.0 / p.c_m, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_deep_ocean_example() {
        // gamma = 0: T_m relaxes alone; T_d stays at its initial value.
        let p = PhysicalParams::new(1.0, 0.0, 10.0, 100.0);
        let init = ForwardState {
            t_m: 1.0,
            t_d: 5.0,
            forcing: 0.0,
        };
        let path = deterministic_forward(&p, init, &[0.0; 3]).unwrap();
        assert_relative_eq!(path[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(path[2], 0.729, epsilon = 1e-15);
    }

    #[test]
    fn forward_rejects_invalid_inputs() {
        assert!(deterministic_forward(&reference(), ZERO, &[]).is_err());
        let bad = PhysicalParams::new(-1.0, 1.0, 10.0, 100.0);
        assert!(deterministic_forward(&bad, ZERO, &[1.0]).is_err());
    }

    #[test]
    fn scenario_validation() {
        assert!(ScenarioPath::new("a", vec![2021, 2023], vec![1.0, 2.0]).is_err());
        assert!(ScenarioPath::new("a", vec![2021], vec![f64::NAN]).is_err());
        assert!(ScenarioPath::new("a", vec![], vec![]).is_err());
        assert!(ScenarioPath::new("a", vec![2021, 2022], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn quantiles_interpolate() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&x, 0.5), 3.0);
        assert_eq!(quantile_sorted(&x, 0.0), 1.0);
        assert_eq!(quantile_sorted(&x, 1.0), 5.0);
        assert_relative_eq!(quantile_sorted(&x, 0.1), 1.4);
    }

    proptest! {
        #[test]
        fn forward_is_homogeneous(
            tm in -2.0f64..2.0, td in -1.0f64..1.0, f0 in -3.0f64..3.0,
            f in proptest::collection::vec(-3.0f64..5.0, 1..60),
        ) {
            let p = reference();
            let s = ForwardState { t_m: tm, t_d: td, forcing: f0 };
            let d = ForwardState { t_m: 2.0 * tm, t_d: 2.0 * td, forcing: 2.0 * f0 };
            let a = deterministic_forward(&p, s, &f).unwrap();
            let f2: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
            let b = deterministic_forward(&p, d, &f2).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(2.0 * x, *y);
            }
        }

        #[test]
        fn forward_is_monotone_in_forcing(
            f in proptest::collection::vec(-3.0f64..5.0, 1..60),
            bump in proptest::collection::vec(0.0f64..2.0, 60),
        ) {
            let p = reference();
            let g: Vec<f64> = f.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let init = ForwardState { forcing: 1.0, ..ZERO };
            let a = deterministic_forward(&p, init, &f).unwrap();
            let b = deterministic_forward(&p, init, &g).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(y >= x);
            }
        }
    }

    fn fake_fit(data: &EbmData, theta: &EbmParamVector, vcov: [[f64; 4]; 4]) -> FitResult {
        let config = data.config();
        FitResult {
            config,
            names: theta.names(),
            theta_hat: theta.clone(),
            x_hat: theta.transform().unwrap(),
            loglik: 0.0,
            init_loglik: 0.0,
            ecs_hat: ecs(theta.physical.lambda, DEFAULT_F2X).unwrap(),
            uncertainty: Some(Uncertainty {
                se: vec![None; theta.values().len()],
                vcov_physical: vcov,
                cv: [None; 4],
                ecs_se: None,
                pseudo_inverse: false,
                vcov_clipped: false,
                non_identified: vec![],
            }),
            convergence: Convergence {
                status: ConvergenceStatus::Converged,
                evaluations: 0,
                iterations: 0,
                restarts_used: 0,
            },
            at_floor: vec![],
        }
    }

    fn scenario(data: &EbmData, level: f64) -> ScenarioPath {
        let start = data.panel.years().last().unwrap() + 1;
        let years: Vec<i32> = (start..start + 30).collect();
        let forcing = (0..30).map(|h| level + 0.03 * h as f64).collect();
        ScenarioPath::new(format!("s{level}"), years, forcing).unwrap()
    }

    fn diag_vcov(theta: &EbmParamVector, cv: f64) -> [[f64; 4]; 4] {
        let v = theta.physical.as_array();
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            m[i][i] = (cv * v[i]).powi(2);
        }
        m
    }

    #[test]
    fn degenerate_covariance_collapses_fan() {
        let (data, theta, _) = small_data(5);
        let fit = fake_fit(&data, &theta, [[0.0; 4]; 4]);
        let fans = project(&fit, &data, &[scenario(&data, 2.0)], &ProjectionOptions::new(50, 1)).unwrap();
        for row in &fans[0].values {
            assert_eq!(row[0], row[1]);
            assert_eq!(row[1], row[2]);
        }
        assert_eq!(fans[0].rejected, 0);
        assert!(fans[0].warning.is_none());
    }

    #[test]
    fn fan_is_ordered_deterministic_and_dominated() {
        let (data, theta, _) = small_data(5);
        let fit = fake_fit(&data, &theta, diag_vcov(&theta, 0.1));
        let (lo, hi) = (scenario(&data, 1.0), scenario(&data, 3.0));
        let opts = ProjectionOptions::new(300, 11);
        let fans = project(&fit, &data, &[lo.clone(), hi.clone()], &opts).unwrap();
        assert_eq!(fans, project(&fit, &data, &[lo.clone(), hi.clone()], &opts).unwrap());
        for f in &fans {
            for row in &f.values {
                assert!(row[0] <= row[1] && row[1] <= row[2]);
            }
        }
        for (a, b) in fans[0].values.iter().zip(&fans[1].values) {
            for q in 0..3 {
                assert!(b[q] >= a[q]);
            }
        }
        let draws = draw_parameters(&fit, &data, 300, 11).unwrap();
        for (pa, pb) in draws.paths(&lo).iter().zip(draws.paths(&hi)) {
            assert!(pa.iter().zip(&pb).all(|(x, y)| y >= x));
        }
        assert_ne!(fans[0].values, project(&fit, &data, &[lo], &ProjectionOptions::new(300, 12)).unwrap()[0].values);
    }

    #[test]
    fn heavy_rejection_warns() {
        let (data, theta, _) = small_data(5);
        let fit = fake_fit(&data, &theta, diag_vcov(&theta, 3.0));
        let fan = &project(&fit, &data, &[scenario(&data, 2.0)], &ProjectionOptions::new(40, 3)).unwrap()[0];
        assert_eq!(fan.draws, 40);
        assert!(fan.rejected > 40);
        assert!(fan.warning.is_some());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (data, theta, _) = small_data(5);
        let mut vcov = [[0.0; 4]; 4];
        vcov[0][0] = -1.0;
        let fit = fake_fit(&data, &theta, vcov);
        assert!(matches!(
            project(&fit, &data, &[scenario(&data, 1.0)], &ProjectionOptions::new(5, 1)),
            Err(Error::NotPsd { .. })
        ));
        let fit = fake_fit(&data, &theta, [[0.0; 4]; 4]);
        let mut late = scenario(&data, 1.0);
        late.years.iter_mut().for_each(|y| *y += 1);
        assert!(matches!(
            project(&fit, &data, &[late], &ProjectionOptions::new(5, 1)),
            Err(Error::Coverage(_))
        ));
        let mut no_unc = fit.clone();
        no_unc.uncertainty = None;
        assert!(project(&no_unc, &data, &[scenario(&data, 1.0)], &ProjectionOptions::new(5, 1)).is_err());
    }

    #[test]
    fn csv_layout() {
        let (data, theta, _) = small_data(5);
        let fit = fake_fit(&data, &theta, [[0.0; 4]; 4]);
        let fan = &project(&fit, &data, &[scenario(&data, 1.0)], &ProjectionOptions::new(3, 1)).unwrap()[0];
        let csv = fan.to_csv();
        assert!(csv.starts_with("year,q05,q50,q95\n"));
        assert_eq!(csv.lines().count(), 31);
    }
}
