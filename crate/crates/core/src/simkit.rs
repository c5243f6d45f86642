//! Simulated worker-firm panels and Monte Carlo studies.
//!
//! Worker effects are correlated with the effect of the worker's first firm
//! through a latent Gaussian copula. A share of workers moves once, to a
//! firm drawn with probability increasing in the match of latent effects.
//! Mobility and covariates are drawn before, and independently of, the
//! outcome shocks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::avgeff::PanelPair;
use crate::error::{Error, Result};
use crate::linmodel::{decomposition_forms, estimate_beta, QuadraticForm, QuadraticFormPlan};
use crate::logitmodel::{
    blocks_from_network, fit_prepared, outcome_distribution, prepare_blocks, GmmOptions, LogitBlock, MomentBuilder,
};
use crate::netcore::{build_design, DesignMatrices, DesignOptions, Edge, NetworkData, PatternKind, RawEdge};

/// RNG streams of one seed: network and effects, covariates, outcomes.
const STREAM_NETWORK: u64 = 0;
const STREAM_COVARIATES: u64 = 1;
const STREAM_OUTCOMES: u64 = 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HeterogeneityLaw {
    Normal {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    /// `high` with probability `p_high`, else `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
}

fn one() -> f64 {
    1.0
}

impl Default for HeterogeneityLaw {
    fn default() -> Self {
        HeterogeneityLaw::Normal { mean: 0.0, sd: 1.0 }
    }
}

impl HeterogeneityLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            HeterogeneityLaw::Normal { mean, sd } if !mean.is_finite() || !(sd >= 0.0) || !sd.is_finite() => {
                Err(Error::Config(format!("normal law needs finite mean and sd >= 0, got ({mean}, {sd})")))
            }
            HeterogeneityLaw::TwoPoint { p_high, .. } if !(p_high > 0.0 && p_high < 1.0) => {
                Err(Error::Config(format!("two-point law needs 0 < p_high < 1, got {p_high}")))
            }
            _ => Ok(()),
        }
    }

    /// Maps a standard normal draw to the law, monotonically.
    fn transform(&self, z: f64) -> f64 {
        match *self {
            HeterogeneityLaw::Normal { mean, sd } => mean + sd * z,
            HeterogeneityLaw::TwoPoint { low, high, p_high } => {
                let cut = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - p_high);
                if z > cut {
                    high
                } else {
                    low
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Linear {
        #[serde(default)]
        beta: Vec<f64>,
        sigma2: f64,
    },
    Logit {
        #[serde(default)]
        theta: Vec<f64>,
    },
}

impl ModelSpec {
    pub fn n_covariates(&self) -> usize {
        match self {
            ModelSpec::Linear { beta, .. } => beta.len(),
            ModelSpec::Logit { theta } => theta.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_workers: usize,
    pub n_firms: usize,
    pub n_periods: usize,
    pub mover_share: f64,
    #[serde(default)]
    pub sorting: f64,
    #[serde(default)]
    pub worker_effects: HeterogeneityLaw,
    #[serde(default)]
    pub firm_effects: HeterogeneityLaw,
    pub model: ModelSpec,
    /// Covariates constant within a job spell; defaults to true for logit
    /// models and false for linear ones.
    #[serde(default)]
    pub spell_covariates: Option<bool>,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_workers == 0 || self.n_firms == 0 || self.n_periods == 0 {
            return Err(Error::Config("n_workers, n_firms and n_periods must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mover_share) {
            return Err(Error::Config(format!("mover_share must lie in [0, 1], got {}", self.mover_share)));
        }
        if !(-1.0..=1.0).contains(&self.sorting) {
            return Err(Error::Config(format!("sorting must lie in [-1, 1], got {}", self.sorting)));
        }
        self.worker_effects.validate()?;
        self.firm_effects.validate()?;
        if let ModelSpec::Linear { sigma2, .. } = self.model {
            if !(sigma2 >= 0.0) || !sigma2.is_finite() {
                return Err(Error::Config(format!("sigma2 must be finite and nonnegative, got {sigma2}")));
            }
        }
        if self.mover_share > 0.0 && self.n_firms < 2 {
            return Err(Error::InfeasibleConfig("movers need at least two firms".into()));
        }
        if self.mover_share > 0.0 && self.n_periods < 2 {
            return Err(Error::InfeasibleConfig("movers need at least two periods".into()));
        }
        Ok(())
    }

    fn uses_spell_covariates(&self) -> bool {
        self.spell_covariates.unwrap_or(matches!(self.model, ModelSpec::Logit { .. }))
    }
}

/// True effects by original worker and firm index, and the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truths {
    pub worker_effects: Vec<f64>,
    pub firm_effects: Vec<f64>,
    pub model: ModelSpec,
}

impl Truths {
    /// Effects aligned with the dense indices of `net`.
    pub fn dense_effects(&self, net: &NetworkData) -> (Vec<f64>, Vec<f64>) {
        let w = net.ids.workers.iter().map(|&id| self.worker_effects[id as usize]).collect();
        let f = net.ids.firms.iter().map(|&id| self.firm_effects[id as usize]).collect();
        (w, f)
    }
}

/// Network and covariates (outcomes set to zero) with the true effects.
pub fn simulate_network(config: &SimConfig) -> Result<(NetworkData, Truths)> {
    config.validate()?;
    let mut rng = rng_for(config.seed, STREAM_NETWORK);
    let rho = config.sorting;
    let firm_z: Vec<f64> = (0..config.n_firms).map(|_| rng.sample(StandardNormal)).collect();
    let firm_effects: Vec<f64> = firm_z.iter().map(|&z| config.firm_effects.transform(z)).collect();

    let mut worker_effects = Vec::with_capacity(config.n_workers);
    let mut spells: Vec<(usize, Option<(usize, usize)>)> = Vec::with_capacity(config.n_workers);
    for _ in 0..config.n_workers {
        let first = rng.gen_range(0..config.n_firms);
        let e: f64 = rng.sample(StandardNormal);
        let z = rho * firm_z[first] + (1.0 - rho * rho).sqrt() * e;
        worker_effects.push(config.worker_effects.transform(z));
        let mover = config.mover_share > 0.0 && rng.gen_bool(config.mover_share);
        let second = if mover {
            let weights: Vec<f64> = (0..config.n_firms)
                .map(|f| if f == first { 0.0 } else { (rho * z * firm_z[f]).exp() })
                .collect();
            let dist = WeightedIndex::new(&weights).map_err(|e| Error::InfeasibleConfig(e.to_string()))?;
            let to = dist.sample(&mut rng);
            let switch = rng.gen_range(1..config.n_periods);
            Some((to, switch))
        } else {
            None
        };
        spells.push((first, second));
    }

    let k = config.model.n_covariates();
    let spell_x = config.uses_spell_covariates();
    let mut xrng = rng_for(config.seed, STREAM_COVARIATES);
    let mut raw = Vec::with_capacity(config.n_workers * config.n_periods);
    let spell_draw = |rng: &mut ChaCha8Rng| (0..k).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>();
    for (w, &(first, second)) in spells.iter().enumerate() {
        let x_first = spell_draw(&mut xrng);
        let x_second = if second.is_some() { spell_draw(&mut xrng) } else { Vec::new() };
        for t in 0..config.n_periods {
            let (firm, spell_x_t) = match second {
                Some((to, switch)) if t >= switch => (to, &x_second),
                _ => (first, &x_first),
            };
            let x = if spell_x { spell_x_t.clone() } else { spell_draw(&mut xrng) };
            raw.push(RawEdge {
                worker: w as i64,
                firm: firm as i64,
                period: t as i64,
                y: 0.0,
                x,
                row: raw.len() + 2,
            });
        }
    }
    let names = (1..=k).map(|i| format!("x{i}")).collect();
    let net = NetworkData::from_raw(raw, names)?;
    Ok((
        net,
        Truths {
            worker_effects,
            firm_effects,
            model: config.model.clone(),
        },
    ))
}

fn logistic_draw(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    (u / (1.0 - u)).ln()
}

/// Redraws every outcome of `net` from the model, keeping network and covariates.
pub fn simulate_outcomes(net: &NetworkData, truths: &Truths, outcome_seed: u64) -> Result<NetworkData> {
    let mut rng = rng_for(outcome_seed, STREAM_OUTCOMES);
    let (alpha, psi) = truths.dense_effects(net);
    let mut out = net.clone();
    for e in &mut out.edges {
        let (coef, sigma) = match &truths.model {
            ModelSpec::Linear { beta, sigma2 } => (beta, Some(sigma2.sqrt())),
            ModelSpec::Logit { theta } => (theta, None),
        };
        if coef.len() != e.x.len() {
            return Err(Error::DimensionMismatch("covariates do not match the model".into()));
        }
        let index = alpha[e.worker] + psi[e.firm] + e.x.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
        e.y = match sigma {
            Some(s) => index + s * rng.sample::<f64, _>(StandardNormal),
            None => (index + logistic_draw(&mut rng) > 0.0) as u8 as f64,
        };
    }
    Ok(out)
}

/// Network, covariates and outcomes, all determined by `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<(NetworkData, Truths)> {
    let (net, truths) = simulate_network(config)?;
    let net = simulate_outcomes(&net, &truths, config.seed)?;
    Ok((net, truths))
}

/// Independent two-worker, two-firm blocks of movers going the same way,
/// with heterogeneity and spell covariates drawn i.i.d. standard normal.
pub fn config_c_blocks(n_blocks: usize, theta: f64, builder: MomentBuilder, seed: u64) -> Result<Vec<LogitBlock>> {
    let mut rng = rng_for(seed, STREAM_NETWORK);
    let mut x1 = DMatrix::zeros(4, 4);
    for (r, (w, f)) in [(0, 2), (0, 3), (1, 2), (1, 3)].into_iter().enumerate() {
        x1[(r, w)] = 1.0;
        x1[(r, f)] = 1.0;
    }
    (0..n_blocks)
        .map(|_| {
            let a = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let eta = &x1 * &a + &x * theta;
            let y: Vec<u8> = eta.iter().map(|e| (e + logistic_draw(&mut rng) > 0.0) as u8).collect();
            let yv = DVector::from_iterator(4, y.iter().map(|&v| v as f64));
            let dm = DesignMatrices::from_parts(yv, x1.clone(), DMatrix::from_column_slice(4, 1, x.as_slice()))?;
            Ok(LogitBlock { y, dm, builder })
        })
        .collect()
}

/// Two-period observations with a binary covariate that switches, in either
/// direction with equal probability, and standard normal heterogeneity.
pub fn mover_pairs(n: usize, theta: f64, seed: u64) -> Vec<PanelPair> {
    let mut rng = rng_for(seed, STREAM_NETWORK);
    (0..n)
        .map(|_| {
            let x = if rng.gen_bool(0.5) { [0.0, 1.0] } else { [1.0, 0.0] };
            let a: f64 = rng.sample(StandardNormal);
            let y = [
                (a + theta * x[0] + logistic_draw(&mut rng) > 0.0) as u8,
                (a + theta * x[1] + logistic_draw(&mut rng) > 0.0) as u8,
            ];
            PanelPair { y, x }
        })
        .collect()
}

/// Pearson chi-square test of simulated outcome frequencies against the
/// enumerated logit distribution of a small design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn outcome_frequency_test(
    dm: &DesignMatrices,
    a: &DVector<f64>,
    theta: &DVector<f64>,
    draws: usize,
    seed: u64,
) -> Result<FrequencyTest> {
    let dist = outcome_distribution(dm, a, theta, 12)?;
    let mut eta = &dm.x1 * a;
    if dm.k() > 0 {
        eta += &dm.x2 * theta;
    }
    let n = dm.n();
    let mut counts = vec![0usize; dist.len()];
    let mut rng = rng_for(seed, STREAM_OUTCOMES);
    for _ in 0..draws {
        let mut idx = 0usize;
        for e in eta.iter() {
            idx = (idx << 1) | (e + logistic_draw(&mut rng) > 0.0) as usize;
        }
        counts[idx] += 1;
    }
    let statistic: f64 = dist
        .iter()
        .zip(&counts)
        .map(|((_, p), &c)| {
            let expected = p * draws as f64;
            if expected > 0.0 {
                (c as f64 - expected).powi(2) / expected
            } else {
                0.0
            }
        })
        .sum();
    let df = (1usize << n) - 1;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(FrequencyTest {
        statistic,
        df,
        p_value: 1.0 - chi.cdf(statistic),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceComponent {
    WorkerVariance,
    FirmVariance,
    Covariance,
}

/// What each replication estimates and which true value it is compared to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "estimator", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    /// Edge-weighted variance component on the largest connected component,
    /// trace-corrected or plug-in.
    Variance { component: VarianceComponent, corrected: bool },
    /// One coefficient of the quasi-differencing estimator.
    LinearBeta { index: usize },
    /// `theta` by GMM on the two-period mover patterns that carry information.
    LogitTheta { index: usize },
}

impl EstimatorSpec {
    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::Variance { component, corrected } => {
                let c = match component {
                    VarianceComponent::WorkerVariance => "var_worker",
                    VarianceComponent::FirmVariance => "var_firm",
                    VarianceComponent::Covariance => "cov_worker_firm",
                };
                format!("{c}_{}", if *corrected { "corrected" } else { "plug_in" })
            }
            EstimatorSpec::LinearBeta { index } => format!("beta_{index}"),
            EstimatorSpec::LogitTheta { index } => format!("theta_{index}"),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let variance = |component, corrected| Some(EstimatorSpec::Variance { component, corrected });
        match name {
            "firm-variance" => variance(VarianceComponent::FirmVariance, true),
            "firm-variance-plugin" => variance(VarianceComponent::FirmVariance, false),
            "worker-variance" => variance(VarianceComponent::WorkerVariance, true),
            "worker-variance-plugin" => variance(VarianceComponent::WorkerVariance, false),
            "covariance" => variance(VarianceComponent::Covariance, true),
            "covariance-plugin" => variance(VarianceComponent::Covariance, false),
            _ => {
                let (head, index) = match name.split_once(':') {
                    Some((h, i)) => (h, i.parse().ok()?),
                    None => (name, 0),
                };
                match head {
                    "beta" => Some(EstimatorSpec::LinearBeta { index }),
                    "theta" => Some(EstimatorSpec::LogitTheta { index }),
                    _ => None,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleMode {
    /// Network, effects and covariates fixed at `config.seed`; outcomes redrawn.
    #[default]
    Outcomes,
    /// Everything redrawn from `config.seed + rep`.
    Everything,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub mc_se: f64,
    /// Mean of the per-replication true values.
    pub truth: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub n_reps: usize,
    pub mode: ResampleMode,
    pub seed: u64,
    pub summaries: BTreeMap<String, McSummary>,
}

/// Per-replication evaluation of every estimator against its truth.
type Draw = Vec<Option<(f64, f64)>>;

struct LinearContext {
    sub: NetworkData,
    dm: DesignMatrices,
    forms: Option<Vec<(VarianceComponent, QuadraticForm)>>,
}

fn linear_context(net: &NetworkData, need_forms: bool) -> Result<LinearContext> {
    let (sub, _, _) = net.largest_component();
    let dm = build_design(&sub, DesignOptions::default())?;
    let forms = if need_forms {
        let f = decomposition_forms(&dm)?;
        Some(vec![
            (VarianceComponent::WorkerVariance, f.worker),
            (VarianceComponent::FirmVariance, f.firm),
            (VarianceComponent::Covariance, f.cross),
        ])
    } else {
        None
    };
    Ok(LinearContext { sub, dm, forms })
}

fn evaluate_linear(ctx: &LinearContext, net: &NetworkData, truths: &Truths, specs: &[EstimatorSpec]) -> Draw {
    // Outcomes of the largest component, in its edge order.
    let (sub_now, _, _) = net.largest_component();
    let y = DVector::from_iterator(sub_now.n_edges(), sub_now.edges.iter().map(|e| e.y));
    let (alpha, psi) = truths.dense_effects(&ctx.sub);
    let a = ctx.dm.normalized_effects(&alpha, &psi);
    let mut fits = BTreeMap::new();
    specs
        .iter()
        .map(|spec| match *spec {
            EstimatorSpec::Variance { component, corrected } => {
                let forms = ctx.forms.as_ref()?;
                let (_, qf) = forms.iter().find(|(c, _)| *c == component)?;
                let key = component as usize;
                let fit = (*fits
                    .entry(key)
                    .or_insert_with(|| QuadraticFormPlan::new(&ctx.dm, qf.clone()).and_then(|p| p.fit(&y)).ok()))?;
                let truth = qf.evaluate(a.as_ref().ok()?);
                Some((if corrected { fit.corrected } else { fit.plug_in }, truth))
            }
            EstimatorSpec::LinearBeta { index } => {
                let ModelSpec::Linear { beta, .. } = &truths.model else { return None };
                let b = estimate_beta(&y, &ctx.dm).ok()?;
                Some((*b.get(index)?, *beta.get(index)?))
            }
            EstimatorSpec::LogitTheta { .. } => None,
        })
        .collect()
}

fn evaluate_logit(net: &NetworkData, truths: &Truths, specs: &[EstimatorSpec], options: &GmmOptions) -> Draw {
    let ModelSpec::Logit { theta } = &truths.model else {
        return vec![None; specs.len()];
    };
    let fit = (|| {
        let blocks = blocks_from_network(net, &[PatternKind::ConfigC, PatternKind::ConfigF], MomentBuilder::Discovered)?;
        fit_prepared(&prepare_blocks(&blocks, options.cap)?, options)
    })()
    .ok();
    specs
        .iter()
        .map(|spec| match *spec {
            EstimatorSpec::LogitTheta { index } => {
                let f = fit.as_ref()?;
                Some((*f.theta.get(index)?, *theta.get(index)?))
            }
            _ => None,
        })
        .collect()
}

fn summarize(values: &[Option<(f64, f64)>]) -> McSummary {
    let ok: Vec<(f64, f64)> = values.iter().flatten().copied().filter(|(e, t)| e.is_finite() && t.is_finite()).collect();
    let n = ok.len() as f64;
    let n_failed = values.len() - ok.len();
    if ok.is_empty() {
        return McSummary {
            mean: f64::NAN,
            bias: f64::NAN,
            sd: f64::NAN,
            mc_se: f64::NAN,
            truth: f64::NAN,
            n_ok: 0,
            n_failed,
        };
    }
    let mean = ok.iter().map(|p| p.0).sum::<f64>() / n;
    let truth = ok.iter().map(|p| p.1).sum::<f64>() / n;
    let bias = ok.iter().map(|p| p.0 - p.1).sum::<f64>() / n;
    let var = |f: &dyn Fn(&(f64, f64)) -> f64, m: f64| {
        if ok.len() < 2 {
            f64::NAN
        } else {
            ok.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>() / (n - 1.0)
        }
    };
    let sd = var(&|p| p.0, mean).sqrt();
    let mc_se = (var(&|p| p.0 - p.1, bias) / n).sqrt();
    McSummary {
        mean,
        bias,
        sd,
        mc_se,
        truth,
        n_ok: ok.len(),
        n_failed,
    }
}

/// Runs `n_reps` replications; replication `r` draws outcomes (or everything)
/// from seed `config.seed + r`. Estimator failures are counted, not fatal.
pub fn mc_study(config: &SimConfig, specs: &[EstimatorSpec], n_reps: usize, mode: ResampleMode) -> Result<McReport> {
    if n_reps < 2 {
        return Err(Error::InvalidParameter("a Monte Carlo study needs at least two replications".into()));
    }
    config.validate()?;
    let is_linear = matches!(config.model, ModelSpec::Linear { .. });
    let need_forms = specs.iter().any(|s| matches!(s, EstimatorSpec::Variance { .. }));
    let gmm = GmmOptions::default();
    let mut draws: Vec<Draw> = Vec::with_capacity(n_reps);
    let fixed = match mode {
        ResampleMode::Outcomes => {
            let (net, truths) = simulate_network(config)?;
            let ctx = if is_linear { Some(linear_context(&net, need_forms)?) } else { None };
            Some((net, truths, ctx))
        }
        ResampleMode::Everything => None,
    };
    for r in 0..n_reps {
        let rep_seed = config.seed.wrapping_add(r as u64);
        let draw = match &fixed {
            Some((net, truths, ctx)) => {
                let data = simulate_outcomes(net, truths, rep_seed)?;
                match ctx {
                    Some(ctx) => evaluate_linear(ctx, &data, truths, specs),
                    None => evaluate_logit(&data, truths, specs, &gmm),
                }
            }
            None => {
                let rep_config = SimConfig { seed: rep_seed, ..config.clone() };
                let (data, truths) = simulate(&rep_config)?;
                if is_linear {
                    match linear_context(&data, need_forms) {
                        Ok(ctx) => evaluate_linear(&ctx, &data, &truths, specs),
                        Err(_) => vec![None; specs.len()],
                    }
                } else {
                    evaluate_logit(&data, &truths, specs, &gmm)
                }
            }
        };
        draws.push(draw);
    }
    let summaries = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let column: Vec<Option<(f64, f64)>> = draws.iter().map(|d| d[i]).collect();
            (spec.name(), summarize(&column))
        })
        .collect();
    Ok(McReport {
        n_reps,
        mode,
        seed: config.seed,
        summaries,
    })
}

/// Every edge's `(worker, firm, period, x)` in order, for checking that two
/// datasets share a network and covariates.
pub fn network_fingerprint(net: &NetworkData) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for Edge { worker, firm, period, x, .. } in &net.edges {
        (worker, firm, period).hash(&mut h);
        for v in x {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_config(seed: u64) -> SimConfig {
        SimConfig {
            n_workers: 300,
            n_firms: 10,
            n_periods: 2,
            mover_share: 0.3,
            sorting: 0.5,
            worker_effects: HeterogeneityLaw::default(),
            firm_effects: HeterogeneityLaw::default(),
            model: ModelSpec::Linear { beta: vec![0.5], sigma2: 1.0 },
            spell_covariates: None,
            seed,
        }
    }

    #[test]
    fn same_seed_same_data() {
        let (a, ta) = simulate(&linear_config(7)).unwrap();
        let (b, tb) = simulate(&linear_config(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = simulate(&linear_config(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_movers_means_one_firm_per_worker() {
        let cfg = SimConfig { mover_share: 0.0, n_periods: 4, ..linear_config(1) };
        let (net, _) = simulate(&cfg).unwrap();
        let mut firm_of = vec![None; net.n_workers];
        for e in &net.edges {
            let f = firm_of[e.worker].get_or_insert(e.firm);
            assert_eq!(*f, e.firm);
        }
    }

    #[test]
    fn movers_need_two_firms() {
        let cfg = SimConfig { n_firms: 1, ..linear_config(1) };
        assert!(matches!(simulate(&cfg), Err(Error::InfeasibleConfig(_))));
        let cfg = SimConfig { mover_share: 1.5, ..linear_config(1) };
        assert!(matches!(simulate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn sorting_shows_up_in_matched_effects() {
        let cfg = SimConfig { n_workers: 10_000, n_firms: 100, sorting: 0.9, ..linear_config(3) };
        let (net, truths) = simulate_network(&cfg).unwrap();
        let (alpha, psi) = truths.dense_effects(&net);
        let pairs: Vec<(f64, f64)> = net.edges.iter().map(|e| (alpha[e.worker], psi[e.firm])).collect();
        let n = pairs.len() as f64;
        let (ma, mp) = pairs.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
        let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mp)).sum::<f64>() / n;
        let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
        let vp = pairs.iter().map(|p| (p.1 - mp).powi(2)).sum::<f64>() / n;
        assert!(cov / (va * vp).sqrt() > 0.5);
    }

    #[test]
    fn outcome_redraws_keep_network_and_covariates() {
        let (net, truths) = simulate_network(&linear_config(4)).unwrap();
        let a = simulate_outcomes(&net, &truths, 1).unwrap();
        let b = simulate_outcomes(&net, &truths, 2).unwrap();
        assert_eq!(network_fingerprint(&a), network_fingerprint(&b));
        assert_eq!(network_fingerprint(&a), network_fingerprint(&net));
        assert_ne!(a.edges[0].y, b.edges[0].y);
    }

    #[test]
    fn spell_covariates_are_constant_within_spells() {
        let cfg = SimConfig {
            model: ModelSpec::Logit { theta: vec![1.0] },
            n_periods: 3,
            ..linear_config(5)
        };
        let (net, _) = simulate(&cfg).unwrap();
        let mut seen: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for e in &net.edges {
            assert!(e.y == 0.0 || e.y == 1.0);
            let x = seen.entry((e.worker, e.firm)).or_insert_with(|| e.x.clone());
            assert_eq!(*x, e.x);
        }
    }

    #[test]
    fn two_point_law_hits_its_share() {
        let law = HeterogeneityLaw::TwoPoint { low: -1.0, high: 2.0, p_high: 0.3 };
        let cfg = SimConfig { worker_effects: law, n_workers: 20_000, sorting: 0.0, ..linear_config(6) };
        let (_, truths) = simulate_network(&cfg).unwrap();
        let share = truths.worker_effects.iter().filter(|&&v| v == 2.0).count() as f64 / 20_000.0;
        assert!((share - 0.3).abs() < 0.02);
        assert!(truths.worker_effects.iter().all(|&v| v == -1.0 || v == 2.0));
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            n_workers = 50
            n_firms = 5
            n_periods = 2
            mover_share = 0.2
            sorting = 0.3
            seed = 11
            [worker_effects]
            law = "two-point"
            low = 0.0
            high = 1.0
            p_high = 0.5
            [model]
            kind = "linear"
            beta = [1.0]
            sigma2 = 0.5
        "#;
        let cfg = SimConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.n_workers, 50);
        assert_eq!(cfg.firm_effects, HeterogeneityLaw::default());
        assert!(SimConfig::from_toml_str("n_workers = 1").is_err());
    }

    #[test]
    fn small_study_is_reproducible_and_counts_failures() {
        let cfg = linear_config(9);
        let specs = [
            EstimatorSpec::parse("firm-variance").unwrap(),
            EstimatorSpec::parse("firm-variance-plugin").unwrap(),
            EstimatorSpec::parse("beta").unwrap(),
            EstimatorSpec::parse("theta").unwrap(),
        ];
        let a = mc_study(&cfg, &specs, 2, ResampleMode::Outcomes).unwrap();
        let b = mc_study(&cfg, &specs, 2, ResampleMode::Outcomes).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.summaries["theta_0"].n_failed, 2);
        assert_eq!(a.summaries["beta_0"].n_ok, 2);
        assert!(mc_study(&cfg, &specs, 1, ResampleMode::Outcomes).is_err());
        assert_eq!(EstimatorSpec::parse("theta:2"), Some(EstimatorSpec::LogitTheta { index: 2 }));
        assert_eq!(EstimatorSpec::parse("beta:x"), None);
        assert_eq!(EstimatorSpec::parse("betas"), None);
        let c = mc_study(&cfg, &specs[..1], 2, ResampleMode::Everything).unwrap();
        assert_eq!(c.summaries["var_firm_corrected"].n_ok, 2);
    }

    #[test]
    fn linear_study_is_unbiased_when_corrected() {
        let cfg = SimConfig { n_workers: 200, n_firms: 8, mover_share: 0.1, ..linear_config(10) };
        let specs = [
            EstimatorSpec::Variance { component: VarianceComponent::FirmVariance, corrected: true },
            EstimatorSpec::LinearBeta { index: 0 },
        ];
        let r = mc_study(&cfg, &specs, 400, ResampleMode::Outcomes).unwrap();
        for s in r.summaries.values() {
            assert!(s.bias.abs() < 3.5 * s.mc_se, "{s:?}");
        }
    }

    #[test]
    fn logit_frequencies_match_enumeration() {
        let mut x1 = DMatrix::zeros(4, 4);
        for (r, (w, f)) in [(0, 2), (0, 3), (1, 2), (1, 3)].into_iter().enumerate() {
            x1[(r, w)] = 1.0;
            x1[(r, f)] = 1.0;
        }
        let dm = DesignMatrices::from_parts(DVector::zeros(4), x1, DMatrix::from_column_slice(4, 1, &[0.2, -0.4, 1.0, 0.3])).unwrap();
        let a = DVector::from_vec(vec![0.3, -0.2, 0.5, -0.6]);
        let theta = DVector::from_element(1, 0.8);
        let mut rejections = 0;
        for s in 0..40 {
            let t = outcome_frequency_test(&dm, &a, &theta, 5000, s).unwrap();
            let crit = ChiSquared::new(t.df as f64).unwrap().inverse_cdf(0.99);
            if t.statistic > crit {
                rejections += 1;
            }
        }
        assert!(rejections <= 2, "{rejections}");
    }

    #[test]
    fn config_c_blocks_are_reproducible() {
        let a = config_c_blocks(20, 1.0, MomentBuilder::ConfigC, 3).unwrap();
        let b = config_c_blocks(20, 1.0, MomentBuilder::ConfigC, 3).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.y == y.y && x.dm.x2 == y.dm.x2));
    }
}
