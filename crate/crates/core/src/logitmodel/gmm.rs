//! Moment-based estimation of `theta` from many small blocks.
//!
//! Each block contributes `g(theta) = sum_m phi_m(y) * d_m`, where `phi_m` is a
//! moment function rescaled to unit absolute sum (positive on its
//! lexicographically first support point) and `d_m` is the difference of
//! `y'x2` between its first and last support points. With two-point
//! moments this is the conditional-logit score of the block.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::closed_form::{ClosedForm, TetradCase};
use super::{index_is_constant, level_moments, level_of, outcome_covariates, statistic, MomentFunction, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::estimate::{Estimate, EstimateResult};
use crate::linalg::{pinv, DEFAULT_TOL};
use crate::netcore::{find_patterns, pattern_block, DesignMatrices, NetworkData, PatternKind};

/// How a block's moment functions are obtained at each `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MomentBuilder {
    /// Null space of the weight row on the level containing the observed outcome.
    Discovered,
    CondLogit,
    ConfigC,
    ConfigF,
    /// All ten tetrad functions.
    Tetrad,
}

impl MomentBuilder {
    fn families(&self) -> Vec<ClosedForm> {
        match self {
            MomentBuilder::Discovered => Vec::new(),
            MomentBuilder::CondLogit => vec![ClosedForm::CondLogit],
            MomentBuilder::ConfigC => vec![ClosedForm::ConfigC],
            MomentBuilder::ConfigF => vec![ClosedForm::ConfigF],
            MomentBuilder::Tetrad => TetradCase::all().into_iter().map(ClosedForm::Tetrad).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogitBlock {
    pub y: Vec<u8>,
    pub dm: DesignMatrices,
    pub builder: MomentBuilder,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    Identity,
    /// Inverse second moment of the block contributions at a first-step estimate.
    TwoStep,
    Fixed(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmOptions {
    pub weight: WeightRule,
    /// Search interval for every coordinate of `theta`.
    pub bounds: (f64, f64),
    /// Grid size for the scalar search before refinement.
    pub grid_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub cap: usize,
    /// Block bootstrap replications; 0 disables standard errors.
    pub bootstrap_reps: usize,
    /// Re-optimize in every replication instead of taking one Newton step from the estimate.
    pub full_bootstrap: bool,
    pub seed: u64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            weight: WeightRule::Identity,
            bounds: (-5.0, 5.0),
            grid_points: 201,
            tol: 1e-9,
            max_iter: 5000,
            cap: DEFAULT_CAP,
            bootstrap_reps: 0,
            full_bootstrap: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct PreparedBlock {
    y: Vec<u8>,
    x2: DMatrix<f64>,
    builder: MomentBuilder,
    /// Observed level, only for discovered moments.
    level: Option<(Vec<i64>, Vec<Vec<u8>>)>,
}

/// Blocks after dropping those that cannot carry information about `theta`.
#[derive(Debug, Clone)]
pub struct PreparedBlocks {
    blocks: Vec<PreparedBlock>,
    k: usize,
    n_total: usize,
}

fn block_is_informative(block: &LogitBlock, cap: usize) -> Result<bool> {
    match block.builder {
        MomentBuilder::Discovered => super::is_informative(&block.dm, cap),
        builder => {
            for form in builder.families() {
                if block.dm.n() != form.n() {
                    return Err(Error::DimensionMismatch(format!(
                        "{builder:?} block needs {} outcomes, found {}",
                        form.n(),
                        block.dm.n()
                    )));
                }
                if !index_is_constant(&form.support()?, &block.dm.x2) {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

pub fn prepare_blocks(blocks: &[LogitBlock], cap: usize) -> Result<PreparedBlocks> {
    let k = blocks.first().map_or(0, |b| b.dm.k());
    let mut out = Vec::new();
    for b in blocks {
        if b.dm.k() != k || b.y.len() != b.dm.n() {
            return Err(Error::DimensionMismatch("blocks disagree on covariate count or outcome length".into()));
        }
        if b.y.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("logit outcomes must be 0 or 1".into()));
        }
        if !block_is_informative(b, cap)? {
            continue;
        }
        let level = match b.builder {
            MomentBuilder::Discovered => Some(level_of(&b.dm.x1_integer()?, &b.y, cap)?),
            _ => None,
        };
        out.push(PreparedBlock {
            y: b.y.clone(),
            x2: b.dm.x2.clone(),
            builder: b.builder,
            level,
        });
    }
    if out.is_empty() {
        return Err(Error::NoInformativeBlocks);
    }
    Ok(PreparedBlocks {
        blocks: out,
        k,
        n_total: blocks.len(),
    })
}

fn contribution_of(m: &MomentFunction, y: &[u8], x2: &DMatrix<f64>, g: &mut DVector<f64>) {
    let m = m.normalized();
    let v = m.value(y);
    if v == 0.0 {
        return;
    }
    let nz: Vec<&Vec<u8>> = m.support.iter().zip(&m.coeffs).filter(|(_, c)| **c != 0.0).map(|(s, _)| s).collect();
    let (Some(first), Some(last)) = (nz.iter().min(), nz.iter().max()) else {
        return;
    };
    let d = outcome_covariates(first, x2) - outcome_covariates(last, x2);
    *g += d * v;
}

impl PreparedBlock {
    fn contribution(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(theta.len());
        match (&self.builder, &self.level) {
            (MomentBuilder::Discovered, Some((key, members))) => {
                for m in level_moments(key, members, &self.x2, theta)? {
                    contribution_of(&m, &self.y, &self.x2, &mut g);
                }
            }
            (builder, _) => {
                for form in builder.families() {
                    let support = form.support()?;
                    if !support.iter().any(|s| s == &self.y) {
                        continue;
                    }
                    let coeffs = support
                        .iter()
                        .map(|s| form.evaluate(s, &self.x2, theta))
                        .collect::<Result<Vec<_>>>()?;
                    let m = MomentFunction {
                        level_key: Vec::new(),
                        support,
                        coeffs,
                        theta_at: Vec::new(),
                        closed_form: Some(form.tag()),
                        informative: true,
                    };
                    contribution_of(&m, &self.y, &self.x2, &mut g);
                }
            }
        }
        Ok(g)
    }
}

impl PreparedBlocks {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// Per-block contributions, in block order.
    pub fn contributions(&self, theta: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if theta.len() != self.k {
            return Err(Error::DimensionMismatch(format!("theta has {} entries, blocks have {}", theta.len(), self.k)));
        }
        self.blocks.par_iter().map(|b| b.contribution(theta)).collect()
    }

    /// Weighted average of contributions; `counts` are bootstrap multiplicities.
    fn mean_moment(&self, theta: &DVector<f64>, counts: Option<&[u32]>) -> Result<DVector<f64>> {
        let parts = self.contributions(theta)?;
        let mut total = DVector::zeros(self.k);
        let mut weight = 0.0;
        for (i, g) in parts.iter().enumerate() {
            let c = counts.map_or(1.0, |c| c[i] as f64);
            if c != 0.0 {
                total += g * c;
                weight += c;
            }
        }
        Ok(total / weight.max(1.0))
    }

    pub fn mean(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.mean_moment(theta, None)
    }

    fn objective(&self, theta: &DVector<f64>, w: &DMatrix<f64>, counts: Option<&[u32]>) -> Result<f64> {
        let g = self.mean_moment(theta, counts)?;
        Ok(g.dot(&(w * &g)))
    }

    pub fn criterion(&self, theta: &DVector<f64>, w: &DMatrix<f64>) -> Result<f64> {
        self.objective(theta, w, None)
    }

    fn second_moment(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let parts = self.contributions(theta)?;
        let mut s = DMatrix::zeros(self.k, self.k);
        for g in &parts {
            s += g * g.transpose();
        }
        Ok(s / parts.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmFit {
    pub theta: Vec<f64>,
    pub criterion: f64,
    pub iterations: usize,
    pub se: Option<Vec<f64>>,
    pub n_blocks: usize,
    pub n_informative: usize,
    pub bootstrap_failures: usize,
}

impl GmmFit {
    pub fn to_result(&self) -> EstimateResult {
        let mut r = EstimateResult::new(Estimate::Vector(self.theta.clone()), self.n_informative)
            .with_diagnostic("criterion", self.criterion)
            .with_diagnostic("iterations", self.iterations as f64)
            .with_diagnostic("n_blocks", self.n_blocks as f64)
            .with_diagnostic("n_informative_blocks", self.n_informative as f64);
        if let Some(se) = &self.se {
            for (i, s) in se.iter().enumerate() {
                r = r.with_diagnostic(&format!("bootstrap_se_{i}"), *s);
            }
            r = r.with_diagnostic("bootstrap_failures", self.bootstrap_failures as f64);
        }
        r
    }
}

struct Optimum {
    theta: DVector<f64>,
    value: f64,
    iterations: usize,
}

fn golden_section(f: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<(f64, f64, usize)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iter = 0;
    while (hi - lo).abs() > tol {
        if iter == max_iter {
            return Err(Error::NonConvergence(format!("golden-section search exceeded {max_iter} iterations")));
        }
        iter += 1;
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok((x, f(x)?, iter))
}

fn minimize_scalar(f: &dyn Fn(f64) -> Result<f64>, lo: f64, hi: f64, points: usize, tol: f64, max_iter: usize) -> Result<Optimum> {
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (0, f64::INFINITY);
    for i in 0..points {
        let v = f(lo + step * i as f64)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::NonConvergence("criterion is not finite on the search grid".into()));
    }
    if best.0 == 0 || best.0 == points - 1 {
        return Err(Error::NonConvergence(format!(
            "minimum on the boundary of [{lo}, {hi}]"
        )));
    }
    let a = lo + step * (best.0 - 1) as f64;
    let b = lo + step * (best.0 + 1) as f64;
    let (x, v, iter) = golden_section(f, a, b, tol, max_iter)?;
    Ok(Optimum {
        theta: DVector::from_element(1, x),
        value: v,
        iterations: points + iter,
    })
}

fn nelder_mead(f: &dyn Fn(&DVector<f64>) -> Result<f64>, start: DVector<f64>, step: f64, tol: f64, max_iter: usize) -> Result<Optimum> {
    let k = start.len();
    let mut simplex: Vec<DVector<f64>> = vec![start.clone()];
    for i in 0..k {
        let mut p = start.clone();
        p[i] += step;
        simplex.push(p);
    }
    let mut values = simplex.iter().map(f).collect::<Result<Vec<f64>>>()?;
    for iter in 0..max_iter {
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = values[k] - values[0];
        let size = simplex[1..].iter().map(|p| (p - &simplex[0]).amax()).fold(0.0, f64::max);
        if spread <= tol * tol && size <= tol {
            return Ok(Optimum {
                theta: simplex[0].clone(),
                value: values[0],
                iterations: iter,
            });
        }
        let centroid = simplex[..k].iter().fold(DVector::zeros(k), |acc, p| acc + p) / k as f64;
        let reflect = &centroid + (&centroid - &simplex[k]);
        let fr = f(&reflect)?;
        if fr < values[0] {
            let expand = &centroid + (&reflect - &centroid) * 2.0;
            let fe = f(&expand)?;
            if fe < fr {
                simplex[k] = expand;
                values[k] = fe;
            } else {
                simplex[k] = reflect;
                values[k] = fr;
            }
        } else if fr < values[k - 1] {
            simplex[k] = reflect;
            values[k] = fr;
        } else {
            let contract = if fr < values[k] {
                &centroid + (&reflect - &centroid) * 0.5
            } else {
                &centroid + (&simplex[k] - &centroid) * 0.5
            };
            let fc = f(&contract)?;
            if fc < values[k].min(fr) {
                simplex[k] = contract;
                values[k] = fc;
            } else {
                for i in 1..=k {
                    simplex[i] = &simplex[0] + (&simplex[i] - &simplex[0]) * 0.5;
                    values[i] = f(&simplex[i])?;
                }
            }
        }
    }
    Err(Error::NonConvergence(format!("Nelder-Mead exceeded {max_iter} iterations")))
}

fn optimize(
    blocks: &PreparedBlocks,
    w: &DMatrix<f64>,
    counts: Option<&[u32]>,
    options: &GmmOptions,
    around: Option<&DVector<f64>>,
) -> Result<Optimum> {
    let (lo, hi) = options.bounds;
    if blocks.k == 1 {
        let f = |t: f64| blocks.objective(&DVector::from_element(1, t), w, counts);
        let (lo, hi, points) = match around {
            // Bootstrap replications search a window around the full-sample estimate.
            Some(c) => ((c[0] - 1.0).max(lo), (c[0] + 1.0).min(hi), 41),
            None => (lo, hi, options.grid_points),
        };
        minimize_scalar(&f, lo, hi, points, options.tol, options.max_iter)
    } else {
        let f = |t: &DVector<f64>| blocks.objective(t, w, counts);
        let start = around.cloned().unwrap_or_else(|| DVector::zeros(blocks.k));
        let opt = nelder_mead(&f, start, 0.5, options.tol, options.max_iter)?;
        if opt.theta.iter().any(|&t| t <= lo || t >= hi) {
            return Err(Error::NonConvergence(format!("optimum outside [{lo}, {hi}]")));
        }
        Ok(opt)
    }
}

fn weight_matrix(blocks: &PreparedBlocks, rule: &WeightRule, first_step: Option<&DVector<f64>>) -> Result<DMatrix<f64>> {
    match rule {
        WeightRule::Identity => Ok(DMatrix::identity(blocks.k, blocks.k)),
        WeightRule::Fixed(w) => {
            if w.shape() != (blocks.k, blocks.k) {
                return Err(Error::DimensionMismatch(format!("weight matrix is {}x{}", w.nrows(), w.ncols())));
            }
            Ok(w.clone())
        }
        WeightRule::TwoStep => match first_step {
            None => Ok(DMatrix::identity(blocks.k, blocks.k)),
            Some(t) => pinv(&blocks.second_moment(t)?, DEFAULT_TOL),
        },
    }
}

fn jacobian(blocks: &PreparedBlocks, theta: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    let k = blocks.k;
    let mut per_block = vec![DMatrix::zeros(k, k); blocks.len()];
    for j in 0..k {
        let h = 1e-5 * theta[j].abs().max(1.0);
        let mut up = theta.clone();
        up[j] += h;
        let mut down = theta.clone();
        down[j] -= h;
        let gu = blocks.contributions(&up)?;
        let gd = blocks.contributions(&down)?;
        for (b, jac) in per_block.iter_mut().enumerate() {
            jac.set_column(j, &((&gu[b] - &gd[b]) / (2.0 * h)));
        }
    }
    Ok(per_block)
}

fn bootstrap(blocks: &PreparedBlocks, theta_hat: &DVector<f64>, w: &DMatrix<f64>, options: &GmmOptions) -> Result<(Vec<f64>, usize)> {
    let nb = blocks.len();
    let draws: Vec<Vec<u32>> = (0..options.bootstrap_reps)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(r as u64));
            let mut counts = vec![0u32; nb];
            for _ in 0..nb {
                counts[rng.gen_range(0..nb)] += 1;
            }
            counts
        })
        .collect();
    let mut estimates: Vec<DVector<f64>> = Vec::new();
    let mut failures = 0;
    if options.full_bootstrap {
        for counts in &draws {
            match optimize(blocks, w, Some(counts), options, Some(theta_hat)) {
                Ok(opt) => estimates.push(opt.theta),
                Err(_) => failures += 1,
            }
        }
    } else {
        let g = blocks.contributions(theta_hat)?;
        let jac = jacobian(blocks, theta_hat)?;
        for counts in &draws {
            let mut gm = DVector::zeros(blocks.k);
            let mut jm = DMatrix::zeros(blocks.k, blocks.k);
            for b in 0..nb {
                let c = counts[b] as f64;
                if c != 0.0 {
                    gm += &g[b] * c;
                    jm += &jac[b] * c;
                }
            }
            gm /= nb as f64;
            jm /= nb as f64;
            let jw = jm.transpose() * w;
            match (&jw * &jm).try_inverse() {
                Some(inv) => estimates.push(theta_hat - inv * (jw * gm)),
                None => failures += 1,
            }
        }
    }
    if estimates.len() < 2 {
        return Err(Error::NonConvergence("fewer than two successful bootstrap replications".into()));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().fold(DVector::zeros(blocks.k), |acc, e| acc + e) / n;
    let se = (0..blocks.k)
        .map(|j| (estimates.iter().map(|e| (e[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect();
    Ok((se, failures))
}

/// Minimizes `G(theta)' W G(theta)` with `G` the average block contribution.
pub fn estimate_theta_gmm(blocks: &[LogitBlock], options: &GmmOptions) -> Result<GmmFit> {
    let prepared = prepare_blocks(blocks, options.cap)?;
    fit_prepared(&prepared, options)
}

pub fn fit_prepared(prepared: &PreparedBlocks, options: &GmmOptions) -> Result<GmmFit> {
    if prepared.k == 0 {
        return Err(Error::InvalidParameter("blocks have no covariates, so there is no theta to estimate".into()));
    }
    let w1 = weight_matrix(prepared, &options.weight, None)?;
    let mut opt = optimize(prepared, &w1, None, options, None)?;
    let mut w = w1;
    if options.weight == WeightRule::TwoStep {
        w = weight_matrix(prepared, &options.weight, Some(&opt.theta))?;
        opt = optimize(prepared, &w, None, options, None)?;
    }
    let (se, failures) = if options.bootstrap_reps > 0 {
        let (se, f) = bootstrap(prepared, &opt.theta, &w, options)?;
        (Some(se), f)
    } else {
        (None, 0)
    };
    Ok(GmmFit {
        theta: opt.theta.iter().cloned().collect(),
        criterion: opt.value,
        iterations: opt.iterations,
        se,
        n_blocks: prepared.n_total,
        n_informative: prepared.len(),
        bootstrap_failures: failures,
    })
}

/// One block per matched pattern of each kind, all with the same builder.
pub fn blocks_from_network(net: &NetworkData, kinds: &[PatternKind], builder: MomentBuilder) -> Result<Vec<LogitBlock>> {
    let mut out = Vec::new();
    for &kind in kinds {
        for p in find_patterns(net, kind)? {
            let (y, dm) = pattern_block(net, &p)?;
            out.push(LogitBlock { y, dm, builder });
        }
    }
    Ok(out)
}

/// Key of the level containing `y`, exposed for reporting.
pub fn observed_key(block: &LogitBlock) -> Result<Vec<i64>> {
    Ok(statistic(&block.dm.x1_integer()?, &block.y))
}

#[cfg(test)]
mod tests {
    use super::super::brute_force_expectation;
    use super::*;
    use nalgebra::dvector;

    fn config_c_dm(x: &[f64]) -> DesignMatrices {
        let rows = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let mut x1 = DMatrix::zeros(4, 4);
        for (r, &(w, f)) in rows.iter().enumerate() {
            x1[(r, w)] = 1.0;
            x1[(r, 2 + f)] = 1.0;
        }
        DesignMatrices::from_parts(DVector::zeros(4), x1, DMatrix::from_column_slice(4, 1, x)).unwrap()
    }

    fn panel_dm(x: &[f64]) -> DesignMatrices {
        DesignMatrices::from_parts(DVector::zeros(2), DMatrix::from_element(2, 1, 1.0), DMatrix::from_column_slice(2, 1, x)).unwrap()
    }

    fn simulate(dm: &DesignMatrices, a: &DVector<f64>, theta: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let eta = &dm.x1 * a + &dm.x2 * theta;
        eta.iter()
            .map(|e| {
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                (e + (u / (1.0 - u)).ln() > 0.0) as u8
            })
            .collect()
    }

    fn panel_blocks(n: usize, theta: f64, builder: MomentBuilder, seed: u64) -> Vec<LogitBlock> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let dm = panel_dm(&x);
                let a = dvector![rng.gen_range(-1.0..1.0)];
                let y = simulate(&dm, &a, theta, &mut rng);
                LogitBlock { y, dm, builder }
            })
            .collect()
    }

    #[test]
    fn discovered_and_closed_form_contributions_agree() {
        let blocks = panel_blocks(50, 0.7, MomentBuilder::Discovered, 1);
        let closed: Vec<LogitBlock> = blocks.iter().cloned().map(|mut b| {
            b.builder = MomentBuilder::CondLogit;
            b
        }).collect();
        let a = prepare_blocks(&blocks, 20).unwrap();
        let b = prepare_blocks(&closed, 20).unwrap();
        for t in [-1.0, 0.0, 0.4, 2.0] {
            let theta = dvector![t];
            let ga = a.contributions(&theta).unwrap();
            let gb = b.contributions(&theta).unwrap();
            for (x, y) in ga.iter().zip(&gb) {
                assert!((x - y).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn contribution_is_conditional_logit_score() {
        let dm = panel_dm(&[0.2, -0.5]);
        let theta = 0.8;
        let block = LogitBlock { y: vec![1, 0], dm: dm.clone(), builder: MomentBuilder::Discovered };
        let g = prepare_blocks(&[block], 20).unwrap().contributions(&dvector![theta]).unwrap()[0][0];
        // d/dtheta log P(y = (1,0) | y1 + y2 = 1) = x1 - E[y'x | level].
        let p10 = (theta * 0.2f64).exp() / ((theta * 0.2f64).exp() + (theta * -0.5f64).exp());
        let score = 0.2 - (p10 * 0.2 + (1.0 - p10) * -0.5);
        assert!((g - score).abs() < 1e-12);
    }

    #[test]
    fn recovers_theta_on_panels() {
        let blocks = panel_blocks(4000, 1.0, MomentBuilder::CondLogit, 2);
        let options = GmmOptions { bootstrap_reps: 100, seed: 9, ..Default::default() };
        let fit = estimate_theta_gmm(&blocks, &options).unwrap();
        let se = fit.se.as_ref().unwrap()[0];
        assert!(se > 0.0 && se < 0.5);
        assert!((fit.theta[0] - 1.0).abs() < 4.0 * se, "{fit:?}");
    }

    #[test]
    fn scale_of_moments_does_not_move_the_estimate() {
        let blocks = panel_blocks(500, 0.5, MomentBuilder::Discovered, 3);
        let closed: Vec<LogitBlock> = blocks.iter().cloned().map(|mut b| {
            b.builder = MomentBuilder::CondLogit;
            b
        }).collect();
        let options = GmmOptions::default();
        let a = estimate_theta_gmm(&blocks, &options).unwrap();
        let b = estimate_theta_gmm(&closed, &options).unwrap();
        assert!((a.theta[0] - b.theta[0]).abs() < 1e-7);
        let two = GmmOptions { weight: WeightRule::TwoStep, ..Default::default() };
        let c = estimate_theta_gmm(&blocks, &two).unwrap();
        assert!((a.theta[0] - c.theta[0]).abs() < 1e-7);
    }

    #[test]
    fn uninformative_blocks_are_rejected() {
        // A stayer panel with a constant covariate, and a single observation.
        let stay = LogitBlock { y: vec![1, 0], dm: panel_dm(&[0.3, 0.3]), builder: MomentBuilder::Discovered };
        let one = DesignMatrices::from_parts(DVector::zeros(1), DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 0.5)).unwrap();
        let single = LogitBlock { y: vec![1], dm: one, builder: MomentBuilder::Discovered };
        assert!(matches!(estimate_theta_gmm(&[stay, single], &GmmOptions::default()), Err(Error::NoInformativeBlocks)));
    }

    #[test]
    fn population_moment_vanishes_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let theta = dvector![1.0];
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dm = config_c_dm(&x);
            let a = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            // E[g(theta0)] = sum_y P(y) g_y(theta0), enumerated.
            let expected = brute_force_expectation(
                &|y: &[u8]| {
                    let block = LogitBlock { y: y.to_vec(), dm: dm.clone(), builder: MomentBuilder::ConfigC };
                    prepare_blocks(&[block], 20).unwrap().contributions(&theta).unwrap()[0][0]
                },
                &dm,
                &a,
                &theta,
                20,
            )
            .unwrap();
            assert!(expected.abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_minimum_is_non_convergence() {
        let blocks = panel_blocks(300, 1.0, MomentBuilder::CondLogit, 4);
        let options = GmmOptions { bounds: (-3.0, -2.0), ..Default::default() };
        assert!(matches!(estimate_theta_gmm(&blocks, &options), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn vector_theta_uses_simplex_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = dvector![0.8, -0.5];
        let blocks: Vec<LogitBlock> = (0..3000)
            .map(|_| {
                let x2 = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
                let dm = DesignMatrices::from_parts(DVector::zeros(2), DMatrix::from_element(2, 1, 1.0), x2).unwrap();
                let a = dvector![rng.gen_range(-1.0..1.0)];
                let eta = &dm.x1 * &a + &dm.x2 * &truth;
                let y = eta
                    .iter()
                    .map(|e| {
                        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                        (e + (u / (1.0 - u)).ln() > 0.0) as u8
                    })
                    .collect();
                LogitBlock { y, dm, builder: MomentBuilder::CondLogit }
            })
            .collect();
        let options = GmmOptions { bootstrap_reps: 50, ..Default::default() };
        let fit = estimate_theta_gmm(&blocks, &options).unwrap();
        let se = fit.se.unwrap();
        for j in 0..2 {
            assert!((fit.theta[j] - truth[j]).abs() < 4.0 * se[j], "{:?} {:?}", fit.theta, se);
        }
        assert!(fit.criterion < 1e-12);
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let blocks = panel_blocks(400, 1.0, MomentBuilder::CondLogit, 6);
        let options = GmmOptions { bootstrap_reps: 20, seed: 1, ..Default::default() };
        let a = estimate_theta_gmm(&blocks, &options).unwrap();
        let b = estimate_theta_gmm(&blocks, &options).unwrap();
        assert_eq!(a, b);
    }
}
