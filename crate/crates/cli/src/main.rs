//! `fdnet`: batch front end. Results are JSON on standard output (or
//! `--output`); progress and errors go to standard error.
//!
//! Exit codes: 0 success, 1 domain error or failed verification, 2 usage error.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use fdnet::avgeff::{
    certify_impossibility, estimate_ape_movers, psi_movers_exp, psi_movers_simple, verify_psi, EffectGrid, GridSpec,
    PanelPair, TargetEffect, TargetKind,
};
use fdnet::linmodel::{
    decomposition_forms, estimate_beta, estimate_sigma2, gaussian_conditional_expectation, variance_decomposition,
    Functional, LinearParams, Moment,
};
use fdnet::logitmodel::{
    brute_force_expectation, closed_form_moments, discover_moments, fit_prepared, prepare_blocks, ClosedForm,
    GmmOptions, MomentBuilder, MomentFunction, TetradCase, WeightRule, DEFAULT_CAP,
};
use fdnet::netcore::{
    build_design, load_edge_list, write_edge_list, CsvSchema, DesignOptions, Effects, NetworkData, Normalization,
    PatternKind,
};
use fdnet::simkit::{mc_study, simulate, EstimatorSpec, ResampleMode, SimConfig};
use fdnet::Error;

#[derive(Parser)]
#[command(name = "fdnet", version, about = "Functional differencing estimators for worker-firm networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArg {
    /// Write JSON here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a TOML simulation config and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; standard output if absent.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the true effects and parameters as JSON.
        #[arg(long)]
        truths: Option<PathBuf>,
    },
    /// Quasi-differencing estimate of the covariate coefficients and the noise variance.
    EstimateLinear {
        #[arg(long)]
        input: PathBuf,
        /// Heterogeneity sides: `worker`, `firm`, or `worker,firm`.
        #[arg(long, default_value = "worker,firm")]
        effects: String,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Trace-corrected variance decomposition on the largest connected component.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutputArg,
    },
    /// GMM estimate of the logit coefficients from two-period mover patterns.
    EstimateLogit {
        #[arg(long)]
        input: PathBuf,
        /// Pattern kinds to use, from A-F and tetrad.
        #[arg(long, value_delimiter = ',', default_value = "C,F")]
        patterns: Vec<String>,
        #[arg(long, value_enum, default_value_t = MomentSource::Discovered)]
        moments: MomentSource,
        #[arg(long, value_enum, default_value_t = WeightArg::Identity)]
        weight: WeightArg,
        /// Block bootstrap replications for standard errors.
        #[arg(long, default_value_t = 0)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        hi: f64,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Moment functions of every sufficient-statistic level of the input network at `theta`.
    Discover {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        /// Also list levels whose restrictions do not involve `theta`.
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Replay exact conditional-mean checks; exits 1 if any deviation exceeds `--tol`.
    Verify {
        #[arg(long, value_enum)]
        model: VerifyModel,
        /// Check on this network's design instead of the built-in ones.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        theta: f64,
        /// Random draws of heterogeneity (and parameters) per design.
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults: 1e-10 logit, 1e-9 linear, 1e-12 ape.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Movers' average partial effect of switching the binary first covariate.
    Ape {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Least-squares search for an unbiased function of outcomes for an average effect.
    CertifyImpossible {
        /// `movers`, `stayers` or `configc`.
        #[arg(long)]
        target: String,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        /// Covariate values; the target's default if absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        /// Replaces the main heterogeneity grid `lo,hi,points`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Monte Carlo study of one or more estimators under a simulation config.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: usize,
        /// `firm-variance`, `worker-variance`, `covariance` (each with a `-plugin`
        /// variant), `beta[:i]`, `theta[:i]`.
        #[arg(long, value_delimiter = ',', default_value = "firm-variance,firm-variance-plugin")]
        estimators: Vec<String>,
        #[arg(long, value_enum, default_value_t = ModeArg::Outcomes)]
        mode: ModeArg,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutputArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MomentSource {
    Discovered,
    Closed,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Identity,
    TwoStep,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyModel {
    Logit,
    Linear,
    Ape,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Outcomes,
    Everything,
}

enum Failure {
    /// Exit code 2.
    Usage(String),
    /// Exit code 1.
    Domain(Error),
    /// Exit code 1.
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
            ExitCode::from(1)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("{}", json!({ "error": "VerificationFailed", "message": msg }));
            ExitCode::from(1)
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

fn emit<T: Serialize>(value: &T, out: &OutputArg) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    match &out.output {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            writeln!(f, "{text}")?;
            f.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn load(path: &Path) -> Result<NetworkData, Failure> {
    let net = load_edge_list(BufReader::new(File::open(path)?), &CsvSchema::default())?;
    eprintln!(
        "loaded {} edges: {} workers, {} firms, {} periods, {} covariates",
        net.n_edges(),
        net.n_workers,
        net.n_firms,
        net.n_periods,
        net.n_covariates
    );
    Ok(net)
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<SimConfig, Failure> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = SimConfig::from_toml_str(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn outcome_vector(net: &NetworkData) -> DVector<f64> {
    DVector::from_iterator(net.n_edges(), net.edges.iter().map(|e| e.y))
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Simulate { config, seed, output, truths } => {
            let cfg = load_config(&config, seed)?;
            let (net, t) = simulate(&cfg)?;
            eprintln!("simulated {} edges, {} workers, {} firms", net.n_edges(), net.n_workers, net.n_firms);
            match output {
                Some(p) => write_edge_list(&net, BufWriter::new(File::create(p)?))?,
                None => write_edge_list(&net, std::io::stdout().lock())?,
            }
            if let Some(p) = truths {
                emit(&t, &OutputArg { output: Some(p) })?;
            }
            Ok(())
        }
        Command::EstimateLinear { input, effects, out } => estimate_linear(&input, &effects, &out),
        Command::Decompose { input, out } => {
            let net = load(&input)?;
            let (sub, _, _) = net.largest_component();
            eprintln!("largest connected component: {} edges", sub.n_edges());
            let dm = build_design(&sub, DesignOptions::default())?;
            let mut result = variance_decomposition(&outcome_vector(&sub), &dm)?;
            result = result.with_provenance("sample", "largest connected component");
            emit(&result, &out)
        }
        Command::EstimateLogit {
            input,
            patterns,
            moments,
            weight,
            reps,
            seed,
            tol,
            cap,
            lo,
            hi,
            out,
        } => {
            if !(lo < hi) {
                return Err(usage("--lo must be below --hi"));
            }
            let mut plan = Vec::new();
            for name in &patterns {
                let kind = PatternKind::parse(name).ok_or_else(|| usage(format!("unknown pattern `{name}`")))?;
                let builder = match moments {
                    MomentSource::Discovered => MomentBuilder::Discovered,
                    MomentSource::Closed => match kind {
                        PatternKind::ConfigC => MomentBuilder::ConfigC,
                        PatternKind::ConfigF => MomentBuilder::ConfigF,
                        PatternKind::Tetrad => MomentBuilder::Tetrad,
                        _ => return Err(usage(format!("no closed-form moments for pattern `{name}`"))),
                    },
                };
                plan.push((kind, builder));
            }
            let options = GmmOptions {
                weight: match weight {
                    WeightArg::Identity => WeightRule::Identity,
                    WeightArg::TwoStep => WeightRule::TwoStep,
                },
                bounds: (lo, hi),
                tol,
                cap,
                bootstrap_reps: reps,
                seed,
                ..GmmOptions::default()
            };
            let net = load(&input)?;
            let mut blocks = Vec::new();
            for (kind, builder) in plan {
                blocks.extend(fdnet::logitmodel::blocks_from_network(&net, &[kind], builder)?);
            }
            eprintln!("{} pattern blocks", blocks.len());
            let prepared = prepare_blocks(&blocks, cap)?;
            let mut fit = fit_prepared(&prepared, &options)?;
            fit.n_blocks = blocks.len();
            emit(&fit.to_result(), &out)
        }
        Command::Discover { input, theta, cap, all, out } => {
            let net = load(&input)?;
            let dm = build_design(
                &net,
                DesignOptions {
                    effects: Effects::WorkerAndFirm,
                    normalization: Normalization::None,
                },
            )?;
            let theta = DVector::from_vec(theta);
            let found = discover_moments(&dm, &theta, cap)?;
            let listed: Vec<MomentFunction> = found.into_iter().filter(|m| all || m.informative).map(|m| m.normalized()).collect();
            let n_informative = listed.iter().filter(|m| m.informative).count();
            eprintln!("{} restrictions, {} informative", listed.len(), n_informative);
            emit(
                &json!({
                    "theta": theta.as_slice(),
                    "n": dm.n(),
                    "n_informative": n_informative,
                    "moments": listed,
                }),
                &out,
            )
        }
        Command::Verify {
            model,
            input,
            theta,
            reps,
            seed,
            tol,
            cap,
            out,
        } => {
            let net = input.as_deref().map(load).transpose()?;
            let (tol, checks) = match model {
                VerifyModel::Logit => (tol.unwrap_or(1e-10), verify_logit(net.as_ref(), theta, reps, seed, cap)?),
                VerifyModel::Linear => (tol.unwrap_or(1e-9), verify_linear(net.as_ref(), reps, seed)?),
                VerifyModel::Ape => (tol.unwrap_or(1e-12), verify_ape(theta)?),
            };
            let failed: Vec<&Check> = checks.iter().filter(|c| !(c.max_deviation <= tol)).collect();
            let report = json!({
                "tol": tol,
                "passed": failed.is_empty(),
                "checks": checks.iter().map(|c| json!({
                    "name": c.name,
                    "max_deviation": c.max_deviation,
                    "passed": c.max_deviation <= tol,
                })).collect::<Vec<Value>>(),
            });
            emit(&report, &out)?;
            if failed.is_empty() {
                eprintln!("{} checks passed", checks.len());
                Ok(())
            } else {
                let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
                Err(Failure::Verification(format!("deviation above {tol} in {}", names.join(", "))))
            }
        }
        Command::Ape { input, theta, out } => {
            let net = load(&input)?;
            let pairs = mover_pairs_from(&net)?;
            eprintln!("{} two-period units", pairs.len());
            emit(&estimate_ape_movers(&pairs, theta)?, &out)
        }
        Command::CertifyImpossible { target, theta, x, grid, out } => {
            let kind = TargetKind::parse(&target).ok_or_else(|| usage(format!("unknown target `{target}`")))?;
            let x = x.unwrap_or_else(|| kind.default_x());
            let mut g = EffectGrid::default_for(kind);
            if let Some(spec) = grid {
                match spec.as_slice() {
                    &[lo, hi, points] if points >= 1.0 && points.fract() == 0.0 => {
                        g.main = GridSpec::new(lo, hi, points as usize)
                    }
                    _ => return Err(usage("--grid takes lo,hi,points")),
                }
            }
            let cert = certify_impossibility(&TargetEffect::new(kind, theta), &x, &g)?;
            eprintln!("verdict {:?}, residual {:.3e}", cert.verdict, cert.residual);
            emit(&cert, &out)
        }
        Command::Mc {
            config,
            reps,
            estimators,
            mode,
            seed,
            out,
        } => {
            let specs = estimators
                .iter()
                .map(|s| EstimatorSpec::parse(s).ok_or_else(|| usage(format!("unknown estimator `{s}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = load_config(&config, seed)?;
            let mode = match mode {
                ModeArg::Outcomes => ResampleMode::Outcomes,
                ModeArg::Everything => ResampleMode::Everything,
            };
            let report = mc_study(&cfg, &specs, reps, mode)?;
            for (name, s) in &report.summaries {
                eprintln!("{name}: bias {:.4e} (mc_se {:.2e}), {} ok, {} failed", s.bias, s.mc_se, s.n_ok, s.n_failed);
            }
            emit(&report, &out)
        }
    }
}

fn estimate_linear(input: &Path, effects: &str, out: &OutputArg) -> Outcome {
    let mut sides: Vec<&str> = effects.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    sides.sort_unstable();
    sides.dedup();
    let effects = match sides.as_slice() {
        ["firm", "worker"] => Effects::WorkerAndFirm,
        ["worker"] => Effects::Worker,
        ["firm"] => Effects::Firm,
        _ => return Err(usage(format!("--effects takes worker, firm or worker,firm; got `{effects}`"))),
    };
    let net = load(input)?;
    let dm = build_design(
        &net,
        DesignOptions {
            effects,
            ..DesignOptions::default()
        },
    )?;
    let y = outcome_vector(&net);
    let beta = estimate_beta(&y, &dm)?;
    let n2 = dm.n2()?;
    let sigma2 = if n2 > 0 { Some(estimate_sigma2(&y, &dm, &beta)?) } else { None };
    emit(
        &json!({
            "beta": beta.as_slice(),
            "covariates": net.ids.covariate_names,
            "sigma2": sigma2,
            "n": dm.n(),
            "n2": n2,
            "rank": dm.rank1,
            "heterogeneity_columns": dm.m(),
            "normalization": dm.normalization,
        }),
        out,
    )
}

/// Units observed in exactly two periods, with the first covariate.
fn mover_pairs_from(net: &NetworkData) -> Result<Vec<PanelPair>, Failure> {
    if net.n_covariates == 0 {
        return Err(Error::InvalidParameter("ape needs a covariate column".into()).into());
    }
    let mut by_worker: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); net.n_workers];
    for e in &net.edges {
        by_worker[e.worker].push((e.period, e.y, e.x[0]));
    }
    let mut pairs = Vec::new();
    for mut obs in by_worker.into_iter().filter(|o| o.len() == 2) {
        obs.sort_by_key(|o| o.0);
        let binary = |v: f64| -> Result<u8, Failure> {
            match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                v => Err(Error::InvalidParameter(format!("ape needs binary outcomes, found {v}")).into()),
            }
        };
        pairs.push(PanelPair {
            y: [binary(obs[0].1)?, binary(obs[1].1)?],
            x: [obs[0].2, obs[1].2],
        });
    }
    Ok(pairs)
}

struct Check {
    name: String,
    max_deviation: f64,
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn verify_logit(net: Option<&NetworkData>, theta: f64, reps: usize, seed: u64, cap: usize) -> Result<Vec<Check>, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_v = DVector::from_element(1, theta);
    let mut checks = Vec::new();
    let mut run = |name: String, forms: Vec<ClosedForm>, make: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<fdnet::netcore::DesignMatrices, Error>| -> Result<(), Failure> {
        let mut discovered: f64 = 0.0;
        let mut closed: f64 = 0.0;
        for _ in 0..reps {
            let dm = make(&mut rng)?;
            let a = normal_vector(&mut rng, dm.m());
            let th = if dm.k() == 1 { theta_v.clone() } else { DVector::from_element(dm.k(), theta) };
            for m in discover_moments(&dm, &th, cap)? {
                let e = brute_force_expectation(&m.normalized(), &dm, &a, &th, cap)?;
                discovered = discovered.max(e.abs());
            }
            for form in &forms {
                let m = closed_form_moments(*form, &dm, &th)?.normalized();
                closed = closed.max(brute_force_expectation(&m, &dm, &a, &th, cap)?.abs());
            }
        }
        checks.push(Check {
            name: format!("{name}/discovered"),
            max_deviation: discovered,
        });
        if !forms.is_empty() {
            checks.push(Check {
                name: format!("{name}/closed-form"),
                max_deviation: closed,
            });
        }
        Ok(())
    };
    match net {
        Some(net) => {
            let dm = build_design(
                net,
                DesignOptions {
                    effects: Effects::WorkerAndFirm,
                    normalization: Normalization::None,
                },
            )?;
            run("input".into(), Vec::new(), &mut |_| Ok(dm.clone()))?;
        }
        None => {
            let families = [
                ("panel", vec![ClosedForm::CondLogit], 2),
                ("config-c", vec![ClosedForm::ConfigC], 4),
                ("config-f", vec![ClosedForm::ConfigF], 6),
                ("tetrad", TetradCase::all().into_iter().map(ClosedForm::Tetrad).collect(), 6),
            ];
            for (name, forms, n) in families {
                let shape = forms[0];
                run(name.into(), forms, &mut |rng| {
                    let x = normal_vector(rng, n);
                    shape.design(DMatrix::from_column_slice(n, 1, x.as_slice()))
                })?;
            }
        }
    }
    Ok(checks)
}

fn verify_linear(net: Option<&NetworkData>, reps: usize, seed: u64) -> Result<Vec<Check>, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let designs = match net {
        Some(net) => vec![build_design(net, DesignOptions::default())?],
        None => {
            let text = format!(
                "n_workers = 20\nn_firms = 4\nn_periods = 3\nmover_share = 0.5\nsorting = 0.3\nseed = {seed}\n\
                 [model]\nkind = \"linear\"\nbeta = [1.0, -0.5]\nsigma2 = 1.0\n"
            );
            let (net, _) = simulate(&SimConfig::from_toml_str(&text)?)?;
            let (sub, _, _) = net.largest_component();
            vec![build_design(&sub, DesignOptions::default())?]
        }
    };
    let mut worst_beta: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    let mut worst_quad: f64 = 0.0;
    for dm in &designs {
        let forms = decomposition_forms(dm)?;
        for _ in 0..reps {
            let a = normal_vector(&mut rng, dm.m());
            let beta = normal_vector(&mut rng, dm.k());
            let params = LinearParams::new(beta.clone(), rng.gen_range(0.5..2.0))?;
            if dm.k() > 0 {
                let m = gaussian_conditional_expectation(&Functional::phi_beta(dm, &beta)?, dm, &a, &params)?;
                worst_beta = worst_beta.max(m.max_abs());
            }
            let m = gaussian_conditional_expectation(&Functional::phi_sigma2(dm, &params)?, dm, &a, &params)?;
            worst_sigma = worst_sigma.max(m.max_abs());
            let f = Functional::psi_quadratic(dm, &params, &forms.firm)?;
            let m = gaussian_conditional_expectation(&f, dm, &a, &params)?;
            let Moment::Scalar(mean) = m else {
                return Err(Failure::Domain(Error::DimensionMismatch("quadratic functional returned a vector".into())));
            };
            worst_quad = worst_quad.max((mean - forms.firm.evaluate(&a)).abs());
        }
    }
    Ok(vec![
        Check {
            name: "phi_beta".into(),
            max_deviation: worst_beta,
        },
        Check {
            name: "phi_sigma2".into(),
            max_deviation: worst_sigma,
        },
        Check {
            name: "psi_quadratic/firm-variance".into(),
            max_deviation: worst_quad,
        },
    ])
}

fn verify_ape(theta: f64) -> Result<Vec<Check>, Failure> {
    let target = TargetEffect::new(TargetKind::MoversAPE, theta);
    let points: Vec<DVector<f64>> = GridSpec::new(-5.0, 5.0, 201)
        .values()
        .into_iter()
        .map(|a| DVector::from_element(1, a))
        .collect();
    let mut checks = Vec::new();
    for x in [[0.0, 1.0], [1.0, 0.0]] {
        let simple = |y: &[u8]| psi_movers_simple(y[0], y[1], x[0], x[1]);
        let exp = |y: &[u8]| psi_movers_exp(y[0], y[1], x[0], x[1], theta);
        let tag = format!("x={},{}", x[0], x[1]);
        checks.push(Check {
            name: format!("movers-simple/{tag}"),
            max_deviation: verify_psi(&simple, &target, &x, &points)?,
        });
        checks.push(Check {
            name: format!("movers-exp/{tag}"),
            max_deviation: verify_psi(&exp, &target, &x, &points)?,
        });
    }
    Ok(checks)
}
