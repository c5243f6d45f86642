//! Moment functions with analytic coefficients for four designs: a two-period
//! panel, a tetrad of four agents, two workers moving between the same two
//! firms, and three workers moving around a loop of three firms.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{index_is_constant, outcome_index, statistic, ClosedFormTag, MomentFunction};
use crate::error::{Error, Result};
use crate::netcore::DesignMatrices;

/// Dyads of a tetrad `(i, j, k, l)` in outcome order.
pub const TETRAD_DYADS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Degree sequence of a tetrad level and, for three-member levels, which of
/// the two canonical null vectors to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TetradCase {
    /// Every agent has one link: the three perfect matchings.
    AllOnes(usize),
    /// Every agent has two links: the three four-cycles.
    AllTwos(usize),
    /// The two agents in `high` have two links each, the others one.
    TwoTwoOneOne { high: [usize; 2] },
}

impl TetradCase {
    pub fn all() -> Vec<TetradCase> {
        let mut out = vec![
            TetradCase::AllOnes(0),
            TetradCase::AllOnes(1),
            TetradCase::AllTwos(0),
            TetradCase::AllTwos(1),
        ];
        out.extend(TETRAD_DYADS.iter().map(|&(a, b)| TetradCase::TwoTwoOneOne { high: [a, b] }));
        out
    }

    fn degrees(&self) -> Result<[i64; 4]> {
        match *self {
            TetradCase::AllOnes(k) | TetradCase::AllTwos(k) if k > 1 => {
                Err(Error::UnknownCase(format!("{self:?}: basis index must be 0 or 1")))
            }
            TetradCase::AllOnes(_) => Ok([1; 4]),
            TetradCase::AllTwos(_) => Ok([2; 4]),
            TetradCase::TwoTwoOneOne { high: [a, b] } => {
                if a == b || a > 3 || b > 3 {
                    return Err(Error::UnknownCase(format!("{self:?}: need two distinct agents in 0..4")));
                }
                let mut d = [1; 4];
                d[a] = 2;
                d[b] = 2;
                Ok(d)
            }
        }
    }

    fn basis_index(&self) -> usize {
        match *self {
            TetradCase::AllOnes(k) | TetradCase::AllTwos(k) => k,
            TetradCase::TwoTwoOneOne { .. } => 0,
        }
    }

    /// Members of the level in lexicographic order.
    pub fn members(&self) -> Result<Vec<Vec<u8>>> {
        let target = self.degrees()?;
        Ok((0..64u64)
            .map(|mask| super::decode(mask, 6))
            .filter(|y| tetrad_degrees(y) == target)
            .collect())
    }

    /// Parses `all-ones:K`, `all-twos:K`, or `two-two-one-one:AB` with agents
    /// `A`, `B` in `0..4`.
    pub fn parse(spec: &str) -> Result<TetradCase> {
        let bad = || Error::UnknownCase(spec.to_string());
        let (name, arg) = spec.split_once(':').ok_or_else(bad)?;
        let case = match name {
            "all-ones" => TetradCase::AllOnes(arg.parse().map_err(|_| bad())?),
            "all-twos" => TetradCase::AllTwos(arg.parse().map_err(|_| bad())?),
            "two-two-one-one" => {
                let d: Vec<usize> = arg.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect::<Option<_>>().ok_or_else(bad)?;
                if d.len() != 2 {
                    return Err(bad());
                }
                TetradCase::TwoTwoOneOne { high: [d[0], d[1]] }
            }
            _ => return Err(bad()),
        };
        case.degrees()?;
        Ok(case)
    }
}

fn tetrad_degrees(y: &[u8]) -> [i64; 4] {
    let mut d = [0; 4];
    for (&(a, b), &v) in TETRAD_DYADS.iter().zip(y) {
        d[a] += v as i64;
        d[b] += v as i64;
    }
    d
}

fn row_index(rows: &[usize], x2: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    rows.iter()
        .map(|&r| x2.row(r).iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

fn check_shape(y: &[u8], x2: &DMatrix<f64>, theta: &DVector<f64>, n: usize) {
    assert_eq!(y.len(), n, "outcome length");
    assert_eq!(x2.nrows(), n, "covariate rows");
    assert_eq!(x2.ncols(), theta.len(), "covariate columns");
}

/// `y = (1,0) -> exp(x_2'theta)`, `y = (0,1) -> -exp(x_1'theta)`, else 0.
/// Panics on shape mismatch.
pub fn phi_conditional_logit(y: &[u8], x2: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    check_shape(y, x2, theta, 2);
    match y {
        [1, 0] => row_index(&[1], x2, theta).exp(),
        [0, 1] => -row_index(&[0], x2, theta).exp(),
        _ => 0.0,
    }
}

/// Outcomes ordered `(i at j, i at j', i' at j, i' at j')`.
/// Panics on shape mismatch.
pub fn phi_config_c(y: &[u8], x2: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    check_shape(y, x2, theta, 4);
    match y {
        [1, 0, 0, 1] => row_index(&[1, 2], x2, theta).exp(),
        [0, 1, 1, 0] => -row_index(&[0, 3], x2, theta).exp(),
        _ => 0.0,
    }
}

/// Outcomes ordered `(i at j, i at j', i' at j', i' at j'', i'' at j'', i'' at j)`.
/// Panics on shape mismatch.
pub fn phi_config_f(y: &[u8], x2: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    check_shape(y, x2, theta, 6);
    match y {
        [1, 0, 1, 0, 1, 0] => row_index(&[1, 3, 5], x2, theta).exp(),
        [0, 1, 0, 1, 0, 1] => -row_index(&[0, 2, 4], x2, theta).exp(),
        _ => 0.0,
    }
}

/// Dyad outcomes ordered `(ij, ik, il, jk, jl, kl)`. On the selected level,
/// member `k` gets `1`, the last member `-w_k / w_last` with
/// `w = exp(y'x2 theta)`, and every other outcome `0`.
/// Panics on shape mismatch.
pub fn phi_tetrad(y: &[u8], x2: &DMatrix<f64>, theta: &DVector<f64>, case: TetradCase) -> Result<f64> {
    check_shape(y, x2, theta, 6);
    let members = case.members()?;
    let k = case.basis_index();
    let last = members.len() - 1;
    if y == members[k].as_slice() {
        Ok(1.0)
    } else if y == members[last].as_slice() {
        Ok(-(outcome_index(&members[k], x2, theta) - outcome_index(&members[last], x2, theta)).exp())
    } else {
        Ok(0.0)
    }
}

/// One of the named families, with the tetrad case when relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClosedForm {
    CondLogit,
    ConfigC,
    ConfigF,
    Tetrad(TetradCase),
}

impl ClosedForm {
    pub fn tag(&self) -> ClosedFormTag {
        match self {
            ClosedForm::CondLogit => ClosedFormTag::CondLogit,
            ClosedForm::ConfigC => ClosedFormTag::ConfigC,
            ClosedForm::ConfigF => ClosedFormTag::ConfigF,
            ClosedForm::Tetrad(_) => ClosedFormTag::Tetrad,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ClosedForm::CondLogit => 2,
            ClosedForm::ConfigC => 4,
            ClosedForm::ConfigF | ClosedForm::Tetrad(_) => 6,
        }
    }

    /// Support in lexicographic order.
    pub fn support(&self) -> Result<Vec<Vec<u8>>> {
        Ok(match self {
            ClosedForm::CondLogit => vec![vec![0, 1], vec![1, 0]],
            ClosedForm::ConfigC => vec![vec![0, 1, 1, 0], vec![1, 0, 0, 1]],
            ClosedForm::ConfigF => vec![vec![0, 1, 0, 1, 0, 1], vec![1, 0, 1, 0, 1, 0]],
            ClosedForm::Tetrad(case) => {
                let members = case.members()?;
                let k = case.basis_index();
                vec![members[k].clone(), members[members.len() - 1].clone()]
            }
        })
    }

    /// The family's canonical heterogeneity design with covariates `x2`:
    /// one unit over two periods, the two- and three-worker mover cycles
    /// (workers then firms), or four agents with one effect each.
    pub fn design(&self, x2: DMatrix<f64>) -> Result<DesignMatrices> {
        let rows: &[(usize, usize)] = match self {
            ClosedForm::CondLogit => &[(0, 0), (0, 0)],
            ClosedForm::ConfigC => &[(0, 2), (0, 3), (1, 2), (1, 3)],
            ClosedForm::ConfigF => &[(0, 3), (0, 4), (1, 4), (1, 5), (2, 5), (2, 3)],
            ClosedForm::Tetrad(_) => &TETRAD_DYADS,
        };
        let cols = match self {
            ClosedForm::CondLogit => 1,
            ClosedForm::ConfigC | ClosedForm::Tetrad(_) => 4,
            ClosedForm::ConfigF => 6,
        };
        let mut x1 = DMatrix::zeros(rows.len(), cols);
        for (r, &(a, b)) in rows.iter().enumerate() {
            x1[(r, a)] = 1.0;
            x1[(r, b)] = 1.0;
        }
        if cols == 1 {
            x1.fill(1.0);
        }
        DesignMatrices::from_parts(DVector::zeros(rows.len()), x1, x2)
    }

    pub fn evaluate(&self, y: &[u8], x2: &DMatrix<f64>, theta: &DVector<f64>) -> Result<f64> {
        match self {
            ClosedForm::CondLogit => Ok(phi_conditional_logit(y, x2, theta)),
            ClosedForm::ConfigC => Ok(phi_config_c(y, x2, theta)),
            ClosedForm::ConfigF => Ok(phi_config_f(y, x2, theta)),
            ClosedForm::Tetrad(case) => phi_tetrad(y, x2, theta, *case),
        }
    }
}

/// The family's moment function on `dm` at `theta`, as an explicit table.
pub fn closed_form_moments(form: ClosedForm, dm: &DesignMatrices, theta: &DVector<f64>) -> Result<MomentFunction> {
    if dm.n() != form.n() {
        return Err(Error::DimensionMismatch(format!("{form:?} needs {} outcomes, design has {}", form.n(), dm.n())));
    }
    if theta.len() != dm.k() {
        return Err(Error::DimensionMismatch(format!("theta has {} entries, x2 has {} columns", theta.len(), dm.k())));
    }
    let support = form.support()?;
    let coeffs = support
        .iter()
        .map(|y| form.evaluate(y, &dm.x2, theta))
        .collect::<Result<Vec<_>>>()?;
    let x1 = dm.x1_integer()?;
    Ok(MomentFunction {
        level_key: statistic(&x1, &support[0]),
        informative: !index_is_constant(&support, &dm.x2),
        support,
        coeffs,
        theta_at: theta.iter().cloned().collect(),
        closed_form: Some(form.tag()),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{brute_force_expectation, discover_moments, span_residual, sufficient_levels};
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(x1: DMatrix<f64>, x2: DMatrix<f64>) -> DesignMatrices {
        DesignMatrices::from_parts(DVector::zeros(x1.nrows()), x1, x2).unwrap()
    }

    /// Workers then firms, one row per (worker, firm) observation.
    fn mover_design(rows: &[(usize, usize)], n_workers: usize, n_firms: usize, x: &[f64]) -> DesignMatrices {
        let mut x1 = DMatrix::zeros(rows.len(), n_workers + n_firms);
        for (r, &(w, f)) in rows.iter().enumerate() {
            x1[(r, w)] = 1.0;
            x1[(r, n_workers + f)] = 1.0;
        }
        design(x1, DMatrix::from_column_slice(rows.len(), 1, x))
    }

    fn config_c(x: &[f64]) -> DesignMatrices {
        mover_design(&[(0, 0), (0, 1), (1, 0), (1, 1)], 2, 2, x)
    }

    fn config_f(x: &[f64]) -> DesignMatrices {
        mover_design(&[(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 0)], 3, 3, x)
    }

    fn tetrad(x: &[f64]) -> DesignMatrices {
        let mut x1 = DMatrix::zeros(6, 4);
        for (r, &(a, b)) in TETRAD_DYADS.iter().enumerate() {
            x1[(r, a)] = 1.0;
            x1[(r, b)] = 1.0;
        }
        design(x1, DMatrix::from_column_slice(6, 1, x))
    }

    fn panel(x: &[f64]) -> DesignMatrices {
        design(DMatrix::from_element(2, 1, 1.0), DMatrix::from_column_slice(2, 1, x))
    }

    #[test]
    fn canonical_designs_match_hand_built_ones() {
        let x6 = [0.1, -0.2, 0.3, 0.4, -0.5, 0.6];
        let col = |x: &[f64]| DMatrix::from_column_slice(x.len(), 1, x);
        assert_eq!(ClosedForm::CondLogit.design(col(&x6[..2])).unwrap().x1, panel(&x6[..2]).x1);
        assert_eq!(ClosedForm::ConfigC.design(col(&x6[..4])).unwrap().x1, config_c(&x6[..4]).x1);
        assert_eq!(ClosedForm::ConfigF.design(col(&x6)).unwrap().x1, config_f(&x6).x1);
        let t = ClosedForm::Tetrad(TetradCase::AllOnes(0));
        assert_eq!(t.design(col(&x6)).unwrap().x1, tetrad(&x6).x1);
    }

    #[test]
    fn conditional_logit_examples() {
        let dm = panel(&[0.0, 1.0]);
        let theta = dvector![2f64.ln()];
        assert!((phi_conditional_logit(&[1, 0], &dm.x2, &theta) - 2.0).abs() < 1e-15);
        assert!((phi_conditional_logit(&[0, 1], &dm.x2, &theta) + 1.0).abs() < 1e-15);
        assert_eq!(phi_conditional_logit(&[1, 1], &dm.x2, &theta), 0.0);
        let flat = panel(&[0.4, 0.4]);
        let theta = dvector![1.3];
        assert_eq!(
            phi_conditional_logit(&[1, 0], &flat.x2, &theta),
            -phi_conditional_logit(&[0, 1], &flat.x2, &theta)
        );
        let f = |y: &[u8]| phi_conditional_logit(y, &dm.x2, &dvector![0.7]);
        let e = brute_force_expectation(&f, &dm, &dvector![-0.3], &dvector![0.7], 20).unwrap();
        assert!(e.abs() < 1e-12);
    }

    #[test]
    fn config_c_examples() {
        let x = [0.3, -0.2, 1.0, 0.5];
        let dm = config_c(&x);
        let theta = dvector![0.5];
        assert!((phi_config_c(&[1, 0, 0, 1], &dm.x2, &theta) - (0.5f64 * (x[1] + x[2])).exp()).abs() < 1e-15);
        assert!((phi_config_c(&[0, 1, 1, 0], &dm.x2, &theta) + (0.5f64 * (x[0] + x[3])).exp()).abs() < 1e-15);
        let nonzero = (0..16u64).filter(|&m| phi_config_c(&super::super::decode(m, 4), &dm.x2, &theta) != 0.0).count();
        assert_eq!(nonzero, 2);
        let zero = dvector![0.0];
        assert_eq!(phi_config_c(&[1, 0, 0, 1], &dm.x2, &zero), 1.0);
        assert_eq!(phi_config_c(&[0, 1, 1, 0], &dm.x2, &zero), -1.0);
        let f = |y: &[u8]| phi_config_c(y, &dm.x2, &theta);
        let e = brute_force_expectation(&f, &dm, &dvector![0.2, -0.4, 0.1, 0.3], &theta, 20).unwrap();
        assert!(e.abs() < 1e-12);
    }

    #[test]
    fn config_c_levels() {
        let dm = config_c(&[0.0, 1.0, 2.0, 3.0]);
        let levels = sufficient_levels(&dm.x1_integer().unwrap(), 20).unwrap();
        assert_eq!(levels.level(&[1, 1, 1, 1]).unwrap(), vec![vec![0, 1, 1, 0], vec![1, 0, 0, 1]]);
        for (key, members) in levels.iter() {
            if key != &vec![1, 1, 1, 1] {
                assert_eq!(members.len(), 1, "{key:?}");
            }
        }
    }

    #[test]
    fn config_f_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dm = config_f(&x);
        let theta = dvector![1.2];
        let support: Vec<Vec<u8>> = (0..64u64)
            .map(|m| super::super::decode(m, 6))
            .filter(|y| phi_config_f(y, &dm.x2, &theta) != 0.0)
            .collect();
        assert_eq!(support, vec![vec![0, 1, 0, 1, 0, 1], vec![1, 0, 1, 0, 1, 0]]);
        let zero = dvector![0.0];
        assert_eq!(phi_config_f(&[1, 0, 1, 0, 1, 0], &dm.x2, &zero), 1.0);
        assert_eq!(phi_config_f(&[0, 1, 0, 1, 0, 1], &dm.x2, &zero), -1.0);
        let f = |y: &[u8]| phi_config_f(y, &dm.x2, &theta);
        for _ in 0..10 {
            let a = DVector::from_fn(6, |_, _| rng.gen_range(-2.0..2.0));
            assert!(brute_force_expectation(&f, &dm, &a, &theta, 20).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn tetrad_levels() {
        let ones = TetradCase::AllOnes(0).members().unwrap();
        assert_eq!(ones, vec![vec![0, 0, 1, 1, 0, 0], vec![0, 1, 0, 0, 1, 0], vec![1, 0, 0, 0, 0, 1]]);
        assert_eq!(TetradCase::AllTwos(0).members().unwrap().len(), 3);
        let two = TetradCase::TwoTwoOneOne { high: [0, 1] }.members().unwrap();
        assert_eq!(two, vec![vec![1, 0, 1, 1, 0, 0], vec![1, 1, 0, 0, 1, 0]]);
        assert!(TetradCase::AllOnes(2).members().is_err());
        assert!(TetradCase::TwoTwoOneOne { high: [1, 1] }.members().is_err());
        assert_eq!(TetradCase::parse("two-two-one-one:01").unwrap(), TetradCase::TwoTwoOneOne { high: [0, 1] });
        assert_eq!(TetradCase::parse("all-twos:1").unwrap(), TetradCase::AllTwos(1));
        assert!(TetradCase::parse("three:0").is_err());
    }

    #[test]
    fn tetrad_at_zero_theta_has_unit_weights() {
        let dm = tetrad(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let zero = dvector![0.0];
        let members = TetradCase::AllOnes(0).members().unwrap();
        let c0: Vec<f64> = members.iter().map(|y| phi_tetrad(y, &dm.x2, &zero, TetradCase::AllOnes(0)).unwrap()).collect();
        let c1: Vec<f64> = members.iter().map(|y| phi_tetrad(y, &dm.x2, &zero, TetradCase::AllOnes(1)).unwrap()).collect();
        assert_eq!(c0, vec![1.0, 0.0, -1.0]);
        assert_eq!(c1, vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn tetrad_zero_conditional_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = dvector![0.8];
        for _ in 0..5 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dm = tetrad(&x);
            let a = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            for case in TetradCase::all() {
                let f = |y: &[u8]| phi_tetrad(y, &dm.x2, &theta, case).unwrap();
                assert!(brute_force_expectation(&f, &dm, &a, &theta, 20).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_forms_lie_in_discovered_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let theta = dvector![0.9];
        let x = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let mut cases: Vec<(ClosedForm, DesignMatrices)> = vec![
            (ClosedForm::CondLogit, panel(&x(2, &mut rng))),
            (ClosedForm::ConfigC, config_c(&x(4, &mut rng))),
            (ClosedForm::ConfigF, config_f(&x(6, &mut rng))),
        ];
        let td = tetrad(&x(6, &mut rng));
        for case in TetradCase::all() {
            cases.push((ClosedForm::Tetrad(case), td.clone()));
        }
        for (form, dm) in cases {
            let cf = closed_form_moments(form, &dm, &theta).unwrap();
            assert!(cf.informative);
            assert!(cf.weighted_residual(&dm.x2, &theta).abs() < 1e-12);
            let same_level: Vec<MomentFunction> = discover_moments(&dm, &theta, 20)
                .unwrap()
                .into_iter()
                .filter(|m| m.level_key == cf.level_key)
                .collect();
            assert!(!same_level.is_empty());
            assert!(span_residual(&cf, &same_level) < 1e-10, "{form:?}");
        }
    }

    #[test]
    fn closed_form_rejects_wrong_design() {
        let dm = panel(&[0.0, 1.0]);
        assert!(closed_form_moments(ClosedForm::ConfigC, &dm, &dvector![0.1]).is_err());
    }
}
