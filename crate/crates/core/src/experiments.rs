//! Experiment harnesses: stepsize-convergence studies for both solvers,
//! the asymptotic-error sweep, the exponential Euler versus Euler-Maruyama
//! asymptotic comparison, slope fitting, flat key=value configuration
//! parsing, and CSV output.

use crate::dense::matrix_exp;
use crate::error::{Error, Result};
use crate::graph1d::{assemble_generator_graph, solve_path_graph, Graph1dSystem, GraphGrid};
use crate::graph_ops::{
    norm_sq_hgamma_2d, norm_sq_l2agamma_1d, wedge, AngularQuadrature, WeightProfile,
};
use crate::hamiltonian::{HamiltonianProfile, ZetaProfile};
use crate::noise::{
    covariance_matrix_2d, covariance_matrix_graph, NoiseStream, SpectralKernel,
};
use crate::particle::{asymptotic_error, AsymptoticProblem, ParticleConfig};
use crate::rda2d::{assemble_generator, solve_path, Grid2D, Rda2dSystem, Stepper, DEFAULT_NU};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Which experiment a configuration drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence2d,
    ConvergenceGraph,
    Asymptotics,
    ApCompare,
    KernelTable,
    ProfileValidate,
}

/// Time stepper selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    ExponentialEuler,
    EulerMaruyama,
}

impl SchemeKind {
    fn stepper(self) -> Stepper {
        match self {
            SchemeKind::ExponentialEuler => Stepper::ExponentialEuler,
            SchemeKind::EulerMaruyama => Stepper::EulerMaruyama,
        }
    }
}

/// Pointwise nonlinearities available for drift and diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Zero,
    One,
    Sin,
    Identity,
}

impl Nonlinearity {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::One => 1.0,
            Nonlinearity::Sin => u.sin(),
            Nonlinearity::Identity => u,
        }
    }
}

/// Mode choice for the asymptotic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApMode {
    /// x1 exp(-|x|^2); not constant on level sets.
    NonRadial,
    /// exp(-H); constant on level sets.
    Radial,
}

/// Fully resolved experiment parameters. Paper-scale values by default; the
/// desk flag swaps in the documented smaller Monte Carlo sizes.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    // Hamiltonian preset.
    pub zeta_family: String,
    pub zeta_alpha0: f64,
    pub zeta_beta0: f64,
    // Noise kernel preset.
    pub kernel_name: String,
    pub kernel_r: f64,
    // Weight preset.
    pub weight_name: String,
    pub weight_c0: f64,
    pub weight_lambda: f64,
    pub weight_z0: f64,
    // Geometry.
    pub l2d: f64,
    pub m2d: usize,
    pub l_graph: f64,
    pub h_graph: f64,
    // Time discretization: tau_l = 2^-(level_base + l), l = 1..=levels.
    pub t_end: f64,
    pub level_base: u32,
    pub levels: usize,
    // Model.
    pub epsilon: f64,
    pub drift: Nonlinearity,
    pub diffusion: Nonlinearity,
    // Monte Carlo sizes.
    pub paths_2d: usize,
    pub paths_graph: usize,
    pub paths_particle: usize,
    pub q_outer: usize,
    // Particle experiments.
    pub epsilon_sweep: Vec<f64>,
    pub t_particle: f64,
    pub tau_particle: f64,
    pub m1: usize,
    pub m2: usize,
    pub h_eval: f64,
    pub ap_mode: ApMode,
    // Plumbing.
    pub seed: u64,
    pub scheme: SchemeKind,
    pub desk: bool,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let ap = kind == ExperimentKind::ApCompare;
        ExperimentConfig {
            kind,
            zeta_family: "exp_decay".into(),
            // The scheme comparison needs strong differential rotation so
            // that level-set averaging is visible within one step.
            zeta_alpha0: if ap { 2.0 } else { 0.5 },
            zeta_beta0: 1.0,
            kernel_name: "gauss_pi".into(),
            kernel_r: 0.5,
            weight_name: if kind == ExperimentKind::Asymptotics {
                "const_one".into()
            } else {
                "exp_sqrt".into()
            },
            weight_c0: 1.0,
            weight_lambda: 1.0,
            weight_z0: 1.0,
            l2d: if ap { 2.0 } else { 1.0 },
            m2d: if ap { 16 } else { 5 },
            l_graph: 10.0,
            h_graph: if ap { 0.05 } else { 0.1 },
            t_end: 0.125,
            level_base: 6,
            levels: 6,
            epsilon: 1.0,
            drift: Nonlinearity::Zero,
            diffusion: Nonlinearity::Sin,
            paths_2d: 500,
            paths_graph: 1000,
            paths_particle: 500,
            q_outer: 100,
            epsilon_sweep: (1..=10).map(|k| 0.02 * k as f64).collect(),
            t_particle: 2f64.powi(-13),
            tau_particle: 2f64.powi(-18),
            m1: 1,
            m2: 5,
            h_eval: 2.0,
            ap_mode: ApMode::NonRadial,
            seed: 2026,
            scheme: SchemeKind::ExponentialEuler,
            desk: false,
        }
    }

    /// Desk-scale Monte Carlo sizes: P 500 -> 100 (2D), 1000 -> 200 (graph),
    /// Q 100 -> 20.
    pub fn apply_desk(&mut self) {
        self.desk = true;
        if self.paths_2d == 500 {
            self.paths_2d = 100;
        }
        if self.paths_graph == 1000 {
            self.paths_graph = 200;
        }
        if self.q_outer == 100 {
            self.q_outer = 20;
        }
    }

    pub fn profile(&self) -> Result<HamiltonianProfile<f64>> {
        let zeta = match self.zeta_family.as_str() {
            "exp_decay" => ZetaProfile::exp_decay(self.zeta_alpha0),
            "power_tail" => ZetaProfile::power_tail(self.zeta_alpha0, self.zeta_beta0),
            other => {
                return Err(Error::Config(format!("unknown hamiltonian family '{other}'")))
            }
        };
        Ok(HamiltonianProfile::new(zeta))
    }

    pub fn kernel(&self) -> Result<SpectralKernel<f64>> {
        Ok(match self.kernel_name.as_str() {
            "gauss_pi" => SpectralKernel::GaussPi,
            "heat" => SpectralKernel::Heat { r: self.kernel_r },
            "poisson" => SpectralKernel::Poisson { r: self.kernel_r },
            "bessel" => SpectralKernel::Bessel { r: self.kernel_r },
            "riesz" => SpectralKernel::Riesz { r: self.kernel_r },
            other => return Err(Error::Config(format!("unknown kernel '{other}'"))),
        })
    }

    pub fn weight(&self) -> Result<WeightProfile<f64>> {
        Ok(match self.weight_name.as_str() {
            "exp_sqrt" => WeightProfile::ExpSqrt,
            "const_one" => WeightProfile::ConstOne,
            "power_tail" => WeightProfile::PowerTail {
                c0: self.weight_c0,
                lambda: self.weight_lambda,
                z0: self.weight_z0,
            },
            "exp_tail" => WeightProfile::ExpTail {
                c0: self.weight_c0,
                lambda: self.weight_lambda,
                z0: self.weight_z0,
            },
            other => return Err(Error::Config(format!("unknown weight '{other}'"))),
        })
    }

    /// Stepsize of level l, l = 1..=levels.
    pub fn tau_level(&self, l: usize) -> f64 {
        2f64.powi(-(self.level_base as i32 + l as i32))
    }

    /// Applies one key=value assignment.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid value '{value}' for {what}"));
        let f = || value.parse::<f64>().map_err(|_| bad(key));
        let u = || value.parse::<usize>().map_err(|_| bad(key));
        match key {
            "experiment" => {
                self.kind = match value {
                    "convergence_2d" => ExperimentKind::Convergence2d,
                    "convergence_graph" => ExperimentKind::ConvergenceGraph,
                    "asymptotics" => ExperimentKind::Asymptotics,
                    "ap_compare" => ExperimentKind::ApCompare,
                    "kernel_table" => ExperimentKind::KernelTable,
                    "validate_profile" => ExperimentKind::ProfileValidate,
                    _ => return Err(bad(key)),
                };
            }
            "hamiltonian.family" => {
                if !matches!(value, "exp_decay" | "power_tail") {
                    return Err(bad(key));
                }
                self.zeta_family = value.into();
            }
            "hamiltonian.alpha0" => self.zeta_alpha0 = f()?,
            "hamiltonian.beta0" => self.zeta_beta0 = f()?,
            "noise.kernel" => {
                if !matches!(value, "gauss_pi" | "heat" | "poisson" | "bessel" | "riesz") {
                    return Err(bad(key));
                }
                self.kernel_name = value.into();
            }
            "noise.r" => self.kernel_r = f()?,
            "weight.preset" => {
                if !matches!(value, "exp_sqrt" | "const_one" | "power_tail" | "exp_tail") {
                    return Err(bad(key));
                }
                self.weight_name = value.into();
            }
            "weight.c0" => self.weight_c0 = f()?,
            "weight.lambda" => self.weight_lambda = f()?,
            "weight.z0" => self.weight_z0 = f()?,
            "grid.l" => self.l2d = f()?,
            "grid.m" => self.m2d = u()?,
            "grid.l_graph" => self.l_graph = f()?,
            "grid.h_graph" => self.h_graph = f()?,
            "time.t" => self.t_end = f()?,
            "time.level_base" => self.level_base = value.parse().map_err(|_| bad(key))?,
            "time.levels" => self.levels = u()?,
            "time.t_particle" => self.t_particle = f()?,
            "time.tau_particle" => self.tau_particle = f()?,
            "model.epsilon" => self.epsilon = f()?,
            "model.b" => self.drift = parse_nonlinearity(value).ok_or_else(|| bad(key))?,
            "model.g" => self.diffusion = parse_nonlinearity(value).ok_or_else(|| bad(key))?,
            "mc.paths_2d" => self.paths_2d = u()?,
            "mc.paths_graph" => self.paths_graph = u()?,
            "mc.paths_particle" => self.paths_particle = u()?,
            "mc.q_outer" => self.q_outer = u()?,
            "mc.m1" => self.m1 = u()?,
            "mc.m2" => self.m2 = u()?,
            "mc.h_eval" => self.h_eval = f()?,
            "sweep.epsilon" => {
                let parsed: std::result::Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse::<f64>()).collect();
                self.epsilon_sweep = parsed.map_err(|_| bad(key))?;
            }
            "ap.mode" => {
                self.ap_mode = match value {
                    "non_radial" => ApMode::NonRadial,
                    "radial" => ApMode::Radial,
                    _ => return Err(bad(key)),
                };
            }
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "scheme" => {
                self.scheme = match value {
                    "exp_euler" => SchemeKind::ExponentialEuler,
                    "euler_maruyama" => SchemeKind::EulerMaruyama,
                    _ => return Err(bad(key)),
                };
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses key=value lines; '#' starts a comment, blank lines ignored,
    /// unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            self.set_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Flat echo of every resolved parameter for the metadata sidecar.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let kind = match self.kind {
            ExperimentKind::Convergence2d => "convergence_2d",
            ExperimentKind::ConvergenceGraph => "convergence_graph",
            ExperimentKind::Asymptotics => "asymptotics",
            ExperimentKind::ApCompare => "ap_compare",
            ExperimentKind::KernelTable => "kernel_table",
            ExperimentKind::ProfileValidate => "validate_profile",
        };
        let sweep = self
            .epsilon_sweep
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("experiment".into(), kind.into()),
            ("hamiltonian.family".into(), self.zeta_family.clone()),
            ("hamiltonian.alpha0".into(), self.zeta_alpha0.to_string()),
            ("hamiltonian.beta0".into(), self.zeta_beta0.to_string()),
            ("noise.kernel".into(), self.kernel_name.clone()),
            ("noise.r".into(), self.kernel_r.to_string()),
            ("weight.preset".into(), self.weight_name.clone()),
            ("grid.l".into(), self.l2d.to_string()),
            ("grid.m".into(), self.m2d.to_string()),
            ("grid.l_graph".into(), self.l_graph.to_string()),
            ("grid.h_graph".into(), self.h_graph.to_string()),
            ("time.t".into(), self.t_end.to_string()),
            ("time.level_base".into(), self.level_base.to_string()),
            ("time.levels".into(), self.levels.to_string()),
            ("time.t_particle".into(), self.t_particle.to_string()),
            ("time.tau_particle".into(), self.tau_particle.to_string()),
            ("model.epsilon".into(), self.epsilon.to_string()),
            ("model.b".into(), format!("{:?}", self.drift).to_lowercase()),
            ("model.g".into(), format!("{:?}", self.diffusion).to_lowercase()),
            ("mc.paths_2d".into(), self.paths_2d.to_string()),
            ("mc.paths_graph".into(), self.paths_graph.to_string()),
            ("mc.paths_particle".into(), self.paths_particle.to_string()),
            ("mc.q_outer".into(), self.q_outer.to_string()),
            ("mc.m1".into(), self.m1.to_string()),
            ("mc.m2".into(), self.m2.to_string()),
            ("mc.h_eval".into(), self.h_eval.to_string()),
            ("sweep.epsilon".into(), sweep),
            (
                "ap.mode".into(),
                match self.ap_mode {
                    ApMode::NonRadial => "non_radial".into(),
                    ApMode::Radial => "radial".into(),
                },
            ),
            ("seed".into(), self.seed.to_string()),
            (
                "scheme".into(),
                match self.scheme {
                    SchemeKind::ExponentialEuler => "exp_euler".into(),
                    SchemeKind::EulerMaruyama => "euler_maruyama".into(),
                },
            ),
            ("desk".into(), self.desk.to_string()),
        ]
    }
}

fn parse_nonlinearity(value: &str) -> Option<Nonlinearity> {
    match value {
        "zero" => Some(Nonlinearity::Zero),
        "one" => Some(Nonlinearity::One),
        "sin" => Some(Nonlinearity::Sin),
        "identity" => Some(Nonlinearity::Identity),
        _ => None,
    }
}

/// One output row: label (tau, epsilon, or distance), value, standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub label: f64,
    pub error: f64,
    pub std_error: f64,
}

/// Result table of an experiment run plus the metadata echo.
#[derive(Debug, Clone)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub metadata: Vec<(String, String)>,
}

/// Errors below this floor are treated as exactly zero for fitting purposes.
pub const EXACTNESS_FLOOR: f64 = 1e-8;

impl ErrorTable {
    /// Whether every row is below the deterministic exactness floor; such
    /// tables report "exact" instead of a fitted slope.
    pub fn is_exact(&self) -> bool {
        self.rows.iter().all(|r| r.error < EXACTNESS_FLOOR)
    }
}

fn check_step_count(t: f64, tau: f64) -> Result<usize> {
    let n = (t / tau).round();
    if n < 1.0 || (n * tau - t).abs() > 1e-9 * t {
        return Err(Error::Config(format!(
            "horizon {t} is not an integer multiple of stepsize {tau}"
        )));
    }
    Ok(n as usize)
}

fn rms_with_se(per_path_sq: &[f64]) -> (f64, f64) {
    let p = per_path_sq.len() as f64;
    let mean = per_path_sq.iter().sum::<f64>() / p;
    let rms = mean.max(0.0).sqrt();
    if per_path_sq.len() < 2 || rms < 1e-300 {
        return (rms, 0.0);
    }
    let var = per_path_sq
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (p - 1.0);
    // Delta method: se of sqrt(mean) from the se of the mean.
    (rms, (var / p).sqrt() / (2.0 * rms))
}

/// Stepsize convergence of the planar solver.
///
/// For each adjacent pair of dyadic levels the same Brownian path drives
/// both stepsizes; one row per pair, labeled with the coarser tau, holding
/// the root-mean-square weighted distance of the two endpoints across paths.
pub fn run_convergence_2d(config: &ExperimentConfig) -> Result<ErrorTable> {
    if config.levels < 2 {
        return Err(Error::Config("need at least two stepsize levels".into()));
    }
    let profile = config.profile()?;
    let weight = config.weight()?;
    let grid = Grid2D::new(config.l2d, config.m2d)?;
    let generator = assemble_generator(&grid, &profile, DEFAULT_NU, config.epsilon)?;
    let covariance = covariance_matrix_2d(&config.kernel()?, grid.m, grid.h)?;
    let systems: Vec<Rda2dSystem<f64>> = (1..=config.levels)
        .map(|l| {
            Rda2dSystem::new(
                grid,
                generator.clone(),
                &covariance,
                config.tau_level(l),
                crate::noise::DEFAULT_CLIP_TOL,
            )
        })
        .collect::<Result<_>>()?;
    let tau_min = config.tau_level(config.levels);
    let n_fine = check_step_count(config.t_end, tau_min)? as u64;
    let initial: Vec<f64> = (0..grid.dim())
        .map(|k| (-profile.eval_h(grid.node(k).unwrap())).exp())
        .collect();
    let drift = config.drift;
    let diffusion = config.diffusion;
    let stepper = config.scheme.stepper();

    let endpoints: Vec<Vec<Vec<f64>>> = (0..config.paths_2d)
        .into_par_iter()
        .map(|p| {
            let stream =
                NoiseStream::<f64>::new(config.seed, p as u64, tau_min, grid.dim(), n_fine);
            systems
                .iter()
                .enumerate()
                .map(|(idx, sys)| {
                    let dyadic = (config.levels - 1 - idx) as u32;
                    let n_steps = (n_fine >> dyadic) as usize;
                    // Coupling check: this level's increments are exact
                    // block sums of the finest level's.
                    if dyadic > 0 {
                        let coarse = stream.sample_increments(dyadic, 0)?;
                        let a = stream.sample_increments(dyadic - 1, 0)?;
                        let b = stream.sample_increments(dyadic - 1, 1)?;
                        for c in 0..grid.dim() {
                            assert_eq!(coarse[c], a[c] + b[c], "dyadic coupling broken");
                        }
                    }
                    solve_path(
                        sys,
                        stepper,
                        &initial,
                        n_steps,
                        |u| drift.eval(u),
                        |u| diffusion.eval(u),
                        |n| stream.sample_increments(dyadic, n as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for l in 1..config.levels {
        let per_path_sq: Vec<f64> = endpoints
            .iter()
            .map(|levels| {
                let coarse = &levels[l - 1];
                let fine = &levels[l];
                let diff: Vec<f64> = coarse.iter().zip(fine).map(|(a, b)| a - b).collect();
                norm_sq_hgamma_2d(&diff, grid.m, grid.h, &weight, &profile)
            })
            .collect();
        let (error, std_error) = rms_with_se(&per_path_sq);
        if !error.is_finite() {
            return Err(Error::NonFinite);
        }
        rows.push(ErrorRow {
            label: config.tau_level(l),
            error,
            std_error,
        });
    }
    Ok(ErrorTable {
        rows,
        metadata: config.metadata(),
    })
}

/// Stepsize convergence of the graph solver; mirror of
/// [`run_convergence_2d`] in the A(z) gamma(z) dz norm.
pub fn run_convergence_graph(config: &ExperimentConfig) -> Result<ErrorTable> {
    if config.levels < 2 {
        return Err(Error::Config("need at least two stepsize levels".into()));
    }
    let profile = config.profile()?;
    let weight = config.weight()?;
    let m = check_step_count(config.l_graph, config.h_graph)?;
    let grid = GraphGrid::new(m, config.h_graph)?;
    let generator = assemble_generator_graph(&grid, &profile)?;
    let quad = AngularQuadrature::default();
    let covariance =
        covariance_matrix_graph(&config.kernel()?, &profile, m, config.h_graph, &quad)?;
    let systems: Vec<Graph1dSystem<f64>> = (1..=config.levels)
        .map(|l| {
            Graph1dSystem::new(
                grid,
                generator.clone(),
                &covariance,
                config.tau_level(l),
                crate::noise::DEFAULT_CLIP_TOL,
            )
        })
        .collect::<Result<_>>()?;
    let tau_min = config.tau_level(config.levels);
    let n_fine = check_step_count(config.t_end, tau_min)? as u64;
    let initial: Vec<f64> = (0..m).map(|i| (-grid.node(i)).exp()).collect();
    let drift = config.drift;
    let diffusion = config.diffusion;
    let stepper = config.scheme.stepper();

    let endpoints: Vec<Vec<Vec<f64>>> = (0..config.paths_graph)
        .into_par_iter()
        .map(|p| {
            let stream = NoiseStream::<f64>::new(config.seed, p as u64, tau_min, m, n_fine);
            systems
                .iter()
                .enumerate()
                .map(|(idx, sys)| {
                    let dyadic = (config.levels - 1 - idx) as u32;
                    let n_steps = (n_fine >> dyadic) as usize;
                    solve_path_graph(
                        sys,
                        stepper,
                        &initial,
                        n_steps,
                        |u| drift.eval(u),
                        |u| diffusion.eval(u),
                        |n| stream.sample_increments(dyadic, n as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for l in 1..config.levels {
        let per_path_sq: Vec<f64> = endpoints
            .iter()
            .map(|levels| {
                let diff: Vec<f64> = levels[l - 1]
                    .iter()
                    .zip(&levels[l])
                    .map(|(a, b)| a - b)
                    .collect();
                norm_sq_l2agamma_1d(&diff, config.h_graph, &weight, &profile)
            })
            .collect::<Result<_>>()?;
        let (error, std_error) = rms_with_se(&per_path_sq);
        if !error.is_finite() {
            return Err(Error::NonFinite);
        }
        rows.push(ErrorRow {
            label: config.tau_level(l),
            error,
            std_error,
        });
    }
    Ok(ErrorTable {
        rows,
        metadata: config.metadata(),
    })
}

/// Asymptotic-error sweep of the particle estimators: one row per epsilon,
/// comparing the planar and graph mild-solution expansions of the additive
/// noise problem with psi = 0 and the radial mode 10 sin z + 6 z.
pub fn run_asymptotics(config: &ExperimentConfig) -> Result<ErrorTable> {
    let profile = config.profile()?;
    let weight = config.weight()?;
    let n_steps = check_step_count(config.t_particle, config.tau_particle)?;
    let mode_graph = |z: f64| 10.0 * z.sin() + 6.0 * z;
    let mut rows = Vec::new();
    for (idx, &epsilon) in config.epsilon_sweep.iter().enumerate() {
        let mut pcfg = ParticleConfig::new(
            profile.clone(),
            epsilon,
            config.tau_particle,
            n_steps,
            config.paths_particle,
        )?;
        pcfg.q_outer = config.q_outer;
        pcfg.m1 = config.m1;
        pcfg.m2 = config.m2;
        pcfg.h = config.h_eval;
        // Mode 1 is the Fig-style radial profile; higher modes are scaled
        // copies so any truncation length is well defined.
        let modes: Vec<_> = (1..=config.m1)
            .map(|l| {
                let p2 = profile.clone();
                let scale = 1.0 / l as f64;
                move |x: [f64; 2]| scale * mode_graph(p2.eval_h(x))
            })
            .collect();
        let wedge_modes: Vec<_> = (1..=config.m1)
            .map(|l| {
                let scale = 1.0 / l as f64;
                move |z: f64| scale * mode_graph(z)
            })
            .collect();
        let problem = AsymptoticProblem {
            psi: |_: [f64; 2]| 0.0,
            psi_wedge: |_: f64| 0.0,
            modes,
            wedge_modes,
        };
        let seed = config.seed ^ (idx as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15);
        let (error, std_error) = asymptotic_error(&pcfg, &problem, &weight, seed)?;
        if !error.is_finite() {
            return Err(Error::NonFinite);
        }
        rows.push(ErrorRow { label: epsilon, error, std_error });
    }
    Ok(ErrorTable {
        rows,
        metadata: config.metadata(),
    })
}

/// Linear interpolation of graph-node values at level z; zero beyond the
/// truncation point, matching the Dirichlet closure.
fn lift_graph_values(values: &[f64], h: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return values[0];
    }
    let pos = z / h;
    let i = pos.floor() as usize;
    if i + 1 >= values.len() {
        if i >= values.len() {
            return 0.0;
        }
        let t = pos - i as f64;
        return values[i] * (1.0 - t);
    }
    let t = pos - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// One-step asymptotic comparison of the two steppers on the matrix solvers.
///
/// For each epsilon the planar scheme takes a single step of size t from
/// psi = exp(-H) with one additive mode increment, and is compared in the
/// weighted norm against the lifted graph step under the same increment.
/// Returns the exponential Euler table first, Euler-Maruyama second.
pub fn run_ap_compare(config: &ExperimentConfig) -> Result<(ErrorTable, ErrorTable)> {
    let profile = config.profile()?;
    let weight = config.weight()?;
    let grid = Grid2D::new(config.l2d, config.m2d)?;
    let tau = config.t_end;
    // Graph grid covering every level the planar grid attains.
    let z_needed = (0..grid.dim())
        .map(|k| profile.eval_h(grid.node(k).unwrap()))
        .fold(0.0f64, f64::max);
    let m_graph = (z_needed / config.h_graph).ceil() as usize + 2;
    let graph = GraphGrid::new(m_graph, config.h_graph)?;
    let gen_graph = assemble_generator_graph(&graph, &profile)?;
    let prop_graph = matrix_exp(&gen_graph, tau)?;

    let p = &profile;
    let mode_planar: Box<dyn Fn([f64; 2]) -> f64> = match config.ap_mode {
        ApMode::NonRadial => {
            Box::new(|x: [f64; 2]| 10.0 * x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp())
        }
        ApMode::Radial => Box::new(move |x: [f64; 2]| (-p.eval_h(x)).exp()),
    };
    let quad = AngularQuadrature::default();
    let mode_2d: Vec<f64> = (0..grid.dim())
        .map(|k| mode_planar(grid.node(k).unwrap()))
        .collect();
    let mode_graph: Vec<f64> = (0..m_graph)
        .map(|i| wedge(&profile, |a, b| mode_planar([a, b]), graph.node(i), &quad))
        .collect::<Result<_>>()?;
    let psi_2d: Vec<f64> = (0..grid.dim())
        .map(|k| (-profile.eval_h(grid.node(k).unwrap())).exp())
        .collect();
    let psi_graph: Vec<f64> = (0..m_graph).map(|i| (-graph.node(i)).exp()).collect();
    let dbeta = tau.sqrt();

    // Graph steps are epsilon independent.
    let inner_graph: Vec<f64> = psi_graph
        .iter()
        .zip(&mode_graph)
        .map(|(&u, &w)| u + w * dbeta)
        .collect();
    let graph_exp = prop_graph.matvec(&inner_graph);
    let lu = gen_graph.matvec(&psi_graph);
    let graph_em: Vec<f64> = psi_graph
        .iter()
        .zip(lu.iter().zip(&mode_graph))
        .map(|(&u, (&l, &w))| u + tau * l + w * dbeta)
        .collect();
    let lift = |values: &[f64], k: usize| {
        lift_graph_values(values, graph.h, profile.eval_h(grid.node(k).unwrap()))
    };

    let mut rows_exp = Vec::new();
    let mut rows_em = Vec::new();
    for &epsilon in &config.epsilon_sweep {
        let generator = assemble_generator(&grid, &profile, DEFAULT_NU, epsilon)?;
        let inner: Vec<f64> = psi_2d
            .iter()
            .zip(&mode_2d)
            .map(|(&u, &w)| u + w * dbeta)
            .collect();
        let u_exp = matrix_exp(&generator, tau)?.matvec(&inner);
        let lu = generator.matvec(&psi_2d);
        let u_em: Vec<f64> = psi_2d
            .iter()
            .zip(lu.iter().zip(&mode_2d))
            .map(|(&u, (&l, &w))| u + tau * l + w * dbeta)
            .collect();
        let diff_exp: Vec<f64> = (0..grid.dim())
            .map(|k| u_exp[k] - lift(&graph_exp, k))
            .collect();
        let diff_em: Vec<f64> = (0..grid.dim())
            .map(|k| u_em[k] - lift(&graph_em, k))
            .collect();
        let d_exp = norm_sq_hgamma_2d(&diff_exp, grid.m, grid.h, &weight, &profile);
        let d_em = norm_sq_hgamma_2d(&diff_em, grid.m, grid.h, &weight, &profile);
        if !(d_exp.is_finite() && d_em.is_finite()) {
            return Err(Error::NonFinite);
        }
        rows_exp.push(ErrorRow { label: epsilon, error: d_exp, std_error: 0.0 });
        rows_em.push(ErrorRow { label: epsilon, error: d_em, std_error: 0.0 });
    }
    let mut meta_exp = config.metadata();
    meta_exp.push(("table".into(), "exp_euler".into()));
    let mut meta_em = config.metadata();
    meta_em.push(("table".into(), "euler_maruyama".into()));
    Ok((
        ErrorTable { rows: rows_exp, metadata: meta_exp },
        ErrorTable { rows: rows_em, metadata: meta_em },
    ))
}

/// Tabulates the configured kernel against distance; Riesz starts away from
/// its singularity.
pub fn run_kernel_table(config: &ExperimentConfig) -> Result<ErrorTable> {
    let kernel = config.kernel()?;
    let start = if kernel.finite_at_origin() { 0 } else { 1 };
    let rows = (start..=40)
        .map(|k| {
            let d = 0.1 * k as f64;
            Ok(ErrorRow {
                label: d,
                error: kernel.eval_radial(d)?,
                std_error: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ErrorTable {
        rows,
        metadata: config.metadata(),
    })
}

/// Least-squares slope of log2(error) against log2(label) with a 95%
/// confidence half-width.
pub fn fit_loglog_slope(table: &ErrorTable) -> Result<(f64, f64)> {
    let n = table.rows.len();
    if n < 2 || table.rows.iter().any(|r| r.error <= 0.0 || r.label <= 0.0) {
        return Err(Error::UnfittableTable);
    }
    let xs: Vec<f64> = table.rows.iter().map(|r| r.label.log2()).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| r.error.log2()).collect();
    let xbar = xs.iter().sum::<f64>() / n as f64;
    let ybar = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx == 0.0 {
        return Err(Error::UnfittableTable);
    }
    let slope = sxy / sxx;
    if n == 2 {
        return Ok((slope, 0.0));
    }
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let dof = (n - 2) as f64;
    let se = (ss_res / dof / sxx).sqrt();
    // Two-sided 97.5% Student t quantiles for small dof.
    const T975: [f64; 10] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    ];
    let t = if n - 2 <= 10 { T975[n - 3] } else { 1.96 };
    Ok((slope, t * se))
}

fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `<stem>.csv`, `<stem>.meta.txt`, and a self-contained plotting
/// script `<stem>.plot.py` under `out_dir`; returns the paths.
pub fn emit_outputs(
    table: &ErrorTable,
    out_dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let mut csv = String::from("label,error,std_error\n");
    for row in &table.rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            format_sig17(row.label),
            format_sig17(row.error),
            format_sig17(row.std_error)
        ));
    }
    std::fs::write(&csv_path, csv)?;

    let meta_path = out_dir.join(format!("{stem}.meta.txt"));
    let mut meta = String::new();
    for (k, v) in &table.metadata {
        meta.push_str(&format!("{k}={v}\n"));
    }
    std::fs::write(&meta_path, meta)?;

    let plot_path = out_dir.join(format!("{stem}.plot.py"));
    let plot = format!(
        "#!/usr/bin/env python3\n\
         \"\"\"Log-log plot of {stem}.csv (same directory).\"\"\"\n\
         import csv\n\
         import pathlib\n\
         import matplotlib.pyplot as plt\n\
         \n\
         here = pathlib.Path(__file__).resolve().parent\n\
         with open(here / \"{stem}.csv\") as fh:\n\
         \x20\x20\x20\x20rows = list(csv.DictReader(fh))\n\
         x = [float(r[\"label\"]) for r in rows]\n\
         y = [float(r[\"error\"]) for r in rows]\n\
         e = [float(r[\"std_error\"]) for r in rows]\n\
         plt.errorbar(x, y, yerr=e, marker=\"o\")\n\
         plt.xscale(\"log\", base=2)\n\
         plt.yscale(\"log\", base=2)\n\
         plt.xlabel(\"label\")\n\
         plt.ylabel(\"error\")\n\
         plt.title(\"{stem}\")\n\
         plt.grid(True, which=\"both\", alpha=0.3)\n\
         plt.savefig(here / \"{stem}.png\", dpi=150)\n"
    );
    std::fs::write(&plot_path, plot)?;
    Ok(vec![csv_path, meta_path, plot_path])
}

/// Parses a CSV produced by [`emit_outputs`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<ErrorRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("label,error,std_error") => {}
        other => {
            return Err(Error::Config(format!("bad CSV header: {other:?}")));
        }
    }
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Config(format!("bad CSV row '{line}'")));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number '{s}'")))
            };
            Ok(ErrorRow {
                label: parse(fields[0])?,
                error: parse(fields[1])?,
                std_error: parse(fields[2])?,
            })
        })
        .collect()
}

/// Spearman rank correlation between labels and errors; the trend statistic
/// of the asymptotic sweep.
pub fn spearman(table: &ErrorTable) -> f64 {
    let n = table.rows.len();
    let rank = |values: Vec<f64>| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut out = vec![0.0; n];
        for (r, &i) in idx.iter().enumerate() {
            out[i] = r as f64;
        }
        out
    };
    let rx = rank(table.rows.iter().map(|r| r.label).collect());
    let ry = rank(table.rows.iter().map(|r| r.error).collect());
    let mean = (n as f64 - 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..n {
        num += (rx[i] - mean) * (ry[i] - mean);
        dx += (rx[i] - mean) * (rx[i] - mean);
        dy += (ry[i] - mean) * (ry[i] - mean);
    }
    num / (dx * dy).sqrt()
}
