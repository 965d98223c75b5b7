//! Particle-level schemes and Monte Carlo estimators: Euler-Maruyama for the
//! fast planar diffusion, the clipped scheme for the limit diffusion on the
//! graph, semigroup estimators, and the asymptotic-error functional
//! comparing the two mild-solution expansions under shared noise
//! coefficients.

use crate::error::{Error, Result};
use crate::graph_ops::WeightProfile;
use crate::hamiltonian::HamiltonianProfile;
use crate::noise::NoiseStream;
use rayon::prelude::*;

/// Parameters of the particle experiments. Double precision throughout; the
/// Monte Carlo layer is not generic.
#[derive(Debug, Clone)]
pub struct ParticleConfig {
    pub profile: HamiltonianProfile<f64>,
    pub epsilon: f64,
    pub tau: f64,
    /// Steps per trajectory.
    pub n_steps: usize,
    /// Inner Monte Carlo paths.
    pub paths: usize,
    /// Outer noise-coefficient samples.
    pub q_outer: usize,
    /// Truncated noise modes.
    pub m1: usize,
    /// Spatial evaluation half width: grid (ih, jh) with |i|, |j| < m2.
    pub m2: usize,
    /// Evaluation spacing.
    pub h: f64,
    /// Scales the rotation drift; 1 is the model, 0 isolates the noise.
    pub drift_scale: f64,
    /// Evaluate the graph scheme's coefficients at max(y, 0). When false,
    /// negative levels propagate into the coefficient formulas and fail.
    pub clamp_negative_levels: bool,
}

impl ParticleConfig {
    pub fn new(
        profile: HamiltonianProfile<f64>,
        epsilon: f64,
        tau: f64,
        n_steps: usize,
        paths: usize,
    ) -> Result<Self> {
        if epsilon <= 0.0 || tau <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon and tau must be positive, got {epsilon}, {tau}"
            )));
        }
        if n_steps == 0 || paths == 0 {
            return Err(Error::Config(format!(
                "n_steps and paths must be at least 1, got {n_steps}, {paths}"
            )));
        }
        Ok(ParticleConfig {
            profile,
            epsilon,
            tau,
            n_steps,
            paths,
            q_outer: 1,
            m1: 1,
            m2: 1,
            h: 1.0,
            drift_scale: 1.0,
            clamp_negative_levels: true,
        })
    }

    /// Side length of the evaluation grid.
    pub fn eval_side(&self) -> usize {
        2 * self.m2 - 1
    }

    /// Evaluation node for flat index k, matching the interior-grid layout.
    pub fn eval_node(&self, k: usize) -> [f64; 2] {
        let side = self.eval_side();
        let bound = self.m2 as i64 - 1;
        let i = (k % side) as i64 - bound;
        let j = (k / side) as i64 - bound;
        [self.h * i as f64, self.h * j as f64]
    }
}

/// Euler-Maruyama path of the fast planar process,
/// X_{n+1} = X_n + (tau / epsilon) grad_perp H(X_n) + dB_n,
/// recording every state; `noise` yields the increment of step n.
pub fn em_particle_x_snapshots(
    config: &ParticleConfig,
    x0: [f64; 2],
    mut noise: impl FnMut(usize) -> [f64; 2],
) -> Result<Vec<[f64; 2]>> {
    let scale = config.drift_scale * config.tau / config.epsilon;
    let mut path = Vec::with_capacity(config.n_steps + 1);
    let mut x = x0;
    path.push(x);
    for n in 0..config.n_steps {
        let v = config.profile.grad_perp_h(x);
        let db = noise(n);
        x = [x[0] + scale * v[0] + db[0], x[1] + scale * v[1] + db[1]];
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(Error::NonFiniteState { step: n });
        }
        path.push(x);
    }
    Ok(path)
}

/// Endpoint of the fast planar path.
pub fn em_particle_x(
    config: &ParticleConfig,
    x0: [f64; 2],
    noise: impl FnMut(usize) -> [f64; 2],
) -> Result<[f64; 2]> {
    Ok(*em_particle_x_snapshots(config, x0, noise)?.last().unwrap())
}

/// Clipped scheme for the graph diffusion,
/// Y_{n+1} = Y_n + beta(Y_n) tau + sqrt(max(2 alpha(Y_n), 0)) dW_n,
/// with coefficients evaluated at max(Y_n, 0); records every state.
pub fn scheme_y_snapshots(
    config: &ParticleConfig,
    z0: f64,
    mut noise: impl FnMut(usize) -> f64,
) -> Result<Vec<f64>> {
    if z0 < 0.0 {
        return Err(Error::Config(format!("initial level must be >= 0, got {z0}")));
    }
    let mut path = Vec::with_capacity(config.n_steps + 1);
    let mut y = z0;
    path.push(y);
    for n in 0..config.n_steps {
        let arg = if config.clamp_negative_levels { y.max(0.0) } else { y };
        let beta = config.profile.beta(arg)?;
        let alpha = config.profile.alpha(arg)?;
        let sigma = (2.0 * alpha).max(0.0).sqrt();
        y += config.drift_scale * beta * config.tau + sigma * noise(n);
        if !y.is_finite() {
            return Err(Error::NonFiniteState { step: n });
        }
        path.push(y);
    }
    Ok(path)
}

/// Endpoint of the graph path.
pub fn scheme_y(
    config: &ParticleConfig,
    z0: f64,
    noise: impl FnMut(usize) -> f64,
) -> Result<f64> {
    Ok(*scheme_y_snapshots(config, z0, noise)?.last().unwrap())
}

fn check_time_multiple(t: f64, tau: f64) -> Result<usize> {
    let n = (t / tau).round();
    if n < 0.0 || (n * tau - t).abs() > 1e-9 * tau.max(t.abs()) {
        return Err(Error::Config(format!(
            "t = {t} is not a nonnegative multiple of tau = {tau}"
        )));
    }
    Ok(n as usize)
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of E[phi(X^x(t))] over `config.paths` independent
/// paths; returns mean and standard error.
pub fn mc_semigroup_2d(
    config: &ParticleConfig,
    phi: impl Fn([f64; 2]) -> f64 + Sync,
    x: [f64; 2],
    t: f64,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let n = check_time_multiple(t, config.tau)?;
    if n == 0 {
        return Ok((phi(x), 0.0));
    }
    let run = ParticleConfig { n_steps: n, ..config.clone() };
    let samples: Vec<f64> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let stream = NoiseStream::<f64>::new(master_seed, p as u64, run.tau, 2, n as u64);
            let endpoint = em_particle_x(&run, x, |step| {
                let w = stream.sample_increments(0, step as u64).unwrap();
                [w[0], w[1]]
            })?;
            Ok(phi(endpoint))
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_se(&samples))
}

/// Monte Carlo estimate of E[f(Y^z(t))]; mirror of [`mc_semigroup_2d`].
pub fn mc_semigroup_graph(
    config: &ParticleConfig,
    f: impl Fn(f64) -> f64 + Sync,
    z: f64,
    t: f64,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let n = check_time_multiple(t, config.tau)?;
    if n == 0 {
        return Ok((f(z), 0.0));
    }
    let run = ParticleConfig { n_steps: n, ..config.clone() };
    let samples: Vec<f64> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let stream = NoiseStream::<f64>::new(master_seed, p as u64, run.tau, 1, n as u64);
            let endpoint = scheme_y(&run, z, |step| {
                stream.sample_increments(0, step as u64).unwrap()[0]
            })?;
            Ok(f(endpoint))
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_se(&samples))
}

/// Trajectory-ensemble averages reused across outer noise samples: the mean
/// of psi at the final time and, for every mode l and snapshot index m, the
/// mean of mode l over the ensemble states at time t_m.
#[derive(Debug, Clone)]
pub struct SnapshotMeans {
    pub psi_mean: f64,
    /// mode_means[l][m] = ensemble mean of mode l at step m, m = 0..=N.
    pub mode_means: Vec<Vec<f64>>,
}

impl SnapshotMeans {
    /// Assembles the mild-solution value for one coefficient draw:
    /// psi term plus sum over steps r and modes l of
    /// mode_means[l][N - r] * coefficients[l][r].
    pub fn combine(&self, coefficients: &[Vec<f64>]) -> f64 {
        let n = self.mode_means.first().map_or(1, |m| m.len()) - 1;
        let mut out = self.psi_mean;
        for (l, coeff) in coefficients.iter().enumerate() {
            for (r, &c) in coeff.iter().enumerate() {
                out += self.mode_means[l][n - r] * c;
            }
        }
        out
    }
}

/// Ensemble snapshot means of the planar process started at x.
pub fn snapshot_means_2d(
    config: &ParticleConfig,
    psi: &(impl Fn([f64; 2]) -> f64 + Sync),
    modes: &[impl Fn([f64; 2]) -> f64 + Sync],
    x: [f64; 2],
    master_seed: u64,
) -> Result<SnapshotMeans> {
    let n = config.n_steps;
    let per_path: Vec<(f64, Vec<Vec<f64>>)> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let stream = NoiseStream::<f64>::new(master_seed, p as u64, config.tau, 2, n as u64);
            let path = em_particle_x_snapshots(config, x, |step| {
                let w = stream.sample_increments(0, step as u64).unwrap();
                [w[0], w[1]]
            })?;
            let evals: Vec<Vec<f64>> = modes
                .iter()
                .map(|mode| path.iter().map(|&p| mode(p)).collect())
                .collect();
            Ok((psi(*path.last().unwrap()), evals))
        })
        .collect::<Result<_>>()?;
    Ok(reduce_snapshots(&per_path, modes.len(), n, config.paths))
}

/// Ensemble snapshot means of the graph process started at level z.
pub fn snapshot_means_graph(
    config: &ParticleConfig,
    psi: &(impl Fn(f64) -> f64 + Sync),
    modes: &[impl Fn(f64) -> f64 + Sync],
    z: f64,
    master_seed: u64,
) -> Result<SnapshotMeans> {
    let n = config.n_steps;
    let per_path: Vec<(f64, Vec<Vec<f64>>)> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let stream = NoiseStream::<f64>::new(master_seed, p as u64, config.tau, 1, n as u64);
            let path = scheme_y_snapshots(config, z, |step| {
                stream.sample_increments(0, step as u64).unwrap()[0]
            })?;
            let evals: Vec<Vec<f64>> = modes
                .iter()
                .map(|mode| path.iter().map(|&p| mode(p)).collect())
                .collect();
            Ok((psi(*path.last().unwrap()), evals))
        })
        .collect::<Result<_>>()?;
    Ok(reduce_snapshots(&per_path, modes.len(), n, config.paths))
}

fn reduce_snapshots(
    per_path: &[(f64, Vec<Vec<f64>>)],
    n_modes: usize,
    n_steps: usize,
    paths: usize,
) -> SnapshotMeans {
    let inv = 1.0 / paths as f64;
    let mut psi_mean = 0.0;
    let mut mode_means = vec![vec![0.0; n_steps + 1]; n_modes];
    for (psi_val, evals) in per_path {
        psi_mean += psi_val;
        for l in 0..n_modes {
            for m in 0..=n_steps {
                mode_means[l][m] += evals[l][m];
            }
        }
    }
    for row in &mut mode_means {
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    SnapshotMeans {
        psi_mean: psi_mean * inv,
        mode_means,
    }
}

/// Mild-solution estimate of the planar field at every evaluation node for
/// one coefficient draw; coefficients[l][r] is the mode-l Brownian increment
/// over (t_r, t_{r+1}).
pub fn estimate_u_points(
    config: &ParticleConfig,
    psi: &(impl Fn([f64; 2]) -> f64 + Sync),
    modes: &[impl Fn([f64; 2]) -> f64 + Sync],
    coefficients: &[Vec<f64>],
    master_seed: u64,
) -> Result<Vec<f64>> {
    check_coefficients(config, coefficients)?;
    let n_points = config.eval_side() * config.eval_side();
    (0..n_points)
        .map(|k| {
            let x = config.eval_node(k);
            let seed = master_seed ^ (k as u64).wrapping_mul(0x9e3779b97f4a7c15);
            let snap = snapshot_means_2d(config, psi, modes, x, seed)?;
            Ok(snap.combine(coefficients))
        })
        .collect()
}

/// Mirror of [`estimate_u_points`] on the graph: trajectories start at the
/// level H of each evaluation node and use the wedge projections of the
/// modes.
pub fn estimate_bar_u_points(
    config: &ParticleConfig,
    psi_wedge: &(impl Fn(f64) -> f64 + Sync),
    wedge_modes: &[impl Fn(f64) -> f64 + Sync],
    coefficients: &[Vec<f64>],
    master_seed: u64,
) -> Result<Vec<f64>> {
    check_coefficients(config, coefficients)?;
    let n_points = config.eval_side() * config.eval_side();
    (0..n_points)
        .map(|k| {
            let x = config.eval_node(k);
            let z = config.profile.eval_h(x);
            let seed = master_seed ^ (k as u64).wrapping_mul(0xd1342543de82ef95);
            let snap = snapshot_means_graph(config, psi_wedge, wedge_modes, z, seed)?;
            Ok(snap.combine(coefficients))
        })
        .collect()
}

fn check_coefficients(config: &ParticleConfig, coefficients: &[Vec<f64>]) -> Result<()> {
    if coefficients.len() != config.m1
        || coefficients.iter().any(|c| c.len() != config.n_steps)
    {
        return Err(Error::Config(format!(
            "coefficients must be m1 x n_steps = {} x {}",
            config.m1, config.n_steps
        )));
    }
    Ok(())
}

/// Pair of function families describing the additive noise experiment: the
/// initial datum and the truncated modes, each given on the plane and on the
/// graph.
pub struct AsymptoticProblem<Psi2, PsiG, M2F, MGF>
where
    Psi2: Fn([f64; 2]) -> f64 + Sync,
    PsiG: Fn(f64) -> f64 + Sync,
    M2F: Fn([f64; 2]) -> f64 + Sync,
    MGF: Fn(f64) -> f64 + Sync,
{
    pub psi: Psi2,
    pub psi_wedge: PsiG,
    pub modes: Vec<M2F>,
    pub wedge_modes: Vec<MGF>,
}

/// Weighted squared distance between the planar and graph mild-solution
/// estimates: sum over the evaluation window of
/// |U(ih, jh) - Ubar(H(ih, jh))|^2 gamma(H) h^2, averaged over
/// `config.q_outer` independent coefficient draws sharing the same
/// trajectory ensembles. Returns the mean and its standard error.
pub fn asymptotic_error<Psi2, PsiG, M2F, MGF>(
    config: &ParticleConfig,
    problem: &AsymptoticProblem<Psi2, PsiG, M2F, MGF>,
    gamma: &WeightProfile<f64>,
    master_seed: u64,
) -> Result<(f64, f64)>
where
    Psi2: Fn([f64; 2]) -> f64 + Sync,
    PsiG: Fn(f64) -> f64 + Sync,
    M2F: Fn([f64; 2]) -> f64 + Sync,
    MGF: Fn(f64) -> f64 + Sync,
{
    if problem.modes.len() != config.m1 || problem.wedge_modes.len() != config.m1 {
        return Err(Error::Config(format!(
            "expected {} modes, got {} planar and {} wedge",
            config.m1,
            problem.modes.len(),
            problem.wedge_modes.len()
        )));
    }
    let n_points = config.eval_side() * config.eval_side();
    // Trajectory ensembles are coefficient-independent; build the snapshot
    // means once per node and reuse them across all outer samples.
    let snapshots: Vec<(SnapshotMeans, SnapshotMeans, f64)> = (0..n_points)
        .map(|k| {
            let x = config.eval_node(k);
            let z = config.profile.eval_h(x);
            let seed_x = master_seed ^ (k as u64).wrapping_mul(0x9e3779b97f4a7c15);
            let seed_y = master_seed ^ (k as u64).wrapping_mul(0xd1342543de82ef95);
            let planar = snapshot_means_2d(config, &problem.psi, &problem.modes, x, seed_x)?;
            let graph =
                snapshot_means_graph(config, &problem.psi_wedge, &problem.wedge_modes, z, seed_y)?;
            Ok((planar, graph, gamma.eval(z)))
        })
        .collect::<Result<_>>()?;
    let coeff_seed = master_seed ^ 0xa0761d6478bd642f;
    let h2 = config.h * config.h;
    let samples: Vec<f64> = (0..config.q_outer)
        .map(|q| {
            let stream = NoiseStream::<f64>::new(
                coeff_seed,
                q as u64,
                config.tau,
                config.m1,
                config.n_steps as u64,
            );
            let mut coefficients = vec![vec![0.0; config.n_steps]; config.m1];
            for r in 0..config.n_steps {
                let w = stream.sample_increments(0, r as u64)?;
                for l in 0..config.m1 {
                    coefficients[l][r] = w[l];
                }
            }
            let mut acc = 0.0;
            for (planar, graph, weight) in &snapshots {
                // The identical coefficient vector enters both estimates.
                let u = planar.combine(&coefficients);
                let ubar = graph.combine(&coefficients);
                acc += (u - ubar) * (u - ubar) * weight * h2;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_se(&samples))
}
