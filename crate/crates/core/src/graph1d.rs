//! Full discretization of the limiting SPDE on the graph [0, infinity):
//! finite differences for the degenerate generator alpha(z) d^2/dz^2 +
//! beta(z) d/dz with a drift-only vertex stencil at z = 0, truncation at
//! z = M h, and the same exponential Euler and Euler-Maruyama steppers as
//! the planar system.

use crate::dense::{matrix_exp, DenseMatrix};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianProfile;
use crate::noise::psd_sqrt;
use crate::scalar::Scalar;

/// Uniform grid z_i = i h, i = 0..M-1, on the truncated graph [0, M h).
#[derive(Debug, Clone, Copy)]
pub struct GraphGrid<S> {
    pub m: usize,
    pub h: S,
}

impl<S: Scalar> GraphGrid<S> {
    pub fn new(m: usize, h: S) -> Result<Self> {
        if m < 2 || h <= S::zero() {
            return Err(Error::Config(format!(
                "graph grid requires M >= 2 and h > 0, got M = {m}, h = {h}"
            )));
        }
        Ok(GraphGrid { m, h })
    }

    pub fn node(&self, i: usize) -> S {
        self.h * S::from_usize(i).unwrap()
    }

    /// Truncation point of the grid.
    pub fn z_max(&self) -> S {
        self.h * S::from_usize(self.m).unwrap()
    }
}

/// Generator matrix of the limit diffusion on the grid.
///
/// The diffusion coefficient alpha vanishes at the vertex, so row 0 carries
/// only the one-sided drift beta(0) (u_1 - u_0) / h. Interior rows use
/// centered stencils; the last row sees the homogeneous Dirichlet value at
/// z = M h.
pub fn assemble_generator_graph<S: Scalar>(
    grid: &GraphGrid<S>,
    profile: &HamiltonianProfile<S>,
) -> Result<DenseMatrix<S>> {
    let m = grid.m;
    let h = grid.h;
    let mut out = DenseMatrix::zeros(m, m);
    let beta0 = profile.beta(S::zero())?;
    out[(0, 0)] = -beta0 / h;
    out[(0, 1)] = beta0 / h;
    for i in 1..m {
        let z = grid.node(i);
        let alpha = profile.alpha(z)?;
        let beta = profile.beta(z)?;
        let diff = alpha / (h * h);
        let drift = beta / (S::c(2.0) * h);
        out[(i, i - 1)] = diff - drift;
        out[(i, i)] = -S::c(2.0) * diff;
        if i + 1 < m {
            out[(i, i + 1)] = diff + drift;
        }
    }
    Ok(out)
}

/// Discretized graph system with cached propagator and noise square root.
pub struct Graph1dSystem<S> {
    pub grid: GraphGrid<S>,
    pub generator: DenseMatrix<S>,
    pub propagator: DenseMatrix<S>,
    pub noise_sqrt: DenseMatrix<S>,
    pub tau: S,
    gershgorin_radius: S,
}

impl<S: Scalar> Graph1dSystem<S> {
    pub fn new(
        grid: GraphGrid<S>,
        generator: DenseMatrix<S>,
        covariance: &DenseMatrix<S>,
        tau: S,
        clip_tol: S,
    ) -> Result<Self> {
        if generator.rows != grid.m || covariance.rows != grid.m {
            return Err(Error::DimensionMismatch {
                expected: grid.m,
                got: generator.rows.max(covariance.rows),
            });
        }
        if tau <= S::zero() {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        let propagator = matrix_exp(&generator, tau)?;
        let noise_sqrt = psd_sqrt(covariance, clip_tol)?;
        let radius = (0..generator.rows)
            .map(|i| {
                (0..generator.cols).fold(S::zero(), |acc, j| acc + generator[(i, j)].abs())
            })
            .fold(S::zero(), |a, b| a.max(b));
        Ok(Graph1dSystem {
            grid,
            generator,
            propagator,
            noise_sqrt,
            tau,
            gershgorin_radius: radius,
        })
    }

    /// Tau times the Gershgorin bound on the generator spectral radius.
    pub fn em_cfl(&self) -> S {
        self.tau * self.gershgorin_radius
    }

    fn colored_noise(&self, state: &[S], diffusion: impl Fn(S) -> S, white: &[S]) -> Vec<S> {
        let colored = self.noise_sqrt.matvec(white);
        state
            .iter()
            .zip(&colored)
            .map(|(&u, &w)| diffusion(u) * w)
            .collect()
    }

    /// Exponential Euler step on the graph.
    pub fn step_exponential_euler(
        &self,
        state: &[S],
        drift: impl Fn(S) -> S,
        diffusion: impl Fn(S) -> S,
        white: &[S],
    ) -> Result<Vec<S>> {
        self.check_lengths(state, white)?;
        let noise = self.colored_noise(state, diffusion, white);
        let inner: Vec<S> = state
            .iter()
            .zip(&noise)
            .map(|(&u, &w)| u + drift(u) * self.tau + w)
            .collect();
        Ok(self.propagator.matvec(&inner))
    }

    /// Euler-Maruyama step on the graph.
    pub fn step_euler_maruyama(
        &self,
        state: &[S],
        drift: impl Fn(S) -> S,
        diffusion: impl Fn(S) -> S,
        white: &[S],
    ) -> Result<Vec<S>> {
        self.check_lengths(state, white)?;
        let noise = self.colored_noise(state, diffusion, white);
        let lu = self.generator.matvec(state);
        Ok(state
            .iter()
            .zip(lu.iter().zip(&noise))
            .map(|(&u, (&l, &w))| u + self.tau * (l + drift(u)) + w)
            .collect())
    }

    fn check_lengths(&self, state: &[S], white: &[S]) -> Result<()> {
        if state.len() != self.grid.m || white.len() != self.grid.m {
            return Err(Error::DimensionMismatch {
                expected: self.grid.m,
                got: state.len().max(white.len()),
            });
        }
        Ok(())
    }
}

/// Runs n_steps of the chosen stepper on the graph system.
pub fn solve_path_graph<S: Scalar>(
    system: &Graph1dSystem<S>,
    stepper: crate::rda2d::Stepper,
    initial: &[S],
    n_steps: usize,
    drift: impl Fn(S) -> S,
    diffusion: impl Fn(S) -> S,
    mut white: impl FnMut(usize) -> Result<Vec<S>>,
) -> Result<Vec<S>> {
    use crate::rda2d::Stepper;
    let mut state = initial.to_vec();
    for n in 0..n_steps {
        let dw = white(n)?;
        state = match stepper {
            Stepper::ExponentialEuler => {
                system.step_exponential_euler(&state, &drift, &diffusion, &dw)?
            }
            Stepper::EulerMaruyama => {
                system.step_euler_maruyama(&state, &drift, &diffusion, &dw)?
            }
        };
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: n });
        }
    }
    Ok(state)
}
