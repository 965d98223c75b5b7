//! Full discretization of the multiscale equation on the square [-L, L]^2:
//! centered finite differences with homogeneous Dirichlet boundary, an
//! exponential Euler time stepper built on the dense matrix exponential, and
//! a plain Euler-Maruyama stepper for comparison.

use crate::dense::{kron, matrix_exp, DenseMatrix};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianProfile;
use crate::noise::psd_sqrt;
use crate::scalar::Scalar;

/// Uniform grid on [-L, L]^2 with M subintervals per half axis.
///
/// Unknowns live at the (2M-1)^2 interior nodes (ih, jh) with
/// |i|, |j| <= M-1 and h = L/M; boundary values are pinned to zero.
#[derive(Debug, Clone, Copy)]
pub struct Grid2D<S> {
    pub l: S,
    pub m: usize,
    pub h: S,
}

impl<S: Scalar> Grid2D<S> {
    pub fn new(l: S, m: usize) -> Result<Self> {
        if m == 0 || l <= S::zero() {
            return Err(Error::Config(format!(
                "grid requires L > 0 and M >= 1, got L = {l}, M = {m}"
            )));
        }
        Ok(Grid2D {
            l,
            m,
            h: l / S::from_usize(m).unwrap(),
        })
    }

    /// Nodes per row of the interior grid.
    pub fn side(&self) -> usize {
        2 * self.m - 1
    }

    /// Total number of interior nodes.
    pub fn dim(&self) -> usize {
        self.side() * self.side()
    }

    /// Flat index of the interior node (ih, jh); row-major in j with i
    /// varying fastest.
    pub fn index_k(&self, i: i64, j: i64) -> Result<usize> {
        let bound = self.m as i64 - 1;
        if i.abs() > bound || j.abs() > bound {
            return Err(Error::IndexOutOfRange { i, j, m: self.m });
        }
        let side = self.side() as i64;
        Ok(((i + bound) + (j + bound) * side) as usize)
    }

    /// Inverse of [`Grid2D::index_k`].
    pub fn index_inverse(&self, k: usize) -> Result<(i64, i64)> {
        if k >= self.dim() {
            return Err(Error::IndexOutOfRange {
                i: k as i64,
                j: 0,
                m: self.m,
            });
        }
        let side = self.side();
        let bound = self.m as i64 - 1;
        Ok(((k % side) as i64 - bound, (k / side) as i64 - bound))
    }

    /// Coordinates of the interior node with flat index k.
    pub fn node(&self, k: usize) -> Result<[S; 2]> {
        let (i, j) = self.index_inverse(k)?;
        Ok([
            self.h * S::from_i64(i).unwrap(),
            self.h * S::from_i64(j).unwrap(),
        ])
    }
}

/// One dimensional Dirichlet Laplacian stencil (-2 on the diagonal, 1 off)
/// of size n.
fn laplacian_1d<S: Scalar>(n: usize) -> DenseMatrix<S> {
    DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            S::c(-2.0)
        } else if i.abs_diff(j) == 1 {
            S::one()
        } else {
            S::zero()
        }
    })
}

/// One dimensional centered difference stencil (-1 left, +1 right) of size n;
/// the 1/(2h) factor is applied by the caller.
fn gradient_1d<S: Scalar>(n: usize) -> DenseMatrix<S> {
    DenseMatrix::from_fn(n, n, |i, j| {
        if j + 1 == i {
            -S::one()
        } else if i + 1 == j {
            S::one()
        } else {
            S::zero()
        }
    })
}

/// Unscaled five point Laplacian on the interior grid:
/// I (x) Delta + Delta (x) I, size dim x dim.
pub fn assemble_laplacian<S: Scalar>(grid: &Grid2D<S>) -> DenseMatrix<S> {
    let side = grid.side();
    let eye = DenseMatrix::identity(side);
    let delta = laplacian_1d(side);
    kron(&eye, &delta).add(&kron(&delta, &eye))
}

/// Unscaled centered difference matrices (R1, R2) in the two coordinate
/// directions; the index layout makes the first direction the fast one.
pub fn assemble_gradients<S: Scalar>(grid: &Grid2D<S>) -> (DenseMatrix<S>, DenseMatrix<S>) {
    let side = grid.side();
    let eye = DenseMatrix::identity(side);
    let nabla = gradient_1d(side);
    (kron(&eye, &nabla), kron(&nabla, &eye))
}

/// Generator of the discretized linear part:
/// (nu / h^2) Laplacian plus the 1/epsilon rotation along the Hamiltonian
/// level sets in centered differences.
pub fn assemble_generator<S: Scalar>(
    grid: &Grid2D<S>,
    profile: &HamiltonianProfile<S>,
    nu: S,
    epsilon: S,
) -> Result<DenseMatrix<S>> {
    if epsilon <= S::zero() {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let dim = grid.dim();
    let (r1, r2) = assemble_gradients(grid);
    let diff_scale = nu / (grid.h * grid.h);
    let adv_scale = S::one() / (S::c(2.0) * grid.h * epsilon);
    let mut out = assemble_laplacian(grid).scale(diff_scale);
    for k in 0..dim {
        let x = grid.node(k)?;
        let grad = profile.grad_h(x);
        // Rotated gradient (-d2 H, d1 H) dotted with the centered stencils.
        for l in 0..dim {
            out[(k, l)] = out[(k, l)]
                + adv_scale * (grad[1] * (-r1[(k, l)]) + grad[0] * r2[(k, l)]);
        }
    }
    Ok(out)
}

pub const DEFAULT_NU: f64 = 0.5;

/// Discretized system with the stepsize-tau propagator and the noise square
/// root cached at construction.
pub struct Rda2dSystem<S> {
    pub grid: Grid2D<S>,
    pub generator: DenseMatrix<S>,
    pub propagator: DenseMatrix<S>,
    pub noise_sqrt: DenseMatrix<S>,
    pub tau: S,
    gershgorin_radius: S,
}

impl<S: Scalar> Rda2dSystem<S> {
    /// `covariance` is the noise covariance on the grid; its clipped PSD
    /// square root is cached.
    pub fn new(
        grid: Grid2D<S>,
        generator: DenseMatrix<S>,
        covariance: &DenseMatrix<S>,
        tau: S,
        clip_tol: S,
    ) -> Result<Self> {
        if generator.rows != grid.dim() || covariance.rows != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
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
        Ok(Rda2dSystem {
            grid,
            generator,
            propagator,
            noise_sqrt,
            tau,
            gershgorin_radius: radius,
        })
    }

    /// Upper bound on tau times the generator spectral radius; the plain
    /// Euler-Maruyama stepper is unreliable when this exceeds about 2.
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

    /// Exponential Euler step:
    /// u' = exp(L tau) (u + b(u) tau + g(u) * F^{1/2} dB).
    ///
    /// `white` holds the raw Brownian increments (variance tau each).
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

    /// Euler-Maruyama step: u' = u + tau (L u + b(u)) + g(u) * F^{1/2} dB.
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
        if state.len() != self.grid.dim() || white.len() != self.grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.dim(),
                got: state.len().max(white.len()),
            });
        }
        Ok(())
    }
}

/// Stepper selection for the path drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    ExponentialEuler,
    EulerMaruyama,
}

/// Runs n_steps of the chosen stepper; `white` supplies the raw increments
/// for step n. Fails on the first non-finite state.
pub fn solve_path<S: Scalar>(
    system: &Rda2dSystem<S>,
    stepper: Stepper,
    initial: &[S],
    n_steps: usize,
    drift: impl Fn(S) -> S,
    diffusion: impl Fn(S) -> S,
    mut white: impl FnMut(usize) -> Result<Vec<S>>,
) -> Result<Vec<S>> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::ZetaProfile;
    use crate::noise::{covariance_matrix_2d, NoiseStream, SpectralKernel};

    fn profile() -> HamiltonianProfile<f64> {
        HamiltonianProfile::new(ZetaProfile::exp_decay(0.5))
    }

    #[test]
    fn index_round_trip_and_bounds() {
        let g = Grid2D::<f64>::new(2.0, 3).unwrap();
        assert_eq!(g.side(), 5);
        assert_eq!(g.dim(), 25);
        assert_eq!(g.index_k(0, 0).unwrap(), 12);
        for k in 0..g.dim() {
            let (i, j) = g.index_inverse(k).unwrap();
            assert_eq!(g.index_k(i, j).unwrap(), k);
        }
        assert!(g.index_k(3, 0).is_err());
        assert!(g.index_inverse(25).is_err());
        let x = g.node(g.index_k(1, -2).unwrap()).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15 && (x[1] + 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_m1_is_minus_four() {
        let g = Grid2D::new(1.0, 1).unwrap();
        let a = assemble_laplacian(&g);
        assert_eq!(a.rows, 1);
        assert_eq!(a[(0, 0)], -4.0);
    }

    #[test]
    fn laplacian_symmetric_gradients_antisymmetric() {
        let g = Grid2D::new(1.5, 3).unwrap();
        let a = assemble_laplacian(&g);
        let (r1, r2) = assemble_gradients(&g);
        for i in 0..g.dim() {
            for j in 0..g.dim() {
                assert_eq!(a[(i, j)], a[(j, i)]);
                assert_eq!(r1[(i, j)], -r1[(j, i)]);
                assert_eq!(r2[(i, j)], -r2[(j, i)]);
            }
        }
        // Row sums of the Laplacian vanish at interior-of-interior nodes.
        let k = g.index_k(0, 0).unwrap();
        let row_sum: f64 = (0..g.dim()).map(|j| a[(k, j)]).sum();
        assert_eq!(row_sum, 0.0);
    }

    #[test]
    fn advection_annihilates_constants_inside() {
        // The pure advection part applied to a constant vector vanishes at
        // nodes whose full stencil is interior.
        let g = Grid2D::new(2.0, 4).unwrap();
        let p = profile();
        let gen = assemble_generator(&g, &p, 0.0, 0.1).unwrap();
        let ones = vec![1.0; g.dim()];
        let out = gen.matvec(&ones);
        for k in 0..g.dim() {
            let (i, j) = g.index_inverse(k).unwrap();
            if i.abs() < g.m as i64 - 1 && j.abs() < g.m as i64 - 1 {
                assert!(out[k].abs() < 1e-12, "node ({i},{j}): {}", out[k]);
            }
        }
    }

    #[test]
    fn advection_residual_on_radial_functions_is_second_order() {
        // u = exp(-H) is constant along level sets, so the advection term
        // vanishes in the limit; the centered stencil leaves an O(h^2)
        // residual.
        let p = profile();
        let residual = |m: usize| -> f64 {
            let g = Grid2D::new(1.0, m).unwrap();
            let gen = assemble_generator(&g, &p, 0.0, 1.0).unwrap();
            let u: Vec<f64> = (0..g.dim())
                .map(|k| (-p.eval_h(g.node(k).unwrap())).exp())
                .collect();
            let out = gen.matvec(&u);
            let mut worst = 0.0f64;
            for k in 0..g.dim() {
                let (i, j) = g.index_inverse(k).unwrap();
                if i.abs() < g.m as i64 - 1 && j.abs() < g.m as i64 - 1 {
                    worst = worst.max(out[k].abs());
                }
            }
            worst
        };
        let coarse = residual(8);
        let fine = residual(16);
        let ratio = coarse / fine;
        assert!(
            (2.8..5.6).contains(&ratio),
            "expected ratio near 4, got {ratio} ({coarse} vs {fine})"
        );
    }

    #[test]
    fn epsilon_scaling_of_advection_is_exact() {
        let g = Grid2D::new(1.0, 3).unwrap();
        let p = profile();
        let nu = DEFAULT_NU;
        let base = assemble_laplacian(&g).scale(nu / (g.h * g.h));
        let at1 = assemble_generator(&g, &p, nu, 1.0).unwrap();
        let at_eps = assemble_generator(&g, &p, nu, 0.125).unwrap();
        let adv1 = at1.sub(&base);
        let adv_eps = at_eps.sub(&base);
        let err = adv_eps.sub(&adv1.scale(8.0)).max_abs();
        assert!(err <= 1e-9 * adv_eps.max_abs(), "err = {err:e}");
    }

    fn small_system(tau: f64) -> Rda2dSystem<f64> {
        let g = Grid2D::new(1.0, 2).unwrap();
        let p = profile();
        let gen = assemble_generator(&g, &p, DEFAULT_NU, 0.5).unwrap();
        let f = covariance_matrix_2d(&SpectralKernel::GaussPi, g.m, g.h).unwrap();
        Rda2dSystem::new(g, gen, &f, tau, 1e-12).unwrap()
    }

    #[test]
    fn deterministic_steps_compose_like_the_semigroup() {
        let sys = small_system(0.01);
        let initial: Vec<f64> = (0..sys.grid.dim()).map(|k| (k as f64 * 0.37).sin()).collect();
        let zero = vec![0.0; sys.grid.dim()];
        let mut state = initial.clone();
        let n = 16;
        for _ in 0..n {
            state = sys
                .step_exponential_euler(&state, |_| 0.0, |_| 1.0, &zero)
                .unwrap();
        }
        let direct = matrix_exp(&sys.generator, 0.01 * n as f64)
            .unwrap()
            .matvec(&initial);
        let num: f64 = state
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = direct.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den <= 1e-9, "rel err = {:e}", num / den);
    }

    #[test]
    fn one_step_noise_covariance_matches_pushforward() {
        // With zero initial state, unit diffusion and no drift, one
        // exponential Euler step is Gaussian with covariance
        // exp(L tau) F tau exp(L tau)^T.
        let tau = 0.05;
        let sys = small_system(tau);
        let dim = sys.grid.dim();
        let zero = vec![0.0; dim];
        let n_samples = 20_000usize;
        let stream = NoiseStream::new(11, 0, tau, dim * n_samples, 1);
        let all = stream.sample_increments(0, 0).unwrap();
        let mut second = DenseMatrix::zeros(dim, dim);
        for s in 0..n_samples {
            let w = &all[s * dim..(s + 1) * dim];
            let u = sys.step_exponential_euler(&zero, |_| 0.0, |_| 1.0, w).unwrap();
            for i in 0..dim {
                for j in 0..dim {
                    second[(i, j)] += u[i] * u[j];
                }
            }
        }
        let empirical = second.scale(1.0 / n_samples as f64);
        let f = covariance_matrix_2d(&SpectralKernel::GaussPi, sys.grid.m, sys.grid.h).unwrap();
        let expected = sys
            .propagator
            .matmul(&f.scale(tau))
            .matmul(&sys.propagator.transpose());
        let err = empirical.sub(&expected).max_abs();
        // Entries are O(tau / 2 pi); 5 sigma Monte Carlo band.
        let sigma = tau / std::f64::consts::PI / (n_samples as f64).sqrt();
        assert!(err <= 5.0 * 2.0 * sigma, "err = {err:e}, band = {:e}", 5.0 * 2.0 * sigma);
    }

    #[test]
    fn em_cfl_reports_stiffness() {
        let tame = small_system(1e-4);
        assert!(tame.em_cfl() < 2.0);
        let stiff = small_system(1.0);
        assert!(stiff.em_cfl() > 2.0);
    }

    #[test]
    fn solve_path_catches_blowup() {
        let sys = small_system(1.0);
        let init = vec![1.0; sys.grid.dim()];
        let res = solve_path(
            &sys,
            Stepper::EulerMaruyama,
            &init,
            400,
            |u| u,
            |_| 0.0,
            |_| Ok(vec![0.0; 9]),
        );
        match res {
            Err(Error::NonFiniteState { .. }) => {}
            Ok(state) => {
                // Explicit stepping this far beyond the CFL bound must have
                // diverged even if every entry stayed finite.
                assert!(state.iter().any(|v| v.abs() > 1e100));
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
