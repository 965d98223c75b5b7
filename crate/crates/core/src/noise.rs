//! Spatially homogeneous Wiener field machinery: radial spectral-kernel
//! presets, covariance matrices on the 2D and graph grids, PSD square roots,
//! and reproducible Brownian increment streams with dyadic coupling across
//! stepsizes.

use crate::dense::{sym_eig, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph_ops::AngularQuadrature;
use crate::hamiltonian::HamiltonianProfile;
use crate::scalar::Scalar;

/// Radial covariance kernels Lambda of the driving Wiener field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralKernel<S> {
    /// Riesz kernel of order r in (0, 2); singular at the origin.
    Riesz { r: S },
    /// Bessel kernel of order r > 0.
    Bessel { r: S },
    /// Heat kernel of order r > 0: (2 pi r)^-1 exp(-|x|^2 / (2r)).
    Heat { r: S },
    /// Poisson kernel of order r > 0: pi^-1 r (|x|^2 + r^2)^-1.
    Poisson { r: S },
    /// Lambda(x) = pi^-1 exp(-|x|^2); the Heat kernel with r = 1/2.
    GaussPi,
}

/// Lanczos approximation of the Gamma function, g = 7, n = 9.
fn gamma_fn(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = COEFFS[0];
        let t = x + 7.5;
        for (i, &c) in COEFFS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

impl<S: Scalar> SpectralKernel<S> {
    /// Whether the kernel is finite at the origin (usable on grids).
    pub fn finite_at_origin(&self) -> bool {
        !matches!(self, SpectralKernel::Riesz { .. })
    }

    /// Evaluates Lambda as a function of the distance |x|.
    pub fn eval_radial(&self, dist: S) -> Result<S> {
        match *self {
            SpectralKernel::Heat { r } => {
                let d2 = dist * dist;
                Ok((-d2 / (S::c(2.0) * r)).exp() / (S::c(2.0) * S::PI() * r))
            }
            SpectralKernel::GaussPi => Ok((-dist * dist).exp() / S::PI()),
            SpectralKernel::Poisson { r } => {
                Ok(r / (S::PI() * (dist * dist + r * r)))
            }
            SpectralKernel::Riesz { r } => {
                if dist == S::zero() {
                    return Err(Error::SingularKernel);
                }
                let rf = r.to_f64_lossy();
                let c = gamma_fn((2.0 - rf) / 2.0)
                    / (2f64.powf(rf) * gamma_fn(rf / 2.0) * std::f64::consts::PI);
                Ok(S::c(c) * dist.powf(r - S::c(2.0)))
            }
            SpectralKernel::Bessel { r } => Ok(S::c(bessel_kernel(
                r.to_f64_lossy(),
                dist.to_f64_lossy(),
            ))),
        }
    }

    /// Evaluates Lambda at a point of the plane.
    pub fn eval(&self, x: [S; 2]) -> Result<S> {
        self.eval_radial((x[0] * x[0] + x[1] * x[1]).sqrt())
    }
}

/// Bessel kernel by quadrature of its integral representation after the
/// substitution y = exp(t).
fn bessel_kernel(r: f64, dist: f64) -> f64 {
    let prefactor = (4.0 * std::f64::consts::PI).powf(r / 2.0) * gamma_fn(r / 2.0);
    let d2 = dist * dist;
    let n = 4000;
    let (lo, hi) = (-40.0, 40.0);
    let step = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let t = lo + step * k as f64;
        let y: f64 = t.exp();
        let v = y.powf((r - 2.0) / 2.0) * (-y).exp() * (-d2 / (4.0 * y)).exp();
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * v * step;
    }
    prefactor * acc
}

/// Covariance matrix of the field sampled at the (2M-1)^2 interior grid
/// nodes: entry (k, l) = Lambda((i_k - i_l) h, (j_k - j_l) h).
pub fn covariance_matrix_2d<S: Scalar>(
    kernel: &SpectralKernel<S>,
    m: usize,
    h: S,
) -> Result<DenseMatrix<S>> {
    if !kernel.finite_at_origin() {
        return Err(Error::SingularKernel);
    }
    let side = 2 * m - 1;
    let n = side * side;
    let mut out = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let (ik, jk) = ((k % side) as i64, (k / side) as i64);
        for l in k..n {
            let (il, jl) = ((l % side) as i64, (l / side) as i64);
            let dx = h * S::from_i64(ik - il).unwrap();
            let dy = h * S::from_i64(jk - jl).unwrap();
            let v = kernel.eval([dx, dy])?;
            out[(k, l)] = v;
            out[(l, k)] = v;
        }
    }
    Ok(out)
}

/// Projected covariance on the graph:
/// the double circle average of Lambda over C(z) x C(y), reduced to a single
/// integral over the angle difference since Lambda is radial.
pub fn graph_kernel_bar<S: Scalar>(
    kernel: &SpectralKernel<S>,
    profile: &HamiltonianProfile<S>,
    z: S,
    y: S,
    quad: &AngularQuadrature,
) -> Result<S> {
    let fz = profile.invert_f(z)?;
    let fy = profile.invert_f(y)?;
    let sum = fz + fy;
    let cross = S::c(2.0) * (fz * fy).sqrt();
    let mut err = None;
    let avg = quad.average(|psi: S| {
        let d2 = (sum - cross * psi.cos()).max(S::zero());
        match kernel.eval_radial(d2.sqrt()) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                S::zero()
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(avg),
    }
}

/// The literal double circle average; quadratically more work than
/// [`graph_kernel_bar`], kept as the reduction cross-check.
pub fn graph_kernel_bar_double<S: Scalar>(
    kernel: &SpectralKernel<S>,
    profile: &HamiltonianProfile<S>,
    z: S,
    y: S,
    quad: &AngularQuadrature,
) -> Result<S> {
    let rz = profile.level_radius(z)?;
    let ry = profile.level_radius(y)?;
    let mut err = None;
    let avg = quad.average(|theta: S| {
        quad.average(|eta: S| {
            let dx = rz * theta.cos() - ry * eta.cos();
            let dy = rz * theta.sin() - ry * eta.sin();
            match kernel.eval([dx, dy]) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    S::zero()
                }
            }
        })
    });
    match err {
        Some(e) => Err(e),
        None => Ok(avg),
    }
}

/// Graph covariance matrix Q with Q_kl = projected kernel at (z_k, z_l),
/// z_i = i h for i = 0..m-1.
pub fn covariance_matrix_graph<S: Scalar>(
    kernel: &SpectralKernel<S>,
    profile: &HamiltonianProfile<S>,
    m: usize,
    h: S,
    quad: &AngularQuadrature,
) -> Result<DenseMatrix<S>> {
    if !kernel.finite_at_origin() {
        return Err(Error::SingularKernel);
    }
    let mut out = DenseMatrix::zeros(m, m);
    for k in 0..m {
        let zk = h * S::from_usize(k).unwrap();
        for l in k..m {
            let zl = h * S::from_usize(l).unwrap();
            let v = graph_kernel_bar(kernel, profile, zk, zl, quad)?;
            out[(k, l)] = v;
            out[(l, k)] = v;
        }
    }
    Ok(out)
}

/// Symmetric PSD square root with eigenvalue clipping: eigenvalues below
/// clip_tol * lambda_max are zeroed, guarding against the numerical rank
/// deficiency of smooth-kernel covariance matrices.
pub fn psd_sqrt<S: Scalar>(matrix: &DenseMatrix<S>, clip_tol: S) -> Result<DenseMatrix<S>> {
    let (eigenvalues, vectors) = sym_eig(matrix)?;
    let lambda_max = eigenvalues
        .iter()
        .fold(S::zero(), |acc, &w| acc.max(w));
    let floor = clip_tol * lambda_max;
    let n = matrix.rows;
    let mut scaled = vectors.clone();
    for j in 0..n {
        let w = eigenvalues[j];
        let s = if w > floor { w.sqrt() } else { S::zero() };
        for i in 0..n {
            scaled[(i, j)] = scaled[(i, j)] * s;
        }
    }
    Ok(scaled.matmul(&vectors.transpose()))
}

pub const DEFAULT_CLIP_TOL: f64 = 1e-12;

// --- counter-based Gaussian increment streams ---

fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    x
}

fn address_key(seed: u64, path: u64, counter: u64, component: u64) -> u64 {
    let mut k = mix64(seed ^ 0x9e3779b97f4a7c15);
    k = mix64(k ^ path.wrapping_mul(0xd1342543de82ef95));
    k = mix64(k ^ counter.wrapping_mul(0x2545f4914f6cdd1d));
    mix64(k ^ component.wrapping_mul(0x5851f42d4c957f2d))
}

fn uniform_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Standard normal as a pure function of the addressing tuple (Box-Muller on
/// two decorrelated hashes of the key).
fn standard_normal(seed: u64, path: u64, counter: u64, component: u64) -> f64 {
    let k = address_key(seed, path, counter, component);
    let u1 = uniform_open(mix64(k ^ 0xa0761d6478bd642f));
    let u2 = uniform_open(mix64(k ^ 0xe7037ed1a0b428db));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Addressable Brownian increment stream over a fixed fine-step horizon.
///
/// Increments at coarser dyadic levels are defined as pairwise sums of the
/// level below, so a level-m increment is bit-identical to the sum of the two
/// level-(m-1) increments it covers.
#[derive(Debug, Clone)]
pub struct NoiseStream<S> {
    pub master_seed: u64,
    pub path: u64,
    /// Finest stepsize; level-m increments have variance 2^m tau_min.
    pub tau_min: S,
    /// Number of components per increment.
    pub dim: usize,
    /// Horizon in finest steps.
    pub n_fine: u64,
}

impl<S: Scalar> NoiseStream<S> {
    pub fn new(master_seed: u64, path: u64, tau_min: S, dim: usize, n_fine: u64) -> Self {
        NoiseStream {
            master_seed,
            path,
            tau_min,
            dim,
            n_fine,
        }
    }

    fn fine(&self, step: u64, component: usize) -> S {
        let g = standard_normal(self.master_seed, self.path, step, component as u64);
        S::c(g) * self.tau_min.sqrt()
    }

    fn component_increment(&self, level: u32, step: u64, component: usize) -> S {
        if level == 0 {
            self.fine(step, component)
        } else {
            self.component_increment(level - 1, 2 * step, component)
                + self.component_increment(level - 1, 2 * step + 1, component)
        }
    }

    /// Increment vector at dyadic level `level` (stepsize 2^level tau_min)
    /// and step index `step`.
    pub fn sample_increments(&self, level: u32, step: u64) -> Result<Vec<S>> {
        let span = 1u64 << level;
        if (step + 1).saturating_mul(span) > self.n_fine {
            return Err(Error::OutOfHorizon { level, step });
        }
        Ok((0..self.dim)
            .map(|c| self.component_increment(level, step, c))
            .collect())
    }
}

/// Field increment of a truncated expansion over prescribed modes:
/// x -> sum_l modes[l](x) * coefficients[l].
pub fn kl_field_increment<'a, S: Scalar, F: Fn([S; 2]) -> S>(
    modes: &'a [F],
    coefficients: &'a [S],
) -> impl Fn([S; 2]) -> S + 'a {
    assert_eq!(
        modes.len(),
        coefficients.len(),
        "modes and coefficients must have the same length"
    );
    move |x| {
        modes
            .iter()
            .zip(coefficients)
            .fold(S::zero(), |acc, (m, &c)| acc + m(x) * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::ZetaProfile;

    fn profile() -> HamiltonianProfile<f64> {
        HamiltonianProfile::new(ZetaProfile::exp_decay(0.5))
    }

    #[test]
    fn kernel_point_values() {
        let heat = SpectralKernel::Heat { r: 0.7 };
        let got: f64 = heat.eval([0.0, 0.0]).unwrap();
        assert_eq!(got, 1.0 / (2.0 * std::f64::consts::PI * 0.7));
        let poisson = SpectralKernel::Poisson { r: 0.3 };
        let got: f64 = poisson.eval([0.0, 0.0]).unwrap();
        assert_eq!(got, 1.0 / (std::f64::consts::PI * 0.3));
        // GaussPi is the Heat kernel at r = 1/2.
        let gauss = SpectralKernel::GaussPi;
        let half = SpectralKernel::Heat { r: 0.5 };
        for d in [0.0, 0.3, 1.0, 2.5] {
            let a: f64 = gauss.eval_radial(d).unwrap();
            let b: f64 = half.eval_radial(d).unwrap();
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn riesz_singular_at_origin() {
        let k = SpectralKernel::Riesz { r: 1.0 };
        assert!(matches!(k.eval([0.0, 0.0]), Err(Error::SingularKernel)));
        assert!(k.eval([1.0, 0.0]).unwrap() > 0.0);
        assert!(matches!(
            covariance_matrix_2d(&k, 2, 0.5),
            Err(Error::SingularKernel)
        ));
    }

    #[test]
    fn bessel_kernel_finite_and_decaying() {
        let k = SpectralKernel::Bessel { r: 3.0 };
        let v0: f64 = k.eval_radial(0.0).unwrap();
        let v1: f64 = k.eval_radial(1.0).unwrap();
        assert!(v0.is_finite() && v1.is_finite() && v0 > v1 && v1 > 0.0);
    }

    #[test]
    fn covariance_2d_structure() {
        let k = SpectralKernel::GaussPi;
        let f = covariance_matrix_2d(&k, 1, 1.0).unwrap();
        assert_eq!(f.rows, 1);
        assert!((f[(0, 0)] - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        let f = covariance_matrix_2d(&k, 2, 1.0).unwrap();
        for i in 0..f.rows {
            assert_eq!(f[(i, i)], f[(0, 0)]);
            for j in 0..f.cols {
                assert_eq!(f[(i, j)], f[(j, i)]);
            }
        }
        // Horizontally adjacent nodes at h = 1.
        assert!((f[(0, 1)] - (-1.0f64).exp() / std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn graph_kernel_symmetry_and_degenerate_circle() {
        let p = profile();
        let quad = AngularQuadrature::default();
        let k = SpectralKernel::GaussPi;
        let at_origin = graph_kernel_bar(&k, &p, 0.0, 0.0, &quad).unwrap();
        assert!((at_origin - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        for (z, y) in [(0.5, 2.0), (1.0, 1.0), (3.0, 0.2)] {
            let a = graph_kernel_bar(&k, &p, z, y, &quad).unwrap();
            let b = graph_kernel_bar(&k, &p, y, z, &quad).unwrap();
            assert!((a - b).abs() < 1e-13);
            assert!(a <= 1.0 / std::f64::consts::PI + 1e-14);
        }
    }

    #[test]
    fn graph_kernel_reduction_matches_double_integral() {
        let p = profile();
        let quad = AngularQuadrature::default();
        for kernel in [SpectralKernel::GaussPi, SpectralKernel::Poisson { r: 1.0 }] {
            for (z, y) in [(0.3, 1.4), (2.0, 2.0), (0.0, 3.1), (4.7, 0.9)] {
                let single = graph_kernel_bar(&kernel, &p, z, y, &quad).unwrap();
                let double = graph_kernel_bar_double(&kernel, &p, z, y, &quad).unwrap();
                assert!(
                    (single - double).abs() < 1e-10,
                    "{kernel:?} at ({z}, {y}): {single} vs {double}"
                );
            }
        }
    }

    #[test]
    fn covariance_graph_structure() {
        let p = profile();
        let quad = AngularQuadrature::default();
        let q = covariance_matrix_graph(&SpectralKernel::GaussPi, &p, 5, 0.5, &quad).unwrap();
        let lambda0 = 1.0 / std::f64::consts::PI;
        for i in 0..5 {
            assert!(q[(i, i)] <= lambda0 + 1e-14);
            for j in 0..5 {
                assert_eq!(q[(i, j)], q[(j, i)]);
            }
        }
    }

    #[test]
    fn psd_sqrt_known_values() {
        let ident = DenseMatrix::<f64>::identity(3);
        let r = psd_sqrt(&ident, 1e-12).unwrap();
        assert!(r.sub(&ident).norm_frobenius() < 1e-12);
        let d = DenseMatrix::diagonal(&[4.0, 9.0]);
        let r = psd_sqrt(&d, 1e-12).unwrap();
        assert!(r.sub(&DenseMatrix::diagonal(&[2.0, 3.0])).norm_frobenius() < 1e-12);
        // Rank-1 projector is its own square root.
        let v = [0.6, 0.8];
        let p = DenseMatrix::from_fn(2, 2, |i, j| v[i] * v[j]);
        let r = psd_sqrt(&p, 1e-12).unwrap();
        assert!(r.sub(&p).norm_frobenius() < 1e-12);
    }

    #[test]
    fn psd_sqrt_round_trip_well_conditioned() {
        let m = DenseMatrix::from_fn(6, 6, |i, j| {
            let base = if i == j { 3.0 } else { 0.0 };
            base + 1.0 / (1.0 + (i as f64 - j as f64).abs())
        });
        let r = psd_sqrt(&m, 1e-12).unwrap();
        let err = r.matmul(&r.transpose()).sub(&m).norm_frobenius() / m.norm_frobenius();
        assert!(err <= 1e-8, "err = {err:e}");
    }

    #[test]
    fn dyadic_coupling_bit_exact() {
        let stream = NoiseStream::<f64>::new(42, 3, 2f64.powi(-10), 4, 64);
        for level in 1..=4u32 {
            let coarse_steps = 64 >> level;
            for n in 0..coarse_steps {
                let coarse = stream.sample_increments(level, n).unwrap();
                let left = stream.sample_increments(level - 1, 2 * n).unwrap();
                let right = stream.sample_increments(level - 1, 2 * n + 1).unwrap();
                for c in 0..4 {
                    assert_eq!(coarse[c], left[c] + right[c]);
                }
            }
        }
        assert!(matches!(
            stream.sample_increments(0, 64),
            Err(Error::OutOfHorizon { .. })
        ));
    }

    #[test]
    fn increment_statistics() {
        let tau = 1.0 / 256.0;
        let n = 100_000usize;
        let stream = NoiseStream::<f64>::new(7, 0, tau, 1, n as u64);
        let other = NoiseStream::<f64>::new(7, 1, tau, 1, n as u64);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut cross = 0.0;
        for i in 0..n {
            let a = stream.sample_increments(0, i as u64).unwrap()[0];
            let b = other.sample_increments(0, i as u64).unwrap()[0];
            sum += a;
            sumsq += a * a;
            cross += a * b;
        }
        let var = sumsq / n as f64;
        // Var of squared Gaussians is 2 tau^2; 5 standard errors.
        let se_var = (2.0f64).sqrt() * tau / (n as f64).sqrt();
        assert!((var - tau).abs() <= 5.0 * se_var, "var = {var}, tau = {tau}");
        let corr = cross / n as f64 / tau;
        assert!(corr.abs() <= 5.0 / (n as f64).sqrt(), "corr = {corr}");
        assert!((sum / n as f64).abs() <= 5.0 * tau.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn determinism_and_path_independence() {
        let s1 = NoiseStream::<f64>::new(1, 5, 0.5, 3, 8);
        let s2 = NoiseStream::<f64>::new(1, 5, 0.5, 3, 8);
        assert_eq!(
            s1.sample_increments(2, 1).unwrap(),
            s2.sample_increments(2, 1).unwrap()
        );
    }

    #[test]
    fn kl_field_edge_cases() {
        let modes: Vec<fn([f64; 2]) -> f64> = vec![];
        let coeffs: Vec<f64> = vec![];
        let field = kl_field_increment(&modes, &coeffs);
        assert_eq!(field([1.0, 2.0]), 0.0);

        let p = profile();
        let mode = move |x: [f64; 2]| {
            let z = p.eval_h(x);
            10.0 * z.sin() + 6.0 * z
        };
        let modes = [mode];
        let zero = [0.0];
        let field = kl_field_increment(&modes, &zero);
        assert_eq!(field([0.4, -0.3]), 0.0);
        let c = [2.5];
        let field = kl_field_increment(&modes, &c);
        let x = [0.7, 0.1];
        let z = p.eval_h(x);
        assert!((field(x) - 2.5 * (10.0 * z.sin() + 6.0 * z)).abs() < 1e-12);
    }
}
