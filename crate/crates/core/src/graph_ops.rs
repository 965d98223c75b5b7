//! Projections between the plane and the graph Gamma = [0, inf): the wedge
//! (angular averaging over level sets) and vee (lifting by composition with
//! H), graph weight presets, and the discrete weighted norms the experiments
//! measure errors in.

use crate::error::Result;
use crate::hamiltonian::HamiltonianProfile;
use crate::scalar::Scalar;

/// Graph weight function gamma presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightProfile<S> {
    /// gamma(z) = exp(-sqrt(z)).
    ExpSqrt,
    /// gamma(z) = c0 z^-lambda for z >= z0, blended to the constant
    /// gamma(z0) below z0.
    PowerTail { c0: S, lambda: S, z0: S },
    /// gamma(z) = c0 exp(-lambda (sqrt(z) - sqrt(2 z0))) for z >= z0,
    /// blended below.
    ExpTail { c0: S, lambda: S, z0: S },
    /// gamma = 1.
    ConstOne,
}

impl<S: Scalar> WeightProfile<S> {
    pub fn eval(&self, z: S) -> S {
        match *self {
            WeightProfile::ExpSqrt => (-z.max(S::zero()).sqrt()).exp(),
            WeightProfile::ConstOne => S::one(),
            WeightProfile::PowerTail { c0, lambda, z0 } => {
                blended_tail(z, z0, |y| c0 * y.powf(-lambda))
            }
            WeightProfile::ExpTail { c0, lambda, z0 } => blended_tail(z, z0, |y| {
                c0 * (-lambda * (y.sqrt() - (S::c(2.0) * z0).sqrt())).exp()
            }),
        }
    }

    /// The profile whose gamma is the square root of this one's.
    pub fn sqrt_weight(&self) -> SqrtWeight<S> {
        SqrtWeight(*self)
    }
}

/// Square-root combinator over a [`WeightProfile`].
#[derive(Debug, Clone, Copy)]
pub struct SqrtWeight<S>(pub WeightProfile<S>);

impl<S: Scalar> SqrtWeight<S> {
    pub fn eval(&self, z: S) -> S {
        self.0.eval(z).sqrt()
    }
}

/// Constant extension below z0 with a C^1 cubic blend over [z0/2, z0].
fn blended_tail<S: Scalar>(z: S, z0: S, tail: impl Fn(S) -> S) -> S {
    if z >= z0 {
        return tail(z);
    }
    let lo = z0 * S::c(0.5);
    let flat = tail(z0);
    if z <= lo {
        return flat;
    }
    // Hermite blend between the flat value (slope 0) and the tail value at z0.
    let h = S::c(1e-6) * (S::one() + z0);
    let slope_hi = (tail(z0 + h) - tail(z0 - h)) / (S::c(2.0) * h);
    let width = z0 - lo;
    let t = (z - lo) / width;
    let t2 = t * t;
    let t3 = t2 * t;
    // Cubic Hermite with p(0)=flat, p'(0)=0, p(1)=flat, p'(1)=slope_hi*width.
    let h00 = S::c(2.0) * t3 - S::c(3.0) * t2 + S::one();
    let h01 = -S::c(2.0) * t3 + S::c(3.0) * t2;
    let h11 = t3 - t2;
    h00 * flat + h01 * flat + h11 * slope_hi * width
}

/// Uniform angular quadrature on [0, 2 pi); spectrally accurate for smooth
/// periodic integrands.
#[derive(Debug, Clone, Copy)]
pub struct AngularQuadrature {
    pub n_theta: usize,
}

impl AngularQuadrature {
    pub fn new(n_theta: usize) -> Self {
        assert!(n_theta >= 4, "need at least 4 angles");
        AngularQuadrature { n_theta }
    }

    pub fn average<S: Scalar>(&self, mut f: impl FnMut(S) -> S) -> S {
        let n = self.n_theta;
        let step = S::c(2.0) * S::PI() / S::from_usize(n).unwrap();
        let mut acc = S::zero();
        for k in 0..n {
            acc = acc + f(step * S::from_usize(k).unwrap());
        }
        acc / S::from_usize(n).unwrap()
    }
}

impl Default for AngularQuadrature {
    fn default() -> Self {
        AngularQuadrature { n_theta: 256 }
    }
}

/// Wedge projection: the average of phi over the level set C(z),
/// a circle of radius sqrt(F(z)).
pub fn wedge<S: Scalar>(
    profile: &HamiltonianProfile<S>,
    phi: impl FnMut(S, S) -> S,
    z: S,
    quad: &AngularQuadrature,
) -> Result<S> {
    let radius = profile.level_radius(z)?;
    let mut phi = phi;
    Ok(quad.average(|theta: S| phi(radius * theta.cos(), radius * theta.sin())))
}

/// Vee lift: f composed with H.
pub fn vee<S: Scalar>(
    profile: &HamiltonianProfile<S>,
    f: impl FnOnce(S) -> S,
    x: [S; 2],
) -> S {
    f(profile.eval_h(x))
}

/// Squared discrete weighted norm on the 2D interior grid:
/// sum_ij |v_k(i,j)|^2 gamma(H(ih, jh)) h^2.
///
/// `values` is indexed by the grid index map of the 2D solver; `m` and `h`
/// are the grid half-count and spacing.
pub fn norm_sq_hgamma_2d<S: Scalar>(
    values: &[S],
    m: usize,
    h: S,
    gamma: &WeightProfile<S>,
    profile: &HamiltonianProfile<S>,
) -> S {
    let side = 2 * m - 1;
    assert_eq!(values.len(), side * side, "grid function size mismatch");
    let mut acc = S::zero();
    for (k, &v) in values.iter().enumerate() {
        let i = (k % side) as i64 - (m as i64 - 1);
        let j = (k / side) as i64 - (m as i64 - 1);
        let x = [h * S::from_i64(i).unwrap(), h * S::from_i64(j).unwrap()];
        acc = acc + v * v * gamma.eval(profile.eval_h(x)) * h * h;
    }
    acc
}

/// Squared discrete weighted norm on the graph grid:
/// sum_i |v_i|^2 A(ih) gamma(ih) h.
pub fn norm_sq_l2agamma_1d<S: Scalar>(
    values: &[S],
    h: S,
    gamma: &WeightProfile<S>,
    profile: &HamiltonianProfile<S>,
) -> Result<S> {
    let mut acc = S::zero();
    for (i, &v) in values.iter().enumerate() {
        let z = h * S::from_usize(i).unwrap();
        acc = acc + v * v * profile.area_a(z)? * gamma.eval(z) * h;
    }
    Ok(acc)
}

/// Squared graph norm with the gamma(z) T(z) dz measure.
pub fn norm_sq_l2gammat_1d<S: Scalar>(
    values: &[S],
    h: S,
    gamma: &WeightProfile<S>,
    profile: &HamiltonianProfile<S>,
) -> Result<S> {
    let mut acc = S::zero();
    for (i, &v) in values.iter().enumerate() {
        let z = h * S::from_usize(i).unwrap();
        acc = acc + v * v * profile.period_t(z)? * gamma.eval(z) * h;
    }
    Ok(acc)
}
