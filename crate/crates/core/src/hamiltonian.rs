//! The radial Hamiltonian family H(x) = |x|^2 + zeta(|x|^2), its level-map
//! inverse F, and the averaged graph coefficients T, A, A', alpha, beta.
//!
//! All level-set quantities reduce to closed forms in F:
//!   T(z) = pi / (1 + zeta'(F(z)))
//!   A(z) = 2 pi F(z) (1 + zeta'(F(z)))
//!   A'(z) = 2 pi + 2 pi F(z) zeta''(F(z)) F'(z),  F'(z) = 1 / (1 + zeta'(F(z)))

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_NEWTON_ITERS: usize = 50;
const MAX_BISECTION_ITERS: usize = 200;

/// Preset families for the perturbation zeta in H(x) = |x|^2 + zeta(|x|^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZetaFamily<S> {
    /// zeta(z) = 1 - exp(-a0 z), a0 > 0.
    ExpDecay { alpha0: S },
    /// zeta(z) = b0 (1 + z)^a0 - b0, a0 in (0, 1), b0 > 0.
    PowerTail { alpha0: S, beta0: S },
}

/// A zeta profile together with the cached derivative bounds
/// -r0 <= zeta'(z) <= r0_tilde.
#[derive(Debug, Clone, Copy)]
pub struct ZetaProfile<S> {
    pub family: ZetaFamily<S>,
    /// Lower bound of -zeta', in [0, 1).
    pub r0: S,
    /// Upper bound of zeta', positive.
    pub r0_tilde: S,
}

impl<S: Scalar> ZetaProfile<S> {
    pub fn exp_decay(alpha0: S) -> Self {
        assert!(alpha0 > S::zero(), "alpha0 must be positive");
        ZetaProfile {
            family: ZetaFamily::ExpDecay { alpha0 },
            r0: S::zero(),
            r0_tilde: alpha0,
        }
    }

    pub fn power_tail(alpha0: S, beta0: S) -> Self {
        assert!(
            alpha0 > S::zero() && alpha0 < S::one(),
            "alpha0 must lie in (0, 1)"
        );
        assert!(beta0 > S::zero(), "beta0 must be positive");
        ZetaProfile {
            family: ZetaFamily::PowerTail { alpha0, beta0 },
            r0: S::zero(),
            r0_tilde: beta0 * alpha0,
        }
    }

    pub fn zeta(&self, z: S) -> S {
        match self.family {
            ZetaFamily::ExpDecay { alpha0 } => S::one() - (-alpha0 * z).exp(),
            ZetaFamily::PowerTail { alpha0, beta0 } => {
                beta0 * (S::one() + z).powf(alpha0) - beta0
            }
        }
    }

    pub fn zeta_prime(&self, z: S) -> S {
        match self.family {
            ZetaFamily::ExpDecay { alpha0 } => alpha0 * (-alpha0 * z).exp(),
            ZetaFamily::PowerTail { alpha0, beta0 } => {
                beta0 * alpha0 * (S::one() + z).powf(alpha0 - S::one())
            }
        }
    }

    pub fn zeta_second(&self, z: S) -> S {
        match self.family {
            ZetaFamily::ExpDecay { alpha0 } => -alpha0 * alpha0 * (-alpha0 * z).exp(),
            ZetaFamily::PowerTail { alpha0, beta0 } => {
                beta0 * alpha0 * (alpha0 - S::one()) * (S::one() + z).powf(alpha0 - S::c(2.0))
            }
        }
    }
}

/// The Hamiltonian profile: H, its derivatives, F, and the graph coefficients.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianProfile<S> {
    pub zeta: ZetaProfile<S>,
    /// Relative tolerance of the Newton inversion of Id + zeta.
    pub inversion_tol: S,
}

impl<S: Scalar> HamiltonianProfile<S> {
    pub fn new(zeta: ZetaProfile<S>) -> Self {
        HamiltonianProfile {
            zeta,
            inversion_tol: S::c(1e-14),
        }
    }

    /// H(x) = |x|^2 + zeta(|x|^2).
    pub fn eval_h(&self, x: [S; 2]) -> S {
        let r2 = x[0] * x[0] + x[1] * x[1];
        r2 + self.zeta.zeta(r2)
    }

    /// Gradient of H: dH_i = 2 x_i (1 + zeta'(|x|^2)).
    pub fn grad_h(&self, x: [S; 2]) -> [S; 2] {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let factor = S::c(2.0) * (S::one() + self.zeta.zeta_prime(r2));
        [factor * x[0], factor * x[1]]
    }

    /// Perpendicular gradient (-d2 H, d1 H) driving the incompressible advection.
    pub fn grad_perp_h(&self, x: [S; 2]) -> [S; 2] {
        let g = self.grad_h(x);
        [-g[1], g[0]]
    }

    /// Inverse of Id + zeta: the unique y >= 0 with y + zeta(y) = z.
    ///
    /// Newton from y = z / (1 + zeta'(0)) with analytic derivative, falling
    /// back to bisection on the bracket guaranteed by the F bounds.
    pub fn invert_f(&self, z: S) -> Result<S> {
        if z < S::zero() {
            return Err(Error::InversionDiverged {
                z: z.to_f64_lossy(),
                iterations: 0,
            });
        }
        if z == S::zero() {
            return Ok(S::zero());
        }
        let tol = self.inversion_tol * (S::one() + z);
        let mut y = z / (S::one() + self.zeta.zeta_prime(S::zero()));
        for _ in 0..MAX_NEWTON_ITERS {
            let g = y + self.zeta.zeta(y) - z;
            if g.abs() <= tol {
                return Ok(y.max(S::zero()));
            }
            let dg = S::one() + self.zeta.zeta_prime(y);
            let next = y - g / dg;
            y = next.max(S::zero());
        }
        // Bisection on [(1 + r0_tilde)^-1 z, (1 - r0)^-1 z].
        let mut lo = z / (S::one() + self.zeta.r0_tilde);
        let mut hi = z / (S::one() - self.zeta.r0);
        for _ in 0..MAX_BISECTION_ITERS {
            let mid = (lo + hi) * S::c(0.5);
            let g = mid + self.zeta.zeta(mid) - z;
            if g.abs() <= tol {
                return Ok(mid);
            }
            if g > S::zero() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Err(Error::InversionDiverged {
            z: z.to_f64_lossy(),
            iterations: MAX_NEWTON_ITERS + MAX_BISECTION_ITERS,
        })
    }

    /// F'(z) = 1 / (1 + zeta'(F(z))).
    pub fn f_prime(&self, z: S) -> Result<S> {
        let f = self.invert_f(z)?;
        Ok(S::one() / (S::one() + self.zeta.zeta_prime(f)))
    }

    /// Rotation period of the deterministic flow on the level set:
    /// T(z) = pi / (1 + zeta'(F(z))).
    pub fn period_t(&self, z: S) -> Result<S> {
        let f = self.invert_f(z)?;
        Ok(S::PI() / (S::one() + self.zeta.zeta_prime(f)))
    }

    /// Area coefficient A(z) = 2 pi F(z) (1 + zeta'(F(z))).
    pub fn area_a(&self, z: S) -> Result<S> {
        let f = self.invert_f(z)?;
        Ok(S::c(2.0) * S::PI() * f * (S::one() + self.zeta.zeta_prime(f)))
    }

    /// A'(z) = 2 pi + 2 pi F(z) zeta''(F(z)) F'(z).
    pub fn area_a_prime(&self, z: S) -> Result<S> {
        let f = self.invert_f(z)?;
        let fp = S::one() / (S::one() + self.zeta.zeta_prime(f));
        Ok(S::c(2.0) * S::PI() * (S::one() + f * self.zeta.zeta_second(f) * fp))
    }

    /// Diffusion coefficient of the limiting generator: alpha(z) = A(z)/T(z).
    pub fn alpha(&self, z: S) -> Result<S> {
        let f = self.invert_f(z)?;
        let one_plus = S::one() + self.zeta.zeta_prime(f);
        Ok(S::c(2.0) * f * one_plus * one_plus)
    }

    /// Drift coefficient of the limiting generator: beta(z) = A'(z)/T(z).
    pub fn beta(&self, z: S) -> Result<S> {
        let f = self.invert_f(z)?;
        let one_plus = S::one() + self.zeta.zeta_prime(f);
        Ok(S::c(2.0) * (one_plus + f * self.zeta.zeta_second(f)))
    }

    /// T'(z) = -pi zeta''(F(z)) / (1 + zeta'(F(z)))^3.
    pub fn period_t_prime(&self, z: S) -> Result<S> {
        let f = self.invert_f(z)?;
        let one_plus = S::one() + self.zeta.zeta_prime(f);
        Ok(-S::PI() * self.zeta.zeta_second(f) / (one_plus * one_plus * one_plus))
    }

    /// Radius of the level set C(z): sqrt(F(z)).
    pub fn level_radius(&self, z: S) -> Result<S> {
        Ok(self.invert_f(z)?.sqrt())
    }
}

/// One violation found while spot-checking the structural assumptions.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation<S> {
    ZetaPrimeBelowLowerBound { z: S, value: S },
    ZetaPrimeAboveUpperBound { z: S, value: S },
    ZetaSecondVanishes { z: S },
    ZetaSecondSignChange { z: S },
    PeriodDerivativeVanishes { z: S },
}

/// Report of [`validate_profile`].
#[derive(Debug, Clone)]
pub struct ValidationReport<S> {
    pub passed: bool,
    pub violations: Vec<Violation<S>>,
}

/// Numerically spot-checks the zeta' bounds, the sign constancy of zeta'',
/// and T'(z) != 0 on n_samples points of [0, z_max].
pub fn validate_profile<S: Scalar>(
    profile: &HamiltonianProfile<S>,
    z_max: S,
    n_samples: usize,
) -> ValidationReport<S> {
    assert!(z_max > S::zero() && n_samples >= 2);
    let mut violations = Vec::new();
    let mut prev_sign: Option<bool> = None;
    for i in 0..n_samples {
        let z = z_max * S::from_usize(i).unwrap() / S::from_usize(n_samples - 1).unwrap();
        let zp = profile.zeta.zeta_prime(z);
        if zp < -profile.zeta.r0 {
            violations.push(Violation::ZetaPrimeBelowLowerBound { z, value: zp });
        }
        if zp > profile.zeta.r0_tilde {
            violations.push(Violation::ZetaPrimeAboveUpperBound { z, value: zp });
        }
        let zs = profile.zeta.zeta_second(z);
        if zs == S::zero() {
            violations.push(Violation::ZetaSecondVanishes { z });
        } else {
            let sign = zs > S::zero();
            if let Some(prev) = prev_sign {
                if prev != sign {
                    violations.push(Violation::ZetaSecondSignChange { z });
                }
            }
            prev_sign = Some(sign);
        }
        if let Ok(tp) = profile.period_t_prime(z) {
            if tp == S::zero() {
                violations.push(Violation::PeriodDerivativeVanishes { z });
            }
        }
    }
    ValidationReport {
        passed: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_half() -> HamiltonianProfile<f64> {
        HamiltonianProfile::new(ZetaProfile::exp_decay(0.5))
    }

    fn power_half() -> HamiltonianProfile<f64> {
        HamiltonianProfile::new(ZetaProfile::power_tail(0.5, 1.0))
    }

    /// Principal Lambert W branch by Halley iteration; test oracle for the
    /// ExpDecay closed form F(z) = z + 2 W0(exp((1 - z)/2)/2) - 1.
    fn lambert_w0(x: f64) -> f64 {
        let mut w = if x > std::f64::consts::E {
            let l = x.ln();
            l - l.ln()
        } else {
            x / (1.0 + x)
        };
        for _ in 0..50 {
            let ew = w.exp();
            let f = w * ew - x;
            let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
            let next = w - f / denom;
            if (next - w).abs() <= 1e-16 * (1.0 + next.abs()) {
                return next;
            }
            w = next;
        }
        w
    }

    fn f_closed_exp_half(z: f64) -> f64 {
        z + 2.0 * lambert_w0(0.5 * ((1.0 - z) / 2.0).exp()) - 1.0
    }

    fn f_closed_power_half(z: f64) -> f64 {
        z - 0.5 * (4.0 * z + 9.0).sqrt() + 1.5
    }

    #[test]
    fn h_at_origin_is_zero() {
        assert_eq!(exp_half().eval_h([0.0, 0.0]), 0.0);
        assert_eq!(power_half().eval_h([0.0, 0.0]), 0.0);
    }

    #[test]
    fn h_direct_values() {
        let h = exp_half().eval_h([1.0, 0.0]);
        assert!((h - (2.0 - (-0.5f64).exp())).abs() < 1e-15);
        let h = power_half().eval_h([1.0, 0.0]);
        assert!((h - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grad_perp_is_orthogonal_to_grad() {
        let p = exp_half();
        for &x in &[[0.3, -1.2], [2.0, 0.5], [-0.7, -0.1]] {
            let g = p.grad_h(x);
            let gp = p.grad_perp_h(x);
            assert_eq!(g[0] * gp[0] + g[1] * gp[1], 0.0);
        }
        let gp = p.grad_perp_h([1.0, 0.0]);
        assert!((gp[1] - 2.0 * (1.0 + 0.5 * (-0.5f64).exp())).abs() < 1e-15);
        assert_eq!(gp[0], 0.0);
    }

    #[test]
    fn invert_f_matches_closed_forms() {
        let pe = exp_half();
        let pp = power_half();
        // Lambert identity at z = 0: W0(e^{1/2}/2) = 1/2.
        assert!((lambert_w0(0.5 * 0.5f64.exp()) - 0.5).abs() < 1e-14);
        assert!((f_closed_exp_half(0.0)).abs() < 1e-14);
        let f1 = pp.invert_f(1.0).unwrap();
        assert!((f1 - (2.5 - 0.5 * 13.0f64.sqrt())).abs() < 1e-12);
        // Round trip of the closed-form value.
        assert!((f1 + (1.0 + f1).sqrt() - 1.0 - 1.0).abs() < 1e-12);
        for i in 0..=200 {
            let z = 20.0 * i as f64 / 200.0;
            let tol = 1e-10 * (1.0 + z);
            assert!((pe.invert_f(z).unwrap() - f_closed_exp_half(z)).abs() <= tol);
            assert!((pp.invert_f(z).unwrap() - f_closed_power_half(z)).abs() <= tol);
            // Round trip F(z) + zeta(F(z)) = z.
            let f = pe.invert_f(z).unwrap();
            assert!((f + pe.zeta.zeta(f) - z).abs() <= 1e-10 * (1.0 + z));
        }
    }

    #[test]
    fn period_and_area_at_zero() {
        for p in [exp_half(), power_half()] {
            let t0 = p.period_t(0.0).unwrap();
            assert!((t0 - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-14);
            assert_eq!(p.area_a(0.0).unwrap(), 0.0);
            let ap0 = p.area_a_prime(0.0).unwrap();
            assert!((ap0 - 2.0 * std::f64::consts::PI).abs() < 1e-14);
            assert_eq!(p.alpha(0.0).unwrap(), 0.0);
        }
        // beta(0) = A'(0)/T(0) = 2 pi / (2 pi / 3) = 3.
        assert!((exp_half().beta(0.0).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn period_and_area_bounds() {
        let pi = std::f64::consts::PI;
        for p in [exp_half(), power_half()] {
            let (r0, rt) = (p.zeta.r0, p.zeta.r0_tilde);
            for i in 0..=200 {
                let z = 20.0 * i as f64 / 200.0;
                let t = p.period_t(z).unwrap();
                assert!(t >= pi / (1.0 + rt) - 1e-12 && t <= pi / (1.0 - r0) + 1e-12);
                let a = p.area_a(z).unwrap();
                let lo = 2.0 * pi * (1.0 - r0) / (1.0 + rt) * z;
                let hi = 2.0 * pi * (1.0 + rt) / (1.0 - r0) * z;
                assert!(a >= lo - 1e-10 && a <= hi + 1e-10);
                let f = p.invert_f(z).unwrap();
                assert!(f >= z / (1.0 + rt) - 1e-10 && f <= z / (1.0 - r0) + 1e-10);
            }
        }
    }

    #[test]
    fn alpha_beta_are_ratios() {
        for p in [exp_half(), power_half()] {
            for i in 1..=50 {
                let z = 0.4 * i as f64;
                let t = p.period_t(z).unwrap();
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
                assert!(rel(p.alpha(z).unwrap() * t, p.area_a(z).unwrap()) < 1e-12);
                assert!(rel(p.beta(z).unwrap() * t, p.area_a_prime(z).unwrap()) < 1e-12);
            }
        }
    }

    #[test]
    fn period_equals_pi_f_prime() {
        // T = pi F' with F' by central finite difference.
        let h = 1e-5;
        for p in [exp_half(), power_half()] {
            for i in 1..=40 {
                let z = 0.5 * i as f64;
                let fd =
                    (p.invert_f(z + h).unwrap() - p.invert_f(z - h).unwrap()) / (2.0 * h);
                let t = p.period_t(z).unwrap();
                assert!(
                    (t - std::f64::consts::PI * fd).abs() <= 1e-8 * t,
                    "z = {z}"
                );
            }
        }
    }

    #[test]
    fn area_prime_matches_finite_difference() {
        let h = 1e-4;
        for p in [exp_half(), power_half()] {
            for i in 1..=40 {
                let z = 0.5 * i as f64;
                let fd = (p.area_a(z + h).unwrap() - p.area_a(z - h).unwrap()) / (2.0 * h);
                let ap = p.area_a_prime(z).unwrap();
                assert!((ap - fd).abs() <= 1e-6 * ap.abs().max(1.0), "z = {z}");
            }
        }
    }

    #[test]
    fn validate_presets_pass() {
        for p in [exp_half(), power_half()] {
            let report = validate_profile(&p, 20.0, 256);
            assert!(report.passed, "{:?}", report.violations);
        }
    }

    #[test]
    fn validate_flags_broken_profile() {
        // zeta' < -1 once r0 is mislabeled; ExpDecay internals reused with a
        // hand-built profile whose claimed bound is violated.
        let broken = ZetaProfile {
            family: ZetaFamily::ExpDecay { alpha0: 2.0 },
            r0: 0.0,
            r0_tilde: 1.0, // true sup of zeta' is 2.0
        };
        let p = HamiltonianProfile::new(broken);
        let report = validate_profile(&p, 5.0, 64);
        assert!(!report.passed);
        assert!(matches!(
            report.violations[0],
            Violation::ZetaPrimeAboveUpperBound { .. }
        ));
    }
}
