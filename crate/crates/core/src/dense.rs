//! Dense matrix kernels shared by both solvers: Kronecker products, the
//! scaling-and-squaring matrix exponential, and a symmetric eigensolver.
//!
//! Sizes here are desk-scale (a few hundred rows at most), so everything is a
//! plain row-major dense array and the exponential is computed once per
//! (matrix, stepsize) pair and cached by the solver systems.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<S> {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            entries: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, entries: Vec<S>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        DenseMatrix {
            rows,
            cols,
            entries,
        }
    }

    pub fn diagonal(diag: &[S]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.is_finite())
    }

    pub fn entries(&self) -> &[S] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: S) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|&e| e * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.entries[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    dst[j] = dst[j] + a * src[j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![S::zero(); self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = S::zero();
            for j in 0..self.cols {
                acc = acc + row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> S {
        let mut best = S::zero();
        for j in 0..self.cols {
            let mut sum = S::zero();
            for i in 0..self.rows {
                sum = sum + self[(i, j)].abs();
            }
            best = best.max(sum);
        }
        best
    }

    pub fn norm_frobenius(&self) -> S {
        self.entries
            .iter()
            .fold(S::zero(), |acc, &e| acc + e * e)
            .sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.entries
            .iter()
            .fold(S::zero(), |acc, &e| acc.max(e.abs()))
    }
}

impl<S> Index<(usize, usize)> for DenseMatrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.entries[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for DenseMatrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.entries[i * self.cols + j]
    }
}

/// Kronecker product, size (rA rB) x (cA cB).
pub fn kron<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> DenseMatrix<S> {
    let mut out = DenseMatrix::zeros(a.rows * b.rows, a.cols * b.cols);
    for ia in 0..a.rows {
        for ja in 0..a.cols {
            let s = a[(ia, ja)];
            if s == S::zero() {
                continue;
            }
            for ib in 0..b.rows {
                for jb in 0..b.cols {
                    out[(ia * b.rows + ib, ja * b.cols + jb)] = s * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Solves A X = B by LU with partial pivoting, overwriting nothing.
fn lu_solve<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    let n = a.rows;
    if !a.is_square() || b.rows != n {
        return Err(Error::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut pivot = k;
        let mut max = lu[(k, k)].abs();
        for i in (k + 1)..n {
            if lu[(i, k)].abs() > max {
                max = lu[(i, k)].abs();
                pivot = i;
            }
        }
        if max == S::zero() {
            return Err(Error::NonFinite);
        }
        if pivot != k {
            perm.swap(pivot, k);
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(pivot, j)];
                lu[(pivot, j)] = tmp;
            }
            for j in 0..x.cols {
                let tmp = x[(k, j)];
                x[(k, j)] = x[(pivot, j)];
                x[(pivot, j)] = tmp;
            }
        }
        let inv = S::one() / lu[(k, k)];
        for i in (k + 1)..n {
            let factor = lu[(i, k)] * inv;
            lu[(i, k)] = factor;
            for j in (k + 1)..n {
                let delta = factor * lu[(k, j)];
                lu[(i, j)] = lu[(i, j)] - delta;
            }
            for j in 0..x.cols {
                let delta = factor * x[(k, j)];
                x[(i, j)] = x[(i, j)] - delta;
            }
        }
    }
    // Back substitution.
    for j in 0..x.cols {
        for i in (0..n).rev() {
            let mut acc = x[(i, j)];
            for k in (i + 1)..n {
                acc = acc - lu[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = acc / lu[(i, i)];
        }
    }
    Ok(x)
}

// Pade coefficients and 1-norm thresholds for degrees 3, 5, 7, 9, 13
// (Higham 2005, Table 10.2 values for double precision).
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
];

fn pade_coeffs(degree: usize) -> Vec<f64> {
    match degree {
        3 => vec![120.0, 60.0, 12.0, 1.0],
        5 => vec![30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => vec![
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => vec![
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => vec![
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!(),
    }
}

/// Diagonal Pade approximant of exp(A) for ||A||_1 below the matching theta.
fn pade_exp<S: Scalar>(a: &DenseMatrix<S>, degree: usize) -> Result<DenseMatrix<S>> {
    let n = a.rows;
    let c: Vec<S> = pade_coeffs(degree).into_iter().map(S::c).collect();
    let a2 = a.matmul(a);
    let ident = DenseMatrix::identity(n);
    let (u, v) = if degree <= 9 {
        // u = A (c1 I + c3 A^2 + c5 A^4 + ...), v = c0 I + c2 A^2 + ...
        let mut even = ident.scale(c[0]);
        let mut odd = ident.scale(c[1]);
        let mut power = a2.clone();
        let mut k = 2;
        while k <= degree {
            even = even.add(&power.scale(c[k]));
            if k + 1 <= degree {
                odd = odd.add(&power.scale(c[k + 1]));
            }
            if k + 2 <= degree {
                power = power.matmul(&a2);
            }
            k += 2;
        }
        (a.matmul(&odd), even)
    } else {
        // Degree 13 splitting with A^2, A^4, A^6 only.
        let a4 = a2.matmul(&a2);
        let a6 = a4.matmul(&a2);
        let u_inner = a6
            .scale(c[13])
            .add(&a4.scale(c[11]))
            .add(&a2.scale(c[9]));
        let u = a.matmul(
            &a6.matmul(&u_inner)
                .add(&a6.scale(c[7]))
                .add(&a4.scale(c[5]))
                .add(&a2.scale(c[3]))
                .add(&ident.scale(c[1])),
        );
        let v_inner = a6
            .scale(c[12])
            .add(&a4.scale(c[10]))
            .add(&a2.scale(c[8]));
        let v = a6
            .matmul(&v_inner)
            .add(&a6.scale(c[6]))
            .add(&a4.scale(c[4]))
            .add(&a2.scale(c[2]))
            .add(&ident.scale(c[0]));
        (u, v)
    };
    // exp(A) ~ (V - U)^-1 (V + U).
    lu_solve(&v.sub(&u), &v.add(&u))
}

/// Matrix exponential exp(tA) by scaling-and-squaring with diagonal Pade
/// approximants, degree chosen from the 1-norm of tA.
pub fn matrix_exp<S: Scalar>(a: &DenseMatrix<S>, t: S) -> Result<DenseMatrix<S>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if !a.is_finite() || !t.is_finite() {
        return Err(Error::NonFinite);
    }
    let scaled = a.scale(t);
    let norm = scaled.norm_one().to_f64_lossy();
    for (idx, &degree) in [3usize, 5, 7, 9].iter().enumerate() {
        if norm <= THETA[idx] {
            return pade_exp(&scaled, degree);
        }
    }
    let squarings = if norm > THETA[4] {
        (norm / THETA[4]).log2().ceil() as u32
    } else {
        0
    };
    let shrunk = scaled.scale(S::c(0.5).powi(squarings as i32));
    let mut result = pade_exp(&shrunk, 13)?;
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    Ok(result)
}

/// Symmetric eigendecomposition S = V diag(w) V^T by cyclic Jacobi rotations.
///
/// Eigenvalues are returned ascending; eigenvectors are the matching columns
/// of V, orthonormal to roughly machine precision.
pub fn sym_eig<S: Scalar>(m: &DenseMatrix<S>) -> Result<(Vec<S>, DenseMatrix<S>)> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let n = m.rows;
    let scale = m.max_abs();
    if scale > S::zero() {
        let mut asym = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym.to_f64_lossy() > 1e-12 * scale.to_f64_lossy() {
            return Err(Error::NotSymmetric {
                asymmetry: (asym / scale).to_f64_lossy(),
            });
        }
    }
    let mut a = m.clone();
    let mut v = DenseMatrix::identity(n);
    let tol = S::c(1e-14) * scale.max(S::one());
    let max_sweeps = 60;
    for sweep in 0..=max_sweeps {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[(i, j)].abs());
            }
        }
        if off <= tol {
            break;
        }
        if sweep == max_sweeps {
            return Err(Error::EigenDiverged { sweeps: max_sweeps });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol * S::c(1e-2) {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (S::c(2.0) * apq);
                let t = {
                    let sign = if theta >= S::zero() {
                        S::one()
                    } else {
                        -S::one()
                    };
                    sign / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .partial_cmp(&a[(j, j)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues: Vec<S> = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((eigenvalues, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = DenseMatrix<f64>;

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(&M::zeros(4, 4), 1.0).unwrap();
        assert_eq!(e, M::identity(4));
    }

    #[test]
    fn exp_of_diagonal() {
        let e = matrix_exp(&M::diagonal(&[1.0, -2.0]), 1.0).unwrap();
        assert!((e[(0, 0)] - 1.0f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - (-2.0f64).exp()).abs() < 1e-14);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_of_nilpotent() {
        let mut a = M::zeros(2, 2);
        a[(0, 1)] = 1.0;
        let e = matrix_exp(&a, 1.0).unwrap();
        for (idx, want) in [((0, 0), 1.0), ((0, 1), 1.0), ((1, 0), 0.0), ((1, 1), 1.0)] {
            assert!((e[idx] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn exp_semigroup_property() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2.0
        };
        let n = 20;
        let a = M::from_fn(n, n, |_, _| next());
        let norm = a.norm_one();
        let a = a.scale(5.0 / norm);
        let full = matrix_exp(&a, 0.7).unwrap();
        let half = matrix_exp(&a, 0.3).unwrap().matmul(&matrix_exp(&a, 0.4).unwrap());
        let err = full.sub(&half).norm_frobenius();
        assert!(err <= 1e-9 * full.norm_frobenius(), "err = {err:e}");
    }

    #[test]
    fn exp_derivative_limit() {
        let a = M::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.3 + 0.1);
        let mut errs = Vec::new();
        for h in [1e-3, 1e-4] {
            let e = matrix_exp(&a, h).unwrap();
            let approx = e.sub(&M::identity(3)).scale(1.0 / h);
            errs.push(approx.sub(&a).norm_frobenius());
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 5.0 && ratio < 20.0, "ratio = {ratio}");
    }

    #[test]
    fn kron_identities() {
        let i2 = M::identity(2);
        assert_eq!(kron(&i2, &i2), M::identity(4));
        let d = kron(&M::diagonal(&[2.0, 3.0]), &M::diagonal(&[5.0, 7.0]));
        assert_eq!(d, M::diagonal(&[10.0, 14.0, 15.0, 21.0]));
        // Swap matrix permutes 2-blocks.
        let mut swap = M::zeros(2, 2);
        swap[(0, 1)] = 1.0;
        swap[(1, 0)] = 1.0;
        let p = kron(&swap, &i2);
        let v = p.matvec(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(v, vec![3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn sym_eig_known_spectra() {
        let (w, _) = sym_eig(&M::identity(5)).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        let (w, _) = sym_eig(&M::diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(w, vec![1.0, 2.0, 3.0]);
        let m = M::from_rows(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let (w, v) = sym_eig(&m).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 3.0).abs() < 1e-12);
        // Orthonormality.
        let vtv = v.transpose().matmul(&v);
        assert!(vtv.sub(&M::identity(2)).norm_frobenius() < 1e-10 * 2.0);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let m = M::from_rows(2, 2, vec![1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::NotSymmetric { .. })));
    }
}
