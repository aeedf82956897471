//! Small dense complex linear algebra: Hermitian matrices, Cholesky,
//! a Jacobi eigensolver and the generalized Hermitian eigenproblem used by
//! the receive-beamformer update.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVector = Vec<C64>;

/// `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// Scale `a` to unit norm. Fails on the zero vector.
pub fn normalize(a: &mut [C64]) -> Result<()> {
    let n = norm(a);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::degenerate("vector", "cannot normalize a zero or non-finite vector"));
    }
    let inv = 1.0 / n;
    a.iter_mut().for_each(|x| *x *= inv);
    Ok(())
}

pub fn real_norm_sqr(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Dense square complex matrix in row-major order. Used only for Hermitian
/// content, which the constructors preserve.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    data: Vec<C64>,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.n + c]
    }

    /// `self += scale * v v^H`.
    pub fn add_outer(&mut self, scale: f64, v: &[C64]) {
        assert_eq!(v.len(), self.n);
        for r in 0..self.n {
            let vr = v[r] * scale;
            for c in 0..self.n {
                self.data[r * self.n + c] += vr * v[c].conj();
            }
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> CVector {
        (0..self.n)
            .map(|r| {
                self.data[r * self.n..(r + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `x^H A x`, real for Hermitian `A`.
    pub fn quad_form(&self, x: &[C64]) -> f64 {
        inner(x, &self.mul_vec(x)).re
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Lower Cholesky factor `L` with `A = L L^H`.
    pub fn cholesky(&self) -> Result<LowerTriangular> {
        let n = self.n;
        let mut l = vec![C64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = self.get(j, j).re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(Error::degenerate(
                    "matrix",
                    format!("not positive definite (pivot {j} = {d:e})"),
                ));
            }
            let djj = d.sqrt();
            l[j * n + j] = C64::new(djj, 0.0);
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(LowerTriangular { n, data: l })
    }

    /// All eigenpairs, eigenvalues ascending. Eigenvectors are unit norm.
    pub fn eigh(&self) -> Vec<(f64, CVector)> {
        let n = self.n;
        let m = 2 * n;
        // Real symmetric embedding [[X, -Y], [Y, X]] of A = X + iY.
        let mut r = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                let z = self.get(i, j);
                r[i * m + j] = z.re;
                r[(i + n) * m + (j + n)] = z.re;
                r[i * m + (j + n)] = -z.im;
                r[(i + n) * m + j] = z.im;
            }
        }
        let (vals, vecs) = jacobi_symmetric(&mut r, m);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        // Each eigenvalue of A appears twice in the embedding; keep one
        // representative per pair by Gram-Schmidt against accepted vectors.
        let mut out: Vec<(f64, CVector)> = Vec::with_capacity(n);
        for &k in &order {
            if out.len() == n {
                break;
            }
            let mut v: CVector = (0..n)
                .map(|i| C64::new(vecs[i * m + k], vecs[(i + n) * m + k]))
                .collect();
            for (_, u) in &out {
                let proj = inner(u, &v);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= proj * y);
            }
            if norm(&v) > 0.5 {
                normalize(&mut v).expect("non-zero");
                let lambda = self.quad_form(&v);
                out.push((lambda, v));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// Eigenpair with the largest eigenvalue.
    pub fn dominant_eigenpair(&self) -> (f64, CVector) {
        self.eigh().pop().expect("dimension >= 1")
    }
}

/// Cyclic Jacobi on a dense real symmetric `m x m` matrix (destroyed).
/// Returns eigenvalues and the column-major-by-index eigenvector matrix
/// `v[i * m + k]` = component `i` of eigenvector `k`.
fn jacobi_symmetric(a: &mut [f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..m {
            for q in p + 1..m {
                off += a[p * m + q] * a[p * m + q];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i * m + i]).collect(), v)
}

#[derive(Debug, Clone)]
pub struct LowerTriangular {
    n: usize,
    data: Vec<C64>,
}

impl LowerTriangular {
    /// Solve `L x = b`.
    pub fn solve(&self, b: &[C64]) -> CVector {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.data[i * n + k] * x[k];
            }
            x[i] = s / self.data[i * n + i];
        }
        x
    }

    /// Solve `L^H x = b`.
    pub fn solve_adjoint(&self, b: &[C64]) -> CVector {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.data[k * n + i].conj() * x[k];
            }
            x[i] = s / self.data[i * n + i].conj();
        }
        x
    }
}

/// Maximizer of `w^H B w / w^H A w` over unit-norm `w`, for Hermitian
/// positive definite `A` and Hermitian positive semidefinite `B`.
///
/// With `A = L L^H` the pencil reduces to the ordinary Hermitian matrix
/// `L^-1 B L^-H`; its dominant eigenvector `y` maps back as `w ∝ L^-H y`.
/// Returns `w` and the maximal quotient.
pub fn max_generalized_rayleigh(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<(CVector, f64)> {
    let n = a.dim();
    assert_eq!(b.dim(), n);
    let l = a.cholesky()?;
    // Columns of L^-1 B, then C = L^-1 (L^-1 B)^H since B = B^H.
    let mut lb = HermitianMatrix::zeros(n);
    for c in 0..n {
        let col: CVector = (0..n).map(|r| b.get(r, c)).collect();
        let y = l.solve(&col);
        for r in 0..n {
            lb.data[r * n + c] = y[r];
        }
    }
    let mut reduced = HermitianMatrix::zeros(n);
    for c in 0..n {
        // column c of (L^-1 B)^H is the conjugate of row c of L^-1 B
        let col: CVector = (0..n).map(|r| lb.get(c, r).conj()).collect();
        let y = l.solve(&col);
        for r in 0..n {
            reduced.data[r * n + c] = y[r];
        }
    }
    for r in 0..n {
        for c in r..n {
            let z = 0.5 * (reduced.get(r, c) + reduced.get(c, r).conj());
            reduced.data[r * n + c] = z;
            reduced.data[c * n + r] = z.conj();
        }
    }
    let (mu, y) = reduced.dominant_eigenpair();
    if !(mu > 0.0) {
        return Err(Error::degenerate(
            "group",
            "signal matrix is numerically zero; no beamformer yields positive signal power",
        ));
    }
    let mut w = l.solve_adjoint(&y);
    normalize(&mut w)?;
    let q = b.quad_form(&w) / a.quad_form(&w);
    Ok((w, q))
}
