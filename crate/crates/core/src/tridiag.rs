//! Symmetric tridiagonal matrices and the generalized pencil `K u = μ M u`.
//!
//! Eigenvalues of the pencil are located by bisection on the Sylvester
//! inertia of `K - σM`, which counts eigenvalues below `σ` whenever `M` is
//! positive definite. Eigenvectors come from a twisted factorization of the
//! shifted matrix, which keeps componentwise relative accuracy in the tails
//! of rapidly decaying eigenvectors.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(SymTridiag { diag, off })
    }

    pub fn zeros(n: usize) -> Self {
        SymTridiag {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// `x^T A y`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.diag.len();
        let mut s = 0.0;
        for i in 0..n {
            s += x[i] * self.diag[i] * y[i];
            if i + 1 < n {
                s += self.off[i] * (x[i] * y[i + 1] + x[i + 1] * y[i]);
            }
        }
        s
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &SymTridiag) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + s * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.off)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Factor as `L D L^T` for repeated solves. Requires nonzero pivots, which
    /// holds for positive definite matrices.
    pub fn factor(&self) -> Result<LdlFactor> {
        let n = self.diag.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        for i in 1..n {
            if d[i - 1] == 0.0 || !d[i - 1].is_finite() {
                return Err(Error::Convergence {
                    stage: "tridiagonal factorization",
                    detail: format!("zero or non-finite pivot at row {}", i - 1),
                });
            }
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
        }
        if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
            return Err(Error::Convergence {
                stage: "tridiagonal factorization",
                detail: format!("zero or non-finite pivot at row {}", n - 1),
            });
        }
        Ok(LdlFactor { d, l })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let f = self.factor()?;
        let mut x = b.to_vec();
        f.solve_in_place(&mut x);
        Ok(x)
    }
}

/// `L D L^T` factorization of a symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl LdlFactor {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }
}

/// Stand-in for an exactly zero pivot in inertia counts.
const TINY_PIVOT: f64 = 1e-300;

/// Generalized symmetric pencil `(K, M)` with `M` positive definite.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub k: SymTridiag,
    pub m: SymTridiag,
}

impl Pencil {
    pub fn new(k: SymTridiag, m: SymTridiag) -> Result<Self> {
        if k.len() != m.len() {
            return Err(Error::InvalidInput(format!(
                "pencil size mismatch: {} vs {}",
                k.len(),
                m.len()
            )));
        }
        Ok(Pencil { k, m })
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Number of pencil eigenvalues strictly below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.len();
        let a0 = self.k.diag[0] - sigma * self.m.diag[0];
        let mut d = if a0 == 0.0 { -TINY_PIVOT } else { a0 };
        let mut count = usize::from(d < 0.0);
        for i in 1..n {
            let b = self.k.off[i - 1] - sigma * self.m.off[i - 1];
            let a = self.k.diag[i] - sigma * self.m.diag[i];
            d = a - b * b / d;
            if d == 0.0 {
                d = -TINY_PIVOT;
            }
            count += usize::from(d < 0.0);
        }
        count
    }

    /// The `j`-th smallest eigenvalue (0-based) by bisection, accurate to a
    /// few ulps. `lower` must satisfy `count_below(lower) <= j`.
    pub fn eigenvalue(&self, j: usize, lower: f64) -> Result<f64> {
        if j >= self.len() {
            return Err(Error::InvalidInput(format!(
                "eigenvalue index {j} out of range for pencil of size {}",
                self.len()
            )));
        }
        let mut lo = lower;
        let mut guard = 0;
        while self.count_below(lo) > j {
            lo = if lo == 0.0 { -1.0 } else { lo - 2.0 * lo.abs() };
            guard += 1;
            if guard > 2000 {
                return Err(Error::Convergence {
                    stage: "eigenvalue bracketing",
                    detail: format!("no lower bracket found for index {j}"),
                });
            }
        }
        let mut hi = if lo > 0.0 { 2.0 * lo } else { lo.abs().max(1.0) };
        guard = 0;
        while self.count_below(hi) <= j {
            hi = 2.0 * hi.abs().max(1.0);
            guard += 1;
            if guard > 2000 {
                return Err(Error::Convergence {
                    stage: "eigenvalue bracketing",
                    detail: format!("no upper bracket found for index {j}"),
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Eigenvector for the eigenvalue estimate `mu` via twisted factorization.
    /// The result is not normalized.
    pub fn twisted_vector(&self, mu: f64) -> Vec<f64> {
        let n = self.len();
        if n == 1 {
            return vec![1.0];
        }
        let a: Vec<f64> = (0..n).map(|i| self.k.diag[i] - mu * self.m.diag[i]).collect();
        let b: Vec<f64> = (0..n - 1).map(|i| self.k.off[i] - mu * self.m.off[i]).collect();
        let guard = |v: f64| if v == 0.0 { TINY_PIVOT } else { v };
        let mut dp = vec![0.0; n];
        let mut dm = vec![0.0; n];
        dp[0] = guard(a[0]);
        for i in 1..n {
            dp[i] = guard(a[i] - b[i - 1] * b[i - 1] / dp[i - 1]);
        }
        dm[n - 1] = guard(a[n - 1]);
        for i in (0..n - 1).rev() {
            dm[i] = guard(a[i] - b[i] * b[i] / dm[i + 1]);
        }
        let mut k = 0;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let gamma = (dp[i] + dm[i] - a[i]).abs();
            if gamma < best {
                best = gamma;
                k = i;
            }
        }
        let mut z = vec![0.0; n];
        z[k] = 1.0;
        for i in (0..k).rev() {
            z[i] = -b[i] / dp[i] * z[i + 1];
        }
        for i in k..n - 1 {
            z[i + 1] = -b[i] / dm[i + 1] * z[i];
        }
        z
    }

    /// The `count` smallest eigenpairs, ascending, with `M`-orthonormal
    /// vectors whose first significant component is positive.
    pub fn smallest_eigenpairs(&self, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidInput(format!(
                "requested {count} eigenpairs from a pencil of size {}",
                self.len()
            )));
        }
        let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
        let mut lower = 0.0;
        for j in 0..count {
            let mu = self.eigenvalue(j, lower)?;
            lower = mu;
            let mut z = self.twisted_vector(mu);
            for (_, prev) in &out {
                let c = self.m.inner(prev, &z);
                for (zi, pi) in z.iter_mut().zip(prev) {
                    *zi -= c * pi;
                }
            }
            let norm = self.m.inner(&z, &z).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::Convergence {
                    stage: "eigenvector",
                    detail: format!("degenerate twisted vector for index {j} (mu={mu})"),
                });
            }
            z.iter_mut().for_each(|v| *v /= norm);
            fix_sign(&mut z);
            out.push((mu, z));
        }
        Ok(out)
    }
}

/// Flip `z` so its first component above `1e-8 * max|z|` is positive.
pub fn fix_sign(z: &mut [f64]) {
    let peak = z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(first) = z.iter().find(|v| v.abs() > 1e-8 * peak) {
        if *first < 0.0 {
            z.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Second-difference matrix with eigenvalues `2 - 2 cos(kπ/(n+1))`.
    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    fn identity(n: usize) -> SymTridiag {
        SymTridiag::new(vec![1.0; n], vec![0.0; n - 1]).unwrap()
    }

    #[test]
    fn standard_problem_eigenvalues() {
        let n = 50;
        let p = Pencil::new(laplacian(n), identity(n)).unwrap();
        let pairs = p.smallest_eigenpairs(5).unwrap();
        for (j, (mu, v)) in pairs.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((j + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert_relative_eq!(*mu, exact, max_relative = 1e-13);
            let kv = p.k.matvec(v);
            let res: f64 = kv.iter().zip(v).map(|(a, b)| (a - mu * b).abs()).fold(0.0, f64::max);
            assert!(res < 1e-12);
        }
        for i in 0..5 {
            for j in 0..5 {
                let g = p.m.inner(&pairs[i].1, &pairs[j].1);
                assert_relative_eq!(g, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn generalized_problem_with_scaled_mass() {
        let n = 20;
        let m = SymTridiag::new(vec![4.0; n], vec![1.0; n - 1]).unwrap();
        let p = Pencil::new(laplacian(n), m).unwrap();
        for j in 0..3 {
            let t = ((j + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            let exact = (2.0 - 2.0 * t) / (4.0 + 2.0 * t);
            assert_relative_eq!(p.eigenvalue(j, 0.0).unwrap(), exact, max_relative = 1e-13);
        }
    }

    #[test]
    fn inertia_count_matches_spectrum() {
        let p = Pencil::new(laplacian(10), identity(10)).unwrap();
        assert_eq!(p.count_below(0.0), 0);
        assert_eq!(p.count_below(4.0), 10);
        assert_eq!(p.count_below(2.0 - 1e-9), 5);
    }

    #[test]
    fn factor_solves_spd_system() {
        let a = laplacian(30);
        let x: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let y = a.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert_relative_eq!(u, v, epsilon = 1e-11);
        }
    }

    #[test]
    fn sign_convention() {
        let mut z = vec![0.0, -1e-12, -0.5, 0.3];
        fix_sign(&mut z);
        assert!(z[2] > 0.0);
    }
}
