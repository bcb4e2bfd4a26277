//! Small numerical kernels: compensated summation and the symmetric tridiagonal
//! factorization used by the solver preconditioner.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) trait FSum: Iterator<Item = f64> + Sized {
    /// Compensated sum; energy differences near a minimum sit a few ulps above roundoff.
    fn fsum(self) -> f64 {
        let mut acc = Neumaier::default();
        for x in self {
            acc.add(x);
        }
        acc.value()
    }
}

impl<I: Iterator<Item = f64>> FSum for I {}

/// LDLᵀ factors of a symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Tridiagonal {
    /// `diag` has length `n`, `off` length `n - 1`. Returns `None` unless positive definite.
    pub(crate) fn factor(diag: &[f64], off: &[f64]) -> Option<Self> {
        let n = diag.len();
        debug_assert_eq!(off.len() + 1, n);
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = diag[0];
        for i in 1..n {
            if !(d[i - 1] > 0.0) {
                return None;
            }
            l[i - 1] = off[i - 1] / d[i - 1];
            d[i] = diag[i] - l[i - 1] * off[i - 1];
        }
        if !(d[n - 1] > 0.0) {
            return None;
        }
        Some(Tridiagonal { d, l })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_laplacian_like_system() {
        let n = 50;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.01 * i as f64).collect();
        let off = vec![-1.0; n - 1];
        let f = Tridiagonal::factor(&diag, &off).unwrap();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = rhs.clone();
        f.solve_in_place(&mut x);
        for i in 0..n {
            let mut ax = diag[i] * x[i];
            if i > 0 {
                ax += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                ax += off[i] * x[i + 1];
            }
            assert!((ax - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        assert!(Tridiagonal::factor(&[1.0, 1.0], &[2.0]).is_none());
    }
}
