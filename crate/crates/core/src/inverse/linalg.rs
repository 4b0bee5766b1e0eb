//! Dense complex LU with partial pivoting and a 1-norm condition estimate.

use crate::model::C64;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<C64>,
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = C64::new(1.0, 0.0);
        }
        Matrix { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n).map(|i| self.data[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// Maximum column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n).map(|j| (0..self.n).map(|i| self.get(i, j).norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Maximum row sum, the operator norm on bounded sequences.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n..(i + 1) * self.n].iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }
}

pub struct Lu {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
    norm1: f64,
}

impl Lu {
    /// `None` if a pivot is exactly zero.
    pub fn factor(a: &Matrix) -> Option<Lu> {
        let n = a.n;
        let norm1 = a.norm1();
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| lu[i * n + k].norm().total_cmp(&lu[j * n + k].norm())).unwrap();
            if lu[p * n + k].norm() == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f.re == 0.0 && f.im == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        Some(Lu { n, lu, perm, norm1 })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[i * n + j];
                x[i] = x[i] - l * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[i * n + j];
                x[i] = x[i] - u * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        // A = P^T L U, so A^H = U^H L^H P
        let mut y = b.to_vec();
        for i in 0..n {
            for j in 0..i {
                let u = self.lu[j * n + i].conj();
                y[i] = y[i] - u * y[j];
            }
            y[i] /= self.lu[i * n + i].conj();
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let l = self.lu[j * n + i].conj();
                y[i] = y[i] - l * y[j];
            }
        }
        let mut x = vec![C64::new(0.0, 0.0); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Hager's estimate of `||A||_1 ||A^{-1}||_1`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.norm()).sum::<f64>();
            let xi: Vec<C64> = y.iter().map(|v| if v.norm() > 0.0 { v / v.norm() } else { C64::new(1.0, 0.0) }).collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z.iter().enumerate().map(|(i, v)| (i, v.norm())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![C64::new(0.0, 0.0); n];
            x[j] = C64::new(1.0, 0.0);
        }
        est * self.norm1
    }
}
