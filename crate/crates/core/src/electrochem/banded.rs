//! LU factorization with partial pivoting for banded matrices.
//!
//! Dense row-major storage; only the band and its pivoting fill-in are
//! touched, so the cost is O(n kl (kl + ku)).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(col + self.kl >= row && col <= row + self.ku, "outside band");
        self.data[row * self.n + col] = value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        let a = &mut self.data;
        for k in 0..n {
            let last_row = (k + kl + 1).min(n);
            let last_col = (k + kl + ku + 1).min(n);
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..last_row {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::LinearSolve(format!("singular pivot at column {k}")));
            }
            pivots[k] = p;
            if p != k {
                for j in k..last_col {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let inv = 1.0 / a[k * n + k];
            for i in k + 1..last_row {
                let l = a[i * n + k] * inv;
                if l == 0.0 {
                    continue;
                }
                a[i * n + k] = l;
                for j in k + 1..last_col {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            data: self.data,
            pivots,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let a = &self.data;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..(k + self.kl + 1).min(n) {
                    b[i] -= a[i * n + k] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..(k + self.kl + self.ku + 1).min(n) {
                s -= a[k * n + j] * b[j];
            }
            b[k] = s / a[k * n + k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_random_banded_systems_needing_pivoting() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (6, 1, 1), (30, 3, 5), (50, 7, 7)] {
            let mut m = BandedMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                    // small diagonal forces row exchanges
                    let v = if i == j { 1e-3 * rng.random::<f64>() } else { rng.random::<f64>() - 0.5 };
                    m.set(i, j, v);
                    dense[i][j] = v;
                }
            }
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut b: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| dense[i][j] * x[j]).sum())
                .collect();
            let lu = m.factor().unwrap();
            lu.solve_in_place(&mut b);
            for i in 0..n {
                assert!((b[i] - x[i]).abs() < 1e-8, "n={n} i={i}: {} vs {}", b[i], x[i]);
            }
        }
    }

    #[test]
    fn singular_is_error() {
        let m = BandedMatrix::zeros(3, 1, 1);
        assert!(m.factor().is_err());
    }
}
