//! Dense least squares and a symmetric positive-definite band solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Result of an ordinary least-squares fit.
#[derive(Debug, Clone)]
pub struct Ols {
    pub coef: DVector<f64>,
    pub resid: DVector<f64>,
    /// (X'X)⁻¹
    pub xtx_inv: DMatrix<f64>,
    pub ssr: f64,
}

/// OLS through a Householder QR of the design, which keeps exact-fit
/// problems (noise-free recursions) accurate to machine precision.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Ols> {
    let (n, k) = x.shape();
    if n < k || k == 0 {
        return Err(Error::numeric(format!("design is {n}x{k}; need at least as many rows as columns")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..k {
        if r[(i, i)].abs() <= rmax * 1e-12 * n as f64 {
            return Err(Error::numeric(format!("collinear design: column {i} is linearly dependent")));
        }
    }
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::numeric("collinear design"))?;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::numeric("collinear design"))?;
    let xtx_inv = &rinv * rinv.transpose();
    let resid = y - x * &coef;
    let ssr = resid.norm_squared();
    Ok(Ols { coef, resid, xtx_inv, ssr })
}

/// Symmetric matrix stored by its lower band: entry `(i, i - k)` for
/// `k = 0..=bandwidth`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, bw: bandwidth, data: vec![0.0; n * (bandwidth + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.bw
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)`/`(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            y[i] = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        y
    }

    /// Band LDLᵀ factorisation. Fails with the smallest pivot when the matrix
    /// is not numerically positive definite.
    pub fn factor(&self) -> Result<BandLdl> {
        let n = self.n;
        let p = self.bw;
        let mut l = BandMatrix::zeros(n, p);
        let mut d = vec![0.0; n];
        let mut worst = f64::INFINITY;
        let mut worst_at = 0;
        for j in 0..n {
            let lo = j.saturating_sub(p);
            let mut dj = self.get(j, j);
            for k in lo..j {
                let ljk = l.get(j, k);
                dj -= ljk * ljk * d[k];
            }
            let rel = dj / self.get(j, j).abs().max(f64::MIN_POSITIVE);
            if rel < worst {
                worst = rel;
                worst_at = j;
            }
            if !(dj > 0.0) || rel < 1e-14 {
                return Err(Error::numeric(format!(
                    "normal matrix is numerically singular: pivot {dj:.3e} at index {j} (relative {rel:.3e})"
                )));
            }
            d[j] = dj;
            let hi = (j + p).min(n - 1);
            for i in j + 1..=hi {
                let mut s = self.get(i, j);
                for k in i.saturating_sub(p)..j {
                    s -= l.get(i, k) * l.get(j, k) * d[k];
                }
                l.set(i, j, s / dj);
            }
        }
        Ok(BandLdl { l, d, min_relative_pivot: worst, min_pivot_index: worst_at })
    }
}

/// Factor `A = L D Lᵀ` with unit lower-banded `L`.
#[derive(Debug, Clone)]
pub struct BandLdl {
    l: BandMatrix,
    d: Vec<f64>,
    pub min_relative_pivot: f64,
    pub min_pivot_index: usize,
}

impl BandLdl {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        let p = self.l.bw;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(p)..i {
                s -= self.l.get(i, k) * b[k];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..=(i + p).min(n - 1) {
                s -= self.l.get(k, i) * b[k];
            }
            b[i] = s;
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Entries of `A⁻¹` inside the band of `A` (Takahashi recurrences),
    /// in O(n·p²) without forming the dense inverse.
    pub fn selected_inverse(&self) -> BandMatrix {
        let n = self.d.len();
        let p = self.l.bw;
        let mut z = BandMatrix::zeros(n, p);
        for j in (0..n).rev() {
            let hi = (j + p).min(n - 1);
            for i in (j..=hi).rev() {
                let mut s = if i == j { 1.0 / self.d[j] } else { 0.0 };
                for k in j + 1..=hi {
                    s -= self.l.get(k, j) * z.get(k, i);
                }
                z.set(i, j, s);
            }
        }
        z
    }
}

/// Symmetric system with one dense leading row/column and a banded trailing
/// block:
///
/// ```text
/// [ corner  borderᵀ ]
/// [ border  band    ]
/// ```
///
/// Solved by block elimination through the Schur complement of the band.
#[derive(Debug, Clone)]
pub struct BorderedBand {
    pub corner: f64,
    pub border: Vec<f64>,
    pub band: BandMatrix,
}

#[derive(Debug, Clone)]
pub struct BorderedFactor {
    pub band: BandLdl,
    border: Vec<f64>,
    /// band⁻¹ · border
    pub coupling: Vec<f64>,
    /// corner − borderᵀ band⁻¹ border
    pub schur: f64,
}

impl BorderedBand {
    pub fn dim(&self) -> usize {
        self.band.dim() + 1
    }

    pub fn factor(&self) -> Result<BorderedFactor> {
        let band = self.band.factor()?;
        let coupling = band.solve(&self.border);
        let schur = self.corner - dot(&self.border, &coupling);
        if !(schur > self.corner.abs() * 1e-14) {
            return Err(Error::numeric(format!(
                "normal matrix is numerically singular: intercept pivot {schur:.3e}"
            )));
        }
        Ok(BorderedFactor { band, border: self.border.clone(), coupling, schur })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = self.corner;
        for (i, &c) in self.border.iter().enumerate() {
            m[(0, i + 1)] = c;
            m[(i + 1, 0)] = c;
        }
        m.view_mut((1, 1), (n - 1, n - 1)).copy_from(&self.band.to_dense());
        m
    }
}

impl BorderedFactor {
    /// Solves for `(x0, x_band)` given a right-hand side of full length.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let v = self.band.solve(&rhs[1..]);
        let x0 = (rhs[0] - dot(&self.border, &v)) / self.schur;
        let mut out = Vec::with_capacity(rhs.len());
        out.push(x0);
        out.extend(v.iter().zip(&self.coupling).map(|(vi, ui)| vi - ui * x0));
        out
    }

    /// Band of the trailing block of the full inverse:
    /// band⁻¹ + u uᵀ / schur with u = band⁻¹ border.
    pub fn selected_inverse(&self) -> BandMatrix {
        let mut z = self.band.selected_inverse();
        let n = z.dim();
        let p = z.bandwidth();
        for i in 0..n {
            for j in i.saturating_sub(p)..=i {
                let v = z.get(i, j) + self.coupling[i] * self.coupling[j] / self.schur;
                z.set(i, j, v);
            }
        }
        z
    }

    /// (0,0) entry of the full inverse.
    pub fn corner_inverse(&self) -> f64 {
        1.0 / self.schur
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
