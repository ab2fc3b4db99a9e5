//! Banded LU with partial pivoting plus a few dense eigenvalue helpers.
//!
//! The Newton systems assembled by the wave solvers are banded (difference
//! stencils plus a handful of shift diagonals), so a band factorization in
//! the style of the LAPACK `gbtrf`/`gbtrs` pair keeps the sweeps cheap.
//! Dense decompositions are delegated to nalgebra.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Band matrix with `kl` subdiagonals and `ku` superdiagonals. Entry `(i, j)`
/// is stored column-major at band row `kl + ku + i - j`; the leading `kl`
/// rows are reserved for pivoting fill.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    rows: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let rows = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            rows,
            data: vec![0.0; rows * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "({i},{j}) off band");
        j * self.rows + (self.kl + self.ku + i - j)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.data[j * self.rows + (self.kl + self.ku + i - j)] * xj;
            }
        }
    }

    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let mut acc = 0.0;
            for i in lo..=hi {
                acc += self.data[j * self.rows + (self.kl + self.ku + i - j)] * x[i];
            }
            y[j] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// Infinity norm, for relative singularity thresholds.
    pub fn norm_inf(&self) -> f64 {
        let mut row_sums = vec![0.0f64; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                row_sums[i] += self.get(i, j).abs();
            }
        }
        row_sums.into_iter().fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting.
    pub fn factor(&self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku;
        let rows = self.rows;
        let mut ab = self.data.clone();
        let mut ipiv = vec![0usize; n];
        let at = |i: usize, j: usize| j * rows + (kv + i - j);
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search in column j, rows j..=j+km
            let mut jp = 0;
            let mut best = ab[at(j, j)].abs();
            for t in 1..=km {
                let v = ab[at(j + t, j)].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            ju = ju.max((j + ku + jp).min(n - 1));
            let piv = ab[at(j + jp, j)];
            if piv == 0.0 {
                return Err(Error::SingularSystem(format!(
                    "zero pivot in column {j}"
                )));
            }
            if jp != 0 {
                for jj in j..=ju {
                    ab.swap(at(j, jj), at(j + jp, jj));
                }
            }
            if km > 0 {
                let piv = ab[at(j, j)];
                for t in 1..=km {
                    ab[at(j + t, j)] /= piv;
                }
                for jj in (j + 1)..=ju {
                    let f = ab[at(j, jj)];
                    if f != 0.0 {
                        for t in 1..=km {
                            let l = ab[at(j + t, j)];
                            ab[at(j + t, jj)] -= l * f;
                        }
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            rows,
            data: ab,
            ipiv,
        })
    }
}

/// Factored form produced by [`BandMatrix::factor`].
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    rows: usize,
    data: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + (self.kl + self.ku + i - j)]
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for j in 0..n {
            let jp = self.ipiv[j];
            if jp != j {
                b.swap(j, jp);
            }
            let lm = self.kl.min(n - 1 - j);
            let bj = b[j];
            for t in 1..=lm {
                b[j + t] -= self.at(j + t, j) * bj;
            }
        }
        let band = self.kl + self.ku;
        for j in (0..n).rev() {
            b[j] /= self.at(j, j);
            let lm = band.min(j);
            let bj = b[j];
            for t in 1..=lm {
                b[j - t] -= self.at(j - t, j) * bj;
            }
        }
    }

    /// Solve `A^T x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let band = self.kl + self.ku;
        // U^T y = b (forward substitution; U^T is lower with `band` subdiags)
        for j in 0..n {
            let lm = band.min(j);
            let mut acc = b[j];
            for t in 1..=lm {
                acc -= self.at(j - t, j) * b[j - t];
            }
            b[j] = acc / self.at(j, j);
        }
        // L^T z = y (backward substitution; unit diagonal)
        for j in (0..n).rev() {
            let lm = self.kl.min(n - 1 - j);
            let mut acc = b[j];
            for t in 1..=lm {
                acc -= self.at(j + t, j) * b[j + t];
            }
            b[j] = acc;
            let jp = self.ipiv[j];
            if jp != j {
                b.swap(j, jp);
            }
        }
    }
}

/// One-row/one-column bordered extension of a band matrix,
/// `[[A, col], [row^T, 0]]`. The Schur-complement solve loses accuracy when
/// `A` is nearly singular (the usual case here: `A` has a soft translational
/// direction and the border is what removes it), so each solve is polished
/// by iterative refinement on the augmented system.
pub struct BorderedSolver<'a> {
    a: &'a BandMatrix,
    lu: BandLu,
    col: Vec<f64>,
    row: Vec<f64>,
    s2: Vec<f64>,
    denom: f64,
}

impl<'a> BorderedSolver<'a> {
    pub fn new(a: &'a BandMatrix, col: Vec<f64>, row: Vec<f64>) -> Result<Self> {
        let lu = a.factor()?;
        let mut s2 = col.clone();
        lu.solve(&mut s2);
        let denom: f64 = row.iter().zip(&s2).map(|(x, y)| x * y).sum();
        if denom.abs() < 1e-300 || !denom.is_finite() {
            return Err(Error::SingularSystem(
                "bordered system degenerate: border column lies in the range".into(),
            ));
        }
        Ok(BorderedSolver {
            a,
            lu,
            col,
            row,
            s2,
            denom,
        })
    }

    fn schur(&self, rhs: &[f64], rhs_border: f64) -> (Vec<f64>, f64) {
        let mut s1 = rhs.to_vec();
        self.lu.solve(&mut s1);
        let w_s1: f64 = self.row.iter().zip(&s1).map(|(x, y)| x * y).sum();
        let y = (w_s1 - rhs_border) / self.denom;
        let x: Vec<f64> = s1
            .iter()
            .zip(&self.s2)
            .map(|(a, b)| a - b * y)
            .collect();
        (x, y)
    }

    /// Solve `A x + col y = rhs`, `row . x = rhs_border`.
    pub fn solve(&self, rhs: &[f64], rhs_border: f64) -> (Vec<f64>, f64) {
        let n = rhs.len();
        let (mut x, mut y) = self.schur(rhs, rhs_border);
        let mut work = vec![0.0; n];
        for _ in 0..2 {
            self.a.matvec(&x, &mut work);
            let res: Vec<f64> = (0..n)
                .map(|i| rhs[i] - work[i] - self.col[i] * y)
                .collect();
            let res_border =
                rhs_border - self.row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            let (dx, dy) = self.schur(&res, res_border);
            for i in 0..n {
                x[i] += dx[i];
            }
            y += dy;
        }
        (x, y)
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn orthogonalize_against(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b.iter()).map(|(a, b)| a * b).sum();
        for (x, y) in v.iter_mut().zip(b.iter()) {
            *x -= dot * y;
        }
    }
}

/// Smallest singular value and right singular vector of a band matrix via
/// inverse iteration on `A^T A` (each step is one transpose solve and one
/// direct solve with the same factorization). Earlier singular vectors can be
/// deflated to reach the next one up.
pub fn smallest_singular_pair(
    a: &BandMatrix,
    lu: &BandLu,
    deflate: &[Vec<f64>],
    seed: u64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>)> {
    use rand::{Rng, SeedableRng};
    let n = a.n();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    orthogonalize_against(&mut v, deflate);
    normalize(&mut v);
    let mut sigma_prev = f64::INFINITY;
    let mut work = vec![0.0; n];
    for iter in 0..max_iter {
        // v <- (A^T A)^{-1} v = A^{-1} A^{-T} v
        lu.solve_transpose(&mut v);
        lu.solve(&mut v);
        orthogonalize_against(&mut v, deflate);
        if normalize(&mut v) == 0.0 {
            return Err(Error::EigenFailure(
                "inverse iteration collapsed to zero".into(),
            ));
        }
        a.matvec(&v, &mut work);
        let sigma = work.iter().map(|x| x * x).sum::<f64>().sqrt();
        if iter > 2 && (sigma - sigma_prev).abs() <= 1e-10 * sigma.max(1e-300) {
            return Ok((sigma, v));
        }
        sigma_prev = sigma;
    }
    Ok((sigma_prev, v))
}

/// Left null-direction analogue: inverse iteration on `A A^T`.
pub fn smallest_singular_left(
    a: &BandMatrix,
    lu: &BandLu,
    seed: u64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>)> {
    use rand::{Rng, SeedableRng};
    let n = a.n();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut u);
    let mut sigma_prev = f64::INFINITY;
    let mut work = vec![0.0; n];
    for iter in 0..max_iter {
        lu.solve(&mut u);
        lu.solve_transpose(&mut u);
        if normalize(&mut u) == 0.0 {
            return Err(Error::EigenFailure(
                "inverse iteration collapsed to zero".into(),
            ));
        }
        a.matvec_transpose(&u, &mut work);
        let sigma = work.iter().map(|x| x * x).sum::<f64>().sqrt();
        if iter > 2 && (sigma - sigma_prev).abs() <= 1e-10 * sigma.max(1e-300) {
            return Ok((sigma, u));
        }
        sigma_prev = sigma;
    }
    Ok((sigma_prev, u))
}

/// Smallest eigenpair of the symmetric pencil `A x = lambda B x` with `B`
/// positive definite, via a Cholesky reduction to a standard problem.
pub fn generalized_symmetric_smallest(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigenFailure("metric matrix not positive definite".into()))?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}
    let mut c = a.clone();
    l.solve_lower_triangular_mut(&mut c);
    c.transpose_mut();
    l.solve_lower_triangular_mut(&mut c);
    // symmetrize against rounding
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let (mut idx, mut best) = (0, f64::INFINITY);
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < best {
            best = ev;
            idx = i;
        }
    }
    let y = eig.eigenvectors.column(idx).into_owned();
    // x = L^{-T} y
    let mut x = y;
    l.transpose().solve_upper_triangular_mut(&mut x);
    Ok((best, x))
}
