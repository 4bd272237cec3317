//! Small dense linear algebra and seeded random sampling.
//!
//! Everything here targets the tiny problems of the estimators (correlation
//! matrices of order M, Gram matrices of order Q), so the routines favour
//! robustness over speed: a cyclic Jacobi sweep for symmetric eigenproblems,
//! Cholesky reduction for the generalized symmetric-definite problem, and
//! Durand–Kerner iteration for polynomial roots.
//!
//! Eigenvectors are returned with their largest-magnitude entry positive so
//! that results are free of sign ambiguity.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

use crate::error::{contract, Error, Result};

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(contract(format!("matrix {rows}x{cols} needs {} entries, got {}", rows * cols, data.len())));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    ///
    /// # Panics
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Mat::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ v` without forming the transpose.
    pub fn tr_mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// `vᵀ self v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mat_vec(v))
    }

    /// `uᵀ self v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.mat_vec(v))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute asymmetry `max |A - Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// True when `max |A - Aᵀ| <= 1e-10 * max |A|`.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.asymmetry() <= 1e-10 * self.max_abs()
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Mat {
    type Output = Mat;

    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let lead = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: Mat,
}

const MAX_SYM_DIM: usize = 64;
const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigen-solver for a symmetric matrix of dimension ≤ 64.
pub fn sym_eig(a: &Mat) -> Result<SymEig> {
    if !a.is_square() {
        return Err(contract(format!("sym_eig needs a square matrix, got {}x{}", a.rows, a.cols)));
    }
    let n = a.rows;
    if n > MAX_SYM_DIM {
        return Err(contract(format!("sym_eig dimension {n} exceeds {MAX_SYM_DIM}")));
    }
    if !a.is_symmetric() {
        return Err(contract(format!("sym_eig input is not symmetric (asymmetry {:.3e})", a.asymmetry())));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("sym_eig input has non-finite entries".into()));
    }

    let mut m = a.symmetrized();
    let mut v = Mat::identity(n);
    let scale = m.frobenius();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= f64::EPSILON * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
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
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        canonical_sign(&mut col);
        for (k, x) in col.into_iter().enumerate() {
            vectors[(k, dst)] = x;
        }
    }
    Ok(SymEig { values, vectors })
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(contract("cholesky needs a square matrix"));
    }
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::Numeric(format!("matrix not positive definite at pivot {j} ({d:.3e})")));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = (b[i] - s) / l[(i, i)];
    }
    y
}

/// Solves `Lᵀ x = y` for lower-triangular `L`.
pub fn solve_lower_transposed(l: &Mat, y: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (y[i] - s) / l[(i, i)];
    }
    x
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn spd_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    Ok(solve_lower_transposed(&l, &solve_lower(&l, b)))
}

/// `A⁻¹ B` column by column for symmetric positive-definite `A`.
pub fn spd_solve_mat(a: &Mat, b: &Mat) -> Result<Mat> {
    let l = cholesky(a)?;
    let mut out = Mat::zeros(b.rows, b.cols);
    for j in 0..b.cols {
        let x = solve_lower_transposed(&l, &solve_lower(&l, &b.column(j)));
        for (i, v) in x.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Smallest eigenpair of the symmetric-definite pencil `A v = mu B v`.
///
/// `B` is reduced by its Cholesky factor to the standard problem
/// `L⁻¹ A L⁻ᵀ y = mu y`, and `v = L⁻ᵀ y`, so `vᵀ B v = 1`.
pub fn gen_eig_smallest(a: &Mat, b: &Mat) -> Result<(f64, Vec<f64>)> {
    if !a.is_square() || !b.is_square() || a.rows != b.rows {
        return Err(contract("gen_eig_smallest needs square matrices of equal size"));
    }
    if !a.is_symmetric() {
        return Err(contract("gen_eig_smallest: A is not symmetric"));
    }
    if !b.is_symmetric() {
        return Err(contract("gen_eig_smallest: B is not symmetric"));
    }
    let n = a.rows;
    let b_eig = sym_eig(b)?;
    let floor = 1e-12 * b.trace() / n as f64;
    if !(b_eig.values[0] > floor) || !(floor > 0.0) {
        return Err(Error::SingularPencil(format!(
            "smallest eigenvalue of B is {:.3e} (threshold {:.3e})",
            b_eig.values[0], floor
        )));
    }
    let l = cholesky(b).map_err(|e| Error::SingularPencil(e.to_string()))?;

    // C = L⁻¹ A L⁻ᵀ, built column by column.
    let mut linv_a = Mat::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(&l, &a.column(j));
        for i in 0..n {
            linv_a[(i, j)] = col[i];
        }
    }
    let mut c = Mat::zeros(n, n);
    for i in 0..n {
        let row = solve_lower(&l, linv_a.row(i));
        for j in 0..n {
            c[(i, j)] = row[j];
        }
    }
    let eig = sym_eig(&c.symmetrized())?;
    let mut v = solve_lower_transposed(&l, &eig.vectors.column(0));
    canonical_sign(&mut v);
    Ok((eig.values[0], v))
}

/// Roots of the monic polynomial `z^d + c[0] z^(d-1) + ... + c[d-1]`.
pub fn poly_roots(c: &[f64]) -> Vec<Complex64> {
    let d = c.len();
    if d == 0 {
        return Vec::new();
    }
    let eval = |z: Complex64| c.iter().fold(Complex64::new(1.0, 0.0), |acc, &ci| acc * z + ci);
    // Cauchy bound on root modulus.
    let bound = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..d).map(|k| seed.powu(k as u32) * bound * 0.5).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..d {
            let zi = roots[i];
            let denom = (0..d).filter(|&j| j != i).fold(Complex64::new(1.0, 0.0), |acc, j| acc * (zi - roots[j]));
            let step = if denom.norm() == 0.0 { Complex64::new(1e-12, 1e-12) } else { eval(zi) / denom };
            roots[i] = zi - step;
            delta = delta.max(step.norm());
        }
        if delta <= 1e-15 * bound {
            break;
        }
    }
    roots
}

/// Spectral radius of the companion matrix of `z^d + c[0] z^(d-1) + ... + c[d-1]`.
pub fn companion_spectral_radius(c: &[f64]) -> f64 {
    poly_roots(c).iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Seeded SplitMix64 generator.
///
/// The state advances by the golden-ratio increment `0x9E3779B97F4A7C15`
/// and each output is the state passed through the SplitMix64 finalizer, so
/// the stream is fully determined by the seed on every platform. Gaussian
/// draws use the Box–Muller transform with `libm` transcendentals.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    state: u64,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, state: seed, spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_f64() * n as f64) as usize).min(n.saturating_sub(1))
    }

    /// Standard normal sample.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    /// A fresh generator whose seed is derived from this one's seed.
    pub fn derive(&self, index: u64) -> Rng {
        Rng::new(self.seed.wrapping_add(index))
    }
}

/// `n` i.i.d. draws from `N(0, sigma²)`.
pub fn gauss(rng: &mut Rng, sigma: f64, n: usize) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    (0..n).map(|_| sigma * rng.standard_normal()).collect()
}
