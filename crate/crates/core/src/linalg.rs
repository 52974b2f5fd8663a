//! Dense linear algebra for desk-scale problems.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`; matrices are row-major
//! [`DenseMatrix`]. Factorizations refuse rather than regularize: a
//! non-positive pivot is reported as an error so that certificate checks
//! never run on silently perturbed systems.

use crate::error::{check_dim, Error, Result};

/// Absolute tolerance (scaled by matrix magnitude) for symmetry and PSD probes.
pub const PSD_TOL: f64 = 1e-9;
/// Relative residual budget for SPD solves.
pub const LIN_TOL: f64 = 1e-10;

pub type Vector = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vector {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vector {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vector {
    a.iter().map(|x| x * s).collect()
}

/// `y += s * x`
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub(crate) fn ensure_finite(context: &str, a: &[f64]) -> Result<()> {
    if all_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite(context.to_string()))
    }
}

/// Concatenate blocks into one vector.
pub fn stack(blocks: &[&[f64]]) -> Vector {
    let mut out = Vec::with_capacity(blocks.iter().map(|b| b.len()).sum());
    for b in blocks {
        out.extend_from_slice(b);
    }
    out
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Componentwise compensated sum of equally sized vectors.
#[derive(Clone, Debug)]
pub struct CompensatedVecSum {
    parts: Vec<CompensatedSum>,
}

impl CompensatedVecSum {
    pub fn new(dim: usize) -> Self {
        Self {
            parts: vec![CompensatedSum::new(); dim],
        }
    }

    pub fn add(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.parts.len());
        for (p, x) in self.parts.iter_mut().zip(v) {
            p.add(*x);
        }
    }

    pub fn mean(&self, count: usize) -> Vector {
        let c = count as f64;
        self.parts.iter().map(|p| p.value() / c).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Row-major constructor.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        check_dim("matrix entry count", rows * cols, data.len())?;
        ensure_finite("matrix entries", &data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_dim("matrix row length", c, row.len())?;
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in d.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> Vector {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    /// `self * v`
    pub fn matvec(&self, v: &[f64]) -> Vector {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`
    pub fn tmatvec(&self, v: &[f64]) -> Vector {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            if *vi != 0.0 {
                axpy(&mut out, *vi, self.row(i));
            }
        }
        out
    }

    pub fn try_matvec(&self, v: &[f64]) -> Result<Vector> {
        check_dim("matrix-vector product", self.cols, v.len())?;
        Ok(self.matvec(v))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        check_dim("matrix product", self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                axpy(dst, a, other.row(l));
            }
        }
        Ok(out)
    }

    /// `selfᵀ self`, exactly symmetric.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..self.rows).map(|r| self.get(r, i) * self.get(r, j)).sum();
                g.set(i, j, s);
                g.set(j, i, s);
            }
        }
        g
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self> {
        check_dim("matrix sum rows", self.rows, other.rows)?;
        check_dim("matrix sum cols", self.cols, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: add(&self.data, &other.data),
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: scale(&self.data, s),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let t = tol * self.max_abs().max(1.0);
        (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= t))
    }

    /// Average with the transpose; removes rounding asymmetry.
    pub fn symmetrized(&self) -> Self {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        s
    }

    /// Place `block` with its top-left corner at `(r0, c0)`.
    pub(crate) fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set(r0 + i, c0 + j, block.get(i, j));
            }
        }
    }

    /// `[self other]`
    pub fn hstack(&self, other: &DenseMatrix) -> Result<Self> {
        check_dim("horizontal stack rows", self.rows, other.rows)?;
        let mut out = Self::zeros(self.rows, self.cols + other.cols);
        out.set_block(0, 0, self);
        out.set_block(0, self.cols, other);
        Ok(out)
    }
}

/// Symmetric positive semidefinite operator, validated at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdOperator {
    matrix: DenseMatrix,
}

impl PsdOperator {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotPsd(format!(
                "operator must be square, got {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        if !matrix.is_symmetric(PSD_TOL) {
            return Err(Error::NotPsd("operator is not symmetric".into()));
        }
        let matrix = matrix.symmetrized();
        check_psd(&matrix)?;
        Ok(Self { matrix })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: DenseMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DenseMatrix::identity(n),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn side(&self) -> usize {
        self.matrix.rows
    }

    pub fn apply(&self, v: &[f64]) -> Vector {
        self.matrix.matvec(v)
    }

    /// `⟨Qv, w⟩`
    pub fn inner(&self, v: &[f64], w: &[f64]) -> f64 {
        dot(&self.matrix.matvec(v), w)
    }
}

/// `‖v‖²_Q = ⟨Qv, v⟩`, with rounding-level negatives clamped to zero.
pub fn seminorm_sq(q: &PsdOperator, v: &[f64]) -> Result<f64> {
    check_dim("seminorm argument", q.side(), v.len())?;
    let val = q.inner(v, v);
    let guard = PSD_TOL * (1.0 + q.matrix.max_abs() * dot(v, v));
    if val < 0.0 && val >= -guard {
        Ok(0.0)
    } else {
        Ok(val)
    }
}

/// Pivoted semidefinite Cholesky probe. Succeeds iff the symmetric matrix is
/// PSD up to `PSD_TOL` scaled by its largest diagonal entry.
pub fn check_psd(s: &DenseMatrix) -> Result<()> {
    let n = s.rows;
    let tol = PSD_TOL * s.diag().iter().fold(1.0_f64, |m, d| m.max(d.abs()));
    let mut w = s.clone();
    let mut active: Vec<usize> = (0..n).collect();
    while !active.is_empty() {
        let (pos, &piv) = active
            .iter()
            .enumerate()
            .max_by(|a, b| w.get(*a.1, *a.1).total_cmp(&w.get(*b.1, *b.1)))
            .expect("nonempty");
        let d = w.get(piv, piv);
        if d < -tol {
            return Err(Error::NotPsd(format!("negative pivot {d:e}")));
        }
        if d <= tol {
            // Remaining Schur complement must vanish for a PSD matrix.
            for &i in &active {
                for &j in &active {
                    if w.get(i, j).abs() > tol {
                        return Err(Error::NotPsd(format!(
                            "indefinite Schur complement entry {:e}",
                            w.get(i, j)
                        )));
                    }
                }
            }
            return Ok(());
        }
        active.swap_remove(pos);
        for &i in &active {
            let li = w.get(i, piv) / d;
            if li == 0.0 {
                continue;
            }
            for &j in &active {
                let v = w.get(i, j) - li * w.get(piv, j);
                w.set(i, j, v);
            }
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(k: &DenseMatrix) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::NotPositiveDefinite(format!(
                "system matrix must be square, got {}x{}",
                k.rows, k.cols
            )));
        }
        let n = k.rows;
        let scale = k.diag().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = k.get(j, j);
            for p in 0..j {
                d -= l[j * n + p] * l[j * n + p];
            }
            if !(d > PSD_TOL * 1e-3 * scale.max(f64::MIN_POSITIVE)) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(format!(
                    "pivot {d:e} at column {j}"
                )));
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = k.get(i, j);
                for p in 0..j {
                    s -= l[i * n + p] * l[j * n + p];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vector {
        debug_assert_eq!(rhs.len(), self.n);
        let n = self.n;
        let mut u = rhs.to_vec();
        for i in 0..n {
            let mut s = u[i];
            for p in 0..i {
                s -= self.l[i * n + p] * u[p];
            }
            u[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = u[i];
            for p in i + 1..n {
                s -= self.l[p * n + i] * u[p];
            }
            u[i] = s / self.l[i * n + i];
        }
        u
    }
}

/// Solve `K u = rhs` for symmetric positive definite `K`.
pub fn solve_spd(k: &DenseMatrix, rhs: &[f64]) -> Result<Vector> {
    check_dim("SPD solve right-hand side", k.rows, rhs.len())?;
    let chol = Cholesky::factor(k)?;
    let mut u = chol.solve(rhs);
    // one step of iterative refinement
    let r = sub(rhs, &k.matvec(&u));
    axpy(&mut u, 1.0, &chol.solve(&r));
    Ok(u)
}

/// Spectral decomposition of a symmetric matrix by cyclic Jacobi rotations.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Eigenvalues, unordered.
    pub values: Vector,
    /// Eigenvectors stored as columns, row-major `n x n`.
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn new(s: &DenseMatrix) -> Result<Self> {
        if !s.is_symmetric(PSD_TOL) {
            return Err(Error::Config("eigendecomposition needs a symmetric matrix".into()));
        }
        let n = s.rows;
        let mut a = s.symmetrized();
        let mut v = DenseMatrix::identity(n);
        let total: f64 = a.data.iter().map(|x| x * x).sum();
        const MAX_SWEEPS: usize = 100;
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a.get(i, j) * a.get(i, j))
                .sum();
            if off <= 1e-30 * total || off == 0.0 {
                return Ok(Self {
                    values: a.diag(),
                    vectors: v,
                });
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - sn * akq);
                        a.set(k, q, sn * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - sn * aqk);
                        a.set(q, k, sn * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - sn * vkq);
                        v.set(k, q, sn * vkp + c * vkq);
                    }
                }
            }
        }
        Err(Error::IterationCap {
            context: "Jacobi eigensolver".into(),
            cap: MAX_SWEEPS,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_abs_value(&self) -> f64 {
        max_abs(&self.values)
    }

    /// Indices of eigenvalues with magnitude above `rel_tol * max|λ|`.
    pub fn range_indices(&self, rel_tol: f64) -> Vec<usize> {
        let cut = rel_tol * self.max_abs_value();
        (0..self.dim()).filter(|&i| self.values[i].abs() > cut).collect()
    }

    /// Eigenvector `i` as an owned vector.
    pub fn vector(&self, i: usize) -> Vector {
        (0..self.dim()).map(|r| self.vectors.get(r, i)).collect()
    }

    /// Coordinates `Vᵀ r`.
    pub fn coords(&self, r: &[f64]) -> Vector {
        self.vectors.tmatvec(r)
    }
}

/// Largest eigenvalue of `AᵀA` (i.e. `‖A‖²`) by power iteration from a
/// deterministic start.
pub fn spectral_norm_sq(a: &DenseMatrix) -> Result<f64> {
    const CAP: usize = 1_000_000;
    let n = a.cols;
    let mut v: Vector = (0..n)
        .map(|i| 1.0 + 0.25 * ((i * 7919 % 13) as f64) / 13.0)
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0_f64;
    for _ in 0..CAP {
        let w = a.tmatvec(&a.matvec(&v));
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        let rq = dot(&v, &w);
        let resid = norm(&sub(&w, &scale(&v, rq)));
        if resid <= 1e-12 * rq || (rq - lambda).abs() <= 1e-15 * rq {
            return Ok(rq.max(lambda));
        }
        lambda = rq;
        v = scale(&w, 1.0 / nw);
    }
    Err(Error::IterationCap {
        context: "power iteration".into(),
        cap: CAP,
    })
}
