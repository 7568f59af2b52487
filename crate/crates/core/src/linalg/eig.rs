//! Eigendecomposition of small dense real matrices.
//!
//! Orthogonal Hessenberg reduction followed by Francis double-shift QR
//! iteration and back-substitution for the eigenvectors. The iteration is the
//! classic EISPACK `orthes`/`hqr2` pair, restricted to the unbalanced case.

use std::cmp::Ordering;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use super::matrix::{CMatrix, Matrix};
use super::TOLERANCES;
use crate::error::{KaeError, Result};

/// How an eigenvalue relates to the rest of the spectrum of a real matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    Real,
    /// One half of a complex-conjugate pair; `partner` holds the conjugate.
    Conjugate { partner: usize },
}

/// Eigenvalues with right and left eigenvectors of a real square matrix.
///
/// Eigenvalues are ordered by descending modulus, ties broken by descending
/// real part and then descending imaginary part. Conjugate pairs are adjacent
/// with the positive-imaginary member first and are stored as exact
/// conjugates, vectors included. Right eigenvectors have unit norm; left
/// eigenvectors are scaled so that `u_jᴴ v_j = 1`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<Complex64>,
    right: CMatrix,
    right_inverse: CMatrix,
    pairing: Vec<Pairing>,
    condition: f64,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.norm()).collect()
    }

    /// Matrix `V` with the right eigenvectors as columns.
    pub fn right_vectors(&self) -> &CMatrix {
        &self.right
    }

    /// `V⁻¹`; its rows are the conjugated left eigenvectors.
    pub fn right_inverse(&self) -> &CMatrix {
        &self.right_inverse
    }

    pub fn right_vector(&self, j: usize) -> Vec<Complex64> {
        self.right.column(j)
    }

    /// Left eigenvector `u_j`, satisfying `u_jᴴ U = λ_j u_jᴴ`.
    pub fn left_vector(&self, j: usize) -> Vec<Complex64> {
        (0..self.dim()).map(|k| self.right_inverse[(j, k)].conj()).collect()
    }

    /// Matrix with the left eigenvectors as columns.
    pub fn left_vectors(&self) -> CMatrix {
        let cols: Vec<_> = (0..self.dim()).map(|j| self.left_vector(j)).collect();
        CMatrix::from_columns(&cols)
    }

    pub fn pairing(&self) -> &[Pairing] {
        &self.pairing
    }

    /// `‖V‖₁ ‖V⁻¹‖₁`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Smallest distance between two eigenvalues, infinite for `n = 1`.
    pub fn min_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for i in 0..self.dim() {
            for j in i + 1..self.dim() {
                gap = gap.min((self.eigenvalues[i] - self.eigenvalues[j]).norm());
            }
        }
        gap
    }

    /// Checks that `values` could replace the eigenvalues without breaking
    /// conjugate symmetry.
    pub fn check_pairing(&self, values: &[Complex64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(KaeError::Dimension(format!(
                "expected {} eigenvalues, got {}",
                self.dim(),
                values.len()
            )));
        }
        let tol = TOLERANCES.pairing_rel;
        for (j, p) in self.pairing.iter().enumerate() {
            let v = values[j];
            let scale = v.norm().max(1.0);
            match *p {
                Pairing::Real if v.im.abs() > tol * scale => {
                    return Err(KaeError::Pairing(format!(
                        "real eigenvalue {j} replaced by complex value {v}"
                    )));
                }
                Pairing::Conjugate { partner } if (values[partner] - v.conj()).norm() > tol * scale => {
                    return Err(KaeError::Pairing(format!(
                        "eigenvalues {j} and {partner} are not conjugate: {v} vs {}",
                        values[partner]
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Real part of `V Λ̃ V⁻¹` for a conjugate-symmetric replacement spectrum.
    pub fn reconstruct_real(&self, values: &[Complex64]) -> Result<Reconstruction> {
        self.check_pairing(values)?;
        if self.condition > TOLERANCES.max_condition {
            return Err(KaeError::IllConditioned { condition: self.condition });
        }
        let product = self.right.scale_columns(values).matmul(&self.right_inverse)?;
        let matrix = product.real_part();
        Ok(Reconstruction { max_imag: product.max_imag(), matrix })
    }

    /// Real part of `V Λ V⁻¹` with the original eigenvalues.
    pub fn reconstruct(&self) -> Result<Reconstruction> {
        self.reconstruct_real(&self.eigenvalues)
    }
}

/// A reconstructed real matrix and the largest imaginary entry that was
/// discarded.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub matrix: Matrix,
    pub max_imag: f64,
}

impl Reconstruction {
    /// Discarded imaginary part relative to the Frobenius norm of the result.
    pub fn relative_imag(&self) -> f64 {
        let norm = self.matrix.frobenius_norm();
        if norm == 0.0 {
            self.max_imag
        } else {
            self.max_imag / norm
        }
    }
}

/// Eigendecomposition with left and right eigenvectors.
pub fn eig_decompose(u: &Matrix) -> Result<SpectralDecomposition> {
    let schur = real_schur(u, true)?;
    let n = u.rows();
    let vectors = schur.vectors.expect("vectors requested");

    // Build (eigenvalue, eigenvector) candidates; pairs carry the +imag member.
    struct Entry {
        value: Complex64,
        vector: Vec<Complex64>,
        paired: bool,
    }
    let mut entries = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if schur.imag[k] == 0.0 {
            let mut v: Vec<Complex64> =
                (0..n).map(|i| Complex64::new(vectors[(i, k)], 0.0)).collect();
            normalize_real_sign(&mut v);
            entries.push(Entry { value: Complex64::new(schur.real[k], 0.0), vector: v, paired: false });
            k += 1;
        } else {
            let lambda = Complex64::new(schur.real[k], schur.imag[k].abs());
            let w: Vec<Complex64> =
                (0..n).map(|i| Complex64::new(vectors[(i, k)], vectors[(i, k + 1)])).collect();
            let wc: Vec<Complex64> = w.iter().map(|z| z.conj()).collect();
            let v = if residual(u, lambda, &w) <= residual(u, lambda, &wc) { w } else { wc };
            entries.push(Entry { value: lambda, vector: v, paired: true });
            k += 2;
        }
    }

    for e in &mut entries {
        let norm = e.vector.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            e.vector.iter_mut().for_each(|z| *z /= norm);
        }
    }

    entries.sort_by(|a, b| compare_eigenvalues(a.value, b.value));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut columns = Vec::with_capacity(n);
    let mut pairing = Vec::with_capacity(n);
    for e in entries {
        if e.paired {
            let j = eigenvalues.len();
            eigenvalues.push(e.value);
            eigenvalues.push(e.value.conj());
            let conjugate: Vec<Complex64> = e.vector.iter().map(|z| z.conj()).collect();
            columns.push(e.vector);
            columns.push(conjugate);
            pairing.push(Pairing::Conjugate { partner: j + 1 });
            pairing.push(Pairing::Conjugate { partner: j });
        } else {
            eigenvalues.push(e.value);
            columns.push(e.vector);
            pairing.push(Pairing::Real);
        }
    }

    let right = CMatrix::from_columns(&columns);
    let right_inverse = right
        .inverse()
        .ok_or(KaeError::IllConditioned { condition: f64::INFINITY })?;
    let condition = right.norm_one() * right_inverse.norm_one();
    Ok(SpectralDecomposition { eigenvalues, right, right_inverse, pairing, condition })
}

/// Eigenvalues only, in the same order as [`eig_decompose`].
pub fn eigenvalues(u: &Matrix) -> Result<Vec<Complex64>> {
    let schur = real_schur(u, false)?;
    let mut values: Vec<Complex64> = schur
        .real
        .iter()
        .zip(&schur.imag)
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();
    // Make conjugate partners bit-exact before sorting.
    let mut k = 0;
    while k < values.len() {
        if values[k].im != 0.0 {
            let v = Complex64::new(values[k].re, values[k].im.abs());
            values[k] = v;
            values[k + 1] = v.conj();
            k += 2;
        } else {
            k += 1;
        }
    }
    values.sort_by(|a, b| compare_eigenvalues(*a, *b));
    Ok(values)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(u: &Matrix) -> Result<f64> {
    Ok(eigenvalues(u)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Descending modulus, then descending real part, then descending imaginary part.
pub fn compare_eigenvalues(a: Complex64, b: Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

fn residual(u: &Matrix, lambda: Complex64, v: &[Complex64]) -> f64 {
    let n = u.rows();
    (0..n)
        .map(|i| {
            let uv: Complex64 = (0..n).map(|k| v[k] * u[(i, k)]).sum();
            (uv - lambda * v[i]).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Flips a real vector so its largest-magnitude entry is positive.
fn normalize_real_sign(v: &mut [Complex64]) {
    let lead = v
        .iter()
        .copied()
        .max_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
        .map_or(0.0, |z| z.re);
    if lead < 0.0 {
        v.iter_mut().for_each(|z| *z = -*z);
    }
}

struct Schur {
    real: Vec<f64>,
    imag: Vec<f64>,
    vectors: Option<Matrix>,
}

/// Square grid addressed with signed indices, matching the loop structure of
/// the reference algorithm.
struct Grid {
    n: usize,
    data: Vec<f64>,
}

impl Grid {
    fn from_matrix(m: &Matrix) -> Self {
        Self { n: m.rows(), data: m.as_slice().to_vec() }
    }

    fn identity(n: usize) -> Self {
        let mut g = Self { n, data: vec![0.0; n * n] };
        for i in 0..n {
            g.data[i * n + i] = 1.0;
        }
        g
    }

    fn into_matrix(self) -> Matrix {
        Matrix::from_raw(self.n, self.n, self.data)
    }
}

impl Index<(isize, isize)> for Grid {
    type Output = f64;

    fn index(&self, (i, j): (isize, isize)) -> &f64 {
        &self.data[i as usize * self.n + j as usize]
    }
}

impl IndexMut<(isize, isize)> for Grid {
    fn index_mut(&mut self, (i, j): (isize, isize)) -> &mut f64 {
        &mut self.data[i as usize * self.n + j as usize]
    }
}

fn real_schur(u: &Matrix, want_vectors: bool) -> Result<Schur> {
    if !u.is_square() {
        return Err(KaeError::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    if u.rows() == 0 {
        return Err(KaeError::Dimension("empty matrix".into()));
    }
    if !u.is_finite() {
        return Err(KaeError::Parameter("matrix has non-finite entries".into()));
    }
    let n = u.rows();
    let mut h = Grid::from_matrix(u);
    let mut v = Grid::identity(n);
    orthes(&mut h, &mut v);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    hqr2(&mut h, &mut v, &mut d, &mut e, TOLERANCES.iteration_factor * n)?;
    Ok(Schur { real: d, imag: e, vectors: want_vectors.then(|| v.into_matrix()) })
}

/// Reduction to upper Hessenberg form by Householder similarity transforms,
/// accumulating the transformations in `v`.
fn orthes(h: &mut Grid, v: &mut Grid) {
    let n = h.n as isize;
    let low = 0;
    let high = n - 1;
    let mut ort = vec![0.0; h.n];

    for m in (low + 1)..high {
        let mut scale = 0.0;
        for i in m..=high {
            scale += h[(i, m - 1)].abs();
        }
        if scale != 0.0 {
            let mut hh = 0.0;
            for i in (m..=high).rev() {
                ort[i as usize] = h[(i, m - 1)] / scale;
                hh += ort[i as usize] * ort[i as usize];
            }
            let mut g = hh.sqrt();
            if ort[m as usize] > 0.0 {
                g = -g;
            }
            hh -= ort[m as usize] * g;
            ort[m as usize] -= g;

            for j in m..n {
                let mut f = 0.0;
                for i in (m..=high).rev() {
                    f += ort[i as usize] * h[(i, j)];
                }
                f /= hh;
                for i in m..=high {
                    h[(i, j)] -= f * ort[i as usize];
                }
            }
            for i in 0..=high {
                let mut f = 0.0;
                for j in (m..=high).rev() {
                    f += ort[j as usize] * h[(i, j)];
                }
                f /= hh;
                for j in m..=high {
                    h[(i, j)] -= f * ort[j as usize];
                }
            }
            ort[m as usize] *= scale;
            h[(m, m - 1)] = scale * g;
        }
    }

    for m in ((low + 1)..high).rev() {
        if h[(m, m - 1)] != 0.0 {
            for i in (m + 1)..=high {
                ort[i as usize] = h[(i, m - 1)];
            }
            for j in m..=high {
                let mut g = 0.0;
                for i in m..=high {
                    g += ort[i as usize] * v[(i, j)];
                }
                g = (g / ort[m as usize]) / h[(m, m - 1)];
                for i in m..=high {
                    v[(i, j)] += g * ort[i as usize];
                }
            }
        }
    }
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    let q = Complex64::new(xr, xi) / Complex64::new(yr, yi);
    (q.re, q.im)
}

/// Francis double-shift QR on a Hessenberg matrix, then back-substitution
/// for eigenvectors. On return `d + i e` holds the eigenvalues; complex
/// pairs occupy consecutive slots with their vector split as (re, im)
/// across the two matching columns of `v`.
#[allow(clippy::many_single_char_names)]
fn hqr2(h: &mut Grid, v: &mut Grid, d: &mut [f64], e: &mut [f64], max_iter: usize) -> Result<()> {
    let nn = h.n as isize;
    let mut n = nn - 1;
    let low: isize = 0;
    let high = nn - 1;
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut t, mut w, mut x, mut y);
    let mut total_iter = 0usize;

    let mut norm = 0.0;
    for i in 0..nn {
        for j in (i - 1).max(0)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut iter = 0;
    while n >= low {
        // Look for a single small sub-diagonal element.
        let mut l = n;
        while l > low {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            let sub = h[(l, l - 1)].abs();
            if sub == 0.0 || sub < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One root.
            h[(n, n)] += exshift;
            d[n as usize] = h[(n, n)];
            e[n as usize] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // Two roots.
            w = h[(n, n - 1)] * h[(n - 1, n)];
            p = (h[(n - 1, n - 1)] - h[(n, n)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(n, n)] += exshift;
            h[(n - 1, n - 1)] += exshift;
            x = h[(n, n)];

            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[(n - 1) as usize] = x + z;
                d[n as usize] = d[(n - 1) as usize];
                if z != 0.0 {
                    d[n as usize] = x - w / z;
                }
                e[(n - 1) as usize] = 0.0;
                e[n as usize] = 0.0;
                x = h[(n, n - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;

                for j in (n - 1)..nn {
                    z = h[(n - 1, j)];
                    h[(n - 1, j)] = q * z + p * h[(n, j)];
                    h[(n, j)] = q * h[(n, j)] - p * z;
                }
                for i in 0..=n {
                    z = h[(i, n - 1)];
                    h[(i, n - 1)] = q * z + p * h[(i, n)];
                    h[(i, n)] = q * h[(i, n)] - p * z;
                }
                for i in low..=high {
                    z = v[(i, n - 1)];
                    v[(i, n - 1)] = q * z + p * v[(i, n)];
                    v[(i, n)] = q * v[(i, n)] - p * z;
                }
            } else {
                d[(n - 1) as usize] = x + p;
                d[n as usize] = x + p;
                e[(n - 1) as usize] = z;
                e[n as usize] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[(n, n)];
            y = 0.0;
            w = 0.0;
            if l < n {
                y = h[(n - 1, n - 1)];
                w = h[(n, n - 1)] * h[(n - 1, n)];
            }

            // Exceptional shifts.
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    h[(i, i)] -= x;
                }
                s = h[(n, n - 1)].abs() + h[(n - 1, n - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;
            total_iter += 1;
            if total_iter > max_iter {
                return Err(KaeError::Convergence { iterations: total_iter - 1 });
            }

            // Look for two consecutive small sub-diagonal elements.
            let mut m = n - 2;
            while m >= l {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in (m + 2)..=n {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n, columns m..=n.
            let mut k = m;
            while k <= n - 1 {
                let notlast = k != n - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    for i in low..=high {
                        p = x * v[(i, k)] + y * v[(i, k + 1)];
                        if notlast {
                            p += z * v[(i, k + 2)];
                            v[(i, k + 2)] -= p * r;
                        }
                        v[(i, k)] -= p;
                        v[(i, k + 1)] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }

    if norm == 0.0 {
        return Ok(());
    }

    // Back-substitute to find vectors of the upper triangular form.
    for n in (0..nn).rev() {
        p = d[n as usize];
        q = e[n as usize];

        if q == 0.0 {
            let mut l = n;
            h[(n, n)] = 1.0;
            for i in (0..n).rev() {
                w = h[(i, i)] - p;
                r = 0.0;
                for j in l..=n {
                    r += h[(i, j)] * h[(j, n)];
                }
                if e[i as usize] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        h[(i, n)] = if w != 0.0 { -r / w } else { -r / (eps * norm) };
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        q = (d[i as usize] - p) * (d[i as usize] - p) + e[i as usize] * e[i as usize];
                        t = (x * s - z * r) / q;
                        h[(i, n)] = t;
                        h[(i + 1, n)] =
                            if x.abs() > z.abs() { (-r - w * t) / x } else { (-s - y * t) / z };
                    }
                    t = h[(i, n)].abs();
                    if (eps * t) * t > 1.0 {
                        for j in i..=n {
                            h[(j, n)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            let mut l = n - 1;
            if h[(n, n - 1)].abs() > h[(n - 1, n)].abs() {
                h[(n - 1, n - 1)] = q / h[(n, n - 1)];
                h[(n - 1, n)] = -(h[(n, n)] - p) / h[(n, n - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -h[(n - 1, n)], h[(n - 1, n - 1)] - p, q);
                h[(n - 1, n - 1)] = cr;
                h[(n - 1, n)] = ci;
            }
            h[(n, n - 1)] = 0.0;
            h[(n, n)] = 1.0;
            for i in (0..=(n - 2)).rev() {
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l..=n {
                    ra += h[(i, j)] * h[(j, n - 1)];
                    sa += h[(i, j)] * h[(j, n)];
                }
                w = h[(i, i)] - p;

                if e[i as usize] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h[(i, n - 1)] = cr;
                        h[(i, n)] = ci;
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        let di = d[i as usize] - p;
                        let mut vr = di * di + e[i as usize] * e[i as usize] - q * q;
                        let vi = di * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) =
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h[(i, n - 1)] = cr;
                        h[(i, n)] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            h[(i + 1, n - 1)] = (-ra - w * h[(i, n - 1)] + q * h[(i, n)]) / x;
                            h[(i + 1, n)] = (-sa - w * h[(i, n)] - q * h[(i, n - 1)]) / x;
                        } else {
                            let (cr, ci) =
                                cdiv(-r - y * h[(i, n - 1)], -s - y * h[(i, n)], z, q);
                            h[(i + 1, n - 1)] = cr;
                            h[(i + 1, n)] = ci;
                        }
                    }
                    t = h[(i, n - 1)].abs().max(h[(i, n)].abs());
                    if (eps * t) * t > 1.0 {
                        for j in i..=n {
                            h[(j, n - 1)] /= t;
                            h[(j, n)] /= t;
                        }
                    }
                }
            }
        }
    }

    // Back-transform to eigenvectors of the original matrix.
    for j in (low..nn).rev() {
        for i in low..=high {
            z = 0.0;
            for k in low..=j.min(high) {
                z += v[(i, k)] * h[(k, j)];
            }
            v[(i, j)] = z;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rotation_has_conjugate_pair() {
        let u = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let dec = eig_decompose(&u).unwrap();
        assert!((dec.eigenvalues()[0] - c(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(dec.eigenvalues()[1], dec.eigenvalues()[0].conj());
        assert_eq!(dec.pairing(), &[Pairing::Conjugate { partner: 1 }, Pairing::Conjugate { partner: 0 }]);
    }

    #[test]
    fn diagonal_gives_standard_basis() {
        let u = Matrix::from_diag(&[3.0, -2.0]);
        let dec = eig_decompose(&u).unwrap();
        assert_eq!(dec.eigenvalues(), &[c(3.0, 0.0), c(-2.0, 0.0)]);
        let v = dec.right_vectors();
        assert_eq!(v[(0, 0)], c(1.0, 0.0));
        assert_eq!(v[(1, 0)], c(0.0, 0.0));
        assert_eq!(v[(0, 1)], c(0.0, 0.0));
        assert_eq!(v[(1, 1)], c(1.0, 0.0));
        assert_eq!(dec.pairing(), &[Pairing::Real, Pairing::Real]);
    }

    #[test]
    fn one_by_one() {
        let dec = eig_decompose(&Matrix::from_diag(&[-0.25])).unwrap();
        assert_eq!(dec.eigenvalues(), &[c(-0.25, 0.0)]);
        assert_eq!(dec.min_gap(), f64::INFINITY);
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(eig_decompose(&Matrix::zeros(2, 3)), Err(KaeError::Dimension(_))));
        assert!(matches!(spectral_radius(&Matrix::zeros(3, 2)), Err(KaeError::Dimension(_))));
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&Matrix::from_diag(&[-3.0, 1.0])).unwrap(), 3.0);
        assert_eq!(spectral_radius(&Matrix::zeros(4, 4)).unwrap(), 0.0);
        let (s, co) = (0.3f64.sin(), 0.3f64.cos());
        let rot = Matrix::from_rows(&[vec![co, -s, 0.0], vec![s, co, 0.0], vec![0.0, 0.0, -1.0]]).unwrap();
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn defective_matrix_reports_ill_conditioning() {
        let u = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        match eig_decompose(&u) {
            Err(KaeError::IllConditioned { .. }) => {}
            Ok(dec) => assert!(dec.condition() > 1e12 || dec.reconstruct().is_err()),
            Err(e) => panic!("unexpected error {e}"),
        }
        assert_eq!(spectral_radius(&u).unwrap(), 1.0);
    }

    #[test]
    fn reconstruct_modified_diagonal() {
        let dec = eig_decompose(&Matrix::from_diag(&[3.0, -2.0])).unwrap();
        let rec = dec.reconstruct_real(&[c(1.0, 0.0), c(-0.5, 0.0)]).unwrap();
        assert_eq!(rec.matrix, Matrix::from_diag(&[1.0, -0.5]));
    }

    #[test]
    fn reconstruct_scaled_rotation_to_unit_modulus() {
        let u = Matrix::from_rows(&[vec![0.0, -2.0], vec![2.0, 0.0]]).unwrap();
        let dec = eig_decompose(&u).unwrap();
        let unit: Vec<_> = dec.eigenvalues().iter().map(|l| l / l.norm()).collect();
        let rec = dec.reconstruct_real(&unit).unwrap();
        let expect = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        assert!(rec.matrix.sub(&expect).unwrap().max_abs() < 1e-14);
        assert!(rec.relative_imag() < 1e-8);
    }

    #[test]
    fn reconstruct_rejects_broken_pairing() {
        let u = Matrix::from_rows(&[vec![0.0, -2.0], vec![2.0, 0.0]]).unwrap();
        let dec = eig_decompose(&u).unwrap();
        assert!(matches!(dec.reconstruct_real(&[c(0.0, 1.0), c(0.0, 1.0)]), Err(KaeError::Pairing(_))));
        let dec = eig_decompose(&Matrix::from_diag(&[1.0, 2.0])).unwrap();
        assert!(matches!(dec.reconstruct_real(&[c(1.0, 0.5), c(2.0, 0.0)]), Err(KaeError::Pairing(_))));
    }

    #[test]
    fn repeated_decomposition_is_bit_identical() {
        let u = Matrix::from_rows(&[
            vec![0.3, -1.2, 0.5, 0.1],
            vec![0.9, 0.2, -0.4, 0.7],
            vec![-0.6, 0.8, 0.1, -0.3],
            vec![0.2, -0.1, 0.6, 0.4],
        ])
        .unwrap();
        let a = eig_decompose(&u).unwrap();
        let b = eig_decompose(&u).unwrap();
        assert_eq!(a.eigenvalues(), b.eigenvalues());
        assert_eq!(eigenvalues(&u).unwrap(), a.eigenvalues());
    }
}
