//! Dense linear-algebra helpers shared by the sampler, the moment builders and
//! the solver.
//!
//! Hermitian matrices are vectorised in Hilbert–Schmidt orthonormal
//! coordinates ("svec"): diagonal entries as-is, off-diagonal real and
//! imaginary parts scaled by √2. Under this map the Frobenius inner product
//! becomes the Euclidean dot product.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| c(v, 0.0))
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|v| v.re)
}

pub fn imag_part(m: &CMat) -> RMat {
    m.map(|v| v.im)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Symmetric eigensolver guarded against breakdowns of the implicit QR
/// iteration on highly structured input: on non-finite output the matrix
/// is conjugated by a fixed Householder reflector and solved again.
fn guarded_eigen<T: ComplexField<RealField = f64>>(m: DMatrix<T>) -> SymmetricEigen<T, Dyn> {
    let n = m.nrows();
    let finite = |e: &SymmetricEigen<T, Dyn>| {
        e.eigenvalues.iter().all(|v| v.is_finite()) && e.eigenvectors.iter().all(|z| z.clone().modulus().is_finite())
    };
    let eig = SymmetricEigen::new(m.clone());
    if finite(&eig) || n < 2 {
        return eig;
    }
    let mut last = eig;
    for attempt in 1..=4 {
        let alpha = 0.754_877_666_246_692_7 * attempt as f64;
        let u = DVector::<f64>::from_fn(n, |i, _| ((i as f64 + 1.0) * alpha).fract() - 0.5).normalize();
        let h: DMatrix<T> = (DMatrix::<f64>::identity(n, n) - &u * u.transpose() * 2.0).map(T::from_real);
        let conj = &h * &m * &h;
        let e = SymmetricEigen::new((&conj + conj.adjoint()).map(|z| z * T::from_real(0.5)));
        if finite(&e) {
            return SymmetricEigen { eigenvectors: &h * e.eigenvectors, eigenvalues: e.eigenvalues };
        }
        last = e;
    }
    log::warn!("symmetric eigensolver returned non-finite values for a {n}x{n} matrix");
    last
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = guarded_eigen(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn eigh_real(m: &RMat) -> (Vec<f64>, RMat) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = guarded_eigen(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = RMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    guarded_eigen(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn min_eigenvalue_real(m: &RMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    guarded_eigen(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Numerical rank from singular values above `tol` (absolute).
pub fn rank(m: &CMat, tol: f64) -> usize {
    m.clone()
        .singular_values()
        .iter()
        .filter(|&&s| s > tol)
        .count()
}

/// Matrix of i.i.d. standard Gaussian entries; complex entries have
/// independent real and imaginary parts of variance 1/2 each.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, real: bool) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        if real {
            c(rng.sample(StandardNormal), 0.0)
        } else {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
        }
    })
}

/// Haar-distributed `d × r` isometry (orthonormal columns) from the QR
/// factorisation of a Gaussian matrix, with the phase of `R`'s diagonal
/// absorbed so the distribution is exactly invariant.
pub fn haar_isometry<R: Rng + ?Sized>(rng: &mut R, d: usize, r: usize, real: bool) -> CMat {
    assert!(r <= d);
    if r == 0 {
        return CMat::zeros(d, 0);
    }
    let g = gaussian_matrix(rng, d, r, real);
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..r {
        let diag = rr[(j, j)];
        let n = diag.norm();
        if n > 0.0 {
            let phase = diag / c(n, 0.0);
            let mut col = q.column_mut(j);
            col *= phase;
        }
    }
    q
}

pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize, real: bool) -> CMat {
    haar_isometry(rng, d, d, real)
}

/// Normalised Gaussian vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize, real: bool) -> DVector<C64> {
    let g = gaussian_matrix(rng, d, 1, real);
    let n = g.norm();
    DVector::from_iterator(d, g.iter().map(|v| v / c(n, 0.0)))
}

/// Rank-`r` orthogonal projector onto a Haar-random subspace.
pub fn random_projector<R: Rng + ?Sized>(rng: &mut R, d: usize, r: usize, real: bool) -> CMat {
    let w = haar_isometry(rng, d, r, real);
    &w * w.adjoint()
}

/// Length of the real svec of an `n × n` real symmetric matrix.
pub fn svec_len_real(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Real symmetric matrix to HS-orthonormal coordinates (column-major upper triangle).
pub fn svec_real(m: &RMat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len_real(n));
    for j in 0..n {
        for i in 0..j {
            out.push(SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]));
        }
        out.push(m[(j, j)]);
    }
    out
}

pub fn smat_real(v: &[f64], n: usize) -> RMat {
    let mut m = RMat::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..j {
            let x = v[k] / SQRT2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
        m[(j, j)] = v[k];
        k += 1;
    }
    m
}

/// Hermitian matrix to HS-orthonormal real coordinates: the real svec of
/// the real part followed by √2·Im of the strict upper triangle.
pub fn svec_herm(m: &CMat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..j {
            out.push(SQRT2 * 0.5 * (m[(i, j)].re + m[(j, i)].re));
        }
        out.push(m[(j, j)].re);
    }
    for j in 0..n {
        for i in 0..j {
            out.push(SQRT2 * 0.5 * (m[(i, j)].im - m[(j, i)].im));
        }
    }
    out
}

pub fn smat_herm(v: &[f64], n: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..j {
            let x = v[k] / SQRT2;
            m[(i, j)].re = x;
            m[(j, i)].re = x;
            k += 1;
        }
        m[(j, j)].re = v[k];
        k += 1;
    }
    for j in 0..n {
        for i in 0..j {
            let y = v[k] / SQRT2;
            m[(i, j)].im = y;
            m[(j, i)].im = -y;
            k += 1;
        }
    }
    m
}

/// Hilbert–Schmidt inner product `tr(A† B)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Real symmetric embedding `[[Re, -Im], [Im, Re]]` of a Hermitian matrix;
/// PSD-ness and eigenvalues (doubled) are preserved.
pub fn realify_doubled(m: &CMat) -> RMat {
    let n = m.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
        }
    }
    out
}

pub fn is_effectively_real(m: &CMat, tol: f64) -> bool {
    m.iter().all(|v| v.im.abs() <= tol)
}

/// Nearest (in Frobenius norm) rank-`r` projector to a Hermitian matrix: the
/// projector onto its `r` leading eigenvectors.
pub fn top_projector(h: &CMat, r: usize) -> CMat {
    let n = h.nrows();
    let (_, vecs) = eigh(h);
    let mut p = CMat::zeros(n, n);
    for j in n - r..n {
        let v = vecs.column(j);
        p += &v * v.adjoint();
    }
    p
}

/// Real-field variant of [`top_projector`].
pub fn top_projector_real(h: &RMat, r: usize) -> RMat {
    let n = h.nrows();
    let (_, vecs) = eigh_real(h);
    let mut p = RMat::zeros(n, n);
    for j in n - r..n {
        let v = vecs.column(j);
        p += &v * v.transpose();
    }
    p
}

/// Projector onto the strictly positive eigenspace.
pub fn positive_projector(h: &CMat) -> CMat {
    let n = h.nrows();
    let (vals, vecs) = eigh(h);
    let mut p = CMat::zeros(n, n);
    for (j, &v) in vals.iter().enumerate() {
        if v > 0.0 {
            let col = vecs.column(j);
            p += &col * col.adjoint();
        }
    }
    p
}

/// Principal square root of a PSD Hermitian matrix (negative noise clipped).
pub fn psd_sqrt(h: &CMat) -> CMat {
    let n = h.nrows();
    let (vals, vecs) = eigh(h);
    let mut out = CMat::zeros(n, n);
    for (j, &v) in vals.iter().enumerate() {
        if v > 0.0 {
            let col = vecs.column(j) * c(v.sqrt(), 0.0);
            out += &col * vecs.column(j).adjoint();
        }
    }
    out
}

/// Matrix exponential of an anti-Hermitian matrix `A`, via `exp(A) = V exp(iΛ) V†`
/// where `A = i H`.
pub fn expm_skew(a: &CMat) -> CMat {
    let h = a * c(0.0, -1.0);
    let (vals, vecs) = eigh(&h);
    let n = a.nrows();
    let mut d = CMat::zeros(n, n);
    for (j, &v) in vals.iter().enumerate() {
        d[(j, j)] = c(v.cos(), v.sin());
    }
    &vecs * d * vecs.adjoint()
}
