//! Orthonormal basis of the span of sampled moment matrices and the support
//! isometry of their average.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, eigh_real, real_part, smat_herm, smat_real, svec_herm, svec_real, to_complex, CMat};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    /// Relative residual below which a sample is rejected.
    pub eps: f64,
    /// Consecutive rejections that end the accumulation.
    pub confirmations: usize,
    /// Relative eigenvalue cutoff for the support of `T`.
    pub support_cutoff: f64,
    /// Work in real symmetric coordinates.
    pub real: bool,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig { eps: 1e-7, confirmations: 5, support_cutoff: 1e-9, real: false }
    }
}

#[derive(Clone, Debug)]
pub struct BasisResult {
    /// Side length of the moment matrices.
    pub size: usize,
    pub real: bool,
    /// Orthonormal basis elements in svec coordinates.
    pub coords: Vec<Vec<f64>>,
    /// Average of every processed sample.
    pub t: CMat,
    /// Rows span the support of `t`.
    pub v: CMat,
    pub samples_used: usize,
    pub eps: f64,
}

impl BasisResult {
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn gamma(&self, j: usize) -> CMat {
        if self.real {
            to_complex(&smat_real(&self.coords[j], self.size))
        } else {
            smat_herm(&self.coords[j], self.size)
        }
    }

    pub fn gammas(&self) -> Vec<CMat> {
        (0..self.n()).map(|j| self.gamma(j)).collect()
    }

    /// Relative residual of `m` after projection onto the span.
    pub fn residual(&self, m: &CMat) -> f64 {
        let mut v = to_coords(m, self.real);
        let norm0 = norm(&v);
        if norm0 == 0.0 {
            return 0.0;
        }
        for _ in 0..2 {
            for q in &self.coords {
                let d = dot(q, &v);
                axpy(-d, q, &mut v);
            }
        }
        norm(&v) / norm0
    }

    /// Persist as `<stem>.json` (header) and `<stem>.bin` (little-endian f64).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let header = CacheHeader {
            version: CACHE_VERSION,
            size: self.size,
            real: self.real,
            n: self.n(),
            coord_len: self.coords.first().map(|c| c.len()).unwrap_or(0),
            support: self.v.nrows(),
            samples_used: self.samples_used,
            eps: self.eps,
        };
        if let Some(dir) = stem.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(stem.with_extension("json"), serde_json::to_vec_pretty(&header)?)?;
        let mut buf = Vec::new();
        let mut put = |x: f64| buf.extend_from_slice(&x.to_le_bytes());
        for c in &self.coords {
            c.iter().for_each(|&x| put(x));
        }
        for z in self.t.iter().chain(self.v.iter()) {
            put(z.re);
            put(z.im);
        }
        fs::File::create(stem.with_extension("bin"))?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Option<BasisResult>> {
        let hpath = stem.with_extension("json");
        let bpath = stem.with_extension("bin");
        if !hpath.exists() || !bpath.exists() {
            return Ok(None);
        }
        let header: CacheHeader = serde_json::from_slice(&fs::read(hpath)?)?;
        if header.version != CACHE_VERSION {
            return Ok(None);
        }
        let mut raw = Vec::new();
        fs::File::open(bpath)?.read_to_end(&mut raw)?;
        let vals: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let n2 = header.size * header.size;
        let expected = header.n * header.coord_len + 2 * n2 + 2 * header.support * header.size;
        if vals.len() != expected {
            return Ok(None);
        }
        let (cpart, rest) = vals.split_at(header.n * header.coord_len);
        let coords = cpart.chunks(header.coord_len.max(1)).map(|c| c.to_vec()).take(header.n).collect();
        let complex = |s: &[f64], r: usize, c: usize| {
            CMat::from_iterator(r, c, s.chunks_exact(2).map(|p| crate::linalg::c(p[0], p[1])))
        };
        let t = complex(&rest[..2 * n2], header.size, header.size);
        let v = complex(&rest[2 * n2..], header.support, header.size);
        Ok(Some(BasisResult {
            size: header.size,
            real: header.real,
            coords,
            t,
            v,
            samples_used: header.samples_used,
            eps: header.eps,
        }))
    }
}

const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    version: u32,
    size: usize,
    real: bool,
    n: usize,
    coord_len: usize,
    support: usize,
    samples_used: usize,
    eps: f64,
}

fn to_coords(m: &CMat, real: bool) -> Vec<f64> {
    if real {
        svec_real(&real_part(m))
    } else {
        svec_herm(m)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Gram–Schmidt accumulation over a stream of Hermitian matrices.
///
/// Each sample is projected twice against the accepted basis (blocked, so
/// the bulk of the work is matrix–matrix products), then against the
/// vectors accepted earlier in the same block. A sample whose residual is at
/// most `eps` times its norm is rejected; `confirmations` consecutive
/// rejections end the run.
pub fn accumulate_basis<I>(stream: I, cfg: &BasisConfig) -> Result<BasisResult>
where
    I: IntoIterator<Item = CMat>,
{
    let mut stream = stream.into_iter();
    let mut q: Vec<f64> = Vec::new();
    let mut n_acc = 0usize;
    let mut len = 0usize;
    let mut size = 0usize;
    let mut t_sum: Option<CMat> = None;
    let mut processed = 0usize;
    let mut streak = 0usize;

    loop {
        let block = (n_acc / 8 + 8).min(128);
        let samples: Vec<CMat> = stream.by_ref().take(block).collect();
        if samples.is_empty() {
            let partial = finish(q, n_acc, len, size, t_sum, processed, cfg)?;
            return Err(Error::StreamExhausted { drawn: processed, accepted: n_acc, partial: Box::new(partial) });
        }
        if len == 0 {
            size = samples[0].nrows();
            len = to_coords(&samples[0], cfg.real).len();
        }
        let nb = samples.len();
        let mut b = DMatrix::<f64>::zeros(len, nb);
        let mut norms0 = Vec::with_capacity(nb);
        for (j, s) in samples.iter().enumerate() {
            if s.nrows() != size {
                return Err(Error::DimensionMismatch("samples of different sizes".into()));
            }
            let v = to_coords(s, cfg.real);
            norms0.push(norm(&v));
            b.column_mut(j).copy_from_slice(&v);
        }
        if n_acc > 0 {
            let qm = DMatrixView::from_slice(&q[..n_acc * len], len, n_acc);
            for _ in 0..2 {
                let s = qm.transpose() * &b;
                b.gemm(-1.0, &qm, &s, 1.0);
            }
        }
        let block_start = n_acc;
        for (j, sample) in samples.into_iter().enumerate() {
            let mut v: Vec<f64> = b.column(j).iter().copied().collect();
            for _ in 0..2 {
                for k in block_start..n_acc {
                    let qk = &q[k * len..(k + 1) * len];
                    let d = dot(qk, &v);
                    axpy(-d, qk, &mut v);
                }
            }
            processed += 1;
            match &mut t_sum {
                Some(t) => *t += &sample,
                None => t_sum = Some(sample),
            }
            let res = norm(&v);
            if res <= cfg.eps * norms0[j] || norms0[j] == 0.0 {
                streak += 1;
                if streak >= cfg.confirmations {
                    return finish(q, n_acc, len, size, t_sum, processed, cfg);
                }
            } else {
                streak = 0;
                q.extend(v.iter().map(|x| x / res));
                n_acc += 1;
            }
        }
    }
}

fn finish(
    q: Vec<f64>,
    n_acc: usize,
    len: usize,
    size: usize,
    t_sum: Option<CMat>,
    processed: usize,
    cfg: &BasisConfig,
) -> Result<BasisResult> {
    let coords = (0..n_acc).map(|k| q[k * len..(k + 1) * len].to_vec()).collect();
    let mut t = t_sum.unwrap_or_else(|| CMat::zeros(size, size));
    if processed > 0 {
        t /= crate::linalg::c(processed as f64, 0.0);
    }
    if cfg.real {
        t = to_complex(&real_part(&t));
    }
    let v = if processed > 0 { support_isometry(&t, cfg.support_cutoff)? } else { CMat::zeros(0, size) };
    Ok(BasisResult { size, real: cfg.real, coords, t, v, samples_used: processed, eps: cfg.eps })
}

/// Rows are the eigenvectors of `t` whose eigenvalues exceed
/// `cutoff · λ_max`. Real input gives a real isometry.
pub fn support_isometry(t: &CMat, cutoff: f64) -> Result<CMat> {
    let is_real = t.iter().all(|z| z.im == 0.0);
    let (vals, vecs) = if is_real {
        let (v, m) = eigh_real(&real_part(t));
        (v, to_complex(&m))
    } else {
        eigh(t)
    };
    let lmax = vals.iter().cloned().fold(0.0, f64::max);
    if !(lmax > 1e-300) {
        return Err(Error::Degenerate("averaged moment matrix vanishes".into()));
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > cutoff * lmax).collect();
    let n = t.nrows();
    let mut v = CMat::zeros(keep.len(), n);
    for (r, &i) in keep.iter().enumerate() {
        for c in 0..n {
            v[(r, c)] = vecs[(c, i)].conj();
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, gaussian_matrix, hermitian_part, min_eigenvalue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_stream() {
        let m = CMat::from_fn(3, 3, |i, j| c((i + j) as f64, 0.0));
        let cfg = BasisConfig { confirmations: 3, real: true, ..Default::default() };
        let r = accumulate_basis(std::iter::repeat(m), &cfg).unwrap();
        assert_eq!(r.n(), 1);
        assert_eq!(r.samples_used, 4);
    }

    #[test]
    fn exhausted_stream_carries_partial() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let samples: Vec<CMat> = (0..3).map(|_| hermitian_part(&gaussian_matrix(&mut rng, 3, 3, false))).collect();
        match accumulate_basis(samples, &BasisConfig::default()) {
            Err(Error::StreamExhausted { accepted, partial, .. }) => {
                assert_eq!(accepted, 3);
                assert_eq!(partial.n(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_hermitian_span_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<CMat> = (0..60).map(|_| hermitian_part(&gaussian_matrix(&mut rng, 4, 4, false))).collect();
        let r = accumulate_basis(samples, &BasisConfig::default()).unwrap();
        assert_eq!(r.n(), 16);
        for i in 0..r.n() {
            for j in 0..r.n() {
                let ip = dot(&r.coords[i], &r.coords[j]);
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        let g = r.gammas();
        let hs = (g[0].adjoint() * &g[0]).trace().re;
        assert!((hs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn support_of_diagonal() {
        let t = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        let v = support_isometry(&t, 1e-9).unwrap();
        assert_eq!(v.nrows(), 1);
        assert!((v[(0, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(support_isometry(&CMat::zeros(2, 2), 1e-9).is_err());
    }

    #[test]
    fn projected_average_is_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<CMat> = (0..40)
            .map(|_| {
                let g = gaussian_matrix(&mut rng, 5, 2, false);
                &g * g.adjoint()
            })
            .collect();
        let r = accumulate_basis(samples, &BasisConfig::default()).unwrap();
        let p = &r.v * &r.t * r.v.adjoint();
        assert!(min_eigenvalue(&p) > 1e-10 * r.t.norm());
    }

    #[test]
    fn cache_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<CMat> = (0..30).map(|_| hermitian_part(&gaussian_matrix(&mut rng, 3, 3, false))).collect();
        let r = accumulate_basis(samples, &BasisConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("b");
        r.save(&stem).unwrap();
        let back = BasisResult::load(&stem).unwrap().unwrap();
        assert_eq!(back.coords, r.coords);
        assert_eq!(back.t, r.t);
        assert_eq!(back.v, r.v);
    }
}
