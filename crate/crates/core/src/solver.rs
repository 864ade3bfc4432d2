//! Primal–dual interior-point solver for linear matrix inequalities with
//! linear equality constraints, plus SDPA sparse export.
//!
//! The problem is
//!
//! ```text
//! maximize  cᵀx   s.t.  F0 + Σ x_i F_i ⪰ 0,   E x = f
//! ```
//!
//! Equalities are eliminated through a null-space basis of `E`. The remaining
//! LMI is solved as the dual of a standard-form SDP with the HKM search
//! direction and Mehrotra's predictor–corrector.

use std::io::Write;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::linalg::{eigh_real, smat_real, svec_len_real, svec_real, RMat};
use crate::par::{map_range, Parallelism};

/// `F0 + Σ x_i F_i ⪰ 0` over a block-diagonal cone, in svec coordinates.
#[derive(Clone, Debug)]
pub struct LmiProblem {
    pub blocks: Vec<usize>,
    /// Concatenated svec of `F0` over blocks.
    pub constant: DVector<f64>,
    /// Column `i` is the concatenated svec of `F_i`.
    pub coeffs: DMatrix<f64>,
    /// Maximized linear objective.
    pub objective: DVector<f64>,
    /// Rows `(a, f)` meaning `a·x = f`.
    pub equalities: Vec<(DVector<f64>, f64)>,
}

impl LmiProblem {
    /// Build from dense symmetric blocks: `constant[b]`, `coeffs[i][b]`.
    pub fn from_dense(
        blocks: Vec<usize>,
        constant: &[RMat],
        coeffs: &[Vec<RMat>],
        objective: Vec<f64>,
        equalities: Vec<(Vec<f64>, f64)>,
    ) -> Self {
        let layout = BlockLayout::new(&blocks);
        let m = coeffs.len();
        let mut cm = DMatrix::zeros(layout.len, m);
        for (i, f) in coeffs.iter().enumerate() {
            cm.column_mut(i).copy_from(&layout.svec(f));
        }
        LmiProblem {
            constant: layout.svec(constant),
            blocks,
            coeffs: cm,
            objective: DVector::from_vec(objective),
            equalities: equalities.into_iter().map(|(a, f)| (DVector::from_vec(a), f)).collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.coeffs.ncols()
    }

    /// `F0 + Σ x_i F_i` as dense blocks.
    pub fn evaluate(&self, x: &DVector<f64>) -> Vec<RMat> {
        let layout = BlockLayout::new(&self.blocks);
        layout.smat(&(&self.constant + &self.coeffs * x))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

impl BlockLayout {
    pub(crate) fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut len = 0;
        for &n in sizes {
            offsets.push(len);
            len += svec_len_real(n);
        }
        BlockLayout { sizes: sizes.to_vec(), offsets, len }
    }

    fn svec(&self, mats: &[RMat]) -> DVector<f64> {
        let mut out = DVector::zeros(self.len);
        for (b, m) in mats.iter().enumerate() {
            let v = svec_real(m);
            out.rows_mut(self.offsets[b], v.len()).copy_from_slice(&v);
        }
        out
    }

    fn smat(&self, v: &DVector<f64>) -> Vec<RMat> {
        self.sizes
            .iter()
            .zip(&self.offsets)
            .map(|(&n, &o)| smat_real(v.rows(o, svec_len_real(n)).as_slice(), n))
            .collect()
    }

    fn identity(&self, scale: &[f64]) -> Vec<RMat> {
        self.sizes.iter().zip(scale).map(|(&n, &s)| RMat::identity(n, n) * s).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
    Failed,
}

impl SolveStatus {
    pub fn is_solved(self) -> bool {
        self == SolveStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Parallelism used to assemble the Schur complement.
    pub parallelism: Parallelism,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { gap_tol: 1e-8, feas_tol: 1e-8, max_iter: 200, parallelism: Parallelism::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Objective at the returned LMI point (the relaxation value).
    pub primal_value: f64,
    /// Objective of the dual certificate; an upper bound when it is feasible.
    pub dual_value: f64,
    pub gap: f64,
    /// Largest violation of positivity at the returned point.
    pub psd_residual: f64,
    /// Largest violation of the equalities at the returned point.
    pub equality_residual: f64,
    /// Relative residual of the dual certificate's linear constraints.
    pub dual_residual: f64,
    pub iterations: usize,
    pub wall_time: f64,
    #[serde(skip)]
    pub x: Vec<f64>,
}

struct Reduced {
    /// `x = x0 + Z y`.
    x0: DVector<f64>,
    z: Option<DMatrix<f64>>,
    offset: f64,
}

/// Null-space parametrisation of `E x = f`; `None` when inconsistent.
fn eliminate(problem: &LmiProblem) -> Option<Reduced> {
    let m = problem.num_vars();
    let p = problem.equalities.len();
    if p == 0 {
        return Some(Reduced { x0: DVector::zeros(m), z: None, offset: 0.0 });
    }
    let mut e = DMatrix::zeros(p, m);
    let mut f = DVector::zeros(p);
    for (k, (a, rhs)) in problem.equalities.iter().enumerate() {
        e.row_mut(k).copy_from(&a.transpose());
        f[k] = *rhs;
    }
    // QR of [Eᵀ | I]: leading columns of Q span range(Eᵀ), the rest its complement.
    let mut aug = DMatrix::zeros(m, p + m);
    aug.columns_mut(0, p).copy_from(&e.transpose());
    aug.columns_mut(p, m).fill_with_identity();
    let qr = aug.qr();
    let q = qr.q();
    let r = qr.r();
    let scale = e.amax().max(1e-300);
    let mut independent = Vec::new();
    for k in 0..p.min(m) {
        if r[(k, k)].abs() > 1e-12 * scale {
            independent.push(k);
        }
    }
    // least-norm solution via the pseudo-inverse
    let svd = e.clone().svd(true, true);
    let x0 = svd.solve(&f, 1e-12 * scale).ok()?;
    if (&e * &x0 - &f).amax() > 1e-9 * (1.0 + f.amax()) {
        return None;
    }
    let rest: Vec<usize> = (0..m).filter(|k| !independent.contains(k)).collect();
    let z = q.select_columns(&rest);
    let offset = problem.objective.dot(&x0);
    Some(Reduced { x0, z: Some(z), offset })
}

/// Solve `problem`. Never panics on numerical trouble; the status says how
/// far the returned point can be trusted.
pub fn solve_lmi(problem: &LmiProblem, cfg: &SolverConfig) -> SolveReport {
    let start = Instant::now();
    let layout = BlockLayout::new(&problem.blocks);
    let Some(red) = eliminate(problem) else {
        return SolveReport {
            status: SolveStatus::Infeasible,
            primal_value: f64::NEG_INFINITY,
            dual_value: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            psd_residual: f64::INFINITY,
            equality_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            iterations: 0,
            wall_time: start.elapsed().as_secs_f64(),
            x: Vec::new(),
        };
    };
    let c_vec = &problem.constant + &problem.coeffs * &red.x0;
    let (a_mat, b) = match &red.z {
        Some(z) => (-(&problem.coeffs * z), z.transpose() * &problem.objective),
        None => (-problem.coeffs.clone(), problem.objective.clone()),
    };
    let mut report = if a_mat.ncols() == 0 {
        trivial(&layout, &c_vec)
    } else {
        let mut rep = ipm(&layout, &c_vec, &a_mat, &b, red.offset, cfg, 1.0);
        for scale in [10.0, 0.1] {
            if !matches!(rep.status, SolveStatus::Inaccurate | SolveStatus::Failed) {
                break;
            }
            log::debug!("restarting with start scale {scale}");
            let again = ipm(&layout, &c_vec, &a_mat, &b, red.offset, cfg, scale);
            let better = match again.status {
                SolveStatus::Inaccurate => rep.status == SolveStatus::Failed,
                SolveStatus::Failed => false,
                _ => true,
            };
            if better {
                rep = SolveReport { iterations: rep.iterations + again.iterations, ..again };
            } else {
                rep.iterations += again.iterations;
            }
        }
        rep
    };
    let y = DVector::from_vec(std::mem::take(&mut report.x));
    let x = match &red.z {
        Some(z) if y.len() == z.ncols() => &red.x0 + z * &y,
        None if y.len() == problem.num_vars() => y,
        _ => red.x0.clone(),
    };
    report.primal_value += red.offset;
    report.dual_value += red.offset;
    report.gap = (report.primal_value - report.dual_value).abs() / report.primal_value.abs().max(1.0);
    report.equality_residual = problem
        .equalities
        .iter()
        .map(|(a, f)| (a.dot(&x) - f).abs())
        .fold(0.0, f64::max);
    let fx = problem.evaluate(&x);
    report.psd_residual = fx.iter().map(|m| (-min_eig(m)).max(0.0)).fold(0.0, f64::max);
    report.x = x.as_slice().to_vec();
    report.wall_time = start.elapsed().as_secs_f64();
    if report.status == SolveStatus::Optimal && report.gap > cfg.gap_tol {
        report.status = SolveStatus::Inaccurate;
    }
    report
}

fn min_eig(m: &RMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    eigh_real(m).0[0]
}

fn trivial(layout: &BlockLayout, c: &DVector<f64>) -> SolveReport {
    let feasible = layout.smat(c).iter().all(|m| min_eig(m) >= -1e-9);
    SolveReport {
        status: if feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible },
        primal_value: if feasible { 0.0 } else { f64::NEG_INFINITY },
        dual_value: if feasible { 0.0 } else { f64::NEG_INFINITY },
        gap: 0.0,
        psd_residual: 0.0,
        equality_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        wall_time: 0.0,
        x: Vec::new(),
    }
}

fn inner(a: &[RMat], b: &[RMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn sym(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

/// Largest step `α ≤ 1` keeping `X + α ΔX ⪰ 0` (per block, scaled by `γ`).
fn max_step(x: &[RMat], dx: &[RMat]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        let Some(ch) = xb.clone().cholesky() else { return 0.0 };
        let l = ch.l();
        let linv = match l.clone().try_inverse() {
            Some(v) => v,
            None => return 0.0,
        };
        let w = sym(&(&linv * db * linv.transpose()));
        let lmin = min_eig(&w);
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}

/// `sym(Aᵀ B)`, given `Aᵀ`, for a product known to be symmetric up to rounding; only the
/// upper panels are formed.
fn symmetric_product(at: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    const PANEL: usize = 128;
    let m = at.nrows();
    let mut out = DMatrix::zeros(m, m);
    let mut j0 = 0;
    while j0 < m {
        let w = PANEL.min(m - j0);
        let j1 = j0 + w;
        let upper = at.rows(0, j1) * b.columns(j0, w);
        out.view_mut((0, j0), (j1, w)).copy_from(&upper);
        j0 = j1;
    }
    for j in 0..m {
        for i in 0..j {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            let v = if i >= (j / PANEL) * PANEL { v } else { out[(i, j)] };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn ipm(
    layout: &BlockLayout,
    c_vec: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    offset: f64,
    cfg: &SolverConfig,
    start_scale: f64,
) -> SolveReport {
    let m = a.ncols();
    let c = layout.smat(c_vec);
    let n_total: usize = layout.sizes.iter().sum();
    let norm_b = b.norm();
    let norm_c = c_vec.norm();

    // starting point
    let a_cols_norm: Vec<f64> = (0..m).map(|i| a.column(i).norm()).collect();
    let max_a = a_cols_norm.iter().cloned().fold(0.0, f64::max);
    let mut xi = Vec::new();
    let mut eta = Vec::new();
    for &n in &layout.sizes {
        let nf = n as f64;
        let mut s = 0.0f64;
        for i in 0..m {
            s = s.max((1.0 + b[i].abs()) / (1.0 + a_cols_norm[i]));
        }
        xi.push(start_scale * 10f64.max(nf.sqrt()).max(nf * s));
        eta.push(start_scale * 10f64.max(nf.sqrt()).max(norm_c.max(max_a)));
    }
    let mut x = layout.identity(&xi);
    let mut s = layout.identity(&eta);
    let mut y = DVector::<f64>::zeros(m);

    let at = a.transpose();
    let apply_a = |mats: &[RMat]| -> DVector<f64> { &at * layout.svec(mats) };
    let apply_at = |v: &DVector<f64>| -> Vec<RMat> { layout.smat(&(a * v)) };
    // A Aᵀ, used to pull iterates back onto A(X) = b
    let gram = (&at * a).cholesky();

    let mut status = SolveStatus::Failed;
    let mut iters = 0;
    let mut best: Option<Best> = None;
    let mut stalls = 0;
    let mut last_best = 0;

    for it in 0..cfg.max_iter {
        iters = it + 1;
        let ax = apply_a(&x);
        let rp = b - &ax;
        let aty = apply_at(&y);
        let rd: Vec<RMat> = c.iter().zip(&s).zip(&aty).map(|((cb, sb), ab)| cb - sb - ab).collect();
        let pobj = inner(&c, &x);
        let dobj = b.dot(&y);
        let gap = (pobj - dobj).abs() / (dobj + offset).abs().max(1.0);
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = layout.svec(&rd).norm() / (1.0 + norm_c);
        log::trace!("it {it}: p {pobj:.10} d {dobj:.10} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}");

        let score = gap.max(pinf).max(dinf);
        if best.as_ref().is_none_or(|bst| score <= bst.score) {
            if best.as_ref().is_none_or(|bst| score < 0.5 * bst.score) {
                last_best = it;
            }
            best = Some(Best { score, x: x.clone(), y: y.clone(), dobj, dinf });
        }
        if it >= last_best + 12 {
            log::debug!("no progress since iteration {last_best}");
            break;
        }
        if gap <= cfg.gap_tol && pinf <= cfg.feas_tol && dinf <= cfg.feas_tol {
            status = SolveStatus::Optimal;
            break;
        }
        // certificates of infeasibility / unboundedness
        let xnorm: f64 = x.iter().map(|m| m.norm()).sum();
        if pobj < 0.0 && xnorm > 1e8 {
            let scaled = ax.norm() / (-pobj);
            if scaled < 1e-8 && dinf < 1e-6 {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        if y.norm() > 1e10 && dobj > 1e8 && pinf > 1e-3 {
            status = SolveStatus::Unbounded;
            break;
        }

        let mu = inner(&x, &s) / n_total as f64;
        let Some(schol) = s.iter().map(|sb| sb.clone().cholesky()).collect::<Option<Vec<_>>>() else { break };
        let sinv: Vec<RMat> = schol.iter().map(|ch| ch.inverse()).collect();

        // Schur complement M_ij = ⟨A_i, X A_j S⁻¹⟩
        let cols = map_range(cfg.parallelism, m, |j| {
            let aj = layout.smat(&a.column(j).into_owned());
            let prod: Vec<RMat> = aj.iter().zip(&x).zip(&sinv).map(|((ab, xb), sb)| sym(&(xb * ab * sb))).collect();
            layout.svec(&prod)
        });
        let mut bmat = DMatrix::zeros(layout.len, m);
        for (j, col) in cols.into_iter().enumerate() {
            bmat.column_mut(j).copy_from(&col);
        }
        let schur = symmetric_product(&at, &bmat);
        drop(bmat);
        let chol = {
            let mut reg = 0.0;
            let diag_max = schur.diagonal().amax().max(1e-300);
            loop {
                let mut mm = schur.clone();
                if reg > 0.0 {
                    for i in 0..m {
                        mm[(i, i)] += reg;
                    }
                }
                if let Some(ch) = mm.cholesky() {
                    break Some(ch);
                }
                reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
                if reg > 1e-6 * diag_max {
                    break None;
                }
            }
        };
        let Some(chol) = chol else { break };

        let xrs: Vec<RMat> = x.iter().zip(&rd).zip(&sinv).map(|((xb, rb), sb)| xb * rb * sb).collect();
        let a_xrs = apply_a(&xrs);

        // Schur operator applied through the blocks, for iterative refinement
        let apply_schur = |v: &DVector<f64>| -> DVector<f64> {
            let t = apply_at(v);
            let prod: Vec<RMat> = t.iter().zip(&x).zip(&sinv).map(|((tb, xb), sb)| sym(&(xb * tb * sb))).collect();
            apply_a(&prod)
        };
        let direction = |rc: &[RMat]| -> (DVector<f64>, Vec<RMat>, Vec<RMat>) {
            let rhs = &rp - apply_a(rc) + &a_xrs;
            // refine against the exact operator; the factorisation may be shifted
            let mut dy = chol.solve(&rhs);
            for _ in 0..2 {
                let r = &rhs - apply_schur(&dy);
                if r.norm() <= 1e-15 * rhs.norm() {
                    break;
                }
                dy += chol.solve(&r);
            }
            let atdy = apply_at(&dy);
            let ds: Vec<RMat> = rd.iter().zip(&atdy).map(|(r, t)| r - t).collect();
            let dx: Vec<RMat> = rc
                .iter()
                .zip(&x)
                .zip(&ds)
                .zip(&schol)
                .map(|(((r, xb), dsb), ch)| r - sym(&ch.solve(&(dsb * xb))))
                .collect();
            (dy, dx, ds)
        };

        // predictor
        let rc_aff: Vec<RMat> = x.iter().map(|xb| -xb).collect();
        let (_, dx_a, ds_a) = direction(&rc_aff);
        let ap = max_step(&x, &dx_a).min(1.0);
        let ad = max_step(&s, &ds_a).min(1.0);
        let x_aff: Vec<RMat> = x.iter().zip(&dx_a).map(|(xb, d)| xb + d * ap).collect();
        let s_aff: Vec<RMat> = s.iter().zip(&ds_a).map(|(sb, d)| sb + d * ad).collect();
        let mu_aff = inner(&x_aff, &s_aff) / n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rc: Vec<RMat> = x
            .iter()
            .zip(&sinv)
            .zip(dx_a.iter().zip(&ds_a))
            .map(|((xb, sb), (dxb, dsb))| sb * (sigma * mu) - xb - sym(&(dxb * dsb * sb)))
            .collect();
        let (dy, dx, ds) = direction(&rc);
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * max_step(&x, &dx)).min(1.0);
        let ad = (gamma * max_step(&s, &ds)).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls > 3 {
                break;
            }
        } else {
            stalls = 0;
        }
        for (xb, d) in x.iter_mut().zip(&dx) {
            *xb += d * ap;
            *xb = sym(xb);
        }
        if let Some(g) = &gram {
            x = restore(&x, b, g, &apply_a, &apply_at);
        }
        for (sb, d) in s.iter_mut().zip(&ds) {
            *sb += d * ad;
            *sb = sym(sb);
        }
        y += &dy * ad;
    }

    let pobj = inner(&c, &x);
    let dobj = b.dot(&y);
    let rp = b - apply_a(&x);
    let mut pinf_final = rp.norm() / (1.0 + norm_b);
    let mut y_out = y;
    let (mut p_out, mut d_out, mut dinf_out) = (pobj, dobj, 0.0);
    if status != SolveStatus::Optimal {
        pinf_final = 0.0;
        if let Some(bst) = best {
            // one last pull of the best certificate onto A(X) = b
            let bx = match &gram {
                Some(g) => restore(&bst.x, b, g, &apply_a, &apply_at),
                None => bst.x.clone(),
            };
            let bp = inner(&c, &bx);
            let bpinf = (b - apply_a(&bx)).norm() / (1.0 + norm_b);
            let bgap = (bp - bst.dobj).abs() / (bst.dobj + offset).abs().max(1.0);
            y_out = bst.y;
            p_out = bp;
            d_out = bst.dobj;
            dinf_out = bst.dinf;
            let score = bgap.max(bpinf).max(bst.dinf);
            if bgap <= cfg.gap_tol && bpinf <= cfg.feas_tol && bst.dinf <= cfg.feas_tol {
                log::debug!("best iterate meets tolerances after restoration");
                status = SolveStatus::Optimal;
                pinf_final = bpinf;
            } else if matches!(status, SolveStatus::Failed) {
                status = if score.min(bst.score) <= 1e-5 { SolveStatus::Inaccurate } else { SolveStatus::Failed };
            }
        }
    } else {
        let aty = apply_at(&y_out);
        let rd: Vec<RMat> = c.iter().zip(&s).zip(&aty).map(|((cb, sb), ab)| cb - sb - ab).collect();
        dinf_out = layout.svec(&rd).norm() / (1.0 + norm_c);
    }
    SolveReport {
        status,
        primal_value: d_out,
        dual_value: p_out,
        gap: 0.0,
        psd_residual: 0.0,
        equality_residual: 0.0,
        dual_residual: dinf_out.max(pinf_final),
        iterations: iters,
        wall_time: 0.0,
        x: y_out.as_slice().to_vec(),
    }
}

struct Best {
    score: f64,
    x: Vec<RMat>,
    y: DVector<f64>,
    dobj: f64,
    dinf: f64,
}

/// Move `x` towards `A(X) = b` along the least-norm correction, as far as it stays
/// positive definite.
fn restore(
    x: &[RMat],
    b: &DVector<f64>,
    gram: &Cholesky<f64, Dyn>,
    apply_a: &impl Fn(&[RMat]) -> DVector<f64>,
    apply_at: &impl Fn(&DVector<f64>) -> Vec<RMat>,
) -> Vec<RMat> {
    let miss = b - apply_a(x);
    let fix = apply_at(&gram.solve(&miss));
    let mut t = 1.0;
    while t > 1e-3 {
        let fixed: Vec<RMat> = x.iter().zip(&fix).map(|(xb, f)| sym(&(xb + f * t))).collect();
        if fixed.iter().all(|xb| xb.clone().cholesky().is_some()) {
            return fixed;
        }
        t *= 0.5;
    }
    x.to_vec()
}

/// Write `problem` in SDPA sparse format (`.dat-s`).
///
/// SDPA minimises `Σ c_i x_i` subject to `Σ x_i F_i − F_0 ⪰ 0`, so the
/// objective is negated and `F_0` is the negated constant term. Equalities
/// become pairs of diagonal entries in a trailing LP block.
pub fn write_sdpa<W: Write>(problem: &LmiProblem, mut w: W) -> std::io::Result<()> {
    let layout = BlockLayout::new(&problem.blocks);
    let m = problem.num_vars();
    let lp = 2 * problem.equalities.len();
    writeln!(w, "\"dimbound LMI export: maximize c.x s.t. F0 + sum x_i F_i >= 0\"")?;
    writeln!(w, "{m}")?;
    writeln!(w, "{}", problem.blocks.len() + usize::from(lp > 0))?;
    let mut sizes: Vec<String> = problem.blocks.iter().map(|n| n.to_string()).collect();
    if lp > 0 {
        sizes.push(format!("-{lp}"));
    }
    writeln!(w, "{}", sizes.join(" "))?;
    let cs: Vec<String> = problem.objective.iter().map(|v| fmt(-v)).collect();
    writeln!(w, "{}", cs.join(" "))?;
    let emit = |w: &mut W, mat: usize, v: &DVector<f64>, sign: f64| -> std::io::Result<()> {
        for (blk, m) in layout.smat(v).iter().enumerate() {
            for j in 0..m.ncols() {
                for i in 0..=j {
                    let val = sign * m[(i, j)];
                    if val != 0.0 {
                        writeln!(w, "{mat} {} {} {} {}", blk + 1, i + 1, j + 1, fmt(val))?;
                    }
                }
            }
        }
        Ok(())
    };
    emit(&mut w, 0, &problem.constant, -1.0)?;
    let lp_block = problem.blocks.len() + 1;
    for (k, (_, f)) in problem.equalities.iter().enumerate() {
        if *f != 0.0 {
            writeln!(w, "0 {lp_block} {} {} {}", 2 * k + 1, 2 * k + 1, fmt(*f))?;
            writeln!(w, "0 {lp_block} {} {} {}", 2 * k + 2, 2 * k + 2, fmt(-f))?;
        }
    }
    for i in 0..m {
        emit(&mut w, i + 1, &problem.coeffs.column(i).into_owned(), 1.0)?;
        for (k, (a, _)) in problem.equalities.iter().enumerate() {
            if a[i] != 0.0 {
                writeln!(w, "{} {lp_block} {} {} {}", i + 1, 2 * k + 1, 2 * k + 1, fmt(a[i]))?;
                writeln!(w, "{} {lp_block} {} {} {}", i + 1, 2 * k + 2, 2 * k + 2, fmt(-a[i]))?;
            }
        }
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_by_one(c: f64) -> RMat {
        RMat::from_element(1, 1, c)
    }

    #[test]
    fn single_variable() {
        // maximize c over {c·1 ⪰ 0, c = 1}
        let p = LmiProblem::from_dense(vec![1], &[one_by_one(0.0)], &[vec![one_by_one(1.0)]], vec![1.0], vec![(vec![1.0], 1.0)]);
        let r = solve_lmi(&p, &SolverConfig::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_by_two_off_diagonal() {
        // maximize y_X over [[1, y_X], [y_X, 1]] ⪰ 0 → 1
        let ne = RMat::identity(2, 2);
        let nx = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = LmiProblem::from_dense(
            vec![2],
            &[RMat::zeros(2, 2)],
            &[vec![ne], vec![nx]],
            vec![0.0, 1.0],
            vec![(vec![1.0, 0.0], 1.0)],
        );
        let r = solve_lmi(&p, &SolverConfig::default());
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert!((r.primal_value - 1.0).abs() < 1e-7);
        assert!(r.dual_value >= r.primal_value - 1e-9);
    }

    #[test]
    fn max_eigenvalue_problem() {
        // minimize t s.t. t I − A ⪰ 0  ⇔  maximize −t
        let a = RMat::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let p = LmiProblem::from_dense(vec![3], &[-a.clone()], &[vec![RMat::identity(3, 3)]], vec![-1.0], vec![]);
        let r = solve_lmi(&p, &SolverConfig::default());
        let lmax = eigh_real(&a).0[2];
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal_value + lmax).abs() < 1e-7);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let p = LmiProblem::from_dense(
            vec![1],
            &[one_by_one(0.0)],
            &[vec![one_by_one(1.0)]],
            vec![1.0],
            vec![(vec![0.0], 1.0)],
        );
        assert_eq!(solve_lmi(&p, &SolverConfig::default()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn lmi_infeasible() {
        // x ⪰ 0 block and −1 − x ⪰ 0 block: empty
        let p = LmiProblem::from_dense(
            vec![1, 1],
            &[one_by_one(0.0), one_by_one(-1.0)],
            &[vec![one_by_one(1.0), one_by_one(-1.0)]],
            vec![1.0],
            vec![],
        );
        let r = solve_lmi(&p, &SolverConfig::default());
        assert!(matches!(r.status, SolveStatus::Infeasible | SolveStatus::Failed), "{r:?}");
    }

    #[test]
    fn sdpa_header() {
        let p = LmiProblem::from_dense(vec![1], &[one_by_one(0.0)], &[vec![one_by_one(1.0)]], vec![1.0], vec![(vec![1.0], 1.0)]);
        let mut out = Vec::new();
        write_sdpa(&p, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "1");
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3], "1 -2");
    }
}
