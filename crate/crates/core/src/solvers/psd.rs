//! PSD feasibility by Dykstra alternating projections, with facial reduction along
//! declared null relations and separator certificates for infeasibility.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::conditions::{ConeKind, ConeProgram};
use crate::error::{Error, Result};

use super::verdict::{matrix_rows, Certificate, Residuals, Status, Verdict, Witness};

/// Largest reduced matrix side handled (the per-iteration eigendecomposition dominates).
pub const MAX_PSD_SIDE: usize = 96;

#[derive(Clone, Debug)]
pub struct PsdOptions {
    /// Equality residual accepted for a FEASIBLE verdict.
    pub tol: f64,
    pub max_iters: usize,
    /// Iterations between infeasibility certificate attempts.
    pub cert_every: usize,
}

impl Default for PsdOptions {
    fn default() -> Self {
        PsdOptions {
            tol: 1e-7,
            max_iters: 200_000,
            cert_every: 50,
        }
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let k = m.nrows();
    let mut v = DVector::zeros(k * (k + 1) / 2);
    let mut idx = 0;
    for i in 0..k {
        v[idx] = m[(i, i)];
        idx += 1;
        for j in (i + 1)..k {
            v[idx] = SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]);
            idx += 1;
        }
    }
    v
}

fn smat(v: &DVector<f64>, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    let mut idx = 0;
    for i in 0..k {
        m[(i, i)] = v[idx];
        idx += 1;
        for j in (i + 1)..k {
            let x = v[idx] / SQRT2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            idx += 1;
        }
    }
    m
}

fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut d = eig.eigenvalues.clone();
    d.iter_mut().for_each(|l| *l = l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Orthonormal basis (columns) of the complement of the span of the null relations.
pub fn face_basis(n: usize, relations: &[Vec<(usize, f64)>]) -> DMatrix<f64> {
    if relations.is_empty() {
        return DMatrix::identity(n, n);
    }
    let mut r = DMatrix::<f64>::zeros(n, n);
    for rel in relations {
        let mut v = DVector::<f64>::zeros(n);
        for &(i, c) in rel {
            v[i] += c;
        }
        r += &v * v.transpose();
    }
    let eig = SymmetricEigen::new(r);
    let lmax: f64 = eig.eigenvalues.max();
    let lmax = lmax.max(1e-300);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-10 * lmax).collect();
    let mut b = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        b.set_column(c, &eig.eigenvectors.column(i));
    }
    b
}

/// Coefficient matrix of an equality in full coordinates.
fn full_matrix(p: &ConeProgram, k: usize) -> DMatrix<f64> {
    p.coefficient_matrix(&p.equalities[k])
}

/// Outcome of checking a separator `y`.
#[derive(Clone, Debug)]
pub struct SeparatorCheck {
    pub valid: bool,
    pub gap: f64,
    pub min_eigenvalue: f64,
    pub trace_bound: f64,
}

/// Checks that `y` certifies infeasibility, recomputing everything in full coordinates.
pub fn verify_separator(p: &ConeProgram, y: &[f64]) -> SeparatorCheck {
    let n = p.n;
    let b = face_basis(n, &p.null_relations);
    let mut s = DMatrix::zeros(n, n);
    let mut snorm = 1e-300f64;
    // accumulate in reverse order, independently of the reduced-space arithmetic
    for (k, &yk) in y.iter().enumerate().rev() {
        if yk != 0.0 {
            let a = full_matrix(p, k);
            snorm = snorm.max(yk.abs() * a.amax());
            s += a * yk;
        }
    }
    let sr = b.transpose() * &s * &b;
    let gap: f64 = p.equalities.iter().zip(y).rev().map(|(e, yk)| e.rhs * yk).sum();
    let scale: f64 = 1.0 + p.equalities.iter().zip(y).map(|(e, yk)| (e.rhs * yk).abs()).sum::<f64>();
    let margin = 1e-9 * scale;
    if sr.nrows() == 0 {
        return SeparatorCheck {
            valid: gap < -margin,
            gap,
            min_eigenvalue: 0.0,
            trace_bound: 0.0,
        };
    }
    let eig = SymmetricEigen::new(sr.clone());
    let lmin = eig.eigenvalues.min();
    let delta = (-lmin).max(0.0);
    if delta <= 1e-14 * snorm {
        return SeparatorCheck {
            valid: gap < -margin,
            gap,
            min_eigenvalue: lmin,
            trace_bound: 0.0,
        };
    }
    if p.trace_anchor.is_empty() {
        return SeparatorCheck {
            valid: false,
            gap,
            min_eigenvalue: lmin,
            trace_bound: f64::INFINITY,
        };
    }
    let mut t = DMatrix::zeros(n, n);
    let mut tval = 0.0;
    for &k in &p.trace_anchor {
        t += full_matrix(p, k);
        tval += p.equalities[k].rhs;
    }
    let tr = b.transpose() * &t * &b;
    let teig = SymmetricEigen::new(tr);
    let tmax = teig.eigenvalues.max();
    let range: Vec<usize> = (0..teig.eigenvalues.len())
        .filter(|&i| teig.eigenvalues[i] > 1e-10 * tmax)
        .collect();
    let tau = range.iter().map(|&i| teig.eigenvalues[i]).fold(f64::INFINITY, f64::min);
    // negative eigenvectors must lie in the range of the anchor
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < -1e-14 * snorm {
            let u = eig.eigenvectors.column(i);
            let mut inside = 0.0;
            for &r in &range {
                let c = teig.eigenvectors.column(r).dot(&u);
                inside += c * c;
            }
            if 1.0 - inside > 1e-8 {
                return SeparatorCheck {
                    valid: false,
                    gap,
                    min_eigenvalue: lmin,
                    trace_bound: f64::INFINITY,
                };
            }
        }
    }
    let trace_bound = tval / tau;
    SeparatorCheck {
        valid: gap < -delta * trace_bound - margin,
        gap,
        min_eigenvalue: lmin,
        trace_bound,
    }
}

struct Reduced {
    b: DMatrix<f64>,
    k: usize,
    /// Constraint rows in svec coordinates (m x D).
    a: DMatrix<f64>,
    rhs: DVector<f64>,
    /// Orthonormal basis of the row space (r x D), and `U Λ^{-1/2}` (m x r).
    q: DMatrix<f64>,
    back: DMatrix<f64>,
    /// Coordinates of the affine set along `q`.
    c: DVector<f64>,
}

fn reduce(p: &ConeProgram) -> Reduced {
    let n = p.n;
    let b = face_basis(n, &p.null_relations);
    let k = b.ncols();
    let d = k * (k + 1) / 2;
    let m = p.equalities.len();
    let mut a = DMatrix::zeros(m, d);
    for (row, e) in p.equalities.iter().enumerate() {
        let full = p.coefficient_matrix(e);
        let red = b.transpose() * full * &b;
        a.set_row(row, &svec(&red).transpose());
    }
    let rhs = DVector::from_iterator(m, p.equalities.iter().map(|e| e.rhs));
    let gram = &a * a.transpose();
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.max().max(1e-300);
    let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > 1e-12 * lmax).collect();
    let mut back = DMatrix::zeros(m, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        back.set_column(c, &(eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt()));
    }
    let q = back.transpose() * &a;
    let c = back.transpose() * &rhs;
    Reduced {
        b,
        k,
        a,
        rhs,
        q,
        back,
        c,
    }
}

impl Reduced {
    fn project_affine(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = &self.q * x - &self.c;
        x - self.q.transpose() * t
    }

    fn multipliers(&self, n: &DVector<f64>) -> Vec<f64> {
        (&self.back * (&self.q * n)).iter().copied().collect()
    }

    fn full(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        &self.b * h * self.b.transpose()
    }
}

/// Decides a PSD program at the given residual tolerance.
pub fn psd_solve(p: &ConeProgram, tol: f64, max_iters: usize) -> Result<Verdict> {
    psd_solve_with(
        p,
        &PsdOptions {
            tol,
            max_iters,
            ..PsdOptions::default()
        },
    )
}

fn try_certificate(p: &ConeProgram, red: &Reduced, dir: &DVector<f64>) -> Option<(Vec<f64>, SeparatorCheck)> {
    if dir.norm() == 0.0 || !dir.iter().all(|v| v.is_finite()) {
        return None;
    }
    let y = red.multipliers(&(dir / dir.norm()));
    let check = verify_separator(p, &y);
    check.valid.then_some((y, check))
}

fn infeasible(p: &ConeProgram, y: Vec<f64>, check: SeparatorCheck, iters: usize) -> Verdict {
    let mut v = Verdict::new(p.condition, Status::Infeasible);
    v.certificate = Some(Certificate::PsdSeparator {
        multipliers: y,
        gap: check.gap,
        min_eigenvalue: check.min_eigenvalue,
        trace_bound: check.trace_bound,
    });
    v.iterations = iters;
    v
}

pub fn psd_solve_with(p: &ConeProgram, opts: &PsdOptions) -> Result<Verdict> {
    if p.kind != ConeKind::Psd {
        return Err(Error::Parameter("psd_solve needs a PSD program".into()));
    }
    let red = reduce(p);
    let k = red.k;
    if k > MAX_PSD_SIDE {
        return Ok(Verdict::undecided(
            p.condition,
            format!("reduced matrix side {k} exceeds the PSD solver limit {MAX_PSD_SIDE}"),
        ));
    }
    let x_p = red.q.transpose() * &red.c;
    let lin_res = &red.a * &x_p - &red.rhs;
    let bscale = 1.0 + red.rhs.amax();
    if lin_res.amax() > 1e-9 * bscale {
        // the equalities alone are inconsistent: y = -(b - A x_p) has Aᵀy = 0 and yᵀb < 0
        let y: Vec<f64> = lin_res.iter().copied().collect();
        let check = verify_separator(p, &y);
        if check.valid {
            let mut v = Verdict::new(p.condition, Status::Infeasible);
            v.certificate = Some(Certificate::InconsistentEqualities {
                multipliers: y,
                gap: check.gap,
            });
            return Ok(v);
        }
    }
    if k == 0 {
        let g = DMatrix::zeros(p.n, p.n);
        let res = p.max_residual_matrix(&g);
        let mut v = if res <= opts.tol {
            Verdict::new(p.condition, Status::Feasible)
        } else {
            Verdict::undecided(p.condition, "empty face")
        };
        v.residuals.equality = Some(res);
        v.witness = Some(Witness::Matrix { rows: matrix_rows(&g) });
        return Ok(v);
    }

    let mut x = x_p;
    let mut corr = DVector::zeros(x.len());
    let mut iters = 0;
    let mut best_res = f64::INFINITY;
    let check_every = 5;
    while iters < opts.max_iters {
        iters += 1;
        let z = &x + &corr;
        let y = svec(&project_psd(&smat(&z, k)));
        corr = z - &y;
        x = red.project_affine(&y);
        if iters % check_every == 0 || iters == opts.max_iters {
            let res = (&red.a * &y - &red.rhs).amax();
            best_res = best_res.min(res);
            if res <= 0.5 * opts.tol {
                let g = red.full(&smat(&y, k));
                let full_res = p.max_residual_matrix(&g);
                if full_res <= opts.tol {
                    return Ok(feasible(p, g, full_res, iters));
                }
            }
            // x itself may already be PSD
            let hx = smat(&x, k);
            let lmin = SymmetricEigen::new(hx.clone()).eigenvalues.min();
            if lmin >= 0.0 {
                let g = red.full(&hx);
                let full_res = p.max_residual_matrix(&g);
                if full_res <= opts.tol {
                    return Ok(feasible(p, g, full_res, iters));
                }
            }
        }
        if iters % opts.cert_every == 0 || iters == opts.max_iters {
            let hx = smat(&x, k);
            let d1 = svec(&project_psd(&hx)) - &x;
            let d2 = &y - &x;
            for dir in [&d1, &d2] {
                if let Some((ymult, check)) = try_certificate(p, &red, dir) {
                    return Ok(infeasible(p, ymult, check, iters));
                }
            }
        }
    }
    let mut v = Verdict::undecided(
        p.condition,
        format!("no conclusion after {iters} iterations (best residual {best_res:e})"),
    );
    v.iterations = iters;
    v.residuals.equality = Some(best_res);
    Ok(v)
}

fn feasible(p: &ConeProgram, g: DMatrix<f64>, res: f64, iters: usize) -> Verdict {
    let mut v = Verdict::new(p.condition, Status::Feasible);
    let lmin = SymmetricEigen::new(g.clone()).eigenvalues.min();
    v.residuals = Residuals {
        equality: Some(res),
        min_eigenvalue: Some(lmin),
        inequality: None,
    };
    v.witness = Some(Witness::Matrix { rows: matrix_rows(&g) });
    v.iterations = iters;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{Condition, Equality};

    fn prog(n: usize, eqs: Vec<Equality>) -> ConeProgram {
        ConeProgram {
            condition: Condition::Spjqm,
            kind: ConeKind::Psd,
            n,
            free: false,
            equalities: eqs,
            lazy: None,
            null_relations: vec![],
            trace_anchor: vec![],
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    fn eq(coeffs: &[(usize, f64)], rhs: f64) -> Equality {
        Equality {
            coeffs: coeffs.to_vec(),
            rhs,
            tag: "test",
        }
    }

    #[test]
    fn svec_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        assert_eq!(smat(&svec(&m), 3), m);
        assert!((svec(&m).norm_squared() - m.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn correlation_matrix_feasible() {
        // diag = 1, X_01 = 0.5
        let p = prog(2, vec![eq(&[(0, 1.0)], 1.0), eq(&[(2, 1.0)], 1.0), eq(&[(1, 1.0)], 0.5)]);
        let v = psd_solve(&p, 1e-7, 10_000).unwrap();
        assert_eq!(v.status, Status::Feasible);
    }

    #[test]
    fn correlation_out_of_range_infeasible() {
        // diag = 1, X_01 = 1.5; anchor the diagonal
        let mut p = prog(2, vec![eq(&[(0, 1.0)], 1.0), eq(&[(2, 1.0)], 1.0), eq(&[(1, 1.0)], 1.5)]);
        p.trace_anchor = vec![0, 1];
        let v = psd_solve(&p, 1e-7, 10_000).unwrap();
        assert_eq!(v.status, Status::Infeasible, "{v:?}");
    }

    #[test]
    fn negative_diagonal_infeasible_without_anchor() {
        let p = prog(2, vec![eq(&[(0, 1.0)], -1.0)]);
        let v = psd_solve(&p, 1e-7, 10_000).unwrap();
        assert_eq!(v.status, Status::Infeasible);
    }

    #[test]
    fn inconsistent_linear_system() {
        let p = prog(2, vec![eq(&[(0, 1.0)], 1.0), eq(&[(0, 2.0)], 3.0)]);
        let v = psd_solve(&p, 1e-7, 10_000).unwrap();
        assert_eq!(v.status, Status::Infeasible);
        assert!(matches!(v.certificate, Some(Certificate::InconsistentEqualities { .. })));
    }
}
