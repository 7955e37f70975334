//! Small numerical helpers: golden-section search, dense solves and a
//! Levenberg–Marquardt loop for fits with a handful of parameters.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimises a unimodal `f` on `[a, b]` until the bracket is narrower than `tol`.
/// Returns the midpoint of the final bracket and its value.
pub fn golden_section<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> Option<[f64; P]> {
    for col in 0..P {
        let pivot = (col..P).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < f64::MIN_POSITIVE || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..P {
            let factor = a[row][col] / a[col][col];
            for k in col..P {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; P];
    for row in (0..P).rev() {
        let tail: f64 = (row + 1..P).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

pub fn invert<const P: usize>(a: [[f64; P]; P]) -> Option<[[f64; P]; P]> {
    let mut inv = [[0.0; P]; P];
    for col in 0..P {
        let mut e = [0.0; P];
        e[col] = 1.0;
        let x = solve(a, e)?;
        for row in 0..P {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

#[derive(Debug, Clone, Copy)]
pub struct LmFit<const P: usize> {
    pub params: [f64; P],
    /// Linearised 1σ errors, s·√diag((JᵀJ)⁻¹) with s² = SSR/(n − P).
    pub errors: [f64; P],
    pub ssr: f64,
    pub iterations: usize,
}

/// Levenberg–Marquardt on residuals returned with their Jacobian rows.
pub fn levenberg_marquardt<const P: usize, F>(model: F, init: [f64; P], max_iter: usize) -> Result<LmFit<P>>
where
    F: Fn(&[f64; P]) -> (Vec<f64>, Vec<[f64; P]>),
{
    let ssr = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let normal = |jac: &[[f64; P]], res: &[f64]| {
        let mut jtj = [[0.0; P]; P];
        let mut jtr = [0.0; P];
        for (row, &r) in jac.iter().zip(res) {
            for i in 0..P {
                jtr[i] += row[i] * r;
                for j in 0..P {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        (jtj, jtr)
    };

    let mut p = init;
    let (mut res, mut jac) = model(&p);
    let n = res.len();
    if n <= P {
        return Err(Error::FitFailed(format!("{n} residuals for {P} parameters")));
    }
    let mut cost = ssr(&res);
    if !cost.is_finite() {
        return Err(Error::FitFailed("non-finite residuals at the initial guess".into()));
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (jtj, jtr) = normal(&jac, &res);
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for i in 0..P {
                damped[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            let neg: [f64; P] = std::array::from_fn(|i| -jtr[i]);
            let Some(step) = solve(damped, neg) else {
                lambda *= 10.0;
                continue;
            };
            let trial: [f64; P] = std::array::from_fn(|i| p[i] + step[i]);
            let (r_new, j_new) = model(&trial);
            let c_new = ssr(&r_new);
            if c_new.is_finite() && c_new <= cost {
                let small = (0..P).all(|i| step[i].abs() <= 1e-12 * (p[i].abs() + 1e-12));
                let converged = cost - c_new <= 1e-15 * cost || small;
                p = trial;
                res = r_new;
                jac = j_new;
                cost = c_new;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if converged {
                    iterations = max_iter;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::FitFailed("parameters diverged".into()));
    }
    let (jtj, _) = normal(&jac, &res);
    let cov = invert(jtj).ok_or_else(|| Error::FitFailed("singular normal matrix".into()))?;
    let s2 = cost / (n - P) as f64;
    let errors = std::array::from_fn(|i| (s2 * cov[i][i]).max(0.0).sqrt());
    Ok(LmFit { params: p, errors, ssr: cost, iterations })
}
