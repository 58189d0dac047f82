use nalgebra::{DMatrix, DVector};

/// Value, gradient and Hessian of an objective to be maximized.
pub(crate) struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub(crate) struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Parameters are clamped to `[-cap, cap]` after every step.
    pub cap: Option<f64>,
}

pub(crate) struct NewtonResult {
    pub x: DVector<f64>,
    pub eval: Eval,
    pub iterations: usize,
    pub converged: bool,
    pub hit_cap: bool,
}

fn clamp(x: &mut DVector<f64>, cap: Option<f64>) -> bool {
    let mut hit = false;
    if let Some(c) = cap {
        for v in x.iter_mut() {
            if v.abs() > c {
                *v = v.signum() * c;
                hit = true;
            }
        }
    }
    hit
}

/// Damped Newton ascent with step halving. A Hessian that is not negative
/// definite is shifted until it is.
pub(crate) fn maximize<F>(f: F, x0: DVector<f64>, opts: &NewtonOptions) -> NewtonResult
where
    F: Fn(&DVector<f64>) -> Eval,
{
    let mut x = x0;
    let mut cur = f(&x);
    let mut hit_cap = false;
    for it in 0..opts.max_iter {
        if cur.grad.norm() <= opts.tol {
            return NewtonResult {
                x,
                eval: cur,
                iterations: it,
                converged: true,
                hit_cap,
            };
        }
        let neg_h = -&cur.hess;
        let n = x.len();
        let mut shift = 0.0;
        let dir = loop {
            let m = &neg_h + DMatrix::identity(n, n) * shift;
            if let Some(ch) = m.cholesky() {
                break ch.solve(&cur.grad);
            }
            shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
            if shift > 1e12 {
                break cur.grad.clone();
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = &x + &dir * t;
            let capped = clamp(&mut cand, opts.cap);
            let e = f(&cand);
            if e.value.is_finite() && e.value >= cur.value - 1e-12 * cur.value.abs().max(1.0) {
                hit_cap |= capped;
                x = cand;
                cur = e;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            let converged = cur.grad.norm() <= opts.tol;
            return NewtonResult {
                x,
                eval: cur,
                iterations: it + 1,
                converged,
                hit_cap,
            };
        }
    }
    let converged = cur.grad.norm() <= opts.tol;
    NewtonResult {
        x,
        eval: cur,
        iterations: opts.max_iter,
        converged,
        hit_cap,
    }
}
