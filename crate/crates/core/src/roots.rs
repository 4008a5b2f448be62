//! Scalar and two-dimensional root finders.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct BrentOptions {
    pub xtol: f64,
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for BrentOptions {
    fn default() -> Self {
        Self {
            xtol: 0.0,
            rtol: 4.0 * f64::EPSILON,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Brent's method on a bracket `[a, b]` with `f(a)`, `f(b)` of opposite sign.
/// Values at the endpoints may be supplied to avoid re-evaluation.
pub fn brent<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, opts: BrentOptions) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(Root {
            x: a,
            fx: fa,
            iterations: 0,
        });
    }
    if fb == 0.0 {
        return Ok(Root {
            x: b,
            fx: fb,
            iterations: 0,
        });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket(format!(
            "f({a:.6e}) = {fa:.3e} and f({b:.6e}) = {fb:.3e} have the same sign"
        )));
    }
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * opts.rtol * b.abs() + 0.5 * opts.xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(Root {
                x: b,
                fx: fb,
                iterations: it,
            });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::NonConvergence {
        what: "Brent root finder",
        iterations: opts.max_iter,
        residual: fb.abs(),
    })
}

/// Expand a bracket geometrically around a positive guess until the sign changes.
/// Returns `(a, b, f(a), f(b))`. `upper` caps the search.
pub fn bracket_positive<F>(
    mut f: F,
    guess: f64,
    factor: f64,
    upper: Option<f64>,
    max_expansions: usize,
) -> Result<(f64, f64, f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut lo = guess / factor;
    let mut hi = guess * factor;
    if let Some(u) = upper {
        if lo >= u {
            return Err(Error::Bracket(format!(
                "initial estimate {guess:.6e} already exceeds the cap {u:.6e}"
            )));
        }
        hi = hi.min(u);
    }
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    for _ in 0..max_expansions {
        if flo.signum() != fhi.signum() {
            return Ok((lo, hi, flo, fhi));
        }
        // Move towards the side where the root must lie for an increasing function.
        if flo > 0.0 {
            hi = lo;
            fhi = flo;
            lo /= factor;
            flo = f(lo)?;
        } else {
            if let Some(u) = upper {
                if hi >= u {
                    return Err(Error::Bracket(format!(
                        "no root below the cap {u:.6e} (f(cap) = {fhi:.3e})"
                    )));
                }
            }
            lo = hi;
            flo = fhi;
            hi *= factor;
            if let Some(u) = upper {
                hi = hi.min(u);
            }
            fhi = f(hi)?;
        }
    }
    if flo.signum() != fhi.signum() {
        return Ok((lo, hi, flo, fhi));
    }
    Err(Error::Bracket(format!(
        "no sign change found in [{lo:.6e}, {hi:.6e}] after {max_expansions} expansions"
    )))
}

#[derive(Clone, Copy, Debug)]
pub struct Newton2Options {
    pub ftol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for Newton2Options {
    fn default() -> Self {
        Self {
            ftol: 1e-12,
            max_iter: 60,
            fd_step: 1e-6,
        }
    }
}

/// Levenberg-Marquardt damped Newton iteration for g(x) = 0 in two unknowns
/// with a forward-difference Jacobian. Returns the point and |g| on success.
pub fn newton2<G>(mut g: G, x0: [f64; 2], opts: Newton2Options) -> Result<([f64; 2], f64)>
where
    G: FnMut([f64; 2]) -> Result<[f64; 2]>,
{
    let norm = |v: [f64; 2]| v[0].hypot(v[1]);
    let mut x = x0;
    let mut gx = g(x)?;
    let mut lambda = 1e-3;
    for _ in 0..opts.max_iter {
        let r = norm(gx);
        if r <= opts.ftol {
            return Ok((x, r));
        }
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut xp = x;
            xp[k] += opts.fd_step;
            let gp = g(xp)?;
            jac[0][k] = (gp[0] - gx[0]) / opts.fd_step;
            jac[1][k] = (gp[1] - gx[1]) / opts.fd_step;
        }
        // Normal equations (J^T J + lambda diag) dx = -J^T g.
        let jtj = [
            [
                jac[0][0] * jac[0][0] + jac[1][0] * jac[1][0],
                jac[0][0] * jac[0][1] + jac[1][0] * jac[1][1],
            ],
            [
                jac[0][1] * jac[0][0] + jac[1][1] * jac[1][0],
                jac[0][1] * jac[0][1] + jac[1][1] * jac[1][1],
            ],
        ];
        let jtg = [
            jac[0][0] * gx[0] + jac[1][0] * gx[1],
            jac[0][1] * gx[0] + jac[1][1] * gx[1],
        ];
        let mut improved = false;
        for _ in 0..12 {
            let a = jtj[0][0] * (1.0 + lambda);
            let d = jtj[1][1] * (1.0 + lambda);
            let b = jtj[0][1];
            let det = a * d - b * b;
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let dx = [(-d * jtg[0] + b * jtg[1]) / det, (b * jtg[0] - a * jtg[1]) / det];
            let xn = [x[0] + dx[0], x[1] + dx[1]];
            let gn = g(xn)?;
            if norm(gn) < r {
                x = xn;
                gx = gn;
                lambda = (lambda * 0.2).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let r = norm(gx);
    if r <= opts.ftol {
        Ok((x, r))
    } else {
        Err(Error::NonConvergence {
            what: "two-dimensional Newton solve",
            iterations: opts.max_iter,
            residual: r,
        })
    }
}
