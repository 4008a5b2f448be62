//! Banded motional operators in a truncated Fock basis.

use nalgebra::{DMatrix, SymmetricEigen};

/// Diagonal `offset` of a square matrix: entries (r, r + offset) for all valid r,
/// stored from the first valid row.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub offset: isize,
    pub values: Vec<f64>,
}

impl Band {
    pub fn first_row(&self) -> usize {
        (-self.offset).max(0) as usize
    }
}

/// Position operator X = a + a^dagger (without eta), as its two bands.
pub fn position_bands(dim: usize) -> Vec<Band> {
    let up: Vec<f64> = (0..dim.saturating_sub(1)).map(|j| ((j + 1) as f64).sqrt()).collect();
    vec![
        Band {
            offset: -1,
            values: up.clone(),
        },
        Band { offset: 1, values: up },
    ]
}

/// Operators entering the drive for one mode of dimension `dim`.
#[derive(Clone, Debug)]
pub struct ModeOps {
    pub dim: usize,
    pub eta: f64,
    /// cos(eta X) - 1, even offsets only.
    pub cos_minus_id: Vec<Band>,
    /// sin(eta X), odd offsets only.
    pub sin: Vec<Band>,
    pub x: Vec<Band>,
}

/// Dense eta X in the truncated basis.
pub fn eta_x_dense(dim: usize, eta: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim.saturating_sub(1) {
        let v = eta * ((j + 1) as f64).sqrt();
        m[(j, j + 1)] = v;
        m[(j + 1, j)] = v;
    }
    m
}

/// f(A) for symmetric A via eigendecomposition.
pub fn matrix_function(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    v * d * v.transpose()
}

fn bands_of(m: &DMatrix<f64>, parity: usize, drop_below: f64) -> Vec<Band> {
    let n = m.nrows() as isize;
    let mut out = Vec::new();
    for o in -(n - 1)..n {
        if o.unsigned_abs() % 2 != parity {
            continue;
        }
        let r0 = (-o).max(0);
        let r1 = n.min(n - o);
        let values: Vec<f64> = (r0..r1).map(|r| m[(r as usize, (r + o) as usize)]).collect();
        if values.iter().any(|v| v.abs() > drop_below) {
            out.push(Band { offset: o, values });
        }
    }
    out
}

impl ModeOps {
    pub fn new(dim: usize, eta: f64) -> Self {
        let x = eta_x_dense(dim, eta);
        let c = matrix_function(&x, |l| l.cos()) - DMatrix::identity(dim, dim);
        let s = matrix_function(&x, |l| l.sin());
        // Eigendecomposition leaves round-off of order 1e-16 on every diagonal;
        // diagonals entirely below this cut carry no physical content.
        let cut = 1e-15;
        Self {
            dim,
            eta,
            cos_minus_id: bands_of(&c, 0, cut),
            sin: bands_of(&s, 1, cut),
            x: position_bands(dim),
        }
    }

    pub fn dense(&self, bands: &[Band]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for b in bands {
            let r0 = b.first_row();
            for (k, v) in b.values.iter().enumerate() {
                let r = r0 + k;
                m[(r, (r as isize + b.offset) as usize)] = *v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    // Generalized Laguerre polynomial L_n^(a)(x) by recurrence.
    fn laguerre(n: usize, a: f64, x: f64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let (mut l0, mut l1) = (1.0, 1.0 + a - x);
        for k in 1..n {
            let k = k as f64;
            let l2 = ((2.0 * k + 1.0 + a - x) * l1 - (k + a) * l0) / (k + 1.0);
            l0 = l1;
            l1 = l2;
        }
        l1
    }

    /// <m| cos(eta X) |n> from displacement-operator matrix elements, m >= n.
    fn cos_element(m: usize, n: usize, eta: f64) -> f64 {
        // D(i eta) element: sqrt(n!/m!) (i eta)^(m-n) e^{-eta^2/2} L_n^(m-n)(eta^2);
        // cos(eta X) = (D(i eta) + D(-i eta)) / 2 keeps the real part.
        let k = m - n;
        let mag = (factorial(n) / factorial(m)).sqrt()
            * eta.powi(k as i32)
            * (-eta * eta / 2.0).exp()
            * laguerre(n, k as f64, eta * eta);
        match k % 4 {
            0 => mag,
            2 => -mag,
            _ => 0.0,
        }
    }

    #[test]
    fn cosine_matches_displacement_elements() {
        let eta = 0.3;
        let ops = ModeOps::new(40, eta);
        let c = ops.dense(&ops.cos_minus_id) + DMatrix::identity(40, 40);
        for m in 0..10 {
            for n in 0..=m {
                let e = cos_element(m, n, eta);
                assert!((c[(m, n)] - e).abs() < 1e-13, "({m},{n}) {} vs {e}", c[(m, n)]);
                assert!((c[(n, m)] - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn shifted_cosine_identity() {
        let eta = 0.07;
        let dim = 18;
        let ops = ModeOps::new(dim, eta);
        let cm = ops.dense(&ops.cos_minus_id) + DMatrix::identity(dim, dim);
        let sm = ops.dense(&ops.sin);
        let x = eta_x_dense(dim, eta);
        for &c in &[0.3, 1.7, -2.9, 5.1] {
            let direct = matrix_function(&(x.clone() + DMatrix::identity(dim, dim) * c), |l| l.cos());
            let split = &cm * c.cos() - &sm * c.sin();
            assert!((direct - split).amax() < 1e-14);
        }
    }

    #[test]
    fn bands_have_definite_parity() {
        let ops = ModeOps::new(12, 0.1);
        assert!(ops.cos_minus_id.iter().all(|b| b.offset % 2 == 0));
        assert!(ops.sin.iter().all(|b| b.offset % 2 != 0));
        assert!(ops.cos_minus_id.len() < 23);
    }
}
