use super::eig::eig_sym;
use super::sym::SymMatrix;
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `S = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Fails with `NotPositiveDefinite` when a pivot drops to `1e-12·‖S‖_max`.
    pub fn factor(m: &SymMatrix) -> Result<Self> {
        let n = m.order();
        let floor = PIVOT_TOL * m.max_abs();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) {
                return Err(Error::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * n + k] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn solve_upper(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L⁻¹ P L⁻ᵀ`
    pub fn whiten(&self, p: &SymMatrix) -> SymMatrix {
        let n = self.n;
        // Columns of W = L⁻¹ P, then C = W L⁻ᵀ = (L⁻¹ Wᵀ)ᵀ.
        let mut w = vec![0.0; n * n];
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| p.get(i, j)).collect();
            let z = self.solve_lower(&col);
            for i in 0..n {
                w[i * n + j] = z[i];
            }
        }
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            let z = self.solve_lower(&w[i * n..(i + 1) * n]);
            for j in 0..n {
                c[j * n + i] = z[j];
            }
        }
        SymMatrix::from_row_major(n, c).expect("finite whitened matrix")
    }
}

pub fn solve_spd(m: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.order() {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {}, matrix order {}",
            b.len(),
            m.order()
        )));
    }
    Ok(Cholesky::factor(m)?.solve(b))
}

/// Smallest generalized eigenvalue of the SPD pencil `p v = μ a v` together
/// with its eigenvector normalized to unit Euclidean length.
pub fn pencil_min_eigpair(p: &SymMatrix, a: &SymMatrix) -> Result<(f64, Vec<f64>)> {
    Cholesky::factor(p)?;
    let chol = Cholesky::factor(a)?;
    let c = chol.whiten(p);
    let e = eig_sym(&c)?;
    let mut v = chol.solve_upper(&e.vectors[0]);
    let nv = super::vector::norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    Ok((e.min(), v))
}

pub fn pencil_min_eig(p: &SymMatrix, a: &SymMatrix) -> Result<f64> {
    Ok(pencil_min_eigpair(p, a)?.0)
}
