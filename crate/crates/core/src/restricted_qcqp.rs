//! Global solution of the support-restricted problem
//!
//! ```text
//! (P_I)   minimize xᵀMx  s.t.  xᵀAx ≥ φ, ‖x‖ = 1, x_{I^c} = 0
//! ```
//!
//! After the substitution `Q0 = M_II`, `Q1 = −A_II/φ` this is
//! `min ΥᵀQ0Υ` over unit `Υ` with `ΥᵀQ1Υ ≤ −1`. Its SDP relaxation over
//! `Y ⪰ 0, Tr(Y) = 1` has two linear constraints, so it is tight and has a
//! rank-one solution. The relaxation's dual
//!
//! ```text
//! maximize −y1 + y2   s.t.   Q0 − y1·Q1 − y2·I ⪰ 0
//! ```
//!
//! reduces to the concave scalar function `h(y1) = −y1 + λ_min(Q0 − y1·Q1)`,
//! maximized here by supergradient bisection. A primal optimum is recovered on
//! the null space of the dual slack and reduced to rank one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{support_feasible, ProblemInstance, Support};
use crate::numerics::vector::{canonical_sign, norm2};
use crate::numerics::{eig_sym, EigDecomposition, SymMatrix};

const UNBOUNDED_LIMIT: f64 = 1e12;
const BRACKET_WIDTH: f64 = 1e-10;
const NULL_TOL: f64 = 1e-7;
const TRACE_TOL: f64 = 1e-9;

/// `Q0 = M_II`, `Q1 = −A_II/φ`, with `Q0 ≻ 0 ≻ Q1`.
#[derive(Debug, Clone)]
pub struct ReducedPair {
    pub q0: SymMatrix,
    pub q1: SymMatrix,
}

impl ReducedPair {
    pub fn new(q0: SymMatrix, q1: SymMatrix) -> Result<Self> {
        if q0.order() != q1.order() {
            return Err(Error::InvalidInput("Q0 and Q1 differ in order".into()));
        }
        let e0 = eig_sym(&q0)?;
        let e1 = eig_sym(&q1)?;
        if !(e0.min() > 0.0) || !(e1.max() < 0.0) {
            return Err(Error::InvalidMatrix(format!(
                "need Q0 ≻ 0 ≻ Q1, got λ_min(Q0) = {:.3e}, λ_max(Q1) = {:.3e}",
                e0.min(),
                e1.max()
            )));
        }
        Ok(Self { q0, q1 })
    }

    pub fn order(&self) -> usize {
        self.q0.order()
    }
}

pub fn reduce(inst: &ProblemInstance, support: &Support) -> Result<ReducedPair> {
    if !support_feasible(inst, support)? {
        return Err(Error::Infeasible(format!(
            "λ_max(A_II) < φ on support {support}"
        )));
    }
    let idx = support.indices();
    ReducedPair::new(
        inst.m().submatrix(idx),
        inst.a().submatrix(idx).scaled(-1.0 / inst.phi()),
    )
}

/// Which SDP the scalar dual belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualForm {
    /// `Tr(Q1 Y) = −1`: `y1` free.
    Equality,
    /// `Tr(Q1 Y) ≤ −1`: multiplier sign-constrained, `y1 ≤ 0`.
    Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub y1: f64,
    pub y2: f64,
    pub dual_value: f64,
    /// Duality gap once a primal point is attached; before that an upper bound
    /// on the dual suboptimality left by the bisection.
    pub gap: f64,
    /// Whether the volatility constraint binds at the optimum.
    pub active: bool,
    /// Final bisection bracket around `y1`; both ends equal `y1` when the
    /// maximizer was located exactly.
    pub bracket: (f64, f64),
}

/// `h(y1)` and a supergradient `−1 − vᵀQ1v`.
pub fn dual_function(q: &ReducedPair, y1: f64) -> Result<(f64, f64)> {
    let (h, g, _) = dual_eval(q, y1)?;
    Ok((h, g))
}

fn dual_eval(q: &ReducedPair, y1: f64) -> Result<(f64, f64, EigDecomposition)> {
    let e = eig_sym(&q.q0.lin_comb(1.0, &q.q1, -y1))?;
    let h = -y1 + e.min();
    let g = -1.0 - q.q1.quad_form(&e.vectors[0]);
    Ok((h, g, e))
}

/// Maximizes `h(y1) = −y1 + λ_min(Q0 − y1·Q1)` by supergradient bisection.
pub fn dual_maximize(q: &ReducedPair, form: DualForm) -> Result<DualCertificate> {
    let (h0, g0, _) = dual_eval(q, 0.0)?;
    let slope_tol = 1e-14 * (1.0 + q.q1.max_abs());
    if g0.abs() <= slope_tol || (form == DualForm::Inequality && g0 >= 0.0) {
        return Ok(DualCertificate {
            y1: 0.0,
            y2: h0,
            dual_value: h0,
            gap: 0.0,
            active: form == DualForm::Equality,
            bracket: (0.0, 0.0),
        });
    }

    // Geometric expansion until the supergradient changes sign.
    let dir = g0.signum();
    let (mut inner, mut g_inner) = (0.0, g0);
    let mut outer = dir;
    let mut g_outer = dual_eval(q, outer)?.1;
    while g_outer * dir > slope_tol {
        if outer.abs() >= UNBOUNDED_LIMIT {
            return Err(Error::DualUnbounded { direction: dir });
        }
        inner = outer;
        g_inner = g_outer;
        outer *= 2.0;
        g_outer = dual_eval(q, outer)?.1;
    }
    let (mut lo, mut hi, mut g_lo, mut g_hi) = if dir > 0.0 {
        (inner, outer, g_inner, g_outer)
    } else {
        (outer, inner, g_outer, g_inner)
    };

    while hi - lo > BRACKET_WIDTH.max(4.0 * f64::EPSILON * lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        let (_, g, _) = dual_eval(q, mid)?;
        if g.abs() <= slope_tol {
            lo = mid;
            hi = mid;
            g_lo = 0.0;
            g_hi = 0.0;
            break;
        }
        if g > 0.0 {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
            g_hi = g;
        }
    }

    let (h_lo, _, _) = dual_eval(q, lo)?;
    let (h_hi, _, _) = dual_eval(q, hi)?;
    let mid = 0.5 * (lo + hi);
    let (h_mid, _, _) = dual_eval(q, mid)?;
    let (y1, h) = [(lo, h_lo), (mid, h_mid), (hi, h_hi)].into_iter().fold(
        (lo, f64::NEG_INFINITY),
        |best, c| if c.1 > best.1 { c } else { best },
    );
    // Concavity: the maximum lies below both supporting lines at the bracket ends.
    let upper = (h_lo + g_lo.max(0.0) * (hi - lo)).min(h_hi + (-g_hi).max(0.0) * (hi - lo));
    Ok(DualCertificate {
        y1,
        y2: h + y1,
        dual_value: h,
        gap: (upper - h).max(0.0),
        active: form == DualForm::Equality || y1 < 0.0,
        bracket: (lo, hi),
    })
}

/// PSD matrix with unit trace.
#[derive(Debug, Clone)]
pub struct PsdSolution {
    pub y: SymMatrix,
    pub rank: usize,
}

impl PsdSolution {
    pub fn from_terms(n: usize, terms: &[(f64, &[f64])]) -> Self {
        let y = SymMatrix::from_outer_sum(n, terms);
        let rank = terms.iter().filter(|(w, _)| *w > 0.0).count();
        Self { y, rank }
    }

    /// `√λ_max · v_max`, the factor `u` with `Y ≈ uuᵀ` when rank is one.
    pub fn leading_factor(&self) -> Result<Vec<f64>> {
        let e = eig_sym(&self.y)?;
        let n = self.y.order();
        let s = e.max().max(0.0).sqrt();
        Ok(e.vectors[n - 1].iter().map(|v| v * s).collect())
    }
}

/// A primal SDP optimum on the null space of `Z = Q0 − y1·Q1 − y2·I`.
///
/// When the numerical null space does not contain a point with
/// `Tr(Q1 Y) = −1` (the bisection only locates `y1` up to its bracket), the
/// minimum eigenvectors at the two bracket ends are combined instead: they
/// lie on opposite sides of the constraint and both converge to the face.
pub fn recover_primal(
    q: &ReducedPair,
    cert: &DualCertificate,
    form: DualForm,
) -> Result<PsdSolution> {
    let first = match recover_with_tol(q, cert, form, NULL_TOL) {
        Err(Error::DegenerateFace { .. }) => recover_with_tol(q, cert, form, 10.0 * NULL_TOL),
        other => other,
    };
    match first {
        Err(Error::DegenerateFace { basis }) if form == DualForm::Equality || cert.y1 < 0.0 => {
            recover_from_bracket(q, cert).ok_or(Error::DegenerateFace { basis })
        }
        other => other,
    }
}

fn recover_from_bracket(q: &ReducedPair, cert: &DualCertificate) -> Option<PsdSolution> {
    let n = q.order();
    let (lo, hi) = cert.bracket;
    let (_, _, e_lo) = dual_eval(q, lo).ok()?;
    let (_, _, e_hi) = dual_eval(q, hi).ok()?;
    let (v_lo, v_hi) = (&e_lo.vectors[0], &e_hi.vectors[0]);
    let (a, b) = (q.q1.quad_form(v_lo), q.q1.quad_form(v_hi));
    match (a <= -1.0, b <= -1.0) {
        (true, false) => {
            let t = (-1.0 - b) / (a - b);
            Some(PsdSolution::from_terms(n, &[(t, v_lo), (1.0 - t, v_hi)]))
        }
        (false, true) => {
            let t = (-1.0 - a) / (b - a);
            Some(PsdSolution::from_terms(n, &[(t, v_hi), (1.0 - t, v_lo)]))
        }
        (true, true) => Some(PsdSolution::from_terms(
            n,
            &[(1.0, if b >= a { v_hi } else { v_lo })],
        )),
        (false, false) => None,
    }
}

fn recover_with_tol(
    q: &ReducedPair,
    cert: &DualCertificate,
    form: DualForm,
    tol: f64,
) -> Result<PsdSolution> {
    let n = q.order();
    let z = q.q0.lin_comb(1.0, &q.q1, -cert.y1).add_diag(-cert.y2);
    let scale = 1.0 + q.q0.max_abs() + cert.y1.abs() * q.q1.max_abs();
    let ez = eig_sym(&z)?;
    let null: Vec<&Vec<f64>> = ez
        .values
        .iter()
        .zip(&ez.vectors)
        .filter(|(l, _)| **l <= tol * scale)
        .map(|(_, v)| v)
        .collect();
    if null.is_empty() {
        return Err(Error::DegenerateFace { basis: Vec::new() });
    }

    // Extreme values of vᵀQ1v over unit v in the face, via the compressed Q1.
    let d = null.len();
    let compressed = SymMatrix::from_fn(d, |i, j| {
        let q1v = q.q1.mul_vec(null[j]);
        null[i].iter().zip(&q1v).map(|(a, b)| a * b).sum()
    });
    let ec = eig_sym(&compressed)?;
    let lift = |r: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|k| (0..d).map(|c| r[c] * null[c][k]).sum())
            .collect()
    };
    let most = lift(&ec.vectors[0]);
    let least = lift(&ec.vectors[d - 1]);
    let (a, b) = (ec.min(), ec.max());

    let equality = form == DualForm::Equality || cert.y1 < 0.0;
    let degenerate = || Error::DegenerateFace {
        basis: null.iter().map(|v| v.to_vec()).collect(),
    };
    if !equality {
        return if a <= -1.0 + TRACE_TOL {
            Ok(PsdSolution::from_terms(n, &[(1.0, &most)]))
        } else {
            Err(degenerate())
        };
    }
    if (a + 1.0).abs() <= TRACE_TOL {
        return Ok(PsdSolution::from_terms(n, &[(1.0, &most)]));
    }
    if (b + 1.0).abs() <= TRACE_TOL {
        return Ok(PsdSolution::from_terms(n, &[(1.0, &least)]));
    }
    if a < -1.0 && -1.0 < b {
        let t = (-1.0 - b) / (a - b);
        return Ok(PsdSolution::from_terms(n, &[(t, &most), (1.0 - t, &least)]));
    }
    Err(degenerate())
}

/// Rank reduction preserving `Tr(Y)` and `Tr(Q1·Y)`.
///
/// Each pass factors `Y = VVᵀ`, picks a nonzero symmetric `Δ` with
/// `Tr(VᵀV·Δ) = 0` and `Tr(VᵀQ1V·Δ) = 0`, and sets
/// `Y ← V(I − Δ/λ_max(Δ))Vᵀ`, which drops the rank by at least one.
pub fn rank_reduce(y: &PsdSolution, q1: &SymMatrix) -> Result<PsdSolution> {
    let n = y.y.order();
    let e = eig_sym(&y.y)?;
    let top = e.max().max(0.0);
    // columns of V
    let mut factor: Vec<Vec<f64>> = e
        .values
        .iter()
        .zip(&e.vectors)
        .filter(|(l, _)| **l > 1e-12 * top)
        .map(|(l, v)| v.iter().map(|x| x * l.sqrt()).collect())
        .collect();

    while factor.len() > 1 {
        let r = factor.len();
        let gram = SymMatrix::from_fn(r, |i, j| {
            factor[i].iter().zip(&factor[j]).map(|(a, b)| a * b).sum()
        });
        let c = SymMatrix::from_fn(r, |i, j| {
            let q1v = q1.mul_vec(&factor[j]);
            factor[i].iter().zip(&q1v).map(|(a, b)| a * b).sum()
        });
        let delta = trace_null_direction(&gram, &c);
        let ed = eig_sym(&delta)?;
        let step = SymMatrix::identity(r).lin_comb(1.0, &delta, -1.0 / ed.max());
        let es = eig_sym(&step)?;
        let s_top = es.max();
        factor = es
            .values
            .iter()
            .zip(&es.vectors)
            .filter(|(s, _)| **s > 1e-12 * s_top)
            .map(|(s, w)| {
                let root = s.sqrt();
                (0..n)
                    .map(|k| root * (0..r).map(|c| w[c] * factor[c][k]).sum::<f64>())
                    .collect()
            })
            .collect();
        debug_assert!(factor.len() < r);
    }

    let terms: Vec<(f64, &[f64])> = factor.iter().map(|v| (1.0, v.as_slice())).collect();
    Ok(PsdSolution::from_terms(n, &terms))
}

/// Nonzero `Δ ∈ S^r` orthogonal (in trace inner product) to both `G` and `C`.
///
/// Coordinates: the `r` diagonal entries, then the upper off-diagonal entries
/// row-major. The direction sets the first free coordinate to one, and is
/// oriented so its first nonzero coordinate is positive.
fn trace_null_direction(g: &SymMatrix, c: &SymMatrix) -> SymMatrix {
    let r = g.order();
    let mut coords: Vec<(usize, usize)> = (0..r).map(|i| (i, i)).collect();
    for i in 0..r {
        for j in (i + 1)..r {
            coords.push((i, j));
        }
    }
    let row_of = |s: &SymMatrix| -> Vec<f64> {
        coords
            .iter()
            .map(|&(i, j)| {
                if i == j {
                    s.get(i, i)
                } else {
                    2.0 * s.get(i, j)
                }
            })
            .collect()
    };
    let mut rows = [row_of(g), row_of(c)];
    let dim = coords.len();

    // Reduced row echelon form with largest-magnitude pivots.
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, column)
    for row in 0..2 {
        let scale = rows[row].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            continue;
        }
        let (col, val) = rows[row]
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (k, x)| {
                if x.abs() > best.1.abs() {
                    (k, *x)
                } else {
                    best
                }
            });
        if val.abs() <= 1e-12 * scale.max(1.0) {
            continue;
        }
        rows[row].iter_mut().for_each(|x| *x /= val);
        let pivot_row = rows[row].clone();
        for (other, r_other) in rows.iter_mut().enumerate() {
            if other != row {
                let f = r_other[col];
                r_other
                    .iter_mut()
                    .zip(&pivot_row)
                    .for_each(|(x, p)| *x -= f * p);
            }
        }
        pivots.push((row, col));
    }

    let free = (0..dim)
        .find(|k| pivots.iter().all(|&(_, c)| c != *k))
        .expect("at least one free coordinate when r ≥ 2");
    let mut dir = vec![0.0; dim];
    dir[free] = 1.0;
    for &(row, col) in &pivots {
        dir[col] = -rows[row][free];
    }
    canonical_sign(&mut dir, 0.0);

    let mut full = vec![0.0; r * r];
    for (&(i, j), v) in coords.iter().zip(&dir) {
        full[i * r + j] = *v;
        full[j * r + i] = *v;
    }
    SymMatrix::from_row_major(r, full).expect("finite direction")
}

/// Global optimum of `(P_I)` with its dual certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestrictedSolution {
    pub support: Support,
    /// Embedded in `R^N`, zero off the support.
    pub x: Vec<f64>,
    pub value: f64,
    pub certificate: DualCertificate,
}

/// Solves the reduced problem `min ΥᵀQ0Υ` over unit `Υ` with `ΥᵀQ1Υ ≤ −1`.
pub fn solve_pair(q: &ReducedPair) -> Result<(Vec<f64>, f64, DualCertificate)> {
    let e0 = eig_sym(&q.q0)?;
    let lambda0 = e0.min();
    let v = most_volatile_min_eigvec(q, &e0)?;
    let v_feasible = q.q1.quad_form(&v) <= -1.0 + TRACE_TOL;

    let shortcut = |v: Vec<f64>| {
        let value = q.q0.quad_form(&v);
        let cert = DualCertificate {
            y1: 0.0,
            y2: lambda0,
            dual_value: lambda0,
            gap: (value - lambda0).abs(),
            active: false,
            bracket: (0.0, 0.0),
        };
        (v, value, cert)
    };

    let equality = dual_maximize(q, DualForm::Equality).and_then(|cert| {
        let y = recover_primal(q, &cert, DualForm::Equality)?;
        let reduced = rank_reduce(&y, &q.q1)?;
        let mut u = reduced.leading_factor()?;
        let nu = norm2(&u);
        u.iter_mut().for_each(|x| *x /= nu);
        Ok((u, cert))
    });

    match equality {
        Ok((mut u, mut cert)) => {
            let u_value = q.q0.quad_form(&u);
            if v_feasible && lambda0 < u_value {
                return Ok(shortcut(v));
            }
            canonical_sign(&mut u, 1e-14);
            cert.gap = (u_value - cert.dual_value).abs();
            cert.active = true;
            Ok((u, u_value, cert))
        }
        Err(_) if v_feasible => Ok(shortcut(v)),
        Err(Error::DualUnbounded { .. }) => Err(Error::Infeasible(
            "no unit vector meets the volatility threshold on this support".into(),
        )),
        Err(e) => Err(e),
    }
}

/// Unit eigenvector for `λ_min(Q0)`; within a repeated eigenspace, the one
/// minimizing `vᵀQ1v`.
fn most_volatile_min_eigvec(q: &ReducedPair, e0: &EigDecomposition) -> Result<Vec<f64>> {
    let n = q.order();
    let tol = 1e-10 * (1.0 + e0.max().abs());
    let space: Vec<&Vec<f64>> = e0
        .values
        .iter()
        .zip(&e0.vectors)
        .take_while(|(l, _)| **l - e0.min() <= tol)
        .map(|(_, v)| v)
        .collect();
    let mut v = if space.len() == 1 {
        space[0].clone()
    } else {
        let d = space.len();
        let compressed = SymMatrix::from_fn(d, |i, j| {
            let q1v = q.q1.mul_vec(space[j]);
            space[i].iter().zip(&q1v).map(|(a, b)| a * b).sum()
        });
        let ec = eig_sym(&compressed)?;
        (0..n)
            .map(|k| (0..d).map(|c| ec.vectors[0][c] * space[c][k]).sum())
            .collect()
    };
    canonical_sign(&mut v, 1e-14);
    Ok(v)
}

pub fn solve_restricted(inst: &ProblemInstance, support: &Support) -> Result<RestrictedSolution> {
    let q = reduce(inst, support)?;
    let (upsilon, value, certificate) = solve_pair(&q)?;
    let mut x = vec![0.0; inst.n()];
    for (&i, u) in support.indices().iter().zip(&upsilon) {
        x[i] = *u;
    }
    Ok(RestrictedSolution {
        support: support.clone(),
        x,
        value,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{sphere_min, sphere_min_2d};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(q0: &[f64], q1: &[f64]) -> ReducedPair {
        ReducedPair::new(SymMatrix::diag(q0), SymMatrix::diag(q1)).unwrap()
    }

    fn random_spd(n: usize, rng: &mut impl Rng) -> SymMatrix {
        let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SymMatrix::identity(n).congruence(&g, n).add_diag(0.05)
    }

    #[test]
    fn reduce_extracts_and_scales() {
        let inst = ProblemInstance::new(
            SymMatrix::identity(3).scaled(2.0),
            SymMatrix::identity(3),
            0.5,
            2,
        )
        .unwrap();
        let q = reduce(&inst, &Support::new(vec![0, 2]).unwrap()).unwrap();
        assert_eq!(q.q0, SymMatrix::identity(2).scaled(2.0));
        assert_eq!(q.q1, SymMatrix::identity(2).scaled(-2.0));
        let full = reduce(&inst, &Support::new(vec![0, 1, 2]).unwrap()).unwrap();
        assert_eq!(full.order(), 3);
    }

    #[test]
    fn reduce_exact_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_spd(5, &mut rng);
        let a = random_spd(5, &mut rng);
        let phi = 0.3;
        let inst = ProblemInstance::new(m.clone(), a.clone(), phi, 3).unwrap();
        let s = Support::new(vec![1, 3, 4]).unwrap();
        if let Ok(q) = reduce(&inst, &s) {
            for (p, &i) in s.indices().iter().enumerate() {
                for (r, &j) in s.indices().iter().enumerate() {
                    assert_eq!(q.q0.get(p, r), m.get(i, j));
                    assert_eq!(q.q1.get(p, r), a.get(i, j) * (-1.0 / phi));
                }
            }
        }
    }

    #[test]
    fn reduce_rejects_infeasible_support() {
        let inst =
            ProblemInstance::new(SymMatrix::identity(3), SymMatrix::identity(3), 1.5, 2).unwrap();
        assert!(matches!(
            reduce(&inst, &Support::new(vec![0, 1]).unwrap()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn inconsistent_equality_form_is_unbounded() {
        let q = pair(&[1.0, 1.0], &[-2.0, -2.0]);
        assert!(matches!(
            dual_maximize(&q, DualForm::Equality),
            Err(Error::DualUnbounded { direction }) if direction > 0.0
        ));
    }

    #[test]
    fn dual_value_on_diagonal_pair() {
        let q = pair(&[2.0, 1.0], &[-1.5, -0.5]);
        let c = dual_maximize(&q, DualForm::Equality).unwrap();
        assert!((c.dual_value - 1.5).abs() <= 1e-9, "{}", c.dual_value);
        let (oracle, _) = sphere_min_2d(&q.q0, &q.q1).unwrap();
        assert!((oracle - 1.5).abs() <= 1e-9);
    }

    #[test]
    fn dual_value_matches_angle_grid() {
        let q = pair(&[1.0, 1.0], &[-2.0, -0.5]);
        let c = dual_maximize(&q, DualForm::Equality).unwrap();
        let (oracle, _) = sphere_min_2d(&q.q0, &q.q1).unwrap();
        assert!(
            (c.dual_value - oracle).abs() <= 1e-6,
            "{} vs {oracle}",
            c.dual_value
        );
    }

    #[test]
    fn inequality_form_multiplier_is_nonpositive() {
        // λ_min(Q0) eigenvector e₂ is infeasible, so the constraint binds.
        let q = pair(&[2.0, 1.0], &[-1.5, -0.5]);
        let c = dual_maximize(&q, DualForm::Inequality).unwrap();
        assert!(c.y1 < 0.0 && c.active);
        assert!((c.dual_value - 1.5).abs() <= 1e-9);
        // Feasible eigenvector: constraint slack, y1 = 0.
        let q = pair(&[1.0, 2.0], &[-2.0, -1.0]);
        let c = dual_maximize(&q, DualForm::Inequality).unwrap();
        assert_eq!(c.y1, 0.0);
        assert!(!c.active);
        assert_eq!(c.dual_value, 1.0);
    }

    #[test]
    fn dual_is_concave_along_search_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q0 = random_spd(4, &mut rng);
            let q1 = random_spd(4, &mut rng).scaled(-1.0);
            let q = ReducedPair::new(q0, q1).unwrap();
            let step = 0.05;
            for i in -40..40 {
                let t = i as f64 * step;
                let h = |s: f64| dual_function(&q, s).unwrap().0;
                let second = h(t - step) - 2.0 * h(t) + h(t + step);
                assert!(second <= 1e-6, "second difference {second} at {t}");
            }
        }
    }

    #[test]
    fn totally_degenerate_face_picks_first_basis_vector() {
        let q = pair(&[1.0, 1.0], &[-1.0, -1.0]);
        let c = dual_maximize(&q, DualForm::Equality).unwrap();
        let y = recover_primal(&q, &c, DualForm::Equality).unwrap();
        assert_eq!(y.rank, 1);
        assert!((y.y.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(y.y.get(1, 1).abs() < 1e-12);
    }

    #[test]
    fn bracketing_face_combination() {
        // Q0 = y1*·Q1 + y2*·I with y1* = −1, y2* = 0 puts both axes in the face.
        let q = pair(&[2.0, 0.5], &[-2.0, -0.5]);
        let c = dual_maximize(&q, DualForm::Equality).unwrap();
        assert!((c.y1 + 1.0).abs() <= 1e-9);
        let y = recover_primal(&q, &c, DualForm::Equality).unwrap();
        assert_eq!(y.rank, 2);
        assert!((y.y.get(0, 0) - 1.0 / 3.0).abs() <= 1e-9);
        assert!((y.y.get(1, 1) - 2.0 / 3.0).abs() <= 1e-9);
        assert!((q.q1.trace_product(&y.y) + 1.0).abs() <= 1e-9);
        assert!((q.q0.trace_product(&y.y) - c.dual_value).abs() <= 1e-8);
    }

    #[test]
    fn generic_pair_recovers_face_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut seen = 0;
        while seen < 10 {
            let q0 = random_spd(3, &mut rng);
            let q1 = random_spd(3, &mut rng).scaled(-1.0);
            let q = ReducedPair::new(q0, q1).unwrap();
            let Ok(c) = dual_maximize(&q, DualForm::Equality) else {
                continue;
            };
            let y = recover_primal(&q, &c, DualForm::Equality).unwrap();
            assert!(y.rank <= 2);
            assert!((q.q0.trace_product(&y.y) - c.dual_value).abs() <= 1e-6);
            seen += 1;
            assert!((y.y.trace() - 1.0).abs() <= 1e-8);
            assert!((q.q1.trace_product(&y.y) + 1.0).abs() <= 1e-7);
        }
    }

    #[test]
    fn rank_reduce_symmetric_example() {
        let y = PsdSolution {
            y: SymMatrix::identity(2).scaled(0.5),
            rank: 2,
        };
        let out = rank_reduce(&y, &SymMatrix::identity(2).scaled(-1.0)).unwrap();
        assert_eq!(out.rank, 1);
        assert!(out.y.get(0, 0).abs() < 1e-12);
        assert!((out.y.get(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_reduce_leaves_rank_one_alone() {
        let u = [0.6, 0.8, 0.0];
        let y = PsdSolution::from_terms(3, &[(1.0, &u)]);
        let out = rank_reduce(&y, &SymMatrix::diag(&[-1.0, -2.0, -3.0])).unwrap();
        assert_eq!(out.rank, 1);
        for (a, b) in out.y.as_slice().iter().zip(y.y.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn restricted_eigenvector_shortcut() {
        let q = pair(&[1.0, 2.0], &[-2.0, -1.0]);
        let (u, value, cert) = solve_pair(&q).unwrap();
        assert_eq!(u, vec![1.0, 0.0]);
        assert_eq!(value, 1.0);
        assert!(!cert.active);
    }

    #[test]
    fn restricted_active_case() {
        let q = pair(&[2.0, 1.0], &[-1.5, -0.5]);
        let (u, value, cert) = solve_pair(&q).unwrap();
        assert!((value - 1.5).abs() <= 1e-9);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(
            (u[0] - h).abs() <= 1e-6 && (u[1].abs() - h).abs() <= 1e-6,
            "{u:?}"
        );
        assert!(u[0] > 0.0);
        assert!(cert.gap <= 1e-6);
    }

    #[test]
    fn restricted_dimension_one() {
        let m = SymMatrix::diag(&[3.0, 1.0]);
        let a = SymMatrix::diag(&[2.0, 1.0]);
        let inst = ProblemInstance::new(m, a, 1.5, 1).unwrap();
        let r = solve_restricted(&inst, &Support::new(vec![0]).unwrap()).unwrap();
        assert_eq!(r.x, vec![1.0, 0.0]);
        assert_eq!(r.value, 3.0);
        assert!(solve_restricted(&inst, &Support::new(vec![1]).unwrap()).is_err());
    }

    #[test]
    fn restricted_matches_sphere_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..60 {
            let n = 1 + trial % 3;
            let q0 = random_spd(n, &mut rng);
            let a = random_spd(n, &mut rng);
            let ea = eig_sym(&a).unwrap();
            let phi = rng.gen_range(0.3 * ea.min()..0.999 * ea.max());
            let q = ReducedPair::new(q0, a.scaled(-1.0 / phi)).unwrap();
            let (u, value, cert) = solve_pair(&q).unwrap();
            assert!((norm2(&u) - 1.0).abs() <= 1e-12);
            assert!(q.q1.quad_form(&u) <= -1.0 + 1e-8);
            assert!(cert.gap <= 1e-6 * (1.0 + value.abs()), "gap {}", cert.gap);
            let oracle = sphere_min(&q.q0, &q.q1).unwrap();
            assert!(value <= oracle + 1e-3, "{value} vs {oracle}");
        }
    }
}
