//! Problem instances, solutions, index sets and first-order diagnostics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::vector::{dot, norm2};
use crate::numerics::{eig_sym, lambda_max, SymMatrix};

/// Relative tolerance for the positive-definiteness check on `M` and `A`.
pub const PD_TOL: f64 = 1e-10;

/// Sorted, duplicate-free set of asset indices (0-based).
///
/// The derived ordering is lexicographic; every tie-break in the crate uses it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Support(Vec<usize>);

impl Support {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        let len = indices.len();
        indices.dedup();
        if indices.len() != len {
            return Err(Error::InvalidIndexSet("duplicate index".into()));
        }
        Ok(Support(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn union(&self, other: &Support) -> Support {
        let mut v = self.0.clone();
        v.extend(other.0.iter().filter(|i| !self.contains(**i)));
        v.sort_unstable();
        Support(v)
    }

    /// Indices in `0..n` not in the set, ascending.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|i| !self.contains(*i)).collect()
    }

    /// Subset picked by positions into this set.
    pub fn pick(&self, positions: &[usize]) -> Support {
        Support(positions.iter().map(|&p| self.0[p]).collect())
    }

    pub fn check_bounds(&self, n: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidIndexSet("empty index set".into()));
        }
        if let Some(&i) = self.0.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidIndexSet(format!(
                "index {i} out of range for {n} assets"
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for Support {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Support::new(v)
    }
}

impl From<Support> for Vec<usize> {
    fn from(s: Support) -> Self {
        s.0
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (p, i) in self.0.iter().enumerate() {
            if p > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Lexicographic enumeration of the `k`-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in (i + 1)..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                return Some(out);
            }
        }
        Some(out)
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// The data `(M, A, φ, k)` of the sparse, volatility-constrained predictability
/// minimization: minimize `xᵀMx` subject to `xᵀAx ≥ φ`, `‖x‖₂ = 1`, `‖x‖₀ ≤ k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct ProblemInstance {
    m: SymMatrix,
    a: SymMatrix,
    phi: f64,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    m: SymMatrix,
    a: SymMatrix,
    phi: f64,
    k: usize,
}

impl TryFrom<RawInstance> for ProblemInstance {
    type Error = Error;
    fn try_from(r: RawInstance) -> Result<Self> {
        ProblemInstance::new(r.m, r.a, r.phi, r.k)
    }
}

impl From<ProblemInstance> for RawInstance {
    fn from(p: ProblemInstance) -> Self {
        RawInstance {
            m: p.m,
            a: p.a,
            phi: p.phi,
            k: p.k,
        }
    }
}

fn check_pd(name: &str, s: &SymMatrix) -> Result<()> {
    let e = eig_sym(s)?;
    if !(e.min() > PD_TOL * e.max()) || e.max() <= 0.0 {
        return Err(Error::InvalidMatrix(format!(
            "{name} is not positive definite (λ_min = {:.3e}, λ_max = {:.3e})",
            e.min(),
            e.max()
        )));
    }
    Ok(())
}

impl ProblemInstance {
    pub fn new(m: SymMatrix, a: SymMatrix, phi: f64, k: usize) -> Result<Self> {
        let n = m.order();
        if a.order() != n {
            return Err(Error::InvalidInput(format!(
                "M has order {n} but A has order {}",
                a.order()
            )));
        }
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "phi must be positive, got {phi}"
            )));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidInput(format!(
                "sparsity k = {k} outside 1..={n}"
            )));
        }
        check_pd("M", &m)?;
        check_pd("A", &a)?;
        Ok(Self { m, a, phi, k })
    }

    /// Same matrices and threshold with a different sparsity budget.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n() {
            return Err(Error::InvalidInput(format!(
                "sparsity k = {k} outside 1..={}",
                self.n()
            )));
        }
        Ok(Self { k, ..self.clone() })
    }

    pub fn m(&self) -> &SymMatrix {
        &self.m
    }

    pub fn a(&self) -> &SymMatrix {
        &self.a
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.m.order()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.m.quad_form(x)
    }

    pub fn volatility(&self, x: &[f64]) -> f64 {
        self.a.quad_form(x)
    }
}

/// `(P_I)` is feasible iff `λ_max(A_II) ≥ φ`.
pub fn support_feasible(inst: &ProblemInstance, support: &Support) -> Result<bool> {
    support.check_bounds(inst.n())?;
    let top = lambda_max(&inst.a().submatrix(support.indices()))?;
    Ok(top >= inst.phi() * (1.0 - 1e-10))
}

/// Multipliers for `Mx − λAx + μx + w = 0` with `w_L = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub lambda: f64,
    pub mu: f64,
    pub w: Vec<f64>,
    pub residual: f64,
}

fn check_point(inst: &ProblemInstance, x: &[f64], support: &Support) -> Result<()> {
    let n = inst.n();
    if x.len() != n {
        return Err(Error::InvalidInput(format!(
            "x has length {}, expected {n}",
            x.len()
        )));
    }
    support.check_bounds(n)?;
    if let Some(i) = (0..n).find(|&i| !support.contains(i) && x[i] != 0.0) {
        return Err(Error::InvalidInput(format!(
            "x[{i}] is nonzero outside the support"
        )));
    }
    Ok(())
}

fn constraint_active(inst: &ProblemInstance, x: &[f64]) -> bool {
    inst.volatility(x) <= inst.phi() * (1.0 + 1e-8)
}

/// Least-squares KKT multipliers at `x` for the index set `L`.
///
/// Off `L` the free block `w` absorbs the gradient exactly, so the residual
/// lives on `L` only. `λ` is fixed at zero when the volatility constraint is
/// inactive, when the least-squares value is negative, or when `(Ax)_L` and
/// `x_L` are parallel (then only their combination is identifiable).
pub fn kkt_residual(
    inst: &ProblemInstance,
    x: &[f64],
    support: &Support,
) -> Result<KktCertificate> {
    check_point(inst, x, support)?;
    let n = inst.n();
    let mx = inst.m().mul_vec(x);
    let ax = inst.a().mul_vec(x);
    let idx = support.indices();
    let g: Vec<f64> = idx.iter().map(|&i| mx[i]).collect();
    let p: Vec<f64> = idx.iter().map(|&i| ax[i]).collect();
    let q: Vec<f64> = idx.iter().map(|&i| x[i]).collect();

    // minimize ‖g − λp + μq‖ over μ alone
    let mu_only = |g: &[f64]| -> f64 {
        let qq = dot(&q, &q);
        if qq > 0.0 {
            -dot(g, &q) / qq
        } else {
            0.0
        }
    };

    let mut lambda = 0.0;
    let mut mu = mu_only(&g);
    if constraint_active(inst, x) && gram_independent(&p, &q) {
        // normal equations for (λ, μ) in g − λp + μq ≈ 0
        let (pp, pq, qq) = (dot(&p, &p), dot(&p, &q), dot(&q, &q));
        let (gp, gq) = (dot(&g, &p), dot(&g, &q));
        let det = pp * qq - pq * pq;
        let l = (gp * qq - gq * pq) / det;
        let m_ = (gp * pq - gq * pp) / det;
        if l >= 0.0 {
            lambda = l;
            mu = m_;
        }
    }

    let mut w = vec![0.0; n];
    let mut res2 = 0.0;
    for i in 0..n {
        let r = mx[i] - lambda * ax[i] + mu * x[i];
        if support.contains(i) {
            res2 += r * r;
        } else {
            w[i] = -r;
        }
    }
    Ok(KktCertificate {
        lambda,
        mu,
        w,
        residual: res2.sqrt(),
    })
}

fn gram_independent(a: &[f64], b: &[f64]) -> bool {
    let (aa, bb, ab) = (dot(a, a), dot(b, b), dot(a, b));
    aa * bb - ab * ab > 1e-10 * aa * bb
}

/// Robinson's constraint qualification at `x` for the index set `L`: always
/// true off the volatility boundary, otherwise `(Ax)_L` and `x_L` must be
/// linearly independent.
pub fn robinson_check(inst: &ProblemInstance, x: &[f64], support: &Support) -> Result<bool> {
    check_point(inst, x, support)?;
    let vol = inst.volatility(x);
    if (vol - inst.phi()).abs() > 1e-6 * inst.phi() {
        return Ok(true);
    }
    let ax = inst.a().mul_vec(x);
    let p: Vec<f64> = support.indices().iter().map(|&i| ax[i]).collect();
    let q: Vec<f64> = support.indices().iter().map(|&i| x[i]).collect();
    Ok(gram_independent(&p, &q))
}

/// A feasible point of the sparse problem together with its diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioSolution {
    pub x: Vec<f64>,
    pub support: Support,
    pub objective: f64,
    pub volatility: f64,
    pub kkt: KktCertificate,
    pub active_constraint: bool,
}

impl PortfolioSolution {
    /// Validates feasibility: unit norm, `|support| = k`, zero off the support
    /// and `xᵀAx ≥ φ(1 − 1e-8)`.
    pub fn new(inst: &ProblemInstance, x: Vec<f64>, support: Support) -> Result<Self> {
        check_point(inst, &x, &support)?;
        if support.len() != inst.k() {
            return Err(Error::InvalidInput(format!(
                "support has {} indices, expected k = {}",
                support.len(),
                inst.k()
            )));
        }
        let norm = norm2(&x);
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("‖x‖₂ = {norm}, expected 1")));
        }
        let volatility = inst.volatility(&x);
        if volatility < inst.phi() * (1.0 - 1e-8) {
            return Err(Error::Infeasible(format!(
                "xᵀAx = {volatility} below threshold {}",
                inst.phi()
            )));
        }
        let kkt = kkt_residual(inst, &x, &support)?;
        let active = (volatility - inst.phi()).abs() <= 1e-6 * inst.phi();
        Ok(Self {
            objective: inst.objective(&x),
            x,
            support,
            volatility,
            kkt,
            active_constraint: active,
        })
    }

    pub fn kkt_residual(&self) -> f64 {
        self.kkt.residual
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::vector::unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sup(v: &[usize]) -> Support {
        Support::new(v.to_vec()).unwrap()
    }

    fn random_spd(n: usize, rng: &mut impl Rng) -> SymMatrix {
        let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SymMatrix::identity(n).congruence(&g, n).add_diag(0.1)
    }

    #[test]
    fn combinations_are_lexicographic() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(Combinations::new(12, 4).count(), binomial(12, 4));
        assert_eq!(binomial(12, 4), 495);
    }

    #[test]
    fn support_normalizes_and_rejects_duplicates() {
        assert_eq!(sup(&[3, 1, 2]).indices(), &[1, 2, 3]);
        assert!(Support::new(vec![1, 1]).is_err());
        assert!(sup(&[1, 0]) < sup(&[0, 2]));
        assert!(sup(&[0, 1, 5]) < sup(&[0, 2]));
    }

    #[test]
    fn instance_validation() {
        let i2 = SymMatrix::identity(2);
        assert!(ProblemInstance::new(i2.clone(), i2.clone(), 1.0, 1).is_ok());
        assert!(ProblemInstance::new(i2.clone(), i2.clone(), 0.0, 1).is_err());
        assert!(ProblemInstance::new(i2.clone(), i2.clone(), 1.0, 3).is_err());
        let singular = SymMatrix::diag(&[1.0, 0.0]);
        assert!(ProblemInstance::new(singular, i2, 1.0, 1).is_err());
    }

    #[test]
    fn feasibility_by_top_eigenvalue() {
        let m = SymMatrix::identity(2);
        let a = SymMatrix::diag(&[1.0, 2.0]);
        let inst = ProblemInstance::new(m.clone(), a.clone(), 3.0, 1).unwrap();
        assert!(!support_feasible(&inst, &sup(&[0, 1])).unwrap());
        let inst = ProblemInstance::new(m, a, 2.0, 1).unwrap();
        assert!(support_feasible(&inst, &sup(&[0, 1])).unwrap());
        assert!(matches!(
            support_feasible(&inst, &Support::new(vec![]).unwrap()),
            Err(Error::InvalidIndexSet(_))
        ));
    }

    #[test]
    fn feasibility_agrees_with_sphere_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let a = random_spd(4, &mut rng);
            let top = lambda_max(&a).unwrap();
            let inst =
                ProblemInstance::new(SymMatrix::identity(4), a.clone(), 0.9 * top, 2).unwrap();
            assert!(support_feasible(&inst, &sup(&[0, 1, 2, 3])).unwrap());
            // independent check: some sampled unit vector reaches the threshold
            let hit = (0..200_000).any(|_| {
                let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let nv = norm2(&v);
                a.quad_form(&v) / (nv * nv) >= 0.9 * top
            });
            assert!(hit);
        }
    }

    #[test]
    fn feasibility_is_monotone_under_inclusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a = random_spd(6, &mut rng);
            let phi = rng.gen_range(0.1..1.0) * lambda_max(&a).unwrap();
            let inst = ProblemInstance::new(SymMatrix::identity(6), a, phi, 3).unwrap();
            let small = sup(&[rng.gen_range(0..3), 3]);
            let big = small.union(&sup(&[4, 5]));
            if support_feasible(&inst, &small).unwrap() {
                assert!(support_feasible(&inst, &big).unwrap());
            }
        }
    }

    #[test]
    fn kkt_identity_case() {
        let i = SymMatrix::identity(3);
        let inst = ProblemInstance::new(i.clone(), i, 1.0, 1).unwrap();
        let c = kkt_residual(&inst, &unit(3, 0), &sup(&[0])).unwrap();
        assert_eq!(c.residual, 0.0);
        assert_eq!(c.lambda, 0.0);
        assert_eq!(c.mu, -1.0);
        assert!(c.w.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn kkt_residual_matches_normal_equations_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let m = random_spd(5, &mut rng);
            let a = random_spd(5, &mut rng);
            let mut x = vec![0.0; 5];
            for i in [0, 2, 3] {
                x[i] = rng.gen_range(-1.0..1.0);
            }
            let nx = norm2(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            // put x on the boundary so both multipliers are in play
            let phi = a.quad_form(&x);
            let inst = ProblemInstance::new(m.clone(), a.clone(), phi, 3).unwrap();
            let s = sup(&[0, 2, 3]);
            let c = kkt_residual(&inst, &x, &s).unwrap();
            assert!(c.residual > 0.0);

            // independent: distance from g to span{p, q} via Gram–Schmidt
            let idx = [0usize, 2, 3];
            let (mx, ax) = (m.mul_vec(&x), a.mul_vec(&x));
            let g: Vec<f64> = idx.iter().map(|&i| mx[i]).collect();
            let p: Vec<f64> = idx.iter().map(|&i| ax[i]).collect();
            let q: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let e1: Vec<f64> = q.iter().map(|v| v / norm2(&q)).collect();
            let p_perp: Vec<f64> = p
                .iter()
                .zip(&e1)
                .map(|(pi, ei)| pi - dot(&p, &e1) * ei)
                .collect();
            let e2: Vec<f64> = p_perp.iter().map(|v| v / norm2(&p_perp)).collect();
            let r: Vec<f64> = g
                .iter()
                .zip(e1.iter().zip(&e2))
                .map(|(gi, (a1, a2))| gi - dot(&g, &e1) * a1 - dot(&g, &e2) * a2)
                .collect();
            let lambda_ls = dot(&g, &e2) / dot(&p, &e2);
            if lambda_ls >= 0.0 {
                assert!(
                    (c.residual - norm2(&r)).abs() <= 1e-10,
                    "{} vs {}",
                    c.residual,
                    norm2(&r)
                );
            } else {
                let r0: Vec<f64> = g
                    .iter()
                    .zip(&e1)
                    .map(|(gi, ei)| gi - dot(&g, &e1) * ei)
                    .collect();
                assert!((c.residual - norm2(&r0)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn robinson_cases() {
        let i = SymMatrix::identity(2);
        let inst = ProblemInstance::new(i.clone(), i.clone(), 1.0, 2).unwrap();
        let x = vec![0.6, 0.8];
        assert!(!robinson_check(&inst, &x, &sup(&[0, 1])).unwrap());

        let a = SymMatrix::diag(&[1.0, 2.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let inst = ProblemInstance::new(i.clone(), a.clone(), 1.5, 2).unwrap();
        assert!(robinson_check(&inst, &[h, h], &sup(&[0, 1])).unwrap());

        // inactive constraint: always holds, even with A = I
        let inst = ProblemInstance::new(i.clone(), i, 0.5, 2).unwrap();
        assert!(robinson_check(&inst, &x, &sup(&[0, 1])).unwrap());
    }

    #[test]
    fn solution_invariants_are_enforced() {
        let i = SymMatrix::identity(3);
        let inst = ProblemInstance::new(i.clone(), i, 0.5, 1).unwrap();
        assert!(PortfolioSolution::new(&inst, unit(3, 1), sup(&[1])).is_ok());
        assert!(PortfolioSolution::new(&inst, vec![0.0, 2.0, 0.0], sup(&[1])).is_err());
        assert!(PortfolioSolution::new(&inst, unit(3, 1), sup(&[0])).is_err());
        assert!(PortfolioSolution::new(&inst, unit(3, 1), sup(&[0, 1])).is_err());
        let strict =
            ProblemInstance::new(SymMatrix::identity(3), SymMatrix::identity(3), 1.5, 1).unwrap();
        assert!(matches!(
            PortfolioSolution::new(&strict, unit(3, 1), sup(&[1])),
            Err(Error::Infeasible(_))
        ));
    }
}
