//! Brute-force reference solvers.
//!
//! Everything here is deliberately independent of the production solvers: no
//! Jacobi rotations, no scalar duals, no rank reduction. The checks in the test
//! suites and in `selfcheck` compare against these.

use crate::numerics::SymMatrix;

/// Number of negative pivots in an unpivoted LDLᵀ of `m − σI`
/// (Sylvester's law of inertia). Exactly-zero pivots are nudged.
pub fn negative_count(m: &SymMatrix, sigma: f64) -> usize {
    let n = m.order();
    let mut a: Vec<f64> = m.as_slice().to_vec();
    for i in 0..n {
        a[i * n + i] -= sigma;
    }
    let nudge = f64::EPSILON * (1.0 + m.max_abs() + sigma.abs());
    let mut count = 0;
    for k in 0..n {
        let mut d = a[k * n + k];
        if d == 0.0 {
            d = nudge;
        }
        if d < 0.0 {
            count += 1;
        }
        for i in (k + 1)..n {
            let f = a[i * n + k] / d;
            for j in (k + 1)..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    count
}

/// All eigenvalues (ascending) by bisection on the inertia count, the dense
/// analogue of a Sturm-sequence count.
pub fn inertia_eigenvalues(m: &SymMatrix, tol: f64) -> Vec<f64> {
    let n = m.order();
    let radius = (0..n)
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    (0..n)
        .map(|k| {
            // smallest σ with negative_count(σ) > k
            let (mut lo, mut hi) = (-radius, radius);
            while hi - lo > tol * (1.0 + radius) {
                let mid = 0.5 * (lo + hi);
                if negative_count(m, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

fn leading_minors_positive(p: &SymMatrix, a: &SymMatrix, mu: f64) -> bool {
    let n = p.order();
    let mut w: Vec<f64> = p
        .as_slice()
        .iter()
        .zip(a.as_slice())
        .map(|(x, y)| x - mu * y)
        .collect();
    for k in 0..n {
        let d = w[k * n + k];
        if d <= 0.0 {
            return false;
        }
        for i in (k + 1)..n {
            let f = w[i * n + k] / d;
            for j in (k + 1)..n {
                w[i * n + j] -= f * w[k * n + j];
            }
        }
    }
    true
}

/// Smallest root of `det(p − μa) = 0` for an SPD pair, located by bisecting on
/// positivity of all leading principal minors of `p − μa`.
pub fn pencil_min_by_bisection(p: &SymMatrix, a: &SymMatrix, tol: f64) -> f64 {
    let mut hi = (0..p.order())
        .map(|i| p.get(i, i) / a.get(i, i))
        .fold(f64::INFINITY, f64::min);
    let mut lo = 0.0;
    let scale = 1.0 + hi;
    while hi - lo > tol * scale {
        let mid = 0.5 * (lo + hi);
        if leading_minors_positive(p, a, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimum of `vᵀQ0v` over unit `v ∈ R²` with `vᵀQ1v ≤ −1`, by a dense angle
/// grid with boundary bisection and golden-section refinement.
pub fn sphere_min_2d(q0: &SymMatrix, q1: &SymMatrix) -> Option<(f64, [f64; 2])> {
    assert_eq!(q0.order(), 2);
    let at = |t: f64| [t.cos(), t.sin()];
    let f = |t: f64| q0.quad_form(&at(t));
    let g = |t: f64| q1.quad_form(&at(t)) + 1.0; // feasible iff g <= 0
    let steps = 20_000;
    let h = std::f64::consts::PI / steps as f64; // v and −v coincide; [0, π) suffices
    let mut best: Option<(f64, f64)> = None;
    let consider = |t: f64, best: &mut Option<(f64, f64)>| {
        if g(t) <= 1e-12 {
            let v = f(t);
            if best.is_none_or(|(b, _)| v < b) {
                *best = Some((v, t));
            }
        }
    };
    for i in 0..=steps {
        let t0 = i as f64 * h;
        consider(t0, &mut best);
        let t1 = t0 + h;
        if (g(t0) <= 0.0) != (g(t1) <= 0.0) {
            let (mut a, mut b) = (t0, t1);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if (g(m) <= 0.0) == (g(a) <= 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            let boundary = if g(a) <= 0.0 { a } else { b };
            consider(boundary, &mut best);
        }
    }
    let (mut val, mut t) = best?;
    // golden refinement around the grid winner, staying feasible
    let (mut a, mut b) = (t - h, t + h);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        let fc = if g(c) <= 1e-12 { f(c) } else { f64::INFINITY };
        let fd = if g(d) <= 1e-12 { f(d) } else { f64::INFINITY };
        if fc < fd {
            b = d;
        } else {
            a = c;
        }
    }
    let tm = 0.5 * (a + b);
    if g(tm) <= 1e-12 && f(tm) < val {
        val = f(tm);
        t = tm;
    }
    Some((val, at(t)))
}

/// Minimum of `vᵀQ0v` over the unit sphere in R³ subject to `vᵀQ1v ≤ −1`, on a
/// `(polar, azimuth)` grid. Returns an upper bound on the true minimum.
pub fn sphere_min_3d(q0: &SymMatrix, q1: &SymMatrix, polar_steps: usize) -> Option<f64> {
    assert_eq!(q0.order(), 3);
    let pi = std::f64::consts::PI;
    let az_steps = 2 * polar_steps;
    let mut best = f64::INFINITY;
    for i in 0..=polar_steps {
        let th = pi * i as f64 / polar_steps as f64;
        let (st, ct) = th.sin_cos();
        for j in 0..az_steps {
            let ph = 2.0 * pi * j as f64 / az_steps as f64;
            let (sp, cp) = ph.sin_cos();
            let v = [st * cp, st * sp, ct];
            if q1.quad_form(&v) <= -1.0 {
                best = best.min(q0.quad_form(&v));
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Minimum of `vᵀQ0v` over unit vectors with `vᵀQ1v ≤ −1`, dispatching on order 1–3.
pub fn sphere_min(q0: &SymMatrix, q1: &SymMatrix) -> Option<f64> {
    match q0.order() {
        1 => (q1.get(0, 0) <= -1.0 + 1e-12).then(|| q0.get(0, 0)),
        2 => sphere_min_2d(q0, q1).map(|(v, _)| v),
        3 => sphere_min_3d(q0, q1, 600),
        n => panic!("sphere oracle supports orders 1-3, got {n}"),
    }
}

/// Global minimum of `xᵀMx + ρ‖x − y‖²` subject to `xᵀAx ≥ φ` over `x ∈ R²`.
///
/// Angle grid with the radial problem solved in closed form per direction,
/// followed by golden-section refinement of the best angle.
pub fn polar_px_min(
    m: &SymMatrix,
    a: &SymMatrix,
    rho: f64,
    y: &[f64],
    phi: f64,
) -> (f64, [f64; 2]) {
    assert_eq!(m.order(), 2);
    let yy = y[0] * y[0] + y[1] * y[1];
    let radial = |t: f64| -> (f64, f64) {
        let d = [t.cos(), t.sin()];
        let dpd = m.quad_form(&d) + rho;
        let dad = a.quad_form(&d);
        let yd = y[0] * d[0] + y[1] * d[1];
        let r_min = (phi / dad).sqrt();
        let r = (rho * yd / dpd).max(r_min);
        (r * r * dpd - 2.0 * rho * r * yd + rho * yy, r)
    };
    let steps = 100_000;
    let h = 2.0 * std::f64::consts::PI / steps as f64;
    let (mut best_t, mut best_v) = (0.0, f64::INFINITY);
    for i in 0..steps {
        let t = i as f64 * h;
        let (v, _) = radial(t);
        if v < best_v {
            best_v = v;
            best_t = t;
        }
    }
    let (mut lo, mut hi) = (best_t - h, best_t + h);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = hi - gr * (hi - lo);
        let d = lo + gr * (hi - lo);
        if radial(c).0 < radial(d).0 {
            hi = d;
        } else {
            lo = c;
        }
    }
    let t = 0.5 * (lo + hi);
    let (v, r) = radial(t);
    if v < best_v {
        (v, [r * t.cos(), r * t.sin()])
    } else {
        let (_, r) = radial(best_t);
        (best_v, [r * best_t.cos(), r * best_t.sin()])
    }
}

/// `min ‖y − x‖²` over unit `y` supported on some `k`-subset, by enumerating
/// every support and applying the per-support closed form.
pub fn sparse_projection_min(x: &[f64], k: usize) -> f64 {
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let mut best = f64::INFINITY;
    for support in crate::model::Combinations::new(x.len(), k) {
        let on: f64 = support.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
        let value = if on > 0.0 {
            // ‖x_I − x_I/‖x_I‖‖² + ‖x_{I^c}‖²
            let inside: f64 = support.iter().map(|&i| (x[i] - x[i] / on).powi(2)).sum();
            inside + (xx - on * on)
        } else {
            xx + 1.0
        };
        best = best.min(value);
    }
    best
}
