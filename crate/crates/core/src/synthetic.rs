//! Seeded generators for random instances and planted mean-reverting data.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::estimation::{median, PriceMatrix};
use crate::model::{ProblemInstance, Support};
use crate::numerics::SymMatrix;

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Random Wishart-type SPD matrix `WWᵀ/m + shift·I` with `m = n + 4`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, shift: f64) -> SymMatrix {
    let m = n + 4;
    let w: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| gaussian(rng)).collect())
        .collect();
    SymMatrix::from_fn(n, |i, j| {
        let s: f64 = (0..m).map(|c| w[i][c] * w[j][c]).sum::<f64>() / m as f64;
        if i == j {
            s + shift
        } else {
            s
        }
    })
}

/// Random SPD matrix with eigenvalues log-uniform in `[1, cond]` and a
/// random eigenbasis.
pub fn random_spd_with_condition<R: Rng + ?Sized>(rng: &mut R, n: usize, cond: f64) -> SymMatrix {
    let g: Vec<f64> = (0..n * n).map(|_| gaussian(rng)).collect();
    let basis = crate::numerics::eig_sym(&SymMatrix::identity(n).congruence(&g, n).add_diag(1e-3))
        .expect("finite matrix")
        .vectors;
    let terms: Vec<(f64, Vec<f64>)> = basis
        .into_iter()
        .map(|v| (cond.powf(rng.gen_range(0.0..1.0)), v))
        .collect();
    let refs: Vec<(f64, &[f64])> = terms.iter().map(|(w, v)| (*w, v.as_slice())).collect();
    SymMatrix::from_outer_sum(n, &refs)
}

/// Random instance with `φ` equal to the median diagonal entry of `A`, which
/// makes the volatility constraint bind on a good share of supports.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> ProblemInstance {
    let m = random_spd(rng, n, 0.05);
    let a = random_spd(rng, n, 0.05);
    let phi = median(&a.diagonal());
    ProblemInstance::new(m, a, phi, k).expect("generated instance is valid")
}

/// Random unit vector.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let nrm = crate::numerics::vector::norm2(&v);
        if nrm > 1e-8 {
            return crate::numerics::vector::scale(&v, 1.0 / nrm);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub assets: usize,
    pub periods: usize,
    /// Step size of the random-walk factors in log-price units.
    pub walk_sigma: f64,
    /// Mean-reversion speed of the planted spread per period.
    pub reversion: f64,
    /// Innovation size of the planted spread.
    pub spread_sigma: f64,
    /// Idiosyncratic noise on the planted assets.
    pub noise_sigma: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            assets: 9,
            periods: 500,
            walk_sigma: 0.01,
            reversion: 0.8,
            spread_sigma: 0.1,
            noise_sigma: 0.001,
        }
    }
}

/// Price panel where three assets share a mean-reverting combination.
///
/// Two random-walk factors `W₁, W₂` drive the planted assets as
/// `s_a = W₁ + e_a`, `s_b = W₂ + e_b`, `s_c = W₁ + W₂ + u` with `u` an
/// autoregressive process, so `s_c − s_a − s_b` reverts to zero. All other
/// assets are independent random walks. Returns the panel and the planted
/// index triple.
pub fn planted_prices(seed: u64, cfg: &PlantedConfig) -> (PriceMatrix, Support) {
    assert!(cfg.assets >= 3, "need at least three assets");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.assets;
    let planted = Support::new(sample(&mut rng, n, 3).into_vec()).expect("distinct");
    let (ia, ib, ic) = (
        planted.indices()[0],
        planted.indices()[1],
        planted.indices()[2],
    );
    let mut level: Vec<f64> = (0..n).map(|_| 3.0 + gaussian(&mut rng)).collect();
    let (mut w1, mut w2, mut u) = (0.0, 0.0, 0.0);
    let base: Vec<f64> = level.clone();
    let rows = (0..cfg.periods)
        .map(|_| {
            w1 += cfg.walk_sigma * gaussian(&mut rng);
            w2 += cfg.walk_sigma * gaussian(&mut rng);
            u = (1.0 - cfg.reversion) * u + cfg.spread_sigma * gaussian(&mut rng);
            for (j, l) in level.iter_mut().enumerate() {
                if j != ia && j != ib && j != ic {
                    *l += cfg.walk_sigma * gaussian(&mut rng);
                }
            }
            level[ia] = base[ia] + w1 + cfg.noise_sigma * gaussian(&mut rng);
            level[ib] = base[ib] + w2 + cfg.noise_sigma * gaussian(&mut rng);
            level[ic] = base[ic] + w1 + w2 + u;
            level.iter().map(|l| l.exp()).collect()
        })
        .collect();
    (
        PriceMatrix::from_rows(rows).expect("positive prices"),
        planted,
    )
}

/// Independent geometric random walks with log-step `step`.
pub fn random_walk_prices(seed: u64, assets: usize, periods: usize, step: f64) -> PriceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level: Vec<f64> = (0..assets).map(|_| 3.0 + gaussian(&mut rng)).collect();
    let rows = (0..periods)
        .map(|_| {
            for l in level.iter_mut() {
                *l += step * gaussian(&mut rng);
            }
            level.iter().map(|l| l.exp()).collect()
        })
        .collect();
    PriceMatrix::from_rows(rows).expect("positive prices")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_reproducible() {
        let cfg = PlantedConfig {
            periods: 50,
            ..PlantedConfig::default()
        };
        let (a, sa) = planted_prices(7, &cfg);
        let (b, sb) = planted_prices(7, &cfg);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!((a.t(), a.n()), (50, 9));
    }

    #[test]
    fn random_matrices_are_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 1..8 {
            let m = random_spd(&mut rng, n, 0.01);
            assert!(crate::numerics::lambda_min(&m).unwrap() > 0.0);
        }
    }
}
