#![allow(dead_code)]

use multicurve::prelude::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

pub fn random_kernel(rng: &mut impl Rng, a: usize) -> SeparableKernel {
    let gammas: Vec<f64> = (0..a).map(|_| log_uniform(rng, 1e-5, 1e-2)).collect();
    let mut thetas = DMatrix::zeros(a, a);
    for i in 0..a {
        for j in (i + 1)..a {
            let t = if rng.random_bool(0.2) { 0.0 } else { log_uniform(rng, 1e-5, 1e-1) };
            thetas[(i, j)] = t;
            thetas[(j, i)] = t;
        }
    }
    SeparableKernel::new(
        ScalarKernel::new(rng.random_range(0.01..0.2)).unwrap(),
        GraphRegularization::new(gammas, thetas).unwrap(),
    )
    .unwrap()
}

/// Instruments over a shared pool of at most `max_dates` cash-flow dates.
pub fn random_instruments(rng: &mut impl Rng, a: usize, max_dates: usize, max_instruments: usize) -> Vec<Instrument> {
    let pool_size = rng.random_range(2..=max_dates);
    let mut pool: Vec<f64> = (0..pool_size)
        .map(|_| (rng.random_range(0.1..30.0f64) * 1000.0).round() / 1000.0)
        .collect();
    pool.sort_by(f64::total_cmp);
    pool.dedup();
    let m = rng.random_range(1..=max_instruments);
    (0..m)
        .map(|i| {
            let k = rng.random_range(1..=3.min(pool.len()));
            let mut dates: Vec<f64> = (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            dates.sort_by(f64::total_cmp);
            dates.dedup();
            let coupon = rng.random_range(0.0..0.06);
            let last = dates.len() - 1;
            let flows: Vec<CashFlow> = dates
                .iter()
                .enumerate()
                .map(|(j, &t)| CashFlow::new(t, if j == last { 1.0 + coupon } else { coupon }))
                .collect();
            let rate = rng.random_range(0.0..0.06);
            let fair: f64 = flows.iter().map(|f| f.amount * (-rate * f.time).exp()).sum();
            let price = fair * (1.0 + rng.random_range(-0.01..0.01));
            Instrument::new(rng.random_range(0..a), format!("i{i}"), price, flows).unwrap()
        })
        .collect()
}

pub struct Instance {
    pub cfm: CashFlowMatrix,
    pub cfg: EstimatorConfig,
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let a = rng.random_range(1..=3);
    let insts = random_instruments(rng, a, 12, 8);
    let cfm = CashFlowMatrix::assemble(&insts, a, WeightMode::Duration).unwrap();
    let mut cfg = EstimatorConfig::new(random_kernel(rng, a));
    if rng.random_bool(0.5) {
        cfg = cfg.with_prior(Prior::FlatRate {
            rate: rng.random_range(0.0..0.05),
        });
    }
    Instance { cfm, cfg }
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.norm().max(a.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}
