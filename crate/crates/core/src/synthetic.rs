//! Synthetic two-class market (government bonds and overnight-rate swaps) with
//! known smooth discount curves. Used as ground truth in experiments, tests and
//! benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instruments::{build_bond, build_swap, Instrument, SwapSpec};

/// Svensson yield curve; `curvature2 = 0` gives Nelson–Siegel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvenssonCurve {
    pub level: f64,
    pub slope: f64,
    pub curvature: f64,
    pub curvature2: f64,
    pub decay: f64,
    pub decay2: f64,
}

fn loading(x: f64, tau: f64) -> f64 {
    let u = x / tau;
    if u < 1e-10 {
        1.0 - 0.5 * u
    } else {
        -(-u).exp_m1() / u
    }
}

impl SvenssonCurve {
    pub fn yield_at(&self, x: f64) -> f64 {
        let l1 = loading(x, self.decay);
        let l2 = loading(x, self.decay2);
        self.level
            + self.slope * l1
            + self.curvature * (l1 - (-x / self.decay).exp())
            + self.curvature2 * (l2 - (-x / self.decay2).exp())
    }

    pub fn discount(&self, x: f64) -> f64 {
        (-self.yield_at(x) * x).exp()
    }
}

/// Yield spread `s(x) = long_run (1 - e^{-x/decay})` of bonds over swaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadCurve {
    pub long_run: f64,
    pub decay: f64,
}

impl SpreadCurve {
    pub fn spread_at(&self, x: f64) -> f64 {
        self.long_run * (-(-x / self.decay).exp_m1())
    }
}

/// Quote in market terms, before conversion to cash flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuoteTerms {
    Bond {
        coupon: f64,
        frequency: u32,
        maturity: f64,
        dirty_price: f64,
    },
    Swap(SwapSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuote {
    pub class_id: usize,
    pub id: String,
    pub terms: QuoteTerms,
}

impl SyntheticQuote {
    pub fn instrument(&self) -> Result<Instrument> {
        match &self.terms {
            QuoteTerms::Bond {
                coupon,
                frequency,
                maturity,
                dirty_price,
            } => build_bond(self.class_id, &self.id, *coupon, *frequency, *maturity, *dirty_price),
            QuoteTerms::Swap(spec) => build_swap(self.class_id, &self.id, spec),
        }
    }
}

/// Overnight-rate swap tenors from one day to fifty years, in years.
pub fn swap_tenor_menu() -> Vec<f64> {
    let mut t = vec![1.0 / 365.0, 7.0 / 365.0, 14.0 / 365.0, 21.0 / 365.0];
    t.extend((1..=23).map(|m| m as f64 / 12.0));
    t.extend([27.0, 30.0, 33.0, 36.0, 42.0, 48.0, 54.0].iter().map(|m| m / 12.0));
    t.extend([5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0]);
    t
}

/// Fixed-leg accrual for a swap of the given tenor: one period up to a year,
/// otherwise the longest of annual, semiannual, quarterly, monthly that divides it.
pub fn swap_accrual(tenor: f64) -> f64 {
    if tenor <= 1.0 + 1e-12 {
        return tenor;
    }
    let months = (tenor * 12.0).round() as i64;
    if months % 12 == 0 {
        1.0
    } else if months % 6 == 0 {
        0.5
    } else if months % 3 == 0 {
        0.25
    } else {
        1.0 / 12.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUniverse {
    pub swap_curve: SvenssonCurve,
    pub bond_spread: SpreadCurve,
    pub bond_maturities: Vec<f64>,
    pub swap_tenors: Vec<f64>,
    /// Standard deviation of i.i.d. noise on quoted bond prices and swap rates.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticUniverse {
    /// Humped swap curve peaking near 4.8% around 25 years, bonds trading a
    /// smooth 20 bp above swaps at the long end, semiannual bonds every six
    /// months to 30 years, the full swap tenor menu to 50 years and 1 bp noise.
    pub fn standard(seed: u64) -> Self {
        Self {
            swap_curve: SvenssonCurve {
                level: 0.045,
                slope: -0.015,
                curvature: -0.01,
                curvature2: 0.02,
                decay: 2.0,
                decay2: 8.0,
            },
            bond_spread: SpreadCurve {
                long_run: 0.002,
                decay: 8.0,
            },
            bond_maturities: (1..=60).map(|k| k as f64 * 0.5).collect(),
            swap_tenors: swap_tenor_menu(),
            noise: 1e-4,
            seed,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise = 0.0;
        self
    }

    pub fn swap_discount(&self, x: f64) -> f64 {
        self.swap_curve.discount(x)
    }

    pub fn bond_yield(&self, x: f64) -> f64 {
        self.swap_curve.yield_at(x) + self.bond_spread.spread_at(x)
    }

    pub fn bond_discount(&self, x: f64) -> f64 {
        (-self.bond_yield(x) * x).exp()
    }

    /// True discount factor of class 0 (bonds) or 1 (swaps).
    pub fn discount(&self, class_id: usize, x: f64) -> f64 {
        if class_id == 0 {
            self.bond_discount(x)
        } else {
            self.swap_discount(x)
        }
    }

    /// Bonds in class 0, swaps in class 1.
    pub fn quotes(&self) -> Result<Vec<SyntheticQuote>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("finite noise level");
        let mut draw = move || if self.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };

        let mut out = Vec::new();
        for (k, &t) in self.bond_maturities.iter().enumerate() {
            // par coupon under the true curve, rounded to 1/8 percent
            let probe = build_bond(0, "", 0.0, 2, t, 1.0)?;
            let annuity: f64 = {
                let n = (t * 2.0).round() as usize;
                (0..n).map(|i| 0.5 * self.bond_discount(t - i as f64 * 0.5)).sum()
            };
            let par = (1.0 - self.bond_discount(probe.maturity())) / annuity;
            let coupon = ((par * 800.0).round() / 800.0).max(0.0);
            let bond = build_bond(0, "", coupon, 2, t, 1.0)?;
            let price = bond.reprice(|x| self.bond_discount(x)) + draw();
            out.push(SyntheticQuote {
                class_id: 0,
                id: format!("BOND{k:03}"),
                terms: QuoteTerms::Bond {
                    coupon,
                    frequency: 2,
                    maturity: t,
                    dirty_price: price,
                },
            });
        }
        for (k, &t) in self.swap_tenors.iter().enumerate() {
            let accrual = swap_accrual(t);
            let n = (t / accrual).round() as usize;
            let annuity: f64 = (1..=n)
                .map(|i| accrual * self.swap_discount(if i == n { t } else { i as f64 * accrual }))
                .sum();
            let rate = (1.0 - self.swap_discount(t)) / annuity + draw();
            out.push(SyntheticQuote {
                class_id: 1,
                id: format!("SWAP{k:03}"),
                terms: QuoteTerms::Swap(SwapSpec::spot(t, rate, accrual)),
            });
        }
        Ok(out)
    }

    pub fn instruments(&self) -> Result<Vec<Instrument>> {
        self.quotes()?.iter().map(SyntheticQuote::instrument).collect()
    }
}
