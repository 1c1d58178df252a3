//! Fixed-income instruments as rows of discounted cash flows.
//!
//! Every instrument is priced as `P = Σ_j C_j g(x_j)`. Bonds carry their dirty
//! price; spot-starting swaps are normalized to price one and forward-starting
//! swaps to price zero, with the start-date notional entering as a `-1` flow.
//! All dates are year fractions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CurveError, Result};

/// Absolute tolerance (years) under which two cash-flow dates are the same grid point.
pub const DATE_TOLERANCE: f64 = 1e-9;

const YTM_BRACKET: (f64, f64) = (-1.0, 2.0);
const YTM_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CashFlow {
    pub time: f64,
    pub amount: f64,
}

impl CashFlow {
    pub fn new(time: f64, amount: f64) -> Self {
        Self { time, amount }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    class_id: usize,
    id: String,
    price: f64,
    flows: Vec<CashFlow>,
    /// Exact-fit quote (infinite weight).
    exact: bool,
}

impl Instrument {
    pub fn new(class_id: usize, id: impl Into<String>, price: f64, flows: Vec<CashFlow>) -> Result<Self> {
        let id = id.into();
        if flows.is_empty() {
            return invalid(format!("instrument {id} has no cash flows"));
        }
        if !price.is_finite() {
            return invalid(format!("instrument {id} has non-finite price {price}"));
        }
        let mut prev = 0.0;
        for f in &flows {
            if !(f.time.is_finite() && f.time > prev) {
                return invalid(format!(
                    "instrument {id}: cash-flow dates must be positive and strictly increasing (got {} after {prev})",
                    f.time
                ));
            }
            if !f.amount.is_finite() {
                return invalid(format!("instrument {id}: non-finite cash flow at {}", f.time));
            }
            prev = f.time;
        }
        Ok(Self {
            class_id,
            id,
            price,
            flows,
            exact: false,
        })
    }

    /// Marks the quote as an exact-fit constraint.
    pub fn exact(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }

    pub fn with_price(mut self, price: f64) -> Self {
        self.price = price;
        self
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn flows(&self) -> &[CashFlow] {
        &self.flows
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Final cash-flow date.
    pub fn maturity(&self) -> f64 {
        self.flows[self.flows.len() - 1].time
    }

    /// Model price under a discount curve.
    pub fn reprice(&self, discount: impl Fn(f64) -> f64) -> f64 {
        self.flows.iter().map(|f| f.amount * discount(f.time)).sum()
    }

    /// `Π(Y) = Σ_j C_j e^{-Y x_j}`.
    pub fn price_at_yield(&self, y: f64) -> f64 {
        self.flows.iter().map(|f| f.amount * (-y * f.time).exp()).sum()
    }

    /// `Π'(Y) = -Σ_j x_j C_j e^{-Y x_j}`.
    pub fn price_derivative_at_yield(&self, y: f64) -> f64 {
        -self
            .flows
            .iter()
            .map(|f| f.time * f.amount * (-y * f.time).exp())
            .sum::<f64>()
    }

    /// Market-implied yield to maturity, `Π(Y) = P`.
    pub fn ytm(&self) -> Result<f64> {
        self.ytm_for_price(self.price)
    }

    /// Yield solving `Π(Y) = price` by Newton steps safeguarded with bisection.
    pub fn ytm_for_price(&self, price: f64) -> Result<f64> {
        let f = |y: f64| self.price_at_yield(y) - price;
        let (mut lo, mut hi) = YTM_BRACKET;
        let (mut f_lo, mut f_hi) = (f(lo), f(hi));
        let mut widen = 0;
        while f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
            if widen == 4 {
                return Err(CurveError::NoYieldBracket { lo, hi });
            }
            lo -= 1.0;
            hi *= 2.0;
            f_lo = f(lo);
            f_hi = f(hi);
            widen += 1;
        }
        if f_lo == 0.0 {
            return Ok(lo);
        }
        if f_hi == 0.0 {
            return Ok(hi);
        }
        // orient so that f(lo) < 0 < f(hi)
        if f_lo > 0.0 {
            std::mem::swap(&mut lo, &mut hi);
        }

        let mut y = 0.5 * (lo + hi);
        let mut best = (f64::INFINITY, y);
        for _ in 0..200 {
            let fy = f(y);
            if fy.abs() < best.0 {
                best = (fy.abs(), y);
            }
            if fy.abs() <= YTM_TOLERANCE {
                return Ok(y);
            }
            if fy < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let d = self.price_derivative_at_yield(y);
            let newton = y - fy / d;
            let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
            y = if d != 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (b - a).abs() <= f64::EPSILON * (1.0 + y.abs()) {
                break;
            }
        }
        Ok(best.1)
    }

    /// Duration weight `ω = (1/M) Π'(Y)^{-2}` at the market-implied yield.
    pub fn duration_weight(&self, total_count: usize) -> Result<f64> {
        if total_count == 0 {
            return invalid("duration weight needs a positive instrument count");
        }
        let y = self.ytm()?;
        let d = self.price_derivative_at_yield(y);
        if d == 0.0 || !d.is_finite() {
            return invalid(format!("instrument {} has degenerate duration at yield {y}", self.id));
        }
        Ok(1.0 / (total_count as f64 * d * d))
    }
}

fn check_frequency(frequency: u32) -> Result<()> {
    match frequency {
        1 | 2 | 4 | 12 => Ok(()),
        other => invalid(format!("coupon frequency must be 1, 2, 4 or 12, got {other}")),
    }
}

/// Fixed-coupon bond with unit notional. Coupons `coupon_rate / frequency` are
/// scheduled backwards from maturity.
pub fn build_bond(
    class_id: usize,
    id: impl Into<String>,
    coupon_rate: f64,
    frequency: u32,
    maturity: f64,
    dirty_price: f64,
) -> Result<Instrument> {
    check_frequency(frequency)?;
    if !(maturity.is_finite() && maturity > 0.0) {
        return invalid(format!("bond maturity must be positive, got {maturity}"));
    }
    if !(coupon_rate.is_finite() && coupon_rate >= 0.0) {
        return invalid(format!("bond coupon must be non-negative, got {coupon_rate}"));
    }
    let period = 1.0 / frequency as f64;
    let coupon = coupon_rate / frequency as f64;
    let mut flows = Vec::new();
    let mut k = 0u32;
    loop {
        let t = maturity - k as f64 * period;
        if t <= DATE_TOLERANCE {
            break;
        }
        let amount = if k == 0 { coupon + 1.0 } else { coupon };
        if amount != 0.0 {
            flows.push(CashFlow::new(t, amount));
        }
        k += 1;
    }
    flows.reverse();
    Instrument::new(class_id, id, dirty_price, flows)
}

/// Fixed-float swap, optionally with a basis spread on the floating leg (XCCY).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapSpec {
    pub start: f64,
    pub maturity: f64,
    pub fixed_rate: f64,
    pub fixed_accrual: f64,
    pub float_accrual: f64,
    pub basis_spread: f64,
}

impl SwapSpec {
    /// Plain spot-starting swap with equal accruals on both legs.
    pub fn spot(maturity: f64, fixed_rate: f64, accrual: f64) -> Self {
        Self {
            start: 0.0,
            maturity,
            fixed_rate,
            fixed_accrual: accrual,
            float_accrual: accrual,
            basis_spread: 0.0,
        }
    }

    pub fn forward(start: f64, maturity: f64, fixed_rate: f64, accrual: f64) -> Self {
        Self {
            start,
            ..Self::spot(maturity, fixed_rate, accrual)
        }
    }

    fn periods(&self, accrual: f64, leg: &str) -> Result<usize> {
        if !(accrual.is_finite() && accrual > 0.0) {
            return invalid(format!("{leg} accrual must be positive, got {accrual}"));
        }
        let n = (self.maturity - self.start) / accrual;
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > 1e-9 * n.max(1.0) {
            return invalid(format!(
                "{leg} accrual {accrual} does not divide the swap tenor {}",
                self.maturity - self.start
            ));
        }
        Ok(rounded as usize)
    }

    fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.start >= 0.0) {
            return invalid(format!("swap start must be non-negative, got {}", self.start));
        }
        if !(self.maturity.is_finite() && self.maturity > self.start) {
            return invalid(format!(
                "swap maturity {} must exceed its start {}",
                self.maturity, self.start
            ));
        }
        if !self.fixed_rate.is_finite() || !self.basis_spread.is_finite() {
            return invalid("swap rate and spread must be finite");
        }
        Ok(())
    }
}

/// Swap in discounted-cash-flow form: price 1 (spot) or 0 (forward, with a `-1`
/// flow at the start date), `ΔR` on every fixed date plus the notional at
/// maturity, and `δs` on every floating date when a basis spread is set.
pub fn build_swap(class_id: usize, id: impl Into<String>, spec: &SwapSpec) -> Result<Instrument> {
    spec.validate()?;
    let n_fixed = spec.periods(spec.fixed_accrual, "fixed")?;
    let n_float = spec.periods(spec.float_accrual, "float")?;

    let mut flows: Vec<CashFlow> = Vec::with_capacity(n_fixed + n_float + 1);
    let forward = spec.start > 0.0;
    if forward {
        flows.push(CashFlow::new(spec.start, -1.0));
    }
    let coupon = spec.fixed_accrual * spec.fixed_rate;
    for i in 1..=n_fixed {
        let t = if i == n_fixed {
            spec.maturity
        } else {
            spec.start + i as f64 * spec.fixed_accrual
        };
        let amount = if i == n_fixed { 1.0 + coupon } else { coupon };
        flows.push(CashFlow::new(t, amount));
    }
    if spec.basis_spread != 0.0 {
        let spread = spec.float_accrual * spec.basis_spread;
        for j in 1..=n_float {
            let t = if j == n_float {
                spec.maturity
            } else {
                spec.start + j as f64 * spec.float_accrual
            };
            flows.push(CashFlow::new(t, spread));
        }
    }
    let flows = merge_flows(flows);
    let price = if forward { 0.0 } else { 1.0 };
    Instrument::new(class_id, id, price, flows)
}

/// Sorts by date, sums flows closer than [`DATE_TOLERANCE`] and drops zero amounts.
fn merge_flows(mut flows: Vec<CashFlow>) -> Vec<CashFlow> {
    flows.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut out: Vec<CashFlow> = Vec::with_capacity(flows.len());
    for f in flows {
        match out.last_mut() {
            Some(last) if (f.time - last.time).abs() <= DATE_TOLERANCE => last.amount += f.amount,
            _ => out.push(f),
        }
    }
    out.retain(|f| f.amount != 0.0);
    out
}

/// Forward exchange rate `F_ab(x) = X_ab(0) g_{a:b}(x) / g_b(x)`, where
/// `g_{a:b}` is the basis-adjusted discount curve of currency `a`.
pub fn fx_forward(spot: f64, basis_discount: f64, quote_discount: f64) -> Result<f64> {
    if !(quote_discount > 0.0) {
        return invalid(format!(
            "quote-currency discount factor must be positive, got {quote_discount}"
        ));
    }
    Ok(spot * basis_discount / quote_discount)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Duration,
    Unit,
}

/// One row of the stacked cash-flow matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CashFlowRow {
    pub class_id: usize,
    pub id: String,
    pub price: f64,
    /// `f64::INFINITY` for exact-fit quotes.
    pub weight: f64,
    /// `(grid column, amount)`, columns strictly increasing.
    pub entries: Vec<(usize, f64)>,
    pub maturity: f64,
}

impl CashFlowRow {
    pub fn is_exact(&self) -> bool {
        self.weight.is_infinite()
    }

    /// `Σ_j C_ij v_j` for values on the grid.
    pub fn dot(&self, values: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, c)| c * values[j]).sum()
    }
}

/// Block-diagonal cash-flow matrix `C` on a shared maturity grid, with prices
/// and weights. Rows are ordered by class, keeping input order within a class.
#[derive(Debug, Clone, PartialEq)]
pub struct CashFlowMatrix {
    num_classes: usize,
    grid: Vec<f64>,
    rows: Vec<CashFlowRow>,
    instruments: Vec<Instrument>,
}

impl CashFlowMatrix {
    pub fn assemble(instruments: &[Instrument], num_classes: usize, weight_mode: WeightMode) -> Result<Self> {
        if num_classes == 0 {
            return invalid("at least one product class is required");
        }
        for inst in instruments {
            if inst.class_id >= num_classes {
                return invalid(format!(
                    "instrument {} has class {} but only {num_classes} classes are configured",
                    inst.id, inst.class_id
                ));
            }
        }
        let mut ordered: Vec<Instrument> = instruments.to_vec();
        ordered.sort_by_key(|i| i.class_id);

        let mut dates: Vec<f64> = ordered
            .iter()
            .flat_map(|i| i.flows.iter().map(|f| f.time))
            .collect();
        dates.sort_by(f64::total_cmp);
        let mut grid: Vec<f64> = Vec::with_capacity(dates.len());
        for d in dates {
            match grid.last() {
                Some(&last) if d - last <= DATE_TOLERANCE => {}
                _ => grid.push(d),
            }
        }

        let m = ordered.len();
        let mut rows = Vec::with_capacity(m);
        for inst in &ordered {
            let weight = if inst.exact {
                f64::INFINITY
            } else {
                match weight_mode {
                    WeightMode::Unit => 1.0,
                    WeightMode::Duration => inst.duration_weight(m)?,
                }
            };
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(inst.flows.len());
            for f in &inst.flows {
                let col = grid_column(&grid, f.time).ok_or_else(|| {
                    CurveError::InvalidInput(format!("cash-flow date {} missing from grid", f.time))
                })?;
                match entries.last_mut() {
                    Some(last) if last.0 == col => last.1 += f.amount,
                    _ => entries.push((col, f.amount)),
                }
            }
            rows.push(CashFlowRow {
                class_id: inst.class_id,
                id: inst.id.clone(),
                price: inst.price,
                weight,
                entries,
                maturity: inst.maturity(),
            });
        }
        Ok(Self {
            num_classes,
            grid,
            rows,
            instruments: ordered,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn rows(&self) -> &[CashFlowRow] {
        &self.rows
    }

    /// Instruments in row order.
    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    pub fn num_instruments(&self) -> usize {
        self.rows.len()
    }

    pub fn class_count(&self, class_id: usize) -> usize {
        self.rows.iter().filter(|r| r.class_id == class_id).count()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.price).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.weight).collect()
    }

    /// Keeps the given rows (in the given order) with their weights and the full grid.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            num_classes: self.num_classes,
            grid: self.grid.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            instruments: indices.iter().map(|&i| self.instruments[i].clone()).collect(),
        }
    }

    /// Rows of one class as a single-class problem on the same grid, weights unchanged.
    pub fn single_class(&self, class_id: usize) -> Self {
        let mut rows = Vec::new();
        let mut instruments = Vec::new();
        for (r, inst) in self.rows.iter().zip(&self.instruments) {
            if r.class_id == class_id {
                rows.push(CashFlowRow { class_id: 0, ..r.clone() });
                let mut inst = inst.clone();
                inst.class_id = 0;
                instruments.push(inst);
            }
        }
        Self {
            num_classes: 1,
            grid: self.grid.clone(),
            rows,
            instruments,
        }
    }

    /// Dense `M_a × N` block of class `a`.
    pub fn block(&self, class_id: usize) -> nalgebra::DMatrix<f64> {
        let rows: Vec<&CashFlowRow> = self.rows.iter().filter(|r| r.class_id == class_id).collect();
        let mut out = nalgebra::DMatrix::zeros(rows.len(), self.grid.len());
        for (i, r) in rows.iter().enumerate() {
            for &(j, c) in &r.entries {
                out[(i, j)] = c;
            }
        }
        out
    }

    /// Dense block-diagonal `M × AN` matrix acting on class-major stacked curve values.
    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.grid.len();
        let mut out = nalgebra::DMatrix::zeros(self.rows.len(), self.num_classes * n);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, c) in &r.entries {
                out[(i, r.class_id * n + j)] = c;
            }
        }
        out
    }
}

fn grid_column(grid: &[f64], t: f64) -> Option<usize> {
    let idx = grid.partition_point(|&g| g < t - DATE_TOLERANCE);
    (idx < grid.len() && (grid[idx] - t).abs() <= DATE_TOLERANCE).then_some(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flows(inst: &Instrument) -> Vec<(f64, f64)> {
        inst.flows().iter().map(|f| (f.time, f.amount)).collect()
    }

    fn assert_flows(inst: &Instrument, expected: &[(f64, f64)]) {
        let got = flows(inst);
        assert_eq!(got.len(), expected.len(), "{got:?}");
        for ((t, c), (et, ec)) in got.iter().zip(expected) {
            assert_relative_eq!(*t, *et, epsilon = 1e-12);
            assert_relative_eq!(*c, *ec, epsilon = 1e-15);
        }
    }

    #[test]
    fn bond_schedules() {
        let b = build_bond(0, "b", 0.05, 1, 2.0, 1.0).unwrap();
        assert_flows(&b, &[(1.0, 0.05), (2.0, 1.05)]);
        assert_eq!(b.price(), 1.0);

        let z = build_bond(0, "z", 0.0, 1, 1.0, 0.97).unwrap();
        assert_flows(&z, &[(1.0, 1.0)]);

        let s = build_bond(0, "s", 0.04, 2, 1.5, 1.01).unwrap();
        assert_flows(&s, &[(0.5, 0.02), (1.0, 0.02), (1.5, 1.02)]);

        let stub = build_bond(0, "stub", 0.04, 1, 0.3, 1.0).unwrap();
        assert_flows(&stub, &[(0.3, 1.04)]);
    }

    #[test]
    fn bond_rejects_bad_terms() {
        assert!(build_bond(0, "x", 0.05, 3, 2.0, 1.0).is_err());
        assert!(build_bond(0, "x", 0.05, 1, 0.0, 1.0).is_err());
        assert!(build_bond(0, "x", -0.01, 1, 2.0, 1.0).is_err());
    }

    #[test]
    fn swap_cash_flows() {
        let spot = build_swap(0, "s", &SwapSpec::spot(1.0, 0.04, 1.0)).unwrap();
        assert_eq!(spot.price(), 1.0);
        assert_flows(&spot, &[(1.0, 1.04)]);

        let fwd = build_swap(0, "f", &SwapSpec::forward(1.0, 2.0, 0.03, 1.0)).unwrap();
        assert_eq!(fwd.price(), 0.0);
        assert_flows(&fwd, &[(1.0, -1.0), (2.0, 1.03)]);

        let xccy = SwapSpec {
            start: 0.0,
            maturity: 1.0,
            fixed_rate: 0.04,
            fixed_accrual: 1.0,
            float_accrual: 0.25,
            basis_spread: -0.002,
        };
        let x = build_swap(1, "x", &xccy).unwrap();
        assert_eq!(x.price(), 1.0);
        assert_flows(
            &x,
            &[(0.25, -0.0005), (0.5, -0.0005), (0.75, -0.0005), (1.0, 1.04 - 0.0005)],
        );
    }

    #[test]
    fn swap_rejects_inconsistent_accrual() {
        assert!(build_swap(0, "s", &SwapSpec::spot(1.0, 0.04, 0.3)).is_err());
        assert!(build_swap(0, "s", &SwapSpec::forward(2.0, 1.0, 0.04, 1.0)).is_err());
        let mut bad = SwapSpec::spot(2.0, 0.04, 1.0);
        bad.float_accrual = 0.7;
        assert!(build_swap(0, "s", &bad).is_err());
    }

    #[test]
    fn ytm_examples() {
        let z = Instrument::new(0, "z", 1.0, vec![CashFlow::new(1.0, 1.05)]).unwrap();
        assert_relative_eq!(z.ytm().unwrap(), 0.048_790_164_169_432_003, max_relative = 1e-12);

        let u = Instrument::new(0, "u", (-0.03f64).exp(), vec![CashFlow::new(1.0, 1.0)]).unwrap();
        assert_relative_eq!(u.ytm().unwrap(), 0.03, max_relative = 1e-12);

        let s = build_swap(0, "s", &SwapSpec::spot(5.0, 0.04, 0.5)).unwrap();
        let y = s.ytm().unwrap();
        assert_relative_eq!(y, 0.039_605_254_592_359_426, max_relative = 1e-11);
        assert!((s.price_at_yield(y) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ytm_without_root_fails() {
        // all-positive flows can never price to a negative value
        let i = Instrument::new(0, "n", -1.0, vec![CashFlow::new(1.0, 1.0)]).unwrap();
        assert!(matches!(i.ytm(), Err(CurveError::NoYieldBracket { .. })));
    }

    #[test]
    fn forward_swap_yield_zeroes_value() {
        let f = build_swap(0, "f", &SwapSpec::forward(2.0, 7.0, 0.035, 1.0)).unwrap();
        let y = f.ytm().unwrap();
        assert!(f.price_at_yield(y).abs() <= 1e-12);
        assert_relative_eq!(y, (1.035f64).ln(), max_relative = 1e-10);
    }

    #[test]
    fn duration_weights() {
        let unit = Instrument::new(0, "u", 1.0, vec![CashFlow::new(1.0, 1.0)]).unwrap();
        assert_relative_eq!(unit.duration_weight(1).unwrap(), 1.0, max_relative = 1e-12);

        let t = 7.5;
        let zc = Instrument::new(0, "z", 1.0, vec![CashFlow::new(t, 1.0)]).unwrap();
        assert_relative_eq!(zc.duration_weight(1).unwrap(), 1.0 / (t * t), max_relative = 1e-10);

        let b = build_bond(0, "b", 0.05, 1, 2.0, 1.0).unwrap();
        let y = b.ytm().unwrap();
        let h = 1e-6;
        let fd = (b.price_at_yield(y + h) - b.price_at_yield(y - h)) / (2.0 * h);
        let w = b.duration_weight(4).unwrap();
        assert_relative_eq!(w, 1.0 / (4.0 * fd * fd), max_relative = 1e-8);
        assert!(w > 0.0);
    }

    #[test]
    fn fx_forward_examples() {
        assert_relative_eq!(fx_forward(1.3, 0.9, 0.9).unwrap(), 1.3);
        assert_relative_eq!(fx_forward(0.9, 0.95, 0.97).unwrap(), 0.881_443_298_969_072_2, max_relative = 1e-14);
        // a basis-depressed curve lowers the forward below the textbook parity level
        let cip = fx_forward(0.9, 0.96, 0.97).unwrap();
        assert!(fx_forward(0.9, 0.95, 0.97).unwrap() < cip);
        assert!(fx_forward(0.9, 0.95, 0.0).is_err());
        assert!(fx_forward(0.9, 0.95, -0.5).is_err());
    }

    #[test]
    fn assemble_shares_grid_columns() {
        let a = build_bond(0, "a", 0.05, 1, 2.0, 1.0).unwrap();
        let b = Instrument::new(0, "b", 0.97, vec![CashFlow::new(1.0 + 1e-12, 1.0)]).unwrap();
        let cfm = CashFlowMatrix::assemble(&[a, b], 1, WeightMode::Unit).unwrap();
        assert_eq!(cfm.grid(), &[1.0, 2.0]);
        assert_eq!(cfm.rows()[1].entries, vec![(0, 1.0)]);
        assert!(cfm.weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn assemble_allows_empty_class() {
        let a = build_bond(0, "a", 0.05, 1, 2.0, 1.0).unwrap();
        let cfm = CashFlowMatrix::assemble(&[a], 2, WeightMode::Duration).unwrap();
        assert_eq!(cfm.block(1).nrows(), 0);
        assert_eq!(cfm.block(1).ncols(), 2);
        assert_eq!(cfm.dense().shape(), (1, 4));

        let empty = CashFlowMatrix::assemble(&[], 2, WeightMode::Duration).unwrap();
        assert_eq!(empty.num_instruments(), 0);
        assert!(empty.grid().is_empty());
    }

    #[test]
    fn assemble_orders_rows_by_class() {
        let s = build_swap(1, "s", &SwapSpec::spot(3.0, 0.03, 1.0)).unwrap();
        let b = build_bond(0, "b", 0.05, 2, 2.0, 1.0).unwrap();
        let cfm = CashFlowMatrix::assemble(&[s, b], 2, WeightMode::Duration).unwrap();
        assert_eq!(cfm.rows()[0].id, "b");
        assert_eq!(cfm.rows()[1].id, "s");
        assert!(CashFlowMatrix::assemble(&[build_bond(3, "x", 0.0, 1, 1.0, 1.0).unwrap()], 2, WeightMode::Unit).is_err());
    }

    #[test]
    fn instrument_validation() {
        assert!(Instrument::new(0, "e", 1.0, vec![]).is_err());
        assert!(Instrument::new(0, "n", 1.0, vec![CashFlow::new(-1.0, 1.0)]).is_err());
        assert!(Instrument::new(0, "d", 1.0, vec![CashFlow::new(2.0, 1.0), CashFlow::new(1.0, 1.0)]).is_err());
    }
}
