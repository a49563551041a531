//! Carbon arithmetic: collapsing dated XCA flows into one summary number.
//!
//! Past flows decay as atmospheric carbon is slowly removed, so they are
//! weighted by `exp(rate * years_elapsed)` with a small negative rate. Future
//! flows have not started decaying and count at face value. Contributions
//! are converted to exact rationals before summation, so totals do not
//! depend on the order flows are added in.

use std::fmt;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::flowgen::{CarbonFlow, FlowSource, FlowStatus};
use crate::numeric::{self, Quantity};
use crate::temporal::CivilDate;

/// Length of a decay year in days.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Guard rail for the annual decay rate (continuous compounding).
pub const MIN_DECAY_RATE: f64 = -0.0035;
pub const MAX_DECAY_RATE: f64 = -0.0002;
pub const DEFAULT_DECAY_RATE: f64 = -0.0020;

/// Counterparty names used on offset flows.
pub const OFFSET_PROVIDER: &str = "OFFSET-MARKET";
pub const OFFSET_HOLDER: &str = "PORTFOLIO";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams {
    annual_rate: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            annual_rate: DEFAULT_DECAY_RATE,
        }
    }
}

impl DecayParams {
    /// A rate inside `[MIN_DECAY_RATE, MAX_DECAY_RATE]`.
    pub fn new(annual_rate: f64) -> Result<Self> {
        if !annual_rate.is_finite() {
            return Err(Error::InvalidDecayRate(annual_rate));
        }
        if !(MIN_DECAY_RATE..=MAX_DECAY_RATE).contains(&annual_rate) {
            return Err(Error::DecayRateOutOfRange {
                rate: annual_rate,
                min: MIN_DECAY_RATE,
                max: MAX_DECAY_RATE,
            });
        }
        Ok(Self { annual_rate })
    }

    /// Any finite rate ≤ 0, bypassing the guard rail. Zero disables decay.
    pub fn forced(annual_rate: f64) -> Result<Self> {
        if !annual_rate.is_finite() || annual_rate > 0.0 {
            return Err(Error::InvalidDecayRate(annual_rate));
        }
        Ok(Self { annual_rate })
    }

    pub fn from_bps(bps: f64, force: bool) -> Result<Self> {
        let rate = bps / 10_000.0;
        if force {
            Self::forced(rate)
        } else {
            Self::new(rate)
        }
    }

    pub fn annual_rate(&self) -> f64 {
        self.annual_rate
    }
}

/// 1 for flows on or after `as_of`; `exp(rate * days / 365.25)` for past
/// flows.
pub fn decay_factor(flow_date: CivilDate, as_of: CivilDate, params: &DecayParams) -> f64 {
    if flow_date >= as_of {
        return 1.0;
    }
    let years = (as_of - flow_date).num_days() as f64 / DAYS_PER_YEAR;
    (params.annual_rate * years).exp()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarbonSummary {
    pub as_of: CivilDate,
    /// Decayed sum of flows dated before `as_of`.
    pub past_accumulated: Quantity,
    /// Face-value sum of flows dated on or after `as_of`.
    pub future_undiscounted: Quantity,
    pub total: Quantity,
}

impl CarbonSummary {
    pub fn zero(as_of: CivilDate) -> Self {
        Self {
            as_of,
            past_accumulated: Quantity::zero(),
            future_undiscounted: Quantity::zero(),
            total: Quantity::zero(),
        }
    }

    fn add(&mut self, past: &Quantity, future: &Quantity) {
        self.past_accumulated += past;
        self.future_undiscounted += future;
        self.total = &self.past_accumulated + &self.future_undiscounted;
    }
}

impl fmt::Display for CarbonSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "as of {}: past {} + future {} = {} tCO2e",
            self.as_of,
            numeric::format_fixed(&self.past_accumulated, 6),
            numeric::format_fixed(&self.future_undiscounted, 6),
            numeric::format_fixed(&self.total, 6)
        )
    }
}

/// Weighted contribution of one flow (exact product of amount and factor).
pub fn decayed_amount(flow: &CarbonFlow, as_of: CivilDate, params: &DecayParams) -> Quantity {
    let factor = decay_factor(flow.date, as_of, params);
    if factor == 1.0 {
        return flow.amount_tco2e.clone();
    }
    let factor = numeric::from_f64(factor).expect("decay factor is finite");
    &flow.amount_tco2e * factor
}

pub fn summarize(flows: &[CarbonFlow], as_of: CivilDate, params: &DecayParams) -> CarbonSummary {
    let mut summary = CarbonSummary::zero(as_of);
    for flow in flows {
        let weighted = decayed_amount(flow, as_of, params);
        if flow.date < as_of {
            summary.add(&weighted, &Quantity::zero());
        } else {
            summary.add(&Quantity::zero(), &weighted);
        }
    }
    summary
}

/// Component-wise sum of per-product summaries, which must share `as_of`.
pub fn net_portfolio(summaries: &[(String, CarbonSummary)]) -> Result<CarbonSummary> {
    let (_, first) = summaries.first().ok_or(Error::EmptyPortfolio)?;
    let mut net = CarbonSummary::zero(first.as_of);
    for (strategy_id, s) in summaries {
        if s.as_of != net.as_of {
            return Err(Error::AsOfMismatch {
                strategy_id: strategy_id.clone(),
                expected: net.as_of,
                found: s.as_of,
            });
        }
        net.add(&s.past_accumulated, &s.future_undiscounted);
    }
    Ok(net)
}

/// The flow that brings a summary to zero: `-total`, dated `as_of` so its
/// decay factor is exactly 1.
pub fn required_offset(s: &CarbonSummary) -> CarbonFlow {
    CarbonFlow {
        strategy_id: OFFSET_HOLDER.to_string(),
        date: s.as_of,
        amount_tco2e: -s.total.clone(),
        payer: OFFSET_PROVIDER.to_string(),
        receiver: OFFSET_HOLDER.to_string(),
        status: FlowStatus::Fixed,
        source: FlowSource::Offset,
    }
}

/// Converts tCO2e to pico-degrees Celsius using 1,150 Gt ↔ 2 °C, i.e. a
/// factor of 2 / 1.15 = 40/23 pico-°C per tonne.
pub fn to_pico_degrees(amount_tco2e: &Quantity) -> Quantity {
    amount_tco2e * Quantity::new(40.into(), 23.into())
}

pub const SUMMARY_CSV_HEADER: &str =
    "strategy_id,as_of,past_tco2e,future_tco2e,total_tco2e,total_pico_degC";

/// One summary report row; quantities rounded to 6 decimals.
pub fn summary_row(strategy_id: &str, s: &CarbonSummary) -> [String; 6] {
    [
        strategy_id.to_string(),
        s.as_of.to_string(),
        numeric::format_fixed(&s.past_accumulated, 6),
        numeric::format_fixed(&s.future_undiscounted, 6),
        numeric::format_fixed(&s.total, 6),
        numeric::format_fixed(&to_pico_degrees(&s.total), 6),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgen::generate_carbon_flows;
    use crate::temporal::Calendar;
    use crate::termsheet::parse_product;
    use chrono::Duration;
    use num_traits::Signed;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> CivilDate {
        CivilDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn flow(date: CivilDate, amount: i64) -> CarbonFlow {
        CarbonFlow {
            strategy_id: "S".into(),
            date,
            amount_tco2e: numeric::from_int(amount),
            payer: "B".into(),
            receiver: "A".into(),
            status: FlowStatus::Fixed,
            source: FlowSource::Shorthand,
        }
    }

    #[test]
    fn guard_rail() {
        assert!(DecayParams::new(-0.0020).is_ok());
        assert!(DecayParams::new(-0.0035).is_ok());
        assert!(DecayParams::new(-0.0002).is_ok());
        assert!(matches!(
            DecayParams::new(-0.01),
            Err(Error::DecayRateOutOfRange { .. })
        ));
        assert!(DecayParams::new(0.0).is_err());
        assert!(DecayParams::forced(0.0).is_ok());
        assert!(DecayParams::forced(-0.01).is_ok());
        assert!(DecayParams::forced(0.001).is_err());
        assert!(DecayParams::forced(f64::NAN).is_err());
        assert_eq!(
            DecayParams::from_bps(-20.0, false).unwrap().annual_rate(),
            -0.002
        );
    }

    #[test]
    fn factor_examples() {
        let p = DecayParams::default();
        let as_of = d(2030, 1, 1);
        assert_eq!(decay_factor(as_of, as_of, &p), 1.0);
        assert_eq!(decay_factor(d(2040, 1, 1), as_of, &p), 1.0);
        let century_ago = as_of - Duration::days(36_525);
        assert!((decay_factor(century_ago, as_of, &p) - (-0.2f64).exp()).abs() < 1e-12);
        assert!((decay_factor(century_ago, as_of, &p) - 0.81873).abs() < 1e-5);
    }

    #[test]
    fn summary_examples() {
        let p = DecayParams::default();
        let as_of = d(2030, 1, 1);
        assert_eq!(summarize(&[], as_of, &p), CarbonSummary::zero(as_of));
        let s = summarize(&[flow(d(2035, 1, 1), 100)], as_of, &p);
        assert_eq!(s.total, numeric::from_int(100));
        let flows = [
            flow(as_of - Duration::days(36_525), 100),
            flow(as_of + Duration::days(1), 100),
        ];
        let s = summarize(&flows, as_of, &p);
        assert!((numeric::to_f64(&s.past_accumulated) - 100.0 * (-0.2f64).exp()).abs() < 1e-9);
        assert_eq!(s.future_undiscounted, numeric::from_int(100));
        assert!((numeric::to_f64(&s.total) - 181.873).abs() < 1e-3);
        assert_eq!(s.total, &s.past_accumulated + &s.future_undiscounted);
    }

    #[test]
    fn flow_on_as_of_counts_as_future() {
        let as_of = d(2030, 1, 1);
        let s = summarize(&[flow(as_of, 7)], as_of, &DecayParams::default());
        assert_eq!(s.future_undiscounted, numeric::from_int(7));
        assert!(s.past_accumulated.is_zero());
    }

    #[test]
    fn netting() {
        let as_of = d(2030, 1, 1);
        let p = DecayParams::default();
        let a = summarize(&[flow(d(2031, 1, 1), 500)], as_of, &p);
        let b = summarize(&[flow(d(2031, 1, 1), -500)], as_of, &p);
        let net = net_portfolio(&[("a".into(), a.clone()), ("b".into(), b)]).unwrap();
        assert!(net.total.is_zero());
        assert_eq!(net_portfolio(&[("a".into(), a.clone())]).unwrap(), a);
        assert!(matches!(net_portfolio(&[]), Err(Error::EmptyPortfolio)));
        let other = CarbonSummary::zero(d(2031, 1, 1));
        assert!(matches!(
            net_portfolio(&[("a".into(), a), ("c".into(), other)]),
            Err(Error::AsOfMismatch { .. })
        ));
    }

    #[test]
    fn offsets() {
        let as_of = d(2030, 1, 1);
        let mut s = CarbonSummary::zero(as_of);
        s.add(&numeric::from_int(250_000), &Quantity::zero());
        let off = required_offset(&s);
        assert_eq!(off.amount_tco2e, numeric::from_int(-250_000));
        assert_eq!(off.date, as_of);
        assert!(required_offset(&CarbonSummary::zero(as_of))
            .amount_tco2e
            .is_zero());
    }

    #[test]
    fn forest_offset_in_2072() {
        let p = parse_product(include_str!("../fixtures/forest.json")).unwrap();
        let mut flows = generate_carbon_flows(&p, &Calendar::default()).unwrap();
        let as_of = d(2072, 1, 1);
        let params = DecayParams::default();
        let s = summarize(&flows, as_of, &params);
        assert!(s.future_undiscounted.is_zero());
        // Every flow is in the past, so the decayed total is smaller in magnitude.
        let raw = numeric::to_f64(&s.total);
        assert!(raw > -250_000.0 + 500.0 && raw < 0.0);
        let off = required_offset(&s);
        assert_eq!(off.amount_tco2e, -s.total.clone());
        flows.push(off);
        assert!(summarize(&flows, as_of, &params).total.is_zero());
    }

    #[test]
    fn pico_degrees() {
        let anchor = numeric::from_int(1_150_000_000_000);
        assert_eq!(
            to_pico_degrees(&anchor),
            numeric::from_int(2_000_000_000_000)
        );
        assert!(to_pico_degrees(&Quantity::zero()).is_zero());
        let one = numeric::to_f64(&to_pico_degrees(&numeric::from_int(1)));
        assert!((one - 1.73913).abs() / 1.73913 < 1e-6);
    }

    #[test]
    fn summary_csv_row() {
        let s = summarize(
            &[flow(d(2031, 1, 1), 23)],
            d(2030, 1, 1),
            &DecayParams::default(),
        );
        assert_eq!(summary_row("S", &s).join(","), "S,2030-01-01,0,23,23,40");
    }

    fn dated_flows() -> impl Strategy<Value = Vec<CarbonFlow>> {
        prop::collection::vec((0i64..60_000, -1_000_000i64..1_000_000), 0..40).prop_map(|v| {
            v.into_iter()
                .map(|(days, amt)| flow(d(1950, 1, 1) + Duration::days(days), amt))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn factor_is_one_in_future_and_decreasing_in_past(a in 0i64..50_000, b in 0i64..50_000, bps in -35.0f64..-2.0) {
            let p = DecayParams::from_bps(bps, false).unwrap();
            let as_of = d(2030, 1, 1);
            prop_assert_eq!(decay_factor(as_of + Duration::days(a), as_of, &p), 1.0);
            let (near, far) = (a.min(b), a.max(b));
            let f_near = decay_factor(as_of - Duration::days(near + 1), as_of, &p);
            let f_far = decay_factor(as_of - Duration::days(far + 1), as_of, &p);
            prop_assert!(f_near < 1.0 && f_near > 0.0);
            if far > near {
                prop_assert!(f_far < f_near);
            }
        }

        #[test]
        fn summary_additive_and_order_free(xs in dated_flows(), ys in dated_flows()) {
            let p = DecayParams::default();
            let as_of = d(2025, 6, 30);
            let both: Vec<_> = xs.iter().chain(&ys).cloned().collect();
            let whole = summarize(&both, as_of, &p);
            let sx = summarize(&xs, as_of, &p);
            let sy = summarize(&ys, as_of, &p);
            prop_assert_eq!(&whole.total, &(&sx.total + &sy.total));
            let mut reversed = both.clone();
            reversed.reverse();
            prop_assert_eq!(summarize(&reversed, as_of, &p), whole);
        }

        #[test]
        fn zero_rate_is_plain_sum(xs in dated_flows()) {
            let p = DecayParams::forced(0.0).unwrap();
            let s = summarize(&xs, d(2025, 6, 30), &p);
            let plain: Quantity = xs.iter().map(|f| f.amount_tco2e.clone()).sum();
            prop_assert_eq!(s.total, plain);
        }

        #[test]
        fn pico_linear_and_sign_preserving(a in -1_000_000_000i64..1_000_000_000, b in -1_000_000i64..1_000_000) {
            let qa = numeric::from_int(a);
            let qb = numeric::from_int(b);
            prop_assert_eq!(to_pico_degrees(&(&qa + &qb)), to_pico_degrees(&qa) + to_pico_degrees(&qb));
            prop_assert_eq!(to_pico_degrees(&qa).signum(), qa.signum());
        }
    }
}
