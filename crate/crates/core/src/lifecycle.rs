//! Product lifecycle: maturity, default and XCA non-payment events, and
//! emission permits exercised as offsetting flows.

use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowgen::{CarbonFlow, FlowSet, FlowSource, FlowStatus};
use crate::numeric;
use crate::temporal::CivilDate;
use crate::termsheet::LinkedProduct;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub enum LifecycleStatus {
    #[default]
    Active,
    Matured,
    Defaulted,
}

impl fmt::Display for LifecycleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Active => "Active",
            Self::Matured => "Matured",
            Self::Defaulted => "Defaulted",
        })
    }
}

impl FromStr for LifecycleStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "active" => Ok(Self::Active),
            "matured" => Ok(Self::Matured),
            "defaulted" => Ok(Self::Defaulted),
            _ => Err(Error::InvalidValue {
                field: "status".into(),
                message: format!("`{s}` is not one of active, matured, defaulted"),
            }),
        }
    }
}

/// What happens to carbon flows after a default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum XcaPolicy {
    /// Flows stay with the bond buyer.
    Continue,
    /// Flows after the default date do not happen.
    Cease,
}

impl XcaPolicy {
    pub fn code(self) -> &'static str {
        match self {
            XcaPolicy::Continue => "CONTINUE",
            XcaPolicy::Cease => "CEASE",
        }
    }
}

impl FromStr for XcaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CONTINUE" => Ok(Self::Continue),
            "CEASE" => Ok(Self::Cease),
            _ => Err(Error::InvalidValue {
                field: "policy".into(),
                message: format!("`{s}` is not CONTINUE or CEASE"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Maturity,
    Default,
    XcaNonpayment,
}

impl EventKind {
    pub fn code(self) -> &'static str {
        match self {
            EventKind::Maturity => "MATURITY",
            EventKind::Default => "DEFAULT",
            EventKind::XcaNonpayment => "XCA_NONPAYMENT",
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MATURITY" => Ok(Self::Maturity),
            "DEFAULT" => Ok(Self::Default),
            "XCA_NONPAYMENT" => Ok(Self::XcaNonpayment),
            _ => Err(Error::InvalidValue {
                field: "event".into(),
                message: format!("`{s}` is not MATURITY, DEFAULT or XCA_NONPAYMENT"),
            }),
        }
    }
}

/// A lifecycle event. `policy` is required for `Default`, must be absent for
/// `Maturity`, and for `XcaNonpayment` falls back to the configured default
/// when absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LifecycleEvent {
    pub date: CivilDate,
    #[serde(rename = "event")]
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<XcaPolicy>,
}

impl LifecycleEvent {
    pub fn maturity(date: CivilDate) -> Self {
        Self {
            date,
            kind: EventKind::Maturity,
            policy: None,
        }
    }

    pub fn default_with(date: CivilDate, policy: XcaPolicy) -> Self {
        Self {
            date,
            kind: EventKind::Default,
            policy: Some(policy),
        }
    }

    pub fn xca_nonpayment(date: CivilDate) -> Self {
        Self {
            date,
            kind: EventKind::XcaNonpayment,
            policy: None,
        }
    }

    /// The event with its carbon policy made explicit.
    pub fn resolve(self, configured: XcaPolicy) -> Result<Self> {
        let policy = match (self.kind, self.policy) {
            (EventKind::Maturity, None) => None,
            (EventKind::Maturity, Some(_)) => {
                return Err(Error::InvalidValue {
                    field: "policy".into(),
                    message: "MATURITY takes no carbon policy".into(),
                })
            }
            (EventKind::Default, None) => {
                return Err(Error::InvalidValue {
                    field: "policy".into(),
                    message: "DEFAULT needs an explicit CONTINUE or CEASE policy".into(),
                })
            }
            (EventKind::Default, Some(p)) => Some(p),
            (EventKind::XcaNonpayment, p) => Some(p.unwrap_or(configured)),
        };
        Ok(Self { policy, ..self })
    }

    pub fn terminal_status(&self) -> LifecycleStatus {
        match self.kind {
            EventKind::Maturity => LifecycleStatus::Matured,
            EventKind::Default | EventKind::XcaNonpayment => LifecycleStatus::Defaulted,
        }
    }
}

impl fmt::Display for LifecycleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.code(), self.date)?;
        if let Some(p) = self.policy {
            write!(f, " {}", p.code())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LifecycleState {
    pub status: LifecycleStatus,
    pub events: Vec<LifecycleEvent>,
}

impl LifecycleState {
    /// Applies the status transition for an already-resolved event.
    pub fn record(&mut self, strategy_id: &str, event: LifecycleEvent) -> Result<()> {
        if self.status != LifecycleStatus::Active {
            return Err(Error::IllegalTransition {
                strategy_id: strategy_id.to_string(),
                status: self.status,
                event: event.kind.code().to_string(),
            });
        }
        if let Some(last) = self.events.last() {
            if event.date < last.date {
                return Err(Error::EventOutOfOrder {
                    date: event.date,
                    last: last.date,
                });
            }
        }
        self.status = event.terminal_status();
        self.events.push(event);
        Ok(())
    }
}

/// Applies `event` to a product and its expanded flows.
///
/// * Maturity: carbon flows dated after the event change direction, so the
///   impact goes back to the issuer. Amounts and dates are untouched.
/// * Default: money flows after the event are cancelled; carbon flows after
///   it are kept with the buyer (`Continue`) or cancelled (`Cease`).
/// * XCA non-payment: a default, with `configured_policy` used when the
///   event carries none.
///
/// The event date must fall between the effective date and the last flow.
pub fn apply_event(
    product: &LinkedProduct,
    flows: &FlowSet,
    event: LifecycleEvent,
    configured_policy: XcaPolicy,
) -> Result<(LinkedProduct, FlowSet)> {
    let event = event.resolve(configured_policy)?;
    if product.state.status != LifecycleStatus::Active {
        return Err(Error::IllegalTransition {
            strategy_id: product.strategy_id.clone(),
            status: product.state.status,
            event: event.kind.code().to_string(),
        });
    }
    let start = product.money_leg.effective_date;
    let end = flows
        .last_date()
        .unwrap_or(product.money_leg.maturity_date)
        .max(product.money_leg.maturity_date);
    if event.date < start || event.date > end {
        return Err(Error::EventOutsideLife {
            date: event.date,
            start,
            end,
        });
    }

    let mut updated = product.clone();
    updated.state.record(&product.strategy_id, event)?;
    Ok((updated, transform_flows(flows, &event)))
}

/// Flow transformation for a resolved event, without state checks.
pub fn transform_flows(flows: &FlowSet, event: &LifecycleEvent) -> FlowSet {
    let mut out = flows.clone();
    match event.kind {
        EventKind::Maturity => {
            for f in out.carbon.iter_mut().filter(|f| f.date > event.date) {
                std::mem::swap(&mut f.payer, &mut f.receiver);
            }
        }
        EventKind::Default | EventKind::XcaNonpayment => {
            out.money.retain(|f| f.date <= event.date);
            if event.policy == Some(XcaPolicy::Cease) {
                out.carbon.retain(|f| f.date <= event.date);
            }
        }
    }
    out
}

/// Replays a product's logged events over freshly expanded flows.
pub fn replay_events(flows: &FlowSet, events: &[LifecycleEvent]) -> FlowSet {
    events
        .iter()
        .fold(flows.clone(), |acc, e| transform_flows(&acc, e))
}

/// Flows dated strictly after `as_of`.
pub fn remaining_flows(flows: &FlowSet, as_of: CivilDate) -> FlowSet {
    FlowSet {
        money: flows
            .money
            .iter()
            .filter(|f| f.date > as_of)
            .cloned()
            .collect(),
        carbon: flows
            .carbon
            .iter()
            .filter(|f| f.date > as_of)
            .cloned()
            .collect(),
    }
}

/// A government-granted right to offset emissions, exercisable any number of
/// times inside a closed date window up to its volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermitOption {
    pub permit_id: String,
    pub holder: String,
    pub grantor: String,
    pub volume: Decimal,
    pub window_start: CivilDate,
    pub window_end: CivilDate,
    pub exercised: Decimal,
}

impl PermitOption {
    pub fn new(
        permit_id: impl Into<String>,
        holder: impl Into<String>,
        grantor: impl Into<String>,
        volume: Decimal,
        window_start: CivilDate,
        window_end: CivilDate,
    ) -> Result<Self> {
        let permit = Self {
            permit_id: permit_id.into(),
            holder: holder.into(),
            grantor: grantor.into(),
            volume,
            window_start,
            window_end,
            exercised: Decimal::ZERO,
        };
        permit.check()?;
        Ok(permit)
    }

    pub fn check(&self) -> Result<()> {
        if self.volume <= Decimal::ZERO {
            return Err(Error::NonPositiveAmount(self.volume.to_string()));
        }
        if self.window_start > self.window_end {
            return Err(Error::DateOrder {
                start: self.window_start,
                end: self.window_end,
            });
        }
        if self.exercised < Decimal::ZERO || self.exercised > self.volume {
            return Err(Error::InvalidValue {
                field: "exercised".into(),
                message: format!("{} outside [0, {}]", self.exercised, self.volume),
            });
        }
        if self.holder == self.grantor {
            return Err(Error::InvalidValue {
                field: "grantor".into(),
                message: "holder and grantor must differ".into(),
            });
        }
        Ok(())
    }

    pub fn remaining(&self) -> Decimal {
        self.volume - self.exercised
    }
}

/// Exercises `amount` tCO2e of a permit, returning the updated permit and the
/// offsetting flow of `-amount` from grantor to holder.
pub fn exercise_permit(
    perm: &PermitOption,
    date: CivilDate,
    amount: Decimal,
) -> Result<(PermitOption, CarbonFlow)> {
    if amount <= Decimal::ZERO {
        return Err(Error::NonPositiveAmount(amount.to_string()));
    }
    if date < perm.window_start {
        return Err(Error::PermitNotOpen {
            date,
            start: perm.window_start,
        });
    }
    if date > perm.window_end {
        return Err(Error::PermitExpired {
            date,
            end: perm.window_end,
        });
    }
    if amount > perm.remaining() {
        return Err(Error::InsufficientPermitVolume {
            requested: amount.to_string(),
            remaining: perm.remaining().to_string(),
        });
    }
    let mut updated = perm.clone();
    updated.exercised += amount;
    let flow = CarbonFlow {
        strategy_id: perm.permit_id.clone(),
        date,
        amount_tco2e: -numeric::from_decimal(amount),
        payer: perm.grantor.clone(),
        receiver: perm.holder.clone(),
        status: FlowStatus::Fixed,
        source: FlowSource::Permit(perm.permit_id.clone()),
    };
    Ok((updated, flow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgen::expand;
    use crate::temporal::Calendar;
    use crate::termsheet::parse_product;
    use chrono::Datelike;

    const FOREST: &str = include_str!("../fixtures/forest.json");
    const WIND: &str = include_str!("../fixtures/wind.json");
    const COAL: &str = include_str!("../fixtures/coal.json");

    fn d(y: i32, m: u32, day: u32) -> CivilDate {
        CivilDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn load(text: &str) -> (LinkedProduct, FlowSet) {
        let p = parse_product(text).unwrap();
        let flows = expand(&p, &Calendar::default()).unwrap();
        (p, flows)
    }

    #[test]
    fn forest_maturity_returns_impact_to_issuer() {
        let (p, flows) = load(FOREST);
        let (p2, after) = apply_event(
            &p,
            &flows,
            LifecycleEvent::maturity(d(2032, 1, 3)),
            XcaPolicy::Continue,
        )
        .unwrap();
        assert_eq!(p2.state.status, LifecycleStatus::Matured);
        assert_eq!(p2.state.events.len(), 1);
        for (before, now) in flows.carbon.iter().zip(&after.carbon) {
            assert_eq!(
                (before.date, &before.amount_tco2e),
                (now.date, &now.amount_tco2e)
            );
            if before.date > d(2032, 1, 3) {
                assert_eq!((now.payer.as_str(), now.receiver.as_str()), ("A", "B"));
            } else {
                assert_eq!(now, before);
            }
        }
        let swapped: Vec<i32> = after
            .carbon
            .iter()
            .filter(|f| f.receiver == "B")
            .map(|f| f.date.year())
            .collect();
        // Year 11 rolls to Monday 2032-01-05, after the event.
        assert_eq!(swapped.first(), Some(&2032));
        assert_eq!(swapped.last(), Some(&2071));
        assert_eq!(after.money, flows.money);
    }

    #[test]
    fn coal_default_continue_keeps_flows_with_buyer() {
        let (p, flows) = load(COAL);
        let (p2, after) = apply_event(
            &p,
            &flows,
            LifecycleEvent::default_with(d(2030, 1, 1), XcaPolicy::Continue),
            XcaPolicy::Cease,
        )
        .unwrap();
        assert_eq!(p2.state.status, LifecycleStatus::Defaulted);
        assert_eq!(after.carbon, flows.carbon);
        let later: Vec<_> = after
            .carbon
            .iter()
            .filter(|f| f.date.year() >= 2030)
            .collect();
        assert_eq!(later.first().unwrap().date.year(), 2030);
        assert_eq!(later.last().unwrap().date.year(), 2064);
        assert!(later.iter().all(|f| f.receiver == "A"));
        assert!(after.money.iter().all(|f| f.date <= d(2030, 1, 1)));
        assert!(after.money.len() < flows.money.len());
    }

    #[test]
    fn default_cease_drops_later_carbon() {
        let (p, flows) = load(COAL);
        let date = d(2030, 6, 1);
        let (_, after) = apply_event(
            &p,
            &flows,
            LifecycleEvent::default_with(date, XcaPolicy::Cease),
            XcaPolicy::Continue,
        )
        .unwrap();
        assert!(after.carbon.iter().all(|f| f.date <= date));
        let kept = flows.carbon.iter().filter(|f| f.date <= date).count();
        assert_eq!(after.carbon.len(), kept);
    }

    #[test]
    fn xca_nonpayment_uses_configured_policy() {
        let (p, flows) = load(COAL);
        let (p2, after) = apply_event(
            &p,
            &flows,
            LifecycleEvent::xca_nonpayment(d(2030, 6, 1)),
            XcaPolicy::Cease,
        )
        .unwrap();
        assert_eq!(p2.state.status, LifecycleStatus::Defaulted);
        assert_eq!(p2.state.events[0].policy, Some(XcaPolicy::Cease));
        assert!(after.carbon.iter().all(|f| f.date <= d(2030, 6, 1)));
    }

    #[test]
    fn default_requires_explicit_policy() {
        let (p, flows) = load(COAL);
        let event = LifecycleEvent {
            date: d(2030, 1, 1),
            kind: EventKind::Default,
            policy: None,
        };
        assert!(apply_event(&p, &flows, event, XcaPolicy::Continue).is_err());
    }

    #[test]
    fn second_terminal_event_rejected() {
        let (p, flows) = load(FOREST);
        let (p2, f2) = apply_event(
            &p,
            &flows,
            LifecycleEvent::maturity(d(2032, 1, 3)),
            XcaPolicy::Continue,
        )
        .unwrap();
        let err = apply_event(
            &p2,
            &f2,
            LifecycleEvent::default_with(d(2033, 1, 1), XcaPolicy::Cease),
            XcaPolicy::Continue,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::IllegalTransition {
                status: LifecycleStatus::Matured,
                ..
            }
        ));
        assert!(apply_event(
            &p2,
            &f2,
            LifecycleEvent::maturity(d(2032, 1, 3)),
            XcaPolicy::Continue
        )
        .is_err());
    }

    #[test]
    fn event_outside_life_rejected() {
        let (p, flows) = load(FOREST);
        for date in [d(2021, 12, 31), d(2072, 1, 1)] {
            let err = apply_event(
                &p,
                &flows,
                LifecycleEvent::maturity(date),
                XcaPolicy::Continue,
            )
            .unwrap_err();
            assert!(matches!(err, Error::EventOutsideLife { .. }));
        }
    }

    #[test]
    fn remaining_after_maturity_is_carbon_only() {
        let (p, flows) = load(FOREST);
        let (_, after) = apply_event(
            &p,
            &flows,
            LifecycleEvent::maturity(d(2032, 1, 3)),
            XcaPolicy::Continue,
        )
        .unwrap();
        let rest = remaining_flows(&after, d(2033, 1, 1));
        assert!(rest.money.is_empty());
        assert_eq!(rest.carbon.len(), 39);
    }

    #[test]
    fn remaining_past_end_is_empty() {
        let (_, flows) = load(COAL);
        let rest = remaining_flows(&flows, d(2065, 1, 1));
        assert!(rest.money.is_empty() && rest.carbon.is_empty());
    }

    #[test]
    fn wind_remaining_drops_year_one() {
        let (_, flows) = load(WIND);
        let as_of = d(2022, 6, 1);
        let rest = remaining_flows(&flows, as_of);
        let expected: Vec<_> = flows
            .carbon
            .iter()
            .filter(|f| f.date > as_of)
            .cloned()
            .collect();
        assert_eq!(rest.carbon, expected);
        assert_eq!(rest.carbon.len(), 21);
        assert_eq!(rest.money.len(), flows.money.len() - 1);
    }

    #[test]
    fn replay_matches_incremental() {
        let (p, flows) = load(COAL);
        let e = LifecycleEvent::default_with(d(2035, 2, 1), XcaPolicy::Cease);
        let (p2, live) = apply_event(&p, &flows, e, XcaPolicy::Continue).unwrap();
        assert_eq!(replay_events(&flows, &p2.state.events), live);
    }

    fn permit() -> PermitOption {
        PermitOption::new(
            "EUA-1",
            "A",
            "GOV",
            Decimal::from(1000),
            d(2025, 1, 1),
            d(2025, 12, 31),
        )
        .unwrap()
    }

    #[test]
    fn permit_exercise_bookkeeping() {
        let (p1, flow) = exercise_permit(&permit(), d(2025, 6, 1), Decimal::from(400)).unwrap();
        assert_eq!(p1.remaining(), Decimal::from(600));
        assert_eq!(flow.amount_tco2e, numeric::from_int(-400));
        assert_eq!((flow.payer.as_str(), flow.receiver.as_str()), ("GOV", "A"));
        let err = exercise_permit(&p1, d(2025, 7, 1), Decimal::from(700)).unwrap_err();
        assert!(matches!(err, Error::InsufficientPermitVolume { .. }));
        assert!(err.to_string().contains("insufficient permit volume"));
    }

    #[test]
    fn permit_window_is_closed_interval() {
        assert!(exercise_permit(&permit(), d(2025, 12, 31), Decimal::ONE).is_ok());
        assert!(exercise_permit(&permit(), d(2025, 1, 1), Decimal::ONE).is_ok());
        let early = exercise_permit(&permit(), d(2024, 12, 31), Decimal::ONE).unwrap_err();
        assert!(early.to_string().contains("window not open"));
        let late = exercise_permit(&permit(), d(2026, 1, 1), Decimal::ONE).unwrap_err();
        assert!(late.to_string().contains("window expired"));
    }

    #[test]
    fn permit_rejects_nonpositive_amounts() {
        assert!(exercise_permit(&permit(), d(2025, 6, 1), Decimal::ZERO).is_err());
        assert!(
            PermitOption::new("P", "A", "G", Decimal::ZERO, d(2025, 1, 1), d(2025, 2, 1)).is_err()
        );
        assert!(
            PermitOption::new("P", "A", "G", Decimal::ONE, d(2025, 2, 1), d(2025, 1, 1)).is_err()
        );
    }

    #[test]
    fn parse_codes() {
        assert_eq!(
            "xca_nonpayment".parse::<EventKind>().unwrap(),
            EventKind::XcaNonpayment
        );
        assert_eq!("cease".parse::<XcaPolicy>().unwrap(), XcaPolicy::Cease);
        assert!("sometimes".parse::<XcaPolicy>().is_err());
    }
}
