//! Expansion of linked products into dated money and carbon flows.

use std::collections::BTreeMap;
use std::fmt;

use chrono::Datelike;
use num_traits::Zero;
use rust_decimal::Decimal;

use crate::error::{Error, Result};
use crate::numeric::{self, Quantity};
use crate::temporal::{
    adjust_date, anniversary, annual_anchors, year_fraction, Calendar, CivilDate, MonthDay,
};
use crate::termsheet::{CarbonRepresentation, LinkedProduct, ProfileKind, ShorthandCarbon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MoneyFlowKind {
    NotionalOut,
    Coupon,
    NotionalBack,
}

impl MoneyFlowKind {
    pub fn code(self) -> &'static str {
        match self {
            MoneyFlowKind::NotionalOut => "NOTIONAL_OUT",
            MoneyFlowKind::Coupon => "COUPON",
            MoneyFlowKind::NotionalBack => "NOTIONAL_BACK",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoneyFlow {
    pub strategy_id: String,
    pub date: CivilDate,
    pub currency: String,
    pub amount: Quantity,
    pub payer: String,
    pub receiver: String,
    pub kind: MoneyFlowKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowStatus {
    Fixed,
    Estimated,
    FixedFromFixing,
}

impl FlowStatus {
    pub fn code(self) -> &'static str {
        match self {
            FlowStatus::Fixed => "FIXED",
            FlowStatus::Estimated => "ESTIMATED",
            FlowStatus::FixedFromFixing => "FIXED_FROM_FIXING",
        }
    }
}

/// Where a carbon flow came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FlowSource {
    /// Year `year` (1-based) of profile `index` in the carbon leg.
    Profile {
        index: usize,
        kind: ProfileKind,
        year: u32,
    },
    Shorthand,
    Offset,
    Permit(String),
}

impl FlowSource {
    pub fn code(&self) -> &'static str {
        match self {
            FlowSource::Profile { kind, .. } => kind.code(),
            FlowSource::Shorthand => "SHORTHAND",
            FlowSource::Offset => "OFFSET",
            FlowSource::Permit(_) => "PERMIT",
        }
    }
}

/// Signed carbon flow in tCO2e: positive is emission, negative absorption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarbonFlow {
    pub strategy_id: String,
    pub date: CivilDate,
    pub amount_tco2e: Quantity,
    pub payer: String,
    pub receiver: String,
    pub status: FlowStatus,
    pub source: FlowSource,
}

/// All flows of one product.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowSet {
    pub money: Vec<MoneyFlow>,
    pub carbon: Vec<CarbonFlow>,
}

impl FlowSet {
    pub fn last_date(&self) -> Option<CivilDate> {
        let money = self.money.iter().map(|f| f.date);
        let carbon = self.carbon.iter().map(|f| f.date);
        money.chain(carbon).max()
    }
}

/// Notional out and back plus one coupon per schedule year.
///
/// Coupons accrue between unadjusted anchors (the first from the effective
/// date) and are paid on the adjusted anchor. A zero rate produces no
/// coupon flows.
pub fn generate_money_flows(p: &LinkedProduct, cal: &Calendar) -> Result<Vec<MoneyFlow>> {
    let m = &p.money_leg;
    let notional = numeric::from_decimal(m.notional);
    let rate = numeric::from_decimal(m.fixed_rate);
    let flow = |date, amount, payer: &str, receiver: &str, kind| MoneyFlow {
        strategy_id: p.strategy_id.clone(),
        date,
        currency: m.currency.clone(),
        amount,
        payer: payer.to_string(),
        receiver: receiver.to_string(),
        kind,
    };

    let mut out = vec![flow(
        adjust_date(m.effective_date, m.roll, cal),
        notional.clone(),
        &m.receiver,
        &m.payer,
        MoneyFlowKind::NotionalOut,
    )];

    if !rate.is_zero() {
        let anchor = MonthDay::new(m.coupon.month, m.coupon.day)?;
        let anchors = annual_anchors(anchor, m.coupon.first_year, m.coupon.last_year)?;
        let mut accrual_start = m.effective_date;
        for end in anchors {
            let yf = year_fraction(accrual_start, end, m.daycount)?;
            let amount = &notional * &rate * yf.to_quantity();
            out.push(flow(
                adjust_date(end, m.roll, cal),
                amount,
                &m.payer,
                &m.receiver,
                MoneyFlowKind::Coupon,
            ));
            accrual_start = end;
        }
    }

    out.push(flow(
        adjust_date(m.maturity_date, m.roll, cal),
        notional,
        &m.payer,
        &m.receiver,
        MoneyFlowKind::NotionalBack,
    ));
    out.sort_by_key(|f| (f.date, f.kind));
    Ok(out)
}

/// Expands every carbon profile year into a flow dated on the anniversary of
/// the money leg's effective date (year k falls in `base_year + k - 1`),
/// adjusted by the money leg's roll convention.
pub fn generate_carbon_flows(p: &LinkedProduct, cal: &Calendar) -> Result<Vec<CarbonFlow>> {
    let leg = p
        .carbon_leg()
        .ok_or_else(|| Error::NoCarbonLeg(p.strategy_id.clone()))?;
    let quantity = numeric::from_decimal(leg.unit_quantity);
    let status = if leg.floating {
        FlowStatus::Estimated
    } else {
        FlowStatus::Fixed
    };

    let mut out = Vec::new();
    for (index, prof) in leg.profiles.iter().enumerate() {
        if prof.start_year < 1 || prof.end_year < prof.start_year {
            return Err(Error::InvalidValue {
                field: format!("carbon_leg.profiles[{index}]"),
                message: format!(
                    "years {}..{} are not a valid span",
                    prof.start_year, prof.end_year
                ),
            });
        }
        let per_unit =
            numeric::from_decimal(prof.amount_per_unit) * numeric::from_int(prof.sign.factor());
        let full = &per_unit * &quantity;
        let years = match prof.kind {
            ProfileKind::Single => prof.start_year..=prof.start_year,
            _ => prof.start_year..=prof.end_year,
        };
        let last_step = i64::from(prof.end_year - prof.start_year);
        for year in years {
            let amount = match prof.kind {
                ProfileKind::Single | ProfileKind::ConstantAnnual => full.clone(),
                // A one-year ramp has nowhere to ramp from; it pays the full amount.
                ProfileKind::ReverseAmortizing if last_step == 0 => full.clone(),
                ProfileKind::ReverseAmortizing => {
                    let step = i64::from(year - prof.start_year);
                    &full * Quantity::new(step.into(), last_step.into())
                }
            };
            let calendar_year = leg.base_year + year as i32 - 1;
            let date = adjust_date(
                anniversary(p.money_leg.effective_date, calendar_year)?,
                p.money_leg.roll,
                cal,
            );
            out.push(CarbonFlow {
                strategy_id: p.strategy_id.clone(),
                date,
                amount_tco2e: amount,
                payer: leg.payer.clone(),
                receiver: leg.receiver.clone(),
                status,
                source: FlowSource::Profile {
                    index,
                    kind: prof.kind,
                    year,
                },
            });
        }
    }
    out.sort_by(|a, b| {
        a.date
            .cmp(&b.date)
            .then_with(|| source_rank(&a.source).cmp(&source_rank(&b.source)))
    });
    Ok(out)
}

fn source_rank(source: &FlowSource) -> usize {
    match source {
        FlowSource::Profile { index, .. } => *index,
        _ => usize::MAX,
    }
}

/// The single summary flow of a shorthand product, from issuer to funder.
pub fn shorthand_flow(p: &LinkedProduct, short: &ShorthandCarbon) -> CarbonFlow {
    CarbonFlow {
        strategy_id: p.strategy_id.clone(),
        date: short.as_of,
        amount_tco2e: numeric::from_decimal(short.amount_tco2e),
        payer: p.money_leg.payer.clone(),
        receiver: p.money_leg.receiver.clone(),
        status: FlowStatus::Fixed,
        source: FlowSource::Shorthand,
    }
}

/// Carbon flows for either representation: the expanded leg, or the one
/// summary flow.
pub fn expand_carbon(p: &LinkedProduct, cal: &Calendar) -> Result<Vec<CarbonFlow>> {
    match &p.carbon {
        CarbonRepresentation::Leg(_) => generate_carbon_flows(p, cal),
        CarbonRepresentation::Shorthand(short) => Ok(vec![shorthand_flow(p, short)]),
    }
}

pub fn expand(p: &LinkedProduct, cal: &Calendar) -> Result<FlowSet> {
    Ok(FlowSet {
        money: generate_money_flows(p, cal)?,
        carbon: expand_carbon(p, cal)?,
    })
}

/// Observed carbon amounts keyed by (strategy id, calendar year).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixingTable {
    entries: BTreeMap<(String, i32), Quantity>,
}

impl FixingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        strategy_id: impl Into<String>,
        year: i32,
        observed: Quantity,
    ) -> Result<()> {
        let key = (strategy_id.into(), year);
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateFixing {
                strategy_id: key.0,
                year,
            });
        }
        self.entries.insert(key, observed);
        Ok(())
    }

    pub fn get(&self, strategy_id: &str, year: i32) -> Option<&Quantity> {
        self.entries.get(&(strategy_id.to_string(), year))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i32, &Quantity)> {
        self.entries.iter().map(|((s, y), q)| (s.as_str(), *y, q))
    }

    pub fn merge(&mut self, other: &FixingTable) -> Result<()> {
        for (s, y, q) in other.iter() {
            self.insert(s, y, q.clone())?;
        }
        Ok(())
    }

    /// Reads `strategy_id,year,observed_tco2e` CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        expect_header(&mut reader, &["strategy_id", "year", "observed_tco2e"])?;
        let mut table = Self::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::Record { line, message };
            let year: i32 = record[1]
                .parse()
                .map_err(|_| bad(format!("invalid year `{}`", &record[1])))?;
            let observed = numeric::parse_decimal("observed_tco2e", &record[2])
                .map_err(|e| bad(e.to_string()))?;
            table
                .insert(&record[0], year, observed)
                .map_err(|e| bad(e.to_string()))?;
        }
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy_id,year,observed_tco2e\n");
        for (s, y, q) in self.iter() {
            out.push_str(&format!("{s},{y},{}\n", numeric::format_fixed(q, 12)));
        }
        out
    }
}

pub(crate) fn expect_header<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<()> {
    let header = reader.headers()?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::Record {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                found.join(",")
            ),
        });
    }
    Ok(())
}

/// Replaces estimated amounts with observed fixings.
///
/// A fixing applies to the estimated flow of its strategy dated in its
/// calendar year. A fixing that lands on a fixed flow is a conflict, and one
/// that matches several estimated flows is ambiguous. Flows already fixed
/// from an identical fixing are left alone, so reapplying a table is a
/// no-op.
pub fn apply_fixings(flows: &[CarbonFlow], fixings: &FixingTable) -> Result<Vec<CarbonFlow>> {
    let mut out = flows.to_vec();
    let mut by_key: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
    for (i, f) in flows.iter().enumerate() {
        by_key
            .entry((f.strategy_id.clone(), f.date.year()))
            .or_default()
            .push(i);
    }
    for ((strategy_id, year), indices) in &by_key {
        let Some(observed) = fixings.get(strategy_id, *year) else {
            continue;
        };
        let conflict = || Error::FixingConflict {
            strategy_id: strategy_id.clone(),
            year: *year,
        };
        let mut estimated = Vec::new();
        for &i in indices {
            match flows[i].status {
                FlowStatus::Fixed => return Err(conflict()),
                FlowStatus::FixedFromFixing if &flows[i].amount_tco2e != observed => {
                    return Err(conflict())
                }
                FlowStatus::FixedFromFixing => {}
                FlowStatus::Estimated => estimated.push(i),
            }
        }
        match estimated.as_slice() {
            [] => {}
            [i] => {
                out[*i].amount_tco2e = observed.clone();
                out[*i].status = FlowStatus::FixedFromFixing;
            }
            many => {
                return Err(Error::AmbiguousFixing {
                    strategy_id: strategy_id.clone(),
                    year: *year,
                    count: many.len(),
                })
            }
        }
    }
    Ok(out)
}

/// Attributes a share of annual company emissions to a holding, one summary
/// flow per year dated 31 December.
pub fn attribute_shorthand(
    company_annual_emissions: &[(i32, Decimal)],
    fraction: Decimal,
) -> Result<Vec<ShorthandCarbon>> {
    if fraction < Decimal::ZERO || fraction > Decimal::ONE {
        return Err(Error::FractionOutOfRange(fraction.to_string()));
    }
    company_annual_emissions
        .iter()
        .map(|&(year, emissions)| {
            let as_of = CivilDate::from_ymd_opt(year, 12, 31)
                .ok_or_else(|| Error::InvalidDate(format!("{year}-12-31")))?;
            let amount = emissions
                .checked_mul(fraction)
                .ok_or_else(|| Error::InvalidValue {
                    field: "company_annual_emissions".into(),
                    message: format!("{emissions} x {fraction} overflows"),
                })?;
            Ok(ShorthandCarbon {
                amount_tco2e: amount,
                as_of,
            })
        })
        .collect()
}

/// Share of a financing that funds a specific project.
pub fn financing_fraction(project_funding: Decimal, total_funding: Decimal) -> Result<Decimal> {
    if total_funding <= Decimal::ZERO {
        return Err(Error::InvalidValue {
            field: "total_funding".into(),
            message: "must be positive".into(),
        });
    }
    let fraction = project_funding / total_funding;
    if fraction < Decimal::ZERO || fraction > Decimal::ONE {
        return Err(Error::FractionOutOfRange(fraction.to_string()));
    }
    Ok(fraction)
}

/// Canonical flow CSV header.
pub const FLOW_CSV_HEADER: &str =
    "strategy_id,date,leg,kind,currency_or_xca,amount,payer,receiver,status";

/// One row of the flow report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRow {
    pub strategy_id: String,
    pub date: CivilDate,
    pub leg: &'static str,
    pub kind: String,
    pub unit: String,
    pub amount: String,
    pub payer: String,
    pub receiver: String,
    pub status: &'static str,
}

impl FlowRow {
    pub fn fields(&self) -> [String; 9] {
        [
            self.strategy_id.clone(),
            self.date.to_string(),
            self.leg.to_string(),
            self.kind.clone(),
            self.unit.clone(),
            self.amount.clone(),
            self.payer.clone(),
            self.receiver.clone(),
            self.status.to_string(),
        ]
    }
}

impl fmt::Display for FlowRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fields().join(","))
    }
}

/// Money amounts are rounded to 2 decimals, carbon to 6.
pub fn flow_rows(flows: &FlowSet) -> Vec<FlowRow> {
    let money = flows.money.iter().map(|f| FlowRow {
        strategy_id: f.strategy_id.clone(),
        date: f.date,
        leg: "MONEY",
        kind: f.kind.code().to_string(),
        unit: f.currency.clone(),
        amount: numeric::format_fixed(&f.amount, 2),
        payer: f.payer.clone(),
        receiver: f.receiver.clone(),
        status: FlowStatus::Fixed.code(),
    });
    let carbon = flows.carbon.iter().map(|f| FlowRow {
        strategy_id: f.strategy_id.clone(),
        date: f.date,
        leg: "CARBON",
        kind: f.source.code().to_string(),
        unit: "XCA".to_string(),
        amount: numeric::format_fixed(&f.amount_tco2e, 6),
        payer: f.payer.clone(),
        receiver: f.receiver.clone(),
        status: f.status.code(),
    });
    let mut rows: Vec<FlowRow> = money.chain(carbon).collect();
    // Stable: within a date, money before carbon and generation order otherwise.
    rows.sort_by(|a, b| {
        (&a.strategy_id, a.date, a.leg != "MONEY").cmp(&(&b.strategy_id, b.date, b.leg != "MONEY"))
    });
    rows
}
