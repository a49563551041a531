//! Scenario carbon prices and monetization of carbon flows.
//!
//! Curves are user-supplied (year, price) knots. Prices between knots are
//! interpolated linearly and held flat outside the knot range. Costs are
//! reported per flow date without financial discounting.

use std::collections::BTreeMap;

use chrono::Datelike;
use num_bigint::BigInt;
use num_traits::Zero;
use rust_decimal::Decimal;

use crate::error::{Error, Result};
use crate::flowgen::CarbonFlow;
use crate::numeric::{self, Quantity};
use crate::temporal::CivilDate;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarbonPriceCurve {
    scenario: String,
    currency: String,
    points: Vec<(i32, Decimal)>,
}

impl CarbonPriceCurve {
    pub fn new(
        scenario: impl Into<String>,
        currency: impl Into<String>,
        points: Vec<(i32, Decimal)>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Curve("curve has no points".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Curve(format!(
                    "years must be strictly increasing: {} follows {}",
                    w[1].0, w[0].0
                )));
            }
        }
        if let Some((year, price)) = points.iter().find(|(_, p)| *p < Decimal::ZERO) {
            return Err(Error::Curve(format!("negative price {price} in {year}")));
        }
        Ok(Self {
            scenario: scenario.into(),
            currency: currency.into(),
            points,
        })
    }

    pub fn scenario(&self) -> &str {
        &self.scenario
    }

    pub fn currency(&self) -> &str {
        &self.currency
    }

    pub fn points(&self) -> &[(i32, Decimal)] {
        &self.points
    }

    /// Price per tCO2e in `year`.
    pub fn price_at(&self, year: i32) -> Quantity {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if year <= first.0 {
            return numeric::from_decimal(first.1);
        }
        if year >= last.0 {
            return numeric::from_decimal(last.1);
        }
        let right = self.points.partition_point(|(y, _)| *y <= year);
        let (y0, p0) = self.points[right - 1];
        let (y1, p1) = self.points[right];
        let p0 = numeric::from_decimal(p0);
        let p1 = numeric::from_decimal(p1);
        let weight = Quantity::new(BigInt::from(year - y0), BigInt::from(y1 - y0));
        &p0 + (p1 - &p0) * weight
    }
}

/// Parses a curve file: `# scenario: <name>` and `# currency: <code>` comment
/// headers, then `year,price` CSV.
pub fn load_curve(text: &str) -> Result<CarbonPriceCurve> {
    let mut scenario = String::new();
    let mut currency = String::new();
    let mut header_seen = false;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = line.trim();
        if let Some(comment) = row.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                match key.trim().to_ascii_lowercase().as_str() {
                    "scenario" => scenario = value.trim().to_string(),
                    "currency" => currency = value.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        if row.is_empty() {
            continue;
        }
        if !header_seen {
            if row.replace(' ', "") != "year,price" {
                return Err(Error::Curve(format!(
                    "line {}: expected header `year,price`",
                    idx + 1
                )));
            }
            header_seen = true;
            continue;
        }
        let bad = |message: String| Error::Curve(format!("line {}: {message}", idx + 1));
        let (year, price) = row
            .split_once(',')
            .ok_or_else(|| bad(format!("expected `year,price`, found `{row}`")))?;
        let year: i32 = year
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid year `{}`", year.trim())))?;
        let price: Decimal = price
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid price `{}`", price.trim())))?;
        points.push((year, price));
    }
    if !header_seen {
        return Err(Error::Curve("expected header `year,price`".into()));
    }
    CarbonPriceCurve::new(scenario, currency, points)
}

pub fn write_curve(curve: &CarbonPriceCurve) -> String {
    let mut out = String::new();
    out.push_str(&format!("# scenario: {}\n", curve.scenario));
    out.push_str(&format!("# currency: {}\n", curve.currency));
    out.push_str("year,price\n");
    for (year, price) in &curve.points {
        out.push_str(&format!("{year},{price}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PricedLine {
    pub strategy_id: String,
    pub date: CivilDate,
    pub tco2e: Quantity,
    pub price: Quantity,
    pub cost: Quantity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonetizedReport {
    pub scenario: String,
    pub currency: String,
    /// Ordered by (date, strategy id); ties keep input order.
    pub lines: Vec<PricedLine>,
    pub product_totals: BTreeMap<String, Quantity>,
    pub total: Quantity,
}

/// Prices every flow at the curve value for its calendar year. Absorption
/// produces a negative cost.
pub fn monetize(flows: &[CarbonFlow], curve: &CarbonPriceCurve) -> MonetizedReport {
    let mut lines: Vec<PricedLine> = flows
        .iter()
        .map(|f| {
            let price = curve.price_at(f.date.year());
            PricedLine {
                strategy_id: f.strategy_id.clone(),
                date: f.date,
                cost: &f.amount_tco2e * &price,
                tco2e: f.amount_tco2e.clone(),
                price,
            }
        })
        .collect();
    lines.sort_by(|a, b| (a.date, &a.strategy_id).cmp(&(b.date, &b.strategy_id)));

    let mut product_totals: BTreeMap<String, Quantity> = BTreeMap::new();
    let mut total = Quantity::zero();
    for line in &lines {
        *product_totals
            .entry(line.strategy_id.clone())
            .or_insert_with(Quantity::zero) += &line.cost;
        total += &line.cost;
    }
    MonetizedReport {
        scenario: curve.scenario.clone(),
        currency: curve.currency.clone(),
        lines,
        product_totals,
        total,
    }
}

pub const REPORT_CSV_HEADER: &str = "record,scenario,strategy_id,date,tco2e,price,currency,cost";

/// Report rows: one `LINE` per flow, one `PRODUCT` total per strategy and a
/// final `PORTFOLIO` total.
pub fn report_rows(report: &MonetizedReport) -> Vec<[String; 8]> {
    let fmt6 = |q: &Quantity| numeric::format_fixed(q, 6);
    let mut rows = Vec::new();
    for line in &report.lines {
        rows.push([
            "LINE".to_string(),
            report.scenario.clone(),
            line.strategy_id.clone(),
            line.date.to_string(),
            fmt6(&line.tco2e),
            fmt6(&line.price),
            report.currency.clone(),
            numeric::format_fixed(&line.cost, 2),
        ]);
    }
    let tons_by_product =
        report
            .lines
            .iter()
            .fold(BTreeMap::<&str, Quantity>::new(), |mut acc, l| {
                *acc.entry(l.strategy_id.as_str())
                    .or_insert_with(Quantity::zero) += &l.tco2e;
                acc
            });
    for (strategy_id, cost) in &report.product_totals {
        rows.push([
            "PRODUCT".to_string(),
            report.scenario.clone(),
            strategy_id.clone(),
            String::new(),
            fmt6(&tons_by_product[strategy_id.as_str()]),
            String::new(),
            report.currency.clone(),
            numeric::format_fixed(cost, 2),
        ]);
    }
    let tons: Quantity = report.lines.iter().map(|l| l.tco2e.clone()).sum();
    rows.push([
        "PORTFOLIO".to_string(),
        report.scenario.clone(),
        String::new(),
        String::new(),
        fmt6(&tons),
        String::new(),
        report.currency.clone(),
        numeric::format_fixed(&report.total, 2),
    ]);
    rows
}
