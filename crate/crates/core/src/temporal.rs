//! Calendar arithmetic: business-day adjustment, Act/360 accrual and annual
//! payment schedules.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{Datelike, NaiveDate, Weekday};
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Quantity;

/// A whole civil day. No time-of-day component.
pub type CivilDate = NaiveDate;

/// Weekend days plus an explicit holiday list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Calendar {
    weekend: [bool; 7],
    holidays: BTreeSet<CivilDate>,
}

impl Default for Calendar {
    fn default() -> Self {
        Self::weekends_only()
    }
}

impl Calendar {
    /// Saturday and Sunday off, no holidays.
    pub fn weekends_only() -> Self {
        Self::new([Weekday::Sat, Weekday::Sun], [])
    }

    pub fn new(
        weekend: impl IntoIterator<Item = Weekday>,
        holidays: impl IntoIterator<Item = CivilDate>,
    ) -> Self {
        let mut mask = [false; 7];
        for day in weekend {
            mask[day.num_days_from_monday() as usize] = true;
        }
        Self {
            weekend: mask,
            holidays: holidays.into_iter().collect(),
        }
    }

    /// Weekends-only calendar plus holidays read from a file body: one
    /// `YYYY-MM-DD` per line, `#` starts a comment.
    pub fn from_holiday_file(text: &str) -> Result<Self> {
        let mut holidays = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let date = parse_date(line).map_err(|_| Error::Record {
                line: idx as u64 + 1,
                message: format!("invalid holiday date `{line}`"),
            })?;
            holidays.push(date);
        }
        Ok(Self::new([Weekday::Sat, Weekday::Sun], holidays))
    }

    pub fn is_weekend(&self, date: CivilDate) -> bool {
        self.weekend[date.weekday().num_days_from_monday() as usize]
    }

    pub fn is_holiday(&self, date: CivilDate) -> bool {
        self.holidays.contains(&date)
    }

    pub fn is_business_day(&self, date: CivilDate) -> bool {
        !self.is_weekend(date) && !self.is_holiday(date)
    }

    pub fn holidays(&self) -> impl Iterator<Item = &CivilDate> {
        self.holidays.iter()
    }

    fn next_business_day(&self, mut date: CivilDate) -> CivilDate {
        while !self.is_business_day(date) {
            date = date.succ_opt().expect("date overflow");
        }
        date
    }

    fn previous_business_day(&self, mut date: CivilDate) -> CivilDate {
        while !self.is_business_day(date) {
            date = date.pred_opt().expect("date underflow");
        }
        date
    }
}

/// Parses an ISO-8601 calendar date (`YYYY-MM-DD`).
pub fn parse_date(text: &str) -> Result<CivilDate> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
        .map_err(|_| Error::InvalidDate(text.trim().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DayCount {
    #[default]
    #[serde(rename = "Act/360", alias = "Act360", alias = "ACT/360")]
    Act360,
}

impl DayCount {
    pub fn basis(self) -> i64 {
        match self {
            DayCount::Act360 => 360,
        }
    }
}

impl fmt::Display for DayCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DayCount::Act360 => f.write_str("Act/360"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RollConvention {
    #[default]
    ModifiedFollowing,
    Following,
    Preceding,
    Unadjusted,
}

/// Moves `date` onto a business day of `cal` according to `conv`.
pub fn adjust_date(date: CivilDate, conv: RollConvention, cal: &Calendar) -> CivilDate {
    match conv {
        RollConvention::Unadjusted => date,
        RollConvention::Following => cal.next_business_day(date),
        RollConvention::Preceding => cal.previous_business_day(date),
        RollConvention::ModifiedFollowing => {
            let next = cal.next_business_day(date);
            if next.month() == date.month() {
                next
            } else {
                cal.previous_business_day(date)
            }
        }
    }
}

/// Accrual fraction held as an exact day count over the convention's basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearFraction {
    days: i64,
    basis: i64,
}

impl YearFraction {
    pub fn days(&self) -> i64 {
        self.days
    }

    pub fn basis(&self) -> i64 {
        self.basis
    }

    pub fn to_quantity(&self) -> Quantity {
        Quantity::new(BigInt::from(self.days), BigInt::from(self.basis))
    }

    pub fn to_f64(&self) -> f64 {
        self.days as f64 / self.basis as f64
    }
}

pub fn year_fraction(start: CivilDate, end: CivilDate, dc: DayCount) -> Result<YearFraction> {
    if start > end {
        return Err(Error::DateOrder { start, end });
    }
    Ok(YearFraction {
        days: (end - start).num_days(),
        basis: dc.basis(),
    })
}

/// Month and day of an annually recurring date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonthDay {
    pub month: u32,
    pub day: u32,
}

impl MonthDay {
    pub fn new(month: u32, day: u32) -> Result<Self> {
        // 2000 is a leap year, so 29 Feb is accepted here and clamped per year.
        if NaiveDate::from_ymd_opt(2000, month, day).is_none() {
            return Err(Error::InvalidDate(format!("--{month:02}-{day:02}")));
        }
        Ok(Self { month, day })
    }

    pub fn from_date(date: CivilDate) -> Self {
        Self {
            month: date.month(),
            day: date.day(),
        }
    }

    /// The date in `year`, clamped to the month's last day (29 Feb → 28 Feb).
    pub fn in_year(self, year: i32) -> Result<CivilDate> {
        let mut day = self.day;
        loop {
            if let Some(date) = NaiveDate::from_ymd_opt(year, self.month, day) {
                return Ok(date);
            }
            if day <= 28 {
                return Err(Error::InvalidDate(format!(
                    "{year}-{:02}-{:02}",
                    self.month, self.day
                )));
            }
            day -= 1;
        }
    }
}

/// Same month and day as `date`, in `year`.
pub fn anniversary(date: CivilDate, year: i32) -> Result<CivilDate> {
    MonthDay::from_date(date).in_year(year)
}

/// Unadjusted anchor dates, one per year in `first_year..=last_year`.
pub fn annual_anchors(anchor: MonthDay, first_year: i32, last_year: i32) -> Result<Vec<CivilDate>> {
    if first_year > last_year {
        return Err(Error::YearOrder {
            first: first_year,
            last: last_year,
        });
    }
    (first_year..=last_year)
        .map(|y| anchor.in_year(y))
        .collect()
}

/// Adjusted payment dates, one per year in `first_year..=last_year`.
pub fn annual_schedule(
    anchor: MonthDay,
    first_year: i32,
    last_year: i32,
    conv: RollConvention,
    cal: &Calendar,
) -> Result<Vec<CivilDate>> {
    Ok(annual_anchors(anchor, first_year, last_year)?
        .into_iter()
        .map(|d| adjust_date(d, conv, cal))
        .collect())
}
