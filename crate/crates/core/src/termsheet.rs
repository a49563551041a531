//! Linked product model: a money termsheet and a carbon (XCA) termsheet
//! joined by a strategy identifier.
//!
//! Products are exchanged as JSON documents. The canonical form written by
//! [`serialize_product`] has keys in declaration order, ISO-8601 dates and
//! decimal strings for every amount; unknown keys are kept and written back
//! after the known ones in sorted order.

use std::collections::BTreeMap;
use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lifecycle::LifecycleState;
use crate::temporal::{CivilDate, DayCount, MonthDay, RollConvention};

/// Unknown keys carried through parse/serialize untouched.
pub type Extensions = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartyRole {
    Funder,
    Issuer,
    Government,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Party {
    pub id: String,
    pub name: String,
    pub role: PartyRole,
    #[serde(flatten)]
    pub extensions: Extensions,
}

impl Party {
    pub fn new(id: impl Into<String>, name: impl Into<String>, role: PartyRole) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            role,
            extensions: Extensions::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouponTerms {
    pub month: u32,
    pub day: u32,
    pub first_year: i32,
    pub last_year: i32,
}

/// Fixed-rate bullet money leg.
///
/// `payer` is the party paying coupons and returning the notional (the
/// issuer); `receiver` is the funder. The initial notional goes the other
/// way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoneyLeg {
    pub currency: String,
    #[serde(with = "crate::numeric::decimal_str")]
    pub notional: Decimal,
    pub effective_date: CivilDate,
    pub maturity_date: CivilDate,
    #[serde(with = "crate::numeric::decimal_str")]
    pub fixed_rate: Decimal,
    pub coupon: CouponTerms,
    pub roll: RollConvention,
    pub daycount: DayCount,
    pub payer: String,
    pub receiver: String,
    #[serde(flatten)]
    pub extensions: Extensions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// One flow in `start_year` (`end_year` must equal it).
    Single,
    /// The same amount every year.
    ConstantAnnual,
    /// Linear ramp from zero in `start_year` to the full amount in `end_year`.
    ReverseAmortizing,
}

impl ProfileKind {
    pub fn code(self) -> &'static str {
        match self {
            ProfileKind::Single => "SINGLE",
            ProfileKind::ConstantAnnual => "CONSTANT_ANNUAL",
            ProfileKind::ReverseAmortizing => "REVERSE_AMORTIZING",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarbonSign {
    /// Adds carbon to the atmosphere (positive XCA).
    Emission,
    /// Removes carbon (negative XCA).
    Absorption,
}

impl CarbonSign {
    pub fn factor(self) -> i64 {
        match self {
            CarbonSign::Emission => 1,
            CarbonSign::Absorption => -1,
        }
    }
}

/// Parametric generator of annual XCA flows. Years are 1-based offsets from
/// the leg's `base_year`; `amount_per_unit` is tCO2e per unit of the leg's
/// quantity, always non-negative, with direction given by `sign`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonProfile {
    pub kind: ProfileKind,
    pub sign: CarbonSign,
    pub start_year: u32,
    pub end_year: u32,
    #[serde(with = "crate::numeric::decimal_str")]
    pub amount_per_unit: Decimal,
    #[serde(flatten)]
    pub extensions: Extensions,
}

impl CarbonProfile {
    pub fn new(
        kind: ProfileKind,
        sign: CarbonSign,
        start_year: u32,
        end_year: u32,
        amount_per_unit: Decimal,
    ) -> Self {
        Self {
            kind,
            sign,
            start_year,
            end_year,
            amount_per_unit,
            extensions: Extensions::new(),
        }
    }

    pub fn single(sign: CarbonSign, year: u32, amount_per_unit: Decimal) -> Self {
        Self::new(ProfileKind::Single, sign, year, year, amount_per_unit)
    }

    /// Number of flows the profile expands to.
    pub fn flow_count(&self) -> usize {
        match self.kind {
            ProfileKind::Single => 1,
            _ => (self.end_year.saturating_sub(self.start_year) + 1) as usize,
        }
    }

    fn years(&self) -> std::ops::RangeInclusive<u32> {
        match self.kind {
            ProfileKind::Single => self.start_year..=self.start_year,
            _ => self.start_year..=self.end_year,
        }
    }
}

/// Carbon termsheet. `payer` is the party changing the carbon (the issuer),
/// `receiver` the party providing the money.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonLeg {
    #[serde(with = "crate::numeric::decimal_str")]
    pub unit_quantity: Decimal,
    pub unit_kind: String,
    pub base_year: i32,
    pub floating: bool,
    pub payer: String,
    pub receiver: String,
    pub profiles: Vec<CarbonProfile>,
    #[serde(flatten)]
    pub extensions: Extensions,
}

/// Single summary carbon flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShorthandCarbon {
    #[serde(with = "crate::numeric::decimal_str")]
    pub amount_tco2e: Decimal,
    pub as_of: CivilDate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CarbonRepresentation {
    Leg(CarbonLeg),
    Shorthand(ShorthandCarbon),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedProduct {
    pub strategy_id: String,
    pub parties: Vec<Party>,
    pub money_leg: MoneyLeg,
    pub carbon: CarbonRepresentation,
    pub labels: BTreeMap<String, String>,
    pub state: LifecycleState,
    pub extensions: Extensions,
}

impl LinkedProduct {
    pub fn party(&self, id: &str) -> Option<&Party> {
        self.parties.iter().find(|p| p.id == id)
    }

    pub fn carbon_leg(&self) -> Option<&CarbonLeg> {
        match &self.carbon {
            CarbonRepresentation::Leg(leg) => Some(leg),
            CarbonRepresentation::Shorthand(_) => None,
        }
    }

    pub fn involves_party(&self, id: &str) -> bool {
        self.parties.iter().any(|p| p.id == id)
    }
}

#[derive(Serialize, Deserialize)]
struct ProductDocument {
    strategy_id: String,
    parties: Vec<Party>,
    money_leg: MoneyLeg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    carbon_leg: Option<CarbonLeg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shorthand_carbon: Option<ShorthandCarbon>,
    #[serde(default)]
    labels: BTreeMap<String, String>,
    #[serde(default)]
    state: LifecycleState,
    #[serde(flatten)]
    extensions: Extensions,
}

pub fn parse_product(text: &str) -> Result<LinkedProduct> {
    let doc: ProductDocument = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let carbon = match (doc.carbon_leg, doc.shorthand_carbon) {
        (Some(leg), None) => CarbonRepresentation::Leg(leg),
        (None, Some(short)) => CarbonRepresentation::Shorthand(short),
        (None, None) => return Err(Error::MissingCarbon),
        (Some(_), Some(_)) => return Err(Error::AmbiguousCarbon),
    };
    Ok(LinkedProduct {
        strategy_id: doc.strategy_id,
        parties: doc.parties,
        money_leg: doc.money_leg,
        carbon,
        labels: doc.labels,
        state: doc.state,
        extensions: doc.extensions,
    })
}

/// Canonical JSON document, newline-terminated.
pub fn serialize_product(p: &LinkedProduct) -> String {
    let (carbon_leg, shorthand_carbon) = match &p.carbon {
        CarbonRepresentation::Leg(leg) => (Some(leg.clone()), None),
        CarbonRepresentation::Shorthand(s) => (None, Some(s.clone())),
    };
    let doc = ProductDocument {
        strategy_id: p.strategy_id.clone(),
        parties: p.parties.clone(),
        money_leg: p.money_leg.clone(),
        carbon_leg,
        shorthand_carbon,
        labels: p.labels.clone(),
        state: p.state.clone(),
        extensions: p.extensions.clone(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("product documents always serialize");
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FindingCode {
    EmptyStrategyId,
    EmptyPartyId,
    DuplicatePartyId,
    UnknownParty,
    SelfPayment,
    InvalidCurrency,
    NonPositiveNotional,
    NegativeRate,
    MaturityNotAfterEffective,
    InvalidCouponAnchor,
    CouponYearOrder,
    CouponBeforeEffective,
    CouponAfterMaturity,
    EmptyProfiles,
    InvalidProfileYears,
    NegativeProfileAmount,
    NegativeUnitQuantity,
    ZeroUnitQuantity,
    OverlappingProfiles,
    CarbonDirection,
    GreenLabel,
}

impl FindingCode {
    pub fn code(self) -> &'static str {
        match self {
            Self::EmptyStrategyId => "EMPTY_STRATEGY_ID",
            Self::EmptyPartyId => "EMPTY_PARTY_ID",
            Self::DuplicatePartyId => "DUPLICATE_PARTY_ID",
            Self::UnknownParty => "UNKNOWN_PARTY",
            Self::SelfPayment => "SELF_PAYMENT",
            Self::InvalidCurrency => "INVALID_CURRENCY",
            Self::NonPositiveNotional => "NON_POSITIVE_NOTIONAL",
            Self::NegativeRate => "NEGATIVE_RATE",
            Self::MaturityNotAfterEffective => "MATURITY_NOT_AFTER_EFFECTIVE",
            Self::InvalidCouponAnchor => "INVALID_COUPON_ANCHOR",
            Self::CouponYearOrder => "COUPON_YEAR_ORDER",
            Self::CouponBeforeEffective => "COUPON_BEFORE_EFFECTIVE",
            Self::CouponAfterMaturity => "COUPON_AFTER_MATURITY",
            Self::EmptyProfiles => "EMPTY_PROFILES",
            Self::InvalidProfileYears => "INVALID_PROFILE_YEARS",
            Self::NegativeProfileAmount => "NEGATIVE_PROFILE_AMOUNT",
            Self::NegativeUnitQuantity => "NEGATIVE_UNIT_QUANTITY",
            Self::ZeroUnitQuantity => "ZERO_UNIT_QUANTITY",
            Self::OverlappingProfiles => "OVERLAPPING_PROFILES",
            Self::CarbonDirection => "CARBON_DIRECTION",
            Self::GreenLabel => "GREEN_LABEL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub message: String,
}

impl Finding {
    fn error(code: FindingCode, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code,
            message: message.into(),
        }
    }

    fn warning(code: FindingCode, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            code,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{level}: {}", self.message)
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(Finding::is_error)
}

/// True if `text` contains "green" as a whole word, any case.
pub fn mentions_green(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .any(|word| word.eq_ignore_ascii_case("green"))
}

/// Checks every product invariant. Findings come back in a fixed order:
/// identity, parties, money leg, carbon, labels.
pub fn validate_product(p: &LinkedProduct) -> Vec<Finding> {
    use FindingCode::*;
    let mut out = Vec::new();

    if p.strategy_id.trim().is_empty() {
        out.push(Finding::error(
            EmptyStrategyId,
            "strategy_id must be nonempty",
        ));
    }

    let mut seen = std::collections::BTreeSet::new();
    for party in &p.parties {
        if party.id.trim().is_empty() {
            out.push(Finding::error(EmptyPartyId, "party id must be nonempty"));
        } else if !seen.insert(party.id.as_str()) {
            out.push(Finding::error(
                DuplicatePartyId,
                format!("party id `{}` appears more than once", party.id),
            ));
        }
    }

    let check_direction = |out: &mut Vec<Finding>, leg: &str, payer: &str, receiver: &str| {
        for (side, id) in [("payer", payer), ("receiver", receiver)] {
            if p.party(id).is_none() {
                out.push(Finding::error(
                    UnknownParty,
                    format!("{leg}.{side} `{id}` is not a listed party"),
                ));
            }
        }
        if payer == receiver {
            out.push(Finding::error(
                SelfPayment,
                format!("{leg} payer and receiver are both `{payer}`"),
            ));
        }
    };

    let m = &p.money_leg;
    check_direction(&mut out, "money_leg", &m.payer, &m.receiver);
    if m.currency.len() != 3 || !m.currency.chars().all(|c| c.is_ascii_uppercase()) {
        out.push(Finding::error(
            InvalidCurrency,
            format!("currency `{}` is not a 3-letter code", m.currency),
        ));
    }
    if m.notional <= Decimal::ZERO {
        out.push(Finding::error(
            NonPositiveNotional,
            format!("notional {} must be positive", m.notional),
        ));
    }
    if m.fixed_rate < Decimal::ZERO {
        out.push(Finding::error(
            NegativeRate,
            format!("fixed_rate {} must be non-negative", m.fixed_rate),
        ));
    }
    if m.effective_date >= m.maturity_date {
        out.push(Finding::error(
            MaturityNotAfterEffective,
            format!(
                "maturity {} must be after effective date {}",
                m.maturity_date, m.effective_date
            ),
        ));
    }
    let c = &m.coupon;
    match MonthDay::new(c.month, c.day) {
        Err(_) => out.push(Finding::error(
            InvalidCouponAnchor,
            format!(
                "coupon anchor month {} day {} is not a calendar day",
                c.month, c.day
            ),
        )),
        Ok(anchor) if c.first_year <= c.last_year => {
            if let Ok(first) = anchor.in_year(c.first_year) {
                if first <= m.effective_date {
                    out.push(Finding::error(
                        CouponBeforeEffective,
                        format!(
                            "first coupon {first} is not after effective date {}",
                            m.effective_date
                        ),
                    ));
                }
            }
            if let Ok(last) = anchor.in_year(c.last_year) {
                if last > m.maturity_date {
                    out.push(Finding::warning(
                        CouponAfterMaturity,
                        format!(
                            "last coupon {last} falls after notional redemption on {}",
                            m.maturity_date
                        ),
                    ));
                }
            }
        }
        Ok(_) => {}
    }
    if c.first_year > c.last_year {
        out.push(Finding::error(
            CouponYearOrder,
            format!(
                "coupon first_year {} is after last_year {}",
                c.first_year, c.last_year
            ),
        ));
    }

    if let CarbonRepresentation::Leg(leg) = &p.carbon {
        check_direction(&mut out, "carbon_leg", &leg.payer, &leg.receiver);
        if let Some(party) = p.party(&leg.payer) {
            if party.role != PartyRole::Issuer {
                out.push(Finding::warning(
                    CarbonDirection,
                    format!(
                        "carbon_leg.payer `{}` has role {:?}, expected Issuer",
                        party.id, party.role
                    ),
                ));
            }
        }
        if let Some(party) = p.party(&leg.receiver) {
            if party.role != PartyRole::Funder {
                out.push(Finding::warning(
                    CarbonDirection,
                    format!(
                        "carbon_leg.receiver `{}` has role {:?}, expected Funder",
                        party.id, party.role
                    ),
                ));
            }
        }
        if leg.unit_quantity < Decimal::ZERO {
            out.push(Finding::error(
                NegativeUnitQuantity,
                format!("unit_quantity {} must be non-negative", leg.unit_quantity),
            ));
        } else if leg.unit_quantity.is_zero() {
            out.push(Finding::warning(
                ZeroUnitQuantity,
                "unit_quantity is zero; every carbon flow will be zero",
            ));
        }
        if leg.profiles.is_empty() {
            out.push(Finding::error(EmptyProfiles, "carbon_leg has no profiles"));
        }
        for (i, prof) in leg.profiles.iter().enumerate() {
            let bad_span = prof.kind == ProfileKind::Single && prof.start_year != prof.end_year;
            if prof.start_year < 1 || prof.start_year > prof.end_year || bad_span {
                out.push(Finding::error(
                    InvalidProfileYears,
                    format!(
                        "profile {i}: years {}..{} invalid for {}",
                        prof.start_year,
                        prof.end_year,
                        prof.kind.code()
                    ),
                ));
            }
            if prof.amount_per_unit < Decimal::ZERO {
                out.push(Finding::error(
                    NegativeProfileAmount,
                    format!("profile {i}: amount_per_unit must be non-negative; use `sign` for direction"),
                ));
            }
        }
        for (i, a) in leg.profiles.iter().enumerate() {
            for (j, b) in leg.profiles.iter().enumerate().skip(i + 1) {
                if a.sign == b.sign
                    && a.years().start() <= b.years().end()
                    && b.years().start() <= a.years().end()
                {
                    out.push(Finding::warning(
                        OverlappingProfiles,
                        format!(
                            "profiles {i} and {j} ({:?}) overlap in years {}..{}",
                            a.sign,
                            a.years().start().max(b.years().start()),
                            a.years().end().min(b.years().end())
                        ),
                    ));
                }
            }
        }
    }

    for (key, value) in &p.labels {
        if mentions_green(key) || mentions_green(value) {
            out.push(Finding::error(
                GreenLabel,
                format!("Manifesto III: Green label forbidden (label `{key}` = `{value}`)"),
            ));
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifecycle::LifecycleStatus;
    use std::str::FromStr;

    const FOREST: &str = include_str!("../fixtures/forest.json");
    const WIND: &str = include_str!("../fixtures/wind.json");
    const COAL: &str = include_str!("../fixtures/coal.json");
    const COAL_LISTED: &str = include_str!("../fixtures/coal_listed_years.json");

    fn dec(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn forest_fixture_parses() {
        let p = parse_product(FOREST).unwrap();
        assert_eq!(p.money_leg.notional, dec("100000000"));
        assert_eq!(p.money_leg.currency, "USD");
        assert_eq!(p.state.status, LifecycleStatus::Active);
        let leg = p.carbon_leg().unwrap();
        let ramp = leg
            .profiles
            .iter()
            .find(|pr| pr.kind == ProfileKind::ReverseAmortizing)
            .unwrap();
        assert_eq!((ramp.start_year, ramp.end_year), (1, 50));
        assert_eq!(ramp.sign, CarbonSign::Absorption);
    }

    #[test]
    fn missing_carbon_is_rejected() {
        let mut v: Value = serde_json::from_str(FOREST).unwrap();
        v.as_object_mut().unwrap().remove("carbon_leg");
        let err = parse_product(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::MissingCarbon));
        assert!(err.to_string().contains("carbon representation required"));
    }

    #[test]
    fn both_carbon_forms_rejected() {
        let mut v: Value = serde_json::from_str(FOREST).unwrap();
        v["shorthand_carbon"] = serde_json::json!({"amount_tco2e": "5", "as_of": "2022-01-03"});
        assert!(matches!(
            parse_product(&v.to_string()),
            Err(Error::AmbiguousCarbon)
        ));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_product("{\n  \"strategy_id\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_and_bad_values() {
        let mut v: Value = serde_json::from_str(FOREST).unwrap();
        v["money_leg"].as_object_mut().unwrap().remove("notional");
        let err = parse_product(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("notional"), "{err}");

        let mut v: Value = serde_json::from_str(FOREST).unwrap();
        v["money_leg"]["effective_date"] = "2022-02-30".into();
        assert!(matches!(
            parse_product(&v.to_string()),
            Err(Error::Syntax { .. })
        ));

        let mut v: Value = serde_json::from_str(FOREST).unwrap();
        v["money_leg"]["notional"] = "1e8".into();
        assert!(parse_product(&v.to_string()).is_err());

        // Amounts must be strings, not JSON numbers.
        let mut v: Value = serde_json::from_str(FOREST).unwrap();
        v["money_leg"]["notional"] = serde_json::json!(100);
        assert!(parse_product(&v.to_string()).is_err());
    }

    #[test]
    fn unknown_fields_are_preserved() {
        let mut v: Value = serde_json::from_str(FOREST).unwrap();
        v["desk"] = "project-finance".into();
        v["money_leg"]["isin"] = "XS0000000000".into();
        let p = parse_product(&v.to_string()).unwrap();
        assert_eq!(p.extensions["desk"], Value::from("project-finance"));
        assert_eq!(p.money_leg.extensions["isin"], Value::from("XS0000000000"));
        let text = serialize_product(&p);
        assert!(text.contains("\"desk\": \"project-finance\""));
        assert_eq!(parse_product(&text).unwrap(), p);
    }

    #[test]
    fn fixtures_round_trip() {
        for text in [FOREST, WIND, COAL, COAL_LISTED] {
            let p = parse_product(text).unwrap();
            let once = serialize_product(&p);
            assert_eq!(parse_product(&once).unwrap(), p);
            assert_eq!(serialize_product(&parse_product(&once).unwrap()), once);
            assert_eq!(serialize_product(&p), once);
        }
    }

    #[test]
    fn canonical_key_order_and_plain_decimals() {
        let text = serialize_product(&parse_product(FOREST).unwrap());
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("strategy_id") < pos("parties"));
        assert!(pos("parties") < pos("money_leg"));
        assert!(pos("money_leg") < pos("carbon_leg"));
        assert!(pos("carbon_leg") < pos("labels"));
        assert!(pos("labels") < pos("state"));
        assert!(text.contains("\"notional\": \"100000000\""));
        assert!(text.contains("\"effective_date\": \"2022-01-03\""));
    }

    #[test]
    fn wind_zero_maintenance_is_explicit() {
        let p = parse_product(WIND).unwrap();
        let maint = &p.carbon_leg().unwrap().profiles[1];
        assert_eq!(maint.kind, ProfileKind::ConstantAnnual);
        assert!(maint.amount_per_unit.is_zero());
        let text = serialize_product(&p);
        assert!(text.contains("\"amount_per_unit\": \"0\""));
    }

    #[test]
    fn forest_validates_with_warnings_only() {
        let findings = validate_product(&parse_product(FOREST).unwrap());
        assert!(!has_errors(&findings), "{findings:?}");
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].code, FindingCode::CouponAfterMaturity);
    }

    #[test]
    fn all_fixtures_validate_without_errors() {
        for text in [FOREST, WIND, COAL, COAL_LISTED] {
            let findings = validate_product(&parse_product(text).unwrap());
            assert!(!has_errors(&findings), "{findings:?}");
        }
    }

    #[test]
    fn coal_listed_years_flag_overlap() {
        let prose = validate_product(&parse_product(COAL).unwrap());
        assert!(!prose
            .iter()
            .any(|f| f.code == FindingCode::OverlappingProfiles));
        let listed = validate_product(&parse_product(COAL_LISTED).unwrap());
        let overlaps: Vec<_> = listed
            .iter()
            .filter(|f| f.code == FindingCode::OverlappingProfiles)
            .collect();
        assert_eq!(overlaps.len(), 2, "{listed:?}");
        assert!(overlaps.iter().all(|f| f.severity == Severity::Warning));
    }

    #[test]
    fn green_label_is_an_error() {
        let mut p = parse_product(FOREST).unwrap();
        p.labels.insert("type".into(), "Green bond".into());
        let findings = validate_product(&p);
        let green: Vec<_> = findings
            .iter()
            .filter(|f| f.code == FindingCode::GreenLabel)
            .collect();
        assert_eq!(green.len(), 1);
        assert!(green[0].is_error());
        assert!(green[0]
            .message
            .starts_with("Manifesto III: Green label forbidden"));
    }

    #[test]
    fn green_detection_is_word_based() {
        assert!(mentions_green("GREEN"));
        assert!(mentions_green("green-bond"));
        assert!(mentions_green("Sustainable/Green"));
        assert!(!mentions_green("Evergreen Forestry"));
        assert!(!mentions_green("greenhouse gas"));
    }

    #[test]
    fn green_in_party_name_is_not_a_label() {
        let mut p = parse_product(FOREST).unwrap();
        p.parties[0].name = "Green Valley Pension Fund".into();
        assert!(!has_errors(&validate_product(&p)));
    }

    #[test]
    fn empty_strategy_id_is_an_error() {
        let mut p = parse_product(FOREST).unwrap();
        p.strategy_id = String::new();
        let findings = validate_product(&p);
        assert_eq!(findings[0].code, FindingCode::EmptyStrategyId);
        assert!(findings[0].is_error());
    }

    #[test]
    fn structural_errors_are_reported() {
        let mut p = parse_product(FOREST).unwrap();
        p.money_leg.notional = Decimal::ZERO;
        p.money_leg.fixed_rate = dec("-0.01");
        p.money_leg.maturity_date = p.money_leg.effective_date;
        p.money_leg.receiver = "Z".into();
        p.parties.push(Party::new("A", "dup", PartyRole::Other));
        if let CarbonRepresentation::Leg(leg) = &mut p.carbon {
            leg.profiles[0].start_year = 0;
            leg.profiles[1].amount_per_unit = dec("-1");
        }
        let codes: Vec<_> = validate_product(&p)
            .into_iter()
            .filter(|f| f.is_error())
            .map(|f| f.code)
            .collect();
        for code in [
            FindingCode::DuplicatePartyId,
            FindingCode::UnknownParty,
            FindingCode::NonPositiveNotional,
            FindingCode::NegativeRate,
            FindingCode::MaturityNotAfterEffective,
            FindingCode::InvalidProfileYears,
            FindingCode::NegativeProfileAmount,
        ] {
            assert!(codes.contains(&code), "missing {code:?} in {codes:?}");
        }
    }

    #[test]
    fn zero_quantity_is_flagged() {
        let mut p = parse_product(FOREST).unwrap();
        if let CarbonRepresentation::Leg(leg) = &mut p.carbon {
            leg.unit_quantity = Decimal::ZERO;
        }
        let findings = validate_product(&p);
        assert!(findings
            .iter()
            .any(|f| f.code == FindingCode::ZeroUnitQuantity && !f.is_error()));
    }

    #[test]
    fn validation_is_deterministic() {
        let mut p = parse_product(COAL_LISTED).unwrap();
        p.labels.insert("class".into(), "green".into());
        assert_eq!(validate_product(&p), validate_product(&p));
    }
}
