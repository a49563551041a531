//! Carbon-equivalent termsheets for financial products.
//!
//! Every product pairs a money leg with a carbon (XCA, tCO2e) leg, or with a
//! single summary carbon flow, linked by a strategy identifier. The crate
//! expands both legs into dated flows, collapses carbon flows into a
//! summary with decay-weighting of past emissions, nets portfolios and sizes
//! offsets, prices carbon against scenario curves, processes lifecycle
//! events, and keeps positions in a plain-file store.
//!
//! Modules:
//!
//! - [`temporal`]: calendars, business-day rolls, Act/360, annual schedules
//! - [`termsheet`]: product model, JSON parse/serialize, validation
//! - [`flowgen`]: money and carbon flow expansion, fixings, attribution
//! - [`accounting`]: decay factor, summaries, netting, offsets, pico-degrees
//! - [`lifecycle`]: maturity/default events and emission permits
//! - [`pricing`]: scenario price curves and monetization
//! - [`store`]: file-based position keeping with an event journal

pub mod accounting;
pub mod error;
pub mod flowgen;
pub mod lifecycle;
pub mod numeric;
pub mod pricing;
pub mod store;
pub mod temporal;
pub mod termsheet;

pub use error::{Error, Result};
pub use numeric::Quantity;
