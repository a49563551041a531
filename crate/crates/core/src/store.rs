//! Plain-file position keeping.
//!
//! Layout under the store root:
//!
//! ```text
//! products/<strategy_id>.json   canonical product documents, as booked
//! journal.csv                   seq,strategy_id,date,event,policy (append-only)
//! fixings.csv                   strategy_id,year,observed_tco2e
//! permits.csv                   permit_id,holder,grantor,volume,window_start,window_end,exercised
//! ```
//!
//! Product documents and the permit/fixing tables are published by writing a
//! temporary file and renaming it over the target, so readers never see a
//! partial write. Journal lines are appended whole and synced; a trailing
//! line without a newline is a torn write and is ignored on open. Lifecycle
//! state is never written into product documents; it is rebuilt from the
//! journal every time the store is opened.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flowgen::{apply_fixings, expand, expect_header, CarbonFlow, FixingTable, FlowSet};
use crate::lifecycle::{
    apply_event, exercise_permit, replay_events, LifecycleEvent, LifecycleState, LifecycleStatus,
    PermitOption, XcaPolicy,
};
use crate::temporal::{parse_date, Calendar, CivilDate};
use crate::termsheet::{
    has_errors, parse_product, serialize_product, validate_product, LinkedProduct,
};

const PRODUCTS_DIR: &str = "products";
const JOURNAL: &str = "journal.csv";
const FIXINGS: &str = "fixings.csv";
const PERMITS: &str = "permits.csv";
const JOURNAL_HEADER: &str = "seq,strategy_id,date,event,policy";
const PERMITS_HEADER: [&str; 7] = [
    "permit_id",
    "holder",
    "grantor",
    "volume",
    "window_start",
    "window_end",
    "exercised",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub strategy_id: String,
    /// SHA-256 of the canonical document, lowercase hex.
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub seq: u64,
    pub strategy_id: String,
    pub event: LifecycleEvent,
}

/// Selects products by status, party and overlap of the money-leg life
/// (effective to maturity) with `[from, to]`. Unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortfolioFilter {
    pub status: Option<LifecycleStatus>,
    pub party: Option<String>,
    pub from: Option<CivilDate>,
    pub to: Option<CivilDate>,
}

impl PortfolioFilter {
    pub fn matches(&self, p: &LinkedProduct) -> bool {
        if self.status.is_some_and(|s| s != p.state.status) {
            return false;
        }
        if self
            .party
            .as_deref()
            .is_some_and(|id| !p.involves_party(id))
        {
            return false;
        }
        if self
            .from
            .is_some_and(|from| p.money_leg.maturity_date < from)
        {
            return false;
        }
        if self.to.is_some_and(|to| p.money_leg.effective_date > to) {
            return false;
        }
        true
    }
}

#[derive(Debug)]
pub struct PositionStore {
    root: PathBuf,
    products: BTreeMap<String, LinkedProduct>,
    journal: Vec<JournalEntry>,
}

impl PositionStore {
    /// Opens (creating if needed) the store at `root` and rebuilds lifecycle
    /// state from the journal.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(PRODUCTS_DIR))?;
        let journal_path = root.join(JOURNAL);
        if !journal_path.exists() {
            write_atomic(&journal_path, format!("{JOURNAL_HEADER}\n").as_bytes())?;
        }

        let mut products = BTreeMap::new();
        let mut names: Vec<PathBuf> = fs::read_dir(root.join(PRODUCTS_DIR))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        names.sort();
        for path in names {
            let text = fs::read_to_string(&path)?;
            let mut product = parse_product(&text)
                .map_err(|e| Error::Store(format!("{}: {e}", path.display())))?;
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            if stem != product.strategy_id {
                return Err(Error::Store(format!(
                    "{} holds strategy `{}`",
                    path.display(),
                    product.strategy_id
                )));
            }
            product.state = LifecycleState::default();
            products.insert(product.strategy_id.clone(), product);
        }

        let mut store = Self {
            root,
            products,
            journal: Vec::new(),
        };
        for entry in read_journal(&journal_path)? {
            let product = store.products.get_mut(&entry.strategy_id).ok_or_else(|| {
                Error::Store(format!(
                    "journal entry {} names unknown strategy `{}`",
                    entry.seq, entry.strategy_id
                ))
            })?;
            product
                .state
                .record(&entry.strategy_id, entry.event)
                .map_err(|e| Error::Store(format!("journal entry {}: {e}", entry.seq)))?;
            store.journal.push(entry);
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn product_path(&self, strategy_id: &str) -> PathBuf {
        self.root
            .join(PRODUCTS_DIR)
            .join(format!("{strategy_id}.json"))
    }

    /// Persists a product that validates without errors. Its lifecycle state
    /// must be fresh (Active, no events).
    pub fn book(&mut self, product: &LinkedProduct) -> Result<Receipt> {
        let findings = validate_product(product);
        if has_errors(&findings) {
            return Err(Error::ValidationFailed {
                strategy_id: product.strategy_id.clone(),
                findings: findings.into_iter().filter(|f| f.is_error()).collect(),
            });
        }
        check_file_safe(&product.strategy_id)?;
        if product.state != LifecycleState::default() {
            return Err(Error::InvalidValue {
                field: "state".into(),
                message: "only Active products without events can be booked".into(),
            });
        }
        let path = self.product_path(&product.strategy_id);
        if self.products.contains_key(&product.strategy_id) || path.exists() {
            return Err(Error::DuplicateStrategy(product.strategy_id.clone()));
        }
        let document = serialize_product(product);
        write_atomic(&path, document.as_bytes())?;
        self.products
            .insert(product.strategy_id.clone(), product.clone());
        Ok(Receipt {
            strategy_id: product.strategy_id.clone(),
            content_hash: content_hash(&document),
        })
    }

    pub fn product(&self, strategy_id: &str) -> Result<&LinkedProduct> {
        self.products
            .get(strategy_id)
            .ok_or_else(|| Error::UnknownStrategy(strategy_id.to_string()))
    }

    /// The booked document, byte for byte.
    pub fn document(&self, strategy_id: &str) -> Result<String> {
        self.product(strategy_id)?;
        Ok(fs::read_to_string(self.product_path(strategy_id))?)
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    /// Validates the event against the product and its flows, then appends it
    /// to the journal.
    pub fn record_event(
        &mut self,
        strategy_id: &str,
        event: LifecycleEvent,
        configured_policy: XcaPolicy,
        cal: &Calendar,
    ) -> Result<LifecycleState> {
        let product = self.product(strategy_id)?;
        let flows = self.flows_for(product, cal)?;
        let (updated, _) = apply_event(product, &flows, event, configured_policy)?;
        let logged = *updated.state.events.last().expect("event was recorded");
        let seq = self.journal.last().map_or(1, |e| e.seq + 1);
        let policy = logged.policy.map_or("-", |p| p.code());
        let line = format!(
            "{seq},{strategy_id},{},{},{policy}\n",
            logged.date,
            logged.kind.code()
        );
        let mut file = OpenOptions::new()
            .append(true)
            .open(self.root.join(JOURNAL))?;
        file.write_all(line.as_bytes())?;
        file.sync_data()?;

        self.journal.push(JournalEntry {
            seq,
            strategy_id: strategy_id.to_string(),
            event: logged,
        });
        let state = updated.state.clone();
        self.products.insert(strategy_id.to_string(), updated);
        Ok(state)
    }

    /// Products matching `filter`, in strategy id order.
    pub fn list_portfolio(&self, filter: &PortfolioFilter) -> Vec<&LinkedProduct> {
        self.products
            .values()
            .filter(|p| filter.matches(p))
            .collect()
    }

    pub fn products(&self) -> impl Iterator<Item = &LinkedProduct> {
        self.products.values()
    }

    /// Expanded flows for a product with stored fixings and logged events
    /// applied.
    pub fn flows_for(&self, product: &LinkedProduct, cal: &Calendar) -> Result<FlowSet> {
        let mut flows = expand(product, cal)?;
        let fixings = self.fixings()?;
        if !fixings.is_empty() {
            flows.carbon = apply_fixings(&flows.carbon, &fixings)?;
        }
        Ok(replay_events(&flows, &product.state.events))
    }

    pub fn fixings(&self) -> Result<FixingTable> {
        let path = self.root.join(FIXINGS);
        if !path.exists() {
            return Ok(FixingTable::new());
        }
        FixingTable::from_csv(&fs::read_to_string(path)?)
    }

    /// Adds fixings; keys already present are rejected.
    pub fn add_fixings(&mut self, table: &FixingTable) -> Result<()> {
        let mut all = self.fixings()?;
        all.merge(table)?;
        write_atomic(&self.root.join(FIXINGS), all.to_csv().as_bytes())
    }

    pub fn permits(&self) -> Result<Vec<PermitOption>> {
        let path = self.root.join(PERMITS);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(path)?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        expect_header(&mut reader, &PERMITS_HEADER)?;
        let mut out = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |e: Error| Error::Record {
                line,
                message: e.to_string(),
            };
            let dec = |field: &str, s: &str| {
                s.parse::<Decimal>().map_err(|_| {
                    bad(Error::InvalidValue {
                        field: field.into(),
                        message: format!("`{s}`"),
                    })
                })
            };
            let permit = PermitOption {
                permit_id: record[0].to_string(),
                holder: record[1].to_string(),
                grantor: record[2].to_string(),
                volume: dec("volume", &record[3])?,
                window_start: parse_date(&record[4]).map_err(bad)?,
                window_end: parse_date(&record[5]).map_err(bad)?,
                exercised: dec("exercised", &record[6])?,
            };
            permit.check().map_err(bad)?;
            out.push(permit);
        }
        Ok(out)
    }

    fn save_permits(&self, permits: &[PermitOption]) -> Result<()> {
        let mut out = PERMITS_HEADER.join(",");
        out.push('\n');
        for p in permits {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.permit_id,
                p.holder,
                p.grantor,
                p.volume,
                p.window_start,
                p.window_end,
                p.exercised
            ));
        }
        write_atomic(&self.root.join(PERMITS), out.as_bytes())
    }

    pub fn grant_permit(&mut self, permit: PermitOption) -> Result<()> {
        permit.check()?;
        check_file_safe(&permit.permit_id)?;
        let mut permits = self.permits()?;
        if permits.iter().any(|p| p.permit_id == permit.permit_id) {
            return Err(Error::InvalidValue {
                field: "permit_id".into(),
                message: format!("`{}` already granted", permit.permit_id),
            });
        }
        permits.push(permit);
        permits.sort_by(|a, b| a.permit_id.cmp(&b.permit_id));
        self.save_permits(&permits)
    }

    pub fn exercise_permit(
        &mut self,
        permit_id: &str,
        date: CivilDate,
        amount: Decimal,
    ) -> Result<(PermitOption, CarbonFlow)> {
        let mut permits = self.permits()?;
        let slot = permits
            .iter_mut()
            .find(|p| p.permit_id == permit_id)
            .ok_or_else(|| Error::UnknownPermit(permit_id.to_string()))?;
        let (updated, flow) = exercise_permit(slot, date, amount)?;
        *slot = updated.clone();
        self.save_permits(&permits)?;
        Ok((updated, flow))
    }
}

pub fn content_hash(document: &str) -> String {
    hex::encode(Sha256::digest(document.as_bytes()))
}

/// Ids become file names, so keep them to a portable character set.
fn check_file_safe(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidValue {
            field: "strategy_id".into(),
            message: format!("`{id}` must use only letters, digits, '-', '_' and '.'"),
        })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path.file_name().expect("file path").to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut file = File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_journal(path: &Path) -> Result<Vec<JournalEntry>> {
    let text = fs::read_to_string(path)?;
    // A final line without a newline was never fully written.
    let complete = match text.rfind('\n') {
        Some(end) => &text[..=end],
        None => "",
    };
    let mut lines = complete.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == JOURNAL_HEADER => {}
        _ => {
            return Err(Error::Store(format!(
                "{}: missing header `{JOURNAL_HEADER}`",
                path.display()
            )))
        }
    }
    let mut out: Vec<JournalEntry> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| {
            Error::Store(format!("{} line {}: {message}", path.display(), idx + 1))
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [seq, strategy_id, date, event, policy] = fields[..] else {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        };
        let seq: u64 = seq
            .parse()
            .map_err(|_| bad(format!("invalid seq `{seq}`")))?;
        if out.last().is_some_and(|e| e.seq >= seq) {
            return Err(bad(format!("seq {seq} out of order")));
        }
        let event = LifecycleEvent {
            date: parse_date(date).map_err(|e| bad(e.to_string()))?,
            kind: event.parse().map_err(|e: Error| bad(e.to_string()))?,
            policy: match policy {
                "-" | "" => None,
                p => Some(p.parse().map_err(|e: Error| bad(e.to_string()))?),
            },
        };
        out.push(JournalEntry {
            seq,
            strategy_id: strategy_id.to_string(),
            event,
        });
    }
    Ok(out)
}
