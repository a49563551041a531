use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rust_decimal::Decimal;

use cep_core::accounting::{
    net_portfolio, required_offset, summarize, summary_row, CarbonSummary, DecayParams,
    DEFAULT_DECAY_RATE, SUMMARY_CSV_HEADER,
};
use cep_core::flowgen::{expand, flow_rows, FixingTable, FlowSet, FLOW_CSV_HEADER};
use cep_core::lifecycle::{
    apply_event, EventKind, LifecycleEvent, LifecycleStatus, PermitOption, XcaPolicy,
};
use cep_core::numeric;
use cep_core::pricing::{load_curve, monetize, report_rows, CarbonPriceCurve, REPORT_CSV_HEADER};
use cep_core::store::{PortfolioFilter, PositionStore};
use cep_core::temporal::{parse_date, Calendar, CivilDate};
use cep_core::termsheet::{has_errors, parse_product, validate_product, LinkedProduct};

mod output;

use output::{Format, Table};

/// Carbon-equivalent termsheet engine.
#[derive(Debug, Parser)]
#[command(name = "cep", version, about)]
struct Cli {
    #[command(flatten)]
    config: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunConfig {
    /// Position store directory.
    #[arg(long, global = true, env = "CEP_STORE", default_value = "cep-store")]
    store: PathBuf,
    /// Accounting date. Defaults to the earliest effective date in scope.
    #[arg(long, global = true, value_parser = parse_date_arg)]
    as_of: Option<CivilDate>,
    /// Annual decay rate in basis points (default -20).
    #[arg(long, global = true, allow_hyphen_values = true)]
    decay_rate: Option<f64>,
    /// Accept a decay rate outside the guard rail.
    #[arg(long, global = true)]
    force_rate: bool,
    /// Carbon policy applied to XCA non-payment events that carry none.
    #[arg(long, global = true, value_enum)]
    xca_default_policy: Option<PolicyArg>,
    /// Price curve CSV. Defaults to a two-point illustrative curve.
    #[arg(long, global = true)]
    curve: Option<PathBuf>,
    /// Holiday file, one ISO date per line. Weekends only if absent.
    #[arg(long, global = true)]
    holidays: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Continue,
    Cease,
}

impl From<PolicyArg> for XcaPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Continue => XcaPolicy::Continue,
            PolicyArg::Cease => XcaPolicy::Cease,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate product documents.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Book product documents into the store.
    Book {
        files: Vec<PathBuf>,
        /// Fixings CSV (strategy_id,year,observed_tco2e) to add.
        #[arg(long)]
        fixings: Option<PathBuf>,
    },
    /// Expand money and carbon flows.
    Flows(Selection),
    /// Carbon summary per product.
    Summarize(Selection),
    /// Netted carbon summary of the selection.
    Net(Selection),
    /// Offset flow that brings the selection to net zero.
    Offset(Selection),
    /// Monetize carbon flows against a price curve.
    Price(Selection),
    /// Record lifecycle events from a CSV file (strategy_id,date,event,policy).
    Event { file: PathBuf },
    /// Grant, exercise and list emission permits.
    Permit {
        #[command(subcommand)]
        action: PermitAction,
    },
    /// Per-product status, carbon summary and cost.
    Report(Selection),
}

/// Products are store strategy ids or paths to product documents; none means
/// the whole store.
#[derive(Debug, Args)]
struct Selection {
    products: Vec<String>,
    /// Only products in this lifecycle status (Active, Matured, Defaulted).
    #[arg(long, value_parser = parse_status)]
    status: Option<LifecycleStatus>,
    /// Only products with this party.
    #[arg(long)]
    party: Option<String>,
}

impl Selection {
    fn filter(&self) -> PortfolioFilter {
        PortfolioFilter {
            status: self.status,
            party: self.party.clone(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Subcommand)]
enum PermitAction {
    Grant {
        permit_id: String,
        #[arg(long)]
        holder: String,
        #[arg(long)]
        grantor: String,
        #[arg(long)]
        volume: Decimal,
        #[arg(long, value_parser = parse_date_arg)]
        from: CivilDate,
        #[arg(long, value_parser = parse_date_arg)]
        to: CivilDate,
    },
    Exercise {
        permit_id: String,
        #[arg(long, value_parser = parse_date_arg)]
        date: CivilDate,
        #[arg(long)]
        amount: Decimal,
    },
    List,
}

fn parse_status(s: &str) -> Result<LifecycleStatus, String> {
    s.parse().map_err(|e: cep_core::Error| e.to_string())
}

fn parse_date_arg(s: &str) -> Result<CivilDate, String> {
    parse_date(s).map_err(|e| e.to_string())
}

/// A failed run: message for standard error, exit status 1.
#[derive(Debug)]
struct Failure(String);

impl From<cep_core::Error> for Failure {
    fn from(e: cep_core::Error) -> Self {
        Failure(e.to_string())
    }
}

type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(code) => code,
        Err(Failure(message)) => {
            let _ = out.flush();
            eprintln!("cep: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli, out: &mut dyn Write) -> Outcome<ExitCode> {
    let cfg = &cli.config;
    match &cli.command {
        Command::Validate { files } => validate(cfg, files, out),
        Command::Book { files, fixings } => book(cfg, files, fixings.as_deref(), out),
        Command::Flows(sel) => flows(cfg, sel, out),
        Command::Summarize(sel) => summarize_cmd(cfg, sel, out),
        Command::Net(sel) => net(cfg, sel, out),
        Command::Offset(sel) => offset(cfg, sel, out),
        Command::Price(sel) => price(cfg, sel, out),
        Command::Event { file } => event(cfg, file, out),
        Command::Permit { action } => permit(cfg, action, out),
        Command::Report(sel) => report(cfg, sel, out),
    }
}

fn read_file(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: cep_core::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn emit(cfg: &RunConfig, table: &Table, out: &mut dyn Write) -> Outcome<ExitCode> {
    table
        .write(cfg.format, out)
        .map_err(|e| Failure(format!("writing output: {e}")))?;
    Ok(ExitCode::SUCCESS)
}

impl RunConfig {
    fn calendar(&self) -> Outcome<Calendar> {
        match &self.holidays {
            Some(path) => with_path(path, Calendar::from_holiday_file(&read_file(path)?)),
            None => Ok(Calendar::default()),
        }
    }

    fn decay(&self) -> Outcome<DecayParams> {
        let params = match self.decay_rate {
            Some(bps) => DecayParams::from_bps(bps, self.force_rate)?,
            None => DecayParams::new(DEFAULT_DECAY_RATE)?,
        };
        Ok(params)
    }

    fn curve(&self) -> Outcome<CarbonPriceCurve> {
        match &self.curve {
            Some(path) => with_path(path, load_curve(&read_file(path)?)),
            None => Ok(CarbonPriceCurve::new(
                "illustrative",
                "USD",
                vec![(2025, Decimal::from(100)), (2035, Decimal::from(300))],
            )?),
        }
    }

    /// Opens the store for writing, creating it if needed.
    fn open_store(&self) -> Outcome<PositionStore> {
        with_path(&self.store, PositionStore::open(&self.store))
    }

    /// Opens an existing store; a missing directory reads as empty.
    fn existing_store(&self) -> Outcome<Option<PositionStore>> {
        if self.store.exists() {
            self.open_store().map(Some)
        } else {
            Ok(None)
        }
    }

    fn as_of(&self, products: &[Loaded]) -> CivilDate {
        self.as_of.unwrap_or_else(|| {
            products
                .iter()
                .map(|l| l.product.money_leg.effective_date)
                .min()
                .unwrap_or(CivilDate::MIN)
        })
    }
}

/// A selected product with its flows after fixings and logged events.
struct Loaded {
    product: LinkedProduct,
    flows: FlowSet,
}

fn load_selection(cfg: &RunConfig, sel: &Selection) -> Outcome<Vec<Loaded>> {
    let cal = cfg.calendar()?;
    let mut loaded = Vec::new();
    let mut seen = BTreeSet::new();
    let mut store: Option<Option<PositionStore>> = None;
    let filter = sel.filter();
    let mut push = |l: Loaded, loaded: &mut Vec<Loaded>| -> Outcome<()> {
        if !filter.matches(&l.product) {
            return Ok(());
        }
        if !seen.insert(l.product.strategy_id.clone()) {
            return Err(Failure(format!(
                "strategy `{}` selected twice",
                l.product.strategy_id
            )));
        }
        loaded.push(l);
        Ok(())
    };
    if sel.products.is_empty() {
        if let Some(store) = cfg.existing_store()? {
            for product in store.list_portfolio(&filter) {
                let flows = store.flows_for(product, &cal)?;
                push(
                    Loaded {
                        product: product.clone(),
                        flows,
                    },
                    &mut loaded,
                )?;
            }
        }
        return Ok(loaded);
    }
    for arg in &sel.products {
        let path = Path::new(arg);
        if path.is_file() {
            let product = with_path(path, parse_product(&read_file(path)?))?;
            let flows = with_path(path, expand(&product, &cal))?;
            push(Loaded { product, flows }, &mut loaded)?;
            continue;
        }
        if store.is_none() {
            store = Some(cfg.existing_store()?);
        }
        let st = store
            .as_ref()
            .and_then(Option::as_ref)
            .ok_or_else(|| Failure(format!("`{arg}` is neither a file nor a booked strategy")))?;
        let product = st.product(arg)?;
        let flows = st.flows_for(product, &cal)?;
        push(
            Loaded {
                product: product.clone(),
                flows,
            },
            &mut loaded,
        )?;
    }
    Ok(loaded)
}

fn summaries(cfg: &RunConfig, loaded: &[Loaded]) -> Outcome<Vec<(String, CarbonSummary)>> {
    let as_of = cfg.as_of(loaded);
    let params = cfg.decay()?;
    Ok(loaded
        .iter()
        .map(|l| {
            (
                l.product.strategy_id.clone(),
                summarize(&l.flows.carbon, as_of, &params),
            )
        })
        .collect())
}

fn validate(cfg: &RunConfig, files: &[PathBuf], out: &mut dyn Write) -> Outcome<ExitCode> {
    let mut table = Table::new("file,strategy_id,severity,code,message");
    let mut failed = false;
    for path in files {
        let file = path.display().to_string();
        match parse_product(&read_file(path)?) {
            Ok(product) => {
                let findings = validate_product(&product);
                failed |= has_errors(&findings);
                for f in findings {
                    let severity = if f.is_error() { "error" } else { "warning" };
                    table.push([
                        file.clone(),
                        product.strategy_id.clone(),
                        severity.to_string(),
                        f.code.code().to_string(),
                        f.message,
                    ]);
                }
            }
            Err(e) => {
                failed = true;
                table.push([
                    file,
                    String::new(),
                    "error".into(),
                    "PARSE".into(),
                    e.to_string(),
                ]);
            }
        }
    }
    emit(cfg, &table, out)?;
    if failed {
        return Err(Failure("validation failed".into()));
    }
    Ok(ExitCode::SUCCESS)
}

fn book(
    cfg: &RunConfig,
    files: &[PathBuf],
    fixings: Option<&Path>,
    out: &mut dyn Write,
) -> Outcome<ExitCode> {
    if files.is_empty() && fixings.is_none() {
        return Err(Failure(
            "nothing to book: give product files or --fixings".into(),
        ));
    }
    let products = files
        .iter()
        .map(|path| with_path(path, parse_product(&read_file(path)?)))
        .collect::<Outcome<Vec<_>>>()?;
    let table_in = fixings
        .map(|path| with_path(path, FixingTable::from_csv(&read_file(path)?)))
        .transpose()?;
    let mut store = cfg.open_store()?;
    let mut table = Table::new("strategy_id,content_hash");
    for product in &products {
        let receipt = store.book(product)?;
        table.push([receipt.strategy_id, receipt.content_hash]);
    }
    if let Some(fixings) = table_in {
        store.add_fixings(&fixings)?;
    }
    emit(cfg, &table, out)
}

fn flows(cfg: &RunConfig, sel: &Selection, out: &mut dyn Write) -> Outcome<ExitCode> {
    let loaded = load_selection(cfg, sel)?;
    let mut all = FlowSet::default();
    for l in loaded {
        all.money.extend(l.flows.money);
        all.carbon.extend(l.flows.carbon);
    }
    let mut table = Table::new(FLOW_CSV_HEADER);
    for row in flow_rows(&all) {
        table.push(row.fields());
    }
    emit(cfg, &table, out)
}

fn summarize_cmd(cfg: &RunConfig, sel: &Selection, out: &mut dyn Write) -> Outcome<ExitCode> {
    let loaded = load_selection(cfg, sel)?;
    let mut table = Table::new(SUMMARY_CSV_HEADER);
    for (id, s) in summaries(cfg, &loaded)? {
        table.push(summary_row(&id, &s));
    }
    emit(cfg, &table, out)
}

fn netted(cfg: &RunConfig, sel: &Selection) -> Outcome<CarbonSummary> {
    let loaded = load_selection(cfg, sel)?;
    Ok(net_portfolio(&summaries(cfg, &loaded)?)?)
}

fn net(cfg: &RunConfig, sel: &Selection, out: &mut dyn Write) -> Outcome<ExitCode> {
    let s = netted(cfg, sel)?;
    let mut table = Table::new(SUMMARY_CSV_HEADER);
    table.push(summary_row("PORTFOLIO", &s));
    emit(cfg, &table, out)
}

fn offset(cfg: &RunConfig, sel: &Selection, out: &mut dyn Write) -> Outcome<ExitCode> {
    let s = netted(cfg, sel)?;
    let flows = FlowSet {
        money: Vec::new(),
        carbon: vec![required_offset(&s)],
    };
    let mut table = Table::new(FLOW_CSV_HEADER);
    for row in flow_rows(&flows) {
        table.push(row.fields());
    }
    emit(cfg, &table, out)
}

fn price(cfg: &RunConfig, sel: &Selection, out: &mut dyn Write) -> Outcome<ExitCode> {
    let curve = cfg.curve()?;
    let loaded = load_selection(cfg, sel)?;
    let flows: Vec<_> = loaded.into_iter().flat_map(|l| l.flows.carbon).collect();
    let mut table = Table::new(REPORT_CSV_HEADER);
    for row in report_rows(&monetize(&flows, &curve)) {
        table.push(row);
    }
    emit(cfg, &table, out)
}

fn report(cfg: &RunConfig, sel: &Selection, out: &mut dyn Write) -> Outcome<ExitCode> {
    let curve = cfg.curve()?;
    let loaded = load_selection(cfg, sel)?;
    let sums = summaries(cfg, &loaded)?;
    let mut table = Table::new(
        "strategy_id,status,as_of,past_tco2e,future_tco2e,total_tco2e,total_pico_degC,scenario,currency,cost",
    );
    let mut total_cost = numeric::zero();
    for (l, (id, s)) in loaded.iter().zip(&sums) {
        let cost = monetize(&l.flows.carbon, &curve).total;
        total_cost += &cost;
        let [_, as_of, past, future, total, pico] = summary_row(id, s);
        table.push([
            id.clone(),
            l.product.state.status.to_string(),
            as_of,
            past,
            future,
            total,
            pico,
            curve.scenario().to_string(),
            curve.currency().to_string(),
            numeric::format_fixed(&cost, 2),
        ]);
    }
    if !sums.is_empty() {
        let s = net_portfolio(&sums)?;
        let [_, as_of, past, future, total, pico] = summary_row("PORTFOLIO", &s);
        table.push([
            "PORTFOLIO".to_string(),
            String::new(),
            as_of,
            past,
            future,
            total,
            pico,
            curve.scenario().to_string(),
            curve.currency().to_string(),
            numeric::format_fixed(&total_cost, 2),
        ]);
    }
    emit(cfg, &table, out)
}

fn parse_events(path: &Path, text: &str) -> Outcome<Vec<(String, LifecycleEvent)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Failure(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["strategy_id", "date", "event", "policy"];
    if header.iter().ne(expected) {
        return Err(Failure(format!(
            "{}: expected header `{}`",
            path.display(),
            expected.join(",")
        )));
    }
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Failure(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |e: cep_core::Error| Failure(format!("{} line {line}: {e}", path.display()));
        let kind: EventKind = record[2].parse().map_err(at)?;
        let policy = match &record[3] {
            "" | "-" => None,
            p => Some(p.parse::<XcaPolicy>().map_err(at)?),
        };
        let event = LifecycleEvent {
            date: parse_date(&record[1]).map_err(at)?,
            kind,
            policy,
        };
        events.push((record[0].to_string(), event));
    }
    Ok(events)
}

/// Checks every event against an in-memory copy first so that a bad file
/// records nothing.
fn event(cfg: &RunConfig, file: &Path, out: &mut dyn Write) -> Outcome<ExitCode> {
    let events = parse_events(file, &read_file(file)?)?;
    let cal = cfg.calendar()?;
    let mut store = cfg.open_store()?;

    let mut trial: BTreeMap<String, (LinkedProduct, FlowSet)> = BTreeMap::new();
    let mut checked = Vec::with_capacity(events.len());
    for (strategy_id, ev) in events {
        let configured = match (ev.kind, ev.policy, cfg.xca_default_policy) {
            (EventKind::XcaNonpayment, None, None) => {
                return Err(Failure(format!(
                    "{strategy_id}: XCA_NONPAYMENT on {} has no policy and --xca-default-policy is not set",
                    ev.date
                )))
            }
            (_, _, Some(p)) => p.into(),
            // Unused: every other event carries its policy or needs none.
            _ => XcaPolicy::Continue,
        };
        if !trial.contains_key(&strategy_id) {
            let product = store.product(&strategy_id)?.clone();
            let flows = store.flows_for(&product, &cal)?;
            trial.insert(strategy_id.clone(), (product, flows));
        }
        let (product, flows) = &trial[&strategy_id];
        let next = apply_event(product, flows, ev, configured)
            .map_err(|e| Failure(format!("{strategy_id}: {e}")))?;
        trial.insert(strategy_id.clone(), next);
        checked.push((strategy_id, ev, configured));
    }

    let mut table = Table::new("strategy_id,date,event,policy,status");
    for (strategy_id, ev, configured) in checked {
        let state = store.record_event(&strategy_id, ev, configured, &cal)?;
        let logged = state.events.last().expect("event recorded");
        table.push([
            strategy_id,
            logged.date.to_string(),
            logged.kind.code().to_string(),
            logged.policy.map_or("-", XcaPolicy::code).to_string(),
            state.status.to_string(),
        ]);
    }
    emit(cfg, &table, out)
}

const PERMIT_HEADER: &str =
    "permit_id,holder,grantor,volume,window_start,window_end,exercised,remaining";

fn permit_row(p: &PermitOption) -> [String; 8] {
    [
        p.permit_id.clone(),
        p.holder.clone(),
        p.grantor.clone(),
        p.volume.to_string(),
        p.window_start.to_string(),
        p.window_end.to_string(),
        p.exercised.to_string(),
        p.remaining().to_string(),
    ]
}

fn permit(cfg: &RunConfig, action: &PermitAction, out: &mut dyn Write) -> Outcome<ExitCode> {
    match action {
        PermitAction::Grant {
            permit_id,
            holder,
            grantor,
            volume,
            from,
            to,
        } => {
            let permit = PermitOption::new(permit_id, holder, grantor, *volume, *from, *to)?;
            cfg.open_store()?.grant_permit(permit.clone())?;
            let mut table = Table::new(PERMIT_HEADER);
            table.push(permit_row(&permit));
            emit(cfg, &table, out)
        }
        PermitAction::Exercise {
            permit_id,
            date,
            amount,
        } => {
            let (_, flow) = cfg
                .open_store()?
                .exercise_permit(permit_id, *date, *amount)?;
            let flows = FlowSet {
                money: Vec::new(),
                carbon: vec![flow],
            };
            let mut table = Table::new(FLOW_CSV_HEADER);
            for row in flow_rows(&flows) {
                table.push(row.fields());
            }
            emit(cfg, &table, out)
        }
        PermitAction::List => {
            let mut table = Table::new(PERMIT_HEADER);
            if let Some(store) = cfg.existing_store()? {
                for p in store.permits()? {
                    table.push(permit_row(&p));
                }
            }
            emit(cfg, &table, out)
        }
    }
}
