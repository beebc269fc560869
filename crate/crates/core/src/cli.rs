//! Command-line front end.
//!
//! State lives in a data directory (`--home`, `$VOUCHREP_HOME`, or
//! `./.vouchrep`): `chain.jsonl`, `wallet.json`, `mempool.json` and
//! `services.json`. Amounts on the command line are decimal coins.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, TxId};
use crate::ledger::store::{self, StoreError, TxFile};
use crate::ledger::{Amount, Chain, ChainConfig, KeyPair, LedgerError, PendingView, PublicKeyId, Transaction, Wallet};
use crate::protocol::{
    self, FeePolicy, OfferDocument, OfferTerms, PaymentTx, ProtocolError, Rate, ServiceDescriptor, VoucherOffer,
};
use crate::reputation::{self, full_rescan, ReputationIndex, ScoringMode, UrlRegistry};
use crate::sim::{self, Scenario, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_FUNDS: i32 = 4;
pub const EXIT_LINK: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    InsufficientFunds(String),
    #[error("{0}")]
    Link(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::InsufficientFunds(_) => EXIT_FUNDS,
            CliError::Link(_) => EXIT_LINK,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::InsufficientFunds { .. } => CliError::InsufficientFunds(e.to_string()),
            LedgerError::UnknownKey(_) => CliError::Usage(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Io(e.to_string()),
            StoreError::Parse { .. } | StoreError::TxidMismatch { .. } => CliError::Usage(e.to_string()),
            StoreError::Ledger(inner) => inner.into(),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::InsufficientFunds { .. } => CliError::InsufficientFunds(e.to_string()),
            ProtocolError::LinkFailure(_)
            | ProtocolError::Out1AlreadySpent { .. }
            | ProtocolError::PaymentNotConfirmed(_) => CliError::Link(e.to_string()),
            ProtocolError::InvalidService(_) | ProtocolError::InvalidRate(_) => CliError::Usage(e.to_string()),
            ProtocolError::Ledger(inner) => inner.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidScenario(_) => CliError::Usage(e.to_string()),
            SimError::Io(_) | SimError::Internal(_) => CliError::Io(e.to_string()),
        }
    }
}

fn parse_err(what: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{what} {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "vouchrep", version, about = "Voucher-based service reputation on a toy UTXO ledger")]
pub struct Cli {
    /// Data directory [default: $VOUCHREP_HOME or ./.vouchrep]
    #[arg(long, global = true)]
    pub home: Option<PathBuf>,
    /// Chain file [default: <home>/chain.jsonl]
    #[arg(long, global = true)]
    pub chain: Option<PathBuf>,
    /// Wallet file [default: <home>/wallet.json]
    #[arg(long, global = true)]
    pub wallet: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a chain with a genesis allocation.
    Init {
        /// ADDRESS=AMOUNT, repeatable
        #[arg(long = "alloc", value_parser = parse_alloc)]
        allocations: Vec<(PublicKeyId, Amount)>,
        #[arg(long)]
        subsidy: Option<Amount>,
    },
    /// Add a named key to the wallet and print its address.
    Keygen {
        #[arg(long)]
        name: String,
        /// 32-byte hex seed; random if omitted
        #[arg(long)]
        seed: Option<String>,
    },
    /// List wallet keys with their balances.
    Balance,
    /// Print the marker address of a service URL.
    AddressForService { url: String },
    /// Build a signed payment for a service.
    Pay {
        producer: PublicKeyId,
        url: String,
        amount: Amount,
        #[arg(long, default_value = "0")]
        fee: Amount,
        /// Paying key [default: the wallet's only key]
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate transactions from a file and add them to the mempool.
    Submit { file: PathBuf },
    /// Mine the mempool into a block.
    Mine {
        #[arg(long)]
        miner: PublicKeyId,
    },
    /// Producer side: fund the escrow for a confirmed payment and draft the voucher.
    Offer {
        payment: TxId,
        #[arg(long)]
        rate: Rate,
        #[arg(long)]
        incentive: Amount,
        #[arg(long, default_value = "0")]
        funding_fee: Amount,
        /// Smallest acceptable vote fee
        #[arg(long, conflicts_with = "no_min_vote_fee")]
        min_vote_fee: Option<Amount>,
        /// Accept a zero vote fee
        #[arg(long)]
        no_min_vote_fee: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Consumer side: co-sign an offer, producing the funding and voucher.
    Cosign {
        offer: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query reputation.
    Rep(RepArgs),
    /// Check the incremental index against a full rescan.
    Rescan {
        #[command(flatten)]
        scoring: Scoring,
    },
    /// Run a market simulation.
    Simulate {
        scenario: PathBuf,
        /// Overrides the scenario's seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "sim-out")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Scoring {
    /// Weight votes by the voter's own score with this constant
    #[arg(long, global = true)]
    pub weighted: Option<Amount>,
}

impl Scoring {
    fn mode(&self) -> Result<ScoringMode, CliError> {
        match self.weighted {
            None => Ok(ScoringMode::Unweighted),
            Some(c) => ScoringMode::weighted(c).map_err(|e| CliError::Usage(e.to_string())),
        }
    }
}

#[derive(Debug, Args)]
pub struct RepArgs {
    #[command(flatten)]
    pub scoring: Scoring,
    #[command(subcommand)]
    pub query: RepQuery,
}

#[derive(Debug, Subcommand)]
pub enum RepQuery {
    Service { url: String },
    Producer { address: PublicKeyId },
    /// Every service seen in a payment.
    Report {
        #[arg(long, value_enum, default_value = "csv")]
        format: ReportFormat,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

fn parse_alloc(s: &str) -> Result<(PublicKeyId, Amount), String> {
    let (addr, amount) = s.split_once('=').ok_or("expected ADDRESS=AMOUNT")?;
    let id = addr.parse::<PublicKeyId>().map_err(|e| e.to_string())?;
    let amount = amount.parse::<Amount>().map_err(|e| e.to_string())?;
    Ok((id, amount))
}

struct Paths {
    home: PathBuf,
    chain: PathBuf,
    wallet: PathBuf,
}

impl Paths {
    fn new(cli: &Cli) -> Paths {
        let home = cli
            .home
            .clone()
            .or_else(|| std::env::var_os("VOUCHREP_HOME").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".vouchrep"));
        Paths {
            chain: cli.chain.clone().unwrap_or_else(|| home.join("chain.jsonl")),
            wallet: cli.wallet.clone().unwrap_or_else(|| home.join("wallet.json")),
            home,
        }
    }

    fn mempool(&self) -> PathBuf {
        self.home.join("mempool.json")
    }

    fn services(&self) -> PathBuf {
        self.home.join("services.json")
    }
}

/// Wallet file: key names to hex seeds. Outputs are rebuilt from the chain.
#[derive(Debug, Default, Serialize, Deserialize)]
struct WalletFile {
    keys: BTreeMap<String, String>,
}

fn decode_seed(hex_seed: &str) -> Result<[u8; 32], CliError> {
    let bytes = hex::decode(hex_seed).map_err(|e| CliError::Usage(format!("bad seed: {e}")))?;
    bytes.try_into().map_err(|_| CliError::Usage("seed must be 32 bytes".into()))
}

fn read_json<T: for<'de> Deserialize<'de> + Default>(path: &Path, what: &str) -> Result<T, CliError> {
    match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| parse_err(what, path, e)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(CliError::Io(format!("{}: {e}", path.display()))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_wallet(path: &Path) -> Result<Wallet, CliError> {
    let file: WalletFile = read_json(path, "wallet")?;
    let mut wallet = Wallet::new();
    for (name, seed) in file.keys {
        wallet.add_key(name, KeyPair::from_seed(decode_seed(&seed)?));
    }
    Ok(wallet)
}

fn load_chain(path: &Path) -> Result<Chain, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("no chain at {}; run `vouchrep init` first", path.display())));
    }
    Ok(store::read_chain(path)?)
}

fn load_mempool(path: &Path) -> Result<Vec<Transaction>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let file: TxFile = serde_json::from_str(&text).map_err(|e| parse_err("mempool", path, e))?;
    Ok(file.into_transactions()?)
}

fn load_tx_file(path: &Path) -> Result<Vec<Transaction>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let file: TxFile = serde_json::from_str(&text).map_err(|e| parse_err("transaction file", path, e))?;
    Ok(file.into_transactions()?)
}

/// Wallet outputs as of the chain tip plus the mempool.
fn synced_wallet(paths: &Paths, chain: &Chain) -> Result<Wallet, CliError> {
    let mut wallet = load_wallet(&paths.wallet)?;
    wallet.sync(chain);
    for tx in load_mempool(&paths.mempool())? {
        wallet.apply(&tx);
    }
    Ok(wallet)
}

fn register_url(paths: &Paths, url: &str) -> Result<(), CliError> {
    let mut registry: UrlRegistry = read_json(&paths.services(), "service registry")?;
    registry.register(url).map_err(|e| CliError::Usage(e.to_string()))?;
    write_json(&paths.services(), &registry)
}

/// Writes `text` to `out` if given, else to stdout.
fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

/// Exclusive lock held for the duration of a command.
fn lock(paths: &Paths) -> Result<File, CliError> {
    fs::create_dir_all(&paths.home)?;
    let file = OpenOptions::new().create(true).truncate(false).write(true).open(paths.home.join(".lock"))?;
    file.lock()?;
    Ok(file)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let paths = Paths::new(&cli);
    if let Command::Simulate { scenario, seed, out_dir } = &cli.command {
        return simulate(scenario, *seed, out_dir, out);
    }
    let _guard = lock(&paths)?;
    match cli.command {
        Command::Init { allocations, subsidy } => {
            let mut config = ChainConfig::default();
            if let Some(s) = subsidy {
                config.subsidy = s;
            }
            for (to, amount) in allocations {
                config = config.with_allocation(to, amount);
            }
            let chain = Chain::new(config);
            if let Some(dir) = paths.chain.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            store::create_chain_file(&paths.chain, &chain)?;
            writeln!(out, "genesis {}", chain.tip().digest())?;
        }
        Command::Keygen { name, seed } => {
            let mut file: WalletFile = read_json(&paths.wallet, "wallet")?;
            if file.keys.contains_key(&name) {
                return Err(CliError::Usage(format!("key {name:?} already exists")));
            }
            let seed = match seed {
                Some(hex_seed) => decode_seed(&hex_seed)?,
                None => rand::thread_rng().gen(),
            };
            let key = KeyPair::from_seed(seed);
            file.keys.insert(name.clone(), hex::encode(seed));
            write_json(&paths.wallet, &file)?;
            writeln!(out, "{name} {}", key.id())?;
        }
        Command::Balance => {
            let chain = load_chain(&paths.chain)?;
            let wallet = synced_wallet(&paths, &chain)?;
            for (name, key) in wallet.keys() {
                writeln!(out, "{name} {} {}", key.id(), wallet.balance_of(name))?;
            }
        }
        Command::AddressForService { url } => {
            let marker = codec::derive_service_address(&url).map_err(|e| CliError::Usage(e.to_string()))?;
            register_url(&paths, &url)?;
            writeln!(out, "{marker}")?;
        }
        Command::Pay { producer, url, amount, fee, from, out: out_path } => {
            let chain = load_chain(&paths.chain)?;
            let wallet = synced_wallet(&paths, &chain)?;
            let payer = match from {
                Some(name) => name,
                None => {
                    let names: Vec<&String> = wallet.keys().map(|(n, _)| n).collect();
                    match names.as_slice() {
                        [only] => (*only).clone(),
                        _ => return Err(CliError::Usage("wallet holds several keys; pass --from".into())),
                    }
                }
            };
            let service = ServiceDescriptor::new(&url)?;
            let payment = protocol::build_payment(&wallet, &payer, producer, &service, amount, fee)?;
            register_url(&paths, &url)?;
            let text = json_line(&TxFile::new([payment.tx.clone()]));
            emit(out, out_path.as_deref(), &text)?;
            if out_path.is_some() {
                writeln!(out, "{}", payment.txid())?;
            }
        }
        Command::Submit { file } => {
            let chain = load_chain(&paths.chain)?;
            let mut mempool = load_mempool(&paths.mempool())?;
            let mut view = PendingView::new(&chain);
            for tx in &mempool {
                view.accept(tx)?;
            }
            let incoming = load_tx_file(&file)?;
            for tx in &incoming {
                view.accept(tx)?;
            }
            for tx in incoming {
                writeln!(out, "{}", tx.txid())?;
                mempool.push(tx);
            }
            write_json(&paths.mempool(), &TxFile::new(mempool))?;
        }
        Command::Mine { miner } => {
            let mut chain = load_chain(&paths.chain)?;
            let mempool = load_mempool(&paths.mempool())?;
            let from = chain.height();
            let block = chain.mine_block(&mempool, miner)?;
            writeln!(out, "block {} {} txs {}", block.height, block.digest(), block.transactions.len())?;
            store::append_blocks(&paths.chain, &chain, from)?;
            write_json(&paths.mempool(), &TxFile::new([]))?;
        }
        Command::Offer { payment, rate, incentive, funding_fee, min_vote_fee, no_min_vote_fee, out: out_path } => {
            let chain = load_chain(&paths.chain)?;
            let wallet = load_wallet(&paths.wallet)?;
            let (tx, _) = chain
                .transaction(&payment)
                .ok_or(ProtocolError::PaymentNotConfirmed(payment))?;
            let parsed = PaymentTx::parse(tx)?;
            let fee_policy = if no_min_vote_fee {
                FeePolicy::waived()
            } else {
                min_vote_fee.map(|m| FeePolicy { minimum: Some(m) }).unwrap_or_default()
            };
            let terms = OfferTerms { rate, incentive, funding_fee, fee_policy };
            let offer = protocol::build_voucher_offer(&parsed, &wallet, &chain, &terms)?;
            emit(out, out_path.as_deref(), &json_line(&OfferDocument::from(&offer)))?;
            if out_path.is_some() {
                writeln!(out, "vote_fee {} incentive {}", offer.vote_fee, offer.incentive)?;
            }
        }
        Command::Cosign { offer: offer_path, out: out_path } => {
            let chain = load_chain(&paths.chain)?;
            let wallet = load_wallet(&paths.wallet)?;
            let text = fs::read_to_string(&offer_path)
                .map_err(|e| CliError::Io(format!("{}: {e}", offer_path.display())))?;
            let doc: OfferDocument = serde_json::from_str(&text).map_err(|e| parse_err("offer", &offer_path, e))?;
            let offer = VoucherOffer::try_from(doc)?;
            offer.check_link(&chain)?;
            let (_, key) = wallet
                .find(&offer.consumer)
                .ok_or_else(|| CliError::Usage(format!("wallet has no key for consumer {}", offer.consumer)))?;
            let voucher = protocol::cosign_voucher(&offer, key)?;
            let text = json_line(&TxFile::new([offer.funding.clone(), voucher]));
            emit(out, out_path.as_deref(), &text)?;
        }
        Command::Rep(args) => {
            let chain = load_chain(&paths.chain)?;
            let mut index = ReputationIndex::new(args.scoring.mode()?);
            index.sync(&chain).map_err(|e| CliError::Invalid(e.to_string()))?;
            let registry: UrlRegistry = read_json(&paths.services(), "service registry")?;
            rep_query(&index, &registry, args.query, out)?;
        }
        Command::Rescan { scoring } => {
            let chain = load_chain(&paths.chain)?;
            let mode = scoring.mode()?;
            let mut incremental = ReputationIndex::new(mode);
            incremental.sync(&chain).map_err(|e| CliError::Invalid(e.to_string()))?;
            let rescanned = full_rescan(&chain, mode);
            if incremental != rescanned {
                return Err(CliError::Invalid("incremental index differs from full rescan".into()));
            }
            writeln!(out, "consistent height {} events {}", chain.height(), rescanned.events().len())?;
        }
        Command::Simulate { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn rep_query(index: &ReputationIndex, registry: &UrlRegistry, query: RepQuery, out: &mut dyn Write) -> Result<(), CliError> {
    match query {
        RepQuery::Service { url } => {
            let marker = codec::derive_service_address(&url).map_err(|e| CliError::Usage(e.to_string()))?;
            let stats = index.service_stats(&marker);
            writeln!(out, "service {marker}")?;
            writeln!(out, "url {url}")?;
            writeln!(out, "score {}", stats.score)?;
            writeln!(out, "vote_fees {}", stats.vote_fees)?;
            writeln!(out, "events {}", stats.events)?;
            if let Some(h) = stats.last_height {
                writeln!(out, "last_height {h}")?;
            }
        }
        RepQuery::Producer { address } => {
            let rep = index.reputation_of_producer(&address);
            writeln!(out, "producer {address}")?;
            writeln!(out, "score {}", rep.total)?;
            for (marker, score) in &rep.breakdown {
                writeln!(out, "  {marker} {} {score}", registry.url(marker).unwrap_or("-"))?;
            }
        }
        RepQuery::Report { format } => {
            let rows = reputation::report_rows(index, registry);
            match format {
                ReportFormat::Csv => {
                    reputation::write_csv(&rows, &mut *out).map_err(|e| CliError::Io(e.to_string()))?
                }
                ReportFormat::Json => reputation::write_json(&rows, &mut *out)?,
            }
        }
    }
    Ok(())
}

fn simulate(path: &Path, seed: Option<u64>, out_dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let result = sim::run(&scenario)?;
    sim::write_outputs(&result, out_dir)?;
    writeln!(out, "blocks {} transactions {}", result.chain.height(), result.chain.blocks().iter().map(|b| b.transactions.len()).sum::<usize>())?;
    writeln!(out, "agent,role,reputation,reputation_unweighted,fees_burned,incentives_net,cost_per_reputation,self_financed")?;
    for row in sim::attack_report(&result) {
        let cost = row.cost_per_reputation.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.agent,
            row.role.as_str(),
            row.reputation.base_units(),
            row.reputation_unweighted.base_units(),
            row.fees_burned.base_units(),
            row.incentives_net,
            cost,
            row.self_financed
        )?;
    }
    writeln!(out, "outputs {}", out_dir.display())?;
    Ok(())
}
