//! Runs the built binary inside a scratch data directory.

use std::path::{Path, PathBuf};
use std::process::Command;

pub const CONSUMER_SEED: &str = "1111111111111111111111111111111111111111111111111111111111111111";
pub const PRODUCER_SEED: &str = "2222222222222222222222222222222222222222222222222222222222222222";
pub const MINER_SEED: &str = "3333333333333333333333333333333333333333333333333333333333333333";
pub const URL: &str = "https://example.org/transcode";

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Workspace {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn home(&self) -> PathBuf {
        self.path("home")
    }

    /// Runs with `--wallet <wallet>.json` when `wallet` is given.
    pub fn run(&self, wallet: Option<&str>, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_vouchrep"));
        cmd.current_dir(self.dir.path()).env("VOUCHREP_HOME", self.home());
        if let Some(w) = wallet {
            cmd.arg("--wallet").arg(self.path(&format!("{w}.json")));
        }
        let out = cmd.args(args).output().unwrap();
        Output {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8(out.stdout).unwrap(),
            stderr: String::from_utf8(out.stderr).unwrap(),
        }
    }

    /// Runs and requires success, returning stdout.
    pub fn ok(&self, wallet: Option<&str>, args: &[&str]) -> String {
        let out = self.run(wallet, args);
        assert_eq!(out.code, 0, "{args:?} failed: {}", out.stderr);
        out.stdout
    }

    pub fn file(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }
}

/// Parties and a chain where the consumer holds 1 coin.
pub struct Parties {
    pub ws: Workspace,
    pub consumer: String,
    pub producer: String,
    pub miner: String,
}

fn address(keygen_out: &str) -> String {
    keygen_out.split_whitespace().nth(1).unwrap().to_string()
}

pub fn setup() -> Parties {
    let ws = Workspace::new();
    let consumer = address(&ws.ok(Some("consumer"), &["keygen", "--name", "consumer", "--seed", CONSUMER_SEED]));
    let producer = address(&ws.ok(Some("producer"), &["keygen", "--name", "producer", "--seed", PRODUCER_SEED]));
    let miner = address(&ws.ok(Some("miner"), &["keygen", "--name", "miner", "--seed", MINER_SEED]));
    ws.ok(None, &["init", "--alloc", &format!("{consumer}=1")]);
    Parties { ws, consumer, producer, miner }
}

impl Parties {
    pub fn mine(&self) -> String {
        self.ws.ok(None, &["mine", "--miner", &self.miner])
    }

    /// Pays 0.1 for the service and mines it; returns the payment txid.
    pub fn pay_and_mine(&self) -> String {
        let out = self.ws.ok(Some("consumer"), &["pay", &self.producer, URL, "0.1", "--out", "pay.json"]);
        let txid = out.trim().to_string();
        self.ws.ok(None, &["submit", "pay.json"]);
        self.mine();
        txid
    }

    /// Producer offers 3% with a 0.01 incentive into offer.json.
    pub fn offer(&self, payment: &str) -> String {
        self.ws.ok(Some("producer"), &["offer", payment, "--rate", "3%", "--incentive", "0.01", "--out", "offer.json"])
    }

    pub fn service_score(&self, extra: &[&str]) -> String {
        let mut args = vec!["rep"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["service", URL]);
        let out = self.ws.ok(None, &args);
        out.lines().find_map(|l| l.strip_prefix("score ")).unwrap().to_string()
    }

    pub fn chain_path(&self) -> PathBuf {
        self.ws.home().join("chain.jsonl")
    }
}

pub fn read_chain(path: &Path) -> vouchrep::ledger::Chain {
    vouchrep::ledger::store::read_chain(path).unwrap()
}
