use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qkdlink_cli::config::ScenarioConfig;
use qkdlink_cli::{commands, Result};
use qkdlink_kms::http::{serve, HttpConfig};
use qkdlink_kms::{PersistConfig, Role, ServerConfig};

#[derive(Parser)]
#[command(name = "qkdlink", version, about = "Key-pool studies and live runs for QKD-secured telemetry links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML; the built-in defaults are used when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; also settable through QKDLINK_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate, QBER and secret fraction over the sweep distances.
    Model(Common),
    /// Pool timeline at the configured channel length.
    Pool(Common),
    /// Minimum lead-time sweep.
    Lead(Common),
    /// Post-failure uptime sweep.
    Fail(Common),
    /// Live encrypt/transmit/decrypt loop against two key servers.
    Run {
        #[command(flatten)]
        common: Common,
        /// Serve the keys over HTTP instead of in process.
        #[arg(long)]
        http: bool,
        #[arg(long)]
        cycles: Option<u64>,
    },
    /// Run one key server in the foreground.
    Kms {
        #[arg(long, value_parser = parse_role)]
        role: Role,
        #[arg(long, default_value = "127.0.0.1:8443")]
        bind: SocketAddr,
        /// Base URL of the peer server.
        #[arg(long)]
        peer: Option<String>,
        /// Append-only ledger log; replayed on start.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Seed of the key stream shared by both servers.
        #[arg(long, default_value_t = 1)]
        link_seed: u64,
    },
}

fn parse_role(s: &str) -> std::result::Result<Role, String> {
    s.parse().map_err(|e: qkdlink_kms::KmsError| e.to_string())
}

fn load(c: &Common) -> Result<(ScenarioConfig, u64)> {
    let mut cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::from_toml("", std::path::Path::new("."))?,
    };
    cfg.resolve_out(c.out.clone());
    let seed = c.seed.unwrap_or(cfg.run.seed);
    Ok((cfg, seed))
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Model(c) => {
            let (cfg, _) = load(&c)?;
            report(&commands::model(&cfg)?);
        }
        Command::Pool(c) => {
            let (cfg, seed) = load(&c)?;
            let (t, files) = commands::pool(&cfg, seed)?;
            println!("lead {:.0} s, reserve at lead {} bits", t.k_lead as f64 * t.step_s(), t.d0_bits);
            if let Some(x) = t.k_exhaust {
                println!("exhausted at {:.0} s", x as f64 * t.step_s());
            }
            report(&files);
        }
        Command::Lead(c) => {
            let (cfg, seed) = load(&c)?;
            let (_, files) = commands::lead(&cfg, seed)?;
            print!("{}", std::fs::read_to_string(&files[1])?);
            report(&files);
        }
        Command::Fail(c) => {
            let (cfg, seed) = load(&c)?;
            let (_, files) = commands::fail(&cfg, seed)?;
            print!("{}", std::fs::read_to_string(&files[1])?);
            report(&files);
        }
        Command::Run { common, http, cycles } => {
            let (mut cfg, seed) = load(&common)?;
            cfg.run.http |= http;
            if let Some(n) = cycles {
                cfg.run.cycles = n;
            }
            let (r, files) = commands::run(&cfg, seed)?;
            println!("{}", r.summary());
            report(&files);
        }
        Command::Kms {
            role,
            bind,
            peer,
            log,
            link_seed,
        } => {
            let mut server = ServerConfig::new(role, link_seed);
            if let Some(p) = log {
                server = server.with_log(PersistConfig::new(p));
            }
            let mut http = HttpConfig::new(server).bind(bind);
            if let Some(p) = peer {
                http = http.peer(p);
            }
            serve(http)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
