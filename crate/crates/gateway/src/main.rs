use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hailchain_core::ledger::{dump_json, verify_chain};
use hailchain_gateway::{http, Gateway, GatewayError, Places, SessionInfo, Store, View};
use hailchain_harness::{export_csv, preset, run_load, run_sweep, SweepPoint, TrafficProfile, WorkloadSpec, PRESETS};
use hailchain_netsim::{ClockMode, Network, Topology};
use serde::Serialize;
use serde_json::json;

const BUILTIN_PLACES: &str = include_str!("../../../fixtures/places-nashville.json");

#[derive(Parser)]
#[command(name = "hailchain", version, about = "Ride hailing on a permissioned ledger")]
struct Cli {
    /// Where identities, the block file and gateway state live.
    #[arg(long, global = true, env = "HAILCHAIN_DATA", default_value = "hailchain-data")]
    data_dir: PathBuf,
    /// Network topology JSON. Only read when a data directory is first
    /// created, and by `bench`. Defaults to two organizations of two peers.
    #[arg(long, global = true, env = "HAILCHAIN_TOPOLOGY")]
    topology: Option<PathBuf>,
    /// Place-name table for geocoding. Defaults to the built-in Nashville list.
    #[arg(long, global = true, env = "HAILCHAIN_PLACES")]
    places: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Creds {
    #[arg(long, default_value = "Org1PeerOrgMSP")]
    org: String,
    #[arg(long)]
    user: String,
    #[arg(long, env = "HAILCHAIN_PASSWORD")]
    password: String,
}

#[derive(Subcommand)]
enum Command {
    /// Create an identity and register it on the ledger.
    Register {
        #[command(flatten)]
        creds: Creds,
        #[arg(long)]
        name: Option<String>,
    },
    /// Check a password and show the account.
    Login {
        #[command(flatten)]
        creds: Creds,
        #[arg(long = "as", default_value = "rider")]
        view: View,
    },
    /// Register a vehicle so the account can drive.
    Upgrade {
        #[command(flatten)]
        creds: Creds,
        #[arg(long)]
        make: String,
        #[arg(long)]
        model: String,
        #[arg(long)]
        year: u32,
    },
    /// List open requests, or act on one of them.
    Drive {
        #[command(flatten)]
        creds: Creds,
        /// Current position: a place name or "lat,lon".
        #[arg(long)]
        at: String,
        #[arg(long, value_name = "KEY", conflicts_with_all = ["pickup", "dropoff"])]
        accept: Option<String>,
        #[arg(long, value_name = "KEY", conflicts_with = "dropoff")]
        pickup: Option<String>,
        #[arg(long, value_name = "KEY")]
        dropoff: Option<String>,
    },
    /// Request a ride, or without --from/--to advance the current one.
    Ride {
        #[command(flatten)]
        creds: Creds,
        #[arg(long, requires = "to")]
        from: Option<String>,
        #[arg(long, requires = "from")]
        to: Option<String>,
    },
    /// Archived rides and anything in flight.
    History {
        #[command(flatten)]
        creds: Creds,
    },
    /// Run a synthetic ride workload against a fresh simulated network.
    Bench(BenchArgs),
    /// Inspect the stored ledger.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// "constant:<ms>" or "poisson:<tx/s>", per worker.
    #[arg(long, default_value = "constant:300")]
    profile: TrafficProfile,
    #[arg(long, default_value_t = 1000)]
    rides: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Run a named sweep instead of a single load.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    sweep: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the event trace of a single run as JSON lines.
    #[arg(long, conflicts_with = "sweep")]
    trace: Option<PathBuf>,
    /// Pace the simulation against the host clock.
    #[arg(long, conflicts_with = "sweep")]
    wall: bool,
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Print every block as JSON.
    Dump {
        /// Also check the hash chain and report the result.
        #[arg(long)]
        verify: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type BoxError = Box<dyn std::error::Error>;

fn print<T: Serialize>(v: &T) -> Result<(), BoxError> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout(), "{text}") {
        // The reader went away (`| head`); nothing left to report to.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn load_topology(path: Option<&Path>) -> Result<Topology, BoxError> {
    Ok(match path {
        Some(p) => Topology::load(p)?,
        None => Topology::uniform(2, 2),
    })
}

fn load_places(path: Option<&Path>) -> Result<Places, GatewayError> {
    match path {
        Some(p) => Places::load(p),
        None => Places::from_json(BUILTIN_PLACES),
    }
}

fn open(cli: &Cli) -> Result<Gateway, BoxError> {
    let topology = load_topology(cli.topology.as_deref())?;
    Ok(Gateway::open(&cli.data_dir, topology, load_places(cli.places.as_deref())?)?)
}

fn login(g: &mut Gateway, c: &Creds, view: View) -> Result<SessionInfo, GatewayError> {
    g.login(&c.org, &c.user, &c.password, view)
}

fn run(cli: Cli) -> Result<(), BoxError> {
    match &cli.command {
        Command::Register { creds, name } => {
            let mut g = open(&cli)?;
            let s = g.register(&creds.org, &creds.user, &creds.password, name.as_deref())?;
            print(&json!({ "user_id": s.user_id }))
        }
        Command::Login { creds, view } => {
            let mut g = open(&cli)?;
            let s = login(&mut g, creds, *view)?;
            let h = g.history(&s.token)?;
            print(&json!({
                "user_id": s.user_id,
                "view": s.view,
                "name": h.name,
                "driver": h.driver,
                "rides": h.rides.len(),
            }))
        }
        Command::Upgrade { creds, make, model, year } => {
            let mut g = open(&cli)?;
            let s = login(&mut g, creds, View::Rider)?;
            g.upgrade(&s.token, make, model, *year)?;
            print(&json!({ "user_id": s.user_id, "driver": true }))
        }
        Command::Drive { creds, at, accept, pickup, dropoff } => {
            let mut g = open(&cli)?;
            let s = login(&mut g, creds, View::Driver)?;
            let open = g.start_driving(&s.token, at, true)?;
            if let Some(key) = accept {
                let id = g.respond(&s.token, key, true)?;
                print(&json!({ "accepted": key, "ride_id": id }))
            } else if let Some(key) = pickup {
                let n = g.pickup(&s.token, key, at)?;
                print(&json!({ "picked_up": key, "corider_updates": n }))
            } else if let Some(key) = dropoff {
                let (id, n) = g.dropoff(&s.token, key, at)?;
                print(&json!({ "dropped_off": key, "ride_id": id, "corider_updates": n }))
            } else {
                print(&json!({ "open_requests": open }))
            }
        }
        Command::Ride { creds, from, to } => {
            let mut g = open(&cli)?;
            let s = login(&mut g, creds, View::Rider)?;
            if let (Some(from), Some(to)) = (from, to) {
                print(&g.request_ride(&s.token, from, to)?)
            } else {
                let flow = g.rider_flow(&s.user_id).cloned();
                let req = g.advance(&s.token)?;
                let archived = flow.filter(|_| req.is_none()).map(|f| f.ride_id);
                print(&json!({ "request": req, "archived": archived }))
            }
        }
        Command::History { creds } => {
            let mut g = open(&cli)?;
            let s = login(&mut g, creds, View::Rider)?;
            print(&g.history(&s.token)?)
        }
        Command::Bench(b) => bench(b, cli.topology.as_deref()),
        Command::Ledger {
            command: LedgerCommand::Dump { verify },
        } => {
            let store = Store::new(&cli.data_dir)?;
            let blocks = store.blocks().read_all()?;
            if *verify {
                print(&json!({ "blocks": blocks.len(), "chain_valid": verify_chain(&blocks) }))
            } else {
                print(&dump_json(&blocks))
            }
        }
        Command::Serve { addr } => {
            let g = open(&cli)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, http::router(g)).await
            })?;
            Ok(())
        }
    }
}

fn bench(b: &BenchArgs, topology: Option<&Path>) -> Result<(), BoxError> {
    if let Some(name) = &b.sweep {
        for sweep in preset(name, b.rides)? {
            let points = run_sweep(&sweep)?;
            for p in &points {
                eprintln!(
                    "{} {:>8.1}  peer {:>8.2} ms  orderer {:>8.2} ms  event {:>8.2} ms  {:>7.2} tps",
                    sweep.name,
                    p.axis_value,
                    p.report.peer_mean_ms,
                    p.report.orderer_mean_ms,
                    p.report.event_mean_ms,
                    p.report.tps
                );
            }
            if let Some(csv) = &b.csv {
                export_csv(&points, csv_path(csv, &sweep.name, name))?;
            }
        }
        return Ok(());
    }
    let mut net = Network::build(load_topology(topology)?, b.seed)?;
    net.set_tracing(b.trace.is_some());
    if b.wall {
        net.set_clock(ClockMode::Wall);
    }
    let spec = WorkloadSpec {
        seed: b.seed,
        workers: b.workers,
        ..WorkloadSpec::rides(b.rides)
    };
    let report = run_load(&mut net, &spec, b.profile)?;
    if let Some(path) = &b.trace {
        net.write_trace_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?))?;
    }
    if let Some(csv) = &b.csv {
        let point = SweepPoint {
            axis_value: b.profile.mean_ms(),
            report: report.clone(),
        };
        export_csv(&[point], csv)?;
    }
    let mut v = serde_json::to_value(&report)?;
    if let Some(o) = v.as_object_mut() {
        o.remove("windows");
        o.insert("replicas_consistent".into(), json!(net.replicas_consistent()));
    }
    print(&v)
}

/// Presets that expand to several sweeps write one file each.
fn csv_path(base: &Path, sweep: &str, preset: &str) -> PathBuf {
    if sweep == preset {
        return base.to_owned();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let suffix = sweep.strip_prefix(preset).unwrap_or(sweep).trim_start_matches('-');
    base.with_file_name(format!("{stem}-{suffix}.csv"))
}
