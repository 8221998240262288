//! `textcraft`: runs experiments, analyses match records and hosts live matches.

mod config;

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use textcraft_client::Client;
use textcraft_server::api::ExportRequest;

use config::{absolute, RunArgs};

#[derive(Parser)]
#[command(name = "textcraft", version, about = "Text-interfaced RTS experiments and live matches")]
struct Cli {
    /// Service to talk to; an in-process service is started when absent.
    #[arg(long, global = true, env = "TEXTCRAFT_SERVER")]
    server: Option<String>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play an experiment and write one record per match plus a report.
    Run(RunArgs),
    /// Per-record and aggregate metrics.
    Metrics {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Row label in the summary table.
        #[arg(long)]
        label: Option<String>,
    },
    /// Split won matches into APU quartile buckets.
    Partition {
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Write (summary, decisions) training pairs as JSONL.
    ExportPairs {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// all, wins, q1..q4, or a bucket label.
        #[arg(long, default_value = "all")]
        filter: String,
        /// Destination file; pairs go to stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Re-simulate records and compare their state checkpoints.
    ReplayVerify {
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Host the HTTP and WebSocket service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn absolute_all(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    paths.iter().map(|p| absolute(p)).collect()
}

async fn connect(server: Option<String>) -> anyhow::Result<Client> {
    if let Some(url) = server {
        return Ok(Client::new(&url));
    }
    let (addr, serve) =
        textcraft_server::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.context("starting in-process service")?;
    tokio::spawn(serve);
    Ok(Client::new(&format!("http://{addr}")))
}

async fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Command::Serve { bind } = cli.command {
        let (addr, serve) = textcraft_server::bind(bind).await.with_context(|| format!("binding {bind}"))?;
        eprintln!("listening on http://{addr}");
        tokio::select! {
            r = serve => r?,
            _ = tokio::signal::ctrl_c() => {}
        }
        return Ok(ExitCode::SUCCESS);
    }
    let json = cli.json;
    let client = connect(cli.server).await?;
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let summary = client.run_experiment(&cfg).await?;
            if json {
                print_json(&summary)?;
            } else {
                for m in &summary.matches {
                    match (&m.report, &m.error) {
                        (_, Some(e)) => println!("seed {:>6}  FAILED  {e}", m.seed),
                        (Some(r), None) => println!(
                            "seed {:>6}  reward {:>2}  ticks {:>5}  {}",
                            m.seed,
                            r.reward,
                            r.final_tick,
                            m.path.display()
                        ),
                        (None, None) => println!("seed {:>6}  {}", m.seed, m.path.display()),
                    }
                }
                println!("config {}", summary.config_hash);
                println!("report {}", summary.report_text.display());
            }
            let ok = summary.all_completed();
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Metrics { records, label } => {
            let resp = client.metrics(absolute_all(&records)?, label).await?;
            if json {
                print_json(&resp)?;
            } else {
                for r in &resp.reports {
                    println!(
                        "{}  won={}  PBR={:.4}  RUR={:.2}  APU={:.4}  TR={:.4}",
                        r.id, r.won, r.pbr, r.rur, r.apu, r.tr
                    );
                }
                print!("{}", resp.table);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Partition { records } => {
            let resp = client.partition(absolute_all(&records)?).await?;
            if json {
                print_json(&resp)?;
            } else {
                for b in &resp.buckets {
                    let apus: Vec<String> = b.apus.iter().map(|a| format!("{a:.4}")).collect();
                    println!("{:<26} {:>3}  [{}]", b.label, b.ids.len(), apus.join(", "));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportPairs { records, filter, output } => {
            let req = ExportRequest {
                paths: absolute_all(&records)?,
                filter,
                output: output.as_deref().map(absolute).transpose()?,
            };
            let resp = client.export_pairs(&req).await?;
            match &resp.output {
                Some(path) => eprintln!("{} pairs written to {}", resp.count, path.display()),
                None => {
                    let mut out = std::io::stdout().lock();
                    for p in &resp.pairs {
                        let line = serde_json::to_string(p)?;
                        if writeln!(out, "{line}").is_err() {
                            break;
                        }
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ReplayVerify { records } => {
            let resp = client.replay_verify(absolute_all(&records)?).await?;
            if json {
                print_json(&resp)?;
            } else {
                for r in &resp.results {
                    match (&r.report, &r.error) {
                        (_, Some(e)) => println!("ERROR {}: {e}", r.path.display()),
                        (Some(rep), None) => match &rep.divergence {
                            None => println!(
                                "OK {}: {} checkpoints, {} actions",
                                r.path.display(),
                                rep.checkpoints,
                                rep.actions
                            ),
                            Some(d) => println!(
                                "DIVERGED {}: line {} tick {}: expected {} got {}",
                                r.path.display(),
                                d.line,
                                d.tick,
                                d.expected,
                                d.actual
                            ),
                        },
                        (None, None) => println!("ERROR {}: empty report", r.path.display()),
                    }
                }
            }
            let ok = resp.results.iter().all(|r| r.ok());
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "warn,textcraft_server=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(execute(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
