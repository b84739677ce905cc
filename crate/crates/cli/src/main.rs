//! `fedtrust` command-line front end.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fedtrust::credibility::CredibilityLedger;
use fedtrust::experiments::run_file;
use fedtrust::experiments::tables::{
    read_histories, read_preferences, read_queries, read_reference, read_traces,
};
use fedtrust::resource_trust::{assess_device, reference_fences};
use fedtrust::sim::bootstrap::{evaluate_bootstrap, Recommender};
use fedtrust::{find_blocking_pairs, run_matching};

#[derive(Debug, Parser)]
#[command(name = "fedtrust", version, about = "Mutual-trust client selection for federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a full experiment from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score devices from utilization traces against a reference sample.
    Trust {
        /// CSV with columns device_id,feature,value.
        #[arg(long)]
        trace: PathBuf,
        /// CSV with columns feature,value.
        #[arg(long)]
        reference: PathBuf,
    },
    /// Pair devices with servers from trust-ranked preferences.
    Match {
        /// CSV with columns device_id,server_id,trust.
        #[arg(long)]
        devices: PathBuf,
        /// CSV with columns server_id,quota,device_id,trust.
        #[arg(long)]
        servers: PathBuf,
    },
    /// Bootstrap labelled servers from recommender histories and report ROC.
    BootstrapEval {
        /// CSV with columns [recommender_id,]server_id,location[,payment][,trust_score],trust_status.
        #[arg(long)]
        history: PathBuf,
        /// CSV with columns server_id,location[,payment],trust_status.
        #[arg(long)]
        queries: PathBuf,
        /// Cap on the mass a single recommender may commit.
        #[arg(long, default_value_t = 0.95)]
        max_source_mass: f64,
    },
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn cmd_run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let art = run_file(&config, seed, out)
        .with_context(|| format!("running {}", config.display()))?;
    for p in &art.metrics {
        println!("metrics  {}", p.display());
    }
    for p in &art.ledgers {
        println!("ledgers  {}", p.display());
    }
    if let Some(p) = &art.roc {
        println!("roc      {}", p.display());
    }
    println!("config   {}", art.config_echo.display());
    Ok(())
}

fn cmd_trust(trace: PathBuf, reference: PathBuf) -> Result<()> {
    let fences = reference_fences(&read_reference(&reference)?)?;
    println!("feature,q1,q2,q3,iqr,lower,upper");
    for (f, x) in &fences {
        println!(
            "{f},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            x.q1, x.q2, x.q3, x.iqr, x.lower, x.upper
        );
    }
    println!();
    println!("device,feature,over_count,over_avg,over_ratio,under_count,under_avg,under_ratio");
    let mut scores = Vec::new();
    for (device, traces) in read_traces(&trace)? {
        let (trust, anomalies) = assess_device(device, &traces, &fences);
        for a in &anomalies {
            println!(
                "{device},{},{},{},{},{},{},{}",
                a.feature,
                a.over_count,
                opt(a.over_avg),
                opt(a.over_ratio),
                a.under_count,
                opt(a.under_avg),
                opt(a.under_ratio)
            );
        }
        scores.push(trust);
    }
    println!();
    println!("device,trust");
    for t in scores {
        println!("{},{:.4}", t.device_id, t.score);
    }
    Ok(())
}

fn cmd_match(devices: PathBuf, servers: PathBuf) -> Result<()> {
    let (dp, sp, quotas) = read_preferences(&devices, &servers)?;
    let m = run_matching(&dp, &sp, &quotas)?;
    println!("device,server");
    for (d, s) in &m.device_to_server {
        println!("{d},{}", s.as_deref().unwrap_or("-"));
    }
    let blocking = find_blocking_pairs(&m, &dp, &sp, &quotas);
    println!();
    println!("blocking pairs: {}", blocking.len());
    Ok(())
}

fn cmd_bootstrap(history: PathBuf, queries: PathBuf, max_source_mass: f64) -> Result<()> {
    let recommenders = read_histories(&history)?
        .into_iter()
        .map(|(id, h)| Recommender::from_history(id, &h, false))
        .collect::<fedtrust::Result<Vec<_>>>()?;
    let queries = read_queries(&queries)?;
    let mut ledger = CredibilityLedger::default();
    let report = evaluate_bootstrap(&mut ledger, &recommenders, &queries, max_source_mass)?;

    println!("server,location,t,n,u,decision,label");
    for ((q, o), label) in queries.iter().zip(&report.outcomes).zip(&report.labels) {
        println!(
            "{},{},{:.4},{:.4},{:.4},{},{}",
            q.server_id,
            q.location,
            o.belief.t,
            o.belief.n,
            o.belief.u,
            if o.decision.trustworthy { "YES" } else { "NO" },
            if *label { "YES" } else { "NO" }
        );
    }
    println!();
    println!("threshold,tpr,fpr");
    for p in &report.roc.points {
        println!("{},{:.4},{:.4}", p.threshold, p.tpr, p.fpr);
    }
    println!();
    println!("auc: {:.4}", report.roc.auc);
    let credibility: BTreeMap<_, _> = recommenders.iter().map(|r| (&r.id, ledger.get(&r.id))).collect();
    for (id, c) in credibility {
        println!("credibility {id}: {c:.4}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(config, seed, out),
        Command::Trust { trace, reference } => cmd_trust(trace, reference),
        Command::Match { devices, servers } => cmd_match(devices, servers),
        Command::BootstrapEval {
            history,
            queries,
            max_source_mass,
        } => cmd_bootstrap(history, queries, max_source_mass),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
