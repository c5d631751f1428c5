use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ticketlab::io::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use ticketlab::io::config::ExperimentSpec;
use ticketlab::io::table::{emit_csv, figure_table, format_float, record_table, Table};
use ticketlab::io::{load_record, save_record};
use ticketlab::lottery::{ExperimentRecord, LotteryConfig, LotteryData, LotteryRunner, RecordMeta};
use ticketlab::metrics::{connectivity_report, figure_data, Figure};
use ticketlab::{full_mask, init_network, sparsity, train, Error, Result};

/// Lottery-ticket pruning experiments on dense classifiers.
///
/// Exit codes: 0 success, 1 usage error, 2 data or format error,
/// 3 numerical failure (non-finite weights or loss).
#[derive(Parser)]
#[command(name = "ticketlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dense network of an experiment spec and write its
    /// per-epoch history (`<id>_seed<s>_train.csv`) and weights.
    Train {
        /// Experiment spec (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every seed of an experiment spec. Writes `<id>_seed<s>.csv`,
    /// `<id>_seed<s>.json` and a checkpoint per seed, plus `<id>.csv` with
    /// all seeds.
    Lottery {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from existing checkpoints where their config hash matches.
        #[arg(long)]
        resume: bool,
        /// Write 0 in the `seconds` column so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Stop after this many rows per seed (the checkpoint allows resuming).
        #[arg(long)]
        max_rows: Option<usize>,
        /// Seeds to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Assemble figure data from experiment records (`.json`) into a CSV.
    Report {
        /// accuracy_vs_sparsity, movement_vs_sparsity, width_comparison or
        /// batch_comparison.
        #[arg(long)]
        figure: Figure,
        #[arg(long)]
        out: PathBuf,
        /// Width label for records without one, as `<record path>=<label>`.
        #[arg(long = "label")]
        labels: Vec<String>,
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Print sparsity and per-layer connectivity of a checkpoint.
    Inspect {
        checkpoint: PathBuf,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run the built-in invariant checks on small synthetic problems.
    Selftest,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, out } => cmd_train(&config, out),
        Command::Lottery {
            config,
            out,
            resume,
            no_timing,
            max_rows,
            jobs,
        } => cmd_lottery(&config, out, resume, no_timing, max_rows, jobs),
        Command::Report {
            figure,
            out,
            labels,
            records,
        } => cmd_report(figure, &out, &labels, &records),
        Command::Inspect { checkpoint, json } => cmd_inspect(&checkpoint, json),
        Command::Selftest => cmd_selftest(),
    }
}

fn output_dir(spec: &ExperimentSpec, out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| spec.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn cmd_train(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let spec = ExperimentSpec::load(config)?;
    let dir = output_dir(&spec, out)?;
    let data = spec.load_data()?;
    for (seed, cfg) in spec.jobs() {
        let net = init_network(&cfg.arch, cfg.init_seed);
        let mask = full_mask(&cfg.arch);
        let outcome = train(&net, &mask, &data.train, Some(&data.test), &cfg.train)?;
        let mut t = Table::new(&["epoch", "train_loss", "test_accuracy"]);
        for (i, e) in outcome.history.iter().enumerate() {
            println!(
                "seed {seed} epoch {:>3}: loss {:.5}  test accuracy {:.4}",
                i + 1,
                e.train_loss,
                e.test_accuracy.unwrap_or(f64::NAN)
            );
            t.rows.push(vec![
                (i + 1).to_string(),
                format_float(e.train_loss),
                e.test_accuracy.map(format_float).unwrap_or_default(),
            ]);
        }
        let stem = spec.job_stem(seed);
        emit_csv(&t, dir.join(format!("{stem}_train.csv")))?;
        let weights = dir.join(format!("{stem}_weights.json"));
        let text = serde_json::to_string(&outcome.network)
            .map_err(|e| Error::Numerical(format!("weights not serializable: {e}")))?;
        std::fs::write(&weights, text).map_err(|e| Error::io(&weights, e))?;
    }
    Ok(())
}

struct JobOutput {
    seed: u64,
    record: ExperimentRecord,
    finished: bool,
}

fn run_job(
    spec: &ExperimentSpec,
    dir: &Path,
    seed: u64,
    cfg: &LotteryConfig,
    data: LotteryData<'_>,
    resume: bool,
    max_rows: Option<usize>,
) -> Result<JobOutput> {
    let stem = spec.job_stem(seed);
    let ckpt_path = dir.join(format!("{stem}.ckpt.json"));
    let mut runner = None;
    if resume && ckpt_path.exists() {
        let ckpt = load_checkpoint(&ckpt_path)?;
        match ckpt.config_warning(cfg) {
            Some(w) => log::warn!("{}: {w}; starting seed {seed} from scratch", ckpt_path.display()),
            None => {
                log::info!("resuming seed {seed} at round {}", ckpt.round_index);
                runner = Some(LotteryRunner::from_state(cfg, data, ckpt.state)?);
            }
        }
    }
    let mut runner = match runner {
        Some(r) => r,
        None => LotteryRunner::new(cfg, data)?,
    };
    let mut done_here = 0;
    while !runner.is_done() && max_rows.is_none_or(|m| done_here < m) {
        runner.step()?;
        done_here += 1;
        save_checkpoint(&Checkpoint::new(cfg, runner.state()), &ckpt_path)?;
    }
    let finished = runner.is_done();
    let mut record = runner.into_record();
    record.meta = RecordMeta {
        experiment_id: spec.experiment_id.clone(),
        ..record.meta
    };
    Ok(JobOutput {
        seed,
        record,
        finished,
    })
}

fn cmd_lottery(
    config: &Path,
    out: Option<PathBuf>,
    resume: bool,
    no_timing: bool,
    max_rows: Option<usize>,
    jobs: usize,
) -> Result<()> {
    if jobs == 0 {
        return Err(Error::Usage("--jobs must be at least 1".into()));
    }
    let spec = ExperimentSpec::load(config)?;
    let dir = output_dir(&spec, out)?;
    let data = spec.load_data()?;
    let all_jobs = spec.jobs();

    let mut results: Vec<JobOutput> = Vec::new();
    for batch in all_jobs.chunks(jobs) {
        let outputs: Vec<Result<JobOutput>> = std::thread::scope(|s| {
            let handles: Vec<_> = batch
                .iter()
                .map(|(seed, cfg)| {
                    let (spec, dir, data) = (&spec, &dir, &data);
                    s.spawn(move || {
                        let d = LotteryData {
                            train: &data.train,
                            test: &data.test,
                        };
                        run_job(spec, dir, *seed, cfg, d, resume, max_rows)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("job thread panicked")).collect()
        });
        for o in outputs {
            results.push(o?);
        }
    }

    let mut records = Vec::new();
    for job in results {
        let record = if no_timing {
            job.record.without_timing()
        } else {
            job.record
        };
        let stem = spec.job_stem(job.seed);
        emit_csv(&record_table(std::slice::from_ref(&record)), dir.join(format!("{stem}.csv")))?;
        if job.finished {
            save_record(&record, dir.join(format!("{stem}.json")))?;
        } else {
            log::info!("seed {} paused after {} rows", job.seed, record.rows.len());
        }
        records.push(record);
    }
    emit_csv(&record_table(&records), dir.join(format!("{}.csv", spec.experiment_id)))?;
    println!("wrote results to {}", dir.display());
    Ok(())
}

fn cmd_report(figure: Figure, out: &Path, labels: &[String], paths: &[PathBuf]) -> Result<()> {
    let mut records = Vec::new();
    for p in paths {
        let mut rec = load_record(p)?;
        for l in labels {
            let (path, label) = l
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("label {l:?} is not <record>=<label>")))?;
            if Path::new(path) == p.as_path() {
                rec.meta.width_label = Some(label.to_string());
            }
        }
        records.push(rec);
    }
    let table = figure_data(&records, figure)?;
    emit_csv(&figure_table(&table), out)?;
    println!("{} points written to {}", table.points.len(), out.display());
    Ok(())
}

fn cmd_inspect(path: &Path, json: bool) -> Result<()> {
    let ckpt = load_checkpoint(path)?;
    let sp = sparsity(&ckpt.state.mask);
    let conn = connectivity_report(&ckpt.state.mask);
    if json {
        let v = serde_json::json!({
            "round_index": ckpt.round_index,
            "config_hash": ckpt.config_hash,
            "sparsity": sp,
            "connectivity": conn,
        });
        println!("{}", serde_json::to_string_pretty(&v).unwrap());
        return Ok(());
    }
    println!("architecture  {:?}", ckpt.arch.as_slice());
    println!("round index   {}", ckpt.round_index);
    println!(
        "pruned        {} / {} weights ({:.4}%)",
        sp.pruned_weights,
        sp.total_weights,
        100.0 * sp.fraction_pruned
    );
    println!("layer  shape        pruned%   incoming min / mean / max");
    for (l, (s, c)) in sp.per_layer.iter().zip(&conn.layers).enumerate() {
        let shape = format!("{}x{}", c.incoming.len(), c.fan_in);
        println!(
            "{l:<6} {shape:<12} {:>7.3}   {} / {:.2} / {}",
            100.0 * s.fraction_pruned,
            c.min,
            c.mean,
            c.max
        );
    }
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let results = ticketlab::selftest::run_all();
    let mut failed = 0;
    for r in &results {
        println!("{} {:<22} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += (!r.passed) as usize;
    }
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
