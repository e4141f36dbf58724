use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wcnkit::config::Config;
use wcnkit::confnet::{build_wcn, filter_options, flatten_wcn, OptionOrder, Separator, WcnRenderOptions};
use wcnkit::harness::{
    emit_report, load_dataset, load_labels, load_records, run_eval, wer_bin_report, ErrorKind,
    EvalOptions, RunEnv, TaskKind, DEFAULT_BIN_EDGES,
};
use wcnkit::lattice::{arc_posteriors, nbest, parse_lattice, Lattice, Scales};
use wcnkit::prompting::TranscriptSource;

const USAGE: u8 = 1;
const DATA: u8 = 2;
const BACKEND: u8 = 3;

#[derive(Parser)]
#[command(name = "wcnkit", version, about = "Lattices, confusion networks and LLM prompting for spoken language understanding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Lattice,
    Posterior,
}

#[derive(clap::Args)]
struct ScaleArgs {
    #[arg(long, default_value_t = 1.0)]
    acoustic_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    lm_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Flatten a lattice into a confusion-network string.
    Wcn {
        /// SLF lattice file, or - for stdin.
        lattice: PathBuf,
        #[arg(long, default_value = "|")]
        separator: String,
        /// Drop options below this posterior (0 keeps all).
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "lattice")]
        order: Order,
        #[command(flatten)]
        scales: ScaleArgs,
        /// Print the network, one bin per line, instead of the string.
        #[arg(long)]
        dump_cn: bool,
    },
    /// List the k best paths as `score<TAB>words`.
    Nbest {
        lattice: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Collapse paths with the same word sequence.
        #[arg(long)]
        unique: bool,
        #[command(flatten)]
        scales: ScaleArgs,
    },
    /// Run the evaluation matrix and write reports.
    Eval {
        #[arg(long)]
        task: String,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated, e.g. `ground-truth,one-best,nbest-oracle,wcn[|,0.3]`.
        #[arg(long, default_value = "ground-truth,one-best,nbest-oracle,wcn[|,0.3]")]
        sources: String,
        /// 0, 1, or both as `0,1`.
        #[arg(long, default_value = "0")]
        shots: String,
        /// Explain the separator in zero-shot WCN prompts.
        #[arg(long, value_enum, default_value = "off")]
        wcn_instruction: OnOff,
        /// Allow one-shot WCN prompts without the separator explanation.
        #[arg(long)]
        no_forced_instruction: bool,
        /// Render in-context examples with this source.
        #[arg(long)]
        icl_source_override: Option<String>,
        /// Dataset to draw in-context examples from (default: the eval set).
        #[arg(long)]
        icl_pool: Option<PathBuf>,
        /// Intent label file, one per line.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// WER-bin breakdown of an existing records file.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// Comma-separated upper bin edges in percent.
        #[arg(long)]
        bins: Option<String>,
        /// Directory for wer_bins.json and wer_bins.csv; stdout gets the CSV otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure(u8, String);

fn usage(msg: impl ToString) -> Failure {
    Failure(USAGE, msg.to_string())
}

fn data(msg: impl ToString) -> Failure {
    Failure(DATA, msg.to_string())
}

fn read_lattice(path: &Path) -> Result<Lattice, Failure> {
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(data)?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?
    };
    parse_lattice(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn scales(a: &ScaleArgs) -> Result<Scales, Failure> {
    Scales::new(a.acoustic_scale, a.lm_scale).map_err(usage)
}

/// Splits on commas that are not inside `[...]`.
fn split_sources(spec: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in spec.chars() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    out.push(cur);
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_edges(spec: &str) -> Result<Vec<f64>, Failure> {
    spec.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("bad bin edge {t:?}"))))
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Wcn {
            lattice,
            separator,
            threshold,
            order,
            scales: s,
            dump_cn,
        } => {
            let sep: Separator = separator.parse().map_err(usage)?;
            let mut opts = WcnRenderOptions::new(sep, threshold).map_err(usage)?;
            opts.order = match order {
                Order::Lattice => OptionOrder::Lattice,
                Order::Posterior => OptionOrder::Posterior,
            };
            let lat = read_lattice(&lattice)?;
            let post = arc_posteriors(&lat, scales(&s)?).map_err(data)?;
            let cn = build_wcn(&lat, &post).map_err(data)?;
            if dump_cn {
                print!("{}", cn.to_debug_string());
                return Ok(());
            }
            let filtered = filter_options(&cn, threshold).map_err(data)?;
            println!("{}", flatten_wcn(&filtered, &opts).map_err(data)?);
        }
        Command::Nbest {
            lattice,
            k,
            unique,
            scales: s,
        } => {
            let lat = read_lattice(&lattice)?;
            let list = nbest(&lat, k, scales(&s)?, unique).map_err(usage)?;
            for h in list {
                println!("{:.6}\t{}", h.score, h.text());
            }
        }
        Command::Eval {
            task,
            data: data_path,
            sources,
            shots,
            wcn_instruction,
            no_forced_instruction,
            icl_source_override,
            icl_pool,
            labels,
            seed,
            config,
            out,
        } => {
            let task: TaskKind = task.parse().map_err(usage)?;
            let sources = split_sources(&sources)
                .iter()
                .map(|s| s.parse::<TranscriptSource>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage)?;
            let shots = shots
                .split(',')
                .map(|s| match s.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(usage(format!("shots must be 0 or 1, got {other:?}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let icl_source_override = icl_source_override
                .map(|s| s.parse::<TranscriptSource>())
                .transpose()
                .map_err(usage)?;
            let cfg = match &config {
                Some(p) => Config::load(p).map_err(data)?,
                None => Config::default(),
            };
            let labels = labels.map(load_labels).transpose().map_err(data)?;
            let dataset = load_dataset(&data_path, task, labels.as_deref()).map_err(data)?;
            let pool = icl_pool
                .map(|p| load_dataset(p, task, labels.as_deref()))
                .transpose()
                .map_err(data)?;
            let env = RunEnv::from_config(&cfg).map_err(data)?;
            let client = cfg.build_client().map_err(|e| Failure(BACKEND, e.to_string()))?;
            let opts = EvalOptions {
                sources,
                shots,
                wcn_instruction: matches!(wcn_instruction, OnOff::On),
                force_instruction_one_shot: !no_forced_instruction,
                icl_source_override,
                seed,
            };
            let output = run_eval(&dataset, pool.as_ref(), &opts, &env, &client).map_err(usage)?;
            emit_report(&out, &output.records, &output.summary).map_err(data)?;
            wer_bin_report(&output.records, &DEFAULT_BIN_EDGES)
                .and_then(|r| r.save(&out))
                .map_err(data)?;
            print!("{}", wcnkit::harness::report::summary_csv(&output.summary));
            let backend_failures = output
                .records
                .iter()
                .filter(|r| r.error_kind == Some(ErrorKind::Backend))
                .count();
            if backend_failures == output.records.len() {
                return Err(Failure(
                    BACKEND,
                    format!(
                        "every request failed at the backend; first error: {}",
                        output.records[0].error.as_deref().unwrap_or("")
                    ),
                ));
            }
            let errored = output.records.iter().filter(|r| r.is_errored()).count();
            if errored > 0 {
                eprintln!("wcnkit: {errored} of {} records errored", output.records.len());
            }
        }
        Command::Report { records, bins, out } => {
            let edges = match bins {
                Some(b) => parse_edges(&b)?,
                None => DEFAULT_BIN_EDGES.to_vec(),
            };
            let recs = load_records(&records).map_err(data)?;
            let report = wer_bin_report(&recs, &edges).map_err(|e| match e {
                wcnkit::harness::ReportError::BadEdges(_) => usage(e),
                other => data(other),
            })?;
            match out {
                Some(dir) => report.save(&dir).map_err(data)?,
                None => print!("{}", report.to_long_csv()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("wcnkit: {msg}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_split_outside_brackets() {
        assert_eq!(
            split_sources("ground-truth, wcn[/,0.3],wcn[|]"),
            vec!["ground-truth", "wcn[/,0.3]", "wcn[|]"]
        );
    }
}
