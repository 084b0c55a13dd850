//! `physec`: key generation, keystream dumps, symbol-stream encryption, link
//! simulation and statistical analysis.
//!
//! Exit status: 0 on success, 1 on usage or validation errors, 2 when a
//! simulation loses frames or an analysis test rejects its input.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use physec_core::cipher::{cipher_step, Direction};
use physec_core::keystream::{BankKey, KeystreamGenerator};
use physec_core::link_sim::{run_simulation, LinkStats, SimConfig};
use physec_core::stats::{self, knuth, nist, Histogram267, StatsError, TestReport};
use physec_core::stream;

#[derive(Parser, Debug)]
#[command(
    name = "physec",
    version,
    about = "Format-preserving 8b10b link encryption toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a new nine-cell key file.
    Keygen {
        #[arg(short, long)]
        out: PathBuf,
        /// Derive the key from this seed instead of OS entropy.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump keystream values (16-bit LE) or a cell's raw bitstream.
    Keystream {
        #[arg(long)]
        key: PathBuf,
        /// Values, or bits with `--bits`.
        #[arg(long, default_value_t = 1_310_720)]
        count: usize,
        #[arg(short, long)]
        out: PathBuf,
        /// Emit the packed MSB-first bitstream of one 8-bit cell.
        #[arg(long)]
        bits: bool,
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..8))]
        cell: u8,
    },
    /// Encrypt a symbol stream from keystream step 0.
    Encrypt(CipherArgs),
    /// Decrypt a symbol stream from keystream step 0.
    Decrypt(CipherArgs),
    /// Run the two-endpoint link simulation and print LinkStats as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Event log destination; stderr when absent.
        #[arg(long)]
        events: Option<PathBuf>,
        /// A->B line symbols as a symbol stream; needs `trace` in the config.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// A->B symbols ahead of the cipher, same length as the line trace.
        #[arg(long)]
        plain_out: Option<PathBuf>,
    },
    /// Run the statistical tests on a dump and print a CSV report.
    Analyze {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long = "in")]
        input: PathBuf,
        /// Second trace for `--mode trace`.
        #[arg(long)]
        against: Option<PathBuf>,
        /// Write the 267-bin histogram of `--in` as CSV.
        #[arg(long)]
        hist: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct CipherArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// 16-bit keystream values: Knuth frequency, serial and poker tests.
    Keystream,
    /// Packed bits: SP 800-22 subset.
    Bitstream,
    /// Two symbol-stream traces: index-distribution homogeneity.
    Trace,
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PHYSEC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Keygen { out, seed } => {
            let key = match seed {
                Some(s) => BankKey::generate(&mut ChaCha20Rng::seed_from_u64(s)),
                None => BankKey::generate(&mut ChaCha20Rng::from_entropy()),
            };
            write(&out, key.to_string().as_bytes())?;
            Ok(Outcome::Pass)
        }
        Command::Keystream {
            key,
            count,
            out,
            bits,
            cell,
        } => {
            let key = read_key(&key)?;
            let bytes = if bits {
                stream::pack_bits(&stream::cell_bitstream(&key, cell as usize, count))
            } else {
                let mut ks = KeystreamGenerator::new(key);
                stream::encode_values(&stream::keystream_values(&mut ks, count))
            };
            write(&out, &bytes)?;
            Ok(Outcome::Pass)
        }
        Command::Encrypt(args) => cipher(args, Direction::Encrypt),
        Command::Decrypt(args) => cipher(args, Direction::Decrypt),
        Command::Simulate {
            config,
            seed,
            events,
            trace_out,
            plain_out,
        } => simulate(&config, seed, events, trace_out, plain_out),
        Command::Analyze {
            mode,
            input,
            against,
            hist,
        } => analyze(mode, &input, against.as_deref(), hist.as_deref()),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_key(path: &Path) -> Result<BankKey> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse()
        .with_context(|| format!("parsing key {}", path.display()))
}

fn cipher(args: CipherArgs, direction: Direction) -> Result<Outcome> {
    let mut ks = KeystreamGenerator::new(read_key(&args.key)?);
    let symbols = stream::decode_symbols(&read(&args.input)?)
        .with_context(|| format!("decoding {}", args.input.display()))?;
    let out = symbols
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            cipher_step(s, &mut ks, direction).with_context(|| format!("symbol {i} ({s:?})"))
        })
        .collect::<Result<Vec<_>>>()?;
    write(&args.out, &stream::encode_symbols(&out))?;
    Ok(Outcome::Pass)
}

fn simulate(
    config: &Path,
    seed: Option<u64>,
    events: Option<PathBuf>,
    trace_out: Option<PathBuf>,
    plain_out: Option<PathBuf>,
) -> Result<Outcome> {
    let text =
        fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: SimConfig = text
        .parse()
        .with_context(|| format!("parsing {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if (trace_out.is_some() || plain_out.is_some()) && cfg.trace == 0 {
        bail!(
            "--trace-out/--plain-out need `trace = <symbols>` in {}",
            config.display()
        );
    }
    let report = run_simulation(&cfg)?;

    let log: String = report.events.iter().map(|e| format!("{e}\n")).collect();
    match events {
        Some(path) => write(&path, log.as_bytes())?,
        None => eprint!("{log}"),
    }
    let trace = &report.lanes[0].trace;
    if let Some(path) = trace_out {
        write(&path, &stream::encode_symbols(&trace.line))?;
    }
    if let Some(path) = plain_out {
        write(&path, &stream::encode_symbols(&trace.plain))?;
    }

    let s = report.stats;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", LinkStats::CSV_HEADER)?;
    writeln!(stdout, "{}", s.csv_row())?;
    Ok(if s.frames_lost() == 0 && s.crc_errors == 0 {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

/// Downgrades an undersized sample to a warning.
fn optional(test: Result<TestReport, StatsError>) -> Option<TestReport> {
    test.map_err(|e| warn!("skipped: {e}")).ok()
}

fn analyze(
    mode: Mode,
    input: &Path,
    against: Option<&Path>,
    hist: Option<&Path>,
) -> Result<Outcome> {
    let bytes = read(input)?;
    let decode = |path: &Path, bytes: &[u8]| {
        stream::decode_symbols(bytes).with_context(|| format!("decoding {}", path.display()))
    };
    let (reports, histogram) = match mode {
        Mode::Keystream => {
            let values = stream::decode_values(&bytes)
                .with_context(|| format!("decoding {}", input.display()))?;
            if values.len() < knuth::FREQUENCY_VALUES || values.len() < 2 * knuth::SERIAL_PAIRS {
                warn!(
                    "{} values is below the reference scale ({} frequency, {} serial pairs)",
                    values.len(),
                    knuth::FREQUENCY_VALUES,
                    knuth::SERIAL_PAIRS
                );
            }
            let mut h = Histogram267::default();
            values.iter().for_each(|&v| h.add(v));
            let mut reports = Vec::new();
            reports.extend(optional(knuth::frequency(&values)));
            reports.extend(optional(knuth::serial(&values)));
            reports.extend(optional(knuth::poker(&values)));
            if reports.is_empty() {
                bail!("{} values are too few for any test", values.len());
            }
            (reports, Some(h))
        }
        Mode::Bitstream => {
            let bits = stream::unpack_bits(&bytes);
            (nist::subset(&bits)?, None)
        }
        Mode::Trace => {
            let Some(other) = against else {
                bail!("--mode trace needs --against <trace>");
            };
            let a = decode(input, &bytes)?;
            let b = decode(other, &read(other)?)?;
            let r = stats::kflag_analysis(&a, &b, knuth::SIGNIFICANCE)?;
            info!("K rates: {:.6} {:.6}", r.k_rate_a, r.k_rate_b);
            (vec![r.homogeneity], Some(Histogram267::from_symbols(&a)))
        }
    };
    if let Some(path) = hist {
        let Some(h) = histogram else {
            bail!("--hist applies to keystream and trace modes");
        };
        write(path, h.csv().as_bytes())?;
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", TestReport::CSV_HEADER)?;
    for r in &reports {
        writeln!(stdout, "{}", r.csv_row())?;
    }
    Ok(if reports.iter().all(TestReport::passed) {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}
