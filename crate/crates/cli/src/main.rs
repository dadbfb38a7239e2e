//! `pct`: key generation, encryption, decryption, analysis and inspection.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use pct_core::codec::{self, CONTAINER_HEADER_LEN, CONTAINER_MAGIC};
use pct_core::metrics::{self, AnalysisOptions, KeyMode, ADAPTER_NAMES};
use pct_core::{generate_session_key, Error, RandomSource, SessionKey, CAP};

#[derive(Debug, Parser)]
#[command(name = "pct", version, about = "Session-keyed bit permutation cipher")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a session key sized to INPUT.
    Keygen {
        input: PathBuf,
        /// Where to write the key file.
        #[arg(long)]
        key: PathBuf,
        /// Up to 32 bytes of hex; zero-extended. Omit for OS entropy.
        #[arg(long)]
        seed: Option<String>,
    },
    /// Encrypt INPUT into a container.
    Encrypt {
        input: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Allow an input shorter than the key; the tail is zero-filled.
        #[arg(long)]
        pad: bool,
    },
    /// Decrypt a container back to plaintext.
    Decrypt {
        input: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure timing, avalanche, strict avalanche, bit independence and
    /// chi-square for each INPUT.
    Analyze {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "pct")]
        adapter: String,
        #[arg(long, default_value_t = 128)]
        trials: usize,
        #[arg(long, default_value_t = metrics::DEFAULT_PAIR_SAMPLE)]
        pairs: usize,
        /// Append one row per input to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<String>,
        /// `session` draws a fresh key per encryption, `fixed` reuses one.
        #[arg(long, default_value = "session")]
        key_mode: String,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        /// Write source and ciphertext byte histograms into this directory.
        #[arg(long)]
        histograms: Option<PathBuf>,
    },
    /// Describe a key file or container.
    Inspect { path: PathBuf },
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_KEY_MISMATCH: u8 = 3;
const EXIT_CORRUPT: u8 = 4;
const EXIT_FORMAT: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::KeyFileMismatch { .. }) => EXIT_KEY_MISMATCH,
        Some(Error::CorruptContainer(_)) => EXIT_CORRUPT,
        Some(
            Error::UnknownFormat(_)
            | Error::Truncated { .. }
            | Error::InvalidKey(_)
            | Error::BadExponent(_),
        ) => EXIT_FORMAT,
        Some(Error::InvalidArgument(_)) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Keygen { input, key, seed } => cmd_keygen(&input, &key, seed.as_deref()),
        Command::Encrypt {
            input,
            key,
            out,
            pad,
        } => cmd_encrypt(&input, &key, &out, pad),
        Command::Decrypt { input, key, out } => cmd_decrypt(&input, &key, &out),
        Command::Analyze {
            inputs,
            adapter,
            trials,
            pairs,
            csv,
            seed,
            key_mode,
            repetitions,
            histograms,
        } => {
            let key_mode: KeyMode = key_mode.parse().map_err(|e: Error| usage(e.to_string()))?;
            let options = AnalysisOptions {
                trials,
                pair_sample: pairs,
                key_mode,
                repetitions,
                ..Default::default()
            };
            cmd_analyze(
                &inputs,
                &adapter,
                &options,
                csv.as_deref(),
                seed.as_deref(),
                histograms.as_deref(),
            )
        }
        Command::Inspect { path } => cmd_inspect(&path),
    }
}

fn parse_seed(seed: Option<&str>) -> anyhow::Result<RandomSource> {
    let Some(hex_str) = seed else {
        return Ok(RandomSource::from_entropy());
    };
    let hex_str = hex_str.trim_start_matches("0x");
    let padded = if hex_str.len() % 2 == 1 {
        format!("0{hex_str}")
    } else {
        hex_str.to_string()
    };
    let bytes = hex::decode(&padded).map_err(|e| usage(format!("bad --seed: {e}")))?;
    if bytes.is_empty() || bytes.len() > 32 {
        return Err(usage("--seed takes 1 to 32 bytes of hex"));
    }
    let mut seed = [0u8; 32];
    seed[..bytes.len()].copy_from_slice(&bytes);
    Ok(RandomSource::from_seed(seed))
}

/// Checks that `path` is a readable regular file and returns its length.
fn input_len(path: &Path) -> anyhow::Result<u64> {
    let meta = fs::metadata(path).with_context(|| format!("cannot read {}", path.display()))?;
    if !meta.is_file() {
        return Err(usage(format!("{} is not a regular file", path.display())));
    }
    Ok(meta.len())
}

fn load_key(path: &Path) -> anyhow::Result<SessionKey> {
    let bytes = fs::read(path).with_context(|| format!("cannot read key {}", path.display()))?;
    SessionKey::from_bytes(&bytes).with_context(|| format!("cannot parse key {}", path.display()))
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.tmp"))
}

/// Runs `write` against a sibling temporary file and renames it over `path`
/// only if it succeeds.
fn write_atomically<T>(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<T>,
) -> anyhow::Result<T> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut w = BufWriter::new(
            File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?,
        );
        let value = write(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        Ok(value)
    })();
    match result {
        Ok(value) => {
            fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))?;
            Ok(value)
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn describe_partition(key: &SessionKey) -> String {
    key.partition_histogram()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, c)| format!("{}B x{}", 1u64 << i, c))
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_keygen(input: &Path, key_out: &Path, seed: Option<&str>) -> anyhow::Result<()> {
    let len = input_len(input)?;
    if len == 0 {
        bail!(Error::EmptyInput);
    }
    let mut rng = parse_seed(seed)?;
    let key = generate_session_key(len, &mut rng)?;
    write_atomically(key_out, |w| Ok(w.write_all(&key.to_bytes())?))?;
    println!("input bytes: {len}");
    println!("blocks: {}", key.block_count());
    println!("partition: {}", describe_partition(&key));
    Ok(())
}

fn cmd_encrypt(input: &Path, key_path: &Path, out: &Path, pad: bool) -> anyhow::Result<()> {
    let len = input_len(input)?;
    let key = load_key(key_path)?;
    let reader = BufReader::new(File::open(input)?);
    let start = Instant::now();
    let written = write_atomically(out, |w| {
        Ok(codec::encrypt_stream(reader, len, &key, pad, w)?)
    })?;
    let secs = start.elapsed().as_secs_f64();
    println!("encrypted {len} bytes into {written} bytes in {secs:.6} s");
    Ok(())
}

fn cmd_decrypt(input: &Path, key_path: &Path, out: &Path) -> anyhow::Result<()> {
    input_len(input)?;
    let key = load_key(key_path)?;
    let reader = BufReader::new(File::open(input)?);
    let start = Instant::now();
    let len = write_atomically(out, |w| Ok(codec::decrypt_stream(reader, &key, w)?))?;
    let secs = start.elapsed().as_secs_f64();
    println!("decrypted {len} bytes in {secs:.6} s");
    Ok(())
}

fn cmd_analyze(
    inputs: &[PathBuf],
    adapter_name: &str,
    options: &AnalysisOptions,
    csv: Option<&Path>,
    seed: Option<&str>,
    histograms: Option<&Path>,
) -> anyhow::Result<()> {
    let adapter = metrics::adapter_by_name(adapter_name).ok_or_else(|| {
        usage(format!(
            "unknown adapter {adapter_name:?}; registered: {}",
            ADAPTER_NAMES.join(", ")
        ))
    })?;
    if options.trials < 2 {
        return Err(usage("--trials must be at least 2"));
    }
    let mut rng = parse_seed(seed)?;
    if let Some(dir) = histograms {
        fs::create_dir_all(dir)?;
    }
    for input in inputs {
        input_len(input)?;
        let data = fs::read(input)?;
        let name = input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| input.display().to_string());
        let analysis = metrics::analyze(adapter.as_ref(), &data, &name, options, &mut rng)
            .with_context(|| format!("analyzing {}", input.display()))?;
        let r = &analysis.report;
        println!(
            "{name}: size={} adapter={} encrypt_s={:.6} decrypt_s={} avalanche={:.5} strict_avalanche={:.5} bit_independence={:.5} chi_square={:.2}",
            r.file_size,
            r.adapter,
            r.encrypt_s,
            r.decrypt_s.map_or("n/a".to_string(), |t| format!("{t:.6}")),
            r.avalanche,
            r.strict_avalanche,
            r.bit_independence,
            r.chi_square,
        );
        println!("  sampling: {}", r.sampling_note());
        if let Some(path) = csv {
            metrics::append_csv(path, r)?;
        }
        if let Some(dir) = histograms {
            metrics::write_histogram_csv(
                &dir.join(format!("{name}.source.csv")),
                &analysis.source_histogram,
            )?;
            metrics::write_histogram_csv(
                &dir.join(format!("{name}.{}.csv", r.adapter)),
                &analysis.cipher_histogram,
            )?;
        }
    }
    Ok(())
}

fn cmd_inspect(path: &Path) -> anyhow::Result<()> {
    let len = input_len(path)?;
    let mut head = Vec::with_capacity(CONTAINER_HEADER_LEN);
    File::open(path)?
        .take(CONTAINER_HEADER_LEN as u64)
        .read_to_end(&mut head)?;
    if head.starts_with(b"PCTK") {
        let key = SessionKey::from_bytes(&fs::read(path)?)?;
        println!("format: PCTK key, version 1");
        println!("original_len: {}", key.original_len());
        println!("blocks: {}", key.block_count());
        println!("partition:");
        for (i, &count) in key.partition_histogram().iter().enumerate() {
            if count > 0 {
                println!("  exponent {:>2} ({:>7} B): {count}", i + 1, 1u64 << i);
            }
        }
        let mass = key.mass();
        if mass == key.original_len() as u128 {
            println!("mass OK: sum 2^(e-1) = {mass}");
        } else {
            bail!(Error::InvalidKey(format!(
                "mass {mass} != {}",
                key.original_len()
            )));
        }
        println!("max exponent allowed: {CAP}");
        println!("sha512: {}", hex::encode(key.digest()));
    } else if head.starts_with(CONTAINER_MAGIC) {
        let original_len = codec::parse_header(&head)?;
        let payload = len.saturating_sub(CONTAINER_HEADER_LEN as u64);
        println!("format: PCTC container, version 1");
        println!("original_len: {original_len}");
        println!("payload_len: {payload}");
        if original_len > payload {
            bail!(Error::CorruptContainer(format!(
                "header claims {original_len} bytes but payload has {payload}"
            )));
        }
    } else {
        bail!(Error::UnknownFormat(format!(
            "{} is neither a key (PCTK) nor a container (PCTC)",
            path.display()
        )));
    }
    Ok(())
}
