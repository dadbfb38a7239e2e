//! Statistical analysis of a cipher's output.
//!
//! All estimators share one sampling procedure: encrypt the plaintext once
//! for a baseline, then for each trial flip one uniformly chosen plaintext
//! bit, encrypt again and compare against the baseline.
//!
//! * Avalanche: `1 - sigma/mu` where `mu` is half the ciphertext bits and
//!   `sigma` the RMS deviation of the per-trial Hamming distances from `mu`.
//! * Strict avalanche: per output bit `j`, `p_j` is the fraction of trials in
//!   which it changed; the score is `1 - sigma/0.5` with `sigma` the RMS
//!   deviation of `p_j` from 0.5.
//! * Bit independence: `1 -` the mean absolute Pearson correlation between
//!   the change indicators of randomly sampled output-bit pairs.
//!
//! Strict avalanche and bit independence only look at the first
//! [`DEFAULT_WINDOW_BYTES`] of ciphertext, and bit independence samples
//! [`DEFAULT_PAIR_SAMPLE`] pairs; full pairwise analysis is quadratic in the
//! output size. Scores are clamped to `[0, 1]`.

mod adapter;
mod report;

use std::path::Path;
use std::time::Instant;

use rand::Rng;

pub use adapter::{
    adapter_by_name, CipherAdapter, IdealAdapter, KeyHandle, PctAdapter, ADAPTER_NAMES,
};
pub use report::{append_csv, write_histogram_csv, CsvRow, MetricsReport};

use crate::{Error, RandomSource, Result};

pub const DEFAULT_WINDOW_BYTES: usize = 64 * 1024;
pub const DEFAULT_PAIR_SAMPLE: usize = 10_000;

/// Chi-square critical value for 255 degrees of freedom at alpha = 0.05.
pub const CHI_SQUARE_CRITICAL_255: f64 = 293.25;

/// How keys are drawn while sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyMode {
    /// Every encryption (baseline and each trial) runs under a freshly
    /// generated key, as a session cipher is used.
    #[default]
    Session,
    /// One key for the baseline and all trials.
    Fixed,
}

impl KeyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyMode::Session => "session",
            KeyMode::Fixed => "fixed",
        }
    }
}

impl std::str::FromStr for KeyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "session" => Ok(KeyMode::Session),
            "fixed" => Ok(KeyMode::Fixed),
            other => Err(Error::InvalidArgument(format!(
                "unknown key mode {other:?} (expected session or fixed)"
            ))),
        }
    }
}

/// Raw material for the avalanche-family estimators.
#[derive(Debug, Clone)]
pub struct TrialSet {
    /// Hamming distance to the baseline for each trial.
    pub distances: Vec<u64>,
    /// Ciphertext bits in the baseline.
    pub total_bits: u64,
    /// Per-trial XOR against the baseline over the sampling window.
    pub changes: Vec<Vec<u8>>,
}

impl TrialSet {
    pub fn trials(&self) -> usize {
        self.distances.len()
    }

    pub fn window_bits(&self) -> usize {
        self.changes.first().map_or(0, |c| c.len() * 8)
    }

    fn changed(&self, trial: usize, bit: usize) -> bool {
        (self.changes[trial][bit >> 3] >> (7 - (bit & 7))) & 1 == 1
    }
}

/// Runs `trials` single-bit-flip trials against a baseline encryption.
pub fn collect_trials(
    adapter: &dyn CipherAdapter,
    plaintext: &[u8],
    trials: usize,
    key_mode: KeyMode,
    window_bytes: usize,
    rng: &mut RandomSource,
) -> Result<TrialSet> {
    if plaintext.is_empty() {
        return Err(Error::EmptyInput);
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let skip = adapter.framing_len();
    let base_key = adapter.keygen(plaintext.len(), rng)?;
    let baseline = adapter.encrypt(plaintext, &base_key)?;
    let baseline = &baseline[skip.min(baseline.len())..];
    let window = window_bytes.min(baseline.len());

    let bit_count = plaintext.len() as u64 * 8;
    let mut flipped = plaintext.to_vec();
    let mut distances = Vec::with_capacity(trials);
    let mut changes = Vec::with_capacity(trials);
    for _ in 0..trials {
        let bit = rng.gen_range(0..bit_count);
        let mask = 0x80u8 >> (bit % 8);
        flipped[(bit / 8) as usize] ^= mask;

        let key = match key_mode {
            KeyMode::Session => adapter.keygen(plaintext.len(), rng)?,
            KeyMode::Fixed => base_key.clone(),
        };
        let ct = adapter.encrypt(&flipped, &key)?;
        let ct = &ct[skip.min(ct.len())..];
        distances.push(hamming_distance(baseline, ct));
        changes.push(
            baseline[..window]
                .iter()
                .zip(&ct[..window.min(ct.len())])
                .map(|(a, b)| a ^ b)
                .collect(),
        );

        flipped[(bit / 8) as usize] ^= mask;
    }
    Ok(TrialSet {
        distances,
        total_bits: baseline.len() as u64 * 8,
        changes,
    })
}

/// Number of differing bits over the common prefix of `a` and `b`.
pub fn hamming_distance(a: &[u8], b: &[u8]) -> u64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut total = 0u64;
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    for (x, y) in chunks_a.by_ref().zip(chunks_b.by_ref()) {
        let x = u64::from_ne_bytes(x.try_into().unwrap());
        let y = u64::from_ne_bytes(y.try_into().unwrap());
        total += (x ^ y).count_ones() as u64;
    }
    for (x, y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        total += (x ^ y).count_ones() as u64;
    }
    total
}

pub fn avalanche_score(set: &TrialSet) -> f64 {
    let mu = set.total_bits as f64 / 2.0;
    if mu == 0.0 {
        return 0.0;
    }
    let var = set
        .distances
        .iter()
        .map(|&d| (d as f64 - mu).powi(2))
        .sum::<f64>()
        / set.trials() as f64;
    (1.0 - var.sqrt() / mu).max(0.0)
}

/// Per-bit change frequencies over the window.
pub fn flip_frequencies(set: &TrialSet) -> Vec<f64> {
    let mut counts = vec![0u32; set.window_bits()];
    for change in &set.changes {
        for (i, &byte) in change.iter().enumerate() {
            let mut b = byte;
            while b != 0 {
                let lead = b.leading_zeros() as usize;
                counts[i * 8 + lead] += 1;
                b &= !(0x80 >> lead);
            }
        }
    }
    let t = set.trials() as f64;
    counts.into_iter().map(|c| c as f64 / t).collect()
}

pub fn strict_avalanche_score(set: &TrialSet) -> f64 {
    let p = flip_frequencies(set);
    if p.is_empty() {
        return 0.0;
    }
    let var = p.iter().map(|&pj| (pj - 0.5).powi(2)).sum::<f64>() / p.len() as f64;
    (1.0 - var.sqrt() / 0.5).max(0.0)
}

/// Absolute Pearson correlation between the change indicators of two bits;
/// 1 when either indicator is constant.
pub fn pair_correlation(set: &TrialSet, j: usize, k: usize) -> f64 {
    let t = set.trials() as f64;
    let (mut nj, mut nk, mut njk) = (0u64, 0u64, 0u64);
    for trial in 0..set.trials() {
        let a = set.changed(trial, j);
        let b = set.changed(trial, k);
        nj += a as u64;
        nk += b as u64;
        njk += (a && b) as u64;
    }
    let (nj, nk, njk) = (nj as f64, nk as f64, njk as f64);
    let var_j = nj * (t - nj);
    let var_k = nk * (t - nk);
    if var_j == 0.0 || var_k == 0.0 {
        return 1.0;
    }
    ((t * njk - nj * nk) / (var_j * var_k).sqrt())
        .abs()
        .min(1.0)
}

pub fn bit_independence_score(
    set: &TrialSet,
    pair_sample: usize,
    rng: &mut RandomSource,
) -> Result<f64> {
    let bits = set.window_bits();
    if bits < 2 {
        return Err(Error::InvalidArgument(
            "bit independence needs at least two output bits".into(),
        ));
    }
    if pair_sample == 0 {
        return Err(Error::InvalidArgument(
            "pair sample must be at least 1".into(),
        ));
    }
    let mut total = 0.0;
    for _ in 0..pair_sample {
        let j = rng.gen_range(0..bits);
        let mut k = rng.gen_range(0..bits - 1);
        if k >= j {
            k += 1;
        }
        total += pair_correlation(set, j, k);
    }
    Ok((1.0 - total / pair_sample as f64).max(0.0))
}

pub fn avalanche(
    adapter: &dyn CipherAdapter,
    plaintext: &[u8],
    trials: usize,
    rng: &mut RandomSource,
) -> Result<f64> {
    let set = collect_trials(adapter, plaintext, trials, KeyMode::default(), 0, rng)?;
    Ok(avalanche_score(&set))
}

pub fn strict_avalanche(
    adapter: &dyn CipherAdapter,
    plaintext: &[u8],
    trials: usize,
    rng: &mut RandomSource,
) -> Result<f64> {
    require_two(trials)?;
    let set = collect_trials(
        adapter,
        plaintext,
        trials,
        KeyMode::default(),
        DEFAULT_WINDOW_BYTES,
        rng,
    )?;
    Ok(strict_avalanche_score(&set))
}

pub fn bit_independence(
    adapter: &dyn CipherAdapter,
    plaintext: &[u8],
    trials: usize,
    pair_sample: usize,
    rng: &mut RandomSource,
) -> Result<f64> {
    require_two(trials)?;
    let set = collect_trials(
        adapter,
        plaintext,
        trials,
        KeyMode::default(),
        DEFAULT_WINDOW_BYTES,
        rng,
    )?;
    bit_independence_score(&set, pair_sample, rng)
}

fn require_two(trials: usize) -> Result<()> {
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    Ok(())
}

/// Byte-value frequency counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: [u64; 256],
}

impl Default for Histogram {
    fn default() -> Self {
        Self { counts: [0; 256] }
    }
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, data: &[u8]) {
        for &b in data {
            self.counts[b as usize] += 1;
        }
    }

    /// Shannon entropy in bits per byte.
    pub fn entropy(&self) -> f64 {
        let total = self.total() as f64;
        if total == 0.0 {
            return 0.0;
        }
        self.counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum()
    }
}

pub fn byte_histogram(data: &[u8]) -> Histogram {
    let mut h = Histogram::default();
    h.add(data);
    h
}

/// Chi-square of the encrypted distribution against the source one.
///
/// Encrypted counts are rescaled to the source total; byte values that never
/// occur in the source are skipped.
pub fn chi_square(source: &Histogram, encrypted: &Histogram) -> Result<f64> {
    let (src_total, enc_total) = (source.total(), encrypted.total());
    if src_total == 0 || enc_total == 0 {
        return Err(Error::EmptyInput);
    }
    let scale = src_total as f64 / enc_total as f64;
    Ok(source
        .counts
        .iter()
        .zip(&encrypted.counts)
        .filter(|(&s, _)| s > 0)
        .map(|(&s, &e)| {
            let expected = s as f64;
            let observed = e as f64 * scale;
            (observed - expected).powi(2) / expected
        })
        .sum())
}

/// Median wall-clock encrypt and decrypt times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub encrypt_s: f64,
    /// `None` when the adapter cannot decrypt.
    pub decrypt_s: Option<f64>,
    pub bytes: u64,
}

impl Timing {
    pub fn encrypt_throughput(&self) -> f64 {
        self.bytes as f64 / self.encrypt_s
    }

    pub fn decrypt_throughput(&self) -> Option<f64> {
        self.decrypt_s.map(|t| self.bytes as f64 / t)
    }
}

/// Times full-input encryption and decryption (output framing included, key
/// generation excluded) and reports the median of `repetitions` runs.
pub fn timing_bench_bytes(
    adapter: &dyn CipherAdapter,
    data: &[u8],
    repetitions: usize,
    rng: &mut RandomSource,
) -> Result<Timing> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument(
            "repetitions must be at least 1".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let key = adapter.keygen(data.len(), rng)?;
    let mut enc = Vec::with_capacity(repetitions);
    let mut dec = Vec::with_capacity(repetitions);
    let mut decrypt_supported = true;
    for _ in 0..repetitions {
        let start = Instant::now();
        let ct = adapter.encrypt(data, &key)?;
        enc.push(start.elapsed().as_secs_f64());

        if decrypt_supported {
            let start = Instant::now();
            match adapter.decrypt(&ct, &key) {
                Ok(plain) => {
                    dec.push(start.elapsed().as_secs_f64());
                    if plain != data {
                        return Err(Error::CorruptContainer(format!(
                            "{} did not round-trip",
                            adapter.name()
                        )));
                    }
                }
                Err(Error::Unsupported { .. }) => decrypt_supported = false,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Timing {
        encrypt_s: median(&mut enc),
        decrypt_s: decrypt_supported.then(|| median(&mut dec)),
        bytes: data.len() as u64,
    })
}

pub fn timing_bench(
    adapter: &dyn CipherAdapter,
    path: &Path,
    repetitions: usize,
    rng: &mut RandomSource,
) -> Result<Timing> {
    let data = std::fs::read(path)?;
    timing_bench_bytes(adapter, &data, repetitions, rng)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Settings for a full analysis run.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub trials: usize,
    pub pair_sample: usize,
    pub window_bytes: usize,
    pub key_mode: KeyMode,
    pub repetitions: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            trials: 128,
            pair_sample: DEFAULT_PAIR_SAMPLE,
            window_bytes: DEFAULT_WINDOW_BYTES,
            key_mode: KeyMode::Session,
            repetitions: 3,
        }
    }
}

/// Everything a report row needs, plus both histograms.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: MetricsReport,
    pub source_histogram: Histogram,
    pub cipher_histogram: Histogram,
}

/// Runs every estimator for one `(adapter, plaintext)` pair.
pub fn analyze(
    adapter: &dyn CipherAdapter,
    plaintext: &[u8],
    file_name: &str,
    options: &AnalysisOptions,
    rng: &mut RandomSource,
) -> Result<Analysis> {
    require_two(options.trials)?;
    let timing = timing_bench_bytes(adapter, plaintext, options.repetitions, rng)?;

    let key = adapter.keygen(plaintext.len(), rng)?;
    let ct = adapter.encrypt(plaintext, &key)?;
    let source_histogram = byte_histogram(plaintext);
    let cipher_histogram = byte_histogram(&ct[adapter.framing_len().min(ct.len())..]);
    let chi = chi_square(&source_histogram, &cipher_histogram)?;

    let set = collect_trials(
        adapter,
        plaintext,
        options.trials,
        options.key_mode,
        options.window_bytes,
        rng,
    )?;
    let bic = bit_independence_score(&set, options.pair_sample, rng)?;

    Ok(Analysis {
        report: MetricsReport {
            file_name: file_name.to_string(),
            file_size: plaintext.len() as u64,
            adapter: adapter.name().to_string(),
            encrypt_s: timing.encrypt_s,
            decrypt_s: timing.decrypt_s,
            avalanche: avalanche_score(&set),
            strict_avalanche: strict_avalanche_score(&set),
            bit_independence: bic,
            chi_square: chi,
            trials: options.trials,
            pair_sample: options.pair_sample,
            window_bytes: options.window_bytes,
            key_mode: options.key_mode,
        },
        source_histogram,
        cipher_histogram,
    })
}
