//! Trial archives, the synthetic class-conditional generator, and stratified
//! partitioning.
//!
//! Archive layout (little-endian):
//!
//! ```text
//! "EEGT" | version u32 = 1 | n_trials u32 | n_channels u32 | n_samples u32
//! labels: u16 × n_trials
//! data:   f64 × n_trials·n_channels·n_samples   (trial → channel → sample)
//! ```

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MpecError, Result};
use crate::features::Trial;
use crate::linalg::{apply_spectral, expm, SpdMatrix, Spectral, SymMatrix};
use crate::rng;

pub const ARCHIVE_MAGIC: [u8; 4] = *b"EEGT";
pub const ARCHIVE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 20;

/// Serializes trials sharing one shape into archive bytes.
pub fn encode_archive(trials: &[Trial]) -> Result<Vec<u8>> {
    let first = trials.first().ok_or(MpecError::EmptyInput("archive trials"))?;
    let (channels, samples) = (first.channels(), first.samples());
    if let Some(bad) = trials
        .iter()
        .find(|t| t.channels() != channels || t.samples() != samples)
    {
        return Err(MpecError::Shape(format!(
            "trial of shape {}x{} in an archive of {channels}x{samples}",
            bad.channels(),
            bad.samples()
        )));
    }
    let count = |v: usize| {
        u32::try_from(v).map_err(|_| MpecError::Shape(format!("{v} exceeds the u32 header field")))
    };
    let mut out = Vec::with_capacity(
        HEADER_LEN as usize + trials.len() * (2 + 8 * channels * samples),
    );
    out.extend_from_slice(&ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&count(trials.len())?.to_le_bytes());
    out.extend_from_slice(&count(channels)?.to_le_bytes());
    out.extend_from_slice(&count(samples)?.to_le_bytes());
    for t in trials {
        let label = u16::try_from(t.label).map_err(|_| MpecError::LabelOutOfRange {
            label: t.label as u64,
            limit: u16::MAX as u64 + 1,
        })?;
        out.extend_from_slice(&label.to_le_bytes());
    }
    for t in trials {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses archive bytes. Class ids must be below the trial count, since
/// dense ids `0..L` with `L ≤ n_trials` are the only valid labelling.
pub fn decode_archive(bytes: &[u8]) -> Result<Vec<Trial>> {
    let found = bytes.len() as u64;
    if found < 4 {
        return Err(MpecError::TruncatedFile { needed: HEADER_LEN, found });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != ARCHIVE_MAGIC {
        return Err(MpecError::BadMagic {
            found: magic,
            expected: ARCHIVE_MAGIC,
        });
    }
    if found < HEADER_LEN {
        return Err(MpecError::TruncatedFile { needed: HEADER_LEN, found });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != ARCHIVE_VERSION {
        return Err(MpecError::VersionUnsupported(version));
    }
    let (n_trials, channels, samples) = (word(8) as u64, word(12) as u64, word(16) as u64);
    if n_trials == 0 || channels == 0 {
        return Err(MpecError::EmptyInput("archive declares no trials or channels"));
    }
    if samples < 2 {
        return Err(MpecError::InsufficientSamples(samples as usize));
    }
    let values = n_trials * channels * samples;
    let needed = HEADER_LEN + 2 * n_trials + 8 * values;
    if found < needed {
        return Err(MpecError::TruncatedFile { needed, found });
    }
    if found > needed {
        return Err(MpecError::TrailingData(found - needed));
    }

    let label_at = HEADER_LEN as usize;
    let labels: Vec<usize> = (0..n_trials as usize)
        .map(|i| u16::from_le_bytes([bytes[label_at + 2 * i], bytes[label_at + 2 * i + 1]]) as usize)
        .collect();
    if let Some(&bad) = labels.iter().find(|&&l| l as u64 >= n_trials) {
        return Err(MpecError::LabelOutOfRange {
            label: bad as u64,
            limit: n_trials,
        });
    }
    let per_trial = (channels * samples) as usize;
    let data_at = label_at + 2 * n_trials as usize;
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let start = data_at + 8 * i * per_trial;
            let data = bytes[start..start + 8 * per_trial]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Trial::new(channels as usize, samples as usize, data, label)
        })
        .collect()
}

pub fn write_archive(trials: &[Trial], path: &Path) -> Result<()> {
    let bytes = encode_archive(trials)?;
    fs::write(path, bytes).map_err(|e| MpecError::io(path, e))
}

pub fn read_archive(path: &Path) -> Result<Vec<Trial>> {
    let bytes = fs::read(path).map_err(|e| MpecError::io(path, e))?;
    decode_archive(&bytes)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    file: String,
    label: usize,
}

/// Loads trials from a JSON manifest `[{"file": ..., "label": ...}]` whose
/// entries point at headerless CSV files, one row per channel. Relative paths
/// resolve against the manifest's directory.
pub fn read_csv_manifest(path: &Path) -> Result<Vec<Trial>> {
    let text = fs::read_to_string(path).map_err(|e| MpecError::io(path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| MpecError::InvalidConfig(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    entries
        .iter()
        .map(|entry| {
            let file = dir.join(&entry.file);
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .from_path(&file)
                .map_err(|e| csv_error(&file, e))?;
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for record in reader.records() {
                let record = record.map_err(|e| csv_error(&file, e))?;
                let row = record
                    .iter()
                    .map(|s| {
                        s.parse::<f64>().map_err(|e| {
                            MpecError::Shape(format!("{}: bad value {s:?}: {e}", file.display()))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
            let samples = rows.first().map_or(0, Vec::len);
            let channels = rows.len();
            Trial::new(channels, samples, rows.concat(), entry.label)
        })
        .collect()
}

fn csv_error(file: &Path, e: csv::Error) -> MpecError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => MpecError::io(file, io),
        other => MpecError::Shape(format!("{}: {other:?}", file.display())),
    }
}

/// Reads an archive, or a CSV manifest when the path ends in `.json`.
pub fn read_trials(path: &Path) -> Result<Vec<Trial>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_csv_manifest(path),
        _ => read_archive(path),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub trials_per_class: usize,
    pub channels: usize,
    pub samples: usize,
    /// Scales the log-domain spread between class covariances.
    pub separation: f64,
    /// Standard deviation of additive white noise.
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(MpecError::InvalidConfig("classes must be at least 2".into()));
        }
        if self.trials_per_class == 0 || self.channels == 0 {
            return Err(MpecError::InvalidConfig(
                "trials_per_class and channels must be positive".into(),
            ));
        }
        if self.samples < 2 {
            return Err(MpecError::InvalidConfig("samples must be at least 2".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) || !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(MpecError::InvalidConfig("separation and noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub trials: Vec<Trial>,
    /// Ground-truth source covariance per class (before additive noise).
    pub class_covariances: Vec<SpdMatrix>,
}

/// Class `c` draws zero-mean Gaussian samples with covariance
/// `Σ_c = exp(separation · S_c)` for a random symmetric `S_c` of unit
/// Frobenius norm, plus white noise. Trials are emitted class by class.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let n = cfg.channels;
    let mut class_covariances = Vec::with_capacity(cfg.classes);
    let mut factors = Vec::with_capacity(cfg.classes);
    for c in 0..cfg.classes {
        let mut r = rng::rng_for(cfg.seed, &[u64::MAX, c as u64]);
        let raw: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut r)).collect();
        let s = SymMatrix::new(n, raw)?;
        let norm = s.frobenius_norm();
        let s = if norm > 0.0 { s.scale(1.0 / norm) } else { s };
        let sigma = expm(&s.scale(cfg.separation))?;
        factors.push(apply_spectral(&sigma, Spectral::Sqrt)?);
        class_covariances.push(sigma);
    }

    let mut trials = Vec::with_capacity(cfg.classes * cfg.trials_per_class);
    for (c, factor) in factors.iter().enumerate() {
        for i in 0..cfg.trials_per_class {
            let mut r = rng::rng_for(cfg.seed, &[c as u64, i as u64]);
            let mut data = vec![0.0; n * cfg.samples];
            let mut z = vec![0.0; n];
            for t in 0..cfg.samples {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut r);
                }
                for ch in 0..n {
                    let mixed: f64 = (0..n).map(|k| factor.get(ch, k) * z[k]).sum();
                    let noise: f64 = StandardNormal.sample(&mut r);
                    data[ch * cfg.samples + t] = mixed + cfg.noise * noise;
                }
            }
            trials.push(Trial::new(n, cfg.samples, data, c)?);
        }
    }
    Ok(SynthDataset {
        trials,
        class_covariances,
    })
}

/// Index partition of a trial list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn select<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
        idx.iter().map(|&i| items[i].clone()).collect()
    }
}

fn by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

/// Stratified train/test split. Each class contributes `round(ratio·n_c)`
/// trials to the training side, kept within `1..n_c`.
pub fn split_labels(labels: &[usize], ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(MpecError::InvalidConfig(format!("split ratio {ratio} outside (0, 1)")));
    }
    if labels.is_empty() {
        return Err(MpecError::EmptyInput("split labels"));
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut members) in by_class(labels).into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(MpecError::Stratify {
                class,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng::rng_for(seed, &[0x5711, class as u64]));
        let take = ((ratio * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        split.train.extend_from_slice(&members[..take]);
        split.test.extend_from_slice(&members[take..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

pub fn split(trials: &[Trial], ratio: f64, seed: u64) -> Result<Split> {
    let labels: Vec<usize> = trials.iter().map(|t| t.label).collect();
    split_labels(&labels, ratio, seed)
}

/// Stratified K-fold assignment: returns the held-out indices of each fold.
/// Classes are dealt round-robin with a running offset so fold sizes differ
/// by at most one.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > labels.len() {
        return Err(MpecError::InvalidConfig(format!(
            "{folds} folds for {} items",
            labels.len()
        )));
    }
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for (class, mut members) in by_class(labels).into_iter().enumerate() {
        let count = members.len();
        members.shuffle(&mut rng::rng_for(seed, &[0xf01d, class as u64]));
        for (i, m) in members.into_iter().enumerate() {
            out[(offset + i) % folds].push(m);
        }
        offset = (offset + count) % folds;
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(classes: usize, per_class: usize) -> Vec<Trial> {
        (0..classes * per_class)
            .map(|i| Trial::new(2, 3, vec![i as f64, 1.0, 2.0, -1.0, 0.5, 0.25], i / per_class).unwrap())
            .collect()
    }

    #[test]
    fn archive_round_trip_is_exact() {
        let trials = toy(3, 2);
        let bytes = encode_archive(&trials).unwrap();
        assert_eq!(bytes.len(), 20 + 2 * 6 + 8 * 6 * 6);
        let back = decode_archive(&bytes).unwrap();
        assert_eq!(back, trials);
        assert_eq!(encode_archive(&back).unwrap(), bytes);
    }

    #[test]
    fn archive_errors() {
        let bytes = encode_archive(&toy(2, 2)).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_archive(&bad), Err(MpecError::BadMagic { .. })));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_archive(&bad), Err(MpecError::VersionUnsupported(2))));

        let mut bad = bytes.clone();
        bad[8] = 9; // declare 9 trials
        assert!(matches!(decode_archive(&bad), Err(MpecError::TruncatedFile { .. })));

        assert!(matches!(decode_archive(&bytes[..10]), Err(MpecError::TruncatedFile { .. })));
        assert!(matches!(
            decode_archive(&bytes[..bytes.len() - 1]),
            Err(MpecError::TruncatedFile { .. })
        ));

        let mut bad = bytes.clone();
        bad[20] = 7; // label 7 with 4 trials
        assert!(matches!(decode_archive(&bad), Err(MpecError::LabelOutOfRange { .. })));

        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(decode_archive(&bad), Err(MpecError::TrailingData(1))));
    }

    #[test]
    fn split_examples() {
        let trials = toy(4, 10);
        let s = split(&trials, 0.8, 3).unwrap();
        for c in 0..4 {
            assert_eq!(s.train.iter().filter(|&&i| trials[i].label == c).count(), 8);
            assert_eq!(s.test.iter().filter(|&&i| trials[i].label == c).count(), 2);
        }
        let s2 = split(&toy(3, 2), 0.5, 1).unwrap();
        assert_eq!(s2.train.len(), 3);
        assert_eq!(s2.test.len(), 3);

        assert_eq!(split(&trials, 0.8, 3).unwrap(), s);
        let other = split(&trials, 0.8, 4).unwrap();
        assert_ne!(other, s);
        assert_eq!(other.train.len(), s.train.len());

        assert!(matches!(split(&toy(2, 1), 0.5, 0), Err(MpecError::Stratify { .. })));
        assert!(split(&trials, 1.0, 0).is_err());
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<usize> = (0..23).map(|i| i % 3).collect();
        let folds = stratified_folds(&labels, 5, 9).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
    }

    #[test]
    fn synth_counts_and_determinism() {
        let cfg = SynthConfig {
            classes: 3,
            trials_per_class: 1,
            channels: 3,
            samples: 20,
            separation: 1.0,
            noise: 0.1,
            seed: 5,
        };
        let a = synth_dataset(&cfg).unwrap();
        assert_eq!(a.trials.len(), 3);
        assert_eq!(a.trials.iter().map(|t| t.label).collect::<Vec<_>>(), vec![0, 1, 2]);
        let b = synth_dataset(&cfg).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.class_covariances.len(), 3);
    }
}
