use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Manifest;
use crate::error::{Error, Result};

/// Train / validation / test proportions of the evaluation protocol.
pub const SPLIT_RATIOS: (f64, f64, f64) = (0.40, 0.20, 0.40);

/// Deterministic partition of a manifest into train/validation/test ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl SplitAssignment {
    pub fn lookup(&self, id: &str) -> Option<SplitName> {
        if self.train.iter().any(|x| x == id) {
            Some(SplitName::Train)
        } else if self.validation.iter().any(|x| x == id) {
            Some(SplitName::Validation)
        } else if self.test.iter().any(|x| x == id) {
            Some(SplitName::Test)
        } else {
            None
        }
    }
}

/// Shuffles the manifest ids with a seeded generator and partitions them
/// 40/20/40. Train and validation counts round to nearest; test takes the
/// remainder, so the three sets always cover the manifest exactly.
pub fn make_splits(
    manifest: &Manifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadRatios([ratios.0, ratios.1, ratios.2]));
    }
    let n = manifest.len();
    if n < 3 {
        return Err(Error::TooFewSamples(n));
    }
    let mut ids: Vec<String> = manifest.iter().map(|s| s.id.clone()).collect();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n_train = (ratios.0 * n as f64).round() as usize;
    let n_val = (ratios.1 * n as f64).round() as usize;
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Ok(SplitAssignment {
        train: ids,
        validation,
        test,
        seed,
    })
}

/// Line-oriented split manifest: a header with seed and ratios, then one
/// `id<TAB>split<TAB>sensor` line per sample in id order.
pub fn write_split_file(
    split: &SplitAssignment,
    manifest: &Manifest,
    ratios: (f64, f64, f64),
    path: &Path,
) -> Result<()> {
    let sensors: BTreeMap<&str, &str> = manifest
        .iter()
        .map(|s| (s.id.as_str(), s.sensor.as_str()))
        .collect();
    let mut rows: Vec<(String, &'static str)> = Vec::new();
    for (ids, name) in [
        (&split.train, SplitName::Train),
        (&split.validation, SplitName::Validation),
        (&split.test, SplitName::Test),
    ] {
        for id in ids {
            rows.push((id.clone(), name.as_str()));
        }
    }
    rows.sort();
    let mut out = format!(
        "# seed={} ratios={:.2}/{:.2}/{:.2}\n",
        split.seed, ratios.0, ratios.1, ratios.2
    );
    for (id, name) in rows {
        let sensor = sensors.get(id.as_str()).copied().unwrap_or("-");
        out.push_str(&format!("{id}\t{name}\t{sensor}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_split_file(path: &Path) -> Result<SplitAssignment> {
    let text = std::fs::read_to_string(path)?;
    let mut seed = 0u64;
    let mut split = SplitAssignment {
        train: vec![],
        validation: vec![],
        test: vec![],
        seed: 0,
    };
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("seed=") {
                    seed = v
                        .parse()
                        .map_err(|_| Error::Other(format!("bad seed in split header: {v}")))?;
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::Other(format!("malformed split line: {line}")));
        }
        match fields[1] {
            "train" => split.train.push(fields[0].to_string()),
            "validation" => split.validation.push(fields[0].to_string()),
            "test" => split.test.push(fields[0].to_string()),
            other => return Err(Error::Other(format!("unknown split name `{other}`"))),
        }
    }
    split.seed = seed;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ImageSample, SensorTag};
    use std::collections::BTreeSet;

    fn fake_manifest(n: usize) -> Manifest {
        (0..n)
            .map(|i| ImageSample {
                id: format!("img_{i:04}"),
                image_path: format!("img_{i:04}.png").into(),
                mask_path: None,
                sensor: SensorTag::UbirisV2,
                original_size: (400, 300),
            })
            .collect()
    }

    #[test]
    fn counts_forced_by_protocol() {
        let split = make_splits(&fake_manifest(500), SPLIT_RATIOS, 1).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (200, 100, 200)
        );
        let split = make_splits(&fake_manifest(1000), SPLIT_RATIOS, 1).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (400, 200, 400)
        );
    }

    #[test]
    fn same_seed_same_split_different_seed_same_sizes() {
        let m = fake_manifest(7);
        let a = make_splits(&m, SPLIT_RATIOS, 1).unwrap();
        let b = make_splits(&m, SPLIT_RATIOS, 1).unwrap();
        assert_eq!(a, b);
        let c = make_splits(&m, SPLIT_RATIOS, 2).unwrap();
        assert_eq!(
            (c.train.len(), c.validation.len(), c.test.len()),
            (3, 1, 3)
        );
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn partition_covers_manifest_disjointly() {
        let m = fake_manifest(137);
        let s = make_splits(&m, SPLIT_RATIOS, 9).unwrap();
        let all: BTreeSet<_> = s
            .train
            .iter()
            .chain(&s.validation)
            .chain(&s.test)
            .cloned()
            .collect();
        assert_eq!(all.len(), 137);
        assert_eq!(
            s.train.len() + s.validation.len() + s.test.len(),
            137,
            "no duplicates across splits"
        );
    }

    #[test]
    fn bad_inputs_are_fatal() {
        let m = fake_manifest(10);
        assert!(make_splits(&m, (0.5, 0.2, 0.4), 1).is_err());
        assert!(make_splits(&fake_manifest(2), SPLIT_RATIOS, 1).is_err());
    }

    #[test]
    fn split_file_round_trip() {
        let m = fake_manifest(10);
        let s = make_splits(&m, SPLIT_RATIOS, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.tsv");
        write_split_file(&s, &m, SPLIT_RATIOS, &path).unwrap();
        let r = read_split_file(&path).unwrap();
        assert_eq!(r.seed, 42);
        assert_eq!(
            r.train.iter().collect::<BTreeSet<_>>(),
            s.train.iter().collect::<BTreeSet<_>>()
        );
        assert_eq!(
            r.test.iter().collect::<BTreeSet<_>>(),
            s.test.iter().collect::<BTreeSet<_>>()
        );
    }
}
