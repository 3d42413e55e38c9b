//! Seeded synthetic corpus generator: random-byte files with planted
//! string patterns whose class-conditional structure gives the learners
//! something to find, plus dense side features and a ground-truth plant
//! log for cross-checking the scanner.
//!
//! The planted catalog is organized into motifs rather than independent
//! coin flips, because independent features would make every selector and
//! learner equivalent:
//!   - family blocks whose members co-occur in malware but appear solo in
//!     benign files (conjunction signal),
//!   - dual-use pairs that are individually common in both classes but
//!     fire together mostly in malware (super-additive interaction),
//!   - redundancy clusters whose members always co-occur (selector
//!     differentiation: ranking by per-feature accuracy double-counts
//!     them, an L1 path does not),
//!   - pure noise planted at equal rates in both classes.
//!
//! `plant_rate_malware` and `plant_rate_benign` act as global intensity
//! knobs: every class-conditional probability scales linearly with them,
//! so `plant_rate_benign = 0` silences every benign plant.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dataset::{CorpusManifest, SampleRecord, Split};
use crate::error::{Error, Result};

const PATTERN_LEN: usize = 10;
const PLANT_SLOT: usize = 16;
const STRINGS_PER_RULE: usize = 25;
const TRAIN_FRACTION: f64 = 0.75;

/// Reference rates the intensity knobs are normalized against.
const BASE_RATE_MALWARE: f64 = 0.30;
const BASE_RATE_BENIGN: f64 = 0.08;

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub n_benign: usize,
    pub n_malware: usize,
    /// Inclusive byte-size range for generated files.
    pub size_range: (usize, usize),
    pub n_patterns: usize,
    pub plant_rate_malware: f64,
    pub plant_rate_benign: f64,
    pub n_signal_side: usize,
    pub n_noise_side: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_benign: 1000,
            n_malware: 1000,
            size_range: (4096, 16384),
            n_patterns: 500,
            plant_rate_malware: 0.30,
            plant_rate_benign: 0.08,
            n_signal_side: 6,
            n_noise_side: 10,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_benign == 0 || self.n_malware == 0 {
            return Err(Error::Validation("need files in both classes".into()));
        }
        if self.n_patterns < 32 {
            return Err(Error::Validation(
                "need at least 32 patterns to lay out the motif blocks".into(),
            ));
        }
        if self.n_signal_side == 0 {
            return Err(Error::Validation("need at least one signal side column".into()));
        }
        let (lo, hi) = self.size_range;
        if lo < 2048 || hi < lo {
            return Err(Error::Validation(format!(
                "file size range {lo}..={hi} must start at 2048 or more"
            )));
        }
        if !(self.plant_rate_malware > 0.0 && self.plant_rate_malware <= 0.7) {
            return Err(Error::Validation(
                "plant_rate_malware must be in (0, 0.7]".into(),
            ));
        }
        if !(self.plant_rate_benign >= 0.0 && self.plant_rate_benign < self.plant_rate_malware) {
            return Err(Error::Validation(
                "plant_rate_benign must be nonnegative and below plant_rate_malware".into(),
            ));
        }
        Ok(())
    }
}

/// Paths of everything the generator wrote.
#[derive(Clone, Debug)]
pub struct SyntheticOutput {
    pub manifest_path: PathBuf,
    pub rules_dir: PathBuf,
    pub side_path: PathBuf,
    pub truth_path: PathBuf,
    pub n_files: usize,
    pub n_patterns: usize,
}

/// How the catalog indices are carved into motif blocks.
struct MotifLayout {
    families: Vec<Vec<usize>>,
    pairs: Vec<(usize, usize)>,
    clusters: Vec<Vec<usize>>,
    noise: Vec<usize>,
}

impl MotifLayout {
    fn carve(n_patterns: usize) -> Self {
        let n_families = ((n_patterns as f64 * 0.16 / 8.0).round() as usize).max(1);
        let n_pairs = ((n_patterns as f64 * 0.024 / 2.0).round() as usize).max(1);
        let n_clusters = ((n_patterns as f64 * 0.24 / 8.0).round() as usize).max(1);
        let mut next = 0usize;
        let mut take = |k: usize| {
            let block: Vec<usize> = (next..next + k).collect();
            next += k;
            block
        };
        let families: Vec<Vec<usize>> = (0..n_families).map(|_| take(8)).collect();
        let pairs: Vec<(usize, usize)> = (0..n_pairs)
            .map(|_| {
                let b = take(2);
                (b[0], b[1])
            })
            .collect();
        let clusters: Vec<Vec<usize>> = (0..n_clusters).map(|_| take(8)).collect();
        let noise: Vec<usize> = (next..n_patterns).collect();
        MotifLayout {
            families,
            pairs,
            clusters,
            noise,
        }
    }
}

/// Class-conditional plant probabilities, all scaled by the intensity knobs.
struct PlantModel {
    family_express_m: f64,
    family_member_keep: f64,
    family_solo_b: f64,
    pair_both_m: f64,
    pair_only_m: f64,
    pair_both_b: f64,
    pair_only_b: f64,
    cluster_act_m: Vec<f64>,
    cluster_act_b: Vec<f64>,
    cluster_member_keep: f64,
    noise_rate: f64,
}

impl PlantModel {
    fn build(spec: &SyntheticSpec, n_clusters: usize) -> Self {
        let rm = spec.plant_rate_malware / BASE_RATE_MALWARE;
        let rb = spec.plant_rate_benign / BASE_RATE_BENIGN;
        let cap = |p: f64| p.min(0.95);
        let span = (n_clusters.max(2) - 1) as f64;
        let cluster_act_m: Vec<f64> = (0..n_clusters)
            .map(|c| cap((0.12 + 0.28 * c as f64 / span) * rm))
            .collect();
        let cluster_act_b: Vec<f64> = (0..n_clusters)
            .map(|c| cap((0.032 + 0.075 * c as f64 / span) * rb))
            .collect();
        PlantModel {
            family_express_m: cap(0.22 * rm),
            family_member_keep: 0.92,
            family_solo_b: cap(0.06 * rb),
            pair_both_m: cap(0.20 * rm),
            pair_only_m: cap(0.10 * rm),
            pair_both_b: cap(0.025 * rb),
            pair_only_b: cap(0.14 * rb),
            cluster_act_m,
            cluster_act_b,
            cluster_member_keep: 0.95,
            noise_rate: cap(0.02 * rb),
        }
    }

    /// Pattern indices planted into one file, in catalog order.
    fn draw(&self, layout: &MotifLayout, malware: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::new();
        for fam in &layout.families {
            if malware {
                if rng.gen_bool(self.family_express_m) {
                    for &p in fam {
                        if rng.gen_bool(self.family_member_keep) {
                            out.push(p);
                        }
                    }
                }
            } else {
                for &p in fam {
                    if rng.gen_bool(self.family_solo_b) {
                        out.push(p);
                    }
                }
            }
        }
        for &(a, b) in &layout.pairs {
            let (p_both, p_only) = if malware {
                (self.pair_both_m, self.pair_only_m)
            } else {
                (self.pair_both_b, self.pair_only_b)
            };
            let roll: f64 = rng.gen();
            if roll < p_both {
                out.push(a);
                out.push(b);
            } else if roll < p_both + p_only {
                out.push(a);
            } else if roll < p_both + 2.0 * p_only {
                out.push(b);
            }
        }
        let acts = if malware {
            &self.cluster_act_m
        } else {
            &self.cluster_act_b
        };
        for (cluster, &act) in layout.clusters.iter().zip(acts) {
            if act > 0.0 && rng.gen_bool(act) {
                for &p in cluster {
                    if rng.gen_bool(self.cluster_member_keep) {
                        out.push(p);
                    }
                }
            }
        }
        for &p in &layout.noise {
            if self.noise_rate > 0.0 && rng.gen_bool(self.noise_rate) {
                out.push(p);
            }
        }
        out
    }
}

/// Distinct seeded RNG per (stream, index) so each artifact's bytes are
/// independent of generation order.
fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

const STREAM_PATTERNS: u64 = 0;
const STREAM_BENIGN: u64 = 1;
const STREAM_MALWARE: u64 = 2;
const STREAM_SIDE: u64 = 3;
const STREAM_SPLIT: u64 = 4;

fn random_patterns(n: usize, seed: u64) -> Vec<String> {
    let mut rng = stream_rng(seed, STREAM_PATTERNS, 0);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s: String = (0..PATTERN_LEN)
            .map(|_| rng.sample(rand::distributions::Alphanumeric) as char)
            .collect();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

#[derive(Serialize)]
struct PlantRecord<'a> {
    p: &'a str,
    at: usize,
}

#[derive(Serialize)]
struct TruthRecord<'a> {
    key: &'a str,
    label: u8,
    plants: Vec<PlantRecord<'a>>,
}

/// Writes one file of random bytes with the chosen patterns planted at
/// non-overlapping slot offsets; returns (pattern index, offset) pairs.
fn write_corpus_file(
    path: &Path,
    spec: &SyntheticSpec,
    patterns: &[String],
    planted: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let (lo, hi) = spec.size_range;
    let len = rng.gen_range(lo..=hi);
    let mut data = vec![0u8; len];
    rng.fill(data.as_mut_slice());

    let slots = len / PLANT_SLOT;
    if planted.len() > slots {
        return Err(Error::Validation(format!(
            "{} plants need more than {} slots; enlarge size_range",
            planted.len(),
            slots
        )));
    }
    let chosen = rand::seq::index::sample(rng, slots, planted.len());
    let mut offsets = Vec::with_capacity(planted.len());
    for (&p, slot) in planted.iter().zip(chosen.iter()) {
        let jitter = rng.gen_range(0..=PLANT_SLOT - PATTERN_LEN);
        let at = slot * PLANT_SLOT + jitter;
        data[at..at + PATTERN_LEN].copy_from_slice(patterns[p].as_bytes());
        offsets.push((p, at));
    }
    offsets.sort_unstable_by_key(|&(_, at)| at);
    std::fs::write(path, &data).map_err(|e| Error::io(path, e))?;
    Ok(offsets)
}

fn write_rules(dir: &Path, patterns: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (r, chunk) in patterns.chunks(STRINGS_PER_RULE).enumerate() {
        let mut text = format!("rule synth_block_{r:02}\n{{\n    strings:\n");
        for (j, pat) in chunk.iter().enumerate() {
            let idx = r * STRINGS_PER_RULE + j;
            text.push_str(&format!("        $s{idx:03} = \"{pat}\"\n"));
        }
        text.push_str("    condition:\n        any of them\n}\n");
        let path = dir.join(format!("synth_{r:02}.yar"));
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Stratified train/test assignment, shuffled per class.
fn assign_splits(n: usize, class_stream: u64, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, STREAM_SPLIT, class_stream);
    order.shuffle(&mut rng);
    let n_train = ((n as f64) * TRAIN_FRACTION).round() as usize;
    let mut splits = vec![Split::Test; n];
    for &i in order.iter().take(n_train) {
        splits[i] = Split::Train;
    }
    splits
}

pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<SyntheticOutput> {
    spec.validate()?;
    let files_dir = out_dir.join("files");
    std::fs::create_dir_all(&files_dir).map_err(|e| Error::io(&files_dir, e))?;

    let patterns = random_patterns(spec.n_patterns, spec.seed);
    let layout = MotifLayout::carve(spec.n_patterns);
    let model = PlantModel::build(spec, layout.clusters.len());

    let rules_dir = out_dir.join("rules");
    write_rules(&rules_dir, &patterns)?;

    let benign_splits = assign_splits(spec.n_benign, 0, spec.seed);
    let malware_splits = assign_splits(spec.n_malware, 1, spec.seed);

    let truth_path = out_dir.join("truth.jsonl");
    let mut truth = std::io::BufWriter::new(
        std::fs::File::create(&truth_path).map_err(|e| Error::io(&truth_path, e))?,
    );

    let mut records = Vec::with_capacity(spec.n_benign + spec.n_malware);
    let classes = [
        (0u8, spec.n_benign, STREAM_BENIGN, "b", &benign_splits),
        (1u8, spec.n_malware, STREAM_MALWARE, "m", &malware_splits),
    ];
    for &(label, count, stream, prefix, splits) in &classes {
        for i in 0..count {
            let key = format!("{prefix}{i:04}");
            let rel = format!("files/{key}.bin");
            let mut rng = stream_rng(spec.seed, stream, i as u64);
            let planted = model.draw(&layout, label == 1, &mut rng);
            let offsets =
                write_corpus_file(&out_dir.join(&rel), spec, &patterns, &planted, &mut rng)?;
            let rec = TruthRecord {
                key: &key,
                label,
                plants: offsets
                    .iter()
                    .map(|&(p, at)| PlantRecord {
                        p: &patterns[p],
                        at,
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut truth, &rec)
                .map_err(|e| Error::io(&truth_path, e.into()))?;
            truth
                .write_all(b"\n")
                .map_err(|e| Error::io(&truth_path, e))?;
            records.push(SampleRecord {
                key,
                path: PathBuf::from(rel),
                label,
                split: splits[i],
            });
        }
    }
    truth.flush().map_err(|e| Error::io(&truth_path, e))?;

    let manifest = CorpusManifest { records };
    let manifest_path = out_dir.join("manifest.csv");
    manifest.save(&manifest_path)?;

    let side_path = out_dir.join("side.csv");
    write_side_features(&side_path, spec, &manifest)?;

    Ok(SyntheticOutput {
        manifest_path,
        rules_dir,
        side_path,
        truth_path,
        n_files: manifest.len(),
        n_patterns: spec.n_patterns,
    })
}

/// Noise columns are standard normal in both classes; signal column j gets
/// a mean shift between 0.4 and 0.8 standard deviations on malware rows.
fn write_side_features(
    path: &Path,
    spec: &SyntheticSpec,
    manifest: &CorpusManifest,
) -> Result<()> {
    let shifts: Vec<f64> = (0..spec.n_signal_side)
        .map(|j| 0.4 + 0.4 * j as f64 / (spec.n_signal_side.max(2) - 1) as f64)
        .collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut header = vec!["key".to_string()];
    header.extend((0..spec.n_noise_side).map(|j| format!("nz{j:02}")));
    header.extend((0..spec.n_signal_side).map(|j| format!("sig{j}")));
    w.write_record(&header)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;

    for (i, rec) in manifest.records.iter().enumerate() {
        let mut rng = stream_rng(spec.seed, STREAM_SIDE, i as u64);
        let mut row = vec![rec.key.clone()];
        for _ in 0..spec.n_noise_side {
            let v: f64 = rng.sample(StandardNormal);
            row.push(format!("{v}"));
        }
        for &shift in &shifts {
            let base: f64 = rng.sample(StandardNormal);
            let v = base + shift * rec.label as f64;
            row.push(format!("{v}"));
        }
        w.write_record(&row)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
