//! Corpus scanning: compile the catalog into a multi-pattern matcher and
//! record which sub-signatures occur in which files.
//!
//! Matching is presence-only (a feature either fires in a file or it does
//! not), so the scanner runs one failure-link automaton pass per case class
//! and verifies candidates at the match site:
//!
//! - `TEXT` patterns match their raw bytes; `WIDE` adds the UTF-16LE
//!   interleaved form (`ASCII` keeps the raw form alongside it), and `NOCASE`
//!   routes the pattern to a byte-wise ASCII-case-insensitive automaton.
//! - `HEX_WILD` patterns are anchored on their longest fully fixed run and
//!   the surrounding bytes are verified under the nibble mask.
//! - `FULLWORD` requires the byte before and after a match to be absent
//!   (file boundary) or not an ASCII alphanumeric.
//!
//! Files are streamed in fixed-size windows. Consecutive windows share
//! enough overlap that every potential match, plus the one byte of context a
//! FULLWORD check needs on each side, is fully visible in at least one
//! window; matches touching a window edge with unknown context are deferred
//! to the window that sees them whole. The fired set is therefore identical
//! for any chunk size at least as large as the longest pattern span.

mod matrix;

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::time::Instant;

use aho_corasick::{AhoCorasick, MatchKind};

use crate::dataset::CorpusManifest;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::harvest::{SigKind, SignatureCatalog};

pub use matrix::{
    load_matrix, save_matrix, sidecar_path, OccurrenceMatrix, MATRIX_MAGIC, MATRIX_VERSION,
};

pub const DEFAULT_CHUNK_SIZE: usize = 4 << 20;

#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    pub chunk_size: usize,
    pub exec: Execution,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            chunk_size: DEFAULT_CHUNK_SIZE,
            exec: Execution::default(),
        }
    }
}

enum Check {
    /// The automaton pattern is the whole match.
    Exact,
    /// The automaton pattern is an anchor inside a masked byte pattern.
    Masked {
        pattern: Vec<u8>,
        mask: Vec<u8>,
        anchor_offset: usize,
    },
}

struct Verifier {
    feature: u32,
    fullword: bool,
    check: Check,
}

struct Engine {
    ac: AhoCorasick,
    /// Verifiers per automaton pattern id.
    verifiers: Vec<Vec<Verifier>>,
}

struct EngineBuilder {
    case_insensitive: bool,
    patterns: Vec<Vec<u8>>,
    verifiers: Vec<Vec<Verifier>>,
    dedup: HashMap<Vec<u8>, usize>,
}

impl EngineBuilder {
    fn new(case_insensitive: bool) -> Self {
        EngineBuilder {
            case_insensitive,
            patterns: Vec::new(),
            verifiers: Vec::new(),
            dedup: HashMap::new(),
        }
    }

    fn add(&mut self, pattern: Vec<u8>, verifier: Verifier) {
        // Case-insensitive patterns that differ only by case share a slot.
        let key = if self.case_insensitive {
            pattern.to_ascii_lowercase()
        } else {
            pattern.clone()
        };
        let idx = *self.dedup.entry(key).or_insert_with(|| {
            self.patterns.push(pattern);
            self.verifiers.push(Vec::new());
            self.patterns.len() - 1
        });
        self.verifiers[idx].push(verifier);
    }

    fn build(self) -> Result<Option<Engine>> {
        if self.patterns.is_empty() {
            return Ok(None);
        }
        let ac = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .ascii_case_insensitive(self.case_insensitive)
            .build(&self.patterns)
            .map_err(|e| Error::Validation(format!("automaton build failed: {e}")))?;
        Ok(Some(Engine {
            ac,
            verifiers: self.verifiers,
        }))
    }
}

pub struct PatternAutomaton {
    engines: Vec<Engine>,
    n_features: usize,
    col_ids: Vec<u64>,
    max_span: usize,
    overlap: usize,
}

/// Compiles the catalog into matching engines. Column `j` of every scan
/// result corresponds to `catalog.entries()[j]`.
pub fn compile(catalog: &SignatureCatalog) -> Result<PatternAutomaton> {
    let mut cs = EngineBuilder::new(false);
    let mut ci = EngineBuilder::new(true);
    let mut max_span = 1usize;
    let mut has_fullword = false;

    for (feat, entry) in catalog.entries().iter().enumerate() {
        let feature = feat as u32;
        if entry.pattern_bytes.is_empty() {
            return Err(Error::Validation(format!(
                "catalog entry {:016x} has an empty pattern",
                entry.id
            )));
        }
        match entry.kind {
            SigKind::Text => {
                let m = entry.modifiers;
                has_fullword |= m.fullword;
                let engine = if m.nocase { &mut ci } else { &mut cs };
                let mut variants: Vec<Vec<u8>> = Vec::new();
                if !m.wide || m.ascii {
                    variants.push(entry.pattern_bytes.clone());
                }
                if m.wide {
                    variants.push(widen(&entry.pattern_bytes));
                }
                for v in variants {
                    max_span = max_span.max(v.len());
                    engine.add(
                        v,
                        Verifier {
                            feature,
                            fullword: m.fullword,
                            check: Check::Exact,
                        },
                    );
                }
            }
            SigKind::HexFixed => {
                max_span = max_span.max(entry.pattern_bytes.len());
                cs.add(
                    entry.pattern_bytes.clone(),
                    Verifier {
                        feature,
                        fullword: false,
                        check: Check::Exact,
                    },
                );
            }
            SigKind::HexWild => {
                let mask = match &entry.mask_bytes {
                    Some(m) if m.len() == entry.pattern_bytes.len() => m.clone(),
                    Some(_) => {
                        return Err(Error::Validation(format!(
                            "catalog entry {:016x} has a mask length mismatch",
                            entry.id
                        )))
                    }
                    // No mask stored: every byte is fixed.
                    None => vec![0xFF; entry.pattern_bytes.len()],
                };
                let (off, len) = longest_fixed_run(&mask);
                if len == 0 {
                    return Err(Error::NoFixedBytes { id: entry.id });
                }
                max_span = max_span.max(entry.pattern_bytes.len());
                let anchor = entry.pattern_bytes[off..off + len].to_vec();
                cs.add(
                    anchor,
                    Verifier {
                        feature,
                        fullword: false,
                        check: Check::Masked {
                            pattern: entry.pattern_bytes.clone(),
                            mask,
                            anchor_offset: off,
                        },
                    },
                );
            }
        }
    }

    let mut engines = Vec::new();
    if let Some(e) = cs.build()? {
        engines.push(e);
    }
    if let Some(e) = ci.build()? {
        engines.push(e);
    }
    // Plain matches need max_span - 1 bytes of carry to be seen whole in
    // some window; FULLWORD matches need one byte of real context on each
    // side as well.
    let overlap = if has_fullword {
        max_span + 1
    } else {
        max_span.saturating_sub(1)
    };
    Ok(PatternAutomaton {
        engines,
        n_features: catalog.len(),
        col_ids: catalog.ids(),
        max_span,
        overlap,
    })
}

/// UTF-16LE form of an ASCII/raw byte pattern: each byte followed by 0x00.
fn widen(pattern: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(pattern.len() * 2);
    for &b in pattern {
        out.push(b);
        out.push(0);
    }
    out
}

/// Longest run of fully fixed bytes (mask 0xFF); leftmost on ties.
fn longest_fixed_run(mask: &[u8]) -> (usize, usize) {
    let mut best = (0usize, 0usize);
    let mut start = 0usize;
    let mut len = 0usize;
    for (i, &m) in mask.iter().enumerate() {
        if m == 0xFF {
            if len == 0 {
                start = i;
            }
            len += 1;
            if len > best.1 {
                best = (start, len);
            }
        } else {
            len = 0;
        }
    }
    best
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric()
}

struct FiredSet {
    hit: Vec<bool>,
    count: usize,
}

impl FiredSet {
    fn new(n: usize) -> Self {
        FiredSet {
            hit: vec![false; n],
            count: 0,
        }
    }

    fn set(&mut self, feature: u32) {
        let f = feature as usize;
        if !self.hit[f] {
            self.hit[f] = true;
            self.count += 1;
        }
    }

    fn full(&self, n: usize) -> bool {
        self.count == n
    }

    fn into_sorted(self) -> Vec<u32> {
        self.hit
            .iter()
            .enumerate()
            .filter_map(|(i, &h)| h.then_some(i as u32))
            .collect()
    }
}

#[derive(Debug)]
pub struct FileScan {
    pub fired: Vec<u32>,
    pub bytes: u64,
}

impl PatternAutomaton {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn col_ids(&self) -> &[u64] {
        &self.col_ids
    }

    /// Longest possible match span in bytes; the minimum legal chunk size.
    pub fn max_pattern_len(&self) -> usize {
        self.max_span
    }

    /// Scans a complete in-memory buffer. Returns the sorted column indices
    /// of every sub-signature that occurs at least once.
    pub fn scan_bytes(&self, data: &[u8]) -> Vec<u32> {
        let mut fired = FiredSet::new(self.n_features);
        self.scan_segment(data, true, true, &mut fired);
        fired.into_sorted()
    }

    fn scan_segment(&self, seg: &[u8], is_first: bool, is_final: bool, fired: &mut FiredSet) {
        for engine in &self.engines {
            if fired.full(self.n_features) {
                return;
            }
            for m in engine.ac.find_overlapping_iter(seg) {
                let vs = &engine.verifiers[m.pattern().as_usize()];
                for v in vs {
                    if fired.hit[v.feature as usize] {
                        continue;
                    }
                    let (s, e) = match &v.check {
                        Check::Exact => (m.start(), m.end()),
                        Check::Masked {
                            pattern,
                            mask,
                            anchor_offset,
                        } => {
                            let Some(s) = m.start().checked_sub(*anchor_offset) else {
                                continue;
                            };
                            let e = s + pattern.len();
                            if e > seg.len() {
                                continue;
                            }
                            if !masked_eq(&seg[s..e], pattern, mask) {
                                continue;
                            }
                            (s, e)
                        }
                    };
                    if v.fullword {
                        if s == 0 {
                            // Unknown left context in a mid-file window: the
                            // window that contains the preceding byte decides.
                            if !is_first {
                                continue;
                            }
                        } else if is_word_byte(seg[s - 1]) {
                            continue;
                        }
                        if e == seg.len() {
                            if !is_final {
                                continue;
                            }
                        } else if is_word_byte(seg[e]) {
                            continue;
                        }
                    }
                    fired.set(v.feature);
                }
                if fired.full(self.n_features) {
                    break;
                }
            }
        }
    }

    /// Streams a file in overlapping windows; output is independent of
    /// `chunk_size` for any value at least [`Self::max_pattern_len`].
    pub fn scan_file(&self, path: &Path, chunk_size: usize) -> Result<FileScan> {
        if chunk_size < self.max_span {
            return Err(Error::ChunkTooSmall {
                chunk_size,
                needed: self.max_span,
            });
        }
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let total = file
            .metadata()
            .map_err(|e| Error::io(path, e))?
            .len() as usize;

        let window = chunk_size.max(self.overlap + 1);
        let mut fired = FiredSet::new(self.n_features);

        if total <= window {
            let mut buf = vec![0u8; total];
            file.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            self.scan_segment(&buf, true, true, &mut fired);
            return Ok(FileScan {
                fired: fired.into_sorted(),
                bytes: total as u64,
            });
        }

        let mut buf = vec![0u8; window];
        file.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        let mut covered = window;
        self.scan_segment(&buf, true, covered == total, &mut fired);
        let step = window - self.overlap;
        while covered < total && !fired.full(self.n_features) {
            let fresh = step.min(total - covered);
            buf.copy_within(window - self.overlap.., 0);
            file.read_exact(&mut buf[self.overlap..self.overlap + fresh])
                .map_err(|e| Error::io(path, e))?;
            covered += fresh;
            let seg_len = self.overlap + fresh;
            self.scan_segment(&buf[..seg_len], false, covered == total, &mut fired);
        }
        Ok(FileScan {
            fired: fired.into_sorted(),
            bytes: total as u64,
        })
    }
}

fn masked_eq(data: &[u8], pattern: &[u8], mask: &[u8]) -> bool {
    data.iter()
        .zip(pattern.iter().zip(mask.iter()))
        .all(|(&d, (&p, &m))| d & m == p)
}

/// Per-row scan telemetry; `error` rows produce an empty matrix row and are
/// counted as partial failures rather than aborting the whole scan.
/// Wall-clock timing stays in memory only, keeping the serialized report
/// identical across reruns of the same inputs.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RowReport {
    pub row: usize,
    pub path: String,
    pub bytes: u64,
    #[serde(default, skip_serializing)]
    pub millis: u64,
    pub fired: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ScanReport {
    pub rows: Vec<RowReport>,
    pub failed: usize,
}

impl ScanReport {
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut w, r)
                .map_err(|e| Error::io("<scan report>", e.into()))?;
            w.write_all(b"\n")
                .map_err(|e| Error::io("<scan report>", e))?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ScanOutcome {
    pub matrix: OccurrenceMatrix,
    pub report: ScanReport,
}

/// Scans every manifest row into one matrix row, in manifest order. Rows are
/// scanned in parallel under the configured execution strategy; assembly is
/// by index, so the matrix is identical for any worker count.
pub fn scan_corpus(
    automaton: &PatternAutomaton,
    manifest: &CorpusManifest,
    options: &ScanOptions,
) -> Result<ScanOutcome> {
    let missing: Vec<std::path::PathBuf> = manifest
        .records
        .iter()
        .filter(|r| !r.path.exists())
        .map(|r| r.path.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let n = manifest.records.len();
    let per_row: Vec<(Vec<u32>, RowReport)> = map_indexed(options.exec, n, |i| {
        let rec = &manifest.records[i];
        let started = Instant::now();
        match automaton.scan_file(&rec.path, options.chunk_size) {
            Ok(fs) => {
                let report = RowReport {
                    row: i,
                    path: rec.path.display().to_string(),
                    bytes: fs.bytes,
                    millis: started.elapsed().as_millis() as u64,
                    fired: fs.fired.len(),
                    error: None,
                };
                (fs.fired, report)
            }
            Err(e) => (
                Vec::new(),
                RowReport {
                    row: i,
                    path: rec.path.display().to_string(),
                    bytes: 0,
                    millis: started.elapsed().as_millis() as u64,
                    fired: 0,
                    error: Some(e.to_string()),
                },
            ),
        }
    });

    let mut rows = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    let mut failed = 0usize;
    for (fired, report) in per_row {
        if report.error.is_some() {
            failed += 1;
        }
        rows.push(fired);
        reports.push(report);
    }
    let matrix = OccurrenceMatrix::from_rows(
        rows,
        automaton.n_features,
        manifest.records.iter().map(|r| r.key.clone()).collect(),
        automaton.col_ids.clone(),
        Some(manifest.records.iter().map(|r| r.label).collect()),
    )?;
    Ok(ScanOutcome {
        matrix,
        report: ScanReport {
            rows: reports,
            failed,
        },
    })
}
