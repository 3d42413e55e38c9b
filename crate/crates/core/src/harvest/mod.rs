//! Harvesting: turn directories of YARA rule files into a deduplicated
//! catalog of concrete, scannable sub-signatures.
//!
//! Each decodable string definition becomes one catalog entry addressed by a
//! stable content hash, with provenance back to every (file, rule, ident)
//! that contributed it. Rule conditions are carried along verbatim for
//! reference but never interpreted: a pattern is harvested even if its rule
//! would only fire under some condition.

mod decode;
mod parser;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};

pub use decode::{
    decode_sub_signature, signature_id, DecodeOutcome, DecodedPattern, Modifiers, SigKind,
    SkipReason,
};
pub use parser::{parse_rule_file, FileParse, RawRule, RawString, SourceEncoding};

pub const CATALOG_FORMAT: &str = "hayama-catalog";
pub const CATALOG_VERSION: u32 = 1;

/// Where a sub-signature came from; one entry per contributing rule string.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub file: String,
    pub rule: String,
    pub ident: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubSignature {
    pub id: u64,
    pub kind: SigKind,
    pub pattern_bytes: Vec<u8>,
    pub mask_bytes: Option<Vec<u8>>,
    pub modifiers: Modifiers,
    pub provenance: Vec<Provenance>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub files_scanned: usize,
    pub rules_parsed: usize,
    pub strings_seen: usize,
    pub strings_decoded: usize,
    pub skipped: BTreeMap<String, usize>,
}

/// The harvested signature set, entries sorted by id, ids unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SignatureCatalog {
    entries: Vec<SubSignature>,
    pub stats: SourceStats,
}

impl SignatureCatalog {
    /// Builds a catalog from arbitrary entries: sorts by id and merges
    /// duplicate ids by unioning their provenance.
    pub fn from_entries(entries: Vec<SubSignature>) -> Self {
        let mut by_id: BTreeMap<u64, SubSignature> = BTreeMap::new();
        for e in entries {
            match by_id.get_mut(&e.id) {
                Some(existing) => existing.provenance.extend(e.provenance),
                None => {
                    by_id.insert(e.id, e);
                }
            }
        }
        let mut entries: Vec<SubSignature> = by_id.into_values().collect();
        for e in &mut entries {
            e.provenance.sort();
            e.provenance.dedup();
        }
        SignatureCatalog {
            entries,
            stats: SourceStats::default(),
        }
    }

    pub fn entries(&self) -> &[SubSignature] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Column ids of the occurrence matrix this catalog induces.
    pub fn ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.entries.binary_search_by_key(&id, |e| e.id).ok()
    }
}

#[derive(Debug)]
pub struct HarvestOutcome {
    pub catalog: SignatureCatalog,
    /// Per-file and per-string skip notes, in deterministic order.
    pub diagnostics: Vec<String>,
}

/// Walks the given roots, parses every candidate rule file, and decodes all
/// string definitions into a canonical catalog. Candidate files are selected
/// by extension (`.yar`, `.yara`, `.rule`, and `.txt` files that mention
/// `rule `). File parsing fans out across workers; results are merged in
/// path order so the catalog is identical no matter the scheduling.
pub fn harvest(roots: &[PathBuf], exec: Execution) -> Result<HarvestOutcome> {
    let files = collect_rule_files(roots)?;
    let parsed: Vec<(PathBuf, Vec<u8>)> = {
        let mut loaded = Vec::with_capacity(files.len());
        for f in &files {
            let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
            loaded.push((f.clone(), bytes));
        }
        loaded
    };
    let candidates: Vec<&(PathBuf, Vec<u8>)> = parsed
        .iter()
        .filter(|(p, bytes)| {
            if p.extension().and_then(|e| e.to_str()) == Some("txt") {
                contains_rule_keyword(bytes)
            } else {
                true
            }
        })
        .collect();

    let per_file: Vec<FileParse> = map_indexed(exec, candidates.len(), |i| {
        let (path, bytes) = candidates[i];
        parse_rule_file(path, bytes)
    });

    let mut stats = SourceStats {
        files_scanned: candidates.len(),
        ..SourceStats::default()
    };
    let mut diagnostics = Vec::new();
    let mut entries: Vec<SubSignature> = Vec::new();
    for fp in &per_file {
        diagnostics.extend(fp.diagnostics.iter().cloned());
        stats.rules_parsed += fp.rules.len();
        for rule in &fp.rules {
            for s in &rule.strings {
                stats.strings_seen += 1;
                let origin = Provenance {
                    file: rule.source_file.display().to_string(),
                    rule: rule.name.clone(),
                    ident: s.identifier.clone(),
                };
                match decode::decode_definition(&s.definition, rule.encoding) {
                    DecodeOutcome::Decoded(p) => {
                        stats.strings_decoded += 1;
                        entries.push(SubSignature {
                            id: p.id(),
                            kind: p.kind,
                            pattern_bytes: p.pattern,
                            mask_bytes: p.mask,
                            modifiers: p.modifiers,
                            provenance: vec![origin],
                        });
                    }
                    DecodeOutcome::Skipped(reason) => {
                        *stats.skipped.entry(reason.bucket().to_string()).or_insert(0) += 1;
                        diagnostics.push(format!(
                            "{}:{}:{}: skipped ({:?})",
                            origin.file, origin.rule, origin.ident, reason
                        ));
                    }
                }
            }
        }
    }

    let mut catalog = SignatureCatalog::from_entries(entries);
    catalog.stats = stats;
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    Ok(HarvestOutcome {
        catalog,
        diagnostics,
    })
}

fn collect_rule_files(roots: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for root in roots {
        if root.is_file() {
            files.push(root.clone());
            continue;
        }
        let walker = walkdir::WalkDir::new(root).sort_by_file_name();
        for entry in walker {
            let entry = entry.map_err(|e| {
                let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.clone());
                match e.into_io_error() {
                    Some(io) => Error::io(path, io),
                    None => Error::Validation(format!("walk failed under {}", root.display())),
                }
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            match entry.path().extension().and_then(|e| e.to_str()) {
                Some("yar") | Some("yara") | Some("rule") | Some("txt") => {
                    files.push(entry.path().to_path_buf())
                }
                _ => {}
            }
        }
    }
    Ok(files)
}

fn contains_rule_keyword(bytes: &[u8]) -> bool {
    bytes.windows(5).any(|w| w == b"rule ")
}

#[derive(Serialize, Deserialize)]
struct CatalogHeader {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stats: Option<SourceStats>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    id: String,
    kind: String,
    pattern_hex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_hex: Option<String>,
    modifiers: Vec<String>,
    provenance: Vec<Provenance>,
}

/// Serializes the catalog as JSON-Lines: a header object followed by one
/// object per entry, in id order. The encoding is canonical, so equal
/// catalogs produce identical bytes.
pub fn write_catalog<W: Write>(catalog: &SignatureCatalog, mut w: W) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<catalog writer>", e);
    let header = CatalogHeader {
        format: CATALOG_FORMAT.to_string(),
        version: CATALOG_VERSION,
        stats: Some(catalog.stats.clone()),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::io("<catalog writer>", e.into()))?;
    w.write_all(b"\n").map_err(io_err)?;
    for e in &catalog.entries {
        let rec = EntryRecord {
            id: format!("{:016x}", e.id),
            kind: e.kind.as_str().to_string(),
            pattern_hex: hex::encode(&e.pattern_bytes),
            mask_hex: e.mask_bytes.as_ref().map(hex::encode),
            modifiers: e.modifiers.names().iter().map(|s| s.to_string()).collect(),
            provenance: e.provenance.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::io("<catalog writer>", e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}

pub fn save_catalog(catalog: &SignatureCatalog, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_catalog(catalog, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_catalog<R: Read>(r: R) -> Result<SignatureCatalog> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let header_line = match lines.next() {
        Some((_, Ok(l))) if !l.trim().is_empty() => l,
        Some((_, Err(e))) => return Err(Error::io("<catalog reader>", e)),
        _ => return Err(Error::CatalogTruncated("missing header line".into())),
    };
    let header: CatalogHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::CatalogFormat {
            line: 1,
            msg: format!("bad header: {e}"),
        })?;
    if header.format != CATALOG_FORMAT {
        return Err(Error::CatalogFormat {
            line: 1,
            msg: format!("unexpected format {:?}", header.format),
        });
    }
    if header.version != CATALOG_VERSION {
        return Err(Error::CatalogVersion {
            found: header.version,
            expected: CATALOG_VERSION,
        });
    }

    let mut entries = Vec::new();
    let mut prev_id: Option<u64> = None;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<catalog reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EntryRecord = serde_json::from_str(&line).map_err(|e| Error::CatalogFormat {
            line: lineno,
            msg: e.to_string(),
        })?;
        let fmt_err = |msg: String| Error::CatalogFormat { line: lineno, msg };
        if rec.id.len() != 16 {
            return Err(fmt_err(format!("id {:?} is not 16 hex chars", rec.id)));
        }
        let id = u64::from_str_radix(&rec.id, 16)
            .map_err(|e| fmt_err(format!("bad id {:?}: {e}", rec.id)))?;
        let kind = SigKind::from_str(&rec.kind)
            .ok_or_else(|| fmt_err(format!("unknown kind {:?}", rec.kind)))?;
        let pattern_bytes =
            hex::decode(&rec.pattern_hex).map_err(|e| fmt_err(format!("bad pattern_hex: {e}")))?;
        let mask_bytes = match &rec.mask_hex {
            Some(h) => {
                Some(hex::decode(h).map_err(|e| fmt_err(format!("bad mask_hex: {e}")))?)
            }
            None => None,
        };
        if let Some(m) = &mask_bytes {
            if m.len() != pattern_bytes.len() {
                return Err(fmt_err(format!(
                    "mask length {} does not match pattern length {}",
                    m.len(),
                    pattern_bytes.len()
                )));
            }
        }
        let modifiers = Modifiers::from_names(&rec.modifiers)
            .ok_or_else(|| fmt_err(format!("unknown modifier in {:?}", rec.modifiers)))?;
        if let Some(p) = prev_id {
            if id <= p {
                return Err(fmt_err(format!(
                    "entries out of order or duplicated at id {id:016x}"
                )));
            }
        }
        prev_id = Some(id);
        entries.push(SubSignature {
            id,
            kind,
            pattern_bytes,
            mask_bytes,
            modifiers,
            provenance: rec.provenance,
        });
    }
    Ok(SignatureCatalog {
        entries,
        stats: header.stats.unwrap_or_default(),
    })
}

pub fn load_catalog(path: &Path) -> Result<SignatureCatalog> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_catalog(f)
}
