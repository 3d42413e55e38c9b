//! Oracles shared by the integration suites: deliberately slow,
//! obviously-correct counterparts of the production code paths. Per-pattern
//! substring search instead of an automaton, finite differences instead of
//! analytic gradients, exhaustive enumeration instead of histograms.
#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use hayama_core::boosting::{fit_gbdt, predict_proba, FeatureFrame, TrainConfig, TreeNode};
use hayama_core::harvest::{
    signature_id, Modifiers, Provenance, SigKind, SignatureCatalog, SubSignature,
};
use hayama_core::scanner::OccurrenceMatrix;
use hayama_core::selection::{lambda_max, logistic_objective, DesignMatrix};
use hayama_core::Execution;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, want {want} (tol {tol})"
    );
}

// ---------------------------------------------------------------------------
// Naive per-pattern scanning.

fn bytes_eq(window: &[u8], pattern: &[u8], nocase: bool) -> bool {
    if nocase {
        window
            .iter()
            .zip(pattern)
            .all(|(a, b)| a.to_ascii_lowercase() == b.to_ascii_lowercase())
    } else {
        window == pattern
    }
}

fn widen(pattern: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(pattern.len() * 2);
    for &b in pattern {
        out.push(b);
        out.push(0);
    }
    out
}

fn word_boundary_ok(data: &[u8], start: usize, end: usize) -> bool {
    let left = start == 0 || !data[start - 1].is_ascii_alphanumeric();
    let right = end == data.len() || !data[end].is_ascii_alphanumeric();
    left && right
}

/// Does this sub-signature occur anywhere in `data`? Checks every offset of
/// every variant independently.
pub fn naive_occurs(sig: &SubSignature, data: &[u8]) -> bool {
    match sig.kind {
        SigKind::Text => {
            let m = sig.modifiers;
            let mut variants: Vec<Vec<u8>> = Vec::new();
            if !m.wide || m.ascii {
                variants.push(sig.pattern_bytes.clone());
            }
            if m.wide {
                variants.push(widen(&sig.pattern_bytes));
            }
            for v in &variants {
                if v.len() > data.len() {
                    continue;
                }
                for i in 0..=data.len() - v.len() {
                    if bytes_eq(&data[i..i + v.len()], v, m.nocase)
                        && (!m.fullword || word_boundary_ok(data, i, i + v.len()))
                    {
                        return true;
                    }
                }
            }
            false
        }
        SigKind::HexFixed => {
            let p = &sig.pattern_bytes;
            p.len() <= data.len()
                && (0..=data.len() - p.len()).any(|i| &data[i..i + p.len()] == p.as_slice())
        }
        SigKind::HexWild => {
            let p = &sig.pattern_bytes;
            let all_fixed = vec![0xFFu8; p.len()];
            let mask = sig.mask_bytes.as_deref().unwrap_or(&all_fixed);
            if p.len() > data.len() {
                return false;
            }
            (0..=data.len() - p.len()).any(|i| {
                p.iter()
                    .zip(mask)
                    .enumerate()
                    .all(|(j, (&pb, &mb))| data[i + j] & mb == pb)
            })
        }
    }
}

/// Sorted column indices of every catalog entry that occurs in `data`.
pub fn naive_scan(catalog: &SignatureCatalog, data: &[u8]) -> Vec<u32> {
    catalog
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| naive_occurs(e, data))
        .map(|(i, _)| i as u32)
        .collect()
}

const TEXT_ALPHABET: &[u8] = b"abcdeABCDE01 .\t_-";

fn random_text(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = rng.gen_range(1..=10);
    (0..len)
        .map(|_| TEXT_ALPHABET[rng.gen_range(0..TEXT_ALPHABET.len())])
        .collect()
}

/// A catalog mixing plain, case-insensitive, UTF-16 interleaved,
/// word-bounded, fixed-byte, and masked-byte patterns.
pub fn random_catalog(rng: &mut ChaCha8Rng, n: usize) -> SignatureCatalog {
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let (kind, pattern, mask, mods) = match rng.gen_range(0..8u32) {
            0 | 1 => (SigKind::Text, random_text(rng), None, Modifiers::default()),
            2 => (
                SigKind::Text,
                random_text(rng),
                None,
                Modifiers {
                    nocase: true,
                    ..Modifiers::default()
                },
            ),
            3 => (
                SigKind::Text,
                random_text(rng),
                None,
                Modifiers {
                    wide: true,
                    ascii: rng.gen_bool(0.5),
                    nocase: rng.gen_bool(0.25),
                    fullword: rng.gen_bool(0.25),
                },
            ),
            4 => (
                SigKind::Text,
                random_text(rng),
                None,
                Modifiers {
                    fullword: true,
                    nocase: rng.gen_bool(0.5),
                    ..Modifiers::default()
                },
            ),
            5 | 6 => {
                let len = rng.gen_range(2..=8);
                let bytes: Vec<u8> = (0..len).map(|_| rng.gen_range(0..=3u8) * 0x41).collect();
                (SigKind::HexFixed, bytes, None, Modifiers::default())
            }
            _ => {
                let len = rng.gen_range(2..=8);
                let mut bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                let mut mask: Vec<u8> = (0..len)
                    .map(|_| [0xFFu8, 0xF0, 0x0F][rng.gen_range(0..3)])
                    .collect();
                // The matcher needs at least one fully fixed byte to anchor on.
                let fixed = rng.gen_range(0..len);
                mask[fixed] = 0xFF;
                for (b, m) in bytes.iter_mut().zip(&mask) {
                    *b &= m;
                }
                (SigKind::HexWild, bytes, Some(mask), Modifiers::default())
            }
        };
        entries.push(SubSignature {
            id: signature_id(kind, &pattern, mask.as_deref(), mods),
            kind,
            pattern_bytes: pattern,
            mask_bytes: mask,
            modifiers: mods,
            provenance: vec![Provenance {
                file: "trial.yar".into(),
                rule: "trial".into(),
                ident: format!("$t{i}"),
            }],
        });
    }
    SignatureCatalog::from_entries(entries)
}

/// One concrete byte sequence this signature matches: the wide or raw form,
/// case-flipped when allowed, wildcard nibbles filled at random.
pub fn planted_form(e: &SubSignature, rng: &mut ChaCha8Rng) -> Vec<u8> {
    match e.kind {
        SigKind::Text => {
            let base = if e.modifiers.wide && rng.gen_bool(0.5) {
                widen(&e.pattern_bytes)
            } else {
                e.pattern_bytes.clone()
            };
            if e.modifiers.nocase && rng.gen_bool(0.5) {
                base.iter().map(|b| b.to_ascii_uppercase()).collect()
            } else {
                base
            }
        }
        SigKind::HexFixed => e.pattern_bytes.clone(),
        SigKind::HexWild => {
            let all_fixed = vec![0xFFu8; e.pattern_bytes.len()];
            let mask = e.mask_bytes.as_deref().unwrap_or(&all_fixed);
            e.pattern_bytes
                .iter()
                .zip(mask)
                .map(|(&p, &m)| p | (rng.gen::<u8>() & !m))
                .collect()
        }
    }
}

/// A buffer of mostly alphabet bytes with some catalog patterns planted in
/// variant forms, so both hits and misses occur at useful rates.
pub fn random_data(rng: &mut ChaCha8Rng, len: usize, catalog: &SignatureCatalog) -> Vec<u8> {
    let mut data: Vec<u8> = (0..len)
        .map(|_| {
            if rng.gen_bool(0.8) {
                TEXT_ALPHABET[rng.gen_range(0..TEXT_ALPHABET.len())]
            } else {
                rng.gen()
            }
        })
        .collect();
    if catalog.is_empty() || len == 0 {
        return data;
    }
    let plants = rng.gen_range(0..=catalog.len().min(24));
    for _ in 0..plants {
        let e = &catalog.entries()[rng.gen_range(0..catalog.len())];
        let planted = planted_form(e, rng);
        if planted.len() <= data.len() {
            let at = rng.gen_range(0..=data.len() - planted.len());
            data[at..at + planted.len()].copy_from_slice(&planted);
        }
    }
    data
}

// ---------------------------------------------------------------------------
// Exhaustive tree-split enumeration.

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_odds(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSplit {
    pub feature: u32,
    pub threshold: f64,
    pub gain: f64,
}

/// Best split over the given rows by brute force: every feature, every
/// midpoint between adjacent distinct values, gain compared with the same
/// strict ordering and (feature, threshold) tie rule as the trainer. Only
/// valid when every column has at most `n_bins` distinct values.
pub fn oracle_best_split(
    columns: &[Vec<f64>],
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    l2: f64,
    min_child_hessian: f64,
) -> Option<OracleSplit> {
    let g_total: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h_total: f64 = rows.iter().map(|&r| hess[r]).sum();
    let parent = g_total * g_total / (h_total + l2);
    let mut best: Option<OracleSplit> = None;
    for (f, col) in columns.iter().enumerate() {
        let mut distinct: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        for w in distinct.windows(2) {
            let threshold = 0.5 * (w[0] + w[1]);
            let mut gl = 0.0;
            let mut hl = 0.0;
            for &r in rows {
                if col[r] < threshold {
                    gl += grad[r];
                    hl += hess[r];
                }
            }
            let gr = g_total - gl;
            let hr = h_total - hl;
            if hl < min_child_hessian || hr < min_child_hessian {
                continue;
            }
            let gain = 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(OracleSplit {
                    feature: f as u32,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

/// Leaf value the trainer would assign to these rows.
pub fn oracle_leaf(rows: &[usize], grad: &[f64], hess: &[f64], l2: f64) -> f64 {
    let g: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h: f64 = rows.iter().map(|&r| hess[r]).sum();
    -g / (h + l2)
}

// ---------------------------------------------------------------------------
// Exhaustive-threshold ROC.

/// ROC points and areas computed the long way: one confusion matrix per
/// distinct score, trapezoid integration, linear interpolation at the cap.
pub fn oracle_roc(scores: &[f64], labels: &[u8], cap: f64) -> (Vec<(f64, f64)>, f64, f64) {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut points = vec![(0.0f64, 0.0f64)];
    for &t in &thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&s, &y) in scores.iter().zip(labels) {
            if s >= t {
                if y == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push((fp as f64 / neg, tp as f64 / pos));
    }

    let mut full = 0.0;
    for w in points.windows(2) {
        full += (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1);
    }

    let mut partial = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x0 >= cap {
            break;
        }
        if x1 <= cap {
            partial += (x1 - x0) * 0.5 * (y0 + y1);
        } else {
            // Cut the segment at the cap.
            let yc = if x1 > x0 {
                y0 + (y1 - y0) * (cap - x0) / (x1 - x0)
            } else {
                y1
            };
            partial += (cap - x0) * 0.5 * (y0 + yc);
            break;
        }
    }
    (points, full, partial / cap)
}

// ---------------------------------------------------------------------------
// Direct distribution and correlation formulas.

/// Distribution of per-column fire counts by sorting, the direct way.
pub fn oracle_ecdf(matrix: &OccurrenceMatrix, class: u8) -> Vec<(usize, f64)> {
    let labels = matrix.labels.as_ref().expect("labeled matrix");
    let mut counts = vec![0usize; matrix.n_cols()];
    for i in 0..matrix.n_rows() {
        if labels[i] != class {
            continue;
        }
        for &c in matrix.row(i) {
            counts[c as usize] += 1;
        }
    }
    counts.sort_unstable();
    let n = counts.len() as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        let at_or_below = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 = at_or_below,
            _ => out.push((c, at_or_below)),
        }
    }
    out
}

pub fn oracle_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

// ---------------------------------------------------------------------------
// Finite differences.

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        probe[j] = x[j] + eps;
        let up = f(&probe);
        probe[j] = x[j] - eps;
        let down = f(&probe);
        probe[j] = x[j];
        out.push((up - down) / (2.0 * eps));
    }
    out
}

// ---------------------------------------------------------------------------
// Labeled tree-trainer fixtures and the enumeration walk.

pub struct TreeFixture {
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl TreeFixture {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn frame(&self) -> FeatureFrame {
        let n = self.n();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| self.columns.iter().map(|c| c[i]).collect())
            .collect();
        let ids: Vec<u64> = (0..self.columns.len() as u64).collect();
        FeatureFrame::from_rows(rows, ids, vec![]).unwrap()
    }
}

/// Small labeled fixtures: discrete-valued columns with a balanced class
/// split (all sums stay exact in floating point), or fully continuous
/// columns with generic labels (no exact gain ties to break).
pub fn random_tree_fixture(r: &mut ChaCha8Rng, balanced: bool) -> TreeFixture {
    let n = if balanced {
        2 * r.gen_range(2..=16)
    } else {
        r.gen_range(4..=32)
    };
    let d = r.gen_range(1..=4);
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            if balanced {
                let palette: &[f64] = match r.gen_range(0..3u32) {
                    0 => &[0.0, 1.0],
                    1 => &[0.0, 0.5, 1.0, 2.0],
                    _ => &[-1.0, 0.0, 0.25, 1.5, 3.0],
                };
                (0..n).map(|_| palette[r.gen_range(0..palette.len())]).collect()
            } else {
                (0..n).map(|_| r.gen::<f64>() * 4.0 - 2.0).collect()
            }
        })
        .collect();
    let labels: Vec<u8> = if balanced {
        let mut l: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        for i in (1..n).rev() {
            let j = r.gen_range(0..=i);
            l.swap(i, j);
        }
        l
    } else {
        loop {
            let l: Vec<u8> = (0..n).map(|_| u8::from(r.gen_bool(0.5))).collect();
            let pos = l.iter().filter(|&&y| y == 1).count();
            if pos > 0 && pos < n {
                break l;
            }
        }
    };
    TreeFixture { columns, labels }
}

/// First-round gradient and hessian exactly as the trainer computes them.
pub fn first_round_grad_hess(labels: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let prevalence = labels.iter().filter(|&&y| y == 1).count() as f64 / labels.len() as f64;
    let p = sigmoid(log_odds(prevalence));
    let grad: Vec<f64> = labels.iter().map(|&y| p - f64::from(y)).collect();
    let hess: Vec<f64> = labels.iter().map(|_| (p * (1.0 - p)).max(1e-16)).collect();
    (grad, hess)
}

/// Walks a fitted tree and re-derives every decision by enumeration.
///
/// On the first round the gradient takes just two values and the hessian is
/// constant, so any two cuts with the same (or complementary) left-side
/// count-and-positives tie exactly in real arithmetic; which one an argmax
/// keeps then depends on summation rounding. With a balanced class split
/// the prior is exactly one half, every sum is dyadic and therefore exact,
/// and `strict` demands the identical choice: same feature, same induced
/// partition, same gain, leaves exactly where no positive gain exists.
/// Unbalanced fixtures verify optimality instead: the chosen split attains
/// the enumerated maximum gain up to rounding noise. Thresholds are always
/// compared through the partition they induce, since distinct cut points
/// can encode the same split of the rows a node actually holds.
pub fn check_tree_against_oracle(
    fix: &TreeFixture,
    cfg: &TrainConfig,
    nodes: &[TreeNode],
    strict: bool,
) {
    let (grad, hess) = first_round_grad_hess(&fix.labels);
    let mut pending = vec![(0usize, (0..fix.n()).collect::<Vec<usize>>(), 0usize)];
    while let Some((at, rows, depth)) = pending.pop() {
        let oracle = if depth < cfg.max_depth {
            oracle_best_split(
                &fix.columns,
                &rows,
                &grad,
                &hess,
                cfg.l2_leaf,
                cfg.min_child_hessian,
            )
        } else {
            None
        };
        match &nodes[at] {
            TreeNode::Leaf { value } => {
                let want = oracle_leaf(&rows, &grad, &hess, cfg.l2_leaf);
                assert_close(*value, want, 1e-12 * want.abs().max(1.0), "leaf value");
                if let Some(found) = oracle {
                    if strict {
                        panic!("trainer made a leaf but enumeration finds {found:?}");
                    }
                    assert!(
                        found.gain <= 1e-12,
                        "trainer made a leaf but enumeration finds real gain {found:?}"
                    );
                }
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let col = &fix.columns[*feature as usize];
                let tree_left: Vec<usize> =
                    rows.iter().copied().filter(|&i| col[i] < *threshold).collect();
                let gl: f64 = tree_left.iter().map(|&i| grad[i]).sum();
                let hl: f64 = tree_left.iter().map(|&i| hess[i]).sum();
                let g: f64 = rows.iter().map(|&i| grad[i]).sum();
                let h: f64 = rows.iter().map(|&i| hess[i]).sum();
                let (gr, hr) = (g - gl, h - hl);
                let l2 = cfg.l2_leaf;
                let gain =
                    0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - g * g / (h + l2));

                match oracle {
                    None => assert!(
                        gain.abs() <= 1e-12,
                        "trainer split with gain {gain} where enumeration finds none"
                    ),
                    Some(best) => {
                        if strict {
                            assert_eq!(*feature, best.feature, "split feature");
                            let oracle_left: Vec<usize> = rows
                                .iter()
                                .copied()
                                .filter(|&i| col[i] < best.threshold)
                                .collect();
                            assert_eq!(tree_left, oracle_left, "split partition");
                            assert_close(gain, best.gain, 0.0, "split gain");
                        } else {
                            assert!(
                                gain >= best.gain - 1e-9 * best.gain.max(1.0),
                                "trainer gain {gain} falls short of enumerated best {best:?}"
                            );
                        }
                    }
                }

                let tree_right: Vec<usize> = rows
                    .iter()
                    .copied()
                    .filter(|&i| col[i] >= *threshold)
                    .collect();
                pending.push((*left as usize, tree_left, depth + 1));
                pending.push((*right as usize, tree_right, depth + 1));
            }
        }
    }
}

pub fn xor_fixture(extra_row: bool) -> TreeFixture {
    let mut columns = vec![Vec::new(), Vec::new()];
    let mut labels = Vec::new();
    for (x0, x1) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        for _ in 0..8 {
            columns[0].push(x0);
            columns[1].push(x1);
            labels.push(u8::from((x0 != 0.0) != (x1 != 0.0)));
        }
    }
    if extra_row {
        // A perfectly balanced parity table has zero gain for every
        // single-feature split, so the greedy root never moves; one
        // duplicated row breaks the tie without changing the concept.
        columns[0].push(0.0);
        columns[1].push(0.0);
        labels.push(0);
    }
    TreeFixture { columns, labels }
}

pub fn gbdt_train_accuracy(fix: &TreeFixture, max_depth: usize) -> f64 {
    let cfg = TrainConfig {
        n_trees: 60,
        max_depth,
        learning_rate: 0.5,
        min_child_hessian: 1e-6,
        ..TrainConfig::default()
    };
    let frame = fix.frame();
    let model = fit_gbdt(&frame, &fix.labels, &cfg, Execution::Sequential).unwrap();
    let proba = predict_proba(&model, &frame).unwrap();
    let correct = proba
        .iter()
        .zip(&fix.labels)
        .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
        .count();
    correct as f64 / fix.n() as f64
}

// ---------------------------------------------------------------------------
// Random solver instances and a grid oracle for two-weight problems.

pub struct LassoInstance {
    pub rows: Vec<Vec<u32>>,
    pub labels: Vec<u8>,
    pub n_sparse: usize,
    pub dense: Vec<(Vec<f64>, bool, String)>,
}

impl LassoInstance {
    pub fn design(&self) -> DesignMatrix<'_> {
        let mut d = DesignMatrix::from_sparse(
            self.rows.iter().map(|r| r.as_slice()).collect(),
            self.n_sparse,
        );
        for (values, penalized, name) in &self.dense {
            d.append_dense(values, *penalized, name).unwrap();
        }
        d
    }
}

pub fn random_lasso_instance(r: &mut ChaCha8Rng, with_dense: bool) -> LassoInstance {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let n = r.gen_range(20..=60);
        let d = r.gen_range(5..=15);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<u32> = (0..d as u32).filter(|_| r.gen_bool(0.3)).collect();
            let p = if row.contains(&0) { 0.75 } else { 0.3 };
            labels.push(u8::from(r.gen_bool(p)));
            rows.push(row);
        }
        let pos = labels.iter().filter(|&&y| y == 1).count();
        if pos == 0 || pos == labels.len() {
            continue;
        }
        let mut dense = Vec::new();
        if with_dense {
            for j in 0..r.gen_range(1..=3usize) {
                let values: Vec<f64> = labels
                    .iter()
                    .map(|&y| normal.sample(r) + f64::from(y) * 0.8)
                    .collect();
                dense.push((values, r.gen_bool(0.5), format!("z{j}")));
            }
        }
        let inst = LassoInstance {
            rows,
            labels,
            n_sparse: d,
            dense,
        };
        let design = inst.design();
        match lambda_max(&design, &inst.labels) {
            Ok(lmax) if lmax > 1e-6 => return inst,
            _ => continue,
        }
    }
}

/// Coarse-to-fine grid minimization of the two-weight objective.
pub fn grid_minimum(design: &DesignMatrix, labels: &[u8], lambda: f64) -> f64 {
    let mut center = [0.0f64; 3];
    let mut span = 4.0f64;
    let mut best = f64::INFINITY;
    for _round in 0..4 {
        let mut best_point = center;
        for i in 0..=20 {
            for j in 0..=20 {
                for k in 0..=20 {
                    let w = [
                        center[0] - span + span * i as f64 / 10.0,
                        center[1] - span + span * j as f64 / 10.0,
                    ];
                    let b = center[2] - span + span * k as f64 / 10.0;
                    let f = logistic_objective(design, labels, &w, b, lambda).unwrap().0;
                    if f < best {
                        best = f;
                        best_point = [w[0], w[1], b];
                    }
                }
            }
        }
        center = best_point;
        span /= 8.0;
    }
    best
}
