//! Scoring predicted note lists against ground truth.
//!
//! Notes are paired one-to-one when their pitches are equal and their onsets
//! differ by at most the tolerance (50 ms by default). Among all pairings the
//! one with the most pairs is chosen, and among those the one with the least
//! total onset deviation.
//!
//! Pairs never cross pitch classes, so each pitch is solved on its own. For
//! one pitch, any crossing pair `(p1, t1), (p2, t2)` with `p1 < p2` and
//! `t2 < t1` can be swapped into `(p1, t2), (p2, t1)`: both swapped pairs stay
//! inside the tolerance and the total deviation does not grow. An optimal
//! matching can therefore be taken order-preserving, which a sequence
//! alignment over the two onset-sorted lists finds exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::fingerboard::{FingerboardTable, Lookup};
use crate::score::NoteEvent;

pub const DEFAULT_ONSET_TOLERANCE: f64 = 0.050;
/// Relative duration error allowed, measured against the truth duration.
pub const DURATION_TOLERANCE: f64 = 0.10;
// absorbs representation error at the inclusive boundaries (0.55 / 0.50 - 1 > 0.1 in f64)
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{0} notes are not sorted by onset (first disorder at index {1})")]
    Unsorted(&'static str, usize),
    #[error("{0} has {1} notes but {2} placements")]
    LengthMismatch(&'static str, usize, usize),
    #[error("tolerance must be a non-negative number")]
    Tolerance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Matching {
    /// `(predicted index, truth index)`, ascending by predicted index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
}

fn check_sorted(name: &'static str, notes: &[NoteEvent]) -> Result<(), EvalError> {
    match notes
        .windows(2)
        .position(|w| w[1].start_time < w[0].start_time)
    {
        Some(i) => Err(EvalError::Unsorted(name, i + 1)),
        None => Ok(()),
    }
}

pub fn onsets_match(pred: &NoteEvent, truth: &NoteEvent, tolerance: f64) -> bool {
    pred.midi == truth.midi
        && (pred.start_time - truth.start_time).abs() <= tolerance + BOUNDARY_SLACK
}

pub fn align(
    pred: &[NoteEvent],
    truth: &[NoteEvent],
    tolerance: f64,
) -> Result<Matching, EvalError> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(EvalError::Tolerance);
    }
    check_sorted("predicted", pred)?;
    check_sorted("truth", truth)?;

    let mut groups: BTreeMap<_, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, n) in pred.iter().enumerate() {
        groups.entry(n.midi).or_default().0.push(i);
    }
    for (j, n) in truth.iter().enumerate() {
        groups.entry(n.midi).or_default().1.push(j);
    }

    let mut pairs = Vec::new();
    for (p_idx, t_idx) in groups.values() {
        if p_idx.is_empty() || t_idx.is_empty() {
            continue;
        }
        align_one_pitch(pred, truth, p_idx, t_idx, tolerance, &mut pairs);
    }
    pairs.sort_unstable();

    let mut pred_used = vec![false; pred.len()];
    let mut truth_used = vec![false; truth.len()];
    for &(i, j) in &pairs {
        pred_used[i] = true;
        truth_used[j] = true;
    }
    Ok(Matching {
        pairs,
        unmatched_pred: (0..pred.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_truth: (0..truth.len()).filter(|&j| !truth_used[j]).collect(),
    })
}

#[derive(Clone, Copy)]
struct Cell {
    count: u32,
    cost: f64,
}

impl Cell {
    fn better_than(self, other: Cell) -> bool {
        self.count > other.count || (self.count == other.count && self.cost < other.cost)
    }
}

#[derive(Clone, Copy)]
enum Step {
    SkipPred,
    SkipTruth,
    Pair,
}

fn align_one_pitch(
    pred: &[NoteEvent],
    truth: &[NoteEvent],
    p_idx: &[usize],
    t_idx: &[usize],
    tolerance: f64,
    out: &mut Vec<(usize, usize)>,
) {
    let (n, m) = (p_idx.len(), t_idx.len());
    let width = m + 1;
    let mut best = vec![
        Cell {
            count: 0,
            cost: 0.0
        };
        (n + 1) * width
    ];
    let mut step = vec![Step::SkipPred; (n + 1) * width];
    step[1..width].fill(Step::SkipTruth);
    for i in 1..=n {
        for j in 1..=m {
            let here = i * width + j;
            let mut cell = best[here - width];
            let mut how = Step::SkipPred;
            let left = best[here - 1];
            if left.better_than(cell) {
                cell = left;
                how = Step::SkipTruth;
            }
            let (p, t) = (&pred[p_idx[i - 1]], &truth[t_idx[j - 1]]);
            if onsets_match(p, t, tolerance) {
                let diag = best[here - width - 1];
                let paired = Cell {
                    count: diag.count + 1,
                    cost: diag.cost + (p.start_time - t.start_time).abs(),
                };
                if paired.better_than(cell) {
                    cell = paired;
                    how = Step::Pair;
                }
            }
            best[here] = cell;
            step[here] = how;
        }
    }
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        match step[i * width + j] {
            Step::SkipPred => i -= 1,
            Step::SkipTruth => j -= 1,
            Step::Pair => {
                out.push((p_idx[i - 1], t_idx[j - 1]));
                i -= 1;
                j -= 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Matched / truth notes; `None` when the truth list is empty.
    pub note_accuracy: Option<f64>,
    /// Share of matched pairs whose duration is within 10 % of the truth.
    pub duration_accuracy: Option<f64>,
    /// Share of matched pairs with the same string and finger.
    pub fingerboard_accuracy: Option<f64>,
    pub matched: usize,
    pub predicted: usize,
    pub truth: usize,
    pub duration_correct: usize,
    pub fingerboard_correct: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn duration_matches(pred: &NoteEvent, truth: &NoteEvent) -> bool {
    (pred.duration - truth.duration).abs() / truth.duration <= DURATION_TOLERANCE + BOUNDARY_SLACK
}

/// Same string and finger. Two out-of-range notes agree, since neither side
/// has a placement.
pub fn placements_agree(pred: Lookup, truth: Lookup) -> bool {
    match (pred, truth) {
        (Lookup::Found(a), Lookup::Found(b)) => a.string == b.string && a.finger == b.finger,
        (Lookup::OutOfRange, Lookup::OutOfRange) => true,
        _ => false,
    }
}

fn fraction(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn score(
    m: &Matching,
    pred: &[NoteEvent],
    truth: &[NoteEvent],
    pred_placements: &[Lookup],
    truth_placements: &[Lookup],
) -> Result<EvalReport, EvalError> {
    if pred.len() != pred_placements.len() {
        return Err(EvalError::LengthMismatch(
            "predicted",
            pred.len(),
            pred_placements.len(),
        ));
    }
    if truth.len() != truth_placements.len() {
        return Err(EvalError::LengthMismatch(
            "truth",
            truth.len(),
            truth_placements.len(),
        ));
    }
    let matched = m.pairs.len();
    let duration_correct = m
        .pairs
        .iter()
        .filter(|&&(i, j)| duration_matches(&pred[i], &truth[j]))
        .count();
    let fingerboard_correct = m
        .pairs
        .iter()
        .filter(|&&(i, j)| placements_agree(pred_placements[i], truth_placements[j]))
        .count();
    Ok(EvalReport {
        note_accuracy: if truth.is_empty() {
            None
        } else {
            fraction(matched, truth.len())
        },
        duration_accuracy: fraction(duration_correct, matched),
        fingerboard_accuracy: fraction(fingerboard_correct, matched),
        matched,
        predicted: pred.len(),
        truth: truth.len(),
        duration_correct,
        fingerboard_correct,
    })
}

/// Aligns and scores in one step, resolving placements through `table`.
pub fn evaluate(
    pred: &[NoteEvent],
    truth: &[NoteEvent],
    table: &FingerboardTable,
    tolerance: f64,
) -> Result<EvalReport, EvalError> {
    let m = align(pred, truth, tolerance)?;
    let place = |notes: &[NoteEvent]| {
        notes
            .iter()
            .map(|n| table.lookup(n.midi))
            .collect::<Vec<_>>()
    };
    score(&m, pred, truth, &place(pred), &place(truth))
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedReport {
    pub name: String,
    pub report: EvalReport,
    /// Processing time, when measured.
    pub seconds: Option<f64>,
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |f| format!("{:.1}%", f * 100.0))
}

/// Plain-text table with one row per report; unmeasured cells read `N/A`.
pub fn report_table(reports: &[NamedReport]) -> String {
    let header = [
        "Score",
        "n",
        "Note acc.",
        "Dur. acc.",
        "Time (s)",
        "Fboard acc.",
    ];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.report.truth.to_string(),
                percent(r.report.note_accuracy),
                percent(r.report.duration_accuracy),
                r.seconds
                    .map_or_else(|| "N/A".to_string(), |s| format!("{s:.1}")),
                percent(r.report.fingerboard_accuracy),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        for (k, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if k == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    };
    line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
