//! Randomized patch trials checked against a reference splice.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use narrowfix::patch::{apply, inverse, parse_diff, PatchError};

const ALPHABET: &[&str] = &["a;", "b = c;", "    x++;", "", "int y = 0;", "}", "  f(a, b);"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trial {
    /// Parsed, applied, matched the reference and inverted exactly.
    RoundTrip { had_duplicates: bool },
    /// The reference predicted this error and the parser raised it.
    ExpectedError(&'static str),
    Mismatch(String),
}

#[derive(Debug, Clone)]
enum Edit {
    Replace { start: usize, removed: usize, added: Vec<String> },
    Insert { at: usize, context: usize, added: Vec<String> },
}

fn distance(start: usize, end: usize, t: usize) -> usize {
    if t < start {
        start - t
    } else if t >= end {
        t + 1 - end
    } else {
        0
    }
}

/// Occurrence nearest to `t`; `Err` on a tie.
fn nearest(cands: &[(usize, usize, usize)], t: usize) -> Result<usize, ()> {
    let mut ds: Vec<(usize, usize)> = cands.iter().map(|&(s, e, key)| (distance(s, e, t), key)).collect();
    ds.sort();
    match ds.as_slice() {
        [(d0, _), (d1, _), ..] if d0 == d1 => Err(()),
        [(_, k), ..] => Ok(*k),
        [] => unreachable!("the intended position always matches"),
    }
}

fn occurrences(lines: &[String], block: &[String]) -> Vec<usize> {
    (0..=lines.len().saturating_sub(block.len()))
        .filter(|&i| i + block.len() <= lines.len() && lines[i..i + block.len()] == *block)
        .collect()
}

pub fn run_trial(rng: &mut ChaCha8Rng) -> Trial {
    let n = rng.gen_range(1..40usize);
    let lines: Vec<String> = (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())].to_string()).collect();
    let eol = if rng.gen_bool(0.2) { "\r\n" } else { "\n" };
    // A trailing empty line needs its terminator to exist at all.
    let final_newline = rng.gen_bool(0.8) || lines[n - 1].is_empty();
    let mut text = lines.join(eol);
    if final_newline {
        text.push_str(eol);
    }
    let file_eol = if n > 1 || final_newline { eol } else { "\n" };

    // Random edits at intended positions; overlaps are allowed on purpose.
    let mut edits = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let added: Vec<String> = (0..rng.gen_range(0..=3)).map(|_| format!("w{}();", rng.gen_range(0..1000))).collect();
        if rng.gen_bool(0.3) && n >= 1 {
            let context = rng.gen_range(1..=2usize.min(n));
            let at = rng.gen_range(context..=n);
            let added = if added.is_empty() { vec!["inserted();".to_string()] } else { added };
            edits.push(Edit::Insert { at, context, added });
        } else {
            let removed = rng.gen_range(1..=3usize.min(n));
            let start = rng.gen_range(0..=n - removed);
            edits.push(Edit::Replace { start, removed, added });
        }
    }
    let t = rng.gen_range(0..n);

    let mut answer = String::new();
    for e in &edits {
        match e {
            Edit::Replace { start, removed, added } => {
                for l in &lines[*start..start + removed] {
                    answer.push_str(&format!("- {l}\n"));
                }
                for a in added {
                    answer.push_str(&format!("+ {a}\n"));
                }
            }
            Edit::Insert { at, context, added } => {
                for l in &lines[at - context..*at] {
                    answer.push_str(&format!("  {l}\n"));
                }
                for a in added {
                    answer.push_str(&format!("+ {a}\n"));
                }
            }
        }
        answer.push('\n');
    }

    // Reference resolution.
    let mut had_duplicates = false;
    let mut ambiguous = false;
    // (start, removed, added, is_insert)
    let mut resolved: Vec<(usize, usize, Vec<String>, bool)> = Vec::new();
    for e in &edits {
        match e {
            Edit::Replace { start, removed, added } => {
                let block = lines[*start..start + removed].to_vec();
                let occ = occurrences(&lines, &block);
                had_duplicates |= occ.len() > 1;
                let cands: Vec<(usize, usize, usize)> = occ.iter().map(|&s| (s, s + removed, s)).collect();
                match nearest(&cands, t) {
                    Ok(s) => resolved.push((s, *removed, added.clone(), false)),
                    Err(()) => ambiguous = true,
                }
            }
            Edit::Insert { at, context, added } => {
                let block = lines[at - context..*at].to_vec();
                let occ = occurrences(&lines, &block);
                had_duplicates |= occ.len() > 1;
                let cands: Vec<(usize, usize, usize)> =
                    occ.iter().map(|&s| (s + context, s + context + 1, s + context)).collect();
                match nearest(&cands, t) {
                    Ok(idx) if idx == n && !final_newline => {
                        let mut with_last = vec![lines[n - 1].clone()];
                        with_last.extend(added.iter().cloned());
                        resolved.push((n - 1, 1, with_last, false));
                    }
                    Ok(idx) => resolved.push((idx, 0, added.clone(), true)),
                    Err(()) => ambiguous = true,
                }
            }
        }
    }
    let parsed = parse_diff(&answer, Path::new("t.cpp"), &text, t as u32 + 1);
    if ambiguous {
        return match parsed {
            Err(PatchError::AmbiguousAnchor(..)) => Trial::ExpectedError("ambiguous"),
            other => Trial::Mismatch(format!("expected AmbiguousAnchor, got {other:?}\n{answer}")),
        };
    }
    resolved.sort_by_key(|r| (r.0, !r.3));
    let overlap = resolved.windows(2).any(|w| {
        let (a, b) = (&w[0], &w[1]);
        let (a_end, b_start) = (a.0 + a.1, b.0);
        (a.1 > 0 && b.1 > 0 && b_start < a_end)
            || (a.3 && b.3 && a.0 == b.0)
            || (a.1 > 0 && b.3 && b_start > a.0 && b_start < a_end)
            || (a.3 && b.1 > 0 && a.0 > b.0)
    });
    if overlap {
        return match parsed {
            Err(PatchError::Malformed(_)) => Trial::ExpectedError("overlap"),
            other => Trial::Mismatch(format!("expected overlap error, got {other:?}\n{answer}")),
        };
    }
    let patch = match parsed {
        Ok(p) => p,
        Err(e) => return Trial::Mismatch(format!("unexpected error {e:?}\n{answer}")),
    };
    if let Err(m) = hunk_invariants(&patch, &lines) {
        return Trial::Mismatch(format!("{m}\n{answer}"));
    }

    // Reference splice, bottom-up on (content, terminator) pairs.
    let mut pairs: Vec<(String, String)> = lines.iter().map(|l| (l.clone(), eol.to_string())).collect();
    if !final_newline {
        pairs.last_mut().unwrap().1 = String::new();
    }
    for (start, removed, added, _) in resolved.iter().rev() {
        let touches_end = start + removed == n && !final_newline && *removed > 0;
        let mut repl: Vec<(String, String)> = added.iter().map(|a| (a.clone(), file_eol.to_string())).collect();
        if touches_end {
            if let Some(last) = repl.last_mut() {
                last.1 = String::new();
            }
        }
        pairs.splice(*start..start + removed, repl);
    }
    let expected: String = pairs.into_iter().flat_map(|(l, e)| [l, e]).collect();

    let out = match apply(&patch, &text) {
        Ok(o) => o,
        Err(e) => return Trial::Mismatch(format!("apply failed: {e}")),
    };
    if out != expected {
        return Trial::Mismatch(format!("output differs from reference\n{answer}\n{out:?}\n{expected:?}"));
    }
    match apply(&inverse(&patch, &out), &out) {
        Ok(back) if back == text => Trial::RoundTrip { had_duplicates },
        Ok(back) => Trial::Mismatch(format!("inverse did not restore input: {back:?} vs {text:?}")),
        Err(e) => Trial::Mismatch(format!("inverse failed: {e}")),
    }
}

/// Hunks sorted and disjoint; removed lines verbatim at their anchor.
fn hunk_invariants(patch: &narrowfix::patch::Patch, lines: &[String]) -> Result<(), String> {
    let mut prev_end = 0usize;
    for h in &patch.hunks {
        if h.removed.is_empty() && h.added.is_empty() {
            return Err("empty hunk".into());
        }
        let start = h.anchor_line as usize - 1;
        if start < prev_end {
            return Err(format!("hunk at line {} overlaps or is out of order", h.anchor_line));
        }
        if lines.get(start..start + h.removed.len()) != Some(&h.removed[..]) {
            return Err(format!("removed lines do not match the file at line {}", h.anchor_line));
        }
        prev_end = start + h.removed.len();
    }
    Ok(())
}
