use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::classifier::EvalClassifier;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const SELF_BLEU_SAMPLE: usize = 150;
const MAX_ORDER: usize = 4;

fn ngram_counts<T: Eq + Hash + Clone>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped matches and candidate totals per order, plus lengths.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BleuStats {
    matches: [usize; MAX_ORDER],
    totals: [usize; MAX_ORDER],
    cand_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn add(&mut self, o: &BleuStats) {
        for k in 0..MAX_ORDER {
            self.matches[k] += o.matches[k];
            self.totals[k] += o.totals[k];
        }
        self.cand_len += o.cand_len;
        self.ref_len += o.ref_len;
    }

    /// BLEU-1..4 from pooled counts.
    fn scores(&self) -> [f64; MAX_ORDER] {
        let mut out = [0.0; MAX_ORDER];
        if self.cand_len == 0 {
            return out;
        }
        let bp = if self.cand_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        };
        let mut log_sum = 0.0;
        for k in 0..MAX_ORDER {
            let p = if self.matches[k] == 0 {
                1.0 / (self.totals[k] as f64 + 1.0)
            } else {
                self.matches[k] as f64 / self.totals[k] as f64
            };
            log_sum += p.ln();
            out[k] = bp * (log_sum / (k + 1) as f64).exp();
        }
        out
    }
}

fn segment_stats<T: Eq + Hash + Clone>(cand: &[T], refs: &[&[T]]) -> BleuStats {
    let mut s = BleuStats {
        cand_len: cand.len(),
        ..Default::default()
    };
    // Closest reference length, ties to the shorter one.
    s.ref_len = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - cand.len() as i64).abs(), l))
        .unwrap_or(0);
    for n in 1..=MAX_ORDER {
        let c = ngram_counts(cand, n);
        let mut max_ref: HashMap<&[T], usize> = HashMap::new();
        for r in refs {
            for (g, cnt) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(cnt);
            }
        }
        s.totals[n - 1] = c.values().sum();
        s.matches[n - 1] = c
            .iter()
            .map(|(g, cnt)| (*cnt).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

/// Corpus BLEU-1..4 (cumulative, uniform weights) with brevity penalty.
/// An order with zero clipped matches uses `1 / (total + 1)` as precision.
pub fn bleu_scores<T: Eq + Hash + Clone>(candidates: &[Vec<T>], references: &[Vec<Vec<T>>]) -> Result<[f64; 4]> {
    if candidates.len() != references.len() {
        return Err(Error::Input(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let mut total = BleuStats::default();
    for (c, rs) in candidates.iter().zip(references) {
        let refs: Vec<&[T]> = rs.iter().map(Vec::as_slice).collect();
        total.add(&segment_stats(c, &refs));
    }
    Ok(total.scores())
}

/// Mean of corpus BLEU-1..4.
pub fn bleu<T: Eq + Hash + Clone>(candidates: &[Vec<T>], references: &[Vec<Vec<T>>]) -> Result<f64> {
    Ok(bleu_scores(candidates, references)?.iter().sum::<f64>() / MAX_ORDER as f64)
}

/// Mean of BLEU-1..4 for a single segment against several references.
pub fn sentence_bleu<T: Eq + Hash + Clone>(candidate: &[T], references: &[&[T]]) -> f64 {
    segment_stats(candidate, references).scores().iter().sum::<f64>() / MAX_ORDER as f64
}

/// Draws up to `sample_size` responses and scores each against all other
/// drawn responses; the mean is returned.
pub fn self_bleu<T: Eq + Hash + Clone>(responses: &[Vec<T>], sample_size: usize, rng: &mut SeededRng) -> Result<f64> {
    if responses.len() < 2 || sample_size < 2 {
        return Err(Error::Input("self-BLEU needs at least two responses".into()));
    }
    let mut idx: Vec<usize> = (0..responses.len()).collect();
    rng.shuffle(&mut idx);
    idx.truncate(sample_size);
    let picked: Vec<&[T]> = idx.iter().map(|&k| responses[k].as_slice()).collect();
    let mut sum = 0.0;
    for (k, cand) in picked.iter().enumerate() {
        let refs: Vec<&[T]> = picked
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, r)| *r)
            .collect();
        sum += sentence_bleu(cand, &refs);
    }
    Ok(sum / picked.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distinct {
    /// Mean over responses with at least `n` tokens.
    pub sentence: f64,
    /// Unique over total n-grams, pooled over all responses.
    pub corpus: f64,
}

pub fn distinct_n<T: Eq + Hash + Clone>(responses: &[Vec<T>], n: usize) -> Result<Distinct> {
    if !(1..=3).contains(&n) {
        return Err(Error::Range(format!("distinct-n supports n in 1..=3, got {n}")));
    }
    let mut pooled: HashMap<&[T], usize> = HashMap::new();
    let mut total = 0usize;
    let (mut sent_sum, mut sent_count) = (0.0, 0usize);
    for r in responses {
        if r.len() < n {
            continue;
        }
        let counts = ngram_counts(r, n);
        let grams = r.len() + 1 - n;
        sent_sum += counts.len() as f64 / grams as f64;
        sent_count += 1;
        total += grams;
        for (g, c) in counts {
            *pooled.entry(g).or_insert(0) += c;
        }
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    Ok(Distinct {
        sentence: ratio(sent_sum, sent_count as f64),
        corpus: ratio(pooled.len() as f64, total as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// `None` for attributes that no target mentions.
    pub per_attribute: Vec<Option<f64>>,
    pub average: f64,
    /// Number of scored responses per attribute.
    pub counts: Vec<usize>,
}

/// For each attribute, the fraction of responses whose predicted aspect
/// equals the target; `targets[k]` lists `(attribute, aspect)` for response
/// `k`. The average is the unweighted mean over scored attributes.
pub fn attribute_accuracy(
    responses: &[Vec<u32>],
    targets: &[Vec<(usize, usize)>],
    classifiers: &[EvalClassifier],
) -> Result<AccuracyReport> {
    if responses.is_empty() || responses.len() != targets.len() {
        return Err(Error::Input(format!(
            "{} responses for {} targets",
            responses.len(),
            targets.len()
        )));
    }
    let n = classifiers.len();
    let mut hits = vec![0usize; n];
    let mut counts = vec![0usize; n];
    for (r, ts) in responses.iter().zip(targets) {
        for &(i, j) in ts {
            let c = classifiers
                .get(i)
                .filter(|c| c.attribute == i)
                .ok_or_else(|| Error::Range(format!("no eval classifier for attribute {i}")))?;
            counts[i] += 1;
            if c.predict(r) == j {
                hits[i] += 1;
            }
        }
    }
    let per_attribute: Vec<Option<f64>> = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
        .collect();
    let scored: Vec<f64> = per_attribute.iter().flatten().copied().collect();
    let average = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    Ok(AccuracyReport {
        per_attribute,
        average,
        counts,
    })
}
