use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::classifier::EvalClassifier;
use super::metrics::{attribute_accuracy, bleu_scores, distinct_n, self_bleu, Distinct, SELF_BLEU_SAMPLE};
use crate::checkpoint::{write_atomic, FORMAT_VERSION};
use crate::corpus::AttributeSchema;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Report layout revision; bumped when keys change.
pub const REPORT_VERSION: u64 = 1;

/// `v<crate version>-f<checkpoint format>`.
pub fn version_string() -> String {
    format!("v{}-f{}", env!("CARGO_PKG_VERSION"), FORMAT_VERSION)
}

/// One generated response with its target aspects and gold references.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResponse {
    pub response: Vec<u32>,
    pub targets: Vec<(usize, usize)>,
    pub references: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub responses: usize,
    pub references: usize,
    pub self_bleu_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAccuracy {
    pub attribute: String,
    pub accuracy: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationAccuracy {
    pub spec: String,
    pub average: f64,
    pub per_attribute: Vec<Option<f64>>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctReport {
    pub distinct_1: Distinct,
    pub distinct_2: Distinct,
    pub distinct_3: Distinct,
}

/// Serialized with keys in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub report_version: u64,
    pub version: String,
    pub counts: Counts,
    pub accuracy: Vec<AttributeAccuracy>,
    pub average_accuracy: f64,
    pub combinations: Vec<CombinationAccuracy>,
    pub bleu: BleuReport,
    pub distinct: DistinctReport,
    pub self_bleu: f64,
    pub config: Value,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Rates in `[0, 1]` and counts consistent with the per-group tallies.
    pub fn check_invariants(&self) -> Result<()> {
        let mut rates = vec![
            self.average_accuracy,
            self.bleu.bleu_1,
            self.bleu.bleu_2,
            self.bleu.bleu_3,
            self.bleu.bleu_4,
            self.bleu.mean,
            self.self_bleu,
        ];
        for d in [&self.distinct.distinct_1, &self.distinct.distinct_2, &self.distinct.distinct_3] {
            rates.extend([d.sentence, d.corpus]);
        }
        rates.extend(self.accuracy.iter().filter_map(|a| a.accuracy));
        for c in &self.combinations {
            rates.push(c.average);
            rates.extend(c.per_attribute.iter().flatten());
        }
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Range(format!("rate {r} outside [0, 1]")));
        }
        let combo_total: usize = self.combinations.iter().map(|c| c.count).sum();
        if combo_total != self.counts.responses || self.counts.self_bleu_sample > self.counts.responses {
            return Err(Error::Integrity("report counts disagree with the number of responses".into()));
        }
        Ok(())
    }
}

/// Computes all metrics. Accuracy is also broken down per distinct target
/// assignment, in order of first appearance.
pub fn evaluate(
    items: &[ScoredResponse],
    schema: &AttributeSchema,
    classifiers: &[EvalClassifier],
    seed: u64,
    config: Value,
) -> Result<MetricsReport> {
    if items.is_empty() {
        return Err(Error::Input("no responses to evaluate".into()));
    }
    if classifiers.len() != schema.len() {
        return Err(Error::Schema(format!(
            "{} eval classifiers for {} attributes",
            classifiers.len(),
            schema.len()
        )));
    }
    let responses: Vec<Vec<u32>> = items.iter().map(|it| it.response.clone()).collect();
    let targets: Vec<Vec<(usize, usize)>> = items.iter().map(|it| it.targets.clone()).collect();
    let overall = attribute_accuracy(&responses, &targets, classifiers)?;

    let mut groups: Vec<(Vec<(usize, usize)>, Vec<usize>)> = Vec::new();
    for (k, t) in targets.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| g == t) {
            Some((_, ids)) => ids.push(k),
            None => groups.push((t.clone(), vec![k])),
        }
    }
    let mut combinations = Vec::new();
    for (t, ids) in &groups {
        let r: Vec<Vec<u32>> = ids.iter().map(|&k| responses[k].clone()).collect();
        let ts = vec![t.clone(); ids.len()];
        let acc = attribute_accuracy(&r, &ts, classifiers)?;
        combinations.push(CombinationAccuracy {
            spec: if t.is_empty() { "none".into() } else { schema.describe(t) },
            average: acc.average,
            per_attribute: acc.per_attribute,
            count: ids.len(),
        });
    }

    let references: Vec<Vec<Vec<u32>>> = items.iter().map(|it| it.references.clone()).collect();
    let b = bleu_scores(&responses, &references)?;
    let mut rng = SeededRng::new(seed, "self-bleu");
    let sb = if responses.len() >= 2 {
        self_bleu(&responses, SELF_BLEU_SAMPLE, &mut rng)?
    } else {
        0.0
    };
    let report = MetricsReport {
        report_version: REPORT_VERSION,
        version: version_string(),
        counts: Counts {
            responses: items.len(),
            references: references.iter().map(Vec::len).sum(),
            self_bleu_sample: if responses.len() >= 2 { responses.len().min(SELF_BLEU_SAMPLE) } else { 0 },
        },
        accuracy: schema
            .attributes
            .iter()
            .zip(overall.per_attribute.iter().zip(&overall.counts))
            .map(|(a, (acc, &count))| AttributeAccuracy {
                attribute: a.name.clone(),
                accuracy: *acc,
                count,
            })
            .collect(),
        average_accuracy: overall.average,
        combinations,
        bleu: BleuReport {
            bleu_1: b[0],
            bleu_2: b[1],
            bleu_3: b[2],
            bleu_4: b[3],
            mean: b.iter().sum::<f64>() / 4.0,
        },
        distinct: DistinctReport {
            distinct_1: distinct_n(&responses, 1)?,
            distinct_2: distinct_n(&responses, 2)?,
            distinct_3: distinct_n(&responses, 3)?,
        },
        self_bleu: sb,
        config,
    };
    report.check_invariants()?;
    Ok(report)
}

/// Writes the report as pretty JSON. The parent directory must exist.
pub fn emit_report(report: &MetricsReport, path: &Path) -> Result<()> {
    write_atomic(path, report.to_json()?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classifiers() -> Vec<EvalClassifier> {
        (0..3)
            .map(|i| {
                let mut c = EvalClassifier::zeros(i, 30, 2);
                let w = c.params_mut().get_mut("w").unwrap();
                w.row_mut(10 + 2 * i)[0] = 1.0;
                w.row_mut(11 + 2 * i)[1] = 1.0;
                c
            })
            .collect()
    }

    fn items() -> Vec<ScoredResponse> {
        let schema = AttributeSchema::default();
        let mut out = Vec::new();
        for (c, combo) in schema.combinations().into_iter().enumerate() {
            for k in 0..3u32 {
                let targets: Vec<(usize, usize)> = combo.iter().copied().enumerate().collect();
                let mut response: Vec<u32> = targets.iter().map(|&(i, j)| (10 + 2 * i + j) as u32).collect();
                response.push(20 + k);
                if c == 0 && k == 0 {
                    response[0] = 11;
                }
                out.push(ScoredResponse {
                    response,
                    targets,
                    references: vec![vec![10, 12, 14, 20 + k]],
                });
            }
        }
        out
    }

    #[test]
    fn evaluate_tallies() {
        let schema = AttributeSchema::default();
        let r = evaluate(&items(), &schema, &classifiers(), 0, Value::Null).unwrap();
        assert_eq!(r.counts.responses, 24);
        assert_eq!(r.counts.self_bleu_sample, 24);
        assert_eq!(r.combinations.len(), 8);
        assert_eq!(r.combinations[0].spec, "style=lyrical,attitude=optimistic,mind=critical");
        assert_eq!(r.combinations[0].per_attribute[0], Some(2.0 / 3.0));
        assert_eq!(r.combinations[1].average, 1.0);
        assert_eq!(r.accuracy[0].accuracy, Some(23.0 / 24.0));
        assert_eq!(r.accuracy[0].count, 24);
        assert!((r.average_accuracy - (23.0 / 24.0 + 2.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip_and_key_order() {
        let schema = AttributeSchema::default();
        let cfg = serde_json::json!({"seed": 3, "lambda": 1.0});
        let r = evaluate(&items(), &schema, &classifiers(), 3, cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.json");
        emit_report(&r, &p).unwrap();
        assert_eq!(MetricsReport::load(&p).unwrap(), r);
        let text = std::fs::read_to_string(&p).unwrap();
        let keys = ["\"report_version\"", "\"version\"", "\"counts\"", "\"accuracy\"", "\"combinations\"", "\"bleu\"", "\"distinct\"", "\"self_bleu\"", "\"config\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(emit_report(&r, &dir.path().join("missing/report.json")).is_err());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let schema = AttributeSchema::default();
        let a = evaluate(&items(), &schema, &classifiers(), 9, Value::Null).unwrap();
        let b = evaluate(&items(), &schema, &classifiers(), 9, Value::Null).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn version_string_shape() {
        let v = version_string();
        assert!(v.starts_with('v') && v.ends_with(&format!("-f{FORMAT_VERSION}")));
    }
}
