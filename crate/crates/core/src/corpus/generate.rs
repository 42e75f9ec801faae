//! Template-and-lexicon generator for attribute-tagged dialogues.
//!
//! Every response has the shape `<topic> <slot_0> … <slot_{N-1}> .`, with one
//! two-token slot per attribute. A slot holds two markers of its aspect when
//! the attribute is labeled and a fixed neutral pair otherwise. Training
//! examples label exactly one attribute; test examples label all of them.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::jsonl::RawExample;
use super::schema::AttributeSchema;
use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Minimum number of markers per aspect.
pub const MIN_MARKERS: usize = 30;
/// Minimum number of topics.
pub const MIN_TOPICS: usize = 20;
/// Markers drawn into each labeled slot.
pub const MARKERS_PER_SLOT: usize = 2;

const BUILTIN_LEXICONS: &str = include_str!("../../data/lexicons.json");
const BUILTIN_TOPICS: &str = include_str!("../../data/topics.txt");

/// Slot filler for attributes an example does not express.
const NEUTRAL_PAIRS: [[&str; 2]; 6] = [
    ["as", "such"],
    ["for", "now"],
    ["in", "turn"],
    ["by", "then"],
    ["at", "times"],
    ["of", "course"],
];

const QUERY_TEMPLATES: [&str; 6] = [
    "what do you think about {}?",
    "have you ever tried {}?",
    "tell me something about {}.",
    "do you spend much time on {}?",
    "how did you get into {}?",
    "is {} worth the effort?",
];

const REPLY_TEMPLATES: [&str; 4] = [
    "i have been reading about {} lately.",
    "my neighbor talks about {} all the time.",
    "i tried {} once last year.",
    "{} came up at work today.",
];

/// The fifty topics shipped with the crate.
pub fn builtin_topics() -> Vec<String> {
    BUILTIN_TOPICS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Marker words per attribute and aspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicons(pub BTreeMap<String, BTreeMap<String, Vec<String>>>);

impl Lexicons {
    /// Resolves a lexicon for every aspect in `schema`, preferring markers
    /// embedded in the schema over the built-in lists, and checks that all
    /// lexicons are large enough and pairwise disjoint.
    pub fn for_schema(schema: &AttributeSchema) -> Result<Self> {
        let builtin: BTreeMap<String, Vec<String>> =
            serde_json::from_str(BUILTIN_LEXICONS).expect("built-in lexicons parse");
        let mut out = BTreeMap::new();
        for a in &schema.attributes {
            let mut per = BTreeMap::new();
            for asp in &a.aspects {
                let words = a
                    .markers
                    .get(asp)
                    .or_else(|| builtin.get(asp))
                    .ok_or_else(|| {
                        Error::Schema(format!("no marker lexicon for aspect {}/{asp}", a.name))
                    })?;
                per.insert(asp.clone(), words.iter().map(|w| w.to_lowercase()).collect());
            }
            out.insert(a.name.clone(), per);
        }
        let lex = Lexicons(out);
        lex.validate(schema)?;
        Ok(lex)
    }

    pub fn markers(&self, schema: &AttributeSchema, attr: usize, aspect: usize) -> &[String] {
        let a = &schema.attributes[attr];
        &self.0[&a.name][&a.aspects[aspect]]
    }

    fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        let reserved: HashSet<String> = NEUTRAL_PAIRS
            .iter()
            .flatten()
            .copied()
            .chain(QUERY_TEMPLATES.iter().chain(&REPLY_TEMPLATES).flat_map(|t| t.split(' ')))
            .flat_map(tokenize)
            .collect();
        let mut owner: BTreeMap<&str, String> = BTreeMap::new();
        for (i, a) in schema.attributes.iter().enumerate() {
            for (j, asp) in a.aspects.iter().enumerate() {
                let words = self.markers(schema, i, j);
                if words.len() < MIN_MARKERS {
                    return Err(Error::Schema(format!(
                        "lexicon {}/{asp} has {} markers, need at least {MIN_MARKERS}",
                        a.name,
                        words.len()
                    )));
                }
                for w in words {
                    if tokenize(w).len() != 1 {
                        return Err(Error::Schema(format!("marker {w:?} is not a single token")));
                    }
                    if reserved.contains(w) {
                        return Err(Error::Schema(format!(
                            "marker {w:?} collides with template filler"
                        )));
                    }
                    let here = format!("{}/{asp}", a.name);
                    if let Some(prev) = owner.insert(w, here.clone()) {
                        return Err(Error::Schema(format!(
                            "marker {w:?} appears in both {prev} and {here}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Attribute-aspect pairs whose markers occur in `tokens`, with counts.
    pub fn count_markers<S: AsRef<str>>(
        &self,
        schema: &AttributeSchema,
        tokens: &[S],
    ) -> BTreeMap<(usize, usize), usize> {
        let mut out = BTreeMap::new();
        for (i, a) in schema.attributes.iter().enumerate() {
            for j in 0..a.aspects.len() {
                let set: HashSet<&str> = self
                    .markers(schema, i, j)
                    .iter()
                    .map(String::as_str)
                    .collect();
                let c = tokens.iter().filter(|t| set.contains(t.as_ref())).count();
                if c > 0 {
                    out.insert((i, j), c);
                }
            }
        }
        out
    }
}

/// How many examples to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub train_per_aspect: usize,
    pub test_total: usize,
}

impl Default for CorpusCounts {
    fn default() -> Self {
        CorpusCounts {
            train_per_aspect: 6000,
            test_total: 800,
        }
    }
}

/// Generated train and test splits together with the lexicons they use.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub train: Vec<RawExample>,
    pub test: Vec<RawExample>,
    pub lexicons: Lexicons,
}

struct Generator<'a> {
    schema: &'a AttributeSchema,
    lexicons: &'a Lexicons,
    topics: &'a [String],
    zipf: Vec<f64>,
}

impl Generator<'_> {
    fn context(&self, topic: &str, rng: &mut SeededRng) -> Vec<String> {
        let fill = |t: &str| t.replacen("{}", topic, 1);
        let turns = if rng.index(2) == 0 { 1 } else { 3 };
        let mut ctx = Vec::with_capacity(turns);
        for k in 0..turns {
            let tpl = if k % 2 == 0 {
                QUERY_TEMPLATES[rng.index(QUERY_TEMPLATES.len())]
            } else {
                REPLY_TEMPLATES[rng.index(REPLY_TEMPLATES.len())]
            };
            ctx.push(fill(tpl));
        }
        ctx
    }

    /// Two distinct markers, Zipf-weighted by lexicon rank.
    fn marker_pair(&self, attr: usize, aspect: usize, rng: &mut SeededRng) -> [String; 2] {
        let words = self.lexicons.markers(self.schema, attr, aspect);
        let w = &self.zipf[..words.len()];
        let first = rng.weighted_index(w);
        let mut rest = w.to_vec();
        rest[first] = 0.0;
        let second = rng.weighted_index(&rest);
        [words[first].clone(), words[second].clone()]
    }

    fn example(&self, labels: &[Option<usize>], rng: &mut SeededRng) -> RawExample {
        let topic = &self.topics[rng.index(self.topics.len())];
        let context = self.context(topic, rng);
        let mut words: Vec<String> = vec![topic.clone()];
        let mut label_names = Vec::new();
        for (i, label) in labels.iter().enumerate() {
            match label {
                Some(j) => {
                    words.extend(self.marker_pair(i, *j, rng));
                    let a = &self.schema.attributes[i];
                    label_names.push((a.name.clone(), a.aspects[*j].clone()));
                }
                None => words.extend(NEUTRAL_PAIRS[i].iter().map(|w| w.to_string())),
            }
        }
        let response = format!("{}.", words.join(" "));
        RawExample {
            context,
            response,
            labels: label_names,
        }
    }
}

/// Generates a deterministic train/test corpus.
///
/// Train: `train_per_aspect` single-label examples for every aspect of every
/// attribute. Test: `test_total` fully labeled examples assigned round-robin
/// over all aspect combinations. Both splits are shuffled.
pub fn gen_corpus(
    schema: &AttributeSchema,
    topics: &[String],
    seed: u64,
    counts: CorpusCounts,
) -> Result<GeneratedCorpus> {
    schema.validate()?;
    if topics.len() < MIN_TOPICS {
        return Err(Error::Input(format!(
            "need at least {MIN_TOPICS} topics, got {}",
            topics.len()
        )));
    }
    if schema.len() > NEUTRAL_PAIRS.len() {
        return Err(Error::Capacity(format!(
            "templates support at most {} attributes",
            NEUTRAL_PAIRS.len()
        )));
    }
    let lexicons = Lexicons::for_schema(schema)?;
    let topic_words: HashSet<String> = topics.iter().flat_map(|t| tokenize(t)).collect();
    for per in lexicons.0.values() {
        for w in per.values().flatten() {
            if topic_words.contains(w) {
                return Err(Error::Schema(format!("marker {w:?} collides with a topic")));
            }
        }
    }

    let min_markers = lexicons
        .0
        .values()
        .flat_map(|per| per.values().map(Vec::len))
        .min()
        .unwrap_or(0);
    let pairs = (min_markers * (min_markers - 1)) as u128;
    let per_aspect_capacity = topics.len() as u128 * pairs;
    if counts.train_per_aspect as u128 > per_aspect_capacity {
        return Err(Error::Capacity(format!(
            "{} train examples per aspect exceeds template capacity {per_aspect_capacity}",
            counts.train_per_aspect
        )));
    }
    let test_capacity = topics.len() as u128 * pairs.saturating_pow(schema.len() as u32);
    if counts.test_total as u128 > test_capacity {
        return Err(Error::Capacity(format!(
            "{} test examples exceeds template capacity {test_capacity}",
            counts.test_total
        )));
    }

    let max_len = lexicons
        .0
        .values()
        .flat_map(|per| per.values().map(Vec::len))
        .max()
        .unwrap_or(0);
    let generator = Generator {
        schema,
        lexicons: &lexicons,
        topics,
        zipf: (0..max_len).map(|r| 1.0 / (r as f64 + 1.0)).collect(),
    };

    let mut rng = SeededRng::new(seed, "corpus/train");
    let mut train = Vec::with_capacity(counts.train_per_aspect * schema.aspect_counts().iter().sum::<usize>());
    for (i, a) in schema.attributes.iter().enumerate() {
        for j in 0..a.aspects.len() {
            let mut labels = vec![None; schema.len()];
            labels[i] = Some(j);
            for _ in 0..counts.train_per_aspect {
                train.push(generator.example(&labels, &mut rng));
            }
        }
    }
    rng.shuffle(&mut train);

    let combos = schema.combinations();
    let mut rng = SeededRng::new(seed, "corpus/test");
    let mut test = Vec::with_capacity(counts.test_total);
    for k in 0..counts.test_total {
        let labels: Vec<Option<usize>> = combos[k % combos.len()].iter().map(|&j| Some(j)).collect();
        test.push(generator.example(&labels, &mut rng));
    }
    rng.shuffle(&mut test);

    Ok(GeneratedCorpus {
        train,
        test,
        lexicons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratedCorpus {
        gen_corpus(
            &AttributeSchema::default(),
            &builtin_topics(),
            3,
            CorpusCounts {
                train_per_aspect: 50,
                test_total: 37,
            },
        )
        .unwrap()
    }

    #[test]
    fn builtin_resources_are_consistent() {
        assert_eq!(builtin_topics().len(), 50);
        Lexicons::for_schema(&AttributeSchema::default()).unwrap();
    }

    #[test]
    fn deterministic() {
        assert_eq!(small(), small());
    }

    #[test]
    fn train_examples_are_single_aspect() {
        let schema = AttributeSchema::default();
        let c = small();
        assert_eq!(c.train.len(), 300);
        for ex in &c.train {
            assert_eq!(ex.labels.len(), 1);
            let found = c.lexicons.count_markers(&schema, &tokenize(&ex.response));
            assert_eq!(found.len(), 1, "{}", ex.response);
            let (&(i, j), &n) = found.iter().next().unwrap();
            assert_eq!(schema.attributes[i].name, ex.labels[0].0);
            assert_eq!(schema.attributes[i].aspects[j], ex.labels[0].1);
            assert!(n >= 2);
        }
    }

    #[test]
    fn test_set_covers_combinations_evenly() {
        let schema = AttributeSchema::default();
        let c = small();
        let mut per: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for ex in &c.test {
            assert_eq!(ex.labels.len(), 3);
            let found = c.lexicons.count_markers(&schema, &tokenize(&ex.response));
            assert_eq!(found.len(), 3);
            assert!(found.values().all(|&n| n >= 2));
            *per.entry(ex.labels.iter().map(|l| l.1.clone()).collect()).or_default() += 1;
        }
        assert_eq!(per.len(), 8);
        assert!(per.values().all(|&n| n == 4 || n == 5), "{per:?}");
    }

    #[test]
    fn lexicon_collision_is_a_schema_error() {
        let mut schema = AttributeSchema::default();
        let mut plain: Vec<String> = Lexicons::for_schema(&schema).unwrap().0["style"]["plain"].clone();
        plain[0] = "moonlit".into();
        schema.attributes[0].markers.insert("plain".into(), plain);
        assert!(matches!(
            gen_corpus(&schema, &builtin_topics(), 1, CorpusCounts::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn small_lexicon_is_a_schema_error() {
        let mut schema = AttributeSchema::default();
        schema.attributes[0]
            .markers
            .insert("plain".into(), (0..10).map(|i| format!("w{i}")).collect());
        assert!(matches!(Lexicons::for_schema(&schema), Err(Error::Schema(_))));
    }

    #[test]
    fn over_capacity_is_rejected() {
        let r = gen_corpus(
            &AttributeSchema::default(),
            &builtin_topics(),
            1,
            CorpusCounts {
                train_per_aspect: 10_000_000,
                test_total: 8,
            },
        );
        assert!(matches!(r, Err(Error::Capacity(_))));
    }
}
