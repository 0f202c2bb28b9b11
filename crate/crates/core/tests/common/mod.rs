#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semprompt::corpus::{Example, LabelSet};
use semprompt::harness::{BackendSpec, Experiment, Protocol, TinySpec};
use semprompt::lm::OptimizerKind;
use semprompt::mapping::preset;
use semprompt::template::parse_template;

pub mod fixture;
pub mod goldens;
pub mod oracles;

pub const FILLER: [&str; 16] = [
    "the", "a", "movie", "film", "plot", "story", "was", "is", "actors", "scene", "some", "really", "quite", "script",
    "music", "ending",
];

/// Two-label task where exactly one token ("great" / "awful") decides the label.
pub fn synthetic(n_per_label: usize, seed: u64, id_prefix: &str) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..n_per_label {
        for label in 0..2 {
            let len = rng.random_range(3..7);
            let mut words: Vec<&str> = (0..len).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
            let at = rng.random_range(0..=words.len());
            words.insert(at, if label == 1 { "great" } else { "awful" });
            out.push(Example {
                id: format!("{id_prefix}{}", 2 * i + label),
                sent0: words.join(" "),
                sent1: None,
                label,
            });
        }
    }
    out
}

pub fn labels() -> LabelSet {
    LabelSet::new(["negative", "positive"]).unwrap()
}

pub const TEMPLATE: &str = "*cls**sent_0*_It_was*mask*.*sep+*";

/// Protocol tuned for the toy backbone: one cell per seed.
pub fn toy_protocol() -> Protocol {
    Protocol {
        k: 16,
        seeds: vec![1, 2, 3, 4, 5],
        batch_sizes: vec![4],
        learning_rates: vec![3e-3],
        max_steps: 600,
        eval_every: 50,
        ..Protocol::default()
    }
}

pub fn toy_experiment() -> Experiment {
    let mut exp = Experiment::new(
        "synthetic",
        labels(),
        synthetic(64, 11, "train-"),
        synthetic(100, 12, "test-"),
        parse_template(TEMPLATE).unwrap(),
        vec![preset("sst-2/single").unwrap()],
    );
    exp.protocol = toy_protocol();
    exp.backend = BackendSpec::Tiny(TinySpec {
        dim: 16,
        layers: 1,
        ffn_dim: None,
        max_len: 32,
        seed: 3,
        optimizer: OptimizerKind::adamw(),
    });
    exp
}

pub mod grid {
    //! Three-filter task with a known ranking. Sentences are long enough
    //! that the label word at the end is truncated away; it survives only
    //! in the snippet of the `POS:JJ` filter. `POS:NN` selects a noun that
    //! agrees with the label three times out of four, `POS:VB` a verb that
    //! carries no signal.

    use super::*;
    use semprompt::corpus::{AnnotatedSentence, AnnotatedToken};
    use semprompt::depfilter::Filter;
    use semprompt::harness::Annotations;

    const NOUNS: [&str; 2] = ["villain", "hero"];
    const VERBS: [&str; 4] = ["runs", "sings", "falls", "waits"];

    fn sentence(rng: &mut ChaCha8Rng, label: usize) -> Vec<(String, &'static str)> {
        let mut toks: Vec<(String, &'static str)> = (0..12)
            .map(|_| (FILLER[rng.random_range(0..FILLER.len())].to_string(), "DT"))
            .collect();
        let noun = if rng.random_bool(0.75) { label } else { 1 - label };
        toks.push((NOUNS[noun].to_string(), "NN"));
        toks.push((VERBS[rng.random_range(0..VERBS.len())].to_string(), "VB"));
        toks.push((if label == 1 { "great" } else { "awful" }.to_string(), "JJ"));
        toks
    }

    fn build(n_per_label: usize, seed: u64, prefix: &str) -> (Vec<Example>, Vec<AnnotatedSentence>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut examples = Vec::new();
        let mut parses = Vec::new();
        for i in 0..n_per_label {
            for label in 0..2 {
                let toks = sentence(&mut rng, label);
                examples.push(Example {
                    id: format!("{prefix}{}", 2 * i + label),
                    sent0: toks.iter().map(|t| t.0.as_str()).collect::<Vec<_>>().join(" "),
                    sent1: None,
                    label,
                });
                let tokens = toks
                    .iter()
                    .enumerate()
                    .map(|(j, (form, pos))| AnnotatedToken {
                        form: form.clone(),
                        pos: pos.to_string(),
                        head: if j == 0 { 0 } else { 1 },
                        deprel: if j == 0 { "root" } else { "dep" }.to_string(),
                    })
                    .collect();
                parses.push(AnnotatedSentence::new(tokens).unwrap());
            }
        }
        (examples, parses)
    }

    pub fn candidates() -> Vec<Filter> {
        vec![Filter::pos("VB"), Filter::pos("JJ"), Filter::pos("NN")]
    }

    pub fn experiment() -> Experiment {
        let (train, train_parses) = build(48, 21, "train-");
        let (test, test_parses) = build(100, 22, "test-");
        let mut exp = toy_experiment();
        exp.train_annotations = Some(Annotations::aligned(&train, train_parses, None).unwrap());
        exp.test_annotations = Some(Annotations::aligned(&test, test_parses, None).unwrap());
        exp.train_pool = train;
        exp.test = test;
        exp.max_dep_tokens = 2;
        if let BackendSpec::Tiny(t) = &mut exp.backend {
            t.max_len = 16;
        }
        exp
    }
}
