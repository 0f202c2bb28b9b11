//! Semantic-driven prompt construction for few-shot prompt-based fine-tuning.
//!
//! * [`corpus`]: datasets, CoNLL-U annotations, seeded K-shot splits
//! * [`template`]: cloze template notation, dependency and meta prompts
//! * [`depfilter`]: POS / dependency token filters and the filter sweep
//! * [`mapping`]: verbalizers, weighted multi-token heads, ensembles
//! * [`lm`]: masked-LM backends (built-in tiny encoder, remote client)
//! * [`harness`]: the seeds × hyperparameter protocol and reports
//! * [`cli`]: command-line front end

pub mod cli;
pub mod corpus;
pub mod depfilter;
pub mod harness;
pub mod lm;
pub mod mapping;
pub mod template;
