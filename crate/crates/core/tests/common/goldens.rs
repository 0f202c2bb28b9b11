//! Renderings checked against the byte-exact files in `tests/golden/`.

use semprompt::corpus::{parse_conllu_str, Example};
use semprompt::depfilter::{extract, Filter};
use semprompt::lm::Tokenizer;
use semprompt::template::{parse_template, render, render_text, MetaPrompt, Template};
use std::fmt::Write;
use std::path::PathBuf;

pub fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// `Ok` when `actual` equals the golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn check(name: &str, actual: &str) -> Result<(), String> {
    let p = path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&p, actual).map_err(|e| e.to_string())?;
    }
    let expected = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs:\n--- expected\n{expected}--- actual\n{actual}"))
    }
}

fn single(s: &str) -> Example {
    Example {
        id: "0".into(),
        sent0: s.into(),
        sent1: None,
        label: 0,
    }
}

fn pair(a: &str, b: &str) -> Example {
    Example {
        id: "0".into(),
        sent0: a.into(),
        sent1: Some(b.into()),
        label: 0,
    }
}

pub const TABLE: [(&str, &str); 5] = [
    ("SST-2", "*cls**sent_0*_It_was*mask*.*sep+*"),
    ("SST-5", "*cls**sent_0*_This_movie_was*mask*.*sep+*"),
    ("TREC", "*cls**mask*:*+sent_0**sep+*"),
    ("QNLI", "*cls**sent-_0*?*mask*,*+sentl_1**sep+*"),
    ("SNLI", "*cls**sent-_0*?*mask*,*+sentl_1**sep+*"),
];

fn inputs(task: &str) -> Example {
    match task {
        "SST-2" => single("a gorgeous, witty, seductive movie."),
        "SST-5" => single("the plot is nothing but boilerplate clichés."),
        "TREC" => single("what is the capital of peru?"),
        "QNLI" => pair(
            "What came into force after the new constitution was herald?",
            "As of that day, the new constitution heralding the Second Republic came into force.",
        ),
        _ => pair("A soccer game with multiple males playing.", "Some men are playing a sport."),
    }
}

fn tokenized(t: &Template, e: &Example, text: &str) -> String {
    let tok = Tokenizer::build([text], true);
    let r = render(t, e, None, None, &tok, 128).unwrap();
    format!("{} @{}", tok.decode(&r.token_ids), r.mask_position)
}

/// Text and token renderings of the five task templates.
pub fn table_templates() -> Result<String, String> {
    let mut out = String::new();
    for (task, notation) in TABLE {
        let t = parse_template(notation).map_err(|e| format!("{task}: {e}"))?;
        if t.to_string() != notation {
            return Err(format!("{task}: display gives {}", t));
        }
        let e = inputs(task);
        let text = render_text(&t, &e, None, None).map_err(|e| format!("{task}: {e}"))?;
        writeln!(out, "{task}\t{notation}").unwrap();
        writeln!(out, "  text:   {text}").unwrap();
        writeln!(out, "  tokens: {}", tokenized(&t, &e, &text)).unwrap();
    }
    Ok(out)
}

const PARSE: &str = "\
1\tThe\tthe\tDET\tDT\t_\t3\tdet\t_\t_
2\tgorgeous\tgorgeous\tADJ\tJJ\t_\t3\tamod\t_\t_
3\tfilm\tfilm\tNOUN\tNN\t_\t4\tnsubj\t_\t_
4\tmoved\tmove\tVERB\tVBD\t_\t0\troot\t_\t_
5\tevery\tevery\tDET\tDT\t_\t6\tdet\t_\t_
6\tviewer\tviewer\tNOUN\tNN\t_\t4\tobj\t_\t_

";

/// Dependency prompts for one parsed sentence under several filters.
pub fn dep_prompts() -> Result<String, String> {
    let sentence = &parse_conllu_str(PARSE).map_err(|e| e.to_string())?[0];
    let e = single("The gorgeous film moved every viewer");
    let t = parse_template("*cls**sent_0*.*dep*_It_is*mask**sep+*").map_err(|e| e.to_string())?;
    let mut out = String::new();
    for f in ["DEP:amod", "DEP:nsubj", "DEP:ROOT", "POS:NN", "POS:JJ", "POS:VB"] {
        let filter: Filter = f.parse().map_err(|e| format!("{e}"))?;
        let snippet = extract(sentence, &filter, 8).map_err(|e| e.to_string())?;
        let text = render_text(&t, &e, Some(&snippet), None).map_err(|e| e.to_string())?;
        writeln!(out, "{f}\t{text}").unwrap();
    }
    Ok(out)
}

/// The SST-2 meta-prompt after a review.
pub fn meta_prompt() -> Result<String, String> {
    let e = single("a gorgeous, witty, seductive movie");
    let meta = MetaPrompt::preset("sst-2").ok_or("no sst-2 meta preset")?;
    let t = parse_template("*cls**sent_0*.*od**sd**td**sep+*").map_err(|e| e.to_string())?;
    let text = render_text(&t, &e, None, Some(&meta)).map_err(|e| e.to_string())?;
    Ok(format!("{text}\n"))
}
