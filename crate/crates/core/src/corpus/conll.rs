use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;

use super::{EntitySpan, Layer, Sentence};
use crate::error::{Error, Result};
use crate::labels::OUTSIDE;

/// An `I-X` tag that did not continue an `X` entity and was read as `B-X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repair {
    pub line: usize,
    pub sentence: usize,
    pub token: usize,
    pub tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Option<Tag<'_>> {
    if tag == OUTSIDE {
        return Some(Tag::Outside);
    }
    let (prefix, label) = tag.split_once('-')?;
    if label.is_empty() || label == OUTSIDE {
        return None;
    }
    match prefix {
        "B" => Some(Tag::Begin(label)),
        "I" => Some(Tag::Inside(label)),
        _ => None,
    }
}

/// Converts BIO (or IO) tags into spans. Returns the spans and the 0-based
/// positions of `I-X` tags that had to be read as `B-X`.
pub fn tags_to_spans<S: AsRef<str>>(tags: &[S]) -> Result<(Vec<EntitySpan>, Vec<usize>)> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut repaired = Vec::new();
    let mut open: Option<usize> = None;
    for (pos, raw) in tags.iter().enumerate() {
        let raw = raw.as_ref();
        let tag = parse_tag(raw).ok_or_else(|| Error::Parse {
            origin: "tags".into(),
            line: pos + 1,
            reason: format!("unrecognized tag {raw:?}"),
        })?;
        match tag {
            Tag::Outside => open = None,
            Tag::Begin(label) => {
                spans.push(EntitySpan::new(pos + 1, pos + 1, label));
                open = Some(spans.len() - 1);
            }
            Tag::Inside(label) => match open {
                Some(i) if spans[i].label == label => spans[i].end = pos + 1,
                _ => {
                    repaired.push(pos);
                    spans.push(EntitySpan::new(pos + 1, pos + 1, label));
                    open = Some(spans.len() - 1);
                }
            },
        }
    }
    Ok((spans, repaired))
}

/// Renders non-overlapping spans as BIO tags over `len` tokens.
pub fn spans_to_tags(len: usize, spans: &[EntitySpan]) -> Vec<String> {
    let mut tags = vec![OUTSIDE.to_string(); len];
    for span in spans {
        tags[span.start - 1] = format!("B-{}", span.label);
        for tag in &mut tags[span.start..span.end] {
            *tag = format!("I-{}", span.label);
        }
    }
    tags
}

/// Reads CoNLL column data. The first column is the token and the last column
/// the tag; any columns in between are ignored. Tags land in the gold layer.
pub fn read_conll<R: BufRead>(reader: R, origin: &str) -> Result<(Vec<Sentence>, Vec<Repair>)> {
    let mut sentences = Vec::new();
    let mut repairs = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();

    let mut flush = |tokens: &mut Vec<String>,
                     tags: &mut Vec<String>,
                     lines: &mut Vec<usize>,
                     sentences: &mut Vec<Sentence>|
     -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let (spans, fixed) = tags_to_spans(tags).map_err(|e| match e {
            Error::Parse { line, reason, .. } => Error::Parse {
                origin: origin.to_string(),
                line: lines[line - 1],
                reason,
            },
            other => other,
        })?;
        for pos in fixed {
            let repair = Repair {
                line: lines[pos],
                sentence: sentences.len(),
                token: pos + 1,
                tag: tags[pos].clone(),
            };
            warn!(
                "{origin}:{}: {} does not continue an entity, read as B-{}",
                repair.line,
                repair.tag,
                &repair.tag[2..]
            );
            repairs.push(repair);
        }
        sentences.push(Sentence::new(tokens.drain(..)).with_gold(spans));
        tags.clear();
        lines.clear();
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut tokens, &mut tags, &mut lines, &mut sentences)?;
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        if cols.len() < 2 {
            return Err(Error::Parse {
                origin: origin.to_string(),
                line: lineno,
                reason: format!("expected `token<whitespace>tag`, got {trimmed:?}"),
            });
        }
        let tag = cols[cols.len() - 1];
        if parse_tag(tag).is_none() {
            return Err(Error::Parse {
                origin: origin.to_string(),
                line: lineno,
                reason: format!("unrecognized tag {tag:?}"),
            });
        }
        tokens.push(cols[0].to_string());
        tags.push(tag.to_string());
        lines.push(lineno);
    }
    flush(&mut tokens, &mut tags, &mut lines, &mut sentences)?;
    Ok((sentences, repairs))
}

pub fn load_conll(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (sentences, _) = read_conll(BufReader::new(file), &path.display().to_string())?;
    Ok(sentences)
}

/// Writes one layer as two-column BIO data. A missing layer is written as all `O`.
pub fn write_conll<W: Write>(
    mut out: W,
    sentences: &[Sentence],
    layer: Layer,
) -> std::io::Result<()> {
    for (i, sentence) in sentences.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        let tags = spans_to_tags(sentence.len(), sentence.layer(layer).unwrap_or_default());
        for (token, tag) in sentence.tokens.iter().zip(&tags) {
            writeln!(out, "{token}\t{tag}")?;
        }
    }
    Ok(())
}
