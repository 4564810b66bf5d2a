//! Line-delimited JSON corpus files.
//!
//! One document per line: `{"owner":0,"doc":3,"tokens":[5,9,...],"wm_mu":1234}`
//! where `wm_mu` is `null` for unwatermarked documents.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::types::{Corpus, Document, TokenId};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRecord {
    owner: usize,
    doc: usize,
    tokens: Vec<TokenId>,
    wm_mu: Option<u64>,
}

pub fn write_corpus_to<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for d in &corpus.docs {
        let record = DocRecord {
            owner: d.owner_id,
            doc: d.doc_id,
            tokens: d.tokens.clone(),
            wm_mu: corpus.watermark_tag.as_ref().and_then(|t| t.get(&d.owner_id).copied()),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus_from<R: Read>(input: R, vocab_size: usize) -> Result<Corpus> {
    let mut docs = Vec::new();
    let mut tags = BTreeMap::new();
    let mut tagged = None;
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocRecord =
            serde_json::from_str(&line).map_err(|source| Error::Record { line: i + 1, source })?;
        let has_tag = record.wm_mu.is_some();
        if *tagged.get_or_insert(has_tag) != has_tag {
            return Err(invalid(format!("line {}: mixes tagged and untagged documents", i + 1)));
        }
        if let Some(mu) = record.wm_mu {
            if let Some(prev) = tags.insert(record.owner, mu) {
                if prev != mu {
                    return Err(invalid(format!(
                        "line {}: owner {} tagged with two keys",
                        i + 1,
                        record.owner
                    )));
                }
            }
        }
        docs.push(Document::new(record.owner, record.doc, record.tokens));
    }
    let corpus = Corpus::new(vocab_size, docs)?;
    if tagged == Some(true) {
        corpus.with_tags(tags)
    } else {
        Ok(corpus)
    }
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
    write_corpus_to(corpus, BufWriter::new(file))
}

pub fn read_corpus(path: &Path, vocab_size: usize) -> Result<Corpus> {
    let file = File::open(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
    read_corpus_from(file, vocab_size)
}
