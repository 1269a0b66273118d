//! Bag-of-words data: the `doc_id word_id count` triple format, a synthetic
//! topic-mixture generator, and vocabulary truncation.

use std::io::Write;
use std::path::Path;

use ndarray::Array1;

use crate::error::Error;
use crate::stream::RandomStream;
use crate::Result;

/// Sparse document-term counts.
#[derive(Clone, Debug, PartialEq)]
pub struct BowData {
    /// Per document: (word id, count), word ids strictly increasing.
    pub docs: Vec<Vec<(usize, f64)>>,
    pub vocab: usize,
}

impl BowData {
    /// Dense count vector of one document.
    pub fn counts(&self, doc: usize) -> Array1<f64> {
        let mut v = Array1::zeros(self.vocab);
        for &(w, c) in &self.docs[doc] {
            v[w] = c;
        }
        v
    }

    /// Dense word-frequency vector (counts normalised to sum 1; all-zero
    /// documents stay zero).
    pub fn frequencies(&self, doc: usize) -> Array1<f64> {
        let mut v = self.counts(doc);
        let total: f64 = v.sum();
        if total > 0.0 {
            v /= total;
        }
        v
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Load `doc_id word_id count` triples (0-based ids, whitespace separated).
pub fn load_bow(path: &Path) -> Result<BowData> {
    let text = std::fs::read_to_string(path)?;
    parse_bow(&text)
}

pub fn parse_bow(text: &str) -> Result<BowData> {
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_doc = None::<usize>;
    let mut max_word = None::<usize>;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut field = |name: &str| -> Result<&str> {
            parts.next().ok_or_else(|| Error::Data {
                line: lineno,
                msg: format!("missing {name}"),
            })
        };
        let doc: usize = field("doc_id")?.parse().map_err(|_| Error::Data {
            line: lineno,
            msg: "bad doc_id".into(),
        })?;
        let word: usize = field("word_id")?.parse().map_err(|_| Error::Data {
            line: lineno,
            msg: "bad word_id".into(),
        })?;
        let count: f64 = field("count")?.parse().map_err(|_| Error::Data {
            line: lineno,
            msg: "bad count".into(),
        })?;
        if parts.next().is_some() {
            return Err(Error::Data { line: lineno, msg: "trailing fields".into() });
        }
        if count < 0.0 {
            return Err(Error::Data { line: lineno, msg: "negative count".into() });
        }
        max_doc = Some(max_doc.map_or(doc, |m: usize| m.max(doc)));
        max_word = Some(max_word.map_or(word, |m: usize| m.max(word)));
        triples.push((doc, word, count));
    }
    let n_docs = max_doc.map_or(0, |m| m + 1);
    let vocab = max_word.map_or(0, |m| m + 1);
    let mut docs = vec![Vec::new(); n_docs];
    for (d, w, c) in triples {
        docs[d].push((w, c));
    }
    for doc in &mut docs {
        doc.sort_by_key(|&(w, _)| w);
    }
    Ok(BowData { docs, vocab })
}

/// Write triples back out; `load_bow . save_bow` is the identity for data
/// whose ids are dense.
pub fn save_bow(data: &BowData, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (d, doc) in data.docs.iter().enumerate() {
        for &(w, c) in doc {
            writeln!(out, "{d} {w} {c}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Synthetic corpus: `topics` multinomial prototypes over the vocabulary;
/// each document draws its length and words from its (round-robin) topic.
pub fn generate_synthetic_bow(docs: usize, vocab: usize, topics: usize, seed: u64) -> BowData {
    let mut rng = RandomStream::new(seed).child(&[0x0b0]);
    let topics = topics.max(1);
    // prototypes: exponential draws sharpened and normalised
    let mut protos = Vec::with_capacity(topics);
    for _ in 0..topics {
        let mut p: Vec<f64> = (0..vocab).map(|_| -rng.open01().ln()).collect();
        for v in p.iter_mut() {
            *v = v.powi(2); // sharpen so topics are distinguishable
        }
        let total: f64 = p.iter().sum();
        for v in p.iter_mut() {
            *v /= total;
        }
        // cumulative for inverse-cdf sampling
        let mut acc = 0.0;
        for v in p.iter_mut() {
            acc += *v;
            *v = acc;
        }
        protos.push(p);
    }
    let mut out = Vec::with_capacity(docs);
    for d in 0..docs {
        let proto = &protos[d % topics];
        let len = 40 + rng.below(41); // 40..=80 tokens
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..len {
            let u = rng.open01();
            let w = match proto.binary_search_by(|c| c.partial_cmp(&u).expect("finite")) {
                Ok(i) | Err(i) => i.min(vocab - 1),
            };
            *counts.entry(w).or_insert(0.0) += 1.0;
        }
        out.push(counts.into_iter().collect());
    }
    BowData { docs: out, vocab }
}

/// Keep exactly the `k` word ids with the highest total count (ties broken by
/// the lower id), remapping them onto a compact 0..k vocabulary. Returns the
/// filtered data and the kept original ids in their new order.
pub fn top_words(data: &BowData, k: usize) -> (BowData, Vec<usize>) {
    if k == 0 || k >= data.vocab {
        return (data.clone(), (0..data.vocab).collect());
    }
    let mut totals = vec![0.0f64; data.vocab];
    for doc in &data.docs {
        for &(w, c) in doc {
            totals[w] += c;
        }
    }
    let mut order: Vec<usize> = (0..data.vocab).collect();
    order.sort_by(|&a, &b| {
        totals[b].partial_cmp(&totals[a]).expect("finite counts").then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = order.into_iter().take(k).collect();
    kept.sort_unstable();
    let mut remap = vec![usize::MAX; data.vocab];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let docs = data
        .docs
        .iter()
        .map(|doc| {
            doc.iter()
                .filter_map(|&(w, c)| {
                    let nw = remap[w];
                    (nw != usize::MAX).then_some((nw, c))
                })
                .collect()
        })
        .collect();
    (BowData { docs, vocab: k }, kept)
}
