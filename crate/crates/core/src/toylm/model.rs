use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::types::{Corpus, Document, TokenId, BOS};

/// Next-token counts for one context, sorted by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    tokens: Vec<TokenId>,
    counts: Vec<f64>,
    cum: Vec<f64>,
}

impl Row {
    fn from_sorted(entries: Vec<(TokenId, f64)>) -> Option<Row> {
        let (tokens, counts): (Vec<_>, Vec<_>) = entries.into_iter().filter(|(_, c)| *c > 0.0).unzip();
        if tokens.is_empty() {
            return None;
        }
        let mut acc = 0.0;
        let cum = counts
            .iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect();
        Some(Row { tokens, counts, cum })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub(crate) fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn total(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    pub fn count(&self, t: TokenId) -> f64 {
        match self.tokens.binary_search(&t) {
            Ok(i) => self.counts[i],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.tokens.iter().copied().zip(self.counts.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    vocab_size: usize,
    alpha: f64,
    role: String,
    rows: BTreeMap<Vec<TokenId>, Row>,
}

impl NGramModel {
    pub fn empty(order: usize, vocab_size: usize, alpha: f64) -> Result<Self> {
        if order < 2 {
            return Err(invalid("n-gram order must be >= 2"));
        }
        if vocab_size < 2 {
            return Err(invalid("vocab_size must be >= 2"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("smoothing alpha must be positive"));
        }
        Ok(Self { order, vocab_size, alpha, role: String::from("empty"), rows: BTreeMap::new() })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.role = role.into();
        self
    }

    pub fn context_len(&self) -> usize {
        self.order - 1
    }

    pub fn row(&self, ctx: &[TokenId]) -> Option<&Row> {
        self.rows.get(ctx)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[TokenId], &Row)> {
        self.rows.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn count(&self, ctx: &[TokenId], t: TokenId) -> f64 {
        self.row(ctx).map_or(0.0, |r| r.count(t))
    }

    pub fn is_zero(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sum of all counts.
    pub fn mass(&self) -> f64 {
        self.rows.values().map(Row::total).sum()
    }

    /// `log((c(ctx,t) + alpha) / (c(ctx) + alpha * V))`.
    pub fn logprob(&self, t: TokenId, ctx: &[TokenId]) -> f64 {
        let (c, total) = match self.row(ctx) {
            Some(r) => (r.count(t), r.total()),
            None => (0.0, 0.0),
        };
        ((c + self.alpha) / (total + self.alpha * self.vocab_size as f64)).ln()
    }

    /// Context for the token following `history` (BOS-padded on the left).
    pub fn context_of<'a>(&self, history: &'a [TokenId], pad: &'a mut Vec<TokenId>) -> &'a [TokenId] {
        let n = self.context_len();
        if history.len() >= n {
            return &history[history.len() - n..];
        }
        pad.clear();
        pad.resize(n - history.len(), BOS);
        pad.extend_from_slice(history);
        pad
    }

    fn same_shape(&self, other: &NGramModel) -> Result<()> {
        if self.order != other.order || self.vocab_size != other.vocab_size || self.alpha != other.alpha {
            return Err(Error::ShapeMismatch(format!(
                "(order {}, vocab {}, alpha {}) vs (order {}, vocab {}, alpha {})",
                self.order, self.vocab_size, self.alpha, other.order, other.vocab_size, other.alpha
            )));
        }
        Ok(())
    }

    /// `w_a * a + w_b * b` in count space, negative cells clamped to zero.
    pub fn merge(a: &NGramModel, b: &NGramModel, w_a: f64, w_b: f64) -> Result<NGramModel> {
        a.same_shape(b)?;
        if !w_a.is_finite() || !w_b.is_finite() {
            return Err(invalid("merge weights must be finite"));
        }
        let mut keys: Vec<&Vec<TokenId>> = a.rows.keys().chain(b.rows.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut rows = BTreeMap::new();
        for ctx in keys {
            let mut cells: BTreeMap<TokenId, f64> = BTreeMap::new();
            if let Some(r) = a.rows.get(ctx) {
                for (t, c) in r.iter() {
                    *cells.entry(t).or_default() += w_a * c;
                }
            }
            if let Some(r) = b.rows.get(ctx) {
                for (t, c) in r.iter() {
                    *cells.entry(t).or_default() += w_b * c;
                }
            }
            if let Some(row) = Row::from_sorted(cells.into_iter().map(|(t, c)| (t, c.max(0.0))).collect()) {
                rows.insert(ctx.clone(), row);
            }
        }
        Ok(NGramModel { rows, role: a.role.clone(), ..a.clone_shape() })
    }

    fn clone_shape(&self) -> NGramModel {
        NGramModel {
            order: self.order,
            vocab_size: self.vocab_size,
            alpha: self.alpha,
            role: self.role.clone(),
            rows: BTreeMap::new(),
        }
    }

    /// Cell-wise transform of the counts; cells mapped to `<= 0` are dropped.
    pub fn map_counts(&self, mut f: impl FnMut(&[TokenId], TokenId, f64) -> f64) -> NGramModel {
        let mut rows = BTreeMap::new();
        for (ctx, row) in &self.rows {
            let cells = row.iter().map(|(t, c)| (t, f(ctx, t, c).max(0.0))).collect();
            if let Some(r) = Row::from_sorted(cells) {
                rows.insert(ctx.clone(), r);
            }
        }
        NGramModel { rows, ..self.clone_shape() }
    }

    pub fn to_json(&self) -> Value {
        let counts: Vec<Value> = self
            .rows
            .iter()
            .flat_map(|(ctx, row)| {
                row.iter().map(move |(t, c)| {
                    let mut cells: Vec<Value> = ctx.iter().map(|&x| json!(x)).collect();
                    cells.push(json!(t));
                    cells.push(json!(c));
                    Value::Array(cells)
                })
            })
            .collect();
        json!({
            "order": self.order,
            "vocab": self.vocab_size,
            "alpha": self.alpha,
            "role": self.role,
            "counts": counts,
        })
    }

    pub fn from_json(v: &Value) -> Result<NGramModel> {
        let field = |name: &str| v.get(name).ok_or_else(|| invalid(format!("model file lacks \"{name}\"")));
        let order = field("order")?.as_u64().ok_or_else(|| invalid("order must be an integer"))? as usize;
        let vocab = field("vocab")?.as_u64().ok_or_else(|| invalid("vocab must be an integer"))? as usize;
        let alpha = field("alpha")?.as_f64().ok_or_else(|| invalid("alpha must be a number"))?;
        let role = field("role")?.as_str().ok_or_else(|| invalid("role must be a string"))?;
        let cells = field("counts")?.as_array().ok_or_else(|| invalid("counts must be an array"))?;
        let mut model = NGramModel::empty(order, vocab, alpha)?.with_role(role);
        let mut grouped: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, f64>> = BTreeMap::new();
        for cell in cells {
            let cell = cell.as_array().filter(|c| c.len() == order + 1).ok_or_else(|| {
                invalid(format!("count rows need {} entries", order + 1))
            })?;
            let ids: Vec<TokenId> = cell[..order]
                .iter()
                .map(|x| {
                    x.as_u64()
                        .filter(|&id| (id as usize) < vocab)
                        .map(|id| id as TokenId)
                        .ok_or_else(|| invalid("token ids must be integers below vocab"))
                })
                .collect::<Result<_>>()?;
            let c = cell[order].as_f64().filter(|c| *c >= 0.0).ok_or_else(|| invalid("counts must be >= 0"))?;
            let (ctx, t) = ids.split_at(order - 1);
            grouped.entry(ctx.to_vec()).or_default().insert(t[0], c);
        }
        for (ctx, cells) in grouped {
            if let Some(row) = Row::from_sorted(cells.into_iter().collect()) {
                model.rows.insert(ctx, row);
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_json())? + "\n";
        std::fs::write(path, text).map_err(|source| Error::File { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<NGramModel> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
        NGramModel::from_json(&serde_json::from_str(&text)?)
    }
}

/// Counts every BOS-padded n-gram of the corpus, scaled by `weight`.
pub fn train(corpus: &Corpus, order: usize, alpha: f64, weight: f64) -> Result<NGramModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot train on an empty corpus"));
    }
    train_docs(&corpus.docs, corpus.vocab_size, order, alpha, weight)
}

pub(crate) fn train_docs(
    docs: &[Document],
    vocab_size: usize,
    order: usize,
    alpha: f64,
    weight: f64,
) -> Result<NGramModel> {
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(invalid("training weight must be positive"));
    }
    let mut model = NGramModel::empty(order, vocab_size, alpha)?.with_role("original");
    let mut grams: HashMap<Vec<TokenId>, u64> = HashMap::new();
    let mut window: Vec<TokenId> = Vec::new();
    for d in docs {
        if let Some(&t) = d.tokens.iter().find(|&&t| t == BOS || t as usize >= vocab_size) {
            return Err(Error::ShapeMismatch(format!(
                "document ({}, {}) token {t} does not fit vocab {vocab_size}",
                d.owner_id, d.doc_id
            )));
        }
        window.clear();
        window.resize(order - 1, BOS);
        window.extend_from_slice(&d.tokens);
        for gram in window.windows(order) {
            match grams.get_mut(gram) {
                Some(c) => *c += 1,
                None => {
                    grams.insert(gram.to_vec(), 1);
                }
            }
        }
    }
    let mut sorted: Vec<(Vec<TokenId>, u64)> = grams.into_iter().collect();
    sorted.sort_unstable();
    let mut i = 0;
    while i < sorted.len() {
        let ctx = &sorted[i].0[..order - 1];
        let mut j = i;
        let mut cells = Vec::new();
        while j < sorted.len() && &sorted[j].0[..order - 1] == ctx {
            cells.push((sorted[j].0[order - 1], weight * sorted[j].1 as f64));
            j += 1;
        }
        if let Some(row) = Row::from_sorted(cells) {
            model.rows.insert(ctx.to_vec(), row);
        }
        i = j;
    }
    Ok(model)
}

/// Mean of the lowest `ceil(k_frac * n)` values.
pub fn min_k_mean(values: &[f64], k_frac: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("min-k needs at least one value"));
    }
    if !(k_frac > 0.0 && k_frac <= 1.0) {
        return Err(invalid(format!("k_frac {k_frac} outside (0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((k_frac * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[..k].iter().sum::<f64>() / k as f64)
}

/// Min-k% Prob score: mean log-likelihood of the least likely `k_frac`
/// share of completion tokens, each conditioned on prompt and prior tokens.
pub fn min_k_avg_logprob(model: &NGramModel, prompt: &[TokenId], completion: &[TokenId], k_frac: f64) -> Result<f64> {
    if completion.is_empty() {
        return Err(Error::Empty("min-k needs a non-empty completion"));
    }
    let mut history: Vec<TokenId> = Vec::with_capacity(prompt.len() + completion.len());
    history.extend_from_slice(prompt);
    let mut pad = Vec::new();
    let mut lps = Vec::with_capacity(completion.len());
    for &t in completion {
        let ctx = model.context_of(&history, &mut pad);
        lps.push(model.logprob(t, ctx));
        history.push(t);
    }
    min_k_mean(&lps, k_frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Document;

    fn corpus(vocab: usize, docs: &[&[TokenId]]) -> Corpus {
        Corpus::new(vocab, docs.iter().enumerate().map(|(i, t)| Document::new(0, i, t.to_vec())).collect()).unwrap()
    }

    #[test]
    fn single_document_counts() {
        let m = train(&corpus(16, &[&[5, 7]]), 2, 0.1, 1.0).unwrap();
        assert_eq!(m.count(&[BOS], 5), 1.0);
        assert_eq!(m.count(&[5], 7), 1.0);
        assert_eq!(m.rows().count(), 2);
        assert_eq!(m.mass(), 2.0);
    }

    #[test]
    fn weight_scales_counts() {
        let c = corpus(16, &[&[1, 2, 3, 2, 1], &[3, 3, 4]]);
        let one = train(&c, 2, 0.1, 1.0).unwrap();
        let two = train(&c, 2, 0.1, 2.0).unwrap();
        assert_eq!(one.map_counts(|_, _, x| 2.0 * x), two);
    }

    #[test]
    fn document_order_irrelevant() {
        let a = train(&corpus(16, &[&[1, 2, 3], &[4, 5], &[2, 2]]), 3, 0.1, 1.0).unwrap();
        let b = train(&corpus(16, &[&[2, 2], &[4, 5], &[1, 2, 3]]), 3, 0.1, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trigram_padding() {
        let m = train(&corpus(16, &[&[5, 7, 9]]), 3, 0.1, 1.0).unwrap();
        assert_eq!(m.count(&[BOS, BOS], 5), 1.0);
        assert_eq!(m.count(&[BOS, 5], 7), 1.0);
        assert_eq!(m.count(&[5, 7], 9), 1.0);
    }

    #[test]
    fn vocab_mismatch_rejected() {
        let docs = vec![Document::new(0, 0, vec![20])];
        assert!(train_docs(&docs, 16, 2, 0.1, 1.0).is_err());
        assert!(train(&Corpus::new(16, vec![]).unwrap(), 2, 0.1, 1.0).is_err());
        assert!(train(&corpus(16, &[&[1]]), 2, 0.1, 0.0).is_err());
    }

    #[test]
    fn merge_identities() {
        let m = train(&corpus(16, &[&[1, 2, 3, 2, 1]]), 2, 0.1, 1.0).unwrap();
        assert!(NGramModel::merge(&m, &m, 1.0, -1.0).unwrap().is_zero());
        let zero = NGramModel::empty(2, 16, 0.1).unwrap();
        assert_eq!(NGramModel::merge(&m, &zero, 1.0, 1.0).unwrap(), m);
        let other = NGramModel::empty(3, 16, 0.1).unwrap();
        assert!(NGramModel::merge(&m, &other, 1.0, 1.0).is_err());
    }

    #[test]
    fn merge_equals_recount() {
        let a = corpus(16, &[&[1, 2, 3], &[3, 2, 1, 1]]);
        let b = corpus(16, &[&[2, 2, 5], &[1, 2]]);
        let merged = NGramModel::merge(
            &train(&a, 2, 0.1, 1.0).unwrap(),
            &train(&b, 2, 0.1, 1.0).unwrap(),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(merged, train(&a.union(&b).unwrap(), 2, 0.1, 1.0).unwrap());
    }

    #[test]
    fn logprob_values() {
        let empty = NGramModel::empty(2, 512, 0.1).unwrap();
        assert!((empty.logprob(7, &[3]) - (1.0f64 / 512.0).ln()).abs() < 1e-12);
        // context 1 seen 9 times, token 2 three of them
        let doc: Vec<TokenId> = vec![1, 2, 1, 2, 1, 2, 1, 3, 1, 4, 1, 5, 1, 6, 1, 7, 1, 8];
        let m = train(&corpus(512, &[&doc]), 2, 0.1, 1.0).unwrap();
        assert_eq!(m.row(&[1]).unwrap().total(), 9.0);
        assert!((m.logprob(2, &[1]) - (3.1f64 / 60.2).ln()).abs() < 1e-12);
        let total: f64 = (0..512).map(|t| m.logprob(t, &[1]).exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn min_k_oracle() {
        assert!((min_k_mean(&[-1.0, -2.0, -3.0, -4.0, -5.0], 0.4).unwrap() + 4.5).abs() < 1e-12);
        assert!((min_k_mean(&[-1.0, -3.0], 1.0).unwrap() + 2.0).abs() < 1e-12);
        assert!(min_k_mean(&[], 0.4).is_err());
        assert!(min_k_mean(&[1.0], 0.0).is_err());
    }

    #[test]
    fn min_k_on_uniform_model() {
        let m = NGramModel::empty(2, 512, 0.1).unwrap();
        let v = min_k_avg_logprob(&m, &[4, 5], &[6, 7, 8], 0.4).unwrap();
        assert!((v + (512f64).ln()).abs() < 1e-12);
        assert!(min_k_avg_logprob(&m, &[4], &[], 0.4).is_err());
    }

    #[test]
    fn min_k_full_fraction_is_mean_loglik() {
        let m = train(&corpus(16, &[&[1, 2, 3, 1, 2, 4]]), 2, 0.1, 1.0).unwrap();
        let (prompt, completion) = ([1], [2, 3, 1]);
        let lp = [m.logprob(2, &[1]), m.logprob(3, &[2]), m.logprob(1, &[3])];
        let v = min_k_avg_logprob(&m, &prompt, &completion, 1.0).unwrap();
        assert!((v - lp.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_is_byte_stable() {
        let m = train(&corpus(16, &[&[1, 2, 3, 2, 1], &[5, 5]]), 3, 0.25, 1.5).unwrap().with_role("partial:3");
        let text = serde_json::to_string(&m.to_json()).unwrap();
        let back = NGramModel::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string(&back.to_json()).unwrap(), text);
        assert!(text.starts_with("{\"alpha\":0.25,\"counts\":[[0,0,1,1.5]"));
    }
}
