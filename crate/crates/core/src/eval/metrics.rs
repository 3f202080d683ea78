//! Answer-quality metrics.
//!
//! Text is lowercased and punctuation is replaced by spaces before splitting
//! on whitespace. Exact match additionally drops a leading article.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const TOKENIZER: &str = "lowercase, punctuation replaced by spaces, whitespace split";
pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SCALE: f64 = 10.0;

pub fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn normalize_answer(text: &str) -> Vec<String> {
    let mut t = tokens(text);
    if t.len() > 1 && matches!(t[0].as_str(), "a" | "an" | "the") {
        t.remove(0);
    }
    t
}

pub fn exact_match(pred: &str, golds: &[String]) -> f64 {
    let p = normalize_answer(pred);
    if p.is_empty() {
        return 0.0;
    }
    if golds.iter().any(|g| normalize_answer(g) == p) {
        1.0
    } else {
        0.0
    }
}

fn counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *map.entry(gram).or_insert(0) += 1;
        }
    }
    map
}

/// Clipped unigram precision times the brevity penalty, best gold.
pub fn bleu1(pred: &str, golds: &[String]) -> f64 {
    let p = tokens(pred);
    if p.is_empty() {
        return 0.0;
    }
    let pc = counts(&p, 1);
    golds
        .iter()
        .map(|g| {
            let g = tokens(g);
            if g.is_empty() {
                return 0.0;
            }
            let gc = counts(&g, 1);
            let matched: usize = pc
                .iter()
                .map(|(gram, &c)| c.min(gc.get(gram).copied().unwrap_or(0)))
                .sum();
            let precision = matched as f64 / p.len() as f64;
            let bp = if p.len() > g.len() {
                1.0
            } else {
                (1.0 - g.len() as f64 / p.len() as f64).exp()
            };
            precision * bp
        })
        .fold(0.0, f64::max)
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// LCS-based F-measure, best gold.
pub fn rouge_l(pred: &str, golds: &[String]) -> f64 {
    let p = tokens(pred);
    if p.is_empty() {
        return 0.0;
    }
    golds
        .iter()
        .map(|g| {
            let g = tokens(g);
            let l = lcs(&p, &g);
            if l == 0 {
                return 0.0;
            }
            let precision = l as f64 / p.len() as f64;
            let recall = l as f64 / g.len() as f64;
            let b2 = ROUGE_BETA * ROUGE_BETA;
            (1.0 + b2) * precision * recall / (recall + b2 * precision)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiderScores {
    pub mean: f64,
    pub per_item: Vec<f64>,
}

type Vector = HashMap<Vec<String>, f64>;

fn tfidf(tokens: &[String], n: usize, idf: &HashMap<Vec<String>, f64>, default_idf: f64) -> Vector {
    let c = counts(tokens, n);
    let total: usize = c.values().sum();
    c.into_iter()
        .map(|(gram, k)| {
            let w = idf.get(gram).copied().unwrap_or(default_idf);
            (gram.to_vec(), k as f64 / total as f64 * w)
        })
        .collect()
}

fn cosine(a: &Vector, b: &Vector) -> f64 {
    let dot: f64 = a
        .iter()
        .map(|(g, x)| x * b.get(g).copied().unwrap_or(0.0))
        .sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Corpus CIDEr. Document frequencies come from the reference sets, one
/// document per item, with smoothed IDF `ln((1 + N) / (1 + df)) + 1`.
/// N-gram orders absent from both candidate and reference are left out of
/// that pair's average.
pub fn cider(preds: &[String], golds: &[Vec<String>]) -> CiderScores {
    assert_eq!(preds.len(), golds.len(), "one reference set per prediction");
    let n_docs = preds.len() as f64;
    let refs: Vec<Vec<Vec<String>>> = golds
        .iter()
        .map(|gs| gs.iter().map(|g| tokens(g)).collect())
        .collect();

    let mut idf: Vec<HashMap<Vec<String>, f64>> = Vec::with_capacity(CIDER_MAX_N);
    for n in 1..=CIDER_MAX_N {
        let mut df: HashMap<Vec<String>, usize> = HashMap::new();
        for item in &refs {
            let mut seen: Vec<&[String]> =
                item.iter().flat_map(|r| counts(r, n).into_keys()).collect();
            seen.sort();
            seen.dedup();
            for gram in seen {
                *df.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
        idf.push(
            df.into_iter()
                .map(|(g, d)| (g, ((1.0 + n_docs) / (1.0 + d as f64)).ln() + 1.0))
                .collect(),
        );
    }
    let unseen_idf = (1.0 + n_docs).ln() + 1.0;

    let per_item: Vec<f64> = preds
        .iter()
        .zip(&refs)
        .map(|(pred, item_refs)| {
            let p = tokens(pred);
            if p.is_empty() || item_refs.is_empty() {
                return 0.0;
            }
            let per_ref: Vec<f64> = item_refs
                .iter()
                .map(|r| {
                    let mut sum = 0.0;
                    let mut orders = 0;
                    for n in 1..=CIDER_MAX_N {
                        let pv = tfidf(&p, n, &idf[n - 1], unseen_idf);
                        let rv = tfidf(r, n, &idf[n - 1], unseen_idf);
                        if pv.is_empty() && rv.is_empty() {
                            continue;
                        }
                        orders += 1;
                        sum += cosine(&pv, &rv);
                    }
                    if orders == 0 {
                        0.0
                    } else {
                        sum / orders as f64
                    }
                })
                .collect();
            CIDER_SCALE * per_ref.iter().sum::<f64>() / per_ref.len() as f64
        })
        .collect();
    let mean = if per_item.is_empty() {
        0.0
    } else {
        per_item.iter().sum::<f64>() / per_item.len() as f64
    };
    CiderScores { mean, per_item }
}
