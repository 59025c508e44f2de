use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bag-of-words TF-IDF encoder: raw term count times `ln(N / df)`, no smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TfidfParts")]
pub struct TfidfModel {
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    pub n_docs: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TfidfModel {
    /// Keeps the `vocab_size` terms with the highest document frequency,
    /// ties broken lexicographically.
    pub fn fit<S: AsRef<str>>(texts: &[Vec<S>], vocab_size: usize) -> Result<Self> {
        if texts.iter().all(Vec::is_empty) {
            return Err(Error::Empty("every document has no tokens".into()));
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in texts {
            let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
        // BTreeMap order is lexicographic; a stable sort on df keeps it for ties
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        ranked.truncate(vocab_size);

        let n_docs = texts.len();
        let vocabulary: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
        let idf = ranked
            .iter()
            .map(|&(_, d)| (n_docs as f64 / d as f64).ln())
            .collect();
        Ok(Self::from_parts(vocabulary, idf, n_docs))
    }

    pub fn from_parts(vocabulary: Vec<String>, idf: Vec<f64>, n_docs: usize) -> Self {
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            vocabulary,
            idf,
            n_docs,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    /// Out-of-vocabulary tokens are ignored.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut v = vec![0.0; self.vocabulary.len()];
        for t in tokens {
            if let Some(&i) = self.index.get(t.as_ref()) {
                v[i] += 1.0;
            }
        }
        for (x, &w) in v.iter_mut().zip(&self.idf) {
            *x *= w;
        }
        v
    }
}

#[derive(Deserialize)]
struct TfidfParts {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    n_docs: usize,
}

impl From<TfidfParts> for TfidfModel {
    fn from(p: TfidfParts) -> Self {
        Self::from_parts(p.vocabulary, p.idf, p.n_docs)
    }
}

/// Fits a [`TfidfModel`] on `texts` and encodes each of them.
pub fn tfidf_featurize<S: AsRef<str>>(
    texts: &[Vec<S>],
    vocab_size: usize,
) -> Result<(Vec<Vec<f64>>, TfidfModel)> {
    let model = TfidfModel::fit(texts, vocab_size)?;
    let vectors = texts.iter().map(|t| model.transform(t)).collect();
    Ok((vectors, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn docs(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn hand_computed_weights() {
        let (vecs, model) = tfidf_featurize(&docs(&["a b", "a"]), 10).unwrap();
        assert_eq!(model.vocabulary, vec!["a", "b"]);
        assert_eq!(vecs[0][0], 0.0);
        assert_eq!(vecs[1][0], 0.0);
        assert!((vecs[0][1] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(vecs[1][1], 0.0);
    }

    #[test]
    fn single_document_is_zero() {
        let (vecs, _) = tfidf_featurize(&docs(&["x y y z"]), 10).unwrap();
        assert!(vecs[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_empty_is_error() {
        let empty: Vec<Vec<String>> = vec![vec![], vec![]];
        assert!(matches!(tfidf_featurize(&empty, 5), Err(Error::Empty(_))));
    }

    #[test]
    fn vocabulary_ties_are_lexicographic() {
        let (_, model) = tfidf_featurize(&docs(&["c b a", "c b", "c d"]), 3).unwrap();
        // df: c=3, b=2, a=1, d=1 -> a wins the tie with d
        assert_eq!(model.vocabulary, vec!["c", "b", "a"]);
    }

    /// Independent two-pass count: first pass document frequencies, second
    /// pass term counts, with vocabulary selection by explicit scanning.
    fn two_pass_oracle(texts: &[Vec<String>], vocab_size: usize) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut terms: Vec<String> = texts.iter().flatten().cloned().collect();
        terms.sort();
        terms.dedup();
        let df: Vec<usize> = terms
            .iter()
            .map(|t| texts.iter().filter(|d| d.contains(t)).count())
            .collect();
        let mut chosen: Vec<usize> = Vec::new();
        while chosen.len() < vocab_size.min(terms.len()) {
            let mut best: Option<usize> = None;
            for i in 0..terms.len() {
                if chosen.contains(&i) {
                    continue;
                }
                match best {
                    None => best = Some(i),
                    Some(b) if df[i] > df[b] => best = Some(i),
                    _ => {}
                }
            }
            chosen.push(best.unwrap());
        }
        let n = texts.len() as f64;
        let vectors = texts
            .iter()
            .map(|d| {
                chosen
                    .iter()
                    .map(|&i| {
                        let tf = d.iter().filter(|t| **t == terms[i]).count() as f64;
                        tf * (n / df[i] as f64).ln()
                    })
                    .collect()
            })
            .collect();
        (chosen.iter().map(|&i| terms[i].clone()).collect(), vectors)
    }

    #[test]
    fn random_corpus_matches_two_pass_oracle() {
        let mut rng = Rng::new(77);
        let alphabet: Vec<String> = (0..30).map(|i| format!("w{i:02}")).collect();
        let texts: Vec<Vec<String>> = (0..20)
            .map(|_| {
                let len = 1 + rng.below(12);
                (0..len)
                    .map(|_| alphabet[rng.below(alphabet.len())].clone())
                    .collect()
            })
            .collect();
        for vocab_size in [5, 17, 100] {
            let (vecs, model) = tfidf_featurize(&texts, vocab_size).unwrap();
            let (vocab, expected) = two_pass_oracle(&texts, vocab_size);
            assert_eq!(model.vocabulary, vocab);
            assert_eq!(vecs, expected);
        }
    }

    #[test]
    fn ubiquitous_term_has_zero_weight() {
        let (vecs, model) = tfidf_featurize(&docs(&["k a", "k b k", "c k"]), 10).unwrap();
        let k = model.vocabulary.iter().position(|t| t == "k").unwrap();
        assert!(vecs.iter().all(|v| v[k] == 0.0));
    }
}
