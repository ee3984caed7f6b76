use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Token embeddings used to compare affordance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingLexicon {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("token {0:?} is not in the lexicon")]
pub struct UnknownToken(pub String);

impl EmbeddingLexicon {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "lexicon dimension must be positive");
        Self {
            dimension,
            entries: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds or replaces a token vector. Rejects wrong dimensions and zero or
    /// non-finite vectors.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<(), String> {
        if vector.len() != self.dimension {
            return Err(format!(
                "expected {} components, found {}",
                self.dimension,
                vector.len()
            ));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err("non-finite component".into());
        }
        if norm(&vector) == 0.0 {
            return Err("zero-norm vector".into());
        }
        self.entries.insert(token.into(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    /// Parses the text format: first line is the dimension `d`, then one
    /// `token v1 .. vd` entry per line. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (first_no, first) = lines.next().ok_or(LexiconError::Parse {
            line: 1,
            message: "missing dimension line".into(),
        })?;
        let dimension: usize = first.parse().map_err(|_| LexiconError::Parse {
            line: first_no,
            message: format!("invalid dimension {first:?}"),
        })?;
        if dimension == 0 {
            return Err(LexiconError::Parse {
                line: first_no,
                message: "dimension must be positive".into(),
            });
        }
        let mut lex = Self::new(dimension);
        for (line, l) in lines {
            let mut parts = l.split_whitespace();
            let token = parts.next().expect("non-empty line");
            let vector = parts
                .map(|p| p.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| LexiconError::Parse {
                    line,
                    message: format!("bad number: {e}"),
                })?;
            if lex.entries.contains_key(token) {
                return Err(LexiconError::Parse {
                    line,
                    message: format!("duplicate token {token:?}"),
                });
            }
            lex.insert(token, vector)
                .map_err(|message| LexiconError::Parse { line, message })?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Serializes in the same format `parse` reads, tokens sorted.
    pub fn to_text(&self) -> String {
        let mut tokens: Vec<&String> = self.entries.keys().collect();
        tokens.sort();
        let mut out = format!("{}\n", self.dimension);
        for t in tokens {
            out.push_str(t);
            for v in &self.entries[t] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Mean of the label's underscore-separated token vectors.
    pub fn embed_label(&self, label: &str) -> Result<Vec<f64>, UnknownToken> {
        let mut acc = vec![0.0; self.dimension];
        let mut n = 0usize;
        for tok in label.split('_').filter(|t| !t.is_empty()) {
            let v = self.get(tok).ok_or_else(|| UnknownToken(tok.to_string()))?;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            n += 1;
        }
        if n == 0 {
            return Err(UnknownToken(label.to_string()));
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        Ok(acc)
    }

    /// Cosine similarity of two label embeddings; 0 when either mean vector
    /// vanishes.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, UnknownToken> {
        let u = self.embed_label(a)?;
        let v = self.embed_label(b)?;
        let (nu, nv) = (norm(&u), norm(&v));
        if nu == 0.0 || nv == 0.0 {
            return Ok(0.0);
        }
        let dot: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
        Ok(dot / (nu * nv))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_roundtrip() {
        let lex = EmbeddingLexicon::parse("2\nopen 1 0\n\nhold 0 1.5\n").unwrap();
        assert_eq!(lex.dimension(), 2);
        assert_eq!(lex.get("hold"), Some(&[0.0, 1.5][..]));
        assert_eq!(EmbeddingLexicon::parse(&lex.to_text()).unwrap(), lex);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = EmbeddingLexicon::parse("2\nopen 1 0\nhold 1\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 3, .. }));
        assert!(EmbeddingLexicon::parse("2\nzero 0 0\n").is_err());
        assert!(EmbeddingLexicon::parse("x\n").is_err());
        assert!(EmbeddingLexicon::parse("").is_err());
        assert!(EmbeddingLexicon::parse("1\na 1\na 2\n").is_err());
    }

    #[test]
    fn multi_token_labels_average() {
        let lex = EmbeddingLexicon::parse("2\npour 1 0\ninto 0 1\nfill 1 1\n").unwrap();
        assert_eq!(lex.embed_label("pour_into").unwrap(), vec![0.5, 0.5]);
        let s = lex.similarity("pour_into", "fill").unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(
            lex.similarity("pour_x", "fill"),
            Err(UnknownToken("x".to_string()))
        );
    }

    #[test]
    fn cancelling_tokens_give_zero_similarity() {
        let lex = EmbeddingLexicon::parse("1\nup 1\ndown -1\n").unwrap();
        assert_eq!(lex.similarity("up_down", "up").unwrap(), 0.0);
    }
}
