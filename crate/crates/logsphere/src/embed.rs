//! Rich representations: tokenize a raw message, normalize parameter-like
//! tokens, and average per-token vectors from a pluggable provider.
//!
//! The built-in provider is a loadable word-vector table. Tokens missing from
//! the table get a deterministic pseudo-random unit vector derived from
//! `(oov_seed, token)`, so the whole mapping is a pure function and an empty
//! table is a valid (hash-only) provider.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_SENTINEL: &str = "<num>";
pub const ID_SENTINEL: &str = "<id>";

/// A normalized token: lowercase, non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token(pub String);

/// Word-vector provider backing `embed_log`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorTable {
    pub dimension: usize,
    pub entries: BTreeMap<String, Vec<f64>>,
    pub oov_seed: u64,
}

/// Dense semantic vector of one log message.
#[derive(Debug, Clone, PartialEq)]
pub struct RichRepr {
    pub vector: Vec<f64>,
}

/// Lowercase and split on any run of characters outside `[a-z0-9_.]`;
/// leading/trailing dots are stripped so sentence punctuation does not leak
/// into tokens, while interior dots (version strings) survive.
pub fn tokenize(body: &str) -> Vec<Token> {
    body.to_lowercase()
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.'))
        .map(|frag| frag.trim_matches('.'))
        .filter(|frag| !frag.is_empty())
        .map(|frag| Token(frag.to_string()))
        .collect()
}

/// Collapse parameter-like tokens: pure numbers become `<num>`; long tokens
/// that look like identifiers (hex-like, or carrying at least two digits)
/// become `<id>`.
pub fn normalize_token(t: &Token) -> Token {
    let s = &t.0;
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_digit()) {
        return Token(NUM_SENTINEL.to_string());
    }
    if s.len() >= 6 {
        let digits = s.chars().filter(|c| c.is_ascii_digit()).count();
        let hex_like = digits >= 1 && s.chars().all(|c| c.is_ascii_hexdigit());
        if hex_like || digits >= 2 {
            return Token(ID_SENTINEL.to_string());
        }
    }
    t.clone()
}

/// Tokenize and normalize in one step.
pub fn normalized_tokens(body: &str) -> Vec<Token> {
    tokenize(body).iter().map(normalize_token).collect()
}

impl VectorTable {
    pub fn empty(dimension: usize, oov_seed: u64) -> Self {
        VectorTable {
            dimension,
            entries: BTreeMap::new(),
            oov_seed,
        }
    }

    /// Deterministic unit vector for a token not present in the table.
    pub fn oov_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.oov_seed, token));
        // Box-Muller from raw uniforms keeps this independent of rand_distr.
        let mut v: Vec<f64> = (0..self.dimension)
            .map(|_| {
                use rand::Rng;
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for x in &mut v {
            *x /= norm;
        }
        v
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        match self.entries.get(token) {
            Some(v) => v.clone(),
            None => self.oov_vector(token),
        }
    }
}

/// Stable 64-bit mix of the seed and token text (FNV-1a core). The std hasher
/// is not stable across releases, so we keep our own.
fn mix_seed(seed: u64, token: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Mean of per-token vectors. Pure in (tokens, table).
pub fn embed_log(tokens: &[Token], table: &VectorTable) -> Result<RichRepr> {
    if tokens.is_empty() {
        return Err(Error::Data("cannot embed a log with no tokens".into()));
    }
    let mut acc = vec![0.0f64; table.dimension];
    for t in tokens {
        let v = table.lookup(&t.0);
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += x;
        }
    }
    let n = tokens.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(RichRepr { vector: acc })
}

/// Embed a raw body: tokenize, normalize, average.
pub fn embed_body(body: &str, table: &VectorTable) -> Result<RichRepr> {
    embed_log(&normalized_tokens(body), table)
}

/// Load a plain-text word-vector file: `token v1 v2 ... vd` per line.
pub fn load_vectors(path: impl AsRef<Path>, oov_seed: u64) -> Result<VectorTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut entries: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dimension = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            path: path.into(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap().to_string();
        let vec: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::Malformed {
                    path: path.into(),
                    line: lineno + 1,
                    msg: format!("bad number {p:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if vec.is_empty() || vec.iter().any(|x| !x.is_finite()) {
            return Err(Error::Malformed {
                path: path.into(),
                line: lineno + 1,
                msg: "vector empty or non-finite".into(),
            });
        }
        if dimension == 0 {
            dimension = vec.len();
        } else if vec.len() != dimension {
            return Err(Error::Malformed {
                path: path.into(),
                line: lineno + 1,
                msg: format!("dimension {} inconsistent with {}", vec.len(), dimension),
            });
        }
        if entries.insert(token.clone(), vec).is_some() {
            return Err(Error::Malformed {
                path: path.into(),
                line: lineno + 1,
                msg: format!("duplicate token {token:?}"),
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::Data(format!("no vectors in {}", path.display())));
    }
    Ok(VectorTable {
        dimension,
        entries,
        oov_seed,
    })
}

/// Write a table in the same plain-text format.
pub fn save_vectors(path: impl AsRef<Path>, table: &VectorTable) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (token, vec) in &table.entries {
        let vals: Vec<String> = vec.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{token} {}", vals.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(body: &str) -> Vec<String> {
        tokenize(body).into_iter().map(|t| t.0).collect()
    }

    #[test]
    fn tokenize_direct_split() {
        assert_eq!(
            toks("Started reading broadcast variable 17"),
            vec!["started", "reading", "broadcast", "variable", "17"]
        );
    }

    #[test]
    fn tokenize_punctuation() {
        assert_eq!(
            toks("Container launch failed for container_32h: Connection refused."),
            vec![
                "container",
                "launch",
                "failed",
                "for",
                "container_32h",
                "connection",
                "refused"
            ]
        );
    }

    #[test]
    fn tokenize_degenerate() {
        assert!(toks("!!! ???").is_empty());
    }

    #[test]
    fn normalize_rules() {
        let n = |s: &str| normalize_token(&Token(s.to_string())).0;
        assert_eq!(n("32768"), NUM_SENTINEL);
        assert_eq!(n("container_32h"), ID_SENTINEL);
        assert_eq!(n("broadcast"), "broadcast");
        assert_eq!(n("deadbeef1"), ID_SENTINEL); // hex-like
        assert_eq!(n("a1b"), "a1b"); // short, one digit
    }

    #[test]
    fn embed_mean_of_two() {
        let mut table = VectorTable::empty(2, 0);
        table.entries.insert("a".into(), vec![1.0, 0.0]);
        table.entries.insert("b".into(), vec![0.0, 1.0]);
        let r = embed_log(&[Token("a".into()), Token("b".into())], &table).unwrap();
        assert_eq!(r.vector, vec![0.5, 0.5]);
    }

    #[test]
    fn embed_is_deterministic_and_order_invariant() {
        let table = VectorTable::empty(16, 99);
        let a = embed_body("worker bravo started shard 12", &table).unwrap();
        let b = embed_body("worker bravo started shard 12", &table).unwrap();
        assert_eq!(a, b);
        let c = embed_body("shard 12 started worker bravo", &table).unwrap();
        for (x, y) in a.vector.iter().zip(&c.vector) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_parameter_invariance() {
        let table = VectorTable::empty(16, 7);
        let a = embed_body("opened block blk_90210a in 35 ms", &table).unwrap();
        let b = embed_body("opened block blk_11577x in 88 ms", &table).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embed_rejects_empty() {
        let table = VectorTable::empty(4, 0);
        assert!(embed_log(&[], &table).is_err());
    }

    #[test]
    fn embed_matches_brute_force_mean() {
        // independent oracle: accumulate per-dimension sums by hand
        let mut table = VectorTable::empty(4, 3);
        table.entries.insert("alpha".into(), vec![1.0, 2.0, 3.0, 4.0]);
        table.entries.insert("beta".into(), vec![-1.0, 0.5, 0.0, 2.0]);
        let tokens: Vec<Token> = ["alpha", "beta", "gamma", "alpha", "delta"]
            .iter()
            .map(|s| Token(s.to_string()))
            .collect();
        let got = embed_log(&tokens, &table).unwrap();
        let mut expect = vec![0.0; 4];
        for t in &tokens {
            let v = table.lookup(&t.0);
            for d in 0..4 {
                expect[d] += v[d];
            }
        }
        for e in &mut expect {
            *e /= tokens.len() as f64;
        }
        for d in 0..4 {
            assert!((got.vector[d] - expect[d]).abs() < 1e-15);
        }
    }

    #[test]
    fn load_vectors_small_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alpha 1 0 0 0").unwrap();
        writeln!(f, "beta 0 1 0 0").unwrap();
        writeln!(f, "gamma 0 0 0.5 0.25").unwrap();
        let t = load_vectors(f.path(), 0).unwrap();
        assert_eq!(t.dimension, 4);
        assert_eq!(t.entries.len(), 3);
    }

    #[test]
    fn load_vectors_rejects_inconsistent_dim() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alpha 1 0 0 0").unwrap();
        writeln!(f, "beta 0 1 0 0 9").unwrap();
        assert!(load_vectors(f.path(), 0).is_err());
    }

    #[test]
    fn load_vectors_rejects_duplicate_token() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alpha 1 0").unwrap();
        writeln!(f, "alpha 0 1").unwrap();
        assert!(load_vectors(f.path(), 0).is_err());
    }

    #[test]
    fn paraphrase_proximity_monotone_in_shared_fraction() {
        // messages sharing a larger fraction of tokens embed closer
        let table = VectorTable::empty(32, 5);
        let base = "scheduler assigned task to executor on rack seven";
        let base_r = embed_body(base, &table).unwrap();
        let variants = [
            ("scheduler assigned task to executor on rack nine", 8),
            ("scheduler assigned task to worker off rack nine", 6),
            ("scheduler dropped job to worker off rack nine", 4),
            ("manager dropped job from worker off bench nine", 1),
        ];
        let mut last = f64::INFINITY;
        for (text, _shared) in variants {
            let r = embed_body(text, &table).unwrap();
            let sim = cosine(&base_r.vector, &r.vector);
            assert!(sim <= last + 1e-9, "{text}: {sim} > {last}");
            last = sim;
        }
    }
}
