use crate::error::{Error, Result};

/// Sentence encoder contract. `encode` maps a model-input text to a pooled
/// representation of length `dim` (for transformer adapters, the final-layer
/// `[CLS]` vector).
pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Deterministic for fixed backend state; entries must be finite.
    fn encode(&self, text: &str) -> Vec<f64>;

    /// Whether [`EncoderBackend::update`] changes the encoder.
    fn trainable(&self) -> bool {
        false
    }

    /// Receives the gradient of the batch loss with respect to each pooled
    /// embedding of `texts`. Frozen backends ignore it.
    fn update(&mut self, _texts: &[&str], _embedding_grads: &[Vec<f64>], _lr: f64) -> Result<()> {
        Ok(())
    }

    /// String from which the backend state can be reconstructed.
    fn reference(&self) -> String;
}

/// Signed feature hashing of lowercased unigrams and bigrams into a fixed
/// number of buckets, L2-normalized. Frozen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashedNgramBackend {
    dim: usize,
    seed: u64,
}

pub const HASHED_BACKEND_NAME: &str = "hashed-ngram";

impl HashedNgramBackend {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "backend dim must be positive".into(),
            ));
        }
        Ok(HashedNgramBackend { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn bucket(&self, gram: &[&str]) -> (usize, f64) {
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ splitmix64(self.seed);
        for (i, tok) in gram.iter().enumerate() {
            if i > 0 {
                h = fnv_step(h, 0x1f);
            }
            for &b in tok.as_bytes() {
                h = fnv_step(h, b);
            }
        }
        let h = splitmix64(h);
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

fn fnv_step(h: u64, b: u8) -> u64 {
    (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Alphanumeric runs become words; every other non-space character is its
/// own token.
fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() || c == '\'' {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

impl EncoderBackend for HashedNgramBackend {
    fn name(&self) -> &str {
        HASHED_BACKEND_NAME
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let toks: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let mut v = vec![0.0; self.dim];
        for i in 0..toks.len() {
            let (j, s) = self.bucket(&toks[i..i + 1]);
            v[j] += s;
            if i + 1 < toks.len() {
                let (j, s) = self.bucket(&toks[i..i + 2]);
                v[j] += s;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    fn reference(&self) -> String {
        format!("{HASHED_BACKEND_NAME}:dim={}:seed={}", self.dim, self.seed)
    }
}

/// Rebuilds a backend from its [`EncoderBackend::reference`] string.
/// Only the built-in hashing backend can be reconstructed in-process.
pub fn backend_from_reference(reference: &str) -> Result<Box<dyn EncoderBackend>> {
    let mut parts = reference.split(':');
    match parts.next() {
        Some(HASHED_BACKEND_NAME) => {
            let mut dim = None;
            let mut seed = None;
            for p in parts {
                match p.split_once('=') {
                    Some(("dim", v)) => dim = v.parse().ok(),
                    Some(("seed", v)) => seed = v.parse().ok(),
                    _ => {}
                }
            }
            match (dim, seed) {
                (Some(d), Some(s)) => Ok(Box::new(HashedNgramBackend::new(d, s)?)),
                _ => Err(Error::Config(format!(
                    "malformed backend reference {reference:?}"
                ))),
            }
        }
        _ => Err(Error::Config(format!(
            "backend {reference:?} is not available in-process; supply an adapter"
        ))),
    }
}
