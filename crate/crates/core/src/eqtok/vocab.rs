use std::collections::HashMap;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::TokenError;

const CANONICAL_MANIFEST: &str = include_str!("../../assets/vocab_v1.txt");

/// Version tag written next to the manifest hash in dataset headers.
pub const VOCAB_VERSION: u32 = 1;

/// Token written into unused positions of a padded sequence.
pub const PAD_TOKEN: &str = "<pad>";

/// Frozen token table. Line `i` of the manifest is the token with id `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
    pad_id: u32,
}

impl Vocabulary {
    /// Parses a manifest: one token per line, line number is the id.
    pub fn from_manifest(text: &str) -> Result<Self, TokenError> {
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                return Err(TokenError::Manifest(format!("empty token on line {}", i + 1)));
            }
            if index.insert(line.to_string(), i as u32).is_some() {
                return Err(TokenError::Manifest(format!("duplicate token {line:?} on line {}", i + 1)));
            }
            entries.push(line.to_string());
        }
        let pad_id = *index
            .get(PAD_TOKEN)
            .ok_or_else(|| TokenError::Manifest(format!("manifest has no {PAD_TOKEN} entry")))?;
        if entries.len() < 2 {
            return Err(TokenError::Manifest("manifest needs at least two tokens".into()));
        }
        Ok(Self { entries, index, pad_id })
    }

    /// The shipped vocabulary every dataset in this crate is built against.
    pub fn canonical() -> &'static Vocabulary {
        static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
        VOCAB.get_or_init(|| Vocabulary::from_manifest(CANONICAL_MANIFEST).expect("shipped manifest is valid"))
    }

    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the manifest text; stored in dataset headers.
    pub fn manifest_hash(&self) -> String {
        let digest = Sha256::digest(self.to_manifest().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    /// Maps an id onto `[-1, 1]`: id 0 to -1, the largest id to +1.
    pub fn normalize_id(&self, id: u32) -> f64 {
        2.0 * f64::from(id) / (self.len() - 1) as f64 - 1.0
    }

    /// Splits concatenated token text back into ids by longest match.
    pub fn lex(&self, text: &str) -> Result<Vec<u32>, TokenError> {
        let max_len = self.entries.iter().map(|e| e.len()).max().unwrap_or(0);
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            let mut matched = None;
            let mut len = max_len.min(rest.len());
            while len > 0 {
                if rest.is_char_boundary(len) {
                    if let Some(&id) = self.index.get(&rest[..len]) {
                        if id != self.pad_id {
                            matched = Some((id, len));
                            break;
                        }
                    }
                }
                len -= 1;
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => {
                    let snippet: String = rest.chars().take(12).collect();
                    return Err(TokenError::UnknownText { offset: pos, snippet });
                }
            }
        }
        Ok(ids)
    }
}

/// Returns the frozen canonical vocabulary.
pub fn build_vocabulary() -> Vocabulary {
    Vocabulary::canonical().clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_contains_table_tokens() {
        let v = build_vocabulary();
        for tok in [
            "(", ")", "∂", "Σ", "j", "A_j", "l_j", "ω_j", "φ_j", "sin", "t", "u", "x", "y", "+", "-", "*", "/",
            "Neumann", "Dirichlet", "None", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10^", "E", "e",
            ",", ".", "&", "∇", "=", "Δ", "·", "Derivative", PAD_TOKEN,
        ] {
            assert!(v.index_of(tok).is_some(), "missing {tok}");
        }
        assert_eq!(v.index_of(&v.entries()[0]), Some(0));
        for (i, e) in v.entries().iter().enumerate() {
            assert_eq!(v.index_of(e), Some(i as u32));
        }
    }

    #[test]
    fn manifest_round_trip() {
        let v = build_vocabulary();
        let reloaded = Vocabulary::from_manifest(&v.to_manifest()).unwrap();
        assert_eq!(v, reloaded);
        assert_eq!(v.manifest_hash(), reloaded.manifest_hash());
    }

    #[test]
    fn rejects_duplicates_and_missing_pad() {
        assert!(matches!(Vocabulary::from_manifest("a\na\n<pad>\n"), Err(TokenError::Manifest(_))));
        assert!(matches!(Vocabulary::from_manifest("a\nb\n"), Err(TokenError::Manifest(_))));
    }

    #[test]
    fn normalization_endpoints() {
        let v = build_vocabulary();
        assert_eq!(v.normalize_id(0), -1.0);
        assert_eq!(v.normalize_id(v.len() as u32 - 1), 1.0);
        for id in 1..v.len() as u32 {
            assert!(v.normalize_id(id) > v.normalize_id(id - 1));
        }
    }

    #[test]
    fn lexing_prefers_longest_token() {
        let v = build_vocabulary();
        let ids = v.lex("10^10").unwrap();
        let toks: Vec<_> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(toks, ["10^", "1", "0"]);
        assert!(v.lex("q").is_err());
    }
}
