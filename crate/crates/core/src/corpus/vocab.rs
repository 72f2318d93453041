use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const MASK_ID: TokenId = 0;
pub const PAD_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;
pub const SPECIAL_COUNT: usize = 3;

pub const MASK_TOKEN: &str = "[mask]";
pub const PAD_TOKEN: &str = "[pad]";
pub const UNK_TOKEN: &str = "[unk]";

/// Words used by the manual prompt template. Always present in vocabularies
/// built with [`build_vocab_with_reserved`] and [`TEMPLATE_WORDS`].
pub const TEMPLATE_WORDS: [&str; 2] = ["it", "is"];

/// Token ↔ id mapping. Ids 0, 1, 2 are the mask, padding and unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from ordinary tokens; specials are prepended.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = vec![MASK_TOKEN.into(), PAD_TOKEN.into(), UNK_TOKEN.into()];
        all.extend(tokens.into_iter().map(Into::into));
        let mut index = HashMap::with_capacity(all.len());
        for (id, tok) in all.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid vocabulary token {tok:?}")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{tok}`")));
            }
        }
        Ok(Vocab { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: TokenId) -> bool {
        id < SPECIAL_COUNT
    }

    /// Lowercased whitespace tokenization. Unknown words and the textual
    /// forms of special tokens map to [`UNK_ID`].
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| {
                let w = w.to_lowercase();
                match self.index.get(&w) {
                    Some(&id) if !Vocab::is_special(id) => id,
                    _ => UNK_ID,
                }
            })
            .collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line, specials included, in id order.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let expected = [MASK_TOKEN, PAD_TOKEN, UNK_TOKEN];
        if lines.len() < SPECIAL_COUNT || lines[..SPECIAL_COUNT] != expected {
            return Err(Error::parse(
                1,
                "vocabulary must start with [mask], [pad], [unk]",
            ));
        }
        for (i, l) in lines.iter().enumerate().skip(SPECIAL_COUNT) {
            if l.trim().is_empty() {
                return Err(Error::parse(i + 1, "empty vocabulary entry"));
            }
        }
        Vocab::from_tokens(lines[SPECIAL_COUNT..].iter().map(|s| s.trim().to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::from_text(&text)
    }
}

/// Counts lowercased whitespace tokens and keeps those with frequency at
/// least `min_freq`, ordered by descending frequency then lexicographically.
pub fn build_vocab<S: AsRef<str>>(lines: &[S], min_freq: usize) -> Result<Vocab> {
    build_vocab_with_reserved(lines, min_freq, &[])
}

/// As [`build_vocab`], but every token in `reserved` is guaranteed an entry;
/// reserved tokens that did not survive `min_freq` are appended at the end.
pub fn build_vocab_with_reserved<S: AsRef<str>>(
    lines: &[S],
    min_freq: usize,
    reserved: &[&str],
) -> Result<Vocab> {
    if lines.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for line in lines {
        for w in line.as_ref().split_whitespace() {
            *counts.entry(w.to_lowercase()).or_default() += 1;
        }
    }
    let specials = [MASK_TOKEN, PAD_TOKEN, UNK_TOKEN];
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_freq.max(1) && !specials.contains(&w.as_str()))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyCorpus { min_freq });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens: Vec<String> = kept.into_iter().map(|(w, _)| w).collect();
    for r in reserved {
        let r = r.to_lowercase();
        if !tokens.contains(&r) {
            tokens.push(r);
        }
    }
    Vocab::from_tokens(tokens)
}
