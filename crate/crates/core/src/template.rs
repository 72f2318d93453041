//! Prompt templates: wrap an input with fixed context holding one mask.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocab, MASK_ID, TEMPLATE_WORDS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateMode {
    /// `x it is [mask]`
    Manual,
    /// `x [mask]`
    TemplateFree,
}

impl FromStr for TemplateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(TemplateMode::Manual),
            "template-free" | "template_free" => Ok(TemplateMode::TemplateFree),
            other => Err(Error::Config(format!(
                "unknown template `{other}` (expected `manual` or `template-free`)"
            ))),
        }
    }
}

impl fmt::Display for TemplateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateMode::Manual => "manual",
            TemplateMode::TemplateFree => "template-free",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub mode: TemplateMode,
    pub prefix: Vec<TokenId>,
    /// Contains the single mask token.
    pub suffix: Vec<TokenId>,
    pub max_len: usize,
}

impl Template {
    pub fn new(mode: TemplateMode, vocab: &Vocab, max_len: usize) -> Result<Self> {
        let suffix = match mode {
            TemplateMode::Manual => {
                let mut s = Vec::with_capacity(3);
                for w in TEMPLATE_WORDS {
                    s.push(vocab.id(w).ok_or_else(|| {
                        Error::Config(format!("template word `{w}` missing from vocabulary"))
                    })?);
                }
                s.push(MASK_ID);
                s
            }
            TemplateMode::TemplateFree => vec![MASK_ID],
        };
        Template::from_parts(mode, Vec::new(), suffix, max_len)
    }

    pub fn from_parts(
        mode: TemplateMode,
        prefix: Vec<TokenId>,
        suffix: Vec<TokenId>,
        max_len: usize,
    ) -> Result<Self> {
        let masks = prefix
            .iter()
            .chain(&suffix)
            .filter(|&&t| t == MASK_ID)
            .count();
        if masks != 1 {
            return Err(Error::Config(format!(
                "template must contain exactly one mask, found {masks}"
            )));
        }
        if prefix.len() + suffix.len() > max_len {
            return Err(Error::Length {
                len: prefix.len() + suffix.len(),
                max_len,
            });
        }
        Ok(Template {
            mode,
            prefix,
            suffix,
            max_len,
        })
    }

    pub fn overhead(&self) -> usize {
        self.prefix.len() + self.suffix.len()
    }

    /// Non-mask tokens of the template, in order.
    pub fn context_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.prefix
            .iter()
            .chain(&self.suffix)
            .copied()
            .filter(|&t| t != MASK_ID)
    }

    /// Returns `T(x)` and the mask position. Inputs longer than the room left
    /// by the template lose tokens from the left.
    pub fn apply(&self, x: &[TokenId]) -> Result<(Vec<TokenId>, usize)> {
        if let Some(pos) = x.iter().position(|&t| t == MASK_ID) {
            return Err(Error::MaskInInput(pos));
        }
        let room = self.max_len - self.overhead();
        let kept = &x[x.len().saturating_sub(room)..];
        let mut out = Vec::with_capacity(kept.len() + self.overhead());
        out.extend_from_slice(&self.prefix);
        out.extend_from_slice(kept);
        out.extend_from_slice(&self.suffix);
        let mask_pos = out
            .iter()
            .position(|&t| t == MASK_ID)
            .expect("template holds a mask");
        Ok((out, mask_pos))
    }
}

pub fn apply_template(x: &[TokenId], template: &Template) -> Result<(Vec<TokenId>, usize)> {
    template.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab_with_reserved;
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        build_vocab_with_reserved(&["nice movie"], 1, &TEMPLATE_WORDS).unwrap()
    }

    #[test]
    fn manual_appends_it_is_mask() {
        let v = vocab();
        let t = Template::new(TemplateMode::Manual, &v, 24).unwrap();
        let x = v.tokenize("nice movie");
        let (input, pos) = t.apply(&x).unwrap();
        assert_eq!(v.detokenize(&input), "nice movie it is [mask]");
        assert_eq!(input.len(), 5);
        assert_eq!(pos, 4);
    }

    #[test]
    fn template_free_appends_mask() {
        let v = vocab();
        let t = Template::new(TemplateMode::TemplateFree, &v, 24).unwrap();
        let x = v.tokenize("nice movie");
        assert_eq!(t.apply(&x).unwrap(), (vec![x[0], x[1], MASK_ID], 2));
        assert_eq!(t.apply(&[]).unwrap(), (vec![MASK_ID], 0));
    }

    #[test]
    fn rejects_mask_in_input() {
        let t = Template::new(TemplateMode::TemplateFree, &vocab(), 24).unwrap();
        assert!(matches!(t.apply(&[3, MASK_ID]), Err(Error::MaskInInput(1))));
    }

    #[test]
    fn left_truncation_keeps_template() {
        let v = vocab();
        let t = Template::new(TemplateMode::Manual, &v, 5).unwrap();
        let (input, pos) = t.apply(&[3, 4, 3, 4]).unwrap();
        assert_eq!(input.len(), 5);
        assert_eq!(&input[..2], &[3, 4]);
        assert_eq!(pos, 4);
    }

    #[test]
    fn missing_template_words() {
        let v = crate::corpus::build_vocab(&["a"], 1).unwrap();
        assert!(Template::new(TemplateMode::Manual, &v, 8).is_err());
    }

    proptest! {
        #[test]
        fn exactly_one_mask_at_reported_position(
            x in proptest::collection::vec(2usize..10, 0..40),
            manual in any::<bool>(),
            max_len in 4usize..30,
        ) {
            let v = vocab();
            let mode = if manual { TemplateMode::Manual } else { TemplateMode::TemplateFree };
            let t = Template::new(mode, &v, max_len).unwrap();
            let (input, pos) = t.apply(&x).unwrap();
            prop_assert!(input.len() <= max_len);
            prop_assert_eq!(input.iter().filter(|&&t| t == MASK_ID).count(), 1);
            prop_assert_eq!(input[pos], MASK_ID);
        }
    }
}
