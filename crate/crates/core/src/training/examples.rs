use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageId, Specials, TokenId, Vocabulary};
use crate::decoding::TokenTranslator;
use crate::error::{Error, Result};
use crate::model::LossMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Mono,
    Bt,
    RandomPair,
    PseudoParallel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub tokens: Vec<TokenId>,
    pub mask: LossMask,
    pub provenance: Provenance,
}

impl TrainingExample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Errors with `ContextOverflow` if the example is longer than `max_context`.
    pub fn check_fits(self, max_context: usize) -> Result<Self> {
        if self.tokens.len() > max_context {
            return Err(Error::ContextOverflow { len: self.tokens.len(), max: max_context });
        }
        Ok(self)
    }
}

/// `[BOS, TAG, s…, EOS]`, supervised on `s…` and EOS.
pub fn make_mono_example(vocab: &Vocabulary, lang: &LanguageId, sentence: &[TokenId]) -> Result<TrainingExample> {
    let mut tokens = Vec::with_capacity(sentence.len() + 3);
    tokens.push(Specials::BOS);
    tokens.push(vocab.tag(lang)?);
    tokens.extend_from_slice(sentence);
    tokens.push(Specials::EOS);
    let mut mask = vec![true; tokens.len()];
    mask[0] = false;
    mask[1] = false;
    Ok(TrainingExample { tokens, mask: LossMask::new(mask), provenance: Provenance::Mono })
}

/// `[BOS, TAG(X), x…, TAG(Y), y…, EOS]`, supervised on `y…` and EOS.
pub fn make_pair_example(
    vocab: &Vocabulary,
    x_lang: &LanguageId,
    x: &[TokenId],
    y_lang: &LanguageId,
    y: &[TokenId],
    provenance: Provenance,
) -> Result<TrainingExample> {
    let mut tokens = Vec::with_capacity(x.len() + y.len() + 4);
    tokens.push(Specials::BOS);
    tokens.push(vocab.tag(x_lang)?);
    tokens.extend_from_slice(x);
    tokens.push(vocab.tag(y_lang)?);
    let supervised_from = tokens.len();
    tokens.extend_from_slice(y);
    tokens.push(Specials::EOS);
    let mask = (0..tokens.len()).map(|i| i >= supervised_from).collect();
    Ok(TrainingExample { tokens, mask: LossMask::new(mask), provenance })
}

/// Random pairing of independently drawn `x` and `y` for direction `X→Y`.
pub fn make_random_pair_example(
    vocab: &Vocabulary,
    x_lang: &LanguageId,
    x: &[TokenId],
    y_lang: &LanguageId,
    y: &[TokenId],
    max_context: usize,
) -> Result<TrainingExample> {
    make_pair_example(vocab, x_lang, x, y_lang, y, Provenance::RandomPair)?.check_fits(max_context)
}

/// Back-translation example for direction `X→Y`: `y` is translated `Y→X` by
/// `generator` and the model learns to reconstruct `y` from the result.
pub fn make_bt_example(
    generator: &dyn TokenTranslator,
    vocab: &Vocabulary,
    x_lang: &LanguageId,
    y_lang: &LanguageId,
    y: &[TokenId],
    index: u64,
    max_context: usize,
) -> Result<TrainingExample> {
    let x_hat = generator.translate_tokens(y_lang, x_lang, y, index)?;
    make_pair_example(vocab, x_lang, &x_hat, y_lang, y, Provenance::Bt)?.check_fits(max_context)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{MonolingualCorpus, Split};
    use crate::decoding::parse_spans;

    /// Vocabulary whose tags for X and Y sit at ids 10 and 11.
    fn vocab() -> Vocabulary {
        let langs: Vec<LanguageId> = ["P", "Q", "R", "S", "T", "U", "X", "Y"].iter().map(|&l| l.into()).collect();
        let c = MonolingualCorpus { language: "X".into(), split: Split::Train, sentences: vec!["a b c d e f g h".into()] };
        let v = Vocabulary::build(&[&c], &langs).unwrap();
        assert_eq!(v.tag(&"X".into()).unwrap(), 10);
        assert_eq!(v.tag(&"Y".into()).unwrap(), 11);
        v
    }

    struct Fixed(Vec<TokenId>);

    impl TokenTranslator for Fixed {
        fn translate_tokens(&self, _: &LanguageId, _: &LanguageId, _: &[TokenId], _: u64) -> Result<Vec<TokenId>> {
            Ok(self.0.clone())
        }
    }

    struct Copy;

    impl TokenTranslator for Copy {
        fn translate_tokens(&self, _: &LanguageId, _: &LanguageId, t: &[TokenId], _: u64) -> Result<Vec<TokenId>> {
            Ok(t.to_vec())
        }
    }

    const T: bool = true;
    const F: bool = false;

    #[test]
    fn mono_layout() {
        let v = vocab();
        let e = make_mono_example(&v, &"X".into(), &[5, 6]).unwrap();
        assert_eq!(e.tokens, [1, 10, 5, 6, 2]);
        assert_eq!(e.mask.as_slice(), [F, F, T, T, T]);
        let e = make_mono_example(&v, &"X".into(), &[]).unwrap();
        assert_eq!(e.mask.as_slice(), [F, F, T]);
        assert_eq!(e.provenance, Provenance::Mono);
    }

    #[test]
    fn bt_layout() {
        let v = vocab();
        let e = make_bt_example(&Fixed(vec![7]), &v, &"X".into(), &"Y".into(), &[5], 0, 64).unwrap();
        assert_eq!(e.tokens, [1, 10, 7, 11, 5, 2]);
        assert_eq!(e.mask.as_slice(), [F, F, F, F, T, T]);
        assert_eq!(e.provenance, Provenance::Bt);
        let e = make_bt_example(&Copy, &v, &"X".into(), &"Y".into(), &[5, 6], 0, 64).unwrap();
        assert_eq!(e.tokens, [1, 10, 5, 6, 11, 5, 6, 2]);
    }

    #[test]
    fn bt_overflow() {
        let v = vocab();
        let e = make_bt_example(&Fixed(vec![7; 10]), &v, &"X".into(), &"Y".into(), &[5], 0, 12);
        assert!(matches!(e, Err(Error::ContextOverflow { len: 15, max: 12 })));
    }

    #[test]
    fn random_pair_layout_and_reversal() {
        let v = vocab();
        let e = make_random_pair_example(&v, &"X".into(), &[5], &"Y".into(), &[9], 64).unwrap();
        assert_eq!(e.tokens, [1, 10, 5, 11, 9, 2]);
        assert_eq!(e.mask.as_slice(), [F, F, F, F, T, T]);
        let r = make_random_pair_example(&v, &"Y".into(), &[9], &"X".into(), &[5], 64).unwrap();
        assert_eq!(r.tokens, [1, 11, 9, 10, 5, 2]);
        assert_eq!(e.provenance, Provenance::RandomPair);
    }

    #[test]
    fn pairs_parse_back() {
        let v = vocab();
        let e = make_pair_example(&v, &"X".into(), &[12, 13, 14], &"Y".into(), &[15, 16], Provenance::PseudoParallel)
            .unwrap();
        let s = parse_spans(&v, &e.tokens).unwrap();
        assert_eq!(s.first_tag, 10);
        assert_eq!(&e.tokens[s.first.clone()], &[12, 13, 14]);
        assert_eq!(s.second_tag, Some(11));
        let second = s.second.unwrap();
        assert_eq!(&e.tokens[second.clone()], &[15, 16]);
        assert!(s.has_eos);
        let supervised: Vec<usize> = (0..e.len()).filter(|&i| e.mask.as_slice()[i]).collect();
        assert_eq!(supervised, (second.start..e.len()).collect::<Vec<_>>());
    }
}
