//! Essay text to token ids: sentence splitting, tokenization, and a
//! frequency-capped vocabulary.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::EssayRecord;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const MAX_CONTENT_WORDS: usize = 4000;

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e", "u.s", "a.m",
    "p.m", "no", "mt", "ave", "inc", "ltd", "co", "gen", "gov", "sgt", "capt", "lt", "col", "rev",
    "fig", "approx", "dept", "est", "u.k", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec",
];

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}')
}

fn is_abbreviation(word: &str) -> bool {
    let w = word
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if w.chars().count() == 1 && w.chars().all(char::is_alphabetic) {
        return true;
    }
    ABBREVIATIONS.contains(&w.as_str())
}

/// Rule-based sentence splitting on `.`, `!` and `?` (plus trailing closing
/// quotes or brackets) followed by whitespace or end of text. A single `.`
/// after a known abbreviation or a one-letter initial does not end a sentence.
pub fn split_sentences(text: &str) -> Result<Vec<String>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyEssay);
    }
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let term_start = i;
        while i < chars.len() && matches!(chars[i], '.' | '!' | '?') {
            i += 1;
        }
        let single_period = i - term_start == 1 && c == '.';
        while i < chars.len() && is_closer(chars[i]) {
            i += 1;
        }
        if i < chars.len() && !chars[i].is_whitespace() {
            continue;
        }
        if single_period {
            let word_start = chars[..term_start]
                .iter()
                .rposition(|c| c.is_whitespace())
                .map_or(start, |p| p + 1)
                .max(start);
            let word: String = chars[word_start..term_start].iter().collect();
            if is_abbreviation(&word) {
                continue;
            }
        }
        let s: String = chars[start..i].iter().collect();
        let s = s.trim();
        if !s.is_empty() {
            sentences.push(s.to_string());
        }
        start = i;
    }
    let tail: String = chars[start..].iter().collect();
    let tail = tail.trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    Ok(sentences)
}

fn split_contraction(word: String, out: &mut Vec<String>) {
    if word.len() > 3 && word.ends_with("n't") {
        out.push(word[..word.len() - 3].to_string());
        out.push("n't".to_string());
        return;
    }
    match word.find('\'') {
        Some(p) if p > 0 => {
            out.push(word[..p].to_string());
            out.push(word[p..].to_string());
        }
        _ => out.push(word),
    }
}

/// Lowercased word tokens with punctuation split off and contractions split
/// at the apostrophe (`don't` → `do`, `n't`). Anonymization placeholders such
/// as `@PERSON1` stay single tokens.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let chars: Vec<char> = sentence
        .to_lowercase()
        .chars()
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .collect();
    let n = chars.len();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '@' && i + 1 < n && chars[i + 1].is_alphanumeric() {
            let start = i;
            i += 1;
            while i < n && chars[i].is_alphanumeric() {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
        } else if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < n {
                let d = chars[i];
                let next_alnum = i + 1 < n && chars[i + 1].is_alphanumeric();
                let prev = chars[i - 1];
                let joins = d.is_alphanumeric()
                    || (d == '\''
                        && prev.is_alphabetic()
                        && i + 1 < n
                        && chars[i + 1].is_alphabetic())
                    || (d == '-' && prev.is_alphanumeric() && next_alnum)
                    || (matches!(d, '.' | ',')
                        && prev.is_ascii_digit()
                        && i + 1 < n
                        && chars[i + 1].is_ascii_digit());
                if !joins {
                    break;
                }
                i += 1;
            }
            split_contraction(chars[start..i].iter().collect(), &mut tokens);
        } else if c == '.' && i + 1 < n && chars[i + 1] == '.' {
            let start = i;
            while i < n && chars[i] == '.' {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
        } else if c == '\'' && i + 1 < n && chars[i + 1].is_alphabetic() && !tokens.is_empty() {
            // clitic after a space-separated word, e.g. "do n't" or "it 's"
            let start = i;
            i += 1;
            while i < n && chars[i].is_alphabetic() {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
        } else {
            tokens.push(c.to_string());
            i += 1;
        }
    }
    tokens
}

/// Sentence-split and tokenize an essay, dropping sentences with no tokens.
pub fn tokenize_essay(text: &str) -> Result<Vec<Vec<String>>> {
    let out: Vec<Vec<String>> = split_sentences(text)?
        .iter()
        .map(|s| tokenize(s))
        .filter(|t| !t.is_empty())
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyEssay);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Most frequent `cap` tokens, ties broken lexicographically, after the
    /// two specials.
    pub fn from_counts(counts: HashMap<String, usize>, cap: usize) -> Self {
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(ranked.into_iter().take(cap).map(|(t, _)| t));
        Vocabulary::from(tokens)
    }

    /// Vocabulary over arbitrary token lists, with the default 4000-word cap.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t.to_string()).or_default() += 1;
        }
        Self::from_counts(counts, MAX_CONTENT_WORDS)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Builds the vocabulary from training essays only.
pub fn build_vocab(train: &[EssayRecord]) -> Result<Vocabulary> {
    build_vocab_with_cap(train, MAX_CONTENT_WORDS)
}

pub fn build_vocab_with_cap(train: &[EssayRecord], cap: usize) -> Result<Vocabulary> {
    if train.is_empty() {
        return Err(Error::arg(
            "cannot build a vocabulary from an empty training set",
        ));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for record in train {
        for sentence in tokenize_essay(&record.text).unwrap_or_default() {
            for tok in sentence {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    Ok(Vocabulary::from_counts(counts, cap))
}

/// An essay as per-sentence token id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedEssay {
    pub sentences: Vec<Vec<usize>>,
}

impl EncodedEssay {
    pub fn new(sentences: Vec<Vec<usize>>) -> Result<Self> {
        let sentences: Vec<Vec<usize>> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        if sentences.is_empty() {
            return Err(Error::EmptyEssay);
        }
        Ok(EncodedEssay { sentences })
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

pub fn encode_text(text: &str, vocab: &Vocabulary) -> Result<EncodedEssay> {
    let sentences = tokenize_essay(text)?
        .into_iter()
        .map(|s| s.iter().map(|t| vocab.id(t)).collect())
        .collect();
    EncodedEssay::new(sentences)
}

pub fn encode_essay(record: &EssayRecord, vocab: &Vocabulary) -> Result<EncodedEssay> {
    encode_text(&record.text, vocab)
}

pub fn decode(essay: &EncodedEssay, vocab: &Vocabulary) -> Vec<Vec<String>> {
    essay
        .sentences
        .iter()
        .map(|s| {
            s.iter()
                .map(|id| vocab.token(*id).unwrap_or(UNK_TOKEN).to_string())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EssayRecord;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn essay(id: u64, text: &str) -> EssayRecord {
        EssayRecord {
            essay_id: id,
            prompt_id: 1,
            text: text.to_string(),
            overall_score: 2,
            trait_scores: BTreeMap::new(),
        }
    }

    #[test]
    fn splits_on_terminal_punctuation() {
        assert_eq!(
            split_sentences("Hello. World.").unwrap(),
            vec!["Hello.", "World."]
        );
        assert_eq!(
            split_sentences("No punctuation here").unwrap(),
            vec!["No punctuation here"]
        );
        assert!(matches!(split_sentences("   \n"), Err(Error::EmptyEssay)));
    }

    #[test]
    fn abbreviation_does_not_split() {
        let text = "I went to see Dr. Smith yesterday. He said I was fine! \
                    Was he right? I think so... My mom agreed with him.";
        let s = split_sentences(text).unwrap();
        assert_eq!(
            s,
            vec![
                "I went to see Dr. Smith yesterday.",
                "He said I was fine!",
                "Was he right?",
                "I think so...",
                "My mom agreed with him.",
            ]
        );
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let s = split_sentences("He said \"stop.\" Then he left.").unwrap();
        assert_eq!(s, vec!["He said \"stop.\"", "Then he left."]);
    }

    #[test]
    fn decimal_numbers_do_not_split() {
        let s = split_sentences("It costs 3.50 dollars. Cheap.").unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn tokenizer_fixture() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", ",", "world", "!"]);
        assert_eq!(tokenize("I don't know"), vec!["i", "do", "n't", "know"]);
        assert_eq!(
            tokenize("It's @PERSON1's dog."),
            vec!["it", "'s", "@person1", "'s", "dog", "."]
        );
        assert_eq!(
            tokenize("Wait... 3.5 well-known"),
            vec!["wait", "...", "3.5", "well-known"]
        );
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn vocab_specials_and_ordering() {
        let v = build_vocab(&[essay(1, "the cat the dog the end cat")]).unwrap();
        assert_eq!(v.id(PAD_TOKEN), PAD);
        assert_eq!(v.id(UNK_TOKEN), UNK);
        assert_eq!(v.id("the"), 2);
        assert_eq!(v.id("cat"), 3);
        // dog and end tie at 1; lexicographic order decides
        assert_eq!(v.id("dog"), 4);
        assert_eq!(v.id("end"), 5);
        assert_eq!(v.id("zebra"), UNK);
    }

    #[test]
    fn vocab_size_counts_specials() {
        let v = build_vocab(&[essay(1, "a b c")]).unwrap();
        assert_eq!(v.len(), 5);
        assert!(build_vocab(&[]).is_err());
    }

    #[test]
    fn vocab_caps_at_4000_content_words() {
        let text: Vec<String> = (0..5000).map(|i| format!("w{i}")).collect();
        let v = build_vocab(&[essay(1, &text.join(" "))]).unwrap();
        assert_eq!(v.len(), 4002);
    }

    #[test]
    fn encode_unknown_and_round_trip() {
        let v = build_vocab(&[essay(1, "one two three. four five")]).unwrap();
        let e = encode_text("Zip zap zop", &v).unwrap();
        assert_eq!(e.sentences, vec![vec![UNK, UNK, UNK]]);

        let e = encode_text("Three one. Two four five!", &v).unwrap();
        assert_eq!(e.sentences.len(), 2);
        assert_eq!(
            decode(&e, &v),
            vec![
                vec!["three", "one", "."],
                vec!["two", "four", "five", "<unk>"]
            ]
        );
    }

    #[test]
    fn encode_fixture_lengths() {
        let v = build_vocab(&[essay(1, "a b")]).unwrap();
        let e = encode_text("I like it. It is good, really. The end", &v).unwrap();
        let lens: Vec<usize> = e.sentences.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![4, 6, 2]);
        assert!(matches!(encode_text("  ", &v), Err(Error::EmptyEssay)));
    }

    proptest! {
        #[test]
        fn tokenize_is_identity_on_plain_words(words in prop::collection::vec("[a-z]{1,8}", 0..12)) {
            let s = words.join(" ");
            prop_assert_eq!(tokenize(&s), words);
        }

        #[test]
        fn encoded_ids_are_in_vocab_range(text in "[a-zA-Z ,.!?']{1,200}") {
            let v = build_vocab(&[essay(1, "the a of and to")]).unwrap();
            if let Ok(e) = encode_text(&text, &v) {
                prop_assert!(e.sentences.iter().flatten().all(|id| *id < v.len()));
                prop_assert!(e.sentences.iter().all(|s| !s.is_empty()));
            }
        }

        #[test]
        fn sentences_are_never_empty(text in "[a-zA-Z .!?\\n]{0,200}") {
            if let Ok(s) = split_sentences(&text) {
                prop_assert!(s.iter().all(|x| !x.trim().is_empty()));
            }
        }
    }
}
