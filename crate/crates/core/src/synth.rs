//! Synthetic essays in the ASAP record format.
//!
//! Each essay gets a latent quality `q` in [0, 1]. Higher quality essays
//! are longer and draw more often from a "strong" word list; every score
//! is `q` mapped onto the head's range plus a little per-trait noise. The
//! signal is learnable from text alone, which is all the demos and smoke
//! tests need.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{EssayRecord, PromptSpec, ScoreRange};

const WEAK: &[&str] = &[
    "thing", "stuff", "good", "bad", "nice", "very", "really", "like", "get", "got", "lot", "big",
];
const STRONG: &[&str] = &[
    "consequently",
    "evidence",
    "illustrates",
    "perspective",
    "significant",
    "moreover",
    "demonstrates",
    "analysis",
    "persuasive",
    "furthermore",
    "nuanced",
    "compelling",
];
const FILLER: &[&str] = &[
    "the",
    "a",
    "people",
    "computers",
    "school",
    "because",
    "and",
    "it",
    "is",
    "they",
    "we",
    "that",
    "this",
    "of",
    "to",
    "in",
];

fn scale(q: f64, range: ScoreRange) -> i64 {
    let raw = range.min as f64 + q * (range.max - range.min) as f64;
    (raw.round() as i64).clamp(range.min, range.max)
}

/// Generates `n` essays for `prompt`, ids starting at `first_id`.
pub fn synthetic_essays(
    prompt: &PromptSpec,
    n: usize,
    first_id: u64,
    seed: u64,
) -> Vec<EssayRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(prompt.prompt_id));
    (0..n)
        .map(|i| {
            let q: f64 = rng.gen();
            let sentences = 2 + (q * 6.0) as usize + rng.gen_range(0..2);
            let mut text = String::new();
            for _ in 0..sentences {
                let len = 4 + (q * 8.0) as usize + rng.gen_range(0..3);
                let words: Vec<&str> = (0..len)
                    .map(|_| {
                        let r: f64 = rng.gen();
                        if r < 0.45 {
                            FILLER[rng.gen_range(0..FILLER.len())]
                        } else if rng.gen::<f64>() < q {
                            STRONG[rng.gen_range(0..STRONG.len())]
                        } else {
                            WEAK[rng.gen_range(0..WEAK.len())]
                        }
                    })
                    .collect();
                let mut s = words.join(" ");
                if let Some(first) = s.get_mut(0..1) {
                    first.make_ascii_uppercase();
                }
                text.push_str(&s);
                text.push_str(". ");
            }
            let trait_scores: BTreeMap<String, i64> = prompt
                .traits
                .iter()
                .map(|t| {
                    let noisy = (q + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
                    (t.clone(), scale(noisy, prompt.trait_range))
                })
                .collect();
            EssayRecord {
                essay_id: first_id + i as u64,
                prompt_id: prompt.prompt_id,
                text: text.trim_end().to_string(),
                overall_score: scale(q, prompt.overall_range),
                trait_scores,
            }
        })
        .collect()
}
