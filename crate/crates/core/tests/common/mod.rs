#![allow(dead_code)]

use std::path::PathBuf;

use pcrf_seg::corpus::load_segmented;
use pcrf_seg::lm::train_lm;
use pcrf_seg::{EmissionMatrix, NGramLM, TaggedSentence, TransitionMatrix};
use rand::Rng;

pub const ALPHABET: [char; 4] = ['a', 'b', 'c', 'd'];

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
        .join(name)
}

pub fn pku_corpus() -> Vec<TaggedSentence> {
    load_segmented(data_path("pku199801_2000.txt"), None).expect("bundled corpus loads")
}

pub fn split(lines: &[&str]) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|l| l.split(' ').map(str::to_string).collect())
        .collect()
}

pub fn random_instance(rng: &mut impl Rng, n: usize) -> (EmissionMatrix, TransitionMatrix) {
    let chars: Vec<char> = (0..n)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())])
        .collect();
    let rows: Vec<[f64; 4]> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-3.0..3.0)))
        .collect();
    let trans: [[f64; 4]; 4] =
        std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)));
    (
        EmissionMatrix::new(chars, rows).unwrap(),
        TransitionMatrix::new(trans).unwrap(),
    )
}

/// Bigram model over short words drawn from [`ALPHABET`].
pub fn random_toy_lm(rng: &mut impl Rng) -> NGramLM {
    loop {
        let corpus: Vec<Vec<String>> = (0..rng.gen_range(3..9))
            .map(|_| {
                (0..rng.gen_range(1..6))
                    .map(|_| {
                        (0..rng.gen_range(1..4))
                            .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        if let Ok(lm) = train_lm(&corpus, 2, 1) {
            return lm;
        }
    }
}

/// 请播放一首将军令 with emissions that prefer 将/军令 by a small margin
/// and a language model that has seen 将军令 as one word.
pub struct CrossoverFixture {
    pub emissions: EmissionMatrix,
    pub transitions: TransitionMatrix,
    pub lm: NGramLM,
    pub gold: Vec<&'static str>,
    pub emission_preferred: Vec<&'static str>,
}

pub fn crossover_fixture() -> CrossoverFixture {
    let chars: Vec<char> = "请播放一首将军令".chars().collect();
    // Columns are B M E S.
    let rows = vec![
        [0.0, -1.0, -1.0, 2.0],  // 请 S
        [2.0, -1.0, -1.0, 0.0],  // 播 B
        [-1.0, 0.0, 2.0, -1.0],  // 放 E
        [2.0, -1.0, -1.0, 0.0],  // 一 B
        [-1.0, 0.0, 2.0, -1.0],  // 首 E
        [0.95, -1.0, -1.0, 1.0], // 将: S narrowly over B
        [1.0, 0.9, -1.0, -1.0],  // 军: B narrowly over M
        [-1.0, 0.0, 2.0, 0.0],   // 令 E
    ];
    let lm_corpus = split(&[
        "请 播放 一首 将军令",
        "播放 将军令",
        "一首 将军令",
        "请 播放 一首 歌",
        "我 喜欢 将军令",
        "播放 一首 新 歌",
    ]);
    CrossoverFixture {
        emissions: EmissionMatrix::new(chars, rows).unwrap(),
        transitions: TransitionMatrix::zeros(),
        lm: train_lm(&lm_corpus, 2, 1).unwrap(),
        gold: vec!["请", "播放", "一首", "将军令"],
        emission_preferred: vec!["请", "播放", "一首", "将", "军令"],
    }
}
