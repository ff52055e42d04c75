//! Corpus ingestion: text normalization, the BMES tag codec, corpus files
//! and dataset statistics.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Character position tag. The integer codes are part of every serialized
/// artifact and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Tag {
    B = 0,
    M = 1,
    E = 2,
    S = 3,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::B, Tag::M, Tag::E, Tag::S];
    pub const COUNT: usize = 4;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Tag::B => 'B',
            Tag::M => 'M',
            Tag::E => 'E',
            Tag::S => 'S',
        }
    }

    pub fn from_char(c: char) -> Option<Tag> {
        match c {
            'B' => Some(Tag::B),
            'M' => Some(Tag::M),
            'E' => Some(Tag::E),
            'S' => Some(Tag::S),
            _ => None,
        }
    }

    /// Tags that may open a sentence.
    #[inline]
    pub fn can_start(self) -> bool {
        matches!(self, Tag::B | Tag::S)
    }

    /// Tags that may close a sentence.
    #[inline]
    pub fn can_end(self) -> bool {
        matches!(self, Tag::E | Tag::S)
    }

    /// True if the tag finishes the word it belongs to.
    #[inline]
    pub fn closes_word(self) -> bool {
        matches!(self, Tag::E | Tag::S)
    }

    /// True if the tag starts a fresh word.
    #[inline]
    pub fn opens_word(self) -> bool {
        matches!(self, Tag::B | Tag::S)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// `LEGAL[from][to]` for adjacent tags.
pub const LEGAL_TRANSITIONS: [[bool; 4]; 4] = [
    // B -> M, E
    [false, true, true, false],
    // M -> M, E
    [false, true, true, false],
    // E -> B, S
    [true, false, false, true],
    // S -> B, S
    [true, false, false, true],
];

#[inline]
pub fn is_legal_transition(from: Tag, to: Tag) -> bool {
    LEGAL_TRANSITIONS[from.index()][to.index()]
}

pub fn is_legal_path(tags: &[Tag]) -> bool {
    match (tags.first(), tags.last()) {
        (Some(first), Some(last)) => {
            first.can_start()
                && last.can_end()
                && tags.windows(2).all(|w| is_legal_transition(w[0], w[1]))
        }
        _ => false,
    }
}

pub fn format_tags(tags: &[Tag]) -> String {
    tags.iter().map(|t| t.as_char()).collect()
}

/// One normalized corpus line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSentence(String);

impl RawSentence {
    pub fn new(text: &str) -> Self {
        RawSentence(normalize(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

/// Characters with their BMES tags. The tag path is always legal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    chars: Vec<char>,
    tags: Vec<Tag>,
}

impl TaggedSentence {
    /// Builds a sentence from parts, rejecting mismatched lengths and
    /// illegal tag paths.
    pub fn new(chars: Vec<char>, tags: Vec<Tag>) -> Result<Self> {
        if chars.len() != tags.len() {
            return Err(Error::ShapeMismatch {
                rows: tags.len(),
                chars: chars.len(),
            });
        }
        if !is_legal_path(&tags) {
            return Err(Error::Config(format!(
                "illegal BMES path {}",
                format_tags(&tags)
            )));
        }
        Ok(TaggedSentence { chars, tags })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn words(&self) -> Vec<String> {
        bmes_decode(self)
    }
}

fn is_fullwidth_ascii(c: char) -> bool {
    ('\u{FF01}'..='\u{FF5E}').contains(&c)
}

/// Half-width conversion, control character removal and whitespace cleanup.
///
/// Full-width ASCII variants (U+FF01..U+FF5E) become their ASCII
/// counterparts and U+3000 becomes a space. Control characters are dropped,
/// except tab which counts as whitespace. Whitespace runs collapse to a
/// single space and the ends are trimmed.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        let c = if is_fullwidth_ascii(c) {
            char::from_u32(c as u32 - 0xFEE0).unwrap_or(c)
        } else if c == '\u{3000}' {
            ' '
        } else {
            c
        };
        if c.is_control() && c != '\t' {
            continue;
        }
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

/// Tags a word list: single characters get `S`, longer words `B M* E`.
pub fn bmes_encode<S: AsRef<str>>(words: &[S]) -> Result<TaggedSentence> {
    let mut chars = Vec::new();
    let mut tags = Vec::new();
    for word in words {
        let start = chars.len();
        chars.extend(word.as_ref().chars());
        let len = chars.len() - start;
        match len {
            0 => return Err(Error::EmptyWord),
            1 => tags.push(Tag::S),
            _ => {
                tags.push(Tag::B);
                tags.extend(std::iter::repeat_n(Tag::M, len - 2));
                tags.push(Tag::E);
            }
        }
    }
    if chars.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(TaggedSentence { chars, tags })
}

pub fn bmes_decode(sentence: &TaggedSentence) -> Vec<String> {
    decode_tags(&sentence.chars, &sentence.tags)
}

/// Splits `chars` into words according to `tags`.
///
/// Illegal paths are repaired: a boundary is placed before every `B` and
/// `S` and after every `E` and `S`. Extra tags or characters beyond the
/// shorter of the two slices are ignored.
pub fn decode_tags(chars: &[char], tags: &[Tag]) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for (&c, &tag) in chars.iter().zip(tags) {
        if tag.opens_word() && !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        current.push(c);
        if tag.closes_word() {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Repairs an arbitrary tag sequence into the legal path that `decode_tags`
/// implies.
pub fn repair_tags(tags: &[Tag]) -> Vec<Tag> {
    let mut out = Vec::with_capacity(tags.len());
    let mut word_len = 0usize;
    let flush = |out: &mut Vec<Tag>, len: usize| match len {
        0 => {}
        1 => out.push(Tag::S),
        n => {
            out.push(Tag::B);
            out.extend(std::iter::repeat_n(Tag::M, n - 2));
            out.push(Tag::E);
        }
    };
    for &tag in tags {
        if tag.opens_word() && word_len > 0 {
            flush(&mut out, word_len);
            word_len = 0;
        }
        word_len += 1;
        if tag.closes_word() {
            flush(&mut out, word_len);
            word_len = 0;
        }
    }
    flush(&mut out, word_len);
    out
}

/// Optional character substitution table, e.g. traditional to simplified.
#[derive(Debug, Clone, Default)]
pub struct CharMapping {
    map: HashMap<char, char>,
}

impl CharMapping {
    /// Reads `<src_char>\t<dst_char>` lines. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (src, dst) = match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(d), None) => (s, d),
                _ => return Err(Error::format(idx + 1, "expected two tab-separated columns")),
            };
            let single = |s: &str| {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Some(c),
                    _ => None,
                }
            };
            match (single(src), single(dst)) {
                (Some(s), Some(d)) => {
                    map.insert(s, d);
                }
                _ => return Err(Error::format(idx + 1, "columns must be single characters")),
            }
        }
        Ok(CharMapping { map })
    }

    pub fn apply(&self, text: &str) -> String {
        text.chars()
            .map(|c| self.map.get(&c).copied().unwrap_or(c))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum Corpus {
    Raw(Vec<RawSentence>),
    Segmented(Vec<TaggedSentence>),
}

impl Corpus {
    pub fn len(&self) -> usize {
        match self {
            Corpus::Raw(v) => v.len(),
            Corpus::Segmented(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loads a one-sentence-per-line UTF-8 file. Each line is normalized (and
/// mapped, if a mapping is given); blank lines are skipped. Segmented files
/// are split on spaces and BMES-encoded.
pub fn load_corpus(
    path: impl AsRef<Path>,
    segmented: bool,
    mapping: Option<&CharMapping>,
) -> Result<Corpus> {
    let lines = read_normalized_lines(path, mapping)?;
    if segmented {
        let mut out = Vec::with_capacity(lines.len());
        for (_, line) in lines {
            let words: Vec<&str> = line.split(' ').collect();
            out.push(bmes_encode(&words)?);
        }
        Ok(Corpus::Segmented(out))
    } else {
        Ok(Corpus::Raw(
            lines.into_iter().map(|(_, l)| RawSentence(l)).collect(),
        ))
    }
}

pub fn load_segmented(
    path: impl AsRef<Path>,
    mapping: Option<&CharMapping>,
) -> Result<Vec<TaggedSentence>> {
    match load_corpus(path, true, mapping)? {
        Corpus::Segmented(v) => Ok(v),
        Corpus::Raw(_) => unreachable!(),
    }
}

/// Non-empty normalized lines with their 1-based line numbers.
fn read_normalized_lines(
    path: impl AsRef<Path>,
    mapping: Option<&CharMapping>,
) -> Result<Vec<(usize, String)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let text = std::str::from_utf8(raw).map_err(|_| Error::Utf8 { line: idx + 1 })?;
        let mut line = normalize(text);
        if let Some(m) = mapping {
            line = m.apply(&line);
        }
        if !line.is_empty() {
            out.push((idx + 1, line));
        }
    }
    Ok(out)
}

/// Word, phrase and sentence-length statistics of a segmented corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub sentence_count: usize,
    pub char_count: usize,
    pub word_count: usize,
    pub phrase_count: usize,
    pub avg_sentence_length: f64,
}

impl DatasetStats {
    /// Statistics of the concatenation of two corpora.
    pub fn combine(&self, other: &DatasetStats) -> DatasetStats {
        let sentence_count = self.sentence_count + other.sentence_count;
        let char_count = self.char_count + other.char_count;
        DatasetStats {
            sentence_count,
            char_count,
            word_count: self.word_count + other.word_count,
            phrase_count: self.phrase_count + other.phrase_count,
            avg_sentence_length: char_count as f64 / sentence_count as f64,
        }
    }
}

pub const DEFAULT_PHRASE_THRESHOLD: usize = 2;

pub fn dataset_stats(corpus: &[TaggedSentence]) -> Result<DatasetStats> {
    dataset_stats_with_threshold(corpus, DEFAULT_PHRASE_THRESHOLD)
}

/// Phrases are words strictly longer than `phrase_threshold` characters.
pub fn dataset_stats_with_threshold(
    corpus: &[TaggedSentence],
    phrase_threshold: usize,
) -> Result<DatasetStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut word_count = 0;
    let mut phrase_count = 0;
    let mut char_count = 0;
    for sentence in corpus {
        char_count += sentence.len();
        let mut word_len = 0;
        for tag in sentence.tags() {
            word_len += 1;
            if tag.closes_word() {
                word_count += 1;
                if word_len > phrase_threshold {
                    phrase_count += 1;
                }
                word_len = 0;
            }
        }
    }
    Ok(DatasetStats {
        sentence_count: corpus.len(),
        char_count,
        word_count,
        phrase_count,
        avg_sentence_length: char_count as f64 / corpus.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn tags(s: &str) -> Vec<Tag> {
        s.chars().map(|c| Tag::from_char(c).unwrap()).collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("ＡＢＣ"), "ABC");
        assert_eq!(normalize("a  b "), "a b");
        assert_eq!(normalize("新来\u{3000}的"), "新来 的");
        assert_eq!(normalize("\t x\u{0001}y\r\n"), "xy");
        assert_eq!(normalize("１２月，"), "12月,");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn encode_examples() {
        let s = bmes_encode(&["新来", "的"]).unwrap();
        assert_eq!(s.text(), "新来的");
        assert_eq!(s.tags(), tags("BES").as_slice());

        let s = bmes_encode(&["请", "播放", "一首", "将军令"]).unwrap();
        assert_eq!(format_tags(s.tags()), "SBEBEBME");

        let s = bmes_encode(&["a"]).unwrap();
        assert_eq!(s.tags(), &[Tag::S]);

        assert!(matches!(bmes_encode(&["a", ""]), Err(Error::EmptyWord)));
    }

    #[test]
    fn decode_examples() {
        let s = TaggedSentence::new("新来的".chars().collect(), tags("BES")).unwrap();
        assert_eq!(bmes_decode(&s), vec!["新来", "的"]);

        let s =
            TaggedSentence::new("请播放一首将军令".chars().collect(), tags("SBEBEBME")).unwrap();
        assert_eq!(bmes_decode(&s), vec!["请", "播放", "一首", "将军令"]);

        // B B: the second B opens a new word.
        let chars: Vec<char> = "ab".chars().collect();
        assert_eq!(decode_tags(&chars, &tags("BB")), vec!["a", "b"]);
        assert_eq!(repair_tags(&tags("BB")), tags("SS"));
        // E M: the word is closed after E, M starts a fresh one.
        let chars: Vec<char> = "abc".chars().collect();
        assert_eq!(decode_tags(&chars, &tags("BEM")), vec!["ab", "c"]);
        assert_eq!(repair_tags(&tags("MMB")), tags("BES"));
    }

    #[test]
    fn tagged_sentence_rejects_illegal_paths() {
        assert!(TaggedSentence::new(vec!['a', 'b'], tags("BB")).is_err());
        assert!(TaggedSentence::new(vec!['a'], tags("SS")).is_err());
        assert!(TaggedSentence::new(vec!['a'], tags("M")).is_err());
    }

    #[test]
    fn stats_examples() {
        let c = vec![bmes_encode(&["新来", "的"]).unwrap()];
        let st = dataset_stats(&c).unwrap();
        assert_eq!((st.word_count, st.phrase_count), (2, 0));
        assert_eq!(st.avg_sentence_length, 3.0);

        let c = vec![bmes_encode(&["将军令"]).unwrap()];
        let st = dataset_stats(&c).unwrap();
        assert_eq!((st.word_count, st.phrase_count), (1, 1));
        assert_eq!(st.avg_sentence_length, 3.0);

        let c = vec![
            bmes_encode(&["abcd"]).unwrap(),
            bmes_encode(&["ab", "cd", "ef"]).unwrap(),
        ];
        assert_eq!(dataset_stats(&c).unwrap().avg_sentence_length, 5.0);
        assert_eq!(dataset_stats_with_threshold(&c, 3).unwrap().phrase_count, 1);

        assert!(matches!(dataset_stats(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn load_corpus_skips_blank_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "新来 的").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "吃鸡  主播").unwrap();
        let c = load_segmented(f.path(), None).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].text(), "新来的");
        assert_eq!(c[0].tags(), tags("BES").as_slice());
        assert_eq!(c[1].words(), vec!["吃鸡", "主播"]);

        match load_corpus(f.path(), false, None).unwrap() {
            Corpus::Raw(v) => assert_eq!(v[1].as_str(), "吃鸡 主播"),
            _ => panic!("expected raw corpus"),
        }
    }

    #[test]
    fn load_corpus_reports_bad_utf8_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"a b\nc\n\xff\xfe\nd\n").unwrap();
        match load_corpus(f.path(), true, None) {
            Err(Error::Utf8 { line }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mapping_file() {
        let m = CharMapping::parse("來\t来\n\n們\t们\n").unwrap();
        assert_eq!(m.apply("新來的們"), "新来的们");
        assert!(CharMapping::parse("ab\tc\n").is_err());
        assert!(CharMapping::parse("a\n").is_err());
    }

    fn word_list() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec("[a-e新来的吃鸡]{1,4}", 1..8)
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(words in word_list()) {
            let s = bmes_encode(&words).unwrap();
            prop_assert!(is_legal_path(s.tags()));
            prop_assert_eq!(bmes_decode(&s), words);
        }

        #[test]
        fn normalize_is_idempotent(s in "\\PC*") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn normalize_idempotent_on_tricky_input(s in "[ \t\u{3000}\u{FF01}-\u{FF5E}\u{0000}-\u{001F}a-c的]{0,20}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn repair_matches_decode(raw in prop::collection::vec(0usize..4, 1..12)) {
            let tags: Vec<Tag> = raw.iter().map(|&i| Tag::from_index(i).unwrap()).collect();
            let chars: Vec<char> = (0..tags.len()).map(|i| char::from(b'a' + i as u8)).collect();
            let repaired = repair_tags(&tags);
            prop_assert!(is_legal_path(&repaired));
            prop_assert_eq!(decode_tags(&chars, &repaired), decode_tags(&chars, &tags));
        }

        #[test]
        fn stats_are_additive(a in prop::collection::vec(word_list(), 1..5),
                              b in prop::collection::vec(word_list(), 1..5)) {
            let ca: Vec<_> = a.iter().map(|w| bmes_encode(w).unwrap()).collect();
            let cb: Vec<_> = b.iter().map(|w| bmes_encode(w).unwrap()).collect();
            let mut all = ca.clone();
            all.extend(cb.clone());
            let sa = dataset_stats(&ca).unwrap();
            let sb = dataset_stats(&cb).unwrap();
            let joined = dataset_stats(&all).unwrap();
            let combined = sa.combine(&sb);
            prop_assert_eq!(joined.word_count, combined.word_count);
            prop_assert_eq!(joined.phrase_count, combined.phrase_count);
            prop_assert!((joined.avg_sentence_length - combined.avg_sentence_length).abs() < 1e-12);
        }
    }
}
