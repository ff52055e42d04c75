//! ARPA text serialization.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{make_key, Entry, Key, NGramLM, Vocab, WordId, MAX_ORDER, UNK, UNK_FLOOR, UNK_ID};
use crate::error::{Error, Result};

fn fmt_log(x: f64) -> String {
    format!("{x:.7}")
}

impl NGramLM {
    pub fn save_arpa(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_arpa(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_arpa<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "\\data\\")?;
        for (n, count) in self.ngram_counts().iter().enumerate() {
            writeln!(w, "ngram {}={}", n + 1, count)?;
        }
        for n in 1..=self.order() {
            writeln!(w)?;
            writeln!(w, "\\{n}-grams:")?;
            for (ids, entry) in self.entries_of_order(n) {
                let words: Vec<&str> = ids.iter().map(|&id| self.vocab().word(id)).collect();
                write!(w, "{}\t{}", fmt_log(entry.logprob), words.join(" "))?;
                if n < self.order() && entry.backoff != 0.0 {
                    write!(w, "\t{}", fmt_log(entry.backoff))?;
                }
                writeln!(w)?;
            }
        }
        writeln!(w)?;
        writeln!(w, "\\end\\")?;
        Ok(())
    }

    pub fn load_arpa(path: impl AsRef<Path>) -> Result<NGramLM> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_arpa(BufReader::new(file))
    }

    /// Parses an ARPA model. Fields may be separated by tabs or spaces.
    pub fn read_arpa<R: BufRead>(reader: R) -> Result<NGramLM> {
        #[derive(PartialEq)]
        enum State {
            Preamble,
            Counts,
            Section(usize),
            Done,
        }

        let mut state = State::Preamble;
        let mut declared: Vec<usize> = Vec::new();
        let mut vocab = Vocab::with_reserved();
        let mut tables: Vec<HashMap<Key, Entry>> = Vec::new();
        let mut line_no = 0;

        for line in reader.lines() {
            line_no += 1;
            let line = line.map_err(|_| Error::Utf8 { line: line_no })?;
            let line = line.trim();
            if state == State::Done {
                if !line.is_empty() {
                    return Err(Error::format(line_no, "content after \\end\\"));
                }
                continue;
            }
            if line == "\\end\\" {
                if state == State::Preamble {
                    return Err(Error::format(line_no, "\\end\\ before \\data\\"));
                }
                state = State::Done;
                continue;
            }
            if let Some(n) = section_header(line) {
                if state == State::Preamble {
                    return Err(Error::format(line_no, "n-gram section before \\data\\"));
                }
                if n == 0 || n > declared.len() {
                    return Err(Error::OrderMismatch(format!(
                        "line {line_no}: section \\{n}-grams: but \\data\\ declares order {}",
                        declared.len()
                    )));
                }
                if !tables[n - 1].is_empty() {
                    return Err(Error::format(line_no, "duplicate section"));
                }
                if n > 1 && tables[n - 2].len() != declared[n - 2] {
                    return Err(Error::format(line_no, "sections out of order"));
                }
                state = State::Section(n);
                continue;
            }
            match state {
                State::Preamble => {
                    if line == "\\data\\" {
                        state = State::Counts;
                    }
                }
                State::Counts => {
                    if line.is_empty() {
                        continue;
                    }
                    let rest = line
                        .strip_prefix("ngram ")
                        .ok_or_else(|| Error::format(line_no, "expected 'ngram N=COUNT'"))?;
                    let (n, count) = rest
                        .split_once('=')
                        .ok_or_else(|| Error::format(line_no, "expected 'ngram N=COUNT'"))?;
                    let n: usize = n
                        .trim()
                        .parse()
                        .map_err(|_| Error::format(line_no, "bad order"))?;
                    let count: usize = count
                        .trim()
                        .parse()
                        .map_err(|_| Error::format(line_no, "bad count"))?;
                    if n != declared.len() + 1 {
                        return Err(Error::OrderMismatch(format!(
                            "line {line_no}: ngram {n} out of sequence"
                        )));
                    }
                    if n > MAX_ORDER {
                        return Err(Error::InvalidOrder(n));
                    }
                    declared.push(count);
                    tables.push(HashMap::with_capacity(count));
                }
                State::Section(n) => {
                    if line.is_empty() {
                        continue;
                    }
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() != n + 1 && fields.len() != n + 2 {
                        return Err(Error::OrderMismatch(format!(
                            "line {line_no}: expected {n} words in \\{n}-grams: entry"
                        )));
                    }
                    let logprob = parse_log(fields[0], line_no)?;
                    let backoff =
                        match fields.get(n + 1) {
                            Some(b) => b.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(
                                || Error::format(line_no, format!("bad back-off {b:?}")),
                            )?,
                            None => 0.0,
                        };
                    let mut ids: Vec<WordId> = Vec::with_capacity(n);
                    for word in &fields[1..=n] {
                        let id = if n == 1 {
                            vocab.insert(word)
                        } else {
                            vocab.get(word).ok_or_else(|| {
                                Error::format(
                                    line_no,
                                    format!("word {word:?} missing from unigrams"),
                                )
                            })?
                        };
                        ids.push(id);
                    }
                    tables[n - 1].insert(make_key(&ids), Entry { logprob, backoff });
                }
                State::Done => unreachable!(),
            }
        }

        if state != State::Done {
            return Err(Error::format(line_no + 1, "missing \\end\\"));
        }
        if declared.is_empty() {
            return Err(Error::format(line_no, "no n-gram counts in \\data\\"));
        }
        for (n, (&want, table)) in declared.iter().zip(&tables).enumerate() {
            if want != table.len() {
                return Err(Error::format(
                    line_no,
                    format!(
                        "\\data\\ declares {want} {}-grams, found {}",
                        n + 1,
                        table.len()
                    ),
                ));
            }
        }
        let unk_key = make_key(&[UNK_ID]);
        tables[0].entry(unk_key).or_insert(Entry {
            logprob: UNK_FLOOR,
            backoff: 0.0,
        });
        for (id, word) in vocab.iter() {
            let key = make_key(&[id]);
            // Reserved tokens the file never listed.
            tables[0].entry(key).or_insert_with(|| {
                debug_assert!(word != UNK);
                Entry {
                    logprob: UNK_FLOOR,
                    backoff: 0.0,
                }
            });
        }
        let order = tables.len();
        Ok(NGramLM::from_parts(order, vocab, tables, None))
    }
}

fn section_header(line: &str) -> Option<usize> {
    line.strip_prefix('\\')?
        .strip_suffix("-grams:")?
        .parse()
        .ok()
}

fn parse_log(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::format(line, format!("bad number {s:?}")))?;
    if v.is_nan() || v > 0.0 {
        return Err(Error::format(line, format!("log10 value {s} must be <= 0")));
    }
    Ok(v)
}
