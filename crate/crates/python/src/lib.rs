//! Python bindings for the segmentation toolkit.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pcrf_seg::corpus::{self, TaggedSentence};
use pcrf_seg::decode::{self, BeamWidth, DecodeResult, DecoderConfig, DecoderKind};
use pcrf_seg::emission::{self, EmissionMatrix, TransitionMatrix};
use pcrf_seg::{eval, lm};

fn py_err(e: pcrf_seg::Error) -> PyErr {
    match e {
        pcrf_seg::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_tags(tags: &str) -> PyResult<Vec<corpus::Tag>> {
    tags.chars()
        .map(|c| {
            corpus::Tag::from_char(c).ok_or_else(|| PyValueError::new_err(format!("bad tag {c:?}")))
        })
        .collect()
}

fn tagged(corpus: &[Vec<String>]) -> PyResult<Vec<TaggedSentence>> {
    corpus
        .iter()
        .map(|s| corpus::bmes_encode(s).map_err(py_err))
        .collect()
}

#[derive(FromPyObject)]
enum BeamArg {
    Width(usize),
    Name(String),
}

impl BeamArg {
    fn resolve(&self) -> PyResult<BeamWidth> {
        match self {
            BeamArg::Width(w) => w.to_string().parse(),
            BeamArg::Name(s) => s.parse(),
        }
        .map_err(PyValueError::new_err)
    }
}

/// Full-width folding, control-character removal and whitespace collapsing.
#[pyfunction]
fn normalize(text: &str) -> String {
    corpus::normalize(text)
}

/// Tag string (`"BMES"` alphabet) for a word list.
#[pyfunction]
fn bmes_encode(words: Vec<String>) -> PyResult<String> {
    let s = corpus::bmes_encode(&words).map_err(py_err)?;
    Ok(corpus::format_tags(s.tags()))
}

/// Words of `text` under `tags`; illegal sequences are repaired.
#[pyfunction]
fn bmes_decode(text: &str, tags: &str) -> PyResult<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    let tags = parse_tags(tags)?;
    if tags.len() != chars.len() {
        return Err(PyValueError::new_err("text and tags differ in length"));
    }
    Ok(corpus::decode_tags(&chars, &tags))
}

#[pyclass(name = "NGramLM", frozen)]
struct PyNGramLM {
    inner: lm::NGramLM,
}

#[pymethods]
impl PyNGramLM {
    #[staticmethod]
    #[pyo3(signature = (corpus, order = 2, min_count = 1))]
    fn train(corpus: Vec<Vec<String>>, order: usize, min_count: usize) -> PyResult<Self> {
        let inner = lm::train_lm(&corpus, order, min_count).map_err(py_err)?;
        Ok(PyNGramLM { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = lm::NGramLM::load_arpa(path).map_err(py_err)?;
        Ok(PyNGramLM { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_arpa(path).map_err(py_err)
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab().len()
    }

    fn ngram_counts(&self) -> Vec<usize> {
        self.inner.ngram_counts()
    }

    /// log10 p(word | history), where history is the preceding words.
    /// Without `bos=False` the history is preceded by `<s>`.
    #[pyo3(signature = (history, word, bos = true))]
    fn log10_prob(&self, history: Vec<String>, word: &str, bos: bool) -> f64 {
        let lm = &self.inner;
        let mut ctx = if bos {
            lm.begin_context()
        } else {
            lm::LmContext::empty()
        };
        for w in &history {
            ctx = ctx.push(lm.vocab().id_or_unk(w), lm.order() - 1);
        }
        lm.log10_prob(&ctx, word)
    }

    /// Returns `(ppl, log10_prob_sum, word_count)`.
    #[pyo3(signature = (words, score_eos = false))]
    fn ppl(&self, words: Vec<String>, score_eos: bool) -> PyResult<(f64, f64, usize)> {
        let r = self.inner.ppl_with(&words, score_eos).map_err(py_err)?;
        Ok((r.ppl, r.log10_prob_sum, r.word_count))
    }
}

#[pyclass(name = "EmissionModel", frozen)]
struct PyEmissionModel {
    inner: emission::EmissionModel,
}

#[pymethods]
impl PyEmissionModel {
    /// Averaged perceptron over word-segmented sentences.
    #[staticmethod]
    #[pyo3(signature = (corpus, epochs = 10, seed = 42))]
    fn train(py: Python<'_>, corpus: Vec<Vec<String>>, epochs: usize, seed: u64) -> PyResult<Self> {
        let sentences = tagged(&corpus)?;
        let inner = py
            .detach(|| emission::train_perceptron(&sentences, epochs, seed))
            .map_err(py_err)?;
        Ok(PyEmissionModel { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = emission::EmissionModel::load(path).map_err(py_err)?;
        Ok(PyEmissionModel { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn feature_count(&self) -> usize {
        self.inner.feature_count()
    }

    /// 4x4 transition weights in B, M, E, S order.
    fn transitions(&self) -> Vec<Vec<f64>> {
        self.inner
            .transitions()
            .weights()
            .iter()
            .map(|r| r.to_vec())
            .collect()
    }

    /// Per-character scores for `text` in B, M, E, S order.
    fn score(&self, text: &str) -> Vec<Vec<f64>> {
        let chars: Vec<char> = text.chars().collect();
        self.inner
            .score_sentence(&chars)
            .scores()
            .iter()
            .map(|r| r.to_vec())
            .collect()
    }
}

fn result_dict<'py>(py: Python<'py>, r: &DecodeResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tags", corpus::format_tags(&r.tags))?;
    d.set_item("words", r.words.clone())?;
    d.set_item("score", r.score)?;
    d.set_item("structural_score", r.structural_score)?;
    d.set_item("decoder", r.decoder.label())?;
    Ok(d)
}

fn matrix(text: &str, scores: Vec<[f64; 4]>) -> PyResult<EmissionMatrix> {
    EmissionMatrix::new(text.chars().collect(), scores).map_err(py_err)
}

fn transitions(weights: Option<[[f64; 4]; 4]>) -> PyResult<TransitionMatrix> {
    match weights {
        Some(w) => TransitionMatrix::new(w).map_err(py_err),
        None => Ok(TransitionMatrix::zeros()),
    }
}

#[pyfunction]
#[pyo3(signature = (text, scores, enforce_legality = true))]
fn softmax_decode<'py>(
    py: Python<'py>,
    text: &str,
    scores: Vec<[f64; 4]>,
    enforce_legality: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let r = decode::softmax_decode(&matrix(text, scores)?, enforce_legality);
    result_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (text, scores, transitions = None, enforce_legality = true))]
fn viterbi<'py>(
    py: Python<'py>,
    text: &str,
    scores: Vec<[f64; 4]>,
    transitions: Option<[[f64; 4]; 4]>,
    enforce_legality: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let r = decode::viterbi_with(
        &matrix(text, scores)?,
        &self::transitions(transitions)?,
        enforce_legality,
    );
    result_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (text, scores, lm, transitions = None, lambda_ = 0.1, beam = BeamArg::Width(8), enforce_legality = true))]
#[allow(clippy::too_many_arguments)]
fn pcrf_decode<'py>(
    py: Python<'py>,
    text: &str,
    scores: Vec<[f64; 4]>,
    lm: Option<&PyNGramLM>,
    transitions: Option<[[f64; 4]; 4]>,
    lambda_: f64,
    beam: BeamArg,
    enforce_legality: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let config = DecoderConfig {
        lambda: lambda_,
        beam: beam.resolve()?,
        enforce_legality,
    };
    let r = decode::pcrf_decode(
        &matrix(text, scores)?,
        &self::transitions(transitions)?,
        lm.map(|l| &l.inner),
        &config,
    )
    .map_err(py_err)?;
    result_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (text, scores, lm = None, transitions = None, lambda_ = 0.0, enforce_legality = true))]
fn brute_force_decode<'py>(
    py: Python<'py>,
    text: &str,
    scores: Vec<[f64; 4]>,
    lm: Option<&PyNGramLM>,
    transitions: Option<[[f64; 4]; 4]>,
    lambda_: f64,
    enforce_legality: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let r = decode::brute_force_decode(
        &matrix(text, scores)?,
        &self::transitions(transitions)?,
        lm.map(|l| &l.inner),
        lambda_,
        enforce_legality,
    )
    .map_err(py_err)?;
    result_dict(py, &r)
}

#[pyclass(name = "Segmenter", frozen)]
struct PySegmenter {
    inner: decode::Segmenter,
}

#[pymethods]
impl PySegmenter {
    #[new]
    #[pyo3(signature = (model, lm = None, decoder = "crf", lambda_ = 0.1, beam = BeamArg::Width(8), enforce_legality = true))]
    fn new(
        model: &PyEmissionModel,
        lm: Option<&PyNGramLM>,
        decoder: &str,
        lambda_: f64,
        beam: BeamArg,
        enforce_legality: bool,
    ) -> PyResult<Self> {
        let kind: DecoderKind = decoder.parse().map_err(PyValueError::new_err)?;
        let config = DecoderConfig {
            lambda: lambda_,
            beam: beam.resolve()?,
            enforce_legality,
        };
        let inner = decode::Segmenter::new(
            model.inner.clone(),
            lm.map(|l| l.inner.clone()),
            kind,
            config,
        )
        .map_err(py_err)?;
        Ok(PySegmenter { inner })
    }

    fn segment(&self, py: Python<'_>, text: &str) -> PyResult<Vec<String>> {
        py.detach(|| self.inner.segment(text)).map_err(py_err)
    }

    fn segment_many(&self, py: Python<'_>, texts: Vec<String>) -> PyResult<Vec<Vec<String>>> {
        py.detach(|| {
            texts
                .iter()
                .map(|t| self.inner.segment(t))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(py_err)
    }
}

/// Span-based precision, recall and F1 over aligned word lists.
#[pyfunction]
fn f1_score<'py>(
    py: Python<'py>,
    gold: Vec<Vec<String>>,
    pred: Vec<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = eval::f1_score(&gold, &pred).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("precision", r.precision)?;
    d.set_item("recall", r.recall)?;
    d.set_item("f1", r.f1)?;
    d.set_item("gold_words", r.gold_words)?;
    d.set_item("pred_words", r.pred_words)?;
    d.set_item("correct_words", r.correct_words)?;
    Ok(d)
}

#[pyfunction]
fn dataset_stats<'py>(py: Python<'py>, corpus: Vec<Vec<String>>) -> PyResult<Bound<'py, PyDict>> {
    let s = corpus::dataset_stats(&tagged(&corpus)?).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("sentence_count", s.sentence_count)?;
    d.set_item("char_count", s.char_count)?;
    d.set_item("word_count", s.word_count)?;
    d.set_item("phrase_count", s.phrase_count)?;
    d.set_item("avg_sentence_length", s.avg_sentence_length)?;
    Ok(d)
}

/// Returns `(mean_consistency, oov_rate)` of `test` against `train`.
#[pyfunction]
fn dataset_distance(train: Vec<Vec<String>>, test: Vec<Vec<String>>) -> PyResult<(f64, f64)> {
    let r = eval::dataset_distance(&train, &test).map_err(py_err)?;
    Ok((r.mean_consistency, r.oov_rate))
}

#[pymodule]
fn pcrfseg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(bmes_encode, m)?)?;
    m.add_function(wrap_pyfunction!(bmes_decode, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_decode, m)?)?;
    m.add_function(wrap_pyfunction!(viterbi, m)?)?;
    m.add_function(wrap_pyfunction!(pcrf_decode, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_decode, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_stats, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_distance, m)?)?;
    m.add_class::<PyNGramLM>()?;
    m.add_class::<PyEmissionModel>()?;
    m.add_class::<PySegmenter>()?;
    Ok(())
}
