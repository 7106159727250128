//! Python bindings: pose clips, the motion tokenizer, metrics and filters.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use signbt::geoalign::{self, MetricReport};
use signbt::quantize::{self, TrainConfig};
use signbt::textscore::{self, Smoothing};
use signbt::verify::{self, Thresholds};
use signbt::{CandidatePair, JointLayout, MotionTokenSequence, SignLang, TokenTriple};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(err)?)
}

fn sign_lang(s: &str) -> PyResult<SignLang> {
    s.parse().map_err(err)
}

/// A pose clip: frames of flat coordinates over body, left hand and right hand joints.
#[pyclass(name = "PoseClip", module = "signbt_py", from_py_object)]
#[derive(Clone)]
pub struct PyPoseClip {
    inner: signbt::PoseClip,
}

#[pymethods]
impl PyPoseClip {
    #[new]
    #[pyo3(signature = (id, sign_lang, frames, fps=25.0, dims=2, layout=(8, 21, 21)))]
    fn new(id: String, sign_lang: &str, frames: Vec<Vec<f64>>, fps: f64, dims: usize, layout: (usize, usize, usize)) -> PyResult<Self> {
        let inner = signbt::PoseClip {
            id,
            sign_lang: self::sign_lang(sign_lang)?,
            fps,
            dims,
            layout: JointLayout::new(layout.0, layout.1, layout.2),
            frames,
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(line: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(line).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    /// Invariant violations, empty when the clip is well formed.
    fn validate(&self) -> Vec<String> {
        signbt::validate_clip(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn sign_lang(&self) -> String {
        self.inner.sign_lang.to_string()
    }

    #[getter]
    fn num_frames(&self) -> usize {
        self.inner.num_frames()
    }

    #[getter]
    fn frames(&self) -> Vec<Vec<f64>> {
        self.inner.frames.clone()
    }

    fn __repr__(&self) -> String {
        format!("PoseClip(id={:?}, sign_lang={}, frames={})", self.inner.id, self.inner.sign_lang, self.inner.num_frames())
    }
}

/// Windowed k-means motion tokenizer with one codebook per stream.
#[pyclass(name = "Codebook", module = "signbt_py")]
pub struct PyCodebook {
    inner: quantize::Codebook,
}

#[pymethods]
impl PyCodebook {
    #[staticmethod]
    #[pyo3(signature = (clips, window=4, k=512, max_iters=50, seed=0, codebook_id=None))]
    fn train(clips: Vec<PyPoseClip>, window: usize, k: usize, max_iters: usize, seed: u64, codebook_id: Option<String>) -> PyResult<Self> {
        let clips: Vec<signbt::PoseClip> = clips.into_iter().map(|c| c.inner).collect();
        let config = TrainConfig { window, k, max_iters, seed, codebook_id };
        Ok(Self { inner: quantize::train_codebook(&clips, &config).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: quantize::Codebook::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    /// Token triples `(body, left_hand, right_hand)`, one per window.
    fn encode(&self, clip: &PyPoseClip) -> PyResult<Vec<(u32, u32, u32)>> {
        let seq = quantize::encode_clip(&clip.inner, &self.inner).map_err(err)?;
        Ok(seq.tokens.iter().map(|t| (t[0], t[1], t[2])).collect())
    }

    #[pyo3(signature = (tokens, sign_lang, id="decoded".to_string()))]
    fn decode(&self, tokens: Vec<(u32, u32, u32)>, sign_lang: &str, id: String) -> PyResult<PyPoseClip> {
        let seq = MotionTokenSequence {
            id,
            sign_lang: self::sign_lang(sign_lang)?,
            synthetic: false,
            codebook_id: self.inner.codebook_id.clone(),
            tokens: tokens.into_iter().map(|(b, l, r)| [b, l, r] as TokenTriple).collect(),
        };
        Ok(PyPoseClip { inner: quantize::decode_tokens(&seq, &self.inner).map_err(err)? })
    }

    #[getter]
    fn codebook_id(&self) -> &str {
        &self.inner.codebook_id
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
}

fn metric_dict<'py>(py: Python<'py>, report: &MetricReport) -> PyResult<Bound<'py, PyAny>> {
    serialize_to_py(py, report)
}

/// Rigid (optionally scaled) alignment of one flat frame onto another.
#[pyfunction]
#[pyo3(signature = (pred, reference, dims, allow_scale=false))]
fn procrustes_align<'py>(py: Python<'py>, pred: Vec<f64>, reference: Vec<f64>, dims: usize, allow_scale: bool) -> PyResult<Bound<'py, PyAny>> {
    let r = geoalign::procrustes_align(&pred, &reference, dims, allow_scale).map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("rotation", r.rotation.clone())?;
    dict.set_item("translation", r.translation.clone())?;
    dict.set_item("scale", r.scale)?;
    dict.set_item("residual_mpjpe", r.residual_mpjpe)?;
    Ok(dict.into_any())
}

/// DTW over a cost matrix; returns `(total_cost, normalized_cost, path)`.
#[pyfunction]
fn dtw(cost: Vec<Vec<f64>>) -> PyResult<(f64, f64, Vec<(usize, usize)>)> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|row| row.len() != m) {
        return Err(err("cost matrix rows differ in length"));
    }
    let r = geoalign::dtw(n, m, |i, j| cost[i][j]).map_err(err)?;
    Ok((r.total_cost, r.normalized_cost, r.path))
}

#[pyfunction]
#[pyo3(signature = (pred, reference, allow_scale=false))]
fn dtw_pa_mpjpe<'py>(py: Python<'py>, pred: &PyPoseClip, reference: &PyPoseClip, allow_scale: bool) -> PyResult<Bound<'py, PyAny>> {
    let r = geoalign::dtw_pa_mpjpe(&pred.inner, &reference.inner, allow_scale).map_err(err)?;
    metric_dict(py, &r)
}

#[pyfunction]
fn tokenize_eval(text: &str, target: &str) -> PyResult<Vec<String>> {
    Ok(textscore::tokenize_eval(text, sign_lang(target)?))
}

/// Corpus BLEU over whitespace/character tokens for `target`; unsmoothed unless `floor` is given.
#[pyfunction]
#[pyo3(signature = (hyps, refs, target, max_n=4, floor=None))]
fn corpus_bleu<'py>(py: Python<'py>, hyps: Vec<String>, refs: Vec<String>, target: &str, max_n: usize, floor: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let lang = sign_lang(target)?;
    let h: Vec<Vec<String>> = hyps.iter().map(|s| textscore::tokenize_eval(s, lang)).collect();
    let r: Vec<Vec<String>> = refs.iter().map(|s| textscore::tokenize_eval(s, lang)).collect();
    let smoothing = floor.map_or(Smoothing::None, Smoothing::Floor);
    serialize_to_py(py, &textscore::corpus_bleu(&h, &r, max_n, smoothing).map_err(err)?)
}

/// Names of the filters a scored pair fails (`"llm"`, `"embedding"`); empty means kept.
#[pyfunction]
#[pyo3(signature = (rating, cosine, rating_min=4, cosine_min=0.5))]
fn failed_filters(rating: u8, cosine: f64, rating_min: i32, cosine_min: f64) -> Vec<String> {
    let t = Thresholds { rating_min_exclusive: rating_min, cosine_min_exclusive: cosine_min };
    verify::failed_filters(rating, cosine, &t)
        .into_iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
        .collect()
}

/// Splits candidate pairs (JSON lines) into `(pool, rejections)` lists of dicts.
#[pyfunction]
#[pyo3(signature = (candidates_jsonl, rating_min=4, cosine_min=0.5))]
fn apply_filters<'py>(py: Python<'py>, candidates_jsonl: &str, rating_min: i32, cosine_min: f64) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let pairs = candidates_jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str::<CandidatePair>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let t = Thresholds { rating_min_exclusive: rating_min, cosine_min_exclusive: cosine_min };
    let out = verify::apply_filters(&pairs, &t).map_err(err)?;
    Ok((serialize_to_py(py, &out.pool)?, serialize_to_py(py, &out.rejections)?))
}

#[pymodule]
fn signbt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPoseClip>()?;
    m.add_class::<PyCodebook>()?;
    m.add_function(wrap_pyfunction!(procrustes_align, m)?)?;
    m.add_function(wrap_pyfunction!(dtw, m)?)?;
    m.add_function(wrap_pyfunction!(dtw_pa_mpjpe, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize_eval, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_bleu, m)?)?;
    m.add_function(wrap_pyfunction!(failed_filters, m)?)?;
    m.add_function(wrap_pyfunction!(apply_filters, m)?)?;
    Ok(())
}
