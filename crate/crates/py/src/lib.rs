//! Python bindings. Images cross the boundary as packed 8-bit RGB `bytes`
//! or as files; structured values (attack specs, sync records, eval
//! configs) cross as JSON strings.

// pyo3 0.22's method wrappers trip this lint on every fallible method
#![allow(clippy::useless_conversion)]

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use objmark::attacks::{self, AttackRanges, AttackSpec, DistortionSpec};
use objmark::codec::{self, parse_key, MessageBits};
use objmark::eval::{results_csv, run_eval_on, EvalConfig};
use objmark::ssync::{SyncAblation, SyncOptions};
use objmark::{metrics, moments, perturb, Error};

create_exception!(objmark, NoSignalError, PyException);
create_exception!(objmark, PlacementInfeasibleError, PyException);
create_exception!(objmark, EmptyRegionError, PyValueError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NoSignal(m) => NoSignalError::new_err(m),
        Error::PlacementInfeasible(m) => PlacementInfeasibleError::new_err(m),
        Error::EmptyRegion(m) => EmptyRegionError::new_err(m),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait PyResultExt<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> PyResultExt<T> for objmark::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// RGB image with float intensities in [0, 1].
#[pyclass(module = "objmark")]
#[derive(Clone)]
struct Image(objmark::Image);

#[pymethods]
impl Image {
    #[new]
    fn new(width: usize, height: usize, rgb8: &[u8]) -> PyResult<Self> {
        objmark::Image::from_rgb8(width, height, rgb8)
            .py()
            .map(Self)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, rgb: [f64; 3]) -> PyResult<Self> {
        objmark::Image::filled(width, height, rgb).py().map(Self)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        objmark::Image::load(path).py().map(Self)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).py()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<[f64; 3]> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err("pixel outside the image"));
        }
        Ok(self.0.pixel(x, y))
    }

    fn to_rgb8<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new_bound(py, &self.0.to_rgb8())
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

/// Object membership per pixel.
#[pyclass(module = "objmark")]
#[derive(Clone)]
struct BinaryMask(objmark::BinaryMask);

#[pymethods]
impl BinaryMask {
    /// `values`: one byte per pixel, row-major; non-zero marks the object.
    #[new]
    fn new(width: usize, height: usize, values: &[u8]) -> PyResult<Self> {
        objmark::BinaryMask::from_vec(width, height, values.iter().map(|&v| v != 0).collect())
            .py()
            .map(Self)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        objmark::BinaryMask::load(path).py().map(Self)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).py()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<bool> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err("pixel outside the mask"));
        }
        Ok(self.0.get(x, y))
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    fn occupancy(&self) -> f64 {
        self.0.occupancy()
    }

    fn __repr__(&self) -> String {
        format!(
            "BinaryMask({}x{}, {} set)",
            self.0.width(),
            self.0.height(),
            self.0.count()
        )
    }
}

#[pyclass(module = "objmark", frozen)]
struct MomentSet(moments::MomentSet);

#[pymethods]
impl MomentSet {
    #[getter]
    fn m00(&self) -> f64 {
        self.0.m00()
    }
    #[getter]
    fn m10(&self) -> f64 {
        self.0.m10()
    }
    #[getter]
    fn m01(&self) -> f64 {
        self.0.m01()
    }
    #[getter]
    fn mu11(&self) -> f64 {
        self.0.mu11()
    }
    #[getter]
    fn mu20(&self) -> f64 {
        self.0.mu20()
    }
    #[getter]
    fn mu02(&self) -> f64 {
        self.0.mu02()
    }
    fn centroid(&self) -> (f64, f64) {
        self.0.centroid()
    }
    fn principal_orientation(&self) -> f64 {
        self.0.principal_orientation()
    }
    #[pyo3(signature = (eps = moments::DEFAULT_DEGENERACY_EPS))]
    fn is_orientation_degenerate(&self, eps: f64) -> bool {
        self.0.is_orientation_degenerate(eps)
    }
}

/// `p' = pivot + scale · R(rotation) · (p − pivot) + translation`.
#[pyclass(module = "objmark", frozen)]
#[derive(Clone)]
struct SimilarityTransform(objmark::SimilarityTransform);

#[pymethods]
impl SimilarityTransform {
    #[new]
    #[pyo3(signature = (translation = (0.0, 0.0), rotation = 0.0, scale = 1.0, pivot = (0.0, 0.0)))]
    fn new(
        translation: (f64, f64),
        rotation: f64,
        scale: f64,
        pivot: (f64, f64),
    ) -> PyResult<Self> {
        objmark::SimilarityTransform::new(translation, rotation, scale, pivot)
            .py()
            .map(Self)
    }
    #[getter]
    fn translation(&self) -> (f64, f64) {
        self.0.translation
    }
    #[getter]
    fn rotation(&self) -> f64 {
        self.0.rotation
    }
    #[getter]
    fn scale(&self) -> f64 {
        self.0.scale
    }
    #[getter]
    fn pivot(&self) -> (f64, f64) {
        self.0.pivot
    }
    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        self.0.apply(x, y)
    }
    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }
    fn then(&self, next: &SimilarityTransform) -> Self {
        Self(self.0.then(&next.0))
    }
}

#[pyclass(module = "objmark", frozen)]
struct EmbedPlan(codec::EmbedPlan);

#[pymethods]
impl EmbedPlan {
    /// `key` is a 64-bit hex string.
    #[new]
    #[pyo3(signature = (key, length, n = 256, block_size = 8, alpha = codec::DEFAULT_STRENGTH))]
    fn new(key: &str, length: usize, n: usize, block_size: usize, alpha: f64) -> PyResult<Self> {
        codec::make_plan(parse_key(key).py()?, n, block_size, length)
            .and_then(|p| p.with_strength(alpha))
            .py()
            .map(Self)
    }
    #[getter]
    fn length(&self) -> usize {
        self.0.length()
    }
    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }
    #[getter]
    fn block_count(&self) -> usize {
        self.0.block_count()
    }
    #[getter]
    fn strength(&self) -> f64 {
        self.0.strength()
    }
}

fn ablation(id: u8) -> PyResult<SyncAblation> {
    SyncAblation::from_row(id).ok_or_else(|| PyValueError::new_err("ablation id must be 1-6"))
}

#[pyfunction]
fn compute_moments(mask: &BinaryMask) -> PyResult<MomentSet> {
    moments::compute_moments(&mask.0).py().map(MomentSet)
}

/// Returns `(x0, y0, side)`.
#[pyfunction]
fn min_bounding_square(mask: &BinaryMask) -> PyResult<(i64, i64, usize)> {
    let s = moments::min_bounding_square(&mask.0).py()?;
    Ok((s.x0, s.y0, s.side))
}

#[pyfunction]
fn warp(
    image: &Image,
    transform: &SimilarityTransform,
    width: usize,
    height: usize,
    fill: f64,
) -> PyResult<Image> {
    objmark::warp(&image.0, &transform.0, width, height, fill)
        .py()
        .map(Image)
}

/// Returns `(canvas, canvas_mask, record_json)`.
#[pyfunction]
#[pyo3(signature = (image, mask, n = 256, ablation_id = 6))]
fn synchronize(
    image: &Image,
    mask: &BinaryMask,
    n: usize,
    ablation_id: u8,
) -> PyResult<(Image, BinaryMask, String)> {
    let (obj, rec) = objmark::synchronize(&image.0, &mask.0, n, ablation(ablation_id)?).py()?;
    let json = serde_json::to_string(&rec).map_err(json_err)?;
    let (c, m) = obj.into_parts();
    Ok((Image(c), BinaryMask(m), json))
}

/// Message as a bit string or `0x` hex. The result is quantized to 8 bits.
#[pyfunction]
fn embed_into_host(
    host: &Image,
    mask: &BinaryMask,
    message: &str,
    plan: &EmbedPlan,
) -> PyResult<Image> {
    let msg = MessageBits::parse(message).py()?;
    codec::embed_into_host(&host.0, &mask.0, &msg, &plan.0, plan.0.n())
        .py()
        .map(|i| Image(i.quantized()))
}

/// Returns `(bits, mean_confidence, used_blocks, rotated_180)`.
#[pyfunction]
#[pyo3(signature = (image, mask, plan, ablation_id = 6))]
fn decode(
    image: &Image,
    mask: &BinaryMask,
    plan: &EmbedPlan,
    ablation_id: u8,
) -> PyResult<(String, f64, usize, bool)> {
    let opts = SyncOptions {
        n: plan.0.n(),
        ablation: ablation(ablation_id)?,
        ..SyncOptions::default()
    };
    let r = codec::decode(&image.0, &mask.0, &plan.0, &opts).py()?;
    Ok((
        r.bits.to_bit_string(),
        r.mean_confidence(),
        r.used_blocks,
        r.rotated_180,
    ))
}

/// Returns the attack spec as JSON.
#[pyfunction]
fn sample_attack(
    seed: u64,
    mask: &BinaryMask,
    background_width: usize,
    background_height: usize,
) -> PyResult<String> {
    let spec = attacks::sample_attack(
        seed,
        &mask.0,
        (background_width, background_height),
        &AttackRanges::default(),
    )
    .py()?;
    serde_json::to_string(&spec).map_err(json_err)
}

/// Returns `(composite, gt_mask)`.
#[pyfunction]
fn crop_paste(
    image: &Image,
    mask: &BinaryMask,
    background: &Image,
    spec_json: &str,
) -> PyResult<(Image, BinaryMask)> {
    let spec: AttackSpec = serde_json::from_str(spec_json).map_err(json_err)?;
    let (c, m) = attacks::crop_paste(&image.0, &mask.0, &background.0, &spec).py()?;
    Ok((Image(c), BinaryMask(m)))
}

/// `spec` as `kind=value`, for example `jpeg=50`.
#[pyfunction]
#[pyo3(signature = (image, spec, seed = 0))]
fn distort(image: &Image, spec: &str, seed: u64) -> PyResult<Image> {
    let d: DistortionSpec = spec.parse().py()?;
    attacks::distort(&image.0, &d, seed).py().map(Image)
}

#[pyfunction]
#[pyo3(signature = (a, b, mask = None))]
fn psnr(a: &Image, b: &Image, mask: Option<&BinaryMask>) -> PyResult<f64> {
    metrics::psnr(&a.0, &b.0, mask.map(|m| &m.0)).py()
}

#[pyfunction]
fn ssim(a: &Image, b: &Image) -> PyResult<f64> {
    metrics::ssim(&a.0, &b.0).py()
}

#[pyfunction]
fn iou(a: &BinaryMask, b: &BinaryMask) -> PyResult<f64> {
    metrics::iou(&a.0, &b.0).py()
}

#[pyfunction]
fn bar(decoded: &str, truth: &str) -> PyResult<f64> {
    metrics::bar(
        &MessageBits::from_bit_string(decoded).py()?,
        &MessageBits::from_bit_string(truth).py()?,
    )
    .py()
}

/// Returns `(mask, achieved_iou, converged)`.
#[pyfunction]
fn perturb_mask(
    mask: &BinaryMask,
    target_iou: f64,
    seed: u64,
) -> PyResult<(BinaryMask, f64, bool)> {
    let p = perturb::perturb_mask(&mask.0, target_iou, seed).py()?;
    Ok((BinaryMask(p.mask), p.achieved_iou, p.converged))
}

/// Run an evaluation described by a JSON config and return the results CSV.
#[pyfunction]
fn run_eval(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: EvalConfig = serde_json::from_str(config_json).map_err(json_err)?;
    py.allow_threads(|| {
        let corpus = cfg.corpus.load()?;
        let records = run_eval_on(&corpus, &cfg)?;
        if let Some(path) = &cfg.output {
            objmark::eval::write_results(&records, path)?;
        }
        Ok(results_csv(&records))
    })
    .py()
}

#[pymodule]
#[pyo3(name = "objmark")]
fn objmark_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("NoSignalError", py.get_type_bound::<NoSignalError>())?;
    m.add(
        "PlacementInfeasibleError",
        py.get_type_bound::<PlacementInfeasibleError>(),
    )?;
    m.add("EmptyRegionError", py.get_type_bound::<EmptyRegionError>())?;
    m.add_class::<Image>()?;
    m.add_class::<BinaryMask>()?;
    m.add_class::<MomentSet>()?;
    m.add_class::<SimilarityTransform>()?;
    m.add_class::<EmbedPlan>()?;
    m.add_function(wrap_pyfunction!(compute_moments, m)?)?;
    m.add_function(wrap_pyfunction!(min_bounding_square, m)?)?;
    m.add_function(wrap_pyfunction!(warp, m)?)?;
    m.add_function(wrap_pyfunction!(synchronize, m)?)?;
    m.add_function(wrap_pyfunction!(embed_into_host, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(sample_attack, m)?)?;
    m.add_function(wrap_pyfunction!(crop_paste, m)?)?;
    m.add_function(wrap_pyfunction!(distort, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(bar, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_mask, m)?)?;
    m.add_function(wrap_pyfunction!(run_eval, m)?)?;
    Ok(())
}
