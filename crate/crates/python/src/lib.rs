//! Python bindings: geometry, scenes, the model and the metric and loss
//! functions, using plain lists of `(x, y)` tuples for point sequences.

use lanetraj::autodiff::{Tape, Tensor};
use lanetraj::geom::{Point2, Polyline};
use lanetraj::harness::TrainCheckpoint;
use lanetraj::losses::{lane_loss as lane_loss_impl, wta_loss as wta_loss_impl, PredictionSet};
use lanetraj::metrics::{self, maneuver_stats, Forecast};
use lanetraj::model::{Model, ModelConfig, SceneInput};
use lanetraj::scenario::{generate_dataset, ManeuverMix, Scene, ScenarioConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

type Pts = Vec<(f64, f64)>;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn points(v: &[(f64, f64)]) -> Vec<Point2> {
    v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
}

fn tuples(v: &[Point2]) -> Pts {
    v.iter().map(|p| (p.x, p.y)).collect()
}

#[pyclass(name = "Polyline", module = "lanetraj_py", frozen)]
struct PyPolyline {
    inner: Polyline,
}

#[pymethods]
impl PyPolyline {
    #[new]
    fn new(points_: Pts) -> PyResult<Self> {
        Ok(Self {
            inner: Polyline::new(points(&points_)).map_err(err)?,
        })
    }

    /// `(s, n)`: arc length of the closest point and signed normal offset.
    fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let f = self.inner.project(Point2::new(x, y));
        (f.s, f.n)
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        self.inner.distance_to(Point2::new(x, y))
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        let p = self.inner.point_at(s);
        (p.x, p.y)
    }

    #[getter]
    fn arclength(&self) -> f64 {
        self.inner.arclength()
    }

    #[getter]
    fn points(&self) -> Pts {
        tuples(self.inner.points())
    }

    fn __len__(&self) -> usize {
        self.inner.points().len()
    }
}

#[pyclass(name = "Scene", module = "lanetraj_py", frozen)]
struct PyScene {
    inner: Scene,
}

#[pymethods]
impl PyScene {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: lanetraj::scenario::parse_scene(text, 1).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("scene serializes")
    }

    #[getter]
    fn id(&self) -> u64 {
        self.inner.id
    }

    #[getter]
    fn maneuver(&self) -> &'static str {
        self.inner.maneuver.name()
    }

    #[getter]
    fn target(&self) -> usize {
        self.inner.target
    }

    #[getter]
    fn pasts(&self) -> Vec<Pts> {
        self.inner.agents.iter().map(|a| tuples(&a.past)).collect()
    }

    #[getter]
    fn futures(&self) -> Vec<Pts> {
        self.inner.agents.iter().map(|a| tuples(&a.future)).collect()
    }

    /// Lane centerlines in segment-id order.
    #[getter]
    fn lanes(&self) -> Vec<Pts> {
        self.inner.map.segments().map(|s| tuples(s.centerline.points())).collect()
    }

    fn __repr__(&self) -> String {
        format!("Scene(id={}, maneuver={}, agents={})", self.inner.id, self.inner.maneuver, self.inner.agents.len())
    }
}

/// `count` scenes from the default scenario config with the given seed.
#[pyfunction]
#[pyo3(signature = (count, seed = 0, uniform = false))]
fn generate_scenes(count: usize, seed: u64, uniform: bool) -> PyResult<Vec<PyScene>> {
    let mut cfg = ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    };
    if uniform {
        cfg.maneuver_mix = ManeuverMix::uniform();
    }
    Ok(generate_dataset(&cfg, count)
        .map_err(err)?
        .into_iter()
        .map(|inner| PyScene { inner })
        .collect())
}

/// `[(maneuver, fraction)]` over the given scenes.
#[pyfunction]
fn maneuver_fractions(scenes: Vec<PyRef<'_, PyScene>>) -> Vec<(String, f64)> {
    let stats = maneuver_stats(scenes.iter().map(|s| s.inner.maneuver));
    stats.fractions.iter().map(|(m, f)| (m.name().to_string(), *f)).collect()
}

#[pyclass(name = "Model", module = "lanetraj_py", frozen)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// Freshly initialized model; `config_json` overrides the default config.
    #[new]
    #[pyo3(signature = (seed = 0, config_json = None))]
    fn new(seed: u64, config_json: Option<&str>) -> PyResult<Self> {
        let cfg: ModelConfig = match config_json {
            Some(t) => serde_json::from_str(t).map_err(err)?,
            None => ModelConfig::default(),
        };
        Ok(Self {
            inner: Model::new(cfg, seed).map_err(err)?,
        })
    }

    /// Loads a training checkpoint written by `lanetraj train`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = TrainCheckpoint::load(std::path::Path::new(path)).map_err(err)?;
        Ok(Self {
            inner: ckpt.to_model().map_err(err)?,
        })
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.params().num_scalars()
    }

    #[getter]
    fn config_json(&self) -> String {
        serde_json::to_string(self.inner.config()).expect("config serializes")
    }

    /// Per agent, `(trajectories, scores)`: trajectories in world coordinates,
    /// scores as unnormalized logits (higher ranks first).
    fn predict(&self, scene: &PyScene) -> PyResult<Vec<(Vec<Pts>, Vec<f64>)>> {
        let pasts: Vec<_> = scene.inner.agents.iter().map(|a| a.past.clone()).collect();
        let input = SceneInput::new(self.inner.config(), &scene.inner.map, &pasts).map_err(err)?;
        let out = self.inner.predict(&input).map_err(err)?;
        Ok(out
            .into_iter()
            .map(|f| (f.trajectories.iter().map(|t| tuples(t)).collect(), f.scores))
            .collect())
    }
}

fn forecast(trajectories: Vec<Pts>, scores: Vec<f64>) -> PyResult<Forecast> {
    Forecast::new(trajectories.iter().map(|t| points(t)).collect(), scores).map_err(err)
}

#[pyfunction]
fn min_ade(trajectories: Vec<Pts>, scores: Vec<f64>, gt: Pts, k: usize) -> PyResult<f64> {
    metrics::min_ade(&forecast(trajectories, scores)?, &points(&gt), k).map_err(err)
}

#[pyfunction]
fn min_fde(trajectories: Vec<Pts>, scores: Vec<f64>, gt: Pts, k: usize) -> PyResult<f64> {
    metrics::min_fde(&forecast(trajectories, scores)?, &points(&gt), k).map_err(err)
}

/// `None` when `lanes` is empty.
#[pyfunction]
fn min_lane_fde(trajectories: Vec<Pts>, scores: Vec<f64>, lanes: Vec<Pts>, k: usize) -> PyResult<Option<f64>> {
    let lanes = lanes
        .iter()
        .map(|l| Polyline::new(points(l)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    metrics::min_lane_fde(&forecast(trajectories, scores)?, &lanes, k).map_err(err)
}

fn pred_tensor(trajectories: &[Pts]) -> PyResult<Tensor> {
    let t_f = trajectories.first().map_or(0, Vec::len);
    let data = trajectories.iter().flatten().flat_map(|&(x, y)| [x, y]).collect();
    Tensor::new(&[trajectories.len(), t_f, 2], data).map_err(err)
}

/// `(loss, winner)` for one agent's modes against its ground truth.
#[pyfunction]
fn wta_loss(trajectories: Vec<Pts>, gt: Pts) -> PyResult<(f64, usize)> {
    let tape = Tape::new();
    let set = PredictionSet::new(tape.constant(pred_tensor(&trajectories)?), None).map_err(err)?;
    let (v, w) = wta_loss_impl(&set, &points(&gt)).map_err(err)?;
    Ok((v.item(), w))
}

#[pyfunction]
fn lane_loss(trajectories: Vec<Pts>, lanes: Vec<Pts>, winner: usize) -> PyResult<f64> {
    let tape = Tape::new();
    let set = PredictionSet::new(tape.constant(pred_tensor(&trajectories)?), None).map_err(err)?;
    let lanes: Vec<Vec<Point2>> = lanes.iter().map(|l| points(l)).collect();
    Ok(lane_loss_impl(&set, &lanes, winner).map_err(err)?.value.item())
}

#[pymodule]
fn lanetraj_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolyline>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_scenes, m)?)?;
    m.add_function(wrap_pyfunction!(maneuver_fractions, m)?)?;
    m.add_function(wrap_pyfunction!(min_ade, m)?)?;
    m.add_function(wrap_pyfunction!(min_fde, m)?)?;
    m.add_function(wrap_pyfunction!(min_lane_fde, m)?)?;
    m.add_function(wrap_pyfunction!(wta_loss, m)?)?;
    m.add_function(wrap_pyfunction!(lane_loss, m)?)?;
    Ok(())
}
