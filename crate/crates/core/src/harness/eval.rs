use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::Polyline;
use crate::metrics::{aggregate, min_ade, min_fde, min_lane_fde, AgentRecord, MetricReport, SubsetFilter};
use crate::model::Model;

use super::{HarnessError, PreparedScene};

/// Name of the turn subset in reports.
pub const TURN_SUBSET: &str = "turn";

pub fn metric_key(metric: &str, k: usize) -> String {
    format!("{metric}_{k}")
}

/// Target-agent metrics over a scene set, with the turn subset alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: usize,
    pub turn_scenes: usize,
    pub ks: Vec<usize>,
    pub metrics: MetricReport,
}

impl EvalReport {
    pub fn value(&self, metric: &str, k: usize) -> Option<f64> {
        self.metrics.get(&metric_key(metric, k))?.mean
    }

    pub fn turn_value(&self, metric: &str, k: usize) -> Option<f64> {
        self.metrics.get(&metric_key(metric, k))?.subsets.get(TURN_SUBSET)?.mean
    }

    /// Columns in the order minADE, minFDE per k, then minLaneFDE for the largest k.
    pub fn columns(&self) -> Vec<(String, String, usize)> {
        let mut cols = Vec::new();
        for &k in &self.ks {
            cols.push((format!("minADE{k}"), "min_ade".to_string(), k));
            cols.push((format!("minFDE{k}"), "min_fde".to_string(), k));
        }
        if let Some(&k) = self.ks.iter().max() {
            cols.push((format!("minLaneFDE{k}"), "min_lane_fde".to_string(), k));
        }
        cols
    }

    pub fn to_markdown(&self) -> String {
        let cols = self.columns();
        let mut s = String::new();
        let _ = write!(s, "| set |");
        for (name, _, _) in &cols {
            let _ = write!(s, " {name} |");
        }
        s.push('\n');
        s.push_str("|---|");
        s.push_str(&"---|".repeat(cols.len()));
        s.push('\n');
        for (label, turn) in [(format!("all ({})", self.scenes), false), (format!("turns ({})", self.turn_scenes), true)] {
            let _ = write!(s, "| {label} |");
            for (_, metric, k) in &cols {
                let v = if turn { self.turn_value(metric, *k) } else { self.value(metric, *k) };
                let _ = write!(s, " {} |", fmt_metric(v));
            }
            s.push('\n');
        }
        s
    }
}

pub(crate) fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn scene_record(model: &Model, scene: &PreparedScene, ks: &[usize]) -> Result<AgentRecord, HarnessError> {
    let i = scene.target;
    let forecast = model.predict(&scene.input)?.swap_remove(i).transformed(&scene.input.frames[i]);
    let t = &scene.targets[i];
    let lanes: Vec<Polyline> = t.lanes.iter().filter_map(|l| Polyline::new(l.clone()).ok()).collect();
    let mut values = BTreeMap::new();
    let metric_err = |e: crate::metrics::MetricError| HarnessError::Config(e.to_string());
    for &k in ks {
        values.insert(metric_key("min_ade", k), Some(min_ade(&forecast, &t.future, k).map_err(metric_err)?));
        values.insert(metric_key("min_fde", k), Some(min_fde(&forecast, &t.future, k).map_err(metric_err)?));
        values.insert(metric_key("min_lane_fde", k), min_lane_fde(&forecast, &lanes, k).map_err(metric_err)?);
    }
    Ok(AgentRecord {
        maneuver: scene.maneuver,
        values,
    })
}

/// Evaluates the target agent of every scene. Pure: the same model and data
/// always give the same report.
pub fn evaluate(model: &Model, data: &[PreparedScene], ks: &[usize]) -> Result<EvalReport, HarnessError> {
    let records = data
        .par_iter()
        .map(|s| scene_record(model, s, ks))
        .collect::<Result<Vec<_>, _>>()?;
    let turns = SubsetFilter::turns();
    debug_assert_eq!(turns.name, TURN_SUBSET);
    Ok(EvalReport {
        scenes: data.len(),
        turn_scenes: data.iter().filter(|s| s.maneuver.is_turn()).count(),
        ks: ks.to_vec(),
        metrics: aggregate(&records, &[turns]),
    })
}
