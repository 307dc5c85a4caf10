use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scenario::scene_seed;

use super::eval::fmt_metric;
use super::{evaluate, eval_split, prepare_scenes, train_split, Config, EpochLog, EvalReport, HarnessError, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub tpa: bool,
    pub lane_loss: bool,
}

pub const VARIANTS: [Variant; 4] = [
    Variant {
        name: "Baseline",
        tpa: false,
        lane_loss: false,
    },
    Variant {
        name: "+ TPA",
        tpa: true,
        lane_loss: false,
    },
    Variant {
        name: "+ Lane Loss",
        tpa: false,
        lane_loss: true,
    },
    Variant {
        name: "+ Lane Loss + TPA",
        tpa: true,
        lane_loss: true,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub tpa: bool,
    pub lane_loss: bool,
    pub seed_index: usize,
    pub data_seed: u64,
    pub train_seed: u64,
    pub final_epoch: Option<EpochLog>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn rows_for<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a AblationRow> + 'a {
        self.rows.iter().filter(move |r| r.variant == variant)
    }

    /// Mean over seeds of a full-set (`turn == false`) or turn-subset value.
    pub fn mean(&self, variant: &str, metric: &str, k: usize, turn: bool) -> Option<f64> {
        let vals: Option<Vec<f64>> = self
            .rows_for(variant)
            .map(|r| if turn { r.report.turn_value(metric, k) } else { r.report.value(metric, k) })
            .collect();
        let vals = vals?;
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Seed-averaged table: one row per variant, full set then turn subset.
    pub fn to_markdown(&self) -> String {
        let Some(first) = self.rows.first() else {
            return String::new();
        };
        let cols = first.report.columns();
        let mut s = String::new();
        let _ = write!(s, "| variant |");
        for (name, _, _) in &cols {
            let _ = write!(s, " {name} |");
        }
        for (name, _, _) in &cols {
            let _ = write!(s, " turn {name} |");
        }
        s.push('\n');
        s.push_str("|---|");
        s.push_str(&"---|".repeat(2 * cols.len()));
        s.push('\n');
        for v in VARIANTS {
            let _ = write!(s, "| {} |", v.name);
            for turn in [false, true] {
                for (_, metric, k) in &cols {
                    let _ = write!(s, " {} |", fmt_metric(self.mean(v.name, metric, *k, turn)));
                }
            }
            s.push('\n');
        }
        let _ = writeln!(s, "\nmeans over {} seed(s)", self.seeds);
        s
    }
}

/// Trains and evaluates the four variants for each of `cfg.ablate.seeds`
/// seeds. Seed `i` derives its data and training seeds from the configured
/// ones, so the whole table follows from one config.
pub fn run_ablation(
    cfg: &Config,
    mut progress: impl FnMut(&str, usize, &EpochLog),
) -> Result<AblationReport, HarnessError> {
    let mut rows = Vec::new();
    for seed_index in 0..cfg.ablate.seeds {
        let data_seed = scene_seed(cfg.scenario.seed, seed_index as u64);
        let train_seed = scene_seed(cfg.train.seed, seed_index as u64);
        let scenario = crate::scenario::ScenarioConfig {
            seed: data_seed,
            ..cfg.scenario.clone()
        };
        let train = prepare_scenes(&cfg.model, &cfg.targets, &train_split(&scenario, &cfg.data)?)?;
        let eval = prepare_scenes(&cfg.model, &cfg.targets, &eval_split(&scenario, &cfg.data)?)?;
        for v in VARIANTS {
            let mut model = cfg.model.clone();
            model.use_tpa = v.tpa;
            let mut tc = cfg.train.clone();
            tc.seed = train_seed;
            tc.objective.lane_loss = v.lane_loss;
            let mut trainer = Trainer::new(model, tc)?;
            let logs = trainer.train(&train, |log, _| {
                progress(v.name, seed_index, log);
                Ok(())
            })?;
            rows.push(AblationRow {
                variant: v.name.to_string(),
                tpa: v.tpa,
                lane_loss: v.lane_loss,
                seed_index,
                data_seed,
                train_seed,
                final_epoch: logs.last().cloned(),
                report: evaluate(trainer.model(), &eval, &cfg.eval.ks)?,
            });
        }
    }
    Ok(AblationReport {
        seeds: cfg.ablate.seeds,
        rows,
    })
}
