//! Property tests run through proptest's runner with a fixed RNG, so the
//! acceptance runner and the ordinary test files see the same cases.

use lanetraj::autodiff::{Tape, Tensor};
use lanetraj::geom::{Point2, RigidTransform};
use lanetraj::losses::{lane_loss, wta_loss, PredictionSet};
use lanetraj::metrics::{min_ade, min_fde, min_lane_fde};
use lanetraj::model::{Model, ModelConfig, SceneInput};
use lanetraj::scenario::{generate_scene, ScenarioConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::oracles::{pred_tensor, random_instance, Instance};

pub type Check = fn() -> Result<(), String>;

pub const ALL: [(&str, Check); 8] = [
    ("metrics are non-increasing in k", metrics_monotone_in_k),
    ("metrics are invariant to rigid transforms", metrics_rigid_invariant),
    ("WTA winner and lane assignment are invariant to rigid transforms", selection_rigid_invariant),
    ("WTA loss is invariant to translation", wta_translation_invariant),
    ("lane loss is zero on exact lane matches", lane_loss_zero_on_exact_match),
    ("softmax rows are normalized", softmax_normalized),
    ("proposal attention ignores proposal order", proposal_permutation_invariant),
    ("proposal attention weights follow the permutation", proposal_weights_permute),
];

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn instance(seed: u64) -> Instance {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn transform_instance(inst: &Instance, tf: &RigidTransform) -> Instance {
    Instance {
        pred: inst.pred.iter().map(|t| tf.apply_all(t)).collect(),
        scores: inst.scores.clone(),
        gt: tf.apply_all(&inst.gt),
        lanes: inst.lanes.iter().map(|l| tf.apply_all(l)).collect(),
    }
}

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (-std::f64::consts::PI..std::f64::consts::PI, -500.0..500.0f64, -500.0..500.0f64)
        .prop_map(|(th, x, y)| RigidTransform::new(th, Point2::new(x, y)))
}

pub fn metrics_monotone_in_k() -> Result<(), String> {
    run(512, any::<u64>(), |seed| {
        let inst = instance(seed);
        let f = inst.forecast();
        let lanes = inst.lane_polylines();
        for k in 1..inst.modes() {
            prop_assert!(min_ade(&f, &inst.gt, k + 1).unwrap() <= min_ade(&f, &inst.gt, k).unwrap());
            prop_assert!(min_fde(&f, &inst.gt, k + 1).unwrap() <= min_fde(&f, &inst.gt, k).unwrap());
            if let (Some(a), Some(b)) = (min_lane_fde(&f, &lanes, k + 1).unwrap(), min_lane_fde(&f, &lanes, k).unwrap()) {
                prop_assert!(a <= b);
            }
        }
        Ok(())
    })
}

pub fn metrics_rigid_invariant() -> Result<(), String> {
    run(512, (any::<u64>(), rigid()), |(seed, tf)| {
        let a = instance(seed);
        let b = transform_instance(&a, &tf);
        let (fa, fb) = (a.forecast(), b.forecast());
        let (la, lb) = (a.lane_polylines(), b.lane_polylines());
        for k in 1..=a.modes() {
            prop_assert!(close(min_ade(&fa, &a.gt, k).unwrap(), min_ade(&fb, &b.gt, k).unwrap(), 1e-9));
            prop_assert!(close(min_fde(&fa, &a.gt, k).unwrap(), min_fde(&fb, &b.gt, k).unwrap(), 1e-9));
            match (min_lane_fde(&fa, &la, k).unwrap(), min_lane_fde(&fb, &lb, k).unwrap()) {
                (Some(x), Some(y)) => prop_assert!(close(x, y, 1e-9), "{x} vs {y}"),
                (None, None) => {}
                other => prop_assert!(false, "definedness changed: {other:?}"),
            }
        }
        Ok(())
    })
}

pub fn selection_rigid_invariant() -> Result<(), String> {
    run(512, (any::<u64>(), rigid()), |(seed, tf)| {
        let a = instance(seed);
        let b = transform_instance(&a, &tf);
        let tape = Tape::new();
        let sa = PredictionSet::new(tape.constant(pred_tensor(&a.pred)), None).unwrap();
        let sb = PredictionSet::new(tape.constant(pred_tensor(&b.pred)), None).unwrap();
        let (_, wa) = wta_loss(&sa, &a.gt).unwrap();
        let (_, wb) = wta_loss(&sb, &b.gt).unwrap();
        prop_assert_eq!(wa, wb);
        let la = lane_loss(&sa, &a.lanes, wa).unwrap();
        let lb = lane_loss(&sb, &b.lanes, wb).unwrap();
        prop_assert_eq!(la.assignments, lb.assignments);
        Ok(())
    })
}

pub fn wta_translation_invariant() -> Result<(), String> {
    run(512, (any::<u64>(), -1e3..1e3f64, -1e3..1e3f64), |(seed, x, y)| {
        let a = instance(seed);
        let b = transform_instance(&a, &RigidTransform::new(0.0, Point2::new(x, y)));
        let tape = Tape::new();
        let sa = PredictionSet::new(tape.constant(pred_tensor(&a.pred)), None).unwrap();
        let sb = PredictionSet::new(tape.constant(pred_tensor(&b.pred)), None).unwrap();
        let (va, wa) = wta_loss(&sa, &a.gt).unwrap();
        let (vb, wb) = wta_loss(&sb, &b.gt).unwrap();
        prop_assert_eq!(wa, wb);
        prop_assert!(close(va.item(), vb.item(), 1e-9), "{} vs {}", va.item(), vb.item());
        Ok(())
    })
}

/// Mode 0 matches the ground truth, modes `1..=L` match the lanes exactly,
/// and any further modes are unrelated.
pub fn lane_loss_zero_on_exact_match() -> Result<(), String> {
    run(512, (any::<u64>(), 1usize..=3, 0usize..=2, 2usize..=10), |(seed, lanes, extra, t_f)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lanes: Vec<Vec<Point2>> = (0..lanes)
            .map(|j| {
                let dy = 10.0 * (j as f64 + 1.0);
                super::random_track(&mut rng, t_f, 3.0).iter().map(|p| *p + Point2::new(0.0, dy)).collect()
            })
            .collect();
        let gt: Vec<Point2> = super::random_track(&mut rng, t_f, 3.0).iter().map(|p| *p - Point2::new(0.0, 40.0)).collect();
        let mut pred = vec![gt.clone()];
        pred.extend(lanes.iter().cloned());
        for _ in 0..extra {
            pred.push(super::random_track(&mut rng, t_f, 3.0).iter().map(|p| *p + Point2::new(80.0, 0.0)).collect());
        }
        let tape = Tape::new();
        let set = PredictionSet::new(tape.constant(pred_tensor(&pred)), None).unwrap();
        let (wta, winner) = wta_loss(&set, &gt).unwrap();
        prop_assert_eq!(winner, 0);
        prop_assert_eq!(wta.item(), 0.0);
        let ll = lane_loss(&set, &lanes, winner).unwrap();
        prop_assert_eq!(ll.value.item(), 0.0);
        prop_assert_eq!(ll.assignments, (1..=lanes.len()).collect::<Vec<_>>());
        Ok(())
    })
}

pub fn softmax_normalized() -> Result<(), String> {
    let rows = (1usize..=5, 1usize..=20).prop_flat_map(|(r, c)| {
        (Just((r, c)), proptest::collection::vec(-700.0..700.0f64, r * c))
    });
    run(512, rows, |((r, c), data)| {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(&[r, c], data).unwrap());
        let y = x.softmax().to_tensor();
        for row in y.data().chunks(c) {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        Ok(())
    })
}

fn tiny_model(seed: u64) -> Model {
    let cfg = ModelConfig {
        d: 8,
        k: 4,
        modes: 3,
        heads: 2,
        proposal_width: 8,
        conv_channels: 4,
        ..ModelConfig::default()
    };
    Model::new(cfg, seed).unwrap()
}

fn scene_input(model: &Model, seed: u64) -> SceneInput {
    let scene = generate_scene(&ScenarioConfig::default(), seed).unwrap();
    let pasts: Vec<_> = scene.agents.iter().map(|a| a.past.clone()).collect();
    SceneInput::new(model.config(), &scene.map, &pasts).unwrap()
}

/// Row permutation that shuffles proposals only within each agent's block.
fn block_permutation(agents: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = Vec::with_capacity(agents * k);
    for i in 0..agents {
        let mut block: Vec<usize> = (i * k..(i + 1) * k).collect();
        block.shuffle(&mut rng);
        perm.extend(block);
    }
    perm
}

pub fn proposal_permutation_invariant() -> Result<(), String> {
    run(24, (any::<u64>(), any::<u64>(), any::<u64>()), |(ms, ss, ps)| {
        let model = tiny_model(ms);
        let input = scene_input(&model, ss);
        let tape = Tape::new();
        let p = model.params().bind_constants(&tape);
        let fe = model.feature_extractor(&p, &input).unwrap();
        let stage = model.proposal_stage(&p, fe.h_fe).unwrap();
        let perm = block_permutation(input.agents, model.config().k, ps);
        let shuffled = stage.embeddings.gather(0, &perm).unwrap();
        let (h2, _) = model.proposal_attention(&p, fe.h_fe, shuffled).unwrap();
        let (a, b) = (stage.h.to_tensor(), h2.to_tensor());
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        Ok(())
    })
}

pub fn proposal_weights_permute() -> Result<(), String> {
    run(24, (any::<u64>(), any::<u64>(), any::<u64>()), |(ms, ss, ps)| {
        let model = tiny_model(ms);
        let input = scene_input(&model, ss);
        let tape = Tape::new();
        let p = model.params().bind_constants(&tape);
        let fe = model.feature_extractor(&p, &input).unwrap();
        let stage = model.proposal_stage(&p, fe.h_fe).unwrap();
        let perm = block_permutation(input.agents, model.config().k, ps);
        let shuffled = stage.embeddings.gather(0, &perm).unwrap();
        let (_, w2) = model.proposal_attention(&p, fe.h_fe, shuffled).unwrap();
        let cols = input.agents * model.config().k;
        for (wa, wb) in stage.attention.iter().zip(&w2) {
            for q in 0..input.agents {
                for (j, &src) in perm.iter().enumerate() {
                    let (x, y) = (wb.data()[q * cols + j], wa.data()[q * cols + src]);
                    prop_assert!((x - y).abs() < 1e-12);
                }
                let row: f64 = wb.data()[q * cols..(q + 1) * cols].iter().sum();
                prop_assert!((row - 1.0).abs() < 1e-12);
            }
        }
        Ok(())
    })
}

