//! Central finite-difference gradient checks.

use lanetraj::autodiff::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-3;

#[derive(Debug, Default, Clone, Copy)]
pub struct FdStats {
    pub checked: usize,
    /// Probes on or next to a kink, where one-sided quotients disagree.
    pub skipped: usize,
    pub worst: f64,
}

impl FdStats {
    pub fn merge(self, o: FdStats) -> FdStats {
        FdStats {
            checked: self.checked + o.checked,
            skipped: self.skipped + o.skipped,
            worst: self.worst.max(o.worst),
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Probes one coordinate: `at(x)` evaluates the loss with that coordinate set to `x`.
pub fn probe(stats: &mut FdStats, analytic: f64, orig: f64, mut at: impl FnMut(f64) -> f64) {
    let (up, mid, down) = (at(orig + STEP), at(orig), at(orig - STEP));
    let (fwd, bwd) = ((up - mid) / STEP, (mid - down) / STEP);
    if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-2) {
        stats.skipped += 1;
        return;
    }
    let numeric = (up - down) / (2.0 * STEP);
    stats.worst = stats.worst.max(relative_error(analytic, numeric));
    stats.checked += 1;
}

/// Checks `f` at `inputs` on `probes` randomly chosen coordinates.
pub fn grad_check<F>(inputs: &[Tensor], f: F, probes: usize, rng: &mut ChaCha8Rng) -> FdStats
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&vars);
    let grads = tape.backward(loss).expect("scalar loss");
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(*v)).collect();
    let eval = |ins: &[Tensor]| {
        let tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.constant(t.clone())).collect();
        f(&vars).item()
    };
    let mut stats = FdStats::default();
    let mut work = inputs.to_vec();
    for _ in 0..probes {
        let i = rng.random_range(0..inputs.len());
        let j = rng.random_range(0..inputs[i].numel());
        let orig = inputs[i].data()[j];
        probe(&mut stats, analytic[i].data()[j], orig, |x| {
            work[i].data_mut()[j] = x;
            let v = eval(&work);
            work[i].data_mut()[j] = orig;
            v
        });
    }
    stats
}
