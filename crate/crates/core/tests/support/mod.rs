//! Checks shared by the acceptance runner and the per-topic test files.
#![allow(dead_code)]

pub mod fd;
pub mod invariants;
pub mod oracles;

use lanetraj::geom::Point2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_track(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<Point2> {
    let mut p = Point2::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread));
    let mut heading: f64 = rng.random_range(-3.1..3.1);
    (0..n)
        .map(|_| {
            heading += rng.random_range(-0.3..0.3);
            p = p + Point2::from_angle(heading) * rng.random_range(0.2..2.0);
            p
        })
        .collect()
}
