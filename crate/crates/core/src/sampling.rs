//! Seeded test functions for the falsification checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::grid::{DiscreteFunction, Mesh};

/// Independent stream per sample index, so parallel sampling is reproducible.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tensor product of `cos²` bumps, `Π_d cos²(π (x_d - c_d) / (2 w_d))` on `|x_d - c_d| < w_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl Bump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for ((&xd, &c), &w) in x.iter().zip(&self.center).zip(&self.half_width) {
            let t = (xd - c) / w;
            if t.abs() >= 1.0 {
                return 0.0;
            }
            let cth = (0.5 * PI * t).cos();
            v *= cth * cth;
        }
        v
    }

    pub fn to_function(&self, mesh: &Arc<Mesh>) -> DiscreteFunction {
        DiscreteFunction::from_fn(mesh, |x| self.eval(x))
    }

    pub fn describe(&self) -> String {
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!("bump(center=[{}] half_width=[{}])", fmt(&self.center), fmt(&self.half_width))
    }
}

/// Draws a bump inside `bounds`. Each half-width is at least `2h` on its axis
/// and at most half the extent.
pub fn random_bump(rng: &mut ChaCha8Rng, mesh: &Mesh, bounds: &[(f64, f64)]) -> Bump {
    let n = bounds.len();
    let mut center = Vec::with_capacity(n);
    let mut half_width = Vec::with_capacity(n);
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        let ext = hi - lo;
        let wmin = (2.0 * mesh.spacing()[d]).min(0.5 * ext);
        let w = rng.gen_range(wmin..=0.5 * ext);
        let c = rng.gen_range(lo + 0.5 * w..=hi - 0.5 * w);
        center.push(c);
        half_width.push(w);
    }
    Bump { center, half_width }
}

/// A nonzero bump on the free nodes, redrawn a bounded number of times if the
/// projection annihilates it.
pub fn nonzero_bump(
    seed: u64,
    stream: u64,
    mesh: &Arc<Mesh>,
    bounds: &[(f64, f64)],
) -> Option<(Bump, DiscreteFunction)> {
    let mut rng = rng_for(seed, stream);
    for _ in 0..32 {
        let b = random_bump(&mut rng, mesh, bounds);
        let u = b.to_function(mesh);
        if !u.is_zero() {
            return Some((b, u));
        }
    }
    None
}
