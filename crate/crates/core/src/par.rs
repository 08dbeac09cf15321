//! Deterministic data-parallel helpers.
//!
//! Every reduction is split into fixed-size chunks whose partial sums are
//! combined sequentially, so the result does not depend on the thread count
//! or on whether the `parallel` feature is enabled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const CHUNK: usize = 512;

/// `Σ_{i<n} f(i)` with a fixed summation tree.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let chunk_sum = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partial: Vec<f64> = (0..chunks).into_par_iter().map(chunk_sum).collect();
    #[cfg(not(feature = "parallel"))]
    let partial: Vec<f64> = (0..chunks).map(chunk_sum).collect();
    partial.iter().sum()
}

/// `min_{i<n} f(i)` together with the first index attaining it.
pub fn min_by_index<F>(n: usize, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let values = map(n, f);
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v < b) => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fills `out` in blocks of `stride` elements: `f(i, &mut out[i*stride..(i+1)*stride])`.
pub fn fill_blocks<F>(out: &mut [f64], stride: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(i, block)| f(i, block));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(stride)
        .enumerate()
        .for_each(|(i, block)| f(i, block));
}

pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    #[cfg(not(feature = "parallel"))]
    out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(a.len(), |i| a[i] * b[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_sequential_chunking() {
        let n: usize = 10_007;
        let f = |i: usize| ((i as f64) * 0.37).sin();
        let mut expect = 0.0;
        let mut partials = Vec::new();
        for c in 0..n.div_ceil(CHUNK) {
            let mut acc = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                acc += f(i);
            }
            partials.push(acc);
        }
        for p in partials {
            expect += p;
        }
        assert_eq!(sum(n, f).to_bits(), expect.to_bits());
    }

    #[test]
    fn min_by_index_picks_first() {
        let v = [3.0, 1.0, 2.0, 1.0];
        assert_eq!(min_by_index(4, |i| v[i]), Some((1, 1.0)));
        assert_eq!(min_by_index(0, |i| v[i]), None);
    }
}
