//! Data-parallel kernels with a deterministic reduction order.
//!
//! With the `parallel` feature (on by default) the maps and reductions below
//! fan out over rayon's global pool; without it they run on the calling
//! thread. Either way every reduction splits its index range into fixed
//! [`CHUNK`]-sized blocks, sums each block left to right and combines the
//! block partials with a pairwise tree, so results are bitwise identical
//! regardless of the number of workers or of the mode.
//!
//! [`set_sequential`] forces the sequential path at runtime, which is how the
//! benches compare both modes inside one binary.

use std::sync::atomic::{AtomicBool, Ordering};

/// Block length of the reduction tree leaves.
pub const CHUNK: usize = 2048;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Route every kernel through the sequential path (`true`) or back to the
/// default for this build (`false`).
pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::Relaxed);
}

/// Whether kernels currently fan out to worker threads.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Pairwise (cascade) summation of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

fn chunk_sum<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
    let mut acc = 0.0;
    for i in lo..hi {
        acc += f(i);
    }
    acc
}

/// Deterministic `sum_{i < len} f(i)`.
pub fn sum_by<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let blocks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = map_collect(blocks, |b| {
        let lo = b * CHUNK;
        chunk_sum(lo, (lo + CHUNK).min(len), &f)
    });
    pairwise_sum(&partials)
}

/// [`sum_by`] where each block first builds a scratch value with `make` and
/// passes it to every call of `f` in the block.
pub fn sum_by_with<S, M, F>(len: usize, make: M, f: F) -> f64
where
    M: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> f64 + Sync + Send,
{
    let blocks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = map_collect(blocks, |b| {
        let lo = b * CHUNK;
        let mut scratch = make();
        let mut acc = 0.0;
        for i in lo..(lo + CHUNK).min(len) {
            acc += f(&mut scratch, i);
        }
        acc
    });
    pairwise_sum(&partials)
}

/// `(0..len).map(f).collect()`, in parallel when enabled.
pub fn map_collect<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}

/// Write `out[i] = f(i)` for every index.
pub fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        out.par_iter_mut()
            .with_min_len(256)
            .enumerate()
            .for_each(|(i, v)| *v = f(i));
        return;
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

/// Apply `f(i, block)` to consecutive `width`-sized blocks of `out`.
pub fn fill_blocks<T, F>(out: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(width)
            .with_min_len(64)
            .enumerate()
            .for_each(|(i, b)| f(i, b));
        return;
    }
    for (i, b) in out.chunks_mut(width).enumerate() {
        f(i, b);
    }
}

/// [`fill_blocks`] with a scratch value built once per group of blocks.
pub fn fill_blocks_with<T, S, M, F>(out: &mut [T], width: usize, make: M, f: F)
where
    T: Send,
    M: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [T]) + Sync + Send,
{
    let group = CHUNK.div_ceil(width).max(1) * width;
    let run = |g: usize, chunk: &mut [T]| {
        let mut scratch = make();
        let first = g * (group / width);
        for (j, b) in chunk.chunks_mut(width).enumerate() {
            f(&mut scratch, first + j, b);
        }
    };
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(group)
            .enumerate()
            .for_each(|(g, c)| run(g, c));
        return;
    }
    for (g, c) in out.chunks_mut(group).enumerate() {
        run(g, c);
    }
}

/// Deterministic maximum of `f(i)`; `NEG_INFINITY` when `len == 0`.
pub fn max_by<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let blocks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = map_collect(blocks, |b| {
        let lo = b * CHUNK;
        (lo..(lo + CHUNK).min(len))
            .map(&f)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    partials.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_small_cases() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[3.0]), 3.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
    }

    #[test]
    fn sum_by_matches_closed_form() {
        let n = 10_007;
        let s = sum_by(n, |i| i as f64);
        assert_eq!(s, (n * (n - 1) / 2) as f64);
    }

    #[test]
    fn sum_is_identical_in_both_modes() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let a = sum_by(50_000, f);
        set_sequential(true);
        let b = sum_by(50_000, f);
        set_sequential(false);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn scratch_variants_match_plain_ones() {
        let f = |i: usize| ((i as f64) * 0.11).cos();
        let a = sum_by(9_999, f);
        let b = sum_by_with(9_999, || 0u8, |_, i| f(i));
        assert_eq!(a.to_bits(), b.to_bits());
        let mut x = vec![0.0; 3 * 5_000];
        let mut y = vec![0.0; 3 * 5_000];
        fill_blocks(&mut x, 3, |i, b| {
            b.iter_mut()
                .enumerate()
                .for_each(|(k, v)| *v = f(3 * i + k))
        });
        fill_blocks_with(&mut y, 3, Vec::<f64>::new, |_, i, b| {
            b.iter_mut()
                .enumerate()
                .for_each(|(k, v)| *v = f(3 * i + k))
        });
        assert_eq!(x, y);
    }

    #[test]
    fn max_by_empty_and_nonempty() {
        assert_eq!(max_by(0, |_| 1.0), f64::NEG_INFINITY);
        assert_eq!(max_by(5000, |i| -((i as f64) - 1234.0).abs()), 0.0);
    }
}
