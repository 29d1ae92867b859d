//! Deterministic vector kernels.
//!
//! Reductions are split into fixed-size chunks whose partial sums are
//! combined in index order, so results do not depend on the number of
//! worker threads.

use rayon::prelude::*;

use crate::scalar::{czero, Real, C};

pub(crate) const CHUNK: usize = 1 << 12;
/// Below this length the chunk loop runs on the calling thread.
pub(crate) const PAR_THRESHOLD: usize = 1 << 14;

fn chunked_sum<T: Real, F>(len: usize, partial: F) -> C<T>
where
    F: Fn(std::ops::Range<usize>) -> C<T> + Sync,
{
    let n_chunks = len.div_ceil(CHUNK);
    let range = |k: usize| k * CHUNK..((k + 1) * CHUNK).min(len);
    let partials: Vec<C<T>> = if len >= PAR_THRESHOLD {
        (0..n_chunks).into_par_iter().map(|k| partial(range(k))).collect()
    } else {
        (0..n_chunks).map(|k| partial(range(k))).collect()
    };
    partials.into_iter().fold(czero(), |acc, p| acc + p)
}

/// `<a|b>` (antilinear in the first argument).
pub(crate) fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    debug_assert_eq!(a.len(), b.len());
    chunked_sum(a.len(), |r| {
        a[r.clone()]
            .iter()
            .zip(&b[r])
            .fold(czero(), |acc, (x, y)| acc + x.conj() * y)
    })
}

pub(crate) fn norm_sqr<T: Real>(a: &[C<T>]) -> T {
    chunked_sum(a.len(), |r| {
        let s = a[r].iter().fold(T::zero(), |acc, x| acc + x.norm_sqr());
        C::new(s, T::zero())
    })
    .re
}

pub(crate) fn norm<T: Real>(a: &[C<T>]) -> T {
    norm_sqr(a).sqrt()
}

/// `y += alpha * x`
pub(crate) fn axpy<T: Real>(alpha: C<T>, x: &[C<T>], y: &mut [C<T>]) {
    if y.len() >= PAR_THRESHOLD {
        y.par_chunks_mut(CHUNK)
            .zip(x.par_chunks(CHUNK))
            .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(yi, xi)| *yi += alpha * xi));
    } else {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
    }
}

pub(crate) fn scale<T: Real>(alpha: C<T>, y: &mut [C<T>]) {
    if y.len() >= PAR_THRESHOLD {
        y.par_chunks_mut(CHUNK)
            .for_each(|yc| yc.iter_mut().for_each(|yi| *yi *= alpha));
    } else {
        y.iter_mut().for_each(|yi| *yi *= alpha);
    }
}
