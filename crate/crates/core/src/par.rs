//! Row-parallel helpers with a serial fallback.
//!
//! With the `parallel` feature the [`Exec::Parallel`] mode dispatches to rayon;
//! without it both modes run the same serial loop. Every helper keeps the
//! per-row work identical across modes, so results are bitwise equal.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution mode for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Serial,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this mode actually fans out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Calls `f(row_index, row)` for each `width`-sized row of `out`.
pub fn for_each_row<F>(exec: Exec, out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(width)
            .with_min_len((4096 / width).max(1))
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = exec;
    out.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}

/// Maps `f` over `items`, preserving order.
pub fn map_collect<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Computes `dots[i] = <rows[i], w>` for each row of a row-major block.
pub fn row_dots(exec: Exec, rows: &[f64], width: usize, w: &[f64], dots: &mut [f64]) {
    debug_assert_eq!(w.len(), width);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        dots.par_iter_mut()
            .zip(rows.par_chunks(width))
            .for_each(|(d, r)| *d = dot(r, w));
        return;
    }
    let _ = exec;
    for (d, r) in dots.iter_mut().zip(rows.chunks(width)) {
        *d = dot(r, w);
    }
}

/// Computes `w -= sum_i coeffs[i] * rows[i]`, chunked over the entries of `w`.
pub fn subtract_combination(exec: Exec, rows: &[f64], width: usize, coeffs: &[f64], w: &mut [f64]) {
    const CHUNK: usize = 16384;
    let update = |start: usize, chunk: &mut [f64]| {
        let end = start + chunk.len();
        for (i, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let r = &rows[i * width + start..i * width + end];
            for (x, &v) in chunk.iter_mut().zip(r) {
                *x -= c * v;
            }
        }
    };
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        w.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(k, chunk)| update(k * CHUNK, chunk));
        return;
    }
    let _ = exec;
    w.chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(k, chunk)| update(k * CHUNK, chunk));
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators; fixed association order
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let rows: Vec<f64> = (0..3 * 2500).map(|i| ((i * 37) % 101) as f64 * 0.013).collect();
        let w: Vec<f64> = (0..2500).map(|i| ((i * 11) % 17) as f64 - 8.0).collect();
        let mut a = vec![0.0; 3];
        let mut b = vec![0.0; 3];
        row_dots(Exec::Serial, &rows, 2500, &w, &mut a);
        row_dots(Exec::Parallel, &rows, 2500, &w, &mut b);
        assert_eq!(a, b);

        let mut wa = w.clone();
        let mut wb = w.clone();
        subtract_combination(Exec::Serial, &rows, 2500, &a, &mut wa);
        subtract_combination(Exec::Parallel, &rows, 2500, &a, &mut wb);
        assert_eq!(wa, wb);
    }

    #[test]
    fn map_collect_keeps_order() {
        let items: Vec<u64> = (0..100).collect();
        let out = map_collect(Exec::Parallel, &items, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
