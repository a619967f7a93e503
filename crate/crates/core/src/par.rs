//! Row-parallel loops over x-major grid storage.
//!
//! With the `parallel` feature the row loops run on the rayon pool; without
//! it, or with [`Execution::Sequential`], they run in order on the calling
//! thread. Every row is computed by the same code either way, so both paths
//! produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether row loops actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Calls `f(i, row_i)` for every length-`width` row of `out`.
pub fn for_each_row<F>(exec: Execution, out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = exec;
    out.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Like [`for_each_row`] over four arrays in lock step.
pub fn for_each_row4<F>(exec: Execution, out: &mut [Vec<f64>; 4], width: usize, f: F)
where
    F: Fn(usize, [&mut [f64]; 4]) + Sync + Send,
{
    let [a, b, c, d] = out;
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        a.par_chunks_mut(width)
            .zip(b.par_chunks_mut(width))
            .zip(c.par_chunks_mut(width))
            .zip(d.par_chunks_mut(width))
            .enumerate()
            .for_each(|(i, (((ra, rb), rc), rd))| f(i, [ra, rb, rc, rd]));
        return;
    }
    let _ = exec;
    a.chunks_mut(width)
        .zip(b.chunks_mut(width))
        .zip(c.chunks_mut(width))
        .zip(d.chunks_mut(width))
        .enumerate()
        .for_each(|(i, (((ra, rb), rc), rd))| f(i, [ra, rb, rc, rd]));
}

/// Maps `f` over `0..n` and collects in index order.
pub fn map_collect<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let fill = |exec| {
            let mut v = vec![0.0; 12];
            for_each_row(exec, &mut v, 4, |i, row| {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = (i * 10 + j) as f64;
                }
            });
            v
        };
        assert_eq!(fill(Execution::Sequential), fill(Execution::Parallel));
        assert_eq!(
            map_collect(Execution::Parallel, 5, |i| i * i),
            vec![0, 1, 4, 9, 16]
        );
    }
}
