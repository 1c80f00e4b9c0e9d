//! Internal helpers that switch between rayon and sequential execution.
//!
//! Every helper here is restricted to order-independent exact reductions
//! (elementwise maps, min with index tie-breaking), so the `parallel`
//! feature never changes results, only wall-clock time.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for `i in 0..n` and returns `(worst, index)` where
/// `worst` is the minimum value and `index` the smallest index attaining it.
/// Returns `None` when `n == 0`. NaN values always win (compare as worst) so
/// that a corrupted check cannot pass silently.
pub(crate) fn min_by_index<F>(n: usize, f: F) -> Option<(f64, usize)>
where
    F: Fn(usize) -> f64 + Sync,
{
    fn pick(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
        if a.0.is_nan() && b.0.is_nan() {
            return if a.1 <= b.1 { a } else { b };
        }
        if a.0.is_nan() {
            return a;
        }
        if b.0.is_nan() {
            return b;
        }
        if a.0 < b.0 || (a.0 == b.0 && a.1 <= b.1) {
            a
        } else {
            b
        }
    }

    if n == 0 {
        return None;
    }

    #[cfg(feature = "parallel")]
    {
        Some(
            (0..n)
                .into_par_iter()
                .map(|i| (f(i), i))
                .reduce(|| (f64::INFINITY, usize::MAX), pick),
        )
    }
    #[cfg(not(feature = "parallel"))]
    {
        Some((0..n).map(|i| (f(i), i)).fold((f64::INFINITY, usize::MAX), pick))
    }
}

/// Maps `f` over `0..n` into a `Vec`, in parallel when enabled. Output order
/// is by index either way.
pub(crate) fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_by_index_picks_smallest_index_on_ties() {
        let vals = [3.0, 1.0, 1.0, 2.0];
        let (w, i) = min_by_index(vals.len(), |i| vals[i]).unwrap();
        assert_eq!(w, 1.0);
        assert_eq!(i, 1);
    }

    #[test]
    fn min_by_index_propagates_nan() {
        let vals = [3.0, f64::NAN, -7.0];
        let (w, i) = min_by_index(vals.len(), |i| vals[i]).unwrap();
        assert!(w.is_nan());
        assert_eq!(i, 1);
    }

    #[test]
    fn min_by_index_empty() {
        assert!(min_by_index(0, |_| 0.0).is_none());
    }

    #[test]
    fn map_collect_preserves_order() {
        assert_eq!(map_collect(5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }
}
