//! Order-preserving map over work items, parallel when the `parallel`
//! feature is enabled and sequential otherwise.
//!
//! Results come back in input order in both modes, so callers that reduce
//! with deterministic tie-breaking produce identical outputs either way.

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn ordered_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving order (sequential build).
#[cfg(not(feature = "parallel"))]
pub fn ordered_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Always-sequential variant, kept for benchmarking the two code paths
/// against each other under a single build.
pub fn ordered_map_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Split `0..n` into at most `workers` contiguous chunks of near-equal size.
pub fn contiguous_chunks(n: usize, workers: usize) -> Vec<std::ops::Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let w = workers.max(1).min(n);
    let base = n / w;
    let extra = n % w;
    let mut out = Vec::with_capacity(w);
    let mut start = 0;
    for i in 0..w {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v: Vec<usize> = (0..100).collect();
        let out = ordered_map(v.clone(), |x| x * 2);
        assert_eq!(out, v.iter().map(|x| x * 2).collect::<Vec<_>>());
        let out = ordered_map_seq(v.clone(), |x| x * 2);
        assert_eq!(out, v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn chunks_cover_range_exactly() {
        for n in [0usize, 1, 5, 7, 16] {
            for w in [1usize, 2, 3, 8, 32] {
                let chunks = contiguous_chunks(n, w);
                let mut covered = 0;
                let mut expect_start = 0;
                for c in &chunks {
                    assert_eq!(c.start, expect_start);
                    covered += c.len();
                    expect_start = c.end;
                }
                assert_eq!(covered, n);
            }
        }
    }
}
