//! Partition agreement measures.

use crate::net_data::ClassAssignment;

/// Rand index: fraction of node pairs on which two partitions agree
/// (both together or both apart). Invariant to label permutations.
pub fn rand_index(a: &ClassAssignment, b: &ClassAssignment) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions over different node sets");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let (la, lb) = (a.labels(), b.labels());
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if (la[i] == la[j]) == (lb[i] == lb[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / (n * (n - 1) / 2) as f64
}
