use std::collections::BTreeMap;

/// Maps the distinct labels found across `sets` to `0..K` in ascending order.
/// Returns the remapped sets and `K`.
pub fn remap_labels(sets: &[&[i64]]) -> (Vec<Vec<usize>>, usize) {
    let mut map: BTreeMap<i64, usize> = sets.iter().flat_map(|s| s.iter()).map(|&l| (l, 0)).collect();
    for (i, slot) in map.values_mut().enumerate() {
        *slot = i;
    }
    let mapped = sets.iter().map(|s| s.iter().map(|l| map[l]).collect()).collect();
    (mapped, map.len())
}
