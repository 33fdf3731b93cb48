use crate::grid::Grid;
use crate::topology::RegionIndex;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Maximum count decoding: for every window, the region with the most
/// absorptions.
pub fn mcd_decode(window_counts: &Grid<u64>) -> Vec<RegionIndex> {
    window_counts
        .iter_rows()
        .map(|row| RegionIndex(argmax(row) as u8))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let g = Grid::from_vec(3, 8, [
            [5, 1, 0, 0, 0, 0, 0, 2],
            [3, 3, 0, 0, 0, 0, 0, 0],
            [0; 8],
        ]
        .concat());
        assert_eq!(mcd_decode(&g), vec![RegionIndex(0), RegionIndex(0), RegionIndex(0)]);
        let g = Grid::from_vec(1, 4, vec![1, 4, 9, 9]);
        assert_eq!(mcd_decode(&g), vec![RegionIndex(2)]);
    }

    #[test]
    fn scale_invariant() {
        let g = Grid::from_vec(2, 4, vec![1, 7, 3, 2, 6, 0, 6, 1]);
        let scaled = g.map(|&c| c * 13);
        assert_eq!(mcd_decode(&g), mcd_decode(&scaled));
    }
}
