use rand::seq::SliceRandom;
use rand::Rng;

/// Row indices for one epoch. `None`, or a batch at least as large as `m`,
/// gives a single in-order full batch and leaves `rng` untouched; otherwise
/// the rows are shuffled and chunked, the last batch possibly smaller.
pub fn epoch_batches<R: Rng + ?Sized>(
    m: usize,
    batch_size: Option<usize>,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..m).collect();
    match batch_size {
        Some(b) if b > 0 && b < m => {
            rows.shuffle(rng);
            rows.chunks(b).map(<[usize]>::to_vec).collect()
        }
        _ => vec![rows],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn full_batch_in_order() {
        let mut rng = seed::rng(1);
        assert_eq!(epoch_batches(4, None, &mut rng), vec![vec![0, 1, 2, 3]]);
        assert_eq!(epoch_batches(4, Some(9), &mut rng), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn minibatches_cover_every_row_once() {
        let mut rng = seed::rng(2);
        let b = epoch_batches(10, Some(3), &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
