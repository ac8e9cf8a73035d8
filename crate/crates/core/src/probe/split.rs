use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::SetLabel;

/// Row indices of each class, ordered by example id, shuffled with a
/// generator derived from `(seed, class)`. Deriving the stream per class
/// means a class is split the same way in every experiment it appears in.
fn shuffled_by_class(keys: &[(SetLabel, u64)], seed: u64) -> Vec<(SetLabel, Vec<usize>)> {
    SetLabel::ALL
        .iter()
        .filter_map(|&label| {
            let mut idx: Vec<usize> = (0..keys.len()).filter(|&i| keys[i].0 == label).collect();
            if idx.is_empty() {
                return None;
            }
            idx.sort_by_key(|&i| (keys[i].1, i));
            let stream = seed ^ (label.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(stream));
            Some((label, idx))
        })
        .collect()
}

/// Stratified train/test split over `(label, example_id)` keys. Each class
/// contributes `round(train_fraction * n)` rows to training, clamped so that
/// a class with at least two rows appears on both sides. Returned indices
/// are ascending.
pub fn stratified_split(
    keys: &[(SetLabel, u64)],
    train_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, idx) in shuffled_by_class(keys, seed) {
        let n = idx.len();
        let mut n_train = (train_fraction * n as f64).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        } else {
            n_train = n;
        }
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Stratified k-fold assignment: returns `k` disjoint test folds covering
/// every row, each with ascending indices. Rows of a class are dealt to the
/// folds round-robin after shuffling.
pub fn stratified_folds(keys: &[(SetLabel, u64)], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let k = k.max(1);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (_, idx) in shuffled_by_class(keys, seed) {
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    folds
}
