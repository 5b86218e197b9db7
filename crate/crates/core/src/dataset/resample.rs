use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

fn class_indices(d: &Dataset) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &t) in d.target.iter().enumerate() {
        out[t as usize].push(i);
    }
    out
}

/// Downsamples both classes to `min(minority, cap)` rows, uniformly at random.
///
/// Retained rows keep their original relative order.
pub fn balance(d: &Dataset, cap: Option<usize>, seed: u64) -> Result<Dataset> {
    let classes = class_indices(d);
    if classes.iter().any(Vec::is_empty) {
        return Err(Error::Dataset("cannot balance: one class is empty".into()));
    }
    let minority = classes[0].len().min(classes[1].len());
    let keep = cap.map_or(minority, |c| c.min(minority));
    let mut chosen = Vec::with_capacity(2 * keep);
    for (label, idx) in classes.iter().enumerate() {
        let mut r = rng::stream(seed, 0xBA1A_0000 + label as u64);
        let mut picked: Vec<usize> = idx.choose_multiple(&mut r, keep).copied().collect();
        picked.sort_unstable();
        chosen.extend(picked);
    }
    chosen.sort_unstable();
    Ok(d.subset(&chosen))
}

/// Stratified train/test split.
///
/// Each class contributes `round(count * test_fraction)` rows to the test
/// side. The test side is returned in a seeded shuffled order, which is the
/// recorded order used for "first n instances" selections.
pub fn split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    if d.len() < 2 {
        return Err(Error::Dataset("need at least two rows to split".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in class_indices(d).into_iter().enumerate() {
        let mut r = rng::stream(seed, 0x5B11_7000 + label as u64);
        idx.shuffle(&mut r);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    if test.is_empty() || train.is_empty() {
        return Err(Error::Dataset(format!(
            "test fraction {test_fraction} leaves an empty side ({} train / {} test)",
            train.len(),
            test.len()
        )));
    }
    let mut r = rng::stream(seed, 0x5B11_70FF);
    train.sort_unstable();
    test.sort_unstable();
    test.shuffle(&mut r);
    Ok((d.subset(&train), d.subset(&test)))
}
