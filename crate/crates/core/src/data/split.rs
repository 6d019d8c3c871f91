use super::epochs::{EpochSet, LabeledEpochs, LabeledSplit};
use crate::error::{invalid, Error, Result};
use crate::numerics::Rng;

/// Subjects needed so train, validation and test each get one.
pub const MIN_SUBJECTS: usize = 3;

/// Subject counts `(train, val, test)` for `n` subjects. Test takes
/// `round(test_fraction * n)`, validation `round(val_fraction * rest)` of
/// the remainder, each at least 1 and leaving at least 1 for training.
pub fn split_sizes(
    n: usize,
    test_fraction: f64,
    val_fraction: f64,
) -> Result<(usize, usize, usize)> {
    for (name, f) in [
        ("test_fraction", test_fraction),
        ("val_fraction", val_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(invalid(format!("{name} must be in (0, 1), got {f}")));
        }
    }
    if n < MIN_SUBJECTS {
        return Err(Error::TooFewSubjects {
            minimum: MIN_SUBJECTS,
            found: n,
        });
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 2);
    let rest = n - n_test;
    let n_val = ((val_fraction * rest as f64).round() as usize).clamp(1, rest - 1);
    Ok((rest - n_val, n_val, n_test))
}

/// Shuffle the distinct subjects and partition them into test, validation
/// and training groups; every trial follows its subject. Labels come from
/// [`binarize_valence`](super::binarize_valence).
pub fn split_subject_independent(
    es: &EpochSet,
    test_fraction: f64,
    val_fraction: f64,
    rng: &mut Rng,
) -> Result<LabeledSplit> {
    let mut subjects = es.subjects();
    subjects.sort_unstable();
    let (_, n_val, n_test) = split_sizes(subjects.len(), test_fraction, val_fraction)?;
    rng.shuffle(&mut subjects);
    let (test, rest) = subjects.split_at(n_test);
    let (val, train) = rest.split_at(n_val);

    let part = |group: &[u32]| -> Result<LabeledEpochs> {
        let indices: Vec<usize> = (0..es.n_trials())
            .filter(|&i| group.contains(&es.subject_ids()[i]))
            .collect();
        LabeledEpochs::from_epochs(es.select(&indices)?)
    };
    Ok(LabeledSplit {
        train: part(train)?,
        val: part(val)?,
        test: part(test)?,
    })
}
