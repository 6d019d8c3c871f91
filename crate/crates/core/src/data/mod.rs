//! EEG epochs: container, file format, labels, subject-disjoint splits,
//! standardization, bandpass filtering and a synthetic generator.

mod epochs;
mod format;
mod signal;
mod split;
mod synthetic;

pub use epochs::{binarize_valence, EpochSet, LabeledEpochs, LabeledSplit, Valence, VALENCE_RANGE};
pub use format::{
    load_epochset, read_epochset, save_epochset, write_epochset, write_sidecar, SidecarEntry,
    EPOCH_MAGIC, EPOCH_VERSION,
};
pub use signal::{
    bandpass_filter, bandpass_taps, filtfilt, standardize, Periodogram, FIR_TAPS, STANDARDIZE_EPS,
};
pub use split::{split_sizes, split_subject_independent, MIN_SUBJECTS};
pub use synthetic::{generate_synthetic, posterior_channels, BURST_GAIN, BURST_HZ, NOISE_UV};
