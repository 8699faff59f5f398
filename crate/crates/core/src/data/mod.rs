//! Trial archives, split plans and the synthetic generator.

mod archive;
mod source;
mod splits;
mod synth;

pub use archive::{manifest_path, ArchiveMeta, ChannelKind, TrialArchive};
pub use source::{check_streamed, read_outside_predict, Access, AuditedSource, Phase, TrialSource};
pub use splits::{make_splits, Fold, Paradigm, Scheme, SplitPlan, Target, CHRONO_TRAIN_FRACTION};
pub use synth::{class_channels, class_frequency, synth_generate, SynthConfig};

/// Save an archive with only the default manifest entries.
pub fn save_archive(archive: &TrialArchive, path: impl AsRef<std::path::Path>) -> crate::Result<()> {
    archive.save(path, &[])
}

pub fn load_archive(path: impl AsRef<std::path::Path>) -> crate::Result<TrialArchive> {
    TrialArchive::load(path)
}
