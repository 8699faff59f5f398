//! Cue-aligned trial extraction from a continuous recording.

use crate::data::{ChannelKind, TrialArchive};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A continuous multichannel recording, `[C, T]`.
#[derive(Debug, Clone)]
pub struct Recording {
    pub data: Tensor<f64>,
    pub fs: f64,
    pub channel_kinds: Vec<ChannelKind>,
    pub subject: u16,
    pub session: u16,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cue {
    /// Cue onset in seconds from the start of the recording.
    pub onset_s: f64,
    pub label: u16,
}

/// Cut one trial of `round(duration_s * fs)` samples starting at each cue.
pub fn epoch_from_cue(
    recording: &Recording,
    cues: &[Cue],
    duration_s: f64,
    class_names: Vec<String>,
) -> Result<TrialArchive> {
    let (c, t) = recording.data.dims2()?;
    if recording.channel_kinds.len() != c {
        return Err(Error::shape(format!(
            "recording has {c} channels but {} channel kinds",
            recording.channel_kinds.len()
        )));
    }
    let n = (duration_s * recording.fs).round();
    if !(n >= 1.0) {
        return Err(Error::arg(format!("trial duration {duration_s} s is shorter than a sample")));
    }
    let n = n as usize;
    let mut data = Vec::with_capacity(cues.len() * c * n);
    let mut labels = Vec::with_capacity(cues.len());
    for (index, cue) in cues.iter().enumerate() {
        let start = (cue.onset_s * recording.fs).round();
        if !(start >= 0.0) {
            return Err(Error::CueOutOfRange {
                index,
                reason: format!("onset {} s precedes the recording", cue.onset_s),
            });
        }
        let start = start as usize;
        if start + n > t {
            return Err(Error::CueOutOfRange {
                index,
                reason: format!(
                    "window [{start}, {}) exceeds recording length {t}",
                    start + n
                ),
            });
        }
        if usize::from(cue.label) >= class_names.len() {
            return Err(Error::CueOutOfRange {
                index,
                reason: format!("label {} has no class name", cue.label),
            });
        }
        for ch in 0..c {
            let row = &recording.data.data()[ch * t + start..ch * t + start + n];
            data.extend(row.iter().map(|&v| v as f32));
        }
        labels.push(cue.label);
    }
    TrialArchive::new(
        c,
        n,
        recording.fs as f32,
        class_names,
        recording.channel_kinds.clone(),
        labels,
        vec![recording.subject; cues.len()],
        vec![recording.session; cues.len()],
        data,
    )
}
