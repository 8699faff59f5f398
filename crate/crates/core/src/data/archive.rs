//! In-memory trial container and the ESC1 file format.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::model::Reader;
use crate::tensor::Tensor;

const MAGIC: [u8; 4] = *b"ESC1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Eeg,
    Eog,
}

impl ChannelKind {
    fn code(self) -> u8 {
        match self {
            ChannelKind::Eeg => 0,
            ChannelKind::Eog => 1,
        }
    }

    fn from_code(v: u8) -> Result<Self, FormatError> {
        match v {
            0 => Ok(ChannelKind::Eeg),
            1 => Ok(ChannelKind::Eog),
            other => Err(FormatError::Invalid(format!("channel kind code {other}"))),
        }
    }
}

/// Everything about an archive except the signal samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub n_channels: usize,
    pub n_samples: usize,
    pub fs: f32,
    pub class_names: Vec<String>,
    pub channel_kinds: Vec<ChannelKind>,
    pub labels: Vec<u16>,
    pub subjects: Vec<u16>,
    pub sessions: Vec<u16>,
}

impl ArchiveMeta {
    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Sorted distinct subject ids.
    pub fn subject_ids(&self) -> Vec<u16> {
        self.subjects.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Sorted distinct session ids of one subject.
    pub fn session_ids(&self, subject: u16) -> Vec<u16> {
        self.subjects
            .iter()
            .zip(&self.sessions)
            .filter(|(s, _)| **s == subject)
            .map(|(_, &k)| k)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Trial indices of a subject, optionally restricted to one session, in
    /// archive order.
    pub fn trials_of(&self, subject: u16, session: Option<u16>) -> Vec<usize> {
        (0..self.n_trials())
            .filter(|&i| self.subjects[i] == subject && session.map_or(true, |k| self.sessions[i] == k))
            .collect()
    }

    /// True when every subject has at least two sessions.
    pub fn is_multi_session(&self) -> bool {
        let subjects = self.subject_ids();
        !subjects.is_empty() && subjects.iter().all(|&s| self.session_ids(s).len() >= 2)
    }
}

/// Trials stored as `f32[n_trials][n_channels][n_samples]`.
#[derive(Clone, PartialEq)]
pub struct TrialArchive {
    meta: ArchiveMeta,
    data: Vec<f32>,
}

impl std::fmt::Debug for TrialArchive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrialArchive")
            .field("n_trials", &self.n_trials())
            .field("n_channels", &self.meta.n_channels)
            .field("n_samples", &self.meta.n_samples)
            .field("fs", &self.meta.fs)
            .field("classes", &self.meta.class_names)
            .finish()
    }
}

impl TrialArchive {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_channels: usize,
        n_samples: usize,
        fs: f32,
        class_names: Vec<String>,
        channel_kinds: Vec<ChannelKind>,
        labels: Vec<u16>,
        subjects: Vec<u16>,
        sessions: Vec<u16>,
        data: Vec<f32>,
    ) -> Result<Self> {
        Self::from_meta(
            ArchiveMeta {
                n_channels,
                n_samples,
                fs,
                class_names,
                channel_kinds,
                labels,
                subjects,
                sessions,
            },
            data,
        )
    }

    pub fn from_meta(meta: ArchiveMeta, data: Vec<f32>) -> Result<Self> {
        let n = meta.labels.len();
        if meta.subjects.len() != n || meta.sessions.len() != n {
            return Err(Error::shape(format!(
                "{n} labels but {} subject ids and {} session ids",
                meta.subjects.len(),
                meta.sessions.len()
            )));
        }
        if meta.channel_kinds.len() != meta.n_channels {
            return Err(Error::shape(format!(
                "{} channels but {} channel kinds",
                meta.n_channels,
                meta.channel_kinds.len()
            )));
        }
        if !(meta.fs > 0.0) || !meta.fs.is_finite() {
            return Err(Error::arg(format!("sampling rate must be positive, got {}", meta.fs)));
        }
        if let Some((i, &l)) = meta
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| usize::from(l) >= meta.class_names.len())
        {
            return Err(Error::arg(format!(
                "trial {i} has label {l} but only {} classes are named",
                meta.class_names.len()
            )));
        }
        if meta.class_names.iter().any(|c| c.contains('\0')) {
            return Err(Error::arg("class names may not contain NUL"));
        }
        let expected = n * meta.n_channels * meta.n_samples;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "data has {} values, expected {n} x {} x {} = {expected}",
                data.len(),
                meta.n_channels,
                meta.n_samples
            )));
        }
        Ok(TrialArchive { meta, data })
    }

    pub fn meta(&self) -> &ArchiveMeta {
        &self.meta
    }

    pub fn n_trials(&self) -> usize {
        self.meta.n_trials()
    }

    pub fn n_channels(&self) -> usize {
        self.meta.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.meta.n_samples
    }

    pub fn fs(&self) -> f32 {
        self.meta.fs
    }

    pub fn class_names(&self) -> &[String] {
        &self.meta.class_names
    }

    pub fn channel_kinds(&self) -> &[ChannelKind] {
        &self.meta.channel_kinds
    }

    pub fn labels(&self) -> &[u16] {
        &self.meta.labels
    }

    pub fn subjects(&self) -> &[u16] {
        &self.meta.subjects
    }

    pub fn sessions(&self) -> &[u16] {
        &self.meta.sessions
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn trial_len(&self) -> usize {
        self.meta.n_channels * self.meta.n_samples
    }

    /// Raw samples of trial `i`, channel-major.
    pub fn trial(&self, i: usize) -> &[f32] {
        let len = self.trial_len();
        &self.data[i * len..(i + 1) * len]
    }

    /// Trial `i` as a `[C, T]` double-precision tensor.
    pub fn trial_tensor(&self, i: usize) -> Tensor<f64> {
        let data = self.trial(i).iter().map(|&v| f64::from(v)).collect();
        Tensor::from_vec(&[self.meta.n_channels, self.meta.n_samples], data)
            .expect("trial length matches metadata")
    }

    /// New archive holding the listed trials in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let n = self.n_trials();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::arg(format!("trial index {bad} out of range for {n} trials")));
        }
        let pick = |v: &[u16]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let mut data = Vec::with_capacity(indices.len() * self.trial_len());
        for &i in indices {
            data.extend_from_slice(self.trial(i));
        }
        let meta = ArchiveMeta {
            labels: pick(&self.meta.labels),
            subjects: pick(&self.meta.subjects),
            sessions: pick(&self.meta.sessions),
            ..self.meta.clone()
        };
        Ok(TrialArchive { meta, data })
    }

    /// EEG-only view, or every channel when `include_eog` is set.
    pub fn select_channels(&self, include_eog: bool) -> Self {
        if include_eog || self.meta.channel_kinds.iter().all(|&k| k == ChannelKind::Eeg) {
            return self.clone();
        }
        let keep: Vec<usize> = (0..self.meta.n_channels)
            .filter(|&c| self.meta.channel_kinds[c] == ChannelKind::Eeg)
            .collect();
        let t = self.meta.n_samples;
        let mut data = Vec::with_capacity(self.n_trials() * keep.len() * t);
        for i in 0..self.n_trials() {
            let trial = self.trial(i);
            for &c in &keep {
                data.extend_from_slice(&trial[c * t..(c + 1) * t]);
            }
        }
        let meta = ArchiveMeta {
            n_channels: keep.len(),
            channel_kinds: vec![ChannelKind::Eeg; keep.len()],
            ..self.meta.clone()
        };
        TrialArchive { meta, data }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let m = &self.meta;
        let u32_of = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::arg(format!("{what} {v} does not fit the ESC1 header")))
        };
        let names = m.class_names.join("\0");
        let name_len = u16::try_from(names.len())
            .map_err(|_| Error::arg("class name block longer than 65535 bytes"))?;
        let n_classes = u16::try_from(m.class_names.len())
            .map_err(|_| Error::arg("more than 65535 classes"))?;
        let n = self.n_trials();
        let mut out = Vec::with_capacity(32 + names.len() + 6 * n + m.n_channels + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&u32_of(n, "n_trials")?.to_le_bytes());
        out.extend_from_slice(&u32_of(m.n_channels, "n_channels")?.to_le_bytes());
        out.extend_from_slice(&u32_of(m.n_samples, "n_samples")?.to_le_bytes());
        out.extend_from_slice(&m.fs.to_le_bytes());
        out.extend_from_slice(&n_classes.to_le_bytes());
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(names.as_bytes());
        for column in [&m.labels, &m.subjects, &m.sessions] {
            for v in column.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend(m.channel_kinds.iter().map(|k| k.code()));
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let n = r.u32()? as usize;
        let n_channels = r.u32()? as usize;
        let n_samples = r.u32()? as usize;
        let fs = r.f32()?;
        let n_classes = usize::from(r.u16()?);
        let name_len = usize::from(r.u16()?);
        let block = r.take(name_len)?;
        let block = std::str::from_utf8(block)
            .map_err(|_| FormatError::Invalid("class names are not UTF-8".into()))?;
        let class_names: Vec<String> = if n_classes == 0 {
            if !block.is_empty() {
                return Err(FormatError::Invalid("class names present but n_classes = 0".into()).into());
            }
            Vec::new()
        } else {
            block.split('\0').map(str::to_owned).collect()
        };
        if class_names.len() != n_classes {
            return Err(FormatError::Invalid(format!(
                "header declares {n_classes} classes, name block holds {}",
                class_names.len()
            ))
            .into());
        }
        // Guard the allocations below against absurd headers.
        let total = n
            .checked_mul(n_channels)
            .and_then(|v| v.checked_mul(n_samples))
            .ok_or(FormatError::Truncated)?;
        if total.saturating_mul(4) > bytes.len() || n.saturating_mul(6) > bytes.len() {
            return Err(FormatError::Truncated.into());
        }
        let column = |r: &mut Reader<'_>| -> Result<Vec<u16>, FormatError> {
            (0..n).map(|_| r.u16()).collect()
        };
        let labels = column(&mut r)?;
        let subjects = column(&mut r)?;
        let sessions = column(&mut r)?;
        let channel_kinds = (0..n_channels)
            .map(|_| r.u8().and_then(ChannelKind::from_code))
            .collect::<Result<Vec<_>, _>>()?;
        let data = r.f32_vec(total)?;
        r.finish()?;
        let meta = ArchiveMeta {
            n_channels,
            n_samples,
            fs,
            class_names,
            channel_kinds,
            labels,
            subjects,
            sessions,
        };
        Self::from_meta(meta, data).map_err(|e| FormatError::Invalid(e.to_string()).into())
    }

    /// Write the archive and its `<path>.manifest` sidecar.
    pub fn save(&self, path: impl AsRef<Path>, provenance: &[(&str, String)]) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))?;
        let sidecar = manifest_path(path);
        std::fs::write(&sidecar, self.manifest(provenance)).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Plain-text `key=value` description of the archive.
    pub fn manifest(&self, provenance: &[(&str, String)]) -> String {
        let m = &self.meta;
        let n_eog = m.channel_kinds.iter().filter(|&&k| k == ChannelKind::Eog).count();
        let mut s = String::new();
        let _ = writeln!(s, "format=ESC1");
        let _ = writeln!(s, "version={VERSION}");
        let _ = writeln!(s, "n_trials={}", self.n_trials());
        let _ = writeln!(s, "n_channels={}", m.n_channels);
        let _ = writeln!(s, "n_eeg={}", m.n_channels - n_eog);
        let _ = writeln!(s, "n_eog={n_eog}");
        let _ = writeln!(s, "n_samples={}", m.n_samples);
        let _ = writeln!(s, "fs={}", m.fs);
        let _ = writeln!(s, "classes={}", m.class_names.join(","));
        let _ = writeln!(s, "subjects={}", m.subject_ids().len());
        for (k, v) in provenance {
            let _ = writeln!(s, "{k}={}", v.replace('\n', " "));
        }
        s
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".manifest");
    PathBuf::from(os)
}
