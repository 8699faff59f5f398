//! Train / calibration / test partitions for the four evaluation paradigms.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::archive::ArchiveMeta;

/// Fraction of a single-session subject's trials used for training under W-S.
pub const CHRONO_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Paradigm {
    /// Within-subject: train on a subject's first session, test on the rest.
    WS,
    /// Cross-subject: train on other subjects, test on all of the held-out data.
    CS,
    /// Cross-subject, then fine-tuned on the held-out subject's first session.
    CSFT,
    /// One-stage training on the C-S pool plus the calibration session.
    MDL,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::WS => "WS",
            Paradigm::CS => "CS",
            Paradigm::CSFT => "CSFT",
            Paradigm::MDL => "MDL",
        })
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', ' ', '_'], "").as_str() {
            "WS" | "WITHIN" | "WITHINSUBJECT" => Ok(Paradigm::WS),
            "CS" | "CROSS" | "CROSSSUBJECT" => Ok(Paradigm::CS),
            "CSFT" | "CROSSFT" | "CROSSSUBJECTFT" | "CROSSFINETUNE" => Ok(Paradigm::CSFT),
            "MDL" => Ok(Paradigm::MDL),
            _ => Err(Error::arg(format!(
                "unknown paradigm {s:?} (expected within, cross, cross-ft or mdl)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Leave one subject out.
    Loso,
    /// Leave multiple subjects out, with this many folds.
    Lmso(usize),
    /// Per-subject session split (the only scheme W-S uses).
    SessionSplit,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Loso => f.write_str("loso"),
            Scheme::Lmso(k) => write!(f, "lmso{k}"),
            Scheme::SessionSplit => f.write_str("session-split"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let l = s.to_ascii_lowercase();
        match l.as_str() {
            "loso" => Ok(Scheme::Loso),
            "lmso" => Ok(Scheme::Lmso(10)),
            "session-split" | "session" => Ok(Scheme::SessionSplit),
            _ => {
                let k = l
                    .strip_prefix("lmso")
                    .map(|r| r.trim_start_matches(['(', ':', '=']).trim_end_matches(')'))
                    .and_then(|r| r.parse::<usize>().ok())
                    .ok_or_else(|| Error::arg(format!("unknown split scheme {s:?}")))?;
                Ok(Scheme::Lmso(k))
            }
        }
    }
}

/// Held-out data of one subject inside a fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub subject: u16,
    /// Fine-tuning or online-statistics trials. Empty for C-S; for W-S and
    /// MDL these are also part of the training set.
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub targets: Vec<Target>,
    /// The fold falls back to an in-session chronological split.
    pub chronological: bool,
}

impl Fold {
    pub fn test_subjects(&self) -> Vec<u16> {
        self.targets.iter().map(|t| t.subject).collect()
    }

    pub fn test_trials(&self) -> Vec<usize> {
        self.targets.iter().flat_map(|t| t.test.iter().copied()).collect()
    }

    pub fn calibration_trials(&self) -> Vec<usize> {
        self.targets.iter().flat_map(|t| t.calibration.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub paradigm: Paradigm,
    pub scheme: Scheme,
    pub folds: Vec<Fold>,
    pub n_runs: usize,
    pub notes: Vec<String>,
}

fn first_and_rest(meta: &ArchiveMeta, subject: u16) -> (Vec<usize>, Vec<usize>) {
    let sessions = meta.session_ids(subject);
    let first = sessions[0];
    let all = meta.trials_of(subject, None);
    all.into_iter().partition(|&i| meta.sessions[i] == first)
}

fn chronological(meta: &ArchiveMeta, subject: u16) -> (Vec<usize>, Vec<usize>) {
    let all = meta.trials_of(subject, None);
    let n = all.len();
    let cut = if n < 2 {
        n
    } else {
        ((n as f64 * CHRONO_TRAIN_FRACTION).round() as usize).clamp(1, n - 1)
    };
    (all[..cut].to_vec(), all[cut..].to_vec())
}

/// Groups of held-out subjects for the cross-subject schemes.
fn subject_groups(subjects: &[u16], scheme: Scheme, seed: u64) -> Result<Vec<Vec<u16>>> {
    match scheme {
        Scheme::Loso => {
            if subjects.len() < 2 {
                return Err(Error::Paradigm(
                    "leave-one-subject-out needs at least 2 subjects".into(),
                ));
            }
            Ok(subjects.iter().map(|&s| vec![s]).collect())
        }
        Scheme::Lmso(k) => {
            if k < 2 || k > subjects.len() {
                return Err(Error::Paradigm(format!(
                    "{k}-fold leave-multiple-subjects-out needs between 2 and {} folds",
                    subjects.len()
                )));
            }
            let mut order = subjects.to_vec();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let base = order.len() / k;
            let extra = order.len() % k;
            let mut groups = Vec::with_capacity(k);
            let mut at = 0;
            for g in 0..k {
                let size = base + usize::from(g < extra);
                let mut group = order[at..at + size].to_vec();
                group.sort_unstable();
                groups.push(group);
                at += size;
            }
            Ok(groups)
        }
        Scheme::SessionSplit => Err(Error::Paradigm(
            "cross-subject paradigms need loso or lmso, not a session split".into(),
        )),
    }
}

/// Build the folds of `paradigm` over the archive's subjects.
///
/// W-S always splits each subject by session (first session trains, later
/// sessions test) and ignores `scheme`; single-session subjects fall back to
/// an 80/20 chronological split. C-S F-T and MDL need every subject to have at
/// least two sessions.
pub fn make_splits(meta: &ArchiveMeta, paradigm: Paradigm, scheme: Scheme, seed: u64) -> Result<SplitPlan> {
    let subjects = meta.subject_ids();
    if subjects.is_empty() {
        return Err(Error::Empty("archive has no trials to split".into()));
    }
    let mut notes = Vec::new();
    let mut folds = Vec::new();
    match paradigm {
        Paradigm::WS => {
            for (index, &s) in subjects.iter().enumerate() {
                let multi = meta.session_ids(s).len() >= 2;
                if !multi && meta.trials_of(s, None).len() < 2 {
                    return Err(Error::Paradigm(format!(
                        "within-subject split needs two or more trials per single-session subject; subject {s} has one"
                    )));
                }
                let (train, test) = if multi {
                    first_and_rest(meta, s)
                } else {
                    chronological(meta, s)
                };
                if !multi {
                    notes.push(format!(
                        "subject {s}: single session, chronological {:.0}/{:.0} split",
                        CHRONO_TRAIN_FRACTION * 100.0,
                        (1.0 - CHRONO_TRAIN_FRACTION) * 100.0
                    ));
                }
                folds.push(Fold {
                    index,
                    // Online W-S fits its statistics on the training session.
                    targets: vec![Target {
                        subject: s,
                        calibration: train.clone(),
                        test,
                    }],
                    train,
                    chronological: !multi,
                });
            }
        }
        Paradigm::CS | Paradigm::CSFT | Paradigm::MDL => {
            if paradigm != Paradigm::CS {
                if let Some(&s) = subjects.iter().find(|&&s| meta.session_ids(s).len() < 2) {
                    return Err(Error::Paradigm(format!(
                        "{paradigm} needs two or more sessions per subject (calibration on the first, \
                         test on the rest); subject {s} has one"
                    )));
                }
            }
            for (index, group) in subject_groups(&subjects, scheme, seed)?.into_iter().enumerate() {
                let held: BTreeSet<u16> = group.iter().copied().collect();
                let mut train: Vec<usize> = (0..meta.n_trials())
                    .filter(|&i| !held.contains(&meta.subjects[i]))
                    .collect();
                let mut targets = Vec::with_capacity(group.len());
                for &s in &group {
                    let target = match paradigm {
                        Paradigm::CS => Target {
                            subject: s,
                            calibration: Vec::new(),
                            test: meta.trials_of(s, None),
                        },
                        Paradigm::CSFT => {
                            let (calibration, test) = first_and_rest(meta, s);
                            Target {
                                subject: s,
                                calibration,
                                test,
                            }
                        }
                        _ => {
                            let (calibration, test) = first_and_rest(meta, s);
                            // MDL trains on the calibration session; it is kept
                            // here for the online statistics.
                            train.extend(calibration.iter().copied());
                            Target {
                                subject: s,
                                calibration,
                                test,
                            }
                        }
                    };
                    targets.push(target);
                }
                train.sort_unstable();
                folds.push(Fold {
                    index,
                    train,
                    targets,
                    chronological: false,
                });
            }
        }
    }
    Ok(SplitPlan {
        paradigm,
        scheme: if paradigm == Paradigm::WS { Scheme::SessionSplit } else { scheme },
        folds,
        n_runs: 5,
        notes,
    })
}

impl SplitPlan {
    pub fn with_runs(mut self, n_runs: usize) -> Self {
        self.n_runs = n_runs;
        self
    }

    /// Check the disjointness and coverage invariants against `meta`.
    pub fn validate(&self, meta: &ArchiveMeta) -> Result<()> {
        let fail = |msg: String| Err(Error::Paradigm(msg));
        let n = meta.n_trials();
        let subjects = meta.subject_ids();
        for fold in &self.folds {
            let train: BTreeSet<usize> = fold.train.iter().copied().collect();
            let cal: BTreeSet<usize> = fold.calibration_trials().into_iter().collect();
            let test: BTreeSet<usize> = fold.test_trials().into_iter().collect();
            if train.len() != fold.train.len() || test.len() != fold.test_trials().len() {
                return fail(format!("fold {}: duplicate trial ids", fold.index));
            }
            if train.iter().chain(&cal).chain(&test).any(|&i| i >= n) {
                return fail(format!("fold {}: trial id out of range", fold.index));
            }
            let ws = self.paradigm == Paradigm::WS;
            // W-S and MDL calibrate on trials they also train on.
            let shared_cal = ws || self.paradigm == Paradigm::MDL;
            if !train.is_disjoint(&test) || !cal.is_disjoint(&test) || (!shared_cal && !train.is_disjoint(&cal)) {
                return fail(format!("fold {}: train, calibration and test overlap", fold.index));
            }
            if test.is_empty() {
                return fail(format!("fold {}: empty test set", fold.index));
            }
            if !ws {
                let held: BTreeSet<u16> = fold.test_subjects().into_iter().collect();
                for &i in &train {
                    let s = meta.subjects[i];
                    if held.contains(&s) {
                        // Only MDL may train on the held-out subject, and only on its first session.
                        let first = meta.session_ids(s)[0];
                        if self.paradigm != Paradigm::MDL || meta.sessions[i] != first {
                            return fail(format!(
                                "fold {}: held-out subject {s} trial {i} in the training set",
                                fold.index
                            ));
                        }
                    }
                }
            }
        }
        match self.paradigm {
            Paradigm::WS => {
                let seen: Vec<u16> = self.folds.iter().flat_map(|f| f.test_subjects()).collect();
                if seen != subjects {
                    return fail("within-subject folds do not cover each subject once".into());
                }
            }
            _ => {
                let mut seen: Vec<u16> = self.folds.iter().flat_map(|f| f.test_subjects()).collect();
                seen.sort_unstable();
                if seen != subjects {
                    return fail("held-out subjects are not a partition of the subject set".into());
                }
                if let Scheme::Lmso(k) = self.scheme {
                    if self.folds.len() != k {
                        return fail(format!("expected {k} folds, found {}", self.folds.len()));
                    }
                }
            }
        }
        Ok(())
    }
}
