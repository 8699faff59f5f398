//! Split invariants checked from scratch, random archive layouts, and the
//! leak sentinel.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use simpleconv::data::{
    check_streamed, make_splits, read_outside_predict, synth_generate, ArchiveMeta, AuditedSource, ChannelKind, Paradigm,
    Scheme, SplitPlan, SynthConfig, TrialArchive,
};
use simpleconv::evaluation::{run_paradigm, PipelineConfig, RunSpec};
use simpleconv::model::{ModelConfig, Preset};
use simpleconv::training::TrainConfig;

use super::rng;

/// Random subject ids, per-subject session counts (some single-session) and
/// trial counts, with the trial order shuffled.
pub fn random_archive(r: &mut impl Rng) -> TrialArchive {
    let n_subjects = r.gen_range(2..14);
    let mut ids: Vec<u16> = (1..200).collect();
    ids.shuffle(r);
    let single_ok = r.gen_bool(0.3);
    let mut rows = Vec::new();
    for &s in &ids[..n_subjects] {
        let sessions = if single_ok { r.gen_range(1..4) } else { r.gen_range(2..4) };
        for k in 0..sessions {
            for _ in 0..r.gen_range(1..7) {
                rows.push((s, 10 * k as u16 + r.gen_range(0..3), r.gen_range(0..3u16)));
            }
        }
    }
    if r.gen_bool(0.5) {
        rows.shuffle(r);
    }
    let n = rows.len();
    TrialArchive::new(
        1,
        2,
        100.0,
        vec!["a".into(), "b".into(), "c".into()],
        vec![ChannelKind::Eeg],
        rows.iter().map(|x| x.2).collect(),
        rows.iter().map(|x| x.0).collect(),
        rows.iter().map(|x| x.1).collect(),
        vec![0.0; 2 * n],
    )
    .unwrap()
}

fn set(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

fn of_subject(meta: &ArchiveMeta, s: u16) -> BTreeSet<usize> {
    (0..meta.n_trials()).filter(|&i| meta.subjects[i] == s).collect()
}

fn first_session(meta: &ArchiveMeta, s: u16) -> BTreeSet<usize> {
    let first = (0..meta.n_trials()).filter(|&i| meta.subjects[i] == s).map(|i| meta.sessions[i]).min().unwrap();
    (0..meta.n_trials()).filter(|&i| meta.subjects[i] == s && meta.sessions[i] == first).collect()
}

/// Every disjointness and coverage rule the plan breaks.
pub fn split_violations(meta: &ArchiveMeta, plan: &SplitPlan, scheme: Scheme) -> Vec<String> {
    let mut bad = Vec::new();
    let all: BTreeSet<u16> = meta.subjects.iter().copied().collect();
    let mut held_seen = Vec::new();
    for fold in &plan.folds {
        let train = set(&fold.train);
        if train.len() != fold.train.len() {
            bad.push(format!("fold {}: duplicate train ids", fold.index));
        }
        let held: BTreeSet<u16> = fold.targets.iter().map(|t| t.subject).collect();
        held_seen.extend(held.iter().copied());
        let rest: BTreeSet<usize> = (0..meta.n_trials()).filter(|i| !held.contains(&meta.subjects[*i])).collect();
        for t in &fold.targets {
            let cal = set(&t.calibration);
            let test = set(&t.test);
            if !test.is_disjoint(&train) || !test.is_disjoint(&cal) || test.is_empty() {
                bad.push(format!("fold {}: test overlaps or is empty", fold.index));
            }
            let mine = of_subject(meta, t.subject);
            match plan.paradigm {
                Paradigm::WS => {
                    let joined: BTreeSet<usize> = train.union(&test).copied().collect();
                    if joined != mine {
                        bad.push(format!("fold {}: within-subject sets do not cover subject {}", fold.index, t.subject));
                    }
                    let sessions: BTreeSet<u16> = mine.iter().map(|&i| meta.sessions[i]).collect();
                    if sessions.len() >= 2 && train != first_session(meta, t.subject) {
                        bad.push(format!("fold {}: training is not the first session", fold.index));
                    }
                }
                Paradigm::CS => {
                    if train != rest || test != mine || !cal.is_empty() {
                        bad.push(format!("fold {}: cross-subject sets wrong", fold.index));
                    }
                }
                Paradigm::CSFT | Paradigm::MDL => {
                    let first = first_session(meta, t.subject);
                    let later: BTreeSet<usize> = mine.difference(&first).copied().collect();
                    if cal != first || test != later {
                        bad.push(format!("fold {}: calibration/test are not first/later sessions", fold.index));
                    }
                    let want_train: BTreeSet<usize> = if plan.paradigm == Paradigm::MDL {
                        let mut w = rest.clone();
                        for tt in &fold.targets {
                            w.extend(first_session(meta, tt.subject));
                        }
                        w
                    } else {
                        rest.clone()
                    };
                    if train != want_train {
                        bad.push(format!("fold {}: training set wrong", fold.index));
                    }
                    if plan.paradigm == Paradigm::CSFT && !cal.is_disjoint(&train) {
                        bad.push(format!("fold {}: calibration in training", fold.index));
                    }
                }
            }
            // Id scan: nothing of the held-out subject outside its calibration trials.
            if plan.paradigm != Paradigm::WS && train.iter().any(|&i| mine.contains(&i) && !cal.contains(&i)) {
                bad.push(format!("fold {}: held-out subject {} in training", fold.index, t.subject));
            }
        }
    }
    let mut sorted = held_seen.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.iter().copied().collect::<BTreeSet<_>>() != all {
        bad.push("held-out subjects are not each used exactly once".into());
    }
    match (plan.paradigm, scheme) {
        (Paradigm::WS, _) => {}
        (_, Scheme::Loso) if plan.folds.iter().any(|f| f.targets.len() != 1) => bad.push("loso fold holds out several subjects".into()),
        (_, Scheme::Lmso(k)) => {
            if plan.folds.len() != k {
                bad.push(format!("{} folds, expected {k}", plan.folds.len()));
            }
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.targets.len()).collect();
            if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
                bad.push(format!("unbalanced groups {sizes:?}"));
            }
        }
        _ => {}
    }
    bad
}

/// Split every applicable (paradigm, scheme) of `archives` random archives and
/// collect the violations. Returns (plans checked, violations).
pub fn split_integrity(archives: usize, seed: u64) -> (usize, Vec<String>) {
    let mut r = rng(seed);
    let mut checked = 0;
    let mut bad = Vec::new();
    for a in 0..archives {
        let archive = random_archive(&mut r);
        let meta = archive.meta();
        let n_subj = meta.subject_ids().len();
        let mut schemes = vec![Scheme::Loso, Scheme::Lmso(r.gen_range(2..=n_subj))];
        if n_subj >= 10 {
            schemes.push(Scheme::Lmso(10));
        }
        for paradigm in [Paradigm::WS, Paradigm::CS, Paradigm::CSFT, Paradigm::MDL] {
            for &scheme in &schemes {
                let plan = match make_splits(meta, paradigm, scheme, r.gen()) {
                    Ok(p) => p,
                    Err(e) => {
                        let single = !meta.is_multi_session();
                        let lone = meta
                            .subject_ids()
                            .iter()
                            .any(|&s| meta.session_ids(s).len() == 1 && meta.trials_of(s, None).len() == 1);
                        let expected = (single && matches!(paradigm, Paradigm::CSFT | Paradigm::MDL))
                            || (lone && paradigm == Paradigm::WS);
                        if !expected {
                            bad.push(format!("archive {a}: {paradigm} {scheme:?} refused: {e}"));
                        }
                        continue;
                    }
                };
                if single_session_accepted(meta, paradigm) {
                    bad.push(format!("archive {a}: {paradigm} accepted single-session data"));
                }
                checked += 1;
                if let Err(e) = plan.validate(meta) {
                    bad.push(format!("archive {a}: validate: {e}"));
                }
                bad.extend(split_violations(meta, &plan, scheme).into_iter().map(|v| format!("archive {a} {paradigm} {scheme:?}: {v}")));
            }
        }
    }
    (checked, bad)
}

fn single_session_accepted(meta: &ArchiveMeta, paradigm: Paradigm) -> bool {
    !meta.is_multi_session() && matches!(paradigm, Paradigm::CSFT | Paradigm::MDL)
}

pub struct LeakCheck {
    pub case: String,
    pub violation: Option<String>,
}

/// Run first folds of small paradigms through an audited source and check
/// that held-out trials are only read for prediction, one at a time online.
pub fn leak_sentinel(seed: u64) -> Vec<LeakCheck> {
    let archive = synth_generate(&SynthConfig {
        n_subjects: 3,
        n_sessions: 2,
        trials_per_session: 8,
        n_channels: 4,
        fs: 70.0,
        duration_s: 1.0,
        n_classes: 2,
        seed,
        ..Default::default()
    })
    .unwrap();
    let model = ModelConfig { width: 2, depth: 1, kernel: 3, resample_hz: 70.0, ..ModelConfig::preset(Preset::Cross, 4, 2) };
    let train = TrainConfig { epochs: 1, decay_epoch: 1, batch_size: 8, finetune_epochs: 1, ..TrainConfig::default() };
    let cases = [
        (Paradigm::CS, false),
        (Paradigm::CS, true),
        (Paradigm::CSFT, false),
        (Paradigm::CSFT, true),
        (Paradigm::WS, true),
        (Paradigm::MDL, true),
    ];
    let mut out = Vec::new();
    for (paradigm, online) in cases {
        let mut pipeline = PipelineConfig { online_mode: online, ..PipelineConfig::default() };
        if online && paradigm == Paradigm::CS {
            pipeline.use_ea = false;
        }
        let spec = RunSpec {
            train: train.clone(),
            pipeline,
            n_runs: 1,
            seed,
            max_folds: Some(1),
            compare_offline: false,
            ..RunSpec::new(paradigm, model.clone())
        };
        let source = AuditedSource::new(&archive);
        let case = format!("{paradigm} {}", if online { "online" } else { "offline" });
        let violation = match run_paradigm(&source, &spec) {
            Err(e) => Some(format!("run failed: {e}")),
            Ok(_) => {
                let log = source.log();
                let plan = make_splits(archive.meta(), paradigm, spec.scheme, seed).unwrap();
                let test = plan.folds[0].test_trials();
                match read_outside_predict(&log, &test) {
                    Some(pos) => Some(format!("event {pos}: test trial read before prediction")),
                    None if online => check_streamed(&log, &test).err(),
                    None => None,
                }
            }
        };
        out.push(LeakCheck { case, violation });
    }
    out
}
