use serde::{Deserialize, Serialize};

use crate::data::{Paradigm, TrialSource};
use crate::error::Result;

use super::pipeline::{PipelineConfig, StatsScope};
use super::report::EvalReport;
use super::runner::{run_paradigm, RunSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub pipeline: PipelineConfig,
    /// The row exists to test session-scope statistics and is meaningless on
    /// single-session data.
    pub session_toggle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub name: String,
    pub pipeline: PipelineConfig,
    pub report: Option<EvalReport>,
    pub skipped: Option<String>,
    /// Row mean minus the first row's mean.
    pub gain: Option<f64>,
}

fn row(name: &str, pipeline: PipelineConfig, session_toggle: bool) -> AblationRow {
    AblationRow {
        name: name.into(),
        pipeline,
        session_toggle,
    }
}

/// The one-ingredient-at-a-time rows, base first.
pub fn standard_rows(base: &PipelineConfig, paradigm: Paradigm) -> Vec<AblationRow> {
    let b = base.clone();
    let online = PipelineConfig {
        online_mode: true,
        // Cross-subject online has no data to align with.
        use_ea: b.use_ea && paradigm != Paradigm::CS,
        ..b.clone()
    };
    vec![
        row("Full", b.clone(), false),
        row("- BN", PipelineConfig { use_bn_trick: false, ..b.clone() }, false),
        row("- EA", PipelineConfig { use_ea: false, ..b.clone() }, false),
        row("- Session", PipelineConfig { stats_scope: StatsScope::Subject, ..b.clone() }, true),
        row("Online", online, false),
        row("- Mixup", PipelineConfig { use_mixup: false, ..b.clone() }, false),
        row("- Reg S", PipelineConfig { use_subject_reg: false, ..b.clone() }, false),
        row("- Everything", b.minus_everything(), false),
        row("+ EOG", PipelineConfig { include_eog: true, ..b }, false),
    ]
}

/// Full factorial over session scope, BN statistics, alignment and z-score
/// (16 rows, everything on first).
pub fn factorial_rows(base: &PipelineConfig) -> Vec<AblationRow> {
    let mut rows = Vec::with_capacity(16);
    for mask in 0u8..16 {
        let on = |bit: u8| mask & (1 << bit) == 0;
        let (session, bn, ea, z) = (on(3), on(2), on(1), on(0));
        let flag = |v: bool| if v { "+" } else { "-" };
        let name = format!("Session{} BN{} EA{} Z0{}", flag(session), flag(bn), flag(ea), flag(z));
        let pipeline = PipelineConfig {
            stats_scope: if session { StatsScope::Session } else { StatsScope::Subject },
            use_bn_trick: bn,
            use_ea: ea,
            use_zscore: z,
            ..base.clone()
        };
        rows.push(row(&name, pipeline, session));
    }
    rows
}

/// Evaluate each row with the same spec, splits and seeds.
///
/// On single-session archives, rows that exist to test session scope are
/// skipped; other rows fall back to subject scope.
pub fn run_ablation(source: &dyn TrialSource, spec: &RunSpec, rows: &[AblationRow]) -> Result<Vec<AblationEntry>> {
    let multi = source.meta().is_multi_session();
    let mut out: Vec<AblationEntry> = Vec::with_capacity(rows.len());
    let mut base_mean = None;
    for (k, r) in rows.iter().enumerate() {
        let mut pipeline = r.pipeline.clone();
        if !multi {
            if r.session_toggle {
                out.push(AblationEntry {
                    name: r.name.clone(),
                    pipeline,
                    report: None,
                    skipped: Some("session-scope statistics need two or more sessions per subject".into()),
                    gain: None,
                });
                continue;
            }
            pipeline.stats_scope = StatsScope::Subject;
        }
        let row_spec = RunSpec {
            pipeline: pipeline.clone(),
            ..spec.clone()
        };
        let report = run_paradigm(source, &row_spec)?;
        let mean = report.primary().map(|s| s.mean);
        if k == 0 {
            base_mean = mean;
        }
        let gain = match (mean, base_mean) {
            (Some(m), Some(b)) => Some(m - b),
            _ => None,
        };
        out.push(AblationEntry {
            name: r.name.clone(),
            pipeline,
            report: Some(report),
            skipped: None,
            gain,
        });
    }
    Ok(out)
}

/// Plain-text table: row, mean, std across subjects, gain.
pub fn ablation_table(entries: &[AblationEntry]) -> String {
    let mut s = format!("{:<28} {:>8} {:>8} {:>8}\n", "row", "mean", "std", "gain");
    for e in entries {
        match (&e.report, &e.skipped) {
            (Some(r), _) => {
                let p = r.primary();
                s.push_str(&format!(
                    "{:<28} {:>8.2} {:>8.2} {:>8.2}\n",
                    e.name,
                    p.map_or(f64::NAN, |p| p.mean),
                    p.map_or(f64::NAN, |p| p.std_subjects),
                    e.gain.unwrap_or(f64::NAN)
                ));
            }
            (None, reason) => {
                s.push_str(&format!("{:<28} {:>8} {:>8} {:>8}  ({})\n", e.name, "---", "---", "---", reason.as_deref().unwrap_or("")));
            }
        }
    }
    s
}
