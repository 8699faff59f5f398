use std::fmt::Write as _;
use std::path::Path;

use simpleconv::bench::{measure_latency, size_latency_sweep, sweep_csv};
use simpleconv::data::{load_archive, synth_generate, Paradigm, Phase, Scheme, SynthConfig, TrialArchive};
use simpleconv::evaluation::{
    ablation_table, derive_seed, factorial_rows, run_ablation, run_paradigm, standard_rows, PipelineConfig, Prep,
    RunSpec, StatsScope,
};
use simpleconv::model::{Model, ModelConfig, Preset};
use simpleconv::training::{self, dataset_loss, TrainConfig};
use simpleconv::Tensor;

use crate::config::write_snapshot;
use crate::{
    AblateArgs, BenchArgs, CliError, EmbedArgs, ErrorKind, EvalArgs, ModelArgs, OptimArgs, ParamsArgs, PipelineArgs,
    SynthArgs, TrainArgs,
};

type Res<T = ()> = Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::new(ErrorKind::Config, msg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Res {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn model_config(m: &ModelArgs, default: Preset, in_channels: usize, n_classes: usize) -> Res<ModelConfig> {
    let preset = match &m.preset {
        Some(p) => p.parse::<Preset>()?,
        None => default,
    };
    let mut cfg = ModelConfig::preset(preset, in_channels, n_classes);
    if let Some(w) = m.width {
        cfg.width = w;
    }
    if let Some(k) = m.depth {
        cfg.depth = k;
    }
    if let Some(s) = m.kernel {
        cfg.kernel = s;
    }
    if let Some(hz) = m.resample_hz {
        cfg.resample_hz = hz;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pipeline_config(p: &PipelineArgs) -> Res<PipelineConfig> {
    let stats_scope = match p.scope.as_str() {
        "subject" => StatsScope::Subject,
        "session" => StatsScope::Session,
        other => return Err(config_err(format!("unknown scope {other:?} (expected subject or session)"))),
    };
    if !(p.highpass_hz >= 0.0) {
        return Err(config_err("highpass-hz must be non-negative"));
    }
    Ok(PipelineConfig {
        use_ea: !p.no_ea,
        use_zscore: !p.no_zscore,
        stats_scope,
        use_bn_trick: !p.no_bn_trick,
        use_mixup: !p.no_mixup,
        use_subject_reg: !p.no_subject_reg,
        include_eog: p.eog,
        online_mode: p.online,
        highpass_hz: (p.highpass_hz > 0.0).then_some(p.highpass_hz),
    })
}

fn train_config(o: &OptimArgs) -> Res<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(e) = o.epochs {
        cfg.epochs = e;
        // Keep the decay inside a shortened schedule unless told otherwise.
        cfg.decay_epoch = cfg.decay_epoch.min(e * 4 / 5);
    }
    if let Some(d) = o.decay_epoch {
        cfg.decay_epoch = d;
    }
    if let Some(lr) = o.lr {
        cfg.base_lr = lr;
    }
    if let Some(b) = o.batch {
        cfg.batch_size = b;
    }
    if let Some(f) = o.finetune_epochs {
        cfg.finetune_epochs = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_preset(paradigm: Paradigm) -> Preset {
    if paradigm == Paradigm::WS {
        Preset::Within
    } else {
        Preset::Cross
    }
}

pub fn synth(a: &SynthArgs) -> Res {
    let cfg = SynthConfig {
        n_subjects: a.subjects,
        n_sessions: a.sessions,
        trials_per_session: a.trials,
        n_channels: a.channels,
        fs: a.fs,
        duration_s: a.duration,
        n_classes: a.classes,
        seed: a.common.seed,
        noise_level: a.noise,
        n_eog: a.eog_channels,
        gain_spread: a.gain_spread,
    };
    let archive = synth_generate(&cfg)?;
    let path = a.common.out.join("synth.esc1");
    std::fs::create_dir_all(&a.common.out).map_err(|e| CliError::io(&a.common.out, e))?;
    let provenance = vec![
        ("generator", "synthetic".to_string()),
        ("seed", cfg.seed.to_string()),
        ("noise_level", cfg.noise_level.to_string()),
        ("gain_spread", cfg.gain_spread.to_string()),
    ];
    archive.save(&path, &provenance)?;
    write_snapshot(&a.common.out, "synth", a)?;
    println!("synth trials={} path={}", archive.n_trials(), path.display());
    Ok(())
}

fn parse_subjects(list: &str) -> Res<Vec<u16>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<u16>()
                .map_err(|_| CliError::new(ErrorKind::Usage, format!("bad subject id {s:?}")))
        })
        .collect()
}

pub fn train(a: &TrainArgs) -> Res {
    let archive = load_archive(&a.data)?;
    let meta = archive.meta();
    let ids: Vec<usize> = match &a.subjects {
        None => (0..meta.n_trials()).collect(),
        Some(list) => {
            let wanted = parse_subjects(list)?;
            (0..meta.n_trials()).filter(|&i| wanted.contains(&meta.subjects[i])).collect()
        }
    };
    if ids.is_empty() {
        return Err(config_err("no trials selected for training"));
    }
    let pipeline = pipeline_config(&a.pipeline)?;
    let mut tcfg = train_config(&a.optim)?;
    let base = model_config(&a.model, Preset::Cross, 1, meta.n_classes())?;
    let prep = Prep::new(meta, &pipeline, base.resample_hz);
    let data = prep.train_data(&archive, &ids, Phase::Train)?;
    let cfg = ModelConfig {
        in_channels: prep.n_channels(),
        n_subjects: if pipeline.use_subject_reg && data.n_subjects >= 2 { data.n_subjects } else { 0 },
        ..base
    };
    tcfg.seed = derive_seed(a.common.seed, 0, 0, 1);
    if !pipeline.use_mixup {
        tcfg.mixup_alpha = 0.0;
    }
    if !pipeline.use_subject_reg {
        tcfg.subject_loss_weight = 0.0;
    }
    let model = Model::build(cfg, derive_seed(a.common.seed, 0, 0, 0))?;
    let outcome = training::train(model, &data, &tcfg)?;
    let (loss, acc) = dataset_loss(&outcome.model, &data)?;
    let ckpt = a.common.out.join("model.escm");
    std::fs::create_dir_all(&a.common.out).map_err(|e| CliError::io(&a.common.out, e))?;
    outcome.model.save(&ckpt)?;
    let history = serde_json::to_string_pretty(&outcome.history).map_err(simpleconv::Error::from)?;
    write(&a.common.out.join("train_history.json"), history)?;
    write_snapshot(&a.common.out, "train", a)?;
    println!(
        "train trials={} params={} loss={loss:.4} accuracy={acc:.2} checkpoint={}",
        data.len(),
        outcome.model.count_params(),
        ckpt.display()
    );
    Ok(())
}

fn run_spec(a: &EvalArgs, archive: &TrialArchive) -> Res<RunSpec> {
    let paradigm: Paradigm = a.paradigm.parse()?;
    let scheme: Scheme = a.scheme.parse()?;
    let model = model_config(&a.model, default_preset(paradigm), 1, archive.meta().n_classes())?;
    let mut spec = RunSpec::new(paradigm, model);
    spec.scheme = scheme;
    spec.train = train_config(&a.optim)?;
    spec.pipeline = pipeline_config(&a.pipeline)?;
    spec.n_runs = a.runs;
    spec.seed = a.common.seed;
    spec.jobs = a.jobs;
    spec.compare_offline = !a.online_only;
    spec.max_folds = a.max_folds;
    Ok(spec)
}

fn summary_line(label: &str, s: Option<&simpleconv::evaluation::Summary>) -> String {
    match s {
        Some(s) => format!("{label} mean={:.2} std={:.2} std_sample={:.2}\n", s.mean, s.std_subjects, s.std_subjects_sample),
        None => String::new(),
    }
}

pub fn eval(a: &EvalArgs) -> Res {
    let archive = load_archive(&a.data)?;
    let spec = run_spec(a, &archive)?;
    let report = run_paradigm(&archive, &spec)?;
    report.write(&a.common.out, "report")?;
    write_snapshot(&a.common.out, "eval", a)?;
    let mut out = format!("eval paradigm={} scheme={} runs={}\n", report.paradigm, report.scheme, spec.n_runs);
    out += &summary_line("offline", report.offline.as_ref());
    out += &summary_line("offline_later_sessions", report.offline_later_sessions.as_ref());
    out += &summary_line("online", report.online.as_ref());
    out += &summary_line("before_finetune", report.before_finetune.as_ref());
    print!("{out}");
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Res {
    let archive = load_archive(&a.eval.data)?;
    let spec = run_spec(&a.eval, &archive)?;
    let rows = match a.rows.as_str() {
        "standard" => standard_rows(&spec.pipeline, spec.paradigm),
        "factorial" => factorial_rows(&spec.pipeline),
        other => return Err(config_err(format!("unknown row set {other:?} (expected standard or factorial)"))),
    };
    let entries = run_ablation(&archive, &spec, &rows)?;
    let table = ablation_table(&entries);
    let json = serde_json::to_string_pretty(&entries).map_err(simpleconv::Error::from)?;
    write(&a.eval.common.out.join("ablation.json"), json)?;
    write(&a.eval.common.out.join("ablation.txt"), &table)?;
    write_snapshot(&a.eval.common.out, "ablate", a)?;
    print!("{table}");
    Ok(())
}

fn bench_trials(n: usize, channels: usize, fs: f64, duration: f64, seed: u64) -> Res<Tensor<f32>> {
    let archive = synth_generate(&SynthConfig {
        n_subjects: 1,
        n_sessions: 1,
        trials_per_session: n,
        n_channels: channels,
        fs,
        duration_s: duration,
        n_classes: 1,
        seed,
        ..SynthConfig::default()
    })?;
    Ok(Tensor::from_vec(
        &[n, channels, archive.n_samples()],
        archive.data().to_vec(),
    )?)
}

pub fn bench(a: &BenchArgs) -> Res {
    if a.trials == 0 {
        return Err(CliError::new(ErrorKind::Usage, "bench needs at least one trial"));
    }
    let model = match &a.checkpoint {
        Some(p) => Model::<f32>::load(p)?,
        None => Model::build(model_config(&a.model, Preset::Cross, a.channels, a.classes)?, a.common.seed)?,
    };
    let cfg = model.config().clone();
    let trials = bench_trials(a.trials, cfg.in_channels, cfg.resample_hz, a.duration, a.common.seed)?;
    let report = measure_latency(&model, &trials, a.repeats, a.warmup)?;
    std::fs::create_dir_all(&a.common.out).map_err(|e| CliError::io(&a.common.out, e))?;
    let json = serde_json::to_string_pretty(&report).map_err(simpleconv::Error::from)?;
    write(&a.common.out.join("latency.json"), &json)?;
    if let Some(path) = &a.report {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::new(ErrorKind::Format, format!("{}: {e}", path.display())))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::new(ErrorKind::Format, format!("{}: not a JSON object", path.display())))?;
        obj.insert("latency".into(), serde_json::to_value(&report).map_err(simpleconv::Error::from)?);
        write(path, serde_json::to_string_pretty(&value).map_err(simpleconv::Error::from)?)?;
    }
    let mut out = format!(
        "bench model={} params={} passes={} mean_s={:.3e} median_s={:.3e} p95_s={:.3e}\n",
        report.tag, report.params, report.n_passes, report.mean_s, report.median_s, report.p95_s
    );
    if let Some(widths) = &a.sweep {
        let configs = widths
            .split(',')
            .map(|w| {
                let width = w
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::new(ErrorKind::Usage, format!("bad sweep width {w:?}")))?;
                Ok(ModelConfig { width, ..cfg.clone() })
            })
            .collect::<Res<Vec<_>>>()?;
        let rows = size_latency_sweep(&configs, &trials, a.repeats, a.warmup, a.common.seed)?;
        let csv = sweep_csv(&rows);
        write(&a.common.out.join("sweep.csv"), &csv)?;
        out += &csv;
    }
    write_snapshot(&a.common.out, "bench", a)?;
    print!("{out}");
    Ok(())
}

pub fn params(a: &ParamsArgs) -> Res {
    let mut cfg = model_config(&a.model, Preset::Cross, a.channels, a.classes)?;
    cfg.n_subjects = a.subject_head;
    let model = Model::<f32>::build(cfg, 0)?;
    println!("{}", model.count_params());
    Ok(())
}

pub fn embed(a: &EmbedArgs) -> Res {
    let archive = load_archive(&a.data)?;
    let model = Model::<f32>::load(&a.checkpoint)?;
    let pipeline = pipeline_config(&a.pipeline)?;
    let meta = archive.meta();
    let prep = Prep::new(meta, &pipeline, model.config().resample_hz);
    if prep.n_channels() != model.config().in_channels {
        return Err(config_err(format!(
            "checkpoint expects {} channels, archive provides {}",
            model.config().in_channels,
            prep.n_channels()
        )));
    }
    let ids: Vec<usize> = (0..meta.n_trials()).collect();
    let data = prep.train_data(&archive, &ids, Phase::Predict)?;
    let features = model.extract_embeddings(&data.all()?, 64)?;
    let (n, f) = features.dims2()?;
    let mut csv = String::from("trial,subject,session,label");
    for k in 0..f {
        let _ = write!(csv, ",f{k}");
    }
    csv.push('\n');
    for i in 0..n {
        let _ = write!(csv, "{i},{},{},{}", meta.subjects[i], meta.sessions[i], meta.labels[i]);
        for v in &features.data()[i * f..(i + 1) * f] {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    let path = a.common.out.join("embeddings.csv");
    write(&path, csv)?;
    write_snapshot(&a.common.out, "embed", a)?;
    println!("embed trials={n} dims={f} path={}", path.display());
    Ok(())
}
