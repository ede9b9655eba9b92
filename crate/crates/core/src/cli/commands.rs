use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, Command, EngineData, RunConfig};
use crate::data::{self, observational, read_bundle, write_bundle, Counts, DatasetBundle, LabelRule, Split};
use crate::detect::{calibrate_threshold, detect, detection_metrics, Detector, DetectorConfig};
use crate::engine::{train_engine, EngineConfig, GraphVae};
use crate::eval::{aggregate, case_report, default_values, run_sweep, spearman, write_reports, CaseRow, NormBasis, RecourseSetup, SweepParam};
use crate::recourse::{write_log, ActionPolicy, Baseline, CfModel, EngineChoice, RecourseConfig};
use crate::rng;
use crate::scm::{self, Scm, ScmDoc};

const DATA_DIR: &str = "data";
const META_FILE: &str = "dataset.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scm: Option<ScmDoc>,
}

fn model_for(dataset: &str, doc: Option<&ScmDoc>) -> Result<(Scm, LabelRule), CliError> {
    if let Some(doc) = doc {
        let scm = doc.build()?;
        let label = doc.label.as_ref().ok_or_else(|| CliError::Validation("custom SCM needs a \"label\" section".into()))?;
        return Ok((scm, LabelRule::from_doc(label, &doc.names())?));
    }
    let scm = scm::builtin(dataset).ok_or_else(|| CliError::BadArgument(format!("unknown dataset {dataset}")))?;
    Ok((scm, LabelRule::for_dataset(dataset).expect("built-in rule")))
}

fn read_scm_doc(path: &Path) -> Result<ScmDoc, CliError> {
    if !path.exists() {
        return Err(CliError::Missing(format!("SCM file {}", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(ScmDoc::from_json(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in losses.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    match path.exists() {
        true => Ok(()),
        false => Err(CliError::Missing(format!("{what} {} (run the command that produces it first)", path.display()))),
    }
}

/// Loaded dataset and derived settings for one run directory.
pub struct Context {
    pub config: RunConfig,
    pub scm: Scm,
    pub rule: LabelRule,
    pub bundle: DatasetBundle,
    /// Actionable indices in topological order.
    pub actionable: Vec<usize>,
}

impl Context {
    pub fn load(config: &RunConfig) -> Result<Self, CliError> {
        let dir = config.out.join(DATA_DIR);
        let meta_path = dir.join(META_FILE);
        require(&meta_path, "dataset")?;
        let text = std::fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", meta_path.display())))?;
        if meta.dataset != config.dataset {
            return Err(CliError::Validation(format!("{} holds the {} dataset, not {}", dir.display(), meta.dataset, config.dataset)));
        }
        let (scm, rule) = model_for(&meta.dataset, meta.scm.as_ref())?;
        let names = scm.graph().names().to_vec();
        let (bundle, _) = read_bundle(&dir, &names)?;
        let actionable = actionable_indices(&scm, &bundle, config)?;
        Ok(Self { config: config.clone(), scm, rule, bundle, actionable })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    pub fn detector_path(&self) -> PathBuf {
        self.path(&format!("detector-{}.json", self.config.detector.name()))
    }

    pub fn engine_path(&self) -> PathBuf {
        self.path("engine.json")
    }

    /// Artifact stem for a policy: `<detector>-<baseline>-<engine>`.
    pub fn tag(&self, baseline: Baseline) -> String {
        let b = match baseline {
            Baseline::Adcar => "adcar",
            Baseline::Naive => "naive",
        };
        let e = match self.config.engine {
            EngineChoice::Learned => "learned",
            EngineChoice::Exact => "exact",
        };
        format!("{}-{b}-{e}", self.config.detector.name())
    }

    pub fn policy_path(&self, baseline: Baseline) -> PathBuf {
        self.path(&format!("policy-{}.json", self.tag(baseline)))
    }

    pub fn load_detector(&self) -> Result<(Detector, f64), CliError> {
        let path = self.detector_path();
        require(&path, "detector checkpoint")?;
        let (det, tau) = Detector::load(&path)?;
        let (tau, _) = tau.ok_or_else(|| CliError::Validation(format!("{} has no calibrated threshold", path.display())))?;
        Ok((det, tau))
    }

    /// The learned engine when the configuration needs it.
    pub fn load_engine(&self, baseline: Baseline) -> Result<Option<GraphVae>, CliError> {
        if baseline == Baseline::Naive || self.config.engine == EngineChoice::Exact {
            return Ok(None);
        }
        let path = self.engine_path();
        require(&path, "engine checkpoint")?;
        Ok(Some(GraphVae::load(&path, self.scm.graph())?))
    }

    /// Unlabeled rows flagged by the detector.
    pub fn detected(&self, det: &Detector, tau: f64) -> Result<Split, CliError> {
        let hits = detect(&det.scores(&self.bundle.unlabeled.x)?, tau);
        if hits.is_empty() {
            return Err(CliError::Validation("the detector flags no unlabeled rows".into()));
        }
        Ok(self.bundle.unlabeled.select(&hits))
    }

    pub fn setup<'a>(&'a self, det: &'a Detector, tau: f64, engine: Option<&'a GraphVae>, rows: &'a Split) -> RecourseSetup<'a> {
        RecourseSetup {
            scm: &self.scm,
            rule: &self.rule,
            detector: det,
            tau,
            engine,
            rows,
            actionable: &self.actionable,
            mean: &self.bundle.mean,
            std: &self.bundle.std,
            norm_basis: NormBasis::GroundTruth,
        }
    }

    pub fn recourse_config(&self, seed: u64, baseline: Baseline) -> RecourseConfig {
        RecourseConfig { baseline, ..self.config.recourse(seed) }
    }
}

fn default_actionable(dataset: &str, names: &[String]) -> Vec<String> {
    let pick: &[&str] = match dataset {
        "loan" => &["L", "D", "I", "S"],
        "adult" => &["A", "E", "H"],
        _ => return names.to_vec(),
    };
    pick.iter().map(|s| s.to_string()).collect()
}

fn actionable_indices(scm: &Scm, bundle: &DatasetBundle, config: &RunConfig) -> Result<Vec<usize>, CliError> {
    let names = config.actionable.clone().unwrap_or_else(|| default_actionable(&config.dataset, &bundle.names));
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut idx = bundle.indices(&refs).map_err(|e| CliError::BadArgument(e.to_string()))?;
    let rank = scm.graph().topo_rank();
    idx.sort_by_key(|&i| rank[i]);
    idx.dedup();
    if idx.is_empty() {
        return Err(CliError::BadArgument("the actionable set is empty".into()));
    }
    Ok(idx)
}

/// Runs one command against a resolved configuration.
pub fn run(command: &Command, config: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Generate => generate(config),
        Command::TrainDetector => train_detector(&Context::load(config)?),
        Command::TrainEngine => train_engine_cmd(&Context::load(config)?),
        Command::TrainRecourse => train_recourse(&Context::load(config)?),
        Command::Evaluate => evaluate(&Context::load(config)?),
        Command::Sweep { param, values } => sweep(&Context::load(config)?, *param, values.as_deref()),
        Command::Explain { index } => explain(&Context::load(config)?, *index),
    }?;
    config.echo(command.name())?;
    Ok(())
}

fn generate(config: &RunConfig) -> Result<(), CliError> {
    let doc = match config.dataset.as_str() {
        "custom" => Some(read_scm_doc(config.scm.as_ref().expect("validated"))?),
        _ => None,
    };
    let (scm, rule) = model_for(&config.dataset, doc.as_ref())?;
    let [a, b, c] = config.counts;
    let (bundle, report) = data::generate(&scm, &rule, Counts::new(a, b, c), config.seed)?;
    let dir = config.out.join(DATA_DIR);
    write_bundle(&bundle, &dir, rule.value_name())?;
    write_json(&dir.join(META_FILE), &DatasetMeta { dataset: config.dataset.clone(), scm: doc })?;
    println!(
        "{}: {} training rows, {} unlabeled ({} anomalous) from {} draws -> {}",
        config.dataset,
        bundle.train.len(),
        bundle.unlabeled.len(),
        bundle.unlabeled.anomalies(),
        report.draws,
        dir.display()
    );
    Ok(())
}

fn train_detector(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let mut dcfg = DetectorConfig::for_kind(c.detector, rng::sub_seed(c.seed, "detector"));
    if let Some(e) = c.detector_epochs {
        dcfg.epochs = e;
    }
    let (det, report) = Detector::train(&ctx.bundle.train.x, &ctx.bundle.mean, &ctx.bundle.std, &dcfg)?;
    let tau = calibrate_threshold(&det.scores(&ctx.bundle.train.x)?, c.tau_level)?;
    det.save(&ctx.detector_path(), Some((tau, c.tau_level)))?;
    write_losses(&ctx.path(&format!("detector-{}-log.csv", c.detector.name())), &report.epoch_loss)?;
    let m = detection_metrics(&det.scores(&ctx.bundle.unlabeled.x)?, &ctx.bundle.unlabeled.labels, tau)?;
    write_json(&ctx.path(&format!("detection-{}.json", c.detector.name())), &m)?;
    println!("{}: tau {:.6} at level {}, f1 {:.4}, auroc {:.4}, auprc {:.4}, {} detected", c.detector.name(), tau, c.tau_level, m.f1, m.auroc, m.auprc, m.n_detected);
    Ok(())
}

fn train_engine_cmd(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let x = match c.engine_data {
        EngineData::Observational => observational(&ctx.scm, c.counts[0], rng::sub_seed(c.seed, "engine-data"))?.x,
        EngineData::Train => ctx.bundle.train.x.clone(),
    };
    let mut ecfg = EngineConfig { seed: rng::sub_seed(c.seed, "engine"), ..EngineConfig::default() };
    if let Some(e) = c.engine_epochs {
        ecfg.epochs = e;
    }
    let (engine, report) = train_engine(&x, ctx.scm.graph(), &ctx.bundle.mean, &ctx.bundle.std, &ecfg)?;
    engine.save(&ctx.engine_path())?;
    write_losses(&ctx.path("engine-log.csv"), &report.epoch_loss)?;
    println!("engine: {} rows, final loss {:.4}", x.nrows(), report.epoch_loss.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn train_recourse(ctx: &Context) -> Result<(), CliError> {
    let baseline = ctx.config.baseline;
    let (det, tau) = ctx.load_detector()?;
    let engine = ctx.load_engine(baseline)?;
    let rows = ctx.detected(&det, tau)?;
    let setup = ctx.setup(&det, tau, engine.as_ref(), &rows);
    let (policy, log) = setup.train(&ctx.recourse_config(ctx.config.seed, baseline))?;
    policy.save(&ctx.policy_path(baseline))?;
    let log_path = ctx.path(&format!("policy-{}-log.csv", ctx.tag(baseline)));
    write_log(&log_path, &log).map_err(|e| CliError::io(&log_path, e))?;
    if let Some(last) = log.last() {
        println!(
            "{}: {} rows, final mean loss {:.6} (hinge {:.6}, cost {:.6})",
            ctx.tag(baseline),
            rows.len(),
            last.mean_loss,
            last.mean_hinge,
            last.mean_cost
        );
    }
    Ok(())
}

fn evaluate(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let (det, tau) = ctx.load_detector()?;
    let m = detection_metrics(&det.scores(&ctx.bundle.unlabeled.x)?, &ctx.bundle.unlabeled.labels, tau)?;
    write_json(&ctx.path(&format!("detection-{}.json", c.detector.name())), &m)?;
    println!("detection: f1 {:.4}  auroc {:.4}  auprc {:.4}  detected {}", m.f1, m.auroc, m.auprc, m.n_detected);

    let engine = ctx.load_engine(c.baseline)?;
    let rows = ctx.detected(&det, tau)?;
    let setup = ctx.setup(&det, tau, engine.as_ref(), &rows);
    let mut reports = Vec::new();
    if c.seeds == 1 {
        let path = ctx.policy_path(c.baseline);
        require(&path, "policy checkpoint")?;
        let policy = ActionPolicy::load(&path)?;
        let (_, r) = setup.report(&policy, &ctx.recourse_config(c.seed, c.baseline))?;
        reports.push((format!("seed={}", c.seed), r));
    } else {
        for s in c.seed..c.seed + c.seeds as u64 {
            let run = setup.run(&ctx.recourse_config(s, c.baseline))?;
            reports.push((format!("seed={s}"), run.report));
        }
    }
    for (label, r) in &reports {
        println!(
            "{label}: Yhat {:.4}  Y {:.4} (of {})  norm {}",
            r.flip_ratio_detector,
            r.flip_ratio_ground_truth,
            r.n_true,
            r.norm_mean.map(|n| format!("{n:.4} ± {:.4}", r.norm_std.unwrap_or(0.0))).unwrap_or_else(|| "undefined".into())
        );
    }
    let tag = ctx.tag(c.baseline);
    write_reports(&ctx.path(&format!("report-{tag}.csv")), &reports)?;
    let summary = aggregate(&reports.iter().map(|r| r.1).collect::<Vec<_>>());
    write_json(&ctx.path(&format!("report-{tag}-summary.json")), &summary)?;
    Ok(())
}

fn sweep(ctx: &Context, param: SweepParam, values: Option<&[f64]>) -> Result<(), CliError> {
    let c = &ctx.config;
    let values = values.map(<[f64]>::to_vec).unwrap_or_else(|| default_values(param, c.detector));
    let (det, tau) = ctx.load_detector()?;
    let engine = ctx.load_engine(c.baseline)?;
    let rows = ctx.detected(&det, tau)?;
    let setup = ctx.setup(&det, tau, engine.as_ref(), &rows);
    let grid = run_sweep(&setup, param, &values, &ctx.recourse_config(c.seed, c.baseline))?;
    grid.write_csv(&ctx.path(&format!("sweep-{param}-{}.csv", ctx.tag(c.baseline))))?;
    for p in &grid.points {
        match &p.result {
            Ok(r) => println!(
                "{param}={}: Yhat {:.4}  Y {:.4}  norm {}",
                p.value,
                r.flip_ratio_detector,
                r.flip_ratio_ground_truth,
                r.norm_mean.map(|n| format!("{n:.4}")).unwrap_or_else(|| "undefined".into())
            ),
            Err(e) => println!("{param}={}: failed: {e}", p.value),
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = grid.ok().filter_map(|(v, r)| r.norm_mean.map(|n| (v, n))).unzip();
    if let Some(rho) = spearman(&xs, &ys) {
        println!("spearman({param}, norm) = {rho:.4}");
    }
    Ok(())
}

fn explain(ctx: &Context, index: usize) -> Result<(), CliError> {
    let c = &ctx.config;
    let (det, tau) = ctx.load_detector()?;
    let rows = ctx.detected(&det, tau)?;
    if index >= rows.len() {
        return Err(CliError::BadArgument(format!("--index {index} out of range: {} detected rows", rows.len())));
    }
    let one = rows.select(&[index]);
    let x = one.x.row(0).to_vec();
    let u = crate::scm::ExogenousRecord(one.u.row(0).to_vec());
    let mut table = vec![CaseRow::point("", "x", &x, &ctx.rule)];
    let other = if c.baseline == Baseline::Adcar { Baseline::Naive } else { Baseline::Adcar };
    let order = match ctx.policy_path(other).exists() {
        true => vec![Baseline::Naive, Baseline::Adcar],
        false => vec![c.baseline],
    };
    for baseline in order {
        let path = ctx.policy_path(baseline);
        require(&path, "policy checkpoint")?;
        let policy = ActionPolicy::load(&path)?;
        let theta = policy.predict_action(&one.x);
        let t = theta.row(0).to_vec();
        let group = match baseline {
            Baseline::Adcar => "ADCAR",
            Baseline::Naive => "NaiveAR",
        };
        table.push(CaseRow::action(group, "theta", &t, &ctx.actionable));
        let engine = ctx.load_engine(baseline)?;
        let model = match (&engine, baseline) {
            (Some(e), _) => Some((CfModel::Learned(e), "x(theta) engine")),
            (None, Baseline::Naive) => Some((CfModel::Naive, "x + theta")),
            (None, Baseline::Adcar) => None,
        };
        if let Some((m, label)) = model {
            let cf = m.counterfactual(&one.x, &theta, &ctx.actionable)?;
            table.push(CaseRow::point(group, label, &cf.row(0).to_vec(), &ctx.rule));
        }
        let exact = ctx.scm.counterfactual_exact(&x, &u, &t)?;
        table.push(CaseRow::point(group, "x(theta) SCM", &exact, &ctx.rule));
    }
    let text = case_report(&ctx.bundle.names, ctx.rule.value_name(), &table);
    write_text(&ctx.path(&format!("case-{}-{index}.txt", ctx.tag(c.baseline))), &text)?;
    print!("{text}");
    Ok(())
}
