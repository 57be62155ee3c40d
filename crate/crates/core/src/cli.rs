//! Command-line front end. Every file artifact gets a `.manifest.json`
//! sidecar; `-` as a path means standard input or output (no sidecar).
//!
//! Exit codes: 0 success, 1 usage error, 2 data or runtime error.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{OcuError, Result};
use crate::gaze::{angular_error, yaw_binned_report};
use crate::geometry::{euler_yaw_pitch, SimilarityTransform};
use crate::io::{
    config_hash, decode_json, decode_jsonl, decode_loss_operand, decode_transform, encode_ablation, encode_history,
    encode_json_line, encode_json_pretty, encode_jsonl, encode_mesh, encode_report, load_template_pair, scatter_svg, LabelRecord,
    LossOperand, PairRecord, RunManifest, SampleRecord,
};
use crate::labeling::{face_rotation, FaceAnchors};
use crate::losses::{combined_supervised_loss, edge_loss, gaze_loss, mv_loss, vertex_loss, Grad, LossWeights};
use crate::synthworld::{generate, make_view_pairs, HeadPose, SceneConfig};
use crate::template::{build_template, Side, TemplatePair};
use crate::trainer::ablation::{run_ablation, AblationSpec};
use crate::trainer::model::{init_model, Model, ModelDescriptor, ModelInput};
use crate::trainer::train::{gt_target, predict, pseudo_target, train, MultiView, Supervised, TrainConfig, TrainData};

/// Environment variable that overrides every config seed.
pub const SEED_ENV: &str = "OCUMESH_SEED";

#[derive(Debug, Parser)]
#[command(name = "ocumesh", version, about = "Eyeball meshes, gaze labels, losses and a synthetic training harness")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LabelMode {
    Gt,
    Pseudo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Vertex,
    Edge,
    Gaze,
    Gt,
    Mv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum SourceArg {
    Gt,
    Pgt,
    Mv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an eyeball template mesh.
    Template {
        #[arg(long, value_enum)]
        side: SideArg,
        #[arg(long, default_value_t = 32)]
        sectors: usize,
        #[arg(long, default_value_t = 16)]
        stacks: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn observed samples into eye-mesh labels.
    Label {
        #[arg(long, value_enum)]
        mode: LabelMode,
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory holding eyeball_left.json and eyeball_right.json.
        #[arg(long)]
        template_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one loss between two label documents.
    Loss {
        #[arg(long, value_enum)]
        kind: LossKind,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// View a to view b transform (mv only; identity when absent).
        #[arg(long)]
        transform: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        template_dir: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Generate a synthetic world and optionally multi-view pairs of it.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Standard deviation of the head-pose change between views, degrees.
        #[arg(long, default_value_t = 20.0)]
        delta_sigma: f64,
    },
    /// Train a model. Labeled samples become ground-truth examples, unlabeled
    /// ones pseudo-label examples, and pairs multi-view examples.
    Train {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
        /// Sources to train on (default: every source with data). Overrides
        /// the use_* flags of the config.
        #[arg(long, value_enum, value_delimiter = ',')]
        sources: Option<Vec<SourceArg>>,
        /// Hidden layer widths, e.g. 32,32.
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[arg(long)]
        template_dir: Option<PathBuf>,
    },
    /// Run an ablation spec and write the comparison table.
    Ablate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predictions with labels per cumulative yaw bin.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,20,40,90")]
        bins: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Predict eye meshes and gaze for observed samples.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        template_dir: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(OcuError),
}

impl From<OcuError> for CliError {
    fn from(e: OcuError) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            1
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn seed_override() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn read_input(path: &Path) -> CliResult<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| CliError::Run(OcuError::param(format!("{}: {e}", path.display()))))
}

fn templates(dir: &Option<PathBuf>) -> CliResult<TemplatePair> {
    match dir {
        Some(d) => Ok(load_template_pair(d)?),
        None => Ok(TemplatePair::standard()),
    }
}

/// Attaches a line number to errors raised while processing one record.
fn at_line(line: usize, e: OcuError) -> OcuError {
    match e {
        e @ OcuError::Data { .. } => e,
        e => OcuError::data(line, "record", e.to_string()),
    }
}

fn head_pose_of(rec: &SampleRecord, anchors: &FaceAnchors, line: usize) -> Result<HeadPose> {
    match rec.head_pose {
        Some(h) => Ok(h),
        None => {
            let (yaw, pitch) = euler_yaw_pitch(&face_rotation(anchors).map_err(|e| at_line(line, e))?);
            Ok(HeadPose { yaw, pitch })
        }
    }
}

/// Collects the outputs of one command and writes them with their sidecars.
struct Run {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<(PathBuf, String)>,
    start: Instant,
}

impl Run {
    fn new(command: &'static str, config: Value, seed: Option<u64>, inputs: &[&Path]) -> Self {
        Run {
            command,
            config,
            seed,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: Vec::new(),
            start: Instant::now(),
        }
    }

    fn output(&mut self, path: &Path, content: String) {
        self.outputs.push((path.to_path_buf(), content));
    }

    fn finish(self) -> CliResult<()> {
        let files: Vec<String> = self
            .outputs
            .iter()
            .filter(|(p, _)| p != Path::new("-"))
            .map(|(p, _)| p.display().to_string())
            .collect();
        for (path, content) in &self.outputs {
            if path == Path::new("-") {
                std::io::stdout().write_all(content.as_bytes())?;
            } else {
                std::fs::write(path, content)
                    .map_err(|e| CliError::Run(OcuError::param(format!("{}: {e}", path.display()))))?;
            }
        }
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_hash: config_hash(&self.config)?,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self.inputs.clone(),
            outputs: files,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        };
        for (path, _) in &self.outputs {
            if path != Path::new("-") {
                manifest.write_beside(path)?;
            }
        }
        Ok(())
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        // A pool already exists when called twice in one process; keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = seed_override()?;
    match cli.command {
        Command::Template { side, sectors, stacks, out } => cmd_template(side, sectors, stacks, &out),
        Command::Label { mode, input, template_dir, out } => cmd_label(mode, &input, &template_dir, &out),
        Command::Loss { kind, a, b, transform, weights, template_dir, out } => {
            cmd_loss(kind, &a, &b, transform.as_deref(), weights.as_deref(), &template_dir, &out)
        }
        Command::Synth { config, out, pairs, delta_sigma } => cmd_synth(&config, &out, pairs.as_deref(), delta_sigma, seed),
        Command::Train { world, pairs, config, out, history, sources, hidden, template_dir } => cmd_train(
            TrainArgs { world, pairs, config, out, history, sources, hidden, template_dir },
            seed,
        ),
        Command::Ablate { spec, out } => cmd_ablate(&spec, &out, seed),
        Command::Eval { pred, gt, bins, out, plot } => cmd_eval(&pred, &gt, &bins, &out, plot.as_deref()),
        Command::Predict { model, input, out, template_dir } => cmd_predict(&model, &input, &out, &template_dir),
    }
}

fn cmd_template(side: SideArg, sectors: usize, stacks: usize, out: &Path) -> CliResult<()> {
    let side = match side {
        SideArg::Left => Side::Left,
        SideArg::Right => Side::Right,
    };
    let t = build_template(sectors, stacks, side).map_err(|e| usage(e.to_string()))?;
    let mut run = Run::new("template", json!({"side": side, "sectors": sectors, "stacks": stacks}), None, &[]);
    run.output(out, encode_mesh(&t)?);
    run.finish()
}

fn cmd_label(mode: LabelMode, input: &Path, template_dir: &Option<PathBuf>, out: &Path) -> CliResult<()> {
    let t = templates(template_dir)?;
    let records: Vec<(usize, SampleRecord)> = decode_jsonl(&read_input(input)?)?;
    let labels: Vec<LabelRecord> = records
        .par_iter()
        .map(|(line, rec)| {
            let line = *line;
            let anchors = rec.to_anchors(line)?;
            let head = head_pose_of(rec, &anchors, line)?;
            match mode {
                LabelMode::Gt => {
                    if anchors.gaze.is_none() {
                        return Err(OcuError::data(line, "gaze", "ground-truth labeling needs a gaze label"));
                    }
                    let label = gt_target(&anchors, &t).map_err(|e| at_line(line, e))?;
                    LabelRecord::from_label(&rec.id, "gt", &label, Some(head), None)
                }
                LabelMode::Pseudo => {
                    let (label, diag) = pseudo_target(&anchors, &t).map_err(|e| at_line(line, e))?;
                    LabelRecord::from_label(&rec.id, "pseudo", &label, Some(head), Some(diag))
                }
            }
        })
        .collect::<Result<_>>()?;
    let mode_name = match mode {
        LabelMode::Gt => "gt",
        LabelMode::Pseudo => "pseudo",
    };
    let mut run = Run::new("label", json!({"mode": mode_name, "template_dir": template_dir}), None, &[input]);
    run.output(out, encode_jsonl(&labels)?);
    run.finish()
}

fn grad_norms(g: &Grad) -> Value {
    let side = |v: &[crate::geometry::Vec3]| v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
    json!({"left": side(&g.left), "right": side(&g.right), "gaze": g.gaze.norm()})
}

#[derive(Serialize)]
struct LossReport {
    kind: &'static str,
    value: f64,
    grad_norm: Value,
}

fn cmd_loss(
    kind: LossKind,
    a: &Path,
    b: &Path,
    transform: Option<&Path>,
    weights: Option<&Path>,
    template_dir: &Option<PathBuf>,
    out: &Path,
) -> CliResult<()> {
    let t = templates(template_dir)?;
    let opa = decode_loss_operand(&read_input(a)?, &t)?;
    let opb = decode_loss_operand(&read_input(b)?, &t)?;
    let w: LossWeights = match weights {
        Some(p) => decode_json(&read_input(p)?, None)?,
        None => LossWeights::default(),
    };
    if transform.is_some() && kind != LossKind::Mv {
        return Err(usage("--transform only applies to --kind mv"));
    }
    let p = match transform {
        Some(path) => decode_transform(&read_input(path)?)?,
        None => SimilarityTransform::identity(),
    };
    let eyes = |o: &LossOperand, name: &str| {
        o.eyes
            .clone()
            .ok_or_else(|| CliError::Run(OcuError::data(1, "eyes", format!("operand {name} has no eye meshes"))))
    };
    let gaze = |o: &LossOperand, name: &str| {
        o.gaze
            .ok_or_else(|| CliError::Run(OcuError::data(1, "gaze", format!("operand {name} has no gaze"))))
    };
    let (name, value, grad_norm) = match kind {
        LossKind::Vertex => {
            let l = vertex_loss(&eyes(&opa, "a")?, &eyes(&opb, "b")?)?;
            ("vertex", l.value, grad_norms(&l.grad))
        }
        LossKind::Edge => {
            let l = edge_loss(&eyes(&opa, "a")?, &eyes(&opb, "b")?)?;
            ("edge", l.value, grad_norms(&l.grad))
        }
        LossKind::Gaze => {
            let l = gaze_loss(&gaze(&opa, "a")?, &gaze(&opb, "b")?)?;
            ("gaze", l.value, grad_norms(&l.grad))
        }
        LossKind::Gt => {
            let l = combined_supervised_loss(&eyes(&opa, "a")?, &gaze(&opa, "a")?, &eyes(&opb, "b")?, &gaze(&opb, "b")?, &w)?;
            ("gt", l.value, grad_norms(&l.grad))
        }
        LossKind::Mv => {
            let l = mv_loss(&eyes(&opa, "a")?, &gaze(&opa, "a")?, &eyes(&opb, "b")?, &gaze(&opb, "b")?, &p, &w)?;
            ("mv", l.value, json!({"a": grad_norms(&l.grad1), "b": grad_norms(&l.grad2)}))
        }
    };
    let mut inputs = vec![a, b];
    inputs.extend(transform);
    inputs.extend(weights);
    let mut run = Run::new("loss", json!({"kind": name, "weights": w}), None, &inputs);
    run.output(out, encode_json_pretty(&LossReport { kind: name, value, grad_norm })?);
    run.finish()
}

fn cmd_synth(config: &Path, out: &Path, pairs: Option<&Path>, delta_sigma: f64, seed: Option<u64>) -> CliResult<()> {
    let mut cfg: SceneConfig = decode_json(&read_input(config)?, None)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if !(delta_sigma >= 0.0 && delta_sigma.is_finite()) {
        return Err(usage("--delta-sigma must be a finite non-negative number"));
    }
    let samples = generate(&cfg)?;
    let records = samples.iter().map(SampleRecord::from_sample).collect::<Result<Vec<_>>>()?;
    let mut run = Run::new("synth", json!({"scene": cfg, "delta_sigma": delta_sigma}), Some(cfg.seed), &[config]);
    run.output(out, encode_jsonl(&records)?);
    if let Some(path) = pairs {
        let pairs = make_view_pairs(&samples, delta_sigma, cfg.seed)?;
        let recs = pairs.iter().map(PairRecord::from_pair).collect::<Result<Vec<_>>>()?;
        run.output(path, encode_jsonl(&recs)?);
    }
    run.finish()
}

struct TrainArgs {
    world: PathBuf,
    pairs: Option<PathBuf>,
    config: PathBuf,
    out: PathBuf,
    history: Option<PathBuf>,
    sources: Option<Vec<SourceArg>>,
    hidden: Option<Vec<usize>>,
    template_dir: Option<PathBuf>,
}

fn cmd_train(args: TrainArgs, seed: Option<u64>) -> CliResult<()> {
    let t = templates(&args.template_dir)?;
    let mut cfg: TrainConfig = decode_json(&read_input(&args.config)?, None)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let descriptor = match &args.hidden {
        Some(h) => ModelDescriptor::with_hidden(h),
        None => ModelDescriptor::default(),
    };
    descriptor.validate().map_err(|e| usage(e.to_string()))?;

    let world: Vec<(usize, SampleRecord)> = decode_jsonl(&read_input(&args.world)?)?;
    let examples: Vec<(bool, Supervised)> = world
        .par_iter()
        .map(|(line, rec)| {
            let anchors = rec.to_anchors(*line)?;
            let labeled = anchors.gaze.is_some();
            let target = if labeled {
                gt_target(&anchors, &t)
            } else {
                pseudo_target(&anchors, &t).map(|p| p.0)
            }
            .map_err(|e| at_line(*line, e))?;
            let input = ModelInput::from_anchors(&anchors).map_err(|e| at_line(*line, e))?;
            Ok((labeled, Supervised { id: rec.id.clone(), input, target }))
        })
        .collect::<Result<_>>()?;
    let mut data = TrainData::default();
    for (labeled, ex) in examples {
        if labeled {
            data.gt.push(ex);
        } else {
            data.pgt.push(ex);
        }
    }
    if let Some(path) = &args.pairs {
        let recs: Vec<(usize, PairRecord)> = decode_jsonl(&read_input(path)?)?;
        data.mv = recs
            .par_iter()
            .map(|(line, r)| {
                let o = r.to_pair(*line)?;
                Ok(MultiView {
                    id: o.id,
                    input1: ModelInput::from_anchors(&o.view1).map_err(|e| at_line(*line, e))?,
                    input2: ModelInput::from_anchors(&o.view2).map_err(|e| at_line(*line, e))?,
                    p: o.p,
                })
            })
            .collect::<Result<_>>()?;
    }
    let available = [
        (SourceArg::Gt, !data.gt.is_empty()),
        (SourceArg::Pgt, !data.pgt.is_empty()),
        (SourceArg::Mv, !data.mv.is_empty()),
    ];
    let selected: Vec<SourceArg> = match &args.sources {
        Some(s) => {
            for src in s {
                if !available.iter().any(|(a, has)| a == src && *has) {
                    return Err(CliError::Run(OcuError::Training(format!("source {src:?} selected but the inputs hold no such examples"))));
                }
            }
            s.clone()
        }
        None => available.iter().filter(|a| a.1).map(|a| a.0).collect(),
    };
    cfg.use_gt = selected.contains(&SourceArg::Gt);
    cfg.use_pgt = selected.contains(&SourceArg::Pgt);
    cfg.use_mv = selected.contains(&SourceArg::Mv);

    let model = init_model(&descriptor, cfg.seed)?;
    let (model, history) = train(&model, &data, &[], &cfg, &t)?;

    let mut inputs: Vec<&Path> = vec![&args.world, &args.config];
    inputs.extend(args.pairs.as_deref());
    let mut run = Run::new("train", json!({"train": cfg, "model": descriptor}), Some(cfg.seed), &inputs);
    run.output(&args.out, encode_json_line(&model)?);
    if let Some(h) = &args.history {
        run.output(h, encode_history(&history.epochs)?);
    }
    run.finish()
}

fn cmd_ablate(spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut spec: AblationSpec = decode_json(&read_input(spec_path)?, None)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let rows = run_ablation(&spec)?;
    let mut run = Run::new("ablate", json!(spec), Some(spec.seed), &[spec_path]);
    run.output(out, encode_ablation(&rows)?);
    run.finish()
}

fn cmd_eval(pred: &Path, gt: &Path, bins: &[f64], out: &Path, plot: Option<&Path>) -> CliResult<()> {
    if bins.is_empty() || bins.windows(2).any(|w| !(w[0] < w[1])) || bins.iter().any(|b| !b.is_finite()) {
        return Err(usage("--bins must be strictly increasing finite thresholds"));
    }
    let preds: Vec<(usize, LabelRecord)> = decode_jsonl(&read_input(pred)?)?;
    let labels: Vec<(usize, LabelRecord)> = decode_jsonl(&read_input(gt)?)?;
    let mut by_id: BTreeMap<&str, (usize, &LabelRecord)> = BTreeMap::new();
    for (line, l) in &labels {
        if by_id.insert(l.id.as_str(), (*line, l)).is_some() {
            return Err(CliError::Run(OcuError::data(*line, "id", format!("duplicate id `{}`", l.id))));
        }
    }
    let mut errors = Vec::with_capacity(preds.len());
    let mut points = Vec::with_capacity(preds.len());
    for (line, p) in &preds {
        let (gl, g) = by_id
            .get(p.id.as_str())
            .ok_or_else(|| OcuError::data(*line, "id", format!("no label with id `{}`", p.id)))?;
        let truth = crate::geometry::Vec3::from(g.gaze);
        let guess = crate::geometry::Vec3::from(p.gaze);
        let err = angular_error(&guess, &truth).map_err(|e| at_line(*line, e))?;
        errors.push((g.yaw(*gl)?, err));
        points.push((truth, guess));
    }
    let report = yaw_binned_report(&errors, bins)?;
    let mut run = Run::new("eval", json!({"bins": bins}), None, &[pred, gt]);
    run.output(out, encode_report(&report)?);
    if let Some(path) = plot {
        run.output(path, scatter_svg(&points));
    }
    run.finish()
}

fn cmd_predict(model_path: &Path, input: &Path, out: &Path, template_dir: &Option<PathBuf>) -> CliResult<()> {
    let t = templates(template_dir)?;
    let model: Model = decode_json(&read_input(model_path)?, None)?;
    model.descriptor.validate().map_err(|e| OcuError::data(1, "descriptor", e.to_string()))?;
    if model.params.len() != model.descriptor.param_count() || model.params.iter().any(|p| !p.is_finite()) {
        return Err(CliError::Run(OcuError::data(
            1,
            "params",
            format!("expected {} finite parameters, found {}", model.descriptor.param_count(), model.params.len()),
        )));
    }
    let records: Vec<(usize, SampleRecord)> = decode_jsonl(&read_input(input)?)?;
    let preds: Vec<LabelRecord> = records
        .par_iter()
        .map(|(line, rec)| {
            let anchors = rec.to_anchors(*line)?;
            let head = head_pose_of(rec, &anchors, *line)?;
            let input = ModelInput::from_anchors(&anchors).map_err(|e| at_line(*line, e))?;
            let p = predict(&model, &input, &t).map_err(|e| at_line(*line, e))?;
            let label = crate::labeling::GazeLabel { eyes: p.eyes, gaze: p.gaze };
            LabelRecord::from_label(&rec.id, "model", &label, Some(head), None)
        })
        .collect::<Result<_>>()?;
    let mut run = Run::new("predict", json!({"model": config_hash(&model)?}), None, &[model_path, input]);
    run.output(out, encode_jsonl(&preds)?);
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(dispatch(["ocumesh", "frobnicate"]), 1);
        assert_eq!(dispatch(["ocumesh"]), 1);
        assert_eq!(dispatch(["ocumesh", "template", "--side", "up", "--out", "-"]), 1);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(dispatch(["ocumesh", "--help"]), 0);
    }

    #[test]
    fn bad_template_parameters_are_usage_errors() {
        assert_eq!(dispatch(["ocumesh", "template", "--side", "left", "--sectors", "2", "--out", "-"]), 1);
    }

    #[test]
    fn gaze_loss_of_identical_operands_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let x = dir.path().join("x.json");
        std::fs::write(&x, r#"{"gaze": [0.6, 0.0, -0.8]}"#).unwrap();
        let out = dir.path().join("loss.json");
        let code = dispatch([
            "ocumesh".as_ref(),
            "loss".as_ref(),
            "--kind".as_ref(),
            "gaze".as_ref(),
            "--a".as_ref(),
            x.as_os_str(),
            "--b".as_ref(),
            x.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["value"], 0.0);
        assert!(crate::io::manifest_path(&out).exists());
    }

    #[test]
    fn missing_eyes_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let x = dir.path().join("x.json");
        std::fs::write(&x, "[0, 0, -1]").unwrap();
        let xs = x.to_str().unwrap();
        assert_eq!(dispatch(["ocumesh", "loss", "--kind", "vertex", "--a", xs, "--b", xs]), 2);
    }
}
