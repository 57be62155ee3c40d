//! Supervision ablations: train several scenarios from one seed and compare
//! their error on a shared test world.

use serde::{Deserialize, Serialize};

use super::model::{init_model, ModelDescriptor};
use super::train::{eval_examples, evaluate, gt_examples, mv_examples, pseudo_examples, train, TrainConfig, TrainData};
use crate::error::{OcuError, Result};
use crate::gaze::{yaw_binned_report, YawBin};
use crate::synthworld::{generate, make_view_pairs, SceneConfig};
use crate::template::TemplatePair;

fn default_sigma() -> f64 {
    20.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvSource {
    /// World whose samples become first views; defaults to the pseudo-label world.
    #[serde(default)]
    pub world: Option<SceneConfig>,
    #[serde(default = "default_sigma")]
    pub delta_sigma_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub gt: Option<SceneConfig>,
    #[serde(default)]
    pub pgt: Option<SceneConfig>,
    #[serde(default)]
    pub mv: Option<MvSource>,
    /// Supervision flags are set from which sources are present.
    pub train: TrainConfig,
}

fn default_bins() -> Vec<f64> {
    vec![5.0, 20.0, 40.0, 90.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelDescriptor,
    pub test: SceneConfig,
    #[serde(default = "default_bins")]
    pub bins: Vec<f64>,
    pub scenarios: Vec<Scenario>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub mean_error: f64,
    pub bins: Vec<YawBin>,
    pub final_train_loss: f64,
}

pub fn run_scenario(spec: &AblationSpec, sc: &Scenario, templates: &TemplatePair) -> Result<AblationRow> {
    let mut data = TrainData::default();
    if let Some(cfg) = &sc.gt {
        data.gt = gt_examples(&generate(cfg)?, templates)?;
    }
    if let Some(cfg) = &sc.pgt {
        data.pgt = pseudo_examples(&generate(cfg)?, cfg, templates)?;
    }
    if let Some(mv) = &sc.mv {
        let world = mv
            .world
            .as_ref()
            .or(sc.pgt.as_ref())
            .ok_or_else(|| OcuError::param(format!("scenario {}: multi-view source needs a world", sc.name)))?;
        let pairs = make_view_pairs(&generate(world)?, mv.delta_sigma_deg, world.seed)?;
        data.mv = mv_examples(&pairs)?;
    }
    let cfg = TrainConfig {
        seed: spec.seed,
        use_gt: sc.gt.is_some(),
        use_pgt: sc.pgt.is_some(),
        use_mv: sc.mv.is_some(),
        ..sc.train.clone()
    };
    let model = init_model(&spec.model, spec.seed)?;
    let (model, history) = train(&model, &data, &[], &cfg, templates)?;
    let test = eval_examples(&generate(&spec.test)?)?;
    let errors = evaluate(&model, &test, templates)?;
    let mean_error = errors.iter().map(|e| e.1).sum::<f64>() / errors.len().max(1) as f64;
    Ok(AblationRow {
        name: sc.name.clone(),
        mean_error,
        bins: yaw_binned_report(&errors, &spec.bins)?,
        final_train_loss: history.epochs.last().map_or(f64::NAN, |e| e.loss_total),
    })
}

/// Trains every scenario from the spec seed and evaluates on the test world.
pub fn run_ablation(spec: &AblationSpec) -> Result<Vec<AblationRow>> {
    if spec.scenarios.is_empty() {
        return Err(OcuError::param("ablation needs at least one scenario"));
    }
    spec.test.validate()?;
    let templates = TemplatePair::standard();
    spec.scenarios
        .iter()
        .map(|sc| run_scenario(spec, sc, &templates))
        .collect()
}
