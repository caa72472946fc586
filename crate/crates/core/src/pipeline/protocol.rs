use rayon::prelude::*;

use super::plan::{FusionMode, FusionPlan, GammaChoice, KernelChoice, PillarPlan};
use super::report::{build_report, Evaluation, SplitReport};
use super::{confusion_matrix, PipelineError, Report};
use crate::dataio::{
    load_feature_matrix, load_labels, load_split, FeatureMatrix, LabelVector, SplitDefinition,
};
use crate::kernels::{
    check_psd, combine_blocks, combine_kernels, gamma_heuristic, kernel_gram, normalize_kernel,
    self_kernel, KernelError, KernelMatrix, KernelParams, PsdCheck, PSD_TOL,
};
use crate::matrix::Matrix;
use crate::mkl::{l2_mkl, mkl_predict, silp_l1, MklModel, MklParams, NormMode};
use crate::svm::{predict_multiclass, train_one_vs_rest};

/// Train/train kernel and test/train block of one pillar on one split.
#[derive(Clone, Debug)]
pub struct PillarKernels {
    pub id: String,
    pub train: KernelMatrix,
    pub test: Matrix,
    pub gamma: Option<f64>,
}

/// Reads the labels, split files and pillar features a plan refers to.
pub fn load_inputs(
    plan: &FusionPlan,
) -> Result<(Vec<FeatureMatrix>, LabelVector, Vec<SplitDefinition>), PipelineError> {
    let labels_path = plan
        .labels
        .as_ref()
        .ok_or_else(|| PipelineError::InvalidPlan("plan has no labels path".into()))?;
    let labels = load_labels(labels_path).map_err(|e| PipelineError::InvalidPlan(e.to_string()))?;
    if plan.splits.is_empty() {
        return Err(PipelineError::InvalidPlan(
            "plan lists no split files".into(),
        ));
    }
    let splits = plan
        .splits
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let split = load_split(p, i + 1, labels.len())
                .map_err(|e| PipelineError::InvalidPlan(e.to_string()))?;
            split
                .validate(&labels)
                .map_err(|e| PipelineError::InvalidPlan(format!("{}: {e}", p.display())))?;
            Ok(split)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let features = load_features(plan)?;
    Ok((features, labels, splits))
}

/// Loads the plan's pillar features and runs every split.
pub fn run_protocol(
    plan: &FusionPlan,
    labels: &LabelVector,
    splits: &[SplitDefinition],
) -> Result<Report, PipelineError> {
    let features = load_features(plan)?;
    run_protocol_with_features(plan, &features, labels, splits)
}

fn load_features(plan: &FusionPlan) -> Result<Vec<FeatureMatrix>, PipelineError> {
    plan.pillars
        .iter()
        .map(|p| {
            load_feature_matrix(&p.features).map_err(|e| PipelineError::Pillar {
                pillar: p.id.clone(),
                source: Box::new(e.into()),
            })
        })
        .collect()
}

pub fn run_protocol_with_features(
    plan: &FusionPlan,
    features: &[FeatureMatrix],
    labels: &LabelVector,
    splits: &[SplitDefinition],
) -> Result<Report, PipelineError> {
    plan.validate()?;
    if features.len() != plan.pillars.len() {
        return Err(PipelineError::InvalidPlan(format!(
            "{} feature matrices for {} pillars",
            features.len(),
            plan.pillars.len()
        )));
    }
    for (p, f) in plan.pillars.iter().zip(features) {
        if f.n_samples() != labels.len() {
            return Err(PipelineError::InvalidPlan(format!(
                "pillar {} has {} samples, labels have {}",
                p.id,
                f.n_samples(),
                labels.len()
            )));
        }
    }
    if splits.is_empty() {
        return Err(PipelineError::InvalidPlan("no splits".into()));
    }
    for s in splits {
        s.validate(labels)
            .map_err(|e| PipelineError::InvalidPlan(format!("split {}: {e}", s.split_id)))?;
    }
    let per_split = splits
        .par_iter()
        .map(|s| run_split(plan, features, labels, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_report(plan, labels, per_split))
}

fn stage_err(split: usize, stage: impl Into<String>) -> impl FnOnce(crate::Error) -> PipelineError {
    let stage = stage.into();
    move |e| PipelineError::Stage {
        split,
        stage,
        source: Box::new(e),
    }
}

/// Builds one pillar's kernels on a split; γ and the normalization scale come
/// from training rows only.
pub fn pillar_kernels(
    pillar: &PillarPlan,
    features: &FeatureMatrix,
    split: &SplitDefinition,
    seed: u64,
) -> Result<PillarKernels, PipelineError> {
    let err = |e: KernelError| PipelineError::Stage {
        split: split.split_id,
        stage: format!("kernel {}", pillar.id),
        source: Box::new(e.into()),
    };
    let features = if pillar.l2_normalize {
        std::borrow::Cow::Owned(features.l2_normalized_rows())
    } else {
        std::borrow::Cow::Borrowed(features)
    };
    let x_train = features.select_rows(&split.train_indices);
    let x_test = features.select_rows(&split.test_indices);
    let params = match pillar.kernel {
        KernelChoice::Linear => KernelParams::Linear,
        KernelChoice::Rbf(GammaChoice::Fixed(gamma)) => KernelParams::Rbf { gamma },
        KernelChoice::Rbf(GammaChoice::Heuristic(mode)) => KernelParams::Rbf {
            gamma: gamma_heuristic(&x_train, mode, seed).map_err(err)?,
        },
    };
    let raw = self_kernel(&x_train, &params, Some(&pillar.id)).map_err(err)?;
    if let PsdCheck::Fail { min_eigenvalue } = check_psd(&raw, PSD_TOL) {
        return Err(PipelineError::NotPsd {
            split: split.split_id,
            pillar: pillar.id.clone(),
            min_eigenvalue,
        });
    }
    let train = normalize_kernel(&raw, pillar.normalization).map_err(err)?;
    let mut test = kernel_gram(&x_test, &x_train, &params).map_err(err)?;
    test.scale(1.0 / train.provenance.scale);
    let gamma = match params {
        KernelParams::Rbf { gamma } => Some(gamma),
        KernelParams::Linear => None,
    };
    Ok(PillarKernels {
        id: pillar.id.clone(),
        train,
        test,
        gamma,
    })
}

pub(crate) fn run_mkl(
    norm: NormMode,
    ks: &[&KernelMatrix],
    labels: &LabelVector,
    params: &MklParams,
) -> Result<MklModel, crate::Error> {
    Ok(match norm {
        NormMode::L1 => silp_l1(ks, labels, params)?,
        NormMode::L2 => l2_mkl(ks, labels, params)?,
    })
}

fn evaluate_mkl(
    id: &str,
    kind: &str,
    model: &MklModel,
    blocks: &[&Matrix],
    truth: &[usize],
) -> Result<Evaluation, crate::Error> {
    let (predictions, scores) = mkl_predict(model, blocks)?;
    let mut e = Evaluation::new(id, kind, predictions, &scores, truth)?;
    e.beta = Some(model.beta.clone());
    e.kernel_ids = model.kernel_ids.clone();
    e.trace = model.trace.clone();
    e.converged = model.fully_converged();
    Ok(e)
}

/// Stage-2 fusion over group kernels `Σ_{k∈g} β_k K_k` with the group weights frozen.
fn staged_fusion(
    plan: &FusionPlan,
    group_models: &[MklModel],
    kernels: &[PillarKernels],
    train_labels: &LabelVector,
    truth: &[usize],
    split_id: usize,
) -> Result<Evaluation, PipelineError> {
    let mut train = Vec::with_capacity(plan.groups.len());
    let mut test = Vec::with_capacity(plan.groups.len());
    for (g, model) in plan.groups.iter().zip(group_models) {
        let members: Vec<&PillarKernels> = g
            .pillars
            .iter()
            .map(|id| &kernels[plan.pillar_index(id).expect("validated plan")])
            .collect();
        let ks: Vec<&KernelMatrix> = members.iter().map(|m| &m.train).collect();
        let blocks: Vec<&Matrix> = members.iter().map(|m| &m.test).collect();
        let err = |e: KernelError| PipelineError::Stage {
            split: split_id,
            stage: format!("staged fusion {}", g.id),
            source: Box::new(e.into()),
        };
        let mut k = combine_kernels(&ks, &model.beta).map_err(err)?;
        k.provenance.pillar = Some(g.id.clone());
        train.push(k);
        test.push(combine_blocks(&blocks, &model.beta).map_err(err)?);
    }
    let ks: Vec<&KernelMatrix> = train.iter().collect();
    let blocks: Vec<&Matrix> = test.iter().collect();
    let model = run_mkl(plan.norm_mode, &ks, train_labels, &plan.mkl)
        .map_err(stage_err(split_id, "staged fusion"))?;
    evaluate_mkl("fused.staged", "fused", &model, &blocks, truth)
        .map_err(stage_err(split_id, "staged fusion"))
}

fn run_split(
    plan: &FusionPlan,
    features: &[FeatureMatrix],
    labels: &LabelVector,
    split: &SplitDefinition,
) -> Result<SplitReport, PipelineError> {
    let sid = split.split_id;
    let kernels = plan
        .pillars
        .par_iter()
        .zip(features.par_iter())
        .map(|(p, f)| pillar_kernels(p, f, split, plan.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let train_labels = labels.subset(&split.train_indices);
    let truth = labels.subset(&split.test_indices).labels().to_vec();

    let mut evaluations = Vec::new();
    for pk in &kernels {
        let stage = || stage_err(sid, format!("svm {}", pk.id));
        let mut model = train_one_vs_rest(&pk.train, &train_labels, &plan.mkl.svm)
            .map_err(|e| stage()(e.into()))?;
        model.set_train_index_map(&split.train_indices);
        let (predictions, scores) =
            predict_multiclass(&model, &pk.test).map_err(|e| stage()(e.into()))?;
        let mut e = Evaluation::new(&pk.id, "pillar", predictions, &scores, &truth)?;
        e.kernel_ids = vec![pk.id.clone()];
        e.converged = model.converged();
        evaluations.push(e);
    }

    let mut group_models = Vec::with_capacity(plan.groups.len());
    for g in &plan.groups {
        let members: Vec<&PillarKernels> = g
            .pillars
            .iter()
            .map(|id| &kernels[plan.pillar_index(id).expect("validated plan")])
            .collect();
        let ks: Vec<&KernelMatrix> = members.iter().map(|m| &m.train).collect();
        let blocks: Vec<&Matrix> = members.iter().map(|m| &m.test).collect();
        let stage = format!("mkl {}", g.id);
        let model = run_mkl(plan.norm_mode, &ks, &train_labels, &plan.mkl)
            .map_err(stage_err(sid, stage.clone()))?;
        evaluations.push(
            evaluate_mkl(&g.id, "group", &model, &blocks, &truth).map_err(stage_err(sid, stage))?,
        );
        group_models.push(model);
    }

    let ks: Vec<&KernelMatrix> = kernels.iter().map(|k| &k.train).collect();
    let blocks: Vec<&Matrix> = kernels.iter().map(|k| &k.test).collect();
    let flat = || -> Result<Evaluation, PipelineError> {
        let model = run_mkl(plan.norm_mode, &ks, &train_labels, &plan.mkl)
            .map_err(stage_err(sid, "flat fusion"))?;
        evaluate_mkl("fused.flat", "fused", &model, &blocks, &truth)
            .map_err(stage_err(sid, "flat fusion"))
    };
    let (primary, alternate) = match (plan.mode, plan.groups.is_empty()) {
        (FusionMode::Flat, true) => (flat()?, None),
        (FusionMode::Flat, false) => (
            flat()?,
            Some(staged_fusion(
                plan,
                &group_models,
                &kernels,
                &train_labels,
                &truth,
                sid,
            )?),
        ),
        (FusionMode::Staged, _) => (
            staged_fusion(plan, &group_models, &kernels, &train_labels, &truth, sid)?,
            Some(flat()?),
        ),
    };
    let confusion = confusion_matrix(&primary.predictions, &truth, labels.n_classes())?;
    evaluations.push(primary);
    evaluations.extend(alternate);

    Ok(SplitReport {
        split_id: sid,
        test_indices: split.test_indices.clone(),
        truth,
        gammas: kernels.iter().map(|k| k.gamma).collect(),
        evaluations,
        confusion,
    })
}
