//! Fusion plans and their `key=value` text form.
//!
//! ```text
//! labels = labels.txt
//! splits = split1.txt,split2.txt,split3.txt
//! pillar.rgb.features = rgb.plrf
//! pillar.rgb.kernel = rbf            # rbf | linear
//! pillar.rgb.gamma = scale           # scale | median | <number>
//! pillar.rgb.normalization = unit_mean_diag
//! pillar.rgb.l2norm = false
//! group.net0 = rgb,flow
//! fusion.mode = flat                 # flat | staged
//! fusion.norm = l2                   # l1 | l2
//! svm.C = 100
//! mkl.eps = 0.001
//! seed = 7
//! ```
//!
//! Relative paths resolve against the plan file's directory.

use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::binio::parse_key_values;
use crate::kernels::{GammaMode, Normalization};
use crate::mkl::{MklParams, NormMode};
use crate::svm::SmoParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaChoice {
    Heuristic(GammaMode),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelChoice {
    Rbf(GammaChoice),
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PillarPlan {
    pub id: String,
    pub features: PathBuf,
    pub kernel: KernelChoice,
    pub normalization: Normalization,
    /// Scale every feature row to unit L2 norm before building the kernel.
    pub l2_normalize: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub id: String,
    pub pillars: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMode {
    /// Global fusion re-learns weights over every pillar kernel.
    Flat,
    /// Groups are fused first; their weighted kernels (weights frozen) are then fused.
    Staged,
}

impl FusionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::Flat => "flat",
            FusionMode::Staged => "staged",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionPlan {
    pub pillars: Vec<PillarPlan>,
    pub groups: Vec<Group>,
    pub mode: FusionMode,
    pub norm_mode: NormMode,
    pub mkl: MklParams,
    pub seed: u64,
    pub labels: Option<PathBuf>,
    pub splits: Vec<PathBuf>,
}

/// Ordered `key=value` settings where later writes replace earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanOverrides {
    entries: Vec<(String, String)>,
}

impl PlanOverrides {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut out = PlanOverrides::default();
        for (k, v) in parse_key_values(text)
            .map_err(|(line, reason)| PipelineError::PlanSyntax { line, reason })?
        {
            out.set(k, v);
        }
        Ok(out)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let (key, value) = (key.into(), value.into());
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::InvalidPlan(msg.into())
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, PipelineError> {
    v.parse()
        .map_err(|_| invalid(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool, PipelineError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl FusionPlan {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        Self::load_with(path, &PlanOverrides::default())
    }

    /// Reads a plan file and applies `overrides` on top of it.
    pub fn load_with(
        path: impl AsRef<Path>,
        overrides: &PlanOverrides,
    ) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut settings = PlanOverrides::parse(&text)?;
        for (k, v) in overrides.entries() {
            settings.set(k.clone(), v.clone());
        }
        Self::from_settings(&settings, path.parent().unwrap_or_else(|| Path::new(".")))
    }

    pub fn from_settings(settings: &PlanOverrides, base: &Path) -> Result<Self, PipelineError> {
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let mut plan = FusionPlan {
            pillars: Vec::new(),
            groups: Vec::new(),
            mode: FusionMode::Flat,
            norm_mode: NormMode::L2,
            mkl: MklParams::default(),
            seed: 0,
            labels: None,
            splits: Vec::new(),
        };
        let mut svm = SmoParams::default();

        for (key, v) in settings.entries() {
            let v = v.as_str();
            if let Some(rest) = key.strip_prefix("pillar.") {
                let (id, field) = rest
                    .rsplit_once('.')
                    .ok_or_else(|| invalid(format!("{key}: expected pillar.<id>.<field>")))?;
                if id.is_empty() {
                    return Err(invalid(format!("{key}: empty pillar id")));
                }
                let idx = match plan.pillars.iter().position(|p| p.id == id) {
                    Some(i) => i,
                    None => {
                        plan.pillars.push(PillarPlan {
                            id: id.to_string(),
                            features: PathBuf::new(),
                            kernel: KernelChoice::Rbf(GammaChoice::Heuristic(GammaMode::Scale)),
                            normalization: Normalization::UnitMeanDiag,
                            l2_normalize: false,
                        });
                        plan.pillars.len() - 1
                    }
                };
                let pillar = &mut plan.pillars[idx];
                match field {
                    "features" => pillar.features = resolve(v),
                    "kernel" => {
                        let gamma = match pillar.kernel {
                            KernelChoice::Rbf(g) => g,
                            KernelChoice::Linear => GammaChoice::Heuristic(GammaMode::Scale),
                        };
                        pillar.kernel = match v {
                            "rbf" => KernelChoice::Rbf(gamma),
                            "linear" => KernelChoice::Linear,
                            _ => return Err(invalid(format!("{key}: unknown kernel {v:?}"))),
                        }
                    }
                    "gamma" => {
                        let g = match v {
                            "scale" => GammaChoice::Heuristic(GammaMode::Scale),
                            "median" => GammaChoice::Heuristic(GammaMode::Median),
                            _ => {
                                let g: f64 = number(key, v)?;
                                if !(g > 0.0 && g.is_finite()) {
                                    return Err(invalid(format!("{key}: γ must be positive")));
                                }
                                GammaChoice::Fixed(g)
                            }
                        };
                        if let KernelChoice::Rbf(_) = pillar.kernel {
                            pillar.kernel = KernelChoice::Rbf(g);
                        }
                    }
                    "normalization" => {
                        pillar.normalization = Normalization::parse(v)
                            .ok_or_else(|| invalid(format!("{key}: unknown normalization {v:?}")))?
                    }
                    "l2norm" => pillar.l2_normalize = boolean(key, v)?,
                    _ => return Err(invalid(format!("unknown key {key:?}"))),
                }
                continue;
            }
            if let Some(id) = key.strip_prefix("group.") {
                let pillars: Vec<String> = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                plan.groups.retain(|g| g.id != id);
                plan.groups.push(Group {
                    id: id.to_string(),
                    pillars,
                });
                continue;
            }
            match key.as_str() {
                "labels" => plan.labels = Some(resolve(v)),
                "splits" => {
                    plan.splits = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(resolve)
                        .collect()
                }
                "fusion.mode" => {
                    plan.mode = match v {
                        "flat" => FusionMode::Flat,
                        "staged" => FusionMode::Staged,
                        _ => {
                            return Err(invalid(format!(
                                "{key}: expected flat or staged, got {v:?}"
                            )))
                        }
                    }
                }
                "fusion.norm" => {
                    plan.norm_mode = NormMode::parse(v)
                        .ok_or_else(|| invalid(format!("{key}: expected l1 or l2, got {v:?}")))?
                }
                "svm.C" => svm.c = number(key, v)?,
                "svm.tol" => svm.tol = number(key, v)?,
                "svm.max_iter" => svm.max_iter = number(key, v)?,
                "mkl.eps" => plan.mkl.eps = number(key, v)?,
                "mkl.max_cuts" => plan.mkl.max_cuts = number(key, v)?,
                "mkl.tol" => plan.mkl.tol = number(key, v)?,
                "mkl.max_iter" => plan.mkl.max_iter = number(key, v)?,
                "seed" => plan.seed = number(key, v)?,
                _ => return Err(invalid(format!("unknown key {key:?}"))),
            }
        }
        plan.mkl.svm = svm;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.pillars.is_empty() {
            return Err(invalid("no pillars defined"));
        }
        for p in &self.pillars {
            if p.features.as_os_str().is_empty() {
                return Err(invalid(format!("pillar {} has no features path", p.id)));
            }
        }
        self.mkl
            .svm
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if !(self.mkl.eps > 0.0 && self.mkl.tol > 0.0) {
            return Err(invalid("mkl.eps and mkl.tol must be positive"));
        }
        if self.mode == FusionMode::Staged && self.groups.is_empty() {
            return Err(invalid("staged fusion needs at least one group"));
        }
        if !self.groups.is_empty() {
            let mut seen = vec![0usize; self.pillars.len()];
            for g in &self.groups {
                if g.pillars.is_empty() {
                    return Err(invalid(format!("group {} is empty", g.id)));
                }
                for id in &g.pillars {
                    let i = self.pillar_index(id).ok_or_else(|| {
                        invalid(format!("group {} names unknown pillar {id}", g.id))
                    })?;
                    seen[i] += 1;
                }
            }
            if let Some(i) = seen.iter().position(|&c| c != 1) {
                return Err(invalid(format!(
                    "pillar {} appears in {} groups; every pillar must be in exactly one",
                    self.pillars[i].id, seen[i]
                )));
            }
        }
        Ok(())
    }

    pub fn pillar_index(&self, id: &str) -> Option<usize> {
        self.pillars.iter().position(|p| p.id == id)
    }

    /// Settings that reproduce this plan, with paths written relative to `base` where possible.
    pub fn to_settings(&self, base: &Path) -> PlanOverrides {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut s = PlanOverrides::default();
        if let Some(l) = &self.labels {
            s.set("labels", rel(l));
        }
        if !self.splits.is_empty() {
            s.set(
                "splits",
                self.splits
                    .iter()
                    .map(|p| rel(p))
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        for p in &self.pillars {
            s.set(format!("pillar.{}.features", p.id), rel(&p.features));
            match p.kernel {
                KernelChoice::Linear => s.set(format!("pillar.{}.kernel", p.id), "linear"),
                KernelChoice::Rbf(g) => {
                    s.set(format!("pillar.{}.kernel", p.id), "rbf");
                    let g = match g {
                        GammaChoice::Heuristic(GammaMode::Scale) => "scale".to_string(),
                        GammaChoice::Heuristic(GammaMode::Median) => "median".to_string(),
                        GammaChoice::Fixed(v) => format!("{v:?}"),
                    };
                    s.set(format!("pillar.{}.gamma", p.id), g);
                }
            }
            s.set(
                format!("pillar.{}.normalization", p.id),
                p.normalization.as_str(),
            );
            s.set(
                format!("pillar.{}.l2norm", p.id),
                p.l2_normalize.to_string(),
            );
        }
        for g in &self.groups {
            s.set(format!("group.{}", g.id), g.pillars.join(","));
        }
        s.set("fusion.mode", self.mode.as_str());
        s.set("fusion.norm", self.norm_mode.as_str());
        s.set("svm.C", format!("{:?}", self.mkl.svm.c));
        s.set("svm.tol", format!("{:?}", self.mkl.svm.tol));
        s.set("mkl.eps", format!("{:?}", self.mkl.eps));
        s.set("mkl.max_cuts", self.mkl.max_cuts.to_string());
        s.set("mkl.tol", format!("{:?}", self.mkl.tol));
        s.set("mkl.max_iter", self.mkl.max_iter.to_string());
        s.set("seed", self.seed.to_string());
        s
    }
}
