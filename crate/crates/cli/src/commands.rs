use std::path::{Path, PathBuf};

use pillar_core::dataio::{
    default_informative_classes, generate_synthetic_pillars, load_feature_matrix, load_labels,
    load_split, read_feature_matrix, read_kernel_cache, write_feature_matrix, write_labels,
    write_split, PillarSpec,
};
use pillar_core::fisher::{
    decode_gmm, encode_corpus, gmm_em, load_descriptor_manifest, save_gmm, stack_descriptors,
    FisherError, FvNormalization,
};
use pillar_core::kernels::{
    check_psd, gamma_heuristic, normalize_kernel, self_kernel, GammaMode, Normalization, PsdCheck,
    PSD_TOL,
};
use pillar_core::mkl::{
    decode_mkl_model, l2_mkl, save_mkl_model, silp_l1, trace_csv, MklError, MklParams, PLMK_MAGIC,
};
use pillar_core::pipeline::{
    emit_report, load_inputs, render_table, run_protocol_with_features, FusionPlan, PipelineError,
    PlanOverrides,
};
use pillar_core::svm::{
    decode_multiclass, save_multiclass, train_one_vs_rest, SmoParams, SvmError, PLSV_MAGIC,
};
use pillar_core::{Error, KernelMatrix, KernelParams, LabelVector, NormMode, SyntheticSpec};

use crate::{
    EncodeFisherArgs, Failure, InspectArgs, MakeKernelsArgs, MklFlags, RunProtocolArgs, SvmFlags,
    SynthArgs, TrainMklArgs, TrainSvmArgs,
};

/// Solver breakdowns are internal; everything else traces back to the inputs.
fn is_internal(e: &Error) -> bool {
    match e {
        Error::Lp(_) => true,
        Error::Svm(s) => matches!(s, SvmError::NoConvergence { .. }),
        Error::Mkl(m) => match m {
            MklError::MasterLp(_) | MklError::Lp(_) | MklError::AllKernelsInactive => true,
            MklError::Svm(s) => matches!(s, SvmError::NoConvergence { .. }),
            _ => false,
        },
        Error::Fisher(f) => matches!(f, FisherError::DegenerateComponent(_)),
        Error::Pipeline(p) => match p {
            PipelineError::Pillar { source, .. } | PipelineError::Stage { source, .. } => {
                is_internal(source)
            }
            PipelineError::Json(_) => true,
            _ => false,
        },
        _ => false,
    }
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let message = e.to_string();
        if is_internal(&e) {
            Failure::internal(message)
        } else {
            Failure::user(message)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::user(format!("{}: {e}", path.display())))
}

pub fn synth(a: SynthArgs) -> Result<(), Failure> {
    let flag_min = |name: &str, value: usize, min: usize| {
        if value < min {
            Err(Failure::user(format!(
                "--{name} must be at least {min}, got {value}"
            )))
        } else {
            Ok(())
        }
    };
    flag_min("pillars", a.pillars, 1)?;
    flag_min("classes", a.classes, 2)?;
    flag_min("samples", a.samples, 2 * a.classes)?;
    flag_min("dims", a.dims, 1)?;
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(Failure::user(format!(
            "--noise must be finite and non-negative, got {}",
            a.noise
        )));
    }
    let spec = SyntheticSpec {
        n_samples: a.samples,
        n_classes: a.classes,
        pillars: (0..a.pillars)
            .map(|p| PillarSpec {
                n_dims: a.dims,
                informative_classes: default_informative_classes(p, a.pillars, a.classes),
                noise_sigma: a.noise,
            })
            .collect(),
        seed: a.seed,
    };
    let data = generate_synthetic_pillars(&spec)?;
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Failure::user(format!("{}: {e}", a.out.display())))?;

    let mut plan = PlanOverrides::default();
    plan.set("labels", "labels.txt");
    write_labels(&data.labels, a.out.join("labels.txt"))?;
    let split_names: Vec<String> = data
        .splits
        .iter()
        .map(|s| format!("split{}.txt", s.split_id))
        .collect();
    for (s, name) in data.splits.iter().zip(&split_names) {
        write_split(s, a.out.join(name))?;
    }
    plan.set("splits", split_names.join(","));
    for (p, features) in data.pillars.iter().enumerate() {
        let file = format!("p{p}.plrf");
        write_feature_matrix(features, a.out.join(&file))?;
        plan.set(format!("pillar.p{p}.features"), file);
        plan.set(format!("pillar.p{p}.kernel"), "rbf");
        plan.set(format!("pillar.p{p}.gamma"), "scale");
        plan.set(format!("pillar.p{p}.normalization"), "unit_mean_diag");
    }
    for (g, chunk) in (0..a.pillars).collect::<Vec<_>>().chunks(2).enumerate() {
        let members: Vec<String> = chunk.iter().map(|p| format!("p{p}")).collect();
        plan.set(format!("group.g{g}"), members.join(","));
    }
    plan.set("fusion.mode", "flat");
    plan.set("fusion.norm", "l2");
    plan.set("svm.C", "100");
    plan.set("seed", a.seed.to_string());
    FusionPlan::from_settings(&plan, &a.out)?;
    let plan_path = a.out.join("plan.txt");
    write_text(&plan_path, &plan.to_text())?;
    out!(
        "wrote {} pillars, {} labels, {} splits and {}",
        a.pillars,
        data.labels.len(),
        data.splits.len(),
        plan_path.display()
    );
    Ok(())
}

fn parse_kernel(kernel: &str, gamma: &str) -> Result<Result<KernelParams, GammaMode>, Failure> {
    match kernel {
        "linear" => Ok(Ok(KernelParams::Linear)),
        "rbf" => match gamma {
            "scale" => Ok(Err(GammaMode::Scale)),
            "median" => Ok(Err(GammaMode::Median)),
            g => match g.parse::<f64>() {
                Ok(gamma) if gamma > 0.0 && gamma.is_finite() => {
                    Ok(Ok(KernelParams::Rbf { gamma }))
                }
                _ => Err(Failure::user(format!(
                    "--gamma must be scale, median or a positive number, got {g:?}"
                ))),
            },
        },
        k => Err(Failure::user(format!(
            "--kernel must be rbf or linear, got {k:?}"
        ))),
    }
}

pub fn make_kernels(a: MakeKernelsArgs) -> Result<(), Failure> {
    let normalization = Normalization::parse(&a.normalization).ok_or_else(|| {
        Failure::user(format!(
            "--normalization must be unit_mean_diag or none, got {:?}",
            a.normalization
        ))
    })?;
    let choice = parse_kernel(&a.kernel, &a.gamma)?;
    let mut x = load_feature_matrix(&a.features)?;
    if a.l2norm {
        x = x.l2_normalized_rows();
    }
    let params = match choice {
        Ok(p) => p,
        Err(mode) => KernelParams::Rbf {
            gamma: gamma_heuristic(&x, mode, a.seed)?,
        },
    };
    let pillar = a
        .features
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned());
    let k = self_kernel(&x, &params, pillar.as_deref())?;
    if let PsdCheck::Fail { min_eigenvalue } = check_psd(&k, PSD_TOL) {
        return Err(Failure::user(format!(
            "{}: kernel is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})",
            a.features.display()
        )));
    }
    let k = normalize_kernel(&k, normalization)?;
    k.save(&a.out)?;
    match params {
        KernelParams::Rbf { gamma } => out!("{}x{} rbf kernel, gamma {gamma:.6e}", k.n(), k.n()),
        KernelParams::Linear => out!("{}x{} linear kernel", k.n(), k.n()),
    }
    out!(
        "normalization {} (scale {:.6e})",
        normalization.as_str(),
        k.provenance.scale
    );
    Ok(())
}

fn smo_params(f: &SvmFlags) -> SmoParams {
    let mut p = SmoParams::default();
    if let Some(c) = f.c {
        p.c = c;
    }
    if let Some(t) = f.svm_tol {
        p.tol = t;
    }
    if let Some(m) = f.svm_max_iter {
        p.max_iter = m;
    }
    p
}

/// Kernel and labels restricted to a split's training rows, plus the row map.
fn training_set(
    k: KernelMatrix,
    labels: LabelVector,
    split: Option<&PathBuf>,
) -> Result<(KernelMatrix, LabelVector, Vec<usize>), Failure> {
    if labels.len() != k.n() {
        return Err(Failure::user(format!(
            "{} labels for a {}x{} kernel",
            labels.len(),
            k.n(),
            k.n()
        )));
    }
    match split {
        None => {
            let map = (0..k.n()).collect();
            Ok((k, labels, map))
        }
        Some(path) => {
            let s = load_split(path, 1, labels.len())?;
            s.validate(&labels)?;
            Ok((
                k.restrict(&s.train_indices),
                labels.subset(&s.train_indices),
                s.train_indices,
            ))
        }
    }
}

pub fn train_svm(a: TrainSvmArgs) -> Result<(), Failure> {
    let params = smo_params(&a.svm);
    params.validate()?;
    let k = KernelMatrix::load(&a.kernel)?;
    let labels = load_labels(&a.labels)?;
    let (k, labels, map) = training_set(k, labels, a.split.as_ref())?;
    let mut model = train_one_vs_rest(&k, &labels, &params)?;
    model.set_train_index_map(&map);
    save_multiclass(&model, &a.out)?;
    for (c, m) in model.per_class.iter().enumerate() {
        out!(
            "class {c}: {} support vectors, b = {:.6}, {} pair updates{}",
            m.support_indices.len(),
            m.b,
            m.iterations,
            if m.converged { "" } else { " (not converged)" }
        );
    }
    if a.strict && !model.converged() {
        return Err(Failure::internal(
            "SMO did not converge for at least one class (--strict)",
        ));
    }
    Ok(())
}

fn mkl_params(svm: &SvmFlags, f: &MklFlags) -> Result<(MklParams, NormMode), Failure> {
    let mut p = MklParams {
        svm: smo_params(svm),
        ..MklParams::default()
    };
    if let Some(v) = f.eps {
        p.eps = v;
    }
    if let Some(v) = f.max_cuts {
        p.max_cuts = v;
    }
    if let Some(v) = f.tol {
        p.tol = v;
    }
    if let Some(v) = f.max_iter {
        p.max_iter = v;
    }
    let norm = match &f.norm {
        None => NormMode::L2,
        Some(s) => NormMode::parse(s)
            .ok_or_else(|| Failure::user(format!("--fusion.norm must be l1 or l2, got {s:?}")))?,
    };
    p.svm.validate()?;
    Ok((p, norm))
}

pub fn train_mkl(a: TrainMklArgs) -> Result<(), Failure> {
    let (params, norm) = mkl_params(&a.svm, &a.mkl)?;
    let labels = load_labels(&a.labels)?;
    let mut kernels = Vec::with_capacity(a.kernels.len());
    let mut map = Vec::new();
    for path in &a.kernels {
        let (k, l, m) = training_set(KernelMatrix::load(path)?, labels.clone(), a.split.as_ref())?;
        kernels.push((k, l));
        map = m;
    }
    let train_labels = kernels[0].1.clone();
    let ks: Vec<&KernelMatrix> = kernels.iter().map(|(k, _)| k).collect();
    let mut model = match norm {
        NormMode::L1 => silp_l1(&ks, &train_labels, &params)?,
        NormMode::L2 => l2_mkl(&ks, &train_labels, &params)?,
    };
    model.fused_svm.set_train_index_map(&map);
    save_mkl_model(&model, &a.out)?;
    if let Some(t) = &a.trace {
        write_text(t, &trace_csv(&model))?;
    }
    for (id, b) in model.kernel_ids.iter().zip(&model.beta) {
        out!("{id}: beta = {b:.6}");
    }
    out!(
        "{} norm, {} iterations, {}",
        norm.as_str(),
        model.trace.len(),
        if model.converged {
            "converged"
        } else {
            "stopped at the iteration limit"
        }
    );
    if a.strict && !model.fully_converged() {
        return Err(Failure::internal("MKL did not converge (--strict)"));
    }
    Ok(())
}

pub fn run_protocol(a: RunProtocolArgs) -> Result<(), Failure> {
    let mut ov = PlanOverrides::default();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            ov.set(k, v);
        }
    };
    put("fusion.mode", a.mode.clone());
    put("fusion.norm", a.mkl.norm.clone());
    put("svm.C", a.svm.c.map(|v| v.to_string()));
    put("svm.tol", a.svm.svm_tol.map(|v| v.to_string()));
    put("svm.max_iter", a.svm.svm_max_iter.map(|v| v.to_string()));
    put("mkl.eps", a.mkl.eps.map(|v| v.to_string()));
    put("mkl.max_cuts", a.mkl.max_cuts.map(|v| v.to_string()));
    put("mkl.tol", a.mkl.tol.map(|v| v.to_string()));
    put("mkl.max_iter", a.mkl.max_iter.map(|v| v.to_string()));
    put("seed", a.seed.map(|v| v.to_string()));
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::user(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        ov.set(k.trim(), v.trim());
    }
    let plan = FusionPlan::load_with(&a.plan, &ov)?;
    let (features, labels, splits) = load_inputs(&plan)?;
    let report = run_protocol_with_features(&plan, &features, &labels, &splits)?;
    let (json, csv) = emit_report(&report, &a.out)?;
    print!("{}", render_table(&report));
    eprintln!("wrote {} and {}", json.display(), csv.display());
    if a.strict && !report.converged {
        return Err(Failure::internal(
            "a solver stopped before converging (--strict)",
        ));
    }
    Ok(())
}

pub fn encode_fisher(a: EncodeFisherArgs) -> Result<(), Failure> {
    if a.k == 0 {
        return Err(Failure::user("--k must be at least 1"));
    }
    let sets = load_descriptor_manifest(&a.manifest)?;
    let pooled = stack_descriptors(&sets)?;
    let gmm = gmm_em(&pooled, a.k, a.seed, a.em_tol, a.em_max_iter)?;
    let normalization = if a.raw {
        FvNormalization::Raw
    } else {
        FvNormalization::Improved
    };
    let fv = encode_corpus(&gmm, &sets, normalization)?;
    write_feature_matrix(&fv, &a.out)?;
    let gmm_path = a.gmm.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".plgm");
        PathBuf::from(s)
    });
    save_gmm(&gmm, &gmm_path)?;
    out!(
        "{} descriptor sets, K = {}, D = {} -> {}x{} Fisher vectors; GMM in {}",
        sets.len(),
        gmm.n_components(),
        gmm.dim(),
        fv.n_samples(),
        fv.n_dims(),
        gmm_path.display()
    );
    Ok(())
}

fn check(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn inspect(a: InspectArgs) -> Result<(), Failure> {
    let bytes =
        std::fs::read(&a.file).map_err(|e| Failure::user(format!("{}: {e}", a.file.display())))?;
    let magic: [u8; 4] = bytes
        .get(..4)
        .and_then(|m| m.try_into().ok())
        .ok_or_else(|| {
            Failure::user(format!("{}: shorter than a 4-byte magic", a.file.display()))
        })?;
    let at = |e: Error| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", a.file.display(), f.message);
        f
    };
    match &magic {
        b"PLRF" => {
            let x = read_feature_matrix(&bytes).map_err(|e| at(e.into()))?;
            let (lo, hi) = x
                .values()
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| {
                    (l.min(v), h.max(v))
                });
            out!("PLRF v1: {} samples x {} dims", x.n_samples(), x.n_dims());
            out!("value range [{lo}, {hi}]");
            out!("finite values: ok");
        }
        b"PLRK" => {
            let m = read_kernel_cache(&bytes).map_err(|e| at(e.into()))?;
            out!("PLRK v1: {}x{}", m.rows(), m.cols());
            match KernelMatrix::new(m, Default::default()) {
                Ok(k) => {
                    out!("symmetric and finite: ok");
                    out!("mean diagonal: {:.6e}", k.mean_diagonal());
                    match check_psd(&k, PSD_TOL) {
                        PsdCheck::Pass => out!("positive semidefinite: ok"),
                        PsdCheck::Fail { min_eigenvalue } => {
                            out!(
                                "positive semidefinite: FAIL (min eigenvalue {min_eigenvalue:.3e})"
                            )
                        }
                    }
                }
                Err(e) => out!("symmetric and finite: FAIL ({e})"),
            }
        }
        m if m == PLSV_MAGIC => {
            let model = decode_multiclass(&bytes).map_err(|e| at(e.into()))?;
            out!(
                "PLSV v1: {} classes, {} training rows",
                model.n_classes,
                model.n_train()
            );
            for (c, m) in model.per_class.iter().enumerate() {
                let boxed = m.alpha.iter().all(|&a| (0.0..=m.c).contains(&a));
                let balance = m
                    .alpha
                    .iter()
                    .zip(&m.y)
                    .map(|(a, y)| a * y)
                    .sum::<f64>()
                    .abs();
                out!(
                    "class {c}: C = {}, {} SVs, b = {:.6}, box {}, |sum alpha*y| = {balance:.2e}, converged {}",
                    m.c,
                    m.support_indices.len(),
                    m.b,
                    check(boxed),
                    m.converged
                );
            }
        }
        m if m == PLMK_MAGIC => {
            let model = decode_mkl_model(&bytes).map_err(|e| at(e.into()))?;
            let residual = match model.norm_mode {
                NormMode::L1 => (model.beta.iter().sum::<f64>() - 1.0).abs(),
                NormMode::L2 => (model.beta.iter().map(|b| b * b).sum::<f64>() - 1.0).abs(),
            };
            let monotone = model.trace.windows(2).all(|w| w[1].theta >= w[0].theta);
            out!(
                "PLMK v1: {} norm over {} kernels",
                model.norm_mode.as_str(),
                model.beta.len()
            );
            for (id, b) in model.kernel_ids.iter().zip(&model.beta) {
                out!("  {id}: beta = {b:.6}");
            }
            out!(
                "weight constraint: {} (residual {residual:.2e})",
                check(residual <= 1e-8 && model.beta.iter().all(|&b| b >= 0.0))
            );
            out!(
                "trace: {} entries, theta non-decreasing: {}",
                model.trace.len(),
                check(monotone)
            );
            out!("converged: {}", model.fully_converged());
        }
        b"PLGM" => {
            let g = decode_gmm(&bytes).map_err(|e| at(e.into()))?;
            let wsum: f64 = g.weights.iter().sum();
            let min_var = g.variances.iter().copied().fold(f64::INFINITY, f64::min);
            out!("PLGM v1: K = {}, D = {}", g.n_components(), g.dim());
            out!(
                "weights sum to one: {} ({wsum:.12})",
                check((wsum - 1.0).abs() < 1e-9)
            );
            out!("min variance: {min_var:.3e}");
        }
        _ => {
            return Err(Failure::user(format!(
                "{}: unrecognized magic {:?}",
                a.file.display(),
                String::from_utf8_lossy(&magic)
            )))
        }
    }
    Ok(())
}
