//! Named property checks run by `greedylore check`.
//!
//! Each check prints what it observed next to the bound it was held to.
//! Checks tied to an acceptance criterion carry its id and can be selected by
//! it (`check AC-5`).

use std::fmt::Write as _;

use anyhow::{ensure, Result};
use greedylore::cluster::run_simulator;
use greedylore::compressors::{
    approx_top_r, averaged_lambdas, compress, contraction_ratio, exact_top_r_select,
    random_lowrank_projector, top_indices, Sketch,
};
use greedylore::feedback::ErrorBuffer;
use greedylore::optim::{AdamMode, LrSchedule, MsgdState};
use greedylore::projector::{project, reconstruct};
use greedylore::svd::svd_full;
use greedylore::{
    run, CommLedger, CompressorKind, CompressorState, DenseMatrix, OptimizerConfig, Problem,
    ProblemSpec, Projector, RngStream, RunConfig, RunResult, Simulator, StreamKey,
};

use crate::constants::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub observed: String,
    pub bound: String,
}

impl Outcome {
    fn new(passed: bool, observed: impl Into<String>, bound: impl Into<String>) -> Self {
        Self {
            passed,
            observed: observed.into(),
            bound: bound.into(),
        }
    }
}

pub struct Check {
    pub name: &'static str,
    /// Acceptance criterion this check decides, if any.
    pub criterion: Option<&'static str>,
    pub about: &'static str,
    pub run: fn() -> Result<Outcome>,
}

impl Check {
    /// Matches the check name or its criterion id (`AC-3`, `ac3`).
    pub fn matches(&self, filter: &str) -> bool {
        let norm = |s: &str| s.to_ascii_lowercase().replace(['-', '_'], "");
        self.name == filter || self.criterion.is_some_and(|c| norm(c) == norm(filter))
    }
}

pub fn registry() -> Vec<Check> {
    macro_rules! check {
        ($name:literal, $crit:expr, $about:literal, $f:path) => {
            Check {
                name: $name,
                criterion: $crit,
                about: $about,
                run: $f,
            }
        };
    }
    vec![
        check!("svd_contract", None, "SVD orthonormality, reconstruction, ordering and determinism", svd_contract),
        check!("pythagoras", None, "‖G‖² = ‖PᵀG‖² + ‖G − PPᵀG‖²", pythagoras),
        check!("projection_idempotence", None, "PPᵀ applied twice equals once", projection_idempotence),
        check!("exact_selection_contraction", Some("AC-1"), "exact top-r selection is (1 − r/m)-contractive", exact_selection_contraction),
        check!("sketched_selection_contraction", None, "sketched selection is contractive in expectation", sketched_selection_contraction),
        check!("sketch_unbiased", Some("AC-4"), "E[λ̄_j²] = ‖u_jᵀG‖²", sketch_unbiased),
        check!("topk_membership_ordering", Some("AC-8"), "larger variance, more often in top-k", topk_membership_ordering),
        check!("frozen_projector_witness", None, "frozen projector gives contraction ratio 1", frozen_projector_witness),
        check!("decomposition_identity", None, "P·R + E reconstructs the error-corrected gradient", decomposition_identity),
        check!("error_feedback_nullification", Some("AC-2"), "error feedback is a no-op under a frozen projector", error_feedback_nullification),
        check!("residual_orthogonality", None, "Pᵀ·E = 0 under a frozen projector", residual_orthogonality),
        check!("amsgrad_monotone", None, "amsgrad scalar normalizer never increases", amsgrad_monotone),
        check!("msgd_scale_linearity", None, "scaling gradients by c scales MSGD displacements by c", msgd_scale_linearity),
        check!("optimizer_determinism", None, "optimizers are bitwise deterministic", optimizer_determinism),
        check!("l_smoothness", None, "problem gradients are L-Lipschitz", l_smoothness),
        check!("logistic_bounded", None, "logistic gradients stay bounded", logistic_bounded),
        check!("counterexample_stall", Some("AC-3"), "counterexample iterate (2^-τ, 1) and ratio → 1", counterexample_stall),
        check!("ledger_per_step", Some("AC-9"), "per-step scalars nr + m + mn/τ and nr + mn/τ", ledger_per_step),
        check!("replica_consistency", None, "replicas bit-identical after every step", replica_consistency),
        check!("order_independence", None, "worker visit order and parallelism do not change outputs", order_independence),
        check!("csv_determinism", None, "identical configs give byte-identical traces", csv_determinism),
        check!("convergence_msgd", Some("AC-5"), "compressed MSGD within 2× of uncompressed", convergence_msgd),
        check!("linear_speedup", Some("AC-6"), "tail gradient norm falls with N", linear_speedup),
        check!("convergence_adam", Some("AC-7"), "compressed Adam / amsgrad within 2× of uncompressed", convergence_adam),
        check!("replica_determinism", Some("AC-10"), "AC-5 run repeats byte-identically with agreeing replicas", replica_determinism),
    ]
}

pub fn select(filter: Option<&str>) -> Option<Vec<Check>> {
    let all = registry();
    match filter {
        None => Some(all),
        Some(f) => {
            let hits: Vec<Check> = all.into_iter().filter(|c| c.matches(f)).collect();
            (!hits.is_empty()).then_some(hits)
        }
    }
}

/// One line per check: `PASS name [AC-n]: observed ... | bound ...`.
pub fn report_line(check: &Check, outcome: &Result<Outcome>) -> String {
    let mut line = String::new();
    let tag = check.criterion.map(|c| format!(" [{c}]")).unwrap_or_default();
    match outcome {
        Ok(o) => write!(
            line,
            "{} {}{tag}: observed {} | bound {}",
            if o.passed { "PASS" } else { "FAIL" },
            check.name,
            o.observed,
            o.bound
        ),
        Err(e) => write!(line, "FAIL {}{tag}: error: {e:#}", check.name),
    }
    .unwrap();
    line
}

fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn trial_rng(seed: u64, id: u64) -> RngStream {
    RngStream::derive(seed, StreamKey::Trial { id })
}

fn random_shape(rng: &mut RngStream, max: usize) -> (usize, usize) {
    (1 + rng.below(max), 1 + rng.below(max))
}

fn svd_contract() -> Result<Outcome> {
    let (mut worst_orth, mut worst_rec) = (0f64, 0f64);
    let mut ordered = true;
    let mut deterministic = true;
    for id in 0..LINALG_TRIALS {
        let mut rng = trial_rng(LINALG_SEED, id);
        let (m, n) = random_shape(&mut rng, 24);
        let g = rng.normal_matrix(m, n);
        let s = svd_full(&g)?;
        worst_orth = worst_orth
            .max(s.u.orthonormality_defect())
            .max(s.v.orthonormality_defect());
        let rec = s.reconstruct().sub(&g)?.frobenius_norm() / g.frobenius_norm();
        worst_rec = worst_rec.max(rec);
        ordered &= s.sigma.windows(2).all(|w| w[0] >= w[1]) && s.sigma.iter().all(|x| *x >= 0.0);
        let again = svd_full(&g)?;
        deterministic &= again.u.bit_eq(&s.u) && again.v.bit_eq(&s.v) && again.sigma == s.sigma;
    }
    Ok(Outcome::new(
        worst_orth <= ORTHONORMALITY_TOL && worst_rec <= RECONSTRUCTION_REL_TOL && ordered && deterministic,
        format!("orthonormality {worst_orth:.2e}, reconstruction {worst_rec:.2e}, ordered {ordered}, deterministic {deterministic}"),
        format!("{ORTHONORMALITY_TOL:e}, {RECONSTRUCTION_REL_TOL:e}"),
    ))
}

fn random_projector_and_matrix(id: u64) -> Result<(Projector, DenseMatrix)> {
    let mut rng = trial_rng(LINALG_SEED, 10_000 + id);
    let (m, n) = random_shape(&mut rng, 16);
    let r = 1 + rng.below(m);
    let p = random_lowrank_projector(m, r, &mut rng)?;
    Ok((p, rng.normal_matrix(m, n).scale(1.0 + 10.0 * rng.uniform())))
}

fn pythagoras() -> Result<Outcome> {
    let mut worst = 0f64;
    for id in 0..LINALG_TRIALS {
        let (p, g) = random_projector_and_matrix(id)?;
        let kept = project(&p, &g)?.frobenius_norm_sq();
        let lost = g.sub(&compress(&p, &g)?)?.frobenius_norm_sq();
        let total = g.frobenius_norm_sq();
        worst = worst.max((kept + lost - total).abs() / total);
    }
    Ok(Outcome::new(
        worst <= PYTHAGORAS_REL_TOL,
        format!("max relative gap {worst:.2e}"),
        format!("{PYTHAGORAS_REL_TOL:e}"),
    ))
}

fn projection_idempotence() -> Result<Outcome> {
    let mut worst = 0f64;
    for id in 0..LINALG_TRIALS {
        let (p, g) = random_projector_and_matrix(id)?;
        let once = reconstruct(&p, &project(&p, &g)?)?;
        let twice = reconstruct(&p, &project(&p, &once)?)?;
        worst = worst.max(twice.sub(&once)?.max_abs() / g.max_abs());
    }
    Ok(Outcome::new(
        worst <= IDEMPOTENCE_TOL,
        format!("max relative deviation {worst:.2e}"),
        format!("{IDEMPOTENCE_TOL:e}"),
    ))
}

fn exact_selection_contraction() -> Result<Outcome> {
    let mut violations = 0usize;
    let mut worst = 0f64;
    let mut trials = 0u64;
    for (mi, &m) in CONTRACTION_DIMS.iter().enumerate() {
        for (ri, r) in [1, m / 4, m / 2].into_iter().enumerate() {
            let mut u = DenseMatrix::identity(m);
            for id in 0..CONTRACTION_TRIALS {
                let mut rng = trial_rng(CONTRACTION_SEED, ((mi * 3 + ri) as u64) << 32 | id);
                if id % CONTRACTION_BASIS_REUSE == 0 {
                    let cols = 1 + rng.below(2 * m);
                    u = svd_full(&rng.normal_matrix(m, cols))?.u;
                }
                let n = 1 + rng.below(2 * m);
                let g = rng.normal_matrix(m, n);
                let p = exact_top_r_select(&u, &g, r)?;
                let lost = g.sub(&compress(&p, &g)?)?.frobenius_norm_sq();
                let bound = (1.0 - r as f64 / m as f64) * g.frobenius_norm_sq();
                if lost > bound + CONTRACTION_SLACK {
                    violations += 1;
                }
                worst = worst.max(lost / g.frobenius_norm_sq() - (1.0 - r as f64 / m as f64));
                trials += 1;
            }
        }
    }
    Ok(Outcome::new(
        violations == 0,
        format!("{violations} violations in {trials} trials, max ratio − (1 − r/m) = {worst:.3e}"),
        format!("ratio ≤ 1 − r/m + {CONTRACTION_SLACK:e}"),
    ))
}

fn sketched_selection_contraction() -> Result<Outcome> {
    let mut worst_margin = f64::NEG_INFINITY;
    let mut passed = true;
    for (case, (m, n, r, nodes)) in [(6usize, 5usize, 2usize, 3usize), (8, 12, 1, 4), (8, 12, 4, 2)]
        .into_iter()
        .enumerate()
    {
        let mut setup = trial_rng(EXPECTED_CONTRACTION_SEED, case as u64);
        let u = svd_full(&setup.normal_matrix(m, n))?.u;
        let locals: Vec<DenseMatrix> = (0..nodes)
            .map(|_| {
                let z = setup.normal_matrix(m, n);
                DenseMatrix::from_fn(m, n, |i, j| z.get(i, j) * (1 + i) as f64)
            })
            .collect();
        let g = greedylore::comm::tree_mean(&locals)?;
        let mut ledger = CommLedger::new();
        let samples = (0..EXPECTED_CONTRACTION_DRAWS)
            .map(|d| {
                let mut rng = RngStream::derive(
                    EXPECTED_CONTRACTION_SEED + 1 + case as u64,
                    StreamKey::Shared { step: d },
                );
                let p = approx_top_r(&locals, &u, r, &mut rng, &mut ledger)?;
                Ok(g.sub(&compress(&p, &g)?)?.frobenius_norm_sq())
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, se) = mean_se(&samples);
        let bound = (1.0 - r as f64 / m as f64) * g.frobenius_norm_sq();
        passed &= mean <= bound + SE_MULTIPLIER * se;
        worst_margin = worst_margin.max((mean - bound) / se);
    }
    Ok(Outcome::new(
        passed,
        format!("max (mean − bound)/SE = {worst_margin:.2}"),
        format!("≤ {SE_MULTIPLIER}"),
    ))
}

fn sketch_unbiased() -> Result<Outcome> {
    let (m, n) = SKETCH_SHAPE;
    let mut worst = 0f64;
    for matrix in 0..SKETCH_MATRICES {
        let mut setup = trial_rng(SKETCH_SEED, matrix);
        let u = svd_full(&setup.normal_matrix(m, n))?.u;
        let locals: Vec<DenseMatrix> = (0..SKETCH_NODES).map(|_| setup.normal_matrix(m, n)).collect();
        let g = greedylore::comm::tree_mean(&locals)?;
        let target = u.t_matmul(&g)?.row_norms_sq();
        let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(SKETCH_DRAWS as usize); m];
        let mut ledger = CommLedger::new();
        for d in 0..SKETCH_DRAWS {
            let mut rng = RngStream::derive(SKETCH_SEED + 1 + matrix, StreamKey::Shared { step: d });
            let sketch = Sketch::draw(m, n, &mut rng);
            let lambdas = averaged_lambdas(&locals, &u, &sketch, &mut ledger)?;
            for (row, l) in rows.iter_mut().zip(&lambdas) {
                row.push(l * l);
            }
        }
        for (row, t) in rows.iter().zip(&target) {
            let (mean, se) = mean_se(row);
            worst = worst.max((mean - t).abs() / se);
        }
    }
    Ok(Outcome::new(
        worst <= SE_MULTIPLIER,
        format!("max |mean − ‖u_jᵀG‖²|/SE = {worst:.2} over {SKETCH_MATRICES}×{m} rows"),
        format!("≤ {SE_MULTIPLIER}"),
    ))
}

fn topk_membership_ordering() -> Result<Outcome> {
    let mut cases: Vec<(Vec<f64>, usize)> = vec![
        (ORDERING_SIGMAS.to_vec(), 1),
        (ORDERING_SIGMAS.to_vec(), ORDERING_SIGMAS.len() - 1),
    ];
    for m in ORDERING_EXTRA_DIMS {
        let sigmas: Vec<f64> = (0..m).map(|i| (m - i) as f64).collect();
        cases.push((sigmas.clone(), 1));
        cases.push((sigmas, m - 1));
    }
    let mut worst = f64::NEG_INFINITY;
    for (case, (sigmas, k)) in cases.iter().enumerate() {
        let m = sigmas.len();
        let mut rng = trial_rng(ORDERING_SEED, case as u64);
        let mut counts = vec![0u64; m];
        for _ in 0..ORDERING_TRIALS {
            let mags: Vec<f64> = sigmas.iter().map(|s| (s * rng.standard_normal()).abs()).collect();
            for i in top_indices(&mags, *k) {
                counts[i] += 1;
            }
        }
        let freq: Vec<f64> = counts.iter().map(|c| *c as f64 / ORDERING_TRIALS as f64).collect();
        for i in 0..m - 1 {
            let var = freq[i] * (1.0 - freq[i]) + freq[i + 1] * (1.0 - freq[i + 1]);
            let se = (var / ORDERING_TRIALS as f64).sqrt().max(f64::MIN_POSITIVE);
            worst = worst.max((freq[i + 1] - freq[i]) / se);
        }
    }
    Ok(Outcome::new(
        worst <= SE_MULTIPLIER,
        format!("max (p_(i+1) − p_i)/SE = {worst:.2} over {} cases", cases.len()),
        format!("≤ {SE_MULTIPLIER}"),
    ))
}

fn frozen_projector_witness() -> Result<Outcome> {
    let mut state = CompressorState::new(2, 1, 10)?;
    let p = state.lazy_svd_update(&DenseMatrix::from_diag(&[2.0, 1.0]), 0)?.clone();
    let g = DenseMatrix::from_diag(&[0.0, 1.0]);
    let ratio = contraction_ratio(&g, &compress(&p, &g)?)?;
    Ok(Outcome::new(ratio == 1.0, format!("ratio {ratio}"), "exactly 1"))
}

fn frozen_projector(seed: u64, m: usize, r: usize) -> Result<Projector> {
    let mut rng = trial_rng(seed, 0);
    Ok(Projector::leading(&svd_full(&rng.normal_matrix(m, m + 1))?.u, r))
}

fn error_feedback_nullification() -> Result<Outcome> {
    let (m, n, r) = NULLIFICATION_SHAPE;
    let p = frozen_projector(NULLIFICATION_SEED, m, r)?;
    let mut rng = trial_rng(NULLIFICATION_SEED, 1);
    let mut buf = ErrorBuffer::zeros(m, n);
    let mut worst = 0f64;
    for t in 1..NULLIFICATION_PERIOD {
        let raw = rng.normal_matrix(m, n);
        let with_error = buf.inject(&raw)?;
        let with_ef = compress(&p, &with_error)?;
        worst = worst.max(with_ef.sub(&compress(&p, &raw)?)?.frobenius_norm());
        let r_local = project(&p, &with_error)?;
        buf.update(&with_error, &p, &r_local, t, NULLIFICATION_PERIOD)?;
    }
    Ok(Outcome::new(
        worst < NULLIFICATION_TOL,
        format!("max ‖C(G+E) − C(G)‖ = {worst:.2e} over τ = {NULLIFICATION_PERIOD}"),
        format!("< {NULLIFICATION_TOL:e}"),
    ))
}

fn decomposition_identity() -> Result<Outcome> {
    let (m, n, r) = NULLIFICATION_SHAPE;
    let p = frozen_projector(NULLIFICATION_SEED, m, r)?;
    let mut rng = trial_rng(NULLIFICATION_SEED, 2);
    let mut buf = ErrorBuffer::zeros(m, n);
    let mut worst = 0f64;
    for t in 1..NULLIFICATION_PERIOD {
        let with_error = buf.inject(&rng.normal_matrix(m, n))?;
        let r_local = project(&p, &with_error)?;
        buf.update(&with_error, &p, &r_local, t, NULLIFICATION_PERIOD)?;
        let rebuilt = p.basis().matmul(&r_local)?.add(buf.residual())?;
        worst = worst.max(rebuilt.sub(&with_error)?.max_abs());
    }
    Ok(Outcome::new(
        worst <= DECOMPOSITION_TOL,
        format!("max |P·R + E − G| = {worst:.2e}"),
        format!("{DECOMPOSITION_TOL:e}"),
    ))
}

fn residual_orthogonality() -> Result<Outcome> {
    let (m, n, r) = NULLIFICATION_SHAPE;
    let p = frozen_projector(NULLIFICATION_SEED, m, r)?;
    let mut rng = trial_rng(NULLIFICATION_SEED, 3);
    let mut buf = ErrorBuffer::zeros(m, n);
    let mut worst = 0f64;
    for t in 1..NULLIFICATION_PERIOD {
        let with_error = buf.inject(&rng.normal_matrix(m, n))?;
        let r_local = project(&p, &with_error)?;
        buf.update(&with_error, &p, &r_local, t, NULLIFICATION_PERIOD)?;
        worst = worst.max(project(&p, buf.residual())?.max_abs());
    }
    Ok(Outcome::new(
        worst <= ORTHOGONAL_RESIDUAL_TOL,
        format!("max |PᵀE| = {worst:.2e}"),
        format!("{ORTHOGONAL_RESIDUAL_TOL:e}"),
    ))
}

fn adam(lr: f64, mode: AdamMode) -> OptimizerConfig {
    OptimizerConfig::Adam {
        lr,
        beta1: 0.9,
        beta2: 0.99,
        epsilon: 1e-8,
        mode,
        schedule: LrSchedule::Constant,
    }
}

fn msgd(lr: f64, beta: f64) -> OptimizerConfig {
    OptimizerConfig::Msgd {
        lr,
        beta,
        schedule: LrSchedule::Constant,
    }
}

fn amsgrad_monotone() -> Result<Outcome> {
    let mut increases = 0usize;
    for id in 0..20 {
        let mut opt = adam(0.01, AdamMode::Amsgrad).build(3, 4);
        let mut rng = trial_rng(OPTIM_SEED, id);
        let mut x = DenseMatrix::zeros(3, 4);
        let mut prev = f64::INFINITY;
        for t in 0..200 {
            let scale = if t % 50 < 25 { 1.0 } else { 0.01 };
            x = opt.step(&x, &rng.normal_matrix(3, 4).scale(scale))?;
            let now = opt.amsgrad_normalizer().expect("amsgrad mode");
            if now > prev {
                increases += 1;
            }
            prev = now;
        }
    }
    Ok(Outcome::new(increases == 0, format!("{increases} increases in 4000 steps"), "0"))
}

fn msgd_scale_linearity() -> Result<Outcome> {
    let mut worst = 0f64;
    for (id, c) in [-3.0, 0.5, 2.0, 7.25].into_iter().enumerate() {
        let mut rng = trial_rng(OPTIM_SEED, 100 + id as u64);
        let x0 = rng.normal_matrix(4, 5);
        let mut a = MsgdState::new(4, 5, 0.9, 0.1);
        let mut b = MsgdState::new(4, 5, 0.9, 0.1);
        let (mut xa, mut xb) = (x0.clone(), x0.clone());
        for _ in 0..50 {
            let g = rng.normal_matrix(4, 5);
            xa = a.step(&xa, &g)?;
            xb = b.step(&xb, &g.scale(c))?;
            let dm = b.m.sub(&a.m.scale(c))?.max_abs() / (1.0 + a.m.max_abs() * c.abs());
            let da = xa.sub(&x0)?;
            let dx = xb.sub(&x0)?.sub(&da.scale(c))?.max_abs() / (1.0 + da.max_abs() * c.abs());
            worst = worst.max(dm).max(dx);
        }
    }
    Ok(Outcome::new(
        worst <= SCALE_LINEARITY_TOL,
        format!("max relative deviation {worst:.2e}"),
        format!("{SCALE_LINEARITY_TOL:e}"),
    ))
}

fn optimizer_determinism() -> Result<Outcome> {
    let mut identical = true;
    for cfg in [msgd(0.1, 0.9), adam(0.05, AdamMode::Practical), adam(0.05, AdamMode::Amsgrad)] {
        let trajectory = || -> Result<Vec<DenseMatrix>> {
            let mut opt = cfg.build(3, 3);
            let mut rng = trial_rng(OPTIM_SEED, 200);
            let mut x = DenseMatrix::identity(3);
            let mut out = Vec::new();
            for _ in 0..100 {
                x = opt.step(&x, &rng.normal_matrix(3, 3))?;
                out.push(x.clone());
            }
            Ok(out)
        };
        let (a, b) = (trajectory()?, trajectory()?);
        identical &= a.iter().zip(&b).all(|(p, q)| p.bit_eq(q));
    }
    Ok(Outcome::new(identical, format!("bit-identical: {identical}"), "bit-identical"))
}

fn l_smoothness() -> Result<Outcome> {
    let specs = [
        ProblemSpec::quadratic(4, 6, 2.5, 0.0, 1.0),
        ProblemSpec::counterexample(1.5),
        ProblemSpec::logistic(4, 6, 0.8, 0.0),
    ];
    let mut worst = 0f64;
    for (i, spec) in specs.iter().enumerate() {
        let p = Problem::new(spec, 3, 7)?;
        let (m, n) = spec.shape();
        let mut rng = trial_rng(OPTIM_SEED, 300 + i as u64);
        for _ in 0..100 {
            let x = rng.normal_matrix(m, n).scale(3.0);
            let y = rng.normal_matrix(m, n).scale(3.0);
            let lhs = p.full_grad(&x)?.sub(&p.full_grad(&y)?)?.frobenius_norm();
            let rhs = spec.smoothness * x.sub(&y)?.frobenius_norm();
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(Outcome::new(
        worst <= 1.0 + 1e-12,
        format!("max ‖∇f(X) − ∇f(Y)‖ / (L‖X − Y‖) = {worst:.6}"),
        "≤ 1",
    ))
}

fn logistic_bounded() -> Result<Outcome> {
    let l = 0.8;
    let p = Problem::new(&ProblemSpec::logistic(4, 6, l, 0.0), 4, 5)?;
    let bound = 2.0 * l.sqrt(); // √2 · √(2L)
    let mut worst = 0f64;
    let mut rng = trial_rng(OPTIM_SEED, 400);
    for _ in 0..200 {
        let x = rng.normal_matrix(4, 6).scale(20.0 * rng.uniform());
        for node in 0..4 {
            worst = worst.max(p.grad(node, &x)?.frobenius_norm());
        }
    }
    Ok(Outcome::new(
        worst <= bound,
        format!("max ‖∇f_i‖ = {worst:.4}"),
        format!("≤ √(4L) = {bound:.4}"),
    ))
}

fn counterexample_stall() -> Result<Outcome> {
    let tau = COUNTEREXAMPLE_PERIOD;
    let l = 1.0;
    let problem = Problem::new(&ProblemSpec::counterexample(l), 1, 0)?;
    let mut x = problem.initial_point();
    let mut state = CompressorState::new(2, 1, tau as usize)?;
    let p = state.lazy_svd_update(&problem.full_grad(&x)?, 0)?.clone();
    let mut opt = MsgdState::new(2, 2, 0.0, 1.0 / (2.0 * l));
    for _ in 0..tau {
        let g = problem.full_grad(&x)?;
        x = opt.step(&x, &compress(&p, &g)?)?;
    }
    let expected = DenseMatrix::from_diag(&[2f64.powi(-tau), 1.0]);
    let g = problem.full_grad(&x)?;
    let ratio = contraction_ratio(&g, &compress(&p, &g)?)?;
    let q = 2f64.powi(-2 * tau);
    let exact_ratio = 1.0 - q / (q + 0.25);
    let passed = x == expected && ratio > COUNTEREXAMPLE_MIN_RATIO && (ratio - exact_ratio).abs() <= 1e-15;
    Ok(Outcome::new(
        passed,
        format!("iterate ({:e}, {}), ratio {ratio}", x.get(0, 0), x.get(1, 1)),
        format!("(2^-{tau}, 1) exactly, ratio {exact_ratio} > {COUNTEREXAMPLE_MIN_RATIO}"),
    ))
}

fn ledger_config(compressor: CompressorKind, optimizer: OptimizerConfig) -> RunConfig {
    let (m, n) = LEDGER_SHAPE;
    RunConfig {
        n_nodes: 2,
        steps: LEDGER_STEPS,
        period: LEDGER_PERIOD,
        rank: LEDGER_RANK,
        optimizer,
        compressor,
        problem: ProblemSpec::quadratic(m, n, 1.0, 0.5, 0.5),
        seed: 0,
        metrics_every: LEDGER_STEPS,
        replica_check_every: 50,
        parallel: false,
    }
}

fn ledger_per_step() -> Result<Outcome> {
    let (m, n) = LEDGER_SHAPE;
    let (r, tau) = (LEDGER_RANK, LEDGER_PERIOD);
    let greedy_expected = (n * r + m) as f64 + (m * n) as f64 / tau as f64;
    let galore_expected = (n * r) as f64 + (m * n) as f64 / tau as f64;
    let greedy = run(&ledger_config(CompressorKind::greedylore(), msgd(0.1, 0.9)))?.comm_per_step();
    let galore = run(&ledger_config(CompressorKind::GaLore, adam(0.01, AdamMode::Practical)))?.comm_per_step();
    Ok(Outcome::new(
        greedy == greedy_expected && galore == galore_expected,
        format!("greedylore {greedy}, galore {galore}"),
        format!("{greedy_expected}, {galore_expected}"),
    ))
}

fn small_config(compressor: CompressorKind, optimizer: OptimizerConfig) -> RunConfig {
    RunConfig {
        n_nodes: 5,
        steps: 120,
        period: 12,
        rank: 2,
        optimizer,
        compressor,
        problem: ProblemSpec::quadratic(6, 10, 1.0, 0.8, 0.7),
        seed: 5,
        metrics_every: 1,
        replica_check_every: REPLICA_CHECK_EVERY,
        parallel: false,
    }
}

fn all_compressors() -> Vec<(CompressorKind, OptimizerConfig)> {
    vec![
        (CompressorKind::greedylore(), msgd(0.1, 0.9)),
        (CompressorKind::greedylore(), adam(0.01, AdamMode::Amsgrad)),
        (CompressorKind::LazySvd { error_feedback: false }, msgd(0.1, 0.9)),
        (CompressorKind::GaLore, adam(0.01, AdamMode::Practical)),
        (CompressorKind::RandomLowrank, msgd(0.1, 0.9)),
        (CompressorKind::TopK { k: 12 }, msgd(0.1, 0.9)),
        (CompressorKind::RandK { k: 12 }, msgd(0.05, 0.9)),
        (CompressorKind::None, adam(0.01, AdamMode::Practical)),
    ]
}

fn replica_consistency() -> Result<Outcome> {
    let mut checked = 0usize;
    for (kind, opt) in all_compressors() {
        let mut sim = Simulator::new(small_config(kind, opt))?;
        for _ in 0..120 {
            sim.step()?;
            ensure!(sim.replicas_agree(), "{} replicas diverged at step {}", kind.tag(), sim.step_index());
            checked += 1;
        }
    }
    Ok(Outcome::new(true, format!("{checked} step checks, all bit-identical"), "bit-identical"))
}

fn order_independence() -> Result<Outcome> {
    let mut identical = true;
    for (kind, opt) in all_compressors() {
        let cfg = small_config(kind, opt);
        let base = run(&cfg)?;
        let mut sim = Simulator::new(cfg.clone())?;
        sim.set_visit_order((0..cfg.n_nodes).rev().collect())?;
        let reversed = run_simulator(sim)?;
        let mut par = cfg.clone();
        par.parallel = true;
        let parallel = run(&par)?;
        identical &= base.trace_csv() == reversed.trace_csv()
            && base.trace_csv() == parallel.trace_csv()
            && base.final_x.bit_eq(&reversed.final_x)
            && base.final_x.bit_eq(&parallel.final_x);
    }
    Ok(Outcome::new(identical, format!("bit-identical: {identical}"), "bit-identical"))
}

fn csv_determinism() -> Result<Outcome> {
    let mut identical = true;
    for (kind, opt) in all_compressors() {
        let cfg = small_config(kind, opt);
        identical &= run(&cfg)?.trace_csv() == run(&cfg)?.trace_csv();
    }
    Ok(Outcome::new(identical, format!("byte-identical: {identical}"), "byte-identical"))
}

/// Heterogeneous quadratic used by the convergence criteria.
pub fn convergence_config(
    compressor: CompressorKind,
    optimizer: OptimizerConfig,
    n_nodes: usize,
    sigma: f64,
    steps: usize,
) -> RunConfig {
    RunConfig {
        n_nodes,
        steps,
        period: CONVERGENCE_PERIOD,
        rank: CONVERGENCE_RANK,
        optimizer,
        compressor,
        problem: ProblemSpec::quadratic(
            CONVERGENCE_DIM,
            CONVERGENCE_DIM,
            1.0,
            sigma,
            CONVERGENCE_HETEROGENEITY,
        ),
        seed: CONVERGENCE_SEED,
        metrics_every: 1,
        replica_check_every: 50,
        parallel: false,
    }
}

fn msgd_pair() -> Result<(RunResult, RunResult)> {
    let opt = msgd(CONVERGENCE_MSGD_LR, CONVERGENCE_MSGD_BETA);
    let cfg = |kind| {
        convergence_config(kind, opt, CONVERGENCE_NODES, CONVERGENCE_SIGMA, CONVERGENCE_STEPS)
    };
    Ok((run(&cfg(CompressorKind::greedylore()))?, run(&cfg(CompressorKind::None))?))
}

fn convergence_msgd() -> Result<Outcome> {
    let (greedy, plain) = msgd_pair()?;
    let g = greedy.tail_mean_grad_norm_sq(TAIL_FRACTION);
    let u = plain.tail_mean_grad_norm_sq(TAIL_FRACTION);
    let (m, r, tau) = (CONVERGENCE_DIM, CONVERGENCE_RANK, CONVERGENCE_PERIOD);
    let expected_comm = (m * r + m) as f64 + (m * m) as f64 / tau as f64;
    let comm = greedy.comm_per_step();
    Ok(Outcome::new(
        g <= CONVERGENCE_FACTOR * u && comm == expected_comm,
        format!("tail ‖∇f‖² greedylore {g:.4e} vs uncompressed {u:.4e} (×{:.3}), scalars/step {comm}", g / u),
        format!("≤ {CONVERGENCE_FACTOR}× uncompressed, scalars/step {expected_comm}"),
    ))
}

fn linear_speedup() -> Result<Outcome> {
    let mut tails = Vec::new();
    for &n_nodes in &SPEEDUP_NODES {
        let lr = SPEEDUP_BASE_LR * (n_nodes as f64).sqrt();
        let cfg = convergence_config(
            CompressorKind::greedylore(),
            msgd(lr, CONVERGENCE_MSGD_BETA),
            n_nodes,
            SPEEDUP_SIGMA,
            SPEEDUP_STEPS,
        );
        tails.push(run(&cfg)?.tail_mean_grad_norm_sq(TAIL_FRACTION));
    }
    let monotone = tails.windows(2).all(|w| w[1] < w[0]);
    let ratio = tails[tails.len() - 1] / tails[0];
    let shown: Vec<String> = SPEEDUP_NODES
        .iter()
        .zip(&tails)
        .map(|(n, t)| format!("N={n}: {t:.4e}"))
        .collect();
    Ok(Outcome::new(
        monotone && ratio <= SPEEDUP_MAX_RATIO,
        format!("{}; N=16/N=1 = {ratio:.3}", shown.join(", ")),
        format!("decreasing in N, ratio ≤ {SPEEDUP_MAX_RATIO}"),
    ))
}

fn convergence_adam() -> Result<Outcome> {
    let mut passed = true;
    let mut parts = Vec::new();
    for mode in [AdamMode::Practical, AdamMode::Amsgrad] {
        let cfg = |kind| {
            convergence_config(
                kind,
                adam(CONVERGENCE_ADAM_LR, mode),
                CONVERGENCE_NODES,
                CONVERGENCE_SIGMA,
                CONVERGENCE_STEPS,
            )
        };
        let plain = run(&cfg(CompressorKind::None))?;
        let mut sim = Simulator::new(cfg(CompressorKind::greedylore()))?;
        let mut prev = f64::INFINITY;
        let mut monotone = true;
        for _ in 0..CONVERGENCE_STEPS {
            sim.step()?;
            if let Some(now) = sim.workers()[0].optimizer.amsgrad_normalizer() {
                monotone &= now <= prev;
                prev = now;
            }
        }
        let (loss, grad_norm_sq) = sim.metrics()?;
        let ratio = loss / plain.final_loss;
        passed &= ratio <= CONVERGENCE_FACTOR && monotone;
        parts.push(format!(
            "{mode:?}: final loss {loss:.4e} vs {:.4e} (×{ratio:.3}), final ‖∇f‖² {grad_norm_sq:.2e} vs {:.2e}{}",
            plain.final_loss,
            plain.final_grad_norm_sq,
            if mode == AdamMode::Amsgrad {
                format!(", normalizer nonincreasing {monotone}")
            } else {
                String::new()
            }
        ));
    }
    Ok(Outcome::new(
        passed,
        parts.join("; "),
        format!("≤ {CONVERGENCE_FACTOR}× uncompressed, normalizer nonincreasing"),
    ))
}

fn replica_determinism() -> Result<Outcome> {
    let mut cfg = convergence_config(
        CompressorKind::greedylore(),
        msgd(CONVERGENCE_MSGD_LR, CONVERGENCE_MSGD_BETA),
        CONVERGENCE_NODES,
        CONVERGENCE_SIGMA,
        CONVERGENCE_STEPS,
    );
    cfg.replica_check_every = REPLICA_CHECK_EVERY;
    // a replica mismatch aborts the run with an error
    let first = run(&cfg)?.trace_csv();
    let second = run(&cfg)?.trace_csv();
    cfg.parallel = true;
    let parallel = run(&cfg)?.trace_csv();
    let identical = first == second && first == parallel;
    Ok(Outcome::new(
        identical,
        format!("{} trace bytes, repeat identical {}, parallel identical {}", first.len(), first == second, first == parallel),
        "byte-identical, replicas agree every step",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every invariant and acceptance criterion of the simulator, by name.
    const REQUIRED: &[&str] = &[
        "svd_contract",
        "pythagoras",
        "projection_idempotence",
        "exact_selection_contraction",
        "sketched_selection_contraction",
        "sketch_unbiased",
        "topk_membership_ordering",
        "frozen_projector_witness",
        "decomposition_identity",
        "error_feedback_nullification",
        "residual_orthogonality",
        "amsgrad_monotone",
        "msgd_scale_linearity",
        "optimizer_determinism",
        "l_smoothness",
        "logistic_bounded",
        "counterexample_stall",
        "ledger_per_step",
        "replica_consistency",
        "order_independence",
        "csv_determinism",
        "convergence_msgd",
        "linear_speedup",
        "convergence_adam",
        "replica_determinism",
    ];

    #[test]
    fn registry_is_complete() {
        let names: Vec<&str> = registry().iter().map(|c| c.name).collect();
        assert_eq!(names, REQUIRED);
        let mut criteria: Vec<&str> = registry().iter().filter_map(|c| c.criterion).collect();
        criteria.sort_by_key(|c| c[3..].parse::<u32>().unwrap());
        let expected: Vec<String> = (1..=10).map(|i| format!("AC-{i}")).collect();
        assert_eq!(criteria, expected);
    }

    #[test]
    fn filters_by_name_or_criterion() {
        assert_eq!(select(Some("ledger_per_step")).unwrap().len(), 1);
        assert_eq!(select(Some("ac9")).unwrap()[0].name, "ledger_per_step");
        assert_eq!(select(Some("AC-10")).unwrap()[0].name, "replica_determinism");
        assert!(select(Some("nope")).is_none());
        assert_eq!(select(None).unwrap().len(), REQUIRED.len());
    }

    #[test]
    fn fast_checks_pass() {
        for name in ["frozen_projector_witness", "counterexample_stall", "decomposition_identity", "error_feedback_nullification"] {
            let check = &select(Some(name)).unwrap()[0];
            let outcome = (check.run)().unwrap();
            assert!(outcome.passed, "{}", report_line(check, &Ok(outcome.clone())));
        }
    }
}
