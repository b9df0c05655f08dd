use greedylore::cluster::run_simulator;
use greedylore::compressors::{compress, contraction_ratio};
use greedylore::optim::{AdamMode, LrSchedule, MsgdState};
use greedylore::{
    run, CommKind, CompressorKind, CompressorState, DenseMatrix, OptimizerConfig, Problem, ProblemSpec,
    RngStream, RunConfig, Selection, Simulator, StreamKey,
};

fn msgd(lr: f64, beta: f64) -> OptimizerConfig {
    OptimizerConfig::Msgd {
        lr,
        beta,
        schedule: LrSchedule::Constant,
    }
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

fn base(compressor: CompressorKind, optimizer: OptimizerConfig) -> RunConfig {
    RunConfig {
        n_nodes: 3,
        steps: 60,
        period: 10,
        rank: 2,
        optimizer,
        compressor,
        problem: ProblemSpec::quadratic(5, 7, 1.0, 0.7, 0.8),
        seed: 2024,
        metrics_every: 1,
        replica_check_every: 1,
        parallel: false,
    }
}

#[test]
fn full_rank_greedylore_matches_uncompressed_bitwise() {
    for opt in [msgd(0.2, 0.9), adam(0.05, AdamMode::Practical), adam(0.05, AdamMode::Amsgrad)] {
        let mut cfg = base(CompressorKind::greedylore(), opt);
        cfg.rank = 5;
        let compressed = run(&cfg).unwrap();
        cfg.compressor = CompressorKind::None;
        let plain = run(&cfg).unwrap();
        assert!(compressed.final_x.bit_eq(&plain.final_x));
        for (a, b) in compressed.traces.iter().zip(&plain.traces) {
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        }
    }
}

#[test]
fn unit_period_always_sends_full_gradient() {
    let mut cfg = base(CompressorKind::greedylore(), msgd(0.2, 0.9));
    cfg.period = 1;
    let res = run(&cfg).unwrap();
    let t = cfg.steps as u64;
    assert_eq!(res.ledger.total_for(CommKind::FullGrad), 35 * t);
    assert!(res.traces.iter().all(|tr| tr.contraction_observed == Some(0.0)));
    // same trajectory as uncompressed: the compressed path is never taken
    cfg.compressor = CompressorKind::None;
    assert!(run(&cfg).unwrap().final_x.bit_eq(&res.final_x));
}

#[test]
fn ledger_matches_per_iteration_formula() {
    let (m, n, r, tau) = (64u64, 64u64, 8u64, 16u64);
    let mut cfg = RunConfig {
        n_nodes: 2,
        steps: 160,
        period: tau as usize,
        rank: r as usize,
        optimizer: msgd(0.1, 0.9),
        compressor: CompressorKind::greedylore(),
        problem: ProblemSpec::quadratic(m as usize, n as usize, 1.0, 0.1, 0.5),
        seed: 1,
        metrics_every: 40,
        replica_check_every: 50,
        parallel: false,
    };
    let res = run(&cfg).unwrap();
    assert_eq!(res.ledger.scalars_allreduce(), 160 * (n * r + m + m * n / tau));
    cfg.compressor = CompressorKind::GaLore;
    cfg.optimizer = adam(0.01, AdamMode::Practical);
    let res = run(&cfg).unwrap();
    assert_eq!(res.ledger.scalars_allreduce(), 160 * (n * r + m * n / tau));
}

#[test]
fn hand_executed_compressed_loop() {
    // One node, no noise, 2×2 quadratic centered at C = diag(3, 1), plain GD.
    let gamma = 0.3;
    let c = DenseMatrix::from_diag(&[3.0, 1.0]);
    let problem = Problem::quadratic_with_centers(1.0, 0.0, vec![c.clone()]).unwrap();
    let cfg = RunConfig {
        n_nodes: 1,
        steps: 3,
        period: 2,
        rank: 1,
        optimizer: msgd(gamma, 0.0),
        compressor: CompressorKind::greedylore(),
        problem: ProblemSpec::quadratic(2, 2, 1.0, 0.0, 0.0),
        seed: 77,
        metrics_every: 1,
        replica_check_every: 1,
        parallel: false,
    };
    let mut sim = Simulator::with_problem(cfg, problem).unwrap();

    // t = 0: full gradient, U = I from SVD of diag(-3, -1)
    let (c0, c1) = (3.0, 1.0);
    let x1 = [gamma * c0, gamma * c1];
    sim.step().unwrap();
    assert_eq!(sim.compressor_state().basis_u(), &DenseMatrix::identity(2));
    assert_eq!(sim.x(), &DenseMatrix::from_diag(&x1));

    // t = 1: sketch picks the row with larger (G_jj · v_j[j])²
    let g1 = [x1[0] - c0, x1[1] - c1];
    let v = RngStream::derive(77, StreamKey::Shared { step: 1 }).normal_matrix(2, 2);
    let score = [(g1[0] * v.get(0, 0)).powi(2), (g1[1] * v.get(1, 1)).powi(2)];
    let keep = if score[1] > score[0] { 1 } else { 0 };
    let mut sent = [0.0, 0.0];
    sent[keep] = g1[keep];
    let residual = [g1[0] - sent[0], g1[1] - sent[1]];
    let x2 = [x1[0] - gamma * sent[0], x1[1] - gamma * sent[1]];
    sim.step().unwrap();
    assert_eq!(sim.x(), &DenseMatrix::from_diag(&x2));
    assert_eq!(sim.workers()[0].error.residual(), &DenseMatrix::from_diag(&residual));

    // t = 2: period start, averaged gradient still carries the residual
    let g2 = [x2[0] - c0 + residual[0], x2[1] - c1 + residual[1]];
    let x3 = [x2[0] - gamma * g2[0], x2[1] - gamma * g2[1]];
    sim.step().unwrap();
    assert_eq!(sim.x(), &DenseMatrix::from_diag(&x3));
    assert!(sim.workers()[0].error.is_zero());
}

#[test]
fn galore_with_identity_basis_matches_full_adam() {
    // Diagonal centers with distinct entries make the first SVD return U = I,
    // so the subspace optimizer runs on the full gradient.
    let c = DenseMatrix::from_fn(3, 4, |i, j| if i == j { 3.0 - i as f64 } else { 0.0 });
    let problem = Problem::quadratic_with_centers(1.0, 0.0, vec![c.clone(), c]).unwrap();
    let cfg = RunConfig {
        n_nodes: 2,
        steps: 80,
        period: 10_000,
        rank: 3,
        optimizer: adam(0.05, AdamMode::Practical),
        compressor: CompressorKind::GaLore,
        problem: ProblemSpec::quadratic(3, 4, 1.0, 0.0, 0.0),
        seed: 3,
        metrics_every: 1,
        replica_check_every: 1,
        parallel: false,
    };
    let galore = run_simulator(Simulator::with_problem(cfg.clone(), problem.clone()).unwrap()).unwrap();
    let mut plain_cfg = cfg;
    plain_cfg.compressor = CompressorKind::None;
    let plain = run_simulator(Simulator::with_problem(plain_cfg, problem).unwrap()).unwrap();
    for (a, b) in galore.traces.iter().zip(&plain.traces) {
        assert!((a.loss - b.loss).abs() < 1e-8, "step {}", a.step);
    }
}

#[test]
fn galore_moments_restart_each_period() {
    let cfg = RunConfig {
        period: 5,
        ..base(CompressorKind::GaLore, adam(0.02, AdamMode::Practical))
    };
    let mut sim = Simulator::new(cfg).unwrap();
    for t in 0..16 {
        sim.step().unwrap();
        let greedylore::optim::Optimizer::Adam(s) = &sim.workers()[0].optimizer else {
            panic!("adam expected");
        };
        // One update from zero leaves v = (1−β2)/(1−β1)² · m⊙m, which is m⊙m here.
        let predicted = s.m.map(|x| x * x);
        let fresh = predicted.sub(&s.v).unwrap().max_abs() <= 1e-12 * (1.0 + s.v.max_abs());
        assert_eq!(fresh, t % 5 == 0, "t={t}");
    }
}

#[test]
fn fixed_projector_stalls_on_counterexample() {
    let l = 1.0;
    let tau = 20;
    let problem = Problem::new(&ProblemSpec::counterexample(l), 1, 0).unwrap();
    let mut x = problem.initial_point();
    let mut state = CompressorState::new(2, 1, tau).unwrap();
    let p = state.lazy_svd_update(&problem.full_grad(&x).unwrap(), 0).unwrap().clone();
    let mut opt = MsgdState::new(2, 2, 0.0, 1.0 / (2.0 * l));
    for _ in 0..tau {
        let g = problem.full_grad(&x).unwrap();
        x = opt.step(&x, &compress(&p, &g).unwrap()).unwrap();
    }
    assert_eq!(x, DenseMatrix::from_diag(&[2f64.powi(-(tau as i32)), 1.0]));
    let g = problem.full_grad(&x).unwrap();
    let ratio = contraction_ratio(&g, &compress(&p, &g).unwrap()).unwrap();
    let q = 2f64.powi(-2 * tau as i32);
    assert!((ratio - (1.0 - q / (q + 0.25))).abs() < 1e-15);
}

#[test]
fn error_feedback_escapes_where_basic_framework_stalls() {
    let cfg = |compressor| RunConfig {
        n_nodes: 1,
        steps: 40,
        period: 40,
        rank: 1,
        optimizer: msgd(0.5, 0.0),
        compressor,
        problem: ProblemSpec::counterexample(1.0),
        seed: 9,
        metrics_every: 1,
        replica_check_every: 1,
        parallel: false,
    };
    let basic = run(&cfg(CompressorKind::LazySvd { error_feedback: false })).unwrap();
    // after the first (full) step y is frozen at 0.75, so ‖∇f‖² → (0.75/2)²
    let y = basic.final_x.get(1, 1);
    assert_eq!(y, 0.75);
    assert!(basic.final_grad_norm_sq >= 0.375f64.powi(2));
    let greedy = run(&cfg(CompressorKind::greedylore())).unwrap();
    assert!(greedy.final_x.get(1, 1).abs() < 0.5 * y);
    assert!(greedy.final_grad_norm_sq < 0.1 * basic.final_grad_norm_sq);
}

#[test]
fn exact_and_approx_selection_both_converge() {
    for selection in [Selection::Exact, Selection::Approx] {
        let cfg = RunConfig {
            steps: 400,
            ..base(
                CompressorKind::GreedyLore {
                    selection,
                    error_feedback: true,
                },
                msgd(0.2, 0.9),
            )
        };
        let res = run(&cfg).unwrap();
        assert!(res.final_loss < 0.5 * res.traces[0].loss);
    }
}

#[test]
fn transposed_problem_gives_transposed_trajectory() {
    let mut rng = RngStream::derive(5, StreamKey::Trial { id: 0 });
    let centers: Vec<DenseMatrix> = (0..2).map(|_| rng.normal_matrix(4, 6)).collect();
    let tall: Vec<DenseMatrix> = centers.iter().map(|c| c.transpose()).collect();
    let cfg = |m, n| RunConfig {
        n_nodes: 2,
        steps: 30,
        period: 6,
        rank: 2,
        optimizer: msgd(0.3, 0.9),
        compressor: CompressorKind::greedylore(),
        problem: ProblemSpec::quadratic(m, n, 1.0, 0.0, 0.0),
        seed: 8,
        metrics_every: 1,
        replica_check_every: 1,
        parallel: false,
    };
    let wide = Simulator::with_problem(cfg(4, 6), Problem::quadratic_with_centers(1.0, 0.0, centers).unwrap());
    let tall = Simulator::with_problem(cfg(6, 4), Problem::quadratic_with_centers(1.0, 0.0, tall).unwrap());
    let a = run_simulator(wide.unwrap()).unwrap();
    let b = run_simulator(tall.unwrap()).unwrap();
    assert!(a.final_x.transpose().bit_eq(&b.final_x));
    assert_eq!(a.ledger.scalars_allreduce(), b.ledger.scalars_allreduce());
}

#[test]
fn runs_are_reproducible() {
    for kind in [
        CompressorKind::greedylore(),
        CompressorKind::RandomLowrank,
        CompressorKind::RandK { k: 6 },
    ] {
        let cfg = base(kind, msgd(0.1, 0.9));
        assert_eq!(run(&cfg).unwrap().trace_csv(), run(&cfg).unwrap().trace_csv());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(run(&cfg).unwrap().trace_csv(), run(&other).unwrap().trace_csv());
    }
}

#[test]
fn stochastic_gradient_mean_and_variance() {
    let (m, n, sigma, draws) = (2, 3, 1.5, 100_000);
    let problem = Problem::new(&ProblemSpec::quadratic(m, n, 1.0, sigma, 0.3), 2, 4).unwrap();
    let x = DenseMatrix::from_fn(m, n, |i, j| (i as f64) - 0.5 * j as f64);
    let exact = problem.grad(1, &x).unwrap();
    let mut sum = DenseMatrix::zeros(m, n);
    let mut sum_sq = DenseMatrix::zeros(m, n);
    let mut dev_sq = 0.0;
    for d in 0..draws {
        let mut rng = RngStream::derive(4, StreamKey::Noise { node: 2, step: d });
        let g = problem.stochastic_grad(1, &x, &mut rng).unwrap();
        sum.add_assign(&g).unwrap();
        sum_sq.add_assign(&g.map(|v| v * v)).unwrap();
        dev_sq += g.sub(&exact).unwrap().frobenius_norm_sq();
    }
    let nd = draws as f64;
    for i in 0..m {
        for j in 0..n {
            let mean = sum.get(i, j) / nd;
            let var = sum_sq.get(i, j) / nd - mean * mean;
            let se = (var / nd).sqrt();
            assert!((mean - exact.get(i, j)).abs() <= 3.0 * se);
        }
    }
    let total_var = dev_sq / nd;
    assert!((total_var / (sigma * sigma) - 1.0).abs() < 0.05);
}
