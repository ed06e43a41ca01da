//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line (visible with `cargo test -- --nocapture`).
//!
//! Criteria 1-8 exercise the library directly; criterion 9 runs the
//! compiled `slqr` binary end to end.

use std::time::Instant;

use nalgebra::{dmatrix, DMatrix};
use rand::Rng;

use slqr::learner::{model_free_pi, LearnerConfig, ModelSampler};
use slqr::linalg::{self, SymMatrix};
use slqr::qkernel;
use slqr::riccati;
use slqr::stability;
use slqr::sysmodel::{substream, CostSpec, Gain, SystemModel};

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion} ({name}): {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn paper_model() -> SystemModel {
    SystemModel::new(
        dmatrix![0.8, 1.0; 1.1, 2.0],
        dmatrix![0.2; 1.4],
        dmatrix![0.7, 0.0; -1.0, -0.5],
        dmatrix![-1.0; 0.8],
        SymMatrix::identity(2),
        SymMatrix::identity(2),
    )
    .unwrap()
}

fn paper_cost() -> CostSpec {
    CostSpec::new(SymMatrix::identity(2), SymMatrix::identity(1), 0.7).unwrap()
}

fn paper_l0() -> Gain {
    Gain::new(dmatrix![-1.4, -2.1])
}

fn paper_config(seed: u64, trace_correction: bool) -> LearnerConfig {
    LearnerConfig {
        l0: paper_l0(),
        gamma: 0.7,
        n_steps: 3000,
        num_mean: 5,
        i_max: 20,
        eps: 1e-2,
        probe_std: 1.0,
        master_seed: seed,
        trace_correction,
    }
}

/// Random system with identity covariances and weights, rescaled so the
/// open loop (L = 0) is mean-square stable with spectral radius
/// `target_rho`; L0 = 0 is then admissible.
fn random_admissible_system(seed: u64, n: usize, m: usize, target_rho: f64) -> SystemModel {
    let mut rng = substream(0xACCE97, seed);
    let mut unit = |_: usize, _: usize| rng.gen_range(-1.0..1.0);
    let a = DMatrix::from_fn(n, n, &mut unit);
    let b = DMatrix::from_fn(n, m, &mut unit);
    let c = DMatrix::from_fn(n, n, &mut unit);
    let d = DMatrix::from_fn(n, m, &mut unit);
    let rho = linalg::spectral_radius(&(linalg::kron(&a, &a) + linalg::kron(&c, &c))).unwrap();
    let scale = (target_rho / rho.max(1e-12)).sqrt();
    SystemModel::new(
        a * scale,
        b,
        c * scale,
        d,
        SymMatrix::identity(n),
        SymMatrix::identity(n),
    )
    .unwrap()
}

#[test]
fn acceptance_criterion_1_riccati_reproduction() {
    let start = Instant::now();
    let trace = riccati::offline_pi(&paper_model(), &paper_cost(), &paper_l0(), 20, 1e-2).unwrap();
    let elapsed = start.elapsed();
    let want_p = dmatrix![8.2254, 8.0704; 8.0704, 10.3873];
    let want_l = dmatrix![-0.9319, -1.5784];
    let p_err = (trace.final_kernel.p.as_matrix() - want_p).amax();
    let l_err = (trace.final_gain.l.clone() - want_l).amax();
    let pass = p_err < 1e-3 && l_err < 1e-3 && elapsed.as_secs_f64() < 1.0;
    report(
        1,
        "riccati reproduction",
        pass,
        &format!("p_err={p_err:.2e} l_err={l_err:.2e} elapsed={elapsed:?}"),
    );
}

#[test]
fn acceptance_criterion_2_cost_reproduction() {
    let trace = riccati::offline_pi(&paper_model(), &paper_cost(), &paper_l0(), 20, 1e-2).unwrap();
    let v = stability::exact_cost(&paper_model(), &paper_cost(), &trace.final_gain).unwrap();
    let err = (v - 62.0422).abs();
    report(
        2,
        "cost reproduction",
        err < 1e-2,
        &format!("cost={v:.6} err={err:.2e}"),
    );
}

#[test]
fn acceptance_criterion_3_q_kernel_equivalence() {
    let start = Instant::now();
    let mut systems = vec![(paper_model(), paper_cost(), paper_l0())];
    let dims = [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2)];
    for seed in 0..10u64 {
        let (n, m) = dims[(seed as usize) % dims.len()];
        let model = random_admissible_system(seed, n, m, 0.5);
        let cost = CostSpec::new(SymMatrix::identity(n), SymMatrix::identity(m), 0.6).unwrap();
        systems.push((model, cost, Gain::zeros(m, n)));
    }
    let mut max_dev = 0.0_f64;
    for (model, cost, l0) in &systems {
        let mut riccati_gain = l0.clone();
        let mut q_gain = l0.clone();
        for _ in 0..8 {
            let p = stability::solve_sle(model, cost, &riccati_gain).unwrap();
            riccati_gain = riccati::policy_improve(model, cost, &p).unwrap();
            let h = qkernel::exact_q_policy_evaluation(model, cost, &q_gain).unwrap();
            q_gain = qkernel::gain_from_h(&h).unwrap();
            max_dev = max_dev.max((&riccati_gain.l - &q_gain.l).amax());
        }
    }
    let elapsed = start.elapsed();
    let pass = max_dev < 1e-10 && elapsed.as_secs_f64() < 5.0;
    report(
        3,
        "q-kernel equivalence",
        pass,
        &format!("max_gain_dev={max_dev:.2e} systems={} elapsed={elapsed:?}", systems.len()),
    );
}

#[test]
fn acceptance_criterion_4_monotonicity() {
    let mut suite = vec![(paper_model(), paper_cost(), paper_l0())];
    for seed in 20..25u64 {
        let n = 2 + (seed as usize % 2);
        let model = random_admissible_system(seed, n, 1, 0.5);
        let cost = CostSpec::new(SymMatrix::identity(n), SymMatrix::identity(1), 0.6).unwrap();
        suite.push((model, cost, Gain::zeros(1, n)));
    }
    let mut worst_step = f64::INFINITY;
    let mut worst_bound = f64::INFINITY;
    for (model, cost, l0) in &suite {
        let trace = riccati::offline_pi(model, cost, l0, 20, 1e-8).unwrap();
        let oracle = riccati::value_iteration_sare(model, cost, 500).unwrap();
        for pair in trace.iterations.windows(2) {
            let diff = pair[0].kernel.p.as_matrix() - pair[1].kernel.p.as_matrix();
            worst_step = worst_step.min(SymMatrix::symmetrize(&diff).min_eigenvalue());
        }
        for it in &trace.iterations {
            let diff = it.kernel.p.as_matrix() - oracle.p.as_matrix();
            worst_bound = worst_bound.min(SymMatrix::symmetrize(&diff).min_eigenvalue());
        }
    }
    let pass = worst_step >= -1e-9 && worst_bound >= -1e-6;
    report(
        4,
        "monotonicity",
        pass,
        &format!("min_step_eig={worst_step:.2e} min_bound_eig={worst_bound:.2e}"),
    );
}

#[test]
fn acceptance_criterion_5_sle_oracle_agreement() {
    let mut rng = substream(0x51E, 0);
    let mut checked = 0;
    let mut max_err = 0.0_f64;
    let mut seed = 100u64;
    while checked < 25 {
        seed += 1;
        let n = 1 + (seed as usize % 3);
        let m = 1 + (seed as usize % 2);
        let model = random_admissible_system(seed, n, m, 0.6);
        let gamma = rng.gen_range(0.3..0.8);
        let cost = CostSpec::new(SymMatrix::identity(n), SymMatrix::identity(m), gamma).unwrap();
        let gain = Gain::new(DMatrix::from_fn(m, n, |_, _| rng.gen_range(-0.3..0.3)));
        if !stability::is_admissible(&model, &gain).unwrap() {
            continue;
        }
        let direct = stability::solve_sle(&model, &cost, &gain).unwrap();
        // independent fixed-point oracle
        let acl = &model.a + &model.b * &gain.l;
        let ccl = &model.c + &model.d * &gain.l;
        let rhs = cost.q.as_matrix() + gain.l.transpose() * cost.r.as_matrix() * &gain.l;
        let mut p = DMatrix::zeros(n, n);
        for _ in 0..20_000 {
            let next =
                (acl.transpose() * &p * &acl + ccl.transpose() * &p * &ccl) * gamma + &rhs;
            let delta = (&next - &p).amax();
            p = next;
            if delta < 1e-14 {
                break;
            }
        }
        max_err = max_err.max((direct.p.as_matrix() - p).amax());
        checked += 1;
    }
    report(
        5,
        "sle oracle agreement",
        max_err < 1e-8,
        &format!("triples={checked} max_err={max_err:.2e}"),
    );
}

fn optimal_reference() -> (Gain, f64) {
    let trace = riccati::offline_pi(&paper_model(), &paper_cost(), &paper_l0(), 50, 1e-10).unwrap();
    let v = stability::exact_cost(&paper_model(), &paper_cost(), &trace.final_gain).unwrap();
    (trace.final_gain, v)
}

fn learner_run(seed: u64, trace_correction: bool) -> (f64, f64, bool, f64) {
    let model = paper_model();
    let cost = paper_cost();
    let (lstar, vstar) = optimal_reference();
    let sampler = ModelSampler::new(model.clone(), seed);
    let start = Instant::now();
    let trace = model_free_pi(&sampler, &cost, &model.w, &paper_config(seed, trace_correction));
    let elapsed = start.elapsed().as_secs_f64();
    match trace {
        Ok(t) => {
            let gain_err = (&t.final_gain.l - &lstar.l).norm();
            let cost_err = match stability::exact_cost(&model, &cost, &t.final_gain) {
                Ok(v) => (v - vstar).abs() / vstar,
                Err(_) => f64::INFINITY,
            };
            (gain_err, cost_err, t.converged, elapsed)
        }
        Err(_) => (f64::INFINITY, f64::INFINITY, false, elapsed),
    }
}

#[test]
fn acceptance_criterion_6_model_free_convergence() {
    let mut good = 0;
    let mut max_elapsed = 0.0_f64;
    let mut details = Vec::new();
    for seed in 0..10u64 {
        let (gain_err, cost_err, _, elapsed) = learner_run(seed, true);
        max_elapsed = max_elapsed.max(elapsed);
        let ok = gain_err <= 0.05 && cost_err <= 0.02;
        if ok {
            good += 1;
        }
        details.push(format!("seed{seed}:{}", if ok { "ok" } else { "miss" }));
    }
    let pass = good >= 8 && max_elapsed < 30.0;
    report(
        6,
        "model-free convergence",
        pass,
        &format!("good={good}/10 max_run={max_elapsed:.1}s [{}]", details.join(" ")),
    );
}

#[test]
fn acceptance_criterion_7_trace_correction_ablation() {
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.5 * (v[v.len() / 2] + v[(v.len() - 1) / 2])
    };
    let corrected: Vec<f64> = (0..10u64).map(|s| learner_run(s, true).1).collect();
    let ablated: Vec<f64> = (0..10u64).map(|s| learner_run(s, false).1).collect();
    let med_on = median(corrected);
    let med_off = median(ablated);
    report(
        7,
        "trace-correction ablation",
        med_off > med_on,
        &format!("median_corrected={med_on:.4e} median_ablated={med_off:.4e}"),
    );
}

#[test]
fn acceptance_criterion_8_linear_algebra_identities() {
    let mut rng = substream(0x11A, 0);
    let mut max_rel = 0.0_f64;
    for case in 0..1000 {
        let n = 1 + case % 5;
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let s = SymMatrix::symmetrize(&g);
        let z = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let quad = (z.transpose() * s.as_matrix() * &z)[(0, 0)];
        let via_vec = linalg::vech(&SymMatrix::symmetrize(&(&z * z.transpose())))
            .dot(&linalg::vecs(&s));
        max_rel = max_rel.max((quad - via_vec).abs() / (1.0 + quad.abs()));
    }
    for case in 0..1000 {
        let n = 1 + case % 5;
        let s = SymMatrix::symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)));
        let t = SymMatrix::symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)));
        let tr = (s.as_matrix() * t.as_matrix()).trace();
        let via_vec = linalg::vecs(&s).dot(&linalg::vech(&t));
        max_rel = max_rel.max((tr - via_vec).abs() / (1.0 + tr.abs()));
    }
    report(
        8,
        "linear-algebra identities",
        max_rel < 1e-12,
        &format!("cases=2000 max_rel_err={max_rel:.2e}"),
    );
}

#[test]
fn acceptance_criterion_9_csv_determinism() {
    let bin = env!("CARGO_BIN_EXE_slqr");
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/reference.json");
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path| -> Vec<u8> {
        let status = std::process::Command::new(bin)
            .args(["learn", fixture, "--out"])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success(), "learn run failed");
        std::fs::read(dir.join("modelfree.csv")).unwrap()
    };
    let a = run(&tmp.path().join("a"));
    let b = run(&tmp.path().join("b"));
    report(
        9,
        "csv determinism",
        a == b,
        &format!("bytes={} identical={}", a.len(), a == b),
    );
}
