//! Subcommand implementations: `solve`, `learn`, `check`, `compare`.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::json;

use slqr::learner::ModelSampler;
use slqr::linalg;
use slqr::riccati::{self, PiTrace};
use slqr::stability;
use slqr::sysmodel::Gain;

use crate::output::{fmt_num, trace_header, Csv};
use crate::spec::ExperimentSpec;
use crate::CliError;

fn resolve_out_dir(spec: &ExperimentSpec, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| spec.output_dir.clone());
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::validation(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::numeric(format!("cannot write {}: {e}", path.display())))
}

fn matrix_json(m: &DMatrix<f64>) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": rows })
}

fn gain_fields(l: &DMatrix<f64>) -> Vec<String> {
    // row-major order, matching the l_1..l_nm header
    (0..l.nrows())
        .flat_map(|i| (0..l.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| fmt_num(l[(i, j)]))
        .collect()
}

/// Reference solution (optimal kernel, gain, and cost) computed from the
/// true model by value iteration; used for error columns only.
fn reference_optimum(
    spec: &ExperimentSpec,
) -> Option<(Gain, f64)> {
    let p = riccati::value_iteration_sare(&spec.model, &spec.cost, 1000).ok()?;
    let gain = riccati::policy_improve(&spec.model, &spec.cost, &p).ok()?;
    let v = stability::exact_cost(&spec.model, &spec.cost, &gain).ok()?;
    Some((gain, v))
}

/// `solve`: model-based offline policy iteration. Writes
/// `offline_pi.csv` and `summary.json` into the output directory.
pub fn run_solve(spec: &ExperimentSpec, out: Option<&Path>) -> Result<(), CliError> {
    let dir = resolve_out_dir(spec, out)?;
    let trace = riccati::offline_pi(
        &spec.model,
        &spec.cost,
        &spec.learner.l0,
        spec.learner.i_max,
        spec.learner.eps,
    )?;

    let n = spec.model.state_dim();
    let m = spec.model.input_dim();
    let mut header = vec!["iter".to_string()];
    for i in 1..=(n * m) {
        header.push(format!("l_{i}"));
    }
    for i in 1..=(n * n) {
        header.push(format!("p_{i}"));
    }
    header.extend(
        ["gain_change", "admissible", "lemma4"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut csv = Csv::new(&header);
    let mut emit = |iter: usize,
                    gain: &Gain,
                    p: &DMatrix<f64>,
                    change: Option<f64>|
     -> Result<(), CliError> {
        let admissible = stability::is_admissible(&spec.model, gain)?;
        let lemma4 = stability::lemma4_check(
            &spec.cost,
            gain,
            &stability::CostKernel {
                p: slqr::linalg::SymMatrix::symmetrize(p),
            },
        );
        let mut fields = vec![iter.to_string()];
        fields.extend(gain_fields(&gain.l));
        fields.extend((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| fmt_num(p[(i, j)])));
        fields.push(change.map(fmt_num).unwrap_or_default());
        fields.push(admissible.to_string());
        fields.push(if lemma4 { "satisfied" } else { "inconclusive" }.to_string());
        csv.row(&fields);
        Ok(())
    };
    for it in &trace.iterations {
        emit(it.index, &it.gain, it.kernel.p.as_matrix(), Some(it.gain_change))?;
    }
    emit(
        trace.iterations.len(),
        &trace.final_gain,
        trace.final_kernel.p.as_matrix(),
        None,
    )?;
    write_file(&dir.join("offline_pi.csv"), &csv.into_string())?;

    let v = stability::exact_cost(&spec.model, &spec.cost, &trace.final_gain)?;
    let lemma4_final = stability::lemma4_check(&spec.cost, &trace.final_gain, &trace.final_kernel);
    let summary = json!({
        "method": "offline_pi",
        "converged": trace.converged,
        "iterations": trace.iterations.len(),
        "final_gain": matrix_json(&trace.final_gain.l),
        "final_kernel": matrix_json(trace.final_kernel.p.as_matrix()),
        "cost": v,
        "lemma4": if lemma4_final { "satisfied" } else { "inconclusive" },
    });
    write_file(
        &dir.join("summary.json"),
        &format!("{:#}\n", summary),
    )?;
    println!(
        "solve: converged={} iterations={} cost={}",
        trace.converged,
        trace.iterations.len(),
        fmt_num(v)
    );
    Ok(())
}

fn cost_rel_err(spec: &ExperimentSpec, gain: &Gain, vstar: Option<f64>) -> String {
    match vstar {
        Some(v) if v > 0.0 => match stability::exact_cost(&spec.model, &spec.cost, gain) {
            Ok(vi) => fmt_num((vi - v).abs() / v),
            Err(_) => String::new(),
        },
        _ => String::new(),
    }
}

fn write_trace_csv(
    spec: &ExperimentSpec,
    trace: &PiTrace,
    gain_ref: Option<&Gain>,
    vstar: Option<f64>,
    seed: u64,
    path: &Path,
) -> Result<(), CliError> {
    let nm = spec.model.state_dim() * spec.model.input_dim();
    let mut csv = Csv::new(&trace_header(nm));
    let mut emit = |iter: usize, gain: &Gain, change: Option<f64>| {
        let mut fields = vec![iter.to_string()];
        fields.extend(gain_fields(&gain.l));
        fields.push(change.map(fmt_num).unwrap_or_default());
        fields.push(
            gain_ref
                .map(|r| fmt_num((&gain.l - &r.l).norm()))
                .unwrap_or_default(),
        );
        fields.push(cost_rel_err(spec, gain, vstar));
        fields.push(seed.to_string());
        csv.row(&fields);
    };
    for it in &trace.iterations {
        emit(it.index, &it.gain, Some(it.gain_change));
    }
    emit(trace.iterations.len(), &trace.final_gain, None);
    write_file(path, &csv.into_string())
}

/// `learn`: model-free batch Q-learning policy iteration. Writes
/// `modelfree.csv` and `learn_summary.json`.
pub fn run_learn(
    spec: &ExperimentSpec,
    seed_override: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let dir = resolve_out_dir(spec, out)?;
    let seed = seed_override.unwrap_or(spec.learner.master_seed);
    let mut config = spec.learner.clone();
    config.master_seed = seed;
    let sampler = ModelSampler::new(spec.model.clone(), seed);
    let trace = slqr::learner::model_free_pi(&sampler, &spec.cost, &spec.model.w, &config)?;

    let optimum = reference_optimum(spec);
    let vstar = optimum.as_ref().map(|(_, v)| *v);
    let gain_ref = spec
        .reference_gain
        .as_ref()
        .or(optimum.as_ref().map(|(g, _)| g));
    write_trace_csv(spec, &trace, gain_ref, vstar, seed, &dir.join("modelfree.csv"))?;

    let final_cost = stability::exact_cost(&spec.model, &spec.cost, &trace.final_gain).ok();
    let summary = json!({
        "method": "model_free_pi",
        "seed": seed,
        "converged": trace.converged,
        "iterations": trace.iterations.len(),
        "final_gain": matrix_json(&trace.final_gain.l),
        "cost": final_cost,
        "optimal_cost": vstar,
    });
    write_file(&dir.join("learn_summary.json"), &format!("{:#}\n", summary))?;
    println!(
        "learn: seed={} converged={} iterations={} cost={}",
        seed,
        trace.converged,
        trace.iterations.len(),
        final_cost.map(fmt_num).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

/// `check`: admissibility / SLE / Lemma 4 / cost report for one gain.
pub fn run_check(spec: &ExperimentSpec, gain_csv: &str) -> Result<(), CliError> {
    let n = spec.model.state_dim();
    let m = spec.model.input_dim();
    let entries: Result<Vec<f64>, _> = gain_csv
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let entries =
        entries.map_err(|e| CliError::validation(format!("cannot parse gain: {e}")))?;
    if entries.len() != n * m {
        return Err(CliError::validation(format!(
            "gain must have {} entries (m x n, row-major), got {}",
            n * m,
            entries.len()
        )));
    }
    let gain = Gain::new(DMatrix::from_row_slice(m, n, &entries));

    let mmat = stability::closed_loop_matrix(&spec.model, &gain)?;
    let rho = linalg::spectral_radius(&mmat)?;
    let admissible = stability::is_admissible(&spec.model, &gain)?;
    println!("spectral_radius: {}", fmt_num(rho));
    println!("admissible: {admissible}");

    match stability::solve_sle(&spec.model, &spec.cost, &gain) {
        Ok(kernel) => {
            println!("sle: solved");
            let lemma4 = stability::lemma4_check(&spec.cost, &gain, &kernel);
            println!(
                "lemma4: {}",
                if lemma4 { "satisfied" } else { "inconclusive" }
            );
            match stability::min_gamma_lemma4(&spec.model, &spec.cost, &gain, 0.005)? {
                Some(g) => println!("lemma4_min_gamma: {g:.2}"),
                None => println!("lemma4_min_gamma: none"),
            }
            if admissible {
                let v = stability::exact_cost(&spec.model, &spec.cost, &gain)?;
                println!("cost: {}", fmt_num(v));
            } else {
                println!("cost: n/a (inadmissible)");
            }
        }
        Err(e) => {
            println!("sle: unsolvable ({e})");
            println!("lemma4: inconclusive");
            println!("cost: n/a");
        }
    }
    Ok(())
}

/// `compare`: runs `solve` and `learn`, then joins the two gain
/// trajectories on the iteration index into `compare.csv`.
pub fn run_compare(
    spec: &ExperimentSpec,
    seed_override: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let dir = resolve_out_dir(spec, out)?;
    run_solve(spec, Some(&dir))?;
    run_learn(spec, seed_override, Some(&dir))?;

    let seed = seed_override.unwrap_or(spec.learner.master_seed);
    let offline = riccati::offline_pi(
        &spec.model,
        &spec.cost,
        &spec.learner.l0,
        spec.learner.i_max,
        spec.learner.eps,
    )?;
    let mut config = spec.learner.clone();
    config.master_seed = seed;
    let sampler = ModelSampler::new(spec.model.clone(), seed);
    let mf = slqr::learner::model_free_pi(&sampler, &spec.cost, &spec.model.w, &config)?;

    let optimum = reference_optimum(spec);
    let vstar = optimum.as_ref().map(|(_, v)| *v);
    let nm = spec.model.state_dim() * spec.model.input_dim();
    let mut csv = Csv::new(&trace_header(nm));
    let offline_gain_at = |i: usize| -> &Gain {
        offline
            .iterations
            .get(i)
            .map(|it| &it.gain)
            .unwrap_or(&offline.final_gain)
    };
    let mut rows: Vec<(usize, &Gain, Option<f64>)> = mf
        .iterations
        .iter()
        .map(|it| (it.index, &it.gain, Some(it.gain_change)))
        .collect();
    rows.push((mf.iterations.len(), &mf.final_gain, None));
    for (i, gain, change) in rows {
        let mut fields = vec![i.to_string()];
        fields.extend(gain_fields(&gain.l));
        fields.push(change.map(fmt_num).unwrap_or_default());
        fields.push(fmt_num((&gain.l - &offline_gain_at(i).l).norm()));
        fields.push(cost_rel_err(spec, gain, vstar));
        fields.push(seed.to_string());
        csv.row(&fields);
    }
    write_file(&dir.join("compare.csv"), &csv.into_string())?;
    println!("compare: wrote compare.csv");
    Ok(())
}
