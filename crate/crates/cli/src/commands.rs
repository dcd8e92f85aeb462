use std::path::Path;

use eqfree_core::invariance::{solve_p, InvarianceReport};
use eqfree_core::oracle::{c_from_template, family_moments, SelfSimilarFamily};
use eqfree_core::renorm::{
    alpha_from_rescaling, estimate_alpha as run_alpha, fixed_point, RenormTrace,
};
use eqfree_core::{
    ensemble_moments, step_ensemble, ClosedFormEstimator, CoarseState, ParticleEnsemble,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{read_checkpoint, read_rows, write_checkpoint, Checkpoint, Table};

/// Iterations after which intermediate checkpoints are written.
const CHECKPOINT_ITERATIONS: [usize; 3] = [2, 4, 6];

fn num(v: f64) -> String {
    v.to_string()
}

/// Value in column `name` of the last data row.
fn last_value(path: &Path, name: &str) -> Result<f64, CliError> {
    let (header, rows) = read_rows(path)?;
    let col = header
        .iter()
        .position(|h| h == name || h.starts_with(&format!("{name}[")))
        .ok_or_else(|| CliError::Usage(format!("{}: no `{name}` column", path.display())))?;
    rows.last()
        .and_then(|r| r.get(col).copied())
        .ok_or_else(|| CliError::Usage(format!("{}: no data rows", path.display())))
}

pub fn invariance_table(report: &InvarianceReport, hash: &str) -> Table {
    let mut t = Table::new(
        hash,
        &["iteration", "p[-]", "a[-]", "residual[-]", "std_error[-]"],
    );
    for k in 0..report.p_iterates.len() {
        t.row(&[
            k.to_string(),
            num(report.p_iterates[k]),
            num(report.a_iterates[k]),
            num(report.residuals[k]),
            num(report.std_errors[k]),
        ]);
    }
    t
}

pub fn detect_invariance(cfg: &ExperimentConfig, oracle: bool) -> Result<(), CliError> {
    let sim = cfg.sim();
    sim.validate()?;
    let probe = cfg.probe();
    probe.validate(sim.dt)?;
    let newton = cfg.newton();
    let report = if oracle {
        solve_p(
            &probe,
            &ClosedFormEstimator {
                diffusion: cfg.diffusion,
            },
            &newton,
        )?
    } else {
        solve_p(&probe, &probe.burst_estimator(&sim), &newton)?
    };
    let path = cfg.out_dir.join("invariance.csv");
    invariance_table(&report, &cfg.hash()).write(&path)?;
    for k in 0..report.p_iterates.len() {
        println!(
            "iteration {k}: p = {:.5}  a = {:.5}  residual = {:.3e} ± {:.1e}",
            report.p_iterates[k], report.a_iterates[k], report.residuals[k], report.std_errors[k]
        );
    }
    if !report.converged {
        return Err(CliError::NotConverged(format!(
            "Newton iteration did not settle within {} steps (last p = {})",
            newton.max_iter, report.p_final
        )));
    }
    println!(
        "converged: p = {:.4}  a = {:.4}  predicted alpha = -1/a = {:.4}",
        report.p_final,
        report.a_final,
        report.predicted_alpha()
    );
    Ok(())
}

pub fn renorm_table(trace: &RenormTrace, hash: &str) -> Table {
    let mut t = Table::new(
        hash,
        &[
            "iteration",
            "A[-]",
            "sigma_x[cm]",
            "sigma_y[cm]",
            "rho[-]",
            "change[-]",
        ],
    );
    for r in &trace.records {
        t.row(&[
            r.iteration.to_string(),
            num(r.scale),
            num(r.moments.sigma_x),
            num(r.moments.sigma_y),
            num(r.moments.rho.unwrap_or(f64::NAN)),
            num(r.change.unwrap_or(f64::NAN)),
        ]);
    }
    t
}

pub fn renormalize(cfg: &ExperimentConfig, invariance: Option<&Path>) -> Result<(), CliError> {
    let mut rcfg = cfg.renorm()?;
    if let Some(path) = invariance {
        rcfg.exponent_p = last_value(path, "p")?;
    }
    let sim = cfg.sim();
    let initial = CoarseState::uniform_square(cfg.basis()?, cfg.initial_half_width)?;
    let trace = fixed_point(&initial, &rcfg, &sim)?;
    let hash = cfg.hash();
    renorm_table(&trace, &hash).write(&cfg.out_dir.join("renorm.csv"))?;

    for &k in &CHECKPOINT_ITERATIONS {
        if let Some(r) = trace.records.get(k) {
            let cp = Checkpoint {
                state: r.state.clone(),
                converged: trace.converged_at.is_some_and(|c| k >= c),
            };
            write_checkpoint(
                &cfg.out_dir.join(format!("checkpoint_iter{k}.txt")),
                &cp,
                &hash,
            )?;
        }
    }
    let last = trace.last();
    let cp = Checkpoint {
        state: last.state.clone(),
        converged: trace.converged,
    };
    write_checkpoint(&cfg.out_dir.join("checkpoint_final.txt"), &cp, &hash)?;

    for r in &trace.records {
        println!(
            "iteration {}: A = {:.4}  sigma_x = {:.4}  sigma_y = {:.4}  rho = {:.4}",
            r.iteration,
            r.scale,
            r.moments.sigma_x,
            r.moments.sigma_y,
            r.moments.rho.unwrap_or(f64::NAN)
        );
    }
    let c = c_from_template(&rcfg.template, cfg.diffusion)?;
    let reference = family_moments(&SelfSimilarFamily::new(c, cfg.diffusion)?);
    println!(
        "self-similar family for this template (c = {c:.4} 1/s): sigma_x = {:.4}  sigma_y = {:.4}  rho = {:.4}",
        reference.sigma_x, reference.sigma_y, reference.rho
    );
    if !trace.converged {
        return Err(CliError::NotConverged(format!(
            "no fixed point within {} iterations",
            rcfg.max_iterations
        )));
    }
    println!("converged at iteration {}", trace.converged_at.unwrap_or(0));
    Ok(())
}

pub fn estimate_alpha(
    cfg: &ExperimentConfig,
    oracle: bool,
    checkpoint: Option<&Path>,
    invariance: Option<&Path>,
) -> Result<(), CliError> {
    let (t1, t2) = (cfg.alpha_t1, cfg.alpha_t2);
    let estimate = if oracle {
        let c = c_from_template(&cfg.template()?, cfg.diffusion)?;
        let a = |t: f64| (1.0 + c * t).sqrt();
        alpha_from_rescaling(t1, a(t1), t2, a(t2))?
    } else {
        let path = checkpoint
            .map(Path::to_path_buf)
            .unwrap_or_else(|| cfg.out_dir.join("checkpoint_final.txt"));
        let cp = read_checkpoint(&path)?;
        if !cp.converged {
            return Err(CliError::NotConverged(format!(
                "{} holds an unconverged state",
                path.display()
            )));
        }
        run_alpha(&cp.state, &cfg.alpha_renorm()?, &cfg.sim(), t1, t2)?
    };
    let a = match invariance {
        Some(path) => last_value(path, "a")?,
        None => cfg.exponent_a,
    };

    let mut table = Table::new(&cfg.hash(), &["t[s]", "A[-]", "A_t[1/s]"]);
    for s in &estimate.samples {
        table.row(&[num(s.t), num(s.a), num(s.a_t)]);
        println!("t = {:.3} s  A = {:.5}  A_t = {:.5} 1/s", s.t, s.a, s.a_t);
    }
    table.write(&cfg.out_dir.join("alpha.csv"))?;
    println!("alpha = {:.4}", estimate.alpha);
    println!("alpha_pred = -1/a = {:.4} (a = {a})", -1.0 / a);
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let sim = cfg.sim();
    sim.validate()?;
    let start = ParticleEnsemble::point_mass(cfg.simulate_particles, 0.0, 0.0);
    let ens = step_ensemble(&start, &sim, sim.steps_for(cfg.simulate_time))?;
    let mut table = Table::new(&cfg.hash(), &["index", "x[cm]", "y[cm]"]);
    for (i, (x, y)) in ens.points().enumerate() {
        table.row(&[i.to_string(), num(x), num(y)]);
    }
    table.write(&cfg.out_dir.join("simulate.csv"))?;
    let m = ensemble_moments(&ens)?;
    let s = ens.time;
    println!(
        "t = {s} s: sigma_x = {:.4}  sigma_y = {:.4}  rho = {:.4}",
        m.sigma_x,
        m.sigma_y,
        m.rho.unwrap_or(f64::NAN)
    );
    let d = cfg.diffusion;
    println!(
        "point-source law: sigma_x = {:.4}  sigma_y = {:.4}  rho = {:.4}",
        d * s.sqrt(),
        d * s.powf(1.5) / 3f64.sqrt(),
        3f64.sqrt() / 2.0
    );
    Ok(())
}
