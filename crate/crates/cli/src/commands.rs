use std::fs;
use std::io::Write;
use std::path::Path;

use log::{debug, info, warn};
use model_features::abstraction::coarsest_bisimulation;
use model_features::experiments::{
    run_source_training, run_transfer, TransferResult, TRANSFER_CSV_HEADER,
};
use model_features::feature_eval::{evaluate_all, EvalReport};
use model_features::learner::{round_to_partition, train, Checkpoint, CurvePoint, LearnerConfig};
use model_features::mdp::{standard_policies, TabularMdp};
use serde::Serialize;

use crate::args::{
    EnvKind, EvalArgs, Format, MdpArgs, OracleArgs, PerturbMode, TrainArgs, TransferArgs,
};
use crate::config::{resolve_learner, thread_count, EnvConfig, FileConfig};
use crate::Failure;

pub const LOSS_CSV_HEADER: &str = "step,loss,reward_residual,sf_residual,projection_event";

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

fn loss_csv(curve: &[CurvePoint]) -> String {
    csv(
        LOSS_CSV_HEADER,
        curve.iter().map(|p| {
            format!(
                "{},{:e},{:e},{:e},{}",
                p.step,
                p.loss.total,
                p.loss.reward_residual,
                p.loss.sf_residual,
                p.projection.map(|e| e.as_str()).unwrap_or("")
            )
        }),
    )
}

fn report_text(report: &EvalReport, format: Format) -> Result<String, Failure> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => Ok(csv(EvalReport::CSV_HEADER, report.csv_rows())),
    }
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

fn warn_if_bound_invalid(report: &EvalReport) {
    if report.bound_invalid {
        let max = report.sf_norms.iter().cloned().fold(f64::NAN, f64::max);
        eprintln!("warning: error bound invalid: max feature transition norm {max} exceeds 1");
    }
}

fn print_summary(report: &EvalReport) {
    let fmt = |x: Option<f64>| {
        x.map(|v| format!("{v:.6e}"))
            .unwrap_or_else(|| "n/a".into())
    };
    println!("{:<16} {:>14} {:>14}", "policy", "value_error", "q_error");
    for p in &report.policies {
        println!(
            "{:<16} {:>14} {:>14}",
            p.policy.name(),
            fmt(p.value_error),
            fmt(p.action_value_error)
        );
    }
    println!(
        "eps_r {:.6e}  eps_psi {:.6e}  bound {}",
        report.eps_r,
        report.eps_psi,
        fmt(report.bound)
    );
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    env: &'a EnvConfig,
    learner: &'a LearnerConfig,
}

pub fn train_cmd(args: &TrainArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.env.config.as_deref())?;
    let env = EnvConfig::resolve(&args.env, &file)?;
    let mdp = env.build()?;
    let config = resolve_learner(
        LearnerConfig::default(),
        file.learner.as_ref(),
        &args.learner,
        args.env.seed.or(file.seed),
        env.default_features(),
    )?;
    let format = args.format.or(file.format).unwrap_or(Format::Json);
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", args.out.display())))?;
    write_file(
        &args.out.join("config.json"),
        &to_json(&ResolvedTrain {
            env: &env,
            learner: &config,
        })?,
    )?;

    info!(
        "training {} updates on {} states",
        config.total_updates,
        mdp.num_states()
    );
    let run = train(&mdp, &config, &mut |p| {
        debug!("step {} loss {:e}", p.step, p.loss.total);
        if let Some(e) = p.projection {
            info!("projection at step {}: {}", p.step, e.as_str());
        }
    })?;
    write_file(&args.out.join("loss.csv"), &loss_csv(&run.curve))?;
    let checkpoint = run.state.to_checkpoint(mdp.discount())?;
    write_file(&args.out.join("checkpoint.json"), &to_json(&checkpoint)?)?;
    if let Some(step) = run.diverged {
        return Err(Failure::diverged(format!(
            "training diverged at step {step}"
        )));
    }

    let phi = &run.state.params.phi;
    let model = run.state.feature_model(mdp.discount())?;
    let report = evaluate_all(phi, &model, &mdp, &standard_policies(&mdp)?)?;
    write_file(
        &args.out.join(format!("report.{}", extension(format))),
        &report_text(&report, format)?,
    )?;
    print_summary(&report);
    println!(
        "rounded features: {} clusters",
        round_to_partition(phi).num_clusters()
    );
    warn_if_bound_invalid(&report);
    Ok(())
}

fn load_checkpoint(path: &Path, mdp: &TabularMdp) -> Result<Checkpoint, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let ck = Checkpoint::from_json(&text)
        .map_err(|e| Failure::usage(format!("checkpoint {}: {e}", path.display())))?;
    if ck.phi.len() != mdp.num_states() || ck.model.num_actions() != mdp.num_actions() {
        return Err(Failure::usage(format!(
            "checkpoint has {} states and {} actions, MDP has {} and {}",
            ck.phi.len(),
            ck.model.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    if (ck.model.gamma() - mdp.discount()).abs() > 1e-12 {
        return Err(Failure::usage(format!(
            "checkpoint discount {} differs from MDP discount {}",
            ck.model.gamma(),
            mdp.discount()
        )));
    }
    Ok(ck)
}

pub fn eval_cmd(args: &EvalArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.env.config.as_deref())?;
    let env = EnvConfig::resolve(&args.env, &file)?;
    let mdp = env.build()?;
    let ck = load_checkpoint(&args.checkpoint, &mdp)?;
    let phi = ck.phi_matrix()?;
    let report = evaluate_all(&phi, &ck.model, &mdp, &standard_policies(&mdp)?)?;
    let text = report_text(&report, args.format.or(file.format).unwrap_or(Format::Json))?;
    match &args.out {
        Some(path) => {
            write_file(path, &text)?;
            print_summary(&report);
        }
        None => print!("{text}"),
    }
    warn_if_bound_invalid(&report);
    Ok(())
}

#[derive(Serialize)]
struct TransferOutput<'a> {
    source_report: &'a EvalReport,
    results: &'a [TransferResult],
}

pub fn transfer_cmd(args: &TransferArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.env.config.as_deref())?;
    let env = EnvConfig::resolve_or(&args.env, &file, EnvKind::Planted)?;
    let EnvConfig::Planted(spec) = &env else {
        return Err(Failure::usage("transfer requires --env planted"));
    };
    let seed = args.env.seed.or(file.seed);
    let source_config = resolve_learner(
        LearnerConfig::default(),
        file.learner.as_ref(),
        &args.learner,
        seed,
        spec.num_clusters,
    )?;
    let transfer_file = file.transfer.unwrap_or_default();
    let mut task_config = resolve_learner(
        LearnerConfig::transfer_defaults(),
        transfer_file.learner.as_ref(),
        &Default::default(),
        None,
        spec.num_clusters,
    )?;
    if let Some(lr) = args.transfer_lr {
        task_config.learning_rate = lr;
    }
    if let Some(u) = args.transfer_updates {
        task_config.total_updates = u;
    }
    task_config.validate()?;
    let tasks = args.tasks.or(transfer_file.tasks).unwrap_or(20);
    let mode = args
        .perturb
        .or(transfer_file.perturb)
        .unwrap_or(PerturbMode::Both);
    let format = args.format.or(file.format).unwrap_or(Format::Csv);
    let threads = thread_count()?;

    info!("source training: {} updates", source_config.total_updates);
    let source = run_source_training(spec, &source_config)?;
    let source_bound = source.report.bound;
    let flags: &[bool] = match mode {
        PerturbMode::Both => &[false, true],
        PerturbMode::None => &[false],
        PerturbMode::Only => &[true],
    };
    let mut results = Vec::new();
    for &perturb in flags {
        info!("transfer to {tasks} tasks (perturbed: {perturb}) on {threads} threads");
        results.push(run_transfer(
            &source.phi,
            &source.planted,
            spec,
            tasks,
            perturb,
            &task_config,
            source_bound,
            threads,
        )?);
    }

    let text = match format {
        Format::Csv => csv(
            TRANSFER_CSV_HEADER,
            results.iter().flat_map(|r| r.csv_rows()),
        ),
        Format::Json => to_json(&TransferOutput {
            source_report: &source.report,
            results: &results,
        })?,
    };
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
            write_file(&dir.join(format!("transfer.{}", extension(format))), &text)?;
            let checkpoint = source.run.state.to_checkpoint(spec.gamma)?;
            write_file(&dir.join("source_checkpoint.json"), &to_json(&checkpoint)?)?;
            write_file(&dir.join("source_report.json"), &to_json(&source.report)?)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::usage(e.to_string()))?;
        }
    }
    let bound = source_bound
        .map(|b| format!("{b:e}"))
        .unwrap_or_else(|| "invalid".into());
    eprintln!("source bound {bound}");
    for r in &results {
        eprintln!(
            "perturbed {}: mean value error {:e}",
            r.perturbed,
            r.mean_error()
        );
    }
    let diverged = results
        .iter()
        .flat_map(|r| &r.tasks)
        .filter(|t| t.diverged)
        .count();
    if diverged > 0 {
        return Err(Failure::diverged(format!(
            "{diverged} transfer tasks diverged"
        )));
    }
    if !results.iter().all(|r| r.all_converged()) {
        warn!("some feature-space evaluations did not converge");
    }
    Ok(())
}

pub fn oracle_cmd(args: &OracleArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.env.config.as_deref())?;
    let mdp = EnvConfig::resolve(&args.env, &file)?.build()?;
    if !(args.tol >= 0.0) {
        return Err(Failure::usage("--tol must be nonnegative"));
    }
    let partition = coarsest_bisimulation(&mdp, args.tol);
    println!(
        "{}",
        serde_json::to_string(&partition).map_err(|e| Failure::usage(e.to_string()))?
    );
    println!("{} clusters", partition.num_clusters());
    Ok(())
}

pub fn mdp_cmd(args: &MdpArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.env.config.as_deref())?;
    let mdp = EnvConfig::resolve(&args.env, &file)?.build()?;
    let mut text = mdp.to_json()?;
    text.push('\n');
    match &args.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
