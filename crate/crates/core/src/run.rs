//! Run orchestration: one nominal solve, one robust run per budget, exports.
//!
//! Layout of the output directory:
//!
//! ```text
//! out/
//!   meta.txt              resolved configuration and results
//!   report.csv            one row per budget, ascending
//!   nominal_density.pgm
//!   <budget dir>/         the output directory itself for a single budget,
//!                         `D=<budget>` per budget in a sweep
//!     iterations.log      k, objective, volume, max|Δρ|, Newton iterations
//!     robust_density.pgm, worst_delta.pgm, worst_modulus.pgm,
//!     nominal_worst_delta.pgm, [robust|nominal]_linear_delta.pgm,
//!     report.csv, meta.txt
//! ```
//!
//! A failing budget run keeps what it wrote so far plus
//! `last_good_density.pgm` and reports the failing stage.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::export::{write_pgm, write_report_file, PGM_CONVENTION};
use crate::material::{effective_modulus, MaterialLaw};
use crate::robust::{
    evaluate_report, nominal_solve, optimize_with, DesignField, NominalResult, ReportEvaluation, ReportRow,
    RobustProblem, RunResult,
};

/// Result of one budget.
#[derive(Debug, Clone)]
pub struct BudgetOutcome {
    pub budget: f64,
    pub dir: PathBuf,
    pub run: RunResult,
    pub report: ReportEvaluation,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub nominal: NominalResult,
    pub outcomes: Vec<BudgetOutcome>,
    pub rows: Vec<ReportRow>,
}

const DECISIONS: &[(&str, &str)] = &[
    ("outer_convergence", "max |drho| < change_tol, or max_iter outer iterations"),
    ("nominal_start", "uniform density at volume_fraction, run to the same stopping rule"),
    ("mma_flavor", "single-constraint MMA, volume constraint exact in the subproblem"),
    ("volume_constraint", "on unfiltered densities"),
    ("inner_solver", "primal-dual barrier Newton, mu decreased by mu_decrease from mu_init to mu_target"),
    ("inner_warm_start", "previous outer iterate, started at mu_target"),
    ("reference_delta", "0 for linear and rho_weighted sets, anchor for avg_quad"),
    ("continuation_use", "report evaluation only; the design loop uses the inverse law"),
    ("continuation_direct", "linear law solved from the canonical interior point"),
    ("solid_region", "rho_tilde > 0.5"),
    ("percent_columns", "signed percent increase over compliance_reference"),
];

fn budget_dir_name(budget: f64) -> String {
    format!("D={budget}")
}

fn write_iteration_header(w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "# k objective volume max_change newton_iterations")
}

fn modulus_field(problem: &RobustProblem, rho_tilde: &[f64], delta: &[f64]) -> Vec<f64> {
    rho_tilde
        .iter()
        .zip(delta)
        .map(|(&r, &d)| effective_modulus(r, d, &problem.params, MaterialLaw::Inverse) / problem.params.e0)
        .collect()
}

fn meta_text(config: &RunConfig, results: &[(String, String)]) -> String {
    let mut s = String::from("# resolved configuration\n");
    s.push_str(&config.to_text());
    s.push_str("# defaults and conventions in effect\n");
    let _ = writeln!(s, "pgm_convention = {PGM_CONVENTION}");
    for (k, v) in DECISIONS {
        let _ = writeln!(s, "{k} = {v}");
    }
    s.push_str("# results\n");
    for (k, v) in results {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn run_budget(config: &RunConfig, problem: &RobustProblem, nominal: &NominalResult, dir: &Path) -> Result<BudgetOutcome> {
    fs::create_dir_all(dir)?;
    let mesh = problem.model.mesh();
    let mut log = BufWriter::new(fs::File::create(dir.join("iterations.log"))?);
    write_iteration_header(&mut log)?;
    let mut last_good: Option<DesignField> = None;
    let mut io_error: Option<std::io::Error> = None;
    let result = optimize_with(problem, Some(nominal.clone()), |rec, design| {
        let line = writeln!(
            log,
            "{} {:.12e} {:.12e} {:.6e} {}",
            rec.iteration, rec.objective, rec.volume, rec.change, rec.newton_iterations
        )
        .and_then(|_| log.flush());
        if let Err(e) = line {
            io_error.get_or_insert(e);
        }
        last_good = Some(design.clone());
    });
    drop(log);
    let budget = problem.set.target();
    let run = match result {
        Ok(run) => run,
        Err(err) => {
            if let Some(d) = &last_good {
                write_pgm(&dir.join("last_good_density.pgm"), mesh, &d.rho)?;
            }
            let meta = meta_text(
                config,
                &[
                    ("budget".into(), budget.to_string()),
                    ("status".into(), "failed".into()),
                    ("error".into(), err.to_string()),
                ],
            );
            fs::write(dir.join("meta.txt"), meta)?;
            return Err(err);
        }
    };
    if let Some(e) = io_error {
        return Err(e.into());
    }

    let report = evaluate_report(problem, &nominal.design, &run.design, Some(&run.inner), config.continuation)
        .map_err(|e| e.in_stage("report"))?;
    let worst = &report.robust_worst;
    write_pgm(&dir.join("robust_density.pgm"), mesh, &run.design.rho_tilde)?;
    write_pgm(&dir.join("worst_delta.pgm"), mesh, &worst.delta)?;
    write_pgm(
        &dir.join("worst_modulus.pgm"),
        mesh,
        &modulus_field(problem, &run.design.rho_tilde, &worst.delta),
    )?;
    write_pgm(&dir.join("nominal_worst_delta.pgm"), mesh, &report.nominal_worst.delta)?;
    if let (Some(n), Some(r)) = (&report.nominal_continuation, &report.robust_continuation) {
        write_pgm(&dir.join("nominal_linear_delta.pgm"), mesh, &n.delta)?;
        write_pgm(&dir.join("robust_linear_delta.pgm"), mesh, &r.delta)?;
    }
    write_report_file(&dir.join("report.csv"), &[report.row], config.continuation.is_some())?;

    let mut results = vec![
        ("budget".to_string(), budget.to_string()),
        ("status".into(), "ok".into()),
        ("outer_iterations".into(), run.history.len().to_string()),
        ("outer_converged".into(), run.converged.to_string()),
        ("nominal_compliance".into(), format!("{:.12e}", nominal.compliance)),
        ("compliance_reference".into(), format!("{:.12e}", report.row.compliance_reference)),
        ("robust_reference_compliance".into(), format!("{:.12e}", report.robust_reference)),
        ("nominal_worst_compliance".into(), format!("{:.12e}", report.nominal_worst.compliance)),
        ("robust_worst_compliance".into(), format!("{:.12e}", worst.compliance)),
        ("robust_worst_lambda".into(), format!("{:.12e}", worst.lambda)),
        ("robust_worst_min_box_distance".into(), format!("{:.3e}", worst.min_box_distance)),
    ];
    if worst.min_box_distance < 1e-9 {
        results.push(("warning".into(), "worst-case field is nearly binary at the budget; LICQ may fail".into()));
    }
    for (tag, c) in [("nominal", &report.nominal_continuation), ("robust", &report.robust_continuation)] {
        if let Some(c) = c {
            results.push((format!("{tag}_contin_compliance"), format!("{:.12e}", c.contin)));
            results.push((format!("{tag}_direct_compliance"), format!("{:.12e}", c.direct)));
            results.push((format!("{tag}_inverse_compliance"), format!("{:.12e}", c.inverse)));
            results.push((format!("{tag}_linear_intermediate_fraction"), format!("{:.6}", c.intermediate_fraction)));
        }
    }
    fs::write(dir.join("meta.txt"), meta_text(config, &results))?;
    Ok(BudgetOutcome {
        budget,
        dir: dir.to_path_buf(),
        run,
        report,
    })
}

/// Execute a full run and write its artifacts under `config.out`.
///
/// Budgets of a sweep run concurrently, each in its own subdirectory; the
/// numbers do not depend on the scheduling.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let out = config.out.clone();
    fs::create_dir_all(&out)?;
    let problem = config.build_problem().map_err(|e| e.in_stage("setup"))?;
    let nominal = nominal_solve(&problem).map_err(|e| e.in_stage("nominal"))?;
    let mesh = problem.model.mesh();
    write_pgm(&out.join("nominal_density.pgm"), mesh, &nominal.design.rho_tilde)?;

    let budgets = config.budgets();
    let sweep = !config.sweep.is_empty();
    let jobs: Vec<(RobustProblem, PathBuf)> = budgets
        .iter()
        .map(|&b| {
            let dir = if sweep { out.join(budget_dir_name(b)) } else { out.clone() };
            (problem.with_set(config.uncertainty_set(b)), dir)
        })
        .collect();
    let results: Vec<Result<BudgetOutcome>> = if jobs.len() == 1 {
        vec![run_budget(config, &jobs[0].0, &nominal, &jobs[0].1)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(pb, dir)| s.spawn(|| run_budget(config, pb, &nominal, dir)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::InfeasibleSet("budget run panicked".into()))))
                .collect()
        })
    };

    let mut outcomes = Vec::with_capacity(results.len());
    let mut first_error = None;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let rows: Vec<ReportRow> = outcomes.iter().map(|o| o.report.row).collect();
    if sweep {
        write_report_file(&out.join("report.csv"), &rows, config.continuation.is_some())?;
        let mut results = vec![
            ("nominal_compliance".to_string(), format!("{:.12e}", nominal.compliance)),
            ("nominal_iterations".into(), nominal.history.len().to_string()),
            ("nominal_converged".into(), nominal.converged.to_string()),
            ("budgets".into(), budgets.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")),
        ];
        if let Some(e) = &first_error {
            results.push(("status".into(), "failed".into()));
            results.push(("error".into(), e.to_string()));
        } else {
            results.push(("status".into(), "ok".into()));
        }
        fs::write(out.join("meta.txt"), meta_text(config, &results))?;
    } else if first_error.is_none() {
        // Single budget: the budget directory is the output directory, so
        // its meta.txt gets the nominal lines appended.
        let mut meta = fs::read_to_string(out.join("meta.txt"))?;
        let _ = writeln!(meta, "nominal_iterations = {}", nominal.history.len());
        let _ = writeln!(meta, "nominal_converged = {}", nominal.converged);
        fs::write(out.join("meta.txt"), meta)?;
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(RunSummary {
        nominal,
        outcomes,
        rows,
    })
}
