use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cellhom::bloch::BlochConfig;
use cellhom::correctors::CorrectorSet;
use cellhom::dtn::{dtn_csv, dtn_table, random_trial, reciprocity_defect, ModeBlock};
use cellhom::effective::EffectiveModel;
use cellhom::verify::{oracle_axis, verify, Check, VerifyOptions};
use cellhom::{build_medium, HomogError, LamePair};
use serde::Serialize;

use crate::config::{RunConfig, Task};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medium_hash: Option<String>,
    pub config: RunConfig,
    pub tasks: Vec<Task>,
    pub checks: Vec<Check>,
    pub all_passed: bool,
    pub files: Vec<String>,
}

pub struct Outcome {
    pub manifest: Manifest,
    pub table: Option<String>,
}

fn write(out: &Path, name: &str, body: &str, files: &mut Vec<String>) -> Result<(), HomogError> {
    std::fs::write(out.join(name), body)?;
    files.push(name.to_string());
    Ok(())
}

/// Execute `tasks` (already closed under prerequisites) and write artifacts to `out`.
pub fn execute(cfg: &RunConfig, tasks: &BTreeSet<Task>, out: &Path) -> Result<Outcome, HomogError> {
    cfg.solver.validate()?;
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut medium_hash = None;
    let mut table = None;

    if tasks.contains(&Task::Correctors) {
        let (spec, grid) = cfg.medium_and_grid()?;
        let medium = build_medium(spec, grid)?;
        let hash = spec.hash(grid);
        log::info!("medium {hash}: grid {}^{}", grid.n, grid.dim);
        let set = CorrectorSet::compute(&medium, &cfg.solver)?;
        set.save(&out.join("correctors"), &hash)?;
        files.push("correctors/manifest.json".into());
        medium_hash = Some(hash);

        if tasks.contains(&Task::Effective) {
            let model = EffectiveModel::assemble(&medium, &set)?;
            let json = model.to_json();
            let summary = serde_json::json!({
                "cbar": json.cbar,
                "rhobar": json.rhobar,
                "checks": json.checks,
            });
            write(out, "effective.json", &serde_json::to_string_pretty(&summary)?, &mut files)?;
            if tasks.contains(&Task::Dispersive) {
                write(out, "model.json", &serde_json::to_string_pretty(&json)?, &mut files)?;
            }
            if tasks.contains(&Task::VerifyLaminate) && oracle_axis(spec, &medium).is_none() {
                return Err(HomogError::Config(
                    "verify-laminate needs a closed-form medium that varies along one axis".into(),
                ));
            }
            let mut opts = VerifyOptions::default();
            if tasks.contains(&Task::BlochCompare) {
                let sweep = cfg
                    .bloch
                    .as_ref()
                    .ok_or_else(|| HomogError::Config("bloch-compare needs a [bloch] section".into()))?;
                opts.bloch = Some((sweep.direction.clone(), sweep.k_values()));
                opts.bloch_config = BlochConfig::default();
            }
            let report = verify(spec, &medium, &set, &model, &cfg.solver, &opts)?;
            if let Some(s) = &report.slopes {
                write(out, "bands.csv", &s.to_csv(), &mut files)?;
                let slim = serde_json::json!({
                    "direction": s.direction,
                    "branches": s.branches,
                    "slope0": s.slope0,
                    "slope2": s.slope2,
                    "degenerate_branch": s.degenerate_branch,
                    "sorted_fallback": s.sorted_fallback,
                    "max_model_imag": s.max_model_imag,
                });
                write(out, "slopes.json", &serde_json::to_string_pretty(&slim)?, &mut files)?;
            }
            if tasks.contains(&Task::VerifyLaminate) {
                let mut csv = String::from("check,value,threshold,passed\n");
                for c in report.checks.iter().filter(|c| c.name.starts_with("oracle.")) {
                    csv.push_str(&format!("{},{:.6e},{:.1e},{}\n", c.name, c.value, c.threshold, c.passed));
                }
                write(out, "oracle.csv", &csv, &mut files)?;
            }
            table = Some(report.table());
            checks = report.checks;
        }
    }

    if tasks.contains(&Task::DtnTable) {
        let d = cfg
            .dtn
            .as_ref()
            .ok_or_else(|| HomogError::Config("dtn-table needs a [dtn] section".into()))?;
        if d.orders == 0 {
            return Err(HomogError::Config("dtn orders must be at least 1".into()));
        }
        let rows = dtn_table(d.orders - 1, d.radius, d.omega, LamePair::new(d.lambda, d.mu))?;
        write(out, "dtn.csv", &dtn_csv(&rows), &mut files)?;
        let blocks: Vec<ModeBlock> = rows.iter().map(ModeBlock::from).collect();
        let order = rows.len() - 1;
        let worst = (0..8u64)
            .map(|s| reciprocity_defect(&blocks, &random_trial(order, 2 * s), &random_trial(order, 2 * s + 1)))
            .collect::<Result<Vec<f64>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        checks.push(Check::at_most("dtn.reciprocity", worst, 1e-10));
        let table_text = checks
            .iter()
            .filter(|c| c.name.starts_with("dtn."))
            .map(|c| format!("{:<40} {:>12.3e} <= {:.1e}  {}\n", c.name, c.value, c.threshold, if c.passed { "PASS" } else { "FAIL" }))
            .collect::<String>();
        table = Some(table.unwrap_or_default() + &table_text);
    }

    let all_passed = checks.iter().all(|c| c.passed);
    let manifest = Manifest {
        tool: "cellhom",
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        medium_hash,
        config: cfg.clone(),
        tasks: tasks.iter().copied().collect(),
        checks,
        all_passed,
        files: files.clone(),
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(Outcome { manifest, table })
}

pub fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("cellhom-out"))
}
