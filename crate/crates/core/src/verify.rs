//! The invariant battery run by `verify`: solver residuals, tensor symmetries,
//! averaged identities, laminate oracle agreement and optional Bloch slopes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bloch::{model_error_slopes, BlochConfig, SlopeSummary};
use crate::correctors::CorrectorSet;
use crate::effective::{effective_c_energy, u1_source_tensors, EffectiveModel};
use crate::error::Result;
use crate::field::{CellField, Spectral};
use crate::laminate::{laminate_model, LaminateProfile, Sampling};
use crate::medium::{Medium, MediumKind, MediumSpec};
use crate::solver::{apply_operator, SolverConfig};
use crate::tensor::{check_symmetries, convexity_margin, TensorN};

/// Samples used by the oracle when fields are compared pointwise.
pub const FIELD_ORACLE_SAMPLES: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Passes when `value <= threshold`.
    AtMost,
    /// Passes when `value >= threshold`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            bound: Bound::AtMost,
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            bound: Bound::AtLeast,
            passed: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slopes: Option<SlopeSummary>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Plain-text summary table, one line per check.
    pub fn table(&self) -> String {
        let mut s = format!("{:<40} {:>12} {:>4} {:>10}  result\n", "check", "value", "", "threshold");
        for c in &self.checks {
            let op = match c.bound {
                Bound::AtMost => "<=",
                Bound::AtLeast => ">=",
            };
            s.push_str(&format!(
                "{:<40} {:>12.3e} {:>4} {:>10.1e}  {}\n",
                c.name,
                c.value,
                op,
                c.threshold,
                if c.passed { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Optional parts of the battery.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Bloch sweep `(direction, |k| values)`.
    pub bloch: Option<(Vec<f64>, Vec<f64>)>,
    pub bloch_config: BlochConfig,
    /// Seed for the random adjointness fields.
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            bloch: None,
            bloch_config: BlochConfig::default(),
            seed: 11,
        }
    }
}

fn rel_gap(a: &TensorN, b: &TensorN) -> f64 {
    let scale = a.max_abs().max(b.max_abs());
    if scale == 0.0 {
        0.0
    } else {
        a.max_abs_diff(b) / scale
    }
}

/// Largest entry-wise gap over the largest entry.
pub fn relative_field_gap(grid_field: &CellField, line: &crate::laminate::LineField, axis: usize) -> f64 {
    let grid = grid_field.grid();
    let stride = line.n / grid.n;
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..grid_field.n_components() {
        let (a, b) = (grid_field.comp(c), line.comp(c));
        for p in 0..grid.npts() {
            let s = grid.coords(p)[axis] * stride;
            num += (a[p] - b[s]).powi(2);
            den += b[s] * b[s];
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// `|<L u, v> - <u, L v>|` and the smallest energy `-<L u, u> / |grad u|^2`
/// over a few random band-limited fields.
pub fn adjointness_spot_check(medium: &Medium, seed: u64, trials: usize) -> Result<(f64, f64)> {
    let grid = medium.grid;
    let sp = Spectral::new(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = || {
        let vals = (0..grid.dim * grid.npts()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut f = CellField::from_values(grid, 1, vals).expect("length");
        f.remove_mean();
        for j in 0..grid.dim {
            sp.project_band(f.comp_mut(j));
        }
        f
    };
    let inner = |a: &CellField, b: &CellField| {
        a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() / grid.npts() as f64
    };
    let (mut worst_adj, mut min_energy) = (0.0f64, f64::INFINITY);
    for _ in 0..trials {
        let (u, v) = (random(), random());
        let (lu, lv) = (apply_operator(&medium.c, &u)?, apply_operator(&medium.c, &v)?);
        let scale = (inner(&lu, &lu) * inner(&v, &v)).sqrt() + (inner(&u, &u) * inner(&lv, &lv)).sqrt();
        worst_adj = worst_adj.max((inner(&lu, &v) - inner(&u, &lv)).abs() / scale);
        let g = sp.gradient(&u);
        min_energy = min_energy.min(-inner(&lu, &u) / inner(&g, &g));
    }
    Ok((worst_adj, min_energy))
}

/// Laminate axis along which a closed-form spec can feed the oracle.
pub fn oracle_axis(spec: &MediumSpec, medium: &Medium) -> Option<usize> {
    let evaluable = match &spec.kind {
        MediumKind::Constant { .. } => false,
        MediumKind::Laminate { .. } => spec.smoothing_width.is_none(),
        MediumKind::Smooth { .. } => true,
        MediumKind::Voxel { .. } => false,
    };
    if !evaluable {
        return None;
    }
    (0..medium.dim()).find(|&a| medium.is_laminate_along(a))
}

/// Run the battery on a solved medium.
pub fn verify(
    spec: &MediumSpec,
    medium: &Medium,
    set: &CorrectorSet,
    model: &EffectiveModel,
    solver: &SolverConfig,
    opts: &VerifyOptions,
) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    // identity thresholds follow the solver tolerance when it is loosened
    let relax = (solver.rel_tol / 1e-10).max(1.0);
    for (name, r) in &set.reports {
        checks.push(Check::at_most(
            format!("residual.{name}"),
            r.max_residual,
            2.0 * solver.rel_tol,
        ));
    }
    let sym = check_symmetries(&model.cbar);
    checks.push(Check::at_most("cbar.major_symmetry", sym.major_defect, 1e-9 * relax));
    checks.push(Check::at_most("cbar.minor_symmetry", sym.minor_defect, 1e-9 * relax));
    checks.push(Check::at_least("cbar.convexity_margin", convexity_margin(&model.cbar), 1e-3));
    let sp = Spectral::new(medium.grid);
    let energy = effective_c_energy(&sp, &medium.c, &set.chi1);
    checks.push(Check::at_most(
        "cbar.energy_form",
        rel_gap(&energy.to_tensor_n(), &model.cbar.to_tensor_n()),
        1e-9 * relax,
    ));
    let mut b_plus = set.mean_b();
    let cbar = model.cbar.to_tensor_n();
    let vals: Vec<f64> = b_plus.entries().iter().zip(cbar.entries()).map(|(b, c)| b + c).collect();
    b_plus = TensorN::from_entries(b_plus.dim(), 4, vals)?;
    checks.push(Check::at_most("mean_b_plus_cbar", b_plus.max_abs(), 1e-9 * relax));
    let src = u1_source_tensors(&sp, &medium.c, &medium.rho, &set.chi1, &set.chi4, &set.gamma);
    checks.push(Check::at_most(
        "gamma_chi_reciprocity",
        src.gamma_flux.max_abs_diff(&src.rho_chi),
        1e-8 * relax,
    ));
    checks.push(Check::at_most(
        "chi4_three_integral_identity",
        src.chi4_flux.max_abs_diff(&src.chi4_flux_three_integral),
        1e-8 * relax,
    ));
    checks.push(Check::at_most(
        "u1_first_transpose_form",
        src.first.max_abs_diff(&src.first_transpose_form),
        1e-8 * relax,
    ));
    let (adj, energy_min) = adjointness_spot_check(medium, opts.seed, 3)?;
    checks.push(Check::at_most("operator.adjointness", adj, 1e-10));
    checks.push(Check::at_least("operator.energy_positive", energy_min, 0.0));

    if let Some(axis) = oracle_axis(spec, medium) {
        let smooth = matches!(spec.kind, MediumKind::Smooth { .. });
        let (samples, sampling) = if smooth {
            (FIELD_ORACLE_SAMPLES, Sampling::Nodes)
        } else {
            (crate::laminate::DEFAULT_SAMPLES, Sampling::Midpoints)
        };
        let profile = LaminateProfile::from_spec(spec, medium.dim(), axis, samples, sampling)?;
        let (line, oracle) = laminate_model(&profile)?;
        checks.push(Check::at_most(
            "oracle.cbar",
            rel_gap(&oracle.cbar.to_tensor_n(), &cbar),
            1e-6 * relax,
        ));
        if smooth && samples % medium.grid.n == 0 {
            checks.push(Check::at_most(
                "oracle.chi1_field",
                relative_field_gap(&set.chi1, &line.chi1, axis),
                1e-7 * relax,
            ));
            checks.push(Check::at_most(
                "oracle.gamma_field",
                relative_field_gap(&set.gamma, &line.gamma, axis),
                1e-7 * relax,
            ));
        }
    }

    let mut slopes = None;
    if let Some((dir, ks)) = &opts.bloch {
        let s = model_error_slopes(medium, model, dir, ks, opts.bloch_config)?;
        if let (Some(s0), Some(s2)) = (s.slope0, s.slope2) {
            checks.push(Check::at_least("bloch.slope0", s0, 1.9));
            checks.push(Check::at_least("bloch.slope2_gain", s2 - s0, 1.5));
            let (e0, e2) = s.errors_near(0.1 * 2.0 * std::f64::consts::PI);
            checks.push(Check::at_least("bloch.error_reduction", e0 / e2.max(f64::MIN_POSITIVE), 10.0));
        } else {
            // homogeneous media: both models are exact up to round-off
            let worst = s.table.iter().fold(0.0f64, |m, r| m.max(r.err0).max(r.err2));
            checks.push(Check::at_most("bloch.model_error", worst, 1e-9));
        }
        slopes = Some(s);
    }
    Ok(VerifyReport { checks, slopes })
}
