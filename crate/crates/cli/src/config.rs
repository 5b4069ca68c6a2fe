use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use cellhom::{CellGrid, HomogError, MediumSpec, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Correctors,
    Effective,
    Dispersive,
    BlochCompare,
    VerifyLaminate,
    DtnTable,
}

impl Task {
    fn requires(self) -> &'static [Task] {
        match self {
            Task::Correctors | Task::DtnTable => &[],
            Task::Effective => &[Task::Correctors],
            Task::Dispersive => &[Task::Effective],
            Task::BlochCompare => &[Task::Dispersive],
            Task::VerifyLaminate => &[Task::Effective],
        }
    }
}

/// Add every prerequisite of the requested tasks.
pub fn close_tasks(tasks: &[Task]) -> BTreeSet<Task> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<Task> = tasks.to_vec();
    while let Some(t) = stack.pop() {
        if out.insert(t) {
            stack.extend_from_slice(t.requires());
        }
    }
    out
}

/// Wave vectors for `bloch-compare`: explicit `k` values, or `count` log-spaced
/// values between `k_min` and `k_max` given in units of `2 pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochSweep {
    pub direction: Vec<f64>,
    #[serde(default)]
    pub k: Option<Vec<f64>>,
    #[serde(default = "default_k_min")]
    pub k_min: f64,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_k_min() -> f64 {
    0.02
}
fn default_k_max() -> f64 {
    0.2
}
fn default_count() -> usize {
    10
}

impl BlochSweep {
    pub fn k_values(&self) -> Vec<f64> {
        match &self.k {
            Some(k) => k.clone(),
            None => cellhom::bloch::log_spaced(2.0 * PI * self.k_min, 2.0 * PI * self.k_max, self.count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtnSpec {
    pub radius: f64,
    pub omega: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Number of harmonic orders, `n = 0 .. orders - 1`.
    pub orders: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub medium: Option<MediumSpec>,
    #[serde(default)]
    pub grid: Option<CellGrid>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub bloch: Option<BlochSweep>,
    #[serde(default)]
    pub dtn: Option<DtnSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HomogError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HomogError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| HomogError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(body.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn medium_and_grid(&self) -> Result<(&MediumSpec, CellGrid), HomogError> {
        match (&self.medium, self.grid) {
            (Some(m), Some(g)) => {
                CellGrid::new(g.dim, g.n)?;
                Ok((m, g))
            }
            _ => Err(HomogError::Config("this task needs [medium] and [grid] sections".into())),
        }
    }
}
