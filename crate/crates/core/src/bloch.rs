//! Floquet-Bloch acoustic branches of the exact periodic operator and the
//! error-slope harness for the long-wave models.
//!
//! `-(d + i k).(C (d + i k) u) = w^2 rho u` is solved on the same band-limited
//! Fourier space as the cell problems. The lowest branches come from block
//! inverse iteration with Rayleigh-Ritz in the `rho`-weighted inner product;
//! each inverse is a preconditioned CG solve of the positive definite `A(k)`.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{dispersion_relation, EffectiveModel};
use crate::error::{HomogError, Result};
use crate::medium::Medium;
use crate::solver::{dot, norm, pcg, ElasticOperator};

/// Eigen-residual target `|A u - w^2 M u| / |M u|`.
pub const EIGEN_TOL: f64 = 1e-8;
/// Relative tolerance of the inner CG solves; Rayleigh-Ritz uses the exact
/// operator, so inexact inverses only slow the outer iteration.
const INNER_TOL: f64 = 1e-11;
/// Overlap below which branch matching falls back to ascending order.
pub const OVERLAP_FLOOR: f64 = 0.6;

/// Settings for the block eigensolver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block vectors beyond the requested count.
    pub guard: usize,
    pub seed: u64,
}

impl Default for BlochConfig {
    fn default() -> Self {
        Self {
            tol: EIGEN_TOL,
            max_iter: 200,
            guard: 2,
            seed: 7,
        }
    }
}

/// Lowest eigenvalues at one wave vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlochBand {
    pub k: Vec<f64>,
    pub omega2: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Cell average of each eigenvector (unit length), used for branch matching.
    #[serde(skip)]
    pub polarizations: Vec<Vec<C64>>,
}

/// Reusable operator for one medium.
pub struct BlochSolver {
    op: ElasticOperator,
    cfg: BlochConfig,
}

impl std::fmt::Debug for BlochSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlochSolver").field("cfg", &self.cfg).finish()
    }
}

fn dense(cols: &[Vec<C64>], other: &[Vec<C64>]) -> DMatrix<C64> {
    DMatrix::from_fn(cols.len(), other.len(), |i, j| dot(&cols[i], &other[j]))
}

fn combine(cols: &[Vec<C64>], coef: &DMatrix<C64>, j: usize) -> Vec<C64> {
    let mut out = vec![C64::default(); cols[0].len()];
    for (i, c) in cols.iter().enumerate() {
        let w = coef[(i, j)];
        for (o, v) in out.iter_mut().zip(c) {
            *o += v * w;
        }
    }
    out
}

impl BlochSolver {
    pub fn new(medium: &Medium, cfg: BlochConfig) -> Result<Self> {
        if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
            return Err(HomogError::Config("eigensolver needs tol > 0 and max_iter > 0".into()));
        }
        Ok(Self {
            op: ElasticOperator::new(&medium.c, Some(&medium.rho))?,
            cfg,
        })
    }

    pub fn operator(&self) -> &ElasticOperator {
        &self.op
    }

    fn shift(&self, k: &[f64]) -> Result<[f64; 3]> {
        let d = self.op.grid().dim;
        if k.len() != d {
            return Err(HomogError::Shape(format!("wave vector needs {d} entries")));
        }
        let mut out = [0.0; 3];
        out[..d].copy_from_slice(k);
        Ok(out)
    }

    /// Lowest `count` eigenvalues at `k`.
    pub fn bands(&self, k: &[f64], count: usize) -> Result<BlochBand> {
        let kk = self.shift(k)?;
        let grid = self.op.grid();
        let (d, npts) = (grid.dim, grid.npts());
        if count == 0 {
            return Err(HomogError::Config("need at least one branch".into()));
        }
        if kk.iter().all(|&v| v == 0.0) {
            // rigid translations; the constant mode sits outside the k = 0 space
            if count > d {
                return Err(HomogError::Config("only the acoustic branches are available at k = 0".into()));
            }
            let pol = (0..count)
                .map(|j| (0..d).map(|l| C64::from(if l == j { 1.0 } else { 0.0 })).collect())
                .collect();
            return Ok(BlochBand {
                k: k.to_vec(),
                omega2: vec![0.0; count],
                residuals: vec![0.0; count],
                iterations: 0,
                polarizations: pol,
            });
        }
        let p = count + self.cfg.guard;
        let len = self.op.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut x: Vec<Vec<C64>> = (0..p)
            .map(|c| {
                let mut v = vec![C64::default(); len];
                if c < d {
                    v[c * npts] = C64::from(npts as f64);
                }
                for (i, z) in v.iter_mut().enumerate() {
                    // a little of every low mode so no target direction is missing
                    if self.op.spectral().freq(i % npts)[..d].iter().all(|f| f.abs() < 13.0) {
                        *z += C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
                self.op.mask(&mut v, &kk);
                v
            })
            .collect();
        let blocks = self.op.mode_blocks(&kk, 0.0);
        let apply = |v: &[C64], out: &mut [C64]| self.op.apply(v, &kk, 0.0, out);
        let mass = |v: &[C64], out: &mut [C64]| self.op.apply_mass(v, &kk, out);
        let mut theta = vec![0.0; p];
        let mut residuals = vec![f64::INFINITY; p];
        let mut iterations = 0;
        let mut ritz: Vec<Vec<C64>> = x.clone();
        while iterations < self.cfg.max_iter {
            iterations += 1;
            // y = A^{-1} M x
            let y: Vec<Vec<C64>> = x
                .par_iter()
                .map(|v| {
                    let mut mv = vec![C64::default(); len];
                    mass(v, &mut mv);
                    let mut sol = vec![C64::default(); len];
                    pcg(
                        apply,
                        |r, o| self.op.precondition(Some(&blocks), r, o),
                        &mv,
                        &mut sol,
                        INNER_TOL,
                        2000,
                    );
                    sol
                })
                .collect();
            let ay: Vec<Vec<C64>> = y
                .par_iter()
                .map(|v| {
                    let mut o = vec![C64::default(); len];
                    apply(v, &mut o);
                    o
                })
                .collect();
            let my: Vec<Vec<C64>> = y
                .par_iter()
                .map(|v| {
                    let mut o = vec![C64::default(); len];
                    mass(v, &mut o);
                    o
                })
                .collect();
            let mut ga = dense(&y, &ay);
            let mut gm = dense(&y, &my);
            ga = (&ga + ga.adjoint()) * C64::from(0.5);
            gm = (&gm + gm.adjoint()) * C64::from(0.5);
            let chol = Cholesky::new(gm).ok_or(HomogError::EigenNonConvergence {
                k: k.to_vec(),
                residual: f64::INFINITY,
                iterations,
            })?;
            let linv = chol
                .l()
                .try_inverse()
                .ok_or(HomogError::EigenNonConvergence {
                    k: k.to_vec(),
                    residual: f64::INFINITY,
                    iterations,
                })?;
            let h = &linv * &ga * linv.adjoint();
            let h = (&h + h.adjoint()) * C64::from(0.5);
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            let coef_all = linv.adjoint() * &eig.eigenvectors;
            let coef = DMatrix::from_fn(p, p, |i, j| coef_all[(i, order[j])]);
            ritz = (0..p).map(|j| combine(&y, &coef, j)).collect();
            for j in 0..p {
                theta[j] = eig.eigenvalues[order[j]];
                let av = combine(&ay, &coef, j);
                let mv = combine(&my, &coef, j);
                let r: Vec<C64> = av.iter().zip(&mv).map(|(a, m)| a - m * theta[j]).collect();
                residuals[j] = norm(&r) / norm(&mv);
            }
            x = ritz.clone();
            if residuals[..count].iter().all(|&r| r <= self.cfg.tol) {
                break;
            }
        }
        let worst = residuals[..count].iter().cloned().fold(0.0, f64::max);
        if worst > self.cfg.tol {
            return Err(HomogError::EigenNonConvergence {
                k: k.to_vec(),
                residual: worst,
                iterations,
            });
        }
        let polarizations = ritz[..count]
            .iter()
            .map(|v| {
                let m: Vec<C64> = (0..d).map(|j| v[j * npts]).collect();
                let n = norm(&m).max(f64::MIN_POSITIVE);
                m.into_iter().map(|z| z / n).collect()
            })
            .collect();
        Ok(BlochBand {
            k: k.to_vec(),
            omega2: theta[..count].to_vec(),
            residuals: residuals[..count].to_vec(),
            iterations,
            polarizations,
        })
    }

    /// `|<A u, v> - <u, A v>|` relative to `|A| |u| |v|` for random fields at `k`.
    pub fn hermiticity_defect(&self, k: &[f64], seed: u64) -> Result<f64> {
        let kk = self.shift(k)?;
        let len = self.op.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_vec = || {
            let mut v: Vec<C64> = (0..len)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            self.op.mask(&mut v, &kk);
            v
        };
        let (u, v) = (rand_vec(), rand_vec());
        let (mut au, mut av) = (vec![C64::default(); len], vec![C64::default(); len]);
        self.op.apply(&u, &kk, 0.0, &mut au);
        self.op.apply(&v, &kk, 0.0, &mut av);
        let lhs = dot(&au, &v);
        let rhs = dot(&u, &av);
        let scale = norm(&au) * norm(&v) + norm(&u) * norm(&av);
        Ok((lhs - rhs).norm() / scale)
    }
}

/// Convenience wrapper: lowest `count` branches of a medium at `k`.
pub fn bloch_bands(medium: &Medium, k: &[f64], count: usize) -> Result<BlochBand> {
    BlochSolver::new(medium, BlochConfig::default())?.bands(k, count)
}

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeRow {
    pub k: f64,
    pub branch: usize,
    pub omega2_bloch: f64,
    pub omega2_eps0: f64,
    pub omega2_eps1: f64,
    pub err0: f64,
    pub err2: f64,
    pub overlap: f64,
}

/// Fitted slopes of one branch; `None` when the errors sit at round-off.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSlopes {
    pub branch: usize,
    pub slope0: Option<f64>,
    pub slope2: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub direction: Vec<f64>,
    pub branches: Vec<BranchSlopes>,
    /// Smallest per-branch slopes (the binding ones).
    pub slope0: Option<f64>,
    pub slope2: Option<f64>,
    /// Two Bloch branches came within 1e-6 (relative) inside the window.
    pub degenerate_branch: bool,
    /// Some k-point matched branches by ascending order, not by overlap.
    pub sorted_fallback: bool,
    /// Largest `|Im w^2|` of the dispersive model over the sweep.
    pub max_model_imag: f64,
    pub table: Vec<SlopeRow>,
}

/// Least-squares slope of `log e` against `log k` over the middle 80 % of points.
pub fn fit_slope(k: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = k
        .iter()
        .zip(e)
        .filter(|(&k, &e)| k > 0.0 && e > 1e-13)
        .map(|(&k, &e)| (k.ln(), e.ln()))
        .collect();
    let drop = pts.len() / 10;
    let pts = &pts[drop..pts.len() - drop];
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn overlap(a: &[C64], b: &[C64]) -> f64 {
    dot(a, b).norm() / (norm(a) * norm(b)).max(f64::MIN_POSITIVE)
}

/// Assign model branches to Bloch branches; returns `perm[model] = bloch` and
/// the smallest overlap of the chosen assignment.
fn match_branches(bloch: &[Vec<C64>], model: &[Vec<C64>]) -> (Vec<usize>, f64) {
    let d = bloch.len();
    permutations(d)
        .into_iter()
        .map(|p| {
            let worst = (0..d).map(|i| overlap(&model[i], &bloch[p[i]])).fold(1.0, f64::min);
            (p, worst)
        })
        .fold((vec![], -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Compare the quasi-static (`eps = 0`) and dispersive (`eps = 1`) models with
/// Bloch branches along `direction` at the given `|k|` values.
pub fn model_error_slopes(
    medium: &Medium,
    model: &EffectiveModel,
    direction: &[f64],
    k_values: &[f64],
    cfg: BlochConfig,
) -> Result<SlopeSummary> {
    let d = medium.dim();
    if direction.len() != d {
        return Err(HomogError::Shape(format!("direction needs {d} entries")));
    }
    let dn = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(dn > 0.0) {
        return Err(HomogError::Config("direction must be nonzero".into()));
    }
    let dir: Vec<f64> = direction.iter().map(|v| v / dn).collect();
    if k_values.windows(2).any(|w| w[1] <= w[0]) || k_values.iter().any(|&k| !(k > 0.0)) {
        return Err(HomogError::Config("k values must be positive and increasing".into()));
    }
    let solver = BlochSolver::new(medium, cfg)?;
    let bands: Vec<BlochBand> = k_values
        .par_iter()
        .map(|&s| {
            let k: Vec<f64> = dir.iter().map(|v| v * s).collect();
            solver.bands(&k, d)
        })
        .collect::<Result<_>>()?;
    let mut table = Vec::new();
    let mut sorted_fallback = false;
    let mut degenerate_branch = false;
    let mut max_model_imag = 0.0f64;
    let mut err0 = vec![Vec::new(); d];
    let mut err2 = vec![Vec::new(); d];
    for (band, &s) in bands.iter().zip(k_values) {
        let k: Vec<f64> = dir.iter().map(|v| v * s).collect();
        let m0 = dispersion_relation(model, &k, 0.0)?;
        let m1 = dispersion_relation(model, &k, 1.0)?;
        max_model_imag = max_model_imag.max(m1.max_imag);
        for w in band.omega2.windows(2) {
            if (w[1] - w[0]).abs() <= 1e-6 * w[1].abs() {
                degenerate_branch = true;
            }
        }
        let (p0, o0) = match_branches(&band.polarizations, &m0.modes);
        let (p1, o1) = match_branches(&band.polarizations, &m1.modes);
        let (p0, p1) = if o0 < OVERLAP_FLOOR || o1 < OVERLAP_FLOOR {
            sorted_fallback = true;
            ((0..d).collect(), (0..d).collect())
        } else {
            (p0, p1)
        };
        // table row per Bloch branch
        for b in 0..d {
            let i0 = p0.iter().position(|&x| x == b).expect("permutation");
            let i1 = p1.iter().position(|&x| x == b).expect("permutation");
            let wb = band.omega2[b];
            let (w0, w1) = (m0.omega2[i0].re, m1.omega2[i1].re);
            let e0 = (wb - w0).abs() / wb.abs();
            let e2 = (wb - w1).abs() / wb.abs();
            err0[b].push(e0);
            err2[b].push(e2);
            table.push(SlopeRow {
                k: s,
                branch: b,
                omega2_bloch: wb,
                omega2_eps0: w0,
                omega2_eps1: w1,
                err0: e0,
                err2: e2,
                overlap: o0.min(o1),
            });
        }
    }
    let branches: Vec<BranchSlopes> = (0..d)
        .map(|b| BranchSlopes {
            branch: b,
            slope0: fit_slope(k_values, &err0[b]),
            slope2: fit_slope(k_values, &err2[b]),
        })
        .collect();
    let min_of = |f: fn(&BranchSlopes) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = branches.iter().filter_map(f).collect();
        if v.len() < branches.len() {
            None
        } else {
            v.into_iter().reduce(f64::min)
        }
    };
    let slope0 = min_of(|b| b.slope0);
    let slope2 = min_of(|b| b.slope2);
    Ok(SlopeSummary {
        direction: dir,
        branches,
        slope0,
        slope2,
        degenerate_branch,
        sorted_fallback,
        max_model_imag,
        table,
    })
}

impl SlopeSummary {
    /// CSV band table: `k,branch,omega2_bloch,omega2_eps0,omega2_eps1,err0,err2`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,branch,omega2_bloch,omega2_eps0,omega2_eps1,err0,err2\n");
        for r in &self.table {
            s.push_str(&format!(
                "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.6e},{:.6e}\n",
                r.k, r.branch, r.omega2_bloch, r.omega2_eps0, r.omega2_eps1, r.err0, r.err2
            ));
        }
        s
    }

    /// Largest relative error of each model over all branches at the `|k|` closest to `at`.
    pub fn errors_near(&self, at: f64) -> (f64, f64) {
        let best = self
            .table
            .iter()
            .map(|r| r.k)
            .fold(f64::NAN, |b, k| if b.is_nan() || (k - at).abs() < (b - at).abs() { k } else { b });
        self.table
            .iter()
            .filter(|r| r.k == best)
            .fold((0.0, 0.0), |acc, r| (acc.0.max(r.err0), acc.1.max(r.err2)))
    }
}

/// Evenly spaced `|k|` values from `lo` to `hi` in log scale.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
