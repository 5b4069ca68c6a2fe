//! Right-hand sides and solves for the whole hierarchy of cell functions.
//!
//! Field layouts (row-major index order, storage 0-based):
//!
//! | field         | indices           | solved component |
//! |---------------|-------------------|------------------|
//! | `chi1`        | `l m n`           | `l`              |
//! | `gamma`       | `m l`             | `l`              |
//! | `b`           | `i j k l`         | (pointwise)      |
//! | `chi4`        | `i k l q`         | `q`              |
//! | `d5`          | `i j n m q`       | (pointwise)      |
//! | `hat_chi5`    | `i n m q l`       | `l`              |
//! | `hat_gamma4`  | `i k q l`         | `l`              |
//! | `hat_gamma3`  | `l m n`           | `l`              |
//! | `disp_chi5`   | `i n m q l`       | `l`              |
//! | `disp_gamma3` | `l m n`           | `l`              |
//!
//! Every right-hand side is mean-projected before it reaches the solver.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::field::{cell_average, CellField, CellGrid, Spectral};
use crate::medium::Medium;
use crate::solver::{CellSolver, SolveReport, SolverConfig};
use crate::tensor::{multi_indices, TensorN};

/// Summary of all solves in one corrector family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub solves: usize,
    pub max_iterations: usize,
    pub total_iterations: usize,
    /// Largest re-applied operator residual over the family.
    pub max_residual: f64,
    /// Largest `|<f>| / |f|` reaching the solver after projection.
    pub max_compatibility_defect: f64,
}

impl FamilyReport {
    fn absorb(&mut self, r: &SolveReport) {
        self.solves += 1;
        self.max_iterations = self.max_iterations.max(r.iterations);
        self.total_iterations += r.iterations;
        self.max_residual = self.max_residual.max(r.relative_residual);
        self.max_compatibility_defect = self.max_compatibility_defect.max(r.compatibility_defect);
    }
}

/// Where the solved vector component sits in a family's index list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    First,
    Last,
}

#[inline]
fn comp_offset(slot: Slot, dim: usize, free: usize, nfree: usize, j: usize) -> usize {
    match slot {
        Slot::First => j * nfree + free,
        Slot::Last => free * dim + j,
    }
}

/// Accumulate `dst += a * b` pointwise.
#[inline]
fn add_prod(dst: &mut [f64], a: &[f64], b: &[f64], s: f64) {
    for ((o, x), y) in dst.iter_mut().zip(a).zip(b) {
        *o += s * x * y;
    }
}

/// Build a field component by component from a multi-index closure.
fn assemble(grid: CellGrid, rank: usize, fill: impl Fn(&[usize], &mut [f64]) + Sync) -> CellField {
    let npts = grid.npts();
    let mut out = CellField::zeros(grid, rank);
    let idx: Vec<Vec<usize>> = multi_indices(grid.dim, rank).collect();
    out.values_mut()
        .par_chunks_mut(npts)
        .zip(idx.par_iter())
        .for_each(|(dst, i)| fill(i, dst));
    out
}

struct Ctx<'a> {
    d: usize,
    c: &'a CellField,
}

impl Ctx<'_> {
    #[inline]
    fn c(&self, i: usize, j: usize, k: usize, l: usize) -> &[f64] {
        let d = self.d;
        self.c.comp(((i * d + j) * d + k) * d + l)
    }
}

/// Solve one family: for every free multi-index, `rhs` yields the vector
/// right-hand side, which is mean-projected and solved.
pub fn solve_family_with(
    solver: &CellSolver,
    rank: usize,
    slot: Slot,
    floor: f64,
    rhs: impl Fn(&[usize]) -> CellField + Sync,
) -> Result<(CellField, FamilyReport)> {
    let grid = solver.grid();
    let d = grid.dim;
    let npts = grid.npts();
    let nfree = d.pow(rank as u32 - 1);
    let free: Vec<Vec<usize>> = multi_indices(d, rank - 1).collect();
    let results: Vec<(CellField, SolveReport)> = free
        .par_iter()
        .map(|idx| {
            let mut f = rhs(idx);
            // second pass clears the cancellation error left by a large mean
            f.remove_mean();
            f.remove_mean();
            if f.max_abs() <= floor {
                // round-off-level data: the exact solution is zero
                return Ok((CellField::zeros(grid, 1), SolveReport::default()));
            }
            solver.solve(&f)
        })
        .collect::<Result<_>>()?;
    let mut out = CellField::zeros(grid, rank);
    let mut report = FamilyReport::default();
    for (fi, (u, r)) in results.iter().enumerate() {
        report.absorb(r);
        for j in 0..d {
            let dst = comp_offset(slot, d, fi, nfree, j);
            out.comp_mut(dst).copy_from_slice(&u.values()[j * npts..(j + 1) * npts]);
        }
    }
    Ok((out, report))
}

/// Solve one family whose right-hand sides are stored in a single field laid
/// out like the solution.
pub fn solve_family(
    solver: &CellSolver,
    rhs: &CellField,
    slot: Slot,
    floor: f64,
) -> Result<(CellField, FamilyReport)> {
    let grid = rhs.grid();
    let d = grid.dim;
    let rank = rhs.rank();
    let nfree = d.pow(rank as u32 - 1);
    solve_family_with(solver, rank, slot, floor, |idx| {
        let fi = crate::tensor::flat_index(d, idx);
        let mut vals = Vec::with_capacity(d * grid.npts());
        for j in 0..d {
            vals.extend_from_slice(rhs.comp(comp_offset(slot, d, fi, nfree, j)));
        }
        CellField::from_values(grid, 1, vals).expect("consistent length")
    })
}

/// Round-off floor for right-hand sides, scaled by the medium.
pub fn rhs_floor(c: &CellField, rho: Option<&CellField>) -> f64 {
    1e-13 * (c.max_abs() + rho.map_or(0.0, |r| r.max_abs()))
}

/// Right-hand side `f_j = d_i C_{i j m n}` of the first-order problem, laid
/// out `[j][m][n]`.
pub fn chi1_rhs(sp: &Spectral, c: &CellField) -> CellField {
    sp.divergence(c).expect("rank-4 stiffness")
}

/// First-order corrector `chi_{l m n}`.
pub fn solve_chi1(solver: &CellSolver) -> Result<(CellField, FamilyReport)> {
    let c = solver.coefficients();
    let rhs = chi1_rhs(solver.spectral(), c);
    solve_family(solver, &rhs, Slot::First, rhs_floor(c, None))
}

/// Density corrector `gamma_{m l}`: `L gamma_{m .} = (rho_bar - rho) e_m`.
pub fn solve_gamma(solver: &CellSolver, rho: &CellField) -> Result<(CellField, FamilyReport)> {
    let grid = solver.grid();
    let rhobar = cell_average(rho)[0];
    let rhs = assemble(grid, 2, |idx, dst| {
        if idx[0] == idx[1] {
            dst.iter_mut()
                .zip(rho.values())
                .for_each(|(o, r)| *o = rhobar - r);
        }
    });
    solve_family(solver, &rhs, Slot::Last, rhs_floor(solver.coefficients(), Some(rho)))
}

/// Pointwise `b_{ijkl} = -C_{ijkl} + C_{ijmn} d_m chi_{nkl} + d_m(chi_{nil} C_{mjkn})`.
pub fn assemble_b(sp: &Spectral, c: &CellField, chi1: &CellField) -> CellField {
    let grid = c.grid();
    let d = grid.dim;
    let cx = Ctx { d, c };
    let g1 = sp.gradient(chi1); // [n][k][l][m]
    let g = |n: usize, k: usize, l: usize, m: usize| g1.comp(((n * d + k) * d + l) * d + m);
    // t[m][i][j][k][l] = sum_n chi_{n i l} C_{m j k n}
    let t = assemble(grid, 5, |x, dst| {
        let (m, i, j, k, l) = (x[0], x[1], x[2], x[3], x[4]);
        for n in 0..d {
            add_prod(dst, chi1.comp((n * d + i) * d + l), cx.c(m, j, k, n), 1.0);
        }
    });
    let div = sp.divergence(&t).expect("rank-5 field");
    assemble(grid, 4, |x, dst| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let src = div.comp(((i * d + j) * d + k) * d + l);
        let ci = cx.c(i, j, k, l);
        for p in 0..dst.len() {
            dst[p] = src[p] - ci[p];
        }
        for m in 0..d {
            for n in 0..d {
                add_prod(dst, cx.c(i, j, m, n), g(n, k, l, m), 1.0);
            }
        }
    })
}

/// Fourth-order corrector `chi_{iklq}`: `L chi_{ikl .} = b_{i . k l} - <b>`.
pub fn solve_chi4(solver: &CellSolver, b: &CellField) -> Result<(CellField, FamilyReport)> {
    let grid = solver.grid();
    let d = grid.dim;
    // reorder b_{ijkl} to [i][k][l][j]
    let rhs = assemble(grid, 4, |x, dst| {
        let (i, k, l, j) = (x[0], x[1], x[2], x[3]);
        dst.copy_from_slice(b.comp(((i * d + j) * d + k) * d + l));
    });
    solve_family(solver, &rhs, Slot::Last, rhs_floor(solver.coefficients(), None))
}

/// Pointwise `d_{ijnmq} = C_{ijnl} chi_{lmq} - C_{ijkl} d_k chi4_{mnql}`.
pub fn assemble_d(sp: &Spectral, c: &CellField, chi1: &CellField, chi4: &CellField) -> CellField {
    let grid = c.grid();
    let d = grid.dim;
    let cx = Ctx { d, c };
    let g4 = sp.gradient(chi4); // [m][n][q][l][k]
    assemble(grid, 5, |x, dst| {
        let (i, j, n, m, q) = (x[0], x[1], x[2], x[3], x[4]);
        for l in 0..d {
            add_prod(dst, cx.c(i, j, n, l), chi1.comp((l * d + m) * d + q), 1.0);
            for k in 0..d {
                let gk = g4.comp(((((m * d + n) * d + q) * d + l) * d) + k);
                add_prod(dst, cx.c(i, j, k, l), gk, -1.0);
            }
        }
    })
}

/// Pointwise part of the `hat_gamma4` right-hand side, laid out `[i][k][q][j]`:
/// `-C_{ijkq} + C_{ijmn} d_m chi_{nkq}`.
pub fn hat_gamma4_source(sp: &Spectral, c: &CellField, chi1: &CellField) -> CellField {
    let grid = c.grid();
    let d = grid.dim;
    let cx = Ctx { d, c };
    let g1 = sp.gradient(chi1);
    assemble(grid, 4, |x, dst| {
        let (i, k, q, j) = (x[0], x[1], x[2], x[3]);
        let ci = cx.c(i, j, k, q);
        dst.iter_mut().zip(ci).for_each(|(o, v)| *o = -v);
        for m in 0..d {
            for n in 0..d {
                add_prod(dst, cx.c(i, j, m, n), g1.comp(((n * d + k) * d + q) * d + m), 1.0);
            }
        }
    })
}

/// Pointwise part of the `hat_gamma3` right-hand side, laid out `[j][m][n]`:
/// `-C_{mjkl} d_k gamma_{nl} + rho chi_{jmn}`.
pub fn hat_gamma3_source(
    sp: &Spectral,
    c: &CellField,
    rho: &CellField,
    chi1: &CellField,
    gamma: &CellField,
) -> CellField {
    let grid = c.grid();
    let d = grid.dim;
    let cx = Ctx { d, c };
    let gg = sp.gradient(gamma); // [n][l][k]
    assemble(grid, 3, |x, dst| {
        let (j, m, n) = (x[0], x[1], x[2]);
        add_prod(dst, rho.values(), chi1.comp((j * d + m) * d + n), 1.0);
        for k in 0..d {
            for l in 0..d {
                add_prod(dst, cx.c(m, j, k, l), gg.comp((n * d + l) * d + k), -1.0);
            }
        }
    })
}

/// The three hat families.
pub struct HatCorrectors {
    pub hat_chi5: CellField,
    pub hat_gamma4: CellField,
    pub hat_gamma3: CellField,
    pub reports: [FamilyReport; 3],
}

/// Reorder `d_{ijnmq}` into `[i][n][m][q][j]`.
fn d5_by_component(d5: &CellField) -> CellField {
    let grid = d5.grid();
    let d = grid.dim;
    assemble(grid, 5, |x, dst| {
        let (i, n, m, q, j) = (x[0], x[1], x[2], x[3], x[4]);
        dst.copy_from_slice(d5.comp((((i * d + j) * d + n) * d + m) * d + q));
    })
}

pub fn solve_hat_correctors(
    solver: &CellSolver,
    rho: &CellField,
    chi1: &CellField,
    gamma: &CellField,
    d5: &CellField,
) -> Result<HatCorrectors> {
    let c = solver.coefficients();
    let sp = solver.spectral();
    let floor = rhs_floor(c, Some(rho));
    let (hat_chi5, r1) = solve_family(solver, &d5_by_component(d5), Slot::Last, floor)?;
    let (hat_gamma4, r2) = solve_family(solver, &hat_gamma4_source(sp, c, chi1), Slot::Last, floor)?;
    let (hat_gamma3, r3) = solve_family(
        solver,
        &hat_gamma3_source(sp, c, rho, chi1, gamma),
        Slot::First,
        floor,
    )?;
    Ok(HatCorrectors {
        hat_chi5,
        hat_gamma4,
        hat_gamma3,
        reports: [r1, r2, r3],
    })
}

/// Divergence `d_p (sum_l C_{p j a l} w[l])` of one vector slice family,
/// returned as a rank-1 field over `j`.
fn div_c_vector(sp: &Spectral, c: &CellField, a: usize, w: &[&[f64]]) -> CellField {
    let grid = c.grid();
    let d = grid.dim;
    let cx = Ctx { d, c };
    let mut t = CellField::zeros(grid, 2); // [p][j]
    for p in 0..d {
        for j in 0..d {
            let dst = t.comp_mut(p * d + j);
            for l in 0..d {
                add_prod(dst, cx.c(p, j, a, l), w[l], 1.0);
            }
        }
    }
    sp.divergence(&t).expect("rank-2 field")
}

/// The two dispersive families.
pub struct DispersiveCorrectors {
    pub disp_chi5: CellField,
    pub disp_gamma3: CellField,
    pub reports: [FamilyReport; 2],
}

pub fn solve_dispersive_correctors(
    solver: &CellSolver,
    rho: &CellField,
    chi1: &CellField,
    chi4: &CellField,
    gamma: &CellField,
    d5: &CellField,
) -> Result<DispersiveCorrectors> {
    let c = solver.coefficients();
    let sp = solver.spectral();
    let grid = c.grid();
    let d = grid.dim;
    let npts = grid.npts();
    let floor = rhs_floor(c, Some(rho));
    // L chi_{inmq .} = -d_p(C_{p j i l} chi4_{mnql}) + d_{ijnmq} - <d>
    let (disp_chi5, r1) = solve_family_with(solver, 5, Slot::Last, floor, |x| {
        let (i, n, m, q) = (x[0], x[1], x[2], x[3]);
        let w: Vec<&[f64]> = (0..d)
            .map(|l| chi4.comp((((m * d + n) * d + q) * d) + l))
            .collect();
        let mut f = div_c_vector(sp, c, i, &w);
        for j in 0..d {
            let src = d5.comp((((i * d + j) * d + n) * d + m) * d + q);
            f.values_mut()[j * npts..(j + 1) * npts]
                .iter_mut()
                .zip(src)
                .for_each(|(o, s)| *o = s - *o);
        }
        f
    })?;
    // L gamma_{. m n} = -d_p(C_{p j m l} gamma_{n l}) + hat_gamma3 source
    let src3 = hat_gamma3_source(sp, c, rho, chi1, gamma);
    let (disp_gamma3, r2) = solve_family_with(solver, 3, Slot::First, floor, |x| {
        let (m, n) = (x[0], x[1]);
        let w: Vec<&[f64]> = (0..d).map(|l| gamma.comp(n * d + l)).collect();
        let mut f = div_c_vector(sp, c, m, &w);
        for j in 0..d {
            let src = src3.comp((j * d + m) * d + n);
            f.values_mut()[j * npts..(j + 1) * npts]
                .iter_mut()
                .zip(src)
                .for_each(|(o, s)| *o = s - *o);
        }
        f
    })?;
    Ok(DispersiveCorrectors {
        disp_chi5,
        disp_gamma3,
        reports: [r1, r2],
    })
}

/// Re-solve the fourth-order corrector from its re-indexed form
/// `L chi_{ikq .} = d_m(C_{m j k n} chi_{niq}) + (-C_{ijkq} + C_{ijmn} d_m chi_{nkq}) - mean`.
pub fn solve_chi4_reindexed(solver: &CellSolver, chi1: &CellField) -> Result<(CellField, FamilyReport)> {
    let c = solver.coefficients();
    let sp = solver.spectral();
    let grid = c.grid();
    let d = grid.dim;
    let npts = grid.npts();
    let src = hat_gamma4_source(sp, c, chi1);
    solve_family_with(solver, 4, Slot::Last, rhs_floor(c, None), |x| {
        let (i, k, q) = (x[0], x[1], x[2]);
        // d_m(C_{m j k n} chi_{n i q}) as a divergence over m
        let w: Vec<&[f64]> = (0..d).map(|n| chi1.comp((n * d + i) * d + q)).collect();
        let mut f = div_c_vector(sp, c, k, &w);
        for j in 0..d {
            let s = src.comp(((i * d + k) * d + q) * d + j);
            f.values_mut()[j * npts..(j + 1) * npts]
                .iter_mut()
                .zip(s)
                .for_each(|(o, v)| *o += v);
        }
        f
    })
}

/// The complete set of cell functions for one medium.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub grid: CellGrid,
    pub chi1: CellField,
    pub gamma: CellField,
    pub b: CellField,
    pub chi4: CellField,
    pub d5: CellField,
    pub hat_chi5: CellField,
    pub hat_gamma4: CellField,
    pub hat_gamma3: CellField,
    pub disp_chi5: CellField,
    pub disp_gamma3: CellField,
    pub reports: BTreeMap<String, FamilyReport>,
}

/// Rough memory footprint (bytes) of a full corrector set.
pub fn memory_estimate(grid: CellGrid) -> usize {
    let per = grid.npts() * 8;
    let comps: usize = [3, 2, 4, 4, 5, 5, 4, 3, 5, 3]
        .iter()
        .map(|&r| grid.components(r))
        .sum();
    comps * per
}

impl CorrectorSet {
    pub fn compute(medium: &Medium, cfg: &SolverConfig) -> Result<Self> {
        let grid = medium.grid;
        if grid.dim == 3 {
            log::info!(
                "corrector storage estimate: {:.1} MiB",
                memory_estimate(grid) as f64 / (1024.0 * 1024.0)
            );
        }
        let solver = CellSolver::new(&medium.c, *cfg)?;
        let sp = solver.spectral();
        let mut reports = BTreeMap::new();
        let (chi1, r) = solve_chi1(&solver)?;
        reports.insert("chi1".to_string(), r);
        let (gamma, r) = solve_gamma(&solver, &medium.rho)?;
        reports.insert("gamma".to_string(), r);
        let b = assemble_b(sp, &medium.c, &chi1);
        let (chi4, r) = solve_chi4(&solver, &b)?;
        reports.insert("chi4".to_string(), r);
        let d5 = assemble_d(sp, &medium.c, &chi1, &chi4);
        let hat = solve_hat_correctors(&solver, &medium.rho, &chi1, &gamma, &d5)?;
        for (name, r) in ["hat_chi5", "hat_gamma4", "hat_gamma3"].iter().zip(hat.reports) {
            reports.insert(name.to_string(), r);
        }
        let disp = solve_dispersive_correctors(&solver, &medium.rho, &chi1, &chi4, &gamma, &d5)?;
        for (name, r) in ["disp_chi5", "disp_gamma3"].iter().zip(disp.reports) {
            reports.insert(name.to_string(), r);
        }
        Ok(Self {
            grid,
            chi1,
            gamma,
            b,
            chi4,
            d5,
            hat_chi5: hat.hat_chi5,
            hat_gamma4: hat.hat_gamma4,
            hat_gamma3: hat.hat_gamma3,
            disp_chi5: disp.disp_chi5,
            disp_gamma3: disp.disp_gamma3,
            reports,
        })
    }

    /// Named view of every stored family.
    pub fn families(&self) -> Vec<(&'static str, &CellField)> {
        vec![
            ("chi1", &self.chi1),
            ("gamma", &self.gamma),
            ("b", &self.b),
            ("chi4", &self.chi4),
            ("d5", &self.d5),
            ("hat_chi5", &self.hat_chi5),
            ("hat_gamma4", &self.hat_gamma4),
            ("hat_gamma3", &self.hat_gamma3),
            ("disp_chi5", &self.disp_chi5),
            ("disp_gamma3", &self.disp_gamma3),
        ]
    }

    /// Solved families only (pointwise `b` and `d5` excluded).
    pub fn solved(&self) -> Vec<(&'static str, &CellField)> {
        self.families()
            .into_iter()
            .filter(|(n, _)| *n != "b" && *n != "d5")
            .collect()
    }

    pub fn mean_b(&self) -> TensorN {
        TensorN::from_entries(self.grid.dim, 4, cell_average(&self.b)).expect("finite")
    }

    pub fn mean_d(&self) -> TensorN {
        TensorN::from_entries(self.grid.dim, 5, cell_average(&self.d5)).expect("finite")
    }

    /// Write one little-endian `f64` file per family plus `manifest.json`.
    pub fn save(&self, dir: &Path, medium_hash: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut families = Vec::new();
        for (name, f) in self.families() {
            let file = format!("{name}.f64");
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(&file))?);
            for v in f.values() {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()?;
            families.push(FamilyEntry {
                name: name.to_string(),
                rank: f.rank(),
                file,
                components: f.n_components(),
                points: f.npts(),
            });
        }
        let manifest = CorrectorManifest {
            grid: self.grid,
            medium_hash: medium_hash.to_string(),
            families,
            reports: self.reports.clone(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, CorrectorManifest)> {
        let manifest: CorrectorManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let grid = manifest.grid;
        let mut fields: BTreeMap<String, CellField> = BTreeMap::new();
        for e in &manifest.families {
            let mut bytes = Vec::new();
            std::fs::File::open(dir.join(&e.file))?.read_to_end(&mut bytes)?;
            let vals: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            fields.insert(e.name.clone(), CellField::from_values(grid, e.rank, vals)?);
        }
        let mut take = |name: &str| {
            fields
                .remove(name)
                .ok_or_else(|| HomogError::Config(format!("corrector family `{name}` missing")))
        };
        let set = CorrectorSet {
            grid,
            chi1: take("chi1")?,
            gamma: take("gamma")?,
            b: take("b")?,
            chi4: take("chi4")?,
            d5: take("d5")?,
            hat_chi5: take("hat_chi5")?,
            hat_gamma4: take("hat_gamma4")?,
            hat_gamma3: take("hat_gamma3")?,
            disp_chi5: take("disp_chi5")?,
            disp_gamma3: take("disp_gamma3")?,
            reports: manifest.reports.clone(),
        };
        Ok((set, manifest))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEntry {
    pub name: String,
    pub rank: usize,
    pub file: String,
    pub components: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorManifest {
    pub grid: CellGrid,
    pub medium_hash: String,
    pub families: Vec<FamilyEntry>,
    pub reports: BTreeMap<String, FamilyReport>,
}
