//! Matrix-free solver for the periodic elliptic system
//! `d_a (C_{a j b l}(y) d_b u_l) = f_j` on the torus.
//!
//! Iterates live in Fourier space on the band-limited, mean-free subspace.
//! The same operator with a Bloch shift `d -> d + i k` and an optional mass
//! term drives the eigen-solver in [`crate::bloch`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::field::{CellField, CellGrid, Spectral};
use crate::tensor::Tensor4;

type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    /// Exact inverse of the operator with coefficients frozen at `<C>`.
    ConstantReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 2000,
            preconditioner: Preconditioner::ConstantReference,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(HomogError::Config(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(HomogError::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `|L u - f| / |f|`, measured by a fresh operator application.
    pub relative_residual: f64,
    /// `max_j |<f_j>| / |f|` of the supplied right-hand side.
    pub compatibility_defect: f64,
}

/// Compatibility threshold on `|<f>| / |f|`.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Pointwise `s_{a j} = C_{a j b l} g_{l b}`; `g` has the derivative index last.
fn contract_stress(c: &CellField, grad: &CellField) -> CellField {
    let grid = c.grid();
    let d = grid.dim;
    let npts = grid.npts();
    let mut out = CellField::zeros(grid, 2);
    for a in 0..d {
        for j in 0..d {
            let dst = out.comp_mut(a * d + j);
            for b in 0..d {
                for l in 0..d {
                    let cc = c.comp(((a * d + j) * d + b) * d + l);
                    let g = grad.comp(l * d + b);
                    for p in 0..npts {
                        dst[p] += cc[p] * g[p];
                    }
                }
            }
        }
    }
    out
}

fn check_pair(c: &CellField, u: &CellField) -> Result<()> {
    if c.rank() != 4 || u.rank() != 1 {
        return Err(HomogError::Shape(format!(
            "operator needs a rank-4 coefficient and a rank-1 field, got ranks {} and {}",
            c.rank(),
            u.rank()
        )));
    }
    if c.grid() != u.grid() {
        return Err(HomogError::Shape("coefficient and field grids differ".into()));
    }
    Ok(())
}

fn apply_with(sp: &Spectral, c: &CellField, u: &CellField) -> Result<CellField> {
    let grad = sp.gradient(u);
    sp.divergence(&contract_stress(c, &grad))
}

/// `d_a (C_{a j b l} d_b u_l)` via spectral gradient, pointwise contraction and
/// spectral divergence.
pub fn apply_operator(c: &CellField, u: &CellField) -> Result<CellField> {
    check_pair(c, u)?;
    apply_with(&Spectral::new(c.grid()), c, u)
}

/// Solve `d_a (C d_b u) = f` with `<u> = 0`.
pub fn solve_periodic(
    c: &CellField,
    f: &CellField,
    cfg: &SolverConfig,
) -> Result<(CellField, SolveReport)> {
    CellSolver::new(c, *cfg)?.solve(f)
}

/// Operator `A(k) + sigma M` acting on Fourier coefficients, with
/// `A(k) u = -(d + i k) . C (d + i k) u` and `M u = rho u`, both restricted to
/// band-limited modes.
pub struct ElasticOperator {
    sp: Spectral,
    dim: usize,
    c: Vec<f64>,
    rho: Option<Vec<f64>>,
    cref: Tensor4,
    rho_ref: f64,
}

impl std::fmt::Debug for ElasticOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ElasticOperator")
            .field("grid", &self.sp.grid())
            .finish()
    }
}

/// Per-mode inverse blocks of the frozen-coefficient operator.
pub struct ModeBlocks {
    dim: usize,
    inv: Vec<f64>,
}

impl ElasticOperator {
    pub fn new(c: &CellField, rho: Option<&CellField>) -> Result<Self> {
        if c.rank() != 4 {
            return Err(HomogError::Shape("stiffness must be rank 4".into()));
        }
        let grid = c.grid();
        let mut cref = Tensor4::from_entries(grid.dim, crate::field::cell_average(c))?;
        cref.refresh_symmetry();
        let (rho, rho_ref) = match rho {
            Some(r) => {
                if r.rank() != 0 || r.grid() != grid {
                    return Err(HomogError::Shape("density must be a scalar on the same grid".into()));
                }
                (Some(r.values().to_vec()), crate::field::cell_average(r)[0])
            }
            None => (None, 1.0),
        };
        Ok(Self {
            sp: Spectral::new(grid),
            dim: grid.dim,
            c: c.values().to_vec(),
            rho,
            cref,
            rho_ref,
        })
    }

    pub fn grid(&self) -> CellGrid {
        self.sp.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn reference_tensor(&self) -> &Tensor4 {
        &self.cref
    }

    pub fn reference_density(&self) -> f64 {
        self.rho_ref
    }

    pub fn len(&self) -> usize {
        self.dim * self.grid().npts()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    fn wave(&self, m: usize, k: &[f64; 3]) -> [f64; 3] {
        let f = self.sp.freq(m);
        [f[0] + k[0], f[1] + k[1], f[2] + k[2]]
    }

    /// Whether a mode belongs to the discrete space at shift `k`.
    #[inline]
    pub fn active(&self, m: usize, k: &[f64; 3]) -> bool {
        self.sp.in_band(m) && !(m == 0 && k.iter().all(|&v| v == 0.0))
    }

    /// Zero every inactive mode.
    pub fn mask(&self, x: &mut [C64], k: &[f64; 3]) {
        let npts = self.grid().npts();
        for (i, v) in x.iter_mut().enumerate() {
            if !self.active(i % npts, k) {
                *v = C64::default();
            }
        }
    }

    /// Fourier coefficients of a real vector field (inactive modes at k = 0 dropped).
    pub fn to_spectral(&self, f: &CellField) -> Vec<C64> {
        let npts = self.grid().npts();
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.dim {
            let mut buf: Vec<C64> = f.comp(j).iter().map(|&v| C64::new(v, 0.0)).collect();
            self.sp.forward(&mut buf);
            out.extend(buf);
        }
        debug_assert_eq!(out.len(), self.dim * npts);
        self.mask(&mut out, &[0.0; 3]);
        out
    }

    /// Physical-space values (complex) of a Fourier-space vector field.
    pub fn to_physical(&self, x: &[C64]) -> Vec<C64> {
        let npts = self.grid().npts();
        let mut out = x.to_vec();
        for chunk in out.chunks_mut(npts) {
            self.sp.inverse(chunk);
        }
        out
    }

    /// Real part of the physical-space field.
    pub fn to_real_field(&self, x: &[C64]) -> CellField {
        let vals = self.to_physical(x).into_iter().map(|z| z.re).collect();
        CellField::from_values(self.grid(), 1, vals).expect("consistent length")
    }

    /// `out = (A(k) + sigma M) x`.
    pub fn apply(&self, x: &[C64], k: &[f64; 3], sigma: f64, out: &mut [C64]) {
        let d = self.dim;
        let npts = self.grid().npts();
        // grad[l][b] in physical space
        let mut grad = vec![C64::default(); d * d * npts];
        for l in 0..d {
            for b in 0..d {
                let dst = &mut grad[(l * d + b) * npts..(l * d + b + 1) * npts];
                let src = &x[l * npts..(l + 1) * npts];
                for m in 0..npts {
                    dst[m] = if self.active(m, k) {
                        src[m] * self.wave(m, k)[b]
                    } else {
                        C64::default()
                    };
                }
                self.sp.inverse(dst);
            }
        }
        let mut stress = vec![C64::default(); d * d * npts];
        for a in 0..d {
            for j in 0..d {
                let dst = &mut stress[(a * d + j) * npts..(a * d + j + 1) * npts];
                for b in 0..d {
                    for l in 0..d {
                        let cc = &self.c[(((a * d + j) * d + b) * d + l) * npts..][..npts];
                        let g = &grad[(l * d + b) * npts..][..npts];
                        for p in 0..npts {
                            dst[p] += g[p] * cc[p];
                        }
                    }
                }
                self.sp.forward(dst);
            }
        }
        out.iter_mut().for_each(|v| *v = C64::default());
        for j in 0..d {
            let o = &mut out[j * npts..(j + 1) * npts];
            for a in 0..d {
                let s = &stress[(a * d + j) * npts..][..npts];
                for m in 0..npts {
                    o[m] += s[m] * self.wave(m, k)[a];
                }
            }
        }
        if sigma != 0.0 {
            let rho = self
                .rho
                .as_ref()
                .expect("mass term needs a density field");
            let mut buf = vec![C64::default(); npts];
            for j in 0..d {
                buf.copy_from_slice(&x[j * npts..(j + 1) * npts]);
                self.sp.inverse(&mut buf);
                buf.iter_mut().zip(rho).for_each(|(v, r)| *v *= *r);
                self.sp.forward(&mut buf);
                for (o, b) in out[j * npts..(j + 1) * npts].iter_mut().zip(&buf) {
                    *o += b * sigma;
                }
            }
        }
        self.mask(out, k);
    }

    /// `out = M x` (density-weighted mass, band-limited).
    pub fn apply_mass(&self, x: &[C64], k: &[f64; 3], out: &mut [C64]) {
        let npts = self.grid().npts();
        let rho = self.rho.as_ref().expect("mass term needs a density field");
        let mut buf = vec![C64::default(); npts];
        for j in 0..self.dim {
            buf.copy_from_slice(&x[j * npts..(j + 1) * npts]);
            self.sp.inverse(&mut buf);
            buf.iter_mut().zip(rho).for_each(|(v, r)| *v *= *r);
            self.sp.forward(&mut buf);
            out[j * npts..(j + 1) * npts].copy_from_slice(&buf);
        }
        self.mask(out, k);
    }

    /// Inverse blocks of `Gamma_ref(xi + k) + sigma rho_ref I` per active mode.
    pub fn mode_blocks(&self, k: &[f64; 3], sigma: f64) -> ModeBlocks {
        let d = self.dim;
        let npts = self.grid().npts();
        let mut inv = vec![0.0; d * d * npts];
        for m in 0..npts {
            if !self.active(m, k) {
                continue;
            }
            let w = self.wave(m, k);
            let mut g: DMatrix<f64> = self.cref.acoustic(&w[..d]);
            for j in 0..d {
                g[(j, j)] += sigma * self.rho_ref;
            }
            if let Some(gi) = g.try_inverse() {
                for j in 0..d {
                    for l in 0..d {
                        inv[(m * d + j) * d + l] = gi[(j, l)];
                    }
                }
            }
        }
        ModeBlocks { dim: d, inv }
    }

    pub fn precondition(&self, blocks: Option<&ModeBlocks>, r: &[C64], out: &mut [C64]) {
        let Some(b) = blocks else {
            out.copy_from_slice(r);
            return;
        };
        let d = b.dim;
        let npts = self.grid().npts();
        for m in 0..npts {
            let blk = &b.inv[m * d * d..(m + 1) * d * d];
            for j in 0..d {
                let mut s = C64::default();
                for l in 0..d {
                    s += r[l * npts + m] * blk[j * d + l];
                }
                out[j * npts + m] = s;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Preconditioned conjugate gradients for a Hermitian positive definite
/// operator, warm-started from `x`. Returns iterations and the true relative
/// residual at exit.
pub(crate) fn pcg(
    apply: impl Fn(&[C64], &mut [C64]),
    precond: impl Fn(&[C64], &mut [C64]),
    b: &[C64],
    x: &mut [C64],
    tol: f64,
    max_iter: usize,
) -> (usize, f64) {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = C64::default());
        return (0, 0.0);
    }
    let mut r = vec![C64::default(); n];
    let mut ap = vec![C64::default(); n];
    let mut z = vec![C64::default(); n];
    let true_residual = |x: &[C64], r: &mut [C64], ap: &mut [C64]| {
        apply(x, ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        norm(r) / bnorm
    };
    let mut res = true_residual(x, &mut r, &mut ap);
    let mut iters = 0;
    while res > tol && iters < max_iter {
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z).re;
        while iters < max_iter {
            apply(&p, &mut ap);
            iters += 1;
            let pap = dot(&p, &ap).re;
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += p[i] * alpha;
                r[i] -= ap[i] * alpha;
            }
            res = norm(&r) / bnorm;
            if res <= tol {
                break;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z).re;
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + p[i] * beta;
            }
        }
        // guard against drift of the recursive residual
        res = true_residual(x, &mut r, &mut ap);
        if res > tol && iters >= max_iter {
            break;
        }
    }
    (iters, res)
}

/// A cell-problem solver bound to one medium, reusing its preconditioner.
#[derive(Debug)]
pub struct CellSolver {
    op: ElasticOperator,
    c: CellField,
    blocks: Option<ModeBlocks>,
    cfg: SolverConfig,
}

impl std::fmt::Debug for ModeBlocks {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModeBlocks").field("dim", &self.dim).finish()
    }
}

impl CellSolver {
    pub fn new(c: &CellField, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let op = ElasticOperator::new(c, None)?;
        let blocks = match cfg.preconditioner {
            Preconditioner::ConstantReference => Some(op.mode_blocks(&[0.0; 3], 0.0)),
            Preconditioner::None => None,
        };
        Ok(Self {
            op,
            c: c.clone(),
            blocks,
            cfg,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> CellGrid {
        self.op.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        self.op.spectral()
    }

    pub fn coefficients(&self) -> &CellField {
        &self.c
    }

    /// Physical-space operator application (independent of the Krylov path).
    pub fn apply(&self, u: &CellField) -> Result<CellField> {
        check_pair(&self.c, u)?;
        apply_with(self.op.spectral(), &self.c, u)
    }

    /// Band-limited, mean-free part of a right-hand side.
    pub fn project_rhs(&self, f: &CellField) -> CellField {
        let mut g = f.clone();
        let npts = f.npts();
        for j in 0..f.n_components() {
            self.op.spectral().project_band(&mut g.values_mut()[j * npts..(j + 1) * npts]);
        }
        g.remove_mean();
        g
    }

    /// Relative residual `|L u - P f| / |P f|` with `P` the band/mean projection.
    pub fn residual(&self, u: &CellField, f: &CellField) -> Result<f64> {
        let pf = self.project_rhs(f);
        let lu = self.apply(u)?;
        let den = pf.rms();
        let diff: f64 = lu
            .values()
            .iter()
            .zip(pf.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / lu.values().len() as f64;
        Ok(if den == 0.0 { diff.sqrt() } else { diff.sqrt() / den })
    }

    pub fn solve(&self, f: &CellField) -> Result<(CellField, SolveReport)> {
        check_pair(&self.c, f)?;
        let fnorm = f.rms();
        if fnorm == 0.0 {
            return Ok((CellField::zeros(self.grid(), 1), SolveReport::default()));
        }
        let defect = crate::field::cell_average(f)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            / fnorm;
        if defect > COMPATIBILITY_TOL {
            return Err(HomogError::Compatibility { defect });
        }
        let mut b = self.op.to_spectral(f);
        b.iter_mut().for_each(|v| *v = -*v);
        let mut x = vec![C64::default(); b.len()];
        let k0 = [0.0; 3];
        let (iterations, _) = pcg(
            |v, out| self.op.apply(v, &k0, 0.0, out),
            |r, out| self.op.precondition(self.blocks.as_ref(), r, out),
            &b,
            &mut x,
            self.cfg.rel_tol,
            self.cfg.max_iter,
        );
        let mut u = self.op.to_real_field(&x);
        u.remove_mean();
        let report = SolveReport {
            iterations,
            relative_residual: self.residual(&u, f)?,
            compatibility_defect: defect,
        };
        if report.relative_residual > self.cfg.rel_tol * 2.0 || !report.relative_residual.is_finite() {
            return Err(HomogError::NonConvergence { report });
        }
        Ok((u, report))
    }

    /// Solve independent right-hand sides in parallel.
    pub fn solve_all(&self, rhs: &[CellField]) -> Result<Vec<(CellField, SolveReport)>> {
        rhs.par_iter().map(|f| self.solve(f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{build_medium, Material, MediumSpec, TrigField};
    use std::f64::consts::PI;

    fn smooth_medium(n: usize) -> crate::medium::Medium {
        let spec = MediumSpec::smooth(
            TrigField::constant(1.0).with_term(0.4, &[1, 1], 0.3),
            TrigField::constant(1.0).with_term(0.5, &[1, 0], 0.0).with_term(0.2, &[0, 2], 1.0),
            TrigField::constant(1.0),
        );
        build_medium(&spec, CellGrid::new(2, n).unwrap()).unwrap()
    }

    fn trig_vector(grid: CellGrid, seed: u64) -> CellField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut vals = Vec::new();
        for _ in 0..grid.dim {
            let terms: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-3..=3) as f64,
                        rng.gen_range(-3..=3) as f64,
                        rng.gen_range(0.0..6.0),
                    )
                })
                .collect();
            for p in 0..grid.npts() {
                let y = grid.position(p);
                vals.push(
                    terms
                        .iter()
                        .map(|(a, f1, f2, ph)| a * (2.0 * PI * (f1 * y[0] + f2 * y[1]) + ph).sin())
                        .sum(),
                );
            }
        }
        CellField::from_values(grid, 1, vals).unwrap()
    }

    #[test]
    fn constant_field_is_annihilated() {
        let m = smooth_medium(16);
        let u = CellField::from_values(m.grid, 1, vec![2.5; 2 * 256]).unwrap();
        assert!(apply_operator(&m.c, &u).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn constant_symbol() {
        let g = CellGrid::new(2, 16).unwrap();
        let m = build_medium(&MediumSpec::constant(Material::isotropic(0.7, 1.3, 1.0)), g).unwrap();
        let mut u = CellField::zeros(g, 1);
        for p in 0..g.npts() {
            u.comp_mut(0)[p] = (2.0 * PI * g.position(p)[0]).sin();
        }
        let lu = apply_operator(&m.c, &u).unwrap();
        let s = -(2.0 * PI).powi(2) * (0.7 + 2.6);
        for p in 0..g.npts() {
            assert!((lu.comp(0)[p] - s * u.comp(0)[p]).abs() < 1e-9);
            assert!(lu.comp(1)[p].abs() < 1e-9);
        }
    }

    #[test]
    fn operator_is_self_adjoint() {
        let m = smooth_medium(32);
        let u = trig_vector(m.grid, 1);
        let v = trig_vector(m.grid, 2);
        let au = apply_operator(&m.c, &u).unwrap();
        let av = apply_operator(&m.c, &v).unwrap();
        let a = crate::field::mean_product(au.values(), v.values());
        let b = crate::field::mean_product(u.values(), av.values());
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let m = smooth_medium(16);
        let (u, r) = solve_periodic(&m.c, &CellField::zeros(m.grid, 1), &SolverConfig::default()).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn incompatible_rhs_rejected() {
        let m = smooth_medium(16);
        let f = CellField::from_values(m.grid, 1, vec![1.0; 512]).unwrap();
        assert!(matches!(
            solve_periodic(&m.c, &f, &SolverConfig::default()),
            Err(HomogError::Compatibility { .. })
        ));
    }

    #[test]
    fn solve_reaches_tolerance_and_mean_zero() {
        let m = smooth_medium(32);
        let f = apply_operator(&m.c, &trig_vector(m.grid, 3)).unwrap();
        for pc in [Preconditioner::ConstantReference, Preconditioner::None] {
            let cfg = SolverConfig {
                preconditioner: pc,
                ..SolverConfig::default()
            };
            let (u, rep) = solve_periodic(&m.c, &f, &cfg).unwrap();
            assert!(rep.relative_residual <= 2e-10, "{rep:?}");
            for mean in crate::field::cell_average(&u) {
                assert!(mean.abs() < 1e-14);
            }
            let mut want = trig_vector(m.grid, 3);
            want.remove_mean();
            let err = u
                .values()
                .iter()
                .zip(want.values())
                .fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
            assert!(err < 1e-8, "{err}");
        }
    }

    #[test]
    fn preconditioner_helps() {
        let m = smooth_medium(32);
        let f = apply_operator(&m.c, &trig_vector(m.grid, 4)).unwrap();
        let (_, a) = solve_periodic(&m.c, &f, &SolverConfig::default()).unwrap();
        let (_, b) = solve_periodic(
            &m.c,
            &f,
            &SolverConfig {
                preconditioner: Preconditioner::None,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(a.iterations < b.iterations);
    }

    #[test]
    fn max_iter_reports_nonconvergence() {
        let m = smooth_medium(32);
        let f = apply_operator(&m.c, &trig_vector(m.grid, 5)).unwrap();
        let cfg = SolverConfig {
            max_iter: 2,
            ..SolverConfig::default()
        };
        match solve_periodic(&m.c, &f, &cfg) {
            Err(HomogError::NonConvergence { report }) => assert!(report.iterations <= 2),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn shifted_operator_is_hermitian() {
        use rand::{Rng, SeedableRng};
        let m = smooth_medium(16);
        let op = ElasticOperator::new(&m.c, Some(&m.rho)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let k = [0.7, -0.4, 0.0];
        let mut rand_vec = || {
            let mut v: Vec<C64> = (0..op.len())
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            op.mask(&mut v, &k);
            v
        };
        let (u, v) = (rand_vec(), rand_vec());
        let mut au = vec![C64::default(); op.len()];
        let mut av = au.clone();
        op.apply(&u, &k, 0.5, &mut au);
        op.apply(&v, &k, 0.5, &mut av);
        let a = dot(&au, &v);
        let b = dot(&u, &av);
        assert!((a - b).norm() < 1e-10 * a.norm());
    }
}
