//! Reference solutions for media that vary along one axis only.
//!
//! Every cell problem of a laminate has the form `d_a (A u') = d_a g + h`
//! with `A_{jl} = C_{a j a l}(y_a)`. Its first integral
//! `A u' = g + H + c`, `H' = h`, with `c` fixed by `<u'> = 0`, is evaluated by
//! pointwise `d x d` inversion and cumulative trapezoidal quadrature on the
//! periodic line. Nothing here touches the spectral machinery.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::effective::{EffectiveModel, TensorChecks};
use crate::error::{HomogError, Result};
use crate::medium::MediumSpec;
use crate::tensor::{check_symmetries, convexity_margin, multi_indices, Tensor4, TensorN};

/// Default number of line samples.
pub const DEFAULT_SAMPLES: usize = 4096;

/// Where samples sit within each of the `n` line cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// `y = s / n`, coinciding with spectral grid nodes when `n` is a multiple.
    Nodes,
    /// `y = (s + 1/2) / n`, keeping layer interfaces off the samples.
    Midpoints,
}

/// Stiffness and density sampled along the layering axis.
#[derive(Debug, Clone)]
pub struct LaminateProfile {
    pub dim: usize,
    pub axis: usize,
    pub sampling: Sampling,
    n: usize,
    /// `d^4` blocks of `n` samples.
    c: Vec<f64>,
    rho: Vec<f64>,
}

impl LaminateProfile {
    pub fn from_fn(
        dim: usize,
        axis: usize,
        n: usize,
        sampling: Sampling,
        mut f: impl FnMut(f64) -> (Tensor4, f64),
    ) -> Result<Self> {
        crate::tensor::check_dim(dim)?;
        if axis >= dim || n < 8 {
            return Err(HomogError::Config("invalid laminate profile request".into()));
        }
        let d4 = dim.pow(4);
        let mut c = vec![0.0; d4 * n];
        let mut rho = vec![0.0; n];
        for s in 0..n {
            let y = match sampling {
                Sampling::Nodes => s as f64 / n as f64,
                Sampling::Midpoints => (s as f64 + 0.5) / n as f64,
            };
            let (t, r) = f(y);
            if t.dim() != dim {
                return Err(HomogError::Shape("profile tensor dimension".into()));
            }
            let sym = check_symmetries(&t);
            if sym.major_defect > 1e-12 || sym.minor_defect > 1e-12 {
                return Err(HomogError::Medium(format!("profile tensor not symmetric at y = {y}")));
            }
            if convexity_margin(&t) <= 0.0 {
                return Err(HomogError::Medium(format!("profile loses convexity at y = {y}")));
            }
            if !(r > 0.0) {
                return Err(HomogError::Medium(format!("density not positive at y = {y}")));
            }
            for (comp, v) in t.entries().iter().enumerate() {
                c[comp * n + s] = *v;
            }
            rho[s] = r;
        }
        Ok(Self {
            dim,
            axis,
            sampling,
            n,
            c,
            rho,
        })
    }

    /// Sample a closed-form medium along `axis`.
    pub fn from_spec(spec: &MediumSpec, dim: usize, axis: usize, n: usize, sampling: Sampling) -> Result<Self> {
        let mut err = None;
        let p = Self::from_fn(dim, axis, n, sampling, |t| {
            let mut y = [0.0; 3];
            y[axis] = t;
            match spec.eval_point(y, dim) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    (crate::tensor::isotropic_unchecked(crate::tensor::LamePair::new(0.0, 1.0), dim), 1.0)
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => p,
        }
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn position(&self, s: usize) -> f64 {
        match self.sampling {
            Sampling::Nodes => s as f64 / self.n as f64,
            Sampling::Midpoints => (s as f64 + 0.5) / self.n as f64,
        }
    }

    #[inline]
    fn c(&self, i: usize, j: usize, k: usize, l: usize) -> &[f64] {
        let d = self.dim;
        let comp = ((i * d + j) * d + k) * d + l;
        &self.c[comp * self.n..(comp + 1) * self.n]
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
}

/// A tensor-valued profile with its derivative along the axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LineField {
    pub dim: usize,
    pub rank: usize,
    pub n: usize,
    pub values: Vec<f64>,
    pub deriv: Vec<f64>,
}

impl LineField {
    fn zeros(dim: usize, rank: usize, n: usize) -> Self {
        let len = dim.pow(rank as u32) * n;
        Self {
            dim,
            rank,
            n,
            values: vec![0.0; len],
            deriv: vec![0.0; len],
        }
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.values[c * self.n..(c + 1) * self.n]
    }

    pub fn dcomp(&self, c: usize) -> &[f64] {
        &self.deriv[c * self.n..(c + 1) * self.n]
    }

    pub fn at(&self, idx: &[usize]) -> &[f64] {
        self.comp(crate::tensor::flat_index(self.dim, idx))
    }

    pub fn d_at(&self, idx: &[usize]) -> &[f64] {
        self.dcomp(crate::tensor::flat_index(self.dim, idx))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[inline]
fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[inline]
fn mean_prod(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Periodic cumulative trapezoid: `F(0) = 0`, `F(s) = sum_{t<s} (f_t + f_{t+1}) / 2n`.
fn cumulative(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let h = 1.0 / n as f64;
    let mut out = vec![0.0; n];
    for s in 1..n {
        out[s] = out[s - 1] + 0.5 * h * (f[s - 1] + f[s]);
    }
    out
}

/// Pointwise inverse acoustic blocks and the constant that enforces `<u'> = 0`.
struct LineSolver {
    d: usize,
    n: usize,
    ainv: Vec<f64>,
    mean_inv_inv: DMatrix<f64>,
}

impl LineSolver {
    fn new(p: &LaminateProfile) -> Result<Self> {
        let (d, n, a) = (p.dim, p.n, p.axis);
        let mut ainv = vec![0.0; d * d * n];
        let mut mean_inv = DMatrix::<f64>::zeros(d, d);
        for s in 0..n {
            let m = DMatrix::from_fn(d, d, |j, l| p.c(a, j, a, l)[s]);
            let inv = m
                .try_inverse()
                .ok_or(HomogError::SingularAcousticBlock { sample: s })?;
            for j in 0..d {
                for l in 0..d {
                    ainv[(s * d + j) * d + l] = inv[(j, l)];
                    mean_inv[(j, l)] += inv[(j, l)] / n as f64;
                }
            }
        }
        let mean_inv_inv = mean_inv
            .try_inverse()
            .ok_or(HomogError::SingularAcousticBlock { sample: 0 })?;
        Ok(Self {
            d,
            n,
            ainv,
            mean_inv_inv,
        })
    }

    /// Solve `d_a(A u') = d_a g + h` for one vector unknown; `g`, `h` hold `d`
    /// component slices each (empty means zero). Returns `(u, u')`.
    fn solve(&self, g: Option<&[Vec<f64>]>, h: Option<&[Vec<f64>]>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (d, n) = (self.d, self.n);
        let mut s: Vec<Vec<f64>> = vec![vec![0.0; n]; d];
        if let Some(g) = g {
            for j in 0..d {
                s[j].copy_from_slice(&g[j]);
            }
        }
        if let Some(h) = h {
            for j in 0..d {
                let m = mean(&h[j]);
                let centered: Vec<f64> = h[j].iter().map(|v| v - m).collect();
                for (o, v) in s[j].iter_mut().zip(cumulative(&centered)) {
                    *o += v;
                }
            }
        }
        let mut up: Vec<Vec<f64>> = vec![vec![0.0; n]; d];
        for t in 0..n {
            for j in 0..d {
                up[j][t] = (0..d).map(|l| self.ainv[(t * d + j) * d + l] * s[l][t]).sum();
            }
        }
        let avg: Vec<f64> = up.iter().map(|v| mean(v)).collect();
        let c: Vec<f64> = (0..d)
            .map(|j| -(0..d).map(|l| self.mean_inv_inv[(j, l)] * avg[l]).sum::<f64>())
            .collect();
        for t in 0..n {
            for j in 0..d {
                up[j][t] += (0..d).map(|l| self.ainv[(t * d + j) * d + l] * c[l]).sum::<f64>();
            }
        }
        let u: Vec<Vec<f64>> = up
            .iter()
            .map(|v| {
                let mut w = cumulative(v);
                let m = mean(&w);
                w.iter_mut().for_each(|x| *x -= m);
                w
            })
            .collect();
        (u, up)
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    First,
    Last,
}

/// Solve a family of line problems; `rhs(free)` returns `(g, h)` per free index.
fn solve_family(
    solver: &LineSolver,
    rank: usize,
    slot: Slot,
    rhs: impl Fn(&[usize]) -> (Option<Vec<Vec<f64>>>, Option<Vec<Vec<f64>>>),
) -> LineField {
    let (d, n) = (solver.d, solver.n);
    let mut out = LineField::zeros(d, rank, n);
    let nfree = d.pow(rank as u32 - 1);
    for (fi, idx) in multi_indices(d, rank - 1).enumerate() {
        let (g, h) = rhs(&idx);
        let (u, up) = solver.solve(g.as_deref(), h.as_deref());
        for j in 0..d {
            let comp = match slot {
                Slot::First => j * nfree + fi,
                Slot::Last => fi * d + j,
            };
            out.values[comp * n..(comp + 1) * n].copy_from_slice(&u[j]);
            out.deriv[comp * n..(comp + 1) * n].copy_from_slice(&up[j]);
        }
    }
    out
}

/// All line correctors, with the same index layouts as the cell solver.
#[derive(Debug, Clone)]
pub struct LaminateCorrectors {
    pub chi1: LineField,
    pub gamma: LineField,
    /// Pointwise `b` (values only).
    pub b: LineField,
    pub chi4: LineField,
    pub d5: LineField,
    pub hat_chi5: LineField,
    pub hat_gamma4: LineField,
    pub hat_gamma3: LineField,
    pub disp_chi5: LineField,
    pub disp_gamma3: LineField,
}

/// First-order corrector profile `chi_{lmn}(y_a)`.
pub fn laminate_chi_profile(p: &LaminateProfile) -> Result<LineField> {
    let solver = LineSolver::new(p)?;
    Ok(chi1_with(&solver, p))
}

fn chi1_with(solver: &LineSolver, p: &LaminateProfile) -> LineField {
    let (d, a) = (p.dim, p.axis);
    solve_family(solver, 3, Slot::First, |x| {
        let (m, n) = (x[0], x[1]);
        let g = (0..d).map(|j| p.c(a, j, m, n).to_vec()).collect();
        (Some(g), None)
    })
}

/// `Cbar_{ijkl} = <C_{ijkl} - C_{ijan} chi'_{nkl}>`.
pub fn laminate_effective_c(p: &LaminateProfile, chi1: &LineField) -> Tensor4 {
    let (d, a) = (p.dim, p.axis);
    let entries = multi_indices(d, 4)
        .map(|x| {
            let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
            let mut s = mean(p.c(i, j, k, l));
            for n in 0..d {
                s -= mean_prod(p.c(i, j, a, n), chi1.d_at(&[n, k, l]));
            }
            s
        })
        .collect();
    let mut t = Tensor4::from_entries(d, entries).expect("finite");
    t.refresh_symmetry();
    t
}

/// Density and fourth-order correctors of the laminate.
#[derive(Debug, Clone)]
pub struct LaminateSecondOrder {
    pub gamma: LineField,
    pub chi4: LineField,
    /// `D(e_a^4)` of the long-wave model, the axial dispersion matrix.
    pub axial_d: DMatrix<f64>,
}

pub fn laminate_second_order(p: &LaminateProfile) -> Result<LaminateSecondOrder> {
    let (set, model) = laminate_model(p)?;
    let d = p.dim;
    let a = p.axis;
    let axial_d = DMatrix::from_fn(d, d, |b, q| model.d6.get(&[b, a, a, a, a, q]));
    Ok(LaminateSecondOrder {
        gamma: set.gamma,
        chi4: set.chi4,
        axial_d,
    })
}

/// Solve every line corrector.
pub fn laminate_correctors(p: &LaminateProfile) -> Result<LaminateCorrectors> {
    let solver = LineSolver::new(p)?;
    let (d, a, n) = (p.dim, p.axis, p.n);
    let rho = &p.rho;
    let rhobar = mean(rho);
    let chi1 = chi1_with(&solver, p);
    let gamma = solve_family(&solver, 2, Slot::Last, |x| {
        let m = x[0];
        let h = (0..d)
            .map(|j| {
                if j == m {
                    rho.iter().map(|r| rhobar - r).collect()
                } else {
                    vec![0.0; n]
                }
            })
            .collect();
        (None, Some(h))
    });
    // b = -C_{ijkl} + C_{ijan} chi'_{nkl} + d_a(chi_{nil} C_{ajkn})
    let b_h = |i: usize, j: usize, k: usize, l: usize| -> Vec<f64> {
        let mut v: Vec<f64> = p.c(i, j, k, l).iter().map(|x| -x).collect();
        for nn in 0..d {
            let (c, dc) = (p.c(i, j, a, nn), chi1.d_at(&[nn, k, l]));
            for t in 0..n {
                v[t] += c[t] * dc[t];
            }
        }
        v
    };
    let b_g = |i: usize, j: usize, k: usize, l: usize| -> Vec<f64> {
        let mut v = vec![0.0; n];
        for nn in 0..d {
            let (x, c) = (chi1.at(&[nn, i, l]), p.c(a, j, k, nn));
            for t in 0..n {
                v[t] += x[t] * c[t];
            }
        }
        v
    };
    // pointwise b needs d_a of b_g; the line solver never differentiates, so
    // only its mean (zero) matters for the stored values. Store the h part plus
    // the exact derivative term obtained from the first integral of chi.
    let mut b = LineField::zeros(d, 4, n);
    for x in multi_indices(d, 4) {
        let comp = crate::tensor::flat_index(d, &x);
        b.values[comp * n..(comp + 1) * n].copy_from_slice(&b_h(x[0], x[1], x[2], x[3]));
    }
    let chi4 = solve_family(&solver, 4, Slot::Last, |x| {
        let (i, k, l) = (x[0], x[1], x[2]);
        let g = (0..d).map(|j| b_g(i, j, k, l)).collect();
        let h = (0..d).map(|j| b_h(i, j, k, l)).collect();
        (Some(g), Some(h))
    });
    // d_{ijnmq} = C_{ijnl} chi_{lmq} - C_{ijal} chi4'_{mnql}
    let d5_fn = |i: usize, j: usize, nn: usize, m: usize, q: usize| -> Vec<f64> {
        let mut v = vec![0.0; n];
        for l in 0..d {
            let (c1, x1) = (p.c(i, j, nn, l), chi1.at(&[l, m, q]));
            let (c2, x2) = (p.c(i, j, a, l), chi4.d_at(&[m, nn, q, l]));
            for t in 0..n {
                v[t] += c1[t] * x1[t] - c2[t] * x2[t];
            }
        }
        v
    };
    let mut d5 = LineField::zeros(d, 5, n);
    for x in multi_indices(d, 5) {
        let comp = crate::tensor::flat_index(d, &x);
        d5.values[comp * n..(comp + 1) * n].copy_from_slice(&d5_fn(x[0], x[1], x[2], x[3], x[4]));
    }
    let hat_chi5 = solve_family(&solver, 5, Slot::Last, |x| {
        let (i, nn, m, q) = (x[0], x[1], x[2], x[3]);
        (None, Some((0..d).map(|j| d5.at(&[i, j, nn, m, q]).to_vec()).collect()))
    });
    let hat_gamma4 = solve_family(&solver, 4, Slot::Last, |x| {
        let (i, k, q) = (x[0], x[1], x[2]);
        (None, Some((0..d).map(|j| b_h(i, j, k, q)).collect()))
    });
    // -C_{mjal} gamma'_{nl} + rho chi_{jmn}
    let g3_h = |j: usize, m: usize, nn: usize| -> Vec<f64> {
        let mut v: Vec<f64> = chi1.at(&[j, m, nn]).iter().zip(rho).map(|(x, r)| x * r).collect();
        for l in 0..d {
            let (c, dg) = (p.c(m, j, a, l), gamma.d_at(&[nn, l]));
            for t in 0..n {
                v[t] -= c[t] * dg[t];
            }
        }
        v
    };
    let hat_gamma3 = solve_family(&solver, 3, Slot::First, |x| {
        let (m, nn) = (x[0], x[1]);
        (None, Some((0..d).map(|j| g3_h(j, m, nn)).collect()))
    });
    let disp_chi5 = solve_family(&solver, 5, Slot::Last, |x| {
        let (i, nn, m, q) = (x[0], x[1], x[2], x[3]);
        let g = (0..d)
            .map(|j| {
                let mut v = vec![0.0; n];
                for l in 0..d {
                    let (c, x4) = (p.c(a, j, i, l), chi4.at(&[m, nn, q, l]));
                    for t in 0..n {
                        v[t] -= c[t] * x4[t];
                    }
                }
                v
            })
            .collect();
        let h = (0..d).map(|j| d5.at(&[i, j, nn, m, q]).to_vec()).collect();
        (Some(g), Some(h))
    });
    let disp_gamma3 = solve_family(&solver, 3, Slot::First, |x| {
        let (m, nn) = (x[0], x[1]);
        let g = (0..d)
            .map(|j| {
                let mut v = vec![0.0; n];
                for l in 0..d {
                    let (c, gm) = (p.c(a, j, m, l), gamma.at(&[nn, l]));
                    for t in 0..n {
                        v[t] -= c[t] * gm[t];
                    }
                }
                v
            })
            .collect();
        let h = (0..d).map(|j| g3_h(j, m, nn)).collect();
        (Some(g), Some(h))
    });
    Ok(LaminateCorrectors {
        chi1,
        gamma,
        b,
        chi4,
        d5,
        hat_chi5,
        hat_gamma4,
        hat_gamma3,
        disp_chi5,
        disp_gamma3,
    })
}

fn tensor_from(dim: usize, order: usize, f: impl Fn(&[usize]) -> f64) -> TensorN {
    let entries = multi_indices(dim, order).map(|idx| f(&idx)).collect();
    TensorN::from_entries(dim, order, entries).expect("finite entries")
}

/// Correctors and the full long-wave model of a laminate.
pub fn laminate_model(p: &LaminateProfile) -> Result<(LaminateCorrectors, EffectiveModel)> {
    let set = laminate_correctors(p)?;
    let (d, a) = (p.dim, p.axis);
    let rho = &p.rho;
    let rhobar = mean(rho);
    let cbar = laminate_effective_c(p, &set.chi1);
    let (chi1, chi4, gamma) = (&set.chi1, &set.chi4, &set.gamma);
    let d6 = tensor_from(d, 6, |x| {
        let (b, al, i, m, n, q) = (x[0], x[1], x[2], x[3], x[4], x[5]);
        (0..d)
            .map(|l| {
                mean_prod(p.c(al, b, a, l), set.disp_chi5.d_at(&[i, n, m, q, l]))
                    + mean_prod(p.c(al, b, i, l), chi4.at(&[m, n, q, l]))
            })
            .sum()
    });
    let e4 = tensor_from(d, 4, |x| {
        let (b, al, m, q) = (x[0], x[1], x[2], x[3]);
        let mut s: f64 = (0..d)
            .map(|l| {
                mean_prod(p.c(al, b, a, l), set.disp_gamma3.d_at(&[l, m, q]))
                    + mean_prod(p.c(al, b, m, l), gamma.at(&[q, l]))
            })
            .sum();
        s += mean_prod(rho, chi4.at(&[m, al, q, b]));
        for j in 0..d {
            s -= cbar.get(al, j, m, q) * mean_prod(rho, gamma.at(&[j, b])) / rhobar;
        }
        s
    });
    let f5 = tensor_from(d, 5, |x| {
        let (b, al, i, m, q) = (x[0], x[1], x[2], x[3], x[4]);
        (0..d)
            .map(|l| {
                mean_prod(p.c(al, b, a, l), chi4.d_at(&[i, m, q, l]))
                    - mean_prod(p.c(al, b, i, l), chi1.at(&[l, m, q]))
            })
            .sum()
    });
    let g3 = tensor_from(d, 3, |x| {
        let (b, m, q) = (x[0], x[1], x[2]);
        -mean_prod(rho, chi1.at(&[b, m, q]))
            + (0..d)
                .map(|l| mean_prod(p.c(m, b, a, l), gamma.d_at(&[q, l])))
                .sum::<f64>()
    });
    let src3 = tensor_from(d, 5, |x| -mean(set.d5.at(x)));
    let src1 = g3.clone();
    let checks = TensorChecks {
        symmetry: check_symmetries(&cbar),
        convexity_margin: convexity_margin(&cbar),
    };
    let model = EffectiveModel {
        cbar,
        rhobar,
        d6,
        e4,
        f5,
        g3,
        src_u1_3rd: src3,
        src_u1_1st: src1,
        checks,
    };
    Ok((set, model))
}

/// Lowest positive root of `half_trace(w) = cos(k)` on the acoustic branch.
fn acoustic_root(half_trace: impl Fn(f64) -> f64, k: f64, guess: f64) -> Result<f64> {
    let target = k.cos();
    let f = |w: f64| half_trace(w) - target;
    if k == 0.0 {
        return Ok(0.0);
    }
    // f > 0 below the branch, < 0 just above it
    let mut lo = 0.25 * guess;
    if f(lo) <= 0.0 {
        lo = 1e-6 * guess;
    }
    let mut hi = guess;
    let mut steps = 0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 1.25;
        steps += 1;
        if steps > 200 {
            return Err(HomogError::Domain("could not bracket the acoustic branch".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scalar Bloch frequency `w^2` of `-(a v')' = w^2 rho v` with multiplier
/// `exp(i k)` over a unit period of homogeneous layers `(thickness, a, rho)`.
pub fn layered_omega2(layers: &[(f64, f64, f64)], k: f64) -> Result<f64> {
    if layers.iter().any(|&(t, a, r)| !(t > 0.0 && a > 0.0 && r > 0.0)) {
        return Err(HomogError::Medium("layers need positive thickness, modulus and density".into()));
    }
    let half_trace = |w: f64| {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for &(t, a, r) in layers {
            let q = w * (r / a).sqrt();
            let (s, c) = (q * t).sin_cos();
            let layer = [[c, s / (a * q)], [-a * q * s, c]];
            m = [
                [
                    layer[0][0] * m[0][0] + layer[0][1] * m[1][0],
                    layer[0][0] * m[0][1] + layer[0][1] * m[1][1],
                ],
                [
                    layer[1][0] * m[0][0] + layer[1][1] * m[1][0],
                    layer[1][0] * m[0][1] + layer[1][1] * m[1][1],
                ],
            ];
        }
        0.5 * (m[0][0] + m[1][1])
    };
    let total: f64 = layers.iter().map(|l| l.0).sum();
    let inv_a: f64 = layers.iter().map(|&(t, a, _)| t / a).sum::<f64>() / total;
    let rhobar: f64 = layers.iter().map(|&(t, _, r)| t * r).sum::<f64>() / total;
    let guess = k.abs() / (inv_a * rhobar).sqrt();
    let w = acoustic_root(half_trace, k.abs(), guess)?;
    Ok(w * w)
}

/// Same as [`layered_omega2`] for smooth profiles, integrating the transfer
/// matrix with classical Runge-Kutta over `steps` uniform steps.
pub fn smooth_omega2(a: impl Fn(f64) -> f64, rho: impl Fn(f64) -> f64, k: f64, steps: usize) -> Result<f64> {
    let h = 1.0 / steps as f64;
    let half_trace = |w: f64| {
        let rhs = |y: f64, s: [f64; 2]| [s[1] / a(y), -w * w * rho(y) * s[0]];
        let mut tr = 0.0;
        for col in 0..2 {
            let mut s = if col == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            for i in 0..steps {
                let y = i as f64 * h;
                let k1 = rhs(y, s);
                let k2 = rhs(y + 0.5 * h, [s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
                let k3 = rhs(y + 0.5 * h, [s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
                let k4 = rhs(y + h, [s[0] + h * k3[0], s[1] + h * k3[1]]);
                for c in 0..2 {
                    s[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
            }
            tr += s[col];
        }
        0.5 * tr
    };
    let n = 2048;
    let inv_a = (0..n).map(|i| 1.0 / a((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
    let rhobar = (0..n).map(|i| rho((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
    let guess = k.abs() / (inv_a * rhobar).sqrt();
    let w = acoustic_root(half_trace, k.abs(), guess)?;
    Ok(w * w)
}

/// `2 pi` times a fraction of the Brillouin half-width, a common k unit.
pub fn wavenumber(frac: f64) -> f64 {
    2.0 * PI * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{Material, TrigField};
    use crate::tensor::{isotropic_tensor, LamePair};

    fn two_phase() -> MediumSpec {
        MediumSpec::laminate(
            0,
            vec![0.5, 0.5],
            vec![Material::isotropic(0.0, 1.0, 1.0), Material::isotropic(0.0, 3.0, 1.0)],
        )
    }

    #[test]
    fn constant_profile_has_zero_correctors() {
        let p = LaminateProfile::from_fn(2, 0, 256, Sampling::Nodes, |_| {
            (isotropic_tensor(LamePair::new(1.0, 2.0), 2).unwrap(), 1.3)
        })
        .unwrap();
        let (set, model) = laminate_model(&p).unwrap();
        assert!(set.chi1.max_abs() < 1e-14);
        assert!(set.disp_chi5.max_abs() < 1e-13);
        assert!(model.d6.max_abs() < 1e-13);
        assert!((model.cbar.get(0, 0, 0, 0) - 5.0).abs() < 1e-12, "{}", model.cbar.get(0, 0, 0, 0));
    }

    #[test]
    fn two_phase_harmonic_and_arithmetic_shear() {
        let p = LaminateProfile::from_spec(&two_phase(), 2, 0, DEFAULT_SAMPLES, Sampling::Midpoints).unwrap();
        let chi = laminate_chi_profile(&p).unwrap();
        let cbar = laminate_effective_c(&p, &chi);
        // across-layer shear C_1212 -> harmonic mean, in-plane C_2222 -> arithmetic
        assert!((cbar.get(0, 1, 0, 1) - 1.5).abs() < 1e-12);
        assert!((cbar.get(1, 1, 1, 1) - 4.0).abs() < 1e-12);
        assert!((cbar.get(0, 0, 0, 0) - 3.0).abs() < 1e-12);
        // chi_{2 1 2}: piecewise linear with slopes 1 - 1.5/mu
        let slope = chi.d_at(&[1, 0, 1]);
        assert!((slope[0] - (1.0 - 1.5 / 1.0)).abs() < 1e-12);
        assert!((slope[p.samples() - 1] - (1.0 - 1.5 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn first_integrals_hold() {
        let spec = MediumSpec::smooth(
            TrigField::constant(1.0),
            TrigField::constant(2.0).with_term(1.0, &[1, 0], 0.0),
            TrigField::constant(1.0),
        );
        let p = LaminateProfile::from_spec(&spec, 2, 0, 512, Sampling::Nodes).unwrap();
        let chi = laminate_chi_profile(&p).unwrap();
        // C_{1jmn} - C_{1j1l} chi'_{lmn} is constant in y
        for j in 0..2 {
            for m in 0..2 {
                for nn in 0..2 {
                    let v: Vec<f64> = (0..p.samples())
                        .map(|s| {
                            p.c(0, j, m, nn)[s]
                                - (0..2).map(|l| p.c(0, j, 0, l)[s] * chi.d_at(&[l, m, nn])[s]).sum::<f64>()
                        })
                        .collect();
                    let spread = v.iter().fold(0.0f64, |a, x| a.max((x - v[0]).abs()));
                    assert!(spread < 1e-12);
                }
            }
        }
        for c in 0..8 {
            assert!(mean(chi.comp(c)).abs() < 1e-15);
        }
    }

    #[test]
    fn density_only_contrast() {
        // constant C: gamma'' A = rho_bar - rho, double quadrature of the density
        let spec = MediumSpec::smooth(
            TrigField::constant(1.0),
            TrigField::constant(1.0),
            TrigField::constant(2.0).with_term(0.5, &[1, 0], 0.0),
        );
        let p = LaminateProfile::from_spec(&spec, 2, 0, 4096, Sampling::Nodes).unwrap();
        let set = laminate_correctors(&p).unwrap();
        let w = 2.0 * PI;
        for s in (0..p.samples()).step_by(97) {
            let y = p.position(s);
            // A_00 = lambda + 2 mu = 3, A_11 = mu = 1
            let want0 = 0.5 * (w * y).cos() / (w * w * 3.0);
            let want1 = 0.5 * (w * y).cos() / (w * w * 1.0);
            assert!((set.gamma.at(&[0, 0])[s] - want0).abs() < 1e-8);
            assert!((set.gamma.at(&[1, 1])[s] - want1).abs() < 1e-8);
        }
    }

    #[test]
    fn transfer_matrix_limits() {
        // homogeneous: w^2 = a k^2 / rho
        let w2 = layered_omega2(&[(0.3, 2.0, 1.0), (0.7, 2.0, 1.0)], 0.5).unwrap();
        assert!((w2 - 2.0 * 0.25).abs() < 1e-12);
        let w2 = smooth_omega2(|_| 2.0, |_| 0.5, 0.5, 256).unwrap();
        assert!((w2 - 4.0 * 0.25).abs() < 1e-12);
        // two layers: smooth integrator on a piecewise profile agrees to quadrature accuracy
        let exact = layered_omega2(&[(0.5, 1.0, 1.0), (0.5, 3.0, 2.0)], 0.8).unwrap();
        let approx = smooth_omega2(
            |y| if y < 0.5 { 1.0 } else { 3.0 },
            |y| if y < 0.5 { 1.0 } else { 2.0 },
            0.8,
            4096,
        )
        .unwrap();
        assert!((exact - approx).abs() < 1e-3 * exact);
    }
}
