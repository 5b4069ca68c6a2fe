//! Effective stiffness and density, the first-order source tensors, the
//! dispersive tensors `D, E, F, G`, and the plane-wave symbol of the
//! fourth-order long-wave model.
//!
//! Index orders follow the subscripts of the definitions:
//! `D[b a i m n q]`, `E[b a m q]`, `F[b a i m q]`, `G[b m q]`.
//!
//! Plane wave `U = a exp(i k.x)` in
//! `div(Cbar grad U) + w^2 rho_bar U = -eps^2 (D:grad^4 U + w^2 E:grad^2 U) - eps (F:grad^3 U + w^2 G:grad U)`
//! turns every derivative into `i k`, giving `A a = w^2 B a` with
//!
//! ```text
//! A = Gamma(k) - eps^2 D(k,k,k,k) + i eps F(k,k,k)
//! B = rho_bar I - eps^2 E(k,k) + i eps G(k)
//! ```
//!
//! where `Gamma_bq = Cbar_{a b m q} k_a k_m`, `D(k^4)_bq = D_{b a i m n q} k_a k_i k_m k_n`,
//! `E(k^2)_bq = E_{b a m q} k_a k_m`, `F(k^3)_bq = F_{b a i m q} k_a k_i k_m`,
//! `G(k)_bq = G_{b m q} k_m`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correctors::CorrectorSet;
use crate::error::{HomogError, Result};
use crate::field::{cell_average, mean_product, CellField, Spectral};
use crate::medium::Medium;
use crate::tensor::{check_symmetries, convexity_margin, multi_indices, SymmetryDefects, Tensor4, TensorJson, TensorN};

type C64 = Complex64;

#[inline]
fn c_at(c: &CellField, d: usize, i: usize, j: usize, k: usize, l: usize) -> &[f64] {
    c.comp(((i * d + j) * d + k) * d + l)
}

/// Fill a tensor entry by entry.
fn tensor_from(dim: usize, order: usize, f: impl Fn(&[usize]) -> f64) -> TensorN {
    let entries = multi_indices(dim, order).map(|idx| f(&idx)).collect();
    TensorN::from_entries(dim, order, entries).expect("finite entries")
}

/// Symmetry and convexity diagnostics of an effective tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorChecks {
    pub symmetry: SymmetryDefects,
    pub convexity_margin: f64,
}

/// `Cbar_{ijkl} = <C_{ijkl} - C_{ijmn} d_m chi_{nkl}>`.
pub fn effective_c(sp: &Spectral, c: &CellField, chi1: &CellField) -> Result<(Tensor4, TensorChecks)> {
    let d = c.dim();
    let g1 = sp.gradient(chi1); // [n][k][l][m]
    let avg = cell_average(c);
    let t = tensor_from(d, 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let mut s = avg[((i * d + j) * d + k) * d + l];
        for m in 0..d {
            for n in 0..d {
                s -= mean_product(c_at(c, d, i, j, m, n), g1.comp(((n * d + k) * d + l) * d + m));
            }
        }
        s
    });
    let mut cbar = Tensor4::from_entries(d, t.entries().to_vec())?;
    cbar.refresh_symmetry();
    let checks = TensorChecks {
        symmetry: check_symmetries(&cbar),
        convexity_margin: convexity_margin(&cbar),
    };
    if !(checks.convexity_margin > 0.0) {
        return Err(HomogError::ConvexityLost {
            margin: checks.convexity_margin,
        });
    }
    Ok((cbar, checks))
}

/// Energy form `<(I - grad chi)_{pq,ij} C_{pqrs} (I - grad chi)_{rs,kl}>`.
pub fn effective_c_energy(sp: &Spectral, c: &CellField, chi1: &CellField) -> Tensor4 {
    let d = c.dim();
    let npts = c.npts();
    let g1 = sp.gradient(chi1);
    // e[p][q][i][j](y) = delta_pi delta_qj - d_p chi_{qij}
    let e = |p: usize, q: usize, i: usize, j: usize| -> Vec<f64> {
        let g = g1.comp(((q * d + i) * d + j) * d + p);
        let delta = if p == i && q == j { 1.0 } else { 0.0 };
        g.iter().map(|v| delta - v).collect()
    };
    let strains: Vec<Vec<f64>> = multi_indices(d, 4)
        .map(|x| e(x[0], x[1], x[2], x[3]))
        .collect();
    let st = |p: usize, q: usize, i: usize, j: usize| &strains[((p * d + q) * d + i) * d + j];
    let t = tensor_from(d, 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let mut s = 0.0;
        for p in 0..d {
            for q in 0..d {
                let a = st(p, q, i, j);
                for r in 0..d {
                    for ss in 0..d {
                        let b = st(r, ss, k, l);
                        let cc = c_at(c, d, p, q, r, ss);
                        s += (0..npts).map(|y| a[y] * cc[y] * b[y]).sum::<f64>();
                    }
                }
            }
        }
        s / npts as f64
    });
    let mut out = Tensor4::from_entries(d, t.entries().to_vec()).expect("finite");
    out.refresh_symmetry();
    out
}

pub fn effective_rho(rho: &CellField) -> f64 {
    cell_average(rho)[0]
}

/// The two coefficient tensors of the first-order mean-field equation.
#[derive(Debug, Clone, PartialEq)]
pub struct U1Sources {
    /// `<-C_{ijnl} chi_{lmq} + C_{ijkl} d_k chi4_{mnql}>`, order `[i j n m q]`.
    pub third: TensorN,
    /// `<-rho chi_{jmn} + C_{mjkl} d_k gamma_{nl}>`, order `[j m n]`.
    pub first: TensorN,
    /// `first` rewritten as `<rho chi_{nmj} - rho chi_{jmn}>`.
    pub first_transpose_form: TensorN,
    /// `<C_{ijkl} d_k chi4_{mnql}>` directly, order `[i j m n q]`.
    pub chi4_flux: TensorN,
    /// The same average written with first-order correctors only.
    pub chi4_flux_three_integral: TensorN,
    /// `<C_{mjkl} d_k gamma_{nl}>`, order `[m j n]`.
    pub gamma_flux: TensorN,
    /// `<rho chi_{nmj}>`, order `[m j n]`.
    pub rho_chi: TensorN,
}

pub fn u1_source_tensors(
    sp: &Spectral,
    c: &CellField,
    rho: &CellField,
    chi1: &CellField,
    chi4: &CellField,
    gamma: &CellField,
) -> U1Sources {
    let d = c.dim();
    let g1 = sp.gradient(chi1); // [n][k][l][m]
    let g4 = sp.gradient(chi4); // [m][n][q][l][k]
    let gg = sp.gradient(gamma); // [n][l][k]
    let chi = |a: usize, b: usize, e: usize| chi1.comp((a * d + b) * d + e);
    let dchi = |a: usize, b: usize, e: usize, k: usize| g1.comp(((a * d + b) * d + e) * d + k);

    let chi4_flux = tensor_from(d, 5, |x| {
        let (i, j, m, n, q) = (x[0], x[1], x[2], x[3], x[4]);
        let mut s = 0.0;
        for k in 0..d {
            for l in 0..d {
                s += mean_product(
                    c_at(c, d, i, j, k, l),
                    g4.comp(((((m * d + n) * d + q) * d + l) * d) + k),
                );
            }
        }
        s
    });
    // <chi_{bij} C_{mbnq}> - <chi_{bij} C_{mbag} d_a chi_{gnq}> + <chi_{gmq} C_{abng} d_a chi_{bij}>
    let chi4_flux_three_integral = tensor_from(d, 5, |x| {
        let (i, j, m, n, q) = (x[0], x[1], x[2], x[3], x[4]);
        let npts = c.npts();
        let mut s = 0.0;
        for b in 0..d {
            s += mean_product(chi(b, i, j), c_at(c, d, m, b, n, q));
            for a in 0..d {
                for g in 0..d {
                    let (x1, c1, dx1) = (chi(b, i, j), c_at(c, d, m, b, a, g), dchi(g, n, q, a));
                    let (x2, c2, dx2) = (chi(g, m, q), c_at(c, d, a, b, n, g), dchi(b, i, j, a));
                    s += (0..npts)
                        .map(|p| -x1[p] * c1[p] * dx1[p] + x2[p] * c2[p] * dx2[p])
                        .sum::<f64>()
                        / npts as f64;
                }
            }
        }
        s
    });
    let third = tensor_from(d, 5, |x| {
        let (i, j, n, m, q) = (x[0], x[1], x[2], x[3], x[4]);
        let mut s = chi4_flux.get(&[i, j, m, n, q]);
        for l in 0..d {
            s -= mean_product(c_at(c, d, i, j, n, l), chi(l, m, q));
        }
        s
    });
    let gamma_flux = tensor_from(d, 3, |x| {
        let (m, j, n) = (x[0], x[1], x[2]);
        let mut s = 0.0;
        for k in 0..d {
            for l in 0..d {
                s += mean_product(c_at(c, d, m, j, k, l), gg.comp((n * d + l) * d + k));
            }
        }
        s
    });
    let rho_chi = tensor_from(d, 3, |x| {
        let (m, j, n) = (x[0], x[1], x[2]);
        mean_product(rho.values(), chi(n, m, j))
    });
    let rc = |a: usize, b: usize, e: usize| mean_product(rho.values(), chi(a, b, e));
    let first = tensor_from(d, 3, |x| {
        let (j, m, n) = (x[0], x[1], x[2]);
        -rc(j, m, n) + gamma_flux.get(&[m, j, n])
    });
    let first_transpose_form = tensor_from(d, 3, |x| {
        let (j, m, n) = (x[0], x[1], x[2]);
        rc(n, m, j) - rc(j, m, n)
    });
    U1Sources {
        third,
        first,
        first_transpose_form,
        chi4_flux,
        chi4_flux_three_integral,
        gamma_flux,
        rho_chi,
    }
}

/// The dispersive tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersiveTensors {
    pub d6: TensorN,
    pub e4: TensorN,
    pub f5: TensorN,
    pub g3: TensorN,
}

pub fn dispersive_tensors(
    sp: &Spectral,
    c: &CellField,
    rho: &CellField,
    set: &CorrectorSet,
    cbar: &Tensor4,
    rhobar: f64,
) -> DispersiveTensors {
    let d = c.dim();
    let chi1 = &set.chi1;
    let chi4 = &set.chi4;
    let gamma = &set.gamma;
    let g5 = sp.gradient(&set.disp_chi5); // [i][n][m][q][l][k]
    let g3 = sp.gradient(&set.disp_gamma3); // [l][m][q][k]
    let g4 = sp.gradient(chi4); // [i][m][q][l][k]
    let gg = sp.gradient(gamma); // [q][l][k]
    let chi4c = |a: usize, b: usize, e: usize, f: usize| chi4.comp(((a * d + b) * d + e) * d + f);

    let d6 = tensor_from(d, 6, |x| {
        let (b, a, i, m, n, q) = (x[0], x[1], x[2], x[3], x[4], x[5]);
        let mut s = 0.0;
        for l in 0..d {
            for k in 0..d {
                let gi = ((((((i * d + n) * d + m) * d + q) * d + l) * d) + k) as usize;
                s += mean_product(c_at(c, d, a, b, k, l), g5.comp(gi));
            }
            s += mean_product(c_at(c, d, a, b, i, l), chi4c(m, n, q, l));
        }
        s
    });
    let rho_gamma = |j: usize, b: usize| mean_product(rho.values(), gamma.comp(j * d + b));
    let e4 = tensor_from(d, 4, |x| {
        let (b, a, m, q) = (x[0], x[1], x[2], x[3]);
        let mut s = 0.0;
        for l in 0..d {
            for k in 0..d {
                s += mean_product(c_at(c, d, a, b, k, l), g3.comp(((l * d + m) * d + q) * d + k));
            }
            s += mean_product(c_at(c, d, a, b, m, l), gamma.comp(q * d + l));
        }
        s += mean_product(rho.values(), chi4c(m, a, q, b));
        // the free index of the printed correction is the summed density-corrector index
        for j in 0..d {
            s -= cbar.get(a, j, m, q) * rho_gamma(j, b) / rhobar;
        }
        s
    });
    let f5 = tensor_from(d, 5, |x| {
        let (b, a, i, m, q) = (x[0], x[1], x[2], x[3], x[4]);
        let mut s = 0.0;
        for l in 0..d {
            for k in 0..d {
                s += mean_product(
                    c_at(c, d, a, b, k, l),
                    g4.comp(((((i * d + m) * d + q) * d + l) * d) + k),
                );
            }
            s -= mean_product(c_at(c, d, a, b, i, l), chi1.comp((l * d + m) * d + q));
        }
        s
    });
    let g3t = tensor_from(d, 3, |x| {
        let (b, m, q) = (x[0], x[1], x[2]);
        let mut s = -mean_product(rho.values(), chi1.comp((b * d + m) * d + q));
        for k in 0..d {
            for l in 0..d {
                s += mean_product(c_at(c, d, m, b, k, l), gg.comp((q * d + l) * d + k));
            }
        }
        s
    });
    DispersiveTensors {
        d6,
        e4,
        f5,
        g3: g3t,
    }
}

/// Effective coefficients of the long-wave model.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveModel {
    pub cbar: Tensor4,
    pub rhobar: f64,
    pub d6: TensorN,
    pub e4: TensorN,
    pub f5: TensorN,
    pub g3: TensorN,
    pub src_u1_3rd: TensorN,
    pub src_u1_1st: TensorN,
    pub checks: TensorChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModelJson {
    pub cbar: TensorJson,
    pub rhobar: f64,
    pub d: TensorJson,
    pub e: TensorJson,
    pub f: TensorJson,
    pub g: TensorJson,
    pub src_u1_3rd: TensorJson,
    pub src_u1_1st: TensorJson,
    pub checks: TensorChecks,
}

impl EffectiveModel {
    /// Assemble everything from a solved corrector set.
    pub fn assemble(medium: &Medium, set: &CorrectorSet) -> Result<Self> {
        let sp = Spectral::new(medium.grid);
        let (cbar, checks) = effective_c(&sp, &medium.c, &set.chi1)?;
        let rhobar = effective_rho(&medium.rho);
        let src = u1_source_tensors(&sp, &medium.c, &medium.rho, &set.chi1, &set.chi4, &set.gamma);
        let disp = dispersive_tensors(&sp, &medium.c, &medium.rho, set, &cbar, rhobar);
        Ok(Self {
            cbar,
            rhobar,
            d6: disp.d6,
            e4: disp.e4,
            f5: disp.f5,
            g3: disp.g3,
            src_u1_3rd: src.third,
            src_u1_1st: src.first,
            checks,
        })
    }

    pub fn dim(&self) -> usize {
        self.cbar.dim()
    }

    pub fn to_json(&self) -> EffectiveModelJson {
        EffectiveModelJson {
            cbar: (&self.cbar).into(),
            rhobar: self.rhobar,
            d: self.d6.to_json(),
            e: self.e4.to_json(),
            f: self.f5.to_json(),
            g: self.g3.to_json(),
            src_u1_3rd: self.src_u1_3rd.to_json(),
            src_u1_1st: self.src_u1_1st.to_json(),
            checks: self.checks,
        }
    }

    pub fn from_json(j: EffectiveModelJson) -> Result<Self> {
        Ok(Self {
            cbar: j.cbar.into_tensor4()?,
            rhobar: j.rhobar,
            d6: j.d.into_tensor_n()?,
            e4: j.e.into_tensor_n()?,
            f5: j.f.into_tensor_n()?,
            g3: j.g.into_tensor_n()?,
            src_u1_3rd: j.src_u1_3rd.into_tensor_n()?,
            src_u1_1st: j.src_u1_1st.into_tensor_n()?,
            checks: j.checks,
        })
    }
}

/// Plane-wave symbol of the long-wave model at one wave vector.
#[derive(Debug, Clone)]
pub struct DispersionSymbol {
    pub k: Vec<f64>,
    pub eps: f64,
    pub a_matrix: DMatrix<C64>,
    pub b_matrix: DMatrix<C64>,
    /// Eigenvalues `w^2`, sorted by real part.
    pub omega2: Vec<C64>,
    /// Unit eigenvectors matching `omega2`.
    pub modes: Vec<Vec<C64>>,
    /// Largest `|Im w^2|`; nonzero values are reported, not suppressed.
    pub max_imag: f64,
}

impl DispersionSymbol {
    /// Whether any eigenvalue carries an imaginary part above `tol` (relative).
    pub fn non_hermitian_warning(&self, tol: f64) -> bool {
        let scale = self
            .omega2
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()))
            .max(f64::MIN_POSITIVE);
        self.max_imag > tol * scale
    }
}

/// Contract the model tensors with `k` into the two `d x d` matrices.
pub fn symbol_matrices(model: &EffectiveModel, k: &[f64], eps: f64) -> (DMatrix<C64>, DMatrix<C64>) {
    let d = model.dim();
    let i = C64::new(0.0, 1.0);
    let mut a = DMatrix::<C64>::zeros(d, d);
    let mut b = DMatrix::<C64>::zeros(d, d);
    for beta in 0..d {
        for q in 0..d {
            let mut gam = 0.0;
            let mut e2 = 0.0;
            let mut g1 = 0.0;
            for al in 0..d {
                for m in 0..d {
                    gam += model.cbar.get(al, beta, m, q) * k[al] * k[m];
                    e2 += model.e4.get(&[beta, al, m, q]) * k[al] * k[m];
                }
            }
            for m in 0..d {
                g1 += model.g3.get(&[beta, m, q]) * k[m];
            }
            let mut d4 = 0.0;
            let mut f3 = 0.0;
            for al in 0..d {
                for ii in 0..d {
                    for m in 0..d {
                        let kkk = k[al] * k[ii] * k[m];
                        f3 += model.f5.get(&[beta, al, ii, m, q]) * kkk;
                        for n in 0..d {
                            d4 += model.d6.get(&[beta, al, ii, m, n, q]) * kkk * k[n];
                        }
                    }
                }
            }
            a[(beta, q)] = C64::from(gam - eps * eps * d4) + i * (eps * f3);
            b[(beta, q)] = C64::from(if beta == q { model.rhobar } else { 0.0 } - eps * eps * e2)
                + i * (eps * g1);
        }
    }
    (a, b)
}

/// Null vector of `a - lambda b` via the smallest singular value.
fn null_vector(a: &DMatrix<C64>, b: &DMatrix<C64>, lambda: C64) -> Vec<C64> {
    let m = a - b * lambda;
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let v: Vec<C64> = v_t.row(idx).iter().map(|z| z.conj()).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

pub fn dispersion_relation(model: &EffectiveModel, k: &[f64], eps: f64) -> Result<DispersionSymbol> {
    let d = model.dim();
    if k.len() != d {
        return Err(HomogError::Shape(format!("wave vector needs {d} entries")));
    }
    let (a, b) = symbol_matrices(model, k, eps);
    let binv = b.clone().try_inverse().ok_or_else(|| {
        HomogError::Domain("mass symbol is singular at this wave vector".into())
    })?;
    let m = &binv * &a;
    let schur = nalgebra::Schur::new(m);
    let (_, t) = schur.unpack();
    let mut omega2: Vec<C64> = (0..d).map(|i| t[(i, i)]).collect();
    omega2.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap_or(std::cmp::Ordering::Equal));
    let modes = omega2.iter().map(|&l| null_vector(&a, &b, l)).collect();
    let max_imag = omega2.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    Ok(DispersionSymbol {
        k: k.to_vec(),
        eps,
        a_matrix: a,
        b_matrix: b,
        omega2,
        modes,
        max_imag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CellGrid;
    use crate::medium::{build_medium, Material, MediumSpec};
    use crate::solver::SolverConfig;
    use crate::tensor::{isotropic_tensor, LamePair};

    fn constant_model(lambda: f64, mu: f64, rho: f64) -> EffectiveModel {
        let d = 2;
        EffectiveModel {
            cbar: isotropic_tensor(LamePair::new(lambda, mu), d).unwrap(),
            rhobar: rho,
            d6: TensorN::zeros(d, 6),
            e4: TensorN::zeros(d, 4),
            f5: TensorN::zeros(d, 5),
            g3: TensorN::zeros(d, 3),
            src_u1_3rd: TensorN::zeros(d, 5),
            src_u1_1st: TensorN::zeros(d, 3),
            checks: TensorChecks {
                symmetry: SymmetryDefects {
                    major_defect: 0.0,
                    minor_defect: 0.0,
                },
                convexity_margin: 1.0,
            },
        }
    }

    #[test]
    fn acoustic_branches_of_isotropic_model() {
        let m = constant_model(0.8, 1.2, 2.0);
        let s = dispersion_relation(&m, &[1.5, 0.0], 0.0).unwrap();
        let k2 = 2.25;
        assert!((s.omega2[0].re - 1.2 * k2 / 2.0).abs() < 1e-12);
        assert!((s.omega2[1].re - (0.8 + 2.4) * k2 / 2.0).abs() < 1e-12);
        assert!(s.max_imag < 1e-14);
        let z = dispersion_relation(&m, &[0.0, 0.0], 0.0).unwrap();
        assert!(z.omega2.iter().all(|w| w.norm() < 1e-14));
    }

    #[test]
    fn scaling_at_zero_eps() {
        let m = constant_model(0.3, 0.9, 1.1);
        let a = dispersion_relation(&m, &[0.4, 0.7], 0.0).unwrap();
        let b = dispersion_relation(&m, &[1.2, 2.1], 0.0).unwrap();
        for (x, y) in a.omega2.iter().zip(&b.omega2) {
            assert!((y.re - 9.0 * x.re).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_medium_model_is_trivial() {
        let g = CellGrid::new(2, 16).unwrap();
        let med = build_medium(&MediumSpec::constant(Material::isotropic(1.0, 1.0, 1.5)), g).unwrap();
        let set = CorrectorSet::compute(&med, &SolverConfig::default()).unwrap();
        let m = EffectiveModel::assemble(&med, &set).unwrap();
        assert!(m.cbar.sub(&med.mean_tensor()).unwrap().max_abs() < 1e-12);
        assert!((m.rhobar - 1.5).abs() < 1e-12);
        for t in [&m.d6, &m.e4, &m.f5, &m.g3, &m.src_u1_3rd, &m.src_u1_1st] {
            assert!(t.max_abs() < 1e-10);
        }
        let json = serde_json::to_string(&m.to_json()).unwrap();
        let back = EffectiveModel::from_json(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
