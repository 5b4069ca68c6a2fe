//! Dense index algebra for the small tensors of the homogenization pipeline.
//!
//! Indices are written 1..d in formulas and stored 0..d-1. Entries are kept
//! row-major over the index tuple, so `(i, j, k, l)` lives at
//! `((i * d + j) * d + k) * d + l`. The packed symmetric-matrix form used by
//! [`convexity_margin`] never leaves this module.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(HomogError::Dimension(dim))
    }
}

#[inline]
fn kron(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Flat row-major offset of a multi-index in dimension `dim`.
#[inline]
pub fn flat_index(dim: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

/// Iterate over all multi-indices of the given `order` in dimension `dim`,
/// in row-major order.
pub fn multi_indices(dim: usize, order: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = dim.pow(order as u32);
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; order];
        for slot in idx.iter_mut().rev() {
            *slot = flat % dim;
            flat /= dim;
        }
        idx
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LamePair {
    pub lambda: f64,
    pub mu: f64,
}

impl LamePair {
    pub fn new(lambda: f64, mu: f64) -> Self {
        Self { lambda, mu }
    }

    /// Strong convexity of the isotropic tensor: `mu > 0` and `d*lambda + 2*mu > 0`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        check_dim(dim)?;
        let ok = self.lambda.is_finite()
            && self.mu.is_finite()
            && self.mu > 0.0
            && dim as f64 * self.lambda + 2.0 * self.mu > 0.0;
        if ok {
            Ok(())
        } else {
            Err(HomogError::InvalidLame {
                lambda: self.lambda,
                mu: self.mu,
                dim,
            })
        }
    }
}

/// A fourth-order elastic tensor `C_ijkl`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dim: usize,
    entries: Vec<f64>,
    symmetric: bool,
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            entries: vec![0.0; dim.pow(4)],
            symmetric: true,
        })
    }

    /// Build from a flat row-major list of `d^4` entries. The symmetry flag is
    /// set only when both defects are exactly zero.
    pub fn from_entries(dim: usize, entries: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim.pow(4) {
            return Err(HomogError::Shape(format!(
                "expected {} entries for a dimension-{dim} fourth-order tensor, got {}",
                dim.pow(4),
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(HomogError::Shape("non-finite tensor entry".into()));
        }
        let mut t = Self {
            dim,
            entries,
            symmetric: false,
        };
        let defects = check_symmetries(&t);
        t.symmetric = defects.major_defect == 0.0 && defects.minor_defect == 0.0;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim;
        self.entries[((i * d + j) * d + k) * d + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let d = self.dim;
        self.entries[((i * d + j) * d + k) * d + l] = v;
        self.symmetric = false;
    }

    /// Re-evaluate the symmetry flag after in-place edits.
    pub fn refresh_symmetry(&mut self) {
        let defects = check_symmetries(self);
        self.symmetric = defects.major_defect == 0.0 && defects.minor_defect == 0.0;
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|v| v * s).collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn sub(&self, other: &Tensor4) -> Result<Tensor4> {
        if self.dim != other.dim {
            return Err(HomogError::Shape("tensor dimensions differ".into()));
        }
        Tensor4::from_entries(
            self.dim,
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_tensor_n(&self) -> TensorN {
        TensorN {
            dim: self.dim,
            order: 4,
            entries: self.entries.clone(),
        }
    }

    /// Acoustic tensor `Gamma_jl(k) = C_{a j b l} k_a k_b`.
    pub fn acoustic(&self, k: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |j, l| {
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    s += self.get(a, j, b, l) * k[a] * k[b];
                }
            }
            s
        })
    }
}

/// `C_ijkl = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk)`.
pub fn isotropic_tensor(lame: LamePair, dim: usize) -> Result<Tensor4> {
    lame.validate(dim)?;
    Ok(isotropic_unchecked(lame, dim))
}

pub(crate) fn isotropic_unchecked(lame: LamePair, dim: usize) -> Tensor4 {
    let mut entries = vec![0.0; dim.pow(4)];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    entries[((i * dim + j) * dim + k) * dim + l] = lame.lambda
                        * kron(i, j)
                        * kron(k, l)
                        + lame.mu * (kron(i, k) * kron(j, l) + kron(i, l) * kron(j, k));
                }
            }
        }
    }
    Tensor4 {
        dim,
        entries,
        symmetric: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryDefects {
    pub major_defect: f64,
    pub minor_defect: f64,
}

/// Max-norm violations of `C_ijkl = C_klij` (major) and
/// `C_ijkl = C_jikl = C_ijlk` (minor).
pub fn check_symmetries(c: &Tensor4) -> SymmetryDefects {
    let d = c.dim;
    let mut major: f64 = 0.0;
    let mut minor: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let v = c.get(i, j, k, l);
                    major = major.max((v - c.get(k, l, i, j)).abs());
                    minor = minor
                        .max((v - c.get(j, i, k, l)).abs())
                        .max((v - c.get(i, j, l, k)).abs());
                }
            }
        }
    }
    SymmetryDefects {
        major_defect: major,
        minor_defect: minor,
    }
}

/// Orthonormal basis of symmetric `d x d` matrices as index pairs with weights.
fn sym_basis(dim: usize) -> Vec<Vec<(usize, usize, f64)>> {
    let mut basis = Vec::new();
    for i in 0..dim {
        basis.push(vec![(i, i, 1.0)]);
    }
    let w = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        for j in (i + 1)..dim {
            basis.push(vec![(i, j, w), (j, i, w)]);
        }
    }
    basis
}

pub(crate) fn packed_matrix(c: &Tensor4) -> DMatrix<f64> {
    let basis = sym_basis(c.dim);
    let m = basis.len();
    DMatrix::from_fn(m, m, |a, b| {
        let mut s = 0.0;
        for &(i, j, wa) in &basis[a] {
            for &(k, l, wb) in &basis[b] {
                s += wa * wb * c.get(i, j, k, l);
            }
        }
        s
    })
}

/// Largest `c0` with `a : C : a >= c0 |a|^2` over symmetric `a`.
pub fn convexity_margin(c: &Tensor4) -> f64 {
    let m = packed_matrix(c);
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `(C : a)_ij = C_ijkl a_kl` for a row-major `d x d` matrix `a`.
pub fn apply_tensor(c: &Tensor4, a: &[f64]) -> Result<Vec<f64>> {
    let d = c.dim;
    if a.len() != d * d {
        return Err(HomogError::Shape(format!(
            "matrix has {} entries, tensor expects {}",
            a.len(),
            d * d
        )));
    }
    let mut out = vec![0.0; d * d];
    for (ij, o) in out.iter_mut().enumerate() {
        let row = &c.entries[ij * d * d..(ij + 1) * d * d];
        *o = row.iter().zip(a).map(|(x, y)| x * y).sum();
    }
    Ok(out)
}

/// A real tensor of order 2..=6 (D, E, F, G and the source tensors).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorN {
    dim: usize,
    order: usize,
    entries: Vec<f64>,
}

impl TensorN {
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            entries: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn from_entries(dim: usize, order: usize, entries: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim.pow(order as u32) {
            return Err(HomogError::Shape(format!(
                "order-{order} tensor in dimension {dim} needs {} entries, got {}",
                dim.pow(order as u32),
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(HomogError::Shape("non-finite tensor entry".into()));
        }
        Ok(Self {
            dim,
            order,
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.order);
        self.entries[flat_index(self.dim, idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let f = flat_index(self.dim, idx);
        self.entries[f] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &TensorN) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn to_json(&self) -> TensorJson {
        TensorJson {
            dim: self.dim,
            order: self.order,
            entries: self.entries.clone(),
        }
    }
}

/// Wire format shared by every emitted tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub dim: usize,
    pub order: usize,
    pub entries: Vec<f64>,
}

impl TensorJson {
    pub fn into_tensor_n(self) -> Result<TensorN> {
        TensorN::from_entries(self.dim, self.order, self.entries)
    }

    pub fn into_tensor4(self) -> Result<Tensor4> {
        if self.order != 4 {
            return Err(HomogError::Shape(format!(
                "expected order 4, got {}",
                self.order
            )));
        }
        Tensor4::from_entries(self.dim, self.entries)
    }
}

impl From<&Tensor4> for TensorJson {
    fn from(t: &Tensor4) -> Self {
        TensorJson {
            dim: t.dim,
            order: 4,
            entries: t.entries.clone(),
        }
    }
}

impl From<&TensorN> for TensorJson {
    fn from(t: &TensorN) -> Self {
        t.to_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn isotropic_entries() {
        let c = isotropic_tensor(LamePair::new(1.0, 1.0), 2).unwrap();
        assert_eq!(c.get(0, 0, 0, 0), 3.0);
        assert_eq!(c.get(0, 0, 1, 1), 1.0);
        assert_eq!(c.get(0, 1, 0, 1), 1.0);

        let c = isotropic_tensor(LamePair::new(0.0, 1.0), 3).unwrap();
        assert_eq!(c.get(0, 0, 0, 0), 2.0);
        assert_eq!(c.get(0, 0, 1, 1), 0.0);

        let c = isotropic_tensor(LamePair::new(2.0, 0.5), 2).unwrap();
        assert_eq!(c.get(0, 1, 0, 1), 0.5);
        assert_eq!(c.get(0, 1, 1, 0), 0.5);
        assert!(c.is_symmetric());
    }

    #[test]
    fn rejects_nonconvex_lame() {
        assert!(isotropic_tensor(LamePair::new(1.0, 0.0), 2).is_err());
        assert!(isotropic_tensor(LamePair::new(-1.0, 1.0), 2).is_err());
        assert!(isotropic_tensor(LamePair::new(-0.9, 1.0), 2).is_ok());
        assert!(isotropic_tensor(LamePair::new(1.0, 1.0), 4).is_err());
    }

    #[test]
    fn symmetry_defects() {
        let c = isotropic_tensor(LamePair::new(1.0, 1.0), 2).unwrap();
        let s = check_symmetries(&c);
        assert_eq!((s.major_defect, s.minor_defect), (0.0, 0.0));

        let mut bad = Tensor4::zeros(2).unwrap();
        bad.set(0, 0, 0, 1, 1.0);
        let s = check_symmetries(&bad);
        assert_eq!(s.major_defect, 1.0);
        assert!(!bad.is_symmetric());
    }

    #[test]
    fn convexity_margin_isotropic() {
        // packed spectrum is {2mu, 2mu, d*lambda + 2mu}
        let c = isotropic_tensor(LamePair::new(1.0, 1.0), 2).unwrap();
        assert!((convexity_margin(&c) - 2.0).abs() < 1e-12);
        let c = isotropic_tensor(LamePair::new(-0.9, 1.0), 2).unwrap();
        assert!((convexity_margin(&c) - 0.2).abs() < 1e-12);
        let z = Tensor4::zeros(3).unwrap();
        assert_eq!(convexity_margin(&z), 0.0);
    }

    #[test]
    fn apply_identity_and_zero() {
        let c = isotropic_tensor(LamePair::new(1.0, 1.0), 2).unwrap();
        let out = apply_tensor(&c, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(out, vec![4.0, 0.0, 0.0, 4.0]);
        let out = apply_tensor(&c, &[0.0; 4]).unwrap();
        assert_eq!(out, vec![0.0; 4]);
        assert!(apply_tensor(&c, &[0.0; 9]).is_err());
    }

    #[test]
    fn json_shape() {
        let c = isotropic_tensor(LamePair::new(1.0, 2.0), 2).unwrap();
        let j = serde_json::to_value(TensorJson::from(&c)).unwrap();
        assert_eq!(j["dim"], 2);
        assert_eq!(j["order"], 4);
        assert_eq!(j["entries"].as_array().unwrap().len(), 16);
        let back: TensorJson = serde_json::from_value(j).unwrap();
        assert_eq!(back.into_tensor4().unwrap(), c);
    }

    fn random_symmetric(dim: usize, seed: &[f64]) -> Tensor4 {
        // symmetric tensor from a symmetric packed matrix
        let basis = sym_basis(dim);
        let m = basis.len();
        let mut packed = DMatrix::zeros(m, m);
        let mut it = seed.iter().cycle();
        for a in 0..m {
            for b in a..m {
                let v = *it.next().unwrap();
                packed[(a, b)] = v;
                packed[(b, a)] = v;
            }
        }
        let mut c = Tensor4::zeros(dim).unwrap();
        for a in 0..m {
            for b in 0..m {
                for &(i, j, wa) in &basis[a] {
                    for &(k, l, wb) in &basis[b] {
                        let cur = c.get(i, j, k, l);
                        c.set(i, j, k, l, cur + packed[(a, b)] * wa * wb);
                    }
                }
            }
        }
        c
    }

    proptest! {
        #[test]
        fn apply_matches_index_loop(
            dim in 2usize..4,
            seed in proptest::collection::vec(-2.0f64..2.0, 21),
            a in proptest::collection::vec(-1.0f64..1.0, 9),
        ) {
            let c = random_symmetric(dim, &seed);
            let a = &a[..dim * dim];
            let out = apply_tensor(&c, a).unwrap();
            for i in 0..dim {
                for j in 0..dim {
                    let mut s = 0.0;
                    for k in 0..dim {
                        for l in 0..dim {
                            s += c.get(i, j, k, l) * a[k * dim + l];
                        }
                    }
                    prop_assert!((out[i * dim + j] - s).abs() < 1e-14);
                }
            }
        }

        #[test]
        fn isotropic_margin_formula(lambda in -0.6f64..5.0, mu in 0.05f64..5.0, dim in 2usize..4) {
            let lame = LamePair::new(lambda, mu);
            prop_assume!(lame.validate(dim).is_ok());
            let c = isotropic_tensor(lame, dim).unwrap();
            let s = check_symmetries(&c);
            prop_assert_eq!(s.major_defect, 0.0);
            prop_assert_eq!(s.minor_defect, 0.0);
            let expect = (2.0 * mu).min(dim as f64 * lambda + 2.0 * mu);
            prop_assert!((convexity_margin(&c) - expect).abs() < 1e-10);
        }

        #[test]
        fn symmetric_contraction_stays_symmetric(
            seed in proptest::collection::vec(-2.0f64..2.0, 21),
            a in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let c = random_symmetric(2, &seed);
            let m = [a[0], a[1], a[1], a[2]];
            let out = apply_tensor(&c, &m).unwrap();
            prop_assert!((out[1] - out[2]).abs() < 1e-14);
        }
    }
}
