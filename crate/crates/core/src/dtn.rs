//! Dirichlet-to-Neumann coefficients of the exterior Navier problem on a
//! sphere of radius `R`, per vector spherical harmonic order `n`.
//!
//! Readings of the printed coefficient formulas:
//! the third intermediate (printed as a second `B^(1,1)`) is `B^(2,1)`,
//! the denominator printed as `R - mu w_s^2` is taken as `R`, and the
//! background modulus `mu_0` is the background `mu`. The block
//! `[[b_n, c_n], [c_n, d_n]]` is symmetric by construction, which is what the
//! reciprocity pairing checks.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::tensor::LamePair;

/// Magnitude below which a denominator counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-12;

/// First-kind spherical Hankel function `h_n(z)` and its derivative.
pub fn spherical_hankel(n: usize, z: C64) -> Result<(C64, C64)> {
    if z.norm() == 0.0 {
        return Err(HomogError::Domain("spherical Hankel function at z = 0".into()));
    }
    if n as f64 > 10.0 * (z.norm() + 1.0) {
        log::warn!("spherical Hankel recurrence at n = {n} far beyond |z| = {}", z.norm());
    }
    let i = C64::new(0.0, 1.0);
    let e = (i * z).exp();
    let h0 = -i * e / z;
    let h1 = -e * (C64::from(1.0) / z + i / (z * z));
    if n == 0 {
        return Ok((h0, -h1));
    }
    let (mut prev, mut cur) = (h0, h1);
    for k in 1..n {
        let next = cur * (2 * k + 1) as f64 / z - prev;
        prev = cur;
        cur = next;
    }
    let deriv = prev - cur * (n + 1) as f64 / z;
    Ok((cur, deriv))
}

/// The full intermediate chain for one order.
#[derive(Debug, Clone, PartialEq)]
pub struct DtnCoefficients {
    pub n: usize,
    pub radius: f64,
    pub omega: f64,
    pub lame: LamePair,
    pub omega_s: f64,
    pub omega_p: f64,
    pub lambda_n: f64,
    pub gamma_s: C64,
    pub gamma_p: C64,
    pub b11: C64,
    pub b12: C64,
    pub b21: C64,
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

fn check_nonresonant(what: &'static str, v: C64) -> Result<()> {
    if v.norm() < RESONANCE_TOL {
        Err(HomogError::ResonantDenominator {
            what,
            magnitude: v.norm(),
        })
    } else {
        Ok(())
    }
}

/// Log-derivative factor `w h_n'(w R) / h_n(w R)`.
pub fn log_derivative(n: usize, w: f64, radius: f64) -> Result<C64> {
    let (h, hp) = spherical_hankel(n, C64::from(w * radius))?;
    check_nonresonant("h_n(w R)", h)?;
    Ok(hp / h * w)
}

/// Coefficients from given log-derivative factors (the algebra alone).
pub fn dtn_from_gammas(
    n: usize,
    radius: f64,
    omega: f64,
    lame: LamePair,
    gamma_s: C64,
    gamma_p: C64,
) -> Result<DtnCoefficients> {
    if !(radius > 0.0) {
        return Err(HomogError::Config("radius must be positive".into()));
    }
    lame.validate(3)?;
    let mu = lame.mu;
    let omega_s = omega / mu.sqrt();
    let omega_p = omega / (lame.lambda + 2.0 * mu).sqrt();
    let ln = (n * (n + 1)) as f64;
    let sl = ln.sqrt();
    let r = radius;
    let den = gamma_p * r * (gamma_s * r + 1.0) - ln;
    check_nonresonant("R g_p (R g_s + 1) - lambda_n", den)?;
    let b11 = -(sl * r) / den;
    let b12 = (gamma_s * r + 1.0) * r / den;
    let b21 = -(gamma_p * r * r) / den;
    let a = (gamma_s - 1.0 / r) * mu;
    let b = (gamma_p - 1.0 / r) * (2.0 * mu * sl) * b11 / r
        + (gamma_s * 2.0 + r * omega_s * omega_s + 2.0 * (1.0 - ln) / r) * mu * b21 / r;
    let c = (-gamma_s + 1.0 / r) * (2.0 * mu * sl) * b21 / r
        + (gamma_p * -2.0 + ln / r) * (2.0 * mu) * b11 / r;
    let d = -(-gamma_s + 1.0 / r) * (2.0 * mu * sl) * b11 / r
        + (gamma_p * -2.0 + ln / r) * (2.0 * mu) * b12 / r;
    Ok(DtnCoefficients {
        n,
        radius,
        omega,
        lame,
        omega_s,
        omega_p,
        lambda_n: ln,
        gamma_s,
        gamma_p,
        b11,
        b12,
        b21,
        a,
        b,
        c,
        d,
    })
}

/// Coefficients of order `n` for background `(omega, lame)` on radius `R`.
pub fn dtn_coefficients(n: usize, radius: f64, omega: f64, lame: LamePair) -> Result<DtnCoefficients> {
    if !(omega > 0.0) {
        return Err(HomogError::Config("frequency must be positive".into()));
    }
    lame.validate(3)?;
    let omega_s = omega / lame.mu.sqrt();
    let omega_p = omega / (lame.lambda + 2.0 * lame.mu).sqrt();
    let gs = log_derivative(n, omega_s, radius)?;
    let gp = log_derivative(n, omega_p, radius)?;
    dtn_from_gammas(n, radius, omega, lame, gs, gp)
}

/// Orders `0..=max_order`.
pub fn dtn_table(max_order: usize, radius: f64, omega: f64, lame: LamePair) -> Result<Vec<DtnCoefficients>> {
    (0..=max_order)
        .map(|n| dtn_coefficients(n, radius, omega, lame))
        .collect()
}

/// Per-mode impedance block acting on `(V, U, Y r)` coordinates; the two
/// off-diagonal slots are kept apart so asymmetry can be measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeBlock {
    pub a: C64,
    pub b: C64,
    /// Coefficient of `(u, Y r)` in the `U` component.
    pub c_uy: C64,
    /// Coefficient of `(u, U)` in the `Y r` component.
    pub c_yu: C64,
    pub d: C64,
}

impl From<&DtnCoefficients> for ModeBlock {
    fn from(k: &DtnCoefficients) -> Self {
        Self {
            a: k.a,
            b: k.b,
            c_uy: k.c,
            c_yu: k.c,
            d: k.d,
        }
    }
}

impl ModeBlock {
    fn apply(&self, u: [C64; 3]) -> [C64; 3] {
        [
            self.a * u[0],
            self.b * u[1] + self.c_uy * u[2],
            self.c_yu * u[1] + self.d * u[2],
        ]
    }
}

/// Modal coordinates of a trial field in a real orthonormal vector harmonic
/// basis: `coeffs[n][j] = [(u, V), (u, U), (u, Y r)]` for the `2n + 1`
/// harmonics of order `n` (only the radial slot is used at `n = 0`).
pub type TrialField = Vec<Vec<[C64; 3]>>;

/// `|int T u . w - int T w . u|` divided by the sum of the magnitudes of the
/// two pairings; the bilinear surface pairing is diagonal in the real basis.
pub fn reciprocity_defect(blocks: &[ModeBlock], u: &TrialField, w: &TrialField) -> Result<f64> {
    if u.len() != blocks.len() || w.len() != blocks.len() {
        return Err(HomogError::Shape("trial fields must match the truncation order".into()));
    }
    let mut diff = C64::default();
    let mut scale = 0.0;
    for (n, blk) in blocks.iter().enumerate() {
        if u[n].len() != 2 * n + 1 || w[n].len() != 2 * n + 1 {
            return Err(HomogError::Shape(format!("order {n} needs {} harmonics", 2 * n + 1)));
        }
        for (uu, ww) in u[n].iter().zip(&w[n]) {
            let (tu, tw) = (blk.apply(*uu), blk.apply(*ww));
            let p1: C64 = (0..3).map(|s| tu[s] * ww[s]).sum();
            let p2: C64 = (0..3).map(|s| tw[s] * uu[s]).sum();
            diff += p1 - p2;
            scale += p1.norm() + p2.norm();
        }
    }
    Ok(if scale == 0.0 { 0.0 } else { diff.norm() / scale })
}

/// Seeded random trial field up to `max_order` (the `V`, `U` slots vanish at `n = 0`).
pub fn random_trial(max_order: usize, seed: u64) -> TrialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = |on: bool| {
        if on {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        } else {
            C64::default()
        }
    };
    (0..=max_order)
        .map(|n| (0..2 * n + 1).map(|_| [z(n > 0), z(n > 0), z(true)]).collect())
        .collect()
}

/// Flat record for tables and JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DtnRow {
    pub n: usize,
    pub re_a: f64,
    pub im_a: f64,
    pub re_b: f64,
    pub im_b: f64,
    pub re_c: f64,
    pub im_c: f64,
    pub re_d: f64,
    pub im_d: f64,
}

impl From<&DtnCoefficients> for DtnRow {
    fn from(k: &DtnCoefficients) -> Self {
        Self {
            n: k.n,
            re_a: k.a.re,
            im_a: k.a.im,
            re_b: k.b.re,
            im_b: k.b.im,
            re_c: k.c.re,
            im_c: k.c.im,
            re_d: k.d.re,
            im_d: k.d.im,
        }
    }
}

/// CSV with header `n,re_a,im_a,re_b,im_b,re_c,im_c,re_d,im_d`.
pub fn dtn_csv(rows: &[DtnCoefficients]) -> String {
    let mut s = String::from("n,re_a,im_a,re_b,im_b,re_c,im_c,re_d,im_d\n");
    for k in rows {
        s.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            k.n, k.a.re, k.a.im, k.b.re, k.b.im, k.c.re, k.c.im, k.d.re, k.d.im
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let i = C64::new(0.0, 1.0);
        let (h0, _) = spherical_hankel(0, C64::from(1.0)).unwrap();
        assert!((h0 - (-i * i.exp())).norm() < 1e-15);
        assert!(spherical_hankel(2, C64::default()).is_err());
    }

    #[test]
    fn a_n_recomposes() {
        let lame = LamePair::new(1.0, 2.0);
        let k = dtn_coefficients(3, 1.5, 2.0, lame).unwrap();
        let ws = 2.0 / 2f64.sqrt();
        let (h, hp) = spherical_hankel(3, C64::from(ws * 1.5)).unwrap();
        let want = (hp / h * ws - 1.0 / 1.5) * 2.0;
        assert!((k.a - want).norm() < 1e-12 * want.norm());
        assert_eq!(k.lambda_n, 12.0);
    }

    #[test]
    fn resonant_denominator_rejected() {
        let lame = LamePair::new(1.0, 1.0);
        // lambda_1 = 2 and g_p R (g_s R + 1) = 2 at g_s R = 1, g_p R = 1
        let e = dtn_from_gammas(1, 1.0, 1.0, lame, C64::from(1.0), C64::from(1.0)).unwrap_err();
        assert!(matches!(e, HomogError::ResonantDenominator { .. }));
    }
}
