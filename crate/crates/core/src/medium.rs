//! Medium descriptions and their sampling onto a cell grid.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HomogError, Result};
use crate::field::{CellField, CellGrid, Spectral};
use crate::tensor::{check_symmetries, convexity_margin, isotropic_tensor, LamePair, Tensor4};

/// One homogeneous phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lame: Option<LamePair>,
    /// Full row-major `d^4` stiffness entries, used when `lame` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<Vec<f64>>,
    pub density: f64,
}

impl Material {
    pub fn isotropic(lambda: f64, mu: f64, density: f64) -> Self {
        Self {
            lame: Some(LamePair::new(lambda, mu)),
            tensor: None,
            density,
        }
    }

    pub fn anisotropic(tensor: &Tensor4, density: f64) -> Self {
        Self {
            lame: None,
            tensor: Some(tensor.entries().to_vec()),
            density,
        }
    }

    pub fn stiffness(&self, dim: usize) -> Result<Tensor4> {
        let c = match (&self.lame, &self.tensor) {
            (Some(l), None) => isotropic_tensor(*l, dim)?,
            (None, Some(e)) => {
                let c = Tensor4::from_entries(dim, e.clone())?;
                let s = check_symmetries(&c);
                let tol = 1e-12 * c.max_abs().max(1.0);
                if s.major_defect > tol || s.minor_defect > tol {
                    return Err(HomogError::Medium(format!(
                        "phase tensor is not symmetric (major {:.2e}, minor {:.2e})",
                        s.major_defect, s.minor_defect
                    )));
                }
                c
            }
            _ => {
                return Err(HomogError::Medium(
                    "a material needs exactly one of `lame` or `tensor`".into(),
                ))
            }
        };
        let margin = convexity_margin(&c);
        if margin <= 0.0 {
            return Err(HomogError::Medium(format!(
                "phase violates strong convexity (margin {margin:.3e})"
            )));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(HomogError::Medium(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        Ok(c)
    }
}

/// `amplitude * cos(2 pi freq . y + phase)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub freq: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

/// A trigonometric polynomial on the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigField {
    pub mean: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigField {
    pub fn constant(mean: f64) -> Self {
        Self {
            mean,
            terms: Vec::new(),
        }
    }

    pub fn with_term(mut self, amplitude: f64, freq: &[i32], phase: f64) -> Self {
        self.terms.push(TrigTerm {
            amplitude,
            freq: freq.to_vec(),
            phase,
        });
        self
    }

    pub fn eval(&self, y: [f64; 3]) -> f64 {
        self.mean
            + self
                .terms
                .iter()
                .map(|t| {
                    let arg: f64 = t
                        .freq
                        .iter()
                        .enumerate()
                        .map(|(k, &f)| f as f64 * y[k])
                        .sum();
                    t.amplitude * (2.0 * PI * arg + t.phase).cos()
                })
                .sum::<f64>()
    }
}

/// Constant anisotropic tensor weighted by a trigonometric field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicTerm {
    pub tensor: Vec<f64>,
    pub weight: TrigField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum VoxelSource {
    /// Binary raster: one ASCII header line `VOXEL dim=<d> n=<n> phases=<p>`
    /// followed by `n^d` little-endian `u32` phase ids in grid order.
    File { path: PathBuf },
    Inline { n: usize, ids: Vec<u32> },
    /// `cells x cells (x cells)` alternating blocks of phases 0 and 1.
    Checkerboard { cells: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediumKind {
    Constant {
        material: Material,
    },
    /// Layers stacked along `axis` (0-based) with the given volume fractions.
    Laminate {
        axis: usize,
        fractions: Vec<f64>,
        phases: Vec<Material>,
    },
    Voxel {
        raster: VoxelSource,
        phases: Vec<Material>,
    },
    /// Isotropic moduli and density given as trigonometric polynomials, plus
    /// optional anisotropic contributions.
    Smooth {
        lambda: TrigField,
        mu: TrigField,
        density: TrigField,
        #[serde(default)]
        anisotropic: Vec<AnisotropicTerm>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    #[serde(flatten)]
    pub kind: MediumKind,
    /// Periodic Gaussian mollifier width in grid cells, applied to phase rasters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing_width: Option<f64>,
}

impl MediumSpec {
    pub fn new(kind: MediumKind) -> Self {
        Self {
            kind,
            smoothing_width: None,
        }
    }

    pub fn constant(material: Material) -> Self {
        Self::new(MediumKind::Constant { material })
    }

    pub fn laminate(axis: usize, fractions: Vec<f64>, phases: Vec<Material>) -> Self {
        Self::new(MediumKind::Laminate {
            axis,
            fractions,
            phases,
        })
    }

    pub fn smooth(lambda: TrigField, mu: TrigField, density: TrigField) -> Self {
        Self::new(MediumKind::Smooth {
            lambda,
            mu,
            density,
            anisotropic: Vec::new(),
        })
    }

    pub fn with_smoothing(mut self, width: f64) -> Self {
        self.smoothing_width = Some(width);
        self
    }

    /// Stiffness and density at one point, for media with a closed-form
    /// description (constant, laminate without smoothing, smooth).
    pub fn eval_point(&self, y: [f64; 3], dim: usize) -> Result<(Tensor4, f64)> {
        match &self.kind {
            MediumKind::Constant { material } => Ok((material.stiffness(dim)?, material.density)),
            MediumKind::Laminate {
                axis,
                fractions,
                phases,
            } => {
                if self.smoothing_width.is_some() {
                    return Err(HomogError::Medium(
                        "point evaluation of a mollified laminate is not available".into(),
                    ));
                }
                if *axis >= dim || fractions.len() != phases.len() || phases.is_empty() {
                    return Err(HomogError::Medium("malformed laminate".into()));
                }
                let t = y[*axis].rem_euclid(1.0);
                let mut acc = 0.0;
                let mut id = phases.len() - 1;
                for (p, f) in fractions.iter().enumerate() {
                    acc += f;
                    if t < acc - 1e-12 {
                        id = p;
                        break;
                    }
                }
                Ok((phases[id].stiffness(dim)?, phases[id].density))
            }
            MediumKind::Smooth {
                lambda,
                mu,
                density,
                anisotropic,
            } => {
                let lame = LamePair::new(lambda.eval(y), mu.eval(y));
                let mut entries = crate::tensor::isotropic_unchecked(lame, dim).entries().to_vec();
                for term in anisotropic {
                    if term.tensor.len() != entries.len() {
                        return Err(HomogError::Shape("anisotropic term size".into()));
                    }
                    let s = term.weight.eval(y);
                    for (e, t) in entries.iter_mut().zip(&term.tensor) {
                        *e += s * t;
                    }
                }
                let mut t = Tensor4::from_entries(dim, entries)?;
                t.refresh_symmetry();
                Ok((t, density.eval(y)))
            }
            MediumKind::Voxel { .. } => Err(HomogError::Medium(
                "point evaluation of a voxel medium is not available".into(),
            )),
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the medium description and grid.
    pub fn hash(&self, grid: CellGrid) -> String {
        let body = serde_json::json!({ "medium": self, "grid": grid });
        let digest = Sha256::digest(body.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A sampled medium: pointwise stiffness `C(y)` and density `rho(y)`.
#[derive(Debug, Clone)]
pub struct Medium {
    pub grid: CellGrid,
    pub c: CellField,
    pub rho: CellField,
    /// Smallest pointwise convexity margin over the grid.
    pub min_margin: f64,
    /// Largest pointwise symmetry defect over the grid.
    pub symmetry_defect: f64,
}

impl Medium {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Stiffness at one grid point.
    pub fn tensor_at(&self, p: usize) -> Tensor4 {
        let d4 = self.grid.components(4);
        let entries = (0..d4).map(|c| self.c.comp(c)[p]).collect();
        Tensor4::from_entries(self.grid.dim, entries).expect("finite medium entries")
    }

    /// Cell average `<C>` (the Voigt tensor).
    pub fn mean_tensor(&self) -> Tensor4 {
        let mut t = Tensor4::from_entries(self.grid.dim, crate::field::cell_average(&self.c))
            .expect("finite medium entries");
        t.refresh_symmetry();
        t
    }

    pub fn mean_density(&self) -> f64 {
        crate::field::cell_average(&self.rho)[0]
    }

    /// Assemble from explicit fields, measuring margin and symmetry.
    pub fn from_fields(c: CellField, rho: CellField) -> Result<Self> {
        if c.rank() != 4 || rho.rank() != 0 || c.grid() != rho.grid() {
            return Err(HomogError::Shape(
                "medium needs a rank-4 stiffness and rank-0 density on one grid".into(),
            ));
        }
        let grid = c.grid();
        if rho.values().iter().any(|&r| !(r > 0.0)) {
            return Err(HomogError::Medium("density must be positive everywhere".into()));
        }
        let mut m = Medium {
            grid,
            c,
            rho,
            min_margin: f64::INFINITY,
            symmetry_defect: 0.0,
        };
        for p in 0..grid.npts() {
            let t = m.tensor_at(p);
            let s = check_symmetries(&t);
            m.symmetry_defect = m.symmetry_defect.max(s.major_defect).max(s.minor_defect);
            m.min_margin = m.min_margin.min(convexity_margin(&t));
        }
        if m.min_margin <= 0.0 {
            return Err(HomogError::Medium(format!(
                "medium loses strong convexity (min margin {:.3e})",
                m.min_margin
            )));
        }
        Ok(m)
    }

    pub fn is_laminate_along(&self, axis: usize) -> bool {
        let g = self.grid;
        let same = |a: usize, b: usize| {
            (0..g.components(4)).all(|c| self.c.comp(c)[a] == self.c.comp(c)[b])
                && self.rho.values()[a] == self.rho.values()[b]
        };
        (0..g.npts()).all(|p| {
            let mut c = g.coords(p);
            for a in 0..g.dim {
                if a != axis {
                    c[a] = 0;
                }
            }
            let q = c[..g.dim].iter().fold(0, |acc, &i| acc * g.n + i);
            same(p, q)
        })
    }
}

fn read_voxel_file(path: &Path) -> Result<(usize, usize, usize, Vec<u32>)> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("VOXEL") {
        return Err(HomogError::Config(format!(
            "{}: raster header must start with VOXEL",
            path.display()
        )));
    }
    let (mut dim, mut n, mut phases) = (None, None, None);
    for p in parts {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| HomogError::Config(format!("bad header token `{p}`")))?;
        let v: usize = v
            .parse()
            .map_err(|_| HomogError::Config(format!("bad header value `{p}`")))?;
        match k {
            "dim" => dim = Some(v),
            "n" => n = Some(v),
            "phases" => phases = Some(v),
            _ => return Err(HomogError::Config(format!("unknown header key `{k}`"))),
        }
    }
    let (dim, n, phases) = match (dim, n, phases) {
        (Some(d), Some(n), Some(p)) => (d, n, p),
        _ => {
            return Err(HomogError::Config(
                "raster header needs dim, n and phases".into(),
            ))
        }
    };
    let count = n.pow(dim as u32);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 4 * count {
        return Err(HomogError::Config(format!(
            "raster body has {} bytes, expected {}",
            bytes.len(),
            4 * count
        )));
    }
    let ids = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((dim, n, phases, ids))
}

/// Write a raster in the format read by [`VoxelSource::File`].
pub fn write_voxel_file(path: &Path, dim: usize, n: usize, phases: usize, ids: &[u32]) -> Result<()> {
    use std::io::Write;
    if ids.len() != n.pow(dim as u32) {
        return Err(HomogError::Shape("raster size does not match header".into()));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "VOXEL dim={dim} n={n} phases={phases}")?;
    for id in ids {
        f.write_all(&id.to_le_bytes())?;
    }
    Ok(())
}

/// Phase id of every grid node.
fn phase_ids(kind: &MediumKind, grid: CellGrid) -> Result<Vec<usize>> {
    match kind {
        MediumKind::Laminate {
            axis, fractions, ..
        } => {
            if *axis >= grid.dim {
                return Err(HomogError::Medium(format!(
                    "laminate axis {axis} out of range"
                )));
            }
            if fractions.iter().any(|&f| !(f > 0.0)) {
                return Err(HomogError::Medium("laminate fractions must be positive".into()));
            }
            let total: f64 = fractions.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(HomogError::Medium(format!(
                    "laminate fractions sum to {total}, not 1"
                )));
            }
            let mut edges = Vec::with_capacity(fractions.len());
            let mut acc = 0.0;
            for f in fractions {
                acc += f;
                edges.push(acc);
            }
            Ok((0..grid.npts())
                .map(|p| {
                    let y = grid.position(p)[*axis];
                    edges
                        .iter()
                        .position(|&e| y < e - 1e-12)
                        .unwrap_or(fractions.len() - 1)
                })
                .collect())
        }
        MediumKind::Voxel { raster, phases } => {
            let (rdim, rn, ids) = match raster {
                VoxelSource::File { path } => {
                    let (d, n, p, ids) = read_voxel_file(path)?;
                    if p != phases.len() {
                        return Err(HomogError::Config(format!(
                            "raster declares {p} phases, medium lists {}",
                            phases.len()
                        )));
                    }
                    (d, n, ids)
                }
                VoxelSource::Inline { n, ids } => (grid.dim, *n, ids.clone()),
                VoxelSource::Checkerboard { cells } => {
                    let cells = (*cells).max(1);
                    let ids = (0..grid.npts())
                        .map(|p| {
                            let c = grid.coords(p);
                            let s: usize = (0..grid.dim).map(|a| c[a] * cells / grid.n).sum();
                            (s % 2) as u32
                        })
                        .collect();
                    (grid.dim, grid.n, ids)
                }
            };
            if rdim != grid.dim {
                return Err(HomogError::Config(format!(
                    "raster dimension {rdim} does not match grid dimension {}",
                    grid.dim
                )));
            }
            if ids.len() != rn.pow(rdim as u32) || rn == 0 {
                return Err(HomogError::Config("raster size mismatch".into()));
            }
            let out: Vec<usize> = (0..grid.npts())
                .map(|p| {
                    let c = grid.coords(p);
                    let q = (0..grid.dim).fold(0, |acc, a| acc * rn + c[a] * rn / grid.n);
                    ids[q] as usize
                })
                .collect();
            if let Some(bad) = out.iter().find(|&&id| id >= phases.len()) {
                return Err(HomogError::Config(format!("raster phase id {bad} out of range")));
            }
            Ok(out)
        }
        _ => unreachable!("phase ids only exist for rasterized media"),
    }
}

/// Periodic Gaussian mollification of phase indicators; returns per-node weights.
fn smoothed_weights(ids: &[usize], nphase: usize, grid: CellGrid, width: f64) -> Vec<Vec<f64>> {
    let sp = Spectral::new(grid);
    let sigma = width * grid.spacing();
    let mut weights: Vec<Vec<f64>> = (0..nphase)
        .map(|ph| {
            let mut buf: Vec<Complex64> = ids
                .iter()
                .map(|&id| Complex64::new(if id == ph { 1.0 } else { 0.0 }, 0.0))
                .collect();
            sp.forward(&mut buf);
            for (m, v) in buf.iter_mut().enumerate() {
                let w = sp.freq(m);
                let k2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
                *v *= (-0.5 * k2 * sigma * sigma).exp();
            }
            sp.inverse(&mut buf);
            buf.iter().map(|z| z.re.max(0.0)).collect()
        })
        .collect();
    for p in 0..grid.npts() {
        let s: f64 = weights.iter().map(|w| w[p]).sum();
        for w in weights.iter_mut() {
            w[p] /= s;
        }
    }
    weights
}

fn fields_from_weights(
    grid: CellGrid,
    tensors: &[Tensor4],
    densities: &[f64],
    weight: impl Fn(usize, usize) -> f64,
) -> (CellField, CellField) {
    let d4 = grid.components(4);
    let npts = grid.npts();
    let mut c = CellField::zeros(grid, 4);
    let mut rho = CellField::zeros(grid, 0);
    for ph in 0..tensors.len() {
        for p in 0..npts {
            let w = weight(ph, p);
            if w == 0.0 {
                continue;
            }
            for comp in 0..d4 {
                c.comp_mut(comp)[p] += w * tensors[ph].entries()[comp];
            }
            rho.values_mut()[p] += w * densities[ph];
        }
    }
    (c, rho)
}

/// Sample a medium description onto the grid.
pub fn build_medium(spec: &MediumSpec, grid: CellGrid) -> Result<Medium> {
    let dim = grid.dim;
    match &spec.kind {
        MediumKind::Constant { material } => {
            let t = material.stiffness(dim)?;
            let (c, rho) = fields_from_weights(grid, &[t], &[material.density], |_, _| 1.0);
            Medium::from_fields(c, rho)
        }
        MediumKind::Laminate { phases, .. } | MediumKind::Voxel { phases, .. } => {
            if phases.is_empty() {
                return Err(HomogError::Medium("no phases given".into()));
            }
            if let MediumKind::Laminate { fractions, .. } = &spec.kind {
                if fractions.len() != phases.len() {
                    return Err(HomogError::Medium(format!(
                        "{} fractions for {} phases",
                        fractions.len(),
                        phases.len()
                    )));
                }
            }
            let tensors = phases
                .iter()
                .map(|m| m.stiffness(dim))
                .collect::<Result<Vec<_>>>()?;
            let dens: Vec<f64> = phases.iter().map(|m| m.density).collect();
            let ids = phase_ids(&spec.kind, grid)?;
            let (c, rho) = match spec.smoothing_width {
                Some(w) if w > 0.0 => {
                    let wts = smoothed_weights(&ids, phases.len(), grid, w);
                    fields_from_weights(grid, &tensors, &dens, |ph, p| wts[ph][p])
                }
                _ => fields_from_weights(grid, &tensors, &dens, |ph, p| {
                    if ids[p] == ph {
                        1.0
                    } else {
                        0.0
                    }
                }),
            };
            Medium::from_fields(c, rho)
        }
        MediumKind::Smooth {
            lambda,
            mu,
            density,
            anisotropic,
        } => {
            let extra = anisotropic
                .iter()
                .map(|t| {
                    let tt = Tensor4::from_entries(dim, t.tensor.clone())?;
                    let s = check_symmetries(&tt);
                    if s.major_defect > 1e-12 || s.minor_defect > 1e-12 {
                        return Err(HomogError::Medium(
                            "anisotropic term is not symmetric".into(),
                        ));
                    }
                    Ok((tt, &t.weight))
                })
                .collect::<Result<Vec<_>>>()?;
            let d4 = grid.components(4);
            let mut c = CellField::zeros(grid, 4);
            let mut rho = CellField::zeros(grid, 0);
            for p in 0..grid.npts() {
                let y = grid.position(p);
                let lame = LamePair::new(lambda.eval(y), mu.eval(y));
                let mut t = crate::tensor::isotropic_unchecked(lame, dim);
                for (tt, w) in &extra {
                    let s = w.eval(y);
                    for comp in 0..d4 {
                        let v = t.entries()[comp] + s * tt.entries()[comp];
                        let idx = crate::tensor::multi_indices(dim, 4).nth(comp).unwrap();
                        t.set(idx[0], idx[1], idx[2], idx[3], v);
                    }
                }
                for comp in 0..d4 {
                    c.comp_mut(comp)[p] = t.entries()[comp];
                }
                rho.values_mut()[p] = density.eval(y);
            }
            Medium::from_fields(c, rho)
        }
    }
}
