//! Velocity models and right-hand sides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::grid::{sidecar_path, ComplexField, Grid, IndexBox};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub enum VelocityModel {
    Constant(f64),
    /// Piecewise constant along the last axis. `speeds[k]` applies between
    /// `interfaces[k-1]` and `interfaces[k]`.
    Layered { interfaces: Vec<f64>, speeds: Vec<f64> },
    Raster(Raster),
}

/// Grid-sampled velocity with multilinear interpolation and constant
/// extrapolation outside its extents.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub dim: usize,
    pub counts: [usize; 3],
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub data: Vec<f32>,
}

#[derive(Serialize, Deserialize, Debug)]
struct RasterHeader {
    nx: usize,
    ny: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nz: Option<usize>,
    extents: Vec<[f64; 2]>,
    dtype: String,
}

pub fn constant_model(c: f64) -> Result<VelocityModel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Model(format!("nonpositive speed {c}")));
    }
    Ok(VelocityModel::Constant(c))
}

pub fn layered_model(interfaces: &[f64], speeds: &[f64]) -> Result<VelocityModel> {
    if speeds.len() != interfaces.len() + 1 {
        return Err(Error::Model(format!(
            "{} interfaces need {} speeds, got {}",
            interfaces.len(),
            interfaces.len() + 1,
            speeds.len()
        )));
    }
    if let Some(&c) = speeds.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::Model(format!("nonpositive speed {c}")));
    }
    if interfaces.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Model("layer interfaces must be strictly increasing".into()));
    }
    Ok(VelocityModel::Layered { interfaces: interfaces.to_vec(), speeds: speeds.to_vec() })
}

impl Raster {
    pub fn new(dim: usize, counts: &[usize], extents: &[(f64, f64)], data: Vec<f32>) -> Result<Raster> {
        if counts.len() != dim || extents.len() != dim || !(dim == 2 || dim == 3) {
            return Err(Error::Format("raster header dimension mismatch".into()));
        }
        let mut r = Raster { dim, counts: [1; 3], lower: [0.0; 3], upper: [0.0; 3], data };
        for a in 0..dim {
            if counts[a] < 1 || !(extents[a].1 >= extents[a].0) {
                return Err(Error::Format(format!("raster axis {a} is degenerate")));
            }
            r.counts[a] = counts[a];
            r.lower[a] = extents[a].0;
            r.upper[a] = extents[a].1;
        }
        let n: usize = r.counts.iter().product();
        if r.data.len() != n {
            return Err(Error::Format(format!("raster holds {} samples, header says {n}", r.data.len())));
        }
        if let Some(c) = r.data.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::Model(format!("raster contains nonpositive speed {c}")));
        }
        Ok(r)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)))
    }

    fn sample(&self, x: &[f64]) -> f64 {
        // Per axis: base cell index and fractional weight.
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..self.dim {
            let n = self.counts[a];
            if n == 1 || self.upper[a] == self.lower[a] {
                continue;
            }
            let t = (x[a] - self.lower[a]) / (self.upper[a] - self.lower[a]) * (n - 1) as f64;
            let t = t.clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        let corners = 1usize << self.dim;
        for c in 0..corners {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..self.dim {
                let up = (c >> a) & 1 == 1;
                idx[a] = base[a] + up as usize;
                if idx[a] >= self.counts[a] {
                    idx[a] = self.counts[a] - 1;
                }
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let lin = idx[0] + self.counts[0] * (idx[1] + self.counts[1] * idx[2]);
            acc += w * self.data[lin] as f64;
        }
        acc
    }
}

impl VelocityModel {
    /// Wave speed at a point; `x` holds one coordinate per axis.
    pub fn speed(&self, x: &[f64]) -> f64 {
        match self {
            VelocityModel::Constant(c) => *c,
            VelocityModel::Layered { interfaces, speeds } => {
                let z = x[x.len() - 1];
                let k = interfaces.iter().take_while(|&&s| s <= z).count();
                speeds[k]
            }
            VelocityModel::Raster(r) => r.sample(x),
        }
    }
}

/// Reads a raster velocity: `path` holds raw little-endian f32 samples and
/// `path.json` the header `{nx, ny, nz?, extents, dtype}`.
pub fn load_velocity(path: &Path) -> Result<VelocityModel> {
    let text = fs::read_to_string(sidecar_path(path))?;
    let h: RasterHeader = serde_json::from_str(&text)?;
    if h.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported raster dtype {:?}", h.dtype)));
    }
    let mut counts = vec![h.nx, h.ny];
    if let Some(nz) = h.nz {
        counts.push(nz);
    }
    let dim = counts.len();
    if h.extents.len() != dim {
        return Err(Error::Format(format!("raster has {} extents for {dim} axes", h.extents.len())));
    }
    let raw = fs::read(path)?;
    let n: usize = counts.iter().product();
    if raw.len() != 4 * n {
        return Err(Error::Format(format!("raster data has {} bytes, header implies {}", raw.len(), 4 * n)));
    }
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let extents: Vec<(f64, f64)> = h.extents.iter().map(|e| (e[0], e[1])).collect();
    Ok(VelocityModel::Raster(Raster::new(dim, &counts, &extents, data)?))
}

pub fn write_raster(path: &Path, r: &Raster) -> Result<()> {
    let h = RasterHeader {
        nx: r.counts[0],
        ny: r.counts[1],
        nz: (r.dim == 3).then_some(r.counts[2]),
        extents: (0..r.dim).map(|a| [r.lower[a], r.upper[a]]).collect(),
        dtype: "f32le".into(),
    };
    let mut bytes = Vec::with_capacity(r.data.len() * 4);
    for c in &r.data {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&h)?)?;
    Ok(())
}

/// Wavenumber `ω / c` on every grid node. Nodes outside `interior` take the
/// velocity of the nearest interior node.
pub fn wavenumber_field(grid: &Grid, model: &VelocityModel, omega: f64, interior: &IndexBox) -> Result<Vec<f64>> {
    let dim = grid.dim();
    let mut out = Vec::with_capacity(grid.len());
    let mut x = vec![0.0; dim];
    for i in 0..grid.len() {
        let p = grid.node(i);
        for a in 0..dim {
            x[a] = grid.coord(a, p[a].clamp(interior.lo[a], interior.hi[a]));
        }
        let c = model.speed(&x);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Model(format!("nonpositive velocity {c} at {x:?}")));
        }
        out.push(omega / c);
    }
    Ok(out)
}

fn check_inside(grid: &Grid, interior: &IndexBox, center: &[f64]) -> Result<()> {
    if center.len() != grid.dim() {
        return Err(Error::Config(format!("source location {center:?} has wrong dimension")));
    }
    for a in 0..grid.dim() {
        let (lo, hi) = (grid.coord(a, interior.lo[a]), grid.coord(a, interior.hi[a]));
        if !(center[a] >= lo && center[a] <= hi) {
            return Err(Error::Config(format!("source at {center:?} lies outside the interior domain on axis {a}")));
        }
    }
    Ok(())
}

/// Normalised Gaussian bump `c·exp(−(4κ/π)²|x−r|²)`, with `c = 16κ²/π³` in 2D
/// and `64κ³/π^{9/2}` in 3D.
pub fn gaussian_source(grid: &Grid, interior: &IndexBox, center: &[f64], kappa: f64) -> Result<ComplexField> {
    check_inside(grid, interior, center)?;
    let pi = std::f64::consts::PI;
    let amp = gaussian_peak(grid.dim(), kappa);
    let s = (4.0 * kappa / pi).powi(2);
    let dim = grid.dim();
    Ok(ComplexField::from_fn(*grid, |x| {
        let r2: f64 = (0..dim).map(|a| (x[a] - center[a]).powi(2)).sum();
        C64::new(amp * (-s * r2).exp(), 0.0)
    }))
}

pub fn gaussian_peak(dim: usize, kappa: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if dim == 2 {
        16.0 * kappa * kappa / pi.powi(3)
    } else {
        64.0 * kappa.powi(3) / pi.powf(4.5)
    }
}

/// Discrete delta sources of weight `1/Πh` at the nodes nearest to each location.
pub fn point_shots(grid: &Grid, interior: &IndexBox, locations: &[Vec<f64>]) -> Result<ComplexField> {
    let mut f = ComplexField::zeros(*grid);
    let w = 1.0 / grid.cell_volume();
    for loc in locations {
        check_inside(grid, interior, loc)?;
        let mut p = [0usize; 3];
        for a in 0..grid.dim() {
            p[a] = grid.nearest(a, loc[a]);
        }
        f.values[grid.index(p)] += C64::new(w, 0.0);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_bad_speeds() {
        let m = constant_model(1.0).unwrap();
        assert_eq!(m.speed(&[0.3, 0.2]), 1.0);
        assert!(constant_model(0.0).is_err());
        assert!(layered_model(&[0.5], &[1.0, -2.0]).is_err());
        assert!(layered_model(&[0.5, 0.4], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn layers_follow_depth_axis() {
        let m = layered_model(&[0.3, 0.6], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.speed(&[0.1, 0.1]), 1.0);
        assert_eq!(m.speed(&[0.9, 0.45]), 2.0);
        assert_eq!(m.speed(&[0.1, 0.2, 0.7]), 3.0);
        for x in [-3.0, 0.0, 0.4, 7.0] {
            assert_eq!(m.speed(&[x, 0.5]), 2.0);
        }
    }

    #[test]
    fn raster_roundtrip_and_extrapolation() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..12).map(|i| if i % 2 == 0 { 1000.0 } else { 5000.0 }).collect();
        let r = Raster::new(2, &[4, 3], &[(0.0, 3.0), (0.0, 2.0)], data.clone()).unwrap();
        let p = dir.path().join("v.f32");
        write_raster(&p, &r).unwrap();
        let m = load_velocity(&p).unwrap();
        let VelocityModel::Raster(back) = &m else { panic!() };
        assert_eq!(back, &r);
        assert_eq!(back.min_max(), (1000.0, 5000.0));
        for j in 0..3 {
            for i in 0..4 {
                assert_eq!(m.speed(&[i as f64, j as f64]), data[i + 4 * j] as f64);
            }
        }
        assert_eq!(m.speed(&[-5.0, -5.0]), data[0] as f64);
        assert_eq!(m.speed(&[9.0, 9.0]), data[11] as f64);
        assert_eq!(m.speed(&[9.0, -1.0]), data[3] as f64);
    }

    #[test]
    fn raster_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.f32");
        std::fs::write(&p, [0u8; 8]).unwrap();
        std::fs::write(sidecar_path(&p), r#"{"nx":2,"ny":2,"extents":[[0,1],[0,1]],"dtype":"f32le"}"#).unwrap();
        assert!(matches!(load_velocity(&p), Err(Error::Format(_))));
        std::fs::write(sidecar_path(&p), r#"{"nx":2,"extents":[[0,1]],"dtype":"f32le"}"#).unwrap();
        assert!(load_velocity(&p).is_err());
    }

    #[test]
    fn shots_are_scaled_deltas() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], &[101, 101]).unwrap();
        let locs = vec![vec![0.25, 0.25], vec![0.25, 0.75], vec![0.75, 0.25], vec![0.75, 0.75]];
        let f = point_shots(&g, &g.full_box(), &locs).unwrap();
        let nz: Vec<_> = f.values.iter().filter(|z| z.norm() > 0.0).collect();
        assert_eq!(nz.len(), 4);
        for z in nz {
            assert!((z.re - 1e4).abs() < 1e-6);
        }
        assert!(point_shots(&g, &g.full_box(), &[vec![1.5, 0.5]]).is_err());
    }

    #[test]
    fn gaussian_peak_3d() {
        let g = Grid::new(&[(-0.5, 0.5); 3], &[11, 11, 11]).unwrap();
        let kappa = 2.0 * std::f64::consts::PI * 10.0;
        let f = gaussian_source(&g, &g.full_box(), &[0.0, 0.0, 0.0], kappa).unwrap();
        let peak = f.at([5, 5, 5]).re;
        let want = 64.0 * kappa.powi(3) / std::f64::consts::PI.powf(4.5);
        assert!((peak - want).abs() <= 1e-12 * want);
    }
}
