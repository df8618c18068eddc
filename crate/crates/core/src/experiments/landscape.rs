use std::path::Path;

use nalgebra::Vector3;

use crate::geometry::{CameraPose, Intrinsics};
use crate::scene::{render_view, PlanarScene};
use crate::servo::cost_value;
use crate::smm::{SmmConfig, SmmEncoder};
use crate::{Error, Result};

/// Cost sampled on a `(tx, ty)` lattice of camera displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLandscape {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, one row per `ys` entry.
    pub values: Vec<f64>,
}

impl CostLandscape {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.xs.len() + ix]
    }

    /// Lattice indices of the smallest entry and how many entries share it.
    pub fn argmin(&self) -> ((usize, usize), usize) {
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let first = self.values.iter().position(|&v| v == min).unwrap_or(0);
        let ties = self.values.iter().filter(|&&v| v == min).count();
        ((first % self.xs.len(), first / self.xs.len()), ties)
    }

    /// CSV with a header row of `tx` values and a leading `ty` column.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        let mut header = vec!["ty\\tx".to_string()];
        header.extend(self.xs.iter().map(|x| format!("{x:.6}")));
        w.write_record(&header)?;
        for (iy, y) in self.ys.iter().enumerate() {
            let mut row = vec![format!("{y:.6}")];
            row.extend((0..self.xs.len()).map(|ix| format!("{:.9e}", self.get(ix, iy))));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Symmetric lattice `-half..=half` with `steps` points per axis; the center
/// offset is exactly zero when `steps` is odd.
pub fn lattice(half: f64, steps: usize) -> Vec<f64> {
    let c = (steps as f64 - 1.0) / 2.0;
    let step = if steps > 1 { half / c } else { 0.0 };
    (0..steps).map(|i| (i as f64 - c) * step).collect()
}

/// Cost of displacing the desired camera by each `(tx, ty)` lattice offset in
/// the world frame.
pub fn sample_cost_landscape(
    scene: &PlanarScene,
    desired: &CameraPose,
    k: &Intrinsics,
    smm_cfg: &SmmConfig,
    xs: &[f64],
    ys: &[f64],
) -> Result<CostLandscape> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::invalid("lattice", "needs at least one point per axis"));
    }
    let enc = SmmEncoder::new(*k, *smm_cfg)?;
    let feature = |pose: &CameraPose| -> Result<Vec<f64>> {
        let img = render_view(scene, pose, enc.render_intrinsics())?;
        Ok(enc.encode(&img)?.values)
    };
    let target = feature(desired)?;
    let scale = if smm_cfg.normalize {
        1.0 / target.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        1.0
    };
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    for &y in ys {
        for &x in xs {
            let pose = desired.translated(&Vector3::new(x, y, 0.0));
            let e: Vec<f64> = feature(&pose)?
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * scale)
                .collect();
            values.push(cost_value(&e));
        }
        log::debug!("landscape row ty={y:+.3} done");
    }
    Ok(CostLandscape {
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        values,
    })
}
