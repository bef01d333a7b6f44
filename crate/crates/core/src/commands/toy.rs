use std::path::Path;

use ndarray::Axis;

use crate::config::{Command, RunConfig};
use crate::data::{gen_rotation_toy, rotation_clockwise, SyntheticTask};
use crate::error::{Error, Result};
use crate::kernel::{mmd_u2, KernelSpec};
use crate::report::write_table;

/// MMD and single-pair error of the source rotated clockwise by each
/// scanned angle, against the fixed target cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationScan {
    pub thetas: Vec<f64>,
    pub mmd: Vec<f64>,
    pub pair_mse: Vec<f64>,
}

fn unit_scale(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    v.iter().map(|x| if span > 0.0 { (x - lo) / span } else { 0.0 }).collect()
}

impl RotationScan {
    /// Angle of the smallest MMD; the first one on ties.
    pub fn global_minimum(&self) -> f64 {
        let i = (0..self.mmd.len())
            .min_by(|a, b| self.mmd[*a].total_cmp(&self.mmd[*b]).then(a.cmp(b)))
            .expect("scan is nonempty");
        self.thetas[i]
    }

    /// Angles whose MMD is strictly below both circular neighbours.
    pub fn local_minima(&self) -> Vec<f64> {
        let n = self.mmd.len();
        if n < 3 {
            return Vec::new();
        }
        (0..n)
            .filter(|&i| {
                let v = self.mmd[i];
                v < self.mmd[(i + n - 1) % n] && v < self.mmd[(i + 1) % n]
            })
            .map(|i| self.thetas[i])
            .collect()
    }

    /// Local minima within `tolerance` degrees of `theta_star + 90°·k`, at
    /// most one per quarter turn (the closest).
    pub fn symmetry_minima(&self, theta_star: f64, tolerance: f64) -> Vec<f64> {
        let minima = self.local_minima();
        (0..4)
            .filter_map(|k| {
                let centre = theta_star + 90.0 * k as f64;
                minima
                    .iter()
                    .copied()
                    .filter(|m| angle_gap(*m, centre) <= tolerance)
                    .min_by(|a, b| angle_gap(*a, centre).total_cmp(&angle_gap(*b, centre)))
            })
            .collect()
    }

    pub fn mmd_unit_scaled(&self) -> Vec<f64> {
        unit_scale(&self.mmd)
    }

    pub fn pair_mse_unit_scaled(&self) -> Vec<f64> {
        unit_scale(&self.pair_mse)
    }
}

/// Smallest circular distance between two angles in degrees.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Scans `[0°, 360°)` in steps of `resolution` degrees.
pub fn scan_rotation(task: &SyntheticTask, spec: &KernelSpec, resolution: f64) -> Result<RotationScan> {
    if !(resolution > 0.0) || resolution > 360.0 {
        return Err(Error::invalid(format!("scan resolution must lie in (0, 360], got {resolution}")));
    }
    if task.dim() != 2 || task.paired_indices.is_empty() {
        return Err(Error::invalid("rotation scan needs a 2-d task with one revealed pair"));
    }
    let steps = (360.0 / resolution).ceil() as usize;
    let (x0, y0) = {
        let i = task.paired_indices[0];
        (task.source.row(i).to_owned(), task.target.row(i).to_owned())
    };
    let mut scan = RotationScan {
        thetas: Vec::with_capacity(steps),
        mmd: Vec::with_capacity(steps),
        pair_mse: Vec::with_capacity(steps),
    };
    for i in 0..steps {
        let theta = i as f64 * resolution;
        if theta >= 360.0 {
            break;
        }
        let r = rotation_clockwise(theta);
        let rotated = task.source.dot(&r.t());
        scan.thetas.push(theta);
        scan.mmd.push(mmd_u2(rotated.view(), task.target.view(), spec)?);
        let diff = r.dot(&x0) - &y0;
        scan.pair_mse.push(diff.dot(&diff));
    }
    Ok(scan)
}

/// Writes `landscape.csv` (θ, MMD, pair MSE; both unit-scaled) and
/// `clouds.csv` (the source and target points).
pub fn cmd_toy_rotation(cfg: &RunConfig, out: &Path) -> Result<RotationScan> {
    let t = &cfg.toy;
    let task = gen_rotation_toy(t.points, t.theta_star, t.noise_std, cfg.seed)?;
    let spec = cfg.kernel.spec()?;
    let scan = scan_rotation(&task, &spec, t.resolution)?;
    let minima = scan.local_minima();
    let notes = vec![
        format!("global_minimum_theta: {}", scan.global_minimum()),
        format!(
            "local_minima_theta: {}",
            minima.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
        ),
        format!(
            "symmetry_minima_theta: {}",
            scan.symmetry_minima(t.theta_star, 10.0)
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        ),
    ];
    let rows: Vec<Vec<String>> = scan
        .thetas
        .iter()
        .zip(scan.mmd_unit_scaled())
        .zip(scan.pair_mse_unit_scaled())
        .map(|((th, m), p)| vec![th.to_string(), m.to_string(), p.to_string()])
        .collect();
    write_table(
        &out.join("landscape.csv"),
        cfg,
        Command::ToyRotation,
        &notes,
        &["theta", "mmd", "pair_mse"],
        &rows,
    )?;
    let mut cloud_rows = Vec::with_capacity(2 * task.len());
    for (name, cloud) in [("source", &task.source), ("target", &task.target)] {
        for row in cloud.axis_iter(Axis(0)) {
            cloud_rows.push(vec![name.to_string(), row[0].to_string(), row[1].to_string()]);
        }
    }
    write_table(&out.join("clouds.csv"), cfg, Command::ToyRotation, &[], &["cloud", "x", "y"], &cloud_rows)?;
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_identity_scan_bottoms_out_at_zero_angle() {
        let task = gen_rotation_toy(60, 0.0, 0.0, 1).unwrap();
        let spec = KernelSpec::multiscale(0.3).unwrap();
        let scan = scan_rotation(&task, &spec, 10.0).unwrap();
        assert_eq!(scan.thetas.len(), 36);
        assert_eq!(scan.global_minimum(), 0.0);
        assert_eq!(scan.pair_mse[0], 0.0);
        let scaled = scan.mmd_unit_scaled();
        assert_eq!(scaled.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(scaled.iter().copied().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn circular_minima_and_gaps() {
        let scan = RotationScan {
            thetas: vec![0.0, 90.0, 180.0, 270.0],
            mmd: vec![1.0, 3.0, 2.0, 4.0],
            pair_mse: vec![0.0; 4],
        };
        assert_eq!(scan.local_minima(), [0.0, 180.0]);
        assert_eq!(scan.symmetry_minima(5.0, 10.0), [0.0, 180.0]);
        assert_eq!(scan.symmetry_minima(45.0, 10.0), Vec::<f64>::new());
        assert_eq!(angle_gap(355.0, 5.0), 10.0);
        assert_eq!(angle_gap(90.0, 270.0), 180.0);
        assert!(scan_rotation(&gen_rotation_toy(5, 0.0, 0.0, 0).unwrap(), &KernelSpec::multiscale(1.0).unwrap(), 0.0).is_err());
    }
}
