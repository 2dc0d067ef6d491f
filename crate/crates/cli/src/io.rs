//! CSV artifacts and all-or-nothing output directories.

use std::fs;
use std::path::{Path, PathBuf};

use rotsync::experiment::EstimateRow;
use rotsync::{RigidMotion, SensorId, SimRun, StampedMeasurement, TrackPoint};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const CONFIG_ECHO: &str = "config.toml";
pub const MOUNT: &str = "mount.csv";
pub const MOTIONS: [&str; 2] = ["motions_s1.csv", "motions_s2.csv"];
pub const MEASUREMENTS: [&str; 2] = ["measurements_s1.csv", "measurements_s2.csv"];
pub const TRUTH_OFFSET: &str = "truth_offset.csv";
pub const TARGET_TRUTH: &str = "target_truth.csv";

/// Files written through this guard are deleted again unless
/// [`OutputDir::commit`] is reached, as is the directory if we created it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root,
            files: Vec::new(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    fn track(&mut self, name: &str) -> PathBuf {
        let path = self.root.join(name);
        if !self.files.contains(&path) {
            self.files.push(path.clone());
        }
        path
    }

    pub fn write_text(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.track(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_csv<R: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = R>,
    ) -> CliResult<()> {
        let path = self.track(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        for row in rows {
            w.serialize(row).map_err(|e| csv_io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Config(format!("{}: {other:?}", path.display())),
    }
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> CliResult<Vec<R>> {
    let file = fs::File::open(path).map_err(|e| CliError::input(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| {
                CliError::Config(format!("{}: record {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionRow {
    pub k: usize,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl MotionRow {
    pub fn new(k: usize, m: &RigidMotion) -> Self {
        let [qw, qx, qy, qz] = m.quaternion_wxyz();
        let t = m.translation();
        Self {
            k,
            qw,
            qx,
            qy,
            qz,
            tx: t.x,
            ty: t.y,
            tz: t.z,
        }
    }

    pub fn motion(&self) -> Option<RigidMotion> {
        RigidMotion::from_components(
            [self.qw, self.qx, self.qy, self.qz],
            [self.tx, self.ty, self.tz],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub k: usize,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub k: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCsvRow {
    pub k: u64,
    pub offset: f64,
    pub uncertainty: f64,
    pub truth_offset: f64,
    pub abs_error: f64,
    pub saturated: bool,
}

impl EstimateCsvRow {
    pub fn row(&self) -> EstimateRow {
        EstimateRow {
            step: self.k,
            offset: self.offset,
            uncertainty: self.uncertainty,
            truth: self.truth_offset,
            abs_error: self.abs_error,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRow {
    pub k: u64,
    pub state: String,
    pub offset: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub index: usize,
    pub timestamp: f64,
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
    pub speed: f64,
    pub trace: f64,
}

impl From<&TrackPoint> for TrackRow {
    fn from(p: &TrackPoint) -> Self {
        let m = &p.state.mean;
        Self {
            index: p.index,
            timestamp: p.timestamp,
            x: m[0],
            vx: m[1],
            y: m[2],
            vy: m[3],
            speed: p.state.speed(),
            trace: p.state.trace(),
        }
    }
}

pub fn write_sim_run(out: &mut OutputDir, run: &SimRun, cfg: &ExperimentConfig) -> CliResult<()> {
    let echo = ExperimentConfig {
        sim: run.config,
        ..cfg.clone()
    };
    out.write_text(CONFIG_ECHO, &echo.echo())?;
    out.write_csv(MOUNT, [MotionRow::new(0, &run.mount)])?;
    for s in 0..2 {
        out.write_csv(
            MOTIONS[s],
            run.motions[s].iter().enumerate().map(|(k, m)| MotionRow::new(k, m)),
        )?;
        out.write_csv(
            MEASUREMENTS[s],
            run.measurements[s].iter().map(|m| MeasurementRow {
                timestamp: m.timestamp,
                x: m.position[0],
                y: m.position[1],
            }),
        )?;
    }
    out.write_csv(
        TRUTH_OFFSET,
        run.truth_offset
            .iter()
            .enumerate()
            .map(|(k, &offset)| TruthRow { k, offset }),
    )?;
    out.write_csv(
        TARGET_TRUTH,
        run.target_truth
            .iter()
            .enumerate()
            .map(|(k, p)| TargetRow { k, x: p[0], y: p[1] }),
    )
}

fn motions(path: &Path) -> CliResult<Vec<RigidMotion>> {
    read_csv::<MotionRow>(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.k != i {
                return Err(CliError::Config(format!(
                    "{}: expected step {i}, found {}",
                    path.display(),
                    r.k
                )));
            }
            r.motion().ok_or_else(|| {
                CliError::Config(format!("{}: step {i} has an invalid quaternion", path.display()))
            })
        })
        .collect()
}

/// Loads a run directory written by [`write_sim_run`] together with the
/// config it was produced with.
pub fn read_sim_run(dir: &Path) -> CliResult<(SimRun, ExperimentConfig)> {
    let cfg = ExperimentConfig::load(Some(&dir.join(CONFIG_ECHO)))?;
    let n = cfg.sim.coarse_steps;
    let mount = motions(&dir.join(MOUNT))?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: empty", dir.join(MOUNT).display())))?;
    let m = [motions(&dir.join(MOTIONS[0]))?, motions(&dir.join(MOTIONS[1]))?];
    let truth: Vec<TruthRow> = read_csv(&dir.join(TRUTH_OFFSET))?;
    let target: Vec<TargetRow> = read_csv(&dir.join(TARGET_TRUTH))?;
    let mut measurements: [Vec<StampedMeasurement>; 2] = [Vec::new(), Vec::new()];
    for (s, sensor) in [SensorId::Reference, SensorId::Secondary].into_iter().enumerate() {
        measurements[s] = read_csv::<MeasurementRow>(&dir.join(MEASUREMENTS[s]))?
            .into_iter()
            .map(|r| StampedMeasurement {
                sensor,
                timestamp: r.timestamp,
                position: [r.x, r.y],
                noise_std: cfg.sim.measurement_std,
            })
            .collect();
    }
    let lengths = [
        m[0].len(),
        m[1].len(),
        truth.len(),
        target.len(),
        measurements[0].len(),
        measurements[1].len(),
    ];
    if lengths.iter().any(|&l| l != n) {
        return Err(CliError::Config(format!(
            "{}: series lengths {lengths:?} do not all match coarse_steps = {n}",
            dir.display()
        )));
    }
    let run = SimRun {
        config: cfg.sim,
        profile: cfg.profile(),
        mount,
        motions: m,
        truth_offset: truth.iter().map(|r| r.offset).collect(),
        measurements,
        target_truth: target.iter().map(|r| [r.x, r.y]).collect(),
    };
    Ok((run, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_disappear() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("out");
        {
            let mut out = OutputDir::create(&root).unwrap();
            out.write_text("a.txt", "x").unwrap();
            out.write_csv("b.csv", [TruthRow { k: 0, offset: 0.5 }]).unwrap();
            assert!(root.join("b.csv").exists());
        }
        assert!(!root.exists());

        let mut out = OutputDir::create(&root).unwrap();
        out.write_text("a.txt", "x").unwrap();
        out.commit();
        assert_eq!(fs::read_to_string(root.join("a.txt")).unwrap(), "x");
    }

    #[test]
    fn existing_directories_survive_failure() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("keep.txt"), "k").unwrap();
        {
            let mut out = OutputDir::create(tmp.path()).unwrap();
            out.write_text("new.txt", "n").unwrap();
        }
        assert!(tmp.path().join("keep.txt").exists());
        assert!(!tmp.path().join("new.txt").exists());
    }

    #[test]
    fn motion_rows_round_trip() {
        let m = RigidMotion::planar(1.0, -2.0, 0.7);
        let back = MotionRow::new(3, &m).motion().unwrap();
        assert!(m.inverse().compose(&back).is_identity(1e-12));
    }
}
