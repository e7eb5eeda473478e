//! Output files and the run manifest.
//!
//! Floats are written with 17 significant digits. Angles are degrees; rates
//! stay in rad/s. CSV files are byte-identical across reruns of the same
//! configuration; only `manifest.json` carries a timestamp.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{PeriodicOrbit, SweepRow, SweepSpec};
use crate::certify::Certificate;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::model::SwingState;
use crate::sim::{Abort, GaitSummary, StepRecord, Trajectory};

pub const MANIFEST_FILE: &str = "manifest.json";

pub const TRAJECTORY_HEADER: &str = "t,q1,q2,q3,dq1,dq2,dq3,u1,u2,eta1,eta2,wI1,wI2,zdelta,step";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub created: String,
    pub command: String,
    /// SHA-256 of `config`.
    pub config_digest: String,
    /// Fully resolved configuration in canonical form.
    pub config: String,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, warnings: Vec<String>) -> Self {
        let canonical = config.to_toml();
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            command: command.into(),
            config_digest: sha256_hex(canonical.as_bytes()),
            config: canonical,
            warnings,
            outputs: Vec::new(),
        }
    }

    /// Back-reference embedded in JSON outputs.
    pub fn reference(&self) -> ManifestRef {
        ManifestRef {
            file: MANIFEST_FILE.into(),
            config_digest: self.config_digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRef {
    pub file: String,
    pub config_digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn row(cells: &[String]) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for s in &traj.samples {
        let q = s.x.q.map(f64::to_degrees);
        let mut cells: Vec<String> = vec![fmt_f64(s.t)];
        cells.extend(q.iter().chain(s.x.dq.iter()).map(|&v| fmt_f64(v)));
        cells.extend(
            s.u.iter()
                .chain(s.eta.iter())
                .chain(s.integral.iter())
                .map(|&v| fmt_f64(v)),
        );
        cells.push(fmt_f64(s.z_delta));
        cells.push(s.step.to_string());
        out.push_str(&row(&cells));
    }
    out
}

pub fn step_times_csv(g: &GaitSummary) -> String {
    let mut out = String::from("step,step_time,z_delta_at_impact,pre_impact_distance\n");
    for (k, s) in g.steps.iter().filter(|s| s.completed()).enumerate() {
        out.push_str(&row(&[
            s.step_index.to_string(),
            fmt_f64(s.step_time),
            fmt_opt(s.z_delta_at_impact),
            fmt_opt(g.distances.get(k).copied()),
        ]));
    }
    out
}

/// `(q1, q̇1, q̇3)` along the trajectory.
pub fn projection_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,q1,dq1,dq3,step\n");
    for s in &traj.samples {
        out.push_str(&row(&[
            fmt_f64(s.t),
            fmt_f64(s.x.q[0].to_degrees()),
            fmt_f64(s.x.dq[0]),
            fmt_f64(s.x.dq[2]),
            s.step.to_string(),
        ]));
    }
    out
}

pub fn sweep_csv(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "# sweep axis {} over [{}, {}] with {} samples (user-chosen grid)\n",
        spec.axis.as_str(),
        fmt_f64(spec.start),
        fmt_f64(spec.end),
        spec.samples
    );
    out.push_str(
        "index,value,completed_steps,stable,orbit_found,orbit_step_time,orbit_contraction,\
         step_time,step_time_spread_last5,contraction,worst_z_delta,abort\n",
    );
    for r in rows {
        out.push_str(&row(&[
            r.index.to_string(),
            fmt_f64(r.value),
            r.completed_steps.to_string(),
            r.stable.to_string(),
            r.orbit_found.to_string(),
            fmt_opt(r.orbit_step_time),
            fmt_opt(r.orbit_contraction),
            fmt_opt(r.step_time),
            fmt_opt(r.step_time_spread_last5),
            fmt_opt(r.contraction),
            fmt_opt(r.worst_z_delta),
            r.abort.as_ref().map(|a| a.kind.clone()).unwrap_or_default(),
        ]));
    }
    out
}

/// State with angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDeg {
    pub q_deg: [f64; 3],
    pub dq: [f64; 3],
}

impl From<&SwingState> for StateDeg {
    fn from(x: &SwingState) -> Self {
        Self {
            q_deg: [
                x.q[0].to_degrees(),
                x.q[1].to_degrees(),
                x.q[2].to_degrees(),
            ],
            dq: [x.dq[0], x.dq[1], x.dq[2]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub step: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub step_time: f64,
    pub x_pre_impact: StateDeg,
    pub x_post_impact: StateDeg,
    pub impulse: [f64; 2],
    pub x_event: Option<StateDeg>,
    pub z_delta_at_impact: Option<f64>,
    pub z_delta_hit: bool,
    pub foot_height_at_event: Option<f64>,
    pub min_foot_clearance: f64,
    pub min_abs_det_b_e: f64,
    pub abort: Option<Abort>,
}

impl From<&StepRecord> for StepView {
    fn from(s: &StepRecord) -> Self {
        Self {
            step: s.step_index,
            t_start: s.t_start,
            t_end: s.t_end,
            step_time: s.step_time,
            x_pre_impact: (&s.x_pre_impact).into(),
            x_post_impact: (&s.x_post_impact).into(),
            impulse: [s.impulse[0], s.impulse[1]],
            x_event: s.x_event.as_ref().map(StateDeg::from),
            z_delta_at_impact: s.z_delta_at_impact,
            z_delta_hit: s.z_delta_hit,
            foot_height_at_event: s.foot_height_at_event,
            min_foot_clearance: s.min_foot_clearance,
            min_abs_det_b_e: s.min_abs_det_b_e,
            abort: s.abort.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitView {
    pub fixed_point: StateDeg,
    pub integral: [f64; 2],
    pub step_time: f64,
    pub iterations: usize,
    pub contraction: Option<f64>,
    pub distances: Vec<f64>,
}

impl From<&PeriodicOrbit> for OrbitView {
    fn from(o: &PeriodicOrbit) -> Self {
        Self {
            fixed_point: (&o.fixed_point.x).into(),
            integral: [o.fixed_point.integral[0], o.fixed_point.integral[1]],
            step_time: o.step_time,
            iterations: o.iterations,
            contraction: o.contraction,
            distances: o.distances.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryView {
    pub manifest: ManifestRef,
    pub completed_steps: usize,
    pub aborted: Option<Abort>,
    pub step_times: Vec<f64>,
    pub distances: Vec<f64>,
    pub contraction: Option<f64>,
    pub worst_z_delta_after_first: Option<f64>,
    pub orbit: Option<OrbitView>,
    pub orbit_error: Option<String>,
    pub steps: Vec<StepView>,
}

impl SummaryView {
    pub fn new(
        g: &GaitSummary,
        orbit: Option<std::result::Result<&PeriodicOrbit, &Error>>,
        manifest: &RunManifest,
    ) -> Self {
        Self {
            manifest: manifest.reference(),
            completed_steps: g.completed_steps(),
            aborted: g.aborted.clone(),
            step_times: g.step_times.clone(),
            distances: g.distances.clone(),
            contraction: g.contraction,
            worst_z_delta_after_first: g.worst_z_delta_from(1),
            orbit: orbit.and_then(|o| o.ok()).map(OrbitView::from),
            orbit_error: orbit.and_then(|o| o.err()).map(|e| e.to_string()),
            steps: g.steps.iter().map(StepView::from).collect(),
        }
    }
}

/// Writes files into one output directory and records them in the manifest.
pub struct OutputDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputDir {
    pub fn create(dir: &Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.manifest.outputs.push(OutputFile {
            file: name.into(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes the walk outputs: trajectory, per-step summary and plot files.
    pub fn write_gait(
        &mut self,
        g: &GaitSummary,
        orbit: Option<std::result::Result<&PeriodicOrbit, &Error>>,
    ) -> Result<()> {
        if !g.trajectory.samples.is_empty() {
            self.write("trajectory.csv", &trajectory_csv(&g.trajectory))?;
            self.write("projection.csv", &projection_csv(&g.trajectory))?;
        }
        self.write("step_times.csv", &step_times_csv(g))?;
        let view = SummaryView::new(g, orbit, &self.manifest);
        self.write_json("summary.json", &view).map(|_| ())
    }

    pub fn write_sweep(&mut self, spec: &SweepSpec, rows: &[SweepRow]) -> Result<()> {
        self.write("sweep.csv", &sweep_csv(spec, rows))?;
        #[derive(Serialize)]
        struct View<'a> {
            manifest: ManifestRef,
            axis: &'a str,
            rows: &'a [SweepRow],
        }
        let view = View {
            manifest: self.manifest.reference(),
            axis: spec.axis.as_str(),
            rows,
        };
        self.write_json("sweep.json", &view).map(|_| ())
    }

    pub fn write_certificate(&mut self, cert: &Certificate) -> Result<()> {
        #[derive(Serialize)]
        struct View<'a> {
            manifest: ManifestRef,
            passed: bool,
            #[serde(flatten)]
            cert: &'a Certificate,
        }
        let view = View {
            manifest: self.manifest.reference(),
            passed: cert.passed(),
            cert,
        };
        self.write_json("certificate.json", &view).map(|_| ())
    }

    /// Writes `manifest.json` last so it lists every output.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_gait, SimConfig};

    fn short_walk() -> GaitSummary {
        let cfg = SimConfig {
            n_steps: 2,
            ..SimConfig::nominal()
        };
        run_gait(
            &SwingState::from_degrees([15.0, -15.0, 105.0], [1.168, -1.168, 0.0]),
            &cfg,
        )
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 105f64.to_radians()] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(
                s.trim_start_matches('-').split('e').next().unwrap().len(),
                18
            );
        }
    }

    #[test]
    fn trajectory_header_and_degrees() {
        let g = short_walk();
        let csv = trajectory_csv(&g.trajectory);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
        let first: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(first.len(), 15);
        assert!(
            (first[3] - 105.0).abs() < 1.0,
            "torso angle in degrees: {}",
            first[3]
        );
    }

    #[test]
    fn step_times_rows_match_summary() {
        let g = short_walk();
        let csv = step_times_csv(&g);
        assert_eq!(csv.lines().count(), 1 + g.step_times.len());
        let t: f64 = csv
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(t, g.step_times[0]);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
