//! Run artifacts: the manifest that records what a run did, plus CSV and JSON
//! writers for every diagnostic table. All floats are written in shortest
//! round-trip form so identical runs produce byte-identical files.

use crate::config::Config;
use crate::evolution::DecompositionState;
use crate::profile::WaveProfile;
use crate::spectral::{ResolventSample, Side, SpectralCurve, SpectrumCandidate};
use crate::verify::CheckReport;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

/// Writes through a sibling temp file and renames, so readers never observe
/// a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// 64-bit FNV-1a, hand-rolled so hashes are stable across builds and runs.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// What a run did: inputs by hash, outputs by name, checks by outcome.
/// Timings are wall-clock and are the only fields expected to differ between
/// reruns with the same config and seed.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub schema: u32,
    pub tool_version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config_hash: String,
    pub config_snapshot: String,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub timings_ms: BTreeMap<String, u128>,
    pub checks: Vec<CheckLine>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &Config, seed: u64) -> Self {
        let snapshot = config.serialize();
        RunManifest {
            schema: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            seed,
            config_hash: content_hash(snapshot.as_bytes()),
            config_snapshot: snapshot,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
            checks: Vec::new(),
        }
    }

    pub fn record_input(&mut self, name: &str, bytes: &[u8]) {
        self.input_hashes.insert(name.to_string(), content_hash(bytes));
    }

    pub fn record_output(&mut self, path: &Path) {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.push(name);
    }

    pub fn record_timing(&mut self, name: &str, millis: u128) {
        self.timings_ms.insert(name.to_string(), millis);
    }

    pub fn record_check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(CheckLine { name: name.to_string(), pass, detail });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Serializes and atomically writes `manifest.json` into the directory,
    /// recording itself in the output list first.
    pub fn write(&mut self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        if !self.outputs.iter().any(|o| o == "manifest.json") {
            self.record_output(&path);
        }
        self.outputs.sort();
        let body = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        write_atomic(&path, body.as_bytes())?;
        Ok(path)
    }
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Plus => "plus",
        Side::Minus => "minus",
    }
}

pub fn write_dispersion_csv(path: &Path, curves: &[SpectralCurve]) -> io::Result<()> {
    let mut out = String::from("nu, re_s, im_s, branch, side\n");
    for curve in curves {
        for (nu, s) in &curve.samples {
            out.push_str(&format!(
                "{:?}, {:?}, {:?}, {}, {}\n",
                nu,
                s.re,
                s.im,
                curve.branch_id,
                side_name(curve.side)
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_resolvent_csv(path: &Path, samples: &[ResolventSample]) -> io::Result<()> {
    let mut out = String::from("re_s, im_s, norm_v, norm_Pkr, norm_r_strong\n");
    for s in samples {
        out.push_str(&format!(
            "{:?}, {:?}, {:?}, {:?}, {:?}\n",
            s.s.re, s.s.im, s.norm_v, s.norm_pkr, s.norm_r_strong
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_series_csv(path: &Path, states: &[DecompositionState]) -> io::Result<()> {
    let mut out = String::from("t, tau, norm_H1k, norm_L2k, valid\n");
    for state in states {
        let h1k = state.norms.first().map(|n| n.1).unwrap_or(f64::NAN);
        let l2k = state.norms.get(1).map(|n| n.1).unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{:?}, {:?}, {:?}, {:?}, {}\n",
            state.t,
            state.tau,
            h1k,
            l2k,
            u8::from(state.valid)
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_norm_csv(path: &Path, series: &[(f64, f64)]) -> io::Result<()> {
    let mut out = String::from("t, norm_H1k\n");
    for (t, norm) in series {
        out.push_str(&format!("{t:?}, {norm:?}\n"));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_candidates_csv(path: &Path, candidates: &[SpectrumCandidate]) -> io::Result<()> {
    let mut out = String::from("re_s, im_s, residual, dispersion_distance, artifact\n");
    for c in candidates {
        out.push_str(&format!(
            "{:?}, {:?}, {:?}, {:?}, {}\n",
            c.s.re,
            c.s.im,
            c.residual,
            c.dispersion_distance,
            u8::from(c.artifact)
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_profile_json(path: &Path, profile: &WaveProfile) -> io::Result<()> {
    let body = serde_json::json!({
        "c": profile.c,
        "omega": profile.omega,
        "v_inf": profile.v_inf,
        "residual_norm": profile.residual_norm,
        "tail_rates": { "left": profile.tail_rates.left, "right": profile.tail_rates.right },
        "grid": { "half_width": profile.grid.half_width, "n": profile.grid.n },
    });
    let text = serde_json::to_string_pretty(&body).map_err(io::Error::other)?;
    write_atomic(path, text.as_bytes())
}

pub fn write_reports_json(path: &Path, reports: &[CheckReport]) -> io::Result<()> {
    let text = serde_json::to_string_pretty(reports).map_err(io::Error::other)?;
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn tempdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("tofwave-report-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn manifest_round_trips_and_tracks_outputs() {
        let dir = tempdir("manifest");
        let config = Config::default();
        let mut manifest = RunManifest::new("rest-state", &config, 42);
        manifest.record_input("config", b"sample");
        manifest.record_check("oracle", true, "matched".into());
        manifest.record_timing("total", 12);
        let path = manifest.write(&dir).unwrap();
        assert!(manifest.all_passed());
        let text = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["schema"], 1);
        assert_eq!(value["subcommand"], "rest-state");
        assert_eq!(value["seed"], 42);
        assert_eq!(value["outputs"][0], "manifest.json");
        assert_eq!(value["checks"][0]["pass"], true);
        assert!(!dir.join("manifest.tmp").exists());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn manifest_is_reproducible_except_timings() {
        let config = Config::default();
        let mut a = RunManifest::new("evolve", &config, 7);
        let mut b = RunManifest::new("evolve", &config, 7);
        a.record_timing("total", 100);
        b.record_timing("total", 999);
        a.timings_ms.clear();
        b.timings_ms.clear();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn content_hash_is_stable() {
        assert_eq!(content_hash(b""), "cbf29ce484222325");
        assert_eq!(content_hash(b"tofwave"), content_hash(b"tofwave"));
        assert_ne!(content_hash(b"tofwave"), content_hash(b"tofwavf"));
    }

    #[test]
    fn csv_writers_emit_contracted_headers() {
        let dir = tempdir("csv");
        let curves = vec![SpectralCurve {
            branch_id: 0,
            side: Side::Minus,
            samples: vec![(0.0, Complex64::new(-0.6, 2.0))],
        }];
        let p = dir.join("dispersion.csv");
        write_dispersion_csv(&p, &curves).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("nu, re_s, im_s, branch, side\n"));
        assert!(text.contains("-0.6, 2.0, 0, minus"));

        let p = dir.join("series.csv");
        write_series_csv(&p, &[]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "t, tau, norm_H1k, norm_L2k, valid\n");

        let p = dir.join("resolvent.csv");
        write_resolvent_csv(&p, &[]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "re_s, im_s, norm_v, norm_Pkr, norm_r_strong\n");
        std::fs::remove_dir_all(&dir).ok();
    }
}
