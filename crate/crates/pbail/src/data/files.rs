//! On-disk formats for the preference pipeline: a little-endian binary
//! container for trajectory datasets, JSON for clip windows, and JSON
//! lines for labeled preferences. All round trips are bit-exact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::data::{Clip, OfflineDataset, PreferenceSample, Trajectory};
use crate::envs::Transition;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Cursor;
use crate::Real;

const TRAJ_MAGIC: &[u8; 10] = b"PBAIL-TRAJ";
const TRAJ_VERSION: u32 = 1;

/// Serializes a dataset to the trajectory container format.
pub fn encode_trajectories(ds: &OfflineDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(TRAJ_MAGIC);
    out.extend_from_slice(&TRAJ_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.env.len() as u32).to_le_bytes());
    out.extend_from_slice(ds.env.as_bytes());
    out.extend_from_slice(&(ds.obs_dim as u32).to_le_bytes());
    out.extend_from_slice(&(ds.act_dim as u32).to_le_bytes());
    out.extend_from_slice(&(ds.trajectories.len() as u32).to_le_bytes());
    for traj in &ds.trajectories {
        out.extend_from_slice(&traj.source_policy.to_le_bytes());
        out.extend_from_slice(&traj.index.to_le_bytes());
        out.extend_from_slice(&traj.true_return.to_le_bytes());
        out.extend_from_slice(&(traj.transitions.len() as u32).to_le_bytes());
        for t in &traj.transitions {
            for &x in t.state.iter().chain(&t.action).chain(&t.next_state) {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&t.reward.to_le_bytes());
            out.push(t.done as u8);
        }
    }
    Ok(out)
}

/// Parses the trajectory container format.
pub fn decode_trajectories(bytes: &[u8]) -> Result<OfflineDataset> {
    let mut cur = Cursor::new(bytes);
    if cur.take(TRAJ_MAGIC.len())? != TRAJ_MAGIC {
        return Err(Error::Format("not a trajectory file".into()));
    }
    let version = cur.u32()?;
    if version != TRAJ_VERSION {
        return Err(Error::Format(format!(
            "unsupported trajectory format version {version}"
        )));
    }
    let name_len = cur.u32()? as usize;
    let env = String::from_utf8(cur.take(name_len)?.to_vec())
        .map_err(|_| Error::Format("environment name is not UTF-8".into()))?;
    let obs_dim = cur.u32()? as usize;
    let act_dim = cur.u32()? as usize;
    let n_traj = cur.u32()? as usize;
    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let source_policy = cur.u32()?;
        let index = cur.u64()?;
        let true_return = cur.f64_raw()?;
        if !true_return.is_finite() {
            return Err(Error::Format("non-finite trajectory return".into()));
        }
        let n = cur.u32()? as usize;
        let mut transitions = Vec::with_capacity(n);
        for _ in 0..n {
            let state = cur.f64_vec(obs_dim)?;
            let action = cur.f64_vec(act_dim)?;
            let next_state = cur.f64_vec(obs_dim)?;
            let reward = cur.f64_vec(1)?[0];
            let done = match cur.u8()? {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::Format(format!("done flag has value {other}")));
                }
            };
            transitions.push(Transition {
                state,
                action,
                next_state,
                reward,
                done,
                traj_index: index as usize,
            });
        }
        trajectories.push(Trajectory {
            transitions,
            source_policy,
            true_return,
            index,
        });
    }
    cur.finish()?;
    let ds = OfflineDataset {
        env,
        obs_dim,
        act_dim,
        trajectories,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_trajectories(path: &Path, ds: &OfflineDataset) -> Result<()> {
    fs::write(path, encode_trajectories(ds)?)?;
    Ok(())
}

pub fn load_trajectories(path: &Path) -> Result<OfflineDataset> {
    decode_trajectories(&fs::read(path)?)
}

pub fn save_clips(path: &Path, clips: &[Clip]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, clips)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn load_clips(path: &Path) -> Result<Vec<Clip>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Writes one JSON object per line: `{"a":i,"b":j,"c":label}`.
pub fn save_preferences(path: &Path, prefs: &[PreferenceSample]) -> Result<()> {
    let mut out = String::new();
    for p in prefs {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_preferences(path: &Path) -> Result<Vec<PreferenceSample>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PreferenceSample = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("preference line {}: {e}", k + 1)))?;
        if !(0.0..=1.0).contains(&p.c) || !p.c.is_finite() {
            return Err(Error::Format(format!(
                "preference line {} has label {} outside [0, 1]",
                k + 1,
                p.c
            )));
        }
        out.push(p);
    }
    Ok(out)
}

/// Convenience used by diagnostics: labels as a plain vector.
pub fn preference_labels(prefs: &[PreferenceSample]) -> Vec<Real> {
    prefs.iter().map(|p| p.c).collect()
}
