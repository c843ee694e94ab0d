//! Offline dataset and its on-disk format.
//!
//! A dataset file is one line of JSON metadata terminated by `\n`, followed
//! by `n` rows of little-endian `f64`:
//! `state[state_dim], action[action_dim], reward, next_state[state_dim], terminal`
//! with `terminal` stored as `0.0` or `1.0`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "pbrl-dataset-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// One-hot for discrete action spaces.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub transitions: Vec<Transition>,
    pub env_id: String,
    pub behavior_id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub random_score: f64,
    pub expert_score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    env_id: String,
    behavior_id: String,
    state_dim: usize,
    action_dim: usize,
    n: usize,
    random_score: f64,
    expert_score: f64,
}

impl OfflineDataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn row_width(&self) -> usize {
        2 * self.state_dim + self.action_dim + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if !(self.random_score < self.expert_score) {
            return Err(Error::invalid(format!(
                "reference scores must satisfy random < expert (got {} and {})",
                self.random_score, self.expert_score
            )));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.state.len() != self.state_dim || t.next_state.len() != self.state_dim {
                return Err(Error::Dimension { what: "transition state", expected: self.state_dim, got: t.state.len() });
            }
            if t.action.len() != self.action_dim {
                return Err(Error::Dimension { what: "transition action", expected: self.action_dim, got: t.action.len() });
            }
            if !(0.0..=1.0).contains(&t.reward) {
                return Err(Error::invalid(format!("transition {i}: reward {} outside [0, 1]", t.reward)));
            }
        }
        Ok(())
    }
}

pub fn write_dataset<W: Write>(ds: &OfflineDataset, mut w: W) -> Result<()> {
    let header = Header {
        format: DATASET_FORMAT.to_string(),
        env_id: ds.env_id.clone(),
        behavior_id: ds.behavior_id.clone(),
        state_dim: ds.state_dim,
        action_dim: ds.action_dim,
        n: ds.len(),
        random_score: ds.random_score,
        expert_score: ds.expert_score,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut row = Vec::with_capacity(8 * ds.row_width());
    for t in &ds.transitions {
        row.clear();
        let values = t
            .state
            .iter()
            .chain(&t.action)
            .chain(std::iter::once(&t.reward))
            .chain(&t.next_state)
            .copied()
            .chain(std::iter::once(if t.terminal { 1.0 } else { 0.0 }));
        for v in values {
            row.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(mut r: R) -> Result<OfflineDataset> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Format(format!("unexpected dataset format '{}'", header.format)));
    }
    let (sd, ad) = (header.state_dim, header.action_dim);
    let width = 2 * sd + ad + 2;
    let mut buf = vec![0u8; 8 * width];
    let mut transitions = Vec::with_capacity(header.n);
    for _ in 0..header.n {
        r.read_exact(&mut buf)?;
        let row: Vec<f64> =
            buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let terminal = match row[width - 1] {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => return Err(Error::Format(format!("terminal flag {v} is not 0 or 1"))),
        };
        transitions.push(Transition {
            state: row[..sd].to_vec(),
            action: row[sd..sd + ad].to_vec(),
            reward: row[sd + ad],
            next_state: row[sd + ad + 1..2 * sd + ad + 1].to_vec(),
            terminal,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after {} rows", rest.len(), header.n)));
    }
    let ds = OfflineDataset {
        transitions,
        env_id: header.env_id,
        behavior_id: header.behavior_id,
        state_dim: sd,
        action_dim: ad,
        random_score: header.random_score,
        expert_score: header.expert_score,
    };
    ds.validate()?;
    Ok(ds)
}

/// Human-readable export; not read back.
pub fn write_csv<W: Write>(ds: &OfflineDataset, mut w: W) -> Result<()> {
    let mut cols: Vec<String> = (0..ds.state_dim).map(|i| format!("s{i}")).collect();
    cols.extend((0..ds.action_dim).map(|i| format!("a{i}")));
    cols.push("reward".into());
    cols.extend((0..ds.state_dim).map(|i| format!("ns{i}")));
    cols.push("terminal".into());
    writeln!(w, "{}", cols.join(","))?;
    for t in &ds.transitions {
        let mut fields: Vec<String> = t.state.iter().chain(&t.action).map(|v| v.to_string()).collect();
        fields.push(t.reward.to_string());
        fields.extend(t.next_state.iter().map(|v| v.to_string()));
        fields.push(u8::from(t.terminal).to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
