use serde::{Deserialize, Serialize};

use crate::auction::ValueProfile;
use crate::error::{GspError, Result};

/// Default number of bid levels per agent.
pub const DEFAULT_POINTS: usize = 64;

/// Finite bid sets, one ascending list per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidGrid {
    points: Vec<Vec<f64>>,
    /// Per-agent bid cap; `Some(v_i)` when no-overbidding is enforced.
    caps: Vec<Option<f64>>,
}

/// `points` evenly spaced levels on `[0, cap]`.
pub fn uniform_levels(cap: f64, points: usize) -> Vec<f64> {
    if points <= 1 || cap == 0.0 {
        return vec![0.0];
    }
    let step = cap / (points - 1) as f64;
    let mut levels: Vec<f64> = (0..points - 1).map(|k| k as f64 * step).collect();
    levels.push(cap);
    levels
}

impl BidGrid {
    /// Validated grid from explicit levels, without caps.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let caps = vec![None; points.len()];
        Self::build(points, caps)
    }

    /// Explicit levels with the no-overbidding cap `v_i` enforced.
    pub fn with_caps(points: Vec<Vec<f64>>, values: &ValueProfile) -> Result<Self> {
        let caps = values.values().iter().map(|&v| Some(v)).collect();
        Self::build(points, caps)
    }

    /// `points` uniform levels on `[0, v_i]` for every agent.
    pub fn uniform_no_overbid(values: &ValueProfile, points: usize) -> Self {
        let levels = values.values().iter().map(|&v| uniform_levels(v, points)).collect();
        let caps = values.values().iter().map(|&v| Some(v)).collect();
        Self { points: levels, caps }
    }

    fn build(points: Vec<Vec<f64>>, caps: Vec<Option<f64>>) -> Result<Self> {
        if caps.len() != points.len() {
            return Err(GspError::Shape {
                what: "grid vs values",
                expected: caps.len(),
                got: points.len(),
            });
        }
        for (agent, (levels, cap)) in points.iter().zip(&caps).enumerate() {
            if levels.is_empty() {
                return Err(GspError::EmptyGrid(agent));
            }
            if levels.iter().any(|b| !b.is_finite() || *b < 0.0) {
                return Err(GspError::InvalidProfile(format!(
                    "grid of agent {agent} has a negative or non-finite level"
                )));
            }
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GspError::InvalidProfile(format!(
                    "grid of agent {agent} must be strictly increasing"
                )));
            }
            if let Some(cap) = cap {
                let top = *levels.last().unwrap();
                if top > *cap {
                    return Err(GspError::Overbid { agent, bid: top, value: *cap });
                }
            }
        }
        Ok(Self { points, caps })
    }

    pub fn agents(&self) -> usize {
        self.points.len()
    }

    pub fn levels(&self, agent: usize) -> &[f64] {
        &self.points[agent]
    }

    pub fn cap(&self, agent: usize) -> Option<f64> {
        self.caps[agent]
    }

    pub fn enforces_no_overbidding(&self) -> bool {
        self.caps.iter().all(Option::is_some)
    }

    /// Number of joint profiles, saturating rather than overflowing.
    pub fn joint_size(&self) -> u128 {
        self.points
            .iter()
            .fold(1u128, |acc, l| acc.saturating_mul(l.len() as u128))
    }
}
