//! Protective separation distance for speed and separation monitoring.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsmParams {
    /// Human speed towards the robot (m/s).
    pub v_h: f64,
    /// Robot speed towards the human (m/s).
    pub v_r: f64,
    /// Controller reaction time (s).
    pub t_r: f64,
    /// Robot stopping time (s).
    pub t_s: f64,
    /// Intrusion distance (m).
    pub c: f64,
    /// Human sensing uncertainty (m).
    pub z_d: f64,
    /// Robot pose uncertainty (m).
    pub z_r: f64,
}

impl Default for SsmParams {
    fn default() -> Self {
        Self { v_h: 0.8, v_r: 0.3, t_r: 0.08, t_s: 0.15, c: 0.08, z_d: 0.02, z_r: 0.02 }
    }
}

/// S_h + S_r + S_s + C + Z_d + Z_r, with the stopping distance taken as half of v_r·T_s.
pub fn ssm_protective_distance(p: &SsmParams) -> f64 {
    let s_h = p.v_h * (p.t_r + p.t_s);
    let s_r = p.v_r * p.t_r;
    let s_s = 0.5 * p.v_r * p.t_s;
    s_h + s_r + s_s + p.c + p.z_d + p.z_r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inputs() {
        assert!((ssm_protective_distance(&SsmParams::default()) - 0.3505).abs() < 1e-12);
    }

    #[test]
    fn zeros_and_linearity() {
        let z = SsmParams { v_h: 0.0, v_r: 0.0, t_r: 0.0, t_s: 0.0, c: 0.0, z_d: 0.0, z_r: 0.0 };
        assert_eq!(ssm_protective_distance(&z), 0.0);
        let p = SsmParams::default();
        let q = SsmParams { c: 2.0 * p.c, ..p };
        assert!((ssm_protective_distance(&q) - ssm_protective_distance(&p) - 0.08).abs() < 1e-12);
    }
}
