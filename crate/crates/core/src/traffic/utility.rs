use serde::{Deserialize, Serialize};

use super::trajectory::TrajectorySample;
use super::TrafficError;

/// Cost weights and constants of the driving utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityParams {
    pub w_acc_lat: f64,
    pub w_acc_long: f64,
    pub w_jerk_lat: f64,
    pub w_jerk_long: f64,
    pub w_progress: f64,
    pub w_reference: f64,
    pub w_safety: f64,
    /// Safety distance `d` between circle centers (m).
    pub safe_distance: f64,
    /// Speeds below this are penalized (m/s).
    pub v_slow: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        UtilityParams {
            w_acc_lat: 0.5,
            w_acc_long: 1.0,
            w_jerk_lat: 0.5,
            w_jerk_long: 1.0,
            w_progress: 20.0,
            w_reference: 10.0,
            w_safety: 2000.0,
            safe_distance: 4.0,
            v_slow: 5.0,
        }
    }
}

impl UtilityParams {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let w = [
            self.w_acc_lat,
            self.w_acc_long,
            self.w_jerk_lat,
            self.w_jerk_long,
            self.w_progress,
            self.w_reference,
            self.w_safety,
            self.v_slow,
        ];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(TrafficError::Config("utility weights must be nonnegative".into()));
        }
        if !(self.safe_distance > 0.0) {
            return Err(TrafficError::Config("safe distance must be positive".into()));
        }
        Ok(())
    }
}

/// Rectangular body approximated by two circles on the longitudinal axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleGeometry {
    pub length: f64,
    pub width: f64,
    /// Distance of each circle center from the body center (m).
    pub circle_offset: f64,
    pub circle_radius: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        VehicleGeometry {
            length: 4.6,
            width: 1.8,
            circle_offset: 1.15,
            circle_radius: 1.15,
        }
    }
}

impl VehicleGeometry {
    /// Front and rear circle centers at a pose.
    pub fn circles(&self, x: f64, y: f64, heading: f64) -> [[f64; 2]; 2] {
        let (c, s) = (heading.cos(), heading.sin());
        let o = self.circle_offset;
        [[x + o * c, y + o * s], [x - o * c, y - o * s]]
    }

    /// Circle-center distance below which two bodies are in collision.
    pub fn collision_distance(&self) -> f64 {
        2.0 * self.circle_radius
    }
}

/// `Σ_h ω_{a,lat} a_lat² + ω_{j,lat} j_lat² + ω_{a,long} a_long² + ω_{j,long} j_long²`.
pub fn comfort_cost(samples: &[TrajectorySample], p: &UtilityParams) -> f64 {
    samples
        .iter()
        .map(|s| {
            p.w_acc_lat * s.a_lat * s.a_lat
                + p.w_jerk_lat * s.j_lat * s.j_lat
                + p.w_acc_long * s.a_long * s.a_long
                + p.w_jerk_long * s.j_long * s.j_long
        })
        .sum()
}

/// `ω_p Σ_h min(v_long − v_slow, 0)²`.
pub fn progress_cost(samples: &[TrajectorySample], p: &UtilityParams) -> f64 {
    p.w_progress
        * samples
            .iter()
            .map(|s| (s.v_long - p.v_slow).min(0.0).powi(2))
            .sum::<f64>()
}

/// `ω_ref Σ_h l²`.
pub fn reference_cost(samples: &[TrajectorySample], p: &UtilityParams) -> f64 {
    p.w_reference * samples.iter().map(|s| s.l * s.l).sum::<f64>()
}

/// Sum of the three costs that depend on one vehicle alone.
pub fn own_cost(samples: &[TrajectorySample], p: &UtilityParams) -> f64 {
    comfort_cost(samples, p) + progress_cost(samples, p) + reference_cost(samples, p)
}

/// `min(D − d, 0)²` summed over the four circle pairs of two bodies.
#[inline]
pub fn circle_pair_penalty(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2], d: f64) -> f64 {
    let d2 = d * d;
    let mut total = 0.0;
    for ca in a {
        for cb in b {
            let dist2 = (ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2);
            if dist2 < d2 {
                let gap = dist2.sqrt() - d;
                total += gap * gap;
            }
        }
    }
    total
}

/// `ω_s Σ_h Σ_{j≠i} Σ_{β,γ} min(D(x_{i,β} − x_{j,γ}) − d, 0)²` for vehicle
/// `me` against every trajectory in `others`, all sampled on the same grid.
pub fn safety_cost(
    me: &[TrajectorySample],
    others: &[&[TrajectorySample]],
    geometry: &VehicleGeometry,
    p: &UtilityParams,
) -> Result<f64, TrafficError> {
    let mut total = 0.0;
    for other in others {
        if other.len() != me.len() {
            return Err(TrafficError::Config(format!(
                "trajectories sampled at {} and {} points",
                me.len(),
                other.len()
            )));
        }
        for (a, b) in me.iter().zip(other.iter()) {
            let ca = geometry.circles(a.x, a.y, a.heading);
            let cb = geometry.circles(b.x, b.y, b.heading);
            total += circle_pair_penalty(&ca, &cb, p.safe_distance);
        }
    }
    Ok(p.w_safety * total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: f64, a_long: f64, l: f64) -> TrajectorySample {
        TrajectorySample {
            t: 0.0,
            s: 0.0,
            l,
            v_long: v,
            v_lat: 0.0,
            a_long,
            a_lat: 0.0,
            j_long: 0.0,
            j_lat: 0.0,
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        }
    }

    #[test]
    fn component_arithmetic() {
        let p = UtilityParams::default();
        let mut xs = vec![sample(7.0, 0.0, 0.0); 5];
        assert_eq!(comfort_cost(&xs, &p), 0.0);
        for s in xs.iter_mut().take(3) {
            s.a_long = 1.0;
        }
        assert_eq!(comfort_cost(&xs, &p), 3.0);
        let slow = vec![sample(5.0, 0.0, 0.0), sample(4.0, 0.0, 0.0)];
        assert_eq!(progress_cost(&slow, &p), 20.0);
        let off = vec![sample(7.0, 0.0, 1.0), sample(7.0, 0.0, 1.0), sample(7.0, 0.0, 0.0)];
        assert_eq!(reference_cost(&off, &p), 20.0);
    }

    #[test]
    fn safety_examples() {
        let p = UtilityParams::default();
        let g = VehicleGeometry::default();
        // Single circle pair at 3 m: circles stacked along a heading of 90° so
        // only the aligned pair is close.
        let a = [[0.0, 0.0], [0.0, -100.0]];
        let b = [[3.0, 0.0], [3.0, 100.0]];
        assert_eq!(p.w_safety * circle_pair_penalty(&a, &b, p.safe_distance), 2000.0);
        let mut me = sample(7.0, 0.0, 0.0);
        let mut other = sample(7.0, 0.0, 0.0);
        me.y = 0.0;
        other.y = 20.0;
        assert_eq!(safety_cost(&[me], &[&[other]], &g, &p).unwrap(), 0.0);
        assert!(safety_cost(&[me, me], &[&[other]], &g, &p).is_err());
    }
}
