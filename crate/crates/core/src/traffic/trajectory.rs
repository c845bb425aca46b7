use serde::{Deserialize, Serialize};

use super::geometry::ReferenceLine;
use super::TrafficError;

/// Vehicle state in the Frenet frame of a reference line, with its world pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub s: f64,
    pub l: f64,
    pub v_long: f64,
    pub v_lat: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl VehicleState {
    /// State at rest laterally on `line` at station `s`.
    pub fn on_line(line: &ReferenceLine, s: f64, l: f64, v_long: f64) -> Self {
        let (x, y, heading) = line.to_world(s, l);
        VehicleState {
            s,
            l,
            v_long,
            v_lat: 0.0,
            x,
            y,
            heading,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// Time since the start of the segment.
    pub t: f64,
    pub s: f64,
    pub l: f64,
    pub v_long: f64,
    pub v_lat: f64,
    pub a_long: f64,
    pub a_lat: f64,
    pub j_long: f64,
    pub j_lat: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl TrajectorySample {
    pub fn state(&self) -> VehicleState {
        VehicleState {
            s: self.s,
            l: self.l,
            v_long: self.v_long,
            v_lat: self.v_lat,
            x: self.x,
            y: self.y,
            heading: self.heading,
        }
    }
}

/// Longitudinal and lateral target of one action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionTarget {
    pub velocity: f64,
    pub offset: f64,
}

/// Intention of one type: which line to follow and which targets it may pick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentionSpec {
    pub name: String,
    pub reference: String,
    pub velocities: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl IntentionSpec {
    pub fn new(name: &str, reference: &str, velocities: Vec<f64>, offsets: Vec<f64>) -> Result<Self, TrafficError> {
        if velocities.is_empty() || offsets.is_empty() {
            return Err(TrafficError::Config(format!("intention {name} has an empty action list")));
        }
        if let Some(v) = velocities.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(TrafficError::Config(format!(
                "intention {name} has terminal velocity {v}; velocities must be nonnegative"
            )));
        }
        Ok(IntentionSpec {
            name: name.to_string(),
            reference: reference.to_string(),
            velocities,
            offsets,
        })
    }

    /// Action targets in action-index order: velocity major, offset minor.
    pub fn targets(&self) -> Vec<ActionTarget> {
        self.velocities
            .iter()
            .flat_map(|&velocity| self.offsets.iter().map(move |&offset| ActionTarget { velocity, offset }))
            .collect()
    }
}

/// Sampled motion over one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub target: ActionTarget,
    pub duration: f64,
    pub samples: Vec<TrajectorySample>,
}

impl TrajectorySegment {
    pub fn start(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn end(&self) -> &TrajectorySample {
        self.samples.last().expect("segments have at least two samples")
    }

    /// Sample at time `t`, which must lie on the sampling grid.
    pub fn at(&self, t: f64, dt: f64) -> &TrajectorySample {
        let k = (t / dt).round() as usize;
        &self.samples[k.min(self.samples.len() - 1)]
    }
}

/// Number of samples of a stage of `duration` at spacing `dt`, endpoints included.
pub fn sample_count(duration: f64, dt: f64) -> Result<usize, TrafficError> {
    let k = duration / dt;
    if !(k.is_finite() && k >= 1.0) || (k - k.round()).abs() > 1e-6 {
        return Err(TrafficError::Config(format!(
            "stage duration {duration} is not a positive multiple of dt {dt}"
        )));
    }
    Ok(k.round() as usize + 1)
}

/// Polynomial segment from `start` to `target` over `duration`.
///
/// Longitudinally the velocity is the cubic from `(v0, a = 0)` to `(vf, a = 0)`;
/// laterally the offset is the quintic from `(l0, 0, 0)` to `(lf, 0, 0)`.
pub fn generate_segment(
    line: &ReferenceLine,
    start: &VehicleState,
    target: ActionTarget,
    duration: f64,
    dt: f64,
) -> Result<TrajectorySegment, TrafficError> {
    let n = sample_count(duration, dt)?;
    let big_t = duration;
    let dv = target.velocity - start.v_long;
    let c2 = 3.0 * dv / (big_t * big_t);
    let c3 = -2.0 * dv / (big_t * big_t * big_t);
    let dl = target.offset - start.l;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let tau = if k + 1 == n { big_t } else { k as f64 * dt };
        let s = start.s + start.v_long * tau + c2 * tau.powi(3) / 3.0 + c3 * tau.powi(4) / 4.0;
        let v_long = start.v_long + c2 * tau * tau + c3 * tau.powi(3);
        let a_long = 2.0 * c2 * tau + 3.0 * c3 * tau * tau;
        let j_long = 2.0 * c2 + 6.0 * c3 * tau;
        let u = tau / big_t;
        let l = start.l + dl * (10.0 * u.powi(3) - 15.0 * u.powi(4) + 6.0 * u.powi(5));
        let v_lat = dl * (30.0 * u.powi(2) - 60.0 * u.powi(3) + 30.0 * u.powi(4)) / big_t;
        let a_lat = dl * (60.0 * u - 180.0 * u.powi(2) + 120.0 * u.powi(3)) / big_t.powi(2);
        let j_lat = dl * (60.0 - 360.0 * u + 360.0 * u.powi(2)) / big_t.powi(3);
        let (x, y, th) = line.to_world(s, l);
        let heading = th + v_lat.atan2(v_long.max(1e-3));
        samples.push(TrajectorySample {
            t: tau,
            s,
            l,
            v_long,
            v_lat,
            a_long,
            a_lat,
            j_long,
            j_lat,
            x,
            y,
            heading,
        });
    }
    Ok(TrajectorySegment {
        target,
        duration,
        samples,
    })
}

/// Two-stage tree: `first[a]` is the stage-1 segment of action `a`, and
/// `second[a][b]` the stage-2 segment of action `b` after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTree {
    pub reference: Vec<String>,
    pub first: Vec<TrajectorySegment>,
    pub second: Vec<Vec<TrajectorySegment>>,
}

impl TrajectoryTree {
    pub fn num_leaves(&self) -> usize {
        self.second.iter().map(Vec::len).sum()
    }

    /// Concatenates trees; stage-2 branches stay attached to their own parents.
    pub fn concat(trees: Vec<TrajectoryTree>) -> TrajectoryTree {
        let mut out = TrajectoryTree {
            reference: Vec::new(),
            first: Vec::new(),
            second: Vec::new(),
        };
        for t in trees {
            out.reference.extend(t.reference);
            out.first.extend(t.first);
            out.second.extend(t.second);
        }
        out
    }
}

/// Builds the two-stage tree of `intent` from `state`. The state is
/// re-expressed on the intention's reference line, so a vehicle can be
/// evaluated under intentions following different lines.
pub fn build_trajectory_tree(
    state: &VehicleState,
    line: &ReferenceLine,
    intent: &IntentionSpec,
    stage_durations: &[f64],
    dt: f64,
) -> Result<TrajectoryTree, TrafficError> {
    build_tree_for_targets(state, line, &intent.targets(), stage_durations, dt)
}

/// States farther than this from a reference line are rejected as
/// misconfigured. Closer but still distant states are allowed: a vehicle that
/// has left a route behind still gets a tree under that route's intention,
/// which steers back from where it actually is and is quickly ruled out by the
/// belief update.
pub const MAX_LINE_OFFSET: f64 = 100.0;

/// Two-stage tree over an explicit target list, used in both stages.
pub fn build_tree_for_targets(
    state: &VehicleState,
    line: &ReferenceLine,
    targets: &[ActionTarget],
    stage_durations: &[f64],
    dt: f64,
) -> Result<TrajectoryTree, TrafficError> {
    if targets.is_empty() {
        return Err(TrafficError::Config("trajectory tree without targets".into()));
    }
    if stage_durations.len() != 2 {
        return Err(TrafficError::Config(format!(
            "trajectory trees have two stages, got {} durations",
            stage_durations.len()
        )));
    }
    let (s, l) = line.project(state.x, state.y);
    if !(s.is_finite() && l.is_finite()) || l.abs() > MAX_LINE_OFFSET {
        return Err(TrafficError::Geometry(format!(
            "state ({:.2}, {:.2}) is {l:.2} m off reference line {}",
            state.x, state.y, line.name
        )));
    }
    let start = VehicleState {
        s,
        l,
        v_long: state.v_long,
        v_lat: 0.0,
        x: state.x,
        y: state.y,
        heading: state.heading,
    };
    let mut first = Vec::with_capacity(targets.len());
    let mut second = Vec::with_capacity(targets.len());
    for &a in targets {
        let seg = generate_segment(line, &start, a, stage_durations[0], dt)?;
        let mid = seg.end().state();
        let children = targets
            .iter()
            .map(|&b| generate_segment(line, &mid, b, stage_durations[1], dt))
            .collect::<Result<Vec<_>, _>>()?;
        first.push(seg);
        second.push(children);
    }
    Ok(TrajectoryTree {
        reference: vec![line.name.clone(); targets.len()],
        first,
        second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::geometry::Piece;

    fn line() -> ReferenceLine {
        ReferenceLine::from_pieces("main", [0.0, 0.0], 0.0, &[Piece::Straight { length: 200.0 }]).unwrap()
    }

    #[test]
    fn constant_velocity_segment() {
        let r = line();
        let st = VehicleState::on_line(&r, 10.0, 0.0, 7.0);
        let seg = generate_segment(&r, &st, ActionTarget { velocity: 7.0, offset: 0.0 }, 1.0, 0.1).unwrap();
        assert_eq!(seg.samples.len(), 11);
        for smp in &seg.samples {
            assert_eq!(smp.a_long, 0.0);
            assert_eq!(smp.j_long, 0.0);
            assert_eq!(smp.a_lat, 0.0);
            assert_eq!(smp.l, 0.0);
        }
        assert!((seg.end().s - 17.0).abs() < 1e-12);
    }

    #[test]
    fn endpoints_and_continuity() {
        let r = line();
        let st = VehicleState::on_line(&r, 0.0, 0.0, 7.0);
        let intent = IntentionSpec::new("a", "main", vec![7.0, 8.0, 10.0, 12.0], vec![-1.0, 0.0, 0.5]).unwrap();
        let tree = build_trajectory_tree(&st, &r, &intent, &[1.0, 2.0], 0.1).unwrap();
        assert_eq!(tree.first.len(), 12);
        assert_eq!(tree.num_leaves(), 144);
        for (a, seg) in tree.first.iter().enumerate() {
            assert!((seg.end().v_long - seg.target.velocity).abs() < 1e-6);
            assert!((seg.end().l - seg.target.offset).abs() < 1e-9);
            assert!(seg.end().a_long.abs() < 1e-9);
            for child in &tree.second[a] {
                assert_eq!(child.samples.len(), 21);
                let (p, c) = (seg.end(), child.start());
                assert!((p.s - c.s).abs() < 1e-9 && (p.v_long - c.v_long).abs() < 1e-9);
                assert!((p.l - c.l).abs() < 1e-9 && (p.v_lat - c.v_lat).abs() < 1e-9);
                assert!((child.end().v_long - child.target.velocity).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn case_one_tree_shape() {
        let r = line();
        let st = VehicleState::on_line(&r, 10.0, 0.0, 7.0);
        let intent = IntentionSpec::new("aggr", "main", vec![7.0, 8.0, 10.0, 12.0], vec![0.0]).unwrap();
        let tree = build_trajectory_tree(&st, &r, &intent, &[1.0, 1.0], 0.1).unwrap();
        assert_eq!(tree.first.len(), 4);
        assert_eq!(tree.num_leaves(), 16);
    }

    #[test]
    fn braking_profile_is_monotone() {
        let r = line();
        let st = VehicleState::on_line(&r, 0.0, 0.0, 7.0);
        let seg = generate_segment(&r, &st, ActionTarget { velocity: 0.0, offset: 0.0 }, 1.0, 0.1).unwrap();
        for w in seg.samples.windows(2) {
            assert!(w[1].v_long <= w[0].v_long + 1e-12);
            assert!(w[1].v_long >= -1e-12);
        }
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(IntentionSpec::new("x", "main", vec![-1.0], vec![0.0]).is_err());
        assert!(IntentionSpec::new("x", "main", vec![], vec![0.0]).is_err());
        assert!(sample_count(1.0, 0.3).is_err());
        assert_eq!(sample_count(2.0, 0.1).unwrap(), 21);
    }
}
