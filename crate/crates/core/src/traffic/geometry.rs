use serde::{Deserialize, Serialize};

use super::TrafficError;

/// Point spacing used when sampling pieces into a polyline.
const SPACING: f64 = 0.25;

/// One building block of a reference line, laid out from the end pose of the
/// previous piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Piece {
    Straight { length: f64 },
    /// Circular arc; positive `angle` (degrees) turns left.
    Arc { radius: f64, angle: f64 },
    /// Smooth lane shift of `offset` metres to the left over `length` metres,
    /// following a quintic with zero slope and curvature at both ends.
    Shift { length: f64, offset: f64 },
}

/// Polyline with arc-length parameterization and a Frenet frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub name: String,
    points: Vec<[f64; 2]>,
    stations: Vec<f64>,
    headings: Vec<f64>,
}

fn shift_profile(u: f64) -> (f64, f64) {
    let y = 10.0 * u.powi(3) - 15.0 * u.powi(4) + 6.0 * u.powi(5);
    let dy = 30.0 * u.powi(2) - 60.0 * u.powi(3) + 30.0 * u.powi(4);
    (y, dy)
}

impl ReferenceLine {
    pub fn from_points(name: &str, points: Vec<[f64; 2]>) -> Result<Self, TrafficError> {
        if points.len() < 2 {
            return Err(TrafficError::Geometry(format!("reference line {name} needs two points")));
        }
        let mut stations = vec![0.0];
        for w in points.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            if d <= 1e-9 {
                return Err(TrafficError::Geometry(format!(
                    "reference line {name} has repeated points"
                )));
            }
            stations.push(stations.last().unwrap() + d);
        }
        let seg_heading: Vec<f64> = points
            .windows(2)
            .map(|w| (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]))
            .collect();
        let mut headings = Vec::with_capacity(points.len());
        headings.push(seg_heading[0]);
        for i in 1..points.len() - 1 {
            headings.push(mean_angle(seg_heading[i - 1], seg_heading[i]));
        }
        headings.push(*seg_heading.last().unwrap());
        Ok(ReferenceLine {
            name: name.to_string(),
            points,
            stations,
            headings,
        })
    }

    /// Lays out `pieces` from `start` with initial `heading` (degrees).
    pub fn from_pieces(name: &str, start: [f64; 2], heading: f64, pieces: &[Piece]) -> Result<Self, TrafficError> {
        let mut pts = vec![start];
        let mut pos = start;
        let mut th = heading.to_radians();
        for piece in pieces {
            match *piece {
                Piece::Straight { length } => {
                    let n = (length / SPACING).ceil().max(1.0) as usize;
                    for k in 1..=n {
                        let d = length * k as f64 / n as f64;
                        pts.push([pos[0] + d * th.cos(), pos[1] + d * th.sin()]);
                    }
                    pos = *pts.last().unwrap();
                }
                Piece::Arc { radius, angle } => {
                    if radius <= 0.0 {
                        return Err(TrafficError::Geometry(format!("arc radius {radius} in {name}")));
                    }
                    let sweep = angle.to_radians();
                    let sign = sweep.signum();
                    let center = [
                        pos[0] - sign * radius * th.sin(),
                        pos[1] + sign * radius * th.cos(),
                    ];
                    let n = ((radius * sweep.abs()) / SPACING).ceil().max(1.0) as usize;
                    let a0 = th - sign * std::f64::consts::FRAC_PI_2;
                    for k in 1..=n {
                        let a = a0 + sweep * k as f64 / n as f64;
                        pts.push([center[0] + radius * a.cos(), center[1] + radius * a.sin()]);
                    }
                    pos = *pts.last().unwrap();
                    th += sweep;
                }
                Piece::Shift { length, offset } => {
                    let n = (length / SPACING).ceil().max(1.0) as usize;
                    let (c, s) = (th.cos(), th.sin());
                    for k in 1..=n {
                        let x = length * k as f64 / n as f64;
                        let (y, _) = shift_profile(x / length);
                        let y = y * offset;
                        pts.push([pos[0] + x * c - y * s, pos[1] + x * s + y * c]);
                    }
                    pos = *pts.last().unwrap();
                }
            }
        }
        Self::from_points(name, pts)
    }

    pub fn length(&self) -> f64 {
        *self.stations.last().unwrap()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    fn locate(&self, s: f64) -> usize {
        match self.stations.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        }
    }

    /// World pose `(x, y, heading)` of station `s` offset `l` to the left.
    /// Stations outside the line extrapolate along its end tangents.
    pub fn to_world(&self, s: f64, l: f64) -> (f64, f64, f64) {
        let i = self.locate(s);
        let (s0, s1) = (self.stations[i], self.stations[i + 1]);
        let u = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        let (p0, p1) = (self.points[i], self.points[i + 1]);
        let mut x = p0[0] + u * (p1[0] - p0[0]);
        let mut y = p0[1] + u * (p1[1] - p0[1]);
        let heading = if s < 0.0 {
            self.headings[0]
        } else if s > self.length() {
            *self.headings.last().unwrap()
        } else {
            lerp_angle(self.headings[i], self.headings[i + 1], u)
        };
        let beyond = if s < 0.0 {
            s
        } else if s > self.length() {
            s - self.length()
        } else {
            0.0
        };
        x += beyond * heading.cos() - l * heading.sin();
        y += beyond * heading.sin() + l * heading.cos();
        (x, y, heading)
    }

    /// Frenet coordinates `(s, l)` of the closest point on the line.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let last = self.points.len() - 2;
        for i in 0..=last {
            let (p0, p1) = (self.points[i], self.points[i + 1]);
            let (dx, dy) = (p1[0] - p0[0], p1[1] - p0[1]);
            let len2 = dx * dx + dy * dy;
            let mut u = ((x - p0[0]) * dx + (y - p0[1]) * dy) / len2;
            if i > 0 {
                u = u.max(0.0);
            }
            if i < last {
                u = u.min(1.0);
            }
            let (cx, cy) = (p0[0] + u * dx, p0[1] + u * dy);
            let d2 = (x - cx).powi(2) + (y - cy).powi(2);
            if d2 < best.0 {
                let len = len2.sqrt();
                let side = (dx * (y - p0[1]) - dy * (x - p0[0])) / len;
                best = (d2, self.stations[i] + u * len, side);
            }
        }
        (best.1, best.2)
    }
}

fn wrap(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut a = a % tau;
    if a > std::f64::consts::PI {
        a -= tau;
    } else if a < -std::f64::consts::PI {
        a += tau;
    }
    a
}

fn mean_angle(a: f64, b: f64) -> f64 {
    a + 0.5 * wrap(b - a)
}

fn lerp_angle(a: f64, b: f64, u: f64) -> f64 {
    a + u * wrap(b - a)
}
