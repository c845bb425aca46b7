use crate::game::{ActionId, GameSpec, PlayerId, TypeId};

use super::trajectory::{TrajectorySample, TrajectoryTree};
use super::utility::{circle_pair_penalty, own_cost, UtilityParams, VehicleGeometry};
use super::TrafficError;

type Circles = [[f64; 2]; 2];

/// Axis-aligned box around a set of circle centers.
#[derive(Clone, Copy, Debug)]
struct Bounds {
    min: [f64; 2],
    max: [f64; 2],
}

impl Bounds {
    fn of(circles: &[Circles]) -> Self {
        let mut b = Bounds {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        };
        for c in circles.iter().flatten() {
            for k in 0..2 {
                b.min[k] = b.min[k].min(c[k]);
                b.max[k] = b.max[k].max(c[k]);
            }
        }
        b
    }

    fn apart(&self, o: &Bounds, d: f64) -> bool {
        self.min[0] - o.max[0] >= d
            || o.min[0] - self.max[0] >= d
            || self.min[1] - o.max[1] >= d
            || o.min[1] - self.max[1] >= d
    }
}

/// Precomputed data of one `(vehicle, type)` tree.
#[derive(Clone, Debug)]
struct TypeData {
    tree: TrajectoryTree,
    /// Own cost of every stage-1 sample, boundary included.
    first_cost: Vec<f64>,
    /// Own cost of stage-2 samples after the shared boundary sample.
    second_cost: Vec<Vec<f64>>,
    first_circles: Vec<Vec<Circles>>,
    second_circles: Vec<Vec<Vec<Circles>>>,
    second_bounds: Vec<Vec<Bounds>>,
    /// Index of this type's first stage-1 action among all of the vehicle's options.
    offset: usize,
}

/// Driving game: every `(vehicle, type)` owns a two-stage trajectory tree, and
/// a leaf's utility is `-(J_c + J_s + J_p + J_ref)` summed over the samples of
/// both stages, the shared stage boundary counted once.
#[derive(Clone, Debug)]
pub struct TrafficGame {
    types: Vec<Vec<TypeData>>,
    max_actions: Vec<usize>,
    params: UtilityParams,
    geometry: VehicleGeometry,
    /// Stage-1 safety penalty (unweighted) for each pair `i < j` and each
    /// pair of stage-1 options.
    first_pairs: Vec<Vec<f64>>,
    options: Vec<usize>,
}

fn circles_of(samples: &[TrajectorySample], g: &VehicleGeometry) -> Vec<Circles> {
    samples.iter().map(|s| g.circles(s.x, s.y, s.heading)).collect()
}

impl TrafficGame {
    /// `trees[vehicle][type]`; all segments must share the same sample grid.
    pub fn new(
        trees: Vec<Vec<TrajectoryTree>>,
        params: UtilityParams,
        geometry: VehicleGeometry,
    ) -> Result<Self, TrafficError> {
        params.validate()?;
        if trees.is_empty() || trees.iter().any(|t| t.is_empty()) {
            return Err(TrafficError::Config("every vehicle needs at least one type".into()));
        }
        let mut grid: Option<(usize, usize)> = None;
        let mut types = Vec::new();
        let mut options = Vec::new();
        let mut max_actions = Vec::new();
        for per_vehicle in trees {
            let mut offset = 0;
            let mut data = Vec::new();
            let mut max_a = 0;
            for tree in per_vehicle {
                if tree.first.is_empty() || tree.second.len() != tree.first.len() || tree.second.iter().any(|c| c.is_empty()) {
                    return Err(TrafficError::Config("trajectory tree with an empty branch".into()));
                }
                for (a, seg) in tree.first.iter().enumerate() {
                    for child in &tree.second[a] {
                        let shape = (seg.samples.len(), child.samples.len());
                        match grid {
                            None => grid = Some(shape),
                            Some(g) if g != shape => {
                                return Err(TrafficError::Config(format!(
                                    "mismatched sample counts across stages: {g:?} vs {shape:?}"
                                )))
                            }
                            _ => {}
                        }
                    }
                }
                max_a = max_a
                    .max(tree.first.len())
                    .max(tree.second.iter().map(Vec::len).max().unwrap_or(0));
                let first_cost = tree.first.iter().map(|s| own_cost(&s.samples, &params)).collect();
                let second_cost = tree
                    .second
                    .iter()
                    .map(|c| c.iter().map(|s| own_cost(&s.samples[1..], &params)).collect())
                    .collect();
                let first_circles = tree.first.iter().map(|s| circles_of(&s.samples, &geometry)).collect();
                let second_circles: Vec<Vec<Vec<Circles>>> = tree
                    .second
                    .iter()
                    .map(|c| c.iter().map(|s| circles_of(&s.samples[1..], &geometry)).collect())
                    .collect();
                let second_bounds = second_circles
                    .iter()
                    .map(|c| c.iter().map(|s| Bounds::of(s)).collect())
                    .collect();
                let n = tree.first.len();
                data.push(TypeData {
                    tree,
                    first_cost,
                    second_cost,
                    first_circles,
                    second_circles,
                    second_bounds,
                    offset,
                });
                offset += n;
            }
            options.push(offset);
            max_actions.push(max_a);
            types.push(data);
        }
        let mut game = TrafficGame {
            types,
            max_actions,
            params,
            geometry,
            first_pairs: Vec::new(),
            options,
        };
        game.first_pairs = game.stage_one_pairs();
        Ok(game)
    }

    fn stage_one_pairs(&self) -> Vec<Vec<f64>> {
        let n = self.types.len();
        let d = self.params.safe_distance;
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let mut table = vec![0.0; self.options[i] * self.options[j]];
                for ti in &self.types[i] {
                    for (ai, ci) in ti.first_circles.iter().enumerate() {
                        for tj in &self.types[j] {
                            for (aj, cj) in tj.first_circles.iter().enumerate() {
                                let pen: f64 = ci.iter().zip(cj).map(|(a, b)| circle_pair_penalty(a, b, d)).sum();
                                table[(ti.offset + ai) * self.options[j] + tj.offset + aj] = pen;
                            }
                        }
                    }
                }
                out.push(table);
            }
        }
        out
    }

    pub fn tree(&self, player: PlayerId, ty: TypeId) -> &TrajectoryTree {
        &self.types[player.0][ty.0].tree
    }

    pub fn params(&self) -> &UtilityParams {
        &self.params
    }

    pub fn geometry(&self) -> &VehicleGeometry {
        &self.geometry
    }

    #[inline]
    fn pair_index(&self, i: usize, j: usize) -> usize {
        let n = self.types.len();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }
}

impl GameSpec for TrafficGame {
    fn num_players(&self) -> usize {
        self.types.len()
    }

    fn num_types(&self, player: PlayerId) -> usize {
        self.types[player.0].len()
    }

    fn num_stages(&self) -> usize {
        2
    }

    fn num_actions(&self, player: PlayerId, ty: TypeId, stage: usize, history: &[ActionId]) -> usize {
        let tree = &self.types[player.0][ty.0].tree;
        match stage {
            0 => tree.first.len(),
            _ => tree.second[history[player.0].0].len(),
        }
    }

    fn max_actions(&self, player: PlayerId) -> usize {
        self.max_actions[player.0]
    }

    fn utility(&self, types: &[TypeId], history: &[ActionId], out: &mut [f64]) {
        let n = self.types.len();
        let d = self.params.safe_distance;
        for i in 0..n {
            let td = &self.types[i][types[i].0];
            let (a1, a2) = (history[i].0, history[n + i].0);
            out[i] = -(td.first_cost[a1] + td.second_cost[a1][a2]);
        }
        for i in 0..n {
            let ti = &self.types[i][types[i].0];
            let (ai1, ai2) = (history[i].0, history[n + i].0);
            for j in i + 1..n {
                let tj = &self.types[j][types[j].0];
                let (aj1, aj2) = (history[j].0, history[n + j].0);
                let mut pen = self.first_pairs[self.pair_index(i, j)]
                    [(ti.offset + ai1) * self.options[j] + tj.offset + aj1];
                if !ti.second_bounds[ai1][ai2].apart(&tj.second_bounds[aj1][aj2], d) {
                    let (ci, cj) = (&ti.second_circles[ai1][ai2], &tj.second_circles[aj1][aj2]);
                    pen += ci.iter().zip(cj).map(|(a, b)| circle_pair_penalty(a, b, d)).sum::<f64>();
                }
                let cost = self.params.w_safety * pen;
                out[i] -= cost;
                out[j] -= cost;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::geometry::{Piece, ReferenceLine};
    use crate::traffic::trajectory::{build_trajectory_tree, IntentionSpec, VehicleState};
    use crate::traffic::utility::safety_cost;
    use crate::traffic::utility::own_cost as own;

    fn lane(y: f64) -> ReferenceLine {
        ReferenceLine::from_pieces("lane", [0.0, y], 0.0, &[Piece::Straight { length: 300.0 }]).unwrap()
    }

    fn tree(line: &ReferenceLine, s: f64, v: Vec<f64>) -> TrajectoryTree {
        let st = VehicleState::on_line(line, s, 0.0, 7.0);
        let intent = IntentionSpec::new("t", "lane", v, vec![0.0]).unwrap();
        build_trajectory_tree(&st, line, &intent, &[1.0, 1.0], 0.1).unwrap()
    }

    #[test]
    fn lone_vehicle_at_constant_speed_has_zero_utility() {
        let l = lane(0.0);
        let g = TrafficGame::new(vec![vec![tree(&l, 0.0, vec![7.0])]], UtilityParams::default(), VehicleGeometry::default()).unwrap();
        let mut out = [1.0];
        g.utility(&[TypeId(0)], &[ActionId(0), ActionId(0)], &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn leaf_utility_matches_direct_sum() {
        let (l0, l1) = (lane(0.0), lane(3.5));
        let trees = vec![
            vec![tree(&l0, 10.0, vec![7.0, 8.0, 10.0, 12.0]), tree(&l0, 10.0, vec![6.0, 4.0, 2.0, 0.0])],
            vec![tree(&l1, 8.0, vec![7.0, 8.0, 10.0, 12.0]), tree(&l1, 8.0, vec![6.0, 4.0, 2.0, 0.0])],
            vec![tree(&l0, 14.0, vec![7.0, 8.0, 10.0, 12.0]), tree(&l0, 14.0, vec![6.0, 4.0, 2.0, 0.0])],
        ];
        let p = UtilityParams::default();
        let geo = VehicleGeometry::default();
        let g = TrafficGame::new(trees.clone(), p.clone(), geo.clone()).unwrap();
        let types = [TypeId(0), TypeId(1), TypeId(0)];
        let hist: Vec<ActionId> = [1, 2, 0, 3, 1, 2].iter().map(|&a| ActionId(a)).collect();
        let mut out = [0.0; 3];
        g.utility(&types, &hist, &mut out);
        let paths: Vec<Vec<TrajectorySample>> = (0..3)
            .map(|i| {
                let t = &trees[i][types[i].0];
                let (a1, a2) = (hist[i].0, hist[3 + i].0);
                let mut v = t.first[a1].samples.clone();
                v.extend_from_slice(&t.second[a1][a2].samples[1..]);
                v
            })
            .collect();
        for i in 0..3 {
            let others: Vec<&[TrajectorySample]> = (0..3).filter(|&j| j != i).map(|j| paths[j].as_slice()).collect();
            let expected = -(own(&paths[i], &p) + safety_cost(&paths[i], &others, &geo, &p).unwrap());
            assert!((out[i] - expected).abs() < 1e-9 * expected.abs().max(1.0), "{i}: {} vs {expected}", out[i]);
            assert!(out[i] <= 0.0);
        }
    }

    #[test]
    fn varying_action_counts() {
        let l = lane(0.0);
        let g = TrafficGame::new(
            vec![vec![tree(&l, 0.0, vec![7.0, 8.0]), tree(&l, 0.0, vec![6.0, 4.0, 2.0])]],
            UtilityParams::default(),
            VehicleGeometry::default(),
        )
        .unwrap();
        assert_eq!(g.max_actions(PlayerId(0)), 3);
        assert_eq!(g.num_actions(PlayerId(0), TypeId(0), 1, &[ActionId(1)]), 2);
    }
}
