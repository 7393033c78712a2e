use std::collections::HashSet;

use crate::kinematics::HandPose;

pub const SPREAD_STEP_DEG: u32 = 20;
pub const SPREAD_VALUES: u32 = 18;
pub const FINGER_MIN_DEG: u32 = 30;
pub const FINGER_STEP_DEG: u32 = 6;
pub const FINGER_VALUES: u32 = 11;

/// Pre-grasp sampling grid: spread 0..340 deg in 20 deg steps (360 is the
/// same as 0), each proximal joint 30..90 deg in 6 deg steps, distal joints
/// coupled to the proximal ones by `coupling_ratio`.
///
/// Ordered with spread outermost, then fingers 1, 2, 3.
pub fn pregrasp_grid(coupling_ratio: f64) -> Vec<HandPose> {
    let finger = |i: u32| f64::from(FINGER_MIN_DEG + i * FINGER_STEP_DEG).to_radians();
    let mut poses = Vec::with_capacity((SPREAD_VALUES * FINGER_VALUES.pow(3)) as usize);
    for s in 0..SPREAD_VALUES {
        let spread = f64::from(s * SPREAD_STEP_DEG).to_radians();
        for a in 0..FINGER_VALUES {
            for b in 0..FINGER_VALUES {
                for c in 0..FINGER_VALUES {
                    poses.push(HandPose::coupled(
                        spread,
                        [finger(a), finger(b), finger(c)],
                        coupling_ratio,
                    ));
                }
            }
        }
    }
    poses
}

/// The pose with fingers 1 and 2 (both driven by the spread joint) swapped.
pub fn swap_spread_fingers(pose: &HandPose) -> HandPose {
    let mut p = *pose;
    p.proximal.swap(0, 1);
    p.distal.swap(0, 1);
    p
}

fn canonical(pose: &HandPose) -> HandPose {
    let swapped = swap_spread_fingers(pose);
    let a = pose.to_vec();
    let b = swapped.to_vec();
    if b.iter().zip(&a).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less) {
        swapped
    } else {
        *pose
    }
}

/// Keeps one canonical (lexicographically smaller) pose per swap class,
/// in order of first appearance.
pub fn dedupe_symmetric(poses: &[HandPose]) -> Vec<HandPose> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for pose in poses {
        let c = canonical(pose);
        let key = c.to_vec().map(f64::to_bits);
        if seen.insert(key) {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::HandGeometry;

    #[test]
    fn grid_size_and_limits() {
        let g = HandGeometry::default();
        let grid = pregrasp_grid(g.distal_coupling_ratio);
        assert_eq!(grid.len(), 18 * 11 * 11 * 11);
        assert_eq!(grid.len(), 23958);
        for p in &grid {
            p.validate(&g.limits).unwrap();
        }
        assert_eq!(grid, pregrasp_grid(g.distal_coupling_ratio));
    }

    #[test]
    fn symmetric_pose_is_a_fixed_point() {
        let p = HandPose::coupled(0.5, [0.6, 0.6, 1.0], 1.0 / 3.0);
        assert_eq!(dedupe_symmetric(&[p]), vec![p]);
    }

    #[test]
    fn swapped_pair_collapses() {
        let a = HandPose::coupled(0.0, [30f64.to_radians(), 36f64.to_radians(), 1.0], 1.0 / 3.0);
        let b = swap_spread_fingers(&a);
        let out = dedupe_symmetric(&[b, a]);
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn dedupe_shrinks_and_is_idempotent() {
        let grid = pregrasp_grid(1.0 / 3.0);
        let once = dedupe_symmetric(&grid);
        assert!(once.len() < grid.len());
        // 11 * 12 / 2 unordered (p1, p2) pairs per spread and p3
        assert_eq!(once.len(), 18 * 66 * 11);
        assert_eq!(dedupe_symmetric(&once), once);
    }
}
