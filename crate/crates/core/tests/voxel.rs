mod common;

use common::{grid, random_boxes, rng};
use mst_core::camera::CameraModel;
use mst_core::geometry::RigidTransform;
use mst_core::image::{DepthImage, Label};
use mst_core::voxel::{
    apply_transform, first_hit, free_space_refine, iou, mode_filter, project, read_voxel_state, write_voxel_state,
    ModeFilterConfig, VoxelCoord, VoxelSet, VoxelState,
};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::seq::index::sample;

/// Overhead camera 1 m above (0.05, 0.05), image-up along world +y.
fn overhead() -> CameraModel {
    CameraModel::look_at(Point3::new(0.05, 0.05, 1.0), Point3::new(0.05, 0.05, 0.0), Vector3::y(), 20, 20, 200.0)
        .unwrap()
}

/// Pixel and depth of a world point for [`overhead`], by hand: the camera
/// x axis is world +x, its y axis world −y, and depth is `1 − z`.
fn overhead_pixel(p: &Point3<f64>) -> (usize, usize, f64) {
    let z = 1.0 - p.z;
    let u = 200.0 * (p.x - 0.05) / z + 10.0;
    let v = 200.0 * -(p.y - 0.05) / z + 10.0;
    (u.floor() as usize, v.floor() as usize, z)
}

#[test]
fn refine_clears_exactly_the_provably_free_voxels() {
    let spec = grid([10, 10, 10]);
    let cam = overhead();
    let mut x = VoxelState::empty(spec.clone());
    for i in 0..10 {
        for j in 0..10 {
            x.set(VoxelCoord::new(i, j, 5), 1 + (i % 3) as Label);
        }
    }
    assert_eq!(x.occupied_count(), 100);

    // The floor is measured under 20 of the columns and nowhere else.
    let mut depth = DepthImage::empty(cam.width, cam.height);
    for idx in sample(&mut rng(4), 100, 20) {
        let c = spec.center(VoxelCoord::new(idx % 10, idx / 10, 5));
        let (u, v, _) = overhead_pixel(&c);
        depth.depth[v * cam.width + u] = 1.0;
    }

    let mut expect = x.clone();
    for (idx, l) in expect.labels_mut().iter_mut().enumerate() {
        if *l == 0 {
            continue;
        }
        let (u, v, z) = overhead_pixel(&spec.center_of_index(idx));
        let d = depth.depth[v * cam.width + u];
        if d > 0.0 && z < d - spec.resolution {
            *l = 0;
        }
    }

    let r = free_space_refine(&x, &depth, &cam);
    assert_eq!(r.state, expect);
    assert_eq!(r.state.occupied_count(), 80);
    assert!((r.q_r - 0.8).abs() < 1e-15);
}

#[test]
fn quarter_turns_of_bars_about_cell_centers() {
    let spec = grid([9, 9, 9]);
    let c = VoxelCoord::new(4, 4, 4);
    let center = spec.center(c).coords;
    let about = |axis: Vector3<f64>| {
        let rot = RigidTransform::from_axis_angle(axis * std::f64::consts::FRAC_PI_2, Vector3::zeros());
        RigidTransform::from_translation(center).compose(&rot).compose(&RigidTransform::from_translation(-center))
    };
    // (axis, bar cells, expected cells), each listed by hand.
    let cases = [
        (Vector3::z(), [(3, 4, 4), (4, 4, 4), (5, 4, 4)], [(4, 3, 4), (4, 4, 4), (4, 5, 4)]),
        (Vector3::x(), [(4, 3, 4), (4, 4, 4), (4, 5, 4)], [(4, 4, 3), (4, 4, 4), (4, 4, 5)]),
        (Vector3::y(), [(4, 4, 3), (4, 4, 4), (4, 4, 5)], [(3, 4, 4), (4, 4, 4), (5, 4, 4)]),
    ];
    for (axis, bar, expect) in cases {
        let mut x = VoxelState::empty(spec.clone());
        for (i, j, k) in bar {
            x.set(VoxelCoord::new(i, j, k), 1);
        }
        let y = apply_transform(&x, 1, &about(axis)).unwrap();
        let mut want = VoxelState::empty(spec.clone());
        for (i, j, k) in expect {
            want.set(VoxelCoord::new(i, j, k), 1);
        }
        assert_eq!(y, want, "axis {axis:?}");
    }
}

#[test]
fn single_box_projection_round_trips() {
    let spec = grid([10, 10, 10]);
    let cam = overhead();
    let mut x = VoxelState::empty(spec);
    for i in 3..7 {
        for j in 2..6 {
            for k in 0..3 {
                x.set(VoxelCoord::new(i, j, k), 4);
            }
        }
    }
    let img = project(&x, &cam);
    assert_eq!(img.object_labels(), vec![4]);
    let eye = cam.center();
    for v in 0..cam.height {
        for u in 0..cam.width {
            let hit = first_hit(&x, &eye, &cam.ray_direction(u, v)).map(|(_, l)| l).unwrap_or(0);
            assert_eq!(hit, img.get(u, v));
        }
    }
}

fn dims() -> impl Strategy<Value = [usize; 3]> {
    (1usize..7, 1usize..7, 1usize..7).prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #[test]
    fn io_roundtrip(d in dims(), boxes in 0usize..5, seed in 0u64..1000) {
        let x = VoxelState::from_labels(grid(d), random_boxes(d, boxes, &mut rng(seed))).unwrap();
        let mut buf = Vec::new();
        write_voxel_state(&x, &mut buf).unwrap();
        prop_assert_eq!(read_voxel_state(buf.as_slice()).unwrap(), x);
    }

    #[test]
    fn iou_properties(a in proptest::collection::btree_set(0usize..64, 0..20), b in proptest::collection::btree_set(0usize..64, 0..20)) {
        let spec = grid([4, 4, 4]);
        let set = |s: &std::collections::BTreeSet<usize>| VoxelSet::new(spec.clone(), s.iter().map(|&i| spec.coord(i))).unwrap();
        let (sa, sb) = (set(&a), set(&b));
        let ab = iou(&sa, &sb).unwrap();
        prop_assert_eq!(ab, iou(&sb, &sa).unwrap());
        if !a.is_empty() {
            prop_assert_eq!(iou(&sa, &sa).unwrap(), 1.0);
        }
        if !a.is_empty() && !b.is_empty() {
            prop_assert_eq!(ab == 0.0, a.is_disjoint(&b));
        }
    }

    #[test]
    fn integer_translations_preserve_count(seed in 0u64..1000, t in (-2i32..3, -2i32..3, -2i32..3)) {
        let d = [8, 8, 8];
        let mut labels = vec![0 as Label; 512];
        // One box kept two cells away from every face.
        let r = &mut rng(seed);
        let b = random_boxes([4, 4, 4], 1, r);
        for (idx, &l) in b.iter().enumerate() {
            let (i, j, k) = (idx % 4 + 2, (idx / 4) % 4 + 2, idx / 16 + 2);
            labels[i + 8 * (j + 8 * k)] = l;
        }
        let x = VoxelState::from_labels(grid(d), labels).unwrap();
        let shift = Vector3::new(t.0 as f64, t.1 as f64, t.2 as f64) * 0.01;
        let y = apply_transform(&x, 1, &RigidTransform::from_translation(shift)).unwrap();
        prop_assert_eq!(y.occupied_count(), x.occupied_count());
        for idx in 0..512 {
            if x.labels()[idx] == 1 {
                let c = x.spec().coord(idx);
                let moved = VoxelCoord::new(
                    (c.i as i32 + t.0) as usize,
                    (c.j as i32 + t.1) as usize,
                    (c.k as i32 + t.2) as usize,
                );
                prop_assert_eq!(y.get(moved), 1);
            }
        }
    }

    #[test]
    fn quarter_turns_preserve_count(seed in 0u64..1000, axis in 0usize..3, turns in 1u32..4) {
        // A box inside the central 5³ block of a 9³ grid stays inside after any
        // quarter turn about the central cell.
        let spec = grid([9, 9, 9]);
        let mut labels = vec![0 as Label; 729];
        let b = random_boxes([5, 5, 5], 1, &mut rng(seed));
        for (idx, &l) in b.iter().enumerate() {
            let (i, j, k) = (idx % 5 + 2, (idx / 5) % 5 + 2, idx / 25 + 2);
            labels[i + 9 * (j + 9 * k)] = l;
        }
        let x = VoxelState::from_labels(spec.clone(), labels).unwrap();
        let center = spec.center(VoxelCoord::new(4, 4, 4)).coords;
        let mut a = Vector3::zeros();
        a[axis] = std::f64::consts::FRAC_PI_2 * turns as f64;
        let t = RigidTransform::from_translation(center)
            .compose(&RigidTransform::from_axis_angle(a, Vector3::zeros()))
            .compose(&RigidTransform::from_translation(-center));
        prop_assert_eq!(apply_transform(&x, 1, &t).unwrap().occupied_count(), x.occupied_count());
    }

    #[test]
    fn full_consensus_filter_is_idempotent(d in dims(), boxes in 0usize..6, seed in 0u64..1000, w in prop_oneof![Just(1usize), Just(3), Just(5)]) {
        let x = VoxelState::from_labels(grid(d), random_boxes(d, boxes, &mut rng(seed))).unwrap();
        let cfg = ModeFilterConfig { window: w, consensus: 1.0 };
        let once = mode_filter(&x, cfg).unwrap();
        prop_assert_eq!(mode_filter(&once, cfg).unwrap(), once);
    }

    #[test]
    fn refine_never_adds_and_is_idempotent(seed in 0u64..1000, surface in 0.0f64..0.1) {
        let d = [10, 10, 10];
        let x = VoxelState::from_labels(grid(d), random_boxes(d, 4, &mut rng(seed))).unwrap();
        let cam = overhead();
        let mut depth = DepthImage::empty(cam.width, cam.height);
        depth.depth.iter_mut().for_each(|v| *v = 1.0 - surface);
        let once = free_space_refine(&x, &depth, &cam);
        prop_assert!(once.state.occupied_count() <= x.occupied_count());
        prop_assert!(once.q_r > 0.0 && once.q_r <= 1.0);
        let twice = free_space_refine(&once.state, &depth, &cam);
        prop_assert_eq!(twice.state, once.state);
    }
}
