mod common;

use common::*;
use geoguide_core::flow::{compute_flow, warp_image, DEFAULT_OCCLUSION_TOLERANCE};
use geoguide_core::raster::rasterize;
use geoguide_core::scene::{load_mesh, load_trajectory, Trajectory};
use geoguide_core::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = DEFAULT_OCCLUSION_TOLERANCE;

#[test]
fn flow_matches_brute_force_ray_casting() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let intr = intrinsics(64, 64, 70.0);
    for case in 0..20 {
        let mesh = random_mesh(&mut rng, 200);
        let (a, b) = random_pose_pair(&mut rng, intr);
        let traj = Trajectory::new(vec![a, b]).unwrap();
        let (ga, gb) = (rasterize(&mesh, &a), rasterize(&mesh, &b));
        let (flow, _) = compute_flow(&mesh, &traj, 0, 1, &ga, &gb, TOL).unwrap();
        let oracle = raycast_flow(&mesh, &a, &b, TOL);
        let mut errors = Vec::new();
        for i in 0..flow.flow.len() {
            if let (true, Some(o)) = (flow.valid[i], oracle.flow[i]) {
                let f = flow.flow[i];
                errors.push(((f[0] - o[0]).powi(2) + (f[1] - o[1]).powi(2)).sqrt());
            }
        }
        assert!(errors.len() > 100, "case {case}: only {} mutual pixels", errors.len());
        let frac = percentile_fraction(&errors, 0.5);
        assert!(frac >= 0.99, "case {case}: {frac}");
    }
}

#[test]
fn forward_backward_composition_is_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let intr = intrinsics(64, 64, 70.0);
    for case in 0..10 {
        let mesh = random_mesh(&mut rng, 120);
        let (a, b) = random_pose_pair(&mut rng, intr);
        let traj = Trajectory::new(vec![a, b]).unwrap();
        let (ga, gb) = (rasterize(&mesh, &a), rasterize(&mesh, &b));
        let (fab, mab) = compute_flow(&mesh, &traj, 0, 1, &ga, &gb, TOL).unwrap();
        let (fba, mba) = compute_flow(&mesh, &traj, 1, 0, &gb, &ga, TOL).unwrap();
        let stats = forward_backward_errors(&fab, &mab.mask.data, &ga.face_id, &fba, &mba.mask.data, &gb.face_id);
        assert!(stats.len() > 50, "case {case}");
        let frac = percentile_fraction(&stats, 0.5);
        assert!(frac >= 0.99, "case {case}: {frac} of {}", stats.len());
    }
}

#[test]
fn geometric_flow_equals_coordinate_encoded_rendering() {
    let traj = load_trajectory(fixture("orbit46.json")).unwrap().resized(240, 160).unwrap();
    let cases = [
        ("cube.obj", 0, 6),
        ("cube_two_groups.obj", 10, 18),
        ("quad.obj", 3, 9),
        ("interpenetrating.obj", 20, 27),
        ("cube_scene.obj", 40, 45),
    ];
    for (name, i, j) in cases {
        let mesh = load_mesh(fixture(name)).unwrap();
        let (a, b) = (traj.pose(i).unwrap(), traj.pose(j).unwrap());
        let (ga, gb) = (rasterize(&mesh, a), rasterize(&mesh, b));
        let (flow, _) = compute_flow(&mesh, &traj, i, j, &ga, &gb, TOL).unwrap();
        let oracle = coordinate_encoded_flow(&mesh, a, b, TOL);
        let mut total = 0;
        let mut good = 0;
        for (k, o) in oracle.iter().enumerate() {
            let Some(o) = o else { continue };
            total += 1;
            if flow.valid[k] {
                let f = flow.flow[k];
                if ((f[0] - o[0]).powi(2) + (f[1] - o[1]).powi(2)).sqrt() <= 0.5 {
                    good += 1;
                }
            }
        }
        assert!(total > 500, "{name}: {total} oracle pixels");
        let frac = good as f64 / total as f64;
        assert!(frac >= 0.99, "{name}: {frac}");
    }
}

#[test]
fn visibility_agrees_with_ray_casting() {
    let traj = load_trajectory(fixture("orbit46.json")).unwrap().resized(240, 160).unwrap();
    let mesh = load_mesh(fixture("cube_scene.obj")).unwrap();
    let (a, b) = (traj.pose(0).unwrap(), traj.pose(12).unwrap());
    let (ga, gb) = (rasterize(&mesh, a), rasterize(&mesh, b));
    let (flow, mask) = compute_flow(&mesh, &traj, 0, 12, &ga, &gb, TOL).unwrap();
    let oracle = raycast_flow(&mesh, a, b, TOL);
    let (mut agree, mut total) = (0, 0);
    for i in 0..flow.valid.len() {
        if flow.valid[i] && oracle.flow[i].is_some() {
            total += 1;
            agree += (mask.mask.data[i] == oracle.visible[i]) as usize;
        }
    }
    assert!(agree as f64 / total as f64 >= 0.99, "{agree}/{total}");
    // Some of the ground behind the cube must be disoccluded.
    assert!(mask.mask.count() < flow.valid.iter().filter(|&&v| v).count());
}

#[test]
fn backward_warp_reproduces_procedural_texture() {
    let traj = load_trajectory(fixture("orbit46.json")).unwrap().resized(240, 160).unwrap();
    let mesh = load_mesh(fixture("cube_scene.obj")).unwrap();
    let (ga, gb) = (rasterize(&mesh, traj.pose(5).unwrap()), rasterize(&mesh, traj.pose(7).unwrap()));
    let (flow, mask) = compute_flow(&mesh, &traj, 5, 7, &ga, &gb, TOL).unwrap();
    let img_b = geoguide_core::shade::shade_procedural(&mesh, &gb);
    let img_a = geoguide_core::shade::shade_procedural(&mesh, &ga);
    let (warped, holes) = warp_image(&img_b, &flow, &mask).unwrap();
    let mut errs = Vec::new();
    for i in 0..holes.data.len() {
        if !holes.data[i] {
            let e = (0..3)
                .map(|c| (warped.data[i * 3 + c] - img_a.data[i * 3 + c]).abs())
                .fold(0.0f32, f32::max);
            errs.push(e as f64);
        }
    }
    assert!(percentile_fraction(&errs, 0.05) > 0.97);
    let zero = Image::zeros(240, 160, 3);
    let (w, _) = warp_image(&zero, &flow, &mask).unwrap();
    assert!(w.data.iter().all(|&v| v == 0.0));
}

#[test]
fn correspondences_satisfy_the_epipolar_constraint() {
    use nalgebra::{Matrix3, Vector3};
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let intr = intrinsics(64, 64, 70.0);
    for _ in 0..10 {
        let mesh = random_mesh(&mut rng, 80);
        let (a, b) = random_pose_pair(&mut rng, intr);
        let traj = Trajectory::new(vec![a, b]).unwrap();
        let (ga, gb) = (rasterize(&mesh, &a), rasterize(&mesh, &b));
        let (flow, _) = compute_flow(&mesh, &traj, 0, 1, &ga, &gb, TOL).unwrap();
        let r = b.rotation() * a.rotation().transpose();
        let t = (b.translation() - r * a.translation()).normalize();
        let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
        let e = tx * r;
        let norm = |u: f64, v: f64| Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
        for i in (0..flow.flow.len()).filter(|&i| flow.valid[i]) {
            let (u, v) = ((i % 64) as f64 + 0.5, (i / 64) as f64 + 0.5);
            let q = norm(u, v);
            let q2 = norm(u + flow.flow[i][0], v + flow.flow[i][1]);
            assert!(q2.dot(&(e * q)).abs() < 1e-6);
        }
    }
}

#[test]
fn occlusion_mask_grows_with_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let intr = intrinsics(64, 64, 70.0);
    for _ in 0..5 {
        let mesh = random_mesh(&mut rng, 150);
        let (a, b) = random_pose_pair(&mut rng, intr);
        let traj = Trajectory::new(vec![a, b]).unwrap();
        let (ga, gb) = (rasterize(&mesh, &a), rasterize(&mesh, &b));
        let tight = compute_flow(&mesh, &traj, 0, 1, &ga, &gb, 1e-5).unwrap().1;
        let loose = compute_flow(&mesh, &traj, 0, 1, &ga, &gb, 1e-1).unwrap().1;
        for (t, l) in tight.mask.data.iter().zip(&loose.mask.data) {
            assert!(!t || *l);
        }
    }
}

#[test]
fn flow_chain_counts_and_static_trajectory() {
    use geoguide_core::flow::flow_chain;
    let traj = load_trajectory(fixture("orbit46.json")).unwrap().resized(72, 48).unwrap();
    let mesh = load_mesh(fixture("cube_scene.obj")).unwrap();
    let chain = flow_chain(&traj, &mesh, &[0, 45], TOL).unwrap();
    assert_eq!(chain.consecutive.len(), 45);
    assert_eq!(chain.anchors.len(), 1);
    assert_eq!((chain.anchors[0].0.src_index, chain.anchors[0].0.dst_index), (45, 0));

    let still = Trajectory::new(vec![*traj.pose(3).unwrap(); 3]).unwrap();
    let chain = flow_chain(&still, &mesh, &[0, 2], TOL).unwrap();
    for (f, m) in chain.consecutive.iter().chain(&chain.anchors) {
        assert!(f.flow.iter().all(|v| v[0].abs() < 1e-9 && v[1].abs() < 1e-9));
        assert_eq!(m.mask, rasterize(&mesh, still.pose(0).unwrap()).coverage());
    }
    let two = Trajectory::new(traj.poses()[..2].to_vec()).unwrap();
    let chain = flow_chain(&two, &mesh, &[0, 1], TOL).unwrap();
    assert_eq!((chain.consecutive.len(), chain.anchors.len()), (1, 1));
}
