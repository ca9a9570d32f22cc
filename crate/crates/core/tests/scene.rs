mod common;

use common::*;
use geoguide_core::raster::{rasterize, unproject};
use geoguide_core::scene::{build_topology, load_mesh, load_trajectory, EdgeKind, Manifest};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fixtures_load_with_expected_counts() {
    let cube = load_mesh(fixture("cube_two_groups.obj")).unwrap();
    assert_eq!((cube.vertices().len(), cube.num_triangles()), (8, 12));
    let ids = cube.object_ids();
    assert_eq!(ids.iter().filter(|&&i| i == 0).count(), 6);
    assert_eq!(ids.iter().filter(|&&i| i == 1).count(), 6);
    let topo = build_topology(&cube);
    assert_eq!(topo.edges().len(), 18);
    assert!(topo.edges().iter().all(|e| e.kind() == EdgeKind::Manifold));

    let traj = load_trajectory(fixture("orbit46.json")).unwrap();
    assert_eq!(traj.last_index(), 45);
    assert_eq!((traj.width(), traj.height()), (720, 480));

    let m = Manifest::load(fixture("manifest.json")).unwrap();
    assert_eq!(m.anchors(45).unwrap(), vec![0, 45]);
    assert!(m.mesh_path.ends_with("cube_scene.obj"));
}

#[test]
fn rasterizer_matches_ray_casting() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let intr = intrinsics(64, 64, 70.0);
    let (mut agree, mut covered) = (0usize, 0usize);
    for _ in 0..20 {
        let mesh = random_mesh(&mut rng, 200);
        let (pose, _) = random_pose_pair(&mut rng, intr);
        let g = rasterize(&mesh, &pose);
        for y in 0..64 {
            for x in 0..64 {
                let (o, d) = pixel_ray(&pose, x, y);
                let hit = raycast(&mesh, &o, &d);
                let i = g.index(x, y);
                if hit.is_none() {
                    // Coverage mismatches count against agreement.
                    covered += g.covered(x, y) as usize;
                    continue;
                }
                let (t, face) = hit.unwrap();
                covered += 1;
                if g.face_id[i] != face as i32 {
                    continue;
                }
                agree += 1;
                let p = o + d * t;
                let depth = pose.to_camera(&p).z;
                assert!((g.depth[i] - depth).abs() <= 1e-4 * depth, "depth {} vs {depth}", g.depth[i]);
                let q = unproject(&g, &mesh, x, y).unwrap();
                assert!((q - p).norm() < 1e-5);
            }
        }
    }
    let frac = agree as f64 / covered as f64;
    assert!(frac >= 0.995, "face agreement {frac}");
}
