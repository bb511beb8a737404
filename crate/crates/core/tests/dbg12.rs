#[test]
fn dbg_rotation_noise_floor() {
    use stereopath::synth::{Camera, SceneSpec, SyntheticScene, TrajectoryKind};
    use stereopath::epipolar::{ransac_inliers, essential_from_fundamental, decompose_essential, RansacParams};
    use stereopath::geom::RotationMatrix;
    let (w, h, b) = (512usize, 384usize, 150.0f64);
    let mut spec = SceneSpec {
        seed: 59, n_points: 110, positions: 11,
        trajectory: TrajectoryKind::Line { step_mm: [25.0, 0.0, 0.0] },
        image_width: w, image_height: h,
        spread_mm: [340.0, 230.0],
        depth_range_mm: [480.0, 820.0],
        ..SceneSpec::default()
    };
    spec.noise_px = 0.15;
    let f = 0.9 * w as f64;
    let cam = stereopath::stereo::CameraIntrinsics::new(f, f, w as f64 / 2.0, h as f64 / 2.0).unwrap();
    let rig = stereopath::stereo::StereoRig::new(cam, cam, RotationMatrix::identity(), stereopath::geom::Translation::new(-b, 0.0, 0.0)).unwrap();
    let scene = SyntheticScene::generate_with_rig(spec, rig).unwrap();
    let run = |pairs: &[stereopath::features::MatchPair], label: &str| {
        let set = ransac_inliers(pairs, &RansacParams { trials: 600, threshold_px: 1.0, seed: 4 }).unwrap();
        let e = essential_from_fundamental(&set.f, &scene.rig.left, &scene.rig.left);
        let (r, _t) = decompose_essential(&e, &set, &scene.rig.left, &scene.rig.left).unwrap();
        let r_cam = r.transpose();
        println!("{label}: support {} rotation error {:.4} deg", set.support,
            r_cam.angle_to(&RotationMatrix::identity()).to_degrees());
    };
    let exact = scene.exact_correspondences(Camera::Left, 1, 2);
    run(&exact, "exact        ");
    for noise_seed in [1u64, 2, 3] {
        let noisy = scene.corrupted_correspondences(Camera::Left, 1, 2, noise_seed, 3.0);
        run(&noisy, &format!("noise 0.15 s{noise_seed}"));
    }
}
