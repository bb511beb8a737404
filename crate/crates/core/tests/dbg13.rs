#[test]
fn dbg_threshold_effect() {
    use stereopath::synth::{SceneSpec, SyntheticScene, TrajectoryKind};
    use stereopath::epipolar::{ransac_inliers, essential_from_fundamental, decompose_essential, RansacParams};
    use stereopath::features::{detect_sift, match_plain, SiftParams};
    use stereopath::geom::RotationMatrix;
    let (w, h, b) = (512usize, 384usize, 120.0f64);
    let spec = SceneSpec {
        seed: 58, n_points: 120, positions: 11,
        trajectory: TrajectoryKind::Line { step_mm: [25.0, 0.0, 0.0] },
        image_width: w, image_height: h,
        spread_mm: [280.0, 190.0],
        depth_range_mm: [400.0, 700.0],
        ..SceneSpec::default()
    };
    let f = 0.9 * w as f64;
    let cam = stereopath::stereo::CameraIntrinsics::new(f, f, w as f64/2.0, h as f64/2.0).unwrap();
    let rig = stereopath::stereo::StereoRig::new(cam, cam, RotationMatrix::identity(), stereopath::geom::Translation::new(-b, 0.0, 0.0)).unwrap();
    let scene = SyntheticScene::generate_with_rig(spec, rig).unwrap();
    let seq = scene.render_sequence().unwrap();
    let params = SiftParams::default();
    for pair in [(0usize,1usize),(4,5),(8,9)] {
        let f1 = detect_sift(&seq.left[pair.0], &params).unwrap();
        let f2 = detect_sift(&seq.left[pair.1], &params).unwrap();
        let matches = match_plain(&f1, &f2, 0.75);
        for thr in [1.0f64, 0.5, 0.3] {
            let set = ransac_inliers(&matches, &RansacParams { trials: 600, threshold_px: thr, seed: 4 }).unwrap();
            let e = essential_from_fundamental(&set.f, &scene.rig.left, &scene.rig.left);
            let (r, _t) = decompose_essential(&e, &set, &scene.rig.left, &scene.rig.left).unwrap();
            println!("pair {:?} thr {:.1}: matches {} support {} rot err {:.4} deg", pair, thr,
                matches.len(), set.support,
                r.transpose().angle_to(&RotationMatrix::identity()).to_degrees());
        }
    }
}
