use ocan_web::{benign_points, run_gan_demo, run_roc_demo};

#[test]
fn blobs_fit_the_generator_range() {
    let x = benign_points(400, 3).unwrap();
    assert!(x.data().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn gan_demo_shapes_and_determinism() {
    let a = run_gan_demo(true, 5, 4, 9).unwrap();
    let b = run_gan_demo(true, 5, 4, 9).unwrap();
    assert_eq!(a.grid, b.grid);
    assert_eq!(a.grid.len(), 81);
    assert_eq!(a.generated.len(), 300);
    assert_eq!(a.mean_p_real.len(), 4);
    assert!(a.epsilon.is_some());
    assert!(a.grid.iter().all(|p| (0.0..=1.0).contains(p)));

    let r = run_gan_demo(false, 5, 4, 9).unwrap();
    assert_eq!(r.mode, "regular");
    assert!(r.epsilon.is_none());
}

#[test]
fn roc_demo_tracks_separation() {
    let easy = run_roc_demo(6.0, 300, 0.5, 1).unwrap();
    let hard = run_roc_demo(0.0, 300, 0.5, 1).unwrap();
    assert!(easy.auc > 0.99);
    assert!((hard.auc - 0.5).abs() < 0.08);
    assert_eq!(easy.points.first(), Some(&(0.0, 0.0)));
    assert_eq!(easy.points.last(), Some(&(1.0, 1.0)));
}
