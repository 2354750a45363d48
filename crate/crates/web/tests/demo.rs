use dac_web::demo::{grid_probabilities, mmd_curves, MoonsDemo};

#[test]
fn demo_runs_and_records_one_frame_per_epoch() {
    let mut demo = MoonsDemo::new(200, 40.0, 0).unwrap();
    assert_eq!(demo.frames.len(), 1);
    assert!(demo.source_holdout_accuracy >= 0.9);
    let n = demo.run(3, 0.95).unwrap();
    assert_eq!(n, 4);
    for (i, f) in demo.frames.iter().enumerate() {
        assert_eq!(f.epoch, i);
        assert_eq!(f.source_like.len(), 200);
        assert_eq!(f.predictions.len(), 200);
        assert!((0.0..=1.0).contains(&f.accuracy));
    }
    // Re-running replaces the previous frames.
    assert_eq!(demo.run(1, 0.9).unwrap(), 2);
}

#[test]
fn boundary_grid_has_probabilities() {
    let demo = MoonsDemo::new(100, 20.0, 1).unwrap();
    let g = demo.boundary(0, 8).unwrap();
    assert_eq!(g.len(), 64);
    assert!(g.iter().all(|p| (0.0..=1.0).contains(p)));
    assert!(demo.boundary(5, 8).is_err());
    let b = demo.bounds();
    assert!(b[0] < b[1] && b[2] < b[3]);
    assert_eq!(grid_probabilities(&demo.source_params, b, 8).unwrap(), g);
}

#[test]
fn scaled_emmd_dominates_clipped_lmmd() {
    for tau in [0.05, 0.2, 1.0] {
        let c = mmd_curves(tau, 0.7, 50);
        assert_eq!(c.len(), 50);
        for (gap, clipped, scaled) in c {
            assert_eq!(clipped, gap.max(0.0));
            assert!(scaled >= clipped - 1e-12);
            assert!(scaled - clipped <= tau * 2f64.ln() + 1e-12);
        }
    }
}
