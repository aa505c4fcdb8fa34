mod common;

use common::*;
use phonalign::losses::WindowMode;

#[test]
fn ctc_gradient() {
    for seed in 0..3 {
        let e = ctc_check(seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn alignment_gradient() {
    for seed in 0..3 {
        let e = align_check(seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn ts_frame_gradient() {
    assert!(ts_frame_check(1) < TOL);
}

#[test]
fn ts_window_gradients() {
    for mode in [WindowMode::Best, WindowMode::Avg] {
        let e = ts_window_check(2, mode);
        assert!(e < TOL, "{mode:?}: {e}");
    }
}

#[test]
fn model_gradient() {
    for seed in 0..2 {
        let e = model_check(seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}
