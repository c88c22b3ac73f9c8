use std::f64::consts::FRAC_PI_4;

use grains_core::geometry::{Obb, Pose};

#[test]
fn overlap_area_of_offset_squares() {
    let a = Obb::new([0.0, 0.0], 0.0, [2.0, 2.0, 1.0], 0.0);
    let b = Obb::new([1.0, 1.0], 0.0, [2.0, 2.0, 1.0], 0.0);
    assert!((a.intersection_area(&b) - 1.0).abs() < 1e-12);
    let far = Obb::new([5.0, 0.0], 0.0, [1.0, 1.0, 1.0], 0.0);
    assert_eq!(a.intersection_area(&far), 0.0);
    assert!(!a.footprints_intersect(&far));
}

#[test]
fn rotated_square_inside_larger() {
    let big = Obb::new([0.0, 0.0], 0.0, [4.0, 4.0, 1.0], 0.0);
    let small = Obb::new([0.2, -0.1], 0.0, [1.0, 1.0, 1.0], FRAC_PI_4);
    assert!((big.intersection_area(&small) - 1.0).abs() < 1e-12);
}

#[test]
fn boundary_distance() {
    let b = Obb::new([0.0, 0.0], 0.0, [2.0, 1.0, 1.0], 0.0);
    assert!((b.distance_to_boundary([3.0, 0.0]) - 2.0).abs() < 1e-12);
    assert!((b.distance_to_boundary([0.0, 0.0]) - 0.5).abs() < 1e-12);
    assert!((b.distance_to_boundary([4.0, 4.5]) - 5.0).abs() < 1e-12);
}

#[test]
fn pose_inverse_roundtrip() {
    let p = Pose::new(0.7, [1.0, -2.0]);
    let q = p.compose(&p.inverse());
    assert!(q.angle.abs() < 1e-15);
    assert!(q.translation[0].abs() < 1e-12 && q.translation[1].abs() < 1e-12);
    let x = [0.3, 0.9];
    let y = p.inverse().apply(p.apply(x));
    assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
}
