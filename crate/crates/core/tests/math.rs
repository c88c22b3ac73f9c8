use std::f64::consts::PI;

use grains_core::math::{argmax, normalize_angle};

#[test]
fn normalize_keeps_range() {
    assert_eq!(normalize_angle(0.0), 0.0);
    assert_eq!(normalize_angle(PI), PI);
    assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
    let wrapped = normalize_angle(-6.0);
    assert!((wrapped - (-6.0 + 2.0 * PI)).abs() < 1e-12);
    for i in -200..200 {
        let a = i as f64 * 0.173;
        let n = normalize_angle(a);
        assert!(n > -PI && n <= PI, "{a} -> {n}");
        let k = (a - n) / (2.0 * PI);
        assert!((k - k.round()).abs() < 1e-9);
    }
}

#[test]
fn argmax_ties_low() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    assert_eq!(argmax(&[0.0]), 0);
}
