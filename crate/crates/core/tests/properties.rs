use std::f64::consts::{PI, TAU};

use logcap::capacity::project_simplex;
use logcap::geometry::{wrap_angle, LogPolarPoint, Primitive};
use logcap::kernels::green_disk;
use logcap::mc::shell_of;
use proptest::prelude::*;

proptest! {
    #[test]
    fn simplex_projection_is_a_feasible_fixed_point(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let w = project_simplex(&v);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let again = project_simplex(&w);
        for (a, b) in w.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrapped_angles_stay_in_the_half_open_window(d in -50.0f64..50.0) {
        let w = wrap_angle(d);
        prop_assert!(w > -PI && w <= PI);
        let k = (d - w) / TAU;
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn cartesian_round_trip(t in 0.01f64..20.0, theta in 0.0f64..TAU) {
        let p = LogPolarPoint::new(t, theta).unwrap();
        let (x, y) = p.to_cartesian().unwrap();
        let q = LogPolarPoint::from_cartesian(x, y).unwrap();
        prop_assert!(p.cylinder_distance(&q) < 1e-9);
    }

    #[test]
    fn shells_bracket_their_points(t in 0.01f64..1e4, a in 1.1f64..8.0) {
        let n = shell_of(t, a);
        prop_assert!(a.powi(n) <= t && t < a.powi(n + 1));
    }

    #[test]
    fn disk_green_function_is_symmetric_and_positive(
        t1 in 0.05f64..10.0, th1 in 0.0f64..TAU, t2 in 0.05f64..10.0, th2 in 0.0f64..TAU,
    ) {
        let x = LogPolarPoint::new(t1, th1).unwrap();
        let y = LogPolarPoint::new(t2, th2).unwrap();
        prop_assume!(x.cylinder_distance(&y) > 1e-6);
        let g = green_disk(&x, &y).unwrap();
        prop_assert!(g > 0.0);
        prop_assert!((g - green_disk(&y, &x).unwrap()).abs() <= 1e-9 * g.max(1.0));
    }

    #[test]
    fn clipping_respects_the_window(t0 in 0.1f64..5.0, len in 0.01f64..5.0, lo in 0.0f64..4.0, w in 0.1f64..4.0) {
        let seg = Primitive::radial_segment(t0, t0 + len, 1.0);
        if let Some(c) = seg.clip_t(lo, lo + w) {
            let (a, b) = c.t_range();
            prop_assert!(a >= lo - 1e-12 && b <= lo + w + 1e-12);
            prop_assert!(a >= t0 - 1e-12 && b <= t0 + len + 1e-12);
        } else {
            prop_assert!(t0 + len <= lo + 1e-12 || t0 >= lo + w - 1e-12);
        }
    }
}
