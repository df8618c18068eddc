use nalgebra::DMatrix;
use proptest::prelude::*;

use smm_servo::experiments::{StudyConfig, TextureId};
use smm_servo::geometry::{pose_from_euler_degrees, Twist};
use smm_servo::servo::{
    control_step, point_interaction_matrix, pseudo_inverse, ControllerConfig, DofMask, ServoStatus,
};
use smm_servo::Error;

fn servo(mask: DofMask) -> smm_servo::servo::Servo {
    StudyConfig::default().servo(&TextureId::Default, mask).unwrap()
}

#[test]
fn starting_at_the_goal_converges_immediately() {
    let study = StudyConfig::default();
    let s = servo(DofMask::FULL);
    let trace = s.run(&study.desired_pose(), None).unwrap();
    assert_eq!(trace.status, ServoStatus::Converged);
    assert_eq!(trace.iterations(), 0);
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.final_record().err_norm, 0.0);
}

#[test]
fn first_step_moves_toward_the_goal() {
    let s = servo(DofMask::FULL);
    let start = pose_from_euler_degrees([0.05, -0.04, -0.52, 0.0, 0.0, 3.0]);
    let e0 = smm_servo::servo::error_norm(&s.error(&start, None).unwrap());
    let mut study = StudyConfig::default();
    study.ctrl.max_iters = 1;
    let one = study.servo(&TextureId::Default, DofMask::FULL).unwrap();
    let trace = one.run(&start, None).unwrap();
    assert_eq!(trace.records.len(), 2);
    assert!(trace.records[1].err_norm < e0);
    // v_x must push the camera back toward x = 0
    assert!(trace.records[0].twist.linear.x < 0.0);
}

#[test]
fn masked_axes_stay_still() {
    let study = StudyConfig::default();
    let s = servo(DofMask::PLANAR);
    let start = pose_from_euler_degrees([0.1, 0.08, -0.5, 0.0, 0.0, -6.0]);
    let trace = s.run(&start, None).unwrap();
    assert_eq!(trace.status, ServoStatus::Converged);
    for r in &trace.records {
        let v = r.twist.to_array();
        assert_eq!([v[2], v[3], v[4]], [0.0; 3]);
        let p = r.pose.to_euler_degrees();
        assert!((p[2] - study.desired[2]).abs() < 1e-12);
        assert!(p[3].abs() < 1e-9 && p[4].abs() < 1e-9);
    }
}

#[test]
fn rejects_invalid_gain() {
    let mut study = StudyConfig::default();
    study.ctrl.lambda = -1.0;
    let err = study.servo(&TextureId::Default, DofMask::FULL).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter { .. }), "{err}");
}

#[test]
fn constant_texture_is_degenerate() {
    let err = StudyConfig::default()
        .servo(&TextureId::Constant(128.0), DofMask::FULL)
        .unwrap_err();
    assert!(matches!(err, Error::Degenerate(_)), "{err}");
}

#[test]
fn point_interaction_rows_at_the_center() {
    let l = point_interaction_matrix(0.0, 0.0, 2.0).unwrap();
    let expected = [[-0.5, 0.0, 0.0, 0.0, -1.0, 0.0], [0.0, -0.5, 0.0, 1.0, 0.0, 0.0]];
    for (r, row) in expected.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            assert_eq!(l[(r, c)], *v);
        }
    }
    let l = point_interaction_matrix(0.1, -0.2, 1.0).unwrap();
    assert!((l[(0, 3)] - (0.1 * -0.2)).abs() < 1e-15);
    assert!((l[(1, 5)] - -0.1).abs() < 1e-15);
    assert!(point_interaction_matrix(0.0, 0.0, 0.0).is_err());
}

#[test]
fn pseudo_inverse_of_rank_deficient_matrix() {
    let l = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
    let p = pseudo_inverse(&l).unwrap();
    // rank one: pinv = L^T / ||L||_F^2
    let expected = l.transpose() / 25.0;
    assert!((p - expected).amax() < 1e-12);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1e-9, 4.0]));
    let p = pseudo_inverse(&d).unwrap();
    assert_eq!(p[(1, 1)], 0.0);
    assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
}

#[test]
fn default_controller_validates() {
    ControllerConfig::default().validate().unwrap();
}

proptest! {
    #[test]
    fn control_step_is_linear_in_gain(
        entries in proptest::collection::vec(-1.0f64..1.0, 6 * 8),
        e in proptest::collection::vec(-1.0f64..1.0, 8),
        lambda in 0.01f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        let p = DMatrix::from_row_slice(6, 8, &entries);
        let a = control_step(&p, &e, lambda, DofMask::FULL).unwrap().to_array();
        let b = control_step(&p, &e, lambda * scale, DofMask::FULL).unwrap().to_array();
        for i in 0..6 {
            prop_assert!((b[i] - scale * a[i]).abs() <= 1e-12 * (1.0 + b[i].abs()));
        }
    }

    #[test]
    fn control_step_honours_mask(
        entries in proptest::collection::vec(-1.0f64..1.0, 6 * 5),
        e in proptest::collection::vec(-1.0f64..1.0, 5),
        bits in proptest::array::uniform6(any::<bool>()),
    ) {
        let p = DMatrix::from_row_slice(6, 5, &entries);
        let mask = DofMask(bits);
        let t = control_step(&p, &e, 0.5, mask).unwrap().to_array();
        let full = control_step(&p, &e, 0.5, DofMask::FULL).unwrap().to_array();
        for i in 0..6 {
            prop_assert_eq!(t[i], if bits[i] { full[i] } else { 0.0 });
        }
    }

    #[test]
    fn zero_error_gives_zero_twist(entries in proptest::collection::vec(-1.0f64..1.0, 6 * 4)) {
        let p = DMatrix::from_row_slice(6, 4, &entries);
        let t = control_step(&p, &[0.0; 4], 0.8, DofMask::FULL).unwrap();
        prop_assert!(t.is_zero());
        prop_assert_eq!(t, Twist::zero());
    }
}
