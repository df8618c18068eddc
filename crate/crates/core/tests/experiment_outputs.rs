use smm_servo::experiments::{
    content_cases, lattice, run_case, run_cases, table1_cases, table2_cases, CaseStatus, ExperimentCase,
    ExperimentReport, StudyConfig, TextureId, REPORT_HEADER,
};
use smm_servo::servo::DofMask;
use smm_servo::Image;

fn quick_case() -> ExperimentCase {
    ExperimentCase::new("quick", [0.05, 0.04, -0.5, 0.0, 0.0, 4.0], DofMask::PLANAR)
}

#[test]
fn case_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_case(&StudyConfig::default(), &quick_case(), Some(dir.path())).unwrap();
    assert_eq!(report.status, CaseStatus::Converged);
    let case_dir = dir.path().join("quick");
    for f in ["trace.csv", "initial.pgm", "final.pgm", "desired.pgm", "diff.pgm"] {
        assert!(case_dir.join(f).is_file(), "missing {f}");
    }
    let desired = Image::load(case_dir.join("desired.pgm")).unwrap();
    assert_eq!((desired.width(), desired.height()), (50, 50));

    let trace = std::fs::read_to_string(case_dir.join("trace.csv")).unwrap();
    let mut lines = trace.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), smm_servo::servo::TRACE_HEADER);
    assert_eq!(lines.count(), report.iterations + 1);
    assert!(trace.contains("status=converged"));
}

#[test]
fn report_lists_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let study = StudyConfig::default();
    let report: ExperimentReport = run_cases(&study, &[quick_case()], None).unwrap();
    let path = report.save(dir.path()).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), REPORT_HEADER);
    assert!(lines.next().unwrap().starts_with("quick,converged,"));
    assert!(lines.next().is_none());
    assert!(!report.any_diverged());
}

#[test]
fn constant_content_is_reported_not_run() {
    let cases = content_cases(&[TextureId::Constant(90.0)]);
    let report = run_case(&StudyConfig::default(), &cases[0], None).unwrap();
    assert_eq!(report.status, CaseStatus::Degenerate);
    assert!(report.trace.is_none());
}

#[test]
fn case_tables_have_expected_shape() {
    let t1 = table1_cases();
    let t2 = table2_cases();
    assert_eq!(t1.len(), 5);
    assert_eq!(t2.len(), 10);
    assert!(t1.iter().all(|c| c.dof_mask == DofMask::PLANAR && c.initial[2] == -0.5));
    assert!(t2.iter().all(|c| c.dof_mask == DofMask::FULL));
    assert_eq!(t2[0].name, "table2_exp1");
}

#[test]
fn lattice_has_exact_center() {
    let xs = lattice(0.2, 21);
    assert_eq!(xs.len(), 21);
    assert_eq!(xs[10], 0.0);
    assert!((xs[0] + 0.2).abs() < 1e-15 && (xs[20] - 0.2).abs() < 1e-15);
}

#[test]
fn higher_resolution_scales_camera() {
    let s = StudyConfig::default();
    let d = s.at_resolution(100);
    assert_eq!(d.resolution, 100);
    assert!((d.focal - 2.0 * s.focal).abs() < 1e-12);
    assert!((d.smm.spread_px - 2.0 * s.smm.spread_px).abs() < 1e-12);
    assert_eq!(d.smm.guard_band, 2 * s.smm.guard_band);
}
