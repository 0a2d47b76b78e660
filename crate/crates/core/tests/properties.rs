//! Property suites for report rendering and the metrics.

use std::fmt::Write as _;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use ophglm::metrics::{accuracy, dice, evaluate_files, ConfusionCounts};
use ophglm::pipeline::LesionSummary;
use ophglm::report::render_report;
use ophglm::{ClassOutcome, DiagnosisFindings, FundusCase, LesionMask, ReportTemplate, TaskId};

fn probs(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1u32..100, k).prop_map(|w| {
        let total: u32 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|&x| f64::from(x) / f64::from(total)).collect();
        // keep the sum exactly one for validation
        let rest: f64 = p[1..].iter().sum();
        p[0] = 1.0 - rest;
        p
    })
}

fn findings() -> impl Strategy<Value = DiagnosisFindings> {
    (
        probs(5),
        prop::collection::vec(probs(2), 4),
        prop::collection::vec(0u64..400, 4),
    )
        .prop_map(|(dr, binary, pixels)| {
            let mut classifications = vec![ClassOutcome::from_probs(TaskId::DrGrading, dr).unwrap()];
            for (task, p) in [TaskId::Amd, TaskId::Glaucoma, TaskId::PathologicalMyopia, TaskId::Tumor]
                .into_iter()
                .zip(binary)
            {
                classifications.push(ClassOutcome::from_probs(task, p).unwrap());
            }
            let lesions = TaskId::SEGMENTATION
                .iter()
                .zip(pixels)
                .map(|(&lesion, n)| LesionSummary {
                    lesion,
                    present: n > 0,
                    pixel_count: n,
                    area_fraction: n as f64 / 40_000.0,
                })
                .collect();
            DiagnosisFindings {
                case_id: "prop-case".into(),
                classifications,
                lesions,
                produced_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            }
        })
}

fn case() -> FundusCase {
    FundusCase::new("prop-case", "p.png", 200, 200).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn report_covers_every_finding_once(f in findings()) {
        let tpl = ReportTemplate::default_template();
        let r = render_report(&f, &case(), &tpl).unwrap();
        prop_assert_eq!(&r, &render_report(&f, &case(), &tpl).unwrap());
        prop_assert!(r.text.contains("prop-case"));

        let dr = f.classification(TaskId::DrGrading).unwrap();
        let grade_lines: Vec<&str> = r.text.lines().filter(|l| l.starts_with("Diabetic retinopathy grade:")).collect();
        prop_assert_eq!(grade_lines.len(), 1);
        let want = format!("grade: {} (", dr.label_name);
        prop_assert!(grade_lines[0].contains(&want));

        let positives = f.classifications.iter().filter(|c| c.task != TaskId::DrGrading && c.is_positive()).count();
        let detected = r.text.lines().filter(|l| l.contains(" detected (confidence")).count();
        prop_assert_eq!(detected, positives);
        for c in f.classifications.iter().filter(|c| c.task != TaskId::DrGrading) {
            let mentions = r.text.matches(&format!("- {} detected", c.task.display_name())).count();
            prop_assert_eq!(mentions, usize::from(c.is_positive()));
        }

        let not_observed: Vec<&str> = r.text.lines().filter(|l| l.starts_with("- Not observed:")).collect();
        let absent: Vec<&LesionSummary> = f.lesions.iter().filter(|l| !l.present).collect();
        prop_assert_eq!(not_observed.len(), usize::from(!absent.is_empty() && absent.len() < 4));
        for l in &f.lesions {
            let label = format!("{} ({})", l.lesion.display_name(), l.lesion.lesion_code());
            prop_assert_eq!(r.text.matches(&label).count(), usize::from(absent.len() < 4), "{}", label);
            if l.present {
                let line = format!("- {label}: {} px", l.pixel_count);
                prop_assert!(r.text.contains(&line), "missing line {line}");
            }
        }
        if absent.len() == 4 {
            prop_assert!(r.text.contains("- No lesions observed."));
        }
    }

    #[test]
    fn digest_separates_distinct_findings(a in findings(), b in findings()) {
        let tpl = ReportTemplate::default_template();
        let (ra, rb) = (render_report(&a, &case(), &tpl).unwrap(), render_report(&b, &case(), &tpl).unwrap());
        prop_assert_eq!(a == b, ra.findings_digest == rb.findings_digest);
    }

    #[test]
    fn dice_is_symmetric_and_bounded(
        (w, h, x, y) in (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            (Just(w), Just(h), prop::collection::vec(0u8..2, n), prop::collection::vec(0u8..2, n))
        })
    ) {
        let mx = LesionMask::new(TaskId::Se, w, h, x).unwrap();
        let my = LesionMask::new(TaskId::Se, w, h, y).unwrap();
        let d = dice(&mx, &my).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice(&my, &mx).unwrap());
        prop_assert_eq!(dice(&mx, &mx).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_ignores_pair_order(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..200), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let a = accuracy(&ConfusionCounts::from_pairs(pairs)).unwrap();
        let b = accuracy(&ConfusionCounts::from_pairs(shuffled)).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

fn pgm(w: usize, h: usize, on: impl Fn(usize) -> bool) -> String {
    let samples: Vec<&str> = (0..w * h).map(|i| if on(i) { "1" } else { "0" }).collect();
    format!("P2\n{w} {h}\n1\n{}\n", samples.join(" "))
}

#[test]
fn segmentation_row_is_unweighted_mean() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // image a: |X| = |Y| = 10, overlap 8 -> 0.8; image b: overlap 9 -> 0.9
    std::fs::write(d.join("t.pgm"), pgm(10, 2, |i| i < 10)).unwrap();
    std::fs::write(d.join("pa.pgm"), pgm(10, 2, |i| (2..12).contains(&i))).unwrap();
    std::fs::write(d.join("pb.pgm"), pgm(10, 2, |i| (1..11).contains(&i))).unwrap();
    std::fs::write(d.join("truth.tsv"), "a\tex\tt.pgm\nb\tex\tt.pgm\n").unwrap();
    std::fs::write(d.join("pred.tsv"), "a\tex\tpa.pgm\nb\tex\tpb.pgm\n").unwrap();
    let t = evaluate_files(&d.join("pred.tsv"), &d.join("truth.tsv")).unwrap();
    assert!((t.rows[0].value - 0.85).abs() < 1e-12);
    assert_eq!(t.rows[0].n, 2);
}

#[test]
fn perfect_predictions_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("m.pgm"), pgm(4, 4, |i| i % 3 == 0)).unwrap();
    std::fs::write(d.join("e.pgm"), pgm(4, 4, |_| false)).unwrap();
    let mut truth = String::new();
    for (i, task) in ["dr_grading", "amd", "glaucoma", "pathological_myopia", "tumor"].iter().enumerate() {
        for j in 0..5 {
            let label = if *task == "dr_grading" { j } else { (i + j) % 2 };
            let _ = writeln!(truth, "{task}-{j}\t{task}\t{label}\tset-{}", j % 2);
        }
    }
    for task in ["ex", "se", "ma", "he"] {
        let _ = writeln!(truth, "{task}-0\t{task}\tm.pgm\tset-0");
        let _ = writeln!(truth, "{task}-1\t{task}\te.pgm\tset-0");
    }
    std::fs::write(d.join("truth.tsv"), &truth).unwrap();
    let t = evaluate_files(&d.join("truth.tsv"), &d.join("truth.tsv")).unwrap();
    assert_eq!(t.rows.len(), 5 * 2 + 4);
    assert!(t.rows.iter().all(|r| r.value == 1.0));
    let text = t.render_text();
    assert!(text.contains("DR_class_model (set-1)        1.000  --"), "{text}");
    assert!(text.contains("SE_seg_model (set-0)          --     1.000"), "{text}");
}

#[test]
fn dims_mismatch_is_reported_with_case() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.pgm"), pgm(2, 2, |_| true)).unwrap();
    std::fs::write(d.join("b.pgm"), pgm(3, 2, |_| true)).unwrap();
    std::fs::write(d.join("truth.tsv"), "c9\tma\ta.pgm\n").unwrap();
    std::fs::write(d.join("pred.tsv"), "c9\tma\tb.pgm\n").unwrap();
    let err = evaluate_files(&d.join("pred.tsv"), &d.join("truth.tsv")).unwrap_err();
    assert!(err.to_string().contains("case c9: dims-mismatch"), "{err}");
}
