//! Fixture builders shared by the integration tests and the
//! `make_fixtures` example.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE_CASE: &str = "fixture-001";
pub const FIXTURE_DIMS: (u32, u32) = (1000, 1000);
pub const DR_PROBS: [f64; 5] = [0.02, 0.03, 0.05, 0.10, 0.80];
pub const EX_PIXELS: usize = 200;

/// Expected per-model values in table order.
pub const TABLE_TARGETS: [(&str, f64); 9] = [
    ("dr_grading", 0.970),
    ("glaucoma", 0.940),
    ("pathological_myopia", 0.998),
    ("amd", 0.984),
    ("tumor", 0.999),
    ("ex", 0.854),
    ("he", 0.805),
    ("ma", 0.699),
    ("se", 0.812),
];

pub fn pgm(width: u32, height: u32, on: impl Fn(usize) -> bool) -> String {
    let mut s = format!("P2\n{width} {height}\n255\n");
    for y in 0..height as usize {
        let row: Vec<&str> = (0..width as usize)
            .map(|x| if on(y * width as usize + x) { "255" } else { "0" })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Oracle sidecars for the golden case: PDR, all binary tasks normal, 200 px
/// of hard exudates and no other lesion. Returns the manifest path.
pub fn write_oracle_fixture(dir: &Path) -> PathBuf {
    let side = dir.join("sidecars");
    fs::create_dir_all(&side).unwrap();
    let (w, h) = FIXTURE_DIMS;
    let mut manifest = String::from("case_id\ttask\tsidecar_path\n");
    let mut add = |task: &str, name: String, body: String| {
        fs::write(side.join(&name), body).unwrap();
        let _ = writeln!(manifest, "{FIXTURE_CASE}\t{task}\tsidecars/{name}");
    };
    let dr: Vec<String> = DR_PROBS.iter().map(|p| p.to_string()).collect();
    add("dr_grading", "dr_grading.txt".into(), dr.join(" ") + "\n");
    for t in ["amd", "glaucoma", "pathological_myopia", "tumor"] {
        add(t, format!("{t}.txt"), "0.9 0.1\n".into());
    }
    for t in ["ex", "se", "ma", "he"] {
        let n = if t == "ex" { EX_PIXELS } else { 0 };
        // the lesion sits in a 20x10 block near the centre
        let body = pgm(w, h, |i| {
            let (x, y) = (i % w as usize, i / w as usize);
            n > 0 && (490..510).contains(&x) && (495..505).contains(&y)
        });
        add(t, format!("{t}.pgm"), body);
    }
    let path = dir.join("manifest.tsv");
    fs::write(&path, manifest).unwrap();
    path
}

pub fn write_case_list(dir: &Path) -> PathBuf {
    let path = dir.join("cases.tsv");
    let (w, h) = FIXTURE_DIMS;
    fs::write(&path, format!("case_id\timage_path\twidth\theight\n{FIXTURE_CASE}\timages/{FIXTURE_CASE}.png\t{w}\t{h}\n")).unwrap();
    path
}

pub fn golden_report() -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pdr_ex.txt")).unwrap()
}

/// Evaluation fixtures hitting every table target exactly.
///
/// Classification: 1000 seeded ground-truth labels per task, of which
/// `round(1000 * target)` predictions agree. Segmentation: two 40x50 images
/// per lesion with |X| = |Y| = 1000 and |X ∩ Y| = 1000 * target, so each
/// image and the mean score `target`.
pub fn write_eval_fixtures(dir: &Path) -> (PathBuf, PathBuf) {
    let masks = dir.join("masks");
    fs::create_dir_all(&masks).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2023);
    let mut pred = String::from("case_id\ttask\tlabel_or_mask\n");
    let mut truth = pred.clone();
    for (task, target) in TABLE_TARGETS {
        let classes = match task {
            "dr_grading" => Some(5usize),
            "glaucoma" | "pathological_myopia" | "amd" | "tumor" => Some(2),
            _ => None,
        };
        if let Some(k) = classes {
            let n = 1000usize;
            let hits = (target * n as f64).round() as usize;
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut agree = vec![false; n];
            for &i in &idx[..hits] {
                agree[i] = true;
            }
            for (i, &ok) in agree.iter().enumerate() {
                let t = rng.gen_range(0..k);
                let p = if ok { t } else { (t + rng.gen_range(1..k)) % k };
                let case = format!("{task}-{i:04}");
                let _ = writeln!(truth, "{case}\t{task}\t{t}");
                let _ = writeln!(pred, "{case}\t{task}\t{p}");
            }
        } else {
            let inter = (target * 1000.0).round() as usize;
            for i in 0..2 {
                let case = format!("{task}-{i:04}");
                let t_name = format!("{case}.truth.pgm");
                let p_name = format!("{case}.pred.pgm");
                fs::write(masks.join(&t_name), pgm(40, 50, |px| px < 1000)).unwrap();
                let start = 1000 - inter;
                fs::write(masks.join(&p_name), pgm(40, 50, |px| (start..start + 1000).contains(&px))).unwrap();
                let _ = writeln!(truth, "{case}\t{task}\tmasks/{t_name}");
                let _ = writeln!(pred, "{case}\t{task}\tmasks/{p_name}");
            }
        }
    }
    let (p, t) = (dir.join("pred.tsv"), dir.join("truth.tsv"));
    fs::write(&p, pred).unwrap();
    fs::write(&t, truth).unwrap();
    (p, t)
}

pub fn eval_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval")
}

const DISEASES: [&str; 8] = [
    "glaucoma",
    "cataract",
    "diabetic retinopathy",
    "age-related macular degeneration",
    "retinal detachment",
    "pathological myopia",
    "uveitis",
    "keratoconus",
];

const SCENARIOS: [&str; 5] = [
    "imaging_description",
    "causes_symptoms",
    "diagnosis_examination",
    "treatment_prevention",
    "prognosis_lifestyle",
];

/// Seeded knowledge records as JSON values with distinct facts.
pub fn knowledge_records(seed: u64, n: usize) -> Vec<serde_json::Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let disease = DISEASES[rng.gen_range(0..DISEASES.len())];
            let scenario = SCENARIOS[i % SCENARIOS.len()];
            let facts: Vec<String> = (0..rng.gen_range(2..5))
                .map(|j| format!("fact {i}-{j}: {disease} finding code {:08x}", rng.gen::<u32>()))
                .collect();
            serde_json::json!({ "disease": disease, "scenario": scenario, "facts": facts })
        })
        .collect()
}

/// Seeded patient/doctor dialogues, all mentioning an eye condition.
pub fn raw_dialogues(seed: u64, n: usize) -> Vec<serde_json::Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let disease = DISEASES[rng.gen_range(0..DISEASES.len())];
            serde_json::json!({
                "source_id": format!("dlg-{i:03}"),
                "turns": [
                    { "speaker": "patient", "text": format!("My eye has been blurry for {} weeks, could it be {disease}?", rng.gen_range(1..20)) },
                    { "speaker": "doctor", "text": format!("Blurry vision can come from {disease}; case note {:06x}.", rng.gen::<u32>()) },
                    { "speaker": "patient", "text": "What examination should I book?" },
                    { "speaker": "doctor", "text": format!("Book a dilated fundus exam, reference {i}.") },
                ]
            })
        })
        .collect()
}
