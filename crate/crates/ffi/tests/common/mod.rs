use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// 10x10 case `c1`: DR grade 2, tumor positive, 3 px of microaneurysms.
pub fn small_oracle(dir: &Path) -> PathBuf {
    let mut manifest = String::new();
    let mut add = |task: &str, body: String| {
        let name = format!("{task}.txt");
        std::fs::write(dir.join(&name), body).unwrap();
        let _ = writeln!(manifest, "c1\t{task}\t{name}");
    };
    add("dr_grading", "0.1 0.1 0.6 0.1 0.1".into());
    for t in ["amd", "glaucoma", "pathological_myopia"] {
        add(t, "0.8 0.2".into());
    }
    add("tumor", "0.3 0.7".into());
    for t in ["ex", "se", "ma", "he"] {
        let on = if t == "ma" { 3 } else { 0 };
        let samples: Vec<&str> = (0..100).map(|i| if i < on { "1" } else { "0" }).collect();
        add(t, format!("P2\n10 10\n1\n{}\n", samples.join(" ")));
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest).unwrap();
    path
}
