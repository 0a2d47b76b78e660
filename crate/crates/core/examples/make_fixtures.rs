//! Writes a runnable demo directory: oracle sidecars for the golden case,
//! a case list, evaluation fixtures and a config file.
//!
//! cargo run -p ophglm --example make_fixtures -- <out-dir>

#[path = "../tests/common/mod.rs"]
mod common;

use std::path::PathBuf;

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&out).expect("create output dir");
    let manifest = common::write_oracle_fixture(&out.join("oracle"));
    let cases = common::write_case_list(&out);
    let (pred, truth) = common::write_eval_fixtures(&out.join("eval"));
    std::fs::write(
        out.join("ophglm.toml"),
        "[inference]\nbackend = \"oracle\"\nmanifest = \"oracle/manifest.tsv\"\n\n[llm]\nkind = \"mock\"\n\n[service]\nbind = \"127.0.0.1:8080\"\ndata_dir = \"data\"\n",
    )
    .expect("write config");
    for p in [manifest, cases, pred, truth, out.join("ophglm.toml")] {
        println!("{}", p.display());
    }
}
