use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

fn collect(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        let path = e.path();
        if path.is_dir() {
            collect(&path, out);
        } else if path.extension().is_some_and(|x| x == "rs" || x == "toml") {
            out.push(path);
        }
    }
}

// Content hash over both crates' sources and manifests, git blob style per file.
fn main() {
    let root = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap()).join("..");
    let mut files = Vec::new();
    for krate in ["core", "harness"] {
        let base = root.join(krate);
        collect(&base.join("src"), &mut files);
        files.push(base.join("Cargo.toml"));
        println!("cargo:rerun-if-changed={}", base.join("src").display());
        println!("cargo:rerun-if-changed={}", base.join("Cargo.toml").display());
    }
    files.sort();
    let mut total = Sha256::new();
    for f in &files {
        let bytes = fs::read(f).unwrap_or_default();
        let mut blob = Sha256::new();
        blob.update(format!("blob {}\0", bytes.len()).as_bytes());
        blob.update(&bytes);
        let rel = f.strip_prefix(&root).unwrap_or(f);
        total.update(rel.to_string_lossy().as_bytes());
        total.update(blob.finalize());
    }
    let hex: String = total.finalize().iter().map(|b| format!("{b:02x}")).collect();
    println!("cargo:rustc-env=PSPIN_CODE_HASH={}", &hex[..16]);
}
