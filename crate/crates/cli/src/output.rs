use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::pipeline::Artifacts;

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json values serialize");
    s.push(b'\n');
    s
}

/// Writes every artifact plus `expectations.json`, then `manifest.json`
/// listing each file with its size and sha256. Paths in the manifest are
/// relative so that output directories can be compared byte for byte.
pub fn write_all(
    dir: &Path,
    header: Value,
    config_text: &str,
    art: &Artifacts,
    expectations: &Value,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(String, Vec<u8>)> = art
        .json
        .iter()
        .map(|(n, v)| (n.clone(), pretty(v)))
        .chain(art.csv.iter().map(|(n, t)| (n.clone(), t.clone().into_bytes())))
        .collect();
    files.push(("expectations.json".into(), pretty(expectations)));
    files.sort_by(|a, b| a.0.cmp(&b.0));

    let mut listed = Vec::new();
    for (name, bytes) in &files {
        fs::write(dir.join(name), bytes)?;
        listed.push(json!({ "path": name, "bytes": bytes.len(), "sha256": hex(bytes) }));
    }
    let mut manifest = header;
    manifest["config_sha256"] = json!(hex(config_text.as_bytes()));
    manifest["files"] = Value::Array(listed);
    fs::write(dir.join("manifest.json"), pretty(&manifest))
}
