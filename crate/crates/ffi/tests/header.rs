use std::path::Path;
use std::process::Command;

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/omics_bnp.h");

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(HEADER).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 10);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "omics_bnp.h"
int main(void) {
    OmbDataset *ds = omb_dataset_new();
    double v[4] = {0.1, 0.2, 0.3, 0.4};
    OmbStatus s = omb_dataset_add_platform(ds, v, 2, 2, OMB_TRANSFORM_IDENTITY);
    OmbFit *fit = NULL;
    if (s == OMB_STATUS_OK) s = omb_fit_stage1(ds, NULL, 1, &fit);
    omb_fit_free(fit);
    omb_dataset_free(ds);
    return s == OMB_STATUS_OK ? 0 : 1;
}
"#,
    )
    .unwrap();
    let include = Path::new(HEADER).parent().unwrap();
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(include)
        .arg(&src)
        .status()
        .expect("a C compiler is required for this test");
    assert!(status.success());
}
