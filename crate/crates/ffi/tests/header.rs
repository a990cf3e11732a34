use std::path::Path;
use std::process::Command;

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/slzeros.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["slz_weight_new", "slz_basis_solve", "slz_r_n", "slz_kac_rice", "slz_count_zeros", "slz_simulate"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"slzeros.h\"\nint main(void) { SlzWeight *w = 0; return slz_weight_new(\"unit\", 0.0, &w) == SLZ_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
