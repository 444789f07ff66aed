use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include "lvlab.h"

int main(void) {
    double extent[1] = {1.0};
    uintptr_t nodes[1] = {17};
    LvGrid *g = NULL;
    if (lv_grid_new(1, extent, nodes, &g) != LV_STATUS_OK) return 10;
    double d[2] = {1.0, 0.5}, m[2] = {1.0, 0.8}, a[4] = {1.0, 0.5, 0.4, 1.0};
    LvSystem *s = NULL;
    if (lv_system_new_constant(g, 2, d, m, a, false, &s) != LV_STATUS_OK) return 11;
    double out[34], res;
    if (lv_newton_equilibrium(s, NULL, out, &res) != LV_STATUS_OK) return 12;
    printf("%.12f %.12f\n", out[0], out[17]);
    if (lv_grid_new(1, NULL, nodes, &g) != LV_STATUS_NULL_POINTER) return 13;
    char msg[64];
    lv_last_error(msg, sizeof msg);
    printf("%s\n", msg);
    lv_system_free(s);
    lv_grid_free(g);
    return 0;
}
"#;

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(manifest().join("include/lvlab.h")).unwrap();
    for name in [
        "lv_last_error",
        "lv_grid_new",
        "lv_grid_free",
        "lv_grid_node_count",
        "lv_system_new_constant",
        "lv_system_set_field",
        "lv_system_free",
        "lv_system_species_count",
        "lv_simulate",
        "lv_newton_equilibrium",
        "lv_solve_bounds_f1",
        "lv_diagonal_lyapunov_search",
        "typedef struct LvGrid LvGrid",
        "typedef struct LvSystem LvSystem",
        "LV_STATUS_PANIC = 4",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

fn static_lib() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().join("liblvlab_ffi.a")
}

#[test]
fn c_program_links_against_static_library() {
    let lib = static_lib();
    assert!(lib.exists(), "missing {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let cc = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("cc runs");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let text = String::from_utf8(run.stdout).unwrap();
    let mut lines = text.lines();
    let vals: Vec<f64> = lines.next().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
    assert!((vals[0] - 0.75).abs() < 1e-9 && (vals[1] - 0.5).abs() < 1e-9);
    assert_eq!(lines.next(), Some("extent is null"));
}
