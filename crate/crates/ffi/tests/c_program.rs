//! Compiles a small C program against the generated header and the static
//! library, then runs it on a freshly trained fixture model.

mod common;

use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "triple_score.h"

int main(int argc, char **argv) {
    if (argc != 3) return 64;
    TsEngine *engine = NULL;
    if (ts_engine_open(argv[1], argv[2], &engine) != TS_STATUS_OK) {
        char msg[256];
        ts_last_error_message(msg, sizeof msg);
        fprintf(stderr, "open failed: %s\n", msg);
        return 1;
    }
    uint8_t score = 255;
    if (ts_engine_score(engine, "nobody", "profession", "Actor", &score) != TS_STATUS_OK) return 2;
    printf("absent=%u\n", score);
    if (ts_engine_score(engine, "p01", "profession", "Footballer", &score) != TS_STATUS_OK) return 3;
    printf("positive=%u\n", score);
    if (ts_engine_score(engine, "p01", "profession", "Lawyer", &score) != TS_STATUS_OK) return 4;
    printf("negative=%u\n", score);
    TsStatus st = ts_engine_score(engine, "p01", "profession", "Astronaut", &score);
    printf("unknown=%d\n", (int)st);
    ts_engine_free(engine);

    uint8_t a[] = {7, 5, 2}, b[] = {5, 7, 2};
    double tau = 0.0;
    if (ts_kendall_tau_b(a, b, 3, &tau) != TS_STATUS_OK) return 5;
    printf("tau=%.6f\n", tau);
    return 0;
}
"#;

fn staticlib() -> Option<PathBuf> {
    let exe = env::current_exe().ok()?;
    let deps = exe.parent()?;
    [deps.parent()?, deps]
        .iter()
        .map(|d| d.join("libtriple_score_ffi.a"))
        .find(|p| p.exists())
}

fn compiler() -> Option<String> {
    let cc = env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok()?.status.success().then_some(cc)
}

#[test]
fn c_program_links_and_scores() {
    let (Some(cc), Some(lib)) = (compiler(), staticlib()) else {
        eprintln!("skipping: no C compiler or static library found");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::trained_workdir(&dir.path().join("work"));
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    fs::write(&src, PROGRAM).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");

    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");

    let out = Command::new(&bin)
        .arg(cfg.index_path())
        .arg(cfg.model_dir())
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        stdout,
        "absent=3\npositive=7\nnegative=0\nunknown=7\ntau=0.333333\n"
    );
}
