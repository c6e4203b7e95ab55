use std::ffi::{CStr, CString};
use std::ptr;

use vbomi_ffi::*;

fn last_error() -> String {
    let mut needed = 0usize;
    unsafe { vbomi_last_error(ptr::null_mut(), 0, &mut needed) };
    let mut buf = vec![0 as std::ffi::c_char; needed];
    assert_eq!(
        unsafe { vbomi_last_error(buf.as_mut_ptr(), buf.len(), &mut needed) },
        VbomiStatus::Ok
    );
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

const TOML: &str = "[objective]\nname = \"quadratic\"\ndim = 2\n[vbo]\nwarmup_steps = 2\niterations = 3\nbatch = 4\n";

fn config(text: &str) -> (VbomiStatus, *mut VbomiConfig) {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let s = unsafe { vbomi_config_from_toml(c.as_ptr(), &mut cfg) };
    (s, cfg)
}

#[test]
fn run_round_trip() {
    let (s, cfg) = config(TOML);
    assert_eq!(s, VbomiStatus::Ok);
    let method = CString::new("vbo").unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { vbomi_run(cfg, method.as_ptr(), 7, &mut run) }, VbomiStatus::Ok);

    let (mut iters, mut evals, mut dim, mut done) = (0usize, 0usize, 0usize, 0i32);
    assert_eq!(
        unsafe { vbomi_run_info(run, &mut iters, &mut evals, &mut dim, &mut done) },
        VbomiStatus::Ok
    );
    assert_eq!((iters, evals, dim, done), (3, 20, 2, 1));

    let mut best = 0.0;
    let mut x = [0.0; 1];
    assert_eq!(
        unsafe { vbomi_run_best(run, &mut best, x.as_mut_ptr(), 1) },
        VbomiStatus::BufferTooSmall
    );
    let mut x = [0.0; 2];
    assert_eq!(
        unsafe { vbomi_run_best(run, &mut best, x.as_mut_ptr(), 2) },
        VbomiStatus::Ok
    );
    assert!(best <= 0.0 && best.is_finite());

    let mut row = VbomiTraceRow::default();
    assert_eq!(unsafe { vbomi_run_trace(run, 2, &mut row) }, VbomiStatus::Ok);
    assert_eq!(row.iteration, 3);
    assert!(row.best_so_far <= best);
    assert!(row.model_flops > 0);
    assert_eq!(
        unsafe { vbomi_run_trace(run, 3, &mut row) },
        VbomiStatus::InvalidArgument
    );
    assert!(last_error().contains("out of range"));

    unsafe {
        vbomi_run_free(run);
        vbomi_config_free(cfg);
        vbomi_run_free(ptr::null_mut());
        vbomi_config_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_status_codes() {
    let (s, cfg) = config("[vbo]\nbta = 1\n");
    assert_eq!(s, VbomiStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("vbo.bta"));

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { vbomi_config_from_toml(ptr::null(), &mut out) },
        VbomiStatus::NullPointer
    );

    let (_, cfg) = config(TOML);
    let bad = CString::new("bnn").unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(
        unsafe { vbomi_run(cfg, bad.as_ptr(), 0, &mut run) },
        VbomiStatus::Config
    );
    assert!(run.is_null());
    unsafe { vbomi_config_free(cfg) };
}

#[test]
fn flops_and_version() {
    let hmc = CString::new("hmc").unwrap();
    let vbo = CString::new("vbo").unwrap();
    let mut a = VbomiFlopReport::default();
    let mut b = VbomiFlopReport::default();
    assert_eq!(unsafe { vbomi_flops(hmc.as_ptr(), 100, &mut a) }, VbomiStatus::Ok);
    assert_eq!(unsafe { vbomi_flops(vbo.as_ptr(), 100, &mut b) }, VbomiStatus::Ok);
    assert_eq!(a.surrogate_flops, 1_000_000_000);
    assert_eq!(a.acquisition_flops / b.acquisition_flops, 2500);
    assert_eq!(unsafe { vbomi_flops(hmc.as_ptr(), 0, &mut a) }, VbomiStatus::Config);
    let v = unsafe { CStr::from_ptr(vbomi_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn estimate_mi_on_dependent_samples() {
    let n = 512;
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
    let mut est = 0.0;
    assert_eq!(
        unsafe { vbomi_estimate_mi(x.as_ptr(), y.as_ptr(), n, 1, 1, 0, &mut est) },
        VbomiStatus::Ok
    );
    assert!(est > 0.5, "{est}");
    assert_eq!(
        unsafe { vbomi_estimate_mi(x.as_ptr(), y.as_ptr(), 10, 1, 1, 0, &mut est) },
        VbomiStatus::InvalidArgument
    );
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/vbomi.h")).unwrap();
    for f in [
        "vbomi_last_error",
        "vbomi_config_from_toml",
        "vbomi_config_free",
        "vbomi_run(",
        "vbomi_run_free",
        "vbomi_run_info",
        "vbomi_run_best",
        "vbomi_run_trace",
        "vbomi_flops",
        "vbomi_estimate_mi",
        "vbomi_version",
        "VBOMI_STATUS_OK = 0",
    ] {
        assert!(h.contains(f), "{f}");
    }
}

#[test]
fn header_compiles_as_c() {
    // Skipped when no C compiler is installed.
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = std::env::temp_dir().join(format!("vbomi_hdr_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        "#include \"vbomi.h\"\nint main(void) {\n  VbomiConfig *cfg = 0;\n  VbomiStatus s = vbomi_config_from_toml(\"\", &cfg);\n  VbomiTraceRow row;\n  (void)row;\n  vbomi_config_free(cfg);\n  return s == VBOMI_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let out = match std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
    {
        Ok(o) => o,
        Err(_) => return,
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
