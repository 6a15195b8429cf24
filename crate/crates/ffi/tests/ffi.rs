use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use flevr_ffi::*;

fn toy(n: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut s: u64 = 99;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let x: Vec<f64> = (0..n * p).map(|_| next()).collect();
    let y = (0..n).map(|i| (x[i * p] + 0.3 * next() > 0.0) as u8 as f64).collect();
    (x, y)
}

fn last_error() -> String {
    let p = flevr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn select_through_the_c_abi() {
    let (x, y) = toy(300, 4);
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(flevr_dataset_from_arrays(x.as_ptr(), y.as_ptr(), 300, 4, &mut ds), FlevrStatus::Ok);
        let (mut n, mut p) = (0, 0);
        assert_eq!(flevr_dataset_shape(ds, &mut n, &mut p), FlevrStatus::Ok);
        assert_eq!((n, p), (300, 4));

        let mut cfg = flevr_select_config_default();
        cfg.seed = 5;
        let mut sel = ptr::null_mut();
        assert_eq!(flevr_select(ds, &cfg, &mut sel), FlevrStatus::Ok);
        assert!(flevr_last_error().is_null());
        assert_eq!(flevr_selection_num_features(sel), 4);

        let mut set = [usize::MAX; 4];
        let mut len = 0;
        assert_eq!(flevr_selection_final_set(sel, set.as_mut_ptr(), 4, &mut len), FlevrStatus::Ok);
        assert_eq!(&set[..len], &[0]);

        let mut small = [0usize; 0];
        assert_eq!(
            flevr_selection_initial_set(sel, small.as_mut_ptr(), 0, &mut len),
            FlevrStatus::InvalidArgument
        );
        assert_eq!(len, 1);

        let mut psi = [0.0; 4];
        let mut adj = [0.0; 4];
        assert_eq!(flevr_selection_importance(sel, psi.as_mut_ptr(), 4), FlevrStatus::Ok);
        assert_eq!(flevr_selection_p_adjusted(sel, adj.as_mut_ptr(), 4), FlevrStatus::Ok);
        assert!(psi[0] > psi[1].max(psi[2]).max(psi[3]));
        assert!(adj.iter().all(|v| (0.0..=1.0).contains(v)));

        let json: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(flevr_selection_json(sel)).to_str().unwrap()).unwrap();
        assert_eq!(json["final_set"], serde_json::json!([1]));

        // Same handle and seed give the same answer.
        let mut again = ptr::null_mut();
        assert_eq!(flevr_select(ds, &cfg, &mut again), FlevrStatus::Ok);
        let mut psi2 = [0.0; 4];
        flevr_selection_importance(again, psi2.as_mut_ptr(), 4);
        assert_eq!(psi, psi2);

        flevr_selection_free(again);
        flevr_selection_free(sel);
        flevr_dataset_free(ds);
    }
}

#[test]
fn error_codes() {
    let (x, y) = toy(50, 2);
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(flevr_dataset_from_arrays(x.as_ptr(), y.as_ptr(), 50, 2, ptr::null_mut()), FlevrStatus::NullPointer);
        assert_eq!(flevr_dataset_from_arrays(x.as_ptr(), y.as_ptr(), 0, 2, &mut ds), FlevrStatus::InvalidArgument);
        assert!(last_error().contains("at least one row"));

        let path = CString::new("/nonexistent/file.csv").unwrap();
        let outcome = CString::new("y").unwrap();
        assert_eq!(flevr_dataset_from_csv(path.as_ptr(), outcome.as_ptr(), ptr::null(), &mut ds), FlevrStatus::Io);

        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("d.csv");
        std::fs::write(&file, "a,b\n1,2\n").unwrap();
        let path = CString::new(file.to_str().unwrap()).unwrap();
        assert_eq!(
            flevr_dataset_from_csv(path.as_ptr(), outcome.as_ptr(), ptr::null(), &mut ds),
            FlevrStatus::InvalidArgument
        );
        std::fs::write(&file, "y,a\n1,oops\n").unwrap();
        assert_eq!(flevr_dataset_from_csv(path.as_ptr(), outcome.as_ptr(), ptr::null(), &mut ds), FlevrStatus::Parse);

        assert_eq!(flevr_dataset_from_arrays(x.as_ptr(), y.as_ptr(), 50, 2, &mut ds), FlevrStatus::Ok);
        let mut cfg = flevr_select_config_default();
        cfg.mode = FlevrMode::Pfp;
        cfg.q = 1.5;
        let mut sel = ptr::null_mut();
        assert_eq!(flevr_select(ds, &cfg, &mut sel), FlevrStatus::InvalidArgument);
        assert!(sel.is_null());
        assert_eq!(flevr_select(ptr::null(), &cfg, &mut sel), FlevrStatus::NullPointer);
        flevr_dataset_free(ds);
        flevr_dataset_free(ptr::null_mut());
        flevr_selection_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/flevr.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Compile and run a C program against the generated header and the static
/// library built alongside this test.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir: PathBuf = exe.parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libflevr_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let json: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(json["final_set"][0], 1);
}
