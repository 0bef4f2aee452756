use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use floodaid_ffi::*;

fn last_error() -> String {
    let p = fa_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn dataset(seed: u64) -> *mut FaDataset {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { fa_dataset_generate(seed, 0, 0, &mut d) }, FaStatus::Ok);
    d
}

fn quick_options(variant: FaVariant) -> FaTrainOptions {
    FaTrainOptions { epochs: 3, variant, ..fa_train_options_default() }
}

#[test]
fn train_predict_save_load() {
    let d = dataset(1);
    let n = unsafe { fa_dataset_len(d) };
    assert_eq!(n, 87);
    let mut m = ptr::null_mut();
    let opts = quick_options(FaVariant::Fair);
    assert_eq!(unsafe { fa_train(d, &opts, &mut m) }, FaStatus::Ok);
    assert_eq!(unsafe { fa_model_parameter_count(m) }, 45_132);

    let mut pred = vec![0.0; n];
    assert_eq!(unsafe { fa_model_predict(m, d, pred.as_mut_ptr(), n) }, FaStatus::Ok);
    assert!(pred.iter().all(|p| p.is_finite() && *p > 0.0));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fa_model_save(m, path.as_ptr()) }, FaStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { fa_model_load(path.as_ptr(), &mut back) }, FaStatus::Ok);
    let mut again = vec![0.0; n];
    assert_eq!(unsafe { fa_model_predict(back, d, again.as_mut_ptr(), n) }, FaStatus::Ok);
    assert_eq!(pred, again);

    let mut scores = vec![0.0; n];
    let mut ranks = vec![0usize; n];
    assert_eq!(
        unsafe { fa_model_priority(back, d, scores.as_mut_ptr(), ranks.as_mut_ptr(), n) },
        FaStatus::Ok
    );
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (1..=n).collect::<Vec<_>>());
    let top = ranks.iter().position(|&r| r == 1).unwrap();
    assert!(scores.iter().all(|s| *s <= scores[top]));

    unsafe {
        fa_model_free(back);
        fa_model_free(m);
        fa_dataset_free(d);
    }
}

#[test]
fn baseline_has_no_adversary() {
    let d = dataset(2);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fa_train(d, &quick_options(FaVariant::Baseline), &mut m) }, FaStatus::Ok);
    assert_eq!(unsafe { fa_model_parameter_count(m) }, 35_393);
    unsafe {
        fa_model_free(m);
        fa_dataset_free(d);
    }
}

#[test]
fn csv_round_trip() {
    let d = dataset(3);
    let n = unsafe { fa_dataset_len(d) };
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fa_dataset_save_csv(d, path.as_ptr()) }, FaStatus::Ok);
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { fa_dataset_load_csv(path.as_ptr(), &mut e) }, FaStatus::Ok);
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { fa_dataset_targets(d, a.as_mut_ptr(), n) }, FaStatus::Ok);
    assert_eq!(unsafe { fa_dataset_targets(e, b.as_mut_ptr(), n) }, FaStatus::Ok);
    assert_eq!(a, b);
    unsafe {
        fa_dataset_free(e);
        fa_dataset_free(d);
    }
}

#[test]
fn errors_are_reported() {
    let mut d = ptr::null_mut();
    let missing = CString::new("/nonexistent/data.csv").unwrap();
    assert_eq!(unsafe { fa_dataset_load_csv(missing.as_ptr(), &mut d) }, FaStatus::Io);
    assert!(d.is_null());
    assert!(last_error().contains("nonexistent"));

    assert_eq!(unsafe { fa_dataset_load_csv(ptr::null(), &mut d) }, FaStatus::NullPointer);
    assert_eq!(unsafe { fa_train(ptr::null(), ptr::null(), &mut ptr::null_mut()) }, FaStatus::NullPointer);

    let data = dataset(4);
    let mut m = ptr::null_mut();
    let bad = FaTrainOptions { lambda: -1.0, ..quick_options(FaVariant::Fair) };
    assert_eq!(unsafe { fa_train(data, &bad, &mut m) }, FaStatus::Config);
    assert!(m.is_null());
    assert!(last_error().contains("lambda"));

    assert_eq!(unsafe { fa_train(data, &quick_options(FaVariant::Fair), &mut m) }, FaStatus::Ok);
    let mut short = vec![0.0; 3];
    assert_eq!(
        unsafe { fa_model_predict(m, data, short.as_mut_ptr(), short.len()) },
        FaStatus::InvalidArgument
    );
    let mut d2 = ptr::null_mut();
    assert_eq!(unsafe { fa_dataset_generate(0, 5, 10, &mut d2) }, FaStatus::Config);

    assert_eq!(unsafe { fa_dataset_len(ptr::null()) }, 0);
    unsafe {
        fa_model_free(ptr::null_mut());
        fa_dataset_free(ptr::null_mut());
        fa_model_free(m);
        fa_dataset_free(data);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(fa_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles the C smoke program against the generated header and the
/// static library built alongside this test.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("libfloodaid_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).arg(dir.path().join("m.json")).output().unwrap();
    assert!(
        out.status.success(),
        "smoke program failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
