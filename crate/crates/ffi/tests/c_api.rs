use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use bimdp_ffi::*;

fn exp1() -> CString {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/configs/exp1.json");
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

fn last_error() -> String {
    let p = bimdp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn flat_and_bilevel_round_trip() {
    unsafe {
        let mut problem = ptr::null_mut();
        assert_eq!(bimdp_problem_from_json(exp1().as_ptr(), &mut problem), BimdpStatus::Ok);
        let mut n = 0usize;
        assert_eq!(bimdp_problem_state_count(problem, &mut n), BimdpStatus::Ok);
        assert_eq!(n, 10 * 10 * 21 * 8 + 1);

        let mut start = std::mem::zeroed();
        assert_eq!(bimdp_problem_start(problem, &mut start), BimdpStatus::Ok);
        assert_eq!((start.x, start.y, start.t), (1, 1, 0));

        let mut sol = ptr::null_mut();
        assert_eq!(bimdp_solve_vi(problem, 1e-6, 10_000, &mut sol), BimdpStatus::Ok);
        assert!(bimdp_flat_converged(sol));
        let (mut v, mut ret) = (0.0, 0.0);
        assert_eq!(bimdp_flat_value(problem, sol, &start, &mut v), BimdpStatus::Ok);
        assert_eq!(bimdp_flat_simulate(problem, sol, &start, 3, &mut ret), BimdpStatus::Ok);
        assert!((v - ret).abs() < 1e-6, "{v} vs {ret}");

        let mut bl = ptr::null_mut();
        assert_eq!(bimdp_solve_bilevel(problem, 1e-6, 10_000, &mut bl), BimdpStatus::Ok);
        // the handle owns what it needs
        bimdp_problem_free(problem);
        let mut summary = BimdpPlanSummary::default();
        assert_eq!(bimdp_bilevel_plan(bl, ptr::null(), 3, &mut summary), BimdpStatus::Ok);
        assert!((summary.discounted_return - v).abs() < 0.05 * v.abs());
        let solved = bimdp_bilevel_ll_solve_count(bl);
        assert_eq!(bimdp_bilevel_plan(bl, &start, 4, &mut summary), BimdpStatus::Ok);
        assert_eq!(summary.new_ll_solves, 0);
        assert_eq!(bimdp_bilevel_ll_solve_count(bl), solved);

        let mut text = ptr::null_mut();
        assert_eq!(bimdp_bilevel_render_ascii(bl, 0, &mut text), BimdpStatus::Ok);
        assert!(CStr::from_ptr(text).to_str().unwrap().contains('S'));
        bimdp_string_free(text);

        bimdp_flat_solution_free(sol);
        bimdp_bilevel_free(bl);
    }
}

#[test]
fn errors_set_thread_local_message() {
    unsafe {
        bimdp_clear_last_error();
        assert!(bimdp_last_error_message().is_null());

        let mut problem = ptr::null_mut();
        let bad = CString::new("{\"width\": 0}").unwrap();
        assert_eq!(bimdp_problem_from_json(bad.as_ptr(), &mut problem), BimdpStatus::Config);
        assert!(problem.is_null());
        assert!(!last_error().is_empty());

        let missing = CString::new("/nonexistent/cfg.json").unwrap();
        assert_eq!(bimdp_problem_load(missing.as_ptr(), &mut problem), BimdpStatus::Io);
        assert!(last_error().contains("nonexistent"));

        assert_eq!(bimdp_problem_from_json(ptr::null(), &mut problem), BimdpStatus::NullPointer);
        let mut n = 0usize;
        assert_eq!(bimdp_problem_state_count(ptr::null(), &mut n), BimdpStatus::NullPointer);

        // errors are per thread
        std::thread::spawn(|| assert!(bimdp_last_error_message().is_null())).join().unwrap();

        bimdp_problem_free(ptr::null_mut());
        bimdp_bilevel_free(ptr::null_mut());
        bimdp_flat_solution_free(ptr::null_mut());
        bimdp_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_state_is_a_config_error() {
    unsafe {
        let mut problem = ptr::null_mut();
        assert_eq!(bimdp_problem_from_json(exp1().as_ptr(), &mut problem), BimdpStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(bimdp_solve_vi(problem, 1e-6, 10_000, &mut sol), BimdpStatus::Ok);
        let off = BimdpState { x: 99, y: 1, t: 0, measured: 0, drilled: 0, visited: 0 };
        let mut v = 0.0;
        assert_eq!(bimdp_flat_value(problem, sol, &off, &mut v), BimdpStatus::Config);
        bimdp_flat_solution_free(sol);
        bimdp_problem_free(problem);
    }
}

#[test]
fn header_is_generated_and_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/bimdp.h")).unwrap();
    for name in ["bimdp_problem_from_json", "bimdp_last_error_message", "bimdp_bilevel_free", "BIMDP_STATUS_OK"] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(dir.join("include/bimdp.h"))
        .output()
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(bimdp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
