use gfl_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = gfl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn system(id: &str, params: Option<&str>) -> Result<*mut GflSystem, (GflStatus, String)> {
    let id = CString::new(id).unwrap();
    let params = params.map(|p| CString::new(p).unwrap());
    let mut sys = ptr::null_mut();
    let status = unsafe { gfl_system_new(id.as_ptr(), params.as_ref().map_or(ptr::null(), |p| p.as_ptr()), &mut sys) };
    if status == GflStatus::Ok {
        Ok(sys)
    } else {
        assert!(sys.is_null());
        Err((status, last_error()))
    }
}

#[test]
fn quadratic_run_through_handles() {
    let sys = system("quadratic", Some(r#"{"n": 1}"#)).unwrap();
    unsafe {
        assert_eq!(gfl_system_dim(sys), 1);
        let u0 = [1.0];
        let mut traj = ptr::null_mut();
        assert_eq!(gfl_run(sys, u0.as_ptr(), 1, 1.0, 10, &mut traj), GflStatus::Ok);
        assert_eq!(gfl_trajectory_len(traj), 11);
        let (mut t, mut u) = (0.0, [0.0]);
        assert_eq!(gfl_trajectory_node(traj, 10, &mut t, u.as_mut_ptr(), 1), GflStatus::Ok);
        assert_eq!(t, 1.0);
        assert!((u[0] - 1.1f64.powi(-10)).abs() < 1e-13);
        let mut r = f64::NAN;
        assert_eq!(gfl_edb_residual(sys, traj, &mut r), GflStatus::Ok);
        assert!(r.is_finite() && r.abs() < 0.1, "{r}");
        assert_eq!(gfl_trajectory_node(traj, 11, &mut t, u.as_mut_ptr(), 1), GflStatus::InvalidArgument);
        gfl_trajectory_free(traj);
        gfl_system_free(sys);
    }
}

#[test]
fn eris_runs_use_the_default_datum() {
    let sys = system("eris_toy", None).unwrap();
    unsafe {
        let (mut t_end, mut steps) = (0.0, 0usize);
        assert_eq!(gfl_system_defaults(sys, &mut t_end, &mut steps), GflStatus::Ok);
        let mut traj = ptr::null_mut();
        assert_eq!(gfl_run(sys, ptr::null(), 0, t_end, steps, &mut traj), GflStatus::Ok);
        let (mut t, mut u) = (0.0, [f64::NAN]);
        assert_eq!(gfl_trajectory_node(traj, steps, &mut t, u.as_mut_ptr(), 1), GflStatus::Ok);
        assert!((u[0] - 1.0).abs() < 1e-10, "{}", u[0]);
        let mut r = 0.0;
        assert_eq!(gfl_edb_residual(sys, traj, &mut r), GflStatus::InvalidArgument);
        gfl_trajectory_free(traj);
        gfl_system_free(sys);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let (status, msg) = system("no_such_system", None).unwrap_err();
    assert_eq!(status, GflStatus::InvalidArgument);
    assert!(msg.contains("no_such_system"), "{msg}");
    let (status, msg) = system("quadratic", Some("{not json")).unwrap_err();
    assert_eq!(status, GflStatus::InvalidArgument);
    assert!(msg.contains("parameters"), "{msg}");
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(gfl_system_new(ptr::null(), ptr::null(), &mut out), GflStatus::NullPointer);
        let sys = system("quadratic", None).unwrap();
        let mut traj = ptr::null_mut();
        let u0 = [1.0];
        assert_eq!(gfl_run(sys, u0.as_ptr(), 1, 1.0, 4, &mut traj), GflStatus::InvalidArgument);
        assert_eq!(gfl_run(sys, ptr::null(), 0, 1.0, 0, &mut traj), GflStatus::InvalidArgument);
        assert!(traj.is_null());
        gfl_system_free(sys);
        gfl_system_free(ptr::null_mut());
        gfl_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn system_list_is_json() {
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(gfl_list_systems(&mut s), GflStatus::Ok);
        let text = CStr::from_ptr(s).to_str().unwrap().to_owned();
        gfl_string_free(s);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.as_array().unwrap().iter().any(|e| e["id"] == "wiggly"));
    }
    let version = unsafe { CStr::from_ptr(gfl_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn scenario_runs_write_reports() {
    let dir = tempfile::TempDir::new().unwrap();
    let file = dir.path().join("s.toml");
    std::fs::write(&file, "system = \"eris_toy\"\nT = 2.0\nN = 20\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gfl_run_scenario(path.as_ptr(), out.as_ptr()) }, GflStatus::Ok);
    assert!(dir.path().join("out/report.json").exists());
    std::fs::write(&file, "system = \"eris_toy\"\nN = -1\n").unwrap();
    assert_eq!(unsafe { gfl_run_scenario(path.as_ptr(), out.as_ptr()) }, GflStatus::InvalidArgument);
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gfl.h");
    let status = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
}
