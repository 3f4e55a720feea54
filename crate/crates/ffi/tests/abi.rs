use std::ffi::{CStr, CString};
use std::ptr;

use voxgan::trainer::{TrainConfig, TrainMode, Trainer};
use voxgan_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = vxg_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn new_grid(n: usize) -> *mut VxgGrid {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { vxg_grid_new(n, &mut g) }, VxgStatus::Ok);
    g
}

fn tiny_checkpoint(dir: &std::path::Path, mode: TrainMode) -> CString {
    let mut c = TrainConfig::new(mode, 8, 4);
    c.batch_size = 2;
    c.gen_channels = Some(vec![4, 2, 1]);
    c.disc_channels = Some(vec![2, 4]);
    c.enc_channels = Some(vec![2, 4]);
    let path = dir.join(format!("{}.vxgn", mode.as_str()));
    Trainer::new(c).unwrap().save(&path).unwrap();
    cstr(path.to_str().unwrap())
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(vxg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn grid_set_get_count_and_bounds() {
    let g = new_grid(4);
    let mut n = 0usize;
    unsafe {
        assert_eq!(vxg_grid_extent(g, &mut n), VxgStatus::Ok);
        assert_eq!(n, 4);
        assert_eq!(vxg_grid_set(g, 1, 2, 3, 1.0), VxgStatus::Ok);
        let mut v = 0.0;
        assert_eq!(vxg_grid_get(g, 1, 2, 3, &mut v), VxgStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(vxg_grid_count(g, &mut n), VxgStatus::Ok);
        assert_eq!(n, 1);
        assert_eq!(vxg_grid_get(g, 4, 0, 0, &mut v), VxgStatus::OutOfRange);
        assert!(last_error().contains("outside"));
        assert_eq!(vxg_grid_set(g, 0, 0, 0, 1.5), VxgStatus::InvalidArgument);
        assert_eq!(vxg_grid_set(g, 0, 0, 0, 0.0), VxgStatus::Ok);
        assert!(vxg_last_error().is_null());
        vxg_grid_free(g);
    }
}

#[test]
fn null_pointers_are_reported() {
    let mut n = 0usize;
    unsafe {
        assert_eq!(vxg_grid_extent(ptr::null(), &mut n), VxgStatus::NullPointer);
        assert!(last_error().contains("null"));
        let g = new_grid(2);
        assert_eq!(vxg_grid_extent(g, ptr::null_mut()), VxgStatus::NullPointer);
        assert_eq!(vxg_grid_new(2, ptr::null_mut()), VxgStatus::NullPointer);
        assert_eq!(vxg_grid_read(ptr::null(), ptr::null_mut()), VxgStatus::NullPointer);
        vxg_grid_free(g);
        vxg_grid_free(ptr::null_mut());
        vxg_model_free(ptr::null_mut());
    }
}

#[test]
fn files_round_trip_and_errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let g = new_grid(4);
    unsafe {
        for (x, y, z) in [(0, 0, 0), (1, 1, 1), (3, 2, 1)] {
            assert_eq!(vxg_grid_set(g, x, y, z, 1.0), VxgStatus::Ok);
        }
        for name in ["a.binvox", "a.vxg"] {
            let p = cstr(dir.path().join(name).to_str().unwrap());
            assert_eq!(vxg_grid_write(g, p.as_ptr()), VxgStatus::Ok);
            let mut back = ptr::null_mut();
            assert_eq!(vxg_grid_read(p.as_ptr(), &mut back), VxgStatus::Ok);
            let mut v = 0.0;
            assert_eq!(vxg_grid_iou(g, back, &mut v), VxgStatus::Ok);
            assert_eq!(v, 1.0);
            vxg_grid_free(back);
        }
        let mut out = ptr::null_mut();
        let missing = cstr(dir.path().join("missing.vxg").to_str().unwrap());
        assert_eq!(vxg_grid_read(missing.as_ptr(), &mut out), VxgStatus::Io);
        assert!(out.is_null());

        let bad = dir.path().join("bad.vxg");
        std::fs::write(&bad, b"nope").unwrap();
        let bad = cstr(bad.to_str().unwrap());
        assert_eq!(vxg_grid_read(bad.as_ptr(), &mut out), VxgStatus::Format);

        let vxg = dir.path().join("a.vxg");
        let mut bytes = std::fs::read(&vxg).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&vxg, bytes).unwrap();
        let p = cstr(vxg.to_str().unwrap());
        assert_eq!(vxg_grid_read(p.as_ptr(), &mut out), VxgStatus::Integrity);
        vxg_grid_free(g);
    }
}

#[test]
fn scan_returns_front_shell() {
    let g = new_grid(4);
    unsafe {
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    vxg_grid_set(g, x, y, z, 1.0);
                }
            }
        }
        let mut shell = ptr::null_mut();
        let view = cstr("+z");
        assert_eq!(vxg_grid_scan(g, view.as_ptr(), &mut shell), VxgStatus::Ok);
        let mut n = 0;
        vxg_grid_count(shell, &mut n);
        assert_eq!(n, 16);
        let bad = cstr("+w");
        let mut other = ptr::null_mut();
        assert_ne!(vxg_grid_scan(g, bad.as_ptr(), &mut other), VxgStatus::Ok);
        vxg_grid_free(shell);
        vxg_grid_free(g);
    }
}

#[test]
fn model_generate_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let plain = tiny_checkpoint(dir.path(), TrainMode::Iwgan);
    let vae = tiny_checkpoint(dir.path(), TrainMode::VaeIwgan);
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(vxg_model_load(plain.as_ptr(), &mut m), VxgStatus::Ok);
        let mut res = 0;
        assert_eq!(vxg_model_resolution(m, &mut res), VxgStatus::Ok);
        assert_eq!(res, 8);
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(vxg_model_generate(m, 3, &mut a), VxgStatus::Ok);
        assert_eq!(vxg_model_generate(m, 3, &mut b), VxgStatus::Ok);
        let mut v = 0.0;
        assert_eq!(vxg_grid_iou(a, b, &mut v), VxgStatus::Ok);
        assert_eq!(v, 1.0);
        let mut out = ptr::null_mut();
        assert_eq!(vxg_model_complete(m, a, &mut out), VxgStatus::Model);
        vxg_model_free(m);

        assert_eq!(vxg_model_load(vae.as_ptr(), &mut m), VxgStatus::Ok);
        assert_eq!(vxg_model_complete(m, a, &mut out), VxgStatus::Ok);
        let mut n = 0;
        assert_eq!(vxg_grid_extent(out, &mut n), VxgStatus::Ok);
        assert_eq!(n, 8);
        let small = new_grid(4);
        let mut out2 = ptr::null_mut();
        assert_eq!(vxg_model_complete(m, small, &mut out2), VxgStatus::Data);
        for h in [a, b, out, small] {
            vxg_grid_free(h);
        }
        vxg_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/voxgan.h");
    let src = format!("#include \"{header}\"\nint main(void) {{ return VXG_STATUS_OK; }}\n");
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("check.c");
    std::fs::write(&file, src).unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&file)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
}
