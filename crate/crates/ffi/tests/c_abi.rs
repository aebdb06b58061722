use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use cvrank::engine::{CvSequence, CycleConfig, RankEngine};
use cvrank::metric::PaddedBytes;
use cvrank::store::{Label, Store};
use cvrank::synth::{random_fens, synthetic_stores, Taste, TasteModel};
use cvrank_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = cvr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const ROW1: &str = "8/8/2Q5/1b6/1r6/5B2/k1N5/2K5 w - - 0 1";
const ROW2: &str = "8/5K1k/8/8/7N/1p6/8/B7 w - - 0 1";

#[test]
fn validate_reports_codes_and_messages() {
    unsafe {
        assert_eq!(cvr_fen_validate(c(ROW1).as_ptr()), CvrStatus::Ok);
        assert!(cvr_last_error_message().is_null());

        assert_eq!(
            cvr_fen_validate(c("9/8/8/8/8/8/8/8 w - - 0 1").as_ptr()),
            CvrStatus::MalformedFen
        );
        assert!(last_error().contains("malformed"));
        assert_eq!(
            cvr_fen_validate(c("8/8/8/8/8/8/8/8 w - - 0 1").as_ptr()),
            CvrStatus::IllegalPosition
        );
        assert_eq!(cvr_fen_validate(ptr::null()), CvrStatus::NullPointer);

        let bad_utf8 = [0xffu8, 0];
        assert_eq!(
            cvr_fen_validate(bad_utf8.as_ptr().cast()),
            CvrStatus::InvalidUtf8
        );
    }
}

#[test]
fn change_value_matches_hand_count() {
    let mut cv = -1.0;
    unsafe {
        assert_eq!(
            cvr_change_value(c(ROW1).as_ptr(), c(ROW2).as_ptr(), &mut cv),
            CvrStatus::Ok
        );
        assert_eq!(cv, 30.0 * 100.0 / 128.0);
        assert_eq!(
            cvr_change_value(c(ROW1).as_ptr(), c(ROW1).as_ptr(), &mut cv),
            CvrStatus::Ok
        );
        assert_eq!(cv, 0.0);
        assert_eq!(
            cvr_change_value(c(ROW1).as_ptr(), c(ROW2).as_ptr(), ptr::null_mut()),
            CvrStatus::NullPointer
        );
    }
}

#[test]
fn welch_ttest_through_the_abi() {
    let a = [10.0, 40.0, 70.0, 90.0, 55.0];
    let b = [1.0, 5.0, 9.0, 2.0, 30.0, 4.0];
    let mut out = CvrTTest::default();
    unsafe {
        let st = cvr_welch_ttest(a.as_ptr(), a.len(), b.as_ptr(), b.len(), 0.05, &mut out);
        assert_eq!(st, CvrStatus::Ok);
    }
    let want = cvrank::stats::welch_ttest(&a, &b, 0.05).unwrap();
    assert_eq!(
        (out.t, out.df, out.p, out.significant),
        (want.t, want.df, want.p, want.significant)
    );

    unsafe {
        let st = cvr_welch_ttest(a.as_ptr(), 1, b.as_ptr(), b.len(), 0.05, &mut out);
        assert_eq!(st, CvrStatus::InvalidArgument);
        let st = cvr_welch_ttest(a.as_ptr(), a.len(), b.as_ptr(), b.len(), 1.5, &mut out);
        assert_eq!(st, CvrStatus::InvalidArgument);
        let st = cvr_welch_ttest(ptr::null(), 3, b.as_ptr(), b.len(), 0.05, &mut out);
        assert_eq!(st, CvrStatus::NullPointer);
    }
}

fn fen_list(fens: &[cvrank::fen::FenRecord]) -> CString {
    c(&fens.iter().map(|f| f.text()).collect::<Vec<_>>().join("\n"))
}

#[test]
fn engine_from_fens_matches_the_library() {
    let liked = random_fens(80, 1);
    let disliked = random_fens(90, 2);
    let cands = random_fens(3, 3);
    let seed = 42;

    let mut engine: *mut CvrEngine = ptr::null_mut();
    unsafe {
        let st = cvr_engine_from_fens(
            fen_list(&liked).as_ptr(),
            fen_list(&disliked).as_ptr(),
            seed,
            &mut engine,
        );
        assert_eq!(st, CvrStatus::Ok, "{}", last_error());
        assert_eq!(cvr_engine_cycles(engine), 3);
    }

    let l = CvSequence::from_fens(Label::Liked, liked, &PaddedBytes).unwrap();
    let d = CvSequence::from_fens(Label::Disliked, disliked, &PaddedBytes).unwrap();
    let config = CycleConfig {
        seed,
        ..CycleConfig::default()
    };
    let want = RankEngine::new(&l, &d, config)
        .unwrap()
        .score_all(&cands, Some(1), None)
        .unwrap();

    for (i, (fen, w)) in cands.iter().zip(&want).enumerate() {
        let mut rps = [0.0; 3];
        let mut arp = 0.0;
        unsafe {
            let st = cvr_engine_score(
                engine,
                c(fen.text()).as_ptr(),
                i as u64,
                rps.as_mut_ptr(),
                3,
                &mut arp,
            );
            assert_eq!(st, CvrStatus::Ok, "{}", last_error());
        }
        assert_eq!(arp, w.arp);
        assert_eq!(
            rps.to_vec(),
            w.cycles.iter().map(|c| c.rp).collect::<Vec<_>>()
        );
    }

    unsafe {
        let mut arp = 0.0;
        // Partial and empty RP buffers are fine.
        assert_eq!(
            cvr_engine_score(engine, c(ROW1).as_ptr(), 0, ptr::null_mut(), 0, &mut arp),
            CvrStatus::Ok
        );
        assert_eq!(
            cvr_engine_score(engine, c("bad").as_ptr(), 0, ptr::null_mut(), 0, &mut arp),
            CvrStatus::MalformedFen
        );
        assert_eq!(
            cvr_engine_score(engine, c(ROW1).as_ptr(), 0, ptr::null_mut(), 2, &mut arp),
            CvrStatus::NullPointer
        );
        assert_eq!(
            cvr_engine_score(
                ptr::null(),
                c(ROW1).as_ptr(),
                0,
                ptr::null_mut(),
                0,
                &mut arp
            ),
            CvrStatus::NullPointer
        );
        cvr_engine_free(engine);
        cvr_engine_free(ptr::null_mut());
    }
}

#[test]
fn engine_guards_small_databases() {
    let small = random_fens(20, 5);
    let big = random_fens(70, 6);
    let mut engine: *mut CvrEngine = ptr::null_mut();
    unsafe {
        let st = cvr_engine_from_fens(
            fen_list(&small).as_ptr(),
            fen_list(&big).as_ptr(),
            0,
            &mut engine,
        );
        assert_eq!(st, CvrStatus::Method);
        assert!(engine.is_null());
        assert!(last_error().contains("liked"));

        let st = cvr_engine_from_fens(c("").as_ptr(), fen_list(&big).as_ptr(), 0, &mut engine);
        assert_eq!(st, CvrStatus::Data);
        let st = cvr_engine_from_fens(
            c("not a fen").as_ptr(),
            fen_list(&big).as_ptr(),
            0,
            &mut engine,
        );
        assert_eq!(st, CvrStatus::MalformedFen);
    }
}

#[test]
fn engine_from_store_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut engine: *mut CvrEngine = ptr::null_mut();
    let path = c(dir.path().to_str().unwrap());
    unsafe {
        assert_eq!(
            cvr_engine_from_store(path.as_ptr(), 7, &mut engine),
            CvrStatus::Io
        );
    }

    let taste = Taste::new(9, TasteModel::default());
    let (liked, disliked) = synthetic_stores(&taste, 9, 70, 75);
    let mut store = Store::new(dir.path());
    store.save(&liked, None).unwrap();
    store.save(&disliked, None).unwrap();
    unsafe {
        let st = cvr_engine_from_store(path.as_ptr(), 7, &mut engine);
        assert_eq!(st, CvrStatus::Ok, "{}", last_error());
        let mut arp = -1.0;
        let st = cvr_engine_score(engine, c(ROW1).as_ptr(), 0, ptr::null_mut(), 0, &mut arp);
        assert_eq!(st, CvrStatus::Ok);
        assert!((0.0..=100.0).contains(&arp));
        cvr_engine_free(engine);
    }
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cvrank.h")).unwrap();
    for name in [
        "cvr_last_error_message",
        "cvr_fen_validate",
        "cvr_change_value",
        "cvr_welch_ttest",
        "cvr_engine_from_store",
        "cvr_engine_from_fens",
        "cvr_engine_cycles",
        "cvr_engine_score",
        "cvr_engine_free",
        "typedef struct CvrEngine CvrEngine",
        "CVR_STATUS_METHOD = 7",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    // The test binary lives in <target>/<profile>/deps; the library one level up.
    let exe = std::env::current_exe().unwrap();
    let lib = exe
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("libcvrank_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&prog)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());

    let out = Command::new(&prog).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "change_value 0 23.4375");
    assert!(
        lines[1].starts_with("validate 4 illegal position"),
        "{text}"
    );
    assert_eq!(lines[2], "ttest 0 -1.732051 4.411765 0");
    assert_eq!(lines[3], "engine 7 null");
}
