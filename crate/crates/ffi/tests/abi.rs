use std::ffi::{c_char, CStr, CString};
use std::ptr;

use stateshift_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    ss_string_free(s);
    out
}

unsafe fn last_error() -> String {
    let p = ss_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

const DATA: &str = concat!(
    r#"{"id":"a","context":["Fill the pot."],"action":"Boil the water.","entity":"water","changes":["temperature"],"split":"test"}"#,
    "\n",
    r#"{"id":"b","context":[],"action":"Paint the fence.","entity":"fence","changes":["color"],"split":"test"}"#,
    "\n",
);

unsafe fn openpi() -> *mut SsVocabulary {
    let mut v = ptr::null_mut();
    assert_eq!(ss_vocabulary_builtin(c("openpi").as_ptr(), &mut v), SsStatus::Ok);
    v
}

unsafe fn dataset(v: *const SsVocabulary) -> *mut SsDataset {
    let mut d = ptr::null_mut();
    let status = ss_dataset_parse(c(DATA).as_ptr(), c("canonical_jsonl").as_ptr(), v, false, &mut d);
    assert_eq!(status, SsStatus::Ok);
    d
}

#[test]
fn vocabulary_handles() {
    unsafe {
        let v = openpi();
        assert_eq!(ss_vocabulary_len(v), 92);
        let mut out = ptr::null_mut();
        assert_eq!(ss_vocabulary_canonicalize(v, c(" Temperature ").as_ptr(), &mut out), SsStatus::Ok);
        assert_eq!(take(out), "temperature");
        assert_eq!(ss_vocabulary_canonicalize(v, c("flavorfulness").as_ptr(), &mut out), SsStatus::UnknownAttribute);
        assert!(last_error().contains("flavorfulness"));
        ss_vocabulary_free(v);

        let mut bad = ptr::null_mut();
        assert_eq!(ss_vocabulary_builtin(c("klingon").as_ptr(), &mut bad), SsStatus::Invalid);
        assert!(bad.is_null());
        assert_eq!(ss_vocabulary_builtin(ptr::null(), &mut bad), SsStatus::NullArgument);
    }
}

#[test]
fn render_parse_round_trip() {
    unsafe {
        let v = openpi();
        let d = dataset(v);
        assert_eq!(ss_dataset_len(d), 2);
        let mut json = ptr::null_mut();
        let status = ss_render(d, 0, c("multi").as_ptr(), c("temperature, color, size").as_ptr(), &mut json);
        assert_eq!(status, SsStatus::Ok, "{}", last_error());
        let request = take(json);
        assert!(request.contains("Boil the water."));

        let mut parsed = ptr::null_mut();
        let status = ss_parse_output(v, c(&request).as_ptr(), c("temperature").as_ptr(), false, &mut parsed);
        assert_eq!(status, SsStatus::Ok, "{}", last_error());
        let parsed: serde_json::Value = serde_json::from_str(&take(parsed)).unwrap();
        assert_eq!(parsed["predicted"], serde_json::json!(["temperature"]));

        assert_eq!(ss_render(d, 5, c("zero").as_ptr(), ptr::null(), &mut json), SsStatus::OutOfRange);
        assert_eq!(
            ss_render(d, 0, c("single").as_ptr(), c("color,size").as_ptr(), &mut json),
            SsStatus::Invalid
        );
        ss_dataset_free(d);
        ss_vocabulary_free(v);
    }
}

#[test]
fn partition_is_seeded() {
    unsafe {
        let v = openpi();
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ss_partition(v, c("x").as_ptr(), 9, &mut a), SsStatus::Ok);
        assert_eq!(ss_partition(v, c("x").as_ptr(), 9, &mut b), SsStatus::Ok);
        let (a, b) = (take(a), take(b));
        assert_eq!(a, b);
        let plan: serde_json::Value = serde_json::from_str(&a).unwrap();
        let q = plan["q"].as_u64().unwrap();
        assert!((1..=5).contains(&q));
        ss_vocabulary_free(v);
    }
}

#[test]
fn micro_score_from_records() {
    unsafe {
        let v = openpi();
        let d = dataset(v);
        let records = concat!(
            r#"{"instance_id":"a","strategy":"multi","queried":["temperature","color"],"predicted":["temperature","color"]}"#,
            "\n",
            r#"{"instance_id":"b","strategy":"multi","queried":["temperature","color"],"predicted":[]}"#,
            "\n",
        );
        let mut out = ptr::null_mut();
        let status = ss_micro_score(d, c(records).as_ptr(), &mut out);
        assert_eq!(status, SsStatus::Ok, "{}", last_error());
        let s: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!((s["tp"].as_u64(), s["fp"].as_u64(), s["fn"].as_u64()), (Some(1), Some(1), Some(1)));
        assert_eq!(s["f1"], 0.5);

        let conflict = concat!(
            r#"{"instance_id":"a","strategy":"multi","queried":["color"],"predicted":["color"]}"#,
            "\n",
            r#"{"instance_id":"a","strategy":"multi","queried":["color"],"predicted":[]}"#,
        );
        assert_eq!(ss_micro_score(d, c(conflict).as_ptr(), &mut out), SsStatus::ConflictingVerdict);
        assert_eq!(ss_micro_score(d, c("{nope").as_ptr(), &mut out), SsStatus::Malformed);
        ss_dataset_free(d);
        ss_vocabulary_free(v);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/stateshift.h")).unwrap();
    for name in ["ss_last_error", "ss_string_free", "ss_render", "ss_partition", "ss_micro_score", "SS_STATUS_OK"] {
        assert!(header.contains(name), "{name}");
    }
}
