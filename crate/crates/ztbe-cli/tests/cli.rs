//! End-to-end tests of the `ztbe` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ztbe")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("ZTBE_WORKERS")
        .output()
        .expect("failed to spawn ztbe")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// rows x cols raw tensor with a word pattern derived from the index.
fn write_raw(path: &Path, rows: u32, cols: u32, word_at: impl Fn(u32) -> u16) {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&cols.to_le_bytes());
    for i in 0..rows * cols {
        bytes.extend_from_slice(&word_at(i).to_le_bytes());
    }
    fs::write(path, bytes).unwrap();
}

/// A plausible weight pattern: exponents clustered on a few values with
/// occasional specials.
fn weight_word(i: u32) -> u16 {
    let h = i.wrapping_mul(2654435761);
    match h % 97 {
        0 => 0x7FC0,          // NaN
        1 => 0x8000,          // -0.0
        2 => (h % 0x80) as u16, // subnormal
        _ => {
            let sign = ((h >> 8) & 1) as u16;
            let exponent = 118 + (h % 5) as u16;
            let mantissa = ((h >> 9) & 0x7F) as u16;
            (sign << 15) | (exponent << 7) | mantissa
        }
    }
}

fn temp_dir(tag: &str) -> TempDir {
    tempfile::Builder::new()
        .prefix(&format!("ztbe-{tag}-"))
        .tempdir()
        .unwrap()
}

#[test]
fn compress_verify_decompress_cycle() {
    let tmp = temp_dir("cycle");
    let dir = tmp.path();
    let raw = dir.join("w.raw");
    write_raw(&raw, 70, 90, weight_word);

    let compressed = dir.join("w.ztbe");
    let out = run(&[
        "compress",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        compressed.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("\"compression_ratio\""));

    let out = run(&["verify", "--input", compressed.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("\"decoders_agree\":true"));

    let out = run(&["verify", "--input", raw.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("bitwise-identical"));

    let back = dir.join("w-back.raw");
    let out = run(&[
        "decompress",
        "--input",
        compressed.to_str().unwrap(),
        "--output",
        back.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&raw).unwrap(), fs::read(&back).unwrap());
}

#[test]
fn compress_is_deterministic_across_worker_counts() {
    let tmp = temp_dir("determinism");
    let dir = tmp.path();
    let raw = dir.join("w.raw");
    write_raw(&raw, 130, 200, weight_word);

    let out_a = dir.join("a.ztbe");
    let out_b = dir.join("b.ztbe");
    let a = run(&[
        "compress",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        out_a.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    let b = run(&[
        "compress",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        out_b.to_str().unwrap(),
        "--workers",
        "4",
    ]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
}

#[test]
fn analyze_reports_statistics_deterministically() {
    let tmp = temp_dir("analyze");
    let dir = tmp.path();
    let raw = dir.join("w.raw");
    write_raw(&raw, 64, 64, weight_word);

    let csv_path = dir.join("hist.csv");
    let first = run(&[
        "analyze",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        csv_path.to_str().unwrap(),
    ]);
    assert!(first.status.success(), "{}", stderr(&first));
    let text = stdout(&first);
    assert!(text.contains("\"entropy_bits\""));
    assert!(text.contains("\"top7_contiguous\""));
    assert!(text.contains("\"expected_cost\""));
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("tensor,exponent,count\n"));

    let second = run(&["analyze", "--input", raw.to_str().unwrap()]);
    assert_eq!(text, stdout(&second));
}

#[test]
fn safetensors_ingestion() {
    let tmp = temp_dir("safetensors");
    let dir = tmp.path();
    let path = dir.join("model.safetensors");

    // Two BF16 tensors and one F32 tensor.
    let header = concat!(
        r#"{"__metadata__":{"format":"pt"},"#,
        r#""dense":{"dtype":"BF16","shape":[8,8],"data_offsets":[0,128]},"#,
        r#""gate":{"dtype":"BF16","shape":[16],"data_offsets":[128,160]},"#,
        r#""scale":{"dtype":"F32","shape":[4],"data_offsets":[160,176]}}"#
    );
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for i in 0..64u32 {
        bytes.extend_from_slice(&weight_word(i).to_le_bytes());
    }
    for i in 0..16u32 {
        bytes.extend_from_slice(&weight_word(i + 1000).to_le_bytes());
    }
    bytes.extend_from_slice(&[0u8; 16]);
    fs::write(&path, bytes).unwrap();

    // All BF16 tensors become one container each.
    let out_dir = dir.join("out");
    let out = run(&[
        "compress",
        "--input",
        path.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("dense.ztbe").is_file());
    assert!(out_dir.join("gate.ztbe").is_file());
    for name in ["dense", "gate"] {
        let verify = run(&[
            "verify",
            "--input",
            out_dir.join(format!("{name}.ztbe")).to_str().unwrap(),
        ]);
        assert!(verify.status.success(), "{name}: {}", stderr(&verify));
    }

    // Selecting one tensor writes a single file.
    let single = dir.join("dense-only.ztbe");
    let out = run(&[
        "compress",
        "--input",
        path.to_str().unwrap(),
        "--tensor",
        "dense",
        "--output",
        single.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(&single).unwrap(),
        fs::read(out_dir.join("dense.ztbe")).unwrap()
    );

    // Non-BF16 tensors are a hard error.
    let out = run(&[
        "compress",
        "--input",
        path.to_str().unwrap(),
        "--tensor",
        "scale",
        "--output",
        dir.join("scale.ztbe").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("dtype F32"), "{}", stderr(&out));
}

#[test]
fn gemm_check_reports_equivalence_and_dispatch() {
    let tmp = temp_dir("gemm");
    let dir = tmp.path();
    let weights = dir.join("w.raw");
    let activations = dir.join("x.raw");
    write_raw(&weights, 96, 64, weight_word);
    write_raw(&activations, 64, 8, |i| {
        let h = i.wrapping_mul(40503).wrapping_add(7);
        ((h % 0x40) as u16) | 0x3E00
    });

    let out = run(&[
        "gemm-check",
        "--weights",
        weights.to_str().unwrap(),
        "--activations",
        activations.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("\"paths_bitwise_equal\":true"));
    assert!(text.contains("\"peak_decoded_elements\":64"));
    assert!(text.contains("\"stage_mode\":\"fused\""));

    let out = run(&[
        "gemm-check",
        "--weights",
        weights.to_str().unwrap(),
        "--activations",
        activations.to_str().unwrap(),
        "--threshold-n",
        "4",
    ]);
    assert!(stdout(&out).contains("\"stage_mode\":\"decoupled\""));
}

#[test]
fn roofline_emits_degradation_table() {
    let out = run(&[
        "roofline", "--m", "4096", "--k", "4096", "--n-list", "8,16,32,64", "--cr", "1.51",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,ci_gemm,ci_decoupled,ci_fused,degradation_pct,fused_gain_pct"
    );
    let first = lines.next().unwrap();
    assert!(first.starts_with("8,7.968872,3.000572,12.009165,62.346,"), "{first}");

    // Hardware columns require both ceiling parameters.
    let out = run(&["roofline", "--m", "64", "--k", "64", "--peak-flops", "1e12"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("together"));

    let out = run(&[
        "roofline",
        "--m",
        "4096",
        "--k",
        "4096",
        "--n-list",
        "1",
        "--cr",
        "1.51",
        "--peak-flops",
        "1e18",
        "--mem-bandwidth",
        "1e12",
    ]);
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().ends_with("predicted_speedup"));
    // Deep memory-bound: the speedup column approaches the ratio.
    assert!(text.lines().nth(1).unwrap().ends_with("1.509624"), "{text}");
}

#[test]
fn warp_trace_prints_lane_details() {
    let tmp = temp_dir("trace");
    let dir = tmp.path();
    let raw = dir.join("w.raw");
    write_raw(&raw, 64, 64, weight_word);
    let compressed = dir.join("w.ztbe");
    assert!(run(&[
        "compress",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        compressed.to_str().unwrap(),
    ])
    .status
    .success());

    let out = run(&[
        "warp-trace",
        "--input",
        compressed.to_str().unwrap(),
        "--block",
        "0",
        "--tct",
        "2",
        "--frag",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("fragment block=0 tct=2 frag=1"));
    assert!(text.contains("indicator=0x"));
    // 64 element lines, one per position.
    assert_eq!(text.lines().filter(|l| l.starts_with("pos ")).count(), 64);
    assert!(text.contains("lane 19"));

    let out = run(&[
        "warp-trace",
        "--input",
        compressed.to_str().unwrap(),
        "--block",
        "9",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("out of range"));
}

#[test]
fn corrupt_container_fails_verify_with_diagnostic() {
    let tmp = temp_dir("corrupt");
    let dir = tmp.path();
    let raw = dir.join("w.raw");
    write_raw(&raw, 64, 64, weight_word);
    let compressed = dir.join("w.ztbe");
    assert!(run(&[
        "compress",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        compressed.to_str().unwrap(),
    ])
    .status
    .success());

    let mut bytes = fs::read(&compressed).unwrap();
    bytes[0] = b'X';
    let bad = dir.join("bad.ztbe");
    fs::write(&bad, &bytes).unwrap();
    let out = run(&["verify", "--input", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("magic"), "{}", stderr(&out));

    let truncated = dir.join("short.ztbe");
    fs::write(&truncated, &fs::read(&compressed).unwrap()[..100]).unwrap();
    let out = run(&["verify", "--input", truncated.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("truncated"), "{}", stderr(&out));
}

#[test]
fn raw_tensor_length_mismatch_is_rejected() {
    let tmp = temp_dir("badraw");
    let dir = tmp.path();
    let raw = dir.join("w.raw");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&8u32.to_le_bytes());
    bytes.extend_from_slice(&8u32.to_le_bytes());
    bytes.extend_from_slice(&[0u8; 100]); // should be 128
    fs::write(&raw, bytes).unwrap();
    let out = run(&["verify", "--input", raw.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("expected"), "{}", stderr(&out));
}
