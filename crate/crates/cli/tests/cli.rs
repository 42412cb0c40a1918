use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use has_seg::io::{load_image, load_rgb, save_image};
use has_seg::GrayImage;

const THREE_MATERIAL_SPEC: &str = "\
# seed-1 three-material phantom
width = 512
height = 512
layout = rectangles-with-vias
grid = 6
seed = 1
material = 130 12
material = 60 12
material = 210 12
";

fn has_seg(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_has-seg"));
    for a in args {
        cmd.arg(a);
    }
    cmd.output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes the spec, runs `synth`, and returns the phantom path.
fn synth_phantom(dir: &Path, spec: &str) -> PathBuf {
    let spec_path = dir.join("phantom.spec");
    fs::write(&spec_path, spec).unwrap();
    let image = dir.join("phantom.pgm");
    let out = has_seg(&[&"synth", &spec_path, &"--out", &image]);
    assert!(out.status.success(), "{}", stderr(&out));
    image
}

fn csv_counts(path: &Path) -> Vec<u64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn segment_phantom_finds_three_regions() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_phantom(dir.path(), THREE_MATERIAL_SPEC);
    let labels = dir.path().join("labels.png");
    let out = has_seg(&[
        &"segment",
        &image,
        &"--out",
        &labels,
        &"--kernel",
        &"3",
        &"--rule",
        &"histogram",
        &"--debug-dump",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let sidecar = fs::read_to_string(dir.path().join("labels.regions.txt")).unwrap();
    assert_eq!(sidecar.lines().count(), 3);
    let accumulator = fs::read_to_string(dir.path().join("labels.accumulator.csv")).unwrap();
    assert_eq!(
        accumulator.lines().next(),
        Some("intensity,frequency,votes,score,kept")
    );
    assert_eq!(accumulator.lines().count(), 257);
    assert_eq!(
        csv_counts(&dir.path().join("labels.estimated.csv"))
            .iter()
            .sum::<u64>(),
        512 * 512
    );
}

#[test]
fn segment_constant_image() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("flat.png");
    save_image(&GrayImage::filled(20, 10, 99).unwrap(), &image).unwrap();
    let labels = dir.path().join("flat_labels.png");
    let out = has_seg(&[&"segment", &image, &"--out", &labels]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read_to_string(dir.path().join("flat_labels.regions.txt")).unwrap(),
        "0 0 255 99\n"
    );
    let (_, _, rgb) = load_rgb(&labels).unwrap();
    assert!(rgb.iter().all(|px| *px == rgb[0]));
}

#[test]
fn segment_reports_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.pgm");
    let out = has_seg(&[&"segment", &missing, &"--out", &dir.path().join("x.png")]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing.pgm"), "{}", stderr(&out));
}

#[test]
fn segment_rejects_small_kernel_and_bad_rule() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("flat.pgm");
    save_image(&GrayImage::filled(8, 8, 1).unwrap(), &image).unwrap();
    let out_path = dir.path().join("x.png");
    assert!(
        !has_seg(&[&"segment", &image, &"--out", &out_path, &"--kernel", &"1"])
            .status
            .success()
    );
    assert!(
        !has_seg(&[&"segment", &image, &"--out", &out_path, &"--rule", &"otsu"])
            .status
            .success()
    );
    let too_big = has_seg(&[&"segment", &image, &"--out", &out_path, &"--kernel", &"9"]);
    assert!(!too_big.status.success());
    assert!(stderr(&too_big).contains("flat.pgm"));
}

#[test]
fn histogram_shrinks_support() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_phantom(dir.path(), THREE_MATERIAL_SPEC);
    let out_dir = dir.path().join("hist");
    let out = has_seg(&[&"histogram", &image, &"--out", &out_dir, &"--kernel", &"3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let support = |name: &str| {
        csv_counts(&out_dir.join(name))
            .iter()
            .filter(|&&c| c > 0)
            .count()
    };
    assert!(support("estimated_histogram.csv") < support("raw_histogram.csv"));
}

#[test]
fn histogram_of_constant_image() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("flat.pgm");
    save_image(&GrayImage::filled(6, 6, 7).unwrap(), &image).unwrap();
    let out_dir = dir.path().join("hist");
    assert!(has_seg(&[&"histogram", &image, &"--out", &out_dir])
        .status
        .success());
    let raw = fs::read(out_dir.join("raw_histogram.csv")).unwrap();
    assert_eq!(
        raw,
        fs::read(out_dir.join("estimated_histogram.csv")).unwrap()
    );
    assert_eq!(
        csv_counts(&out_dir.join("raw_histogram.csv"))
            .iter()
            .filter(|&&c| c > 0)
            .count(),
        1
    );
    assert!(!has_seg(&[
        &"histogram",
        &dir.path().join("nope.pgm"),
        &"--out",
        &out_dir
    ])
    .status
    .success());
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_phantom(a.path(), THREE_MATERIAL_SPEC);
    synth_phantom(b.path(), THREE_MATERIAL_SPEC);
    for name in ["phantom.pgm", "phantom.labels.pgm", "phantom.truth.pgm"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
    let labels = load_image(a.path().join("phantom.labels.pgm")).unwrap();
    let distinct: std::collections::BTreeSet<u8> = labels.pixels().iter().copied().collect();
    assert_eq!(distinct.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn synth_rejects_spec_without_materials() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("empty.spec");
    fs::write(&spec, "width = 64\nheight = 64\n").unwrap();
    let out = has_seg(&[&"synth", &spec, &"--out", &dir.path().join("x.pgm")]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("empty.spec"));
}

#[test]
fn eval_reports_six_methods() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_phantom(dir.path(), THREE_MATERIAL_SPEC);
    let prefix = dir.path().join("report");
    let out = has_seg(&[
        &"eval",
        &image,
        &dir.path().join("phantom.truth.pgm"),
        &"--out",
        &prefix,
        &"--kernel",
        &"3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let json: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = json.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        [
            "raw",
            "gaussian",
            "median",
            "anisotropic-diffusion",
            "has-distance",
            "has-histogram"
        ]
    );
}

#[test]
fn eval_noiseless_phantom_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_phantom(dir.path(), &THREE_MATERIAL_SPEC.replace(" 12\n", " 0\n"));
    let truth = dir.path().join("phantom.truth.pgm");
    let prefix = dir.path().join("report");
    assert!(has_seg(&[&"eval", &image, &truth, &"--out", &prefix])
        .status
        .success());
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(
        csv.lines().nth(1).unwrap().starts_with("raw,2.000000"),
        "{csv}"
    );

    let small = dir.path().join("small.pgm");
    save_image(&GrayImage::new(2, 1, vec![0, 255]).unwrap(), &small).unwrap();
    let out = has_seg(&[&"eval", &image, &small, &"--out", &prefix]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("dimension mismatch"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let image = synth_phantom(dir.path(), THREE_MATERIAL_SPEC);
    let one = dir.path().join("one.png");
    let four = dir.path().join("four.png");
    assert!(
        has_seg(&[&"--threads", &"1", &"segment", &image, &"--out", &one])
            .status
            .success()
    );
    let out = Command::new(env!("CARGO_BIN_EXE_has-seg"))
        .env("HAS_SEG_THREADS", "4")
        .args([
            "segment".as_ref(),
            image.as_os_str(),
            "--out".as_ref(),
            four.as_os_str(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(one).unwrap(), fs::read(four).unwrap());
}
