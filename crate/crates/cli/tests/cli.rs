use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use attnclust_core::grabcut::{Mask, RgbImage};
use attnclust_core::metrics::evaluate;
use attnclust_core::pipeline::{format_labels, load_labels, write_features};
use attnclust_core::synthetic::{gaussian_blobs, two_color_image};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_attnclust"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn attnclust")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_blobs(dir: &Path) {
    let data = gaussian_blobs(120, 3, 2, 10.0, 1.0, 5);
    write_features(&dir.join("x.dtcf"), &data.features).unwrap();
    std::fs::write(dir.join("y.txt"), format_labels(&data.labels)).unwrap();
}

#[test]
fn eval_prints_three_scores() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.txt"), "1\n1\n0\n0\n2\n").unwrap();
    std::fs::write(dir.path().join("t.txt"), "0\n0\n1\n1\n1\n").unwrap();
    let out = run(&["eval", "--pred", s(&dir.path().join("p.txt")), "--truth", s(&dir.path().join("t.txt"))]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = stdout.trim().split(' ').collect();
    assert_eq!(fields.len(), 3);
    assert!(fields[0].starts_with("acc=0.8000"), "{stdout}");
    assert!(fields[1].starts_with("nmi=") && fields[2].starts_with("ari="));

    let out = run(&["eval", "--pred", s(&dir.path().join("p.txt")), "--truth", s(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_outputs_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    std::fs::write(
        dir.path().join("exp.conf"),
        "# relative paths resolve against this file\nfeatures = x.dtcf\nlabels = y.txt\noutput_dir = out\nclusters = 3\nepochs = 30\n",
    )
    .unwrap();
    let out = run(&["run", "--config", s(&dir.path().join("exp.conf")), "seed=1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("Accuracy 1.0000\n"));
    let pred = load_labels(&dir.path().join("out/assignments.txt")).unwrap();
    let truth = load_labels(&dir.path().join("y.txt")).unwrap();
    assert_eq!(evaluate(&pred, &truth).unwrap().acc, 1.0);
    assert!(dir.path().join("out/report.txt").is_file());
    assert!(dir.path().join("out/timing.json").is_file());
}

#[test]
fn run_exit_codes_and_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let x = dir.path().join("x.dtcf");
    let out_dir = dir.path().join("out");
    let feat = format!("features={}", s(&x));
    let od = format!("output_dir={}", s(&out_dir));

    // Config problems.
    assert_eq!(run(&["run", "clusters=3"]).status.code(), Some(2));
    assert_eq!(run(&["run", &feat, &od, "clusters=3", "bogus=1"]).status.code(), Some(2));
    assert_eq!(run(&["run", &feat, &od, "clusters=3", "variant=pi"]).status.code(), Some(2));

    // Data problems.
    std::fs::write(dir.path().join("bad.dtcf"), b"NOPE").unwrap();
    let bad = format!("features={}", s(&dir.path().join("bad.dtcf")));
    assert_eq!(run(&["run", &bad, &od, "clusters=3"]).status.code(), Some(3));
    let short = format!("labels={}", s(&dir.path().join("short.txt")));
    std::fs::write(dir.path().join("short.txt"), "0\n1\n").unwrap();
    assert_eq!(run(&["run", &feat, &od, &short, "clusters=3"]).status.code(), Some(3));

    // A learning rate this large blows the centroids up.
    let out = run(&["run", &feat, &od, "clusters=3", "learning_rate=1e300", "epochs=20"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    assert!(!out_dir.exists(), "failed runs must not write outputs");
}

fn write_scene(dir: &Path, seed: u64) -> (String, Mask) {
    let scene = two_color_image(seed);
    std::fs::write(dir.join(format!("scene{seed}.ppm")), scene.image.to_ppm()).unwrap();
    let b = scene.bbox;
    (format!("{},{},{},{}", b.x, b.y, b.w, b.h), scene.truth)
}

#[test]
fn grabcut_single_image_recovers_object() {
    let dir = tempfile::tempdir().unwrap();
    let (bbox, truth) = write_scene(dir.path(), 4);
    let img = dir.path().join("scene4.ppm");
    let mask = dir.path().join("sub/mask.pgm");
    let masked = dir.path().join("sub/masked.ppm");
    let out = run(&[
        "grabcut", "--image", s(&img), "--bbox", &bbox, "--out", s(&mask),
        "--masked-out", s(&masked), "--fill", "0,255,0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = Mask::from_pgm(&std::fs::read(&mask).unwrap()).unwrap();
    assert_eq!(got.iou(&truth), 1.0);
    let m = attnclust_core::grabcut::decode_image(&std::fs::read(&masked).unwrap()).unwrap();
    assert_eq!(m.get(0, 0), [0, 255, 0]);

    let out = run(&["grabcut", "--image", s(&img), "--bbox", "0,0,64,64", "--out", s(&mask)]);
    assert_eq!(out.status.code(), Some(2), "a full-frame box leaves no background");
    let out = run(&["grabcut", "--image", s(&dir.path().join("nope.ppm")), "--bbox", &bbox, "--out", s(&mask)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn grabcut_batch_processes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = String::from("image,x,y,w,h,strokes\n");
    let mut truths = Vec::new();
    for seed in 0..4 {
        let (bbox, truth) = write_scene(dir.path(), seed);
        manifest.push_str(&format!("scene{seed}.ppm,{bbox}\n"));
        truths.push(truth);
    }
    std::fs::write(dir.path().join("m.csv"), &manifest).unwrap();
    let out_dir = dir.path().join("masks");
    let out = run(&["grabcut-batch", "--manifest", s(&dir.path().join("m.csv")), "--out-dir", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (seed, truth) in truths.iter().enumerate() {
        let got = Mask::from_pgm(&std::fs::read(out_dir.join(format!("scene{seed}.mask.pgm"))).unwrap()).unwrap();
        assert!(got.iou(truth) >= 0.99);
        assert!(out_dir.join(format!("scene{seed}.masked.ppm")).is_file());
    }

    manifest.push_str("missing.ppm,1,1,5,5\n");
    std::fs::write(dir.path().join("m.csv"), &manifest).unwrap();
    let out = run(&["grabcut-batch", "--manifest", s(&dir.path().join("m.csv")), "--out-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stdout).unwrap().contains("failed"));
}

struct Server {
    child: Child,
    addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(ui_dir: &Path) -> Server {
    let mut child = bin()
        .args(["serve", "--port", "0", "--ui-dir", s(ui_dir)])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();
    Server { child, addr }
}

fn http(addr: &str, method: &str, path: &str, body: &[u8]) -> (u16, Vec<u8>) {
    let mut stream = TcpStream::connect(addr).unwrap();
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Length: {}\r\nContent-Type: application/octet-stream\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).unwrap();
    stream.write_all(body).unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let headers = String::from_utf8_lossy(&raw[..split]).to_ascii_lowercase();
    let status = headers[9..12].parse().unwrap();
    let mut payload = raw[split + 4..].to_vec();
    if headers.contains("transfer-encoding: chunked") {
        payload = dechunk(&payload);
    }
    (status, payload)
}

fn dechunk(mut data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let eol = data.windows(2).position(|w| w == b"\r\n").unwrap();
        let size = usize::from_str_radix(std::str::from_utf8(&data[..eol]).unwrap().trim(), 16).unwrap();
        if size == 0 {
            return out;
        }
        out.extend_from_slice(&data[eol + 2..eol + 2 + size]);
        data = &data[eol + 4 + size..];
    }
}

fn json(body: &[u8]) -> serde_json::Value {
    serde_json::from_slice(body).unwrap()
}

#[test]
fn serve_matches_cli_masks_and_serves_ui() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>annotate</html>").unwrap();
    let server = start_server(&ui);

    let (status, body) = http(&server.addr, "GET", "/", b"");
    assert_eq!(status, 200);
    assert_eq!(body, b"<html>annotate</html>");
    let (status, body) = http(&server.addr, "GET", "/sessions/nope", b"");
    assert_eq!(status, 404);
    assert!(json(&body)["error"].is_string());

    for seed in [1, 6] {
        let (bbox, _) = write_scene(dir.path(), seed);
        let img_path = dir.path().join(format!("scene{seed}.ppm"));
        let image: RgbImage =
            attnclust_core::grabcut::decode_image(&std::fs::read(&img_path).unwrap()).unwrap();

        let (status, body) = http(&server.addr, "POST", "/sessions", &image.to_ppm());
        assert_eq!(status, 201);
        let id = json(&body)["id"].as_str().unwrap().to_string();
        let v: Vec<usize> = bbox.split(',').map(|p| p.parse().unwrap()).collect();
        let rect = format!(r#"{{"x":{},"y":{},"w":{},"h":{}}}"#, v[0], v[1], v[2], v[3]);
        let (status, _) = http(&server.addr, "POST", &format!("/sessions/{id}/bbox"), rect.as_bytes());
        assert_eq!(status, 200);
        let (status, _) = http(&server.addr, "POST", &format!("/sessions/{id}/iterate"), br#"{"rounds":5}"#);
        assert_eq!(status, 200);
        let (status, mask) = http(&server.addr, "GET", &format!("/sessions/{id}/mask"), b"");
        assert_eq!(status, 200);
        let (_, summary) = http(&server.addr, "GET", &format!("/sessions/{id}"), b"");
        let session_seed = json(&summary)["seed"].as_u64().unwrap().to_string();

        let cli_mask = dir.path().join(format!("cli{seed}.pgm"));
        let out = run(&[
            "grabcut", "--image", s(&img_path), "--bbox", &bbox, "--out", s(&cli_mask),
            "--iters", "5", "--seed", &session_seed,
        ]);
        assert!(out.status.success());
        assert_eq!(std::fs::read(&cli_mask).unwrap(), mask, "scene {seed}");
    }
}

#[test]
fn synth_blobs_writes_a_runnable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("blobs");
    let out = run(&["synth-blobs", "--out-dir", s(&d), "--n", "60", "--k", "4", "--jitter-sigma", "0.5"]);
    assert!(out.status.success());
    for f in ["features.dtcf", "labels.txt", "transformed.dtcf"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    assert_eq!(run(&["synth-blobs", "--out-dir", s(&d), "--n", "2", "--k", "4"]).status.code(), Some(2));
}
