use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgraph"))
        .args(args)
        .output()
        .expect("spawn stgraph")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// An oracle-scale synthetic corpus of `videos` videos under `root/corpus`.
fn corpus(root: &Path, videos: usize) -> PathBuf {
    let dir = root.join("corpus");
    let out = stgraph(&["synth", "--out", s(&dir), "--videos", &videos.to_string(), "--scale", "oracle", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn synth_writes_frames_flow_and_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = corpus(tmp.path(), 2);
    for v in ["video_000", "video_001"] {
        let video = dir.join(v);
        assert!(video.join("frames/frame_0004.ppm").is_file());
        assert!(video.join("flow/forward_0003.flo").is_file());
        assert!(video.join("flow/backward_0003.flo").is_file());
        assert!(video.join("gt/gt_0004.pgm").is_file());
    }
}

#[test]
fn segment_writes_masks_metrics_and_bounded_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let video = corpus(tmp.path(), 1).join("video_000");
    let out = tmp.path().join("seg");
    let res = stgraph(&[
        "segment",
        "--frames", s(&video.join("frames")),
        "--flow", s(&video.join("flow")),
        "--gt", s(&video.join("gt")),
        "--out", s(&out),
        "--max-iters", "7",
        "--dump-diagnostics",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(stdout(&res).contains("jmean="));
    assert!(out.join("masks/mask_0000.pgm").is_file());
    assert!(out.join("masks/soft_0004.pgm").is_file());
    assert!(out.join("x_0004.stgt").is_file());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("frame,iou,mae,empty_union"));
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let rows = diag.lines().count() - 1;
    assert!((1..=7).contains(&rows), "{rows} diagnostic rows");
}

#[test]
fn segment_is_deterministic_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let video = corpus(tmp.path(), 1).join("video_000");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let res = stgraph(&["segment", "--flow", s(&video.join("flow")), "--out", s(&out), "--seed", "9"]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        out
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(read_dir_bytes(&a), read_dir_bytes(&b));
    assert_eq!(read_dir_bytes(&a.join("masks")), read_dir_bytes(&b.join("masks")));
}

#[test]
fn ike_with_one_cycle_matches_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let video = corpus(tmp.path(), 1).join("video_000");
    let flow = video.join("flow");
    let seg = tmp.path().join("seg");
    let ike = tmp.path().join("ike");
    assert_eq!(code(&stgraph(&["segment", "--flow", s(&flow), "--out", s(&seg)])), 0);
    let res = stgraph(&["ike", "--flow", s(&flow), "--out", s(&ike), "--cycles", "1"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(read_dir_bytes(&seg.join("masks")), read_dir_bytes(&ike.join("masks")));
    assert_eq!(read_dir_bytes(&seg.join("masks")), read_dir_bytes(&ike.join("cycle_1/masks")));
    assert!(ike.join("cycle_1/graph.done").is_file());
    assert!(ike.join("cycles.csv").is_file());
}

#[test]
fn ike_runs_several_network_free_cycles() {
    let tmp = tempfile::tempdir().unwrap();
    let video = corpus(tmp.path(), 1).join("video_000");
    let out = tmp.path().join("ike");
    let res = stgraph(&[
        "ike",
        "--flow", s(&video.join("flow")),
        "--gt", s(&video.join("gt")),
        "--out", s(&out),
        "--cycles", "3",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let summary = fs::read_to_string(out.join("cycles.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4, "{summary}");
    for c in 1..=3 {
        assert!(out.join(format!("cycle_{c}/metrics.csv")).is_file());
    }
}

#[test]
fn metrics_of_identical_directories_are_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = corpus(tmp.path(), 1).join("video_000/gt");
    let csv = tmp.path().join("scores.csv");
    let res = stgraph(&["metrics", "--pred", s(&gt), "--gt", s(&gt), "--out", s(&csv)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(stdout(&res).contains("jmean=1.000000 mae=0.000000"), "{}", stdout(&res));
    assert!(csv.is_file());
}

#[test]
fn oracle_default_instance_passes_and_reports_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("oracle");
    let res = stgraph(&["oracle", "--k", "6", "--perturb", "0.01", "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = stdout(&res);
    let eig_line = text.lines().find(|l| l.starts_with("eigenvalues ")).expect("eigenvalue line");
    let values: Vec<f64> = eig_line.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 6);
    assert!(values.windows(2).all(|w| w[0] >= w[1]), "{values:?}");
    assert!(text.contains("eigengap="));
    assert!(text.contains("perturbation relative=0.01"));
    assert!(text.contains("within_bound=true"));
    assert_eq!(fs::read_to_string(out.join("spectrum.csv")).unwrap().lines().count(), 7);
    assert!(out.join("a.stgt").is_file());
    assert!(out.join("a_foreground_first.stgt").is_file());
}

#[test]
fn sweep_q_emits_one_row_per_q() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = corpus(tmp.path(), 2);
    let out = tmp.path().join("sweep");
    let res = stgraph(&["sweep-q", "--corpus", s(&dir), "--q-list", "0,1,2", "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = stdout(&res);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{text}");
    for (row, q) in rows.iter().zip(["0", "1", "2"]) {
        let (got_q, j) = row.split_once(',').unwrap();
        assert_eq!(got_q, q);
        assert!((0.0..=1.0).contains(&j.parse::<f64>().unwrap()));
    }
    assert_eq!(fs::read_to_string(out.join("sweep_q.csv")).unwrap(), text);
}

#[test]
fn sweep_q_on_an_empty_corpus_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let res = stgraph(&["sweep-q", "--corpus", s(tmp.path())]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("--corpus"));
}

#[test]
fn usage_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = stgraph(&["segment", "--out", s(&out)]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("--flow"), "{}", stderr(&missing));

    let absent = stgraph(&["segment", "--flow", s(&tmp.path().join("nope")), "--out", s(&out)]);
    assert_eq!(code(&absent), 2);
    assert!(stderr(&absent).contains("--flow"));

    assert_eq!(code(&stgraph(&[])), 2);
    assert_eq!(code(&stgraph(&["segment", "--bogus"])), 2);
    assert_eq!(code(&stgraph(&["segment", "--p", "three"])), 2);
    assert_eq!(code(&stgraph(&["oracle", "--p", "0"])), 2);
    assert_eq!(code(&stgraph(&["oracle", "--k", "0"])), 2);
    assert_eq!(code(&stgraph(&["segment", "--tau", "2", "--out", s(&out)])), 2);
    assert_eq!(code(&stgraph(&["metrics", "--pred", s(tmp.path()), "--gt", s(tmp.path())])), 2);
}

#[test]
fn config_file_is_validated_and_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let video = corpus(tmp.path(), 1).join("video_000");
    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "p = 3\ncolour = blue\n").unwrap();
    let res = stgraph(&["segment", "--config", s(&bad)]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("colour"));

    let good = tmp.path().join("run.conf");
    let out = tmp.path().join("from_config");
    fs::write(
        &good,
        format!(
            "# defaults\nflow = {}\nout = {}\nmax_iters = 2\ndump-diagnostics = true\n",
            s(&video.join("flow")),
            s(&out)
        ),
    )
    .unwrap();
    let res = stgraph(&["segment", "--config", s(&good), "--max-iters", "3", "--tol", "1e-300"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count() - 1, 3);
}

#[test]
fn runtime_failures_exit_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let video = corpus(tmp.path(), 1).join("video_000");
    let res = stgraph(&[
        "segment",
        "--flow", s(&video.join("flow")),
        "--out", s(&tmp.path().join("out")),
        "--init", &format!("file:{}", s(&tmp.path().join("missing.stgt"))),
    ]);
    assert_eq!(code(&res), 1, "{}", stderr(&res));
}

#[test]
fn longer_feature_chains_do_not_hurt_on_the_desk_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("desk");
    assert_eq!(code(&stgraph(&["synth", "--out", s(&dir), "--videos", "3", "--seed", "3"])), 0);
    let res = stgraph(&["sweep-q", "--corpus", s(&dir), "--q-list", "0,1,2,3"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let j: Vec<f64> = stdout(&res)
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.parse().unwrap())
        .collect();
    assert_eq!(j.len(), 4);
    assert!(j.windows(2).all(|w| w[1] >= w[0] - 0.02), "{j:?}");
}
