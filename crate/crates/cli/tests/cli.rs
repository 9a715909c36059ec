use hdfnet::io::{parse_report_csv, write_pgm_file, GrayImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::{Command, Output};

fn hdf(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hdf"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("HDF_THREADS", t),
        None => cmd.env_remove("HDF_THREADS"),
    };
    cmd.output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn disk(w: usize, h: usize) -> GrayImage {
    let (cx, cy, r) = (w as f64 / 2.0, h as f64 / 2.0, w.min(h) as f64 / 4.0);
    let px = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let d = (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy);
            if d < r {
                255
            } else {
                0
            }
        })
        .collect();
    GrayImage::new(w, h, px).unwrap()
}

fn noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
}

fn dirs() -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
    let root = tempfile::tempdir().unwrap();
    let (p, g) = (root.path().join("pred"), root.path().join("gt"));
    std::fs::create_dir(&p).unwrap();
    std::fs::create_dir(&g).unwrap();
    (root, p, g)
}

#[test]
fn identical_predictions_score_perfectly() {
    let (root, p, g) = dirs();
    for (i, (w, h)) in [(20, 16), (24, 24), (17, 30)].into_iter().enumerate() {
        write_pgm_file(&p.join(format!("img{i}.pgm")), &disk(w, h)).unwrap();
        write_pgm_file(&g.join(format!("img{i}.pgm")), &disk(w, h)).unwrap();
    }
    let out = root.path().join("report.csv");
    let o = hdf(
        &[
            "eval",
            "--pred",
            arg(&p),
            "--gt",
            arg(&g),
            "--out",
            arg(&out),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = parse_report_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.n_images, 3);
    assert_eq!(r.scores.mae, 0.0);
    for v in [
        r.scores.f_max,
        r.scores.f_ada,
        r.scores.wfm,
        r.scores.s_measure,
        r.scores.e_measure,
    ] {
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }
    let images = std::fs::read_to_string(root.path().join("report.images.csv")).unwrap();
    assert_eq!(images.lines().count(), 4);
    let curves = std::fs::read_to_string(root.path().join("report.curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 257);
}

#[test]
fn predictions_are_resized_to_gt() {
    let (root, p, g) = dirs();
    write_pgm_file(&p.join("a.pgm"), &disk(160, 160)).unwrap();
    write_pgm_file(&g.join("a.pgm"), &disk(320, 320)).unwrap();
    let out = root.path().join("r.csv");
    let o = hdf(
        &[
            "eval",
            "--pred",
            arg(&p),
            "--gt",
            arg(&g),
            "--out",
            arg(&out),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = parse_report_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.n_images, 1);
    assert!(
        r.scores.mae < 0.01 && r.scores.s_measure > 0.95,
        "{:?}",
        r.scores
    );
}

#[test]
fn metrics_flag_filters_columns_in_fixed_order() {
    let (root, p, g) = dirs();
    write_pgm_file(&p.join("a.pgm"), &disk(12, 12)).unwrap();
    write_pgm_file(&g.join("a.pgm"), &disk(12, 12)).unwrap();
    let out = root.path().join("r.md");
    let o = hdf(
        &[
            "eval",
            "--pred",
            arg(&p),
            "--gt",
            arg(&g),
            "--metrics",
            "mae,f_max",
            "--format",
            "md",
            "--out",
            arg(&out),
        ],
        None,
    );
    assert!(o.status.success());
    let md = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        md.lines().next().unwrap(),
        "| Dataset | F_max ↑ | MAE ↓ | Images |"
    );
    assert!(md.contains("| gt | 1.000 | 0.000 | 1 |"), "{md}");
    let o = hdf(
        &[
            "eval",
            "--pred",
            arg(&p),
            "--gt",
            arg(&g),
            "--metrics",
            "fmax",
            "--out",
            arg(&out),
        ],
        None,
    );
    assert!(!o.status.success());
}

#[test]
fn unreadable_entries_are_skipped_and_total_failure_exits_nonzero() {
    let (root, p, g) = dirs();
    write_pgm_file(&p.join("good.pgm"), &disk(10, 10)).unwrap();
    write_pgm_file(&g.join("good.pgm"), &disk(10, 10)).unwrap();
    std::fs::write(p.join("bad.pgm"), b"P5 10 10 255\n").unwrap();
    write_pgm_file(&g.join("bad.pgm"), &disk(10, 10)).unwrap();
    write_pgm_file(&p.join("lonely.pgm"), &disk(10, 10)).unwrap();
    let out = root.path().join("r.csv");
    let o = hdf(
        &[
            "eval",
            "--pred",
            arg(&p),
            "--gt",
            arg(&g),
            "--out",
            arg(&out),
        ],
        None,
    );
    assert!(o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(
        stderr.contains("`bad`") && stderr.contains("`lonely`"),
        "{stderr}"
    );
    assert_eq!(
        parse_report_csv(&std::fs::read_to_string(&out).unwrap())
            .unwrap()
            .n_images,
        1
    );

    std::fs::remove_file(p.join("good.pgm")).unwrap();
    let o = hdf(
        &[
            "eval",
            "--pred",
            arg(&p),
            "--gt",
            arg(&g),
            "--out",
            arg(&out),
        ],
        None,
    );
    assert!(!o.status.success());
}

#[test]
fn disjoint_directories_are_an_error() {
    let (root, p, g) = dirs();
    write_pgm_file(&p.join("a.pgm"), &disk(8, 8)).unwrap();
    write_pgm_file(&g.join("b.pgm"), &disk(8, 8)).unwrap();
    let o = hdf(
        &[
            "eval",
            "--pred",
            arg(&p),
            "--gt",
            arg(&g),
            "--out",
            arg(&root.path().join("r.csv")),
        ],
        None,
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no prediction"));
}

#[test]
fn aggregate_weights_by_size() {
    let root = tempfile::tempdir().unwrap();
    let header = "f_max,f_ada,wfm,mae,s_measure,e_measure,n_images";
    let a = root.path().join("a.csv");
    let b = root.path().join("b.csv");
    std::fs::write(&a, format!("{header}\n0.8,0.7,0.6,0.04,0.9,0.9,100\n")).unwrap();
    std::fs::write(&b, format!("{header}\n0.4,0.3,0.2,0.08,0.5,0.5,300\n")).unwrap();
    let out = root.path().join("ave.csv");
    let reports = format!("{},{}", arg(&a), arg(&b));
    let o = hdf(
        &[
            "aggregate",
            "--reports",
            &reports,
            "--sizes",
            "100,300",
            "--out",
            arg(&out),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = parse_report_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((r.scores.mae - 0.07).abs() < 1e-15);
    assert!((r.scores.f_max - 0.5).abs() < 1e-15);
    assert_eq!(r.n_images, 400);
    let o = hdf(
        &[
            "aggregate",
            "--reports",
            &reports,
            "--sizes",
            "100",
            "--out",
            arg(&out),
        ],
        None,
    );
    assert!(!o.status.success());
}

#[test]
fn eval_output_is_thread_count_independent() {
    let (root, p, g) = dirs();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..12 {
        write_pgm_file(&p.join(format!("{i:02}.pgm")), &noise(20, 18, &mut rng)).unwrap();
        write_pgm_file(&g.join(format!("{i:02}.pgm")), &disk(20, 18)).unwrap();
    }
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = root.path().join(format!("t{threads}.csv"));
        assert!(hdf(
            &[
                "eval",
                "--pred",
                arg(&p),
                "--gt",
                arg(&g),
                "--out",
                arg(&out)
            ],
            Some(threads)
        )
        .status
        .success());
        outputs.push([
            std::fs::read(&out).unwrap(),
            std::fs::read(root.path().join(format!("t{threads}.images.csv"))).unwrap(),
            std::fs::read(root.path().join(format!("t{threads}.curves.csv"))).unwrap(),
        ]);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = hdf(&["oracle"], Some("zero"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("HDF_THREADS"));
}

#[test]
fn demo_forward_keeps_input_size() {
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rgb = root.path().join("rgb.pgm");
    let depth = root.path().join("depth.pgm");
    let out = root.path().join("pred.pgm");
    write_pgm_file(&rgb, &noise(50, 37, &mut rng)).unwrap();
    write_pgm_file(&depth, &disk(50, 37)).unwrap();
    let o = hdf(
        &[
            "demo-forward",
            "--rgb",
            arg(&rgb),
            "--depth",
            arg(&depth),
            "--out",
            arg(&out),
            "--seed",
            "3",
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = hdfnet::io::read_pgm_file(&out).unwrap();
    assert_eq!((img.width(), img.height()), (50, 37));
}
