use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddcml::evalx::rmse_percent;
use ddcml::inorm::NormalizationConfig;
use ddcml::retrieve::load_index;
use ddcml::train::load_checkpoint;
use ddcml::volio::{load_manifest, read_volume, write_manifest, write_volume, CaseRecord, Volume};

fn ddcml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddcml")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ddcml(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY_NET: &[&str] = &["--set", "network=custom", "--set", "channels=2,2,4,4"];

fn phantoms(dir: &Path, per_class: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("raw{seed}"));
    ok(&["phantom-gen", "--count-per-class", &per_class.to_string(), "--seed", &seed.to_string(), "--out", s(&out)]);
    out.join("manifest.csv")
}

fn preprocessed(dir: &Path) -> PathBuf {
    let raw = phantoms(dir, 5, 1);
    let out = dir.join("norm");
    ok(&["preprocess", "--manifest", s(&raw), "--out", s(&out)]);
    out.join("manifest.csv")
}

fn train(manifest: &Path, out: &Path, alpha: &str) {
    let mut args = vec!["train", "--manifest", s(manifest), "--out", s(out), "--alpha", alpha];
    args.extend(["--epochs", "1", "--steps-per-epoch", "3"]);
    args.extend(TINY_NET);
    ok(&args);
}

#[test]
fn phantom_gen_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let m = phantoms(dir.path(), 3, 9);
    let records = load_manifest(&m, 5).unwrap();
    assert_eq!(records.len(), 15);
    for class in 0..5 {
        assert_eq!(records.iter().filter(|r| r.class_label == class).count(), 3);
    }
    let vols = fs::read_dir(m.parent().unwrap()).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "vol")
    });
    assert_eq!(vols.count(), 15);

    let again = dir.path().join("again");
    ok(&["phantom-gen", "--count-per-class", "3", "--seed", "9", "--out", s(&again)]);
    for r in &records {
        let twin = again.join(r.volume_path.file_name().unwrap());
        assert_eq!(fs::read(&r.volume_path).unwrap(), fs::read(twin).unwrap());
    }
}

#[test]
fn preprocess_hits_target_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let m = preprocessed(dir.path());
    let eps = NormalizationConfig::default().epsilon;
    let first: Vec<f64> = load_manifest(&m, 5)
        .unwrap()
        .iter()
        .map(|r| read_volume(&r.volume_path).unwrap().brain_mean().unwrap())
        .collect();
    assert!(first.iter().all(|mean| (mean - 128.0).abs() <= eps));

    let twice = dir.path().join("twice");
    ok(&["preprocess", "--manifest", s(&m), "--out", s(&twice)]);
    let second = load_manifest(twice.join("manifest.csv"), 5).unwrap();
    for (a, r) in first.iter().zip(&second) {
        let b = read_volume(&r.volume_path).unwrap().brain_mean().unwrap();
        assert!((a - b).abs() <= eps);
    }
}

#[test]
fn preprocess_reports_zero_volume_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    fs::create_dir(&raw).unwrap();
    let good = ddcml::volio::gen_phantom(&ddcml::volio::PhantomSpec {
        severity: 1,
        subject_seed: 4,
        dims: [16, 16, 16],
        nuisance_gain: 1.0,
        texture_amplitude: 20.0,
    })
    .unwrap();
    write_volume(&good, raw.join("good.vol")).unwrap();
    write_volume(&Volume::filled([16, 16, 16], 0.0).unwrap(), raw.join("zero.vol")).unwrap();
    let records = vec![
        CaseRecord { subject_id: "a".into(), class_label: 0, volume_path: raw.join("good.vol") },
        CaseRecord { subject_id: "b".into(), class_label: 1, volume_path: raw.join("zero.vol") },
    ];
    write_manifest(raw.join("manifest.csv"), &records).unwrap();
    let out = dir.path().join("out");
    let res = ddcml(&["preprocess", "--manifest", s(&raw.join("manifest.csv")), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(load_manifest(out.join("manifest.csv"), 5).unwrap().len(), 1);
}

#[test]
fn train_evaluate_retrieve_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let m = preprocessed(dir.path());
    let (run1, run0, rerun) = (dir.path().join("a1"), dir.path().join("a0"), dir.path().join("a1b"));
    train(&m, &run1, "1");
    train(&m, &run0, "0");
    train(&m, &rerun, "1");
    for k in 0..5 {
        let name = format!("fold{k}.ddck");
        assert!(run1.join(&name).exists());
        assert_eq!(fs::read(run1.join(&name)).unwrap(), fs::read(rerun.join(&name)).unwrap());
    }
    assert!(!run1.join("fold5.ddck").exists());
    let last = |run: &Path| fs::read_to_string(run.join("fold0_trace.csv")).unwrap().lines().last().unwrap().to_string();
    assert_ne!(last(&run1), last(&run0));
    assert!(fs::read_to_string(run1.join("fold0_trace.csv")).unwrap().starts_with("step,recon_loss,disc_loss,total_loss\n"));

    let report = ok(&["evaluate", "--run", s(&run1)]);
    assert!(String::from_utf8_lossy(&report.stdout).contains("DDCML"));
    let seeds = fs::read_to_string(run1.join("seeds.csv")).unwrap();
    let rows: Vec<(usize, f64)> = seeds
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    for k in 0..5 {
        assert_eq!(rows.iter().filter(|r| r.0 == k).count(), 10);
    }
    let pooled = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let report_csv = fs::read_to_string(run1.join("report.csv")).unwrap();
    let summary: Vec<f64> =
        report_csv.lines().last().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert!((summary[2] - pooled).abs() < 1e-9);

    let centroids = fs::read_to_string(run1.join("centroids.csv")).unwrap();
    let row0: Vec<f64> = centroids.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row0[4], 1.0);
    assert_eq!(row0[0], 0.0);
    assert!(fs::read_to_string(run1.join("fold0_projection.csv")).unwrap().starts_with("case_id,label,u,v\n"));

    // RMSE% of fold 0 recomputed from the checkpoint's own reconstructions.
    let folds = fs::read_to_string(run1.join("folds.csv")).unwrap();
    let in_fold0: Vec<&str> = folds.lines().skip(1).filter(|l| l.ends_with(",0")).map(|l| l.split(',').next().unwrap()).collect();
    let model = load_checkpoint(run1.join("fold0.ddck"), None).unwrap();
    let mut total = 0.0;
    let mut n = 0.0;
    for r in load_manifest(&m, 5).unwrap() {
        if in_fold0.contains(&r.subject_id.as_str()) && (r.class_label == 0 || r.class_label == 4) {
            let v = read_volume(&r.volume_path).unwrap();
            total += rmse_percent(&v, &model.forward(&v).unwrap().1).unwrap();
            n += 1.0;
        }
    }
    let fold0: Vec<f64> = report_csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((fold0[1] - total / n).abs() < 1e-9);

    let index = dir.path().join("cases.ddix");
    let ckpt = run1.join("fold0.ddck");
    ok(&["index", "--manifest", s(&m), "--checkpoint", s(&ckpt), "--out", s(&index)]);
    let idx = load_index(&index).unwrap();
    assert_eq!(idx.len(), 25);

    let query = load_manifest(&m, 5).unwrap().remove(7);
    let out = ok(&["retrieve", "--index", s(&index), "--checkpoint", s(&ckpt), "--volume", s(&query.volume_path), "-k", "4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rank,case_id,label,distance");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[1], format!("1,{},{},0", query.case_id(), query.class_label));
    let z = model.encode(&read_volume(&query.volume_path).unwrap()).unwrap();
    let mut brute: Vec<(f64, String)> =
        idx.entries().iter().map(|e| (e.embedding.sq_dist(&z).sqrt(), e.case_id.clone())).collect();
    brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (line, (d, id)) in lines[1..].iter().zip(&brute) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], id);
        assert_eq!(f[3].parse::<f64>().unwrap(), *d);
    }

    let zero_k = ddcml(&["retrieve", "--index", s(&index), "--checkpoint", s(&ckpt), "--volume", s(&query.volume_path), "-k", "0"]);
    assert_eq!(zero_k.status.code(), Some(64));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("from_cfg");
    fs::write(&cfg, format!("# cohort\ncount_per_class = 2\nphantom_seed = 3\nout = {}\n", out.display())).unwrap();
    ok(&["phantom-gen", "--config", s(&cfg)]);
    assert_eq!(load_manifest(out.join("manifest.csv"), 5).unwrap().len(), 10);
    ok(&["phantom-gen", "--config", s(&cfg), "--count-per-class", "1"]);
    assert_eq!(load_manifest(out.join("manifest.csv"), 5).unwrap().len(), 5);

    fs::write(&cfg, "count_per_clas = 2\n").unwrap();
    assert_eq!(ddcml(&["phantom-gen", "--config", s(&cfg)]).status.code(), Some(64));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(ddcml(&["train"]).status.code(), Some(64));
    assert_eq!(ddcml(&["train", "--manifest", "/nonexistent/m.csv", "--out", "/tmp/x"]).status.code(), Some(64));
    assert_eq!(ddcml(&["no-such-command"]).status.code(), Some(64));
    assert_eq!(ddcml(&["phantom-gen", "--set", "bogus=1", "--out", "/tmp/x"]).status.code(), Some(64));
    assert_eq!(ddcml(&["--help"]).status.code(), Some(0));
}

#[test]
fn evaluate_rejects_mismatched_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let m = preprocessed(dir.path());
    let run = dir.path().join("run");
    train(&m, &run, "1");
    let res = ddcml(&["evaluate", "--run", s(&run), "--set", "channels=2,2,4,8"]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}
