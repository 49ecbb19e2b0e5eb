//! CLI acceptance: every command rerun with identical seeds and inputs
//! produces byte-identical outputs.

mod common;

use common::{augment_fixture, collect_files, eval_fixture, fit_fixture, run_ok, scratch, sweep_fixture};

#[test]
fn criterion_11_cli_reproducibility() {
    let dir = scratch("acceptance");
    let (pred, gt) = eval_fixture(&dir, 40);
    let (aug_samples, images) = augment_fixture(&dir, 6);
    let (fit_lms, fit_priors, shapes) = fit_fixture(&dir, 4);
    let sweep_spec = sweep_fixture(&dir, &gt);

    std::fs::write(
        dir.join("mix.json"),
        serde_json::to_vec_pretty(&serde_json::json!({
            "datasets": [
                {"name": "a", "size": 1000},
                {"name": "b", "size": 500},
                {"name": "c", "size": 250}
            ],
            "probs": [0.5, 0.33, 0.17],
            "seed": 11
        }))
        .unwrap(),
    )
    .unwrap();

    std::fs::write(
        dir.join("train.json"),
        serde_json::to_vec_pretty(&serde_json::json!({
            "train": {
                "total_samples": 8000, "batch_size": 64, "peak_lr": 1e-3,
                "warmup_frac": 0.05, "decay_at_frac": 0.5, "decay_factor": 0.1,
                "swa_start_frac": 0.6666666666666666, "seed": 5,
                "nll_enabled": true, "optimizer": "adam"
            },
            "task_samples": 2000, "task_seed": 3, "task_noise": "heteroscedastic"
        }))
        .unwrap(),
    )
    .unwrap();

    let model = dir.join("model.dfm");
    run_ok(&["make-model", "--seed", "0", "--out", model.to_str().unwrap()], &dir);
    let mixture = dir.join("mixture.json");
    run_ok(
        &[
            "gmm",
            "--samples",
            shapes.to_str().unwrap(),
            "--components",
            "2",
            "--seed",
            "4",
            "--out",
            mixture.to_str().unwrap(),
        ],
        &dir,
    );

    // every command, as (name, args with OUT placeholders)
    let p = |path: &std::path::Path| path.to_str().unwrap().to_string();
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "make-model",
            vec!["make-model".into(), "--seed".into(), "9".into(), "--out".into(), "OUT/model.dfm".into()],
        ),
        (
            "gradcheck",
            vec![
                "gradcheck".into(), "--losses".into(), "all".into(), "--points".into(), "10".into(),
                "--seed".into(), "2".into(), "--out".into(), "OUT/gradcheck.json".into(),
            ],
        ),
        (
            "evaluate",
            vec![
                "evaluate".into(), "--pred".into(), p(&pred), "--gt".into(), p(&gt),
                "--nme".into(), "--filter99".into(),
                "--out".into(), "OUT/report.json".into(), "--csv".into(), "OUT/per_sample.csv".into(),
            ],
        ),
        (
            "noise",
            vec![
                "noise".into(), "--images".into(), p(&images), "--sigmas".into(), "0,4".into(),
                "--trials".into(), "2".into(), "--seed".into(), "6".into(), "--out".into(), "OUT/noise".into(),
            ],
        ),
        (
            "sweep",
            vec![
                "sweep".into(), "--spec".into(), p(&sweep_spec), "--gt".into(), p(&gt),
                "--out".into(), "OUT/sweep.json".into(), "--csv".into(), "OUT/sweep.csv".into(),
            ],
        ),
        (
            "augment",
            vec![
                "augment".into(), "--samples".into(), p(&aug_samples), "--images".into(), p(&images),
                "--seed".into(), "12".into(), "--count".into(), "10".into(),
                "--normalize".into(), "--out".into(), "OUT/augmented".into(),
            ],
        ),
        (
            "fit",
            vec![
                "fit".into(), "--landmarks".into(), p(&fit_lms), "--model".into(), p(&model),
                "--prior".into(), p(&fit_priors), "--mixture".into(), p(&mixture),
                "--out".into(), "OUT/fits.jsonl".into(),
            ],
        ),
        (
            "mix",
            vec![
                "mix".into(), "--spec".into(), p(&dir.join("mix.json")), "--count".into(), "500".into(),
                "--out".into(), "OUT/stream.csv".into(),
            ],
        ),
        (
            "train-demo",
            vec![
                "train-demo".into(), "--config".into(), p(&dir.join("train.json")),
                "--out-head".into(), "OUT/head.json".into(), "--out-trace".into(), "OUT/trace.csv".into(),
            ],
        ),
        (
            "gmm",
            vec![
                "gmm".into(), "--samples".into(), p(&shapes), "--components".into(), "2".into(),
                "--seed".into(), "4".into(), "--out".into(), "OUT/mixture.json".into(),
            ],
        ),
    ];

    for (name, template) in &commands {
        let out_a = dir.join(format!("run_a_{name}"));
        let out_b = dir.join(format!("run_b_{name}"));
        for out in [&out_a, &out_b] {
            std::fs::create_dir_all(out).unwrap();
            let args: Vec<String> = template
                .iter()
                .map(|a| a.replace("OUT", out.to_str().unwrap()))
                .collect();
            let args_ref: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
            run_ok(&args_ref, &dir);
        }
        let a = collect_files(&out_a);
        let b = collect_files(&out_b);
        assert_eq!(a.len(), b.len(), "{name}: output file sets differ");
        assert!(!a.is_empty(), "{name}: produced no output files");
        for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
            assert_eq!(pa, pb, "{name}: differing file names");
            assert_eq!(ba, bb, "{name}: {pa} differs between reruns");
        }
    }

    println!(
        "criterion 11 reproducibility: PASS ({} commands rerun byte-identical)",
        commands.len()
    );
}
