//! End-to-end runs of the `flim` subcommands in-process.

use std::path::{Path, PathBuf};

use flim_cli::run;

fn flim(args: &[&str]) -> i32 {
    run(std::iter::once("flim").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Chain {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Chain {
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// simulate → train → quantize on a tiny problem.
fn chain() -> Chain {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let c = Chain { _dir: dir, root };
    let (d, w, q, g) = (
        c.path("d.bin"),
        c.path("w.json"),
        c.path("q.bin"),
        c.path("g.txt"),
    );
    assert_eq!(
        flim(&[
            "--threads",
            "1",
            "simulate",
            "--samples",
            "60",
            "--photons",
            "32",
            "--seed",
            "3",
            "--out",
            s(&d)
        ]),
        0
    );
    assert_eq!(
        flim(&[
            "--threads",
            "1",
            "train",
            "--dataset",
            s(&d),
            "--hidden",
            "8",
            "--epochs",
            "2",
            "--out",
            s(&w)
        ]),
        0
    );
    assert_eq!(
        flim(&[
            "--threads",
            "1",
            "quantize",
            "--weights",
            s(&w),
            "--eval-samples",
            "20",
            "--golden",
            s(&g),
            "--out",
            s(&q)
        ]),
        0
    );
    c
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(flim(&["frobnicate"]), 2);
    assert_eq!(flim(&["simulate", "--no-such-flag"]), 2);
    assert_eq!(flim(&[]), 2);
    assert_eq!(flim(&["--help"]), 0);
    assert_eq!(flim(&["eval", "--estimator", "cmm"]), 2, "missing dataset");

    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.toml");
    std::fs::write(&conf, "unknown_key = 1\n").unwrap();
    assert_eq!(
        flim(&[
            "--config",
            s(&conf),
            "simulate",
            "--out",
            s(&dir.path().join("d.bin"))
        ]),
        2
    );
    std::fs::write(&conf, "tau_min_ns = 3.0\ntau_max_ns = 1.0\n").unwrap();
    assert_eq!(
        flim(&[
            "--config",
            s(&conf),
            "simulate",
            "--out",
            s(&dir.path().join("d.bin"))
        ]),
        2
    );
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let out = dir.path().join("e.csv");
    assert_eq!(
        flim(&[
            "eval",
            "--dataset",
            s(&missing),
            "--estimator",
            "cmm",
            "--out",
            s(&out)
        ]),
        1
    );
    let garbage = dir.path().join("garbage.bin");
    std::fs::write(&garbage, b"not a dataset").unwrap();
    assert_eq!(
        flim(&[
            "eval",
            "--dataset",
            s(&garbage),
            "--estimator",
            "cmm",
            "--out",
            s(&out)
        ]),
        1
    );
    assert!(!out.exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.toml");
    std::fs::write(&conf, "samples = 7\nphotons = 9\nseed = 5\n").unwrap();
    let out = dir.path().join("d.bin");
    assert_eq!(
        flim(&[
            "--config",
            s(&conf),
            "simulate",
            "--photons",
            "11",
            "--out",
            s(&out)
        ]),
        0
    );
    let ds = flim_core::sim::format::read_dataset(&out).unwrap();
    assert_eq!(ds.samples.len(), 7);
    assert!(ds.samples.iter().all(|x| x.len() == 11));
    assert_eq!(ds.config.seed, 5);

    let manifest: flim_cli::Manifest =
        toml::from_str(&std::fs::read_to_string(dir.path().join("d.bin.manifest.toml")).unwrap())
            .unwrap();
    assert_eq!(manifest.subcommand, "simulate");
    assert_eq!(manifest.config["photons"].as_integer(), Some(11));
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(manifest.outputs[s(&out)], flim_core::io::sha256_hex(&bytes));
}

#[test]
fn artifact_chain_verifies_and_detects_tampering() {
    let c = chain();
    let (d, w, q, g) = (
        c.path("d.bin"),
        c.path("w.json"),
        c.path("q.bin"),
        c.path("g.txt"),
    );
    let all = [
        "verify",
        "--dataset",
        s(&d),
        "--weights",
        s(&w),
        "--quantized",
        s(&q),
        "--golden",
        s(&g),
    ];
    assert_eq!(flim(&all), 0);
    assert_eq!(
        flim(&["verify", "--manifest", s(&c.path("w.json.manifest.toml"))]),
        0
    );

    let other = c.path("other.bin");
    assert_eq!(
        flim(&[
            "simulate",
            "--samples",
            "10",
            "--photons",
            "8",
            "--seed",
            "4",
            "--out",
            s(&other)
        ]),
        0
    );
    assert_eq!(
        flim(&["verify", "--dataset", s(&other), "--weights", s(&w)]),
        1,
        "weights trained elsewhere"
    );

    let text = std::fs::read_to_string(&g).unwrap();
    let edited: String = text
        .lines()
        .map(|l| match l.strip_prefix("head ") {
            Some(v) => format!("head {}\n", v.parse::<i64>().unwrap() + 1),
            None => format!("{l}\n"),
        })
        .collect();
    std::fs::write(&g, edited).unwrap();
    assert_eq!(
        flim(&["verify", "--quantized", s(&q), "--golden", s(&g)]),
        1
    );

    let mut bytes = std::fs::read(&d).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 1;
    std::fs::write(&d, bytes).unwrap();
    assert_eq!(flim(&["verify", "--dataset", s(&d)]), 1);
    assert_eq!(
        flim(&["verify", "--manifest", s(&c.path("d.bin.manifest.toml"))]),
        1
    );
}

#[test]
fn eval_writes_one_row_per_sequence() {
    let c = chain();
    let (d, w, out) = (c.path("d.bin"), c.path("w.json"), c.path("e.csv"));
    for est in ["cmm", "cmm-bgsub", "lsfit"] {
        assert_eq!(
            flim(&[
                "eval",
                "--dataset",
                s(&d),
                "--estimator",
                est,
                "--out",
                s(&out)
            ]),
            0
        );
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "sample_id,truth,estimate,estimator,n_photons"
        );
        assert_eq!(text.lines().count(), 1 + 6, "{est}");
    }
    assert_eq!(
        flim(&[
            "eval",
            "--dataset",
            s(&d),
            "--estimator",
            "rnn",
            "--weights",
            s(&w),
            "--out",
            s(&out)
        ]),
        0
    );
    assert_eq!(
        flim(&["eval", "--dataset", s(&d), "--estimator", "rnn"]),
        2,
        "rnn needs weights"
    );
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("d{threads}.bin"));
        assert_eq!(
            flim(&[
                "--threads",
                threads,
                "simulate",
                "--samples",
                "50",
                "--photons",
                "64",
                "--out",
                s(&out)
            ]),
            0
        );
        seen.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn pipeline_and_crlb_run() {
    let c = chain();
    let (q, f) = (c.path("q.bin"), c.path("f.csv"));
    assert_eq!(
        flim(&[
            "pipeline",
            "--weights",
            s(&q),
            "--load",
            "interleaved",
            "--rate",
            "8e6",
            "--duration",
            "2",
            "--out",
            s(&f)
        ]),
        0
    );
    let stats: toml::Table =
        toml::from_str(&std::fs::read_to_string(c.path("f.csv.stats.toml")).unwrap()).unwrap();
    let drop = stats["dropped"].as_integer().unwrap() as f64
        / stats["offered"].as_integer().unwrap() as f64;
    assert!((drop - 0.5).abs() < 0.02, "drop fraction {drop}");

    let cr = c.path("c.csv");
    assert_eq!(
        flim(&[
            "crlb",
            "--sweep",
            "photons",
            "--grid",
            "128,512",
            "--trials",
            "100",
            "--methods",
            "cmm",
            "--out",
            s(&cr)
        ]),
        0
    );
    let text = std::fs::read_to_string(&cr).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "axis_value,method,rel_std,ci_lo,ci_hi,crlb_bound"
    );
    assert_eq!(text.lines().count(), 1 + 4);
}

#[test]
fn training_can_resume_from_weights() {
    let c = chain();
    let (d, w, w2) = (c.path("d.bin"), c.path("w.json"), c.path("w2.json"));
    assert_eq!(
        flim(&[
            "train",
            "--dataset",
            s(&d),
            "--init",
            s(&w),
            "--epochs",
            "1",
            "--out",
            s(&w2)
        ]),
        0
    );
    let a = flim_core::rnn::format::read_weights(&w).unwrap();
    let b = flim_core::rnn::format::read_weights(&w2).unwrap();
    assert_eq!(a.config, b.config);
    assert_ne!(a.params, b.params);
    let manifest = std::fs::read_to_string(c.path("w2.json.manifest.toml")).unwrap();
    assert!(manifest.contains(&flim_core::io::sha256_hex(&std::fs::read(&w).unwrap())));
    assert_eq!(
        flim(&[
            "train",
            "--dataset",
            s(&d),
            "--init",
            s(&c.path("q.bin")),
            "--out",
            s(&w2)
        ]),
        1
    );
}
