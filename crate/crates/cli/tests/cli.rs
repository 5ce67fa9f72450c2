use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pure_core::dataset::Dataset;
use pure_core::netcore::{save_network, LayerKind, LayerSpec, Network};
use pure_core::{ntfile, Tensor};
use tempfile::TempDir;

fn pure(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pure")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pure(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Bench run with a small exported fixture.
fn fixture(dir: &Path) -> PathBuf {
    let fx = dir.join("fx");
    ok(&[
        "bench", "--seeds", "1", "--n-samples", "200", "--out", s(&dir.join("bench")), "--export", s(&fx),
    ]);
    fx
}

fn purify(fx: &Path, out: &Path, extra: &[&str]) -> String {
    let (net, data) = (fx.join("network.json"), fx.join("dataset"));
    let mut args = vec![
        "purify", "--network", s(&net), "--layer", "relu2", "--neuron", "0", "--dataset", s(&data), "--n-ref", "50",
        "--out", s(out),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn help_lists_subcommands_and_flags() {
    let top = ok(&["--help"]);
    for sub in ["purify", "assign", "evaluate", "bench", "crop", "inspect"] {
        assert!(top.contains(sub));
    }
    let help = ok(&["purify", "--help"]);
    for flag in ["--n-ref", "--k", "--method", "--epsilon", "--at-layer", "--seed", "--activation"] {
        assert!(help.contains(flag), "{flag}");
    }
    assert_eq!(code(&pure(&["purify", "--no-such-flag"])), 2);
    assert_eq!(code(&pure(&["frobnicate"])), 2);
}

#[test]
fn missing_inputs_exit_2_and_name_the_path() {
    let dir = TempDir::new().unwrap();
    let fx = fixture(dir.path());
    let missing = dir.path().join("nowhere");
    let out = pure(&[
        "purify", "--network", s(&fx.join("network.json")), "--layer", "relu2", "--neuron", "0", "--dataset",
        s(&missing), "--out", s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
    let out = pure(&["inspect", "--network", s(&missing)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn purify_writes_model_and_assign_routes_centroids() {
    let dir = TempDir::new().unwrap();
    let fx = fixture(dir.path());
    let out = dir.path().join("p");
    let stdout = purify(&fx, &out, &[]);
    assert_eq!(stdout.lines().count(), 2);
    for f in ["circuit_model.json", "centroids.nt", "attributions.nt", "refset.tsv", "assignments.tsv", "pca.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let centroids = ntfile::read(&out.join("centroids.nt")).unwrap();
    for c in 0..centroids.rows() {
        let v = dir.path().join(format!("c{c}.nt"));
        ntfile::write(&v, &Tensor::from_vec(centroids.row(c).to_vec())).unwrap();
        let json: serde_json::Value = serde_json::from_str(&ok(&["assign", "--model", s(&out), "--sample", s(&v)])).unwrap();
        assert_eq!(json["cluster"], c);
    }
    let bad = dir.path().join("bad.nt");
    ntfile::write(&bad, &Tensor::from_vec(vec![1.0, 2.0])).unwrap();
    assert_eq!(code(&pure(&["assign", "--model", s(&out), "--sample", s(&bad)])), 2);

    // An input sample routed through the network lands in its reference cluster.
    let tsv = fs::read_to_string(out.join("assignments.tsv")).unwrap();
    let (id, cluster) = tsv.lines().next().unwrap().split_once('\t').unwrap();
    let sample = dir.path().join("sample.nt");
    ntfile::write(&sample, Dataset::load(&fx.join("dataset")).unwrap().get(id).unwrap()).unwrap();
    let json: serde_json::Value = serde_json::from_str(&ok(&[
        "assign", "--model", s(&out), "--sample", s(&sample), "--network", s(&fx.join("network.json")),
    ]))
    .unwrap();
    assert_eq!(json["cluster"].to_string(), cluster);
}

#[test]
fn evaluate_reports_separability_and_correlation() {
    let dir = TempDir::new().unwrap();
    let fx = fixture(dir.path());
    let emb = fx.join("embeddings.nt");
    let out = dir.path().join("e");
    ok(&[
        "evaluate", "--embeddings", s(&emb), "--truth", s(&fx.join("truth.tsv")), "--compare", s(&emb), "--out",
        s(&out),
    ]);
    let sep: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("separability.json")).unwrap()).unwrap();
    assert_eq!(sep["purity"], 1.0);
    assert!(sep["score"].as_f64().unwrap() > 1.0);
    let cor: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("correlation.json")).unwrap()).unwrap();
    assert!((cor["r"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let one = dir.path().join("one.tsv");
    let ids = fs::read_to_string(fx.join("ids.tsv")).unwrap();
    fs::write(&one, ids.lines().map(|id| format!("{id}\t0\n")).collect::<String>()).unwrap();
    let res = pure(&["evaluate", "--embeddings", s(&emb), "--labels", s(&one), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("one cluster"));
}

fn image_network(dir: &Path) -> PathBuf {
    let mut k = Tensor::zeros(&[1, 1, 1, 1]);
    k.data_mut()[0] = 1.0;
    let net = Network::new(
        vec![1, 9, 9],
        vec![
            LayerSpec::new("conv", LayerKind::Conv2d { kernels: k, bias: None, stride: 1, padding: 0 }),
            LayerSpec::new("relu", LayerKind::Relu),
        ],
    )
    .unwrap();
    let p = dir.join("img_net.json");
    save_network(&net, &p).unwrap();
    p
}

#[test]
fn crop_presets_and_degenerate_heatmaps() {
    let dir = TempDir::new().unwrap();
    let net = image_network(dir.path());
    let mut img = Tensor::zeros(&[1, 9, 9]);
    img.data_mut()[4 * 9 + 4] = 1.0;
    let img_path = dir.path().join("img.nt");
    ntfile::write(&img_path, &img).unwrap();
    let crop = dir.path().join("crop.nt");
    let png = dir.path().join("crop.png");
    let base = ["crop", "--network", s(&net), "--layer", "relu", "--neuron", "0", "--image", s(&img_path)];
    let mut args = base.to_vec();
    args.extend_from_slice(&["--out", s(&crop), "--png", s(&png)]);
    let json: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(json["params"]["kernel"], 5);
    assert_eq!(json["params"]["mask"], false);
    assert_eq!(ntfile::read(&crop).unwrap().shape(), &[1, 5, 5]);
    assert!(png.exists());

    let mut args = base.to_vec();
    args.extend_from_slice(&["--preset", "plot", "--out", s(&crop)]);
    let json: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(json["params"]["kernel"], 17);
    assert_eq!(json["params"]["mask"], true);

    ntfile::write(&img_path, &Tensor::zeros(&[1, 9, 9])).unwrap();
    let mut args = base.to_vec();
    args.extend_from_slice(&["--out", s(&crop)]);
    assert_eq!(code(&pure(&args)), 2);
}

#[test]
fn config_file_and_jobs_do_not_change_results() {
    let dir = TempDir::new().unwrap();
    let fx = fixture(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    purify(&fx, &a, &["--seed", "3", "--k", "3"]);
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# overrides\nseed = 3\nk = \"3\"\nn_ref = 10\n").unwrap();
    // Command-line flags win over the file (--n-ref 50 is passed).
    purify(&fx, &b, &["--config", s(&cfg), "--jobs", "1"]);
    purify(&fx, &c, &["--jobs", "4", "--seed", "3", "--k", "3"]);
    assert_eq!(read_dir_bytes(&a), read_dir_bytes(&b));
    assert_eq!(read_dir_bytes(&a), read_dir_bytes(&c));

    fs::write(&cfg, "no_such_flag = 1\n").unwrap();
    let out = pure(&["inspect", "--config", s(&cfg), "--network", s(&fx.join("network.json"))]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&pure(&["--jobs", "0", "inspect", "--network", s(&fx.join("network.json"))])), 2);
}

#[test]
fn inspect_summarizes_layers() {
    let dir = TempDir::new().unwrap();
    let fx = fixture(dir.path());
    let text = ok(&["inspect", "--network", s(&fx.join("network.json"))]);
    for name in ["fc1", "relu1", "fc2", "relu2"] {
        assert!(text.contains(name));
    }
}

#[test]
fn exit_codes_split_usage_from_numerical_failures() {
    let dir = TempDir::new().unwrap();
    let fx = fixture(dir.path());
    let net_path = fx.join("network.json");
    let net = s(&net_path);
    let out = pure(&[
        "purify", "--network", net, "--layer", "relu2", "--neuron", "0", "--dataset", s(&fx.join("dataset")),
        "--n-ref", "3", "--k", "4", "--out", s(&dir.path().join("x")),
    ]);
    assert_eq!(code(&out), 2);

    // Identical samples leave k-means a single distinct row.
    let first = Dataset::load(&fx.join("dataset")).unwrap().samples()[0].clone();
    let ids: Vec<String> = (0..5).map(|i| format!("d{i}")).collect();
    let same = Dataset::new(ids, vec![first; 5]).unwrap();
    let ds = dir.path().join("same");
    same.save_dir(&ds).unwrap();
    let out = pure(&[
        "purify", "--network", net, "--layer", "relu2", "--neuron", "0", "--dataset", s(&ds), "--n-ref", "5",
        "--out", s(&dir.path().join("y")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
