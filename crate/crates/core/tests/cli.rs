use std::path::Path;

use p3d_inspect::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE, MANIFEST_FILE};

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("p3d-inspect").chain(args.iter().copied()))
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&[]), EXIT_USAGE);
    assert_eq!(cli(&["train", "--epochs", "many"]), EXIT_USAGE);
    assert_eq!(cli(&["flops", "--model", "alexnet"]), EXIT_USAGE);
    assert_eq!(cli(&["--help"]), EXIT_OK);
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("out"));
    let missing = s(&dir.path().join("nowhere"));
    assert_eq!(cli(&["eval", "--checkpoint", &missing, "--data", &missing, "--out", &out]), EXIT_DATA);
}

#[test]
fn synth_train_eval_explain_info() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = s(&root.join("data"));
    assert_eq!(cli(&["synth", "--defect", "8", "--non-defect", "8", "--size", "32", "--out", &data]), EXIT_OK);
    assert!(root.join("data/defect/0000.png").is_file());
    assert!(root.join("data").join(MANIFEST_FILE).is_file());

    let config = root.join("train.cfg");
    std::fs::write(&config, "# short run\nepochs = 1\nbatch = 4\nsize = 32\nno-augment = true\n").unwrap();
    let train = s(&root.join("train"));
    assert_eq!(cli(&["train", "--config", &s(&config), "--data", &data, "--out", &train]), EXIT_OK);
    for f in ["model.ckpt", "report.json", "history.csv", "predictions.json", MANIFEST_FILE] {
        assert!(root.join("train").join(f).is_file(), "{f}");
    }
    let history = std::fs::read_to_string(root.join("train/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("train").join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["settings"]["epochs"], "1");
    assert_eq!(manifest["settings"]["no_augment"], "true");

    let ckpt = s(&root.join("train/model.ckpt"));
    let eval = s(&root.join("eval"));
    assert_eq!(cli(&["eval", "--checkpoint", &ckpt, "--data", &data, "--out", &eval]), EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("eval/eval.json")).unwrap()).unwrap();
    assert_eq!(report["counts"]["tp"].as_u64().unwrap() + report["counts"]["fn"].as_u64().unwrap(), 8);

    let image = s(&root.join("data/defect/0001.png"));
    let explain = s(&root.join("explain"));
    assert_eq!(cli(&["explain", "--checkpoint", &ckpt, "--image", &image, "--class", "1", "--out", &explain]), EXIT_OK);
    for f in ["overlay.png", "heatmap.pgm", "explanation.json"] {
        assert!(root.join("explain").join(f).is_file(), "{f}");
    }
    let pgm = std::fs::read(root.join("explain/heatmap.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 32\n255\n"));
    assert_eq!(cli(&["explain", "--checkpoint", &ckpt, "--image", &image, "--method", "shap", "--out", &explain]), EXIT_USAGE);

    assert_eq!(cli(&["info", "--checkpoint", &ckpt]), EXIT_OK);
    let flops = s(&root.join("flops"));
    assert_eq!(cli(&["flops", "--model", "modified-vgg16", "--out", &flops]), EXIT_OK);
    assert!(root.join("flops/flops.json").is_file());

    let pre = s(&root.join("pre"));
    assert_eq!(cli(&["preprocess", "--in", &data, "--variant", "roin", "--out", &pre]), EXIT_OK);
    assert_eq!(root.join("pre/non_defect").read_dir().unwrap().count(), 8);
}

#[test]
fn manifest_from_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = s(&dir.path().join("data"));
    assert_eq!(cli(&["synth", "--defect", "2", "--non-defect", "2", "--size", "32", "--out", &data]), EXIT_OK);
    let manifest = s(&dir.path().join("data").join(MANIFEST_FILE));
    assert_eq!(cli(&["train", "--manifest", &manifest]), EXIT_USAGE);
}
