use std::path::Path;
use std::process::{Command, Output};

use distclust::corpus::write_pairs;
use distclust::synth::two_groups;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_distclust"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn two_group_file(dir: &Path) {
    let corpus = two_groups(5, 3, 150, 21);
    let mut buf = Vec::new();
    write_pairs(&corpus, &mut buf).unwrap();
    std::fs::write(dir.join("pairs.tsv"), buf).unwrap();
}

fn train(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "pairs.tsv", "-o", out, "--target-clusters", "2"];
    args.extend_from_slice(extra);
    run(&args, dir)
}

#[test]
fn train_writes_snapshots_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    two_group_file(dir.path());
    let a = train(dir.path(), "a", &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = train(dir.path(), "b", &["--threads", "3"]);
    assert!(b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let lines: Vec<String> = stdout(&a).lines().map(str::to_string).collect();
    assert_eq!(lines[0], "beta\tclusters\tfree_energy\tavg_distortion\tentropy_bits");
    assert_eq!(lines.len(), 3);
    for name in ["snapshot-000.dcm", "snapshot-001.dcm", "final.dcm"] {
        let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let final_model = std::fs::read_to_string(dir.path().join("a/final.dcm")).unwrap();
    assert!(final_model.contains("clusters\t2\n"));
}

#[test]
fn unreadable_input_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "missing.tsv", "-o", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());

    std::fs::write(dir.path().join("bad.tsv"), "fire\tgun\tmany\n").unwrap();
    let o = run(&["train", "bad.tsv", "-o", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn stall_exits_4_and_keeps_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pairs.tsv"), "a\tx\t2\nb\tx\t1\na\ty\t2\nb\ty\t1\n").unwrap();
    let o = train(dir.path(), "m", &["--beta-max", "50", "--beta-growth", "2"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(dir.path().join("m/final.dcm").exists());
}

#[test]
fn clusters_lists_k_nouns_per_cluster() {
    let dir = tempfile::tempdir().unwrap();
    two_group_file(dir.path());
    assert!(train(dir.path(), "m", &[]).status.success());
    for k in [1usize, 3] {
        let o = run(&["clusters", "m/final.dcm", "-k", &k.to_string()], dir.path());
        assert!(o.status.success());
        let text = stdout(&o);
        let blocks: Vec<&str> = text.split("cluster ").filter(|b| !b.is_empty()).collect();
        assert_eq!(blocks.len(), 2);
        for b in blocks {
            let nouns: Vec<&str> = b.lines().skip(1).collect();
            assert_eq!(nouns.len(), k);
            let group = &nouns[0].trim_start()[..1];
            assert!(nouns.iter().all(|n| n.trim_start().starts_with(group)));
        }
    }
    let o = run(&["clusters", "m/snapshot-000.dcm", "-k", "100"], dir.path());
    assert_eq!(stdout(&o).matches("cluster ").count(), 1);
    assert_eq!(stdout(&o).lines().count(), 11);

    let text = std::fs::read_to_string(dir.path().join("m/final.dcm")).unwrap();
    std::fs::write(dir.path().join("bad.dcm"), text.replacen("MEMBERSHIPS", "MEMBERS", 1)).unwrap();
    let o = run(&["clusters", "bad.dcm"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("MEMBERSHIPS"));
}

#[test]
fn predict_prints_sorted_distribution() {
    let dir = tempfile::tempdir().unwrap();
    two_group_file(dir.path());
    assert!(train(dir.path(), "m", &[]).status.success());
    let o = run(&["predict", "m/final.dcm", "--noun", "a01"], dir.path());
    assert!(o.status.success());
    let probs: Vec<(String, f64)> = stdout(&o)
        .lines()
        .map(|l| {
            let (v, p) = l.split_once('\t').unwrap();
            (v.to_string(), p.parse().unwrap())
        })
        .collect();
    assert!(probs.windows(2).all(|w| w[0].1 >= w[1].1));
    assert!((probs.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() <= 1e-9);
    assert!(probs[0].0.starts_with('x'));

    std::fs::write(dir.path().join("d.tsv"), "y00\t3\ny01\t2\ny02\t4\n").unwrap();
    let o = run(&["predict", "m/final.dcm", "--dist", "d.tsv"], dir.path());
    assert!(stdout(&o).lines().next().unwrap().starts_with('y'));

    std::fs::write(dir.path().join("u.tsv"), "y00\t3\nzz\t1\n").unwrap();
    let o = run(&["predict", "m/final.dcm", "--dist", "u.tsv"], dir.path());
    assert!(!o.status.success());
    let o = run(&["predict", "m/final.dcm", "--dist", "u.tsv", "--clip-unseen"], dir.path());
    assert!(o.status.success());

    let o = run(&["predict", "m/final.dcm", "--noun", "nobody"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn split_delete_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    two_group_file(dir.path());
    let o = run(
        &["split", "pairs.tsv", "--train-out", "train.tsv", "--test-out", "test.tsv", "--seed", "4"],
        dir.path(),
    );
    assert!(o.status.success());
    let o = run(&["train", "train.tsv", "-o", "m", "--target-clusters", "2"], dir.path());
    assert!(o.status.success());
    let o = run(&["eval", "m", "--train", "train.tsv", "--test", "test.tsv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["model_size", "beta", "train_re_bits", "test_re_bits", "new_re_bits"]);
    assert_eq!(rows.len(), 3);
    assert_eq!((rows[1][0], rows[2][0]), ("1", "2"));
    assert_eq!(rows[1][4], "nan");

    let o = run(
        &[
            "delete", "pairs.tsv", "--out", "kept.tsv", "--deleted-out", "del.tsv", "--count", "4",
            "--min-verb-freq", "1", "--max-verb-freq", "100000",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(dir.path().join("del.tsv")).unwrap().lines().count(), 4);
    let o = run(&["train", "kept.tsv", "-o", "k", "--target-clusters", "2"], dir.path());
    assert!(o.status.success());
    let o = run(
        &["eval", "k", "--mode", "decision", "--original", "pairs.tsv", "--deleted", "del.tsv", "-o", "dec.tsv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("dec.tsv")).unwrap();
    assert!(text.starts_with("model_size\tbeta\terr_all\terr_exceptional\tn_triples\n"));
    assert_eq!(text.lines().count(), 3);

    std::fs::write(dir.path().join("empty.tsv"), "").unwrap();
    let o = run(&["eval", "m", "--test", "empty.tsv"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = run(
        &["delete", "pairs.tsv", "--out", "x.tsv", "--deleted-out", "y.tsv", "--count", "1000"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}
