use proptest::prelude::*;
use std::path::Path;
use std::process::{Command, Output};
use zifqr_cli::io::{emit_dataset, ingest_csv, LabeledDataset, TimeNormalization};
use zifqr_core::{ReplicatedFunctionalDataset, TimeGrid};

const SCENARIO: &str = r#"
scenario_id = "small"
n = 30
L = 30
J = 3
R = 3
pi0 = 0.3
K_candidates = [4, 5]
methods = ["naive", "be-me", "be-zime", "oracle"]
segments = [1, 2]
"#;

fn zifqr(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zifqr"));
    cmd.args(args).env_remove("ZIFQR_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scen = d.join("s.toml");
    std::fs::write(&scen, SCENARIO).unwrap();

    let sim = d.join("sim");
    ok(&zifqr(&["simulate", "--scenario", p(&scen), "--seed", "9", "--out", p(&sim), "--emit-replicate", "0"], &[]));
    let agg = std::fs::read_to_string(sim.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("scenario_id,method,tau,metric,value,R,seed\n"));
    assert!(agg.contains("small,be-zime-m2,0.5,mise,"));
    assert!(agg.lines().skip(1).all(|l| l.ends_with(",3,9")));

    let data = sim.join("data_r0.csv");
    let outcomes = sim.join("outcomes_r0.csv");
    let corr = d.join("corr");
    ok(&zifqr(
        &["correct", "--input", p(&data), "--method", "be-zime", "--segments", "2", "--K", "auto",
          "--k-candidates", "4,5,6", "--outcomes", p(&outcomes), "--out", p(&corr)],
        &[],
    ));
    for f in ["coefficients.csv", "curves.csv", "pi.csv", "meta.toml", "bic.csv"] {
        assert!(corr.join(f).exists(), "{f}");
    }
    assert!(std::fs::read_to_string(corr.join("meta.toml")).unwrap().contains("method = \"be-zime-m2\""));

    let naive = d.join("naive");
    ok(&zifqr(&["correct", "--input", p(&data), "--method", "naive", "--out", p(&naive)], &[]));

    let fit = d.join("fit");
    ok(&zifqr(
        &["fit-qr", "--corrected", p(&corr), "--outcomes", p(&outcomes), "--taus", "0.25,0.5,0.75",
          "--joint", "true", "--bootstrap", "20", "--out", p(&fit)],
        &[],
    ));
    assert!(fit.join("beta.csv").exists() && fit.join("bands.csv").exists());
    let fit_scaled = d.join("fit_scaled");
    ok(&zifqr(
        &["fit-qr", "--corrected", p(&naive), "--outcomes", p(&outcomes), "--scale-by", p(&corr), "--out", p(&fit_scaled)],
        &[],
    ));

    let out = zifqr(&["global-test", "--corrected", p(&corr), "--outcomes", p(&outcomes), "--B", "200", "--seed", "3"], &[]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let pv: f64 = text.split_whitespace().find_map(|f| f.strip_prefix("p_value=")).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&pv) && text.trim_end().ends_with("B=200"), "{text}");

    let cmp = zifqr(&["compare", "--a", p(&fit), "--b", p(&fit), "--out", p(&d.join("cmp.csv"))], &[]);
    ok(&cmp);
    assert_eq!(String::from_utf8(cmp.stdout).unwrap(), "tau,mean_abs_deviation\n0.25,0\n0.5,0\n0.75,0\n");
    ok(&zifqr(&["compare", "--a", p(&corr), "--b", p(&naive)], &[]));
}

#[test]
fn simulate_is_byte_identical_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scen = d.join("s.toml");
    std::fs::write(&scen, SCENARIO).unwrap();
    let (a, b, c) = (d.join("a"), d.join("b"), d.join("c"));
    ok(&zifqr(&["simulate", "--scenario", p(&scen), "--seed", "4", "--out", p(&a)], &[]));
    ok(&zifqr(&["simulate", "--scenario", p(&scen), "--seed", "4", "--out", p(&b)], &[]));
    ok(&zifqr(&["--threads", "1", "simulate", "--scenario", p(&scen), "--seed", "4", "--out", p(&c)], &[]));
    let read = |x: &Path| std::fs::read(x.join("aggregate.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));

    let e = d.join("e");
    ok(&zifqr(&["simulate", "--scenario", p(&scen), "--seed", "1", "--out", p(&e)], &[("ZIFQR_SEED", "4")]));
    assert_eq!(read(&a), read(&e));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    std::fs::write(&data, "subject_id,replicate_id,time,value\na,1,0,1\na,1,1,2\nb,1,0,1\nb,1,1,3\n").unwrap();

    let usage = zifqr(&["correct", "--input", p(&data), "--method", "lasso", "--out", p(&d.join("x"))], &[]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(zifqr(&["correct", "--bogus"], &[]).status.code(), Some(2));

    let bad = d.join("bad.csv");
    std::fs::write(&bad, "subject_id,replicate_id,time,value\na,1,0,1\na,1,0,2\na,1,1,2\n").unwrap();
    let data_err = zifqr(&["correct", "--input", p(&bad), "--method", "naive", "--out", p(&d.join("y"))], &[]);
    assert_eq!(data_err.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&data_err.stderr).contains("lines 2 and 3"));

    // a constant covariate duplicates the intercept column
    let six = d.join("six.csv");
    let mut rows = String::from("subject_id,replicate_id,time,value\n");
    let mut ys = String::from("subject_id,y,age\n");
    for i in 0..6 {
        for t in 0..4 {
            rows += &format!("s{i},1,{},{}\n", t as f64 / 3.0, (i * 7 + t * 3) % 5 + 1);
        }
        ys += &format!("s{i},{i},3\n");
    }
    std::fs::write(&six, rows).unwrap();
    let corr = d.join("corr");
    ok(&zifqr(&["correct", "--input", p(&six), "--method", "naive", "--basis", "cosine", "--K", "2", "--out", p(&corr)], &[]));
    let outcomes = d.join("o.csv");
    std::fs::write(&outcomes, ys).unwrap();
    let num = zifqr(&["fit-qr", "--corrected", p(&corr), "--outcomes", p(&outcomes), "--out", p(&d.join("f"))], &[]);
    assert_eq!(num.status.code(), Some(4), "{}", String::from_utf8_lossy(&num.stderr));
}

fn dataset() -> impl Strategy<Value = LabeledDataset> {
    (1usize..5, 1usize..4, 2usize..7).prop_flat_map(|(n, j, len)| {
        let cells = n * j * len;
        (
            prop::collection::vec(0u32..30, cells),
            prop::collection::vec(prop::bool::weighted(0.8), cells),
        )
            .prop_map(move |(vals, mut mask)| {
                // keep every grid point and every replicate slot observed somewhere
                for l in 0..len {
                    mask[l] = true;
                }
                for i in 0..n {
                    for r in 0..j {
                        mask[(i * j + r) * len] = true;
                    }
                }
                let grid = TimeGrid::equispaced(len).unwrap();
                let values = vals.iter().zip(&mask).map(|(&v, &m)| if m { f64::from(v) } else { 0.0 }).collect();
                let data = ReplicatedFunctionalDataset::new(n, j, grid, values, mask).unwrap();
                LabeledDataset { subjects: (0..n).map(|i| format!("id{i}")).collect(), data }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ingest_inverts_emit(ds in dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        emit_dataset(std::fs::File::create(&path).unwrap(), &ds).unwrap();
        let back = ingest_csv(&path, TimeNormalization::Unit).unwrap();
        prop_assert_eq!(back, ds);
    }
}
