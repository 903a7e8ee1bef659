use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn latmetric(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latmetric"))
        .args(args)
        .env_remove("LATMETRIC_THREADS")
        .output()
        .expect("spawn latmetric")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bundled_configs_validate() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let o = latmetric(&["validate", "--config", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
        seen += 1;
    }
    assert_eq!(seen, 8);
}

#[test]
fn validate_names_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(
        &path,
        "name = \"bad\"\nkind = \"impurities\"\nU = 4.0\nd = 20\nn_up = 4\nn_down = 4\n\
         [impurities]\nsites = [8, 25]\nV = [1.0]\n",
    )
    .unwrap();
    let o = latmetric(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("impurities.sites"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    fs::write(&path, "name = \"x\"\nkind = \"homogeneous\"\nU = 4.0\nsizes = [4]\nsize = 3\n").unwrap();
    let o = latmetric(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oversized_sector_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.toml");
    fs::write(&path, "name = \"big\"\nkind = \"homogeneous\"\nU = 4.0\nsizes = [30]\n").unwrap();
    let o = latmetric(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("DMRG"), "{}", stderr(&o));
}

#[test]
fn potential_distance_of_shifted_fields_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    fs::write(&a, "0 1 2 3\n").unwrap();
    fs::write(&b, "# shifted\n5,6,7,8\n").unwrap();
    let o = latmetric(&["distance", "--kind", "va", "--v1", a.to_str().unwrap(), "--v2", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("raw,scaled,c_min"));
    let fields: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(fields[..2], [0.0, 0.0]);
    assert_eq!(fields[2], 5.0);
}

#[test]
fn density_distance_needs_both_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    fs::write(&a, "1 1\n").unwrap();
    let o = latmetric(&["distance", "--kind", "rho", "--rho1", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--rho2"));
}

#[test]
fn run_writes_csv_in_grid_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    let out = dir.path().join("out.csv");
    fs::write(
        &cfg,
        "name = \"small\"\nkind = \"impurities\"\nU = 4.0\nd = 6\nn_up = 1\nn_down = 1\n\
         [impurities]\nsites = [2, 3]\nV = [0.0, 1.0, 2.0]\n",
    )
    .unwrap();
    let o = latmetric(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some(
            "scenario,d,t,U,n_up,n_down,param_name,param_value,d_rho_scaled,d_psi_scaled,\
             d_va_scaled,d_vb_scaled,exact_energy,lda_converged,inversion_converged,inversion_iters,wall_ms"
        )
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (row, v) in rows.iter().zip(["0.0", "1.0", "2.0"]) {
        assert_eq!(row[6], "V");
        assert_eq!(row[7], v);
        // d <= 14 runs the inversion by default, so every distance is present.
        assert!(row[8..12].iter().all(|x| !x.is_empty()));
        assert_eq!(row[14], "true");
    }
}

#[test]
fn run_is_deterministic_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("h.toml");
    fs::write(
        &cfg,
        "name = \"h\"\nkind = \"harmonic\"\nU = 2.0\nd = 6\nn_up = 1\nn_down = 1\n\
         [harmonic]\nk = [0.1, 0.5]\n",
    )
    .unwrap();
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let mut runs = Vec::new();
    for (i, threads) in ["1", "2"].into_iter().enumerate() {
        let out = dir.path().join(format!("{i}.csv"));
        let o = latmetric(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--quiet",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(strip(&out));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn invert_recovers_a_known_potential() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("n.txt");
    let v_true = dir.path().join("v.txt");
    let v_out = dir.path().join("v_out.txt");
    let trace = dir.path().join("trace.csv");
    // Density of the symmetric dimer with one particle per spin.
    fs::write(&target, "1 1\n").unwrap();
    fs::write(&v_true, "0 0\n").unwrap();
    let o = latmetric(&[
        "invert", "--d", "2", "--n-up", "1", "--n-down", "1", "--U", "4", "--density",
        target.to_str().unwrap(), "--out", v_out.to_str().unwrap(), "--trace", trace.to_str().unwrap(), "--quiet",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = latmetric(&["distance", "--kind", "va", "--v1", v_out.to_str().unwrap(), "--v2", v_true.to_str().unwrap()]);
    let raw: f64 = stdout(&o).lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(raw < 1e-9, "{raw}");
    assert!(fs::read_to_string(&trace).unwrap().starts_with("iteration,average_error,energy"));
}

#[test]
fn ill_conditioned_target_exits_with_numerical_status() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("n.txt");
    fs::write(&target, "1.9999999999 0.0000000001\n").unwrap();
    let o = latmetric(&[
        "invert", "--d", "2", "--n-up", "1", "--n-down", "1", "--U", "4", "--density",
        target.to_str().unwrap(), "--quiet",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("site"), "{}", stderr(&o));
}

#[test]
fn sample_random_prints_summary() {
    let o = latmetric(&[
        "sample-random", "--d", "4", "--n-up", "1", "--n-down", "1", "--U", "4", "--samples", "2000", "--seed", "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("samples,mean_d_psi,stderr_d_psi,mean_d_rho,stderr_d_rho"));
    let fields: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(fields[0], 2000.0);
    assert!(fields[1] > 0.5 && fields[1] < 1.0);
}

#[test]
fn small_bundled_configs_run() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["fig1.toml", "fig7.toml"] {
        let out = dir.path().join("out.csv");
        let cfg = configs_dir().join(name);
        let o = latmetric(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(fs::read_to_string(&out).unwrap().lines().count() > 1);
    }
}
