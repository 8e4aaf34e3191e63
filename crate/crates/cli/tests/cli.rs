use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rigidlim::fixtures;
use rigidlim::grassmann::{fit_plane, Subspace};
use rigidlim::ifs::{Deformation, IFSystem};
use rigidlim::measure::{conformal_weights, estimate_dimension, weight_exponent};
use rigidlim::symbolic::{limit_point, Word};
use rigidlim::tangency::{radius_grid, weak_tangent_ratios};
use rigidlim_cli::report::read_points_csv;
use rigidlim_cli::SystemConfig;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

fn rigidlim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigidlim"))
        .args(args)
        .env_remove("RIGIDLIM_THREADS")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: stdout {:?} stderr {:?}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn built(name: &str) -> IFSystem {
    SystemConfig::parse(&std::fs::read(fixture(name)).unwrap())
        .unwrap()
        .build()
        .unwrap()
}

#[test]
fn bundled_configs_match_the_library_fixtures() {
    let pairs = [
        ("cantor", fixtures::cantor()),
        ("two_ratio", fixtures::two_ratio()),
        ("line_cantor", fixtures::line_cantor()),
        ("koch", fixtures::koch()),
        ("sierpinski", fixtures::sierpinski()),
        ("dust", fixtures::dust()),
        ("conjugated_dust", fixtures::conjugated_dust()),
    ];
    for (name, lib) in pairs {
        let cfg = built(name);
        assert_eq!(cfg.alphabet().size(), lib.alphabet().size(), "{name}");
        assert_eq!(cfg.rho0(), lib.rho0(), "{name}");
        assert_eq!(cfg.boundary_distance(), lib.boundary_distance(), "{name}");
        assert_eq!(cfg.is_similarity(), lib.is_similarity(), "{name}");
        let n = lib.alphabet().size() as u32;
        for w in [vec![0], vec![n - 1, 0, 1], vec![1, n - 1, n - 1, 0]] {
            let w = Word::from(w);
            let diff = (limit_point(&cfg, &w).unwrap() - limit_point(&lib, &w).unwrap()).amax();
            assert!(diff < 1e-15, "{name} {w:?}: {diff}");
        }
    }
}

#[test]
fn validate_exit_codes() {
    let out = rigidlim(&["validate", fixture("cantor").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(report(&out)["results"]["ok"], true);

    let out = rigidlim(&["validate", fixture("conjugated_dust").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&out);
    assert_eq!(r["results"]["conjugation"]["ok"], true);
    assert!(r["results"]["conjugation"]["product"].as_f64().unwrap() <= r["results"]["conjugation"]["bound"].as_f64().unwrap());

    let out = rigidlim(&["validate", fixture("conjugated_dust_c2_2").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let r = report(&out);
    let c = &r["results"]["conjugation"];
    assert_eq!(c["ok"], false);
    assert!(c["product"].as_f64().unwrap() > c["bound"].as_f64().unwrap());

    // Any other command on a rejected config fails with the same status.
    let out = rigidlim(&["dimension", fixture("conjugated_dust_c2_2").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("c2"));
}

#[test]
fn dimension_examples() {
    for (name, want) in [
        ("cantor", 2f64.ln() / 3f64.ln()),
        ("dust", 3.0 * 2f64.ln() / 3f64.ln()),
        ("sierpinski", 3f64.ln() / 2f64.ln()),
    ] {
        let r = report(&rigidlim(&["dimension", fixture(name).to_str().unwrap()]));
        let root = r["results"]["moran_root"].as_f64().unwrap();
        assert!((root - want).abs() <= 1e-9, "{name}: {root}");
        assert!(r["results"]["bracket"]["t_minus"].as_f64().unwrap() <= root);
    }
    let r = report(&rigidlim(&["dimension", fixture("conjugated_dust").to_str().unwrap(), "--depth", "3"]));
    assert!(r["results"]["moran_root"].is_null());
    assert!(r["results"]["width"].as_f64().unwrap() > 0.0);
}

/// Left endpoints of the level-8 Cantor intervals.
fn cantor_points(level: u32) -> Vec<f64> {
    (0..1u32 << level)
        .map(|k| (0..level).map(|i| if k >> (level - 1 - i) & 1 == 1 { 2.0 / 3f64.powi(i as i32 + 1) } else { 0.0 }).sum())
        .collect()
}

#[test]
fn sample_cantor_points_are_near_the_set() {
    let out = rigidlim(&["sample", fixture("cantor").to_str().unwrap(), "--depth", "8", "--count", "256", "--seed", "4"]);
    assert_eq!(code(&out), 0);
    let (points, weights) = read_points_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(points.len(), 256);
    let truth = cantor_points(8);
    let scale = 3f64.powi(-8);
    for (p, w) in points.iter().zip(&weights) {
        assert!((0.0..=1.0).contains(&p[0]));
        let gap = truth.iter().map(|t| (t - p[0]).abs()).fold(f64::INFINITY, f64::min);
        assert!(gap <= scale, "{} is {gap} from the set", p[0]);
        assert!((w - 1.0 / 256.0).abs() < 1e-15);
    }
}

#[test]
fn sample_dust_and_its_conjugate() {
    let dir = tempfile::tempdir().unwrap();
    let base_csv = dir.path().join("dust.csv");
    let conj_csv = dir.path().join("conj.csv");
    let ply = dir.path().join("dust.ply");
    for (name, path) in [("dust", &base_csv), ("conjugated_dust", &conj_csv), ("dust", &ply)] {
        let out = rigidlim(&["sample", fixture(name).to_str().unwrap(), "--depth", "4", "--out", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(report(&out)["results"]["rows"], 4096);
    }
    let (base, _) = read_points_csv(&std::fs::read_to_string(&base_csv).unwrap()).unwrap();
    let (conj, _) = read_points_csv(&std::fs::read_to_string(&conj_csv).unwrap()).unwrap();
    assert_eq!(base.len(), 4096);
    // Octree corners: every coordinate is a sum of 2·3^{-k} terms plus half a cell.
    let cell = 3f64.powi(-4);
    for p in &base {
        for x in p.iter() {
            let k = ((x - cell / 2.0) / cell).round();
            assert!(((x - cell / 2.0) - k * cell).abs() < 1e-12);
        }
    }
    let h = Deformation::new(1.005).unwrap();
    let dev = base
        .iter()
        .zip(&conj)
        .map(|(b, c)| (h.eval(b) - c).amax())
        .fold(0.0, f64::max);
    assert_eq!(dev, 0.0);

    let bytes = std::fs::read(&ply).unwrap();
    let header_end = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    assert!(header.contains("binary_little_endian") && header.contains("element vertex 4096"));
    assert_eq!(bytes.len() - header_end, 4096 * 32);
    let x0 = f64::from_le_bytes(bytes[header_end..header_end + 8].try_into().unwrap());
    assert_eq!(x0, base[0][0]);
}

#[test]
fn sample_round_trip_reproduces_fits_and_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("koch.csv");
    let out = rigidlim(&["sample", fixture("koch").to_str().unwrap(), "--depth", "6", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let (points, weights) = read_points_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();

    let sys = built("koch");
    let t = weight_exponent(&estimate_dimension(&sys, 6, 1e-10).unwrap());
    let table = conformal_weights(&sys, t, 6).unwrap();
    assert!(points == table.points(), "points differ after the round trip");
    assert!(weights == table.weights(), "weights differ after the round trip");

    let a = limit_point(&sys, &Word::from(vec![2, 1])).unwrap();
    let fit_file = fit_plane(&points, &weights, &a, 1).unwrap();
    let fit_lib = fit_plane(table.points(), table.weights(), &a, 1).unwrap();
    assert_eq!(fit_file, fit_lib);
    let radii = radius_grid(sys.rho0(), 10.0 * table.max_radius_bound());
    let lib = weak_tangent_ratios(&table, &a, &Subspace::line_2d(0.4), 0.25, t, &radii).unwrap();
    let ratios: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let q = Subspace::line_2d(0.4).complement_projection();
            let m: f64 = points
                .iter()
                .zip(&weights)
                .filter(|(p, _)| (*p - &a).norm() < r && (&q * (*p - &a)).norm() >= 0.25 * r)
                .map(|(_, w)| w)
                .sum();
            m / r.powf(t)
        })
        .collect();
    assert_eq!(ratios, lib.ratios.iter().map(|(_, q)| *q).collect::<Vec<_>>());
}

#[test]
fn measure_distortion_and_tangent_examples() {
    let r = report(&rigidlim(&["measure", fixture("cantor").to_str().unwrap(), "--depth", "6"]));
    let ws = r["results"]["weights"].as_array().unwrap();
    assert_eq!(ws.len(), 64);
    assert!(ws.iter().all(|w| (w.as_f64().unwrap() - 1.0 / 64.0).abs() < 1e-15));
    assert!(r["results"]["identity_residual"].as_f64().unwrap() <= 1e-12);
    assert_eq!(r["results"]["ahlfors"]["passed"], true);

    let r = report(&rigidlim(&["distortion", fixture("cantor").to_str().unwrap()]));
    assert_eq!(r["results"]["c"], 0.0);
    assert_eq!(r["results"]["k0"], 1.0);
    assert_eq!(r["results"]["d"], 1.0);
    assert_eq!(r["results"]["ball_inclusions"]["violations"], 0);

    let out = rigidlim(&[
        "tangent",
        fixture("line_cantor").to_str().unwrap(),
        "--point",
        "0,0",
        "--l",
        "1",
        "--delta",
        "0.1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["results"]["min_ratio"], 0.0);
}

#[test]
fn rigidity_reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    for (k, threads) in ["1", "4"].iter().enumerate() {
        let path = dir.path().join(format!("r{k}.json"));
        let out = rigidlim(&[
            "rigidity",
            fixture("line_cantor").to_str().unwrap(),
            "--l",
            "1",
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
        let r: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(r["results"]["kind"], "TANGENTIAL");
        assert_eq!(r["provenance"]["threads"].as_u64().unwrap().to_string(), *threads);
        results.push(serde_json::to_string(&r["results"]).unwrap());
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn threads_env_is_overridden_by_the_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_rigidlim"))
        .args(["dimension", fixture("cantor").to_str().unwrap()])
        .env("RIGIDLIM_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(report(&out)["provenance"]["threads"], 3);
    let out = Command::new(env!("CARGO_BIN_EXE_rigidlim"))
        .args(["dimension", fixture("cantor").to_str().unwrap(), "--threads", "2"])
        .env("RIGIDLIM_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(report(&out)["provenance"]["threads"], 2);
}

#[test]
fn usage_and_parse_errors_exit_with_one() {
    assert_eq!(code(&rigidlim(&["dimension"])), 1);
    assert_eq!(code(&rigidlim(&["frobnicate", "x.json"])), 1);
    assert_eq!(code(&rigidlim(&["dimension", "/nonexistent/config.json"])), 1);
    assert_eq!(code(&rigidlim(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(fixture("cantor")).unwrap();
    std::fs::write(&bad, text.replace("\"omega_margin\"", "\"omega_marg\"")).unwrap();
    let out = rigidlim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("omega_marg") && err.contains("bad.json:"), "{err}");

    std::fs::write(&bad, text.replacen("0.3333333333333333", "1.5", 1)).unwrap();
    let out = rigidlim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("maps[0].scale"));

    let out = rigidlim(&["tangent", fixture("cantor").to_str().unwrap(), "--point", "0"]);
    assert_eq!(code(&out), 1);
    let out = rigidlim(&["rigidity", fixture("koch").to_str().unwrap(), "--l", "2"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn measure_writes_the_weight_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    let out = rigidlim(&["measure", fixture("two_ratio").to_str().unwrap(), "--depth", "3", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("word,weight,x1"));
    assert_eq!(lines.count(), 8);
}
