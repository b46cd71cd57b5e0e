mod common;

use common::{csv_rows, files_under, lgcp_header, lgcp_simulation, Workspace};

const FOUR_MODELS: &str = r#"
[[models]]
name = "intercept"

[[models]]
name = "fault"
covariates = ["D_f"]

[[models]]
name = "fault+plate"
covariates = ["D_f", "D_pb"]

[[models]]
name = "fault*plate"
covariates = ["D_f", "D_pb"]
interactions = [["D_f", "D_pb"]]
"#;

fn simulate_points(ws: &Workspace) {
    ws.write("sim.toml", &lgcp_simulation(4.5, "D_f = -3.0"));
    ws.run(&["simulate", "--config", "sim.toml", "--out", "data"]);
}

#[test]
fn lgcp_model_list_gives_sorted_comparison() {
    let ws = Workspace::new();
    simulate_points(&ws);
    ws.write("fit.toml", &(lgcp_header("lgcp") + FOUR_MODELS));
    let stdout = ws.run(&["fit-lgcp", "--config", "fit.toml", "--out", "out"]);
    assert_eq!(stdout.lines().count(), 4);

    let (header, rows) = csv_rows(&ws.read("out/comparison.csv"));
    assert_eq!(header, ["model", "DIC", "sum_log_cpo"]);
    assert_eq!(rows.len(), 4);
    let dic: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(dic.windows(2).all(|w| w[0] <= w[1]), "{dic:?}");
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap().is_finite()));

    let (header, fixed) = csv_rows(&ws.read("out/fault_plate/summary_fixed.csv"));
    assert_eq!(header, ["name", "mean", "sd", "0.025quant", "0.5quant", "0.975quant", "mode"]);
    let names: Vec<&str> = fixed.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["intercept", "D_f", "D_pb", "D_f:D_pb"]);
    let (_, hyper) = csv_rows(&ws.read("out/fault_plate/summary_hyper.csv"));
    assert_eq!(hyper.len(), 2);

    let (header, curve) = csv_rows(&ws.read("out/fault_plate/marginal_D_f_D_pb.csv"));
    assert_eq!(header, ["x", "density"]);
    assert_eq!(curve.len(), 201);

    let mesh = ws.read("out/mesh.txt");
    let nv = mesh.lines().filter(|l| l.starts_with("v ")).count();
    let (_, field) = csv_rows(&ws.read("out/intercept/field_field.csv"));
    assert_eq!(field.len(), nv);
    assert!(ws.path("out/intercept/cpo.csv").exists());
}

#[test]
fn intercept_only_recovers_homogeneous_rate() {
    let ws = Workspace::new();
    ws.write("sim.toml", &lgcp_simulation(3.0, ""));
    ws.run(&["simulate", "--config", "sim.toml", "--out", "data", "--seed", "5"]);
    ws.write("fit.toml", &lgcp_header("lgcp"));
    ws.run(&["fit-lgcp", "--config", "fit.toml", "--out", "out"]);
    let (_, rows) = csv_rows(&ws.read("out/model/summary_fixed.csv"));
    let (mean, sd): (f64, f64) = (rows[0][1].parse().unwrap(), rows[0][2].parse().unwrap());
    assert!((mean - 3.0).abs() <= 2.0 * sd, "β₀ {mean} ± {sd}");
}

#[test]
fn criticize_writes_only_criticism() {
    let ws = Workspace::new();
    simulate_points(&ws);
    ws.write("fit.toml", &lgcp_header("lgcp"));
    ws.run(&["criticize", "--config", "fit.toml", "--out", "out"]);
    let files: Vec<String> = files_under(&ws.path("out")).iter().map(|p| p.display().to_string()).collect();
    assert_eq!(files, ["comparison.csv", "mesh.txt", "model/cpo.csv", "model/criticism.txt"]);
}

#[test]
fn mesh_subcommand_reports_size() {
    let ws = Workspace::new();
    simulate_points(&ws);
    ws.write("fit.toml", &lgcp_header("lgcp"));
    let stdout = ws.run(&["mesh", "--config", "fit.toml", "--out", "out"]);
    let mesh = ws.read("out/mesh.txt");
    let nv = mesh.lines().filter(|l| l.starts_with("v ")).count();
    assert!(stdout.starts_with(&format!("{nv} vertices")), "{stdout}");
}

#[test]
fn unknown_covariate_is_rejected() {
    let ws = Workspace::new();
    ws.write("fit.toml", &(lgcp_header("lgcp") + "[[models]]\nname = \"m\"\ncovariates = [\"D_ns\"]\n"));
    let out = ws.spatinla(&["fit-lgcp", "--config", "fit.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown covariate `D_ns`"), "{err}");
}

fn bym_config(workflow: &str, body: &str) -> String {
    format!(
        r#"workflow = "{workflow}"
seed = 3

[input]
regions = "data/regions.geojson"
counts = "data/counts.csv"

[criticism]
samples = 500
{body}"#
    )
}

const TWO_WINDOWS: &str = r#"
[[windows]]
name = "before"
start = 2020-02-24
end = 2020-03-22

[[windows]]
name = "after"
start = 2020-03-23
end = 2020-04-26
"#;

#[test]
fn bym_lattice_round_trip() {
    let ws = Workspace::new();
    let sim = format!(
        "workflow = \"simulate\"\nseed = 3\n{TWO_WINDOWS}\n[simulate]\nkind = \"bym\"\nalpha = 2.0\ntau_v = 2.0\ntau_nu = 4.0\nlattice = [5, 4]\n"
    );
    ws.write("sim.toml", &sim);
    ws.run(&["simulate", "--config", "sim.toml", "--out", "data"]);
    let (_, counts) = csv_rows(&ws.read("data/counts.csv"));
    assert_eq!(counts.len(), 40);

    ws.write("fit.toml", &bym_config("bym", TWO_WINDOWS));
    let stdout = ws.run(&["fit-bym", "--config", "fit.toml", "--out", "out"]);
    assert_eq!(stdout.lines().count(), 2);

    let map: serde_json::Value = serde_json::from_str(&ws.read("out/after/risk_map.geojson")).unwrap();
    let features = map["features"].as_array().unwrap();
    assert_eq!(features.len(), 20);
    for f in features {
        let p = &f["properties"];
        let (lo, mid, hi) = (p["zeta_q025"].as_f64().unwrap(), p["zeta_mean"].as_f64().unwrap(), p["zeta_q975"].as_f64().unwrap());
        assert!(0.0 < lo && lo < mid && mid < hi, "{p}");
    }

    let (_, fixed) = csv_rows(&ws.read("out/before/summary_fixed.csv"));
    assert_eq!(fixed[0][0], "alpha");
    let (_, hyper) = csv_rows(&ws.read("out/before/summary_hyper.csv"));
    let names: Vec<&str> = hyper.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["variance_nu", "variance_v"]);

    let summary = ws.read("out/before/summary.txt");
    let line = summary.lines().next().unwrap();
    let value: f64 = line.strip_prefix("average number of counts per district = ").unwrap().parse().unwrap();
    let mode: f64 = fixed[0][6].parse().unwrap();
    assert!((value - mode.exp()).abs() < 1e-9 * value);

    let (header, windows) = csv_rows(&ws.read("out/windows.csv"));
    assert_eq!(header, ["window", "DIC", "sum_log_cpo", "variance_fraction", "dropped"]);
    assert_eq!(windows.len(), 2);
    let vf: f64 = windows[0][3].parse().unwrap();
    assert!((0.0..=1.0).contains(&vf));
}

#[test]
fn identical_windows_give_identical_outputs() {
    let ws = Workspace::new();
    let (ids, polys) = spatinla_cli::bym::lattice_regions(3, 3);
    let features: Vec<_> = ids
        .iter()
        .zip(&polys)
        .map(|(id, p)| (p.clone(), serde_json::Map::from_iter([("region_id".to_string(), id.clone().into())])))
        .collect();
    ws.write("data/regions.geojson", &spatinla_core::geojson::polygons_collection(&features).to_string());
    let mut counts = String::from("region_id,date,count\n");
    for (i, id) in ids.iter().enumerate() {
        for date in ["2020-03-01", "2020-04-01"] {
            counts += &format!("{id},{date},{}\n", 3 + (i * 7) % 5);
        }
    }
    ws.write("data/counts.csv", &counts);
    ws.write("fit.toml", &bym_config("bym", TWO_WINDOWS));
    ws.run(&["fit-bym", "--config", "fit.toml", "--out", "out"]);
    let before = files_under(&ws.path("out/before"));
    assert_eq!(before, files_under(&ws.path("out/after")));
    for f in before {
        let f = f.display().to_string();
        assert_eq!(ws.read(&format!("out/before/{f}")), ws.read(&format!("out/after/{f}")), "{f}");
    }
}
