use gtconn::io::*;
use gtconn_core::eval::{RecoveryMetrics, StopReason, TrajectoryPoint};
use gtconn_core::sim::{generate_bernoulli_design, generate_network, DesignKind, NetworkParams};

fn prov() -> Provenance {
    Provenance {
        config_hash: "0123456789abcdef".into(),
        seed: 7,
    }
}

#[test]
fn network_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let params = NetworkParams::new(60, 0.5, 3);
    let net = generate_network(&params).unwrap();
    let path = dir.path().join("net.csv");
    write_network_csv(&path, &prov(), &net).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# gtconn "));
    assert!(text.lines().nth(1).unwrap() == "out,in");
    let back = read_network_csv(&path, params).unwrap();
    assert_eq!(back, net);
}

#[test]
fn empty_network_keeps_header() {
    let dir = tempfile::tempdir().unwrap();
    let mut params = NetworkParams::new(5, 0.3, 1);
    params.k_override = Some(0.0);
    let net = generate_network(&params).unwrap();
    assert_eq!(net.edge_count(), 0);
    let path = dir.path().join("net.csv");
    write_network_csv(&path, &prov(), &net).unwrap();
    assert_eq!(read_network_csv(&path, params).unwrap().edge_count(), 0);
}

#[test]
fn design_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate_bernoulli_design(30, 4.0, 25, 9).unwrap();
    let path = dir.path().join("design.csv");
    write_design_csv(&path, &prov(), &d).unwrap();
    let back = read_design_csv(&path, 30, d.kind).unwrap();
    assert_eq!(back, d);
}

#[test]
fn design_csv_rejects_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("design.csv");
    std::fs::write(&path, "test_index,neuron_index\n0,1\n2,3\n").unwrap();
    assert!(read_design_csv(&path, 5, DesignKind::Adaptive).is_err());
    std::fs::write(&path, "test_index,neuron_index\n0,1\n0,9\n").unwrap();
    assert!(read_design_csv(&path, 5, DesignKind::Adaptive).is_err());
}

#[test]
fn bundle_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let params = NetworkParams::new(40, 0.3, 11);
    let net = generate_network(&params).unwrap();
    let b = NetworkBundle::new(&net, "abc");
    let path = dir.path().join("net.json");
    write_json(&path, &b).unwrap();
    let back: NetworkBundle = read_json(&path).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.params(), params);
    assert_eq!(back.generator, "chacha8");
}

#[test]
fn trajectory_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let m = RecoveryMetrics { tp: 3, fp: 1, tn: 9, fn_: 1 };
    let pts = [
        TrajectoryPoint { tests: 10, stim_size: 4, metrics: m, wall_ms: 0.0, stopped: None },
        TrajectoryPoint { tests: 20, stim_size: 5, metrics: m, wall_ms: 0.0, stopped: Some(StopReason::Budget) },
    ];
    let path = dir.path().join("t.csv");
    write_trajectory_csv(&path, &prov(), "online", &pts).unwrap();
    let rows: Vec<TrajectoryRow> = read_csv(&path).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].stopped_reason, "budget");
    assert_eq!(rows[0].stopped_reason, "");
    assert!((rows[0].spec - 0.9).abs() < 1e-15);
    assert!((rows[0].sens - 0.75).abs() < 1e-15);
    let header = std::fs::read_to_string(&path).unwrap().lines().nth(1).unwrap().to_string();
    assert_eq!(header, TRAJECTORY_HEADER.join(","));
}

#[test]
fn malformed_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{").unwrap();
    let e = read_json::<NetworkBundle>(&path).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    let e = read_json::<NetworkBundle>(&dir.path().join("missing.json")).unwrap_err();
    assert_eq!(e.exit_code(), 1);
}
