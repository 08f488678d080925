use std::io::BufReader;

use alma_core::cluster::KmeansConfig;
use alma_core::diagnostics::diagnose;
use alma_core::harness::{run_scenario, Method, ScenarioConfig};
use alma_core::model::assemble_ground_truth;
use alma_core::pipeline::run_alma;
use alma_core::rng::substream;
use alma_core::synthgen::{read_edge_list, sample_adjacency, sample_instance, write_edge_list};
use alma_core::tensor::{read_tensor, write_tensor, EntryFormat};
use alma_core::twist::{run_twist, TwistConfig};
use alma_core::{AlmaConfig, MmlsbmInstance};

#[test]
fn files_round_trip_into_the_same_fit() {
    let mut rng = substream(31, &[0]);
    let inst = sample_instance(50, 15, 2, 2, 0.9, 0.3, &mut rng).unwrap();
    let gt = assemble_ground_truth(&inst).unwrap();
    let a = sample_adjacency(&gt, &mut rng);

    let mut bin = Vec::new();
    write_tensor(&mut bin, &a, EntryFormat::U8).unwrap();
    let from_bin = read_tensor(&mut bin.as_slice()).unwrap();
    let mut edges = Vec::new();
    write_edge_list(&mut edges, &a).unwrap();
    let from_edges = read_edge_list(BufReader::new(edges.as_slice())).unwrap();
    assert_eq!(from_bin, a);
    assert_eq!(from_edges, a);

    let back = MmlsbmInstance::from_json(&inst.to_json().unwrap()).unwrap();
    assert_eq!(back, inst);

    let fit = |t| {
        let mut rng = substream(1, &[0]);
        run_alma(t, &inst.ranks, &AlmaConfig::default(), &KmeansConfig::new(2), &mut rng)
            .unwrap()
            .clustering
    };
    assert_eq!(fit(&from_bin), fit(&from_edges));
    let errs = fit(&a).evaluate(&inst).unwrap();
    assert_eq!(errs.between_layer, 0.0);
}

#[test]
fn both_methods_solve_an_easy_instance() {
    let mut rng = substream(32, &[0]);
    let inst = sample_instance(60, 21, 3, 2, 0.9, 0.2, &mut rng).unwrap();
    let a = sample_adjacency(&assemble_ground_truth(&inst).unwrap(), &mut rng);
    let kcfg = KmeansConfig::new(3);
    let alma = run_alma(&a, &inst.ranks, &AlmaConfig::default(), &kcfg, &mut rng).unwrap();
    let tcfg = TwistConfig {
        eps_stop: Some(1e-4),
        ..TwistConfig::new(3, 5)
    };
    let twist = run_twist(&a, &inst.ranks, &tcfg, &kcfg, &mut rng).unwrap();
    for res in [alma.clustering, twist.clustering] {
        let e = res.evaluate(&inst).unwrap();
        assert_eq!(e.between_layer, 0.0);
        assert!(e.within_layer_avg <= 0.02, "{e:?}");
    }
}

#[test]
fn diagnostics_report_is_json() {
    let mut rng = substream(33, &[0]);
    let inst = sample_instance(30, 9, 3, 2, 0.6, 0.5, &mut rng).unwrap();
    let rep = diagnose(&assemble_ground_truth(&inst).unwrap(), &inst).unwrap();
    let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
    for key in ["kappa_h", "conditions", "beta_nl", "a1"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(rep.a1.holds());
}

#[test]
fn scenario_records_are_complete() {
    let cfg = ScenarioConfig {
        grid: vec![40.0, 60.0],
        replicates: 2,
        methods: vec![Method::Twist, Method::Alma],
        ..ScenarioConfig::preset(2).unwrap()
    };
    let recs = run_scenario(&cfg, 2).unwrap();
    assert_eq!(recs.len(), 8);
    assert!(recs.iter().all(|r| r.sweep_param == "n" && !r.failed()));
    // alma first within each replicate, whatever order the flag lists
    assert_eq!(recs[0].method, Method::Alma);
    assert_eq!(recs[1].method, Method::Twist);
    assert_eq!(recs[0].seed, recs[1].seed);
}
