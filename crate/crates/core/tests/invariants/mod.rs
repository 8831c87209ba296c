//! Invariant checks shared by the property and acceptance suites.

use ndarray::{Array2, Array3};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use telgraph::dataset::synth::signal_names;
use telgraph::dataset::{
    annotate, generate_synthetic_panel, robust_scale, synthetic_cells, window_split,
    AnnotationConfig, CellRule, LabelSet, Scenario, SynthProfile, TimeSeriesPanel,
};
use telgraph::detect::{esd_test, zscore_detect};
use telgraph::fedsim::{
    aggregate_updates, fedavg_aggregate, fedgraph_aggregate, similarity_matrix, ClientUpdate,
    LocalMetrics, Strategy,
};
use telgraph::graph::{disjoint_union_batch, CellMeta, NwGraph, RelationRule, SwGraph};
use telgraph::metrics::prf1;
use telgraph::nn::{GConvLstm, LossMode, ModelConfig, ModelWeights};
use telgraph::runner::{ExperimentConfig, FlSection};

pub type Outcome = Result<(), String>;

fn check<S: proptest::strategy::Strategy>(
    cases: u32,
    strategy: &S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Outcome
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(strategy, test).map_err(|e| e.to_string())
}

pub type Invariant = (&'static str, fn(u32) -> Outcome, u32);

/// Every invariant with its default case count.
pub const ALL: &[Invariant] = &[
    ("union_preserves_adjacency", union_preserves_adjacency, 64),
    ("relation_is_symmetric", relation_is_symmetric, 64),
    ("sw_graph_json_round_trip", sw_graph_json_round_trip, 64),
    ("windows_do_not_leak", windows_do_not_leak, 48),
    (
        "annotation_changes_exactly_labeled_points",
        annotation_changes_exactly_labeled_points,
        48,
    ),
    ("robust_scale_inverts", robust_scale_inverts, 48),
    (
        "gradient_matches_finite_differences",
        gradient_matches_finite_differences,
        3,
    ),
    (
        "node_permutation_is_equivariant",
        node_permutation_is_equivariant,
        24,
    ),
    (
        "disconnected_nodes_are_independent",
        disconnected_nodes_are_independent,
        24,
    ),
    (
        "flat_round_trip_is_bit_exact",
        flat_round_trip_is_bit_exact,
        24,
    ),
    ("esd_count_bounded", esd_count_bounded, 64),
    ("esd_is_affine_invariant", esd_is_affine_invariant, 64),
    ("zscore_is_affine_invariant", zscore_is_affine_invariant, 64),
    (
        "fedavg_is_permutation_invariant",
        fedavg_is_permutation_invariant,
        64,
    ),
    (
        "fedgraph_stays_in_convex_hull",
        fedgraph_stays_in_convex_hull,
        64,
    ),
    (
        "unit_similarity_fedgraph_equals_fedavg",
        unit_similarity_fedgraph_equals_fedavg,
        64,
    ),
    (
        "similarity_symmetric_unit_diagonal",
        similarity_symmetric_unit_diagonal,
        64,
    ),
    (
        "server_sees_only_weights_and_metrics",
        server_sees_only_weights_and_metrics,
        64,
    ),
    ("prf1_has_set_semantics", prf1_has_set_semantics, 64),
    ("config_round_trip", config_round_trip, 32),
];

fn normal_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn random_graph(k: usize, seed: u64) -> SwGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..k {
        for v in 0..k {
            if u != v && rng.random_bool(0.3) {
                edges.push((u, v));
            }
        }
    }
    let attrs = edges.iter().map(|_| rng.random_range(0.1..2.0)).collect();
    SwGraph::from_indices(signal_names(k), edges, Some(attrs)).unwrap()
}

fn random_weights(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..len).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

// graphcore

pub fn union_preserves_adjacency(cases: u32) -> Outcome {
    check(
        cases,
        &(1usize..7, 1usize..6, any::<u64>()),
        |(k, b, seed)| {
            let g = random_graph(k, seed);
            let batched = disjoint_union_batch(&g, b).unwrap();
            prop_assert_eq!(batched.num_nodes, k * b);
            let pairs: Vec<(usize, usize)> = batched.edge_index[0]
                .iter()
                .copied()
                .zip(batched.edge_index[1].iter().copied())
                .collect();
            for s in 0..b {
                for &(u, v) in g.edges() {
                    let hits = pairs
                        .iter()
                        .filter(|&&p| p == (u + s * k, v + s * k))
                        .count();
                    prop_assert_eq!(hits, 1);
                }
            }
            prop_assert_eq!(pairs.len(), g.num_edges() * b);
            Ok(())
        },
    )
}

pub fn relation_is_symmetric(cases: u32) -> Outcome {
    check(
        cases,
        &(1usize..12, 0.0f64..60.0, any::<u64>()),
        |(n, r, seed)| {
            let cells = synthetic_cells(n, seed);
            for rule in [RelationRule::AreaComplete, RelationRule::Radius(r)] {
                let g = NwGraph::build(cells.clone(), rule).unwrap();
                let m = g.relation();
                for j in 0..n {
                    for k in 0..n {
                        prop_assert_eq!(m[[j, k]], m[[k, j]]);
                    }
                }
            }
            Ok(())
        },
    )
}

pub fn sw_graph_json_round_trip(cases: u32) -> Outcome {
    check(cases, &(1usize..9, any::<u64>()), |(k, seed)| {
        let g = random_graph(k, seed);
        let back = SwGraph::from_json(&g.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, g);
        Ok(())
    })
}

// dataset

fn ramp_panel(cells: usize, k: usize, t: usize) -> TimeSeriesPanel {
    TimeSeriesPanel::new(
        (0..cells).map(|c| format!("c{c}")).collect(),
        signal_names(k),
        (0..t as i64).map(|i| 1_000 + 900 * i).collect(),
        (0..cells)
            .map(|c| Array2::from_shape_fn((k, t), |(s, i)| (c * 100_000 + s * 10_000 + i) as f64))
            .collect(),
    )
    .unwrap()
}

fn panel_setup(
    n: usize,
    k: usize,
    t: usize,
    seed: u64,
) -> (TimeSeriesPanel, SwGraph, Vec<CellMeta>) {
    let g = SwGraph::forward_dag(signal_names(k), 2).unwrap();
    let p = generate_synthetic_panel(n, &g, t, seed, &SynthProfile::default()).unwrap();
    (p.panel, g, synthetic_cells(n, seed))
}

pub fn windows_do_not_leak(cases: u32) -> Outcome {
    check(
        cases,
        &(
            1usize..4,
            1usize..4,
            8usize..40,
            1usize..6,
            1usize..3,
            1usize..4,
            1usize..9,
        ),
        |(cells, k, t, history, horizon, stride, batch)| {
            let panel = ramp_panel(cells, k, t);
            let g = SwGraph::chain(signal_names(k)).unwrap();
            let batches = window_split(&panel, history, horizon, stride, batch, &g).unwrap();
            for b in &batches {
                for (i, r) in b.samples.iter().enumerate() {
                    for s in 0..k {
                        let row = i * k + s;
                        let last_x = b.x[[row, 0, history - 1]] as usize % 10_000;
                        let first_y = b.y[[row, 0, 0]] as usize % 10_000;
                        prop_assert_eq!(last_x + 1, first_y);
                        prop_assert_eq!(last_x, r.start + history - 1);
                        let ts = panel.timestamps();
                        prop_assert!(ts[last_x] < ts[first_y]);
                    }
                }
            }
            Ok(())
        },
    )
}

pub fn annotation_changes_exactly_labeled_points(cases: u32) -> Outcome {
    check(
        cases,
        &(
            any::<u64>(),
            prop_oneof![
                Just(Scenario::Spike),
                Just(Scenario::DropToZero),
                Just(Scenario::LevelShift)
            ],
            0.0f64..0.1,
        ),
        |(seed, scenario, prob)| {
            let (panel, g, cells) = panel_setup(4, 4, 64, seed);
            let cfg = AnnotationConfig {
                anomaly_prob: prob,
                cell_rule: CellRule::All,
                scenario,
                propagate: false,
                ..AnnotationConfig::default()
            };
            let a = annotate(&panel, &cfg, &g, &cells, seed).unwrap();
            for c in 0..panel.num_cells() {
                for ((idx, &before), &after) in
                    panel.cell(c).indexed_iter().zip(a.panel.cell(c).iter())
                {
                    prop_assert_eq!(
                        before != after,
                        a.labels.cell(c)[idx],
                        "cell {} at {:?}",
                        c,
                        idx
                    );
                }
            }
            let again = annotate(&panel, &cfg, &g, &cells, seed).unwrap();
            prop_assert_eq!(again.labels, a.labels);
            prop_assert_eq!(again.panel, a.panel);
            Ok(())
        },
    )
}

pub fn robust_scale_inverts(cases: u32) -> Outcome {
    check(
        cases,
        &(any::<u64>(), 1usize..5, 4usize..80),
        |(seed, n, t)| {
            let (panel, _, _) = panel_setup(n, 3, t, seed);
            let (scaled, params) = robust_scale(&panel).unwrap();
            let back = params.inverse(&scaled).unwrap();
            for (a, b) in panel.cells().iter().zip(back.cells()) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{} vs {}", x, y);
                }
            }
            Ok(())
        },
    )
}

// nn

fn small_cfg(d: usize, depth: usize, history: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: d,
        depth,
        cheb_order: 2,
        history,
        horizon: 1,
        feature_dim: 1,
    }
}

fn random_input(n: usize, history: usize, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn((n, 1, history), |_| rng.random_range(-1.0..1.0))
}

pub fn gradient_matches_finite_differences(cases: u32) -> Outcome {
    check(cases, &any::<u64>(), |seed| {
        let k = 4;
        let cfg = small_cfg(3, 2, 3);
        let model = GConvLstm::new(cfg, seed).unwrap();
        let g = disjoint_union_batch(&random_graph(k, seed), 2).unwrap();
        let x = random_input(2 * k, 3, seed ^ 1);
        let y = random_input(2 * k, 1, seed ^ 2);
        let mode = LossMode::MseReg { lambda: 0.05 };
        let anchor: Vec<f64> = model.flat().iter().map(|v| v * 0.9).collect();
        let lg = model
            .loss_and_grad_raw(&x, &y, &g, mode, Some(&anchor))
            .unwrap();
        let h = 1e-5;
        let mut probe = model.clone();
        for i in 0..model.num_params() {
            let mut w = model.flat().to_vec();
            w[i] += h;
            probe.set_flat(&w).unwrap();
            let up = probe
                .loss_and_grad_raw(&x, &y, &g, mode, Some(&anchor))
                .unwrap()
                .loss;
            w[i] -= 2.0 * h;
            probe.set_flat(&w).unwrap();
            let down = probe
                .loss_and_grad_raw(&x, &y, &g, mode, Some(&anchor))
                .unwrap()
                .loss;
            let num = (up - down) / (2.0 * h);
            let a = lg.grad[i];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
            prop_assert!(rel <= 1e-4, "param {}: analytic {} numeric {}", i, a, num);
        }
        Ok(())
    })
}

pub fn node_permutation_is_equivariant(cases: u32) -> Outcome {
    check(cases, &(2usize..7, any::<u64>()), |(k, seed)| {
        let g = random_graph(k, seed);
        let mut perm: Vec<usize> = (0..k).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // node v of the original graph becomes node perm[v]
        let edges = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut names = vec![String::new(); k];
        for v in 0..k {
            names[perm[v]] = g.node_names()[v].clone();
        }
        let pg = SwGraph::from_indices(names, edges, Some(g.edge_attrs().to_vec())).unwrap();
        let model = GConvLstm::new(small_cfg(4, 2, 3), seed).unwrap();
        let x = random_input(k, 3, seed);
        let mut px = x.clone();
        for v in 0..k {
            px.index_axis_mut(ndarray::Axis(0), perm[v])
                .assign(&x.index_axis(ndarray::Axis(0), v));
        }
        let out = model
            .forward_raw(&x, &disjoint_union_batch(&g, 1).unwrap())
            .unwrap();
        let pout = model
            .forward_raw(&px, &disjoint_union_batch(&pg, 1).unwrap())
            .unwrap();
        for v in 0..k {
            let (a, b) = (out[[v, 0, 0]], pout[[perm[v], 0, 0]]);
            prop_assert!(
                (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                "node {}: {} vs {}",
                v,
                a,
                b
            );
        }
        Ok(())
    })
}

pub fn disconnected_nodes_are_independent(cases: u32) -> Outcome {
    check(
        cases,
        &(2usize..7, 0usize..7, any::<u64>()),
        |(k, node, seed)| {
            let node = node % k;
            let g = random_graph(k, seed).without_edges();
            let batched = disjoint_union_batch(&g, 1).unwrap();
            let model = GConvLstm::new(small_cfg(4, 2, 4), seed).unwrap();
            let x = random_input(k, 4, seed);
            let mut y = random_input(k, 4, seed ^ 99);
            y.index_axis_mut(ndarray::Axis(0), node)
                .assign(&x.index_axis(ndarray::Axis(0), node));
            let a = model.forward_raw(&x, &batched).unwrap();
            let b = model.forward_raw(&y, &batched).unwrap();
            prop_assert_eq!(a[[node, 0, 0]], b[[node, 0, 0]]);
            Ok(())
        },
    )
}

pub fn flat_round_trip_is_bit_exact(cases: u32) -> Outcome {
    check(
        cases,
        &(1usize..6, 1usize..3, any::<u64>()),
        |(d, depth, seed)| {
            let model = GConvLstm::new(small_cfg(d, depth, 2), seed).unwrap();
            let flat = model.flat().to_vec();
            let w =
                ModelWeights::unflatten(model.weights().manifest().to_vec(), flat.clone()).unwrap();
            prop_assert_eq!(w.flatten(), &flat[..]);
            let mut other = GConvLstm::zeros(*model.config()).unwrap();
            other.set_flat(&flat).unwrap();
            prop_assert_eq!(other, model);
            Ok(())
        },
    )
}

// detect

fn flagged_esd(x: &[f64], k_max: usize, robust: bool) -> Vec<bool> {
    esd_test(x, 0.05, k_max, robust).unwrap().flags
}

pub fn esd_count_bounded(cases: u32) -> Outcome {
    check(
        cases,
        &(
            5usize..120,
            0.01f64..0.45,
            any::<u64>(),
            0usize..10,
            any::<bool>(),
        ),
        |(n, frac, seed, spikes, robust)| {
            let mut x = normal_series(n, seed);
            for i in 0..spikes.min(n) {
                x[(i * 7) % n] += 15.0;
            }
            let k_max = ((frac * n as f64) as usize).clamp(1, n - 3);
            let out = esd_test(&x, 0.05, k_max, robust).unwrap();
            prop_assert!(out.n_outliers <= k_max);
            prop_assert!(out.flags.iter().filter(|&&f| f).count() <= k_max);
            Ok(())
        },
    )
}

pub fn esd_is_affine_invariant(cases: u32) -> Outcome {
    check(
        cases,
        &(
            10usize..100,
            any::<u64>(),
            prop_oneof![-8.0f64..-0.25, 0.25f64..8.0],
            -100.0f64..100.0,
            any::<bool>(),
        ),
        |(n, seed, a, b, robust)| {
            let mut x = normal_series(n, seed);
            x[n / 2] += 9.0;
            x[n / 3] -= 6.0;
            let k_max = (n / 10).max(1);
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert_eq!(
                flagged_esd(&x, k_max, robust),
                flagged_esd(&y, k_max, robust)
            );
            Ok(())
        },
    )
}

pub fn zscore_is_affine_invariant(cases: u32) -> Outcome {
    check(
        cases,
        &(
            3usize..100,
            any::<u64>(),
            prop_oneof![-8.0f64..-0.25, 0.25f64..8.0],
            -100.0f64..100.0,
            1.0f64..4.0,
        ),
        |(n, seed, a, b, threshold)| {
            let mut x = normal_series(n, seed);
            x[0] += 7.0;
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert_eq!(zscore_detect(&x, threshold), zscore_detect(&y, threshold));
            Ok(())
        },
    )
}

// fedsim

pub fn fedavg_is_permutation_invariant(cases: u32) -> Outcome {
    check(
        cases,
        &(1usize..8, 1usize..20, any::<u64>()),
        |(n, len, seed)| {
            let w = random_weights(n, len, seed);
            let mut rev = w.clone();
            rev.reverse();
            let a = fedavg_aggregate(&w).unwrap().global;
            let b = fedavg_aggregate(&rev).unwrap().global;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert_eq!(fedavg_aggregate(&w).unwrap().global, a);
            Ok(())
        },
    )
}

pub fn fedgraph_stays_in_convex_hull(cases: u32) -> Outcome {
    check(
        cases,
        &(
            1usize..8,
            1usize..20,
            any::<u64>(),
            any::<bool>(),
            1usize..4,
        ),
        |(n, len, seed, clamp, steps)| {
            let w: Vec<Vec<f64>> = random_weights(n, len, seed)
                .into_iter()
                .map(|v| v.into_iter().map(|x| x + 3.0).collect())
                .collect();
            let agg = fedgraph_aggregate(&w, clamp, steps).unwrap();
            for p in &agg.personalized {
                for i in 0..len {
                    let lo = w.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                    let hi = w.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(p[i] >= lo - 1e-12 && p[i] <= hi + 1e-12);
                }
            }
            Ok(())
        },
    )
}

pub fn unit_similarity_fedgraph_equals_fedavg(cases: u32) -> Outcome {
    check(
        cases,
        &(1usize..8, 1usize..20, any::<u64>()),
        |(n, len, seed)| {
            let base = random_weights(1, len, seed).remove(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
            let w: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let c = [0.5, 1.0, 2.0, 4.0][rng.random_range(0..4)];
                    base.iter().map(|v| v * c).collect()
                })
                .collect();
            let sims = similarity_matrix(&w);
            prop_assert!(sims.iter().all(|&s| (s - 1.0).abs() < 1e-12));
            let avg = fedavg_aggregate(&w).unwrap().global;
            let graph = fedgraph_aggregate(&w, true, 1).unwrap();
            for p in &graph.personalized {
                for (x, y) in p.iter().zip(&avg) {
                    prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{} vs {}", x, y);
                }
            }
            Ok(())
        },
    )
}

pub fn similarity_symmetric_unit_diagonal(cases: u32) -> Outcome {
    check(
        cases,
        &(1usize..8, 1usize..20, any::<u64>()),
        |(n, len, seed)| {
            let s = similarity_matrix(&random_weights(n, len, seed));
            for j in 0..n {
                prop_assert_eq!(s[[j, j]], 1.0);
                for k in 0..n {
                    prop_assert_eq!(s[[j, k]], s[[k, j]]);
                    prop_assert!((-1.0..=1.0).contains(&s[[j, k]]));
                }
            }
            Ok(())
        },
    )
}

pub fn server_sees_only_weights_and_metrics(cases: u32) -> Outcome {
    check(
        cases,
        &(1usize..6, 1usize..10, any::<u64>(), any::<bool>()),
        |(n, len, seed, graph)| {
            // Exhaustive literal: adding any data-carrying field to the update breaks this test.
            let updates: Vec<ClientUpdate> = random_weights(n, len, seed)
                .into_iter()
                .enumerate()
                .map(|(client, weights)| ClientUpdate {
                    client,
                    weights,
                    metrics: LocalMetrics {
                        loss: 0.0,
                        precision: None,
                        recall: None,
                        f1: None,
                    },
                })
                .collect();
            let strategy = if graph {
                Strategy::Fedgraph
            } else {
                Strategy::Fedavg
            };
            let a = aggregate_updates(&updates, strategy, true, 1).unwrap();
            let weights: Vec<Vec<f64>> = updates.iter().map(|u| u.weights.clone()).collect();
            let b = if graph {
                fedgraph_aggregate(&weights, true, 1).unwrap()
            } else {
                fedavg_aggregate(&weights).unwrap()
            };
            prop_assert_eq!(a, b);
            Ok(())
        },
    )
}

// metrics

fn random_labels(cells: usize, k: usize, t: usize, p: f64, seed: u64) -> LabelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LabelSet::new(
        (0..cells).map(|c| format!("c{c}")).collect(),
        signal_names(k),
        (0..t as i64).collect(),
        (0..cells)
            .map(|_| Array2::from_shape_fn((k, t), |_| rng.random_bool(p)))
            .collect(),
    )
    .unwrap()
}

fn permute_labels(l: &LabelSet, cell_perm: &[usize], time_perm: &[usize]) -> LabelSet {
    let flags = cell_perm
        .iter()
        .map(|&c| Array2::from_shape_fn(l.cell(c).dim(), |(s, t)| l.cell(c)[[s, time_perm[t]]]))
        .collect();
    LabelSet::new(
        cell_perm.iter().map(|&c| l.cell_ids()[c].clone()).collect(),
        l.signal_names().to_vec(),
        l.timestamps().to_vec(),
        flags,
    )
    .unwrap()
}

pub fn prf1_has_set_semantics(cases: u32) -> Outcome {
    check(
        cases,
        &(1usize..4, 1usize..4, 1usize..30, 0.0f64..0.5, any::<u64>()),
        |(cells, k, t, p, seed)| {
            let pred = random_labels(cells, k, t, p, seed);
            let truth = random_labels(cells, k, t, p, seed ^ 5);
            let s = prf1(&pred, &truth).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.f1));
            prop_assert_eq!(s.f1 == 0.0, s.tp == 0);
            let cell_perm: Vec<usize> = (0..cells).rev().collect();
            let time_perm: Vec<usize> = (0..t).map(|i| (i * 7 + 3) % t).collect();
            let mut seen = time_perm.clone();
            seen.sort_unstable();
            prop_assume!(seen == (0..t).collect::<Vec<_>>());
            let s2 = prf1(
                &permute_labels(&pred, &cell_perm, &time_perm),
                &permute_labels(&truth, &cell_perm, &time_perm),
            )
            .unwrap();
            prop_assert_eq!(s, s2);
            Ok(())
        },
    )
}

// runner

pub fn config_round_trip(cases: u32) -> Outcome {
    check(
        cases,
        &(
            1usize..100,
            0u8..3,
            1e-5f64..1e-1,
            1usize..64,
            0.5f64..5.0,
            any::<bool>(),
            any::<u64>(),
        ),
        |(n_cells, dataset, lr, d, z, fl, seed)| {
            let mut cfg = ExperimentConfig::default().with_seed(seed);
            cfg.data.n_cells = n_cells;
            cfg.annotation.dataset = dataset;
            cfg.model.train.learning_rate = lr;
            cfg.model.model.embed_dim = d;
            cfg.detect.detector.z_threshold = z;
            if fl {
                cfg.fl = Some(FlSection {
                    seed,
                    ..FlSection::default()
                });
            }
            let text = cfg.to_json().unwrap();
            let back = ExperimentConfig::from_json(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_json().unwrap(), text);
            Ok(())
        },
    )
}
