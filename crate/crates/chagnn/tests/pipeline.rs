//! Cross-module integration: attacks feeding the defense, degenerate-knob
//! equivalences, and safety on clean data.

mod common;

use chagnn::attack::{
    fga_inject, heuristic_inject, mga_inject, verify_injection_constraints, AttackBudget,
};
use chagnn::defense::{baseline_adaedge, chagnn_run, DefenseConfig};
use chagnn::graph::NormalizedAdjacency;
use chagnn::models::{accuracy, fine_tune, gcn_forward, train, GcnParams, TrainConfig};
use chagnn::dataset::Dataset;
use common::small_synthetic;

fn quick_train_cfg() -> TrainConfig {
    TrainConfig { max_epochs: 120, patience: 25, ..TrainConfig::default() }
}

fn test_acc(ds: &Dataset, params: &GcnParams) -> f64 {
    let adj = NormalizedAdjacency::symmetric(&ds.graph);
    let soft = gcn_forward(&adj, &ds.features, params).unwrap();
    accuracy(&soft.pseudo_labels(), &ds.labels, &ds.test_mask).unwrap()
}

fn small_budget() -> AttackBudget {
    AttackBudget { num_inject: 30, inject_degree: 8, ..AttackBudget::default() }
}

#[test]
fn zero_round_gradient_attack_equals_heuristic() {
    let ds = small_synthetic(21);
    let (surrogate, _) = train(&ds, &quick_train_cfg(), 21).unwrap();
    let budget = AttackBudget { opt_iters: 0, ..small_budget() };
    let heur = heuristic_inject(&ds, &budget, 5).unwrap();
    let fga = fga_inject(&ds, &budget, &surrogate, 5).unwrap();
    assert_eq!(heur.merged.graph, fga.merged.graph);
    assert_eq!(heur.injected_ids, fga.injected_ids);
    assert!(heur
        .merged
        .features
        .iter()
        .zip(fga.merged.features.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn zero_momentum_equals_plain_gradient_attack() {
    let ds = small_synthetic(22);
    let (surrogate, _) = train(&ds, &quick_train_cfg(), 22).unwrap();
    let budget = AttackBudget { momentum: 0.0, opt_iters: 10, ..small_budget() };
    let fga = fga_inject(&ds, &budget, &surrogate, 9).unwrap();
    let mga = mga_inject(&ds, &budget, &surrogate, 9).unwrap();
    assert_eq!(fga.merged.graph, mga.merged.graph);
    assert!(fga
        .merged
        .features
        .iter()
        .zip(mga.merged.features.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn all_attacks_satisfy_injection_constraints() {
    let ds = small_synthetic(23);
    let (surrogate, _) = train(&ds, &quick_train_cfg(), 23).unwrap();
    let budget = AttackBudget { opt_iters: 12, ..small_budget() };
    for (name, poisoned) in [
        ("heuristic", heuristic_inject(&ds, &budget, 3).unwrap()),
        ("fga", fga_inject(&ds, &budget, &surrogate, 3).unwrap()),
        ("mga", mga_inject(&ds, &budget, &surrogate, 3).unwrap()),
    ] {
        assert!(
            verify_injection_constraints(&poisoned).is_ok(),
            "{name} violated injection constraints"
        );
        assert_eq!(poisoned.merged.num_nodes(), ds.num_nodes() + 30);
    }
}

#[test]
fn gradient_attacks_are_deterministic() {
    let ds = small_synthetic(24);
    let (surrogate, _) = train(&ds, &quick_train_cfg(), 24).unwrap();
    let budget = AttackBudget { opt_iters: 8, ..small_budget() };
    let a = mga_inject(&ds, &budget, &surrogate, 4).unwrap();
    let b = mga_inject(&ds, &budget, &surrogate, 4).unwrap();
    assert_eq!(a.merged.graph, b.merged.graph);
    assert!(a
        .merged
        .features
        .iter()
        .zip(b.merged.features.iter())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn zero_elimination_defense_is_pretrain_plus_fine_tune() {
    // q = 0 removes nothing, so one defense iteration must equal plain
    // training followed by one fine-tune, bit for bit.
    let ds = small_synthetic(25);
    let tcfg = quick_train_cfg();
    let dcfg = DefenseConfig { elimination_rate: 0.0, max_iter: 1 };
    let (params, cleaned, history) = chagnn_run(&ds, &[], &dcfg, &tcfg, 31).unwrap();
    assert_eq!(history.len(), 1);
    assert_eq!(history[0].removed, 0);
    assert_eq!(cleaned.graph, ds.graph);

    let (pre, _) = train(&ds, &tcfg, 31).unwrap();
    let tuned = fine_tune(&pre, &ds, &tcfg).unwrap();
    assert!(params.w1.iter().zip(tuned.w1.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(params.w2.iter().zip(tuned.w2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn defense_is_safe_on_clean_data() {
    // Running the defense on unattacked data must not meaningfully hurt:
    // pruning a few heterophilous edges on a homophilous graph should be
    // close to harmless.
    let ds = small_synthetic(26);
    let tcfg = quick_train_cfg();
    let (pre, _) = train(&ds, &tcfg, 40).unwrap();
    let base_acc = test_acc(&ds, &pre);

    let dcfg = DefenseConfig { elimination_rate: 0.1, max_iter: 2 };
    let (params, cleaned, _) = chagnn_run(&ds, &[], &dcfg, &tcfg, 40).unwrap();
    let adj = NormalizedAdjacency::symmetric(&cleaned.graph);
    let soft = gcn_forward(&adj, &cleaned.features, &params).unwrap();
    let defended = accuracy(&soft.pseudo_labels(), &cleaned.labels, &cleaned.test_mask).unwrap();
    assert!(
        defended >= base_acc - 0.01,
        "clean-data defense dropped accuracy from {base_acc} to {defended}"
    );
}

#[test]
fn adaedge_prunes_more_than_one_sampled_iteration() {
    // AdaEdge removes every flagged edge; one 10% sampled iteration must
    // leave strictly more edges behind whenever anything was flagged.
    let ds = small_synthetic(27);
    let tcfg = quick_train_cfg();
    let (surrogate, _) = train(&ds, &tcfg, 27).unwrap();
    let poisoned = fga_inject(&ds, &small_budget(), &surrogate, 7).unwrap();
    let merged = &poisoned.merged;

    let (victim, _) = train(merged, &tcfg, 28).unwrap();
    let adj = NormalizedAdjacency::symmetric(&merged.graph);
    let pseudo = gcn_forward(&adj, &merged.features, &victim).unwrap().pseudo_labels();
    let ada = baseline_adaedge(merged, &poisoned.injected_ids, &pseudo).unwrap();

    let dcfg = DefenseConfig { elimination_rate: 0.1, max_iter: 1 };
    let (_, cleaned, history) =
        chagnn_run(merged, &poisoned.injected_ids, &dcfg, &tcfg, 28).unwrap();
    assert!(history[0].he_size > 0, "attack produced no flagged edges");
    assert!(
        ada.graph.num_edges() < cleaned.graph.num_edges(),
        "adaedge kept {} edges, sampled defense kept {}",
        ada.graph.num_edges(),
        cleaned.graph.num_edges()
    );
    assert!(cleaned.graph.num_edges() < merged.graph.num_edges());
}

/// The attack budget for the full-size (1200-node) regression runs: 10%
/// injection at degree 10, with the widened feature bounds the noise-free
/// prototype features require for a meaningful drop (see tests/acceptance.rs).
fn regression_budget() -> AttackBudget {
    AttackBudget {
        num_inject: 120,
        inject_degree: 10,
        feature_min: Some(0.0),
        feature_max: Some(6.0),
        ..AttackBudget::default()
    }
}

#[test]
fn gradient_attack_drops_surrogate_accuracy_at_regression_scale() {
    let ds = common::regression_dataset(0);
    let tcfg = TrainConfig::default();
    let (surrogate, _) = train(&ds, &tcfg, 0).unwrap();
    let clean = test_acc(&ds, &surrogate);
    let poisoned = fga_inject(&ds, &regression_budget(), &surrogate, 0).unwrap();
    let attacked = test_acc(&poisoned.merged, &surrogate);
    assert!(
        clean - attacked >= 0.08,
        "surrogate accuracy should fall by at least 8 points: clean {clean:.3}, attacked {attacked:.3}"
    );
}

#[test]
fn momentum_attack_keeps_pace_with_plain_gradient_attack() {
    // Recorded comparison on one regression-scale seed: the momentum variant
    // stays within 2 points of the plain gradient attack's drop.
    let ds = common::regression_dataset(0);
    let tcfg = TrainConfig::default();
    let (surrogate, _) = train(&ds, &tcfg, 0).unwrap();
    let clean = test_acc(&ds, &surrogate);

    let fga = fga_inject(&ds, &regression_budget(), &surrogate, 0).unwrap();
    let (fga_victim, _) = train(&fga.merged, &tcfg, 0).unwrap();
    let fga_drop = clean - test_acc(&fga.merged, &fga_victim);

    let mga = mga_inject(&ds, &regression_budget(), &surrogate, 0).unwrap();
    let (mga_victim, _) = train(&mga.merged, &tcfg, 0).unwrap();
    let mga_drop = clean - test_acc(&mga.merged, &mga_victim);

    assert!(
        mga_drop >= fga_drop - 0.02,
        "momentum drop {mga_drop:.3} fell more than 2 points behind plain drop {fga_drop:.3}"
    );
}
