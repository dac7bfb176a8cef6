//! Alignment scoring against the brute-force oracle, plus closed-form
//! cross-entropy and tie-breaking checks.

use stdd::alignment::{ce_loss, zero_shot_predict};
use stdd::bench::alignment_oracle_gap;
use stdd::tensor::{Array, Real, Tape};

#[test]
fn hundred_random_instances_match_the_oracle() {
    let gap = alignment_oracle_gap(5, 100).unwrap();
    assert!(gap < 1e-12, "max deviation {gap:.3e}");
}

#[test]
fn uniform_scores_give_ln_k_cross_entropy() {
    for k in 1..=6usize {
        let tape = Tape::new();
        let scores = tape.constant(&Array::zeros(vec![3, k]));
        let labels = [0usize, k / 2, k - 1];
        let ce = ce_loss(&scores, &labels).unwrap().scalar().unwrap();
        assert!(
            (ce - (k as Real).ln()).abs() < 1e-12,
            "K={k}: ce {ce} vs ln K {}",
            (k as Real).ln()
        );
    }
}

#[test]
fn prediction_ties_break_to_the_lowest_index() {
    let (idx, mean) = zero_shot_predict(&[vec![0.5, 0.5, 0.2], vec![0.5, 0.5, 0.2]]).unwrap();
    assert_eq!(idx, 0);
    assert_eq!(mean.len(), 3);
}
