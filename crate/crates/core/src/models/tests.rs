use super::*;
use crate::tensor::{grad_check, GradCheckOptions};

fn random_features(rng: &mut Rng, n: usize) -> Vec<[f64; FEATURES]> {
    (0..n)
        .map(|_| {
            let mut f = [0.0; FEATURES];
            for v in &mut f {
                *v = rng.uniform(-2.0, 2.0);
            }
            f
        })
        .collect()
}

fn score_of(bundle: &ModelBundle, features: &[[f64; FEATURES]]) -> Vec<f64> {
    bundle.scores(features).unwrap()
}

#[test]
fn parameter_counts_are_pinned() {
    let mut rng = Rng::new(1);
    let counts: Vec<(ModelKind, usize)> = ModelKind::ALL
        .iter()
        .map(|&k| {
            let b = ModelBundle::new(k, &mut rng).unwrap();
            (k, b.params.scalar_count())
        })
        .collect();
    assert_eq!(
        counts,
        vec![
            (ModelKind::Base, 542_209),
            (ModelKind::Lmwr, 34_564),
            (ModelKind::Rmwr, 602_627),
            (ModelKind::Gmwr, 607_747),
            (ModelKind::Jmwr, 1_244_948),
        ]
    );
}

#[test]
fn block_with_zero_weights_and_zero_input_is_zero() {
    // fc weights zero, biases zero, layer-norm beta zero: every path is 0.
    let mut bundle = ModelBundle::new_zeroed(ModelKind::Base).unwrap();
    // keep layer-norm gamma at 1 as in real init
    for i in 0..bundle.params.len() {
        if bundle.params.name(i).ends_with("gamma") {
            let t = bundle.params.value_mut(i);
            let (r, c) = t.shape();
            *t = Tensor::full(r, c, 1.0);
        }
    }
    let feats = [[0.0; FEATURES]];
    let scores = score_of(&bundle, &feats);
    // sigmoid(0) through a zero head on a zero embedding
    assert_eq!(scores[0], 0.5);
    let (_, emb) = bundle.scores_and_embeddings(&feats).unwrap();
    assert!(emb[0].iter().all(|&v| v == 0.0));
}

#[test]
fn block_output_minus_input_equals_inner_branch() {
    let mut rng = Rng::new(7);
    let bundle = ModelBundle::new(ModelKind::Base, &mut rng).unwrap();
    let Wires::Base(w) = &bundle.wires else { unreachable!() };

    let mut tape = Tape::new();
    let vars = bundle.bind(&mut tape);
    let x = tape.leaf(Tensor::glorot_uniform(3, WIDE, &mut rng).unwrap());
    let y = blocks::block_forward(&mut tape, &vars, &w.blocks[0], x).unwrap();
    let branch = tape.sub(y, x).unwrap();

    // Recompute the inner branch directly.
    let h = blocks::dense_forward(&mut tape, &vars, w.blocks[0].fc1, x).unwrap();
    let h = tape
        .layer_norm(h, vars[w.blocks[0].ln1.gamma], vars[w.blocks[0].ln1.beta], LN_EPS)
        .unwrap();
    let h = tape.relu(h);
    let h = blocks::dense_forward(&mut tape, &vars, w.blocks[0].fc2, h).unwrap();
    let h = tape
        .layer_norm(h, vars[w.blocks[0].ln2.gamma], vars[w.blocks[0].ln2.beta], LN_EPS)
        .unwrap();
    let h = tape.relu(h);

    for (a, b) in tape.value(branch).data().iter().zip(tape.value(h).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn block_gradient_matches_finite_differences() {
    let mut rng = Rng::new(19);
    let bundle = ModelBundle::new(ModelKind::Lmwr, &mut rng).unwrap();
    let stacked = Tensor::glorot_uniform(6, 2, &mut rng).unwrap();

    let params = bundle.params.tensors();
    let eval = |p: &[Tensor], want: bool| {
        let mut work = ModelBundle::new_zeroed(ModelKind::Lmwr)?;
        work.params.set_tensors(p)?;
        let mut tape = Tape::new();
        let vars = work.bind(&mut tape);
        let Wires::Local(w) = &work.wires else { unreachable!() };
        let x = tape.leaf(stacked.clone());
        let h = blocks::extractor_forward(&mut tape, &vars, &w.extractor, x)?;
        let loss = tape.sum_all(h)?;
        let value = tape.value(loss).item()?;
        if want {
            tape.backward(loss)?;
            Ok((value, Some(vars.iter().map(|v| tape.grad(*v).clone()).collect())))
        } else {
            Ok((value, None))
        }
    };
    let opts = GradCheckOptions {
        eps: 1e-6,
        max_coords_per_tensor: Some(4),
        grad_floor: 1e-3,
    };
    let report = grad_check(&params, eval, &opts).unwrap();
    assert!(report.max_rel_err < 1e-5, "rel err {}", report.max_rel_err);
}

#[test]
fn base_scores_are_probabilities_and_deterministic() {
    let mut rng = Rng::new(3);
    let bundle = ModelBundle::new(ModelKind::Base, &mut rng).unwrap();
    let feats = random_features(&mut rng, 8);
    let s1 = score_of(&bundle, &feats);
    let s2 = score_of(&bundle, &feats);
    assert_eq!(s1, s2);
    assert!(s1.iter().all(|&p| p > 0.0 && p < 1.0 && p.is_finite()));
}

#[test]
fn base_rejects_wrong_input_width() {
    let mut rng = Rng::new(3);
    let bundle = ModelBundle::new(ModelKind::Base, &mut rng).unwrap();
    let mut tape = Tape::new();
    let vars = bundle.bind(&mut tape);
    let bad = BatchInputs::Base(Tensor::zeros(2, 20));
    assert!(bundle.forward(&mut tape, &vars, &bad).is_err());
}

#[test]
fn lmwr_identical_inputs_give_zero_comparison_and_zero_score() {
    let mut rng = Rng::new(11);
    let bundle = ModelBundle::new(ModelKind::Lmwr, &mut rng).unwrap();
    // constant exam: every point identical
    let feats = [[0.7; FEATURES]];
    let (scores, emb) = bundle.scores_and_embeddings(&feats).unwrap();
    assert!(emb[0].iter().all(|&v| v == 0.0));
    assert_eq!(scores[0], 0.0); // tanh(w * 0 + 0)
}

#[test]
fn lmwr_pair_enumeration_is_lexicographic() {
    let (first, second) = local_pair_selectors();
    assert_eq!(first.shape(), (LOCAL_INPUTS, LOCAL_PAIRS));
    assert_eq!(LOCAL_PAIRS, 153);
    // pair 0 is (0, 1); pair 1 is (0, 2); last pair is (16, 17)
    assert_eq!(first.get(0, 0), 1.0);
    assert_eq!(second.get(1, 0), 1.0);
    assert_eq!(first.get(0, 1), 1.0);
    assert_eq!(second.get(2, 1), 1.0);
    assert_eq!(first.get(16, LOCAL_PAIRS - 1), 1.0);
    assert_eq!(second.get(17, LOCAL_PAIRS - 1), 1.0);
    // every column selects exactly one input on each side
    for k in 0..LOCAL_PAIRS {
        let a: f64 = (0..LOCAL_INPUTS).map(|i| first.get(i, k)).sum();
        let b: f64 = (0..LOCAL_INPUTS).map(|i| second.get(i, k)).sum();
        assert_eq!((a, b), (1.0, 1.0));
    }
}

#[test]
fn lmwr_score_is_permutation_invariant() {
    let mut rng = Rng::new(13);
    let bundle = ModelBundle::new(ModelKind::Lmwr, &mut rng).unwrap();
    for _ in 0..25 {
        let feats = random_features(&mut rng, 1);
        let baseline = score_of(&bundle, &feats)[0];

        // Permute the 18 (skin, internal) inputs directly at the stacked level.
        let pairs = crate::data::layout_local(&feats[0]);
        let mut perm: Vec<usize> = (0..LOCAL_INPUTS).collect();
        rng.shuffle(&mut perm);
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| pairs[i].to_vec()).collect();
        let stacked = Tensor::from_rows(&rows).unwrap();

        let mut tape = Tape::new();
        let vars = bundle.bind(&mut tape);
        let out = bundle
            .forward(&mut tape, &vars, &BatchInputs::Local { stacked, batch: 1 })
            .unwrap();
        let permuted = tape.value(out.score).data()[0];
        assert!(
            (baseline - permuted).abs() < 1e-9,
            "permutation moved the score by {}",
            (baseline - permuted).abs()
        );
    }
}

#[test]
fn rmwr_equal_sides_give_zero_score_at_init() {
    let mut rng = Rng::new(17);
    let bundle = ModelBundle::new(ModelKind::Rmwr, &mut rng).unwrap();
    let feats = [[0.3; FEATURES]];
    let (scores, emb) = bundle.scores_and_embeddings(&feats).unwrap();
    assert!(emb[0].iter().all(|&v| v == 0.0));
    assert_eq!(scores[0], 0.0);
}

#[test]
fn rmwr_is_argument_swap_invariant() {
    let mut rng = Rng::new(23);
    let bundle = ModelBundle::new(ModelKind::Rmwr, &mut rng).unwrap();
    for _ in 0..25 {
        let feats = random_features(&mut rng, 1);
        let (left, right) = regional_pair(&feats).unwrap();
        let run = |a: &Tensor, b: &Tensor| {
            let mut tape = Tape::new();
            let vars = bundle.bind(&mut tape);
            let out = bundle
                .forward(
                    &mut tape,
                    &vars,
                    &BatchInputs::Pair { first: a.clone(), second: b.clone() },
                )
                .unwrap();
            tape.value(out.score).data()[0]
        };
        let forward = run(&left, &right);
        let swapped = run(&right, &left);
        assert!((forward - swapped).abs() < 1e-9);
    }
}

#[test]
fn gmwr_breast_swap_invariance() {
    let mut rng = Rng::new(29);
    let bundle = ModelBundle::new(ModelKind::Gmwr, &mut rng).unwrap();
    for _ in 0..25 {
        let feats = random_features(&mut rng, 1);
        let swapped_feats = [crate::data::swap_features(&feats[0])];
        let a = score_of(&bundle, &feats)[0];
        let b = score_of(&bundle, &swapped_feats)[0];
        assert!((a - b).abs() < 1e-9, "breast swap moved the score by {}", (a - b).abs());
    }
}

#[test]
fn gmwr_symmetric_exam_scores_zero_at_init() {
    let mut rng = Rng::new(31);
    let bundle = ModelBundle::new(ModelKind::Gmwr, &mut rng).unwrap();
    // left == right and t1 == t2: the swap is the identity
    let mut f = [0.0; FEATURES];
    for p in 0..10 {
        let s = 0.1 * p as f64;
        f[p] = s;
        f[20 + p] = s;
        f[10 + p] = s + 1.0;
        f[30 + p] = s + 1.0;
    }
    f[40] = 0.5;
    f[42] = 0.5;
    f[41] = 0.6;
    f[43] = 0.6;
    assert_eq!(crate::data::swap_features(&f), f);
    let score = score_of(&bundle, &[f])[0];
    assert_eq!(score, 0.0);
}

#[test]
fn gmwr_checked_pair_rejects_inconsistent_swap() {
    let mut rng = Rng::new(37);
    let feats = random_features(&mut rng, 2);
    let (orig, mut swap) = global_pair(&feats).unwrap();
    assert!(global_pair_checked(&orig, &swap).is_ok());
    swap.set(0, 0, swap.get(0, 0) + 0.25);
    assert!(global_pair_checked(&orig, &swap).is_err());
}

#[test]
fn repeated_forward_is_identical() {
    let mut rng = Rng::new(41);
    let bundle = ModelBundle::new(ModelKind::Gmwr, &mut rng).unwrap();
    let feats = random_features(&mut rng, 3);
    let a = score_of(&bundle, &feats);
    let b = score_of(&bundle, &feats);
    let c = score_of(&bundle, &feats);
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn shared_extractor_maps_equal_inputs_to_equal_embeddings() {
    let mut rng = Rng::new(43);
    let bundle = ModelBundle::new(ModelKind::Rmwr, &mut rng).unwrap();
    let Wires::Pairwise(w) = &bundle.wires else { unreachable!() };
    let mut tape = Tape::new();
    let vars = bundle.bind(&mut tape);
    let x = Tensor::glorot_uniform(2, 24, &mut rng).unwrap();
    let a = tape.leaf(x.clone());
    let b = tape.leaf(x);
    let ea = blocks::extractor_forward(&mut tape, &vars, &w.extractor, a).unwrap();
    let eb = blocks::extractor_forward(&mut tape, &vars, &w.extractor, b).unwrap();
    assert_eq!(tape.value(ea), tape.value(eb));
}

#[test]
fn joint_zero_sub_scores_give_zero_score() {
    let mut rng = Rng::new(47);
    let bundle = ModelBundle::new(ModelKind::Jmwr, &mut rng).unwrap();
    // A fully constant exam zeroes all three sub-model comparisons.
    let feats = [[0.25; FEATURES]];
    assert_eq!(score_of(&bundle, &feats)[0], 0.0);
}

#[test]
fn joint_weighting_layers_are_scalar() {
    let mut rng = Rng::new(53);
    let bundle = ModelBundle::new(ModelKind::Jmwr, &mut rng).unwrap();
    for name in ["combine.l.w", "combine.r.w", "combine.g.w"] {
        let idx = (0..bundle.params.len())
            .find(|&i| bundle.params.name(i) == name)
            .unwrap();
        assert_eq!(bundle.params.value(idx).shape(), (1, 1));
    }
    let head = (0..bundle.params.len())
        .find(|&i| bundle.params.name(i) == "head.w")
        .unwrap();
    assert_eq!(bundle.params.value(head).shape(), (3, 1));
}

#[test]
fn joint_gradients_reach_all_three_sub_models() {
    let mut rng = Rng::new(59);
    let bundle = ModelBundle::new(ModelKind::Jmwr, &mut rng).unwrap();
    let feats = random_features(&mut rng, 4);
    let mut tape = Tape::new();
    let vars = bundle.bind(&mut tape);
    let inputs = build_inputs(ModelKind::Jmwr, &feats).unwrap();
    let out = bundle.forward(&mut tape, &vars, &inputs).unwrap();
    let loss = tape.sum_all(out.score).unwrap();
    tape.backward(loss).unwrap();

    for prefix in ["lmwr.", "rmwr.", "gmwr."] {
        let mut grad_norm = 0.0;
        for (i, var) in vars.iter().enumerate() {
            if bundle.params.name(i).starts_with(prefix) {
                grad_norm += tape.grad(*var).data().iter().map(|g| g * g).sum::<f64>();
            }
        }
        assert!(grad_norm > 0.0, "no gradient reached {prefix}");
    }
}

#[test]
fn joint_construction_from_pretrained_subs_copies_parameters() {
    let mut rng = Rng::new(61);
    let l = ModelBundle::new(ModelKind::Lmwr, &mut rng).unwrap();
    let r = ModelBundle::new(ModelKind::Rmwr, &mut rng).unwrap();
    let g = ModelBundle::new(ModelKind::Gmwr, &mut rng).unwrap();
    let joint = ModelBundle::new_joint(&l, &r, &g, &mut rng).unwrap();
    assert_eq!(joint.params.name(0), "lmwr.ext.stem.w");
    assert_eq!(joint.params.value(0), l.params.value(0));
    let boundary = joint.fine_tune_boundary().unwrap();
    assert_eq!(boundary, l.params.len() + r.params.len() + g.params.len());
    // Sub-model order mismatch is a configuration error.
    assert!(ModelBundle::new_joint(&r, &l, &g, &mut rng).is_err());
}

#[test]
fn scores_stay_in_their_documented_ranges() {
    let mut rng = Rng::new(71);
    let feats = random_features(&mut rng, 16);
    for kind in ModelKind::ALL {
        let bundle = ModelBundle::new(kind, &mut rng).unwrap();
        let scores = score_of(&bundle, &feats);
        for s in scores {
            if kind == ModelKind::Base {
                assert!(s > 0.0 && s < 1.0, "{kind}: {s}");
            } else {
                assert!(s > -1.0 && s < 1.0, "{kind}: {s}");
            }
        }
    }
}

#[test]
fn combiner_head_weights_start_positive() {
    let mut rng = Rng::new(67);
    for kind in [ModelKind::Lmwr, ModelKind::Rmwr, ModelKind::Gmwr, ModelKind::Jmwr] {
        let bundle = ModelBundle::new(kind, &mut rng).unwrap();
        for i in 0..bundle.params.len() {
            let name = bundle.params.name(i);
            // Scalar tanh heads and the single-unit relu feature layer sit
            // on non-negative-mean inputs; a negative polarity at init is
            // a dead start the clamp can never recover from.
            let single_unit_feat = name.ends_with("feat.w") && bundle.params.value(i).cols() == 1;
            if name.ends_with("head.w") || name.contains("combine.") || single_unit_feat {
                if !name.ends_with(".w") {
                    continue;
                }
                assert!(
                    bundle.params.value(i).data().iter().all(|&w| w > 0.0),
                    "{kind}: {name} has non-positive entries"
                );
            }
        }
    }
}

#[test]
fn joint_combiner_starts_as_an_averaging_mechanism() {
    let mut rng = Rng::new(73);
    let bundle = ModelBundle::new(ModelKind::Jmwr, &mut rng).unwrap();
    let value_of = |name: &str| {
        let i = (0..bundle.params.len())
            .find(|&i| bundle.params.name(i) == name)
            .unwrap();
        bundle.params.value(i).data().to_vec()
    };
    for tier in ["l", "r", "g"] {
        assert_eq!(value_of(&format!("combine.{tier}.w")), vec![1.0]);
        assert_eq!(value_of(&format!("combine.{tier}.b")), vec![0.0]);
    }
    assert_eq!(value_of("head.w"), vec![1.0 / 3.0; 3]);
    assert_eq!(value_of("head.b"), vec![0.0]);
}
