use prunelab::nn::{build_lenet_300_100, InitScheme, Network};
use prunelab::pruning::{random_mask, Mask, MaskLayer};
use prunelab::treatments::*;
use proptest::prelude::*;

fn lenet(seed: u64) -> Network {
    Network::initialize(&build_lenet_300_100(), InitScheme::KaimingNormal, seed).unwrap()
}

proptest! {
    #[test]
    fn shuffle_keeps_layer_popcounts(
        layers in prop::collection::vec(prop::collection::vec(0u8..2, 1..200), 1..5),
        seed in any::<u64>(),
    ) {
        let mask = Mask::new(
            layers.into_iter().enumerate()
                .map(|(layer, bits)| MaskLayer { layer, shape: vec![bits.len()], bits })
                .collect(),
        ).unwrap();
        let shuffled = layerwise_shuffle(&mask, seed);
        prop_assert_eq!(shuffled.kept_per_layer(), mask.kept_per_layer());
        prop_assert_eq!(&shuffled, &layerwise_shuffle(&mask, seed));
    }
}

#[test]
fn shuffle_of_all_ones_is_identity() {
    let net = lenet(0);
    let ones = Mask::ones(&net);
    assert_eq!(layerwise_shuffle(&ones, 17), ones);
}

#[test]
fn dispatch_semantics() {
    let net = lenet(1);
    let mask = random_mask(&net, 0.8, 5).unwrap();
    let cfg = TreatmentConfig { seed: 42, sparsity: 0.8 };

    let (n, m) = apply_treatment(Treatment::Unmodified, &net, &mask, &cfg).unwrap();
    assert_eq!((n, m), (net.clone(), mask.clone()));

    let (n, m) = apply_treatment(Treatment::LayerwiseShuffle, &net, &mask, &cfg).unwrap();
    assert_eq!(n, net);
    assert_eq!(m.kept_per_layer(), mask.kept_per_layer());
    assert_ne!(m, mask);

    let (n, m) = apply_treatment(Treatment::Reinit, &net, &mask, &cfg).unwrap();
    assert_eq!(m, mask);
    assert_eq!(n.init.seed, 42);
    assert_eq!(n.init.scheme, net.init.scheme);
    for ml in &mask.layers {
        for ((&w, &orig), &b) in n.params[ml.layer].weight.data().iter().zip(net.params[ml.layer].weight.data()).zip(&ml.bits) {
            if b == 0 {
                assert_eq!(w, 0.0);
            } else {
                assert_ne!(w, orig);
            }
        }
    }

    let (n, m) = apply_treatment(Treatment::RandomPruning, &net, &mask, &cfg).unwrap();
    assert_eq!(n, net);
    assert!((m.density() - 0.2).abs() <= 0.01);
}
