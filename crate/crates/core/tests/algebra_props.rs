mod support;

use pathprof::algebra::codec::{decode_path, decode_profile, encode_path, encode_profile};
use pathprof::algebra::{
    aggregate_class_profiles, density, image_class_similarity_per_layer, jaccard_classwise, jaccard_per_layer,
    similarity_matrix, union, ClassProfile,
};
use pathprof::data::{LabeledDataset, Split};
use pathprof::nn::{forward_trace, Network};
use pathprof::path::{extract_effective_path, EffectivePath, ExtractionConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{random_input, random_small_net};

fn paths(seed: u64, n: usize, theta: f64) -> (Network, Vec<EffectivePath>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_small_net(&mut rng);
    let ps = (0..n)
        .map(|_| {
            let x = random_input(&net, &mut rng);
            extract_effective_path(&net, &forward_trace(&net, &x).unwrap(), &ExtractionConfig::new(theta)).unwrap()
        })
        .collect();
    (net, ps)
}

fn profile(p: &EffectivePath) -> ClassProfile {
    let mut c = ClassProfile::from_path(p);
    c.class = None;
    c
}

/// Dataset whose labels are the network's own predictions, so every image
/// enters a profile.
fn self_labelled(net: &Network, rng: &mut ChaCha8Rng, n: usize) -> LabeledDataset {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let x = random_input(net, rng);
        labels.push(forward_trace(net, &x).unwrap().predicted());
        pixels.extend(x);
    }
    LabeledDataset::new(net.input_shape(), pixels, labels, net.num_classes(), Split::Train).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn union_laws(seed in any::<u64>(), theta in 0.2f64..=1.0) {
        let (net, ps) = paths(seed, 3, theta);
        let (a, b, c) = (profile(&ps[0]), profile(&ps[1]), profile(&ps[2]));
        prop_assert_eq!(union(&a, &b).unwrap(), union(&b, &a).unwrap());
        prop_assert_eq!(
            union(&union(&a, &b).unwrap(), &c).unwrap(),
            union(&a, &union(&b, &c).unwrap()).unwrap()
        );
        prop_assert_eq!(&union(&a, &a).unwrap().layers, &a.layers);
        let e = ClassProfile::empty(&net, theta, &a.layer_indices(), None);
        prop_assert_eq!(&union(&a, &e).unwrap().layers, &a.layers);
        let u = union(&a, &b).unwrap();
        let (da, db, du) = (density(&a, &net).unwrap(), density(&b, &net).unwrap(), density(&u, &net).unwrap());
        prop_assert!(du.synapse_density >= da.synapse_density.max(db.synapse_density));
        prop_assert!(du.weight_density >= da.weight_density.max(db.weight_density));
        for ((x, y), z) in da.layers.iter().zip(&db.layers).zip(&du.layers) {
            prop_assert!(z.synapses >= x.synapses.max(y.synapses));
        }
    }

    #[test]
    fn jaccard_is_bounded_and_symmetric(seed in any::<u64>()) {
        let (_, ps) = paths(seed, 2, 0.5);
        let (a, b) = (profile(&ps[0]), profile(&ps[1]));
        match (jaccard_classwise(&a, &b), jaccard_classwise(&b, &a)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x, y);
                prop_assert!((0.0..=1.0).contains(&x));
            }
            (Err(_), Err(_)) => prop_assert!(a.synapse_count() == 0 && b.synapse_count() == 0),
            _ => prop_assert!(false, "asymmetric failure"),
        }
        for v in jaccard_per_layer(&a, &b).unwrap().into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn codec_round_trips_random_paths(seed in any::<u64>(), theta in 0.1f64..=1.0) {
        let (_, ps) = paths(seed, 2, theta);
        for p in &ps {
            prop_assert_eq!(&decode_path(&encode_path(p)).unwrap(), p);
        }
        let u = union(&profile(&ps[0]), &profile(&ps[1])).unwrap();
        prop_assert_eq!(decode_profile(&encode_profile(&u)).unwrap(), u);
    }
}

#[test]
fn constituents_are_fully_contained_in_their_profile() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_small_net(&mut rng);
        let data = self_labelled(&net, &mut rng, 40);
        let cfg = ExtractionConfig::new(0.5);
        let set = aggregate_class_profiles(&net, &data, &cfg).unwrap();
        assert_eq!(set.misclassified, 0);
        for (x, y) in data.iter() {
            let p = extract_effective_path(&net, &forward_trace(&net, x).unwrap(), &cfg).unwrap();
            for s in image_class_similarity_per_layer(&p, set.class(y)).unwrap() {
                assert_eq!(s.value, 1.0);
            }
        }
    }
}

#[test]
fn aggregation_ignores_image_order_and_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let net = random_small_net(&mut rng);
    let data = self_labelled(&net, &mut rng, 200);
    let cfg = ExtractionConfig::new(0.6);
    let base = aggregate_class_profiles(&net, &data, &cfg).unwrap();

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let pixels: Vec<f32> = order.iter().flat_map(|&i| data.image(i).to_vec()).collect();
    let labels: Vec<usize> = order.iter().map(|&i| data.label(i)).collect();
    let shuffled = LabeledDataset::new(data.shape(), pixels, labels, data.num_classes(), Split::Train).unwrap();
    assert_eq!(aggregate_class_profiles(&net, &shuffled, &cfg).unwrap(), base);

    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    assert_eq!(single.install(|| aggregate_class_profiles(&net, &data, &cfg)).unwrap(), base);
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    assert_eq!(many.install(|| aggregate_class_profiles(&net, &data, &cfg)).unwrap(), base);

    let mut overall = base.classes[0].clone();
    for c in &base.classes[1..] {
        overall.merge(c).unwrap();
    }
    assert_eq!(overall.layers, base.overall.layers);
    let m = similarity_matrix(&base.classes).unwrap_or_default();
    for (i, row) in m.iter().enumerate() {
        assert_eq!(row[i], 1.0);
        for (j, v) in row.iter().enumerate() {
            assert_eq!(*v, m[j][i]);
        }
    }
}
