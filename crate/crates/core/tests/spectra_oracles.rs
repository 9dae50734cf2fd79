use qlsync_core::netgraph::{cartesian_product, sample_resource, DEFAULT_MEMORY_CAP};
use qlsync_core::spectra::{
    convolve_densities, density_histogram, eigenvalues_only, emergent_eigenvalues, full_eigh,
    missing_emergent, resource_spectrum, top_k_eigs, Binning, KrylovOptions,
};
use qlsync_core::ResourceSpec;

#[test]
fn partial_solver_examples() {
    let opts = KrylovOptions::default();

    let spec = ResourceSpec::uniform(16, 1, 8, 4, 11);
    let r = &sample_resource(&spec, 0).unwrap().bits[0].resource;
    let top = top_k_eigs(r, 1, &opts).unwrap();
    assert!((top.eigenvalues()[0] - 12.0).abs() < 1e-9);

    let full = full_eigh(r).unwrap();
    let all = top_k_eigs(r, r.dim(), &opts).unwrap();
    assert!(all.is_complete());
    for (a, b) in all.eigenvalues().iter().zip(full.eigenvalues()) {
        assert!((a - b).abs() < 1e-12);
    }

    let spec = ResourceSpec::uniform(4, 2, 2, 1, 11);
    let prod = sample_resource(&spec, 0).unwrap().ground_resource(DEFAULT_MEMORY_CAP).unwrap();
    let full = full_eigh(&prod).unwrap();
    let part = top_k_eigs(&prod, 4, &opts).unwrap();
    for i in 0..4 {
        assert!((full.eigenvalues()[i] - part.eigenvalues()[i]).abs() < 1e-8);
    }
}

#[test]
fn every_sample_contains_its_emergent_eigenvalues() {
    for (n_g, n_ql, k, l) in [(6, 2, 3, 2), (5, 2, 2, 3), (4, 3, 2, 1), (8, 1, 5, 0)] {
        let spec = ResourceSpec::uniform(n_g, n_ql, k, l, 3);
        for sample in 0..5 {
            let sampled = sample_resource(&spec, sample).unwrap();
            let sp = full_eigh(&sampled.ground_resource(DEFAULT_MEMORY_CAP).unwrap()).unwrap();
            assert!(missing_emergent(&sp, &spec).is_empty(), "{spec:?} sample {sample}");
            let prod = resource_spectrum(&sampled, DEFAULT_MEMORY_CAP).unwrap();
            for (a, b) in prod.eigenvalues().iter().zip(sp.eigenvalues()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
    assert_eq!(emergent_eigenvalues(&ResourceSpec::uniform(8, 1, 5, 0, 0)), vec![5.0, 5.0]);
}

#[test]
fn convolved_single_bit_density_matches_direct_two_bit_density() {
    let spec = ResourceSpec::uniform(12, 2, 8, 2, 17);
    let mut direct = Vec::new();
    let mut single = Vec::new();
    for sample in 0..40 {
        let sampled = sample_resource(&spec, sample).unwrap();
        let prod = cartesian_product(&sampled.factors(), DEFAULT_MEMORY_CAP).unwrap();
        direct.extend(eigenvalues_only(&prod).unwrap());
        for b in &sampled.bits {
            single.extend(eigenvalues_only(&b.resource).unwrap());
        }
    }
    let p = density_histogram(&single, &Binning::Count(2000)).unwrap();
    let conv = convolve_densities(&[p.clone(), p]).unwrap();
    let lo = conv.edges[0].min(direct.iter().cloned().fold(f64::INFINITY, f64::min));
    let hi = conv.edges.last().unwrap().max(direct.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let edges: Vec<f64> = (0..=60).map(|i| lo + (hi - lo) * i as f64 / 60.0).collect();
    let d = density_histogram(&direct, &Binning::Edges(edges.clone())).unwrap();
    let c = conv.rebin(&edges).unwrap();
    let l1 = d.l1_distance(&c).unwrap();
    assert!(l1 <= 0.05, "L1 {l1}");
}

#[test]
fn halving_bin_width_keeps_unit_mass() {
    let spec = ResourceSpec::uniform(12, 1, 4, 2, 1);
    let vals = eigenvalues_only(&sample_resource(&spec, 0).unwrap().bits[0].resource).unwrap();
    for bins in [30, 60, 120] {
        let h = density_histogram(&vals, &Binning::Count(bins)).unwrap();
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.n_samples, 24);
    }
    let one = density_histogram(&[2.5; 10], &Binning::Count(60)).unwrap();
    assert_eq!(one.mass.iter().filter(|&&m| m > 0.0).count(), 1);
}
