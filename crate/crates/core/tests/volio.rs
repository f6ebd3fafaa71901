use std::fs;

use proptest::prelude::*;

use ddcml::volio::{gen_phantom, load_manifest, read_volume, write_manifest, CaseRecord, CohortConfig, PhantomSpec};

fn plain(dims: [usize; 3]) -> PhantomSpec {
    PhantomSpec { severity: 2, subject_seed: 0, dims, nuisance_gain: 1.0, texture_amplitude: 0.0 }
}

#[test]
fn texture_free_means_match_voxel_count_oracle() {
    let cases = [([32, 32, 32], 41.2451171875), ([16, 16, 16], 44.0234375), ([24, 32, 20], 42.427083333333336)];
    for (dims, want) in cases {
        let got = gen_phantom(&plain(dims)).unwrap().mean();
        assert!((got - want).abs() < 1e-12, "{dims:?}: {got} vs {want}");
    }
}

#[test]
fn cohort_manifest_tallies_per_class() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = CohortConfig { subjects_per_severity: [3, 1, 0, 2, 4], ..CohortConfig::uniform([16, 16, 16], 0, 5) };
    let mut records = Vec::new();
    for (id, spec) in cohort.subjects() {
        let path = dir.path().join(format!("{id}.vol"));
        ddcml::volio::write_volume(&gen_phantom(&spec).unwrap(), &path).unwrap();
        records.push(CaseRecord { subject_id: id, class_label: spec.severity as usize, volume_path: path });
    }
    let manifest = dir.path().join("manifest.csv");
    write_manifest(&manifest, &records).unwrap();
    let back = load_manifest(&manifest, 5).unwrap();
    let mut tally = [0usize; 5];
    for r in &back {
        tally[r.class_label] += 1;
        assert!(read_volume(&r.volume_path).is_ok());
    }
    assert_eq!(tally, [3, 1, 0, 2, 4]);
    assert_eq!(back, records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn phantom_files_round_trip_bit_exact(
        severity in 0u8..5,
        seed in any::<u64>(),
        dx in 16usize..28, dy in 16usize..28, dz in 16usize..28,
        gain in 0.5f64..1.5,
        amp in 0.0f64..40.0,
    ) {
        let spec = PhantomSpec { severity, subject_seed: seed, dims: [dx, dy, dz], nuisance_gain: gain, texture_amplitude: amp };
        let v = gen_phantom(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.vol");
        ddcml::volio::write_volume(&v, &p).unwrap();
        let back = read_volume(&p).unwrap();
        prop_assert_eq!(back.dims(), v.dims());
        prop_assert!(back.voxels().iter().zip(v.voxels()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(fs::metadata(&p).unwrap().len() as usize, ddcml::volio::VOL1_HEADER_LEN + 4 * dx * dy * dz);
    }
}
