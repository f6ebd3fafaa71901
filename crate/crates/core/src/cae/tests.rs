use super::*;
use crate::volio::{gen_phantom, PhantomSpec};

fn tiny_spec() -> NetworkSpec {
    NetworkSpec::custom([16, 16, 32], [2, 3, 4, 4])
}

fn phantom(dims: [usize; 3], severity: u8) -> Volume {
    gen_phantom(&PhantomSpec {
        severity,
        subject_seed: 42,
        dims,
        nuisance_gain: 1.0,
        texture_amplitude: 15.0,
    })
    .unwrap()
}

/// Parameter count from the architecture description alone.
fn closed_form_param_count(s: &NetworkSpec) -> usize {
    let k3 = s.kernel.pow(3);
    let c = s.block_channels;
    let cin = |b: usize| if b == 0 { 1 } else { c[b - 1] };
    let mut enc = 0;
    let mut dec = 0;
    for b in 0..4 {
        let m = s.convs_per_block[b];
        enc += cin(b) * c[b] * k3 + c[b] + (m - 1) * (c[b] * c[b] * k3 + c[b]);
        dec += (m - 1) * (c[b] * c[b] * k3 + c[b]) + c[b] * cin(b) * k3 + cin(b);
    }
    let bn = s.bottleneck_channels;
    enc += c[3] * bn + bn;
    dec += bn * c[3] + c[3];
    for bp in &s.bypasses {
        let (f, t) = (c[bp.from_block], c[bp.to_block]);
        if f != t {
            enc += f * t + t;
        }
    }
    enc + dec
}

#[test]
fn full_size_embedding_is_150() {
    let spec = NetworkSpec::full();
    assert_eq!(spec.spatial_at(4), [5, 6, 5]);
    assert_eq!(spec.embedding_dim(), 150);
    assert_eq!(spec.voxel_count(), 150 * 4096);
}

#[test]
fn desk_compression_ratio() {
    let spec = NetworkSpec::desk();
    assert_eq!(spec.embedding_dim(), 8);
    assert_eq!(spec.voxel_count() / spec.embedding_dim(), 4096);
    for level in 0..=4 {
        assert_eq!(spec.spatial_at(level), [32 >> level; 3]);
    }
}

#[test]
fn param_count_matches_closed_form() {
    for spec in [NetworkSpec::desk(), NetworkSpec::full(), tiny_spec()] {
        let m = Model::build(spec.clone(), 1).unwrap();
        assert_eq!(m.params().numel(), closed_form_param_count(&spec), "{spec:?}");
    }
    assert_eq!(Model::build(NetworkSpec::desk(), 1).unwrap().params().numel(), 78_370);
}

#[test]
fn encoder_and_decoder_shapes_mirror() {
    let m = Model::build(NetworkSpec::desk(), 3).unwrap();
    let shape = |n: &str| m.params().get(n).unwrap().shape().to_vec();
    for b in 0..4 {
        let count = m.spec().convs_per_block[b];
        for j in 0..count {
            let enc = shape(&format!("{}.w", conv_name(b, j)));
            let dec = shape(&format!("{}.w", deconv_name(b, count - 1 - j)));
            assert_eq!(enc, dec, "block {b} conv {j}");
        }
    }
    assert_eq!(shape("bottleneck.w"), shape("expand.w"));
}

#[test]
fn seeded_init_is_deterministic() {
    let a = Model::build(NetworkSpec::desk(), 7).unwrap();
    let b = Model::build(NetworkSpec::desk(), 7).unwrap();
    let c = Model::build(NetworkSpec::desk(), 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.params(), c.params());
}

#[test]
fn invalid_specs_rejected() {
    let mut s = NetworkSpec::desk();
    s.input_dims = [32, 24, 32];
    assert!(Model::build(s, 0).is_err());
    let mut s = NetworkSpec::desk();
    s.kernel = 2;
    assert!(Model::build(s, 0).is_err());
    let mut s = NetworkSpec::desk();
    s.bypasses.push(Bypass { from_block: 0, to_block: 2, to_conv: 0 });
    assert!(Model::build(s, 0).is_err());
    let mut s = NetworkSpec::desk();
    s.bypasses[0].to_conv = 3;
    assert!(Model::build(s, 0).is_err());
}

#[test]
fn zero_volume_gives_zero_embedding() {
    let m = Model::build(tiny_spec(), 5).unwrap();
    let v = Volume::filled([16, 16, 32], 0.0).unwrap();
    let z = m.encode(&v).unwrap();
    assert_eq!(z.len(), 2);
    assert!(z.0.iter().all(|&x| x == 0.0));
}

#[test]
fn shapes_round_trip_and_forward_is_deterministic() {
    let m = Model::build(NetworkSpec::desk(), 9).unwrap();
    let v = phantom([32, 32, 32], 2);
    let z = m.encode(&v).unwrap();
    assert_eq!(z.len(), 8);
    assert!(z.0.iter().all(|x| x.is_finite()));
    let rec = m.decode(&z).unwrap();
    assert_eq!(rec.dims(), v.dims());
    let (z2, rec2) = m.forward(&v).unwrap();
    assert_eq!(z2, z);
    assert_eq!(rec2, rec);
    assert_eq!(m.forward(&v).unwrap(), (z2, rec2));
}

#[test]
fn replaying_a_parameter_matches_a_rebuilt_graph() {
    let mut model = Model::build(tiny_spec(), 3).unwrap();
    let v = phantom([16, 16, 32], 2);
    let build = |m: &Model| {
        let mut g = m.new_graph();
        let x = m.input(&mut g, &v).unwrap();
        let z = m.encode_graph(&mut g, x).unwrap();
        let y = m.decode_graph(&mut g, z).unwrap();
        (g, y)
    };
    let (mut g, y) = build(&model);
    for name in ["enc1.conv0.w", "bottleneck.b", "dec2.deconv0.w"] {
        let &(_, leaf) = g.params().iter().find(|(n, _)| n == name).unwrap();
        let mut t = g.value(leaf).clone();
        t.data_mut()[0] += 0.25;
        g.set_leaf(leaf, t.clone()).unwrap();
        model.params_mut().get_mut(name).unwrap().value = t;
        let (fresh, fy) = build(&model);
        assert_eq!(g.value(y), fresh.value(fy), "{name}");
    }
}

#[test]
fn dimension_mismatches() {
    let m = Model::build(NetworkSpec::desk(), 9).unwrap();
    assert!(m.encode(&phantom([32, 32, 16], 0)).is_err());
    assert!(m.decode(&Embedding(vec![0.0; 7])).is_err());
    assert!(m.decode(&Embedding(Vec::new())).is_err());
}

#[test]
fn pinned_phantom_embedding() {
    let m = Model::build(NetworkSpec::desk(), 2024).unwrap();
    let z = m.encode(&phantom([32, 32, 32], 4)).unwrap();
    let pinned: [f64; 8] = PINNED;
    for (a, b) in z.0.iter().zip(pinned) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

// Frozen from the first verified run of this build.
const PINNED: [f64; 8] = [
    1.263007344826713,
    0.4904838760394123,
    0.6379753566567847,
    -0.07604210474645505,
    -1.5410343315937176,
    -1.803832508223247,
    0.36326838260696886,
    -0.6954786473892018,
];

mod checkpoints {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ddck");
        let m = Model::build(NetworkSpec::desk(), 11).unwrap();
        save_checkpoint(&m, &p).unwrap();
        let loaded = load_checkpoint(&p, Some(&NetworkSpec::desk())).unwrap();
        assert_eq!(loaded, m);
        let v = phantom([32, 32, 32], 1);
        assert_eq!(loaded.encode(&v).unwrap(), m.encode(&v).unwrap());
    }

    #[test]
    fn desk_checkpoint_size_follows_parameter_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ddck");
        let m = Model::build(NetworkSpec::desk(), 11).unwrap();
        save_checkpoint(&m, &p).unwrap();
        let len = std::fs::metadata(&p).unwrap().len() as usize;
        let payload = closed_form_param_count(&NetworkSpec::desk()) * 8;
        assert!(len > payload && len < payload + 4096, "{len}");
        assert!(len < 10 * 1024 * 1024);
    }

    #[test]
    fn truncated_and_mismatched_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ddck");
        let m = Model::build(tiny_spec(), 11).unwrap();
        save_checkpoint(&m, &p).unwrap();
        assert!(matches!(
            load_checkpoint(&p, Some(&NetworkSpec::desk())),
            Err(Error::SpecMismatch(_))
        ));
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&p, None), Err(Error::Corrupt { .. })));
        std::fs::write(&p, &bytes[..10]).unwrap();
        assert!(matches!(load_checkpoint(&p, None), Err(Error::Corrupt { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&p, &extra).unwrap();
        assert!(matches!(load_checkpoint(&p, None), Err(Error::Corrupt { .. })));
        std::fs::write(&p, b"XXXX").unwrap();
        assert!(matches!(load_checkpoint(&p, None), Err(Error::BadMagic { .. })));
    }
}
