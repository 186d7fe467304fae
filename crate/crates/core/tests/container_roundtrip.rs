mod common;

use gobo::container::{decode, encode, measure_compression, stream_decode, ContainerView, StreamDecoder, HEADER_FIXED_LEN};
use gobo::quant::{dequantize, Outlier};
use gobo::{ContainerError, ContainerGeometry, Layout};
use proptest::prelude::*;

const LAYOUTS: [Layout; 2] = [Layout::Sequential, Layout::RandomAccess];

fn layer_strategy(max_dim: usize) -> impl Strategy<Value = gobo::QuantizedLayer> {
    (1..=max_dim, 1..=max_dim, 1u8..=6, 0.0f64..0.05, any::<u64>())
        .prop_map(|(r, c, bits, frac, seed)| common::random_layer(r, c, bits, frac, seed))
}

fn geometry_strategy() -> impl Strategy<Value = ContainerGeometry> {
    (prop::sample::select(vec![4usize, 8, 16, 32, 64]), prop::sample::select(vec![1usize, 8, 64, 4096]))
        .prop_map(|(side, align)| ContainerGeometry::new(side, align).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn decode_inverts_encode(layer in layer_strategy(160), geometry in geometry_strategy()) {
        for layout in LAYOUTS {
            let bytes = encode(&layer, &geometry, layout).unwrap();
            prop_assert_eq!(&decode(&bytes).unwrap(), &layer);
            prop_assert_eq!(&bytes, &encode(&layer, &geometry, layout).unwrap());
        }
    }

    #[test]
    fn index_stream_is_exactly_packed(layer in layer_strategy(100), geometry in geometry_strategy()) {
        let bytes = encode(&layer, &geometry, Layout::Sequential).unwrap();
        let view = ContainerView::parse(&bytes).unwrap();
        let h = view.header();
        let packed = (h.dims.padded_weights() * layer.bits() as usize).div_ceil(8);
        prop_assert_eq!(h.weights_offset % geometry.alignment(), 0);
        prop_assert!(h.weights_offset >= HEADER_FIXED_LEN + 4 * layer.centroids.len());
        prop_assert_eq!(h.outliers_offset - h.weights_offset, packed);
    }

    #[test]
    fn triplets_name_unique_true_positions(layer in layer_strategy(100), geometry in geometry_strategy()) {
        let bytes = encode(&layer, &geometry, Layout::RandomAccess).unwrap();
        let view = ContainerView::parse(&bytes).unwrap();
        let h = view.header();
        let mut seen = Vec::new();
        for sm in 0..h.dims.num_sms() {
            for t in view.triplets(sm).unwrap() {
                let (r, c) = h.dims.position(&geometry, sm, t.block as usize, t.offset as usize);
                prop_assert!(h.dims.in_true_region(r, c));
                seen.push((r, c, t.value.to_bits()));
            }
        }
        seen.sort_unstable();
        let want: Vec<_> = layer.outliers.entries.iter().map(|o| (o.row, o.col, o.value.to_bits())).collect();
        prop_assert_eq!(seen, want);
    }

    #[test]
    fn streaming_matches_dequantize(layer in layer_strategy(80), geometry in geometry_strategy()) {
        let deq = dequantize(&layer);
        for layout in LAYOUTS {
            let bytes = encode(&layer, &geometry, layout).unwrap();
            let mut hits = vec![0u8; layer.rows * layer.cols];
            stream_decode(&bytes, |w| {
                hits[w.row * layer.cols + w.col] += 1;
                assert_eq!(w.value.to_bits(), deq.get(w.row, w.col).to_bits());
            }).unwrap();
            prop_assert!(hits.iter().all(|&h| h == 1));
        }
    }

    // Dimensions divisible by every side, so larger SMs add no padding. Past
    // 16x16 the triplet position takes two bytes; one extra byte per outlier
    // costs more than the three count bytes saved per 1024 weights once
    // outliers exceed about 0.29%, so densities stay below that.
    #[test]
    fn ratio_grows_with_submatrix_size(
        (r, c) in (1usize..=4, 1usize..=4),
        bits in 1u8..=6,
        frac in 0.0f64..0.0025,
        seed in any::<u64>(),
    ) {
        let layer = common::random_layer(64 * r, 64 * c, bits, frac, seed);
        let mut prev = 0.0;
        for side in [4, 8, 16, 32, 64] {
            let ratio = measure_compression(&layer, &ContainerGeometry::new(side, 64).unwrap()).unwrap().ratio_vs_fp32;
            prop_assert!(ratio >= prev, "side {side}: {ratio} < {prev}");
            prev = ratio;
        }
    }
}

#[test]
fn worked_triplet_position() {
    let g = ContainerGeometry::default();
    assert_eq!(g.block_to_local(0, 2), (2, 2));
    assert_eq!(g.block_to_local(3, 2), (2, 15));
    assert_eq!(g.triplet_bytes(), 5);
    let mut layer = common::random_layer(16, 16, 3, 0.0, 1);
    layer.indexes[2 * 16 + 2] = 0;
    layer.outliers.entries.push(Outlier { row: 2, col: 2, value: 0.75 });
    let bytes = encode(&layer, &g, Layout::Sequential).unwrap();
    let view = ContainerView::parse(&bytes).unwrap();
    let t = view.triplets(0).unwrap();
    assert_eq!((t[0].block, t[0].offset, t[0].value), (0, 2, 0.75));
    let tail = &bytes[view.header().outliers_offset..];
    assert_eq!(tail, &[1, 0x20, 0x00, 0x00, 0x40, 0x3f]);
}

#[test]
fn layouts_decode_identically() {
    let layer = common::random_layer(100, 70, 4, 0.03, 9);
    let g = ContainerGeometry::default();
    let a = decode(&encode(&layer, &g, Layout::Sequential).unwrap()).unwrap();
    let b = decode(&encode(&layer, &g, Layout::RandomAccess).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn crowded_submatrix_is_rejected_in_both_layouts() {
    let mut layer = common::random_layer(16, 16, 2, 0.0, 2);
    layer.indexes.iter_mut().for_each(|i| *i = 0);
    layer.outliers.entries = (0..256).map(|p| Outlier { row: p / 16, col: p % 16, value: 1.0 }).collect();
    for layout in LAYOUTS {
        assert_eq!(
            encode(&layer, &ContainerGeometry::default(), layout),
            Err(ContainerError::TooManyOutliersInSM { sm: 0, count: 256 })
        );
    }
    layer.outliers.entries.pop();
    for layout in LAYOUTS {
        let bytes = encode(&layer, &ContainerGeometry::default(), layout).unwrap();
        assert_eq!(decode(&bytes).unwrap(), layer);
    }
}

#[test]
fn damaged_containers_are_rejected() {
    let layer = common::random_layer(40, 33, 3, 0.02, 4);
    for layout in LAYOUTS {
        let bytes = encode(&layer, &ContainerGeometry::default(), layout).unwrap();
        for cut in [0, 3, 20, HEADER_FIXED_LEN + 5, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "{layout} cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(matches!(decode(&bad), Err(ContainerError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(ContainerError::UnsupportedVersion(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode(&long).is_err());
        assert!(StreamDecoder::new(&bytes[..bytes.len() - 1]).is_err());
    }
}
