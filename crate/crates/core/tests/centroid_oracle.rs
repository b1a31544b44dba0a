mod common;

use common::{brute_force_components, compare_components, random_mask, rng};
use keytrack_core::pipeline::{detect_blobs, label_components, BinaryMask, PipelineConfig};

fn mask_from(w: usize, h: usize, dark: &[(usize, usize)]) -> BinaryMask {
    let mut bits = vec![false; w * h];
    for &(x, y) in dark {
        bits[y * w + x] = true;
    }
    BinaryMask::new(w, h, bits).unwrap()
}

#[test]
fn two_hundred_random_masks_match_enumeration() {
    let mut rng = rng(0x63_656e74);
    for i in 0..200 {
        let mask = random_mask(&mut rng);
        let reference = brute_force_components(&mask);
        compare_components(&label_components(&mask), &reference, 1e-9)
            .unwrap_or_else(|e| panic!("mask {i} ({}x{}): {e}", mask.width(), mask.height()));

        let cfg = PipelineConfig::new(0.5, 2.0, 9.0).unwrap();
        let kept: Vec<_> = reference
            .iter()
            .filter(|b| b.area as f64 >= cfg.area_min && b.area as f64 <= cfg.area_max)
            .cloned()
            .collect();
        compare_components(&detect_blobs(&mask, &cfg).blobs, &kept, 1e-9)
            .unwrap_or_else(|e| panic!("mask {i} after area window: {e}"));
    }
}

#[test]
fn square_and_l_shape() {
    let square: Vec<_> = (4..7).flat_map(|y| (4..7).map(move |x| (x, y))).collect();
    let blobs = label_components(&mask_from(12, 12, &square));
    assert_eq!(blobs.len(), 1);
    assert_eq!(blobs[0].area, 9);
    assert_eq!((blobs[0].centroid.x, blobs[0].centroid.y), (5.5, 5.5));

    let l = label_components(&mask_from(4, 4, &[(0, 0), (1, 0), (0, 1)]));
    assert_eq!(l[0].area, 3);
    assert!((l[0].centroid.x - 2.5 / 3.0).abs() < 1e-12);
    assert!((l[0].centroid.y - 2.5 / 3.0).abs() < 1e-12);
}

#[test]
fn diagonal_neighbours_join() {
    let blobs = label_components(&mask_from(5, 5, &[(0, 0), (1, 1), (2, 2), (4, 0)]));
    assert_eq!(blobs.iter().map(|b| b.area).collect::<Vec<_>>(), vec![3, 1]);
}
