mod common;

use common::*;
use mgmask::motionfield::{estimate_mv, upsample_nearest, MotionVector};
use mgmask::{Clip, Rng};

#[test]
fn shift_right_by_three_is_recovered() {
    let mut rng = Rng::new(2024);
    let (h, w, r) = (64usize, 64usize, 7i64);
    loop {
        let clip = shifted_pair(h, w, 3, 0, &mut rng);
        let mf = estimate_mv(&clip, r as usize).unwrap();
        // Interior blocks: the whole search window lies inside the frame.
        let interior: Vec<(usize, usize)> = (0..h / 8)
            .flat_map(|br| (0..w / 8).map(move |bc| (br, bc)))
            .filter(|&(br, bc)| {
                let (y, x) = (br as i64 * 8, bc as i64 * 8);
                y - r >= 0 && x - r >= 0 && y + 8 + r <= h as i64 && x + 8 + r <= w as i64
            })
            .collect();
        let unique = interior
            .iter()
            .all(|&(br, bc)| brute_force_block(&clip, 1, br, bc, r).1);
        if !unique {
            continue; // degenerate texture; draw another
        }
        for (br, bc) in interior {
            assert_eq!(mf.get(1, br, bc), MotionVector::new(3, 0), "block ({br},{bc})");
        }
        break;
    }
}

#[test]
fn matches_brute_force_on_random_clips() {
    let mut rng = Rng::new(77);
    for trial in 0..30 {
        let frames = 2 + trial % 3;
        // Low-contrast texture produces plenty of SAD ties.
        let data = (0..frames * 32 * 24)
            .map(|_| (rng.next_u64() % 4) as u8)
            .collect();
        let clip = Clip::new(frames, 32, 24, 1, data).unwrap();
        for radius in [0usize, 1, 3] {
            assert_eq!(
                estimate_mv(&clip, radius).unwrap(),
                brute_force_field(&clip, radius as i64),
                "trial {trial} radius {radius}"
            );
        }
    }
}

#[test]
fn flat_clip_ties_resolve_to_zero() {
    let clip = Clip::filled(3, 32, 32, 1, 90).unwrap();
    let mf = estimate_mv(&clip, 4).unwrap();
    assert!(mf.vectors().iter().all(|&v| v == MotionVector::ZERO));
}

#[test]
fn intensity_offset_leaves_vectors_unchanged() {
    let mut rng = Rng::new(5);
    for _ in 0..5 {
        let data: Vec<u8> = (0..3 * 32 * 32)
            .map(|_| 20 + (rng.next_u64() % 180) as u8)
            .collect();
        let clip = Clip::new(3, 32, 32, 1, data.clone()).unwrap();
        let brighter = Clip::new(3, 32, 32, 1, data.iter().map(|v| v + 40).collect()).unwrap();
        assert_eq!(estimate_mv(&clip, 4).unwrap(), estimate_mv(&brighter, 4).unwrap());
    }
}

#[test]
fn estimated_vectors_respect_radius_and_upsample() {
    let mut rng = Rng::new(8);
    let clip = Clip::new(4, 32, 32, 1, random_texture(4, 32, 32, &mut rng)).unwrap();
    let mf = estimate_mv(&clip, 2).unwrap();
    assert!(mf.vectors().iter().all(|v| v.dx.abs() <= 2 && v.dy.abs() <= 2));
    let up = upsample_nearest(&mf, 32, 32).unwrap();
    for t in 0..4 {
        for r in 0..32 {
            for c in 0..32 {
                assert_eq!(up.get(t, r, c), mf.get(t, r / 8, c / 8));
            }
        }
    }
}
