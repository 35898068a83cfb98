use ico3d_core::render::{render_oracle, render_tiled, TileRenderer};
use ico3d_core::synth::{random_scene, scene_camera};
use ico3d_core::GaussianSet;

const BG: [f64; 3] = [0.0, 0.0, 0.0];

#[test]
fn tiled_matches_oracle_on_seeded_scenes() {
    let cam = scene_camera(128, 128);
    for seed in 0..50 {
        let set = random_scene(seed, 100 + (seed as usize * 37) % 400, (seed % 4) as usize);
        let a = render_tiled(&set, &cam, BG);
        let b = render_oracle(&set, &cam, BG);
        let d = a.rgb.max_abs_diff(&b.rgb);
        assert!(d <= 1e-3, "seed {seed}: {d}");
    }
}

#[test]
fn input_order_does_not_matter() {
    let cam = scene_camera(64, 64);
    let set = random_scene(9, 200, 1);
    let mut perm: Vec<usize> = (0..set.len()).rev().collect();
    perm.rotate_left(17);
    let mut shuffled = GaussianSet::new(set.sh_degree());
    for &i in &perm {
        shuffled.push(set.splat(i)).unwrap();
    }
    let a = render_tiled(&set, &cam, BG);
    let b = render_tiled(&shuffled, &cam, BG);
    assert_eq!(a.rgb.data, b.rgb.data);
}

#[test]
fn accumulated_alpha_at_most_one() {
    let cam = scene_camera(64, 64);
    for seed in 0..10 {
        let f = render_tiled(&random_scene(seed, 300, 0), &cam, BG);
        assert!(f.alpha.data.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }
}

#[test]
fn worker_counts_agree_bitwise() {
    let cam = scene_camera(96, 80);
    let set = random_scene(4, 400, 2);
    let one = TileRenderer::new(1).render(&set, &cam, BG);
    let four = TileRenderer::new(4).render(&set, &cam, BG);
    assert_eq!(one.rgb.data, four.rgb.data);
}
