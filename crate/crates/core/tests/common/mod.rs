#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use signbt::{JointLayout, PoseClip, SignLang};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(rng: &mut impl Rng, joints: usize, dims: usize) -> Vec<f64> {
    (0..joints * dims).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_clip(rng: &mut impl Rng, id: &str, frames: usize, layout: JointLayout, dims: usize) -> PoseClip {
    PoseClip {
        id: id.to_string(),
        sign_lang: SignLang::Asl,
        fps: 25.0,
        dims,
        layout,
        frames: (0..frames).map(|_| random_frame(rng, layout.joints(), dims)).collect(),
    }
}

/// Random proper rotation: an angle in 2-D, a unit quaternion in 3-D.
pub fn random_rotation(rng: &mut impl Rng, dims: usize) -> Vec<Vec<f64>> {
    if dims == 2 {
        let a: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        return vec![vec![a.cos(), -a.sin()], vec![a.sin(), a.cos()]];
    }
    let mut q = [0.0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            for v in q.iter_mut() {
                *v /= n;
            }
            break;
        }
    }
    let [w, x, y, z] = q;
    vec![
        vec![1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        vec![2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        vec![2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// `R·p + t` applied to every joint of a flat frame.
pub fn move_frame(frame: &[f64], rotation: &[Vec<f64>], translation: &[f64]) -> Vec<f64> {
    let dims = translation.len();
    frame
        .chunks(dims)
        .flat_map(|p| (0..dims).map(move |r| (0..dims).map(|c| rotation[r][c] * p[c]).sum::<f64>() + translation[r]))
        .collect()
}

pub fn random_translation(rng: &mut impl Rng, dims: usize) -> Vec<f64> {
    (0..dims).map(|_| rng.random_range(-5.0..5.0)).collect()
}

/// Minimum over every monotone path from (0,0) to (n-1,m-1), each path's
/// cost summed from its start.
pub fn brute_force_dtw(n: usize, m: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    fn go(i: usize, j: usize, acc: f64, n: usize, m: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
        let acc = acc + cost(i, j);
        if i == n - 1 && j == m - 1 {
            return acc;
        }
        let mut best = f64::INFINITY;
        if i + 1 < n && j + 1 < m {
            best = best.min(go(i + 1, j + 1, acc, n, m, cost));
        }
        if i + 1 < n {
            best = best.min(go(i + 1, j, acc, n, m, cost));
        }
        if j + 1 < m {
            best = best.min(go(i, j + 1, acc, n, m, cost));
        }
        best
    }
    go(0, 0, 0.0, n, m, cost)
}

/// A window-1 codebook with random codewords; clips built from it quantize exactly.
pub fn exact_codebook(rng: &mut impl Rng, k: usize, layout: JointLayout, dims: usize) -> signbt::quantize::Codebook {
    let words = |rng: &mut dyn rand::RngCore, joints: usize| -> Vec<Vec<f64>> {
        (0..k).map(|_| (0..joints * dims).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    };
    signbt::quantize::Codebook {
        codebook_id: "exact".into(),
        window: 1,
        k,
        dims,
        layout,
        fps: 25.0,
        streams: signbt::quantize::Streams {
            body: words(rng, layout.body),
            left_hand: words(rng, layout.left_hand),
            right_hand: words(rng, layout.right_hand),
        },
    }
}

pub fn clip_from_tokens(cb: &signbt::quantize::Codebook, id: &str, lang: SignLang, tokens: &[[u32; 3]]) -> PoseClip {
    let frames = tokens
        .iter()
        .map(|t| {
            let mut f = cb.streams.body[t[0] as usize].clone();
            f.extend_from_slice(&cb.streams.left_hand[t[1] as usize]);
            f.extend_from_slice(&cb.streams.right_hand[t[2] as usize]);
            f
        })
        .collect();
    PoseClip { id: id.to_string(), sign_lang: lang, fps: cb.fps, dims: cb.dims, layout: cb.layout, frames }
}
