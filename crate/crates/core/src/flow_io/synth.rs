//! Ground-truthed synthetic scenes: one textured object translating rigidly
//! over a textured background that translates with a different velocity.
//!
//! Flow is piecewise constant, so motion chains are known analytically.
//! Texture noise perturbs intensities only, never flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FlowField, FlowPlane};
use crate::error::{Error, Result};
use crate::video::{GroundTruthMasks, VideoDims, VideoVolume};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectShape {
    /// Axis-aligned rectangle, sizes in pixels.
    Rect { height: f64, width: f64 },
    Disk { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSceneSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub shape: ObjectShape,
    /// Object centre `(row, col)` at frame 0.
    pub position: (f64, f64),
    /// `(u, v)` in pixels per frame; `u` moves along columns.
    pub object_velocity: (f64, f64),
    pub background_velocity: (f64, f64),
    pub noise: f64,
    pub seed: u64,
}

impl SynthSceneSpec {
    pub fn dims(&self) -> VideoDims {
        VideoDims::new(self.frames, self.height, self.width)
    }

    /// Object centre at frame `t`.
    pub fn centre(&self, t: usize) -> (f64, f64) {
        let t = t as f64;
        (
            self.position.0 + t * self.object_velocity.1,
            self.position.1 + t * self.object_velocity.0,
        )
    }

    pub fn contains(&self, t: usize, r: usize, c: usize) -> bool {
        let (cy, cx) = self.centre(t);
        let (r, c) = (r as f64, c as f64);
        match self.shape {
            ObjectShape::Rect { height, width } => {
                r >= cy - height / 2.0
                    && r < cy + height / 2.0
                    && c >= cx - width / 2.0
                    && c < cx + width / 2.0
            }
            ObjectShape::Disk { radius } => (r - cy).powi(2) + (c - cx).powi(2) <= radius * radius,
        }
    }

    fn check(&self) -> Result<()> {
        self.dims().validate()?;
        let finite = [
            self.position.0,
            self.position.1,
            self.object_velocity.0,
            self.object_velocity.1,
            self.background_velocity.0,
            self.background_velocity.1,
            self.noise,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScene("non-finite scene parameter".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidScene(format!(
                "noise amplitude {} outside [0, 1]",
                self.noise
            )));
        }
        let (half_h, half_w) = match self.shape {
            ObjectShape::Rect { height, width } if height > 0.0 && width > 0.0 => {
                (height / 2.0, width / 2.0)
            }
            ObjectShape::Disk { radius } if radius > 0.0 => (radius, radius),
            _ => return Err(Error::InvalidScene("object size must be positive".into())),
        };
        let (h, w) = (self.height as f64, self.width as f64);
        for t in 0..self.frames {
            let (cy, cx) = self.centre(t);
            if cy - half_h < 0.0 || cy + half_h > h || cx - half_w < 0.0 || cx + half_w > w {
                return Err(Error::ObjectLeavesFrame { frame: t });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub video: VideoVolume,
    pub flow: FlowField,
    pub masks: GroundTruthMasks,
}

pub fn synth_scene(spec: &SynthSceneSpec) -> Result<SynthScene> {
    spec.check()?;
    let dims = spec.dims();
    let (h, w) = (dims.height, dims.width);

    let mut labels = vec![0u8; dims.nodes()];
    for t in 0..dims.frames {
        for r in 0..h {
            for c in 0..w {
                labels[dims.node(t, r, c)] = u8::from(spec.contains(t, r, c));
            }
        }
    }

    let (ou, ov) = (spec.object_velocity.0 as f32, spec.object_velocity.1 as f32);
    let (bu, bv) = (
        spec.background_velocity.0 as f32,
        spec.background_velocity.1 as f32,
    );
    let mut forward = Vec::with_capacity(dims.frames - 1);
    let mut backward = Vec::with_capacity(dims.frames - 1);
    for t in 0..dims.frames - 1 {
        let mut fwd = FlowPlane::zeros(h, w);
        let mut bwd = FlowPlane::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                let src = labels[dims.node(t, r, c)] == 1;
                fwd.set(r, c, if src { (ou, ov) } else { (bu, bv) });
                let dst = labels[dims.node(t + 1, r, c)] == 1;
                bwd.set(r, c, if dst { (-ou, -ov) } else { (-bu, -bv) });
            }
        }
        forward.push(fwd);
        backward.push(bwd);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pixels = Vec::with_capacity(dims.nodes() * 3);
    for t in 0..dims.frames {
        let tf = t as f64;
        for r in 0..h {
            for c in 0..w {
                let object = labels[dims.node(t, r, c)] == 1;
                // texture lives in layer coordinates so it moves with its layer
                let rgb = if object {
                    let (cy, cx) = spec.centre(t);
                    let tex = texture(r as f64 - cy, c as f64 - cx, spec.seed ^ 0x0b1e_c7);
                    [0.65 + 0.3 * tex, 0.25 + 0.2 * tex, 0.2 + 0.15 * tex]
                } else {
                    let y = r as f64 - tf * spec.background_velocity.1;
                    let x = c as f64 - tf * spec.background_velocity.0;
                    let tex = texture(y, x, spec.seed ^ 0xbac6_0d);
                    [0.2 + 0.2 * tex, 0.35 + 0.3 * tex, 0.3 + 0.25 * tex]
                };
                for v in rgb {
                    let noise = if spec.noise > 0.0 {
                        rng.gen_range(-spec.noise..=spec.noise)
                    } else {
                        0.0
                    };
                    pixels.push((v + noise).clamp(0.0, 1.0) as f32);
                }
            }
        }
    }

    Ok(SynthScene {
        video: VideoVolume::new(dims, pixels)?,
        flow: FlowField::new(dims, forward, backward)?,
        masks: GroundTruthMasks::new(dims, labels)?,
    })
}

/// Blocky value texture in `[0, 1]` over continuous layer coordinates.
fn texture(y: f64, x: f64, salt: u64) -> f64 {
    let by = (y / 3.0).floor() as i64;
    let bx = (x / 3.0).floor() as i64;
    let mut z = salt
        .wrapping_add((by as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((bx as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Parameters for a seeded corpus of random synthetic scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub videos: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Object extent as a fraction of `min(h, w)`.
    pub object_size: (f64, f64),
    /// Largest object speed per axis, in whole pixels per frame.
    pub max_object_speed: i64,
    /// Background speed per axis as a fraction of the frame size per frame.
    pub background_speed: (f64, f64),
    pub noise: f64,
    pub seed: u64,
}

impl CorpusSpec {
    /// Five 16x16 frames per video.
    pub fn oracle_scale(videos: usize, seed: u64) -> Self {
        Self {
            videos,
            frames: 5,
            height: 16,
            width: 16,
            ..Self::desk_scale(videos, seed)
        }
    }

    /// Ten 64x48 (w x h) frames per video.
    pub fn desk_scale(videos: usize, seed: u64) -> Self {
        Self {
            videos,
            frames: 10,
            height: 48,
            width: 64,
            object_size: (0.3, 0.45),
            max_object_speed: 1,
            background_speed: (0.3, 0.45),
            noise: 0.05,
            seed,
        }
    }
}

/// Draws `spec.videos` valid scene specs, deterministic in `spec.seed`.
pub fn synth_corpus(spec: &CorpusSpec) -> Result<Vec<SynthSceneSpec>> {
    let dims = VideoDims::new(spec.frames, spec.height, spec.width);
    dims.validate()?;
    let (lo, hi) = spec.object_size;
    if !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(Error::InvalidScene(format!(
            "object size range ({lo}, {hi}) must lie in (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut scenes = Vec::with_capacity(spec.videos);
    let min_side = spec.height.min(spec.width) as f64;
    for _ in 0..spec.videos {
        let mut attempts = 0;
        let scene = loop {
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::InvalidScene(
                    "could not place an object that stays in frame".into(),
                ));
            }
            let extent = rng.gen_range(lo..=hi) * min_side;
            let shape = if rng.gen_bool(0.5) {
                let aspect: f64 = rng.gen_range(0.75..=1.33);
                ObjectShape::Rect {
                    height: (extent / aspect.sqrt()).round().max(2.0),
                    width: (extent * aspect.sqrt()).round().max(2.0),
                }
            } else {
                ObjectShape::Disk {
                    radius: (extent / 2.0).max(1.0),
                }
            };
            let s = spec.max_object_speed;
            let ov = (rng.gen_range(-s..=s) as f64, rng.gen_range(-s..=s) as f64);
            let bg_speed = |rng: &mut ChaCha8Rng, side: usize| {
                let mag = (rng.gen_range(spec.background_speed.0..=spec.background_speed.1)
                    * side as f64)
                    .round();
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            };
            let bv = (bg_speed(&mut rng, spec.width), bg_speed(&mut rng, spec.height));
            if bv == ov {
                continue;
            }
            let (half_h, half_w) = match shape {
                ObjectShape::Rect { height, width } => (height / 2.0, width / 2.0),
                ObjectShape::Disk { radius } => (radius, radius),
            };
            let span = (spec.frames - 1) as f64;
            // admissible centre range keeping the object in frame at t = 0 and t = m - 1
            let row_lo = half_h.max(half_h - span * ov.1);
            let row_hi = (spec.height as f64 - half_h).min(spec.height as f64 - half_h - span * ov.1);
            let col_lo = half_w.max(half_w - span * ov.0);
            let col_hi = (spec.width as f64 - half_w).min(spec.width as f64 - half_w - span * ov.0);
            if row_lo > row_hi || col_lo > col_hi {
                continue;
            }
            let candidate = SynthSceneSpec {
                frames: spec.frames,
                height: spec.height,
                width: spec.width,
                shape,
                position: (
                    rng.gen_range(row_lo..=row_hi).floor().max(row_lo.ceil()),
                    rng.gen_range(col_lo..=col_hi).floor().max(col_lo.ceil()),
                ),
                object_velocity: ov,
                background_velocity: bv,
                noise: spec.noise,
                seed: rng.gen(),
            };
            if candidate.check().is_ok() {
                break candidate;
            }
        };
        scenes.push(scene);
    }
    Ok(scenes)
}
