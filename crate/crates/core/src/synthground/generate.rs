use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::scene::{BBox, Color, Expression, Relation, SceneObject, Shape, IMAGE_SIZE, RELATION_MARGIN};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MIN_OBJECT: usize = 8;
pub const MAX_OBJECT: usize = 16;
/// Clear pixels kept between any two objects.
const GAP: f64 = 2.0;
const PLACEMENT_TRIES: usize = 200;
const SCENE_TRIES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct GroundingSample {
    pub id: usize,
    /// `[3, 64, 64]` in `[0, 1]`.
    pub image: Tensor<f32>,
    pub expression: Expression,
    pub target: BBox,
    pub objects: Vec<SceneObject>,
    pub relation_critical: bool,
}

impl GroundingSample {
    /// Objects of the expression's referent type, if it has one.
    pub fn referents(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects
            .iter()
            .filter(move |o| Some(o.kind()) == self.expression.referent)
    }
}

/// Whether sample `index` belongs to the relation-critical split; spreads
/// `floor(n·fraction)` critical samples evenly over any prefix of length `n`.
pub fn is_critical_index(index: usize, fraction: f64) -> bool {
    ((index + 1) as f64 * fraction).floor() > (index as f64 * fraction).floor()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index as u64)))
}

pub fn gen_dataset(n: usize, seed: u64, critical_fraction: f64) -> Result<Vec<GroundingSample>> {
    if n == 0 {
        return Err(Error::Contract("dataset size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&critical_fraction) {
        return Err(Error::Contract(format!("critical fraction {critical_fraction} outside [0, 1]")));
    }
    (0..n)
        .into_par_iter()
        .map(|i| gen_sample(seed, i, is_critical_index(i, critical_fraction)))
        .collect()
}

pub fn gen_sample(seed: u64, id: usize, critical: bool) -> Result<GroundingSample> {
    let mut rng = sample_rng(seed, id);
    for _ in 0..SCENE_TRIES {
        if let Some((objects, expression, target)) = try_scene(&mut rng, critical) {
            let image = render(&objects);
            return Ok(GroundingSample {
                id,
                image,
                expression,
                target: objects[target].bbox,
                objects,
                relation_critical: critical,
            });
        }
    }
    Err(Error::Contract(format!("could not place scene {id} after {SCENE_TRIES} attempts")))
}

fn try_scene(rng: &mut ChaCha8Rng, critical: bool) -> Option<(Vec<SceneObject>, Expression, usize)> {
    let mut kinds: Vec<(Color, Shape)> = Color::ALL
        .iter()
        .flat_map(|&c| Shape::ALL.iter().map(move |&s| (c, s)))
        .collect();
    kinds.shuffle(rng);
    let (target_kind, referent_kind) = (kinds[0], kinds[1]);
    let relation = if critical || rng.random_bool(0.5) {
        *Relation::SPATIAL.choose(rng)?
    } else {
        Relation::None
    };
    let extras = match (critical, relation) {
        (true, _) => rng.random_range(0..=2),
        (false, Relation::None) => rng.random_range(1..=4),
        (false, _) => rng.random_range(0..=3),
    };

    let mut objects: Vec<SceneObject> = Vec::new();
    let size = rng.random_range(MIN_OBJECT..=MAX_OBJECT) as f64;
    let target = if relation == Relation::None {
        place(rng, size, &objects, |_| true)?
    } else {
        let rsize = rng.random_range(MIN_OBJECT..=MAX_OBJECT) as f64;
        let r = place(rng, rsize, &objects, |_| true)?;
        objects.push(SceneObject { shape: referent_kind.1, color: referent_kind.0, bbox: r });
        let t = place(rng, size, &objects, |b| relation.lead(b, &r).unwrap() >= RELATION_MARGIN)?;
        if critical {
            // the twin has the same size so the two are pixel-identical
            let opposite = relation.opposite();
            objects.push(SceneObject { shape: target_kind.1, color: target_kind.0, bbox: t });
            let d = place(rng, size, &objects, |b| opposite.lead(b, &r).unwrap() >= RELATION_MARGIN)?;
            objects.pop();
            objects.push(SceneObject { shape: target_kind.1, color: target_kind.0, bbox: d });
        }
        t
    };
    let target_index = objects.len();
    objects.push(SceneObject { shape: target_kind.1, color: target_kind.0, bbox: target });
    for &(color, shape) in &kinds[2..2 + extras] {
        let s = rng.random_range(MIN_OBJECT..=MAX_OBJECT) as f64;
        let b = place(rng, s, &objects, |_| true)?;
        objects.push(SceneObject { shape, color, bbox: b });
    }

    let referent = (relation != Relation::None).then_some(referent_kind);
    let expression = Expression::new(target_kind, relation, referent).ok()?;
    (expression.matches(&objects) == [target_index] && !expression.is_ambiguous(&objects))
        .then_some((objects, expression, target_index))
}

fn place(
    rng: &mut ChaCha8Rng,
    size: f64,
    placed: &[SceneObject],
    accept: impl Fn(&BBox) -> bool,
) -> Option<BBox> {
    let hi = IMAGE_SIZE - size as usize;
    (0..PLACEMENT_TRIES).find_map(|_| {
        let b = BBox::square(rng.random_range(0..=hi) as f64, rng.random_range(0..=hi) as f64, size);
        (accept(&b) && placed.iter().all(|o| !o.bbox.crowds(&b, GAP))).then_some(b)
    })
}

/// Whether the pixel centred at `(px, py)` is covered by the object.
fn covers(o: &SceneObject, px: f64, py: f64) -> bool {
    let b = &o.bbox;
    if px < b.x_min || px >= b.x_max || py < b.y_min || py >= b.y_max {
        return false;
    }
    let (cx, cy) = b.center();
    let s = b.width();
    match o.shape {
        Shape::Square => true,
        Shape::Circle => (px - cx).powi(2) + (py - cy).powi(2) <= (s / 2.0).powi(2),
        // apex at the top edge, base along the bottom edge
        Shape::Triangle => (px - cx).abs() <= (py - b.y_min) / 2.0,
    }
}

/// Solid-colour rasterisation on black, no anti-aliasing.
pub fn render(objects: &[SceneObject]) -> Tensor<f32> {
    let n = IMAGE_SIZE;
    let mut data = vec![0.0f32; 3 * n * n];
    for o in objects {
        let rgb = o.color.rgb();
        let b = o.bbox.clipped(n as f64, n as f64);
        for y in b.y_min as usize..b.y_max.ceil() as usize {
            for x in b.x_min as usize..b.x_max.ceil() as usize {
                if covers(o, x as f64 + 0.5, y as f64 + 0.5) {
                    for (c, v) in rgb.iter().enumerate() {
                        data[(c * n + y) * n + x] = *v;
                    }
                }
            }
        }
    }
    Tensor::new(&[3, n, n], data).expect("image shape is fixed")
}

/// Left-right mirror of image, boxes and relation words.
pub fn hflip_augment(s: &GroundingSample) -> GroundingSample {
    let w = IMAGE_SIZE as f64;
    GroundingSample {
        id: s.id,
        image: s.image.flip_horizontal().expect("sample images are [C,H,W]"),
        expression: s.expression.mirrored(),
        target: s.target.mirrored_x(w),
        objects: s
            .objects
            .iter()
            .map(|o| SceneObject { bbox: o.bbox.mirrored_x(w), ..*o })
            .collect(),
        relation_critical: s.relation_critical,
    }
}
